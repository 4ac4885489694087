//! Wigner functions `n(r, p) = int d^d k / (2 pi)^d exp(i k.r) rho(p, k)` on
//! phase-space grids, with marginals and negativity.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::packets::{density, make_packet, MomentumState, PacketSpec, Vec2};
use crate::quad::pairwise_sum;

/// Zero-padding factor of the k summation.
pub const PADDING: usize = 2;
/// Tolerated normalization defect before `GridTooCoarse`.
pub const NORM_TOL: f64 = 1e-3;
/// Boundary-to-peak ratio above which `AliasingDetected` is raised.
pub const ALIAS_TOL: f64 = 1e-6;
/// Negativity above which a cat counts as visibly non-classical.
pub const NEGATIVITY_THRESHOLD: f64 = 0.01;

/// Rectangular phase-space grid; every position axis shares `r_range` and
/// `n_r`, every momentum axis shares `p_range` and `n_p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSpaceGrid {
    pub dim: usize,
    pub r_range: (f64, f64),
    pub n_r: usize,
    pub p_range: (f64, f64),
    pub n_p: usize,
}

fn cell_centres(range: (f64, f64), n: usize) -> Vec<f64> {
    let centre = 0.5 * (range.0 + range.1);
    let width = (range.1 - range.0) / n as f64;
    // Offsets are exact negatives of each other about the centre.
    (0..n).map(|j| centre + 0.5 * ((2 * j + 1) as f64 - n as f64) * width).collect()
}

impl PhaseSpaceGrid {
    pub fn new(dim: usize, r_range: (f64, f64), n_r: usize, p_range: (f64, f64), n_p: usize) -> Result<Self> {
        let g = Self { dim, r_range, n_r, p_range, n_p };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.dim) {
            return Err(Error::InvalidParameter(format!("grid dim must be 1 or 2, got {}", self.dim)));
        }
        for (name, n) in [("n_r", self.n_r), ("n_p", self.n_p)] {
            if n < 16 || !n.is_power_of_two() {
                return Err(Error::InvalidParameter(format!("{name} must be a power of two >= 16, got {n}")));
            }
        }
        for (name, (lo, hi)) in [("r_range", self.r_range), ("p_range", self.p_range)] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidParameter(format!("{name} must be finite with min < max")));
            }
        }
        Ok(())
    }

    pub fn dr(&self) -> f64 {
        (self.r_range.1 - self.r_range.0) / self.n_r as f64
    }

    pub fn dp(&self) -> f64 {
        (self.p_range.1 - self.p_range.0) / self.n_p as f64
    }

    pub fn r_axis(&self) -> Vec<f64> {
        cell_centres(self.r_range, self.n_r)
    }

    pub fn p_axis(&self) -> Vec<f64> {
        cell_centres(self.p_range, self.n_p)
    }

    /// Number of position cells (`n_r^dim`).
    pub fn r_cells(&self) -> usize {
        self.n_r.pow(self.dim as u32)
    }

    pub fn p_cells(&self) -> usize {
        self.n_p.pow(self.dim as u32)
    }

    pub fn cell_volume(&self) -> f64 {
        (self.dr() * self.dp()).powi(self.dim as i32)
    }

    fn unflatten(index: usize, n: usize, dim: usize) -> [usize; 2] {
        if dim == 1 {
            [index, 0]
        } else {
            [index / n, index % n]
        }
    }

    /// Position of flattened r-cell `index`.
    pub fn r_at(&self, index: usize) -> Vec2 {
        let axis = self.r_axis();
        let [a, b] = Self::unflatten(index, self.n_r, self.dim);
        if self.dim == 1 {
            [axis[a], 0.0]
        } else {
            [axis[a], axis[b]]
        }
    }

    pub fn p_at(&self, index: usize) -> Vec2 {
        let axis = self.p_axis();
        let [a, b] = Self::unflatten(index, self.n_p, self.dim);
        if self.dim == 1 {
            [axis[a], 0.0]
        } else {
            [axis[a], axis[b]]
        }
    }

    fn on_boundary(index: usize, n: usize, dim: usize) -> bool {
        let idx = Self::unflatten(index, n, dim);
        idx[..dim].iter().any(|&i| i == 0 || i == n - 1)
    }
}

/// Sampled Wigner function. `values[p_index * r_cells + r_index]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WignerGrid {
    pub grid: PhaseSpaceGrid,
    pub values: Vec<f64>,
    pub source: String,
    /// Largest discarded imaginary part.
    pub imag_residual: f64,
}

impl WignerGrid {
    pub fn value(&self, r_index: usize, p_index: usize) -> f64 {
        self.values[p_index * self.grid.r_cells() + r_index]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `sum n * cell volume`.
    pub fn total(&self) -> f64 {
        pairwise_sum(&self.values) * self.grid.cell_volume()
    }

    /// Grid translated by `shift` r-cells along each axis, with cells
    /// shifted in from outside set to zero.
    pub fn translated(&self, shift: [isize; 2]) -> WignerGrid {
        let g = &self.grid;
        let n = g.n_r as isize;
        let mut out = vec![0.0; self.values.len()];
        for p in 0..g.p_cells() {
            for r in 0..g.r_cells() {
                let idx = PhaseSpaceGrid::unflatten(r, g.n_r, g.dim);
                let src: Vec<isize> = (0..g.dim).map(|a| idx[a] as isize - shift[a]).collect();
                if src.iter().all(|&i| (0..n).contains(&i)) {
                    let flat = src.iter().fold(0usize, |acc, &i| acc * g.n_r + i as usize);
                    out[p * g.r_cells() + r] = self.values[p * g.r_cells() + flat];
                }
            }
        }
        WignerGrid { values: out, ..self.clone() }
    }

    /// CSV export: two `#` header lines then one row per cell.
    pub fn to_csv(&self) -> String {
        let g = &self.grid;
        let mut out = String::with_capacity(self.values.len() * 48);
        out.push_str("# dim,Nr,Np,rmin,rmax,pmin,pmax\n");
        let _ = writeln!(
            out,
            "# {},{},{},{:e},{:e},{:e},{:e}",
            g.dim, g.n_r, g.n_p, g.r_range.0, g.r_range.1, g.p_range.0, g.p_range.1
        );
        for p in 0..g.p_cells() {
            let pv = g.p_at(p);
            for r in 0..g.r_cells() {
                let rv = g.r_at(r);
                let n = self.values[p * g.r_cells() + r];
                if g.dim == 1 {
                    let _ = writeln!(out, "{:e},{:e},{:e}", rv[0], pv[0], n);
                } else {
                    let _ = writeln!(out, "{:e},{:e},{:e},{:e},{:e}", rv[0], rv[1], pv[0], pv[1], n);
                }
            }
        }
        out
    }

    /// Parse the output of [`WignerGrid::to_csv`].
    pub fn from_csv(text: &str) -> Result<WignerGrid> {
        let bad = |m: &str| Error::InvalidParameter(format!("wigner csv: {m}"));
        let mut lines = text.lines();
        if lines.next() != Some("# dim,Nr,Np,rmin,rmax,pmin,pmax") {
            return Err(bad("missing column header"));
        }
        let meta = lines.next().and_then(|l| l.strip_prefix("# ")).ok_or_else(|| bad("missing metadata"))?;
        let fields: Vec<&str> = meta.split(',').collect();
        if fields.len() != 7 {
            return Err(bad("metadata needs 7 fields"));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad("bad integer"));
        let real = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
        let grid = PhaseSpaceGrid::new(
            int(fields[0])?,
            (real(fields[3])?, real(fields[4])?),
            int(fields[1])?,
            (real(fields[5])?, real(fields[6])?),
            int(fields[2])?,
        )?;
        let columns = 2 * grid.dim + 1;
        let mut values = Vec::with_capacity(grid.r_cells() * grid.p_cells());
        for line in lines.filter(|l| !l.is_empty()) {
            let row: Vec<&str> = line.split(',').collect();
            if row.len() != columns {
                return Err(bad("wrong column count"));
            }
            values.push(real(row[columns - 1])?);
        }
        if values.len() != grid.r_cells() * grid.p_cells() {
            return Err(bad("row count does not match grid"));
        }
        Ok(WignerGrid { grid, values, source: String::from("csv"), imag_residual: 0.0 })
    }
}

struct SliceTransform {
    grid: PhaseSpaceGrid,
    padded: usize,
    k: Vec<f64>,
    /// `exp(i k_m r_0)`.
    start_phase: Vec<Complex64>,
    fft: Arc<dyn Fft<f64>>,
}

impl SliceTransform {
    fn new(grid: PhaseSpaceGrid) -> Self {
        let padded = PADDING * grid.n_r;
        let dr = grid.dr();
        let dk = 2.0 * PI / (padded as f64 * dr);
        let r0 = grid.r_axis()[0];
        let k: Vec<f64> = (0..padded).map(|m| (m as f64 - (padded / 2) as f64) * dk).collect();
        let start_phase = k.iter().map(|&km| Complex64::from_polar(1.0, km * r0)).collect();
        let fft = FftPlanner::new().plan_fft_inverse(padded);
        Self { grid, padded, k, start_phase, fft }
    }

    fn dk(&self) -> f64 {
        self.k[1] - self.k[0]
    }

    /// Complex Wigner values at every r-cell for momentum `p`.
    fn slice(&self, state: &impl MomentumState, p: Vec2) -> Vec<Complex64> {
        let (m, n) = (self.padded, self.grid.n_r);
        let norm = self.dk() / (2.0 * PI);
        if self.grid.dim == 1 {
            let mut buf: Vec<Complex64> =
                (0..m).map(|i| self.start_phase[i] * density(state, p, [self.k[i], 0.0])).collect();
            self.fft.process(&mut buf);
            // k_m = (m - M/2) dk contributes exp(-i pi j) to every output.
            (0..n).map(|j| buf[j] * if j % 2 == 0 { norm } else { -norm }).collect()
        } else {
            let mut buf = vec![Complex64::new(0.0, 0.0); m * m];
            for a in 0..m {
                for b in 0..m {
                    let rho = density(state, p, [self.k[a], self.k[b]]);
                    buf[a * m + b] = self.start_phase[a] * self.start_phase[b] * rho;
                }
            }
            self.fft.process(&mut buf);
            let mut t = vec![Complex64::new(0.0, 0.0); m * m];
            for a in 0..m {
                for b in 0..m {
                    t[b * m + a] = buf[a * m + b];
                }
            }
            self.fft.process(&mut t);
            // t is indexed [b_out][a_out].
            let mut out = Vec::with_capacity(n * n);
            for ja in 0..n {
                for jb in 0..n {
                    let sign = if (ja + jb) % 2 == 0 { 1.0 } else { -1.0 };
                    out.push(t[jb * m + ja] * (sign * norm * norm));
                }
            }
            out
        }
    }
}

/// Wigner function of `state` on `grid` by FFT over k at each momentum.
pub fn wigner_transform(state: &impl MomentumState, grid: &PhaseSpaceGrid) -> Result<WignerGrid> {
    grid.validate()?;
    if grid.dim != state.dim() {
        return Err(Error::InvalidParameter(format!("grid dim {} does not match state dim {}", grid.dim, state.dim())));
    }
    let transform = SliceTransform::new(*grid);
    let slices: Vec<Vec<Complex64>> =
        (0..grid.p_cells()).into_par_iter().map(|ip| transform.slice(state, grid.p_at(ip))).collect();
    let mut values = Vec::with_capacity(grid.p_cells() * grid.r_cells());
    let mut imag_residual: f64 = 0.0;
    for slice in &slices {
        for z in slice {
            values.push(z.re);
            imag_residual = imag_residual.max(z.im.abs());
        }
    }
    let w = WignerGrid { grid: *grid, values, source: state.label(), imag_residual };
    check_grid(&w)?;
    Ok(w)
}

fn check_grid(w: &WignerGrid) -> Result<()> {
    let g = &w.grid;
    let peak = w.max_abs();
    let mut boundary: f64 = 0.0;
    for p in 0..g.p_cells() {
        let p_edge = PhaseSpaceGrid::on_boundary(p, g.n_p, g.dim);
        for r in 0..g.r_cells() {
            if p_edge || PhaseSpaceGrid::on_boundary(r, g.n_r, g.dim) {
                boundary = boundary.max(w.values[p * g.r_cells() + r].abs());
            }
        }
    }
    if !(peak > 0.0) || boundary > ALIAS_TOL * peak {
        let ratio = if peak > 0.0 { boundary / peak } else { f64::INFINITY };
        return Err(Error::AliasingDetected { ratio });
    }
    let deviation = (w.total() - 1.0).abs();
    if !(deviation <= NORM_TOL) {
        return Err(Error::GridTooCoarse { deviation });
    }
    Ok(())
}

/// `sum max(0, -n) * cell volume`.
pub fn negativity_volume(w: &WignerGrid) -> f64 {
    let neg: Vec<f64> = w.values.iter().map(|&v| (-v).max(0.0)).collect();
    pairwise_sum(&neg) * w.grid.cell_volume()
}

/// Momentum density (integrated over r) and position density (integrated
/// over p), on the flattened p- and r-cells respectively.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    pub momentum: Vec<f64>,
    pub position: Vec<f64>,
}

pub fn marginals(w: &WignerGrid) -> Marginals {
    let g = &w.grid;
    let (nr, np) = (g.r_cells(), g.p_cells());
    let r_vol = g.dr().powi(g.dim as i32);
    let p_vol = g.dp().powi(g.dim as i32);
    let momentum = (0..np).map(|p| pairwise_sum(&w.values[p * nr..(p + 1) * nr]) * r_vol).collect();
    let position = (0..nr)
        .map(|r| {
            let column: Vec<f64> = (0..np).map(|p| w.values[p * nr + r]).collect();
            pairwise_sum(&column) * p_vol
        })
        .collect();
    Marginals { momentum, position }
}

/// One row of a negativity sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NegativityRow {
    /// Separation in units of the position width `1/sigma`.
    pub d_over_sigma_x: f64,
    pub negativity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegativityTable {
    pub rows: Vec<NegativityRow>,
    /// Smallest separation whose negativity exceeds [`NEGATIVITY_THRESHOLD`].
    pub threshold_crossing: Option<f64>,
}

impl NegativityTable {
    /// Nondecreasing up to `tol`.
    pub fn is_monotone(&self, tol: f64) -> bool {
        self.rows.windows(2).all(|w| w[1].negativity >= w[0].negativity - tol)
    }
}

/// Negativity of even two-component cats of momentum width `sigma` at the
/// given separations (in units of `1/sigma`).
pub fn negativity_scale(dim: usize, sigma: f64, separations: &[f64], grid: &PhaseSpaceGrid) -> Result<NegativityTable> {
    if separations.windows(2).any(|w| !(w[0] < w[1])) || separations.iter().any(|d| !(*d >= 0.0)) {
        return Err(Error::InvalidParameter("separations must be nonnegative and increasing".into()));
    }
    let weights = [Complex64::new(1.0, 0.0); 2];
    let mut rows = Vec::with_capacity(separations.len());
    for &d in separations {
        let packet = make_packet(&PacketSpec::symmetric_cat(dim, sigma, d / sigma, weights))?;
        let w = wigner_transform(&packet, grid)?;
        rows.push(NegativityRow { d_over_sigma_x: d, negativity: negativity_volume(&w) });
    }
    let threshold_crossing = rows.iter().find(|r| r.negativity > NEGATIVITY_THRESHOLD).map(|r| r.d_over_sigma_x);
    Ok(NegativityTable { rows, threshold_crossing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packets::{position_density, WavePacket};
    use crate::quad;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn grid1(r: f64, p: f64, n: usize) -> PhaseSpaceGrid {
        PhaseSpaceGrid::new(1, (-r, r), n, (-p, p), n).unwrap()
    }

    fn gauss(sigma: f64, b: f64) -> WavePacket {
        make_packet(&PacketSpec::gaussian(&[0.0], &[sigma], &[b])).unwrap()
    }

    fn cat(d: f64) -> WavePacket {
        make_packet(&PacketSpec::symmetric_cat(1, 1.0, d, [Complex64::new(1.0, 0.0); 2])).unwrap()
    }

    /// Direct quadrature of the k integral.
    fn direct(state: &impl MomentumState, r: f64, p: f64) -> f64 {
        let est: quad::Estimate<Complex64> = quad::integrate(&[(-30.0, 30.0)], 4, 1e-12, 1e-16, &|k: &[f64]| {
            Complex64::from_polar(1.0, k[0] * r) * density(state, [p, 0.0], [k[0], 0.0])
        })
        .unwrap();
        est.value.re / (2.0 * PI)
    }

    #[test]
    fn grid_validation() {
        assert!(PhaseSpaceGrid::new(1, (-1.0, 1.0), 24, (-1.0, 1.0), 32).is_err());
        assert!(PhaseSpaceGrid::new(1, (-1.0, 1.0), 8, (-1.0, 1.0), 32).is_err());
        assert!(PhaseSpaceGrid::new(3, (-1.0, 1.0), 16, (-1.0, 1.0), 16).is_err());
        assert!(PhaseSpaceGrid::new(1, (1.0, 1.0), 16, (-1.0, 1.0), 16).is_err());
        let g = grid1(2.0, 3.0, 16);
        let r = g.r_axis();
        assert_eq!(r[0], -r[15]);
        assert_relative_eq!(r[0], -2.0 + 0.125);
    }

    #[test]
    fn gaussian_surface() {
        let g = grid1(9.0, 9.0, 128);
        let w = wigner_transform(&gauss(1.0, 0.0), &g).unwrap();
        let (r, p) = (g.r_axis(), g.p_axis());
        let mut worst: f64 = 0.0;
        for (ip, &pv) in p.iter().enumerate() {
            for (ir, &rv) in r.iter().enumerate() {
                let exact = (-rv * rv - pv * pv).exp() / PI;
                worst = worst.max((w.value(ir, ip) - exact).abs());
            }
        }
        assert!(worst < 1e-12, "{worst}");
        assert!(w.imag_residual < 1e-9 * w.max_abs());
        assert_relative_eq!(w.total(), 1.0, epsilon = 1e-6);
        assert!(w.min() >= -1e-9);
        assert!(negativity_volume(&w) < 1e-9);
    }

    #[test]
    fn shifted_gaussian_is_translated() {
        let g = grid1(9.0, 9.0, 128);
        let w = wigner_transform(&gauss(1.0, 1.0), &g).unwrap();
        let (r, p) = (g.r_axis(), g.p_axis());
        for (ip, &pv) in p.iter().enumerate().step_by(7) {
            for (ir, &rv) in r.iter().enumerate().step_by(5) {
                let exact = (-(rv - 1.0) * (rv - 1.0) - pv * pv).exp() / PI;
                assert!((w.value(ir, ip) - exact).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn translation_covariance_at_integer_cells() {
        let g = grid1(12.0, 8.0, 128);
        let cells = 7;
        let b = cells as f64 * g.dr();
        for packet in [gauss(1.0, 0.0), cat(3.0)] {
            let shifted = make_packet(&packet.spec().clone().with_shift(&[b])).unwrap();
            let w0 = wigner_transform(&packet, &g).unwrap().translated([cells, 0]);
            let w1 = wigner_transform(&shifted, &g).unwrap();
            let dev = w0.values.iter().zip(&w1.values).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(dev < 1e-9, "{dev}");
        }
    }

    #[test]
    fn cat_matches_direct_quadrature() {
        let g = grid1(10.0, 8.0, 128);
        let c = cat(4.0);
        let w = wigner_transform(&c, &g).unwrap();
        let peak = w.max_abs();
        let (r, p) = (g.r_axis(), g.p_axis());
        let cells =
            [(64, 64), (63, 70), (40, 64), (88, 60), (64, 20), (50, 50), (70, 90), (64, 77), (30, 64), (95, 66)];
        for (ir, ip) in cells {
            let exact = direct(&c, r[ir], p[ip]);
            let scale = exact.abs().max(1e-2 * peak);
            assert!((w.value(ir, ip) - exact).abs() < 1e-4 * scale, "{ir} {ip} {} {exact}", w.value(ir, ip));
        }
        // Fringe at the origin and positive lobes at +-2.
        let origin = w.value(64, 64);
        assert!(origin > 0.0);
        let lobe = w.value(g.n_r / 2 + (2.0 / g.dr()) as usize, 64);
        assert!(lobe > 0.0);
        assert!(w.min() < -0.05);
    }

    #[test]
    fn cat_negativity_and_marginals() {
        let g = grid1(10.0, 8.0, 128);
        let w = wigner_transform(&cat(4.0), &g).unwrap();
        let neg = negativity_volume(&w);
        assert!(neg > 0.01, "{neg}");
        let m = marginals(&w);
        let (r, p) = (g.r_axis(), g.p_axis());
        // Momentum marginal carries the 1 + cos(4p) modulation.
        let state = cat(4.0);
        for (ip, &pv) in p.iter().enumerate() {
            let exact = state.amplitude([pv, 0.0]).norm_sqr();
            assert!((m.momentum[ip] - exact).abs() < 1e-9);
        }
        for (ir, &rv) in r.iter().enumerate().step_by(9) {
            let exact = position_density(&state, [rv, 0.0]).unwrap();
            assert!((m.position[ir] - exact).abs() < 1e-9);
        }
    }

    #[test]
    fn gaussian_marginals_and_parity() {
        let sigma = 1.3;
        let g = grid1(8.0, 10.0, 128);
        let w = wigner_transform(&gauss(sigma, 0.0), &g).unwrap();
        let m = marginals(&w);
        let sx = 1.0 / sigma;
        let gauss_density = |x: f64, s: f64| (-(x * x) / (s * s)).exp() / (PI.sqrt() * s);
        let peak_p = gauss_density(0.0, sigma);
        let peak_r = gauss_density(0.0, sx);
        for (i, &pv) in g.p_axis().iter().enumerate() {
            assert!((m.momentum[i] - gauss_density(pv, sigma)).abs() < 1e-3 * peak_p);
        }
        for (i, &rv) in g.r_axis().iter().enumerate() {
            assert!((m.position[i] - gauss_density(rv, sx)).abs() < 1e-3 * peak_r);
        }
        let n = g.n_r;
        let peak = w.max_abs();
        for ip in 0..n {
            for ir in 0..n {
                assert!((w.value(ir, ip) - w.value(n - 1 - ir, n - 1 - ip)).abs() < 1e-12 * peak);
            }
        }
    }

    #[test]
    fn aliasing_and_coarse_grids() {
        let narrow = grid1(2.0, 8.0, 64);
        assert!(matches!(wigner_transform(&gauss(1.0, 0.0), &narrow), Err(Error::AliasingDetected { .. })));
        let wide_state = gauss(0.02, 0.0);
        let g = grid1(9.0, 9.0, 64);
        assert!(wigner_transform(&wide_state, &g).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let g = PhaseSpaceGrid::new(1, (-9.0, 9.0), 64, (-9.0, 9.0), 64).unwrap();
        let w = wigner_transform(&cat(3.0), &g).unwrap();
        let text = w.to_csv();
        assert!(text.starts_with("# dim,Nr,Np,rmin,rmax,pmin,pmax\n# 1,64,64,"));
        let back = WignerGrid::from_csv(&text).unwrap();
        assert_eq!(back.grid, w.grid);
        assert_eq!(back.values, w.values);
        assert_eq!(negativity_volume(&back), negativity_volume(&w));
    }

    #[test]
    fn two_dimensional_gaussian() {
        let g = PhaseSpaceGrid::new(2, (-7.0, 7.0), 64, (-7.0, 7.0), 32).unwrap();
        let packet = make_packet(&PacketSpec::gaussian(&[0.0, 0.0], &[1.0, 1.0], &[0.5, -0.25])).unwrap();
        let w = wigner_transform(&packet, &g).unwrap();
        assert_relative_eq!(w.total(), 1.0, epsilon = 1e-6);
        for (ri, pi) in [(0usize, 0usize), (33 * 64 + 31, 16 * 32 + 16), (2100, 700), (4095, 3)] {
            let (r, p) = (g.r_at(ri), g.p_at(pi));
            let exact = (-(r[0] - 0.5).powi(2) - (r[1] + 0.25).powi(2) - p[0] * p[0] - p[1] * p[1]).exp() / (PI * PI);
            assert!((w.value(ri, pi) - exact).abs() < 1e-12);
        }
        let text = w.to_csv();
        let back = WignerGrid::from_csv(&text).unwrap();
        assert_eq!(back.values, w.values);
    }

    #[test]
    fn negativity_sweep() {
        let g = grid1(12.0, 8.0, 128);
        let seps: Vec<f64> = (0..=12).map(|i| 0.5 * i as f64).collect();
        let table = negativity_scale(1, 1.0, &seps, &g).unwrap();
        assert!(table.rows[0].negativity < 1e-9);
        assert!(table.is_monotone(1e-12), "{:?}", table.rows);
        assert!(table.rows[8].negativity > 0.01);
        let crossing = table.threshold_crossing.unwrap();
        assert!(crossing > 0.0 && crossing <= 4.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn gaussian_is_positive_and_normalized(sigma in 0.7f64..1.5, b in -1.0f64..1.0, p0 in -1.0f64..1.0) {
            let packet = make_packet(&PacketSpec::gaussian(&[p0], &[sigma], &[b])).unwrap();
            let w = wigner_transform(&packet, &grid1(12.0, 12.0, 128)).unwrap();
            prop_assert!(w.min() >= -1e-9);
            prop_assert!((w.total() - 1.0).abs() < 1e-6);
            prop_assert!(w.imag_residual < 1e-9 * w.max_abs());
        }

        #[test]
        fn even_cats_are_parity_symmetric(d in 0.0f64..5.0, phase in 0.0f64..std::f64::consts::TAU) {
            let weights = [Complex64::new(1.0, 0.0), Complex64::from_polar(1.0, phase)];
            let packet = make_packet(&PacketSpec::symmetric_cat(1, 1.0, d, weights)).unwrap();
            let g = grid1(12.0, 10.0, 128);
            let w = wigner_transform(&packet, &g).unwrap();
            prop_assert!(w.imag_residual < 1e-9 * w.max_abs());
            if packet.is_parity_even() {
                let n = g.n_r;
                for ip in 0..n {
                    for ir in 0..n {
                        prop_assert!((w.value(ir, ip) - w.value(n - 1 - ir, n - 1 - ip)).abs() < 1e-12 * w.max_abs());
                    }
                }
            }
        }
    }
}
