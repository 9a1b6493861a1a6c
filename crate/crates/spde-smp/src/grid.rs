//! Spatial discretization of the unit interval with homogeneous Dirichlet
//! boundary: grid, discrete sine basis, heat semigroup, fractional powers of
//! the (negative) Laplacian, and discrete L^p norms and pairings.

use std::sync::Arc;

use crate::error::{Error, Result};

struct GridData {
    m: usize,
    h: f64,
    /// Node coordinates x_i = (i+1) h.
    nodes: Vec<f64>,
    /// Eigenvalues of the discrete Dirichlet Laplacian, ascending.
    lambdas: Vec<f64>,
    /// Sine matrix, row-major: sine[k*m + i] = sin((k+1) pi (i+1) h).
    sine: Vec<f64>,
}

/// Interior grid on (0,1) with `M` nodes at x_i = i*h, h = 1/(M+1).
///
/// Cloning is cheap; all clones share one immutable data block.
#[derive(Clone)]
pub struct Grid1D {
    data: Arc<GridData>,
}

impl std::fmt::Debug for Grid1D {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Grid1D(m={})", self.m())
    }
}

impl Grid1D {
    pub fn new(m: usize) -> Result<Grid1D> {
        if m < 2 {
            return Err(Error::Invalid(format!("grid needs at least 2 interior points, got {m}")));
        }
        let h = 1.0 / (m as f64 + 1.0);
        let mut lambdas = Vec::with_capacity(m);
        for k in 1..=m {
            let s = (k as f64 * std::f64::consts::PI * h / 2.0).sin();
            lambdas.push(4.0 / (h * h) * s * s);
        }
        let mut sine = vec![0.0; m * m];
        for k in 1..=m {
            for i in 1..=m {
                sine[(k - 1) * m + (i - 1)] = (k as f64 * std::f64::consts::PI * i as f64 * h).sin();
            }
        }
        let nodes = (1..=m).map(|i| i as f64 * h).collect();
        Ok(Grid1D { data: Arc::new(GridData { m, h, nodes, lambdas, sine }) })
    }

    pub fn m(&self) -> usize {
        self.data.m
    }

    pub fn h(&self) -> f64 {
        self.data.h
    }

    /// Node coordinate x_i for i in 0..M (x = (i+1)*h).
    pub fn node(&self, i: usize) -> f64 {
        self.data.nodes[i]
    }

    pub fn nodes(&self) -> &[f64] {
        &self.data.nodes
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.data.lambdas
    }

    pub fn same_grid(&self, other: &Grid1D) -> bool {
        self.data.m == other.data.m
    }

    pub fn zero_field(&self) -> Field {
        Field { grid: self.clone(), values: vec![0.0; self.m()] }
    }

    pub fn field_from_fn(&self, f: impl Fn(f64) -> f64) -> Field {
        let values = (0..self.m()).map(|i| f(self.node(i))).collect();
        Field { grid: self.clone(), values }
    }

    pub fn field_from_values(&self, values: Vec<f64>) -> Result<Field> {
        if values.len() != self.m() {
            return Err(Error::Mismatch(format!(
                "field length {} does not match grid size {}",
                values.len(),
                self.m()
            )));
        }
        Ok(Field { grid: self.clone(), values })
    }

    /// Discrete eigenmode k (0-based): values sin((k+1) pi x_i).
    pub fn eigenmode(&self, k: usize) -> Field {
        assert!(k < self.m());
        let m = self.m();
        let values = self.data.sine[k * m..(k + 1) * m].to_vec();
        Field { grid: self.clone(), values }
    }

    /// Sine coefficients c with v_i = sum_k c_k sin((k+1) pi x_i).
    pub fn to_modes(&self, values: &[f64]) -> Vec<f64> {
        let m = self.m();
        let scale = 2.0 * self.h();
        let mut coeffs = vec![0.0; m];
        for k in 0..m {
            let row = &self.data.sine[k * m..(k + 1) * m];
            let mut acc = 0.0;
            for i in 0..m {
                acc += row[i] * values[i];
            }
            coeffs[k] = scale * acc;
        }
        coeffs
    }

    pub fn from_modes(&self, coeffs: &[f64]) -> Vec<f64> {
        let m = self.m();
        let mut values = vec![0.0; m];
        for k in 0..m {
            let c = coeffs[k];
            if c == 0.0 {
                continue;
            }
            let row = &self.data.sine[k * m..(k + 1) * m];
            for i in 0..m {
                values[i] += c * row[i];
            }
        }
        values
    }

    /// Dense one-step propagator for the heat semigroup at step `dt`.
    pub fn propagator(&self, dt: f64) -> Result<Propagator> {
        if dt < 0.0 || !dt.is_finite() {
            return Err(Error::Invalid(format!("propagator needs dt >= 0, got {dt}")));
        }
        let m = self.m();
        let decay: Vec<f64> = self.data.lambdas.iter().map(|&l| (-l * dt).exp()).collect();
        // E = S diag(decay) S * 2h; symmetric, applied as a plain matvec.
        let scale = 2.0 * self.h();
        let mut mat = vec![0.0; m * m];
        for i in 0..m {
            for j in i..m {
                let mut acc = 0.0;
                for k in 0..m {
                    acc += self.data.sine[k * m + i] * decay[k] * self.data.sine[k * m + j];
                }
                let e = scale * acc;
                mat[i * m + j] = e;
                mat[j * m + i] = e;
            }
        }
        Ok(Propagator { grid: self.clone(), dt, mat })
    }
}

/// Nodal values of a grid function on the interior nodes. The function is
/// understood to vanish at the interval ends (Dirichlet).
#[derive(Clone, Debug)]
pub struct Field {
    grid: Grid1D,
    values: Vec<f64>,
}

impl Field {
    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, a: f64) -> Field {
        Field { grid: self.grid.clone(), values: self.values.iter().map(|v| a * v).collect() }
    }

    pub fn plus(&self, other: &Field) -> Field {
        assert!(self.grid.same_grid(&other.grid));
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Field { grid: self.grid.clone(), values }
    }

    pub fn minus(&self, other: &Field) -> Field {
        assert!(self.grid.same_grid(&other.grid));
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Field { grid: self.grid.clone(), values }
    }

    /// Pointwise product.
    pub fn times(&self, other: &Field) -> Field {
        assert!(self.grid.same_grid(&other.grid));
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect();
        Field { grid: self.grid.clone(), values }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FracSign {
    Plus,
    Minus,
}

/// e^{tA} f: each sine coefficient is damped by exp(-lambda_k t).
pub fn apply_semigroup(f: &Field, t: f64) -> Result<Field> {
    if t < 0.0 || !t.is_finite() {
        return Err(Error::Invalid(format!("semigroup time must be >= 0, got {t}")));
    }
    let grid = f.grid();
    let mut coeffs = grid.to_modes(f.values());
    for (c, &l) in coeffs.iter_mut().zip(grid.lambdas()) {
        *c *= (-l * t).exp();
    }
    grid.field_from_values(grid.from_modes(&coeffs))
}

/// (-A)^{eta} f (sign +) or (-A)^{-eta} f (sign -), spectrally.
pub fn fractional_power(f: &Field, eta: f64, sign: FracSign) -> Result<Field> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::Invalid(format!("fractional exponent must be in [0,1], got {eta}")));
    }
    let grid = f.grid();
    let mut coeffs = grid.to_modes(f.values());
    for (c, &l) in coeffs.iter_mut().zip(grid.lambdas()) {
        let p = match sign {
            FracSign::Plus => l.powf(eta),
            FracSign::Minus => l.powf(-eta),
        };
        *c *= p;
    }
    grid.field_from_values(grid.from_modes(&coeffs))
}

/// Interior quadrature (h sum_i |f_i|^p)^{1/p}. Boundary values are zero for
/// Dirichlet grid functions, so this is the full trapezoid rule for them.
pub fn lp_norm(f: &Field, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::Invalid(format!("lp_norm needs p >= 1, got {p}")));
    }
    let h = f.grid().h();
    let sum = if p == 2.0 {
        lp_sum_squares(f.values())
    } else if p == 4.0 {
        f.values().iter().map(|&v| v * v * v * v).sum()
    } else {
        f.values().iter().map(|&v| v.abs().powf(p)).sum()
    };
    Ok((h * sum).powf(1.0 / p))
}

fn lp_sum_squares(values: &[f64]) -> f64 {
    values.iter().map(|&v| v * v).sum()
}

/// Discrete integral h sum_i f_i g_i.
pub fn duality_pair(f: &Field, g: &Field) -> Result<f64> {
    if !f.grid().same_grid(g.grid()) {
        return Err(Error::Mismatch(format!(
            "duality_pair grids differ: {} vs {}",
            f.grid().m(),
            g.grid().m()
        )));
    }
    Ok(duality_pair_slices(f.grid().h(), f.values(), g.values()))
}

pub fn duality_pair_slices(h: f64, f: &[f64], g: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..f.len() {
        acc += f[i] * g[i];
    }
    h * acc
}

/// Trapezoid rule over [0,1] for an integrand with known end values:
/// h*(left/2 + sum interior + right/2). Used for integrands that do not
/// vanish at the interval ends, e.g. running-cost densities.
pub fn trapezoid_with_boundary(h: f64, interior: &[f64], left: f64, right: f64) -> f64 {
    let mut acc = 0.5 * (left + right);
    for &v in interior {
        acc += v;
    }
    h * acc
}

/// Cached dense propagator for one time step; symmetric M x M matrix.
pub struct Propagator {
    grid: Grid1D,
    dt: f64,
    mat: Vec<f64>,
}

impl Propagator {
    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn apply_slice(&self, x: &[f64], out: &mut [f64]) {
        let m = self.grid.m();
        debug_assert_eq!(x.len(), m);
        debug_assert_eq!(out.len(), m);
        for i in 0..m {
            let row = &self.mat[i * m..(i + 1) * m];
            let mut acc = 0.0;
            for j in 0..m {
                acc += row[j] * x[j];
            }
            out[i] = acc;
        }
    }

    pub fn apply(&self, f: &Field) -> Field {
        assert!(self.grid.same_grid(f.grid()));
        let mut out = vec![0.0; self.grid.m()];
        self.apply_slice(f.values(), &mut out);
        Field { grid: self.grid.clone(), values: out }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rand_field(grid: &Grid1D, seed: u64) -> Field {
        // Deterministic pseudo-random values; no external RNG needed here.
        let mut s = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
        grid.field_from_fn(|_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
    }

    #[test]
    fn transform_roundtrip() {
        let grid = Grid1D::new(31).unwrap();
        let f = rand_field(&grid, 7);
        let back = grid.from_modes(&grid.to_modes(f.values()));
        let scale: f64 = f.values().iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (a, b) in f.values().iter().zip(&back) {
            assert!((a - b).abs() <= 1e-12 * scale.max(1.0));
        }
    }

    #[test]
    fn eigenvalues_positive_increasing() {
        let grid = Grid1D::new(16).unwrap();
        let l = grid.lambdas();
        assert!(l[0] > 0.0);
        for k in 1..l.len() {
            assert!(l[k] > l[k - 1]);
        }
        // First eigenvalue approximates pi^2 from below at O(h^2).
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        assert!((l[0] - pi2).abs() < 0.2);
    }

    #[test]
    fn parseval_identity() {
        let grid = Grid1D::new(24).unwrap();
        let f = rand_field(&grid, 3);
        let n2 = lp_norm(&f, 2.0).unwrap();
        let coeffs = grid.to_modes(f.values());
        let mode_sum: f64 = coeffs.iter().map(|c| c * c).sum();
        assert!((n2 * n2 - 0.5 * mode_sum).abs() <= 1e-10 * (n2 * n2).max(1.0));
    }

    #[test]
    fn semigroup_identity_and_eigen_decay() {
        let grid = Grid1D::new(15).unwrap();
        let f = rand_field(&grid, 11);
        let same = apply_semigroup(&f, 0.0).unwrap();
        for (a, b) in f.values().iter().zip(same.values()) {
            assert!((a - b).abs() < 1e-13);
        }
        let e1 = grid.eigenmode(0);
        let decayed = apply_semigroup(&e1, 0.1).unwrap();
        let factor = (-grid.lambdas()[0] * 0.1).exp();
        for (a, b) in e1.values().iter().zip(decayed.values()) {
            assert!((a * factor - b).abs() < 1e-12);
        }
    }

    #[test]
    fn semigroup_law() {
        let grid = Grid1D::new(20).unwrap();
        let f = rand_field(&grid, 5);
        let st = apply_semigroup(&apply_semigroup(&f, 0.07).unwrap(), 0.13).unwrap();
        let direct = apply_semigroup(&f, 0.2).unwrap();
        for (a, b) in st.values().iter().zip(direct.values()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn semigroup_rejects_negative_time() {
        let grid = Grid1D::new(8).unwrap();
        let f = grid.eigenmode(0);
        assert!(apply_semigroup(&f, -0.5).is_err());
    }

    #[test]
    fn semigroup_contracts_l2_and_l4() {
        let grid = Grid1D::new(33).unwrap();
        for seed in 0..5 {
            let f = rand_field(&grid, seed);
            let g = apply_semigroup(&f, 0.05).unwrap();
            for p in [2.0, 4.0] {
                let before = lp_norm(&f, p).unwrap();
                let after = lp_norm(&g, p).unwrap();
                assert!(after <= before * (1.0 + 1e-12), "p={p} {after} > {before}");
            }
        }
    }

    #[test]
    fn fractional_power_definitions() {
        let grid = Grid1D::new(12).unwrap();
        let f = rand_field(&grid, 2);
        // eta = 0 is the identity.
        let id = fractional_power(&f, 0.0, FracSign::Plus).unwrap();
        for (a, b) in f.values().iter().zip(id.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        // eta = 1 on an eigenmode multiplies by the eigenvalue.
        let k = 4;
        let e = grid.eigenmode(k);
        let ae = fractional_power(&e, 1.0, FracSign::Plus).unwrap();
        for (a, b) in e.values().iter().zip(ae.values()) {
            assert!((a * grid.lambdas()[k] - b).abs() < 1e-9);
        }
        // Inverse composition is the identity.
        let inv = fractional_power(&fractional_power(&f, 0.3, FracSign::Plus).unwrap(), 0.3, FracSign::Minus).unwrap();
        for (a, b) in f.values().iter().zip(inv.values()) {
            assert!((a - b).abs() <= 1e-10);
        }
        // Exponent additivity: 0.125 twice equals 0.25.
        let twice = fractional_power(
            &fractional_power(&f, 0.125, FracSign::Plus).unwrap(),
            0.125,
            FracSign::Plus,
        )
        .unwrap();
        let once = fractional_power(&f, 0.25, FracSign::Plus).unwrap();
        for (a, b) in twice.values().iter().zip(once.values()) {
            assert!((a - b).abs() <= 1e-10);
        }
        assert!(fractional_power(&f, 1.5, FracSign::Plus).is_err());
    }

    #[test]
    fn lp_norm_examples() {
        let grid = Grid1D::new(63).unwrap();
        let one = grid.field_from_fn(|_| 1.0);
        // Interior quadrature of the constant misses the two half-cells at the
        // ends: the exact discrete value is (M/(M+1))^{1/p}, within h of 1.
        for p in [1.0, 2.0, 4.0, 4.0 / 3.0, 8.0] {
            let v = lp_norm(&one, p).unwrap();
            let exact = (grid.m() as f64 / (grid.m() as f64 + 1.0)).powf(1.0 / p);
            assert!((v - exact).abs() < 1e-12);
            assert!((v - 1.0).abs() <= grid.h() + 1e-12);
        }
        // Closed-form oracle: integral of sin^2(pi x) over (0,1) is 1/2.
        let s = grid.field_from_fn(|x| (std::f64::consts::PI * x).sin());
        let n2 = lp_norm(&s, 2.0).unwrap();
        assert!((n2 - 0.5f64.sqrt()).abs() < grid.h() * grid.h());
        // Homogeneity.
        let f = rand_field(&grid, 9);
        let a = lp_norm(&f.scaled(3.0), 4.0).unwrap();
        let b = 3.0 * lp_norm(&f, 4.0).unwrap();
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        assert!(lp_norm(&f, 0.5).is_err());
    }

    #[test]
    fn duality_pair_examples() {
        let grid = Grid1D::new(63).unwrap();
        let one = grid.field_from_fn(|_| 1.0);
        let v = duality_pair(&one, &one).unwrap();
        let exact = grid.m() as f64 / (grid.m() as f64 + 1.0);
        assert!((v - exact).abs() < 1e-12);
        assert!((v - 1.0).abs() <= grid.h());
        // Discrete orthogonality of distinct sine modes.
        let e2 = grid.eigenmode(1);
        let e5 = grid.eigenmode(4);
        assert!(duality_pair(&e2, &e5).unwrap().abs() < 1e-10);
        // Symmetry is exact.
        let f = rand_field(&grid, 1);
        let g = rand_field(&grid, 2);
        assert_eq!(duality_pair(&f, &g).unwrap(), duality_pair(&g, &f).unwrap());
        // Hoelder inequality against the 4 / 4/3 pair.
        let bound = lp_norm(&f, 4.0).unwrap() * lp_norm(&g, 4.0 / 3.0).unwrap();
        assert!(duality_pair(&f, &g).unwrap().abs() <= bound + 1e-10);
        let other = Grid1D::new(10).unwrap();
        assert!(duality_pair(&f, &other.zero_field()).is_err());
    }

    #[test]
    fn propagator_matches_semigroup() {
        let grid = Grid1D::new(21).unwrap();
        let prop = grid.propagator(0.03).unwrap();
        let f = rand_field(&grid, 4);
        let via_mat = prop.apply(&f);
        let via_modes = apply_semigroup(&f, 0.03).unwrap();
        for (a, b) in via_mat.values().iter().zip(via_modes.values()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn fractional_smoothing_constant_is_stable() {
        // Finite-sample analogue of analyticity: ||(-A)^eta e^{tA} f||_2
        // <= K t^{-eta} ||f||_2 with K stable across random f.
        let grid = Grid1D::new(31).unwrap();
        let eta = 0.2;
        let t = 0.01;
        let mut ks = Vec::new();
        for seed in 0..8 {
            let f = rand_field(&grid, 100 + seed);
            let sm = fractional_power(&apply_semigroup(&f, t).unwrap(), eta, FracSign::Plus).unwrap();
            let k = lp_norm(&sm, 2.0).unwrap() * t.powf(eta) / lp_norm(&f, 2.0).unwrap();
            ks.push(k);
        }
        let kmax = ks.iter().cloned().fold(0.0, f64::max);
        let kmin = ks.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(kmax.is_finite() && kmin > 0.0);
        // The spectral envelope sup_x x^eta e^{-x} bounds every sample.
        let envelope = (eta / std::f64::consts::E).powf(eta);
        assert!(kmax <= envelope * (1.0 + 1e-12), "kmax {kmax} envelope {envelope}");
        assert!(kmax <= 2.0 * kmin, "smoothing constant unstable: {kmin}..{kmax}");
    }
}
