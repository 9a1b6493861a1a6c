//! Coefficient bundles for the controlled stochastic heat equation: drift b,
//! diffusions sigma_j, running cost l (all functions of (x, y, u)), terminal
//! cost h (function of (x, y)), the control space, and built-in presets.
//!
//! First and second y-derivatives are produced symbolically from the same
//! expression source, and validated against central finite differences.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{CompiledExpr, Expr};
use crate::grid::{Field, Grid1D};

/// One scalar coefficient with its first two y-derivatives.
#[derive(Clone)]
pub struct Coef {
    src: String,
    f: CompiledExpr,
    d1: CompiledExpr,
    d2: CompiledExpr,
    uses_y: bool,
    uses_u: bool,
}

fn expr_uses(e: &Expr, want_y: bool) -> bool {
    match e {
        Expr::Const(_) => false,
        Expr::X => false,
        Expr::Y => want_y,
        Expr::U => !want_y,
        Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
            expr_uses(a, want_y) || expr_uses(b, want_y)
        }
        Expr::Neg(a) | Expr::Pow(a, _) | Expr::Sin(a) | Expr::Cos(a) | Expr::Tanh(a) | Expr::Exp(a) => {
            expr_uses(a, want_y)
        }
    }
}

impl Coef {
    pub fn parse(src: &str) -> Result<Coef> {
        let e = Expr::parse(src)?;
        let d1 = e.dy();
        let d2 = d1.dy();
        Ok(Coef {
            src: src.to_string(),
            f: e.compile(),
            d1: d1.compile(),
            d2: d2.compile(),
            uses_y: expr_uses(&e, true),
            uses_u: expr_uses(&e, false),
        })
    }

    pub fn src(&self) -> &str {
        &self.src
    }

    pub fn uses_y(&self) -> bool {
        self.uses_y
    }

    pub fn uses_u(&self) -> bool {
        self.uses_u
    }

    pub fn at(&self, x: f64, y: f64, u: f64) -> f64 {
        self.f.eval(x, y, u)
    }

    pub fn d1_at(&self, x: f64, y: f64, u: f64) -> f64 {
        self.d1.eval(x, y, u)
    }

    pub fn d2_at(&self, x: f64, y: f64, u: f64) -> f64 {
        self.d2.eval(x, y, u)
    }

    pub fn eval_into(&self, xs: &[f64], ys: &[f64], u: f64, out: &mut [f64]) {
        self.f.eval_into(xs, ys, u, out)
    }

    pub fn d1_into(&self, xs: &[f64], ys: &[f64], u: f64, out: &mut [f64]) {
        self.d1.eval_into(xs, ys, u, out)
    }

    pub fn d2_into(&self, xs: &[f64], ys: &[f64], u: f64, out: &mut [f64]) {
        self.d2.eval_into(xs, ys, u, out)
    }
}

/// Admissible control values: a finite labeled set or a closed interval.
#[derive(Clone, Debug)]
pub enum ControlSpace {
    Finite(Vec<(String, f64)>),
    Box { lo: f64, hi: f64 },
}

impl ControlSpace {
    pub fn finite(values: &[f64]) -> Result<ControlSpace> {
        let mut elems = Vec::new();
        for &v in values {
            if elems.iter().any(|(_, w)| *w == v) {
                return Err(Error::Invalid(format!("duplicate control value {v}")));
            }
            elems.push((format_control(v), v));
        }
        if elems.len() < 2 {
            return Err(Error::Invalid("finite control space needs at least 2 values".into()));
        }
        Ok(ControlSpace::Finite(elems))
    }

    pub fn interval(lo: f64, hi: f64) -> Result<ControlSpace> {
        if !(lo < hi) {
            return Err(Error::Invalid(format!("control interval needs lo < hi, got [{lo}, {hi}]")));
        }
        Ok(ControlSpace::Box { lo, hi })
    }

    pub fn contains(&self, u: f64) -> bool {
        match self {
            ControlSpace::Finite(vs) => vs.iter().any(|(_, v)| *v == u),
            ControlSpace::Box { lo, hi } => (*lo..=*hi).contains(&u),
        }
    }

    pub fn check(&self, u: f64) -> Result<()> {
        if self.contains(u) {
            Ok(())
        } else {
            Err(Error::Invalid(format!("control value {u} outside the admissible set")))
        }
    }

    /// Stable serialization label for a control value.
    pub fn label_of(&self, u: f64) -> String {
        format_control(u)
    }

    /// Representative values used by validation probes and gap sweeps.
    pub fn probe_values(&self) -> Vec<f64> {
        match self {
            ControlSpace::Finite(vs) => vs.iter().map(|(_, v)| *v).collect(),
            ControlSpace::Box { lo, hi } => vec![*lo, 0.5 * (lo + hi), *hi],
        }
    }
}

fn format_control(v: f64) -> String {
    // Display formatting round-trips f64 exactly and is stable across runs.
    format!("{v}")
}

/// Identifies a coefficient or one of its y-derivatives, e.g. "sigma_1'".
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CoefficientId {
    pub base: CoefBase,
    pub deriv: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoefBase {
    B,
    Sigma(usize),
    L,
    H,
}

impl CoefficientId {
    pub fn parse(which: &str) -> Result<CoefficientId> {
        let trimmed = which.trim();
        let deriv = trimmed.chars().rev().take_while(|&c| c == '\'').count();
        if deriv > 2 {
            return Err(Error::Invalid(format!("at most two derivatives supported: {which:?}")));
        }
        let base_str = &trimmed[..trimmed.len() - deriv];
        let base = match base_str {
            "b" => CoefBase::B,
            "l" => CoefBase::L,
            "h" => CoefBase::H,
            s if s.starts_with("sigma_") => {
                let j: usize = s["sigma_".len()..]
                    .parse()
                    .map_err(|_| Error::Invalid(format!("bad diffusion index in {which:?}")))?;
                if j == 0 {
                    return Err(Error::Invalid("diffusion indices are 1-based".into()));
                }
                CoefBase::Sigma(j - 1)
            }
            _ => return Err(Error::Invalid(format!("unknown coefficient id {which:?}"))),
        };
        Ok(CoefficientId { base, deriv: deriv as u8 })
    }
}

/// Differences of coefficients between two control values at a frozen state.
pub struct DeltaCoefficients {
    pub db: Field,
    pub dsigma: Vec<Field>,
    pub dbp: Field,
    pub dsigmap: Vec<Field>,
    pub dl: Field,
}

struct ProblemData {
    name: String,
    b: Coef,
    sigma: Vec<Coef>,
    l: Coef,
    h: Coef,
    x0: CompiledExpr,
    x0_src: String,
    t_horizon: f64,
    control_space: ControlSpace,
}

/// A complete problem instance: coefficients, horizon, initial state and
/// control space. Immutable and cheap to clone.
#[derive(Clone)]
pub struct Problem {
    data: Arc<ProblemData>,
}

impl Problem {
    #[allow(clippy::too_many_arguments)]
    pub fn from_expressions(
        name: &str,
        b: &str,
        sigma: &[&str],
        l: &str,
        h: &str,
        x0: &str,
        t_horizon: f64,
        control_space: ControlSpace,
    ) -> Result<Problem> {
        if sigma.is_empty() {
            return Err(Error::Invalid("at least one diffusion coefficient required".into()));
        }
        if !(t_horizon > 0.0) || !t_horizon.is_finite() {
            return Err(Error::Invalid(format!("horizon must be positive, got {t_horizon}")));
        }
        let h_coef = Coef::parse(h)?;
        if h_coef.uses_u() {
            return Err(Error::Invalid("terminal cost must not depend on the control".into()));
        }
        let x0_expr = Expr::parse(x0)?;
        if expr_uses(&x0_expr, true) || expr_uses(&x0_expr, false) {
            return Err(Error::Invalid("initial state must depend on x only".into()));
        }
        let problem = Problem {
            data: Arc::new(ProblemData {
                name: name.to_string(),
                b: Coef::parse(b)?,
                sigma: sigma.iter().map(|s| Coef::parse(s)).collect::<Result<Vec<_>>>()?,
                l: Coef::parse(l)?,
                h: h_coef,
                x0: x0_expr.compile(),
                x0_src: x0.to_string(),
                t_horizon,
                control_space,
            }),
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn name(&self) -> &str {
        &self.data.name
    }

    pub fn b(&self) -> &Coef {
        &self.data.b
    }

    pub fn sigma(&self) -> &[Coef] {
        &self.data.sigma
    }

    pub fn l(&self) -> &Coef {
        &self.data.l
    }

    pub fn h(&self) -> &Coef {
        &self.data.h
    }

    /// Noise dimension.
    pub fn m_noise(&self) -> usize {
        self.data.sigma.len()
    }

    pub fn t_horizon(&self) -> f64 {
        self.data.t_horizon
    }

    pub fn control_space(&self) -> &ControlSpace {
        &self.data.control_space
    }

    pub fn x0_src(&self) -> &str {
        &self.data.x0_src
    }

    pub fn coef_sources(&self) -> Vec<(String, String)> {
        let mut out = vec![("b".to_string(), self.data.b.src().to_string())];
        for (j, s) in self.data.sigma.iter().enumerate() {
            out.push((format!("sigma_{}", j + 1), s.src().to_string()));
        }
        out.push(("l".to_string(), self.data.l.src().to_string()));
        out.push(("h".to_string(), self.data.h.src().to_string()));
        out
    }

    pub fn x0_field(&self, grid: &Grid1D) -> Field {
        grid.field_from_fn(|x| self.data.x0.eval(x, 0.0, 0.0))
    }

    fn coef(&self, base: CoefBase) -> Result<&Coef> {
        match base {
            CoefBase::B => Ok(&self.data.b),
            CoefBase::L => Ok(&self.data.l),
            CoefBase::H => Ok(&self.data.h),
            CoefBase::Sigma(j) => self.data.sigma.get(j).ok_or_else(|| {
                Error::Invalid(format!(
                    "diffusion index {} out of range (m = {})",
                    j + 1,
                    self.data.sigma.len()
                ))
            }),
        }
    }

    /// Pointwise application x_i -> coef(x_i, X(x_i), u).
    pub fn eval_nemytskii(&self, which: &str, state: &Field, u: f64) -> Result<Field> {
        let id = CoefficientId::parse(which)?;
        if !matches!(id.base, CoefBase::H) {
            self.data.control_space.check(u)?;
        }
        let coef = self.coef(id.base)?;
        let grid = state.grid();
        let mut out = vec![0.0; grid.m()];
        match id.deriv {
            0 => coef.eval_into(grid.nodes(), state.values(), u, &mut out),
            1 => coef.d1_into(grid.nodes(), state.values(), u, &mut out),
            _ => coef.d2_into(grid.nodes(), state.values(), u, &mut out),
        }
        grid.field_from_values(out)
    }

    /// Coefficient differences between controls u_pert and u_base at state X.
    pub fn delta_coefficients(&self, state: &Field, u_pert: f64, u_base: f64) -> Result<DeltaCoefficients> {
        self.data.control_space.check(u_pert)?;
        self.data.control_space.check(u_base)?;
        let grid = state.grid();
        let xs = grid.nodes();
        let ys = state.values();
        let m = grid.m();
        let diff = |f: &dyn Fn(f64, f64, f64) -> f64| -> Field {
            let mut out = vec![0.0; m];
            for i in 0..m {
                out[i] = f(xs[i], ys[i], u_pert) - f(xs[i], ys[i], u_base);
            }
            grid.field_from_values(out).expect("matching grid")
        };
        Ok(DeltaCoefficients {
            db: diff(&|x, y, u| self.data.b.at(x, y, u)),
            dsigma: self.data.sigma.iter().map(|s| diff(&|x, y, u| s.at(x, y, u))).collect(),
            dbp: diff(&|x, y, u| self.data.b.d1_at(x, y, u)),
            dsigmap: self.data.sigma.iter().map(|s| diff(&|x, y, u| s.d1_at(x, y, u))).collect(),
            dl: diff(&|x, y, u| self.data.l.at(x, y, u)),
        })
    }

    /// Finite-difference and finiteness validation on a probe set; returns the
    /// measured derivative bounds.
    pub fn validate(&self) -> Result<ValidationReport> {
        let xs = [0.0, 0.13, 0.37, 0.5, 0.77, 1.0];
        let ys = [-2.0, -0.5, 0.0, 0.31, 0.9, 1.8];
        let us = self.data.control_space.probe_values();
        let d = 1e-5;
        let tol = 1e-4;
        let mut report = ValidationReport::default();

        let mut check_coef = |label: &str, c: &Coef, with_u: bool| -> Result<()> {
            let u_list: &[f64] = if with_u { &us } else { &[0.0] };
            for &x in &xs {
                for &y in &ys {
                    for &u in u_list {
                        let v = c.at(x, y, u);
                        let v1 = c.d1_at(x, y, u);
                        let v2 = c.d2_at(x, y, u);
                        if !v.is_finite() || !v1.is_finite() || !v2.is_finite() {
                            return Err(Error::Invalid(format!(
                                "{label} not finite at (x={x}, y={y}, u={u})"
                            )));
                        }
                        let fd1 = (c.at(x, y + d, u) - c.at(x, y - d, u)) / (2.0 * d);
                        let fd2 = (c.d1_at(x, y + d, u) - c.d1_at(x, y - d, u)) / (2.0 * d);
                        let e1 = (v1 - fd1).abs();
                        let e2 = (v2 - fd2).abs();
                        if e1 > tol || e2 > tol {
                            return Err(Error::Invalid(format!(
                                "{label} derivative mismatch at (x={x}, y={y}, u={u}): {e1:.2e}, {e2:.2e}"
                            )));
                        }
                        report.fd_max_err = report.fd_max_err.max(e1).max(e2);
                        report.record(label, v1.abs(), v2.abs());
                    }
                }
            }
            Ok(())
        };

        check_coef("b", &self.data.b, true)?;
        for (j, s) in self.data.sigma.iter().enumerate() {
            check_coef(&format!("sigma_{}", j + 1), s, true)?;
        }
        check_coef("l", &self.data.l, true)?;
        check_coef("h", &self.data.h, false)?;
        Ok(report)
    }
}

/// Measured derivative bounds from the validation probe set.
#[derive(Default, Debug, Clone)]
pub struct ValidationReport {
    pub fd_max_err: f64,
    pub sup_first_deriv: f64,
    pub sup_second_deriv: f64,
}

impl ValidationReport {
    fn record(&mut self, _label: &str, d1: f64, d2: f64) {
        self.sup_first_deriv = self.sup_first_deriv.max(d1);
        self.sup_second_deriv = self.sup_second_deriv.max(d2);
    }
}

/// Built-in problem presets.
///
/// - "decoupled": zero drift, constant diffusion, control enters the running
///   cost only; U = {-1, +1}.
/// - "tanh-drift": bounded drift tanh(y) + u sin(pi x), control-dependent
///   diffusion; U = {-1, 0, +1}.
/// - "additive-control-free-sigma": as "tanh-drift" but the diffusion ignores
///   both state and control, for comparison with first-order-only optimality
///   checks.
/// - "control-noise": the control scales the noise amplitude and a linear
///   running-cost term; U = {-1, +1}. Small-tree optimality instance.
/// - "terminal-probe": zero drift and running cost, tiny additive noise, a
///   terminal cost with nearly constant curvature, long horizon. Exposes the
///   time decay of the second-adjoint pairing.
pub fn load_preset(name: &str) -> Result<Problem> {
    match name {
        "decoupled" => Problem::from_expressions(
            name,
            "0",
            &["0.3"],
            "tanh((y - 0.3*u*sin(pi*x))^2)",
            "0",
            "0.5*sin(pi*x)",
            1.0,
            ControlSpace::finite(&[-1.0, 1.0])?,
        ),
        "tanh-drift" => Problem::from_expressions(
            name,
            "tanh(y) + u*sin(pi*x)",
            &["(0.25 + 0.1*u)*sin(pi*x) + 0.15*tanh(y)"],
            "tanh((y - 0.2*u)^2)",
            "1 - cos(y)",
            "0.5*sin(pi*x)",
            1.0,
            ControlSpace::finite(&[-1.0, 0.0, 1.0])?,
        ),
        "additive-control-free-sigma" => Problem::from_expressions(
            name,
            "tanh(y) + u*sin(pi*x)",
            &["0.35*sin(pi*x)"],
            "tanh((y - 0.2*u)^2)",
            "1 - cos(y)",
            "0.5*sin(pi*x)",
            1.0,
            ControlSpace::finite(&[-1.0, 0.0, 1.0])?,
        ),
        "control-noise" => Problem::from_expressions(
            name,
            "0.3*tanh(y)",
            &["(0.3 + 0.1*u)*sin(pi*x)"],
            "0.45*u*sin(pi*x) + tanh(y^2)",
            "1 - cos(y)",
            "0.4*sin(pi*x)",
            1.0,
            ControlSpace::finite(&[-1.0, 1.0])?,
        ),
        "terminal-probe" => Problem::from_expressions(
            name,
            "0",
            &["0.05*sin(pi*x)"],
            "0",
            "25*(1 - cos(y/5))",
            "0",
            4.0,
            ControlSpace::finite(&[-1.0, 1.0])?,
        ),
        other => Err(Error::Invalid(format!("unknown preset {other:?}"))),
    }
}

pub const PRESET_NAMES: &[&str] = &[
    "decoupled",
    "tanh-drift",
    "additive-control-free-sigma",
    "control-noise",
    "terminal-probe",
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::duality_pair;

    #[test]
    fn presets_load_and_validate() {
        for name in PRESET_NAMES {
            let p = load_preset(name).unwrap();
            assert_eq!(p.name(), *name);
            assert!(p.validate().is_ok(), "validation failed for {name}");
        }
        assert!(load_preset("nonsense").is_err());
    }

    #[test]
    fn tanh_drift_shape() {
        let p = load_preset("tanh-drift").unwrap();
        assert_eq!(p.m_noise(), 1);
        assert_eq!(p.t_horizon(), 1.0);
        let grid = Grid1D::new(15).unwrap();
        let zero = grid.zero_field();
        // b(x, 0, 1) = sin(pi x) since tanh(0) = 0.
        let b = p.eval_nemytskii("b", &zero, 1.0).unwrap();
        for (i, v) in b.values().iter().enumerate() {
            let expect = (std::f64::consts::PI * grid.node(i)).sin();
            assert!((v - expect).abs() < 1e-13);
        }
        // b'(x, 0, u) = sech^2(0) = 1.
        let bp = p.eval_nemytskii("b'", &zero, 0.0).unwrap();
        for v in bp.values() {
            assert!((v - 1.0).abs() < 1e-13);
        }
        // Central-difference oracle for b' at a nonzero state.
        let state = grid.field_from_fn(|x| 0.7 * (std::f64::consts::PI * x).sin());
        let bp = p.eval_nemytskii("b'", &state, 1.0).unwrap();
        let d = 1e-6;
        for (i, v) in bp.values().iter().enumerate() {
            let x = grid.node(i);
            let y = state.values()[i];
            let fd = (p.b().at(x, y + d, 1.0) - p.b().at(x, y - d, 1.0)) / (2.0 * d);
            assert!((v - fd).abs() < 1e-8);
        }
    }

    #[test]
    fn decoupled_zero_drift_and_control_free_sigma() {
        let p = load_preset("decoupled").unwrap();
        let grid = Grid1D::new(9).unwrap();
        let state = grid.field_from_fn(|x| x * (1.0 - x));
        for u in [-1.0, 1.0] {
            let b = p.eval_nemytskii("b", &state, u).unwrap();
            assert!(b.values().iter().all(|&v| v == 0.0));
        }
        let d = p.delta_coefficients(&state, 1.0, -1.0).unwrap();
        for f in &d.dsigma {
            assert!(f.values().iter().all(|&v| v == 0.0));
        }
        for f in &d.dsigmap {
            assert!(f.values().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn delta_coefficients_match_direct_differences() {
        let p = load_preset("tanh-drift").unwrap();
        let grid = Grid1D::new(12).unwrap();
        let state = grid.field_from_fn(|x| 0.4 * (2.0 * std::f64::consts::PI * x).sin());
        let d = p.delta_coefficients(&state, 1.0, 0.0).unwrap();
        let direct = p
            .eval_nemytskii("b", &state, 1.0)
            .unwrap()
            .minus(&p.eval_nemytskii("b", &state, 0.0).unwrap());
        for (a, b) in d.db.values().iter().zip(direct.values()) {
            assert_eq!(a, b);
        }
        // Trivial spike: both controls equal.
        let z = p.delta_coefficients(&state, 1.0, 1.0).unwrap();
        assert!(z.db.values().iter().all(|&v| v == 0.0));
        assert!(z.dl.values().iter().all(|&v| v == 0.0));
        assert!(z.dbp.values().iter().all(|&v| v == 0.0));
        // At zero state with controls (0 -> 1), db = sin(pi x).
        let zero = grid.zero_field();
        let d = p.delta_coefficients(&zero, 1.0, 0.0).unwrap();
        for (i, v) in d.db.values().iter().enumerate() {
            let expect = (std::f64::consts::PI * grid.node(i)).sin();
            assert!((v - expect).abs() < 1e-13);
        }
    }

    #[test]
    fn coefficient_id_parsing_and_errors() {
        assert_eq!(
            CoefficientId::parse("sigma_1''").unwrap(),
            CoefficientId { base: CoefBase::Sigma(0), deriv: 2 }
        );
        assert_eq!(CoefficientId::parse("h'").unwrap(), CoefficientId { base: CoefBase::H, deriv: 1 });
        assert!(CoefficientId::parse("sigma_0").is_err());
        assert!(CoefficientId::parse("w").is_err());
        let p = load_preset("decoupled").unwrap();
        let grid = Grid1D::new(5).unwrap();
        let zero = grid.zero_field();
        assert!(p.eval_nemytskii("sigma_2", &zero, 1.0).is_err());
        assert!(p.eval_nemytskii("b", &zero, 0.5).is_err());
    }

    #[test]
    fn control_space_rules() {
        assert!(ControlSpace::finite(&[1.0]).is_err());
        assert!(ControlSpace::finite(&[1.0, 1.0]).is_err());
        let u = ControlSpace::finite(&[-1.0, 1.0]).unwrap();
        assert!(u.contains(-1.0) && !u.contains(0.0));
        assert_eq!(u.label_of(-1.0), "-1");
        let b = ControlSpace::interval(-2.0, 3.0).unwrap();
        assert!(b.contains(0.0) && !b.contains(3.5));
        assert!(ControlSpace::interval(1.0, 1.0).is_err());
    }

    #[test]
    fn terminal_probe_curvature_nearly_constant() {
        let p = load_preset("terminal-probe").unwrap();
        // h'' = cos(y/5): within 2e-4 of 1 on the state range the preset
        // actually visits.
        for y in [-0.1, -0.02, 0.0, 0.05, 0.1] {
            let h2 = p.h().d2_at(0.5, y, 0.0);
            assert!((h2 - 1.0).abs() < 2.1e-4, "h'' at {y} = {h2}");
        }
    }

    #[test]
    fn hamiltonian_boundary_convention_probe() {
        // The pairing convention: control-noise running cost vanishes at the
        // interval ends when the state does, keeping trapezoid boundary terms
        // out of gap differences.
        let p = load_preset("control-noise").unwrap();
        for u in [-1.0, 1.0] {
            assert_eq!(p.l().at(0.0, 0.0, u), 0.0);
            assert_eq!(p.l().at(1.0, 0.0, u), 0.0);
        }
        let grid = Grid1D::new(7).unwrap();
        let zero = grid.zero_field();
        let dl = p.delta_coefficients(&zero, 1.0, -1.0).unwrap().dl;
        let expect = grid.field_from_fn(|x| 0.9 * (std::f64::consts::PI * x).sin());
        for (a, b) in dl.values().iter().zip(expect.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        let _ = duality_pair(&dl, &expect).unwrap();
    }
}
