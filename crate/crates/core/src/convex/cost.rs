//! Transaction-cost fields `l(t, x, u)` and terminal costs `c(t, x)`.

use std::fmt;
use std::sync::Arc;

use crate::convex::ExtReal;
use crate::error::{Error, Result};

/// Raw evaluator signature. Returning `f64::INFINITY` marks a point outside
/// the effective domain.
pub type CostFn = dyn Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync;
pub type TerminalFn = dyn Fn(f64, &[f64]) -> f64 + Send + Sync;

/// Tolerance used by point-indicator terminal costs on both time and state.
pub const INDICATOR_TOL: f64 = 1e-9;

#[derive(Clone)]
pub struct CostField {
    name: String,
    dim: usize,
    evaluator: Arc<CostFn>,
    velocity_only: bool,
    convex_in_u: bool,
    domain_box: Option<Vec<(f64, f64)>>,
}

impl fmt::Debug for CostField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CostField")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("velocity_only", &self.velocity_only)
            .field("convex_in_u", &self.convex_in_u)
            .field("domain_box", &self.domain_box)
            .finish()
    }
}

impl CostField {
    pub fn new<F>(name: impl Into<String>, dim: usize, f: F) -> Self
    where
        F: Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        CostField {
            name: name.into(),
            dim,
            evaluator: Arc::new(f),
            velocity_only: false,
            convex_in_u: false,
            domain_box: None,
        }
    }

    /// Declares that `l` does not depend on `(t, x)`.
    pub fn velocity_only(mut self) -> Self {
        self.velocity_only = true;
        self
    }

    /// Declares `u ↦ l(t, x, u)` convex.
    pub fn convex(mut self) -> Self {
        self.convex_in_u = true;
        self
    }

    /// Restricts the effective domain to a per-coordinate box. Outside the
    /// box [`eval_cost`] returns `+∞` without calling the evaluator.
    pub fn with_domain_box(mut self, bounds: Vec<(f64, f64)>) -> Self {
        assert_eq!(bounds.len(), self.dim, "domain box dimension");
        self.domain_box = Some(bounds);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_velocity_only(&self) -> bool {
        self.velocity_only
    }

    pub fn is_convex_in_u(&self) -> bool {
        self.convex_in_u
    }

    pub fn domain_box(&self) -> Option<&[(f64, f64)]> {
        self.domain_box.as_deref()
    }

    pub fn in_domain_box(&self, u: &[f64]) -> bool {
        match &self.domain_box {
            None => true,
            Some(b) => u.iter().zip(b).all(|(&v, &(lo, hi))| v >= lo && v <= hi),
        }
    }

    /// `l(u) = ‖u‖²/2`.
    pub fn quadratic(dim: usize) -> Self {
        CostField::new("quadratic", dim, |_, _, u| 0.5 * norm_sq(u))
            .velocity_only()
            .convex()
    }

    /// `l(u) = ‖u‖` (Euclidean).
    pub fn abs(dim: usize) -> Self {
        CostField::new("abs", dim, |_, _, u| norm_sq(u).sqrt())
            .velocity_only()
            .convex()
    }

    /// `l(t, u) = (a0 + a1·t)‖u‖²/2`. Convex in `u` when `a0 + a1·t ≥ 0`
    /// on the times of interest; velocity-only iff `a1 = 0`.
    pub fn weighted_quadratic(dim: usize, a0: f64, a1: f64) -> Self {
        let c = CostField::new(format!("weighted_quadratic({a0},{a1})"), dim, move |t, _, u| {
            0.5 * (a0 + a1 * t) * norm_sq(u)
        })
        .convex();
        if a1 == 0.0 {
            c.velocity_only()
        } else {
            c
        }
    }

    /// Indicator of `{0}`: zero at `u = 0`, `+∞` elsewhere.
    pub fn indicator_zero(dim: usize) -> Self {
        CostField::new("indicator_zero", dim, |_, _, u| {
            if u.iter().all(|&v| v == 0.0) {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .velocity_only()
        .convex()
    }

    /// Resolves a catalog name. `params` are positional.
    pub fn from_catalog(name: &str, params: &[f64], dim: usize) -> Result<Self> {
        let want = |n: usize| -> Result<()> {
            if params.len() == n {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "cost `{name}` takes {n} parameters, got {}",
                    params.len()
                )))
            }
        };
        match name {
            "quadratic" => want(0).map(|_| CostField::quadratic(dim)),
            "abs" => want(0).map(|_| CostField::abs(dim)),
            "weighted_quadratic" => {
                want(2).map(|_| CostField::weighted_quadratic(dim, params[0], params[1]))
            }
            "indicator_zero" => want(0).map(|_| CostField::indicator_zero(dim)),
            _ => Err(Error::InvalidArgument(format!("unknown cost `{name}`"))),
        }
    }

    pub(crate) fn raw(&self, t: f64, x: &[f64], u: &[f64]) -> f64 {
        if self.in_domain_box(u) {
            (self.evaluator)(t, x, u)
        } else {
            f64::INFINITY
        }
    }
}

/// Evaluates `l(t, x, u)`; `+∞` whenever `u` leaves the domain box.
pub fn eval_cost(cost: &CostField, t: f64, x: &[f64], u: &[f64]) -> Result<ExtReal> {
    let v = cost.raw(t, x, u);
    if v.is_nan() || v == f64::NEG_INFINITY {
        return Err(Error::EvaluationFault {
            t,
            x: x.to_vec(),
            u: u.to_vec(),
        });
    }
    Ok(ExtReal::new(v).expect("checked above"))
}

/// A point `(time, state)` where a terminal cost is known to be finite. The
/// outer search adds the exact `(Ω, Υ)` cell reaching each anchor, which is
/// the only way to hit the support of point indicators.
#[derive(Clone, Debug, PartialEq)]
pub struct Anchor {
    pub time: f64,
    pub state: Vec<f64>,
}

#[derive(Clone)]
pub struct TerminalCost {
    name: String,
    evaluator: Arc<TerminalFn>,
    anchors: Vec<Anchor>,
}

impl fmt::Debug for TerminalCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TerminalCost")
            .field("name", &self.name)
            .field("anchors", &self.anchors)
            .finish()
    }
}

impl TerminalCost {
    pub fn new<F>(name: impl Into<String>, f: F) -> Self
    where
        F: Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    {
        TerminalCost {
            name: name.into(),
            evaluator: Arc::new(f),
            anchors: Vec::new(),
        }
    }

    pub fn with_anchor(mut self, time: f64, state: Vec<f64>) -> Self {
        self.anchors.push(Anchor { time, state });
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn anchors(&self) -> &[Anchor] {
        &self.anchors
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> Result<ExtReal> {
        let v = (self.evaluator)(t, x);
        if v.is_nan() || v == f64::NEG_INFINITY {
            return Err(Error::EvaluationFault {
                t,
                x: x.to_vec(),
                u: Vec::new(),
            });
        }
        Ok(ExtReal::new(v).expect("checked above"))
    }

    /// Membership in the departure tube `C(t) = {x : c(t, x) < ∞}`.
    pub fn in_tube(&self, t: f64, x: &[f64]) -> bool {
        (self.evaluator)(t, x) < f64::INFINITY
    }

    /// Zero at `(t0, y0)` (within [`INDICATOR_TOL`]), `+∞` elsewhere.
    pub fn indicator_point(t0: f64, y0: Vec<f64>) -> Self {
        let target = y0.clone();
        TerminalCost::new("indicator_point", move |t, y| {
            let hit = (t - t0).abs() <= INDICATOR_TOL
                && y.len() == target.len()
                && y.iter().zip(&target).all(|(a, b)| (a - b).abs() <= INDICATOR_TOL);
            if hit {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .with_anchor(t0, y0)
    }

    /// Indicator of `(0, 0)`.
    pub fn indicator_origin(dim: usize) -> Self {
        let mut c = TerminalCost::indicator_point(0.0, vec![0.0; dim]);
        c.name = "indicator_origin".into();
        c
    }

    /// `c(t, y) = scale·‖y‖²` for every `t`.
    pub fn squared_norm(scale: f64) -> Self {
        TerminalCost::new("squared_norm", move |_, y| scale * norm_sq(y))
    }

    pub fn zero() -> Self {
        TerminalCost::new("zero", |_, _| 0.0)
    }

    pub fn from_catalog(name: &str, params: &[f64], dim: usize) -> Result<Self> {
        match (name, params.len()) {
            ("indicator_origin", 0) => Ok(TerminalCost::indicator_origin(dim)),
            ("indicator_point", n) if n == dim + 1 => {
                Ok(TerminalCost::indicator_point(params[0], params[1..].to_vec()))
            }
            ("squared_norm", 0) => Ok(TerminalCost::squared_norm(1.0)),
            ("squared_norm", 1) => Ok(TerminalCost::squared_norm(params[0])),
            ("zero", 0) => Ok(TerminalCost::zero()),
            ("indicator_origin" | "indicator_point" | "squared_norm" | "zero", n) => Err(
                Error::InvalidArgument(format!("terminal cost `{name}` cannot take {n} parameters")),
            ),
            _ => Err(Error::InvalidArgument(format!("unknown terminal cost `{name}`"))),
        }
    }
}

pub(crate) fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn catalog_values() {
        let q = CostField::quadratic(1);
        assert_eq!(eval_cost(&q, 0.0, &[0.0], &[2.0]).unwrap(), ExtReal::Finite(2.0));

        let boxed = CostField::quadratic(1).with_domain_box(vec![(-1.0, 1.0)]);
        assert_eq!(eval_cost(&boxed, 0.0, &[0.0], &[2.0]).unwrap(), ExtReal::PosInf);

        let w = CostField::weighted_quadratic(1, 1.0, 1.0);
        assert_eq!(eval_cost(&w, 1.0, &[0.0], &[1.0]).unwrap(), ExtReal::Finite(1.0));
        assert!(!w.is_velocity_only());

        let ind = CostField::indicator_zero(1);
        assert_eq!(eval_cost(&ind, 0.0, &[0.0], &[0.0]).unwrap(), ExtReal::ZERO);
        assert_eq!(eval_cost(&ind, 0.0, &[0.0], &[1e-300]).unwrap(), ExtReal::PosInf);
    }

    #[test]
    fn nan_reports_the_point() {
        let bad = CostField::new("bad", 1, |_, _, _| f64::NAN);
        match eval_cost(&bad, 0.5, &[1.0], &[2.0]) {
            Err(Error::EvaluationFault { t, x, u }) => {
                assert_eq!(t, 0.5);
                assert_eq!(x, vec![1.0]);
                assert_eq!(u, vec![2.0]);
            }
            other => panic!("expected evaluation fault, got {other:?}"),
        }
    }

    #[test]
    fn unknown_catalog_names() {
        assert!(CostField::from_catalog("cubical", &[], 1).is_err());
        assert!(CostField::from_catalog("weighted_quadratic", &[1.0], 1).is_err());
        assert!(TerminalCost::from_catalog("nope", &[], 1).is_err());
        assert!(TerminalCost::from_catalog("indicator_point", &[0.0, 1.0], 1).is_ok());
    }

    #[test]
    fn indicator_tube() {
        let c = TerminalCost::indicator_origin(1);
        assert!(c.in_tube(0.0, &[0.0]));
        assert!(!c.in_tube(0.1, &[0.0]));
        assert!(!c.in_tube(0.0, &[0.1]));
        assert_eq!(c.anchors().len(), 1);
    }

    proptest! {
        #[test]
        fn velocity_only_catalog_ignores_t_and_x(
            t1 in -5.0f64..5.0, t2 in -5.0f64..5.0,
            x1 in -5.0f64..5.0, x2 in -5.0f64..5.0,
            u in -5.0f64..5.0,
        ) {
            for cost in [CostField::quadratic(1), CostField::abs(1), CostField::weighted_quadratic(1, 2.0, 0.0)] {
                prop_assert!(cost.is_velocity_only());
                prop_assert_eq!(
                    eval_cost(&cost, t1, &[x1], &[u]).unwrap(),
                    eval_cost(&cost, t2, &[x2], &[u]).unwrap()
                );
            }
        }

        #[test]
        fn outside_box_is_infinite(u in -10.0f64..10.0) {
            let cost = CostField::quadratic(1).with_domain_box(vec![(-1.0, 1.0)]);
            let v = eval_cost(&cost, 0.0, &[0.0], &[u]).unwrap();
            prop_assert_eq!(v.is_infinite(), u.abs() > 1.0);
        }
    }
}
