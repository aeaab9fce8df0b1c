//! Interest-rate fields, accumulation factors along trajectories, and the
//! discounted moderation / value function.
//!
//! Values are actualized to the terminal time: the factor applied at time `τ`
//! is `exp(∫_τ^T m(s, x(s), x'(s)) ds)` along the candidate trajectory.

use std::fmt;
use std::sync::Arc;

use crate::convex::{CostField, ExtReal, TerminalCost};
use crate::error::{Error, Result};
use crate::laxhopf::{self, OuterGrid, ValueResult};
use crate::moderation::{self, Moderation, ModerationProblem, SolverConfig};
use crate::trajectory::{AdmissibleSpec, Trajectory};

pub type RateFn = dyn Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync;

#[derive(Clone)]
pub enum RateField {
    Zero,
    Constant(f64),
    TimeOnly(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
    General(Arc<RateFn>),
}

impl fmt::Debug for RateField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

impl RateField {
    pub fn general(f: impl Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        RateField::General(Arc::new(f))
    }

    pub fn time_only(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        RateField::TimeOnly(Arc::new(f))
    }

    /// `m(t, x, u) = Σ_d u_d`.
    pub fn transaction() -> Self {
        RateField::general(|_, _, u| u.iter().sum())
    }

    pub fn from_catalog(name: &str, params: &[f64]) -> Result<Self> {
        match (name, params) {
            ("zero", []) => Ok(RateField::Zero),
            ("constant", [r]) => Ok(RateField::Constant(*r)),
            ("time_linear", [a, b]) => {
                let (a, b) = (*a, *b);
                Ok(RateField::time_only(move |t| a + b * t))
            }
            ("transaction", []) => Ok(RateField::transaction()),
            ("zero" | "constant" | "time_linear" | "transaction", _) => Err(Error::InvalidArgument(
                format!("rate `{name}` cannot take {} parameters", params.len()),
            )),
            _ => Err(Error::InvalidArgument(format!("unknown rate `{name}`"))),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            RateField::Zero => "zero".into(),
            RateField::Constant(r) => format!("constant({r})"),
            RateField::TimeOnly(_) => "time_only".into(),
            RateField::General(_) => "general".into(),
        }
    }

    pub fn eval(&self, t: f64, x: &[f64], u: &[f64]) -> f64 {
        match self {
            RateField::Zero => 0.0,
            RateField::Constant(r) => *r,
            RateField::TimeOnly(f) => f(t),
            RateField::General(f) => f(t, x, u),
        }
    }

    /// Whether `m` can depend on the state or the velocity.
    pub(crate) fn depends_on_path(&self) -> bool {
        matches!(self, RateField::General(_))
    }
}

/// Factors `D_k = exp(∫_{t_k}^T m)` at every node of a trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct AccumulationProfile {
    pub times: Vec<f64>,
    pub factors: Vec<f64>,
}

impl AccumulationProfile {
    /// Factor at the window start `T − Ω`.
    pub fn at_start(&self) -> f64 {
        self.factors[0]
    }
}

pub fn accumulate_rate(traj: &Trajectory, rate: &RateField) -> Result<AccumulationProfile> {
    let n = traj.n_steps();
    let dt = traj.step();
    let mids = traj.midpoints();
    let mut factors = vec![1.0; n + 1];
    let mut tail = 0.0;
    for k in (0..n).rev() {
        let (t, x) = &mids[k];
        let m = rate.eval(*t, x, traj.velocity(k));
        if m.is_nan() {
            return Err(Error::Undefined("rate evaluated to NaN"));
        }
        tail += dt * m;
        let f = tail.exp();
        if !f.is_finite() {
            return Err(Error::RateOverflow { node: k });
        }
        factors[k] = f;
    }
    Ok(AccumulationProfile {
        times: (0..=n).map(|k| traj.node_time(k)).collect(),
        factors,
    })
}

/// `Λ_{(l,m)}(T, x, Ω, Υ)`: the moderation with the integrand weighted by the
/// trajectory's own accumulation factor.
#[allow(clippy::too_many_arguments)]
pub fn discounted_moderate(
    cost: &CostField,
    rate: &RateField,
    terminal_time: f64,
    x: &[f64],
    omega: f64,
    upsilon: &[f64],
    admissible: &AdmissibleSpec,
    cfg: &SolverConfig,
) -> Result<Moderation> {
    let prob = ModerationProblem::new(cost.clone(), terminal_time, x.to_vec(), omega, upsilon.to_vec())
        .with_admissible(admissible.clone())
        .with_steps(cfg.n_steps);
    moderation::moderate_with_rate(&prob, rate, cfg)
}

/// Outer minimization of `D(T−Ω)·c(T−Ω, x−ΩΥ) + Ω·Λ_{(l,m)}` where `D` is
/// taken along each cell's own discounted-moderation argmin.
#[allow(clippy::too_many_arguments)]
pub fn discounted_value(
    terminal: &TerminalCost,
    cost: &CostField,
    rate: &RateField,
    terminal_time: f64,
    x: &[f64],
    grid: &OuterGrid,
    admissible: &AdmissibleSpec,
    cfg: &SolverConfig,
) -> Result<ValueResult> {
    let mut res = laxhopf::outer_search(
        terminal,
        &laxhopf::CellModel::Moderated {
            cost,
            rate,
            admissible,
            cfg,
        },
        terminal_time,
        x,
        grid,
    )?;
    res.rate_model = Some(rate.describe());
    if res.optimizer.is_some() && res.omega_star().unwrap_or(0.0) > 0.0 {
        res.certificate_residual = Some(actualized_enrichment_certificate(&res, terminal, rate)?);
    }
    Ok(res)
}

/// `|Λ_{(l,m)}(Ω★, Υ★) − (V − D(T−Ω★)·c(T−Ω★, x★(T−Ω★)))/Ω★|`, with `Λ` and
/// `D` recomputed from the optimal trajectory by independent quadrature.
pub fn actualized_enrichment_certificate(
    result: &ValueResult,
    terminal: &TerminalCost,
    rate: &RateField,
) -> Result<f64> {
    let opt = result.optimizer.as_ref().ok_or(Error::CertificateUndefined)?;
    if opt.omega <= 0.0 {
        return Err(Error::CertificateUndefined);
    }
    let traj = opt.trajectory.as_ref().ok_or(Error::CertificateUndefined)?;
    let cost = result
        .cost
        .as_ref()
        .ok_or_else(|| Error::Misuse("value result does not carry its cost field".into()))?;
    let profile = accumulate_rate(traj, rate)?;
    let weighted = weighted_cumulated_cost(traj, cost, rate)?;
    let lambda = match weighted {
        ExtReal::Finite(w) => w / opt.omega,
        ExtReal::PosInf => return Ok(f64::INFINITY),
    };
    let start_cost = terminal
        .eval(result.terminal_time - opt.omega, &opt.start_state)?
        .finite()
        .ok_or(Error::CertificateUndefined)?;
    let value = result.value.finite().ok_or(Error::CertificateUndefined)?;
    let actualized = (value - profile.at_start() * start_cost) / opt.omega;
    Ok((lambda - actualized).abs())
}

/// `Σ_k Δ·exp(∫_{t̂_k}^T m)·l(t̂_k, x̂_k, u_k)` by midpoint quadrature.
pub fn weighted_cumulated_cost(traj: &Trajectory, cost: &CostField, rate: &RateField) -> Result<ExtReal> {
    let dt = traj.step();
    let mids = traj.midpoints();
    let profile = accumulate_rate(traj, rate)?;
    let mut total = ExtReal::ZERO;
    for (k, (t, x)) in mids.iter().enumerate() {
        let u = traj.velocity(k);
        let m = rate.eval(*t, x, u);
        let w = profile.factors[k + 1] * (0.5 * dt * m).exp();
        let l = crate::convex::eval_cost(cost, *t, x, u)?;
        total = total + l.scale(dt * w)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{build_trajectory, Window};

    fn constant_traj(u: f64, omega: f64, n: usize) -> Trajectory {
        build_trajectory(Window::new(1.0, omega).unwrap(), &[0.0], &vec![vec![u]; n]).unwrap()
    }

    #[test]
    fn zero_rate_has_unit_factors() {
        let p = accumulate_rate(&constant_traj(1.0, 1.0, 10), &RateField::Zero).unwrap();
        assert!(p.factors.iter().all(|&f| f == 1.0));
    }

    #[test]
    fn constant_rate_factor() {
        let tr = constant_traj(0.3, 1.0, 10);
        let p = accumulate_rate(&tr, &RateField::Constant(0.1)).unwrap();
        assert!((p.at_start() - 0.1f64.exp()).abs() < 1e-6);
        assert_eq!(*p.factors.last().unwrap(), 1.0);
        // node at t: e^{r(T−t)}
        assert!((p.factors[5] - (0.1f64 * 0.5).exp()).abs() < 1e-12);
    }

    #[test]
    fn transaction_rate_factor() {
        let (u, omega) = (0.7, 2.0);
        let p = accumulate_rate(&constant_traj(u, omega, 16), &RateField::transaction()).unwrap();
        assert!((p.at_start() - (u * omega).exp()).abs() < 1e-12);
    }

    #[test]
    fn overflow_names_node() {
        let err = accumulate_rate(&constant_traj(0.0, 1.0, 4), &RateField::Constant(1e4)).unwrap_err();
        assert!(matches!(err, Error::RateOverflow { node: 3 }), "{err:?}");
    }

    #[test]
    fn weighted_constant_rate_closed_form() {
        let (r, omega, n) = (0.5, 1.0, 200);
        let tr = constant_traj(1.0, omega, n);
        let w = weighted_cumulated_cost(&tr, &CostField::quadratic(1), &RateField::Constant(r))
            .unwrap()
            .to_f64();
        let exact = 0.5 * ((r * omega).exp() - 1.0) / r;
        assert!((w - exact).abs() < 1e-5, "{w} vs {exact}");
    }

    #[test]
    fn catalog() {
        assert!(matches!(RateField::from_catalog("zero", &[]).unwrap(), RateField::Zero));
        assert!(RateField::from_catalog("constant", &[]).is_err());
        assert!(RateField::from_catalog("bogus", &[]).is_err());
        let r = RateField::from_catalog("time_linear", &[1.0, 2.0]).unwrap();
        assert_eq!(r.eval(0.5, &[], &[]), 2.0);
    }
}
