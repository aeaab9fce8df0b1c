//! Exchange economy of `n` agents holding allocations `x_i ∈ ℝ^ℓ` valued at
//! prices `p_i`. The value function of the economy is a generalized Lax-Hopf
//! problem on the doubled state `(x_1..x_n, p_1..p_n)`; with shared prices the
//! state is `(x_1..x_n, p)`.

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use crate::convex::cost::dot;
use crate::convex::{CostField, TerminalCost};
use crate::error::{Error, Result};
use crate::laxhopf::{generalized_lax_hopf_admissible, optimum_certificate, per_unit_time, OuterGrid, ValueResult};
use crate::moderation::SolverConfig;
use crate::trajectory::{cumulated_cost, AdmissibleSpec, RadiusFn, Trajectory, VelocityBound};

/// Slack used when the impetus cost checks the velocity bounds, so that
/// projected velocities sitting on a bound are not rejected by round-off.
const BOUND_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct EconomyState {
    pub allocations: Vec<Vec<f64>>,
    pub prices: Vec<Vec<f64>>,
}

impl EconomyState {
    pub fn new(allocations: Vec<Vec<f64>>, prices: Vec<Vec<f64>>) -> Result<Self> {
        let s = EconomyState { allocations, prices };
        s.check()?;
        Ok(s)
    }

    pub fn agents(&self) -> usize {
        self.allocations.len()
    }

    pub fn dim(&self) -> usize {
        self.allocations.first().map_or(0, Vec::len)
    }

    fn check(&self) -> Result<()> {
        check_pairs(&self.allocations, &self.prices, "allocations", "prices")
    }

    /// Flat doubled state for the given layout.
    pub fn flatten(&self, layout: &EconomyLayout) -> Result<Vec<f64>> {
        self.check()?;
        if self.agents() != layout.agents || self.dim() != layout.dim {
            return Err(Error::Misuse(format!(
                "state has {} agents of dimension {}, layout expects {} of {}",
                self.agents(),
                self.dim(),
                layout.agents,
                layout.dim
            )));
        }
        let mut out: Vec<f64> = self.allocations.concat();
        if layout.shared_prices {
            if self.prices.iter().any(|p| p != &self.prices[0]) {
                return Err(Error::Misuse("shared-price layout needs identical prices".into()));
            }
            out.extend(&self.prices[0]);
        } else {
            out.extend(self.prices.concat());
        }
        Ok(out)
    }
}

fn check_pairs(a: &[Vec<f64>], b: &[Vec<f64>], an: &str, bn: &str) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Misuse(format!("{} {an} but {} {bn}", a.len(), b.len())));
    }
    let dim = a.first().map_or(0, Vec::len);
    if a.iter().chain(b).any(|v| v.len() != dim) {
        return Err(Error::Misuse(format!("{an} and {bn} must share one commodity dimension")));
    }
    Ok(())
}

/// Position of every agent's blocks inside the flat doubled state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EconomyLayout {
    pub agents: usize,
    pub dim: usize,
    pub shared_prices: bool,
}

impl EconomyLayout {
    pub fn new(agents: usize, dim: usize, shared_prices: bool) -> Self {
        EconomyLayout {
            agents,
            dim,
            shared_prices,
        }
    }

    pub fn state_dim(&self) -> usize {
        let price_blocks = if self.shared_prices { 1 } else { self.agents };
        (self.agents + price_blocks) * self.dim
    }

    pub fn x_range(&self, i: usize) -> Range<usize> {
        i * self.dim..(i + 1) * self.dim
    }

    pub fn p_range(&self, i: usize) -> Range<usize> {
        let j = if self.shared_prices { 0 } else { i };
        let base = self.agents * self.dim;
        base + j * self.dim..base + (j + 1) * self.dim
    }

    /// All price coordinates.
    pub fn prices(&self) -> Range<usize> {
        self.agents * self.dim..self.state_dim()
    }

    /// `Σ_i ⟨p_i, v_i⟩ + ⟨q_i, x_i⟩` on flat state `y` and flat velocity `u`.
    fn impetus(&self, y: &[f64], u: &[f64]) -> f64 {
        (0..self.agents)
            .map(|i| {
                let (xr, pr) = (self.x_range(i), self.p_range(i));
                dot(&y[pr.clone()], &u[xr.clone()]) + dot(&u[pr], &y[xr])
            })
            .sum()
    }

    pub fn unflatten(&self, y: &[f64]) -> EconomyState {
        EconomyState {
            allocations: (0..self.agents).map(|i| y[self.x_range(i)].to_vec()).collect(),
            prices: (0..self.agents).map(|i| y[self.p_range(i)].to_vec()).collect(),
        }
    }
}

/// `U = Σ_i ⟨p_i, x_i⟩`.
pub fn patrimonial_value(state: &EconomyState) -> Result<f64> {
    state.check()?;
    Ok(state.allocations.iter().zip(&state.prices).map(|(x, p)| dot(p, x)).sum())
}

/// Velocities of allocations and prices, per agent.
#[derive(Clone, Debug, PartialEq)]
pub struct EconomyVelocities {
    pub allocations: Vec<Vec<f64>>,
    pub prices: Vec<Vec<f64>>,
}

/// `E = Σ_i ⟨p_i, x_i′⟩ + ⟨p_i′, x_i⟩`, the time derivative of the patrimonial value.
pub fn impetus(state: &EconomyState, vel: &EconomyVelocities) -> Result<f64> {
    state.check()?;
    check_pairs(&vel.allocations, &vel.prices, "allocation velocities", "price velocities")?;
    if vel.allocations.len() != state.agents() || vel.allocations.first().map(Vec::len) != state.allocations.first().map(Vec::len) {
        return Err(Error::Misuse("velocities do not match the state dimensions".into()));
    }
    Ok((0..state.agents())
        .map(|i| dot(&state.prices[i], &vel.allocations[i]) + dot(&vel.prices[i], &state.allocations[i]))
        .sum())
}

/// `⟨p′, x⟩`.
pub fn impact_of_price_fluctuation(p_prime: &[f64], x: &[f64]) -> Result<f64> {
    if p_prime.len() != x.len() {
        return Err(Error::Misuse(format!("p′ has {} coordinates, x has {}", p_prime.len(), x.len())));
    }
    Ok(dot(p_prime, x))
}

#[derive(Clone)]
pub struct ImpetusCostSpec {
    pub name: String,
    pub scalar_cost: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    /// Bound on `‖p′‖` over all price coordinates.
    pub gamma_0: RadiusFn,
    /// Bounds on `‖x_i′‖`, one per agent.
    pub gamma: Vec<RadiusFn>,
    pub shared_prices: bool,
}

impl fmt::Debug for ImpetusCostSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ImpetusCostSpec")
            .field("name", &self.name)
            .field("agents", &self.gamma.len())
            .field("shared_prices", &self.shared_prices)
            .finish()
    }
}

impl ImpetusCostSpec {
    pub fn new(name: impl Into<String>, scalar_cost: impl Fn(f64) -> f64 + Send + Sync + 'static, gamma_0: RadiusFn, gamma: Vec<RadiusFn>) -> Self {
        ImpetusCostSpec {
            name: name.into(),
            scalar_cost: Arc::new(scalar_cost),
            gamma_0,
            gamma,
            shared_prices: false,
        }
    }

    pub fn with_shared_prices(mut self) -> Self {
        self.shared_prices = true;
        self
    }

    /// Scalar costs by name: `square` (E²), `half_square` (E²/2), `abs` (|E|).
    pub fn from_catalog(name: &str, gamma_0: RadiusFn, gamma: Vec<RadiusFn>) -> Result<Self> {
        let f: fn(f64) -> f64 = match name {
            "square" => |e| e * e,
            "half_square" => |e| 0.5 * e * e,
            "abs" => f64::abs,
            _ => return Err(Error::InvalidArgument(format!("unknown impetus cost `{name}`"))),
        };
        Ok(ImpetusCostSpec::new(name, f, gamma_0, gamma))
    }

    pub fn agents(&self) -> usize {
        self.gamma.len()
    }

    pub fn layout(&self, dim: usize) -> EconomyLayout {
        EconomyLayout::new(self.agents(), dim, self.shared_prices)
    }

    /// Velocity bounds as norm constraints on the doubled state.
    pub fn admissible(&self, dim: usize) -> AdmissibleSpec {
        let layout = self.layout(dim);
        let mut spec = AdmissibleSpec::unbounded();
        for (i, g) in self.gamma.iter().enumerate() {
            spec = spec.with_bound(VelocityBound::Norm {
                coords: layout.x_range(i),
                radius: g.clone(),
            });
        }
        spec.with_bound(VelocityBound::Norm {
            coords: layout.prices(),
            radius: self.gamma_0.clone(),
        })
    }

    fn bounds_hold(&self, layout: &EconomyLayout, t: f64, u: &[f64]) -> bool {
        let within = |r: Range<usize>, g: &RadiusFn| {
            let bound = g.at(t);
            dot(&u[r.clone()], &u[r]).sqrt() <= bound + BOUND_SLACK * bound.max(1.0)
        };
        self.gamma.iter().enumerate().all(|(i, g)| within(layout.x_range(i), g)) && within(layout.prices(), &self.gamma_0)
    }

    /// The impetus cost as a field over the doubled state.
    pub fn cost_field(&self, dim: usize) -> CostField {
        let layout = self.layout(dim);
        let spec = self.clone();
        CostField::new(format!("impetus({})", self.name), layout.state_dim(), move |t, y, u| {
            if spec.bounds_hold(&layout, t, u) {
                (spec.scalar_cost)(layout.impetus(y, u))
            } else {
                f64::INFINITY
            }
        })
    }
}

/// `l(E)` when every velocity bound holds at `t`, `+∞` otherwise.
pub fn impetus_cost(spec: &ImpetusCostSpec, t: f64, state: &EconomyState, vel: &EconomyVelocities) -> Result<f64> {
    let e = impetus(state, vel)?;
    if state.agents() != spec.agents() {
        return Err(Error::Misuse(format!("spec has {} agents, state has {}", spec.agents(), state.agents())));
    }
    let within = |v: &[f64], g: &RadiusFn| {
        let b = g.at(t);
        dot(v, v).sqrt() <= b + BOUND_SLACK * b.max(1.0)
    };
    let xs_ok = vel.allocations.iter().zip(&spec.gamma).all(|(v, g)| within(v, g));
    let price_norm: f64 = if spec.shared_prices {
        dot(&vel.prices[0], &vel.prices[0])
    } else {
        vel.prices.iter().map(|v| dot(v, v)).sum()
    };
    let p_ok = price_norm.sqrt() <= spec.gamma_0.at(t) + BOUND_SLACK * spec.gamma_0.at(t).max(1.0);
    Ok(if xs_ok && p_ok { (spec.scalar_cost)(e) } else { f64::INFINITY })
}

/// `W(T, x, p)`: the generalized Lax-Hopf value on the doubled state with
/// the impetus cost. `terminal` is evaluated on the flat doubled state.
pub fn economic_value(
    terminal: &TerminalCost,
    spec: &ImpetusCostSpec,
    terminal_time: f64,
    state: &EconomyState,
    grid: &OuterGrid,
    cfg: &SolverConfig,
) -> Result<ValueResult> {
    let dim = state.dim();
    let layout = spec.layout(dim);
    let y = state.flatten(&layout)?;
    if grid.upsilon.dim() != layout.state_dim() {
        return Err(Error::Misuse(format!(
            "Υ lattice must span allocations and prices ({} coordinates), got {}",
            layout.state_dim(),
            grid.upsilon.dim()
        )));
    }
    generalized_lax_hopf_admissible(terminal, &spec.cost_field(dim), terminal_time, &y, grid, &spec.admissible(dim), cfg)
}

/// `|(W(T) − c(T − Ω★, start))/Ω★ − Λ★|` with `Λ★` recomputed from the
/// optimal evolution.
pub fn economy_enrichment_certificate(result: &ValueResult, terminal: &TerminalCost) -> Result<f64> {
    let opt = result.optimizer.as_ref().ok_or(Error::CertificateUndefined)?;
    let tr = opt.trajectory.as_ref().ok_or(Error::CertificateUndefined)?;
    let cost = result
        .cost
        .as_ref()
        .ok_or_else(|| Error::Misuse("value result does not carry its cost field".into()))?;
    let lambda = per_unit_time(cumulated_cost(tr, cost)?, opt.omega);
    optimum_certificate(result, terminal, lambda)
}

/// One row per node and agent: `t, agent, x_1..x_ℓ, p_1..p_ℓ`.
pub fn write_economy_trajectory_csv<W: std::io::Write>(w: W, traj: &Trajectory, layout: &EconomyLayout) -> Result<()> {
    if traj.dim() != layout.state_dim() {
        return Err(Error::Misuse("trajectory does not match the economy layout".into()));
    }
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["t".to_string(), "agent".to_string()];
    header.extend((1..=layout.dim).map(|d| format!("x_{d}")));
    header.extend((1..=layout.dim).map(|d| format!("p_{d}")));
    out.write_record(&header)?;
    for (k, y) in traj.states().iter().enumerate() {
        let t = traj.node_time(k);
        for i in 0..layout.agents {
            let mut row = vec![t.to_string(), i.to_string()];
            row.extend(y[layout.x_range(i)].iter().map(f64::to_string));
            row.extend(y[layout.p_range(i)].iter().map(f64::to_string));
            out.write_record(&row)?;
        }
    }
    out.flush()?;
    Ok(())
}
