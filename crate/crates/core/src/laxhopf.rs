//! Outer minimization over apertures and average transactions.
//!
//! Every value function in this crate is computed as
//! `V(T, x) = min_{Ω, Υ} D·c(T − Ω, x − ΩΥ) + Ω·Λ(T, x, Ω, Υ)` where the
//! inner `Λ` is either the cost itself (classic formula), the moderation, or
//! the discounted moderation, and `D` is the accumulation factor (1 without
//! interest rates). Cells are evaluated independently, then folded with a
//! deterministic tie-break (smallest `Ω`, then lexicographically smallest `Υ`),
//! and optionally polished by a coordinate pattern search.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::convex::{eval_cost, CostField, ExtReal, TerminalCost};
use crate::discounted::{accumulate_rate, RateField};
use crate::error::{Error, Result};
use crate::exec;
use crate::grid::{Axis, Lattice};
use crate::moderation::{moderate_with_rate, ModerationProblem, SolverConfig};
use crate::trajectory::{cumulated_cost, enrichment, AdmissibleSpec, Trajectory, Window};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub shrink: f64,
    /// Number of unsuccessful polls (each shrinking the steps) before stopping.
    pub rounds: usize,
}

impl Default for Refinement {
    fn default() -> Self {
        Refinement {
            shrink: 0.5,
            rounds: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OuterGrid {
    /// Sorted apertures, always containing 0.
    pub omega_values: Vec<f64>,
    pub upsilon: Lattice,
    pub refinement: Option<Refinement>,
    /// Steps used for straight-line optimal trajectories of the classic formula.
    pub trajectory_steps: usize,
}

impl OuterGrid {
    /// Apertures `{0} ∪ {k·Ω_max/n : k = 1..n}` and the given lattice, with
    /// default pattern-search refinement.
    pub fn uniform(omega_max: f64, n_omega: usize, upsilon: Lattice) -> Self {
        let mut omega_values = vec![0.0];
        omega_values.extend((1..=n_omega).map(|k| {
            if k == n_omega {
                omega_max
            } else {
                omega_max * k as f64 / n_omega as f64
            }
        }));
        OuterGrid {
            omega_values,
            upsilon,
            refinement: Some(Refinement::default()),
            trajectory_steps: 100,
        }
    }

    pub fn without_refinement(mut self) -> Self {
        self.refinement = None;
        self
    }

    pub fn with_refinement(mut self, r: Refinement) -> Self {
        self.refinement = Some(r);
        self
    }

    pub fn omega_max(&self) -> f64 {
        self.omega_values.iter().copied().fold(0.0, f64::max)
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.omega_values.is_empty() || self.upsilon.is_empty() {
            return Err(Error::Misuse("outer grid is empty".into()));
        }
        if !self.omega_values.contains(&0.0) {
            return Err(Error::Misuse("outer grid must contain the zero aperture".into()));
        }
        if self.omega_values.iter().any(|o| !o.is_finite() || *o < 0.0)
            || self.omega_values.windows(2).any(|w| w[0] > w[1])
        {
            return Err(Error::Misuse("apertures must be sorted, finite and nonnegative".into()));
        }
        if self.upsilon.dim() != dim {
            return Err(Error::Misuse(format!(
                "Υ lattice has dimension {}, state has {dim}",
                self.upsilon.dim()
            )));
        }
        if self.trajectory_steps == 0 {
            return Err(Error::Misuse("trajectory_steps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Optimizer {
    pub omega: f64,
    pub upsilon: Vec<f64>,
    /// `x − Ω★·Υ★`.
    pub start_state: Vec<f64>,
    pub lambda: ExtReal,
    pub start_cost: ExtReal,
    /// Accumulation factor applied to the start cost (1 without rates).
    pub discount: f64,
    pub trajectory: Option<Trajectory>,
}

#[derive(Clone, Debug)]
pub struct ValueResult {
    pub terminal_time: f64,
    pub state: Vec<f64>,
    pub value: ExtReal,
    pub optimizer: Option<Optimizer>,
    pub certificate_residual: Option<f64>,
    pub rate_model: Option<String>,
    /// Cost field the inner problem used, kept for certificates and profiles.
    pub cost: Option<CostField>,
}

impl ValueResult {
    pub fn omega_star(&self) -> Option<f64> {
        self.optimizer.as_ref().map(|o| o.omega)
    }

    pub fn upsilon_star(&self) -> Option<&[f64]> {
        self.optimizer.as_ref().map(|o| o.upsilon.as_slice())
    }

    pub fn trajectory(&self) -> Option<&Trajectory> {
        self.optimizer.as_ref().and_then(|o| o.trajectory.as_ref())
    }

    pub fn record(&self) -> ValueRecord {
        ValueRecord {
            value: self.value,
            omega_star: self.omega_star(),
            upsilon_star: self.upsilon_star().map(<[f64]>::to_vec),
            start_state: self.optimizer.as_ref().map(|o| o.start_state.clone()),
            certificate_residual: self.certificate_residual,
            rate_model: self.rate_model.clone(),
        }
    }

    pub fn write_json<W: std::io::Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, &self.record())?;
        Ok(())
    }
}

/// JSON form of a [`ValueResult`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueRecord {
    pub value: ExtReal,
    pub omega_star: Option<f64>,
    pub upsilon_star: Option<Vec<f64>>,
    pub start_state: Option<Vec<f64>>,
    pub certificate_residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_model: Option<String>,
}

/// How the inner term of a cell is obtained.
pub(crate) enum CellModel<'a> {
    Classic {
        cost: &'a CostField,
        steps: usize,
    },
    Moderated {
        cost: &'a CostField,
        rate: &'a RateField,
        admissible: &'a AdmissibleSpec,
        cfg: &'a SolverConfig,
    },
}

impl CellModel<'_> {
    fn cost(&self) -> &CostField {
        match self {
            CellModel::Classic { cost, .. } | CellModel::Moderated { cost, .. } => cost,
        }
    }
}

#[derive(Clone, Debug)]
struct Cell {
    omega: f64,
    upsilon: Vec<f64>,
    objective: ExtReal,
    lambda: ExtReal,
    start_state: Vec<f64>,
    start_cost: ExtReal,
    discount: f64,
    trajectory: Option<Trajectory>,
}

fn cell_order(a: &Cell, b: &Cell) -> Ordering {
    a.objective
        .cmp(&b.objective)
        .then(a.omega.total_cmp(&b.omega))
        .then_with(|| {
            a.upsilon
                .iter()
                .zip(&b.upsilon)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
}

fn evaluate_cell(
    terminal: &TerminalCost,
    model: &CellModel<'_>,
    terminal_time: f64,
    x: &[f64],
    omega: f64,
    upsilon: Vec<f64>,
) -> Result<Cell> {
    if omega == 0.0 {
        let c = terminal.eval(terminal_time, x)?;
        return Ok(Cell {
            omega,
            upsilon: vec![0.0; x.len()],
            objective: c,
            lambda: ExtReal::ZERO,
            start_state: x.to_vec(),
            start_cost: c,
            discount: 1.0,
            trajectory: None,
        });
    }
    let start_state: Vec<f64> = x.iter().zip(&upsilon).map(|(xi, ui)| xi - omega * ui).collect();
    let start_cost = terminal.eval(terminal_time - omega, &start_state)?;
    let mut cell = Cell {
        omega,
        upsilon,
        objective: ExtReal::PosInf,
        lambda: ExtReal::PosInf,
        start_state,
        start_cost,
        discount: 1.0,
        trajectory: None,
    };
    if start_cost.is_infinite() {
        return Ok(cell);
    }
    match model {
        CellModel::Classic { cost, steps } => {
            cell.lambda = eval_cost(cost, terminal_time, x, &cell.upsilon)?;
            if cell.lambda.is_finite() {
                let flat: Vec<f64> = (0..*steps).flat_map(|_| cell.upsilon.iter().copied()).collect();
                cell.trajectory = Some(Trajectory::from_flat(
                    Window::new(terminal_time, omega)?,
                    x.to_vec(),
                    flat,
                )?);
            }
        }
        CellModel::Moderated {
            cost,
            rate,
            admissible,
            cfg,
        } => {
            let prob = ModerationProblem::new((*cost).clone(), terminal_time, x.to_vec(), omega, cell.upsilon.clone())
                .with_admissible((*admissible).clone())
                .with_steps(cfg.n_steps);
            let m = moderate_with_rate(&prob, rate, cfg)?;
            cell.lambda = m.lambda;
            if let Some(tr) = &m.argmin {
                cell.discount = match accumulate_rate(tr, rate) {
                    Ok(p) => p.at_start(),
                    Err(Error::RateOverflow { .. }) => return Ok(cell),
                    Err(e) => return Err(e),
                };
            }
            cell.trajectory = m.argmin;
        }
    }
    if cell.lambda.is_finite() {
        cell.objective = start_cost.scale(cell.discount)? + cell.lambda.scale(omega)?;
    }
    Ok(cell)
}

pub(crate) fn outer_search(
    terminal: &TerminalCost,
    model: &CellModel<'_>,
    terminal_time: f64,
    x: &[f64],
    grid: &OuterGrid,
) -> Result<ValueResult> {
    grid.validate(x.len())?;
    let omega_max = grid.omega_max();
    let mut candidates: Vec<(f64, Vec<f64>)> = vec![(0.0, vec![0.0; x.len()])];
    for &omega in grid.omega_values.iter().filter(|o| **o > 0.0) {
        candidates.extend(grid.upsilon.points().map(|u| (omega, u)));
    }
    for anchor in terminal.anchors() {
        let omega = terminal_time - anchor.time;
        if omega > 0.0 && omega <= omega_max && anchor.state.len() == x.len() {
            let ups = x.iter().zip(&anchor.state).map(|(a, b)| (a - b) / omega).collect();
            candidates.push((omega, ups));
        }
    }
    let evaluate = |batch: &[(f64, Vec<f64>)]| -> Result<Vec<Cell>> {
        exec::map(batch, |(omega, ups)| {
            evaluate_cell(terminal, model, terminal_time, x, *omega, ups.clone())
        })
        .into_iter()
        .collect()
    };
    let cells = evaluate(&candidates)?;
    let (zero, positive): (Vec<Cell>, Vec<Cell>) = cells.into_iter().partition(|c| c.omega == 0.0);
    let mut best = positive.into_iter().min_by(cell_order);

    // Υ has no effect at Ω = 0, so polling from there cannot move: the search
    // starts from the best positive aperture and meets Ω = 0 again at the end.
    let start = match &grid.refinement {
        Some(refine) if best.as_ref().is_some_and(|b| b.objective.is_finite()) => best.take().map(|b| (refine, b)),
        _ => None,
    };
    if let Some((refine, mut cur)) = start {
        let positive: Vec<f64> = grid.omega_values.iter().copied().filter(|o| *o > 0.0).collect();
        let mut d_omega = if positive.is_empty() {
            0.0
        } else {
            omega_max / positive.len() as f64
        };
        let mut d_ups: Vec<f64> = grid
            .upsilon
            .axes
            .iter()
            .map(|a: &Axis| if a.count > 1 { a.step } else { 0.1 * a.lo.abs().max(1.0) })
            .collect();
        let mut failures = 0;
        let mut polls = 0;
        while failures < refine.rounds && polls < 10 * refine.rounds.max(1) {
            polls += 1;
            let mut probes: Vec<(f64, Vec<f64>)> = Vec::new();
            if cur.omega > 0.0 || d_omega > 0.0 {
                for s in [-1.0, 1.0] {
                    let o = (cur.omega + s * d_omega).min(omega_max);
                    if o >= 0.0 && o != cur.omega {
                        probes.push((o, cur.upsilon.clone()));
                    }
                }
            }
            if cur.omega > 0.0 {
                for (d, &h) in d_ups.iter().enumerate() {
                    for s in [-1.0, 1.0] {
                        let mut u = cur.upsilon.clone();
                        u[d] += s * h;
                        probes.push((cur.omega, u));
                    }
                }
            }
            let polled = evaluate(&probes)?;
            match polled.into_iter().min_by(cell_order) {
                Some(c) if c.objective < cur.objective => cur = c,
                _ => {
                    failures += 1;
                    d_omega *= refine.shrink;
                    d_ups.iter_mut().for_each(|h| *h *= refine.shrink);
                }
            }
        }
        best = Some(cur);
    }
    let best = zero
        .into_iter()
        .chain(best)
        .min_by(cell_order)
        .expect("the zero-aperture cell is always a candidate");

    let value = best.objective;
    let optimizer = value.is_finite().then_some(Optimizer {
        omega: best.omega,
        upsilon: best.upsilon,
        start_state: best.start_state,
        lambda: best.lambda,
        start_cost: best.start_cost,
        discount: best.discount,
        trajectory: best.trajectory,
    });
    Ok(ValueResult {
        terminal_time,
        state: x.to_vec(),
        value,
        optimizer,
        certificate_residual: None,
        rate_model: None,
        cost: Some(model.cost().clone()),
    })
}

/// `V(T, x) = min_{Ω, Υ} c(T − Ω, x − ΩΥ) + Ω·l(Υ)` for a convex cost of the
/// velocity alone. The optimal evolution is the straight line `x − Υ★(T − t)`.
pub fn classic_lax_hopf(
    terminal: &TerminalCost,
    cost: &CostField,
    terminal_time: f64,
    x: &[f64],
    grid: &OuterGrid,
) -> Result<ValueResult> {
    if !(cost.is_velocity_only() && cost.is_convex_in_u()) {
        return Err(Error::Misuse(format!(
            "the classic formula needs a convex velocity-only cost, `{}` is not declared so",
            cost.name()
        )));
    }
    let model = CellModel::Classic {
        cost,
        steps: grid.trajectory_steps,
    };
    let mut res = outer_search(terminal, &model, terminal_time, x, grid)?;
    if let Some(opt) = res.optimizer.as_ref().filter(|o| o.omega > 0.0) {
        let l = eval_cost(cost, terminal_time, x, &opt.upsilon)?;
        res.certificate_residual = Some(optimum_certificate(&res, terminal, l)?);
    }
    Ok(res)
}

/// `V(T, x) = min_{Ω, Υ} c(T − Ω, x − ΩΥ) + Ω·Λ_l(T, x, Ω, Υ)`.
pub fn generalized_lax_hopf(
    terminal: &TerminalCost,
    cost: &CostField,
    terminal_time: f64,
    x: &[f64],
    grid: &OuterGrid,
    cfg: &SolverConfig,
) -> Result<ValueResult> {
    generalized_lax_hopf_admissible(terminal, cost, terminal_time, x, grid, &AdmissibleSpec::unbounded(), cfg)
}

/// [`generalized_lax_hopf`] with explicit velocity bounds on the evolutions.
pub fn generalized_lax_hopf_admissible(
    terminal: &TerminalCost,
    cost: &CostField,
    terminal_time: f64,
    x: &[f64],
    grid: &OuterGrid,
    admissible: &AdmissibleSpec,
    cfg: &SolverConfig,
) -> Result<ValueResult> {
    let rate = RateField::Zero;
    let model = CellModel::Moderated {
        cost,
        rate: &rate,
        admissible,
        cfg,
    };
    let mut res = outer_search(terminal, &model, terminal_time, x, grid)?;
    let lambda = match res.optimizer.as_ref() {
        Some(opt) if opt.omega > 0.0 => {
            let tr = opt.trajectory.as_ref().ok_or(Error::CertificateUndefined)?;
            Some(per_unit_time(cumulated_cost(tr, cost)?, opt.omega))
        }
        _ => None,
    };
    if let Some(l) = lambda {
        res.certificate_residual = Some(optimum_certificate(&res, terminal, l)?);
    }
    Ok(res)
}

/// `total / Ω`, keeping `+∞`.
pub(crate) fn per_unit_time(total: ExtReal, omega: f64) -> ExtReal {
    match total {
        ExtReal::Finite(v) => ExtReal::Finite(v / omega),
        ExtReal::PosInf => ExtReal::PosInf,
    }
}

/// `|(V − c(T − Ω★, x★(T − Ω★)))/Ω★ − Λ★|`: the enrichment over the optimal
/// window against the moderated cost of the optimal average transaction.
pub fn optimum_certificate(result: &ValueResult, terminal: &TerminalCost, moderation_lambda: ExtReal) -> Result<f64> {
    let opt = result.optimizer.as_ref().ok_or(Error::CertificateUndefined)?;
    if opt.omega <= 0.0 {
        return Err(Error::CertificateUndefined);
    }
    let start = terminal
        .eval(result.terminal_time - opt.omega, &opt.start_state)?
        .finite()
        .ok_or(Error::CertificateUndefined)?;
    let value = result.value.finite().ok_or(Error::CertificateUndefined)?;
    let lambda = match moderation_lambda {
        ExtReal::Finite(l) => l,
        ExtReal::PosInf => return Ok(f64::INFINITY),
    };
    Ok((enrichment(start, value, opt.omega)? - lambda).abs())
}

/// Running value `t ↦ c(T−Ω★, x★(T−Ω★)) + ∫_{T−Ω★}^t l` at every node of the
/// optimal trajectory.
pub fn dynamic_value_profile(result: &ValueResult, terminal: &TerminalCost, cost: &CostField) -> Result<Vec<(f64, f64)>> {
    let opt = result
        .optimizer
        .as_ref()
        .filter(|o| o.omega > 0.0)
        .ok_or_else(|| Error::Misuse("value profile needs an optimizer with positive aperture".into()))?;
    let tr = opt
        .trajectory
        .as_ref()
        .ok_or_else(|| Error::Misuse("value result carries no trajectory".into()))?;
    let start = tr.start_state();
    let mut v = terminal
        .eval(tr.window().start_time(), &start)?
        .finite()
        .ok_or_else(|| Error::Misuse("start cost is infinite".into()))?;
    let dt = tr.step();
    let mut out = Vec::with_capacity(tr.n_steps() + 1);
    out.push((tr.node_time(0), v));
    for (k, (t, x)) in tr.midpoints().into_iter().enumerate() {
        let l = eval_cost(cost, t, &x, tr.velocity(k))?
            .finite()
            .ok_or_else(|| Error::Misuse("optimal trajectory has an infinite step".into()))?;
        v += dt * l;
        out.push((tr.node_time(k + 1), v));
    }
    Ok(out)
}

/// Willingness-to-pay valuation with velocities bounded by `bound` and only a
/// start cost: `min c(T − Ω, y)` over the grid states (plus `x` itself) with
/// `‖y − x‖ ≤ Ω·bound`. Zero aperture returns `c(T, x)`.
pub fn wtp_value(
    terminal: &TerminalCost,
    bound: f64,
    terminal_time: f64,
    x: &[f64],
    omega: f64,
    state_grid: &Lattice,
) -> Result<ExtReal> {
    if !(omega >= 0.0) || !(bound >= 0.0) {
        return Err(Error::InvalidArgument(format!("wtp needs Ω ≥ 0 and bound ≥ 0 (Ω={omega}, bound={bound})")));
    }
    if omega == 0.0 {
        return terminal.eval(terminal_time, x);
    }
    let t0 = terminal_time - omega;
    let reach = omega * bound;
    let mut best = terminal.eval(t0, x)?;
    for y in state_grid.points() {
        let dist = y.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if dist <= reach * (1.0 + 1e-12) {
            best = best.min(terminal.eval(t0, &y)?);
        }
    }
    Ok(best)
}

/// Rows `T, x_1..x_ℓ, V` of a value-surface sweep.
pub fn write_value_surface_csv<W: std::io::Write>(w: W, rows: &[(f64, Vec<f64>, ExtReal)]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let dim = rows.first().map_or(1, |r| r.1.len());
    let mut header = vec!["T".to_string()];
    header.extend((1..=dim).map(|d| format!("x_{d}")));
    header.push("V".into());
    out.write_record(&header)?;
    for (t, x, v) in rows {
        let mut row = vec![t.to_string()];
        row.extend(x.iter().map(f64::to_string));
        row.push(v.to_string());
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}
