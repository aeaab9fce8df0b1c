//! Moderated transaction costs `Λ_l(T, x, Ω, Υ)`: the smallest normalized
//! cumulated cost among evolutions reaching `x` at `T` whose average velocity
//! over `[T − Ω, T]` is `Υ`.
//!
//! The inner problem is transcribed into `N` piecewise-constant velocities.
//! The average constraint is one affine equation per coordinate, so its
//! projection is closed form (subtract the mean residual). Velocity bounds are
//! handled by alternating clip and projection. Descent is projected gradient
//! with Barzilai-Borwein step lengths and Armijo backtracking, restarted from
//! the constant trajectory and from `restarts` perturbed copies of it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::convex::cost::norm_sq;
use crate::convex::{CostField, ExtReal};
use crate::discounted::RateField;
use crate::error::{Error, Result};
use crate::exec;
use crate::grid::Lattice;
use crate::trajectory::{AdmissibleSpec, Trajectory, VelocityBound, Window};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Steps of the transcription grid.
    pub n_steps: usize,
    pub max_iters: usize,
    pub initial_step: f64,
    pub armijo: f64,
    pub max_backtracks: usize,
    /// Stop when the projected-gradient RMS falls below this.
    pub grad_tol: f64,
    /// Relative central-difference step.
    pub fd_step: f64,
    /// Perturbed starts in addition to the constant trajectory.
    pub restarts: usize,
    pub max_alternations: usize,
    pub seed: u64,
    /// Allowed undershoot of `Λ` below `l(Υ)` for convex velocity-only costs.
    pub tol_quadrature: f64,
    /// Allowed overshoot of the solver above the true discretized infimum.
    pub tol_solver: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            n_steps: 100,
            max_iters: 200,
            initial_step: 1.0,
            armijo: 1e-4,
            max_backtracks: 40,
            grad_tol: 1e-8,
            fd_step: 1e-6,
            restarts: 8,
            max_alternations: 50,
            seed: 0,
            tol_quadrature: 1e-9,
            tol_solver: 1e-6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ModerationProblem {
    pub cost: CostField,
    pub terminal_time: f64,
    pub terminal_state: Vec<f64>,
    pub omega: f64,
    pub upsilon: Vec<f64>,
    pub n_steps: usize,
    pub admissible: AdmissibleSpec,
}

impl ModerationProblem {
    pub fn new(cost: CostField, terminal_time: f64, terminal_state: Vec<f64>, omega: f64, upsilon: Vec<f64>) -> Self {
        ModerationProblem {
            cost,
            terminal_time,
            terminal_state,
            omega,
            upsilon,
            n_steps: SolverConfig::default().n_steps,
            admissible: AdmissibleSpec::unbounded(),
        }
    }

    pub fn with_steps(mut self, n: usize) -> Self {
        self.n_steps = n;
        self
    }

    pub fn with_admissible(mut self, admissible: AdmissibleSpec) -> Self {
        self.admissible = admissible;
        self
    }
}

#[derive(Clone, Debug)]
pub struct Moderation {
    /// `+∞` when no admissible trajectory with average `Υ` was found.
    pub lambda: ExtReal,
    pub argmin: Option<Trajectory>,
}

pub fn moderate(prob: &ModerationProblem, cfg: &SolverConfig) -> Result<Moderation> {
    moderate_with_rate(prob, &RateField::Zero, cfg)
}

pub(crate) fn moderate_with_rate(prob: &ModerationProblem, rate: &RateField, cfg: &SolverConfig) -> Result<Moderation> {
    let tr = Transcription::new(prob, rate, cfg)?;
    tr.solve()
}

/// `Λ − l(Υ)` for a convex velocity-only cost, which must lie in
/// `[−tol_quadrature, tol_solver]`.
pub fn jensen_gap(
    cost: &CostField,
    terminal_time: f64,
    x: &[f64],
    omega: f64,
    upsilon: &[f64],
    cfg: &SolverConfig,
) -> Result<f64> {
    if !(cost.is_velocity_only() && cost.is_convex_in_u()) {
        return Err(Error::Misuse(format!(
            "jensen_gap needs a velocity-only convex cost, `{}` is not declared so",
            cost.name()
        )));
    }
    raw_gap(cost, terminal_time, x, omega, upsilon, cfg)
}

pub(crate) fn raw_gap(
    cost: &CostField,
    terminal_time: f64,
    x: &[f64],
    omega: f64,
    upsilon: &[f64],
    cfg: &SolverConfig,
) -> Result<f64> {
    let prob = ModerationProblem::new(cost.clone(), terminal_time, x.to_vec(), omega, upsilon.to_vec())
        .with_steps(cfg.n_steps);
    let m = moderate(&prob, cfg)?;
    let l = crate::convex::eval_cost(cost, terminal_time, x, upsilon)?;
    match (m.lambda, l) {
        (ExtReal::Finite(a), ExtReal::Finite(b)) => Ok(a - b),
        (ExtReal::PosInf, ExtReal::PosInf) => Ok(0.0),
        _ => Err(Error::InvalidArgument(format!(
            "Υ={upsilon:?}: moderation {} and cost {} disagree on finiteness",
            m.lambda, l
        ))),
    }
}

#[derive(Clone, Debug)]
pub struct ModerationTable {
    pub dim: usize,
    pub omega_grid: Vec<f64>,
    pub upsilon_grid: Vec<Vec<f64>>,
    /// `values[i][j]` for `omega_grid[i]`, `upsilon_grid[j]`.
    pub values: Vec<Vec<ExtReal>>,
    pub argmins: Vec<Vec<Option<Trajectory>>>,
}

pub fn build_moderation_table(
    cost: &CostField,
    terminal_time: f64,
    x: &[f64],
    omega_grid: &[f64],
    upsilon_grid: &Lattice,
    cfg: &SolverConfig,
) -> Result<ModerationTable> {
    if omega_grid.is_empty() || upsilon_grid.is_empty() {
        return Err(Error::InvalidArgument("moderation table grids must be non-empty".into()));
    }
    let upsilons: Vec<Vec<f64>> = upsilon_grid.points().collect();
    let jobs: Vec<(usize, usize)> = (0..omega_grid.len())
        .flat_map(|i| (0..upsilons.len()).map(move |j| (i, j)))
        .collect();
    let results = exec::map(&jobs, |&(i, j)| {
        let prob = ModerationProblem::new(cost.clone(), terminal_time, x.to_vec(), omega_grid[i], upsilons[j].clone())
            .with_steps(cfg.n_steps);
        moderate(&prob, cfg)
    });
    let mut values = vec![Vec::with_capacity(upsilons.len()); omega_grid.len()];
    let mut argmins = vec![Vec::with_capacity(upsilons.len()); omega_grid.len()];
    for ((i, _), r) in jobs.into_iter().zip(results) {
        let m = r?;
        values[i].push(m.lambda);
        argmins[i].push(m.argmin);
    }
    Ok(ModerationTable {
        dim: upsilon_grid.dim(),
        omega_grid: omega_grid.to_vec(),
        upsilon_grid: upsilons,
        values,
        argmins,
    })
}

impl ModerationTable {
    /// Columns `omega, upsilon_1..upsilon_ℓ, lambda`; `+∞` is written `inf`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["omega".to_string()];
        header.extend((1..=self.dim).map(|d| format!("upsilon_{d}")));
        header.push("lambda".into());
        out.write_record(&header)?;
        for (i, omega) in self.omega_grid.iter().enumerate() {
            for (j, ups) in self.upsilon_grid.iter().enumerate() {
                let mut row = vec![omega.to_string()];
                row.extend(ups.iter().map(f64::to_string));
                row.push(self.values[i][j].to_string());
                out.write_record(&row)?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Direct transcription of one moderation problem.
pub(crate) struct Transcription<'a> {
    cost: &'a CostField,
    rate: &'a RateField,
    cfg: &'a SolverConfig,
    terminal_time: f64,
    x_end: &'a [f64],
    omega: f64,
    upsilon: &'a [f64],
    n: usize,
    dim: usize,
    dt: f64,
    bounds: Vec<VelocityBound>,
    mid_times: Vec<f64>,
}

/// Per-step evaluation of the transcribed functional at one velocity vector.
pub(crate) struct StepEval {
    /// Midpoint states, row-major `n × dim`.
    mid_states: Vec<f64>,
    costs: Vec<f64>,
    rates: Vec<f64>,
    weights: Vec<f64>,
    pub(crate) objective: ExtReal,
}

impl<'a> Transcription<'a> {
    pub(crate) fn new(prob: &'a ModerationProblem, rate: &'a RateField, cfg: &'a SolverConfig) -> Result<Self> {
        let dim = prob.terminal_state.len();
        if prob.upsilon.len() != dim || prob.cost.dim() != dim {
            return Err(Error::InvalidArgument(format!(
                "moderation dimensions: state {dim}, Υ {}, cost {}",
                prob.upsilon.len(),
                prob.cost.dim()
            )));
        }
        if !(prob.omega > 0.0) || prob.n_steps == 0 {
            return Err(Error::InvalidArgument(format!(
                "moderation needs Ω > 0 and N ≥ 1 (Ω={}, N={})",
                prob.omega, prob.n_steps
            )));
        }
        let n = prob.n_steps;
        let dt = prob.omega / n as f64;
        let start = prob.terminal_time - prob.omega;
        let mut bounds = prob.admissible.bounds.clone();
        if let Some(b) = prob.cost.domain_box() {
            bounds.push(VelocityBound::Box(b.to_vec()));
        }
        Ok(Transcription {
            cost: &prob.cost,
            rate,
            cfg,
            terminal_time: prob.terminal_time,
            x_end: &prob.terminal_state,
            omega: prob.omega,
            upsilon: &prob.upsilon,
            n,
            dim,
            dt,
            bounds,
            mid_times: (0..n).map(|k| start + k as f64 * dt + 0.5 * dt).collect(),
        })
    }

    fn window(&self) -> Window {
        Window {
            terminal_time: self.terminal_time,
            aperture: self.omega,
        }
    }

    fn solve(&self) -> Result<Moderation> {
        if !self.average_is_reachable() {
            return Ok(Moderation {
                lambda: ExtReal::PosInf,
                argmin: None,
            });
        }
        let constant: Vec<f64> = (0..self.n).flat_map(|_| self.upsilon.iter().copied()).collect();
        let mut best: Option<(ExtReal, Vec<f64>)> = None;
        for r in 0..=self.cfg.restarts {
            let mut start = constant.clone();
            if r > 0 {
                let mut rng = ChaCha8Rng::seed_from_u64(self.start_seed(r));
                let amp = 0.5 * norm_sq(self.upsilon).sqrt() + 0.1;
                for v in start.iter_mut() {
                    *v += rng.gen_range(-amp..=amp);
                }
            }
            if !self.project(&mut start) {
                continue;
            }
            let (value, u) = self.descend(start)?;
            if value.is_finite() && best.as_ref().is_none_or(|(b, _)| value < *b) {
                best = Some((value, u));
            }
        }
        match best {
            None => Ok(Moderation {
                lambda: ExtReal::PosInf,
                argmin: None,
            }),
            Some((lambda, u)) => Ok(Moderation {
                lambda,
                argmin: Some(Trajectory::from_flat(self.window(), self.x_end.to_vec(), u)?),
            }),
        }
    }

    fn start_seed(&self, restart: usize) -> u64 {
        let mut words = vec![self.omega.to_bits(), self.terminal_time.to_bits(), restart as u64];
        words.extend(self.upsilon.iter().map(|v| v.to_bits()));
        words.extend(self.x_end.iter().map(|v| v.to_bits()));
        exec::derive_seed(self.cfg.seed, "moderate-start", &words)
    }

    /// The set of averages of admissible velocity selections contains `Υ`.
    fn average_is_reachable(&self) -> bool {
        self.bounds.iter().all(|b| match b {
            VelocityBound::Box(bx) => self.upsilon.iter().zip(bx).all(|(v, &(lo, hi))| *v >= lo && *v <= hi),
            VelocityBound::Norm { coords, radius } => {
                let mean_r = self.mid_times.iter().map(|&t| radius.at(t)).sum::<f64>() / self.n as f64;
                norm_sq(&self.upsilon[coords.clone()]).sqrt() <= mean_r * (1.0 + 1e-12)
            }
        })
    }

    fn descend(&self, mut u: Vec<f64>) -> Result<(ExtReal, Vec<f64>)> {
        let mut eval = self.evaluate(&u)?;
        if eval.objective.is_infinite() {
            return Ok((ExtReal::PosInf, u));
        }
        let metric = self.dt / self.omega;
        let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
        for _ in 0..self.cfg.max_iters {
            let g = self.gradient(&u, &eval)?;
            // Barzilai-Borwein length from the last accepted move, else the configured one
            let mut step = self.cfg.initial_step;
            if let Some((pu, pgr)) = &prev {
                let (mut ss, mut sy) = (0.0, 0.0);
                for i in 0..u.len() {
                    let s = u[i] - pu[i];
                    ss += s * s;
                    sy += s * (g[i] - pgr[i]);
                }
                if sy > 0.0 && ss > 0.0 {
                    step = (ss / sy).clamp(1e-4, 1e4);
                }
            }
            let mut probe: Vec<f64> = u.iter().zip(&g).map(|(a, b)| a - b).collect();
            if !self.project(&mut probe) {
                break;
            }
            let pg = probe.iter().zip(&u).map(|(p, a)| (p - a) * (p - a)).sum::<f64>() * metric;
            if pg.sqrt() < self.cfg.grad_tol {
                break;
            }
            let current = eval.objective.to_f64();
            let mut accepted = None;
            for _ in 0..self.cfg.max_backtracks {
                let mut trial: Vec<f64> = u.iter().zip(&g).map(|(a, b)| a - step * b).collect();
                if self.project(&mut trial) {
                    let slope: f64 = g.iter().zip(trial.iter().zip(&u)).map(|(gi, (t, a))| gi * (t - a)).sum::<f64>() * metric;
                    if slope >= 0.0 {
                        break;
                    }
                    let te = self.evaluate(&trial)?;
                    if let ExtReal::Finite(v) = te.objective {
                        if v <= current + self.cfg.armijo * slope {
                            accepted = Some((trial, te));
                            break;
                        }
                    }
                }
                step *= 0.5;
            }
            match accepted {
                Some((nu, ne)) => {
                    prev = Some((std::mem::replace(&mut u, nu), g));
                    eval = ne;
                }
                None => break,
            }
        }
        Ok((eval.objective, u))
    }

    fn mid_states(&self, u: &[f64]) -> Vec<f64> {
        let (n, dim, dt) = (self.n, self.dim, self.dt);
        let mut out = vec![0.0; n * dim];
        let mut right = self.x_end.to_vec();
        for k in (0..n).rev() {
            for d in 0..dim {
                let left = right[d] - u[k * dim + d] * dt;
                out[k * dim + d] = 0.5 * (left + right[d]);
                right[d] = left;
            }
        }
        out
    }

    pub(crate) fn evaluate(&self, u: &[f64]) -> Result<StepEval> {
        let (n, dim, dt) = (self.n, self.dim, self.dt);
        let mid_states = self.mid_states(u);
        let mut costs = vec![0.0; n];
        let mut rates = vec![0.0; n];
        for k in 0..n {
            let (t, x, uk) = (self.mid_times[k], &mid_states[k * dim..(k + 1) * dim], &u[k * dim..(k + 1) * dim]);
            let l = self.cost.raw(t, x, uk);
            if l.is_nan() || l == f64::NEG_INFINITY {
                return Err(Error::EvaluationFault {
                    t,
                    x: x.to_vec(),
                    u: uk.to_vec(),
                });
            }
            costs[k] = l;
            let m = self.rate.eval(t, x, uk);
            if m.is_nan() {
                return Err(Error::Undefined("rate evaluated to NaN"));
            }
            rates[k] = m;
        }
        let mut weights = vec![1.0; n];
        let mut tail = 0.0;
        for k in (0..n).rev() {
            weights[k] = (0.5 * dt * rates[k] + tail).exp();
            tail += dt * rates[k];
        }
        let mut sum = 0.0;
        for k in 0..n {
            sum += dt * weights[k] * costs[k];
        }
        let objective = ExtReal::new(sum / self.omega).unwrap_or(ExtReal::PosInf);
        Ok(StepEval {
            mid_states,
            costs,
            rates,
            weights,
            objective,
        })
    }

    /// Gradient of `J` in the `L²` metric with weight `Δ/Ω`, that is
    /// `(Ω/Δ)·∂J/∂u`. Per-step partial derivatives of `l` and `m` come from
    /// central differences; they are combined through the backward state
    /// reconstruction `x̂_k = x(T) − Δ·Σ_{j>k} u_j − Δ/2·u_k` and the tail
    /// integrals in the weights, using prefix sums.
    pub(crate) fn gradient(&self, u: &[f64], ev: &StepEval) -> Result<Vec<f64>> {
        let (n, dim, dt) = (self.n, self.dim, self.dt);
        let state_dep = !self.cost.is_velocity_only();
        let rate_dep = self.rate.depends_on_path();
        let mut du_l = vec![0.0; n * dim];
        let mut dx_l = vec![0.0; n * dim];
        let mut du_m = vec![0.0; n * dim];
        let mut dx_m = vec![0.0; n * dim];
        let mut xbuf = vec![0.0; dim];
        let mut ubuf = vec![0.0; dim];
        for k in 0..n {
            let t = self.mid_times[k];
            let row = k * dim..(k + 1) * dim;
            xbuf.copy_from_slice(&ev.mid_states[row.clone()]);
            ubuf.copy_from_slice(&u[row.clone()]);
            for d in 0..dim {
                let i = k * dim + d;
                du_l[i] = central(ev.costs[k], ubuf[d], self.cfg.fd_step, |v| {
                    let mut w = ubuf.clone();
                    w[d] = v;
                    self.cost.raw(t, &xbuf, &w)
                });
                if state_dep {
                    dx_l[i] = central(ev.costs[k], xbuf[d], self.cfg.fd_step, |v| {
                        let mut y = xbuf.clone();
                        y[d] = v;
                        self.cost.raw(t, &y, &ubuf)
                    });
                }
                if rate_dep {
                    du_m[i] = central(ev.rates[k], ubuf[d], self.cfg.fd_step, |v| {
                        let mut w = ubuf.clone();
                        w[d] = v;
                        self.rate.eval(t, &xbuf, &w)
                    });
                    dx_m[i] = central(ev.rates[k], xbuf[d], self.cfg.fd_step, |v| {
                        let mut y = xbuf.clone();
                        y[d] = v;
                        self.rate.eval(t, &y, &ubuf)
                    });
                }
            }
        }
        let weighted: Vec<f64> = (0..n).map(|k| ev.weights[k] * ev.costs[k]).collect();
        let mut grad = vec![0.0; n * dim];
        for d in 0..dim {
            // running Σ_{k<j} w_k ∂_x l_k, Σ_{k<j} w_k l_k, Σ_{i<j} ∂_x m_i (w_i l_i / 2 + P_i)
            let mut wb = 0.0;
            let mut p = 0.0;
            let mut q = 0.0;
            for j in 0..n {
                let i = j * dim + d;
                let w = ev.weights[j];
                let a = w * du_l[i] - 0.5 * dt * w * dx_l[i] - dt * wb;
                let mu = du_m[i] - 0.5 * dt * dx_m[i];
                let b = mu * (0.5 * dt * weighted[j] + dt * p) - dt * dt * q;
                grad[i] = a + b;
                wb += w * dx_l[i];
                q += dx_m[i] * (0.5 * weighted[j] + p);
                p += weighted[j];
            }
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Undefined("non-finite gradient"));
        }
        Ok(grad)
    }

    fn affine(&self, v: &mut [f64]) {
        let n = self.n as f64;
        for d in 0..self.dim {
            let mean = (0..self.n).map(|k| v[k * self.dim + d]).sum::<f64>() / n;
            let shift = mean - self.upsilon[d];
            for k in 0..self.n {
                v[k * self.dim + d] -= shift;
            }
        }
    }

    fn violation(&self, v: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for k in 0..self.n {
            let uk = &v[k * self.dim..(k + 1) * self.dim];
            for b in &self.bounds {
                match b {
                    VelocityBound::Box(bx) => {
                        for (x, &(lo, hi)) in uk.iter().zip(bx) {
                            worst = worst.max(lo - x).max(x - hi);
                        }
                    }
                    VelocityBound::Norm { coords, radius } => {
                        worst = worst.max(norm_sq(&uk[coords.clone()]).sqrt() - radius.at(self.mid_times[k]));
                    }
                }
            }
        }
        worst
    }

    fn clip(&self, v: &mut [f64]) {
        for k in 0..self.n {
            let uk = &mut v[k * self.dim..(k + 1) * self.dim];
            for b in &self.bounds {
                match b {
                    VelocityBound::Box(bx) => {
                        for (x, &(lo, hi)) in uk.iter_mut().zip(bx) {
                            *x = x.clamp(lo, hi);
                        }
                    }
                    VelocityBound::Norm { coords, radius } => {
                        let r = radius.at(self.mid_times[k]).max(0.0);
                        let block = &mut uk[coords.clone()];
                        let nrm = norm_sq(block).sqrt();
                        if nrm > r {
                            let s = if nrm > 0.0 { r / nrm } else { 0.0 };
                            block.iter_mut().for_each(|x| *x *= s);
                        }
                    }
                }
            }
        }
    }

    /// Maps `v` onto the average constraint and the velocity bounds. Returns
    /// false when no admissible point was found.
    fn project(&self, v: &mut [f64]) -> bool {
        self.affine(v);
        if self.bounds.is_empty() {
            return true;
        }
        for _ in 0..self.cfg.max_alternations {
            if self.violation(v) <= 0.0 {
                return true;
            }
            self.clip(v);
            self.affine(v);
        }
        if self.violation(v) <= 0.0 {
            return true;
        }
        // shrink towards the constant trajectory, which keeps the average
        let constant: Vec<f64> = (0..self.n).flat_map(|_| self.upsilon.iter().copied()).collect();
        if self.violation(&constant) > 0.0 {
            return false;
        }
        let blend = |theta: f64| -> Vec<f64> {
            constant.iter().zip(v.iter()).map(|(c, x)| c + theta * (x - c)).collect()
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.violation(&blend(mid)) <= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        v.copy_from_slice(&blend(lo));
        true
    }
}

/// Central difference of `f` at `at` (where `f(at) = f0`), falling back to a
/// one-sided difference when one neighbour is outside the effective domain.
fn central(f0: f64, at: f64, rel: f64, f: impl Fn(f64) -> f64) -> f64 {
    let h = rel * at.abs().max(1.0);
    let fp = f(at + h);
    let fm = f(at - h);
    match (fp.is_finite(), fm.is_finite()) {
        (true, true) => (fp - fm) / (2.0 * h),
        (true, false) if f0.is_finite() => (fp - f0) / h,
        (false, true) if f0.is_finite() => (f0 - fm) / h,
        _ => 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{average_transaction, build_trajectory, cumulated_cost, RadiusFn};
    use proptest::prelude::*;

    fn solve(cost: CostField, t: f64, x: f64, omega: f64, ups: f64) -> Moderation {
        let prob = ModerationProblem::new(cost, t, vec![x], omega, vec![ups]);
        moderate(&prob, &SolverConfig::default()).unwrap()
    }

    #[test]
    fn quadratic_is_its_own_moderation() {
        let m = solve(CostField::quadratic(1), 3.0, 0.7, 1.0, 2.0);
        assert!((m.lambda.to_f64() - 2.0).abs() <= 1e-6);
        let tr = m.argmin.unwrap();
        assert!(tr.velocities().iter().all(|u| (u[0] - 2.0).abs() < 1e-9));
    }

    #[test]
    fn time_weighted_quadratic_matches_euler_lagrange() {
        let m = solve(CostField::weighted_quadratic(1, 1.0, 1.0), 1.0, 0.0, 1.0, 1.0);
        let exact = 1.0 / (2.0 * std::f64::consts::LN_2);
        assert!((m.lambda.to_f64() - exact).abs() <= 1e-3, "{}", m.lambda);
        // u(t)·(1+t) is constant along the minimizer
        let tr = m.argmin.unwrap();
        let mids = tr.midpoints();
        let first = tr.velocity(0)[0] * (1.0 + mids[0].0);
        for k in 0..tr.n_steps() {
            let d = (tr.velocity(k)[0] * (1.0 + mids[k].0) - first).abs();
            assert!(d < 1e-4, "k={k} d={d} lambda={}", m.lambda);
        }
    }

    #[test]
    fn zero_transaction() {
        let m = solve(CostField::weighted_quadratic(1, 1.0, 1.0), 1.0, 0.3, 0.5, 0.0);
        assert_eq!(m.lambda, ExtReal::ZERO);
        assert!(m.argmin.unwrap().velocities().iter().all(|u| u[0] == 0.0));
    }

    #[test]
    fn unreachable_average_is_infinite() {
        let m = solve(CostField::quadratic(1).with_domain_box(vec![(-1.0, 1.0)]), 1.0, 0.0, 1.0, 2.0);
        assert_eq!(m.lambda, ExtReal::PosInf);
        assert!(m.argmin.is_none());
    }

    #[test]
    fn lambda_matches_independent_quadrature_and_constraint() {
        let cost = CostField::new("xdep", 1, |t, x: &[f64], u: &[f64]| 0.5 * (1.0 + x[0] * x[0] + t) * u[0] * u[0]).convex();
        let prob = ModerationProblem::new(cost.clone(), 1.0, vec![0.5], 0.8, vec![0.9]).with_steps(40);
        let m = moderate(&prob, &SolverConfig::default()).unwrap();
        let tr = m.argmin.unwrap();
        let recomputed = cumulated_cost(&tr, &cost).unwrap().to_f64() / 0.8;
        assert!((m.lambda.to_f64() - recomputed).abs() <= 1e-12);
        assert!((average_transaction(&tr).unwrap()[0] - 0.9).abs() <= 1e-12);
    }

    #[test]
    fn boxed_average_near_bound_stays_admissible() {
        let cost = CostField::weighted_quadratic(1, 1.0, 1.0).with_domain_box(vec![(-1.0, 1.0)]);
        let prob = ModerationProblem::new(cost.clone(), 1.0, vec![0.0], 1.0, vec![0.9]).with_steps(30);
        let m = moderate(&prob, &SolverConfig::default()).unwrap();
        let tr = m.argmin.unwrap();
        assert!(tr.velocities().iter().all(|u| u[0].abs() <= 1.0));
        assert!((average_transaction(&tr).unwrap()[0] - 0.9).abs() <= 1e-12);
        assert!(m.lambda.is_finite());
        assert!(AdmissibleSpec::unbounded().is_admissible(&tr, &cost).unwrap());
    }

    #[test]
    fn norm_bound_is_respected() {
        let cost = CostField::weighted_quadratic(2, 1.0, 1.0);
        let adm = AdmissibleSpec::unbounded().with_bound(VelocityBound::Norm {
            coords: 0..2,
            radius: RadiusFn::constant(1.0),
        });
        let prob = ModerationProblem::new(cost.clone(), 1.0, vec![0.0, 0.0], 1.0, vec![0.6, 0.6])
            .with_steps(20)
            .with_admissible(adm.clone());
        let m = moderate(&prob, &SolverConfig::default()).unwrap();
        let tr = m.argmin.unwrap();
        assert!(adm.is_admissible(&tr, &cost).unwrap());
        let far = ModerationProblem::new(cost, 1.0, vec![0.0, 0.0], 1.0, vec![0.8, 0.8]).with_admissible(adm);
        assert_eq!(moderate(&far, &SolverConfig::default()).unwrap().lambda, ExtReal::PosInf);
    }

    #[test]
    fn jensen_gap_contract() {
        let cfg = SolverConfig::default();
        let g = jensen_gap(&CostField::quadratic(1), 1.0, &[0.0], 1.0, &[3.0], &cfg).unwrap();
        assert!(g.abs() <= 1e-6);
        let g = jensen_gap(&CostField::abs(1), 2.0, &[0.0], 2.0, &[-1.0], &cfg).unwrap();
        assert!(g.abs() <= 1e-6);
        assert_eq!(jensen_gap(&CostField::quadratic(1), 1.0, &[0.0], 1.0, &[0.0], &cfg).unwrap(), 0.0);
        assert!(matches!(
            jensen_gap(&CostField::weighted_quadratic(1, 1.0, 1.0), 1.0, &[0.0], 1.0, &[1.0], &cfg),
            Err(Error::Misuse(_))
        ));
    }

    #[test]
    fn table_entries() {
        let cfg = SolverConfig {
            n_steps: 20,
            ..SolverConfig::default()
        };
        let ups = Lattice::box_linspace(&[-1.0], &[1.0], &[3]).unwrap();
        let t = build_moderation_table(&CostField::quadratic(1), 1.0, &[0.0], &[0.5, 1.0, 2.0], &ups, &cfg).unwrap();
        for (i, row) in t.values.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let u = t.upsilon_grid[j][0];
                assert!((v.to_f64() - 0.5 * u * u).abs() <= 1e-6, "Ω={} Υ={u}", t.omega_grid[i]);
            }
        }

        let boxed = CostField::quadratic(1).with_domain_box(vec![(-1.0, 1.0)]);
        let ups = Lattice::box_linspace(&[0.0], &[2.0], &[3]).unwrap();
        let t = build_moderation_table(&boxed, 1.0, &[0.0], &[1.0], &ups, &cfg).unwrap();
        assert_eq!(t.values[0][2], ExtReal::PosInf);

        let cost = CostField::weighted_quadratic(1, 1.0, 1.0);
        let single = Lattice::box_linspace(&[0.7], &[0.7], &[1]).unwrap();
        let t = build_moderation_table(&cost, 1.0, &[0.2], &[0.6], &single, &cfg).unwrap();
        let direct = moderate(
            &ModerationProblem::new(cost, 1.0, vec![0.2], 0.6, vec![0.7]).with_steps(20),
            &cfg,
        )
        .unwrap();
        assert_eq!(t.values[0][0], direct.lambda);

        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("omega,upsilon_1,lambda\n"));
    }

    /// Full central differences of `Σ_k w_k l_k` in every coordinate, the
    /// reference for the prefix-sum chain rule.
    fn brute_gradient(tr: &Transcription, u: &[f64]) -> Vec<f64> {
        let h = 1e-6;
        let scale = tr.omega / tr.dt;
        (0..u.len())
            .map(|i| {
                let mut up = u.to_vec();
                up[i] += h;
                let mut dn = u.to_vec();
                dn[i] -= h;
                let fp = tr.evaluate(&up).unwrap().objective.to_f64();
                let fm = tr.evaluate(&dn).unwrap().objective.to_f64();
                scale * (fp - fm) / (2.0 * h)
            })
            .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn chain_rule_gradient_matches_brute_force(
            us in prop::collection::vec(-1.5f64..1.5, 12),
            x0 in -1.0f64..1.0,
            general_rate in any::<bool>(),
        ) {
            let cost = CostField::new("mix", 2, |t, x: &[f64], u: &[f64]| {
                (1.0 + t + 0.3 * x[0] * x[0]) * u[0] * u[0] + (1.0 + 0.5 * (x[1] - x[0]).sin()) * u[1] * u[1] + 0.2 * x[1] * u[0]
            });
            let rate = if general_rate {
                RateField::general(|t, x: &[f64], u: &[f64]| 0.1 * t + 0.2 * x[0] - 0.3 * u[1] + 0.1 * u[0] * x[1])
            } else {
                RateField::Constant(0.3)
            };
            let cfg = SolverConfig::default();
            let prob = ModerationProblem::new(cost, 1.5, vec![x0, 0.4], 1.2, vec![0.1, -0.2]).with_steps(6);
            let tr = Transcription::new(&prob, &rate, &cfg).unwrap();
            let ev = tr.evaluate(&us).unwrap();
            let fast = tr.gradient(&us, &ev).unwrap();
            let slow = brute_gradient(&tr, &us);
            for (a, b) in fast.iter().zip(&slow) {
                prop_assert!((a - b).abs() <= 1e-5 * (1.0 + b.abs()), "{:?} vs {:?}", fast, slow);
            }
        }

        #[test]
        fn hand_built_trajectories_never_beat_the_solver(
            bumps in prop::collection::vec(-1.0f64..1.0, 10),
            ups in -1.5f64..1.5,
        ) {
            let cost = CostField::weighted_quadratic(1, 1.0, 1.0);
            let prob = ModerationProblem::new(cost.clone(), 1.0, vec![0.0], 1.0, vec![ups]).with_steps(10);
            let m = moderate(&prob, &SolverConfig::default()).unwrap();
            let mean = bumps.iter().sum::<f64>() / bumps.len() as f64;
            let vs: Vec<Vec<f64>> = bumps.iter().map(|b| vec![b - mean + ups]).collect();
            let tr = build_trajectory(Window::new(1.0, 1.0).unwrap(), &[0.0], &vs).unwrap();
            let normalized = cumulated_cost(&tr, &cost).unwrap().to_f64();
            prop_assert!(normalized >= m.lambda.to_f64() - 1e-9);
        }

        #[test]
        fn jensen_lower_bound_and_base_point_invariance(
            ups in -3.0f64..3.0, omega in 0.2f64..3.0, x1 in -5.0f64..5.0, x2 in -5.0f64..5.0,
        ) {
            let cfg = SolverConfig { n_steps: 16, ..SolverConfig::default() };
            for cost in [CostField::quadratic(1), CostField::abs(1)] {
                let l = 0.0f64.max(crate::convex::eval_cost(&cost, 0.0, &[0.0], &[ups]).unwrap().to_f64());
                let a = moderate(&ModerationProblem::new(cost.clone(), 2.0, vec![x1], omega, vec![ups]).with_steps(16), &cfg).unwrap();
                let b = moderate(&ModerationProblem::new(cost.clone(), 2.0, vec![x2], omega, vec![ups]).with_steps(16), &cfg).unwrap();
                prop_assert!(a.lambda.to_f64() >= l - cfg.tol_quadrature);
                prop_assert!((a.lambda.to_f64() - b.lambda.to_f64()).abs() <= cfg.tol_solver);
            }
        }
    }
}
