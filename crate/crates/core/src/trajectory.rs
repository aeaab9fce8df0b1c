//! Temporal windows, terminal-anchored piecewise-constant trajectories, and
//! the enrichment ratios of a value function over a window.

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use crate::convex::cost::{eval_cost, norm_sq, CostField};
use crate::convex::ExtReal;
use crate::error::{Error, Result};

/// The window `[T − Ω, T]`. Zero aperture is an instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Window {
    pub terminal_time: f64,
    pub aperture: f64,
}

impl Window {
    pub fn new(terminal_time: f64, aperture: f64) -> Result<Self> {
        if !terminal_time.is_finite() || !aperture.is_finite() || aperture < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "window T={terminal_time}, aperture={aperture}"
            )));
        }
        Ok(Window {
            terminal_time,
            aperture,
        })
    }

    pub fn start_time(&self) -> f64 {
        self.terminal_time - self.aperture
    }
}

/// Evolution on a uniform grid of a window, stored as its terminal state plus
/// one constant velocity per step. States are rebuilt backwards from `x(T)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    window: Window,
    dim: usize,
    terminal_state: Vec<f64>,
    /// Row-major `n_steps × dim`.
    velocities: Vec<f64>,
}

pub fn build_trajectory(
    window: Window,
    terminal_state: &[f64],
    velocities: &[Vec<f64>],
) -> Result<Trajectory> {
    let dim = terminal_state.len();
    if velocities.iter().any(|u| u.len() != dim) {
        return Err(Error::InvalidArgument("velocity dimension differs from state".into()));
    }
    let flat: Vec<f64> = velocities.iter().flatten().copied().collect();
    Trajectory::from_flat(window, terminal_state.to_vec(), flat)
}

impl Trajectory {
    pub fn from_flat(window: Window, terminal_state: Vec<f64>, velocities: Vec<f64>) -> Result<Self> {
        let dim = terminal_state.len();
        if dim == 0 {
            return Err(Error::InvalidArgument("zero-dimensional state".into()));
        }
        if velocities.is_empty() || !velocities.len().is_multiple_of(dim) {
            return Err(Error::InvalidArgument(format!(
                "{} velocity entries do not form whole steps of dimension {dim}",
                velocities.len()
            )));
        }
        if window.aperture == 0.0 {
            return Err(Error::DegenerateWindow("zero aperture with nonempty velocities"));
        }
        Ok(Trajectory {
            window,
            dim,
            terminal_state,
            velocities,
        })
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_steps(&self) -> usize {
        self.velocities.len() / self.dim
    }

    pub fn step(&self) -> f64 {
        self.window.aperture / self.n_steps() as f64
    }

    pub fn terminal_state(&self) -> &[f64] {
        &self.terminal_state
    }

    pub fn velocity(&self, k: usize) -> &[f64] {
        &self.velocities[k * self.dim..(k + 1) * self.dim]
    }

    pub fn velocities_flat(&self) -> &[f64] {
        &self.velocities
    }

    pub fn velocities(&self) -> Vec<Vec<f64>> {
        self.velocities.chunks(self.dim).map(<[f64]>::to_vec).collect()
    }

    pub fn node_time(&self, k: usize) -> f64 {
        let n = self.n_steps();
        if k == n {
            self.window.terminal_time
        } else {
            self.window.start_time() + k as f64 * self.step()
        }
    }

    /// All `N + 1` node states, `x_N = x(T)` exactly.
    pub fn states(&self) -> Vec<Vec<f64>> {
        let n = self.n_steps();
        let dt = self.step();
        let mut out = vec![self.terminal_state.clone(); n + 1];
        for k in (0..n).rev() {
            let u = self.velocity(k);
            let (head, tail) = out.split_at_mut(k + 1);
            for d in 0..self.dim {
                head[k][d] = tail[0][d] - u[d] * dt;
            }
        }
        out
    }

    pub fn start_state(&self) -> Vec<f64> {
        self.states().swap_remove(0)
    }

    /// Step midpoint time and linearly interpolated state.
    pub fn midpoints(&self) -> Vec<(f64, Vec<f64>)> {
        let states = self.states();
        (0..self.n_steps())
            .map(|k| {
                let t = self.node_time(k) + 0.5 * self.step();
                let x = states[k].iter().zip(&states[k + 1]).map(|(a, b)| 0.5 * (a + b)).collect();
                (t, x)
            })
            .collect()
    }

    /// Rows `t, x_1..x_ℓ, u_1..u_ℓ`; velocities are attached to the node
    /// starting their step, so the terminal row leaves them empty.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim).map(|d| format!("x_{d}")));
        header.extend((1..=self.dim).map(|d| format!("u_{d}")));
        out.write_record(&header)?;
        let n = self.n_steps();
        for (k, x) in self.states().iter().enumerate() {
            let mut row = vec![self.node_time(k).to_string()];
            row.extend(x.iter().map(f64::to_string));
            if k < n {
                row.extend(self.velocity(k).iter().map(f64::to_string));
            } else {
                row.extend(std::iter::repeat_n(String::new(), self.dim));
            }
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `(x(T) − x(T−Ω))/Ω`, which for piecewise-constant velocities is the mean
/// step velocity.
pub fn average_transaction(traj: &Trajectory) -> Result<Vec<f64>> {
    if traj.window.aperture <= 0.0 {
        return Err(Error::DegenerateWindow("average transaction over a zero aperture"));
    }
    let n = traj.n_steps() as f64;
    Ok((0..traj.dim)
        .map(|d| (0..traj.n_steps()).map(|k| traj.velocity(k)[d]).sum::<f64>() / n)
        .collect())
}

/// Midpoint quadrature of `∫ l(t, x(t), x'(t)) dt` over the window.
pub fn cumulated_cost(traj: &Trajectory, cost: &CostField) -> Result<ExtReal> {
    let dt = traj.step();
    let mut total = ExtReal::ZERO;
    for (k, (t, x)) in traj.midpoints().into_iter().enumerate() {
        let l = eval_cost(cost, t, &x, traj.velocity(k))?;
        total = total + l.scale(dt)?;
        if total.is_infinite() {
            break;
        }
    }
    Ok(total)
}

/// `(V(T) − V(T−Ω))/Ω`.
pub fn enrichment(v_start: f64, v_end: f64, omega: f64) -> Result<f64> {
    if !(omega > 0.0) {
        return Err(Error::InvalidArgument(format!("enrichment needs a positive aperture, got {omega}")));
    }
    Ok((v_end - v_start) / omega)
}

/// Forward, backward and symmetric interest rates over a window. A rate whose
/// denominator vanishes (or whose square root is undefined) is `None`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InterestRates {
    pub forward: Option<f64>,
    pub backward: Option<f64>,
    pub symmetric: Option<f64>,
}

pub fn interest_rates(v_start: f64, v_end: f64, omega: f64) -> Result<InterestRates> {
    if !(omega > 0.0) {
        return Err(Error::InvalidArgument(format!("interest rates need a positive aperture, got {omega}")));
    }
    let profit = v_end - v_start;
    let ratio = |den: f64| (den != 0.0 && den.is_finite()).then(|| profit / (omega * den));
    let product = v_start * v_end;
    Ok(InterestRates {
        forward: ratio(v_start),
        backward: ratio(v_end),
        symmetric: if product > 0.0 { ratio(product.sqrt()) } else { None },
    })
}

#[derive(Clone)]
pub struct RadiusFn(Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl RadiusFn {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        RadiusFn(Arc::new(f))
    }

    pub fn constant(r: f64) -> Self {
        RadiusFn::new(move |_| r)
    }

    pub fn at(&self, t: f64) -> f64 {
        (self.0)(t)
    }
}

impl fmt::Debug for RadiusFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("RadiusFn(..)")
    }
}

#[derive(Clone, Debug)]
pub enum VelocityBound {
    /// Per-coordinate interval for every velocity coordinate.
    Box(Vec<(f64, f64)>),
    /// `‖u[coords]‖ ≤ γ(t)` in the Euclidean norm.
    Norm { coords: Range<usize>, radius: RadiusFn },
}

/// Velocity constraints of an admissible evolution. Cost-domain finiteness is
/// checked separately by evaluating the cost.
#[derive(Clone, Debug, Default)]
pub struct AdmissibleSpec {
    pub bounds: Vec<VelocityBound>,
}

impl AdmissibleSpec {
    pub fn unbounded() -> Self {
        AdmissibleSpec::default()
    }

    pub fn with_bound(mut self, b: VelocityBound) -> Self {
        self.bounds.push(b);
        self
    }

    /// Largest violation of any bound by `u` at time `t` (0 when satisfied).
    pub fn violation(&self, t: f64, u: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for b in &self.bounds {
            match b {
                VelocityBound::Box(bx) => {
                    for (v, &(lo, hi)) in u.iter().zip(bx) {
                        worst = worst.max(lo - v).max(v - hi);
                    }
                }
                VelocityBound::Norm { coords, radius } => {
                    worst = worst.max(norm_sq(&u[coords.clone()]).sqrt() - radius.at(t));
                }
            }
        }
        worst
    }

    pub fn is_admissible(&self, traj: &Trajectory, cost: &CostField) -> Result<bool> {
        for (k, (t, x)) in traj.midpoints().into_iter().enumerate() {
            let u = traj.velocity(k);
            if self.violation(t, u) > 0.0 || eval_cost(cost, t, &x, u)?.is_infinite() {
                return Ok(false);
            }
        }
        Ok(true)
    }
}
