use crate::convex::{eval_cost, CostField, ExtReal, TerminalCost};
use crate::error::{Error, Result};
use crate::exec;
use crate::grid::Lattice;

const COMMENSURABLE_TOL: f64 = 1e-9;

fn integer_ratio(a: f64, b: f64) -> Option<i64> {
    let r = a / b;
    let k = r.round();
    ((r - k).abs() <= COMMENSURABLE_TOL * k.abs().max(1.0)).then_some(k as i64)
}

/// Time, state and velocity lattices of the oracle. Every velocity of the
/// lattice moves a state node onto another state node in one time step.
#[derive(Clone, Debug, PartialEq)]
pub struct DpGrids {
    pub terminal_time: f64,
    pub dt: f64,
    pub states: Lattice,
    pub velocities: Lattice,
    n_time: usize,
    /// Per axis, the index shift of each velocity node.
    shifts: Vec<Vec<i64>>,
}

impl DpGrids {
    pub fn new(terminal_time: f64, dt: f64, states: Lattice, velocities: Lattice) -> Result<Self> {
        if !(dt > 0.0 && terminal_time > 0.0) {
            return Err(Error::config("dp.dt", format!("need T > 0 and Δt > 0 (T={terminal_time}, Δt={dt})")));
        }
        let n_time = integer_ratio(terminal_time, dt)
            .filter(|n| *n > 0)
            .ok_or_else(|| Error::config("dp.dt", format!("Δt={dt} does not divide T={terminal_time}")))?;
        if states.dim() != velocities.dim() || states.is_empty() || velocities.is_empty() {
            return Err(Error::config("dp", "state and velocity lattices must be non-empty and of equal dimension"));
        }
        let mut shifts = Vec::with_capacity(states.dim());
        for (d, (s, v)) in states.axes.iter().zip(&velocities.axes).enumerate() {
            if s.count > 1 && s.step <= 0.0 {
                return Err(Error::config(format!("dp.states[{d}]"), "state step must be positive"));
            }
            let step = if s.count > 1 { s.step } else { f64::NAN };
            let axis_shifts = v
                .values()
                .map(|u| {
                    if u * dt == 0.0 {
                        Some(0)
                    } else {
                        integer_ratio(u * dt, step)
                    }
                })
                .collect::<Option<Vec<i64>>>()
                .ok_or_else(|| {
                    Error::config(
                        format!("dp.velocities[{d}]"),
                        format!(
                            "velocity lattice (lo={}, step={}) times Δt={dt} is not a multiple of the state step {}",
                            v.lo, v.step, s.step
                        ),
                    )
                })?;
            shifts.push(axis_shifts);
        }
        Ok(DpGrids {
            terminal_time,
            dt,
            states,
            velocities,
            n_time: n_time as usize,
            shifts,
        })
    }

    /// Number of time steps.
    pub fn n_time(&self) -> usize {
        self.n_time
    }

    pub fn time(&self, n: usize) -> f64 {
        if n == self.n_time {
            self.terminal_time
        } else {
            n as f64 * self.dt
        }
    }

    fn predecessor(&self, node: &[usize], vel: &[usize]) -> Option<usize> {
        let mut flat = 0usize;
        for (d, axis) in self.states.axes.iter().enumerate() {
            let i = node[d] as i64 - self.shifts[d][vel[d]];
            if i < 0 || i >= axis.count as i64 {
                return None;
            }
            flat = flat * axis.count + i as usize;
        }
        Some(flat)
    }
}

/// `W(t_n, y)` at every time and state node.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueSurface {
    pub times: Vec<f64>,
    pub states: Lattice,
    /// `values[n][k]` at `times[n]` and state node `k`.
    pub values: Vec<Vec<ExtReal>>,
}

impl ValueSurface {
    pub fn time_index(&self, t: f64) -> Option<usize> {
        let dt = if self.times.len() > 1 { self.times[1] - self.times[0] } else { 1.0 };
        let tol = 1e-9 * dt;
        self.times.iter().position(|s| (s - t).abs() <= tol)
    }

    pub fn state_index(&self, y: &[f64]) -> Option<usize> {
        if y.len() != self.states.dim() {
            return None;
        }
        let idx = y
            .iter()
            .zip(&self.states.axes)
            .map(|(v, a)| a.index_of(*v, 1e-9 * a.step.max(1e-300)))
            .collect::<Option<Vec<usize>>>()?;
        Some(self.states.flat_index(&idx))
    }

    /// Value at a grid node, `None` off the grid.
    pub fn lookup(&self, t: f64, y: &[f64]) -> Option<ExtReal> {
        Some(self.values[self.time_index(t)?][self.state_index(y)?])
    }

    /// Columns `t, x_1..x_ℓ, W`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.states.dim()).map(|d| format!("x_{d}")));
        header.push("W".into());
        out.write_record(&header)?;
        for (n, t) in self.times.iter().enumerate() {
            for (k, y) in self.states.points().enumerate() {
                let mut row = vec![t.to_string()];
                row.extend(y.iter().map(f64::to_string));
                row.push(self.values[n][k].to_string());
                out.write_record(&row)?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Forward value iteration with a fresh start at every node:
/// `W(t_{n+1}, y) = min(c(t_{n+1}, y), min_u W(t_n, y − uΔt) + Δt·l(t_{n+1} − Δt/2, y − uΔt/2, u))`.
/// Transitions whose predecessor leaves the lattice are dropped.
pub fn dp_oracle(terminal: &TerminalCost, cost: &CostField, grids: &DpGrids) -> Result<ValueSurface> {
    if cost.dim() != grids.states.dim() {
        return Err(Error::Misuse(format!(
            "cost dimension {} does not match the state lattice dimension {}",
            cost.dim(),
            grids.states.dim()
        )));
    }
    let n_states = grids.states.len();
    let states: Vec<Vec<f64>> = grids.states.points().collect();
    let node_index: Vec<Vec<usize>> = (0..n_states).map(|k| grids.states.multi_index(k)).collect();
    let vels: Vec<(Vec<usize>, Vec<f64>)> = (0..grids.velocities.len())
        .map(|j| (grids.velocities.multi_index(j), grids.velocities.point(j)))
        .collect();
    let dt = grids.dt;

    let first: Vec<ExtReal> = states.iter().map(|y| terminal.eval(0.0, y)).collect::<Result<_>>()?;
    let mut values = vec![first];
    let mut times = vec![0.0];
    for n in 0..grids.n_time() {
        let t_next = grids.time(n + 1);
        let t_mid = t_next - 0.5 * dt;
        let prev = &values[n];
        let slice = exec::map_range(n_states, |k| -> Result<ExtReal> {
            let y = &states[k];
            let mut best = terminal.eval(t_next, y)?;
            let mut mid = vec![0.0; y.len()];
            for (vidx, u) in &vels {
                let Some(p) = grids.predecessor(&node_index[k], vidx) else {
                    continue;
                };
                if prev[p].is_infinite() {
                    continue;
                }
                for d in 0..y.len() {
                    mid[d] = y[d] - 0.5 * dt * u[d];
                }
                let l = eval_cost(cost, t_mid, &mid, u)?;
                if let ExtReal::Finite(l) = l {
                    best = best.min(prev[p] + ExtReal::Finite(dt * l));
                }
            }
            Ok(best)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        values.push(slice);
        times.push(t_next);
    }
    Ok(ValueSurface {
        times,
        states: grids.states.clone(),
        values,
    })
}
