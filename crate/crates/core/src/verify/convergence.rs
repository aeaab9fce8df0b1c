use crate::convex::{CostField, ExtReal, TerminalCost};
use crate::error::{Error, Result};
use crate::grid::{Axis, Lattice};
use crate::verify::{dp_oracle, DpGrids};

/// A benchmark evaluated by the oracle at several resolutions and compared
/// with a reference value (closed form or formula output).
#[derive(Clone, Debug)]
pub struct ConvergenceScenario {
    pub terminal: TerminalCost,
    pub cost: CostField,
    pub terminal_time: f64,
    pub x: Vec<f64>,
    pub reference: f64,
    pub state_box: Vec<(f64, f64)>,
    pub velocity_box: Vec<(f64, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Level {
    pub dt: f64,
    pub state_step: f64,
    pub velocity_step: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub level: Level,
    pub oracle: ExtReal,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceTable {
    pub reference: f64,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    /// The contract: the last two errors do not increase (beyond round-off).
    pub fn tail_non_increasing(&self) -> bool {
        let slack = 1e-12 * self.reference.abs().max(1.0);
        match self.rows.as_slice() {
            [.., a, b] => b.error <= a.error + slack,
            _ => false,
        }
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].error < w[0].error)
    }

    /// Columns `dt, state_step, velocity_step, oracle, reference, error`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["dt", "state_step", "velocity_step", "oracle", "reference", "error"])?;
        for r in &self.rows {
            out.write_record([
                r.level.dt.to_string(),
                r.level.state_step.to_string(),
                r.level.velocity_step.to_string(),
                r.oracle.to_string(),
                self.reference.to_string(),
                r.error.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn axis_over(lo: f64, hi: f64, step: f64) -> Result<Axis> {
    let count = ((hi - lo) / step).round() as usize + 1;
    Axis::new(lo, step, count)
}

/// Lattices for one level. State axes start at `lo` and must contain `x`.
pub(crate) fn level_grids(s: &ConvergenceScenario, level: &Level) -> Result<DpGrids> {
    let states = Lattice::new(
        s.state_box
            .iter()
            .map(|&(lo, hi)| axis_over(lo, hi, level.state_step))
            .collect::<Result<_>>()?,
    );
    let velocities = Lattice::new(
        s.velocity_box
            .iter()
            .map(|&(lo, hi)| axis_over(lo, hi, level.velocity_step))
            .collect::<Result<_>>()?,
    );
    DpGrids::new(s.terminal_time, level.dt, states, velocities)
}

pub fn convergence_study(scenario: &ConvergenceScenario, levels: &[Level]) -> Result<ConvergenceTable> {
    if levels.len() < 2 {
        return Err(Error::InvalidArgument("a convergence study needs at least two levels".into()));
    }
    let rows = levels
        .iter()
        .map(|level| {
            let grids = level_grids(scenario, level)?;
            let surface = dp_oracle(&scenario.terminal, &scenario.cost, &grids)?;
            let oracle = surface.lookup(scenario.terminal_time, &scenario.x).ok_or_else(|| {
                Error::InvalidArgument(format!("x={:?} is not a node of the level {level:?} state lattice", scenario.x))
            })?;
            Ok(ConvergenceRow {
                level: *level,
                oracle,
                error: (oracle.to_f64() - scenario.reference).abs(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceTable {
        reference: scenario.reference,
        rows,
    })
}
