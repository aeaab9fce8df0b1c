//! Scenario files and the batch pipelines behind the `laxhopf` binary.
//!
//! A scenario is a JSON document with `"schema": 1`. Pipelines compute their
//! artifacts in memory; writing them is a separate, single-threaded step so
//! that identical inputs give byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::convex::{ConjugateTable, CostField, ExtReal, TerminalCost};
use crate::discounted::{discounted_value, RateField};
use crate::economy::{economic_value, write_economy_trajectory_csv, EconomyState, ImpetusCostSpec};
use crate::error::{Error, Result};
use crate::grid::{Axis, Lattice};
use crate::laxhopf::{
    classic_lax_hopf, generalized_lax_hopf_admissible, optimum_certificate, wtp_value, write_value_surface_csv, OuterGrid,
    Refinement, ValueResult,
};
use crate::moderation::{build_moderation_table, SolverConfig};
use crate::trajectory::{AdmissibleSpec, RadiusFn, VelocityBound};
use crate::verify::{convergence_study, ConvergenceScenario, Level};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Classic,
    Generalized,
    Discounted,
    Economy,
    Wtp,
    Verify,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedSpec {
    pub name: String,
    #[serde(default)]
    pub params: Vec<f64>,
}

fn default_true() -> bool {
    true
}

fn default_steps() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub omega_max: f64,
    pub n_omega: usize,
    pub upsilon_lo: Vec<f64>,
    pub upsilon_hi: Vec<f64>,
    pub upsilon_count: Vec<usize>,
    #[serde(default = "default_true")]
    pub refine: bool,
    #[serde(default)]
    pub rounds: Option<usize>,
    #[serde(default = "default_steps")]
    pub trajectory_steps: usize,
}

/// A velocity bound: a constant, or a table of `[t, γ]` rows interpolated
/// linearly and held constant outside its range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoundSpec {
    Constant(f64),
    Table { table: Vec<[f64; 2]> },
}

impl BoundSpec {
    fn radius(&self, path: &str) -> Result<RadiusFn> {
        match self {
            BoundSpec::Constant(r) if *r >= 0.0 => Ok(RadiusFn::constant(*r)),
            BoundSpec::Constant(_) => Err(Error::config(path, "bounds must be nonnegative")),
            BoundSpec::Table { table } => {
                if table.is_empty() || table.iter().any(|[_, r]| !(*r >= 0.0)) || table.windows(2).any(|w| !(w[0][0] < w[1][0])) {
                    return Err(Error::config(path, "bound table needs increasing times and nonnegative values"));
                }
                let rows = table.clone();
                Ok(RadiusFn::new(move |t| {
                    let i = rows.partition_point(|r| r[0] <= t);
                    match i {
                        0 => rows[0][1],
                        i if i == rows.len() => rows[i - 1][1],
                        i => {
                            let ([t0, r0], [t1, r1]) = (rows[i - 1], rows[i]);
                            r0 + (r1 - r0) * (t - t0) / (t1 - t0)
                        }
                    }
                }))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EconomySpec {
    pub allocations: Vec<Vec<f64>>,
    pub prices: Vec<Vec<f64>>,
    pub scalar_cost: String,
    pub gamma_0: BoundSpec,
    pub gamma: Vec<BoundSpec>,
    #[serde(default)]
    pub shared_prices: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WtpSpec {
    pub bound: f64,
    pub omega: f64,
    pub state_lo: Vec<f64>,
    pub state_hi: Vec<f64>,
    pub state_count: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    pub state_box: Vec<[f64; 2]>,
    pub velocity_box: Vec<[f64; 2]>,
    pub levels: Vec<Level>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConjugateSpec {
    #[serde(default)]
    pub t: f64,
    #[serde(default)]
    pub x: Vec<f64>,
    pub dual: [f64; 2],
    pub dual_count: usize,
    pub velocities: [f64; 2],
    pub velocity_count: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Apertures of a moderation table over the grid's `Υ` lattice.
    #[serde(default)]
    pub moderation_table: Option<Vec<f64>>,
    /// States at which to tabulate `V(T, ·)`; requires a 1-D lattice spec
    /// `[lo, hi, count]` per coordinate.
    #[serde(default)]
    pub value_surface: Option<Vec<[f64; 3]>>,
    #[serde(default)]
    pub certificate_report: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema: u32,
    pub kind: Kind,
    #[serde(default)]
    pub dim: Option<usize>,
    pub terminal_time: f64,
    #[serde(default)]
    pub state: Vec<f64>,
    #[serde(default)]
    pub cost: Option<NamedSpec>,
    pub terminal: NamedSpec,
    #[serde(default)]
    pub rate: Option<NamedSpec>,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    /// Per-coordinate velocity box imposed on the evolutions.
    #[serde(default)]
    pub velocity_box: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub economy: Option<EconomySpec>,
    #[serde(default)]
    pub wtp: Option<WtpSpec>,
    #[serde(default)]
    pub verify: Option<VerifySpec>,
    #[serde(default)]
    pub conjugate: Option<ConjugateSpec>,
    #[serde(default)]
    pub outputs: OutputSpec,
}

/// Parses a scenario. Errors carry the JSON path of the offending field.
pub fn parse_config(value: serde_json::Value) -> Result<ScenarioConfig> {
    let cfg: ScenarioConfig =
        serde_path_to_error::deserialize(value).map_err(|e| Error::config(e.path().to_string(), e.inner().to_string()))?;
    if cfg.schema != SCHEMA_VERSION {
        return Err(Error::config("schema", format!("unsupported schema {}, expected {SCHEMA_VERSION}", cfg.schema)));
    }
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    parse_config(load_json(path)?)
}

pub fn load_json(path: &Path) -> Result<serde_json::Value> {
    let text = fs::read_to_string(path)?;
    let mut de = serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| Error::config(e.path().to_string(), e.inner().to_string()))
}

fn need<'a, T>(v: &'a Option<T>, path: &str) -> Result<&'a T> {
    v.as_ref().ok_or_else(|| Error::config(path, "missing field required by this kind"))
}

fn catalog_error(path: &str, e: Error) -> Error {
    match e {
        Error::InvalidArgument(m) if m.starts_with("unknown") => Error::config(format!("{path}.name"), m),
        Error::InvalidArgument(m) => Error::config(format!("{path}.params"), m),
        other => other,
    }
}

impl ScenarioConfig {
    fn state_dim(&self) -> Result<usize> {
        match (self.kind, &self.economy) {
            (Kind::Economy, Some(e)) => {
                let n = e.allocations.len();
                let l = e.allocations.first().map_or(0, Vec::len);
                let price_blocks = if e.shared_prices { 1 } else { n };
                Ok((n + price_blocks) * l)
            }
            _ => {
                let dim = self.dim.unwrap_or(self.state.len().max(1));
                if !self.state.is_empty() && self.state.len() != dim {
                    return Err(Error::config("state", format!("expected {dim} coordinates, got {}", self.state.len())));
                }
                Ok(dim)
            }
        }
    }

    fn cost_field(&self, dim: usize) -> Result<CostField> {
        let spec = need(&self.cost, "cost")?;
        CostField::from_catalog(&spec.name, &spec.params, dim).map_err(|e| catalog_error("cost", e))
    }

    fn terminal_cost(&self, dim: usize) -> Result<TerminalCost> {
        TerminalCost::from_catalog(&self.terminal.name, &self.terminal.params, dim).map_err(|e| catalog_error("terminal", e))
    }

    fn rate_field(&self) -> Result<RateField> {
        match &self.rate {
            Some(r) => RateField::from_catalog(&r.name, &r.params).map_err(|e| catalog_error("rate", e)),
            None => Ok(RateField::Zero),
        }
    }

    fn outer_grid(&self, dim: usize) -> Result<OuterGrid> {
        let g = need(&self.grid, "grid")?;
        if g.upsilon_lo.len() != dim || g.upsilon_hi.len() != dim || g.upsilon_count.len() != dim {
            return Err(Error::config("grid", format!("Υ lattice bounds need {dim} coordinates")));
        }
        if !(g.omega_max > 0.0) || g.n_omega == 0 {
            return Err(Error::config("grid.omega_max", "need omega_max > 0 and n_omega ≥ 1"));
        }
        let lattice = Lattice::box_linspace(&g.upsilon_lo, &g.upsilon_hi, &g.upsilon_count)
            .map_err(|e| Error::config("grid.upsilon_lo", e.to_string()))?;
        let mut grid = OuterGrid::uniform(g.omega_max, g.n_omega, lattice);
        grid.trajectory_steps = g.trajectory_steps;
        grid.refinement = g.refine.then(|| Refinement {
            rounds: g.rounds.unwrap_or(Refinement::default().rounds),
            ..Refinement::default()
        });
        Ok(grid)
    }

    fn admissible(&self, dim: usize) -> Result<AdmissibleSpec> {
        Ok(match &self.velocity_box {
            None => AdmissibleSpec::unbounded(),
            Some(b) if b.len() == dim && b.iter().all(|[lo, hi]| lo <= hi) => {
                AdmissibleSpec::unbounded().with_bound(VelocityBound::Box(b.iter().map(|[lo, hi]| (*lo, *hi)).collect()))
            }
            Some(_) => return Err(Error::config("velocity_box", format!("need {dim} intervals with lo ≤ hi"))),
        })
    }

    fn target(&self, dim: usize) -> Result<Vec<f64>> {
        if self.state.len() != dim {
            return Err(Error::config("state", format!("expected {dim} coordinates, got {}", self.state.len())));
        }
        Ok(self.state.clone())
    }

    fn impetus_spec(&self) -> Result<(ImpetusCostSpec, EconomyState)> {
        let e = need(&self.economy, "economy")?;
        let gamma_0 = e.gamma_0.radius("economy.gamma_0")?;
        let gamma = e
            .gamma
            .iter()
            .enumerate()
            .map(|(i, b)| b.radius(&format!("economy.gamma[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        if gamma.len() != e.allocations.len() {
            return Err(Error::config("economy.gamma", "one bound per agent is required"));
        }
        let mut spec = ImpetusCostSpec::from_catalog(&e.scalar_cost, gamma_0, gamma)
            .map_err(|err| Error::config("economy.scalar_cost", err.to_string()))?;
        if e.shared_prices {
            spec = spec.with_shared_prices();
        }
        let state = EconomyState::new(e.allocations.clone(), e.prices.clone())
            .map_err(|err| Error::config("economy.prices", err.to_string()))?;
        Ok((spec, state))
    }

    /// Resolves every catalog name and shape without running anything.
    pub fn validate(&self) -> Result<()> {
        if !(self.terminal_time.is_finite()) {
            return Err(Error::config("terminal_time", "must be finite"));
        }
        let dim = self.state_dim()?;
        self.terminal_cost(dim)?;
        self.rate_field()?;
        match self.kind {
            Kind::Classic | Kind::Generalized | Kind::Discounted => {
                self.cost_field(dim)?;
                self.outer_grid(dim)?;
                self.target(dim)?;
                self.admissible(dim)?;
            }
            Kind::Economy => {
                self.impetus_spec()?;
                self.outer_grid(dim)?;
            }
            Kind::Wtp => {
                let w = need(&self.wtp, "wtp")?;
                self.target(dim)?;
                if w.state_lo.len() != dim || w.state_hi.len() != dim || w.state_count.len() != dim {
                    return Err(Error::config("wtp", format!("state lattice needs {dim} coordinates")));
                }
            }
            Kind::Verify => {
                self.cost_field(dim)?;
                self.target(dim)?;
                need(&self.verify, "verify")?;
                if self.cost.is_some() && self.grid.is_some() {
                    self.outer_grid(dim)?;
                }
            }
        }
        Ok(())
    }
}

/// What a run produced: a one-line summary, the headline value, and files.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub summary: String,
    pub value: ExtReal,
    pub result: Option<ValueResult>,
    pub artifacts: Vec<(String, Vec<u8>)>,
}

impl Outcome {
    /// 0 on success, 3 when the value is `+∞`.
    pub fn exit_code(&self) -> i32 {
        if self.value.is_infinite() {
            3
        } else {
            0
        }
    }

    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        self.artifacts
            .iter()
            .map(|(name, bytes)| {
                let p = dir.join(name);
                fs::write(&p, bytes)?;
                Ok(p)
            })
            .collect()
    }
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

pub fn summary_line(res: &ValueResult) -> String {
    let mut s = format!("V={}", res.value);
    if let Some(opt) = &res.optimizer {
        s.push_str(&format!(" omega={} upsilon={}", opt.omega, fmt_vec(&opt.upsilon)));
    }
    match res.certificate_residual {
        Some(c) if c < 1e-9 => s.push_str(" cert<1e-9"),
        Some(c) => s.push_str(&format!(" cert={c:.3e}")),
        None => s.push_str(" cert=undefined"),
    }
    s
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn certificate_report(res: &ValueResult, terminal: &TerminalCost) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["quantity", "value"])?;
    let mut row = |k: &str, v: String| w.write_record([k, v.as_str()]);
    row("value", res.value.to_string())?;
    if let Some(opt) = &res.optimizer {
        row("omega_star", opt.omega.to_string())?;
        row("start_cost", opt.start_cost.to_string())?;
        row("discount", opt.discount.to_string())?;
        row("lambda_solver", opt.lambda.to_string())?;
        if opt.omega > 0.0 {
            let again = optimum_certificate(res, terminal, opt.lambda)?;
            row("solver_enrichment_gap", again.to_string())?;
        }
    }
    row(
        "certificate_residual",
        res.certificate_residual.map(|c| c.to_string()).unwrap_or_default(),
    )?;
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn value_artifacts(cfg: &ScenarioConfig, res: &ValueResult, terminal: &TerminalCost) -> Result<Vec<(String, Vec<u8>)>> {
    let mut out = Vec::new();
    let mut json = Vec::new();
    res.write_json(&mut json)?;
    json.push(b'\n');
    out.push(("result.json".to_string(), json));
    if let Some(tr) = res.trajectory() {
        out.push(("trajectory.csv".to_string(), csv_bytes(|b| tr.write_csv(b))?));
    }
    if cfg.outputs.certificate_report {
        out.push(("certificate.csv".to_string(), certificate_report(res, terminal)?));
    }
    Ok(out)
}

/// Runs the pipeline selected by `cfg.kind`.
pub fn run(cfg: &ScenarioConfig) -> Result<Outcome> {
    cfg.validate()?;
    let dim = cfg.state_dim()?;
    let terminal = cfg.terminal_cost(dim)?;
    match cfg.kind {
        Kind::Classic | Kind::Generalized | Kind::Discounted => {
            let cost = cfg.cost_field(dim)?;
            let grid = cfg.outer_grid(dim)?;
            let x = cfg.target(dim)?;
            let solve = |x: &[f64]| value_of(cfg, &terminal, &cost, &grid, x);
            let res = solve(&x)?;
            let mut artifacts = value_artifacts(cfg, &res, &terminal)?;
            if let Some(omegas) = &cfg.outputs.moderation_table {
                let table = build_moderation_table(&cost, cfg.terminal_time, &x, omegas, &grid.upsilon, &cfg.solver)?;
                artifacts.push(("moderation_table.csv".into(), csv_bytes(|b| table.write_csv(b))?));
            }
            if let Some(axes) = &cfg.outputs.value_surface {
                let lattice = surface_lattice(axes, dim)?;
                let rows = lattice
                    .points()
                    .map(|y| Ok((cfg.terminal_time, y.clone(), solve(&y)?.value)))
                    .collect::<Result<Vec<_>>>()?;
                artifacts.push(("value_surface.csv".into(), csv_bytes(|b| write_value_surface_csv(b, &rows))?));
            }
            Ok(Outcome {
                summary: summary_line(&res),
                value: res.value,
                result: Some(res),
                artifacts,
            })
        }
        Kind::Economy => {
            let (spec, state) = cfg.impetus_spec()?;
            let grid = cfg.outer_grid(dim)?;
            let res = economic_value(&terminal, &spec, cfg.terminal_time, &state, &grid, &cfg.solver)?;
            let mut artifacts = value_artifacts(cfg, &res, &terminal)?;
            if let Some(tr) = res.trajectory() {
                let layout = spec.layout(state.dim());
                artifacts.push(("agents.csv".into(), csv_bytes(|b| write_economy_trajectory_csv(b, tr, &layout))?));
            }
            Ok(Outcome {
                summary: summary_line(&res),
                value: res.value,
                result: Some(res),
                artifacts,
            })
        }
        Kind::Wtp => {
            let w = need(&cfg.wtp, "wtp")?;
            let x = cfg.target(dim)?;
            let lattice = Lattice::box_linspace(&w.state_lo, &w.state_hi, &w.state_count)
                .map_err(|e| Error::config("wtp.state_lo", e.to_string()))?;
            let v = wtp_value(&terminal, w.bound, cfg.terminal_time, &x, w.omega, &lattice)?;
            let json = serde_json::to_vec_pretty(&serde_json::json!({ "value": v, "omega": w.omega, "bound": w.bound }))?;
            Ok(Outcome {
                summary: format!("V={v} omega={}", w.omega),
                value: v,
                result: None,
                artifacts: vec![("result.json".into(), json)],
            })
        }
        Kind::Verify => verify(cfg),
    }
}

fn surface_lattice(axes: &[[f64; 3]], dim: usize) -> Result<Lattice> {
    if axes.len() != dim {
        return Err(Error::config("outputs.value_surface", format!("need {dim} axes")));
    }
    let axes = axes
        .iter()
        .map(|[lo, hi, n]| Axis::linspace(*lo, *hi, *n as usize))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::config("outputs.value_surface", e.to_string()))?;
    Ok(Lattice::new(axes))
}

fn value_of(cfg: &ScenarioConfig, terminal: &TerminalCost, cost: &CostField, grid: &OuterGrid, x: &[f64]) -> Result<ValueResult> {
    let admissible = cfg.admissible(x.len())?;
    match cfg.kind {
        Kind::Classic => classic_lax_hopf(terminal, cost, cfg.terminal_time, x, grid),
        Kind::Discounted => discounted_value(terminal, cost, &cfg.rate_field()?, cfg.terminal_time, x, grid, &admissible, &cfg.solver),
        _ => generalized_lax_hopf_admissible(terminal, cost, cfg.terminal_time, x, grid, &admissible, &cfg.solver),
    }
}

/// Convergence of the oracle towards the formula value (or, without an outer
/// grid, towards nothing in particular: the reference is then the finest level).
pub fn verify(cfg: &ScenarioConfig) -> Result<Outcome> {
    cfg.validate()?;
    let dim = cfg.state_dim()?;
    let v = need(&cfg.verify, "verify")?;
    let terminal = cfg.terminal_cost(dim)?;
    let cost = cfg.cost_field(dim)?;
    let x = cfg.target(dim)?;
    let reference = match &cfg.grid {
        Some(_) => {
            let grid = cfg.outer_grid(dim)?;
            let res = if cost.is_velocity_only() && cost.is_convex_in_u() {
                classic_lax_hopf(&terminal, &cost, cfg.terminal_time, &x, &grid)?
            } else {
                generalized_lax_hopf_admissible(&terminal, &cost, cfg.terminal_time, &x, &grid, &cfg.admissible(dim)?, &cfg.solver)?
            };
            res.value
                .finite()
                .ok_or_else(|| Error::InvalidArgument("the formula value is infinite, nothing to converge to".into()))?
        }
        None => return Err(Error::config("grid", "verify needs an outer grid for the formula reference")),
    };
    let scenario = ConvergenceScenario {
        terminal,
        cost,
        terminal_time: cfg.terminal_time,
        x,
        reference,
        state_box: v.state_box.iter().map(|[a, b]| (*a, *b)).collect(),
        velocity_box: v.velocity_box.iter().map(|[a, b]| (*a, *b)).collect(),
    };
    let table = convergence_study(&scenario, &v.levels).map_err(|e| match e {
        Error::InvalidArgument(m) => Error::config("verify.levels", m),
        other => other,
    })?;
    let ok = table.tail_non_increasing();
    let last = table.rows.last().map_or(f64::NAN, |r| r.error);
    Ok(Outcome {
        summary: format!(
            "reference={reference} levels={} final_error={last:e} contract={}",
            table.rows.len(),
            if ok { "ok" } else { "violated" }
        ),
        value: ExtReal::Finite(reference),
        result: None,
        artifacts: vec![("convergence.csv".into(), csv_bytes(|b| table.write_csv(b))?)],
    })
}

/// Conjugate table of the configured cost.
pub fn conjugate(cfg: &ScenarioConfig) -> Result<Outcome> {
    let dim = cfg.state_dim()?;
    let spec = need(&cfg.conjugate, "conjugate")?;
    let cost = cfg.cost_field(dim)?;
    let x = if spec.x.is_empty() { vec![0.0; dim] } else { spec.x.clone() };
    let dual = Axis::linspace(spec.dual[0], spec.dual[1], spec.dual_count).map_err(|e| Error::config("conjugate.dual", e.to_string()))?;
    let vel = Axis::linspace(spec.velocities[0], spec.velocities[1], spec.velocity_count)
        .map_err(|e| Error::config("conjugate.velocities", e.to_string()))?;
    let table = ConjugateTable::build(&cost, spec.t, &x, &dual, &vel)?;
    let violations = table.convexity_violations(1e-9).len();
    Ok(Outcome {
        summary: format!("conjugate points={} convexity_violations={violations}", table.dual_grid.len()),
        value: ExtReal::ZERO,
        result: None,
        artifacts: vec![("conjugate.csv".into(), csv_bytes(|b| table.write_csv(b))?)],
    })
}

/// Moderation table over the configured apertures and `Υ` lattice.
pub fn moderate_table(cfg: &ScenarioConfig) -> Result<Outcome> {
    let dim = cfg.state_dim()?;
    let cost = cfg.cost_field(dim)?;
    let grid = cfg.outer_grid(dim)?;
    let omegas = need(&cfg.outputs.moderation_table, "outputs.moderation_table")?;
    let x = cfg.target(dim)?;
    let table = build_moderation_table(&cost, cfg.terminal_time, &x, omegas, &grid.upsilon, &cfg.solver)?;
    let entries = table.values.iter().map(Vec::len).sum::<usize>();
    Ok(Outcome {
        summary: format!("moderation entries={entries}"),
        value: ExtReal::ZERO,
        result: None,
        artifacts: vec![("moderation_table.csv".into(), csv_bytes(|b| table.write_csv(b))?)],
    })
}

/// Exit code of an error: 2 for configuration problems, 1 otherwise.
pub fn error_exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::Json(_) => 2,
        _ => 1,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub parameter: f64,
    pub value: Option<ExtReal>,
    pub omega_star: Option<f64>,
    pub certificate: Option<f64>,
    pub exit_code: i32,
}

fn set_path(doc: &mut serde_json::Value, path: &str, v: f64) -> Result<()> {
    let mut cur = doc;
    for seg in path.split('.') {
        cur = match seg.parse::<usize>() {
            Ok(i) => cur.get_mut(i),
            Err(_) => cur.get_mut(seg),
        }
        .ok_or_else(|| Error::config(path, "axis does not address an existing field"))?;
    }
    if !cur.is_number() {
        return Err(Error::config(path, "axis does not address a numeric field"));
    }
    *cur = serde_json::json!(v);
    Ok(())
}

/// One run per value of the dotted `axis` path. Failed rows keep their exit
/// code and the sweep continues.
pub fn sweep(base: &serde_json::Value, axis: &str, values: &[f64]) -> Result<Vec<SweepRow>> {
    set_path(&mut base.clone(), axis, 0.0)?;
    Ok(values
        .iter()
        .map(|&v| {
            let mut doc = base.clone();
            let res = set_path(&mut doc, axis, v).and_then(|_| parse_config(doc)).and_then(|cfg| run(&cfg));
            match res {
                Ok(out) => SweepRow {
                    parameter: v,
                    value: Some(out.value),
                    omega_star: out.result.as_ref().and_then(ValueResult::omega_star),
                    certificate: out.result.as_ref().and_then(|r| r.certificate_residual),
                    exit_code: out.exit_code(),
                },
                Err(e) => SweepRow {
                    parameter: v,
                    value: None,
                    omega_star: None,
                    certificate: None,
                    exit_code: error_exit_code(&e),
                },
            }
        })
        .collect())
}

/// Columns `<axis>, V, omega_star, certificate, exit_code`.
pub fn write_sweep_csv<W: std::io::Write>(w: W, axis: &str, rows: &[SweepRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([axis, "V", "omega_star", "certificate", "exit_code"])?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    for r in rows {
        out.write_record([
            r.parameter.to_string(),
            opt(r.value.map(|v| v.to_string())),
            opt(r.omega_star.map(|v| v.to_string())),
            opt(r.certificate.map(|v| v.to_string())),
            r.exit_code.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
