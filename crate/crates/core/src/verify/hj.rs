use crate::convex::{legendre_fenchel, CostField, ExtReal};
use crate::error::{Error, Result};
use crate::grid::Lattice;
use crate::verify::ValueSurface;

/// Anything that can be sampled as `V(t, x)`. `None` means the point is not
/// represented (off a grid).
pub trait Surface {
    fn value(&self, t: f64, x: &[f64]) -> Option<ExtReal>;
}

impl Surface for ValueSurface {
    fn value(&self, t: f64, x: &[f64]) -> Option<ExtReal> {
        self.lookup(t, x)
    }
}

/// Closed-form surface.
pub struct AnalyticSurface<F>(pub F);

impl<F: Fn(f64, &[f64]) -> f64> Surface for AnalyticSurface<F> {
    fn value(&self, t: f64, x: &[f64]) -> Option<ExtReal> {
        ExtReal::new((self.0)(t, x)).ok()
    }
}

fn sample(surface: &impl Surface, t: f64, x: &[f64]) -> Result<f64> {
    match surface.value(t, x) {
        Some(ExtReal::Finite(v)) => Ok(v),
        Some(ExtReal::PosInf) => Err(Error::Undefined("hj residual: infinite value on the stencil")),
        None => Err(Error::Undefined("hj residual: stencil point not on the surface")),
    }
}

/// `∂V/∂t + l*(t, y, ∂V/∂x)` with centered differences of step `h` and the
/// conjugate maximized over `velocities`.
pub fn hj_residual(
    surface: &impl Surface,
    cost: &CostField,
    t: f64,
    y: &[f64],
    h: f64,
    velocities: &Lattice,
) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("stencil step must be positive, got {h}")));
    }
    let v_t = (sample(surface, t + h, y)? - sample(surface, t - h, y)?) / (2.0 * h);
    let mut grad = vec![0.0; y.len()];
    let mut z = y.to_vec();
    for d in 0..y.len() {
        z[d] = y[d] + h;
        let plus = sample(surface, t, &z)?;
        z[d] = y[d] - h;
        let minus = sample(surface, t, &z)?;
        z[d] = y[d];
        grad[d] = (plus - minus) / (2.0 * h);
    }
    Ok(v_t + legendre_fenchel(cost, t, y, &grad, velocities)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResidualRow {
    pub t: f64,
    pub x: Vec<f64>,
    /// `None` when the stencil touched an infinite or missing value.
    pub residual: Option<f64>,
}

/// Residuals at every `(t, y)` node; undefined residuals are kept as `None`.
pub fn hj_residual_report(
    surface: &(impl Surface + Sync),
    cost: &CostField,
    nodes: &[(f64, Vec<f64>)],
    h: f64,
    velocities: &Lattice,
) -> Result<Vec<ResidualRow>> {
    crate::exec::map(nodes, |(t, y)| match hj_residual(surface, cost, *t, y, h, velocities) {
        Ok(r) => Ok(ResidualRow {
            t: *t,
            x: y.clone(),
            residual: Some(r),
        }),
        Err(Error::Undefined(_)) => Ok(ResidualRow {
            t: *t,
            x: y.clone(),
            residual: None,
        }),
        Err(e) => Err(e),
    })
    .into_iter()
    .collect()
}

/// Columns `t, x_1..x_ℓ, residual` (empty when undefined).
pub fn write_residual_csv<W: std::io::Write>(w: W, rows: &[ResidualRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let dim = rows.first().map_or(1, |r| r.x.len());
    let mut header = vec!["t".to_string()];
    header.extend((1..=dim).map(|d| format!("x_{d}")));
    header.push("residual".into());
    out.write_record(&header)?;
    for r in rows {
        let mut row = vec![r.t.to_string()];
        row.extend(r.x.iter().map(f64::to_string));
        row.push(r.residual.map(|v| v.to_string()).unwrap_or_default());
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}
