//! Legendre-Fenchel conjugation by exhaustive maximization over a velocity
//! lattice.

use crate::convex::cost::{dot, eval_cost, CostField};
use crate::convex::ExtReal;
use crate::error::{Error, Result};
use crate::grid::{Axis, Lattice};

/// `max_{u ∈ grid} ⟨p, u⟩ − l(t, x, u)`, a lower bound of `l*(t, x, p)`.
pub fn legendre_fenchel(
    cost: &CostField,
    t: f64,
    x: &[f64],
    p: &[f64],
    velocity_grid: &Lattice,
) -> Result<f64> {
    if velocity_grid.dim() != cost.dim() || p.len() != cost.dim() {
        return Err(Error::InvalidArgument(format!(
            "conjugate dimension mismatch: cost {}, grid {}, dual {}",
            cost.dim(),
            velocity_grid.dim(),
            p.len()
        )));
    }
    let mut best: Option<f64> = None;
    for u in velocity_grid.points() {
        if let ExtReal::Finite(l) = eval_cost(cost, t, x, &u)? {
            let v = dot(p, &u) - l;
            best = Some(best.map_or(v, |b: f64| b.max(v)));
        }
    }
    best.ok_or(Error::EmptyDomain)
}

/// Whether `p ∈ ∂_u l(t, x, u)` up to `tol`, tested through the Fenchel
/// equality `⟨p, u⟩ = l(t, x, u) + l*(t, x, p)`.
pub fn subdifferential_check(
    cost: &CostField,
    t: f64,
    x: &[f64],
    u: &[f64],
    p: &[f64],
    grid: &Lattice,
    tol: f64,
) -> Result<bool> {
    if !cost.in_domain_box(u) {
        return Err(Error::Misuse(format!("velocity {u:?} outside the cost's domain box")));
    }
    let l = match eval_cost(cost, t, x, u)? {
        ExtReal::Finite(v) => v,
        ExtReal::PosInf => return Ok(false),
    };
    let conj = legendre_fenchel(cost, t, x, p, grid)?;
    Ok((dot(p, u) - l - conj).abs() <= tol)
}

/// One-dimensional slice `p ↦ l*(t, x, p)` tabulated on a dual grid.
#[derive(Clone, Debug)]
pub struct ConjugateTable {
    pub base_point: (f64, Vec<f64>),
    pub dual_grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl ConjugateTable {
    pub fn build(
        cost: &CostField,
        t: f64,
        x: &[f64],
        dual: &Axis,
        velocities: &Axis,
    ) -> Result<Self> {
        if cost.dim() != 1 {
            return Err(Error::Misuse("conjugate tables are one-dimensional slices".into()));
        }
        let lattice = Lattice::new(vec![velocities.clone()]);
        let dual_grid: Vec<f64> = dual.values().collect();
        let values = dual_grid
            .iter()
            .map(|&p| legendre_fenchel(cost, t, x, &[p], &lattice))
            .collect::<Result<Vec<_>>>()?;
        Ok(ConjugateTable {
            base_point: (t, x.to_vec()),
            dual_grid,
            values,
        })
    }

    /// Indices `k` where `l*(p_k)` exceeds the average of its neighbours by
    /// more than `tol` (the dual grid is uniform).
    pub fn convexity_violations(&self, tol: f64) -> Vec<usize> {
        (1..self.values.len().saturating_sub(1))
            .filter(|&k| self.values[k] > 0.5 * (self.values[k - 1] + self.values[k + 1]) + tol)
            .collect()
    }

    /// `max_k p_k·u − l*(p_k)`: conjugation of the tabulated slice.
    pub fn biconjugate(&self, u: f64) -> f64 {
        self.dual_grid
            .iter()
            .zip(&self.values)
            .map(|(&p, &v)| p * u - v)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["p", "lstar"])?;
        for (p, v) in self.dual_grid.iter().zip(&self.values) {
            out.write_record([p.to_string(), v.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}
