//! Uniform axes and box lattices shared by the conjugate, outer search and
//! dynamic-programming code.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub step: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(lo: f64, step: f64, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidArgument("axis needs at least one point".into()));
        }
        if !(lo.is_finite() && step.is_finite()) || (count > 1 && step <= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "axis lo={lo} step={step} is not a finite increasing grid"
            )));
        }
        Ok(Axis { lo, step, count })
    }

    /// `count` points from `lo` to `hi` inclusive. A single point sits at `lo`.
    pub fn linspace(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if hi < lo {
            return Err(Error::InvalidArgument(format!("axis hi={hi} below lo={lo}")));
        }
        let step = if count > 1 {
            (hi - lo) / (count - 1) as f64
        } else {
            0.0
        };
        if count > 1 && step == 0.0 {
            return Ok(Axis { lo, step: 0.0, count: 1 });
        }
        Axis::new(lo, step, count)
    }

    pub fn value(&self, i: usize) -> f64 {
        let v = self.lo + i as f64 * self.step;
        // keep lattice points that should be 0 at exactly 0
        if v.abs() < 1e-12 * self.step {
            0.0
        } else {
            v
        }
    }

    pub fn hi(&self) -> f64 {
        self.value(self.count - 1)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(move |i| self.value(i))
    }

    /// Index of the node within `tol` of `v`.
    pub fn index_of(&self, v: f64, tol: f64) -> Option<usize> {
        if self.count == 1 {
            return ((v - self.lo).abs() <= tol).then_some(0);
        }
        let r = ((v - self.lo) / self.step).round();
        if r < 0.0 || r >= self.count as f64 {
            return None;
        }
        let i = r as usize;
        ((self.value(i) - v).abs() <= tol).then_some(i)
    }
}

/// Cartesian product of axes, row-major with the last axis fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub axes: Vec<Axis>,
}

impl Lattice {
    pub fn new(axes: Vec<Axis>) -> Self {
        Lattice { axes }
    }

    pub fn box_linspace(lo: &[f64], hi: &[f64], counts: &[usize]) -> Result<Self> {
        if lo.len() != hi.len() || lo.len() != counts.len() {
            return Err(Error::InvalidArgument("lattice bounds have mismatched lengths".into()));
        }
        let axes = lo
            .iter()
            .zip(hi)
            .zip(counts)
            .map(|((&l, &h), &n)| Axis::linspace(l, h, n))
            .collect::<Result<Vec<_>>>()?;
        Ok(Lattice { axes })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.axes.len()];
        for (d, axis) in self.axes.iter().enumerate().rev() {
            idx[d] = flat % axis.count;
            flat /= axis.count;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.axes)
            .fold(0, |acc, (&i, a)| acc * a.count + i)
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .zip(&self.axes)
            .map(|(&i, a)| a.value(i))
            .collect()
    }

    pub fn points(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(move |k| self.point(k))
    }
}
