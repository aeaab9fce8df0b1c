use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::convex::CostField;
use crate::error::{Error, Result};
use crate::exec;
use crate::moderation::{raw_gap, SolverConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct JensenSampleSpec {
    pub n_samples: usize,
    pub omega: (f64, f64),
    /// Range of every coordinate of `Υ`.
    pub upsilon: (f64, f64),
    pub terminal_time: f64,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for JensenSampleSpec {
    fn default() -> Self {
        JensenSampleSpec {
            n_samples: 20,
            omega: (0.1, 2.0),
            upsilon: (-2.0, 2.0),
            terminal_time: 1.0,
            tolerance: 1e-5,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct JensenSample {
    pub omega: f64,
    pub upsilon: Vec<f64>,
    /// `Λ − l(Υ)`.
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct JensenReport {
    pub samples: Vec<JensenSample>,
    pub max_abs_gap: f64,
    /// Indices of samples whose gap exceeds the tolerance (convex costs only).
    pub failures: Vec<usize>,
    /// The cost is not declared convex, so nonzero gaps are expected.
    pub expected_nonconvex: bool,
}

impl JensenReport {
    pub fn passed(&self) -> bool {
        self.expected_nonconvex || self.failures.is_empty()
    }
}

/// Compares the moderation with the cost itself over random `(Ω, Υ)`.
/// Costs not declared convex are run anyway and flagged rather than failed.
pub fn jensen_suite(cost: &CostField, spec: &JensenSampleSpec, cfg: &SolverConfig) -> Result<JensenReport> {
    if !cost.is_velocity_only() {
        return Err(Error::Misuse(format!("jensen suite needs a velocity-only cost, `{}` is not", cost.name())));
    }
    let dim = cost.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(exec::derive_seed(spec.seed, "jensen", &[]));
    let points: Vec<(f64, Vec<f64>)> = (0..spec.n_samples)
        .map(|_| {
            let omega = rng.gen_range(spec.omega.0..=spec.omega.1);
            let ups = (0..dim).map(|_| rng.gen_range(spec.upsilon.0..=spec.upsilon.1)).collect();
            (omega, ups)
        })
        .collect();
    let x = vec![0.0; dim];
    let samples = exec::map(&points, |(omega, ups)| {
        raw_gap(cost, spec.terminal_time, &x, *omega, ups, cfg).map(|gap| JensenSample {
            omega: *omega,
            upsilon: ups.clone(),
            gap,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let max_abs_gap = samples.iter().map(|s| s.gap.abs()).fold(0.0, f64::max);
    let expected_nonconvex = !cost.is_convex_in_u();
    let failures = if expected_nonconvex {
        Vec::new()
    } else {
        samples
            .iter()
            .enumerate()
            .filter(|(_, s)| !(s.gap.abs() <= spec.tolerance))
            .map(|(i, _)| i)
            .collect()
    };
    Ok(JensenReport {
        samples,
        max_abs_gap,
        failures,
        expected_nonconvex,
    })
}
