//! Sampled verification of the Marchaud growth and convexity conditions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::convex::cost::{norm_sq, CostField};

#[derive(Clone, Debug, PartialEq)]
pub enum MarchaudViolation {
    /// `l(t, x, u)` finite for some `‖u‖ > c(‖x‖ + |t| + 1)`.
    DomainGrowth { t: f64, x: Vec<f64>, u: Vec<f64> },
    Negative { t: f64, x: Vec<f64>, u: Vec<f64>, value: f64 },
    /// `l(t, x, u) > c(‖x‖ + |t| + 1)` on the domain.
    LinearGrowth { t: f64, x: Vec<f64>, u: Vec<f64>, value: f64, bound: f64 },
    MidpointConvexity { t: f64, x: Vec<f64>, u1: Vec<f64>, u2: Vec<f64> },
}

/// Box of `(t, x)` base points to sample.
#[derive(Clone, Debug)]
pub struct SampleBox {
    pub time: (f64, f64),
    pub state: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, Default)]
pub struct MarchaudReport {
    pub samples: usize,
    pub violations: Vec<MarchaudViolation>,
}

impl MarchaudReport {
    pub fn is_consistent(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has_domain_growth(&self) -> bool {
        self.violations.iter().any(|v| matches!(v, MarchaudViolation::DomainGrowth { .. }))
    }

    pub fn has_negative(&self) -> bool {
        self.violations.iter().any(|v| matches!(v, MarchaudViolation::Negative { .. }))
    }
}

const CONVEXITY_TOL: f64 = 1e-12;

/// Checks the four Marchaud conditions at `n_samples` random base points.
/// At each base point velocities are drawn inside the growth ball (clipped to
/// the cost's domain box when it has one), plus probes just outside the ball.
pub fn check_marchaud(
    cost: &CostField,
    c_const: f64,
    sample_box: &SampleBox,
    n_samples: usize,
    seed: u64,
) -> MarchaudReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = cost.dim();
    let mut report = MarchaudReport {
        samples: n_samples,
        violations: Vec::new(),
    };
    for _ in 0..n_samples.max(1) {
        let t = uniform(&mut rng, sample_box.time);
        let x: Vec<f64> = sample_box.state.iter().map(|&r| uniform(&mut rng, r)).collect();
        let radius = c_const * (norm_sq(&x).sqrt() + t.abs() + 1.0);

        // (i) nothing finite just outside the growth ball
        for scale in [1.01, 1.5, 4.0, 100.0] {
            let u = random_direction(&mut rng, dim)
                .into_iter()
                .map(|d| d * radius * scale)
                .collect::<Vec<_>>();
            if cost.raw(t, &x, &u).is_finite() {
                report.violations.push(MarchaudViolation::DomainGrowth { t, x: x.clone(), u });
                break;
            }
        }

        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..dim)
                .map(|d| {
                    let (mut lo, mut hi) = (-radius, radius);
                    if let Some(b) = cost.domain_box() {
                        lo = lo.max(b[d].0);
                        hi = hi.min(b[d].1);
                    }
                    if hi < lo {
                        lo
                    } else {
                        uniform(rng, (lo, hi))
                    }
                })
                .collect()
        };
        let u1 = draw(&mut rng);
        let u2 = draw(&mut rng);
        let l1 = cost.raw(t, &x, &u1);
        let l2 = cost.raw(t, &x, &u2);
        for (u, l) in [(&u1, l1), (&u2, l2)] {
            if !l.is_finite() {
                continue;
            }
            if l < 0.0 {
                report.violations.push(MarchaudViolation::Negative {
                    t,
                    x: x.clone(),
                    u: u.clone(),
                    value: l,
                });
            } else if l > radius {
                report.violations.push(MarchaudViolation::LinearGrowth {
                    t,
                    x: x.clone(),
                    u: u.clone(),
                    value: l,
                    bound: radius,
                });
            }
        }
        if l1.is_finite() && l2.is_finite() {
            let mid: Vec<f64> = u1.iter().zip(&u2).map(|(a, b)| 0.5 * (a + b)).collect();
            let lm = cost.raw(t, &x, &mid);
            if lm > 0.5 * (l1 + l2) + CONVEXITY_TOL * (1.0 + l1.abs() + l2.abs()) {
                report.violations.push(MarchaudViolation::MidpointConvexity {
                    t,
                    x: x.clone(),
                    u1,
                    u2,
                });
            }
        }
    }
    report
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

fn random_direction(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let n = norm_sq(&v).sqrt();
        if n > 1e-3 {
            return v.into_iter().map(|a| a / n).collect();
        }
    }
}
