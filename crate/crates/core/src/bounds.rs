//! Generalization gap terms and Rademacher-average checks.
//!
//! The Rademacher estimators compute the norm quantities that the
//! complexity bounds control: `(1/N) E ||sum s_i X_i||_H(V)` for the weighted
//! norm and `(n/N) E ||sum s_i X_i||_1` for the induced 1-norm, with the
//! expectation over uniform signs `s in {-1, +1}^N`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::{h_norm, HNormContext, Matrix};

/// Largest sample count for which the sign expectation is enumerated.
pub const EXACT_MAX_SAMPLES: usize = 12;

/// Slack for the dominance comparison between the two norms.
pub const NORM_CHAIN_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundInputs {
    pub n_samples: usize,
    /// Lipschitz constant of the loss.
    pub rho: f64,
    pub delta: f64,
    /// Bound on the sample norms.
    pub radius: f64,
    /// Bound on the weight norm.
    pub weight_bound: f64,
    /// Upper bound of the loss.
    pub loss_cap: f64,
    /// Sample shape, used by the 1-norm bound only.
    pub m: usize,
    pub n: usize,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if self.n_samples == 0 {
            return bad("bound needs at least one sample");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("delta must lie in (0, 1)");
        }
        for (name, v) in [
            ("rho", self.rho),
            ("radius", self.radius),
            ("weight_bound", self.weight_bound),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.loss_cap >= 0.0 && self.loss_cap.is_finite()) {
            return bad("loss_cap must be nonnegative");
        }
        if self.m == 0 || self.n == 0 {
            return bad("sample shape must be positive");
        }
        Ok(())
    }

    fn confidence_term(&self) -> f64 {
        self.loss_cap * (2.0 * (2.0 / self.delta).ln() / self.n_samples as f64).sqrt()
    }
}

/// Gap term `2 rho B R / sqrt(N) + c sqrt(2 ln(2/delta) / N)` for norm-ball
/// hypothesis classes.
pub fn gap_bound_norm_ball(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    let n = inputs.n_samples as f64;
    Ok(
        2.0 * inputs.rho * inputs.weight_bound * inputs.radius / n.sqrt()
            + inputs.confidence_term(),
    )
}

/// Same gap term, read with the weighted-norm constants of the kernel
/// classifier.
pub fn gap_bound_hnorm(inputs: &BoundInputs) -> Result<f64> {
    gap_bound_norm_ball(inputs)
}

/// Gap term `2 rho B R n sqrt(2 (m ln 2 + ln n) / N) + c sqrt(2 ln(2/delta) / N)`
/// for the 1-norm-bounded class.
pub fn gap_bound_onenorm(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    let n = inputs.n_samples as f64;
    let cols = inputs.n as f64;
    let factor = (2.0 * (inputs.m as f64 * 2f64.ln() + cols.ln()) / n).sqrt();
    Ok(
        2.0 * inputs.rho * inputs.weight_bound * inputs.radius * cols * factor
            + inputs.confidence_term(),
    )
}

/// Mean over sign vectors with its standard error. Exact estimates come
/// from full enumeration and carry zero error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub exact: bool,
}

fn check_samples(samples: &[Matrix]) -> Result<(usize, usize)> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidParameter("no samples".into()))?;
    let shape = first.shape();
    if let Some(bad) = samples.iter().find(|s| s.shape() != shape) {
        return Err(Error::dimension(
            format!("{}x{}", shape.0, shape.1),
            format!("{}x{}", bad.rows(), bad.cols()),
        ));
    }
    Ok(shape)
}

fn signed_sum(samples: &[Matrix], signs: impl Iterator<Item = bool>) -> Matrix {
    let (m, n) = samples[0].shape();
    let mut acc = Matrix::zeros(m, n);
    for (x, positive) in samples.iter().zip(signs) {
        acc.axpy(if positive { 1.0 } else { -1.0 }, x)
            .expect("shapes checked");
    }
    acc
}

/// Averages `norm(sum s_i X_i)` over all `2^N` sign vectors. Flipping every
/// sign leaves the norm unchanged, so only vectors with `s_0 = +1` are
/// visited.
fn enumerate<F>(samples: &[Matrix], norm: F) -> Result<Estimate>
where
    F: Fn(&Matrix) -> Result<f64> + Sync,
{
    let count = samples.len();
    if count > EXACT_MAX_SAMPLES {
        return Err(Error::InvalidParameter(format!(
            "exact enumeration supports at most {EXACT_MAX_SAMPLES} samples, got {count}"
        )));
    }
    let half = 1usize << (count - 1);
    let total = (0..half)
        .into_par_iter()
        .map(|mask| {
            let signs = (0..count).map(|i| i == 0 || mask >> (i - 1) & 1 == 1);
            norm(&signed_sum(samples, signs))
        })
        .collect::<Result<Vec<f64>>>()?
        .iter()
        .sum::<f64>();
    Ok(Estimate {
        mean: total / half as f64,
        stderr: 0.0,
        exact: true,
    })
}

/// Monte-Carlo average. Draw `d` uses stream `d` of a ChaCha generator
/// seeded with `seed`, so the result does not depend on scheduling.
fn monte_carlo<F>(samples: &[Matrix], draws: usize, seed: u64, norm: F) -> Result<Estimate>
where
    F: Fn(&Matrix) -> Result<f64> + Sync,
{
    if draws < 100 {
        return Err(Error::InvalidParameter(format!(
            "need at least 100 draws, got {draws}"
        )));
    }
    let values = (0..draws)
        .into_par_iter()
        .map(|d| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(d as u64);
            let signs: Vec<bool> = (0..samples.len()).map(|_| rng.random()).collect();
            norm(&signed_sum(samples, signs.into_iter()))
        })
        .collect::<Result<Vec<f64>>>()?;
    let k = draws as f64;
    let mean = values.iter().sum::<f64>() / k;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    Ok(Estimate {
        mean,
        stderr: (var / k).sqrt(),
        exact: false,
    })
}

fn scaled(e: Estimate, factor: f64) -> Estimate {
    Estimate {
        mean: e.mean * factor,
        stderr: e.stderr * factor,
        exact: e.exact,
    }
}

/// Monte-Carlo estimate of `(1/N) E ||sum s_i X_i||_H(V)`.
pub fn rademacher_mc_hnorm(
    samples: &[Matrix],
    ctx: &HNormContext,
    draws: usize,
    seed: u64,
) -> Result<Estimate> {
    check_samples(samples)?;
    let e = monte_carlo(samples, draws, seed, |s| h_norm(s, ctx))?;
    Ok(scaled(e, 1.0 / samples.len() as f64))
}

/// Enumerated value of `(1/N) E ||sum s_i X_i||_H(V)` for small `N`.
pub fn rademacher_exact_hnorm(samples: &[Matrix], ctx: &HNormContext) -> Result<Estimate> {
    check_samples(samples)?;
    let e = enumerate(samples, |s| h_norm(s, ctx))?;
    Ok(scaled(e, 1.0 / samples.len() as f64))
}

/// Monte-Carlo estimate of `(n/N) E ||sum s_i X_i||_1`.
pub fn rademacher_mc_onenorm(samples: &[Matrix], draws: usize, seed: u64) -> Result<Estimate> {
    let (_, n) = check_samples(samples)?;
    let e = monte_carlo(samples, draws, seed, |s| Ok(s.one_norm()))?;
    Ok(scaled(e, n as f64 / samples.len() as f64))
}

/// Enumerated value of `(n/N) E ||sum s_i X_i||_1` for small `N`.
pub fn rademacher_exact_onenorm(samples: &[Matrix]) -> Result<Estimate> {
    let (_, n) = check_samples(samples)?;
    let e = enumerate(samples, |s| Ok(s.one_norm()))?;
    Ok(scaled(e, n as f64 / samples.len() as f64))
}

/// `max_i ||X_i||_H(V) / sqrt(N)`.
pub fn rademacher_bound_hnorm(samples: &[Matrix], ctx: &HNormContext) -> Result<f64> {
    check_samples(samples)?;
    let mut max = 0.0f64;
    for x in samples {
        max = max.max(h_norm(x, ctx)?);
    }
    Ok(max / (samples.len() as f64).sqrt())
}

/// `n max_i ||X_i||_1 sqrt(2 (m ln 2 + ln n) / N)`.
pub fn rademacher_bound_onenorm(samples: &[Matrix]) -> Result<f64> {
    let (m, n) = check_samples(samples)?;
    let max = samples.iter().map(Matrix::one_norm).fold(0.0, f64::max);
    let factor = (2.0 * (m as f64 * 2f64.ln() + (n as f64).ln()) / samples.len() as f64).sqrt();
    Ok(n as f64 * max * factor)
}

/// An estimate compared against its bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RademacherCheck {
    pub estimate: Estimate,
    pub bound: f64,
    pub passed: bool,
}

impl RademacherCheck {
    /// Exact estimates must not exceed the bound beyond rounding
    /// (`1e-12` relative); sampled ones get three standard errors.
    pub fn new(estimate: Estimate, bound: f64) -> Self {
        let limit = if estimate.exact {
            bound + 1e-12 * bound.abs()
        } else {
            bound + 3.0 * estimate.stderr
        };
        RademacherCheck {
            estimate,
            bound,
            passed: estimate.mean <= limit,
        }
    }
}

/// Weighted-norm check, enumerating when `N` is small enough.
pub fn check_rademacher_hnorm(
    samples: &[Matrix],
    ctx: &HNormContext,
    draws: usize,
    seed: u64,
) -> Result<RademacherCheck> {
    let estimate = if samples.len() <= EXACT_MAX_SAMPLES {
        rademacher_exact_hnorm(samples, ctx)?
    } else {
        rademacher_mc_hnorm(samples, ctx, draws, seed)?
    };
    Ok(RademacherCheck::new(
        estimate,
        rademacher_bound_hnorm(samples, ctx)?,
    ))
}

/// 1-norm check, enumerating when `N` is small enough.
pub fn check_rademacher_onenorm(
    samples: &[Matrix],
    draws: usize,
    seed: u64,
) -> Result<RademacherCheck> {
    let estimate = if samples.len() <= EXACT_MAX_SAMPLES {
        rademacher_exact_onenorm(samples)?
    } else {
        rademacher_mc_onenorm(samples, draws, seed)?
    };
    Ok(RademacherCheck::new(
        estimate,
        rademacher_bound_onenorm(samples)?,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormChainReport {
    pub h_norm: f64,
    pub frobenius: f64,
    pub dominated: bool,
}

/// Evaluates both norms of `x` and whether the weighted one stays below the
/// Frobenius norm.
pub fn norm_chain_check(x: &Matrix, ctx: &HNormContext) -> Result<NormChainReport> {
    let h = h_norm(x, ctx)?;
    let f = x.frobenius_norm();
    Ok(NormChainReport {
        h_norm: h,
        frobenius: f,
        dominated: h <= f + NORM_CHAIN_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    fn inputs() -> BoundInputs {
        BoundInputs {
            n_samples: 100,
            rho: 1.0,
            delta: 0.05,
            radius: 1.0,
            weight_bound: 1.0,
            loss_cap: 1.0,
            m: 1,
            n: 1,
        }
    }

    fn random_samples(count: usize, m: usize, n: usize, seed: u64) -> Vec<Matrix> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| Matrix::from_fn(m, n, |_, _| rng.sample(StandardNormal)))
            .collect()
    }

    fn psd_context(n: usize, seed: u64) -> HNormContext {
        let w = random_samples(1, n, n, seed).remove(0);
        HNormContext::new(&w.transpose().matmul(&w).unwrap()).unwrap()
    }

    #[test]
    fn hnorm_gap_arithmetic() {
        let i = BoundInputs {
            rho: 1.0,
            weight_bound: 2.0,
            radius: 3.0,
            loss_cap: 5.0,
            ..inputs()
        };
        let expect = 12.0 / 10.0 + 5.0 * (2.0 * 40f64.ln() / 100.0).sqrt();
        assert!((gap_bound_hnorm(&i).unwrap() - expect).abs() < 1e-12);
        assert!((gap_bound_hnorm(&i).unwrap() - 2.5577).abs() < 1e-3);
    }

    #[test]
    fn norm_ball_gap_delta_limit() {
        let i = BoundInputs {
            delta: 1.0 - 1e-12,
            ..inputs()
        };
        // ln(2/delta) tends to ln 2, not 0, so only the loss-free gap
        // reduces to 2/sqrt(N).
        let expect = 0.2 + (2.0 * 2f64.ln() / 100.0).sqrt();
        assert!((gap_bound_norm_ball(&i).unwrap() - expect).abs() < 1e-10);
        let no_loss = BoundInputs { loss_cap: 0.0, ..i };
        assert!((gap_bound_norm_ball(&no_loss).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn onenorm_gap_arithmetic() {
        let i = BoundInputs {
            loss_cap: 0.0,
            m: 4,
            n: 2,
            ..inputs()
        };
        let expect = 4.0 * (10.0 * 2f64.ln() / 100.0).sqrt();
        assert!((gap_bound_onenorm(&i).unwrap() - expect).abs() < 1e-12);
        assert!((expect - 1.0530).abs() < 1e-3);
        let unit = BoundInputs {
            loss_cap: 0.0,
            ..inputs()
        };
        let reduced = 2.0 * (2.0 * 2f64.ln() / 100.0).sqrt();
        assert!((gap_bound_onenorm(&unit).unwrap() - reduced).abs() < 1e-12);
    }

    #[test]
    fn gaps_are_monotone() {
        let base = BoundInputs {
            m: 3,
            n: 2,
            ..inputs()
        };
        for f in [gap_bound_norm_ball, gap_bound_onenorm] {
            let g = f(&base).unwrap();
            assert!(g >= 0.0);
            assert!(
                f(&BoundInputs {
                    n_samples: 200,
                    ..base
                })
                .unwrap()
                    < g
            );
            assert!(f(&BoundInputs { rho: 2.0, ..base }).unwrap() > g);
            assert!(
                f(&BoundInputs {
                    weight_bound: 2.0,
                    ..base
                })
                .unwrap()
                    > g
            );
            assert!(
                f(&BoundInputs {
                    radius: 2.0,
                    ..base
                })
                .unwrap()
                    > g
            );
            assert!(
                f(&BoundInputs {
                    loss_cap: 2.0,
                    ..base
                })
                .unwrap()
                    > g
            );
            assert!(
                f(&BoundInputs {
                    delta: 0.01,
                    ..base
                })
                .unwrap()
                    > g
            );
        }
    }

    #[test]
    fn invalid_inputs() {
        assert!(gap_bound_norm_ball(&BoundInputs {
            delta: 1.0,
            ..inputs()
        })
        .is_err());
        assert!(gap_bound_norm_ball(&BoundInputs {
            n_samples: 0,
            ..inputs()
        })
        .is_err());
        assert!(gap_bound_onenorm(&BoundInputs {
            rho: 0.0,
            ..inputs()
        })
        .is_err());
    }

    #[test]
    fn single_sample_estimates_are_exact_norms() {
        let x = random_samples(1, 3, 2, 4);
        let ctx = psd_context(2, 5);
        let h = h_norm(&x[0], &ctx).unwrap();
        let mc = rademacher_mc_hnorm(&x, &ctx, 200, 1).unwrap();
        assert!((mc.mean - h).abs() < 1e-12);
        assert!(mc.stderr < 1e-12);
        let one = rademacher_mc_onenorm(&x, 200, 1).unwrap();
        assert!((one.mean - 2.0 * x[0].one_norm()).abs() < 1e-12);
        let exact = rademacher_exact_onenorm(&x).unwrap();
        assert_eq!(exact.mean, 2.0 * x[0].one_norm());
    }

    /// Straight loop over every sign vector, without the symmetry shortcut.
    fn brute_force(samples: &[Matrix], norm: impl Fn(&Matrix) -> f64) -> f64 {
        let count = samples.len();
        let mut total = 0.0;
        for mask in 0..1usize << count {
            let mut acc = Matrix::zeros(samples[0].rows(), samples[0].cols());
            for (i, x) in samples.iter().enumerate() {
                let s = if mask >> i & 1 == 1 { 1.0 } else { -1.0 };
                acc.axpy(s, x).unwrap();
            }
            total += norm(&acc);
        }
        total / (1usize << count) as f64
    }

    #[test]
    fn enumeration_matches_brute_force() {
        let x = random_samples(7, 3, 2, 6);
        let ctx = psd_context(2, 7);
        let oracle = brute_force(&x, |s| h_norm(s, &ctx).unwrap()) / 7.0;
        let got = rademacher_exact_hnorm(&x, &ctx).unwrap();
        assert!(got.exact);
        assert!((got.mean - oracle).abs() < 1e-12 * oracle);
        let oracle1 = brute_force(&x, |s| s.one_norm()) * 2.0 / 7.0;
        let got1 = rademacher_exact_onenorm(&x).unwrap();
        assert!((got1.mean - oracle1).abs() < 1e-12 * oracle1);
    }

    #[test]
    fn exact_checks_pass_at_eight() {
        let x = random_samples(8, 4, 3, 8);
        let ctx = psd_context(3, 9);
        let hn = check_rademacher_hnorm(&x, &ctx, 1000, 0).unwrap();
        let on = check_rademacher_onenorm(&x, 1000, 0).unwrap();
        assert!(hn.estimate.exact && hn.passed);
        assert!(on.estimate.exact && on.passed);
    }

    #[test]
    fn monte_carlo_checks_pass_and_replay() {
        let x = random_samples(50, 4, 3, 10);
        let ctx = psd_context(3, 11);
        let a = check_rademacher_hnorm(&x, &ctx, 1000, 3).unwrap();
        let b = check_rademacher_hnorm(&x, &ctx, 1000, 3).unwrap();
        assert_eq!(a, b);
        assert!(!a.estimate.exact && a.passed);
        assert!(check_rademacher_onenorm(&x, 1000, 3).unwrap().passed);
        assert!(rademacher_mc_hnorm(&x, &ctx, 99, 0).is_err());
        assert!(rademacher_exact_hnorm(&x, &ctx).is_err());
    }

    #[test]
    fn norm_chain_examples() {
        let ctx = HNormContext::new(&Matrix::identity(2)).unwrap();
        let zero = norm_chain_check(&Matrix::zeros(2, 2), &ctx).unwrap();
        assert_eq!(
            (zero.h_norm, zero.frobenius, zero.dominated),
            (0.0, 0.0, true)
        );
        let eye = norm_chain_check(&Matrix::identity(2), &ctx).unwrap();
        assert!((eye.h_norm - 2f64.powf(0.25)).abs() < 1e-12);
        assert!((eye.frobenius - 2f64.sqrt()).abs() < 1e-12);
        assert!(eye.dominated);
    }
}
