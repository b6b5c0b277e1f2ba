use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{stratified_split, Dataset};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Draws `Σ_k x_k x_kᵀ` with `x_k ~ N(0, uuᵀ)`. For the rank-one scale this
/// collapses to `(Σ_k z_k²) · uuᵀ` with `z_k ~ N(0, 1)`.
pub fn wishart_sample<R: Rng + ?Sized>(u: &[f64], dof: usize, rng: &mut R) -> Result<Matrix> {
    if u.is_empty() {
        return Err(Error::InvalidParameter(
            "wishart factor must be nonempty".into(),
        ));
    }
    if dof == 0 {
        return Err(Error::InvalidParameter(
            "wishart dof must be at least 1".into(),
        ));
    }
    let s: f64 = (0..dof)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            z * z
        })
        .sum();
    let p = u.len();
    Ok(Matrix::from_fn(p, p, |i, j| s * (u[i] * u[j])))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationSpec {
    /// Side length of every sample.
    pub p: usize,
    /// Examples per trial before the 50/50 train/test split.
    pub n_total: usize,
    pub noise_sigma: f64,
    pub trials: usize,
    pub seed: u64,
}

impl SimulationSpec {
    pub fn new(p: usize, n_total: usize) -> Self {
        SimulationSpec {
            p,
            n_total,
            noise_sigma: 0.1,
            trials: 10,
            seed: 0,
        }
    }

    pub fn dof_class1(&self) -> usize {
        self.p
    }

    pub fn dof_class2(&self) -> usize {
        2 * self.p
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 2 {
            return Err(Error::InvalidParameter(format!(
                "p must be at least 2, got {}",
                self.p
            )));
        }
        if self.n_total < 4 || !self.n_total.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "n_total must be even and at least 4, got {}",
                self.n_total
            )));
        }
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise_sigma must be finite and nonnegative, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

/// Draws `per_class` samples for each entry of `dofs` (class id = position)
/// around one shared factor `u ~ N(0, I_p)`, plus entrywise Gaussian noise.
pub fn wishart_classes<R: Rng + ?Sized>(
    p: usize,
    per_class: usize,
    dofs: &[usize],
    noise_sigma: f64,
    rng: &mut R,
) -> Result<Dataset> {
    let u: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
    let mut samples = Vec::with_capacity(per_class * dofs.len());
    let mut labels = Vec::with_capacity(per_class * dofs.len());
    for (class, &dof) in dofs.iter().enumerate() {
        for _ in 0..per_class {
            let mut x = wishart_sample(&u, dof, rng)?;
            if noise_sigma > 0.0 {
                for v in x.as_mut_slice() {
                    let z: f64 = rng.sample(StandardNormal);
                    *v += noise_sigma * z;
                }
            }
            samples.push(x);
            labels.push(class as i32);
        }
    }
    Dataset::new(samples, labels)
}

/// One trial: class 0 with dof `p`, class 1 with dof `2p`, split in half.
/// The trial seed is `spec.seed + trial`.
pub fn generate_trial(spec: &SimulationSpec, trial: usize) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    let seed = spec.seed.wrapping_add(trial as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = wishart_classes(
        spec.p,
        spec.n_total / 2,
        &[spec.dof_class1(), spec.dof_class2()],
        spec.noise_sigma,
        &mut rng,
    )?;
    stratified_split(&data, 0.5, seed)
}

pub fn generate_simulation(spec: &SimulationSpec) -> Result<Vec<(Dataset, Dataset)>> {
    spec.validate()?;
    (0..spec.trials).map(|t| generate_trial(spec, t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_is_exactly_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u: Vec<f64> = (0..6).map(|_| rng.sample(StandardNormal)).collect();
        let x = wishart_sample(&u, 6, &mut rng).unwrap();
        assert_eq!(x, x.transpose());
    }

    #[test]
    fn basis_factor_has_single_entry() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = wishart_sample(&[1.0, 0.0, 0.0], 1, &mut rng).unwrap();
        assert!(x.get(0, 0) >= 0.0);
        let nonzero = x.as_slice().iter().filter(|v| **v != 0.0).count();
        assert!(nonzero <= 1);
    }

    #[test]
    fn rejects_zero_dof() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(wishart_sample(&[1.0], 0, &mut rng).is_err());
    }

    #[test]
    fn monte_carlo_mean_matches_dof_times_outer() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let u = [1.0, -0.5, 2.0];
        let dof = 4;
        let draws = 100_000;
        let mut acc = Matrix::zeros(3, 3);
        for _ in 0..draws {
            acc.axpy(
                1.0 / draws as f64,
                &wishart_sample(&u, dof, &mut rng).unwrap(),
            )
            .unwrap();
        }
        for i in 0..3 {
            for j in 0..3 {
                let expect = dof as f64 * u[i] * u[j];
                assert!(
                    (acc.get(i, j) - expect).abs() <= 0.05 * expect.abs(),
                    "({i},{j}): {} vs {expect}",
                    acc.get(i, j)
                );
            }
        }
    }

    #[test]
    fn trial_is_balanced() {
        let spec = SimulationSpec::new(10, 100);
        let (train, test) = generate_trial(&spec, 0).unwrap();
        assert_eq!((train.len(), test.len()), (50, 50));
        for d in [&train, &test] {
            assert_eq!(
                d.class_counts().values().copied().collect::<Vec<_>>(),
                [25, 25]
            );
            assert_eq!(d.shape(), (10, 10));
        }
    }

    #[test]
    fn noiseless_samples_are_rank_one_multiples() {
        let spec = SimulationSpec {
            noise_sigma: 0.0,
            ..SimulationSpec::new(4, 8)
        };
        let (train, test) = generate_trial(&spec, 1).unwrap();
        let all: Vec<&Matrix> = train.samples().iter().chain(test.samples()).collect();
        let reference = all[0];
        for x in &all {
            assert_eq!(**x, x.transpose());
            // Every sample is a nonnegative multiple of the same uuᵀ.
            let ratio = x.get(0, 0) / reference.get(0, 0);
            for (a, b) in x.as_slice().iter().zip(reference.as_slice()) {
                assert!((a - ratio * b).abs() <= 1e-9 * (1.0 + a.abs()));
            }
            // 2x2 minors vanish for a rank-one matrix.
            let minor = x.get(0, 0) * x.get(1, 1) - x.get(0, 1) * x.get(1, 0);
            assert!(minor.abs() <= 1e-9 * (1.0 + x.get(0, 0).abs() * x.get(1, 1).abs()));
        }
    }

    #[test]
    fn simulation_replays() {
        let spec = SimulationSpec {
            trials: 3,
            seed: 77,
            ..SimulationSpec::new(3, 12)
        };
        assert_eq!(
            generate_simulation(&spec).unwrap(),
            generate_simulation(&spec).unwrap()
        );
        let other = SimulationSpec {
            seed: 78,
            ..spec.clone()
        };
        assert_ne!(
            generate_simulation(&spec).unwrap(),
            generate_simulation(&other).unwrap()
        );
    }

    #[test]
    fn spec_validation() {
        assert!(SimulationSpec::new(1, 10).validate().is_err());
        assert!(SimulationSpec::new(3, 11).validate().is_err());
        let zero = SimulationSpec {
            trials: 0,
            ..SimulationSpec::new(3, 10)
        };
        assert!(zero.validate().is_err());
    }
}
