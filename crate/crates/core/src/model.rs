//! Binary classifier built from a solved dual.

use crate::error::{Error, Result};
use crate::kernel::{eval_kernel, CacheMode, GramCache, KernelSpec};
use crate::matrix::{frobenius_inner, Matrix};
use crate::smo::{solve_with_cache, SolveStatus, SolverConfig};

/// Multipliers at or below this value are dropped from the support set.
pub const SUPPORT_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingMeta {
    pub iterations: usize,
    pub accepted_steps: usize,
    pub objective: f64,
    pub status: SolveStatus,
}

impl TrainingMeta {
    pub fn kkt_converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

/// Support samples with their signed multipliers `a_i y_i`, the weight
/// matrix `V` (the final aggregate matrix) and the bias.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedBinaryModel {
    support_samples: Vec<Matrix>,
    coefficients: Vec<f64>,
    v_matrix: Matrix,
    v_fro: f64,
    bias: f64,
    kernel: KernelSpec,
    shape: (usize, usize),
    degenerate: bool,
    meta: TrainingMeta,
}

impl TrainedBinaryModel {
    /// Assembles a model from stored parts. The model is degenerate, and
    /// predicts `sign(bias)`, when `V` vanishes or `degenerate` is set.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        support_samples: Vec<Matrix>,
        coefficients: Vec<f64>,
        v_matrix: Matrix,
        bias: f64,
        kernel: KernelSpec,
        shape: (usize, usize),
        degenerate: bool,
        meta: TrainingMeta,
    ) -> Result<Self> {
        kernel.validate()?;
        if support_samples.len() != coefficients.len() {
            return Err(Error::dimension(
                format!("{} coefficients", support_samples.len()),
                format!("{} coefficients", coefficients.len()),
            ));
        }
        if let Some(bad) = support_samples.iter().find(|s| s.shape() != shape) {
            return Err(Error::dimension(
                format!("{}x{} support sample", shape.0, shape.1),
                format!("{}x{}", bad.rows(), bad.cols()),
            ));
        }
        if v_matrix.shape() != (shape.1, shape.1) {
            return Err(Error::dimension(
                format!("{0}x{0} weight matrix", shape.1),
                format!("{}x{}", v_matrix.rows(), v_matrix.cols()),
            ));
        }
        if !bias.is_finite() || coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("model bias or coefficients".into()));
        }
        let v_fro = v_matrix.frobenius_norm();
        Ok(TrainedBinaryModel {
            support_samples,
            coefficients,
            v_matrix,
            v_fro,
            bias,
            kernel,
            shape,
            degenerate: degenerate || v_fro == 0.0,
            meta,
        })
    }

    pub fn support_samples(&self) -> &[Matrix] {
        &self.support_samples
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn v_matrix(&self) -> &Matrix {
        &self.v_matrix
    }

    pub fn v_fro(&self) -> f64 {
        self.v_fro
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn meta(&self) -> &TrainingMeta {
        &self.meta
    }

    pub fn support_count(&self) -> usize {
        self.support_samples.len()
    }

    /// `<sum_i c_i K(X_i, z), V / ||V||> + b`.
    pub fn decision_value(&self, z: &Matrix) -> Result<f64> {
        if z.shape() != self.shape {
            return Err(Error::dimension(
                format!("{}x{}", self.shape.0, self.shape.1),
                format!("{}x{}", z.rows(), z.cols()),
            ));
        }
        if self.degenerate {
            return Ok(self.bias);
        }
        let mut acc = 0.0;
        for (sv, &c) in self.support_samples.iter().zip(&self.coefficients) {
            let k = eval_kernel(&self.kernel, sv, z)?;
            acc += c * frobenius_inner(&k, &self.v_matrix)?;
        }
        Ok(acc / self.v_fro + self.bias)
    }

    /// Sign of the decision value, with an exact zero mapped to `+1`.
    pub fn predict_label(&self, z: &Matrix) -> Result<i32> {
        Ok(sign_label(self.decision_value(z)?))
    }
}

pub fn sign_label(value: f64) -> i32 {
    if value >= 0.0 {
        1
    } else {
        -1
    }
}

fn check_labels(labels: &[i32]) -> Result<Vec<f64>> {
    labels
        .iter()
        .map(|&l| match l {
            1 => Ok(1.0),
            -1 => Ok(-1.0),
            other => Err(Error::InvalidParameter(format!(
                "binary labels must be -1 or +1, got {other}"
            ))),
        })
        .collect()
}

/// Trains on `samples` with labels in `{-1, +1}`.
pub fn train_binary(
    samples: &[Matrix],
    labels: &[i32],
    spec: KernelSpec,
    cfg: &SolverConfig,
) -> Result<TrainedBinaryModel> {
    train_binary_with_mode(samples, labels, spec, cfg, CacheMode::Auto)
}

pub fn train_binary_with_mode(
    samples: &[Matrix],
    labels: &[i32],
    spec: KernelSpec,
    cfg: &SolverConfig,
    mode: CacheMode,
) -> Result<TrainedBinaryModel> {
    if samples.len() != labels.len() {
        return Err(Error::dimension(
            format!("{} labels", samples.len()),
            format!("{} labels", labels.len()),
        ));
    }
    let y = check_labels(labels)?;
    let cache = GramCache::build(spec, samples, mode)?;
    train_from_labels(&cache, &y, cfg)
}

/// Trains on a prepared cache, reusing its kernel blocks.
pub fn train_binary_cached(
    cache: &GramCache,
    labels: &[i32],
    cfg: &SolverConfig,
) -> Result<TrainedBinaryModel> {
    let y = check_labels(labels)?;
    train_from_labels(cache, &y, cfg)
}

fn train_from_labels(
    cache: &GramCache,
    y: &[f64],
    cfg: &SolverConfig,
) -> Result<TrainedBinaryModel> {
    let solution = solve_with_cache(cache, y, cfg)?;
    let state = &solution.state;
    let samples = cache.samples();
    let mut support_samples = Vec::new();
    let mut coefficients = Vec::new();
    for (i, &a) in state.alphas.iter().enumerate() {
        if a > SUPPORT_FLOOR {
            support_samples.push(samples[i].clone());
            coefficients.push(a * y[i]);
        }
    }
    let v_matrix = state.s_matrix.symmetrized();
    let degenerate = v_matrix.frobenius_norm() < cfg.w_norm_floor;
    if degenerate {
        log::warn!("trained model is degenerate: weight matrix vanished, predicting sign(bias)");
    }
    if !solution.converged() {
        log::warn!(
            "solver stopped without meeting KKT tolerance ({:?} after {} iterations)",
            solution.status,
            solution.iterations
        );
    }
    let shape = samples[0].shape();
    TrainedBinaryModel::from_parts(
        support_samples,
        coefficients,
        v_matrix,
        state.bias,
        *cache.spec(),
        shape,
        degenerate,
        TrainingMeta {
            iterations: solution.iterations,
            accepted_steps: solution.accepted_steps,
            objective: state.objective,
            status: solution.status,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar(v: f64) -> Matrix {
        Matrix::new(1, 1, vec![v]).unwrap()
    }

    fn two_point() -> TrainedBinaryModel {
        train_binary(
            &[scalar(1.0), scalar(-1.0)],
            &[1, -1],
            KernelSpec::linear(),
            &SolverConfig::default(),
        )
        .unwrap()
    }

    fn separable_2x2() -> (Vec<Matrix>, Vec<i32>) {
        let samples = vec![
            Matrix::from_rows(&[&[2.0, 0.5], &[0.0, 1.0]]).unwrap(),
            Matrix::from_rows(&[&[1.5, 0.0], &[0.5, 2.0]]).unwrap(),
            Matrix::from_rows(&[&[-2.0, 0.0], &[0.5, -1.0]]).unwrap(),
            Matrix::from_rows(&[&[-1.0, -0.5], &[0.0, -2.0]]).unwrap(),
        ];
        (samples, vec![1, 1, -1, -1])
    }

    #[test]
    fn two_point_model() {
        let m = two_point();
        assert_eq!(m.support_count(), 2);
        assert!((m.coefficients()[0] - 0.5).abs() < 1e-9);
        assert!((m.coefficients()[1] + 0.5).abs() < 1e-9);
        assert!(m.bias().abs() < 1e-9);
        assert!((m.decision_value(&scalar(2.0)).unwrap() - 2.0).abs() < 1e-9);
        assert_eq!(m.predict_label(&scalar(2.0)).unwrap(), 1);
        assert_eq!(m.predict_label(&scalar(-0.3)).unwrap(), -1);
        assert!(m.meta().kkt_converged());
    }

    #[test]
    fn tie_maps_to_positive() {
        assert_eq!(sign_label(0.0), 1);
        assert_eq!(sign_label(-0.0), 1);
        assert_eq!(sign_label(-1e-300), -1);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let m = two_point();
        assert!(matches!(
            m.decision_value(&Matrix::zeros(2, 1)),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn replay_gives_identical_models() {
        let (x, y) = separable_2x2();
        let cfg = SolverConfig::default().with_seed(5);
        let a = train_binary(&x, &y, KernelSpec::linear(), &cfg).unwrap();
        let b = train_binary(&x, &y, KernelSpec::linear(), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_class_is_an_error() {
        let (x, _) = separable_2x2();
        assert!(train_binary(
            &x,
            &[1, 1, 1, 1],
            KernelSpec::linear(),
            &SolverConfig::default()
        )
        .is_err());
        assert!(train_binary(
            &x,
            &[1, 2, 1, -1],
            KernelSpec::linear(),
            &SolverConfig::default()
        )
        .is_err());
    }

    #[test]
    fn coefficients_respect_box() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x: Vec<Matrix> = (0..16)
            .map(|_| Matrix::from_fn(3, 2, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let y: Vec<i32> = (0..16).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect();
        let cfg = SolverConfig::default().with_c(0.3);
        let m = train_binary(&x, &y, KernelSpec::Gaussian { gamma: 0.5 }, &cfg).unwrap();
        assert!(m.coefficients().iter().all(|c| c.abs() <= 0.3 + 1e-12));
        assert!(m.v_matrix().asymmetry() <= 1e-8);
    }

    #[test]
    fn free_supports_sit_on_the_margin() {
        let (x, y) = separable_2x2();
        let cfg = SolverConfig::default().with_c(10.0).with_kkt_tol(1e-6);
        let m = train_binary(&x, &y, KernelSpec::linear(), &cfg).unwrap();
        assert!(m.meta().kkt_converged());
        for (xi, &yi) in x.iter().zip(&y) {
            let f = m.decision_value(xi).unwrap();
            assert!(yi as f64 * f >= 1.0 - 1e-5, "margin {}", yi as f64 * f);
        }
        for (sv, c) in m.support_samples().iter().zip(m.coefficients()) {
            if c.abs() < 10.0 - 1e-8 {
                let f = m.decision_value(sv).unwrap();
                assert!((c.signum() * f - 1.0).abs() <= 10.0 * 1e-6);
            }
        }
    }

    #[test]
    fn decisions_ignore_weight_scale() {
        let (x, y) = separable_2x2();
        let m = train_binary(
            &x,
            &y,
            KernelSpec::Polynomial {
                alpha: 1.0,
                beta: 2,
            },
            &SolverConfig::default(),
        )
        .unwrap();
        let scaled = TrainedBinaryModel::from_parts(
            m.support_samples().to_vec(),
            m.coefficients().to_vec(),
            m.v_matrix().scaled(37.5),
            m.bias(),
            *m.kernel(),
            m.shape(),
            false,
            m.meta().clone(),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let z = Matrix::from_fn(2, 2, |_, _| rng.random_range(-2.0..2.0));
            let a = m.decision_value(&z).unwrap();
            let b = scaled.decision_value(&z).unwrap();
            assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
            assert_eq!(
                m.predict_label(&z).unwrap(),
                scaled.predict_label(&z).unwrap()
            );
        }
    }

    #[test]
    fn degenerate_model_predicts_bias_sign() {
        let m = TrainedBinaryModel::from_parts(
            vec![],
            vec![],
            Matrix::zeros(1, 1),
            -0.25,
            KernelSpec::linear(),
            (1, 1),
            false,
            two_point().meta().clone(),
        )
        .unwrap();
        assert!(m.is_degenerate());
        assert_eq!(m.decision_value(&scalar(5.0)).unwrap(), -0.25);
        assert_eq!(m.predict_label(&scalar(5.0)).unwrap(), -1);
    }
}
