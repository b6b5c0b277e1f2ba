//! Matrix-valued kernels `K(X, Y) in R^{n x n}` and the pairwise block
//! cache used by the solver.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::{matrix_inner, Matrix};

/// Kernel family with its parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelSpec {
    /// `X^T Y + alpha I`
    Linear { alpha: f64 },
    /// `(X^T Y + alpha I)` raised entrywise to `beta`
    Polynomial { alpha: f64, beta: u32 },
    /// `[exp(-gamma ||X(:,i) - Y(:,j)||^2)]_ij`
    Gaussian { gamma: f64 },
}

impl KernelSpec {
    pub fn linear() -> Self {
        KernelSpec::Linear { alpha: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match *self {
            KernelSpec::Linear { alpha } | KernelSpec::Polynomial { alpha, .. }
                if !(alpha >= 0.0 && alpha.is_finite()) =>
            {
                bad(format!(
                    "kernel offset alpha must be finite and >= 0, got {alpha}"
                ))
            }
            KernelSpec::Polynomial { beta: 0, .. } => {
                bad("polynomial power beta must be >= 1".into())
            }
            KernelSpec::Gaussian { gamma } if !(gamma > 0.0 && gamma.is_finite()) => bad(format!(
                "gaussian width gamma must be finite and > 0, got {gamma}"
            )),
            _ => Ok(()),
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            KernelSpec::Linear { .. } => "linear",
            KernelSpec::Polynomial { .. } => "poly",
            KernelSpec::Gaussian { .. } => "gaussian",
        }
    }

    /// Same family with the width replaced; non-Gaussian specs are returned
    /// unchanged.
    pub fn with_gamma(self, gamma: f64) -> Self {
        match self {
            KernelSpec::Gaussian { .. } => KernelSpec::Gaussian { gamma },
            other => other,
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match *self {
            KernelSpec::Gaussian { gamma } => Some(gamma),
            _ => None,
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            KernelSpec::Linear { alpha } => write!(f, "kernel=linear alpha={alpha}"),
            KernelSpec::Polynomial { alpha, beta } => {
                write!(f, "kernel=poly alpha={alpha} beta={beta}")
            }
            KernelSpec::Gaussian { gamma } => write!(f, "kernel=gaussian gamma={gamma}"),
        }
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    /// Parses the `key=value` fragment written by `Display`, e.g.
    /// `kernel=gaussian gamma=0.01`.
    fn from_str(s: &str) -> Result<Self> {
        let mut family = None;
        let mut alpha = 0.0;
        let mut beta = 1u32;
        let mut gamma = None;
        for token in s.split_whitespace() {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value, got `{token}`")))?;
            let num = |v: &str| {
                v.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("bad value for {key}: {e}")))
            };
            match key {
                "kernel" => family = Some(value.to_string()),
                "alpha" => alpha = num(value)?,
                "beta" => {
                    beta = value
                        .parse()
                        .map_err(|e| Error::Parse(format!("bad value for beta: {e}")))?
                }
                "gamma" => gamma = Some(num(value)?),
                other => return Err(Error::Parse(format!("unknown kernel key `{other}`"))),
            }
        }
        let spec = match family.as_deref() {
            Some("linear") => KernelSpec::Linear { alpha },
            Some("poly") | Some("polynomial") => KernelSpec::Polynomial { alpha, beta },
            Some("gaussian") | Some("gauss") => KernelSpec::Gaussian {
                gamma: gamma.ok_or_else(|| Error::Parse("gaussian kernel needs gamma".into()))?,
            },
            Some(other) => return Err(Error::Parse(format!("unknown kernel family `{other}`"))),
            None => return Err(Error::Parse("missing kernel=<family>".into())),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Evaluates the `n x n` kernel block for two `m x n` samples.
pub fn eval_kernel(spec: &KernelSpec, x: &Matrix, y: &Matrix) -> Result<Matrix> {
    x.check_same_shape(y)?;
    Ok(eval_unchecked(spec, x, y))
}

fn eval_unchecked(spec: &KernelSpec, x: &Matrix, y: &Matrix) -> Matrix {
    let n = x.cols();
    match *spec {
        KernelSpec::Linear { alpha } => {
            let mut k = matrix_inner(x, y).expect("shapes checked");
            if alpha != 0.0 {
                for i in 0..n {
                    k.set(i, i, k.get(i, i) + alpha);
                }
            }
            k
        }
        KernelSpec::Polynomial { alpha, beta } => {
            let mut k = matrix_inner(x, y).expect("shapes checked");
            for i in 0..n {
                k.set(i, i, k.get(i, i) + alpha);
            }
            let power = beta as i32;
            for v in k.as_mut_slice() {
                *v = v.powi(power);
            }
            k
        }
        KernelSpec::Gaussian { gamma } => {
            let m = x.rows();
            let xs = x.as_slice();
            let ys = y.as_slice();
            Matrix::from_fn(n, n, |i, j| {
                let mut d2 = 0.0;
                for r in 0..m {
                    let d = xs[r * n + i] - ys[r * n + j];
                    d2 += d * d;
                }
                (-gamma * d2).exp()
            })
        }
    }
}

/// Default cap on the stored block payload: 1 GiB.
pub const DEFAULT_CACHE_CAP_BYTES: u128 = 1 << 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CacheMode {
    /// Store every block; fail if the payload exceeds the cap.
    Enabled,
    /// Recompute blocks on demand.
    Disabled,
    /// Store when the payload fits under the cap, otherwise recompute.
    Auto,
}

impl FromStr for CacheMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "on" => Ok(CacheMode::Enabled),
            "off" => Ok(CacheMode::Disabled),
            "auto" => Ok(CacheMode::Auto),
            other => Err(Error::Parse(format!(
                "cache mode must be on|off|auto, got `{other}`"
            ))),
        }
    }
}

/// Pairwise kernel blocks `K(X_i, X_j)` over a training set. Only blocks
/// with `i <= j` are stored; the lower triangle is served transposed.
#[derive(Clone, Debug)]
pub struct GramCache {
    spec: KernelSpec,
    samples: Vec<Matrix>,
    dim: usize,
    blocks: Option<Vec<Matrix>>,
}

impl GramCache {
    pub fn build(spec: KernelSpec, samples: &[Matrix], mode: CacheMode) -> Result<Self> {
        Self::build_with_cap(spec, samples, mode, DEFAULT_CACHE_CAP_BYTES)
    }

    pub fn build_with_cap(
        spec: KernelSpec,
        samples: &[Matrix],
        mode: CacheMode,
        cap_bytes: u128,
    ) -> Result<Self> {
        spec.validate()?;
        let first = samples.first().ok_or_else(|| {
            Error::InvalidParameter("gram cache needs at least one sample".into())
        })?;
        let shape = first.shape();
        if let Some(bad) = samples.iter().find(|s| s.shape() != shape) {
            return Err(Error::dimension(
                format!("{}x{}", shape.0, shape.1),
                format!("{}x{}", bad.rows(), bad.cols()),
            ));
        }
        let dim = shape.1;
        let needed = Self::payload_bytes(samples.len(), dim);
        let store = match mode {
            CacheMode::Disabled => false,
            CacheMode::Enabled if needed > cap_bytes => {
                return Err(Error::CacheTooLarge {
                    needed_bytes: needed,
                    cap_bytes,
                })
            }
            CacheMode::Enabled => true,
            CacheMode::Auto if needed > cap_bytes => {
                log::warn!(
                    "gram cache would need {needed} bytes (cap {cap_bytes}); recomputing blocks on demand"
                );
                false
            }
            CacheMode::Auto => true,
        };
        let samples = samples.to_vec();
        let blocks = store.then(|| {
            let n = samples.len();
            let pairs: Vec<(usize, usize)> =
                (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
            pairs
                .par_iter()
                .map(|&(i, j)| eval_unchecked(&spec, &samples[i], &samples[j]))
                .collect()
        });
        Ok(GramCache {
            spec,
            samples,
            dim,
            blocks,
        })
    }

    /// Bytes needed to store `N(N+1)/2` blocks of `n x n` doubles.
    pub fn payload_bytes(n_samples: usize, dim: usize) -> u128 {
        let n = n_samples as u128;
        n * (n + 1) / 2 * (dim as u128) * (dim as u128) * 8
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn block_dim(&self) -> usize {
        self.dim
    }

    pub fn samples(&self) -> &[Matrix] {
        &self.samples
    }

    pub fn is_enabled(&self) -> bool {
        self.blocks.is_some()
    }

    pub fn stored_blocks(&self) -> usize {
        self.blocks.as_ref().map_or(0, Vec::len)
    }

    #[inline]
    fn packed_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= j);
        let n = self.samples.len();
        i * n - i * (i + 1) / 2 + j
    }

    /// `K(X_i, X_j)` as an owned matrix.
    pub fn block(&self, i: usize, j: usize) -> Matrix {
        let mut out = Matrix::zeros(self.dim, self.dim);
        self.add_block(i, j, 1.0, &mut out);
        out
    }

    /// `target += factor * K(X_i, X_j)`.
    pub fn add_block(&self, i: usize, j: usize, factor: f64, target: &mut Matrix) {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        let computed;
        let upper = match &self.blocks {
            Some(blocks) => &blocks[self.packed_index(lo, hi)],
            None => {
                computed = eval_unchecked(&self.spec, &self.samples[lo], &self.samples[hi]);
                &computed
            }
        };
        if i <= j {
            target.axpy(factor, upper).expect("block shape");
        } else {
            target.axpy_transposed(factor, upper).expect("block shape");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_fn(r, c, |_, _| rng.random_range(-1.5..1.5))
    }

    fn specs() -> [KernelSpec; 3] {
        [
            KernelSpec::Linear { alpha: 0.5 },
            KernelSpec::Polynomial {
                alpha: 1.0,
                beta: 3,
            },
            KernelSpec::Gaussian { gamma: 0.3 },
        ]
    }

    /// Scalar-by-scalar reference evaluation straight from the kernel
    /// definitions.
    fn reference(spec: &KernelSpec, x: &Matrix, y: &Matrix) -> Matrix {
        let (m, n) = x.shape();
        Matrix::from_fn(n, n, |i, j| {
            let mut xty = 0.0;
            let mut d2 = 0.0;
            for r in 0..m {
                xty += x.get(r, i) * y.get(r, j);
                d2 += (x.get(r, i) - y.get(r, j)).powi(2);
            }
            let delta = if i == j { 1.0 } else { 0.0 };
            match *spec {
                KernelSpec::Linear { alpha } => xty + alpha * delta,
                KernelSpec::Polynomial { alpha, beta } => (xty + alpha * delta).powi(beta as i32),
                KernelSpec::Gaussian { gamma } => (-gamma * d2).exp(),
            }
        })
    }

    #[test]
    fn linear_without_offset_is_matrix_inner() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let x = random(&mut rng, 3, 4);
            let y = random(&mut rng, 3, 4);
            assert_eq!(
                eval_kernel(&KernelSpec::linear(), &x, &y).unwrap(),
                matrix_inner(&x, &y).unwrap()
            );
        }
    }

    #[test]
    fn polynomial_identity_example() {
        let i2 = Matrix::identity(2);
        let spec = KernelSpec::Polynomial {
            alpha: 1.0,
            beta: 2,
        };
        let k = eval_kernel(&spec, &i2, &i2).unwrap();
        let expected = Matrix::from_rows(&[[4.0, 0.0], [0.0, 4.0]]).unwrap();
        assert_eq!(k, expected);
        assert_eq!(reference(&spec, &i2, &i2), expected);
    }

    #[test]
    fn matches_scalar_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for spec in specs() {
            let x = random(&mut rng, 4, 3);
            let y = random(&mut rng, 4, 3);
            let k = eval_kernel(&spec, &x, &y).unwrap();
            let r = reference(&spec, &x, &y);
            for (a, b) in k.as_slice().iter().zip(r.as_slice()) {
                assert!(
                    (a - b).abs() <= 1e-12 * (1.0 + b.abs()),
                    "{spec}: {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn gaussian_diagonal_is_one_and_entries_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = KernelSpec::Gaussian { gamma: 0.7 };
        for _ in 0..20 {
            let x = random(&mut rng, 5, 4);
            let y = random(&mut rng, 5, 4);
            let kxx = eval_kernel(&spec, &x, &x).unwrap();
            for i in 0..4 {
                assert_eq!(kxx.get(i, i), 1.0);
            }
            let kxy = eval_kernel(&spec, &x, &y).unwrap();
            assert!(kxy.as_slice().iter().all(|&v| v > 0.0 && v <= 1.0));
        }
    }

    #[test]
    fn transpose_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for spec in specs() {
            for _ in 0..30 {
                let x = random(&mut rng, 3, 3);
                let y = random(&mut rng, 3, 3);
                let kxy = eval_kernel(&spec, &x, &y).unwrap();
                let kyx = eval_kernel(&spec, &y, &x).unwrap();
                assert_eq!(kxy, kyx.transpose(), "{spec}");
            }
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let x = Matrix::zeros(2, 2);
        let y = Matrix::zeros(3, 2);
        assert!(matches!(
            eval_kernel(&KernelSpec::linear(), &x, &y),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn spec_validation() {
        assert!(KernelSpec::Gaussian { gamma: 0.0 }.validate().is_err());
        assert!(KernelSpec::Linear { alpha: -1.0 }.validate().is_err());
        assert!(KernelSpec::Polynomial {
            alpha: 0.0,
            beta: 0
        }
        .validate()
        .is_err());
        assert!(KernelSpec::Polynomial {
            alpha: 0.0,
            beta: 2
        }
        .validate()
        .is_ok());
    }

    #[test]
    fn spec_text_roundtrip() {
        for spec in specs() {
            let text = spec.to_string();
            assert_eq!(text.parse::<KernelSpec>().unwrap(), spec);
        }
        assert_eq!(
            "kernel=gaussian gamma=0.01".parse::<KernelSpec>().unwrap(),
            KernelSpec::Gaussian { gamma: 0.01 }
        );
        assert!("kernel=gaussian".parse::<KernelSpec>().is_err());
        assert!("kernel=rbf gamma=1".parse::<KernelSpec>().is_err());
        assert!("gamma=1".parse::<KernelSpec>().is_err());
    }

    #[test]
    fn cache_stores_upper_triangle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let samples: Vec<Matrix> = (0..3).map(|_| random(&mut rng, 2, 2)).collect();
        let spec = KernelSpec::Gaussian { gamma: 0.5 };
        let cache = GramCache::build(spec, &samples, CacheMode::Enabled).unwrap();
        assert_eq!(cache.stored_blocks(), 6);
        let k20 = cache.block(2, 0);
        assert_eq!(k20, eval_kernel(&spec, &samples[2], &samples[0]).unwrap());
        assert_eq!(k20, cache.block(0, 2).transpose());
    }

    #[test]
    fn disabled_cache_is_bitwise_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let samples: Vec<Matrix> = (0..7).map(|_| random(&mut rng, 3, 4)).collect();
        for spec in specs() {
            let on = GramCache::build(spec, &samples, CacheMode::Enabled).unwrap();
            let off = GramCache::build(spec, &samples, CacheMode::Disabled).unwrap();
            assert!(!off.is_enabled());
            assert_eq!(off.stored_blocks(), 0);
            for i in 0..7 {
                for j in 0..7 {
                    let a = on.block(i, j);
                    let b = off.block(i, j);
                    assert!(a
                        .as_slice()
                        .iter()
                        .zip(b.as_slice())
                        .all(|(x, y)| x.to_bits() == y.to_bits()));
                }
            }
        }
    }

    #[test]
    fn cache_cap() {
        let samples = vec![Matrix::identity(4); 10];
        let spec = KernelSpec::linear();
        let needed = GramCache::payload_bytes(10, 4);
        assert_eq!(needed, 55 * 16 * 8);
        let err = GramCache::build_with_cap(spec, &samples, CacheMode::Enabled, needed - 1);
        assert!(matches!(err, Err(Error::CacheTooLarge { .. })));
        let auto = GramCache::build_with_cap(spec, &samples, CacheMode::Auto, needed - 1).unwrap();
        assert!(!auto.is_enabled());
        let fits = GramCache::build_with_cap(spec, &samples, CacheMode::Auto, needed).unwrap();
        assert!(fits.is_enabled());
    }

    #[test]
    fn cache_rejects_mixed_shapes() {
        let samples = vec![Matrix::identity(2), Matrix::zeros(3, 2)];
        assert!(GramCache::build(KernelSpec::linear(), &samples, CacheMode::Enabled).is_err());
    }
}
