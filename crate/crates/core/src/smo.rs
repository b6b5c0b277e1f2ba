//! Pairwise (SMO-style) maximization of the matrix-kernel dual
//!
//! ```text
//! max_a  sum_i a_i - 1/2 ||S(a)||      S(a) = sum_ij a_i a_j y_i y_j K(X_i, X_j)
//! s.t.   sum_i a_i y_i = 0,  0 <= a_i <= C
//! ```
//!
//! The objective is not quadratic, so the step along each feasible line is
//! found with a safeguarded Newton iteration instead of the closed form of
//! classical SMO. The first multiplier is the first KKT violator in scan
//! order; the second is drawn at random.
//!
//! For every sample the solver keeps `M_k = sum_j a_j y_j K(X_j, X_k)`,
//! which gives decision values `<M_k, S> / ||S|| + b` and all the line
//! terms in `O(n^2)` each.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernel::{CacheMode, GramCache, KernelSpec};
use crate::matrix::{dot, Matrix};

/// Threshold below which `|J''|` is treated as zero by the Newton step.
const FLAT_CURVATURE: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// Box bound `C`.
    pub c: f64,
    /// Cap on pair attempts; `None` picks `min(10^4 N, 2 10^6)`.
    pub max_outer_loops: Option<usize>,
    /// Newton stops once `|J'/J''|` drops below this.
    pub newton_tol: f64,
    /// KKT tolerance used for pair selection and convergence.
    pub kkt_tol: f64,
    pub max_newton_iters: usize,
    /// `||S||` below this is treated as the singular `W = 0` point.
    pub w_norm_floor: f64,
    /// Seed for the second-multiplier draws.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            c: 1.0,
            max_outer_loops: None,
            newton_tol: 1e-8,
            kkt_tol: 1e-3,
            max_newton_iters: 50,
            w_norm_floor: 1e-12,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_kkt_tol(mut self, tol: f64) -> Self {
        self.kkt_tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("c", self.c),
            ("newton_tol", self.newton_tol),
            ("kkt_tol", self.kkt_tol),
            ("w_norm_floor", self.w_norm_floor),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        if self.max_newton_iters == 0 || self.max_outer_loops == Some(0) {
            return Err(Error::InvalidParameter(
                "iteration limits must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn outer_limit(&self, n_samples: usize) -> usize {
        self.max_outer_loops
            .unwrap_or_else(|| (10_000 * n_samples).min(2_000_000))
    }
}

/// Multipliers, labels, bias and the aggregate matrix `S`.
#[derive(Clone, Debug, PartialEq)]
pub struct DualState {
    pub alphas: Vec<f64>,
    pub labels: Vec<f64>,
    pub bias: f64,
    pub s_matrix: Matrix,
    pub objective: f64,
}

impl DualState {
    /// `sum a_i - 1/2 ||S||`, also stored in `self.objective`.
    pub fn refresh_objective(&mut self) -> f64 {
        self.objective = objective_value(&self.alphas, &self.s_matrix);
        self.objective
    }

    /// `sum_i a_i y_i`.
    pub fn equality_residual(&self) -> f64 {
        dot(&self.alphas, &self.labels)
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }
}

/// Dual objective for given multipliers and aggregate matrix.
pub fn objective_value(alphas: &[f64], s_matrix: &Matrix) -> f64 {
    alphas.iter().sum::<f64>() - 0.5 * s_matrix.frobenius_norm()
}

/// Magnitude by which one multiplier violates its KKT condition, or 0 when
/// the condition holds within `tol`.
pub fn kkt_violation(alpha: f64, label: f64, c: f64, decision_value: f64, tol: f64) -> f64 {
    let margin = label * decision_value;
    let v = if at_lower(alpha, c) {
        1.0 - margin
    } else if at_upper(alpha, c) {
        margin - 1.0
    } else {
        (margin - 1.0).abs()
    };
    if v > tol {
        v
    } else {
        0.0
    }
}

/// Multipliers within `BOUND_SNAP * C` of a bound count as sitting on it;
/// round-off in the pair updates can leave them a few ulps inside.
pub fn at_lower(alpha: f64, c: f64) -> bool {
    alpha <= BOUND_SNAP * c
}

pub fn at_upper(alpha: f64, c: f64) -> bool {
    alpha >= c - BOUND_SNAP * c
}

pub fn is_free(alpha: f64, c: f64) -> bool {
    !at_lower(alpha, c) && !at_upper(alpha, c)
}

/// Feasible interval `[L, H]` for the second multiplier.
pub fn compute_bounds(alpha1: f64, alpha2: f64, y1: f64, y2: f64, c: f64) -> (f64, f64) {
    if y1 != y2 {
        ((alpha2 - alpha1).max(0.0), (c + alpha2 - alpha1).min(c))
    } else {
        ((alpha1 + alpha2 - c).max(0.0), (alpha1 + alpha2).min(c))
    }
}

/// Raised when `||S||` is below the floor and `J'` is undefined.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Singular;

/// Everything needed to evaluate the objective along the feasible line
/// through the current point for a pair `(first, second)`.
///
/// Moving the second multiplier by `t` moves `W` by `t A`, so
/// `S(t) = S + t (P + P^T) + t^2 Q` with `P = A^T W` and `Q = A^T A`.
#[derive(Clone, Debug)]
pub struct LineTerms {
    y1y2: f64,
    origin: f64,
    s: Matrix,
    s_norm: f64,
    p: Matrix,
    q: Matrix,
    floor: f64,
}

impl LineTerms {
    /// Builds line terms directly from `S`, `P = A^T W` and `Q = A^T A`.
    pub fn new(y1y2: f64, origin: f64, s: Matrix, p: Matrix, q: Matrix, floor: f64) -> Self {
        let s_norm = s.frobenius_norm();
        LineTerms {
            y1y2,
            origin,
            s,
            s_norm,
            p,
            q,
            floor,
        }
    }

    /// Current value of the second multiplier.
    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn p(&self) -> &Matrix {
        &self.p
    }

    fn s_at(&self, t: f64) -> Matrix {
        let mut s = self.s.clone();
        if t != 0.0 {
            s.axpy(t, &self.p).expect("square");
            s.axpy_transposed(t, &self.p).expect("square");
            s.axpy(t * t, &self.q).expect("square");
        }
        s
    }

    /// `S` after moving the second multiplier to `alpha2`.
    pub fn s_matrix_at(&self, alpha2: f64) -> Matrix {
        self.s_at(alpha2 - self.origin)
    }

    /// `J(alpha2) - J(origin)`.
    pub fn gain(&self, alpha2: f64) -> f64 {
        let t = alpha2 - self.origin;
        if t == 0.0 {
            return 0.0;
        }
        // ||S + D|| - ||S|| = (2<S,D> + ||D||^2) / (||S + D|| + ||S||) with
        // D = S(t) - S avoids cancelling two nearly equal norms, so tiny
        // gains near the optimum keep their sign.
        let mut d = Matrix::zeros(self.s.rows(), self.s.cols());
        d.axpy(t, &self.p).expect("square");
        d.axpy_transposed(t, &self.p).expect("square");
        d.axpy(t * t, &self.q).expect("square");
        let sd = dot(self.s.as_slice(), d.as_slice());
        let dd = dot(d.as_slice(), d.as_slice());
        d.axpy(1.0, &self.s).expect("square");
        let denom = d.frobenius_norm() + self.s_norm;
        let change = if denom > 0.0 {
            (2.0 * sd + dd) / denom
        } else {
            0.0
        };
        (1.0 - self.y1y2) * t - 0.5 * change
    }

    /// `(J'(alpha2), J''(alpha2))` along the line.
    pub fn derivatives(&self, alpha2: f64) -> std::result::Result<(f64, f64), Singular> {
        let t = alpha2 - self.origin;
        let s = self.s_at(t);
        let norm = s.frobenius_norm();
        if norm < self.floor {
            return Err(Singular);
        }
        // P(t) = A^T W(t) = P + t Q; only its symmetric part G enters.
        let mut g = self.p.clone();
        g.axpy(t, &self.q).expect("square");
        let g = {
            let mut sym = g.clone();
            sym.axpy_transposed(1.0, &g).expect("square");
            sym
        };
        let gs = dot(g.as_slice(), s.as_slice());
        let j1 = (1.0 - self.y1y2) - 0.5 * gs / norm;
        // Component of G orthogonal to S: ||R||^2 ||S||^2 is the
        // Cauchy-Schwarz gap ||G||^2 ||S||^2 - <G,S>^2, never negative.
        let ratio = gs / (norm * norm);
        let r2: f64 = g
            .as_slice()
            .iter()
            .zip(s.as_slice())
            .map(|(gv, sv)| {
                let r = gv - ratio * sv;
                r * r
            })
            .sum();
        let qs = dot(self.q.as_slice(), s.as_slice());
        let j2 = -(qs + 0.5 * r2) / norm;
        Ok((j1, j2))
    }

    /// Derivatives, falling back to the `W = 0` limit at the singular point
    /// where `S(t) = t^2 Q` gives `J' = 1 - y1 y2` and `J'' = -||Q||`.
    pub fn derivatives_or_limit(&self, alpha2: f64) -> (f64, f64) {
        self.derivatives(alpha2)
            .unwrap_or_else(|_| (1.0 - self.y1y2, -self.q.frobenius_norm()))
    }

    pub fn is_singular_at(&self, alpha2: f64) -> bool {
        self.s_matrix_at(alpha2).frobenius_norm() < self.floor
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonOutcome {
    /// Final iterate; may lie outside `[L, H]`.
    pub alpha2: f64,
    pub iterations: usize,
    /// Step size dropped below tolerance (or the maximum is pinned at a
    /// bound).
    pub converged: bool,
    /// Curvature vanished and the better endpoint was returned instead.
    pub endpoint_fallback: bool,
}

/// Maximizes `J` along the line starting from `start` with Newton steps
/// `alpha2 <- alpha2 - J'/J''`.
///
/// Steps that leave the current bracket of the root of `J'` are replaced by
/// bisection, so the iteration cannot run away when `J` is far from
/// quadratic. If the maximum lies beyond a bound the unclipped iterate is
/// returned and clipping is left to the caller.
pub fn newton_maximize(
    line: &LineTerms,
    bounds: (f64, f64),
    start: f64,
    tol: f64,
    max_iters: usize,
) -> NewtonOutcome {
    let (l, h) = bounds;
    let endpoint = |iterations| {
        let alpha2 = if line.gain(h) > line.gain(l) { h } else { l };
        NewtonOutcome {
            alpha2,
            iterations,
            converged: false,
            endpoint_fallback: true,
        }
    };
    let (mut lo, mut hi) = (l, h);
    let mut upper_checked = false;
    let mut lower_checked = false;
    let mut t = start;
    for it in 1..=max_iters {
        let (d1, d2) = line.derivatives_or_limit(t);
        if !(d1.is_finite() && d2.is_finite()) || d2.abs() < FLAT_CURVATURE {
            return endpoint(it);
        }
        if d1 > 0.0 {
            lo = lo.max(t);
        } else if d1 < 0.0 {
            hi = hi.min(t);
        }
        let step = d1 / d2;
        let mut next = t - step;
        if step.abs() < tol {
            return NewtonOutcome {
                alpha2: next,
                iterations: it,
                converged: true,
                endpoint_fallback: false,
            };
        }
        if next >= hi {
            if hi == h && !upper_checked {
                upper_checked = true;
                if line.derivatives_or_limit(h).0 >= 0.0 {
                    return NewtonOutcome {
                        alpha2: next.max(h),
                        iterations: it,
                        converged: true,
                        endpoint_fallback: false,
                    };
                }
            }
            next = 0.5 * (lo + hi);
        } else if next <= lo {
            if lo == l && !lower_checked {
                lower_checked = true;
                if line.derivatives_or_limit(l).0 <= 0.0 {
                    return NewtonOutcome {
                        alpha2: next.min(l),
                        iterations: it,
                        converged: true,
                        endpoint_fallback: false,
                    };
                }
            }
            next = 0.5 * (lo + hi);
        }
        if hi - lo < tol {
            return NewtonOutcome {
                alpha2: 0.5 * (lo + hi),
                iterations: it,
                converged: true,
                endpoint_fallback: false,
            };
        }
        t = next;
    }
    NewtonOutcome {
        alpha2: t,
        iterations: max_iters,
        converged: false,
        endpoint_fallback: false,
    }
}

#[inline]
fn clip(v: f64, lo: f64, hi: f64) -> f64 {
    if v >= hi {
        hi
    } else if v <= lo {
        lo
    } else {
        v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    /// No multiplier violates its KKT condition.
    Converged,
    /// The outer-loop budget ran out.
    MaxIterations,
    /// Violators remain but no pair makes progress.
    Stalled,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub state: DualState,
    /// Pair attempts (outer loops) performed.
    pub iterations: usize,
    pub accepted_steps: usize,
    pub status: SolveStatus,
}

impl Solution {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepOutcome {
    Converged,
    Moved {
        first: usize,
        second: usize,
        objective_before: f64,
        objective_after: f64,
    },
    /// The first violator found could not be improved with any drawn partner.
    Stuck {
        first: usize,
    },
}

struct Proposal {
    second: usize,
    alpha2: f64,
    line: LineTerms,
}

/// Stateful pairwise solver over a prepared Gram cache.
pub struct Solver<'a> {
    cache: &'a GramCache,
    cfg: SolverConfig,
    state: DualState,
    margins: Vec<Matrix>,
    diag_norms: Vec<f64>,
    s_norm: f64,
    rng: ChaCha8Rng,
    attempts: usize,
    accepted: usize,
}

impl<'a> Solver<'a> {
    pub fn new(cache: &'a GramCache, labels: &[f64], cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        if labels.len() != cache.len() {
            return Err(Error::dimension(
                format!("{} labels", cache.len()),
                format!("{} labels", labels.len()),
            ));
        }
        if let Some(bad) = labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
            return Err(Error::InvalidParameter(format!(
                "binary labels must be +1 or -1, got {bad}"
            )));
        }
        if !(labels.contains(&1.0) && labels.contains(&-1.0)) {
            return Err(Error::Degenerate(
                "both classes must be present; the equality constraint forces all multipliers to zero"
                    .into(),
            ));
        }
        let n = cache.block_dim();
        let state = DualState {
            alphas: vec![0.0; labels.len()],
            labels: labels.to_vec(),
            bias: 0.0,
            s_matrix: Matrix::zeros(n, n),
            objective: 0.0,
        };
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let diag_norms = (0..labels.len())
            .map(|k| cache.block(k, k).frobenius_norm())
            .collect();
        Ok(Solver {
            cache,
            diag_norms,
            margins: vec![Matrix::zeros(n, n); labels.len()],
            cfg,
            state,
            s_norm: 0.0,
            rng,
            attempts: 0,
            accepted: 0,
        })
    }

    /// Replaces the multipliers (which must be feasible) and rebuilds every
    /// cached quantity from scratch.
    pub fn set_alphas(&mut self, alphas: &[f64]) -> Result<()> {
        if alphas.len() != self.state.len() {
            return Err(Error::dimension(self.state.len(), alphas.len()));
        }
        let c = self.cfg.c;
        if let Some(a) = alphas.iter().find(|&&a| !(0.0..=c).contains(&a)) {
            return Err(Error::InvalidParameter(format!(
                "multiplier {a} outside [0, {c}]"
            )));
        }
        let residual = dot(alphas, &self.state.labels);
        if residual.abs() > 1e-9 * c.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "multipliers violate sum a_i y_i = 0 (residual {residual:e})"
            )));
        }
        self.state.alphas = alphas.to_vec();
        let n = self.cache.block_dim();
        let coef: Vec<f64> = self.coefficients();
        for k in 0..self.state.len() {
            let mut m = Matrix::zeros(n, n);
            for (j, &cj) in coef.iter().enumerate() {
                if cj != 0.0 {
                    self.cache.add_block(j, k, cj, &mut m);
                }
            }
            self.margins[k] = m;
        }
        let mut s = Matrix::zeros(n, n);
        for (k, &ck) in coef.iter().enumerate() {
            if ck != 0.0 {
                s.axpy(ck, &self.margins[k]).expect("square");
            }
        }
        self.set_s(s);
        Ok(())
    }

    pub fn set_bias(&mut self, bias: f64) {
        self.state.bias = bias;
    }

    fn set_s(&mut self, s: Matrix) {
        self.s_norm = s.frobenius_norm();
        self.state.s_matrix = s;
        self.state.refresh_objective();
    }

    pub fn state(&self) -> &DualState {
        &self.state
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    /// `a_i y_i` for every sample.
    pub fn coefficients(&self) -> Vec<f64> {
        self.state
            .alphas
            .iter()
            .zip(&self.state.labels)
            .map(|(a, y)| a * y)
            .collect()
    }

    /// `M_k = sum_j a_j y_j K(X_j, X_k)`.
    pub fn margin_matrix(&self, k: usize) -> &Matrix {
        &self.margins[k]
    }

    fn margin_term(&self, k: usize) -> f64 {
        if self.s_norm < self.cfg.w_norm_floor {
            0.0
        } else {
            dot(self.margins[k].as_slice(), self.state.s_matrix.as_slice()) / self.s_norm
        }
    }

    /// `f(X_k) = <M_k, S / ||S||> + b`, or just `b` while `S` is singular.
    pub fn decision_value(&self, k: usize) -> f64 {
        self.margin_term(k) + self.state.bias
    }

    pub fn violation(&self, k: usize) -> f64 {
        kkt_violation(
            self.state.alphas[k],
            self.state.labels[k],
            self.cfg.c,
            self.decision_value(k),
            self.cfg.kkt_tol,
        )
    }

    pub fn max_violation(&self) -> f64 {
        (0..self.state.len())
            .map(|k| self.violation(k))
            .fold(0.0, f64::max)
    }

    fn first_violator_from(&self, start: usize) -> Option<usize> {
        let n = self.state.len();
        (0..n)
            .map(|k| (start + k) % n)
            .find(|&k| self.violation(k) > 0.0)
    }

    fn draw_partner(&mut self, first: usize) -> usize {
        let n = self.state.len();
        let r = self.rng.random_range(0..n - 1);
        if r >= first {
            r + 1
        } else {
            r
        }
    }

    /// First KKT violator in scan order plus a uniformly drawn partner, or
    /// `None` when every condition holds.
    pub fn select_pair(&mut self) -> Option<(usize, usize)> {
        let first = self.first_violator_from(0)?;
        Some((first, self.draw_partner(first)))
    }

    pub fn bounds(&self, first: usize, second: usize) -> (f64, f64) {
        let s = &self.state;
        compute_bounds(
            s.alphas[first],
            s.alphas[second],
            s.labels[first],
            s.labels[second],
            self.cfg.c,
        )
    }

    /// Line terms for moving `second` with `first` compensating.
    pub fn line_terms(&self, first: usize, second: usize) -> Result<LineTerms> {
        let n = self.cache.block_dim();
        let y1 = self.state.labels[first];
        let y2 = self.state.labels[second];
        // P = A^T W = y2 (M_2 - M_1)^T
        let mut diff = self.margins[second].clone();
        diff.axpy(-1.0, &self.margins[first]).expect("square");
        let mut p = Matrix::zeros(n, n);
        p.axpy_transposed(y2, &diff).expect("square");
        let mut q = Matrix::zeros(n, n);
        self.cache.add_block(first, first, 1.0, &mut q);
        self.cache.add_block(second, second, 1.0, &mut q);
        self.cache.add_block(first, second, -1.0, &mut q);
        self.cache.add_block(second, first, -1.0, &mut q);
        if !(p
            .as_slice()
            .iter()
            .chain(q.as_slice())
            .all(|v| v.is_finite()))
        {
            return Err(Error::NonFinite(format!(
                "kernel terms for pair ({first}, {second})"
            )));
        }
        Ok(LineTerms::new(
            y1 * y2,
            self.state.alphas[second],
            self.state.s_matrix.clone(),
            p,
            q,
            self.cfg.w_norm_floor,
        ))
    }

    fn propose(&self, first: usize, second: usize) -> Result<Option<Proposal>> {
        if first == second {
            return Ok(None);
        }
        let c = self.cfg.c;
        let (l, h) = self.bounds(first, second);
        if h - l <= f64::EPSILON * c {
            return Ok(None);
        }
        let line = self.line_terms(first, second)?;
        let q_norm = line.q().frobenius_norm();
        let scale = self.diag_norms[first] + self.diag_norms[second];
        if q_norm <= 1e-12 * scale || q_norm == 0.0 {
            return Ok(None);
        }
        let old = line.origin();
        let newton = newton_maximize(
            &line,
            (l, h),
            old,
            self.cfg.newton_tol,
            self.cfg.max_newton_iters,
        );
        let mut candidates = vec![clip(newton.alpha2, l, h), l, h];
        if self.s_norm < self.cfg.w_norm_floor {
            candidates.push(0.5 * (l + h));
        }
        let mut best = old;
        let mut best_gain = 0.0;
        for cand in candidates {
            let g = line.gain(cand);
            if g > best_gain {
                best_gain = g;
                best = cand;
            }
        }
        let moved = (best - old).abs();
        if moved <= 1e-12 * (best.abs() + old.abs() + 1e-12) {
            return Ok(None);
        }
        Ok(Some(Proposal {
            second,
            alpha2: best,
            line,
        }))
    }

    /// Moves the second multiplier to `alpha2` (which must lie in `[L, H]`),
    /// compensates the first, and updates `S`, the margins and the
    /// objective using only blocks that touch the pair.
    pub fn apply_update(&mut self, first: usize, second: usize, alpha2: f64) -> Result<()> {
        let (l, h) = self.bounds(first, second);
        if !(alpha2 >= l && alpha2 <= h) {
            return Err(Error::InvalidParameter(format!(
                "alpha2 = {alpha2} outside [{l}, {h}]"
            )));
        }
        let line = self.line_terms(first, second)?;
        self.apply_with_line(first, second, alpha2, &line);
        Ok(())
    }

    fn apply_with_line(&mut self, first: usize, second: usize, alpha2: f64, line: &LineTerms) {
        let c = self.cfg.c;
        let y1 = self.state.labels[first];
        let y2 = self.state.labels[second];
        let a1_old = self.state.alphas[first];
        let a2_old = self.state.alphas[second];
        // A Newton step that lands a few ulps inside an end of [L, H] would
        // leave a multiplier that looks free and poisons the bias.
        let (l, h) = self.bounds(first, second);
        let snap = BOUND_SNAP * c;
        let alpha2 = if alpha2 - l <= snap {
            l
        } else if h - alpha2 <= snap {
            h
        } else {
            alpha2
        };
        // L and H are themselves rounded, so land exactly on 0 or C.
        let alpha2 = if alpha2 <= 4.0 * f64::EPSILON * c {
            0.0
        } else if c - alpha2 <= 4.0 * f64::EPSILON * c {
            c
        } else {
            alpha2
        };
        if alpha2 == a2_old {
            return;
        }
        let mut a1 = a1_old + y1 * y2 * (a2_old - alpha2);
        // Round-off only; the bounds keep a1 inside [0, C] exactly in reals.
        a1 = a1.clamp(0.0, c);
        if a1 <= 4.0 * f64::EPSILON * c {
            a1 = 0.0;
        } else if c - a1 <= 4.0 * f64::EPSILON * c {
            a1 = c;
        }
        let dc1 = y1 * (a1 - a1_old);
        let dc2 = y2 * (alpha2 - a2_old);
        for k in 0..self.state.len() {
            let m = &mut self.margins[k];
            self.cache.add_block(first, k, dc1, m);
            self.cache.add_block(second, k, dc2, m);
        }
        self.state.alphas[first] = a1;
        self.state.alphas[second] = alpha2;
        let s = line.s_matrix_at(alpha2);
        self.set_s(s);
    }

    /// Bias from the pair just updated: a free multiplier pins its own
    /// sample to the margin; with both at bounds the average is used.
    pub fn update_bias(&mut self, first: usize, second: usize) -> f64 {
        if self.s_norm < self.cfg.w_norm_floor {
            return self.state.bias;
        }
        let c = self.cfg.c;
        let free = |a: f64| is_free(a, c);
        let b1 = self.state.labels[first] - self.margin_term(first);
        let b2 = self.state.labels[second] - self.margin_term(second);
        let a1 = self.state.alphas[first];
        let a2 = self.state.alphas[second];
        self.state.bias = if free(a2) {
            b2
        } else if free(a1) {
            b1
        } else {
            0.5 * (b1 + b2)
        };
        self.state.bias
    }

    /// Sets the bias to the mean of `y_k - <M_k, S/||S||>` over free
    /// multipliers. Without free multipliers every sample at a bound only
    /// limits `b` from one side, and the midpoint of the resulting interval
    /// is used.
    pub fn refresh_bias_from_free(&mut self) -> Option<f64> {
        if self.s_norm < self.cfg.w_norm_floor {
            return None;
        }
        let c = self.cfg.c;
        let mut sum = 0.0;
        let mut count = 0usize;
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for k in 0..self.state.len() {
            let a = self.state.alphas[k];
            let y = self.state.labels[k];
            let implied = y - self.margin_term(k);
            if is_free(a, c) {
                sum += implied;
                count += 1;
            } else if (y > 0.0) == at_lower(a, c) {
                lo = lo.max(implied);
            } else {
                hi = hi.min(implied);
            }
        }
        self.state.bias = if count > 0 {
            sum / count as f64
        } else if lo.is_finite() && hi.is_finite() {
            0.5 * (lo + hi)
        } else if lo.is_finite() {
            lo
        } else if hi.is_finite() {
            hi
        } else {
            return None;
        };
        Some(self.state.bias)
    }

    fn attempt(&mut self, start: usize) -> Result<StepOutcome> {
        let Some(first) = self.first_violator_from(start) else {
            return Ok(StepOutcome::Converged);
        };
        self.attempts += 1;
        let n = self.state.len();
        for _ in 0..n {
            let second = self.draw_partner(first);
            if let Some(p) = self.propose(first, second)? {
                let before = self.state.objective;
                self.apply_with_line(first, p.second, p.alpha2, &p.line);
                self.update_bias(first, p.second);
                self.accepted += 1;
                return Ok(StepOutcome::Moved {
                    first,
                    second: p.second,
                    objective_before: before,
                    objective_after: self.state.objective,
                });
            }
        }
        Ok(StepOutcome::Stuck { first })
    }

    /// One outer iteration starting the violator scan at index 0.
    pub fn step(&mut self) -> Result<StepOutcome> {
        self.attempt(0)
    }

    pub fn iterations(&self) -> usize {
        self.attempts
    }

    /// Runs outer iterations until no violator remains, the budget is
    /// exhausted, or no violator can be improved.
    pub fn run(mut self) -> Result<Solution> {
        let n = self.state.len();
        let limit = self.cfg.outer_limit(n);
        let mut cursor = 0;
        let mut failures = 0;
        let mut refreshed = false;
        let status = loop {
            if self.attempts >= limit {
                break SolveStatus::MaxIterations;
            }
            match self.attempt(cursor)? {
                StepOutcome::Converged => break SolveStatus::Converged,
                StepOutcome::Moved { .. } => {
                    cursor = 0;
                    failures = 0;
                    refreshed = false;
                }
                StepOutcome::Stuck { first } => {
                    cursor = (first + 1) % n;
                    failures += 1;
                    if failures >= n {
                        if refreshed {
                            break SolveStatus::Stalled;
                        }
                        self.refresh_bias_from_free();
                        refreshed = true;
                        failures = 0;
                        cursor = 0;
                    }
                }
            }
        };
        self.refresh_bias_from_free();
        if !self.state.objective.is_finite() {
            return Err(Error::NonFinite("dual objective".into()));
        }
        log::debug!(
            "solver finished: {:?} after {} attempts ({} accepted), objective {}",
            status,
            self.attempts,
            self.accepted,
            self.state.objective
        );
        Ok(Solution {
            state: self.state,
            iterations: self.attempts,
            accepted_steps: self.accepted,
            status,
        })
    }

    /// Solution snapshot without running further.
    pub fn into_solution(self, status: SolveStatus) -> Solution {
        Solution {
            state: self.state,
            iterations: self.attempts,
            accepted_steps: self.accepted,
            status,
        }
    }
}

/// Relative distance (in units of C) below which an updated multiplier is
/// moved onto the end of its feasible interval.
pub const BOUND_SNAP: f64 = 1e-10;

/// Trains the dual on `samples` with labels in `{-1, +1}`.
pub fn solve(
    samples: &[Matrix],
    labels: &[f64],
    spec: KernelSpec,
    cfg: &SolverConfig,
) -> Result<Solution> {
    let cache = GramCache::build(spec, samples, CacheMode::Auto)?;
    solve_with_cache(&cache, labels, cfg)
}

pub fn solve_with_cache(cache: &GramCache, labels: &[f64], cfg: &SolverConfig) -> Result<Solution> {
    Solver::new(cache, labels, cfg.clone())?.run()
}
