//! One-vs-one reduction over binary models.

use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernel::{CacheMode, KernelSpec};
use crate::matrix::Matrix;
use crate::model::{train_binary_with_mode, TrainedBinaryModel};
use crate::smo::SolverConfig;

/// Binary model separating `positive` (label +1) from `negative` (label -1).
#[derive(Clone, Debug, PartialEq)]
pub struct PairModel {
    pub positive: i32,
    pub negative: i32,
    pub model: TrainedBinaryModel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OvoModel {
    classes: Vec<i32>,
    pairs: Vec<PairModel>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Solver seed for the pair `(a, b)`.
pub fn pair_seed(seed: u64, a: i32, b: i32) -> u64 {
    let packed = ((a as u32 as u64) << 32) | (b as u32 as u64);
    seed ^ splitmix64(packed)
}

impl OvoModel {
    /// Checks that `pairs` holds exactly one model per class pair, in the
    /// lexicographic order produced by training, with a common shape and
    /// kernel.
    pub fn from_parts(classes: Vec<i32>, pairs: Vec<PairModel>) -> Result<Self> {
        if classes.len() < 2 || classes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "class list must be strictly increasing with at least 2 entries".into(),
            ));
        }
        let expected: Vec<(i32, i32)> = class_pairs(&classes);
        let found: Vec<(i32, i32)> = pairs.iter().map(|p| (p.positive, p.negative)).collect();
        if expected != found {
            return Err(Error::InvalidParameter(format!(
                "pair models {found:?} do not cover classes {classes:?}"
            )));
        }
        let first = &pairs[0].model;
        if pairs
            .iter()
            .any(|p| p.model.shape() != first.shape() || p.model.kernel() != first.kernel())
        {
            return Err(Error::InvalidParameter(
                "pair models disagree on shape or kernel".into(),
            ));
        }
        Ok(OvoModel { classes, pairs })
    }

    pub fn classes(&self) -> &[i32] {
        &self.classes
    }

    pub fn pairs(&self) -> &[PairModel] {
        &self.pairs
    }

    pub fn shape(&self) -> (usize, usize) {
        self.pairs[0].model.shape()
    }

    pub fn kernel(&self) -> &KernelSpec {
        self.pairs[0].model.kernel()
    }

    /// Pair winners with their absolute decision values.
    pub fn votes(&self, z: &Matrix) -> Result<Vec<(i32, f64)>> {
        self.pairs
            .iter()
            .map(|p| {
                let f = p.model.decision_value(z)?;
                let winner = if f >= 0.0 { p.positive } else { p.negative };
                Ok((winner, f.abs()))
            })
            .collect()
    }

    pub fn predict(&self, z: &Matrix) -> Result<i32> {
        Ok(resolve_votes(&self.classes, &self.votes(z)?))
    }

    pub fn predict_all(&self, samples: &[Matrix]) -> Result<Vec<i32>> {
        samples.par_iter().map(|z| self.predict(z)).collect()
    }
}

/// A trained classifier: a single binary model over labels `{-1, +1}` or a
/// one-vs-one ensemble.
#[derive(Clone, Debug, PartialEq)]
pub enum Classifier {
    Binary(TrainedBinaryModel),
    OneVsOne(OvoModel),
}

impl Classifier {
    pub fn classes(&self) -> Vec<i32> {
        match self {
            Classifier::Binary(_) => vec![-1, 1],
            Classifier::OneVsOne(m) => m.classes().to_vec(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            Classifier::Binary(m) => m.shape(),
            Classifier::OneVsOne(m) => m.shape(),
        }
    }

    pub fn kernel(&self) -> &KernelSpec {
        match self {
            Classifier::Binary(m) => m.kernel(),
            Classifier::OneVsOne(m) => m.kernel(),
        }
    }

    /// Every binary model with the class it maps `+1` and `-1` to.
    pub fn binary_models(&self) -> Vec<(i32, i32, &TrainedBinaryModel)> {
        match self {
            Classifier::Binary(m) => vec![(1, -1, m)],
            Classifier::OneVsOne(m) => m
                .pairs()
                .iter()
                .map(|p| (p.positive, p.negative, &p.model))
                .collect(),
        }
    }

    /// True when every binary solve met its KKT tolerance.
    pub fn converged(&self) -> bool {
        self.binary_models()
            .iter()
            .all(|(_, _, m)| m.meta().kkt_converged())
    }

    pub fn predict(&self, z: &Matrix) -> Result<i32> {
        match self {
            Classifier::Binary(m) => m.predict_label(z),
            Classifier::OneVsOne(m) => m.predict(z),
        }
    }

    pub fn predict_all(&self, samples: &[Matrix]) -> Result<Vec<i32>> {
        samples.par_iter().map(|z| self.predict(z)).collect()
    }
}

/// Trains a single binary model when the labels are exactly `{-1, +1}` and
/// a one-vs-one ensemble otherwise.
pub fn train_classifier(
    dataset: &Dataset,
    spec: KernelSpec,
    cfg: &SolverConfig,
    mode: CacheMode,
) -> Result<Classifier> {
    if dataset.classes() == [-1, 1] {
        let model = train_binary_with_mode(dataset.samples(), dataset.labels(), spec, cfg, mode)?;
        Ok(Classifier::Binary(model))
    } else {
        Ok(Classifier::OneVsOne(train_ovo_with_mode(
            dataset, spec, cfg, mode,
        )?))
    }
}

fn class_pairs(classes: &[i32]) -> Vec<(i32, i32)> {
    let mut out = Vec::new();
    for (i, &a) in classes.iter().enumerate() {
        for &b in &classes[i + 1..] {
            out.push((a, b));
        }
    }
    out
}

/// Most votes wins; ties go to the larger summed `|f|` over the winning
/// votes, then to the class listed first.
pub fn resolve_votes(classes: &[i32], votes: &[(i32, f64)]) -> i32 {
    let mut tally = vec![(0usize, 0.0f64); classes.len()];
    for &(winner, strength) in votes {
        if let Some(i) = classes.iter().position(|&c| c == winner) {
            tally[i].0 += 1;
            tally[i].1 += strength;
        }
    }
    let mut best = 0;
    for i in 1..classes.len() {
        let (count, strength) = tally[i];
        let (best_count, best_strength) = tally[best];
        if count > best_count || (count == best_count && strength > best_strength) {
            best = i;
        }
    }
    classes[best]
}

pub fn train_ovo(dataset: &Dataset, spec: KernelSpec, cfg: &SolverConfig) -> Result<OvoModel> {
    train_ovo_with_mode(dataset, spec, cfg, CacheMode::Auto)
}

/// Trains one binary model per class pair in parallel. Each pair solver is
/// seeded with [`pair_seed`].
pub fn train_ovo_with_mode(
    dataset: &Dataset,
    spec: KernelSpec,
    cfg: &SolverConfig,
    mode: CacheMode,
) -> Result<OvoModel> {
    let classes = dataset.classes();
    if classes.len() < 2 {
        return Err(Error::Degenerate(format!(
            "one-vs-one training needs at least 2 classes, found {}",
            classes.len()
        )));
    }
    let pairs = class_pairs(&classes)
        .into_par_iter()
        .map(|(a, b)| {
            let mut samples = Vec::new();
            let mut labels = Vec::new();
            for (x, l) in dataset.iter() {
                if l == a || l == b {
                    samples.push(x.clone());
                    labels.push(if l == a { 1 } else { -1 });
                }
            }
            let pair_cfg = cfg.clone().with_seed(pair_seed(cfg.seed, a, b));
            let model = train_binary_with_mode(&samples, &labels, spec, &pair_cfg, mode)?;
            log::debug!("pair ({a}, {b}): {} supports", model.support_count());
            Ok(PairModel {
                positive: a,
                negative: b,
                model,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    OvoModel::from_parts(classes, pairs)
}
