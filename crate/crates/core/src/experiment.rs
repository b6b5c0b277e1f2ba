//! Parameter grid search, evaluation and the simulation driver.

use rayon::prelude::*;

use crate::data::{generate_trial, stratified_split, Dataset, SimulationSpec};
use crate::error::{Error, Result};
use crate::kernel::{CacheMode, GramCache, KernelSpec};
use crate::metrics::ConfusionMatrix;
use crate::model::{sign_label, train_binary_cached};
use crate::multiclass::{train_classifier, Classifier};
use crate::smo::SolverConfig;

/// Candidate values for `C` and, for the Gaussian kernel, `gamma`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub c_values: Vec<f64>,
    pub gamma_values: Vec<f64>,
}

fn decades(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|e| 10f64.powi(e)).collect()
}

impl Default for Grid {
    /// `C` in `1e-2..=1e2` and `gamma` in `1e-4..=1e4`, one value per decade.
    fn default() -> Self {
        Grid {
            c_values: decades(-2, 2),
            gamma_values: decades(-4, 4),
        }
    }
}

impl Grid {
    pub fn validate(&self) -> Result<()> {
        for (name, values) in [("C", &self.c_values), ("gamma", &self.gamma_values)] {
            if values.is_empty() {
                return Err(Error::InvalidParameter(format!("{name} grid is empty")));
            }
            if values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::InvalidParameter(format!(
                    "{name} grid must be positive"
                )));
            }
        }
        Ok(())
    }

    /// Kernels to try for `base`: one per gamma for the Gaussian family,
    /// `base` alone otherwise.
    fn kernels(&self, base: KernelSpec) -> Vec<KernelSpec> {
        match base {
            KernelSpec::Gaussian { .. } => self
                .gamma_values
                .iter()
                .map(|&g| base.with_gamma(g))
                .collect(),
            other => vec![other],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridCell {
    pub c: f64,
    pub kernel: KernelSpec,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridResult {
    pub best: GridCell,
    pub cells: Vec<GridCell>,
}

/// Confusion matrix of `classifier` on `data` over the union of the
/// classifier's and the data's classes.
pub fn evaluate(classifier: &Classifier, data: &Dataset) -> Result<ConfusionMatrix> {
    let predicted = classifier.predict_all(data.samples())?;
    let mut classes = classifier.classes();
    classes.extend(data.classes());
    classes.sort_unstable();
    classes.dedup();
    ConfusionMatrix::from_predictions(&classes, data.labels(), &predicted)
}

/// Binary accuracy of every `C` for one kernel, sharing one Gram cache.
fn binary_cells(
    fit: &Dataset,
    val: &Dataset,
    kernel: KernelSpec,
    grid: &Grid,
    cfg: &SolverConfig,
) -> Result<Vec<GridCell>> {
    let cache = GramCache::build(kernel, fit.samples(), CacheMode::Auto)?;
    let positive = fit.classes()[1];
    let labels: Vec<i32> = fit
        .labels()
        .iter()
        .map(|&l| if l == positive { 1 } else { -1 })
        .collect();
    grid.c_values
        .iter()
        .map(|&c| {
            let model = train_binary_cached(&cache, &labels, &cfg.clone().with_c(c))?;
            let mut correct = 0usize;
            for (x, l) in val.iter() {
                let predicted = if sign_label(model.decision_value(x)?) == 1 {
                    positive
                } else {
                    fit.classes()[0]
                };
                correct += usize::from(predicted == l);
            }
            Ok(GridCell {
                c,
                kernel,
                accuracy: correct as f64 / val.len() as f64,
            })
        })
        .collect()
}

fn multiclass_cells(
    fit: &Dataset,
    val: &Dataset,
    kernel: KernelSpec,
    grid: &Grid,
    cfg: &SolverConfig,
) -> Result<Vec<GridCell>> {
    grid.c_values
        .iter()
        .map(|&c| {
            let model = train_classifier(fit, kernel, &cfg.clone().with_c(c), CacheMode::Auto)?;
            Ok(GridCell {
                c,
                kernel,
                accuracy: evaluate(&model, val)?.accuracy()?,
            })
        })
        .collect()
}

/// Holds out `validation_fraction` of `train` per class, scores every grid
/// cell on it and returns the best cell. Ties go to the smaller `C`, then
/// to the smaller `gamma`.
pub fn grid_search(
    train: &Dataset,
    base: KernelSpec,
    grid: &Grid,
    cfg: &SolverConfig,
    validation_fraction: f64,
    seed: u64,
) -> Result<GridResult> {
    grid.validate()?;
    let (fit, val) = stratified_split(train, 1.0 - validation_fraction, seed)?;
    let binary = fit.classes().len() == 2;
    let per_kernel = grid
        .kernels(base)
        .into_par_iter()
        .map(|kernel| {
            if binary {
                binary_cells(&fit, &val, kernel, grid, cfg)
            } else {
                multiclass_cells(&fit, &val, kernel, grid, cfg)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cells: Vec<GridCell> = per_kernel.into_iter().flatten().collect();
    cells.sort_by(|a, b| {
        a.c.total_cmp(&b.c).then(
            a.kernel
                .gamma()
                .unwrap_or(0.0)
                .total_cmp(&b.kernel.gamma().unwrap_or(0.0)),
        )
    });
    let mut best = cells[0];
    for cell in &cells[1..] {
        if cell.accuracy > best.accuracy {
            best = *cell;
        }
    }
    log::debug!(
        "grid search picked C={} {} (validation accuracy {})",
        best.c,
        best.kernel,
        best.accuracy
    );
    Ok(GridResult { best, cells })
}

/// Outcome of one simulation trial.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialOutcome {
    pub accuracy: f64,
    pub c: f64,
    pub kernel: KernelSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationSummary {
    pub p: usize,
    pub train_size: usize,
    pub trials: Vec<TrialOutcome>,
}

impl SimulationSummary {
    pub fn mean_accuracy(&self) -> f64 {
        self.trials.iter().map(|t| t.accuracy).sum::<f64>() / self.trials.len() as f64
    }

    /// Sample standard deviation of the trial accuracies (0 for one trial).
    pub fn std_accuracy(&self) -> f64 {
        let k = self.trials.len();
        if k < 2 {
            return 0.0;
        }
        let mean = self.mean_accuracy();
        let ss: f64 = self
            .trials
            .iter()
            .map(|t| (t.accuracy - mean).powi(2))
            .sum();
        (ss / (k - 1) as f64).sqrt()
    }

    /// `"<train size> & <p> & <mean>(<std>)"` with percentages to one decimal.
    pub fn table_row(&self) -> String {
        format!(
            "{} & {} & {:.1}({:.1})",
            self.train_size,
            self.p,
            100.0 * self.mean_accuracy(),
            100.0 * self.std_accuracy()
        )
    }
}

/// Settings shared by every simulation trial.
#[derive(Clone, Debug)]
pub struct SimulationConfig {
    pub kernel: KernelSpec,
    pub grid: Grid,
    pub solver: SolverConfig,
    pub validation_fraction: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            kernel: KernelSpec::Gaussian { gamma: 1.0 },
            grid: Grid::default(),
            solver: SolverConfig::default(),
            validation_fraction: 0.25,
        }
    }
}

/// Runs one trial: generate, grid-search on a validation part of the
/// training half, retrain on the full training half, score the test half.
pub fn run_trial(
    spec: &SimulationSpec,
    trial: usize,
    cfg: &SimulationConfig,
) -> Result<TrialOutcome> {
    let (train, test) = generate_trial(spec, trial)?;
    let seed = spec.seed.wrapping_add(trial as u64);
    let solver = cfg.solver.clone().with_seed(seed);
    let search = grid_search(
        &train,
        cfg.kernel,
        &cfg.grid,
        &solver,
        cfg.validation_fraction,
        seed,
    )?;
    let model = train_classifier(
        &train,
        search.best.kernel,
        &solver.with_c(search.best.c),
        CacheMode::Auto,
    )?;
    Ok(TrialOutcome {
        accuracy: evaluate(&model, &test)?.accuracy()?,
        c: search.best.c,
        kernel: search.best.kernel,
    })
}

/// Runs every trial of `spec` in parallel; results are kept in trial order.
pub fn run_simulation(spec: &SimulationSpec, cfg: &SimulationConfig) -> Result<SimulationSummary> {
    spec.validate()?;
    let trials = (0..spec.trials)
        .into_par_iter()
        .map(|t| run_trial(spec, t, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(SimulationSummary {
        p: spec.p,
        train_size: spec.n_total / 2,
        trials,
    })
}
