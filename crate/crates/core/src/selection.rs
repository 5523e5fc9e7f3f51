//! Bayes factors, posterior model probabilities and simulation studies.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conjugate::{self, GridSpec, GridStats, MniwParams, ModelGrid, PriorSpec};
use crate::error::{Error, Result};
use crate::gausslik::{self, LocationScale};
use crate::hierarchical::{SyntheticScale, TestPrior};
use crate::model::{ModelFamily, Theta};
use crate::rng::Seed;
use crate::trajectory::IncrementMatrix;

/// A candidate model: family, prior and kernel grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelSpec {
    pub label: String,
    pub family: ModelFamily,
    pub prior: PriorSpec,
    pub grid: GridSpec,
}

impl ModelSpec {
    pub fn new(family: ModelFamily, prior: PriorSpec, grid: GridSpec) -> Self {
        Self { label: family.label(), family, prior, grid }
    }

    pub fn prepare(self) -> Result<PreparedModel> {
        let grid = ModelGrid::new(self.family, self.grid)?;
        Ok(PreparedModel { spec: self, grid })
    }
}

/// A [`ModelSpec`] with its grid (and cached kernel decompositions) built.
#[derive(Clone, Debug)]
pub struct PreparedModel {
    pub spec: ModelSpec,
    pub grid: ModelGrid,
}

impl PreparedModel {
    pub fn label(&self) -> &str {
        &self.spec.label
    }

    pub fn posterior(&self, x: &IncrementMatrix) -> Result<conjugate::PosteriorGrid> {
        conjugate::grid_posterior(x, &self.grid, &self.spec.prior)
    }

    pub fn log_marginal(&self, x: &IncrementMatrix) -> Result<f64> {
        if !self.spec.prior.is_proper() {
            return Err(Error::ImproperPrior(format!("model {} has an improper prior", self.label())));
        }
        conjugate::log_marginal(&self.posterior(x)?)
    }

    /// Draws parameters from the model's prior (test priors only).
    pub fn sample_prior<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Result<Theta> {
        match &self.spec.prior {
            PriorSpec::Test(tp) => tp.sample(&self.spec.grid, rng),
            _ => Err(Error::invalid("parameter draws require a test prior")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub labels: Vec<String>,
    pub log_marginal: Vec<f64>,
    /// `log_bf[i][j] = log f_i - log f_j`.
    pub log_bf: Vec<Vec<f64>>,
    pub prior_odds: Vec<f64>,
    pub probabilities: Vec<f64>,
}

/// Combines log marginal likelihoods with prior model probabilities.
pub fn combine(labels: Vec<String>, log_marginal: Vec<f64>, prior_odds: &[f64]) -> Result<ComparisonResult> {
    let k = log_marginal.len();
    if prior_odds.len() != k {
        return Err(Error::invalid(format!("{} prior odds for {k} models", prior_odds.len())));
    }
    if prior_odds.iter().any(|&q| !(q > 0.0) || !q.is_finite()) {
        return Err(Error::invalid("prior odds must be positive"));
    }
    let total: f64 = prior_odds.iter().sum();
    let odds: Vec<f64> = prior_odds.iter().map(|q| q / total).collect();
    let lp: Vec<f64> = log_marginal.iter().zip(&odds).map(|(l, q)| l + q.ln()).collect();
    let top = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = lp.iter().map(|l| (l - top).exp()).collect();
    let z: f64 = w.iter().sum();
    let log_bf = (0..k).map(|i| (0..k).map(|j| log_marginal[i] - log_marginal[j]).collect()).collect();
    Ok(ComparisonResult { labels, probabilities: w.iter().map(|v| v / z).collect(), log_marginal, log_bf, prior_odds: odds })
}

/// Posterior model probabilities of `x` under each model.
pub fn compare(x: &IncrementMatrix, models: &[PreparedModel], prior_odds: &[f64]) -> Result<ComparisonResult> {
    let lm = models.iter().map(|m| m.log_marginal(x)).collect::<Result<Vec<_>>>()?;
    combine(models.iter().map(|m| m.label().to_string()).collect(), lm, prior_odds)
}

/// One cell of the selection matrix: data generated by `generator`, compared
/// pairwise against `alternative` with equal prior odds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionCell {
    pub generator: String,
    pub alternative: String,
    /// Average posterior probability of the generating model.
    pub mean_prob: f64,
    /// Fraction of datasets where the generating model has probability above one half.
    pub win_rate: f64,
    pub n_used: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub generator: String,
    pub index: usize,
    /// Log marginal likelihood under each candidate; `None` on failure.
    pub log_marginal: Vec<Option<f64>>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionMatrix {
    pub labels: Vec<String>,
    pub n_steps: usize,
    pub dt: f64,
    pub cells: Vec<SelectionCell>,
    pub datasets: Vec<DatasetRecord>,
    pub n_failed: usize,
}

impl SelectionMatrix {
    pub fn cell(&self, generator: &str, alternative: &str) -> Option<&SelectionCell> {
        self.cells.iter().find(|c| c.generator == generator && c.alternative == alternative)
    }
}

/// Simulates data from a parameter of a prepared model.
pub fn simulate_from(model: &PreparedModel, theta: &Theta, n_steps: usize, dt: f64, seed: Seed) -> Result<IncrementMatrix> {
    let acf = model.spec.family.acf(&theta.vartheta, dt, n_steps)?;
    gausslik::simulate_increments(&theta.ls, &acf, n_steps, &mut seed.rng())
}

/// For each generating model, simulates `n_datasets` trajectories with
/// parameters drawn from its prior, computes the log marginal likelihood under
/// every model, and tabulates pairwise selection performance.
pub fn selection_study(
    models: &[PreparedModel],
    n_datasets: usize,
    n_steps: usize,
    dt: f64,
    seed: Seed,
) -> Result<SelectionMatrix> {
    if let Some(m) = models.iter().find(|m| !m.spec.prior.is_proper()) {
        return Err(Error::ImproperPrior(format!("model {} has an improper prior", m.label())));
    }
    let labels: Vec<String> = models.iter().map(|m| m.label().to_string()).collect();
    let jobs: Vec<(usize, usize)> = (0..models.len()).flat_map(|g| (0..n_datasets).map(move |d| (g, d))).collect();
    let datasets: Vec<DatasetRecord> = jobs
        .par_iter()
        .map(|&(g, d)| {
            let s = seed.child(g as u64).child(d as u64);
            let run = || -> Result<Vec<Option<f64>>> {
                let theta = models[g].sample_prior(&mut s.named("prior").rng())?;
                let x = simulate_from(&models[g], &theta, n_steps, dt, s.named("data"))?;
                Ok(models.iter().map(|m| m.log_marginal(&x).ok()).collect())
            };
            match run() {
                Ok(lm) => DatasetRecord { generator: labels[g].clone(), index: d, log_marginal: lm, error: None },
                Err(e) => DatasetRecord {
                    generator: labels[g].clone(),
                    index: d,
                    log_marginal: vec![None; models.len()],
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let mut cells = Vec::new();
    for (g, gl) in labels.iter().enumerate() {
        for (a, al) in labels.iter().enumerate() {
            if a == g {
                continue;
            }
            let probs: Vec<f64> = datasets
                .iter()
                .filter(|r| &r.generator == gl)
                .filter_map(|r| match (r.log_marginal[g], r.log_marginal[a]) {
                    (Some(lg), Some(la)) => Some(1.0 / (1.0 + (la - lg).exp())),
                    _ => None,
                })
                .collect();
            let n = probs.len();
            cells.push(SelectionCell {
                generator: gl.clone(),
                alternative: al.clone(),
                mean_prob: probs.iter().sum::<f64>() / n.max(1) as f64,
                win_rate: probs.iter().filter(|&&p| p > 0.5).count() as f64 / n.max(1) as f64,
                n_used: n,
            });
        }
    }
    let n_failed = datasets.iter().filter(|r| r.log_marginal.iter().any(Option::is_none)).count();
    Ok(SelectionMatrix { labels, n_steps, dt, cells, datasets, n_failed })
}

/// Profile maximum-likelihood parameter of a model on its grid.
pub fn grid_mle(grid: &ModelGrid, stats: &GridStats) -> Result<(Theta, f64)> {
    let (i, fit) = grid.profile_argmax(stats)?;
    Ok((Theta { vartheta: grid.family.vartheta(&grid.nodes[i])?, ls: fit.ls }, fit.loglik))
}

/// The two priors compared in the sensitivity study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SensitivityPrior {
    /// Conjugate prior with negligible scale and weak location information.
    Noninformative,
    /// The posterior under the default prior, reused as the prior.
    DoubleUse,
}

impl SensitivityPrior {
    pub fn label(&self) -> &'static str {
        match self {
            SensitivityPrior::Noninformative => "noninformative",
            SensitivityPrior::DoubleUse => "double-use",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub generator: String,
    pub index: usize,
    pub prior: SensitivityPrior,
    /// Probability of the first model (fBM) under equal prior odds.
    pub prob_first: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityTable {
    pub labels: [String; 2],
    /// Maximum-likelihood parameters used to simulate, one per model.
    pub mle: Vec<Theta>,
    pub rows: Vec<SensitivityRow>,
}

impl SensitivityTable {
    /// `(fraction where the second model wins, fraction where the generator wins)`.
    pub fn summary(&self, generator: &str, prior: SensitivityPrior) -> (f64, f64) {
        let rows: Vec<&SensitivityRow> =
            self.rows.iter().filter(|r| r.generator == generator && r.prior == prior).collect();
        let n = rows.len().max(1) as f64;
        let second = rows.iter().filter(|r| r.prob_first < 0.5).count() as f64 / n;
        let correct = if generator == self.labels[0] { 1.0 - second } else { second };
        (second, correct)
    }
}

fn log_marginal_under(grid: &ModelGrid, st: &GridStats, prior: SensitivityPrior) -> Result<f64> {
    let spec = match prior {
        SensitivityPrior::Noninformative => PriorSpec::Conjugate { mniw: MniwParams::noninformative() },
        SensitivityPrior::DoubleUse => PriorSpec::Posterior(Box::new(grid.posterior(st, &PriorSpec::default())?)),
    };
    conjugate::log_marginal(&grid.posterior(st, &spec)?)
}

/// Fits the grid MLE of each of two models to `base`, simulates `n_sim`
/// datasets of the same length from each fit, and records the posterior
/// probability of the first model under each sensitivity prior.
pub fn prior_sensitivity_study(
    base: &IncrementMatrix,
    grids: [&ModelGrid; 2],
    n_sim: usize,
    seed: Seed,
) -> Result<SensitivityTable> {
    let labels = [grids[0].family.label(), grids[1].family.label()];
    let mle = grids
        .iter()
        .map(|g| Ok(grid_mle(g, &g.stats(base)?)?.0))
        .collect::<Result<Vec<Theta>>>()?;
    let n = base.len();
    let jobs: Vec<(usize, usize)> = (0..2).flat_map(|g| (0..n_sim).map(move |i| (g, i))).collect();
    let rows = jobs
        .par_iter()
        .map(|&(g, i)| {
            let acf = grids[g].family.acf(&mle[g].vartheta, base.dt, n)?;
            let x = gausslik::simulate_increments(&mle[g].ls, &acf, n, &mut seed.child(g as u64).child(i as u64).rng())?;
            let st = [grids[0].stats(&x)?, grids[1].stats(&x)?];
            [SensitivityPrior::Noninformative, SensitivityPrior::DoubleUse]
                .into_iter()
                .map(|p| {
                    let l0 = log_marginal_under(grids[0], &st[0], p)?;
                    let l1 = log_marginal_under(grids[1], &st[1], p)?;
                    Ok(SensitivityRow { generator: labels[g].clone(), index: i, prior: p, prob_first: 1.0 / (1.0 + (l1 - l0).exp()) })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    Ok(SensitivityTable { labels, mle, rows })
}

/// Synthetic proper prior for desk-scale selection studies: `H ~ N(0.35, 0.1^2)`
/// for fBM; `alpha ~ N(0.5, 0.15^2)` and `log tau ~ N(-6, 1)` for the GLE;
/// default location-scale moments.
pub fn desk_scale_prior(family: ModelFamily) -> Result<TestPrior> {
    let kernel: &[(f64, f64)] = match family {
        ModelFamily::Fbm => &[(0.35, 0.1)],
        ModelFamily::Gle { .. } => &[(0.5, 0.15), (-6.0, 1.0)],
    };
    TestPrior::synthetic(family, kernel, &SyntheticScale::default())
}

/// [`desk_scale_prior`] on its adapted grid with `n_per_axis` points
/// (`None`: 100 for fBM, 30 per axis for the GLE).
pub fn desk_scale_model(family: ModelFamily, n_per_axis: Option<usize>) -> Result<PreparedModel> {
    let tp = desk_scale_prior(family)?;
    let n = n_per_axis.unwrap_or(match family {
        ModelFamily::Fbm => 100,
        ModelFamily::Gle { .. } => 30,
    });
    let grid = tp.adapted_grid(n)?;
    ModelSpec::new(family, PriorSpec::Test(Box::new(tp)), grid).prepare()
}

/// Location-scale parameter with the given drift and isotropic scale.
pub fn isotropic(mu: [f64; 2], sigma: f64) -> LocationScale {
    LocationScale::from_sds(mu, sigma, sigma, 0.0).expect("positive scale")
}
