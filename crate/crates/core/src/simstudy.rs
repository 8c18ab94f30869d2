//! Simulation studies: how estimates of the two-population LN-LN model
//! behave across pool sizes, parameter settings and misspecified pool sizes.

use std::fmt;
use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{fit, OptimizerConfig};
use crate::likelihood::Dataset;
use crate::numeric::quantile_sorted;
use crate::param_space::natural_values;
use crate::pool_model::{sample_pools, ModelSpec, ParameterSet, PoolSizeVector};
use crate::rng;

pub const PARAMETER_NAMES: [&str; 4] = ["p", "mu1", "mu2", "sigma"];

const DATA_STREAM: u64 = 11;
const FIT_STREAM: u64 = 12;
const SIZES_STREAM: u64 = 13;
const PERTURB_STREAM: u64 = 14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyParameters {
    pub name: String,
    pub p: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub sigma: f64,
}

impl StudyParameters {
    pub fn new(name: &str, p: f64, mu1: f64, mu2: f64, sigma: f64) -> Self {
        Self {
            name: name.to_string(),
            p,
            mu1,
            mu2,
            sigma,
        }
    }

    pub fn parameter_set(&self) -> ParameterSet {
        ParameterSet::ln_ln(&[self.p, 1.0 - self.p], &[self.mu1, self.mu2], self.sigma)
    }

    pub fn values(&self) -> [f64; 4] {
        [self.p, self.mu1, self.mu2, self.sigma]
    }

    /// The five settings of the published study; set 1 is the reference.
    pub fn defaults() -> Vec<Self> {
        vec![
            Self::new("set1", 0.2, 2.0, 0.0, 0.2),
            Self::new("set2", 0.1, 2.0, 0.0, 0.2),
            Self::new("set3", 0.4, 2.0, 0.0, 0.2),
            Self::new("set4", 0.2, 2.0, 1.0, 0.2),
            Self::new("set5", 0.2, 2.0, 0.0, 0.5),
        ]
    }
}

/// How pool sizes are assigned to the samples of a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PoolSetting {
    Homogeneous(usize),
    /// Each sample draws its size uniformly from the list.
    Mixed(Vec<usize>),
}

impl PoolSetting {
    pub fn defaults() -> Vec<Self> {
        let mut out: Vec<Self> = [1, 2, 5, 10, 15, 20, 50].into_iter().map(Self::Homogeneous).collect();
        out.push(Self::Mixed(vec![1, 2, 5, 10]));
        out.push(Self::Mixed(vec![10, 15, 20, 50]));
        out
    }

    /// Stable identifier used to derive random streams.
    fn key(&self) -> u64 {
        match self {
            Self::Homogeneous(n) => *n as u64,
            Self::Mixed(sizes) => {
                sizes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &n| {
                    (h ^ n as u64).wrapping_mul(0x0100_0000_01b3)
                }) | 1 << 63
            }
        }
    }

    pub fn pool_sizes(&self, samples: usize, seed: u64) -> Result<PoolSizeVector> {
        match self {
            Self::Homogeneous(n) => PoolSizeVector::homogeneous(*n, samples),
            Self::Mixed(sizes) => {
                if sizes.is_empty() {
                    return Err(Error::Config("mixed pool setting needs at least one size".into()));
                }
                let mut r = rng::stream(seed, &[SIZES_STREAM]);
                PoolSizeVector::new((0..samples).map(|_| sizes[r.random_range(0..sizes.len())]).collect())
            }
        }
    }
}

impl fmt::Display for PoolSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Homogeneous(n) => write!(f, "n={n}"),
            Self::Mixed(sizes) => {
                let list: Vec<String> = sizes.iter().map(ToString::to_string).collect();
                write!(f, "mix{{{}}}", list.join(","))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MisspecMode {
    /// Every dataset of true pool size `true_pool_size` is refitted with each
    /// assumed size.
    FixedOffset,
    /// One dataset per mixed setting, refitted with Poisson-perturbed size
    /// vectors.
    PoissonPerturbed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub parameter_sets: Vec<StudyParameters>,
    pub pool_settings: Vec<PoolSetting>,
    pub replicates: usize,
    pub samples: usize,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
    pub true_pool_size: usize,
    pub assumed_pool_sizes: Vec<usize>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            parameter_sets: StudyParameters::defaults(),
            pool_settings: PoolSetting::defaults(),
            replicates: 50,
            samples: 50,
            seed: 1,
            optimizer: OptimizerConfig::default(),
            true_pool_size: 10,
            assumed_pool_sizes: (5..=15).collect(),
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 || self.samples == 0 {
            return Err(Error::Config("replicates and samples must be at least 1".into()));
        }
        if self.parameter_sets.is_empty() || self.pool_settings.is_empty() {
            return Err(Error::Config("study needs parameter sets and pool settings".into()));
        }
        let spec = ModelSpec::ln_ln(2)?;
        for set in &self.parameter_sets {
            set.parameter_set()
                .validate(&spec)
                .map_err(|e| Error::Config(format!("{}: {e}", set.name)))?;
        }
        self.optimizer.validate()
    }
}

/// One fit of the study grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub set: String,
    pub setting: String,
    /// Pool sizes given to the estimator when they differ from the truth.
    pub assumed: Option<String>,
    pub replicate: usize,
    pub estimates: std::result::Result<[f64; 4], String>,
}

fn fit_estimates(data: &Dataset, optimizer: &OptimizerConfig, seed: u64) -> std::result::Result<[f64; 4], String> {
    let spec = ModelSpec::ln_ln(2).expect("two populations");
    let config = OptimizerConfig {
        seed,
        ..optimizer.clone()
    };
    let r = fit(data, &spec, &config).map_err(|e| e.to_string())?;
    let v = natural_values(&r.mle, &spec);
    Ok([v[0], v[1], v[2], v[3]])
}

struct Cell<'a> {
    set_index: usize,
    set: &'a StudyParameters,
    setting: &'a PoolSetting,
    replicate: usize,
}

impl Cell<'_> {
    fn path(&self, stream: u64) -> [u64; 4] {
        [stream, self.set_index as u64, self.setting.key(), self.replicate as u64]
    }

    fn simulate(&self, config: &StudyConfig) -> Result<Dataset> {
        let data_seed = rng::derive_seed(config.seed, &self.path(DATA_STREAM));
        let sizes = self.setting.pool_sizes(config.samples, data_seed)?;
        let spec = ModelSpec::ln_ln(2)?;
        Ok(sample_pools(data_seed, &sizes, &spec, &self.set.parameter_set(), 1)?.dataset)
    }

    fn fit_seed(&self, config: &StudyConfig) -> u64 {
        rng::derive_seed(config.seed, &self.path(FIT_STREAM))
    }
}

fn grid<'a>(config: &'a StudyConfig, settings: &'a [PoolSetting]) -> Vec<Cell<'a>> {
    let mut cells = Vec::new();
    for (set_index, set) in config.parameter_sets.iter().enumerate() {
        for setting in settings {
            for replicate in 0..config.replicates {
                cells.push(Cell {
                    set_index,
                    set,
                    setting,
                    replicate,
                });
            }
        }
    }
    cells
}

/// Simulates and fits every parameter set, pool setting and replicate.
pub fn run_pool_size_study(config: &StudyConfig) -> Result<Vec<EstimateRecord>> {
    config.validate()?;
    grid(config, &config.pool_settings)
        .par_iter()
        .map(|cell| {
            let data = cell.simulate(config)?;
            Ok(EstimateRecord {
                set: cell.set.name.clone(),
                setting: cell.setting.to_string(),
                assumed: None,
                replicate: cell.replicate,
                estimates: fit_estimates(&data, &config.optimizer, cell.fit_seed(config)),
            })
        })
        .collect()
}

/// Median of each parameter for every set relative to the first set, per
/// pool setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub set: String,
    pub setting: String,
    pub parameter: String,
    pub true_value: f64,
    pub reference_true_value: f64,
    pub median: f64,
    pub reference_median: f64,
}

pub struct SensitivityStudy {
    pub records: Vec<EstimateRecord>,
    pub comparison: Vec<SensitivityRow>,
}

/// Runs the pool-size pipeline and compares every set against the first.
pub fn run_sensitivity_study(config: &StudyConfig) -> Result<SensitivityStudy> {
    let records = run_pool_size_study(config)?;
    let summaries = summarize(&records)?;
    let reference = &config.parameter_sets[0];
    let median_of = |set: &str, setting: &str, parameter: &str| {
        summaries
            .iter()
            .find(|s| s.set == set && s.setting == setting && s.parameter == parameter && s.assumed.is_none())
            .map(|s| s.median)
            .unwrap_or(f64::NAN)
    };
    let mut comparison = Vec::new();
    for set in &config.parameter_sets[1..] {
        for setting in &config.pool_settings {
            let label = setting.to_string();
            for (j, name) in PARAMETER_NAMES.iter().enumerate() {
                comparison.push(SensitivityRow {
                    set: set.name.clone(),
                    setting: label.clone(),
                    parameter: name.to_string(),
                    true_value: set.values()[j],
                    reference_true_value: reference.values()[j],
                    median: median_of(&set.name, &label, name),
                    reference_median: median_of(&reference.name, &label, name),
                });
            }
        }
    }
    Ok(SensitivityStudy { records, comparison })
}

/// Fits data generated with correct pool sizes under wrong ones.
pub fn run_misspec_study(config: &StudyConfig, mode: MisspecMode) -> Result<Vec<EstimateRecord>> {
    config.validate()?;
    match mode {
        MisspecMode::FixedOffset => {
            if config.assumed_pool_sizes.contains(&0) {
                return Err(Error::Config("assumed pool sizes must be positive".into()));
            }
            let truth = [PoolSetting::Homogeneous(config.true_pool_size)];
            let cells = grid(config, &truth);
            let per_cell: Vec<Vec<EstimateRecord>> = cells
                .par_iter()
                .map(|cell| {
                    let data = cell.simulate(config)?;
                    config
                        .assumed_pool_sizes
                        .iter()
                        .map(|&assumed| {
                            let sizes = PoolSizeVector::homogeneous(assumed, data.samples())?;
                            let refit = data.with_pool_sizes(sizes)?;
                            Ok(EstimateRecord {
                                set: cell.set.name.clone(),
                                setting: cell.setting.to_string(),
                                assumed: Some(format!("n={assumed}")),
                                replicate: cell.replicate,
                                estimates: fit_estimates(&refit, &config.optimizer, cell.fit_seed(config)),
                            })
                        })
                        .collect()
                })
                .collect::<Result<_>>()?;
            Ok(per_cell.into_iter().flatten().collect())
        }
        MisspecMode::PoissonPerturbed => {
            let mixed: Vec<PoolSetting> = config
                .pool_settings
                .iter()
                .filter(|s| matches!(s, PoolSetting::Mixed(_)))
                .cloned()
                .collect();
            if mixed.is_empty() {
                return Err(Error::Config("Poisson perturbation needs a mixed pool setting".into()));
            }
            let mut out = Vec::new();
            for (set_index, set) in config.parameter_sets.iter().enumerate() {
                for setting in &mixed {
                    let base = Cell {
                        set_index,
                        set,
                        setting,
                        replicate: 0,
                    };
                    let data = base.simulate(config)?;
                    out.push(EstimateRecord {
                        set: set.name.clone(),
                        setting: setting.to_string(),
                        assumed: Some("true".into()),
                        replicate: 0,
                        estimates: fit_estimates(&data, &config.optimizer, base.fit_seed(config)),
                    });
                    let perturbed: Vec<EstimateRecord> = (0..config.replicates)
                        .into_par_iter()
                        .map(|replicate| {
                            let cell = Cell { replicate, ..base };
                            let mut r = rng::stream(config.seed, &cell.path(PERTURB_STREAM));
                            let sizes = data
                                .pool_sizes()
                                .as_slice()
                                .iter()
                                .map(|&n| {
                                    let draw = Poisson::new(n as f64).expect("positive intensity").sample(&mut r);
                                    (draw as usize).max(1)
                                })
                                .collect();
                            let refit = data.with_pool_sizes(PoolSizeVector::new(sizes)?)?;
                            Ok(EstimateRecord {
                                set: set.name.clone(),
                                setting: setting.to_string(),
                                assumed: Some("poisson".into()),
                                replicate,
                                estimates: fit_estimates(&refit, &config.optimizer, cell.fit_seed(config)),
                            })
                        })
                        .collect::<Result<_>>()?;
                    out.extend(perturbed);
                }
            }
            Ok(out)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub set: String,
    pub setting: String,
    pub assumed: Option<String>,
    pub parameter: String,
    pub median: f64,
    pub q025: f64,
    pub q975: f64,
    pub fits: usize,
    pub failures: usize,
}

/// Median and 2.5%/97.5% quantiles per (set, setting, assumed, parameter),
/// in order of first appearance.
pub fn summarize(records: &[EstimateRecord]) -> Result<Vec<SummaryRecord>> {
    type Key = (String, String, Option<String>);
    let mut keys: Vec<Key> = Vec::new();
    let mut groups: Vec<Vec<&EstimateRecord>> = Vec::new();
    for r in records {
        let key = (r.set.clone(), r.setting.clone(), r.assumed.clone());
        match keys.iter().position(|k| *k == key) {
            Some(i) => groups[i].push(r),
            None => {
                keys.push(key);
                groups.push(vec![r]);
            }
        }
    }
    let mut out = Vec::new();
    for ((set, setting, assumed), group) in keys.into_iter().zip(groups) {
        let ok: Vec<[f64; 4]> = group
            .iter()
            .filter_map(|r| r.estimates.as_ref().ok().copied())
            .collect();
        let failures = group.len() - ok.len();
        if ok.is_empty() {
            return Err(Error::Numerical(format!(
                "every fit failed for {set}, {setting}; nothing to summarize"
            )));
        }
        for (j, name) in PARAMETER_NAMES.iter().enumerate() {
            let mut v: Vec<f64> = ok.iter().map(|e| e[j]).collect();
            v.sort_by(f64::total_cmp);
            out.push(SummaryRecord {
                set: set.clone(),
                setting: setting.clone(),
                assumed: assumed.clone(),
                parameter: name.to_string(),
                median: quantile_sorted(&v, 0.5),
                q025: quantile_sorted(&v, 0.025),
                q975: quantile_sorted(&v, 0.975),
                fits: ok.len(),
                failures,
            });
        }
    }
    Ok(out)
}

/// One row per fit: set, setting, assumed, replicate, four estimates, error.
pub fn write_raw_tsv<W: Write>(mut w: W, records: &[EstimateRecord]) -> Result<()> {
    writeln!(w, "set\tsetting\tassumed\treplicate\tp\tmu1\tmu2\tsigma\terror")?;
    for r in records {
        let assumed = r.assumed.as_deref().unwrap_or("true");
        match &r.estimates {
            Ok(e) => writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t",
                r.set, r.setting, assumed, r.replicate, e[0], e[1], e[2], e[3]
            )?,
            Err(msg) => writeln!(
                w,
                "{}\t{}\t{}\t{}\tNA\tNA\tNA\tNA\t{}",
                r.set,
                r.setting,
                assumed,
                r.replicate,
                msg.replace(['\t', '\n'], " ")
            )?,
        }
    }
    Ok(())
}

pub fn write_summary_tsv<W: Write>(mut w: W, summaries: &[SummaryRecord]) -> Result<()> {
    writeln!(
        w,
        "set\tsetting\tassumed\tparameter\tmedian\tq2.5\tq97.5\tfits\tfailures"
    )?;
    for s in summaries {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            s.set,
            s.setting,
            s.assumed.as_deref().unwrap_or("true"),
            s.parameter,
            s.median,
            s.q025,
            s.q975,
            s.fits,
            s.failures
        )?;
    }
    Ok(())
}
