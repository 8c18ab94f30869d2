//! Interpretation of fitted models: overlap of two lognormal populations,
//! a resampling test for population equality, and the posterior over the
//! composition of individual pools.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::LogNormalParams;
use crate::error::{Error, Result};
use crate::likelihood::Dataset;
use crate::numeric::{compensated_sum, log_sum_exp, lognormal_mle, quantile};
use crate::pool_model::{
    enumerate_compositions, ln_composition_density, Composition, DensityOptions, ModelSpec, ParameterSet,
};
use crate::quadrature::{integrate_with_breakpoints, QuadratureConfig};
use crate::rng;

/// Probability mass that the composition interval must cover.
pub const INTERVAL_MASS: f64 = 0.95;

const OVL_TAIL: f64 = 1e-7;

/// Points where the two log densities (as functions of `ln x`) cross.
pub fn lognormal_crossings(f: &LogNormalParams, g: &LogNormalParams) -> Vec<f64> {
    let (s1, s2) = (f.sigma * f.sigma, g.sigma * g.sigma);
    let a = 0.5 / s2 - 0.5 / s1;
    let b = f.mu / s1 - g.mu / s2;
    let c = 0.5 * g.mu * g.mu / s2 - 0.5 * f.mu * f.mu / s1 + (g.sigma / f.sigma).ln();
    let mut roots = Vec::new();
    if a.abs() < 1e-14 * (0.5 / s1 + 0.5 / s2) {
        if b != 0.0 {
            roots.push(-c / b);
        }
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let q = -0.5 * (b + b.signum() * disc.sqrt());
            if q != 0.0 {
                roots.push(q / a);
                roots.push(c / q);
            } else {
                roots.push(-b / (2.0 * a));
            }
        }
    }
    roots.retain(|z| z.is_finite());
    roots.sort_by(f64::total_cmp);
    roots
}

/// Overlap coefficient: the area under the pointwise minimum of the two
/// densities.
pub fn ovl(f: &LogNormalParams, g: &LogNormalParams) -> Result<f64> {
    f.validate()?;
    g.validate()?;
    let upper = f.upper_quantile(OVL_TAIL).max(g.upper_quantile(OVL_TAIL));
    let mut points = vec![0.0, upper];
    for z in lognormal_crossings(f, g) {
        points.push(z.exp());
    }
    for d in [f, g] {
        for k in [-8.0, -4.0, -2.0, 0.0, 2.0, 4.0] {
            points.push((d.mu + k * d.sigma).exp());
        }
    }
    points.retain(|x| (0.0..=upper).contains(x));
    points.sort_by(f64::total_cmp);
    points.dedup();
    let integrand = |x: f64| f.ln_pdf_unchecked(x).min(g.ln_pdf_unchecked(x)).exp();
    let cfg = QuadratureConfig::with_tolerance(1e-9, 1e-12);
    let value = integrate_with_breakpoints(integrand, &points, &cfg)?.value;
    Ok(value.clamp(0.0, 1.0))
}

/// Expected number of cells of a population among all measured cells.
pub fn effective_cell_count(samples: usize, pool_size: usize, p_hat: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&p_hat) {
        return Err(Error::Domain(format!("fraction must lie in [0, 1], got {p_hat}")));
    }
    Ok((samples as f64 * pool_size as f64 * p_hat).round() as usize)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapTestResult {
    pub ovl_original: f64,
    pub null_quantile_05: f64,
    pub null_samples: Vec<f64>,
    pub reject: bool,
    pub cell_counts: (usize, usize),
}

/// Tests whether two lognormal estimates describe the same population.
///
/// Under the null both groups share the averaged parameters. Each replicate
/// draws `count_a` and `count_b` cells, refits both lognormals in closed
/// form and records their overlap. The null is rejected when the observed
/// overlap is at or below the empirical 5% quantile.
pub fn overlap_test(
    a: &LogNormalParams,
    b: &LogNormalParams,
    count_a: usize,
    count_b: usize,
    replicates: usize,
    seed: u64,
) -> Result<OverlapTestResult> {
    if count_a < 2 || count_b < 2 {
        return Err(Error::Domain(format!(
            "each group needs at least 2 cells, got {count_a} and {count_b}"
        )));
    }
    if replicates < 100 {
        return Err(Error::Config(format!(
            "at least 100 replicates are needed, got {replicates}"
        )));
    }
    let ovl_original = ovl(a, b)?;
    let null = LogNormalParams::new(0.5 * (a.mu + b.mu), 0.5 * (a.sigma + b.sigma))?;
    let normal = rand_distr::Normal::new(null.mu, null.sigma).map_err(|e| Error::InvalidParameters(e.to_string()))?;

    let null_samples = (0..replicates)
        .into_par_iter()
        .map(|j| {
            use rand_distr::Distribution;
            let mut r = rng::stream(seed, &[j as u64]);
            let mut refit = |count: usize| -> Result<LogNormalParams> {
                let xs: Vec<f64> = (0..count).map(|_| normal.sample(&mut r).exp()).collect();
                let (mu, sd) = lognormal_mle(&xs);
                LogNormalParams::new(mu, sd)
                    .map_err(|_| Error::Numerical(format!("degenerate resample in replicate {j}")))
            };
            let fa = refit(count_a)?;
            let fb = refit(count_b)?;
            ovl(&fa, &fb)
        })
        .collect::<Result<Vec<f64>>>()?;
    let null_quantile_05 = quantile(&null_samples, 0.05);
    Ok(OverlapTestResult {
        ovl_original,
        null_quantile_05,
        reject: ovl_original <= null_quantile_05,
        null_samples,
        cell_counts: (count_a, count_b),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionPosterior {
    pub support: Vec<Composition>,
    pub pmf: Vec<f64>,
    pub map_estimate: Composition,
    pub mean_count_pop1: f64,
    /// Inclusive range of first-population counts holding at least 95% of the mass.
    pub interval: (usize, usize),
    /// Log of the pool density at the observation.
    pub ln_normalizer: f64,
}

impl CompositionPosterior {
    /// Posterior of the number of first-population cells, indexed 0..=n.
    pub fn marginal_pop1(&self) -> Vec<f64> {
        let n = self.map_estimate.pool_size();
        let mut out = vec![0.0; n + 1];
        for (c, p) in self.support.iter().zip(&self.pmf) {
            out[c.0[0]] += p;
        }
        out
    }
}

/// Grows an interval outward from `start`, adding whichever neighbour has
/// more mass (left on ties), until it holds `mass`.
pub fn interval_from_mode(pmf: &[f64], start: usize, mass: f64) -> (usize, usize) {
    let (mut lo, mut hi) = (start, start);
    let mut held = pmf[start];
    while held < mass && (lo > 0 || hi + 1 < pmf.len()) {
        let left = if lo > 0 { pmf[lo - 1] } else { f64::NEG_INFINITY };
        let right = if hi + 1 < pmf.len() {
            pmf[hi + 1]
        } else {
            f64::NEG_INFINITY
        };
        if left >= right {
            lo -= 1;
            held += left;
        } else {
            hi += 1;
            held += right;
        }
    }
    (lo, hi)
}

pub fn composition_posterior(
    y: f64,
    n: usize,
    spec: &ModelSpec,
    params: &ParameterSet,
    gene: usize,
) -> Result<CompositionPosterior> {
    composition_posterior_with(y, n, spec, params, gene, &DensityOptions::default())
}

/// Posterior over the compositions of an `n`-cell pool that measured `y`.
pub fn composition_posterior_with(
    y: f64,
    n: usize,
    spec: &ModelSpec,
    params: &ParameterSet,
    gene: usize,
    options: &DensityOptions,
) -> Result<CompositionPosterior> {
    if n == 0 {
        return Err(Error::Domain("pool size must be at least 1".into()));
    }
    let support = enumerate_compositions(n, spec.populations, options.composition_cap)?;
    let mut ln_joint = Vec::with_capacity(support.len());
    for c in &support {
        let lw = c.ln_multinomial_weight(&params.p);
        ln_joint.push(if lw == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            lw + ln_composition_density(y, c, spec, params, gene, options)?
        });
    }
    let ln_normalizer = log_sum_exp(&ln_joint);
    if !ln_normalizer.is_finite() {
        return Err(Error::Numerical(format!(
            "pool density is numerically zero at y = {y}; the posterior is undefined"
        )));
    }
    let raw: Vec<f64> = ln_joint.iter().map(|l| (l - ln_normalizer).exp()).collect();
    let total = compensated_sum(raw.iter().copied());
    let pmf: Vec<f64> = raw.iter().map(|p| p / total).collect();

    let map_index = pmf
        .iter()
        .enumerate()
        .fold(0, |best, (i, p)| if *p > pmf[best] { i } else { best });
    let map_estimate = support[map_index].clone();
    let mean_count_pop1 = compensated_sum(support.iter().zip(&pmf).map(|(c, p)| c.0[0] as f64 * p));

    let mut marginal = vec![0.0; n + 1];
    for (c, p) in support.iter().zip(&pmf) {
        marginal[c.0[0]] += p;
    }
    let interval = interval_from_mode(&marginal, map_estimate.0[0], INTERVAL_MASS);

    Ok(CompositionPosterior {
        support,
        pmf,
        map_estimate,
        mean_count_pop1,
        interval,
        ln_normalizer,
    })
}

/// Number of correctly inferred first-population counts per estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HitCounts {
    pub rounded_mean: usize,
    pub map: usize,
    pub interval: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub posteriors: Vec<std::result::Result<CompositionPosterior, String>>,
    pub hits: Option<HitCounts>,
}

impl Prediction {
    pub fn failures(&self) -> usize {
        self.posteriors.iter().filter(|p| p.is_err()).count()
    }
}

/// Composition posterior of every sample of `gene`. When `truth` holds the
/// true first-population counts, hit counts are attached; samples whose
/// posterior failed count as misses.
pub fn predict_compositions(
    data: &Dataset,
    spec: &ModelSpec,
    params: &ParameterSet,
    gene: usize,
    truth: Option<&[usize]>,
) -> Result<Prediction> {
    params.validate(spec)?;
    if gene >= data.genes().max(1) {
        return Err(Error::Domain(format!("gene index {gene} out of range")));
    }
    if let Some(t) = truth {
        if t.len() != data.samples() {
            return Err(Error::Data(format!(
                "ground truth has {} entries for {} samples",
                t.len(),
                data.samples()
            )));
        }
    }
    let sizes = data.pool_sizes().as_slice();
    let posteriors: Vec<_> = (0..data.samples())
        .into_par_iter()
        .map(|i| {
            composition_posterior(data.values()[i][gene], sizes[i], spec, params, gene)
                .map_err(|e| format!("sample {}: {e}", i + 1))
        })
        .collect();
    let hits = truth.map(|t| {
        let mut h = HitCounts {
            rounded_mean: 0,
            map: 0,
            interval: 0,
            total: t.len(),
        };
        for (post, &true_count) in posteriors.iter().zip(t) {
            let Ok(post) = post else { continue };
            if post.mean_count_pop1.round() as usize == true_count {
                h.rounded_mean += 1;
            }
            if post.map_estimate.0[0] == true_count {
                h.map += 1;
            }
            if (post.interval.0..=post.interval.1).contains(&true_count) {
                h.interval += 1;
            }
        }
        h
    });
    Ok(Prediction { posteriors, hits })
}
