//! Maximum-likelihood estimation by alternating randomized grid search and
//! Nelder–Mead restarts, with Wald-type confidence intervals on the
//! transformed scale, BIC and model selection.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{numeric_hessian, Dataset, Objective};
use crate::param_space::{
    backtransform, canonicalize, natural_values, parameter_names, transform, TransformedParameters, INTERIOR_CLAMP,
};
use crate::pool_model::{Family, ModelSpec, ParameterSet};
use crate::rng;

/// Two-sided 95% standard-normal quantile.
pub const Z_95: f64 = 1.96;

const GRID_STREAM: u64 = 1;
const START_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub loops: usize,
    pub grid_draws: usize,
    /// Fraction of the best grid draws that define the next search region.
    pub top_fraction: f64,
    pub restarts: usize,
    pub simplex_tolerance: f64,
    pub max_iterations: usize,
    pub seed: u64,
    /// Gene subsets fitted first, in order; their estimates seed the full fit.
    pub subgroups: Option<Vec<Vec<usize>>>,
    pub top_combinations: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            loops: 10,
            grid_draws: 1000,
            top_fraction: 0.05,
            restarts: 5,
            simplex_tolerance: 1e-8,
            max_iterations: 2000,
            seed: 1,
            subgroups: None,
            top_combinations: 6,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("loops", self.loops),
            ("grid draws", self.grid_draws),
            ("restarts", self.restarts),
            ("max iterations", self.max_iterations),
            ("top combinations", self.top_combinations),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if !(self.top_fraction > 0.0 && self.top_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "top fraction must lie in (0, 1], got {}",
                self.top_fraction
            )));
        }
        if !(self.simplex_tolerance > 0.0) {
            return Err(Error::Config("simplex tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Axis-aligned box on the transformed scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Region {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::Config("region bounds must satisfy lower <= upper".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.upper.iter().zip(&self.lower).map(|(u, l)| u - l).collect()
    }

    /// The box grown by `factor` times its width on each side.
    pub fn widened(&self, factor: f64) -> Self {
        let (lower, upper) = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (l - factor * (u - l), u + factor * (u - l)))
            .unzip();
        Self { lower, upper }
    }

    pub fn contains(&self, w: &[f64]) -> bool {
        w.len() == self.dim()
            && w.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (l, u))| *l <= *x && *x <= *u)
    }

    /// Clips this box to `other`; coordinates that fall outside collapse
    /// onto the nearest face.
    pub fn intersect(&self, other: &Region) -> Self {
        let mut lower = Vec::with_capacity(self.dim());
        let mut upper = Vec::with_capacity(self.dim());
        for i in 0..self.dim() {
            let l = self.lower[i].clamp(other.lower[i], other.upper[i]);
            let u = self.upper[i].clamp(other.lower[i], other.upper[i]);
            lower.push(l);
            upper.push(u.max(l));
        }
        Self { lower, upper }
    }

    /// Bounding box of `points`, widened by `pad` times its width on each
    /// side and to at least `min_width`.
    pub fn around(points: &[&[f64]], pad: f64, min_width: f64) -> Self {
        let d = points[0].len();
        let mut lower = vec![f64::INFINITY; d];
        let mut upper = vec![f64::NEG_INFINITY; d];
        for p in points {
            for i in 0..d {
                lower[i] = lower[i].min(p[i]);
                upper[i] = upper[i].max(p[i]);
            }
        }
        for i in 0..d {
            let width = (upper[i] - lower[i]).max(min_width);
            let center = 0.5 * (upper[i] + lower[i]);
            let half = 0.5 * width * (1.0 + 2.0 * pad);
            lower[i] = center - half;
            upper[i] = center + half;
        }
        Self { lower, upper }
    }
}

/// One evaluated point of the search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub w: Vec<f64>,
    pub value: f64,
}

fn by_value(a: &Candidate, b: &Candidate) -> std::cmp::Ordering {
    a.value.total_cmp(&b.value)
}

/// Evaluates `objective` at `draws` uniform points of `region`. Draw `j`
/// uses stream `(seed, j)`. Returns the finite candidates, best first.
pub fn grid_search<F>(objective: &F, region: &Region, draws: usize, seed: u64) -> Result<Vec<Candidate>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let mut out: Vec<Candidate> = (0..draws)
        .into_par_iter()
        .map(|j| {
            let mut r = rng::stream(seed, &[j as u64]);
            let w: Vec<f64> = region
                .lower
                .iter()
                .zip(&region.upper)
                .map(|(&l, &u)| if u > l { r.random_range(l..u) } else { l })
                .collect();
            let value = objective(&w);
            Candidate { w, value }
        })
        .filter(|c| c.value.is_finite())
        .collect();
    if out.is_empty() {
        return Err(Error::AllInfinite { draws });
    }
    // stable: ties keep draw order
    out.sort_by(by_value);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Per-coordinate offsets of the initial simplex vertices.
    pub initial_step: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub point: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    /// False when the iteration limit was reached first.
    pub converged: bool,
}

/// Downhill simplex minimization with reflection 1, expansion 2,
/// contraction 0.5 and shrink 0.5. Stops when every vertex lies within
/// `tolerance` (max-norm) of the best one.
pub fn nelder_mead<F>(objective: &F, start: &[f64], config: &NelderMeadConfig) -> Result<NelderMeadResult>
where
    F: Fn(&[f64]) -> f64,
{
    const REFLECT: f64 = 1.0;
    const EXPAND: f64 = 2.0;
    const CONTRACT: f64 = 0.5;
    const SHRINK: f64 = 0.5;

    let d = start.len();
    let f0 = objective(start);
    if !f0.is_finite() {
        return Err(Error::Numerical("objective is not finite at the starting point".into()));
    }
    let mut evaluations = 1;
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    simplex.push((start.to_vec(), f0));
    for i in 0..d {
        let mut x = start.to_vec();
        let step = config.initial_step.get(i).copied().unwrap_or(0.1);
        x[i] += if step != 0.0 { step } else { 0.1 };
        let fx = objective(&x);
        evaluations += 1;
        simplex.push((x, fx));
    }

    let eval = |x: Vec<f64>, evaluations: &mut usize| {
        *evaluations += 1;
        let v = objective(&x);
        (x, if v.is_nan() { f64::INFINITY } else { v })
    };

    let mut iterations = 0;
    let mut converged = false;
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = &simplex[0].0;
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(best).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if diameter < config.tolerance {
            converged = true;
            break;
        }
        if iterations >= config.max_iterations {
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; d];
        for (x, _) in &simplex[..d] {
            for i in 0..d {
                centroid[i] += x[i] / d as f64;
            }
        }
        let worst = simplex[d].clone();
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&worst.0).map(|(c, w)| c + t * (c - w)).collect() };
        let reflected = eval(along(REFLECT), &mut evaluations);
        let f_best = simplex[0].1;
        let f_second = simplex[d - 1].1;

        if reflected.1 < f_best {
            let expanded = eval(along(REFLECT * EXPAND), &mut evaluations);
            simplex[d] = if expanded.1 < reflected.1 { expanded } else { reflected };
            continue;
        }
        if reflected.1 < f_second {
            simplex[d] = reflected;
            continue;
        }
        let contracted = if reflected.1 < worst.1 {
            let c = eval(along(REFLECT * CONTRACT), &mut evaluations);
            (c.1 <= reflected.1).then_some(c)
        } else {
            let c = eval(along(-CONTRACT), &mut evaluations);
            (c.1 < worst.1).then_some(c)
        };
        match contracted {
            Some(c) => simplex[d] = c,
            None => {
                let best = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = best.iter().zip(&vertex.0).map(|(b, v)| b + SHRINK * (v - b)).collect();
                    *vertex = eval(x, &mut evaluations);
                }
            }
        }
    }
    let (point, value) = simplex.swap_remove(0);
    Ok(NelderMeadResult {
        point,
        value,
        iterations,
        evaluations,
        converged,
    })
}

/// `2 * neg_loglik + dim * ln(k_obs)`.
pub fn bic(neg_loglik: f64, dim: usize, k_obs: usize) -> f64 {
    2.0 * neg_loglik + dim as f64 * (k_obs as f64).ln()
}

/// Marginal 95% interval of one natural-scale parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub name: String,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

/// `w_i -/+ 1.96 sqrt(d_i)` with `d_i` the diagonal of the inverse of
/// `hessian`.
pub fn wald_bounds(hessian: &[Vec<f64>], center: &[f64]) -> Result<Vec<(f64, f64)>> {
    let d = center.len();
    let h = DMatrix::from_fn(d, d, |i, j| hessian[i][j]);
    let sv = h.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition < 1e14) {
        return Err(Error::SingularHessian { condition });
    }
    let inv = h.try_inverse().ok_or(Error::SingularHessian { condition })?;
    (0..d)
        .map(|i| {
            let var = inv[(i, i)];
            if !(var > 0.0) {
                return Err(Error::SingularHessian { condition });
            }
            let half = Z_95 * var.sqrt();
            Ok((center[i] - half, center[i] + half))
        })
        .collect()
}

/// Transforms `params` with probabilities nudged off the simplex boundary.
pub fn transform_interior(params: &ParameterSet, spec: &ModelSpec) -> Result<TransformedParameters> {
    let mut p = params.clone();
    if spec.populations > 1 {
        for x in p.p.iter_mut() {
            *x = x.max(INTERIOR_CLAMP);
        }
        let total: f64 = p.p.iter().sum();
        for x in p.p.iter_mut() {
            *x /= total;
        }
    }
    transform(&p, spec)
}

/// Hessian-based marginal 95% intervals at `mle`, mapped to the natural scale.
///
/// Each natural parameter is monotone in its own transformed coordinate when
/// the others are held fixed, so the mapped interval always contains the
/// estimate.
pub fn confidence_intervals(data: &Dataset, spec: &ModelSpec, mle: &ParameterSet) -> Result<Vec<ConfidenceInterval>> {
    let objective = Objective::new(data, *spec);
    let w = transform_interior(mle, spec)?;
    let f = |x: &[f64]| objective.value(x);
    let hessian = numeric_hessian(&f, w.as_slice())?;
    let bounds = wald_bounds(&hessian, w.as_slice())?;
    let names = parameter_names(spec, data.gene_names());
    let estimates = natural_values(mle, spec);
    let mut out = Vec::with_capacity(bounds.len());
    for (i, (lo, hi)) in bounds.into_iter().enumerate() {
        let at = |value: f64| -> Result<f64> {
            let mut x = w.as_slice().to_vec();
            x[i] = value;
            let p = backtransform(&TransformedParameters::new(x)?, spec)?;
            Ok(natural_values(&p, spec)[i])
        };
        let (a, b) = (at(lo)?, at(hi)?);
        out.push(ConfidenceInterval {
            name: names[i].clone(),
            estimate: estimates[i],
            lower: a.min(b),
            upper: a.max(b),
        });
    }
    Ok(out)
}

/// A ranked parameter combination from the search, on the natural scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopCombination {
    pub values: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub loops_run: usize,
    pub evaluations: usize,
    pub failed_evaluations: usize,
    pub floored_observations: usize,
    pub nelder_mead_runs: usize,
    pub nelder_mead_unconverged: usize,
    /// Why confidence intervals are missing, if they are.
    pub ci_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub spec: ModelSpec,
    pub parameter_names: Vec<String>,
    pub mle: ParameterSet,
    pub neg_loglik: f64,
    pub bic: f64,
    pub dim: usize,
    pub observations: usize,
    pub ci: Option<Vec<ConfidenceInterval>>,
    pub top_combinations: Vec<TopCombination>,
    pub diagnostics: FitDiagnostics,
}

impl FitResult {
    pub fn estimates(&self) -> Vec<f64> {
        natural_values(&self.mle, &self.spec)
    }

    /// Constraint violations of the estimate (empty when canonical).
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mu = &self.mle.mu;
        for h in 1..mu.len() {
            if mu[h - 1][0] < mu[h][0] {
                out.push(format!("mu_{} < mu_{} on the first gene", h, h + 1));
            }
        }
        out
    }
}

/// Heuristic search box derived from the data range.
pub fn initial_region(data: &Dataset, spec: &ModelSpec) -> Region {
    let mean_pool = data.pool_sizes().mean();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for _ in 1..spec.populations {
        lower.push(-3.0);
        upper.push(3.0);
    }
    let ranges: Vec<(f64, f64)> = (0..data.genes())
        .map(|g| {
            let col = data.gene_column(g);
            let min = col.iter().copied().filter(|v| *v > 0.0).fold(f64::INFINITY, f64::min);
            let max = col.iter().copied().fold(0.0, f64::max);
            let min = if min.is_finite() { min } else { 1e-4 };
            (min, max.max(min))
        })
        .collect();
    for _ in 0..spec.ln_populations() {
        for &(min, max) in &ranges {
            lower.push((min / mean_pool).ln() - 2.0);
            upper.push(max.ln() + 1.0);
        }
    }
    for _ in 0..spec.sigma_count() {
        lower.push(0.01f64.ln());
        upper.push(2.0f64.ln());
    }
    for &(min, max) in ranges.iter().take(spec.lambda_count(data.genes())) {
        lower.push(-max.ln());
        upper.push(-(min / mean_pool).ln() + 2.0);
    }
    for i in 0..lower.len() {
        if lower[i] > upper[i] {
            std::mem::swap(&mut lower[i], &mut upper[i]);
        }
    }
    Region { lower, upper }
}

struct SearchOutcome {
    pool: Vec<Candidate>,
    loops: usize,
    nm_runs: usize,
    nm_unconverged: usize,
}

fn search<F>(objective: &F, initial: Region, seeds: Vec<Vec<f64>>, config: &OptimizerConfig) -> Result<SearchOutcome>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let outer = initial.widened(1.0);
    let mut region = initial.clone();
    let mut pool: Vec<Candidate> = seeds
        .into_iter()
        .map(|w| {
            let value = objective(&w);
            Candidate { w, value }
        })
        .filter(|c| c.value.is_finite())
        .collect();
    let mut nm_runs = 0;
    let mut nm_unconverged = 0;
    let keep = ((config.top_fraction * config.grid_draws as f64).ceil() as usize).max(2);

    for l in 0..config.loops {
        let grid_seed = rng::derive_seed(config.seed, &[GRID_STREAM, l as u64]);
        match grid_search(objective, &region, config.grid_draws, grid_seed) {
            Ok(grid) => pool.extend(grid),
            Err(Error::AllInfinite { .. }) if !pool.is_empty() => {}
            Err(e) => return Err(e),
        }
        // keep a share of the draws on the full region so a shrunken region
        // cannot trap the search in the first basin it found
        if l > 0 {
            let draws = (config.grid_draws / 4).max(1);
            let seed = rng::derive_seed(config.seed, &[GRID_STREAM, l as u64, 1]);
            if let Ok(grid) = grid_search(objective, &initial, draws, seed) {
                pool.extend(grid);
            }
        }
        pool.sort_by(by_value);
        pool.truncate(keep.max(config.top_combinations) * 4);
        let top = &pool[..keep.min(pool.len())];

        // first restart always polishes the incumbent
        let starts: Vec<Vec<f64>> = (0..config.restarts)
            .map(|r| {
                if r == 0 {
                    top[0].w.clone()
                } else {
                    let mut g = rng::stream(config.seed, &[START_STREAM, l as u64, r as u64]);
                    top[g.random_range(0..top.len())].w.clone()
                }
            })
            .collect();
        let step: Vec<f64> = region.widths().iter().map(|w| (0.25 * w).max(1e-3)).collect();
        let nm_config = NelderMeadConfig {
            tolerance: config.simplex_tolerance,
            max_iterations: config.max_iterations,
            initial_step: step,
        };
        let results: Vec<Result<NelderMeadResult>> = starts
            .par_iter()
            .map(|s| nelder_mead(objective, s, &nm_config))
            .collect();
        for r in results.into_iter().flatten() {
            nm_runs += 1;
            if !r.converged {
                nm_unconverged += 1;
            }
            if r.value.is_finite() {
                pool.push(Candidate {
                    w: r.point,
                    value: r.value,
                });
            }
        }
        pool.sort_by(by_value);
        let top: Vec<&[f64]> = pool[..keep.min(pool.len())].iter().map(|c| c.w.as_slice()).collect();
        region = Region::around(&top, 0.25, 0.05).intersect(&outer);
    }
    Ok(SearchOutcome {
        pool,
        loops: config.loops,
        nm_runs,
        nm_unconverged,
    })
}

/// Natural-scale starting point for the full fit built from subgroup fits.
fn subgroup_seed(
    data: &Dataset,
    spec: &ModelSpec,
    region: &Region,
    config: &OptimizerConfig,
    subgroups: &[Vec<usize>],
) -> Result<Option<Vec<f64>>> {
    let mut base = backtransform(
        &TransformedParameters::new(
            region
                .lower
                .iter()
                .zip(&region.upper)
                .map(|(l, u)| 0.5 * (l + u))
                .collect(),
        )?,
        spec,
    )?;
    let mut inner = config.clone();
    inner.subgroups = None;
    let mut any = false;
    for subset in subgroups {
        if subset.is_empty() {
            continue;
        }
        let sub = data.select_genes(subset)?;
        let Ok(result) = fit(&sub, spec, &inner) else {
            continue;
        };
        any = true;
        base.p = result.mle.p.clone();
        base.sigma = result.mle.sigma.clone();
        for (j, &g) in subset.iter().enumerate() {
            for h in 0..spec.ln_populations() {
                base.mu[h][g] = result.mle.mu[h][j];
            }
            if spec.family == Family::ExpLn {
                base.lambda[g] = result.mle.lambda[j];
            }
        }
    }
    if !any {
        return Ok(None);
    }
    Ok(Some(transform_interior(&base, spec)?.into_vec()))
}

/// Fits `spec` to `data`.
pub fn fit(data: &Dataset, spec: &ModelSpec, config: &OptimizerConfig) -> Result<FitResult> {
    config.validate()?;
    data.validate_for(spec)?;
    let objective = Objective::new(data, *spec);
    let region = initial_region(data, spec);
    let outer = region.widened(1.0);
    let f = |w: &[f64]| {
        if outer.contains(w) {
            objective.value(w)
        } else {
            f64::INFINITY
        }
    };

    let mut seeds = Vec::new();
    if let Some(subgroups) = &config.subgroups {
        if let Some(seed) = subgroup_seed(data, spec, &region, config, subgroups)? {
            seeds.push(seed);
        }
    }

    let outcome = search(&f, region, seeds, config)?;
    let best = outcome
        .pool
        .first()
        .ok_or_else(|| Error::Numerical("search produced no finite candidate".into()))?;

    let raw = backtransform(&TransformedParameters::new(best.w.clone())?, spec)?;
    let mle = canonicalize(&raw, spec);
    let w_mle = transform_interior(&mle, spec)?;
    let neg_loglik = f(w_mle.as_slice()).min(best.value);

    let canonical = |c: &Candidate| -> Result<Vec<f64>> {
        let p = backtransform(&TransformedParameters::new(c.w.clone())?, spec)?;
        Ok(natural_values(&canonicalize(&p, spec), spec))
    };
    let mut top_combinations = vec![TopCombination {
        values: natural_values(&mle, spec),
        objective: neg_loglik,
    }];
    for c in outcome.pool.iter().skip(1) {
        if top_combinations.len() >= config.top_combinations {
            break;
        }
        top_combinations.push(TopCombination {
            values: canonical(c)?,
            objective: c.value.max(neg_loglik),
        });
    }

    let (ci, ci_error) = match confidence_intervals(data, spec, &mle) {
        Ok(ci) => (Some(ci), None),
        Err(e) => (None, Some(e.to_string())),
    };

    let dim = spec.dim(data.genes());
    let observations = data.observations();
    Ok(FitResult {
        spec: *spec,
        parameter_names: parameter_names(spec, data.gene_names()),
        mle,
        neg_loglik,
        bic: bic(neg_loglik, dim, observations),
        dim,
        observations,
        ci,
        top_combinations,
        diagnostics: FitDiagnostics {
            loops_run: outcome.loops,
            evaluations: objective.evaluations(),
            failed_evaluations: objective.failures(),
            floored_observations: objective.floored(),
            nelder_mead_runs: outcome.nm_runs,
            nelder_mead_unconverged: outcome.nm_unconverged,
            ci_error,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelChoice {
    pub spec: ModelSpec,
    pub result: std::result::Result<FitResult, String>,
}

/// Fits every candidate and ranks the successful fits by ascending BIC
/// (ties keep candidate order); failures follow.
pub fn select_model(data: &Dataset, candidates: &[ModelSpec], config: &OptimizerConfig) -> Result<Vec<ModelChoice>> {
    if candidates.is_empty() {
        return Err(Error::Config("model selection needs at least one candidate".into()));
    }
    let mut fitted: Vec<ModelChoice> = candidates
        .iter()
        .map(|spec| ModelChoice {
            spec: *spec,
            result: fit(data, spec, config).map_err(|e| e.to_string()),
        })
        .collect();
    fitted.sort_by(|a, b| match (&a.result, &b.result) {
        (Ok(x), Ok(y)) => x.bic.total_cmp(&y.bic),
        (Ok(_), Err(_)) => std::cmp::Ordering::Less,
        (Err(_), Ok(_)) => std::cmp::Ordering::Greater,
        (Err(_), Err(_)) => std::cmp::Ordering::Equal,
    });
    Ok(fitted)
}
