//! Log-likelihood of pooled observations and its finite-difference
//! derivatives on the transformed scale.

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::compensated_sum;
use crate::param_space::{backtransform, TransformedParameters};
use crate::pool_model::{DensityOptions, Family, ModelSpec, ParameterSet, PoolDensity, PoolSizeVector};

/// Per-observation floor for log densities inside the optimization objective
/// (the smallest normal double is about `exp(-708)`, subnormals reach `exp(-745)`).
pub const LOG_DENSITY_FLOOR: f64 = -745.0;

/// Default shift applied to zero measurements under lognormal families.
pub const ZERO_SHIFT: f64 = 1e-4;

// below this many observations the per-term work is too small to parallelize
const PARALLEL_THRESHOLD: usize = 4096;

/// Pooled measurements: `values[i][g]` is sample `i`, gene `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    values: Vec<Vec<f64>>,
    pool_sizes: PoolSizeVector,
    gene_names: Vec<String>,
}

impl Dataset {
    pub fn new(values: Vec<Vec<f64>>, pool_sizes: PoolSizeVector, gene_names: Option<Vec<String>>) -> Result<Self> {
        let genes = values.first().map(Vec::len).unwrap_or(0);
        if let Some(i) = values.iter().position(|r| r.len() != genes) {
            return Err(Error::Data(format!(
                "sample {} has {} values, expected {genes}",
                i + 1,
                values[i].len()
            )));
        }
        if pool_sizes.len() != values.len() {
            return Err(Error::Data(format!(
                "{} pool sizes given for {} samples",
                pool_sizes.len(),
                values.len()
            )));
        }
        if values.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Data("measurements must be finite and nonnegative".into()));
        }
        let gene_names = match gene_names {
            Some(names) if names.len() != genes => {
                return Err(Error::Data(format!(
                    "{} gene names given for {genes} genes",
                    names.len()
                )))
            }
            Some(names) => names,
            None => (1..=genes).map(|g| format!("gene.{g}")).collect(),
        };
        Ok(Self {
            values,
            pool_sizes,
            gene_names,
        })
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn pool_sizes(&self) -> &PoolSizeVector {
        &self.pool_sizes
    }

    pub fn gene_names(&self) -> &[String] {
        &self.gene_names
    }

    pub fn samples(&self) -> usize {
        self.values.len()
    }

    pub fn genes(&self) -> usize {
        self.gene_names.len()
    }

    pub fn observations(&self) -> usize {
        self.samples() * self.genes()
    }

    pub fn gene_column(&self, g: usize) -> Vec<f64> {
        self.values.iter().map(|r| r[g]).collect()
    }

    /// Same measurements with a different pool-size vector.
    pub fn with_pool_sizes(&self, pool_sizes: PoolSizeVector) -> Result<Self> {
        Self::new(self.values.clone(), pool_sizes, Some(self.gene_names.clone()))
    }

    /// Restriction to a subset of genes.
    pub fn select_genes(&self, genes: &[usize]) -> Result<Self> {
        if let Some(&g) = genes.iter().find(|&&g| g >= self.genes()) {
            return Err(Error::Data(format!("gene index {g} out of range")));
        }
        let values = self
            .values
            .iter()
            .map(|r| genes.iter().map(|&g| r[g]).collect())
            .collect();
        let names = genes.iter().map(|&g| self.gene_names[g].clone()).collect();
        Self::new(values, self.pool_sizes.clone(), Some(names))
    }

    /// Replaces exact zeros by `eps`.
    pub fn shift_zeros(&self, eps: f64) -> Self {
        let mut out = self.clone();
        for v in out.values.iter_mut().flatten() {
            if *v == 0.0 {
                *v = eps;
            }
        }
        out
    }

    pub fn concat(&self, other: &Dataset) -> Result<Self> {
        if self.gene_names != other.gene_names {
            return Err(Error::Data("datasets have different genes".into()));
        }
        let mut values = self.values.clone();
        values.extend(other.values.iter().cloned());
        let mut sizes = self.pool_sizes.as_slice().to_vec();
        sizes.extend_from_slice(other.pool_sizes.as_slice());
        Self::new(values, PoolSizeVector::new(sizes)?, Some(self.gene_names.clone()))
    }

    pub fn validate_for(&self, spec: &ModelSpec) -> Result<()> {
        if self.samples() == 0 || self.genes() == 0 {
            return Err(Error::Data("dataset is empty".into()));
        }
        if spec.family != Family::ExpLn && self.values.iter().flatten().any(|&v| v == 0.0) {
            return Err(Error::Data(format!(
                "zero measurements cannot be modeled by {}; add a small value such as {ZERO_SHIFT} \
                 to all zeros (or enable the automatic zero shift)",
                spec.family
            )));
        }
        Ok(())
    }
}

/// Log-likelihood with a count of observations whose log density was floored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LikelihoodValue {
    pub log_likelihood: f64,
    pub floored: usize,
}

fn observation_terms(
    data: &Dataset,
    spec: &ModelSpec,
    params: &ParameterSet,
    options: &DensityOptions,
) -> Result<Vec<f64>> {
    params.validate(spec)?;
    data.validate_for(spec)?;
    if params.genes() != data.genes() {
        return Err(Error::InvalidParameters(format!(
            "parameters describe {} genes, data has {}",
            params.genes(),
            data.genes()
        )));
    }
    let sizes = data.pool_sizes().as_slice();
    let distinct = data.pool_sizes().counts();
    let mut terms = vec![0.0; data.observations()];
    for g in 0..data.genes() {
        // size -> prepared density
        let densities = distinct
            .iter()
            .map(|&(n, _)| Ok((n, PoolDensity::new(n, spec, params, g, options)?)))
            .collect::<Result<Vec<_>>>()?;
        let lookup = |n: usize| {
            &densities
                .iter()
                .find(|(size, _)| *size == n)
                .expect("pool size prepared")
                .1
        };
        let eval = |i: usize| lookup(sizes[i]).ln_pdf(data.values[i][g]);
        let column: Vec<f64> = if data.samples() * data.genes() >= PARALLEL_THRESHOLD {
            (0..data.samples())
                .into_par_iter()
                .map(eval)
                .collect::<Result<Vec<_>>>()?
        } else {
            (0..data.samples()).map(eval).collect::<Result<Vec<_>>>()?
        };
        terms[g * data.samples()..(g + 1) * data.samples()].copy_from_slice(&column);
    }
    Ok(terms)
}

/// `sum_g sum_i log f_{n_i}(y_i^(g))`; may be `-inf`.
pub fn log_likelihood(data: &Dataset, spec: &ModelSpec, params: &ParameterSet) -> Result<f64> {
    log_likelihood_with(data, spec, params, &DensityOptions::default())
}

pub fn log_likelihood_with(
    data: &Dataset,
    spec: &ModelSpec,
    params: &ParameterSet,
    options: &DensityOptions,
) -> Result<f64> {
    let terms = observation_terms(data, spec, params, options)?;
    if terms.contains(&f64::NEG_INFINITY) {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(compensated_sum(terms))
}

/// Log-likelihood with each observation's log density floored at
/// [`LOG_DENSITY_FLOOR`].
pub fn floored_log_likelihood(
    data: &Dataset,
    spec: &ModelSpec,
    params: &ParameterSet,
    options: &DensityOptions,
) -> Result<LikelihoodValue> {
    let terms = observation_terms(data, spec, params, options)?;
    let mut floored = 0;
    let total = compensated_sum(terms.into_iter().map(|t| {
        if t < LOG_DENSITY_FLOOR || t.is_nan() {
            floored += 1;
            LOG_DENSITY_FLOOR
        } else {
            t
        }
    }));
    Ok(LikelihoodValue {
        log_likelihood: total,
        floored,
    })
}

/// The optimization objective: negative log-likelihood as a function of the
/// unconstrained parameter vector.
///
/// Points where evaluation fails yield `+inf` and are counted.
#[derive(Debug)]
pub struct Objective<'a> {
    data: &'a Dataset,
    spec: ModelSpec,
    options: DensityOptions,
    failures: AtomicUsize,
    floored: AtomicUsize,
    evaluations: AtomicUsize,
}

impl<'a> Objective<'a> {
    pub fn new(data: &'a Dataset, spec: ModelSpec) -> Self {
        Self::with_options(data, spec, DensityOptions::default())
    }

    pub fn with_options(data: &'a Dataset, spec: ModelSpec, options: DensityOptions) -> Self {
        Self {
            data,
            spec,
            options,
            failures: AtomicUsize::new(0),
            floored: AtomicUsize::new(0),
            evaluations: AtomicUsize::new(0),
        }
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim(self.data.genes())
    }

    pub fn value(&self, w: &[f64]) -> f64 {
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        let result = TransformedParameters::new(w.to_vec())
            .and_then(|tp| backtransform(&tp, &self.spec))
            .and_then(|params| floored_log_likelihood(self.data, &self.spec, &params, &self.options));
        match result {
            Ok(v) if v.log_likelihood.is_finite() => {
                if v.floored > 0 {
                    self.floored.fetch_add(v.floored, Ordering::Relaxed);
                }
                -v.log_likelihood
            }
            _ => {
                self.failures.fetch_add(1, Ordering::Relaxed);
                f64::INFINITY
            }
        }
    }

    pub fn failures(&self) -> usize {
        self.failures.load(Ordering::Relaxed)
    }

    pub fn floored(&self) -> usize {
        self.floored.load(Ordering::Relaxed)
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations.load(Ordering::Relaxed)
    }
}

/// `-log_likelihood(backtransform(w))`, `+inf` on numerical failure.
pub fn neg_loglik_transformed(w: &TransformedParameters, data: &Dataset, spec: &ModelSpec) -> f64 {
    Objective::new(data, *spec).value(w.as_slice())
}

/// Step used for coordinate `i`: `1e-4 * max(1, |w_i|)`.
pub fn fd_step(wi: f64) -> f64 {
    1e-4 * wi.abs().max(1.0)
}

fn finite_or_err(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numerical(format!(
            "objective is not finite in the neighborhood used for the {what}"
        )))
    }
}

/// Plain central-difference gradient with step `scale * max(1, |w_i|)`.
pub fn central_gradient<F: Fn(&[f64]) -> f64>(f: &F, w: &[f64], scale: f64) -> Result<Vec<f64>> {
    let mut x = w.to_vec();
    let mut g = Vec::with_capacity(w.len());
    for i in 0..w.len() {
        let h = scale * w[i].abs().max(1.0);
        x[i] = w[i] + h;
        let fp = finite_or_err(f(&x), "gradient")?;
        x[i] = w[i] - h;
        let fm = finite_or_err(f(&x), "gradient")?;
        x[i] = w[i];
        g.push((fp - fm) / (2.0 * h));
    }
    Ok(g)
}

/// Central-difference gradient with one Richardson step-halving.
pub fn numeric_gradient<F: Fn(&[f64]) -> f64>(f: &F, w: &[f64]) -> Result<Vec<f64>> {
    let coarse = central_gradient(f, w, 1e-4)?;
    let fine = central_gradient(f, w, 0.5e-4)?;
    Ok(coarse.iter().zip(&fine).map(|(c, f)| (4.0 * f - c) / 3.0).collect())
}

fn central_hessian<F: Fn(&[f64]) -> f64>(f: &F, w: &[f64], scale: f64) -> Result<Vec<Vec<f64>>> {
    let d = w.len();
    let f0 = finite_or_err(f(w), "Hessian")?;
    let h: Vec<f64> = w.iter().map(|x| scale * x.abs().max(1.0)).collect();
    let mut x = w.to_vec();
    let mut out = vec![vec![0.0; d]; d];
    for i in 0..d {
        x[i] = w[i] + h[i];
        let fp = finite_or_err(f(&x), "Hessian")?;
        x[i] = w[i] - h[i];
        let fm = finite_or_err(f(&x), "Hessian")?;
        x[i] = w[i];
        out[i][i] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let mut corner = |si: f64, sj: f64| {
                x[i] = w[i] + si * h[i];
                x[j] = w[j] + sj * h[j];
                let v = f(&x);
                x[i] = w[i];
                x[j] = w[j];
                finite_or_err(v, "Hessian")
            };
            let v = (corner(1.0, 1.0)? - corner(1.0, -1.0)? - corner(-1.0, 1.0)? + corner(-1.0, -1.0)?)
                / (4.0 * h[i] * h[j]);
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    Ok(out)
}

/// Central-difference Hessian with Richardson step-halving, symmetrized as
/// `(H + H^T) / 2`.
pub fn numeric_hessian<F: Fn(&[f64]) -> f64>(f: &F, w: &[f64]) -> Result<Vec<Vec<f64>>> {
    let coarse = central_hessian(f, w, 1e-4)?;
    let fine = central_hessian(f, w, 0.5e-4)?;
    let d = w.len();
    let mut h = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            h[i][j] = (4.0 * fine[i][j] - coarse[i][j]) / 3.0;
        }
    }
    for i in 0..d {
        for j in 0..i {
            let s = 0.5 * (h[i][j] + h[j][i]);
            h[i][j] = s;
            h[j][i] = s;
        }
    }
    Ok(h)
}
