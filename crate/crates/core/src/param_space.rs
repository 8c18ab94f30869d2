//! Bijection between constrained model parameters and an unconstrained real
//! vector, and the canonical population order used for identifiability.
//!
//! Layout of the unconstrained vector:
//! `[w_1..w_{T-1}, mu_1^(1..m), .., mu_{T_LN}^(1..m), log sigma.., log lambda^(1..m)]`
//! where `w_h = logit(P_h / P_{h+1})` and `P_h = p_1 + .. + p_h`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{expit, logit};
use crate::pool_model::{Family, ModelSpec, ParameterSet};

/// Probabilities closer than this to 0 or 1 are clamped before the logit.
pub const INTERIOR_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformedParameters(Vec<f64>);

impl TransformedParameters {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if let Some(i) = w.iter().position(|x| !x.is_finite()) {
            return Err(Error::Domain(format!(
                "transformed parameter {i} is not finite ({})",
                w[i]
            )));
        }
        Ok(Self(w))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Number of genes implied by an unconstrained vector of length `len`.
pub fn genes_for_length(spec: &ModelSpec, len: usize) -> Result<usize> {
    let fixed = (spec.populations - 1) + spec.sigma_count();
    let per_gene = spec.ln_populations() + usize::from(spec.family == Family::ExpLn);
    if len <= fixed || (len - fixed) % per_gene != 0 {
        return Err(Error::Domain(format!(
            "vector of length {len} does not match the {} model",
            spec
        )));
    }
    Ok((len - fixed) / per_gene)
}

pub fn transform(params: &ParameterSet, spec: &ModelSpec) -> Result<TransformedParameters> {
    params.validate(spec)?;
    if let Some(h) = params.p.iter().position(|&x| x == 0.0 || x == 1.0) {
        if spec.populations > 1 {
            return Err(Error::Boundary(format!(
                "p_{} = {} lies on the simplex boundary",
                h + 1,
                params.p[h]
            )));
        }
    }
    let t = spec.populations;
    let mut w = Vec::with_capacity(spec.dim(params.genes()));
    let mut cumulative = Vec::with_capacity(t);
    let mut acc = 0.0;
    for &ph in &params.p {
        acc += ph;
        cumulative.push(acc);
    }
    cumulative[t - 1] = 1.0;
    for h in 0..t.saturating_sub(1) {
        let ratio = (cumulative[h] / cumulative[h + 1]).clamp(INTERIOR_CLAMP, 1.0 - INTERIOR_CLAMP);
        w.push(logit(ratio));
    }
    for row in &params.mu {
        w.extend_from_slice(row);
    }
    w.extend(params.sigma.iter().map(|s| s.ln()));
    w.extend(params.lambda.iter().map(|l| l.ln()));
    TransformedParameters::new(w)
}

/// Inverse of [`transform`]. The result is not canonically ordered.
pub fn backtransform(w: &TransformedParameters, spec: &ModelSpec) -> Result<ParameterSet> {
    let genes = genes_for_length(spec, w.len())?;
    let w = w.as_slice();
    let t = spec.populations;
    let mut cumulative = vec![1.0; t];
    for h in (0..t - 1).rev() {
        cumulative[h] = expit(w[h]) * cumulative[h + 1];
    }
    let mut p = Vec::with_capacity(t);
    for h in 0..t {
        p.push(if h == 0 {
            cumulative[0]
        } else {
            cumulative[h] - cumulative[h - 1]
        });
    }
    let mut idx = t - 1;
    let mut mu = Vec::with_capacity(spec.ln_populations());
    for _ in 0..spec.ln_populations() {
        mu.push(w[idx..idx + genes].to_vec());
        idx += genes;
    }
    let sigma: Vec<f64> = w[idx..idx + spec.sigma_count()].iter().map(|x| x.exp()).collect();
    idx += spec.sigma_count();
    let lambda: Vec<f64> = w[idx..].iter().map(|x| x.exp()).collect();
    Ok(ParameterSet { p, mu, sigma, lambda })
}

/// Sorts lognormal populations by descending first-gene log-mean (ties:
/// descending sigma, then descending p). The exponential population stays last.
pub fn canonicalize(params: &ParameterSet, spec: &ModelSpec) -> ParameterSet {
    let ln_pops = spec.ln_populations();
    let mut order: Vec<usize> = (0..ln_pops).collect();
    order.sort_by(|&a, &b| {
        params.mu[b][0]
            .total_cmp(&params.mu[a][0])
            .then_with(|| params.sigma_of(spec, b).total_cmp(&params.sigma_of(spec, a)))
            .then_with(|| params.p[b].total_cmp(&params.p[a]))
            .then(Ordering::Equal)
    });
    let mut out = params.clone();
    for (slot, &h) in order.iter().enumerate() {
        out.p[slot] = params.p[h];
        out.mu[slot] = params.mu[h].clone();
        if spec.family == Family::RlnLn {
            out.sigma[slot] = params.sigma[h];
        }
    }
    out
}

pub fn is_canonical(params: &ParameterSet, spec: &ModelSpec) -> bool {
    canonicalize(params, spec) == *params
}

/// Natural-scale parameter values in the same order as the unconstrained
/// vector: `p_1..p_{T-1}`, log-means, sigmas, rates.
pub fn natural_values(params: &ParameterSet, spec: &ModelSpec) -> Vec<f64> {
    let mut v: Vec<f64> = params.p[..spec.populations - 1].to_vec();
    for row in &params.mu {
        v.extend_from_slice(row);
    }
    v.extend_from_slice(&params.sigma);
    v.extend_from_slice(&params.lambda);
    v
}

/// Names matching [`natural_values`].
pub fn parameter_names(spec: &ModelSpec, gene_names: &[String]) -> Vec<String> {
    let mut names: Vec<String> = (1..spec.populations).map(|h| format!("p_{h}")).collect();
    for h in 1..=spec.ln_populations() {
        for g in gene_names {
            names.push(format!("mu_{h}_gene_{g}"));
        }
    }
    match spec.family {
        Family::RlnLn => names.extend((1..=spec.populations).map(|h| format!("sigma_{h}"))),
        _ if spec.sigma_count() == 1 => names.push("sigma".into()),
        _ => {}
    }
    for g in gene_names.iter().take(spec.lambda_count(gene_names.len())) {
        names.push(format!("lambda_gene_{g}"));
    }
    names
}
