//! Mixture families, pool compositions and the density of pooled measurements.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp, LogNormal};
use serde::{Deserialize, Serialize};

use crate::distributions::{
    erlang_lognormal_conv_pdf_with, fenton_approx_counts, ErlangParams, ExponentialParams, LogNormalParams,
};
use crate::error::{Error, Result};
use crate::likelihood::Dataset;
use crate::numeric::ln_factorial;
use crate::quadrature::QuadratureConfig;
use crate::rng;

pub const DEFAULT_COMPOSITION_CAP: usize = 1_000_000;

/// Tolerance for `sum(p) == 1`.
const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "LN-LN")]
    LnLn,
    #[serde(rename = "rLN-LN")]
    RlnLn,
    #[serde(rename = "EXP-LN")]
    ExpLn,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::LnLn => "LN-LN",
            Family::RlnLn => "rLN-LN",
            Family::ExpLn => "EXP-LN",
        })
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "LN-LN" | "LNLN" => Ok(Family::LnLn),
            "RLN-LN" | "RLNLN" => Ok(Family::RlnLn),
            "EXP-LN" | "EXPLN" => Ok(Family::ExpLn),
            _ => Err(Error::Config(format!(
                "unknown model family '{s}' (expected LN-LN, rLN-LN or EXP-LN)"
            ))),
        }
    }
}

/// Mixture family together with the number of populations `T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub populations: usize,
}

impl ModelSpec {
    pub fn new(family: Family, populations: usize) -> Result<Self> {
        if populations == 0 {
            return Err(Error::Config("number of populations must be at least 1".into()));
        }
        if family == Family::ExpLn && populations < 2 {
            return Err(Error::Config(
                "EXP-LN needs at least 2 populations; use ModelSpec::pure_exponential for T = 1".into(),
            ));
        }
        Ok(Self { family, populations })
    }

    pub fn ln_ln(populations: usize) -> Result<Self> {
        Self::new(Family::LnLn, populations)
    }

    /// The single-population exponential model (EXP-LN with T = 1).
    pub fn pure_exponential() -> Self {
        Self {
            family: Family::ExpLn,
            populations: 1,
        }
    }

    /// Number of lognormal populations.
    pub fn ln_populations(&self) -> usize {
        match self.family {
            Family::ExpLn => self.populations - 1,
            _ => self.populations,
        }
    }

    pub fn sigma_count(&self) -> usize {
        match self.family {
            Family::RlnLn => self.populations,
            _ if self.ln_populations() == 0 => 0,
            _ => 1,
        }
    }

    pub fn lambda_count(&self, genes: usize) -> usize {
        if self.family == Family::ExpLn {
            genes
        } else {
            0
        }
    }

    /// Number of free parameters for `genes` genes.
    pub fn dim(&self, genes: usize) -> usize {
        (self.populations - 1) + self.ln_populations() * genes + self.sigma_count() + self.lambda_count(genes)
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (T = {})", self.family, self.populations)
    }
}

/// Population probabilities and per-population, per-gene distribution
/// parameters.
///
/// `mu[h][g]` is the log-mean of lognormal population `h` for gene `g`.
/// `sigma` holds one shared value (LN-LN, EXP-LN) or one per population
/// (rLN-LN). `lambda[g]` is the exponential rate for gene `g` (EXP-LN only);
/// the exponential population is always the last one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    pub p: Vec<f64>,
    pub mu: Vec<Vec<f64>>,
    pub sigma: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl ParameterSet {
    /// Two-or-more population LN-LN parameters for a single gene.
    pub fn ln_ln(p: &[f64], mu: &[f64], sigma: f64) -> Self {
        Self {
            p: p.to_vec(),
            mu: mu.iter().map(|&m| vec![m]).collect(),
            sigma: vec![sigma],
            lambda: Vec::new(),
        }
    }

    pub fn genes(&self) -> usize {
        self.mu.first().map(Vec::len).unwrap_or(self.lambda.len())
    }

    /// Log-sd of lognormal population `h`.
    pub fn sigma_of(&self, spec: &ModelSpec, h: usize) -> f64 {
        match spec.family {
            Family::RlnLn => self.sigma[h],
            _ => self.sigma[0],
        }
    }

    pub fn lognormal(&self, spec: &ModelSpec, h: usize, gene: usize) -> LogNormalParams {
        LogNormalParams {
            mu: self.mu[h][gene],
            sigma: self.sigma_of(spec, h),
        }
    }

    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        let t = spec.populations;
        let bad = |msg: String| Err(Error::InvalidParameters(msg));
        if self.p.len() != t {
            return bad(format!("expected {t} population probabilities, got {}", self.p.len()));
        }
        if self.p.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return bad(format!("probabilities must lie in [0, 1]: {:?}", self.p));
        }
        let total: f64 = self.p.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return bad(format!("probabilities must sum to 1, got {total}"));
        }
        let ln_pops = spec.ln_populations();
        if self.mu.len() != ln_pops {
            return bad(format!(
                "expected log-means for {ln_pops} lognormal populations, got {}",
                self.mu.len()
            ));
        }
        let genes = self.genes();
        if genes == 0 {
            return bad("parameters describe zero genes".into());
        }
        if self.mu.iter().any(|row| row.len() != genes) {
            return bad("every population needs one log-mean per gene".into());
        }
        if self.mu.iter().flatten().any(|m| !m.is_finite()) {
            return bad("log-means must be finite".into());
        }
        if self.sigma.len() != spec.sigma_count() {
            return bad(format!(
                "expected {} log-sd value(s), got {}",
                spec.sigma_count(),
                self.sigma.len()
            ));
        }
        if self.sigma.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return bad(format!("log-sds must be positive: {:?}", self.sigma));
        }
        if self.lambda.len() != spec.lambda_count(genes) {
            return bad(format!(
                "expected {} exponential rate(s), got {}",
                spec.lambda_count(genes),
                self.lambda.len()
            ));
        }
        if self.lambda.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
            return bad(format!("rates must be positive: {:?}", self.lambda));
        }
        Ok(())
    }
}

/// Numbers of cells per population in one pool.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Composition(pub Vec<usize>);

impl Composition {
    pub fn pool_size(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn counts(&self) -> &[usize] {
        &self.0
    }

    /// `ln( n! / prod(l_h!) * prod(p_h^l_h) )`.
    pub fn ln_multinomial_weight(&self, p: &[f64]) -> f64 {
        let mut w = ln_factorial(self.pool_size());
        for (&l, &ph) in self.0.iter().zip(p) {
            if l > 0 {
                w += l as f64 * ph.ln() - ln_factorial(l);
            }
        }
        w
    }

    pub fn multinomial_weight(&self, p: &[f64]) -> f64 {
        self.ln_multinomial_weight(p).exp()
    }
}

impl fmt::Display for Composition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|c| c.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// Per-sample pool sizes `n_1..n_k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSizeVector(Vec<usize>);

impl PoolSizeVector {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if let Some(i) = sizes.iter().position(|&n| n == 0) {
            return Err(Error::Data(format!("pool size at position {} is zero", i + 1)));
        }
        Ok(Self(sizes))
    }

    pub fn homogeneous(n: usize, k: usize) -> Result<Self> {
        Self::new(vec![n; k])
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<usize>() as f64 / self.0.len().max(1) as f64
    }

    /// Distinct sizes in ascending order with their multiplicities.
    pub fn counts(&self) -> Vec<(usize, usize)> {
        let mut sorted = self.0.clone();
        sorted.sort_unstable();
        let mut out: Vec<(usize, usize)> = Vec::new();
        for n in sorted {
            match out.last_mut() {
                Some((size, c)) if *size == n => *c += 1,
                _ => out.push((n, 1)),
            }
        }
        out
    }
}

/// Options shared by all density evaluations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityOptions {
    pub composition_cap: usize,
    pub quadrature: QuadratureConfig,
}

impl Default for DensityOptions {
    fn default() -> Self {
        Self {
            composition_cap: DEFAULT_COMPOSITION_CAP,
            quadrature: QuadratureConfig::default(),
        }
    }
}

fn binomial_u128(n: u128, k: u128) -> Option<u128> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul(n - i)? / (i + 1);
    }
    Some(acc)
}

/// Number of compositions of `n` cells into `t` populations, `C(n+t-1, t-1)`.
pub fn composition_count(n: usize, t: usize) -> u128 {
    if t == 0 {
        return 0;
    }
    binomial_u128((n + t - 1) as u128, (t - 1) as u128).unwrap_or(u128::MAX)
}

/// All compositions of `n` cells into `t` populations, `l_1` varying slowest.
pub fn enumerate_compositions(n: usize, t: usize, cap: usize) -> Result<Vec<Composition>> {
    if n == 0 || t == 0 {
        return Err(Error::Domain("pool size and population count must be positive".into()));
    }
    let count = composition_count(n, t);
    if count > cap as u128 {
        return Err(Error::CompositionCap {
            count,
            cap,
            n,
            populations: t,
        });
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut current = vec![0usize; t];
    fill_compositions(&mut current, 0, n, &mut out);
    Ok(out)
}

fn fill_compositions(current: &mut [usize], pos: usize, remaining: usize, out: &mut Vec<Composition>) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(Composition(current.to_vec()));
        return;
    }
    for l in 0..=remaining {
        current[pos] = l;
        fill_compositions(current, pos + 1, remaining - l, out);
    }
    current[pos] = 0;
}

/// Compositions with their multinomial probabilities under `p`.
pub fn weighted_compositions(n: usize, p: &[f64], cap: usize) -> Result<Vec<(Composition, f64)>> {
    Ok(enumerate_compositions(n, p.len(), cap)?
        .into_iter()
        .map(|c| {
            let w = c.multinomial_weight(p);
            (c, w)
        })
        .collect())
}

/// Density of a single cell's expression for one gene.
pub fn single_cell_mixture_pdf(x: f64, spec: &ModelSpec, params: &ParameterSet, gene: usize) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("single-cell density requires x > 0, got {x}")));
    }
    params.validate(spec)?;
    check_gene(params, gene)?;
    let mut total = 0.0;
    for h in 0..spec.ln_populations() {
        total += params.p[h] * params.lognormal(spec, h, gene).ln_pdf_unchecked(x).exp();
    }
    if spec.family == Family::ExpLn {
        let e = ExponentialParams::new(params.lambda[gene])?;
        total += params.p[spec.populations - 1] * e.ln_pdf(x).exp();
    }
    Ok(total)
}

fn check_gene(params: &ParameterSet, gene: usize) -> Result<()> {
    if gene >= params.genes() {
        return Err(Error::Domain(format!(
            "gene index {gene} out of range ({} genes)",
            params.genes()
        )));
    }
    Ok(())
}

/// Closed form or kernel for the density of a pool of known composition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CompositionKernel {
    LogNormal(LogNormalParams),
    Erlang(ErlangParams),
    Convolution(ErlangParams, LogNormalParams),
}

impl CompositionKernel {
    pub fn build(comp: &Composition, spec: &ModelSpec, params: &ParameterSet, gene: usize) -> Result<Self> {
        let counts = comp.counts();
        if counts.len() != spec.populations {
            return Err(Error::Domain(format!(
                "composition has {} entries, model has {} populations",
                counts.len(),
                spec.populations
            )));
        }
        if comp.pool_size() == 0 {
            return Err(Error::Domain("composition describes an empty pool".into()));
        }
        let ln_pops = spec.ln_populations();
        let ln_cells: usize = counts[..ln_pops].iter().sum();
        let lognormal = || fenton_approx_counts((0..ln_pops).map(|h| (params.lognormal(spec, h, gene), counts[h])));
        if spec.family != Family::ExpLn {
            return Ok(CompositionKernel::LogNormal(lognormal()?));
        }
        let exp_cells = counts[ln_pops];
        if exp_cells == 0 {
            return Ok(CompositionKernel::LogNormal(lognormal()?));
        }
        let erlang = ErlangParams::new(exp_cells, params.lambda[gene])?;
        if ln_cells == 0 {
            Ok(CompositionKernel::Erlang(erlang))
        } else {
            Ok(CompositionKernel::Convolution(erlang, lognormal()?))
        }
    }

    pub fn ln_pdf(&self, y: f64, quadrature: &QuadratureConfig) -> Result<f64> {
        match self {
            CompositionKernel::LogNormal(l) => Ok(l.ln_pdf_unchecked(y)),
            CompositionKernel::Erlang(e) => Ok(e.ln_pdf(y)),
            CompositionKernel::Convolution(e, l) => {
                if y <= 0.0 {
                    return Ok(f64::NEG_INFINITY);
                }
                Ok(erlang_lognormal_conv_pdf_with(y, e, l, quadrature)?.ln())
            }
        }
    }
}

fn check_observation(y: f64, spec: &ModelSpec) -> Result<()> {
    let ok = match spec.family {
        Family::ExpLn => y >= 0.0 && y.is_finite(),
        _ => y > 0.0 && y.is_finite(),
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "observation {y} outside the support of the {} model",
            spec.family
        )))
    }
}

/// Log density of a pool whose composition is known.
pub fn ln_composition_density(
    y: f64,
    comp: &Composition,
    spec: &ModelSpec,
    params: &ParameterSet,
    gene: usize,
    options: &DensityOptions,
) -> Result<f64> {
    check_observation(y, spec)?;
    params.validate(spec)?;
    check_gene(params, gene)?;
    CompositionKernel::build(comp, spec, params, gene)?.ln_pdf(y, &options.quadrature)
}

pub fn composition_density(
    y: f64,
    comp: &Composition,
    spec: &ModelSpec,
    params: &ParameterSet,
    gene: usize,
) -> Result<f64> {
    Ok(ln_composition_density(y, comp, spec, params, gene, &DensityOptions::default())?.exp())
}

/// The mixture over compositions for one pool size, gene and parameter set,
/// prepared once and evaluated at many observations.
#[derive(Debug, Clone)]
pub struct PoolDensity {
    terms: Vec<(f64, CompositionKernel)>,
    quadrature: QuadratureConfig,
}

impl PoolDensity {
    pub fn new(
        n: usize,
        spec: &ModelSpec,
        params: &ParameterSet,
        gene: usize,
        options: &DensityOptions,
    ) -> Result<Self> {
        params.validate(spec)?;
        check_gene(params, gene)?;
        let comps = enumerate_compositions(n, spec.populations, options.composition_cap)?;
        let mut terms = Vec::with_capacity(comps.len());
        for c in comps {
            let lw = c.ln_multinomial_weight(&params.p);
            if lw == f64::NEG_INFINITY {
                continue;
            }
            terms.push((lw, CompositionKernel::build(&c, spec, params, gene)?));
        }
        Ok(Self {
            terms,
            quadrature: options.quadrature,
        })
    }

    pub fn ln_pdf(&self, y: f64) -> Result<f64> {
        // streaming log-sum-exp; log y is shared by every lognormal term
        let ln_y = if y > 0.0 { y.ln() } else { f64::NEG_INFINITY };
        let mut max = f64::NEG_INFINITY;
        let mut scaled = 0.0;
        for (lw, kernel) in &self.terms {
            let lf = match kernel {
                CompositionKernel::LogNormal(l) => l.ln_pdf_from_log(ln_y),
                other => other.ln_pdf(y, &self.quadrature)?,
            };
            let v = lw + lf;
            if v == f64::NEG_INFINITY {
                continue;
            }
            if v <= max {
                scaled += (v - max).exp();
            } else {
                scaled = scaled * (max - v).exp() + 1.0;
                max = v;
            }
        }
        if max == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(max + scaled.ln())
    }

    pub fn terms(&self) -> usize {
        self.terms.len()
    }
}

/// Log density of an `n`-cell pooled measurement.
pub fn ln_pool_pdf(
    y: f64,
    n: usize,
    spec: &ModelSpec,
    params: &ParameterSet,
    gene: usize,
    options: &DensityOptions,
) -> Result<f64> {
    check_observation(y, spec)?;
    if n == 0 {
        return Err(Error::Domain("pool size must be at least 1".into()));
    }
    PoolDensity::new(n, spec, params, gene, options)?.ln_pdf(y)
}

pub fn pool_pdf(y: f64, n: usize, spec: &ModelSpec, params: &ParameterSet, gene: usize) -> Result<f64> {
    Ok(ln_pool_pdf(y, n, spec, params, gene, &DensityOptions::default())?.exp())
}

/// Density of a measurement whose pool size is drawn from the empirical
/// distribution of `pool_sizes`.
pub fn mixed_pool_pdf(
    y: f64,
    pool_sizes: &PoolSizeVector,
    spec: &ModelSpec,
    params: &ParameterSet,
    gene: usize,
) -> Result<f64> {
    if pool_sizes.is_empty() {
        return Err(Error::Domain("pool size vector is empty".into()));
    }
    let k = pool_sizes.len() as f64;
    let mut total = 0.0;
    for (n, count) in pool_sizes.counts() {
        total += count as f64 * pool_pdf(y, n, spec, params, gene)?;
    }
    Ok(total / k)
}

/// Prepared densities for a set of pool sizes, for evaluating on grids.
pub fn mixed_pool_densities(
    pool_sizes: &PoolSizeVector,
    spec: &ModelSpec,
    params: &ParameterSet,
    gene: usize,
    options: &DensityOptions,
) -> Result<Vec<(f64, PoolDensity)>> {
    if pool_sizes.is_empty() {
        return Err(Error::Domain("pool size vector is empty".into()));
    }
    let k = pool_sizes.len() as f64;
    pool_sizes
        .counts()
        .into_iter()
        .map(|(n, c)| Ok((c as f64 / k, PoolDensity::new(n, spec, params, gene, options)?)))
        .collect()
}

/// Simulated pooled data with the latent compositions.
#[derive(Debug, Clone)]
pub struct SimulatedPools {
    pub dataset: Dataset,
    pub compositions: Vec<Composition>,
}

/// Draws one pooled measurement per entry of `pool_sizes`, for `genes` genes.
///
/// Each sample uses its own stream derived from `seed`; the composition is
/// drawn once per sample and shared by all genes.
pub fn sample_pools(
    seed: u64,
    pool_sizes: &PoolSizeVector,
    spec: &ModelSpec,
    params: &ParameterSet,
    genes: usize,
) -> Result<SimulatedPools> {
    params.validate(spec)?;
    if genes == 0 || genes > params.genes() {
        return Err(Error::InvalidParameters(format!(
            "requested {genes} genes but parameters describe {}",
            params.genes()
        )));
    }
    let t = spec.populations;
    let ln_pops = spec.ln_populations();
    let mut ln_dists = Vec::with_capacity(ln_pops);
    for h in 0..ln_pops {
        let row = (0..genes)
            .map(|g| {
                let l = params.lognormal(spec, h, g);
                LogNormal::new(l.mu, l.sigma).map_err(|e| Error::InvalidParameters(e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        ln_dists.push(row);
    }
    let exp_dists = params
        .lambda
        .iter()
        .take(genes)
        .map(|&l| Exp::new(l).map_err(|e| Error::InvalidParameters(e.to_string())))
        .collect::<Result<Vec<_>>>()?;

    let k = pool_sizes.len();
    let mut values = Vec::with_capacity(k);
    let mut compositions = Vec::with_capacity(k);
    for (i, &n) in pool_sizes.as_slice().iter().enumerate() {
        let mut r = rng::stream(seed, &[i as u64]);
        let mut counts = vec![0usize; t];
        for _ in 0..n {
            counts[draw_population(&mut r, &params.p)] += 1;
        }
        let mut row = vec![0.0; genes];
        for (g, slot) in row.iter_mut().enumerate() {
            let mut y = 0.0;
            for (h, &c) in counts.iter().enumerate() {
                for _ in 0..c {
                    y += if h < ln_pops {
                        ln_dists[h][g].sample(&mut r)
                    } else {
                        exp_dists[g].sample(&mut r)
                    };
                }
            }
            *slot = y;
        }
        values.push(row);
        compositions.push(Composition(counts));
    }
    let dataset = Dataset::new(values, pool_sizes.clone(), None)?;
    Ok(SimulatedPools { dataset, compositions })
}

fn draw_population<R: Rng>(r: &mut R, p: &[f64]) -> usize {
    let u: f64 = r.random();
    let mut acc = 0.0;
    for (h, &ph) in p.iter().enumerate() {
        acc += ph;
        if u < acc {
            return h;
        }
    }
    // rounding: fall back to the last population with positive probability
    p.iter().rposition(|&ph| ph > 0.0).unwrap_or(p.len() - 1)
}
