//! Checks shared by the acceptance runner and the integration tests. Each
//! returns a short description of what was measured, or of what failed.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use stochprof::analysis::composition_posterior;
use stochprof::distributions::{fenton_approx, LogNormalParams};
use stochprof::likelihood::{central_gradient, Objective};
use stochprof::param_space::{backtransform, canonicalize, transform};
use stochprof::pool_model::{enumerate_compositions, ln_pool_pdf, pool_pdf, sample_pools, DensityOptions, PoolDensity};
use stochprof::quadrature::{integrate, integrate_with_breakpoints, QuadratureConfig};
use stochprof::rng::{stream, StreamRng};
use stochprof::{Family, ModelSpec, ParameterSet, PoolSizeVector};

pub type Check = Result<String, String>;

pub fn random_model(r: &mut StreamRng, family: Family, populations: usize, genes: usize) -> (ModelSpec, ParameterSet) {
    let spec = ModelSpec::new(family, populations).unwrap();
    let raw: Vec<f64> = (0..populations).map(|_| r.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let ln = spec.ln_populations();
    let params = ParameterSet {
        p: raw.iter().map(|x| x / total).collect(),
        mu: (0..ln)
            .map(|_| (0..genes).map(|_| r.random_range(-1.0..1.5)).collect())
            .collect(),
        sigma: (0..spec.sigma_count()).map(|_| r.random_range(0.1..0.6)).collect(),
        lambda: (0..spec.lambda_count(genes))
            .map(|_| r.random_range(0.3..3.0))
            .collect(),
    };
    (spec, params)
}

fn random_family(r: &mut StreamRng) -> (Family, usize) {
    match r.random_range(0..3) {
        0 => (Family::LnLn, r.random_range(1..=3)),
        1 => (Family::RlnLn, r.random_range(1..=3)),
        _ => (Family::ExpLn, r.random_range(2..=3)),
    }
}

/// Upper end of the support that holds essentially all the mass.
fn far_upper(spec: &ModelSpec, params: &ParameterSet, n: usize) -> f64 {
    let mut top: f64 = 1.0;
    for h in 0..spec.ln_populations() {
        let l = params.lognormal(spec, h, 0);
        top = top.max((l.mu + 9.0 * l.sigma).exp());
    }
    if spec.family == Family::ExpLn {
        top = top.max(60.0 / params.lambda[0]);
    }
    top * n as f64 * 2.0
}

/// Integral of the pool density over the positive axis, on a log scale.
pub fn pool_mass(n: usize, spec: &ModelSpec, params: &ParameterSet) -> Result<f64, String> {
    let density = PoolDensity::new(n, spec, params, 0, &DensityOptions::default()).map_err(|e| e.to_string())?;
    let lo = (1e-12f64).ln();
    let hi = far_upper(spec, params, n).ln();
    let points: Vec<f64> = (0..=60).map(|i| lo + (hi - lo) * i as f64 / 60.0).collect();
    let cfg = QuadratureConfig::with_tolerance(1e-7, 1e-12);
    let g = |u: f64| density.ln_pdf(u.exp()).map(|l| (l + u).exp()).unwrap_or(f64::NAN);
    integrate_with_breakpoints(g, &points, &cfg)
        .map(|i| i.value)
        .map_err(|e| e.to_string())
}

pub fn normalization_suite(cases: usize, seed: u64) -> Check {
    let mut worst: f64 = 0.0;
    for c in 0..cases {
        let mut r = stream(seed, &[c as u64]);
        let (family, t) = random_family(&mut r);
        let n = r.random_range(1..=20);
        let (spec, params) = random_model(&mut r, family, t, 1);
        let mass = pool_mass(n, &spec, &params)?;
        let err = (mass - 1.0).abs();
        if !(err <= 1e-3) {
            return Err(format!("case {c}: {spec}, n={n}: mass {mass}"));
        }
        worst = worst.max(err);
    }
    Ok(format!("{cases} configurations, worst |mass - 1| = {worst:.2e}"))
}

pub fn fenton_suite(cases: usize, seed: u64) -> Check {
    let mut worst: f64 = 0.0;
    for c in 0..cases {
        let mut r = stream(seed, &[c as u64]);
        let k = r.random_range(1..=6);
        let summands: Vec<LogNormalParams> = (0..k)
            .map(|_| LogNormalParams::new(r.random_range(-2.0..2.0), r.random_range(0.01..1.0)).unwrap())
            .collect();
        let b = fenton_approx(&summands).map_err(|e| e.to_string())?;
        let mean: f64 = summands.iter().map(|s| (s.mu + 0.5 * s.sigma * s.sigma).exp()).sum();
        let var: f64 = summands
            .iter()
            .map(|s| (2.0 * s.mu + s.sigma * s.sigma).exp() * (s.sigma * s.sigma).exp_m1())
            .sum();
        let got_mean = (b.mu + 0.5 * b.sigma * b.sigma).exp();
        let got_var = (2.0 * b.mu + b.sigma * b.sigma).exp() * (b.sigma * b.sigma).exp_m1();
        let err = ((got_mean - mean) / mean).abs().max(((got_var - var) / var).abs());
        if !(err <= 1e-12) {
            return Err(format!("case {c}: relative moment error {err:.2e}"));
        }
        worst = worst.max(err);
    }
    Ok(format!("{cases} inputs, worst relative moment error {worst:.2e}"))
}

pub fn round_trip_suite(cases: usize, seed: u64) -> Check {
    let mut worst: f64 = 0.0;
    for c in 0..cases {
        let mut r = stream(seed, &[c as u64]);
        let (family, t) = random_family(&mut r);
        let genes = r.random_range(1..=3);
        let (spec, params) = random_model(&mut r, family, t, genes);
        let params = canonicalize(&params, &spec);
        let w = transform(&params, &spec).map_err(|e| e.to_string())?;
        let back = backtransform(&w, &spec).map_err(|e| e.to_string())?;
        let flat = |p: &ParameterSet| -> Vec<f64> {
            p.p.iter()
                .chain(p.mu.iter().flatten())
                .chain(&p.sigma)
                .chain(&p.lambda)
                .copied()
                .collect()
        };
        for (a, b) in flat(&params).iter().zip(flat(&back)) {
            let err = (a - b).abs() / a.abs().max(1.0);
            if !(err <= 1e-12) {
                return Err(format!("case {c}: {a} came back as {b}"));
            }
            worst = worst.max(err);
        }
    }
    Ok(format!("{cases} points, worst error {worst:.2e}"))
}

fn draw_observation(r: &mut StreamRng, n: usize, spec: &ModelSpec, params: &ParameterSet) -> f64 {
    let sim = sample_pools(r.random(), &PoolSizeVector::homogeneous(n, 1).unwrap(), spec, params, 1).unwrap();
    sim.dataset.values()[0][0]
}

pub fn bayes_suite(cases: usize, seed: u64) -> Check {
    let mut worst: f64 = 0.0;
    for c in 0..cases {
        let mut r = stream(seed, &[c as u64]);
        let (family, t) = random_family(&mut r);
        let n = r.random_range(1..=10);
        let (spec, params) = random_model(&mut r, family, t, 1);
        let y = draw_observation(&mut r, n, &spec, &params);
        let post = composition_posterior(y, n, &spec, &params, 0).map_err(|e| format!("case {c}: {e}"))?;
        let direct = ln_pool_pdf(y, n, &spec, &params, 0, &DensityOptions::default()).map_err(|e| e.to_string())?;
        let err = (post.ln_normalizer - direct).exp_m1().abs();
        if !(err <= 1e-10) {
            return Err(format!("case {c}: normalizer differs by {err:.2e}"));
        }
        worst = worst.max(err);
    }
    Ok(format!("{cases} cases, worst relative difference {worst:.2e}"))
}

pub fn gradient_order_suite(cases: usize, seed: u64) -> Check {
    let spec = ModelSpec::ln_ln(2).unwrap();
    let truth = ParameterSet::ln_ln(&[0.3, 0.7], &[1.0, -0.5], 0.3);
    let sim = sample_pools(seed, &PoolSizeVector::homogeneous(3, 40).unwrap(), &spec, &truth, 1).unwrap();
    let objective = Objective::new(&sim.dataset, spec);
    let f = |w: &[f64]| objective.value(w);
    let mut lowest = f64::INFINITY;
    for c in 0..cases {
        let mut r = stream(seed, &[1, c as u64]);
        let w: Vec<f64> = vec![
            r.random_range(-1.5..1.5),
            r.random_range(0.5..1.5),
            r.random_range(-1.0..0.0),
            r.random_range(-1.6..-0.8),
        ];
        let g: Vec<Vec<f64>> = [4e-3, 2e-3, 1e-3]
            .iter()
            .map(|&h| central_gradient(&f, &w, h))
            .collect::<stochprof::Result<_>>()
            .map_err(|e| e.to_string())?;
        let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let order = (diff(&g[0], &g[1]) / diff(&g[1], &g[2])).log2();
        if !(order >= 1.8) {
            return Err(format!("point {c}: observed order {order:.3}"));
        }
        lowest = lowest.min(order);
    }
    Ok(format!("{cases} points, lowest observed order {lowest:.3}"))
}

pub fn relabeling_suite(cases: usize, seed: u64) -> Check {
    let mut worst: f64 = 0.0;
    for c in 0..cases {
        let mut r = stream(seed, &[c as u64]);
        let (family, _) = random_family(&mut r);
        let t = 3;
        let n = r.random_range(1..=8);
        let (spec, params) = random_model(&mut r, family, t, 1);
        let ln = spec.ln_populations();
        let mut order: Vec<usize> = (0..ln).collect();
        while order.iter().enumerate().all(|(i, &o)| i == o) {
            order.shuffle(&mut r);
        }
        let mut permuted = params.clone();
        for (new, &old) in order.iter().enumerate() {
            permuted.p[new] = params.p[old];
            permuted.mu[new] = params.mu[old].clone();
            if spec.sigma_count() > 1 {
                permuted.sigma[new] = params.sigma[old];
            }
        }
        let y = draw_observation(&mut r, n, &spec, &params);
        let a = pool_pdf(y, n, &spec, &params, 0).map_err(|e| e.to_string())?;
        let b = pool_pdf(y, n, &spec, &permuted, 0).map_err(|e| e.to_string())?;
        let err = ((a - b) / a).abs();
        if !(err <= 1e-12) {
            return Err(format!("case {c}: {a} vs {b}"));
        }
        worst = worst.max(err);
    }
    Ok(format!("{cases} permutations, worst relative difference {worst:.2e}"))
}

/// Kolmogorov–Smirnov distance between `samples` pool sums and the CDF
/// obtained by integrating the pool density.
pub fn ks_distance(samples: usize, seed: u64) -> Result<(f64, f64), String> {
    let spec = ModelSpec::ln_ln(2).unwrap();
    let params = ParameterSet::ln_ln(&[0.62, 0.38], &[0.47, -0.87], 0.03);
    let sim = sample_pools(
        seed,
        &PoolSizeVector::homogeneous(10, samples).unwrap(),
        &spec,
        &params,
        1,
    )
    .unwrap();
    let mut y = sim.dataset.gene_column(0);
    y.sort_by(f64::total_cmp);
    let density = PoolDensity::new(10, &spec, &params, 0, &DensityOptions::default()).map_err(|e| e.to_string())?;
    let f = |x: f64| density.ln_pdf(x).map(f64::exp).unwrap_or(f64::NAN);
    let cfg = QuadratureConfig::with_tolerance(1e-10, 1e-15);
    let mut cdf = integrate(f, 1e-9, y[0], &cfg).map_err(|e| e.to_string())?.value;
    let n = samples as f64;
    let mut d: f64 = 0.0;
    for i in 0..samples {
        if i > 0 && y[i] > y[i - 1] {
            cdf += integrate(f, y[i - 1], y[i], &cfg).map_err(|e| e.to_string())?.value;
        }
        d = d.max((i as f64 + 1.0) / n - cdf).max(cdf - i as f64 / n);
    }
    Ok((d, 1.628 / n.sqrt()))
}

pub fn ks_check(samples: usize, seed: u64) -> Check {
    let (d, critical) = ks_distance(samples, seed)?;
    if d < critical {
        Ok(format!("D = {d:.5} < {critical:.5} with {samples} pools"))
    } else {
        Err(format!("D = {d:.5} >= {critical:.5}"))
    }
}

/// Direct Bayes enumeration for lognormal families, written without the
/// library's composition and density code.
pub fn direct_posterior(y: f64, n: usize, spec: &ModelSpec, params: &ParameterSet) -> Vec<(Vec<usize>, f64)> {
    fn compositions(n: usize, t: usize) -> Vec<Vec<usize>> {
        if t == 1 {
            return vec![vec![n]];
        }
        let mut out = Vec::new();
        for first in (0..=n).rev() {
            for mut rest in compositions(n - first, t - 1) {
                rest.insert(0, first);
                out.push(rest);
            }
        }
        out
    }
    let ln_fact = |k: usize| (1..=k).map(|i| (i as f64).ln()).sum::<f64>();
    let t = spec.populations;
    let mut joint = Vec::new();
    for c in compositions(n, t) {
        let mut lw = ln_fact(n);
        let mut zero = false;
        for h in 0..t {
            lw -= ln_fact(c[h]);
            if c[h] > 0 {
                if params.p[h] == 0.0 {
                    zero = true;
                }
                lw += c[h] as f64 * params.p[h].ln();
            }
        }
        let (mut m, mut v) = (0.0, 0.0);
        for h in 0..t {
            let s = if params.sigma.len() == 1 {
                params.sigma[0]
            } else {
                params.sigma[h]
            };
            let mu = params.mu[h][0];
            m += c[h] as f64 * (mu + 0.5 * s * s).exp();
            v += c[h] as f64 * (2.0 * mu + s * s).exp() * ((s * s).exp() - 1.0);
        }
        let s2 = (1.0 + v / (m * m)).ln();
        let mu_b = m.ln() - 0.5 * s2;
        let z = (y.ln() - mu_b) / s2.sqrt();
        let lf = -0.5 * z * z - y.ln() - 0.5 * s2.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
        joint.push((c, if zero { f64::NEG_INFINITY } else { lw + lf }));
    }
    let max = joint.iter().map(|j| j.1).fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = joint.iter().map(|j| (j.1 - max).exp()).sum();
    joint.into_iter().map(|(c, l)| (c, (l - max).exp() / total)).collect()
}

pub fn posterior_oracle_suite(cases: usize, seed: u64) -> Check {
    let mut worst: f64 = 0.0;
    for c in 0..cases {
        let mut r = stream(seed, &[c as u64]);
        let family = if r.random::<bool>() {
            Family::LnLn
        } else {
            Family::RlnLn
        };
        let t = r.random_range(1..=3);
        let n = r.random_range(1..=10);
        let (spec, params) = random_model(&mut r, family, t, 1);
        let y = draw_observation(&mut r, n, &spec, &params);
        let post = composition_posterior(y, n, &spec, &params, 0).map_err(|e| e.to_string())?;
        let oracle = direct_posterior(y, n, &spec, &params);
        if oracle.len() != post.support.len() {
            return Err(format!(
                "case {c}: {} vs {} compositions",
                post.support.len(),
                oracle.len()
            ));
        }
        for (comp, p) in &oracle {
            let i = post
                .support
                .iter()
                .position(|s| &s.0 == comp)
                .ok_or(format!("case {c}: missing {comp:?}"))?;
            let err = (post.pmf[i] - p).abs();
            if !(err <= 1e-12) {
                return Err(format!("case {c}, composition {comp:?}: {} vs {p}", post.pmf[i]));
            }
            worst = worst.max(err);
        }
    }
    Ok(format!("{cases} cases, worst pmf difference {worst:.2e}"))
}

fn lognormal_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let z = (x.ln() - mu) / sigma;
    (-0.5 * z * z).exp() / (x * sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// Density of the sum of two independent lognormals by composite Simpson
/// quadrature of the convolution integral.
pub fn pairwise_convolution(y: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    let steps = 20_000;
    let h = y / steps as f64;
    let g = |t: f64| lognormal_pdf(t, a.0, a.1) * lognormal_pdf(y - t, b.0, b.1);
    let mut s = g(0.0) + g(y);
    for i in 1..steps {
        s += g(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Exact two-cell pool density for two populations and the largest gap
/// between each lognormal-sum approximation and its exact convolution,
/// relative to the exact peak.
pub struct PairwiseComparison {
    pub max_abs_diff: f64,
    pub envelope: f64,
    pub relative_envelope: f64,
}

pub fn pairwise_comparison(p1: f64, mu: (f64, f64), sigma: f64, grid: &[f64]) -> PairwiseComparison {
    let pops = [(mu.0, sigma), (mu.1, sigma)];
    let combos = [
        ((0, 0), p1 * p1),
        ((0, 1), 2.0 * p1 * (1.0 - p1)),
        ((1, 1), (1.0 - p1) * (1.0 - p1)),
    ];
    let spec = ModelSpec::ln_ln(2).unwrap();
    let params = ParameterSet::ln_ln(&[p1, 1.0 - p1], &[mu.0, mu.1], sigma);
    let mut envelope_per = [0.0f64; 3];
    let mut peak_per = [0.0f64; 3];
    let mut max_abs_diff: f64 = 0.0;
    for &y in grid {
        let mut exact_mix = 0.0;
        for (k, ((i, j), w)) in combos.iter().enumerate() {
            let exact = pairwise_convolution(y, pops[*i], pops[*j]);
            let (m, v) = [pops[*i], pops[*j]].iter().fold((0.0, 0.0), |(m, v), (mu, s)| {
                (
                    m + (mu + 0.5 * s * s).exp(),
                    v + (2.0 * mu + s * s).exp() * ((s * s).exp() - 1.0),
                )
            });
            let s2 = (1.0 + v / (m * m)).ln();
            let approx = lognormal_pdf(y, m.ln() - 0.5 * s2, s2.sqrt());
            envelope_per[k] = envelope_per[k].max((approx - exact).abs());
            peak_per[k] = peak_per[k].max(exact);
            exact_mix += w * exact;
        }
        let lib = pool_pdf(y, 2, &spec, &params, 0).unwrap();
        max_abs_diff = max_abs_diff.max((lib - exact_mix).abs());
    }
    let envelope = combos.iter().zip(envelope_per).map(|((_, w), e)| w * e).sum::<f64>();
    let relative_envelope = envelope_per
        .iter()
        .zip(peak_per)
        .map(|(e, p)| e / p)
        .fold(0.0, f64::max);
    PairwiseComparison {
        max_abs_diff,
        envelope,
        relative_envelope,
    }
}

pub fn pairwise_check() -> Check {
    let mut notes = Vec::new();
    for (p1, mu, sigma) in [
        (0.3f64, (2.0f64, 0.0f64), 0.2f64),
        (0.6, (0.47, -0.87), 0.1),
        (0.5, (1.0, 0.8), 0.3),
    ] {
        let hi = 2.0 * (mu.0 + 5.0 * sigma).exp();
        let grid: Vec<f64> = (1..=120).map(|i| hi * i as f64 / 120.0).collect();
        let c = pairwise_comparison(p1, mu, sigma, &grid);
        if !(c.max_abs_diff <= c.envelope + 1e-10) || !(c.relative_envelope <= 0.05) {
            return Err(format!(
                "p1={p1}, mu={mu:?}, sigma={sigma}: |lib - exact| = {:.3e}, envelope {:.3e}, relative envelope {:.3}",
                c.max_abs_diff, c.envelope, c.relative_envelope
            ));
        }
        notes.push(format!("{:.1e}<={:.1e}", c.max_abs_diff, c.envelope));
    }
    Ok(format!("n=2 vs direct convolution: {}", notes.join(", ")))
}

/// Compares bin probabilities of simulated two-cell pools with the integral
/// of the pool density over each bin.
pub fn monte_carlo_check(samples: usize, seed: u64) -> Check {
    let spec = ModelSpec::ln_ln(2).unwrap();
    let params = ParameterSet::ln_ln(&[0.4, 0.6], &[1.0, 0.2], 0.05);
    let mut r = stream(seed, &[0]);
    let cells = [LogNormal::new(1.0, 0.05).unwrap(), LogNormal::new(0.2, 0.05).unwrap()];
    let ys: Vec<f64> = (0..samples)
        .map(|_| {
            (0..2)
                .map(|_| cells[usize::from(r.random::<f64>() >= 0.4)].sample(&mut r))
                .sum()
        })
        .collect();
    let edges: Vec<f64> = (0..=12).map(|i| 2.2 + 3.6 * i as f64 / 12.0).collect();
    let cfg = QuadratureConfig::with_tolerance(1e-10, 1e-14);
    let mut worst: f64 = 0.0;
    for w in edges.windows(2) {
        let expected = integrate(|y| pool_pdf(y, 2, &spec, &params, 0).unwrap(), w[0], w[1], &cfg)
            .map_err(|e| e.to_string())?
            .value;
        let observed = ys.iter().filter(|y| (w[0]..w[1]).contains(*y)).count() as f64 / samples as f64;
        let se = (expected * (1.0 - expected) / samples as f64)
            .sqrt()
            .max(1.0 / samples as f64);
        let z = (observed - expected).abs() / se;
        if !(z <= 3.0) {
            return Err(format!(
                "bin [{:.2}, {:.2}): {observed:.5} vs {expected:.5} ({z:.2} SE)",
                w[0], w[1]
            ));
        }
        worst = worst.max(z);
    }
    Ok(format!("12 bins of {samples} draws, largest deviation {worst:.2} SE"))
}

/// Number of compositions with a nonzero prior.
pub fn support_size(n: usize, t: usize) -> usize {
    enumerate_compositions(n, t, usize::MAX).unwrap().len()
}
