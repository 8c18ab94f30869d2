//! Single-cell densities and the two pooling kernels: the moment-matching
//! lognormal-sum approximation and the Erlang–lognormal convolution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::ln_factorial;
use crate::quadrature::{integrate_with_breakpoints, QuadratureConfig};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Lognormal distribution `LN(mu, sigma^2)` given by its log-mean and
/// log-standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalParams {
    pub mu: f64,
    pub sigma: f64,
}

impl LogNormalParams {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        let p = Self { mu, sigma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() {
            return Err(Error::Domain(format!("log-mean must be finite, got {}", self.mu)));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::Domain(format!(
                "log-sd must be positive and finite, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    /// Log density without argument checks; `x <= 0` gives `-inf`.
    #[inline]
    pub fn ln_pdf_unchecked(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let lx = x.ln();
        let z = (lx - self.mu) / self.sigma;
        -0.5 * z * z - lx - self.sigma.ln() - LN_SQRT_2PI
    }

    /// Log density given `ln(x)` rather than `x`.
    #[inline]
    pub fn ln_pdf_from_log(&self, ln_x: f64) -> f64 {
        if ln_x == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        let z = (ln_x - self.mu) / self.sigma;
        -0.5 * z * z - ln_x - self.sigma.ln() - LN_SQRT_2PI
    }

    pub fn mean(&self) -> f64 {
        (self.mu + 0.5 * self.sigma * self.sigma).exp()
    }

    pub fn variance(&self) -> f64 {
        let s2 = self.sigma * self.sigma;
        (2.0 * self.mu + s2).exp() * s2.exp_m1()
    }

    /// Upper point covering `1 - tail` of the mass.
    pub fn upper_quantile(&self, tail: f64) -> f64 {
        (self.mu + self.sigma * standard_normal_upper(tail)).exp()
    }
}

fn standard_normal_upper(tail: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(1.0 - tail)
}

/// Exponential distribution with rate `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialParams {
    pub lambda: f64,
}

impl ExponentialParams {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::Domain(format!("rate must be positive, got {lambda}")));
        }
        Ok(Self { lambda })
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            f64::NEG_INFINITY
        } else {
            self.lambda.ln() - self.lambda * x
        }
    }
}

/// Erlang distribution: the sum of `shape` iid exponentials with rate `rate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErlangParams {
    pub shape: usize,
    pub rate: f64,
}

impl ErlangParams {
    pub fn new(shape: usize, rate: f64) -> Result<Self> {
        if shape == 0 {
            return Err(Error::Domain("Erlang shape must be at least 1".into()));
        }
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(Error::Domain(format!("Erlang rate must be positive, got {rate}")));
        }
        Ok(Self { shape, rate })
    }

    /// Log density, computed through log-gamma so large shapes do not overflow.
    pub fn ln_pdf(&self, t: f64) -> f64 {
        if t < 0.0 {
            return f64::NEG_INFINITY;
        }
        let k = self.shape as f64;
        if t == 0.0 {
            return if self.shape == 1 {
                self.rate.ln()
            } else {
                f64::NEG_INFINITY
            };
        }
        k * self.rate.ln() + (k - 1.0) * t.ln() - self.rate * t - ln_factorial(self.shape - 1)
    }

    pub fn pdf(&self, t: f64) -> f64 {
        self.ln_pdf(t).exp()
    }

    pub fn mean(&self) -> f64 {
        self.shape as f64 / self.rate
    }
}

/// Log density of `LN(mu, sigma^2)` at `x`.
pub fn lognormal_logpdf(x: f64, params: &LogNormalParams) -> Result<f64> {
    params.validate()?;
    if !(x > 0.0) {
        return Err(Error::Domain(format!("lognormal density requires x > 0, got {x}")));
    }
    Ok(params.ln_pdf_unchecked(x))
}

/// Mean and variance of a lognormal distribution.
pub fn lognormal_moments(params: &LogNormalParams) -> Result<(f64, f64)> {
    params.validate()?;
    Ok((params.mean(), params.variance()))
}

/// Coefficient of variation `sqrt(exp(sigma^2) - 1)`; does not depend on `mu`.
pub fn lognormal_cv(params: &LogNormalParams) -> Result<f64> {
    params.validate()?;
    Ok((params.sigma * params.sigma).exp_m1().sqrt())
}

/// Approximates the sum of independent lognormals by one lognormal with the
/// same mean and variance.
pub fn fenton_approx(summands: &[LogNormalParams]) -> Result<LogNormalParams> {
    fenton_approx_counts(summands.iter().map(|p| (*p, 1)))
}

/// Like [`fenton_approx`], with each lognormal repeated `count` times.
pub fn fenton_approx_counts<I>(summands: I) -> Result<LogNormalParams>
where
    I: IntoIterator<Item = (LogNormalParams, usize)>,
{
    let mut total_mean = 0.0;
    let mut total_var = 0.0;
    let mut any = false;
    for (p, count) in summands {
        if count == 0 {
            continue;
        }
        p.validate()?;
        any = true;
        let c = count as f64;
        total_mean += c * p.mean();
        total_var += c * p.variance();
    }
    if !any {
        return Err(Error::Domain(
            "lognormal-sum approximation needs at least one summand".into(),
        ));
    }
    let sigma2 = (total_var / (total_mean * total_mean)).ln_1p();
    let mu = total_mean.ln() - 0.5 * sigma2;
    if !(sigma2 > 0.0) || !mu.is_finite() {
        return Err(Error::Numerical(format!(
            "degenerate lognormal-sum approximation (mean {total_mean}, variance {total_var})"
        )));
    }
    Ok(LogNormalParams {
        mu,
        sigma: sigma2.sqrt(),
    })
}

/// Density at `y` of `E + L`, `E ~ Erlang(shape, rate)` and `L ~ LN(mu, sigma^2)`
/// independent, with the default quadrature tolerances.
pub fn erlang_lognormal_conv_pdf(y: f64, erlang: &ErlangParams, lognormal: &LogNormalParams) -> Result<f64> {
    erlang_lognormal_conv_pdf_with(y, erlang, lognormal, &QuadratureConfig::default())
}

/// Density of the Erlang–lognormal convolution at `y`.
///
/// The integral `int_0^y f_E(t) f_LN(y - t) dt` is evaluated after the
/// substitution `u = ln(y - t)`, which turns the lognormal factor into a
/// Gaussian in `u`. The Gaussian is truncated at 12 standard deviations.
pub fn erlang_lognormal_conv_pdf_with(
    y: f64,
    erlang: &ErlangParams,
    lognormal: &LogNormalParams,
    config: &QuadratureConfig,
) -> Result<f64> {
    lognormal.validate()?;
    ErlangParams::new(erlang.shape, erlang.rate)?;
    if !(y > 0.0) || !y.is_finite() {
        return Err(Error::Domain(format!("convolution density requires y > 0, got {y}")));
    }
    let (mu, sigma) = (lognormal.mu, lognormal.sigma);
    let lo = mu - 12.0 * sigma;
    let hi = y.ln().min(mu + 12.0 * sigma);
    if lo >= hi {
        return Ok(0.0);
    }

    let norm = -(sigma.ln() + LN_SQRT_2PI);
    let integrand = |u: f64| {
        let t = y - u.exp();
        if t < 0.0 {
            return 0.0;
        }
        let z = (u - mu) / sigma;
        (erlang.ln_pdf(t) - 0.5 * z * z + norm).exp()
    };

    // Seed the subdivision where either factor has structure.
    let k = erlang.shape as f64;
    let mut points = vec![lo, hi];
    let sd = k.sqrt() / erlang.rate;
    for t in [
        (k - 1.0) / erlang.rate,
        erlang.mean() + 5.0 * sd,
        erlang.mean() + 20.0 * sd,
    ] {
        if t > 0.0 && t < y {
            points.push((y - t).ln());
        }
    }
    points.push(mu);
    points.retain(|u| *u >= lo && *u <= hi);
    points.sort_by(f64::total_cmp);
    points.dedup();

    let integral = integrate_with_breakpoints(integrand, &points, config)?;
    Ok(integral.value.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn ln(mu: f64, sigma: f64) -> LogNormalParams {
        LogNormalParams::new(mu, sigma).unwrap()
    }

    #[test]
    fn logpdf_examples() {
        let c = -0.918_938_533_204_672_7;
        assert_relative_eq!(lognormal_logpdf(1.0, &ln(0.0, 1.0)).unwrap(), c, epsilon = 1e-15);
        assert_relative_eq!(
            lognormal_logpdf(std::f64::consts::E, &ln(1.0, 1.0)).unwrap(),
            c - 1.0,
            epsilon = 1e-14
        );
        // 40-digit reference evaluation of the closed-form density
        assert_relative_eq!(
            lognormal_logpdf(2.0, &ln(0.47, 0.03)).unwrap(),
            -25.769_230_145_251_766,
            max_relative = 1e-13
        );
    }

    #[test]
    fn logpdf_domain_errors() {
        assert!(matches!(lognormal_logpdf(0.0, &ln(0.0, 1.0)), Err(Error::Domain(_))));
        assert!(matches!(lognormal_logpdf(-1.0, &ln(0.0, 1.0)), Err(Error::Domain(_))));
        let bad = LogNormalParams { mu: 0.0, sigma: 0.0 };
        assert!(matches!(lognormal_logpdf(1.0, &bad), Err(Error::Domain(_))));
        assert!(LogNormalParams::new(0.0, -1.0).is_err());
    }

    #[test]
    fn logpdf_normalizes() {
        let p = ln(0.3, 0.7);
        let q = integrate(
            |x| p.ln_pdf_unchecked(x).exp(),
            0.0,
            p.upper_quantile(1e-15),
            &QuadratureConfig::with_tolerance(1e-12, 0.0),
        )
        .unwrap();
        assert!((q.value - 1.0).abs() < 1e-8);
    }

    #[test]
    fn moments_examples() {
        let (m, v) = lognormal_moments(&ln(0.0, 1e-9)).unwrap();
        assert_relative_eq!(m, 1.0, epsilon = 1e-12);
        assert!(v < 1e-15);
        let e = std::f64::consts::E;
        let (m, v) = lognormal_moments(&ln(0.0, 1.0)).unwrap();
        assert_relative_eq!(m, e.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(v, e * (e - 1.0), max_relative = 1e-14);
        let (m, v) = lognormal_moments(&ln(2.0, 0.2)).unwrap();
        assert_relative_eq!(m, 7.538_324_933_661_922, max_relative = 1e-14);
        assert_relative_eq!(v, 2.319_127_044_413_241_5, max_relative = 1e-13);
    }

    #[test]
    fn cv_examples() {
        assert!(lognormal_cv(&ln(0.0, 1e-9)).unwrap() < 1e-8);
        assert_relative_eq!(
            lognormal_cv(&ln(-3.0, 1.0)).unwrap(),
            1.310_832_494_432_086,
            max_relative = 1e-14
        );
        assert_eq!(
            lognormal_cv(&ln(-3.0, 0.4)).unwrap(),
            lognormal_cv(&ln(5.0, 0.4)).unwrap()
        );
    }

    #[test]
    fn fenton_examples() {
        let single = fenton_approx(&[ln(0.3, 0.4)]).unwrap();
        assert_relative_eq!(single.mu, 0.3, epsilon = 1e-14);
        assert_relative_eq!(single.sigma, 0.4, max_relative = 1e-12);

        let two = fenton_approx(&[ln(2.0, 0.2), ln(2.0, 0.2)]).unwrap();
        assert_relative_eq!(two.mu, 2.703_047_187_225_901, max_relative = 1e-14);
        assert_relative_eq!(two.sigma, 0.142_126_657_134_011, max_relative = 1e-12);

        assert!(matches!(fenton_approx(&[]), Err(Error::Domain(_))));
    }

    #[test]
    fn fenton_counts_match_repeated_list() {
        let a = ln(0.47, 0.03);
        let b = ln(-0.87, 0.03);
        let list = fenton_approx(&[a, a, a, b, b]).unwrap();
        let counted = fenton_approx_counts([(a, 3), (b, 2)]).unwrap();
        assert_relative_eq!(list.mu, counted.mu, max_relative = 1e-14);
        assert_relative_eq!(list.sigma, counted.sigma, max_relative = 1e-12);
    }

    #[test]
    fn erlang_density() {
        let e = ErlangParams::new(1, 2.0).unwrap();
        assert_relative_eq!(e.pdf(0.5), 2.0 * (-1.0f64).exp(), max_relative = 1e-14);
        let e = ErlangParams::new(3, 1.5).unwrap();
        let t: f64 = 0.8;
        let direct = 1.5f64.powi(3) * t * t * (-1.5 * t).exp() / 2.0;
        assert_relative_eq!(e.pdf(t), direct, max_relative = 1e-13);
        // shape 50 must not overflow
        let big = ErlangParams::new(50, 1.0).unwrap();
        assert!(big.pdf(50.0).is_finite() && big.pdf(50.0) > 0.0);
        assert!(ErlangParams::new(0, 1.0).is_err());
    }

    #[test]
    fn convolution_fast_exponential_collapses_to_lognormal() {
        let l = ln(0.0, 1.0);
        let y = 1.3;
        let target = l.ln_pdf_unchecked(y).exp();
        let mut previous = f64::INFINITY;
        for rate in [1e2, 1e3, 1e5] {
            let e = ErlangParams::new(1, rate).unwrap();
            let v = erlang_lognormal_conv_pdf(y, &e, &l).unwrap();
            let err = (v - target).abs();
            assert!(err < previous);
            previous = err;
        }
        assert!(previous / target < 1e-4);
    }

    #[test]
    fn convolution_normalizes() {
        for (shape, rate, mu, sigma) in [(1, 1.0, 0.0, 1.0), (3, 2.0, 1.0, 0.2), (10, 0.5, 2.0, 0.03)] {
            let e = ErlangParams::new(shape, rate).unwrap();
            let l = ln(mu, sigma);
            // Q covers 1 - 1e-6 of the mass of both summands
            let q = l.upper_quantile(1e-7) + e.mean() + 12.0 * (shape as f64).sqrt() / rate;
            let total = integrate(
                |y| {
                    if y <= 0.0 {
                        0.0
                    } else {
                        erlang_lognormal_conv_pdf(y, &e, &l).unwrap()
                    }
                },
                0.0,
                q,
                &QuadratureConfig::with_tolerance(1e-8, 1e-12),
            )
            .unwrap();
            assert!((total.value - 1.0).abs() < 1e-4, "{shape} {rate}: {}", total.value);
        }
    }

    #[test]
    fn convolution_matches_direct_quadrature() {
        // independent route: integrate over t directly
        let e = ErlangParams::new(2, 1.3).unwrap();
        let l = ln(0.5, 0.4);
        for y in [0.5, 1.7, 3.2, 6.0] {
            let direct = integrate(
                |t| e.pdf(t) * l.ln_pdf_unchecked(y - t).exp(),
                0.0,
                y,
                &QuadratureConfig::with_tolerance(1e-11, 0.0),
            )
            .unwrap()
            .value;
            let v = erlang_lognormal_conv_pdf(y, &e, &l).unwrap();
            assert_relative_eq!(v, direct, max_relative = 1e-7);
        }
    }

    #[test]
    fn convolution_rejects_nonpositive_y() {
        let e = ErlangParams::new(1, 1.0).unwrap();
        assert!(erlang_lognormal_conv_pdf(0.0, &e, &ln(0.0, 1.0)).is_err());
    }

    proptest! {
        #[test]
        fn fenton_preserves_moments(
            terms in prop::collection::vec((-3.0f64..3.0, 0.01f64..1.5, 1usize..20), 1..6)
        ) {
            let summands: Vec<_> = terms.iter().map(|&(m, s, c)| (ln(m, s), c)).collect();
            let out = fenton_approx_counts(summands.iter().copied()).unwrap();
            let mean: f64 = summands.iter().map(|(p, c)| *c as f64 * p.mean()).sum();
            let var: f64 = summands.iter().map(|(p, c)| *c as f64 * p.variance()).sum();
            prop_assert!((out.mean() - mean).abs() <= 1e-12 * mean);
            prop_assert!((out.variance() - var).abs() <= 1e-12 * var);
        }

        #[test]
        fn cv_is_mu_independent(mu1 in -10.0f64..10.0, mu2 in -10.0f64..10.0, s in 0.01f64..3.0) {
            let a = lognormal_cv(&ln(mu1, s)).unwrap();
            let b = lognormal_cv(&ln(mu2, s)).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn convolution_is_nonnegative(y in 0.001f64..40.0, shape in 1usize..8, rate in 0.1f64..5.0) {
            let v = erlang_lognormal_conv_pdf(y, &ErlangParams::new(shape, rate).unwrap(), &ln(1.0, 0.5)).unwrap();
            prop_assert!(v >= 0.0);
        }
    }
}
