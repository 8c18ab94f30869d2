//! Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

mod common;

use std::time::Instant;

use common::Check;
use stochprof::analysis::{effective_cell_count, ovl, predict_compositions};
use stochprof::estimation::{bic, fit, select_model};
use stochprof::numeric::{lognormal_mle, quantile};
use stochprof::param_space::natural_values;
use stochprof::pool_model::sample_pools;
use stochprof::rng::derive_seed;
use stochprof::simstudy::{run_misspec_study, MisspecMode, PoolSetting, StudyConfig, StudyParameters};
use stochprof::{LogNormalParams, ModelSpec, OptimizerConfig, ParameterSet, PoolSizeVector};

fn close(name: &str, got: f64, want: f64, tol: f64) -> Result<String, String> {
    let line = format!("{name} = {got:.4} (want {want} +/- {tol})");
    if (got - want).abs() <= tol {
        Ok(line)
    } else {
        Err(line)
    }
}

fn bic_golden() -> Check {
    let a = close("bic(1204.371, 4, 1000)", bic(1204.371, 4, 1000), 2436.373, 1e-3)?;
    let b = close("bic(1124.932, 4, 1000)", bic(1124.932, 4, 1000), 2277.496, 1e-3)?;
    Ok(format!("{a}; {b}"))
}

fn overlap_golden() -> Check {
    let f = LogNormalParams::new(2.10, 0.19).unwrap();
    let g = LogNormalParams::new(2.03, 0.20).unwrap();
    close("OVL", ovl(&f, &g).map_err(|e| e.to_string())?, 0.86, 0.01)
}

fn effective_counts() -> Check {
    let a = effective_cell_count(50, 10, 0.12).map_err(|e| e.to_string())?;
    let b = effective_cell_count(100, 10, 0.20).map_err(|e| e.to_string())?;
    let line = format!("(50,10,0.12) -> {a}, (100,10,0.20) -> {b}");
    if a == 60 && b == 200 {
        Ok(line)
    } else {
        Err(line)
    }
}

fn end_to_end() -> Check {
    let spec = ModelSpec::ln_ln(2).unwrap();
    let truth = ParameterSet::ln_ln(&[0.62, 0.38], &[0.47, -0.87], 0.03);
    let sim = sample_pools(1, &PoolSizeVector::homogeneous(10, 1000).unwrap(), &spec, &truth, 1)
        .map_err(|e| e.to_string())?;
    let r = fit(&sim.dataset, &spec, &OptimizerConfig::default()).map_err(|e| e.to_string())?;
    let est = r.estimates();
    let want = [0.62, 0.47, -0.87, 0.03];
    let tol = [0.02, 0.02, 0.02, 0.01];
    let ci = r.ci.as_ref().ok_or("no confidence intervals")?;
    let mut parts = Vec::new();
    let mut ok = true;
    for i in 0..4 {
        let covered = ci[i].lower <= want[i] && want[i] <= ci[i].upper;
        ok &= (est[i] - want[i]).abs() <= tol[i] && covered;
        parts.push(format!(
            "{}={:.4} [{:.4}, {:.4}]",
            r.parameter_names[i], est[i], ci[i].lower, ci[i].upper
        ));
    }
    let line = format!("{}, nll {:.3}", parts.join(", "), r.neg_loglik);
    if ok {
        Ok(line)
    } else {
        Err(line)
    }
}

fn prediction() -> Check {
    let spec = ModelSpec::ln_ln(2).unwrap();
    let truth = ParameterSet::ln_ln(&[0.2, 0.8], &[2.0, 0.0], 0.2);
    let sim =
        sample_pools(1, &PoolSizeVector::homogeneous(5, 100).unwrap(), &spec, &truth, 1).map_err(|e| e.to_string())?;
    let counts: Vec<usize> = sim.compositions.iter().map(|c| c.0[0]).collect();
    let hits = |params: &ParameterSet| -> Result<usize, String> {
        let p = predict_compositions(&sim.dataset, &spec, params, 0, Some(&counts)).map_err(|e| e.to_string())?;
        Ok(p.hits.ok_or("no hit counts")?.map)
    };
    let with_truth = hits(&truth)?;
    let fitted = fit(&sim.dataset, &spec, &OptimizerConfig::default()).map_err(|e| e.to_string())?;
    let with_fit = hits(&fitted.mle)?;
    let line = format!("MAP hits {with_truth}/100 with true, {with_fit}/100 with estimated parameters");
    if with_truth >= 90 && with_fit >= 90 {
        Ok(line)
    } else {
        Err(line)
    }
}

fn properties() -> Check {
    let parts = [
        common::normalization_suite(20, 61)?,
        common::fenton_suite(100, 62)?,
        common::round_trip_suite(100, 63)?,
        common::bayes_suite(50, 64)?,
        common::gradient_order_suite(20, 65)?,
        common::relabeling_suite(50, 66)?,
        common::ks_check(100_000, 67)?,
    ];
    Ok(parts.join("; "))
}

fn oracles() -> Check {
    let parts = [
        common::posterior_oracle_suite(20, 71)?,
        common::pairwise_check()?,
        common::monte_carlo_check(200_000, 72)?,
    ];
    Ok(parts.join("; "))
}

fn model_selection() -> Check {
    let set = &StudyParameters::defaults()[0];
    let truth = set.parameter_set();
    let two = ModelSpec::ln_ln(2).unwrap();
    let candidates = [ModelSpec::ln_ln(1).unwrap(), two];
    let mut wins = 0;
    for replicate in 0..50u64 {
        let seed = derive_seed(8, &[replicate]);
        let sim = sample_pools(seed, &PoolSizeVector::homogeneous(10, 50).unwrap(), &two, &truth, 1)
            .map_err(|e| e.to_string())?;
        let config = OptimizerConfig {
            seed,
            ..Default::default()
        };
        let ranking = select_model(&sim.dataset, &candidates, &config).map_err(|e| e.to_string())?;
        if ranking[0].result.is_ok() && ranking[0].spec == two {
            wins += 1;
        }
    }
    let line = format!("T=2 preferred in {wins}/50 replicates (need 45)");
    if wins >= 45 {
        Ok(line)
    } else {
        Err(line)
    }
}

fn misspecification() -> Check {
    let config = StudyConfig {
        parameter_sets: vec![StudyParameters::defaults()[0].clone()],
        pool_settings: vec![PoolSetting::Homogeneous(10)],
        assumed_pool_sizes: vec![10, 15],
        ..Default::default()
    };
    let records = run_misspec_study(&config, MisspecMode::FixedOffset).map_err(|e| e.to_string())?;
    let median = |assumed: &str, index: usize| -> Result<f64, String> {
        let v: Vec<f64> = records
            .iter()
            .filter(|r| r.assumed.as_deref() == Some(assumed))
            .filter_map(|r| r.estimates.as_ref().ok().map(|e| e[index]))
            .collect();
        if v.len() < 45 {
            return Err(format!("only {} successful fits at {assumed}", v.len()));
        }
        Ok(quantile(&v, 0.5))
    };
    let (p10, p15) = (median("n=10", 0)?, median("n=15", 0)?);
    let (m10, m15) = (median("n=10", 2)?, median("n=15", 2)?);
    let line = format!("median p {p10:.4} -> {p15:.4}, median mu2 {m10:.4} -> {m15:.4}");
    if p15 < p10 && m15 < m10 {
        Ok(line)
    } else {
        Err(line)
    }
}

fn closed_form() -> Check {
    let spec = ModelSpec::ln_ln(1).unwrap();
    let mut worst: f64 = 0.0;
    for d in 0..10u64 {
        let truth = ParameterSet::ln_ln(&[1.0], &[0.3 * d as f64 - 1.0], 0.2 + 0.1 * d as f64);
        let sim = sample_pools(100 + d, &PoolSizeVector::homogeneous(1, 200).unwrap(), &spec, &truth, 1)
            .map_err(|e| e.to_string())?;
        let (mu, sigma) = lognormal_mle(&sim.dataset.gene_column(0));
        let r = fit(&sim.dataset, &spec, &OptimizerConfig::default()).map_err(|e| e.to_string())?;
        let v = natural_values(&r.mle, &spec);
        let (m, s) = (r.mle.mu[0][0], r.mle.sigma[0]);
        let err = (m - mu).abs().max((s - sigma).abs());
        if !(err <= 1e-4) {
            return Err(format!("dataset {d}: {v:?} vs ({mu:.6}, {sigma:.6})"));
        }
        worst = worst.max(err);
    }
    Ok(format!("10 datasets, worst deviation {worst:.2e}"))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("BIC golden values", bic_golden),
        ("overlap golden value", overlap_golden),
        ("effective cell counts", effective_counts),
        ("end-to-end fit, k=1000, n=10", end_to_end),
        ("composition prediction, k=100, n=5", prediction),
        ("property suite", properties),
        ("oracle equivalence", oracles),
        ("model selection, 50 replicates", model_selection),
        ("misspecification trends, n=10 vs 15", misspecification),
        ("closed-form single-population fit", closed_form),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != i + 1) {
            continue;
        }
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} ({secs:.1}s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail} ({secs:.1}s)", i + 1);
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} criteria failed");
        std::process::exit(1);
    }
}
