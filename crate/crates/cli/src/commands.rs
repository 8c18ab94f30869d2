use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use stochprof::analysis::{overlap_test, predict_compositions};
use stochprof::estimation::{select_model, FitResult, OptimizerConfig};
use stochprof::io::{
    fit_report_json, format_fit_report, format_prediction_report, read_dataset, write_compositions, write_dataset,
    write_density_grid, PoolSizeArg, ReadOptions,
};
use stochprof::pool_model::{mixed_pool_densities, sample_pools, DensityOptions};
use stochprof::simstudy::{
    run_misspec_study, run_pool_size_study, run_sensitivity_study, summarize, write_raw_tsv, write_summary_tsv,
    MisspecMode, PoolSetting, StudyConfig, StudyParameters,
};
use stochprof::{Dataset, Family, LogNormalParams, ModelSpec, ParameterSet};

use crate::args::{
    CompareArgs, DataArgs, DensityArgs, FitArgs, OptimizerArgs, ParamArgs, PredictArgs, SimstudyArgs, SimulateArgs,
    StudyKind,
};
use crate::manifest::RunManifest;
use crate::{usage, Failure};

type CmdResult = Result<(), Failure>;

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

/// Builds the model from flags; `genes` is inferred from `--mu` (or
/// `--lambda`) when not given.
fn build_params(a: &ParamArgs, genes: Option<usize>) -> Result<(ModelSpec, ParameterSet), Failure> {
    let spec = ModelSpec::new(Family::from(a.model), a.populations)?;
    let t = spec.populations;
    let ln = spec.ln_populations();

    let p = match a.p.len() {
        0 if t == 1 => vec![1.0],
        n if n == t => a.p.clone(),
        n if n + 1 == t => {
            let mut p = a.p.clone();
            p.push(1.0 - a.p.iter().sum::<f64>());
            p
        }
        n => return Err(usage(format!("--p: expected {t} values (or {}), got {n}", t - 1))),
    };

    let genes = match genes {
        Some(m) => m,
        None if ln > 0 => a.mu.len() / ln,
        None => a.lambda.len(),
    };
    if genes == 0 {
        return Err(usage("no genes: give --mu (or --lambda for a pure exponential model)"));
    }
    if a.mu.len() != ln * genes {
        return Err(usage(format!(
            "--mu: expected {} values ({ln} lognormal populations x {genes} genes), got {}",
            ln * genes,
            a.mu.len()
        )));
    }
    if a.sigma.len() != spec.sigma_count() {
        return Err(usage(format!(
            "--sigma: expected {} values, got {}",
            spec.sigma_count(),
            a.sigma.len()
        )));
    }
    if a.lambda.len() != spec.lambda_count(genes) {
        return Err(usage(format!(
            "--lambda: expected {} values, got {}",
            spec.lambda_count(genes),
            a.lambda.len()
        )));
    }
    let params = ParameterSet {
        p,
        mu: a.mu.chunks(genes.max(1)).take(ln).map(<[f64]>::to_vec).collect(),
        sigma: a.sigma.clone(),
        lambda: a.lambda.clone(),
    };
    params.validate(&spec)?;
    Ok((spec, params))
}

fn load_data(a: &DataArgs) -> Result<Dataset, Failure> {
    let options = ReadOptions {
        orientation: a.orientation.into(),
        header: a.header,
        rownames: a.rownames,
    };
    let sizes = PoolSizeArg::parse(&a.pool_sizes)?;
    Ok(read_dataset(&a.data, &options, &sizes)?)
}

fn optimizer_config(a: &OptimizerArgs, genes: usize) -> Result<OptimizerConfig, Failure> {
    let subgroups = match &a.subgroups {
        None => None,
        Some(s) => Some(
            s.split(';')
                .map(|group| {
                    group
                        .split(',')
                        .map(|g| match g.trim().parse::<usize>() {
                            Ok(i) if (1..=genes).contains(&i) => Ok(i - 1),
                            _ => Err(usage(format!("--subgroups: invalid gene index '{}'", g.trim()))),
                        })
                        .collect::<Result<Vec<_>, _>>()
                })
                .collect::<Result<Vec<_>, _>>()?,
        ),
    };
    let config = OptimizerConfig {
        loops: a.loops,
        grid_draws: a.grid_draws,
        top_fraction: a.top_fraction,
        restarts: a.restarts,
        simplex_tolerance: a.tolerance,
        max_iterations: a.max_iterations,
        seed: a.seed,
        subgroups,
        top_combinations: 6,
    };
    config.validate()?;
    Ok(config)
}

pub fn simulate(a: &SimulateArgs) -> CmdResult {
    if a.samples == 0 {
        return Err(usage("--samples must be at least 1"));
    }
    if a.genes == 0 {
        return Err(usage("--genes must be at least 1"));
    }
    let (spec, params) = build_params(&a.params, Some(a.genes))?;
    let sizes = PoolSizeArg::parse(&a.pool_sizes)
        .and_then(|s| s.resolve(a.samples))
        .map_err(|e| usage(format!("--pool-sizes: {e}")))?;
    let sim = sample_pools(a.seed, &sizes, &spec, &params, a.genes)?;

    create_dir(&a.out)?;
    let mut w = create(&a.out.join("dataset.tsv"))?;
    write_dataset(&mut w, &sim.dataset)?;
    w.flush().context("writing dataset")?;
    let mut w = create(&a.out.join("compositions.tsv"))?;
    write_compositions(&mut w, &sim.compositions, &sizes)?;
    w.flush().context("writing compositions")?;
    let mut w = create(&a.out.join("pool_sizes.txt"))?;
    for n in sizes.as_slice() {
        writeln!(w, "{n}").context("writing pool sizes")?;
    }
    w.flush().context("writing pool sizes")?;
    RunManifest::new("simulate", Some(a.seed), a)?.write(&a.out)?;
    println!("wrote {} samples x {} genes to {}", a.samples, a.genes, a.out.display());
    Ok(())
}

pub fn fit(a: &FitArgs) -> CmdResult {
    let data = load_data(&a.data)?;
    let config = optimizer_config(&a.optimizer, data.genes())?;
    if a.populations.is_empty() {
        return Err(usage("--populations: give at least one value"));
    }
    let specs = a
        .populations
        .iter()
        .map(|&t| ModelSpec::new(a.model.into(), t))
        .collect::<stochprof::Result<Vec<_>>>()?;

    let (best, ranking): (FitResult, Option<String>) = if specs.len() == 1 {
        (stochprof::estimation::fit(&data, &specs[0], &config)?, None)
    } else {
        let ranked = select_model(&data, &specs, &config)?;
        let mut table = String::from("model\tpopulations\tneg_loglik\tdim\tbic\n");
        for choice in &ranked {
            match &choice.result {
                Ok(r) => table.push_str(&format!(
                    "{}\t{}\t{:.4}\t{}\t{:.4}\n",
                    choice.spec.family, choice.spec.populations, r.neg_loglik, r.dim, r.bic
                )),
                Err(e) => table.push_str(&format!(
                    "{}\t{}\tNA\tNA\tNA\t# {e}\n",
                    choice.spec.family, choice.spec.populations
                )),
            }
        }
        let best = ranked
            .into_iter()
            .find_map(|c| c.result.ok())
            .ok_or_else(|| Failure::from(stochprof::Error::Numerical("every candidate model failed".into())))?;
        (best, Some(table))
    };

    let report = format_fit_report(&best);
    if let Some(t) = &ranking {
        println!("Model ranking by BIC:\n{t}");
    }
    print!("{report}");
    if let Some(out) = &a.out {
        create_dir(out)?;
        std::fs::write(out.join("report.txt"), &report).context("writing report")?;
        std::fs::write(out.join("fit.json"), fit_report_json(&best)? + "\n").context("writing fit.json")?;
        if let Some(t) = ranking {
            std::fs::write(out.join("ranking.tsv"), t).context("writing ranking")?;
        }
        let mut manifest = RunManifest::new("fit", Some(a.optimizer.seed), a)?;
        manifest.add_input(&a.data.data)?;
        if Path::new(&a.data.pool_sizes).is_file() {
            manifest.add_input(Path::new(&a.data.pool_sizes))?;
        }
        manifest.write(out)?;
    }
    Ok(())
}

fn default_upper(spec: &ModelSpec, params: &ParameterSet, gene: usize, n_max: usize) -> f64 {
    let mut top: f64 = 0.0;
    for h in 0..spec.ln_populations() {
        let l = params.lognormal(spec, h, gene);
        top = top.max((l.mu + 4.0 * l.sigma).exp());
    }
    if spec.family == Family::ExpLn {
        top = top.max(5.0 / params.lambda[gene]);
    }
    top * n_max as f64
}

pub fn density(a: &DensityArgs) -> CmdResult {
    let (spec, params) = build_params(&a.params, None)?;
    if a.gene == 0 || a.gene > params.genes() {
        return Err(usage(format!("--gene must lie in 1..={}", params.genes())));
    }
    if a.points < 2 {
        return Err(usage("--points must be at least 2"));
    }
    let gene = a.gene - 1;
    let sizes = match PoolSizeArg::parse(&a.pool_sizes)? {
        PoolSizeArg::Homogeneous(n) => stochprof::PoolSizeVector::homogeneous(n, 1)?,
        PoolSizeArg::List(v) => stochprof::PoolSizeVector::new(v)?,
    };
    let n_max = sizes.as_slice().iter().copied().max().unwrap_or(1);
    let to = a.to.unwrap_or_else(|| default_upper(&spec, &params, gene, n_max));
    let from = a.from.unwrap_or(to / a.points as f64);
    if !(from > 0.0 && to > from) {
        return Err(usage("--from and --to must satisfy 0 < from < to"));
    }
    let densities = mixed_pool_densities(&sizes, &spec, &params, gene, &DensityOptions::default())?;
    let mut grid = Vec::with_capacity(a.points);
    for i in 0..a.points {
        let y = from + (to - from) * i as f64 / (a.points - 1) as f64;
        let mut f = 0.0;
        for (w, d) in &densities {
            f += w * d.ln_pdf(y)?.exp();
        }
        grid.push((y, f));
    }
    match &a.out {
        Some(path) => {
            let mut w = create(path)?;
            write_density_grid(&mut w, &grid)?;
            w.flush().context("writing density grid")?;
        }
        None => write_density_grid(std::io::stdout().lock(), &grid)?,
    }
    Ok(())
}

fn read_truth(path: &Path, samples: usize) -> Result<Vec<usize>, Failure> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let count = line
            .split_whitespace()
            .nth(2)
            .and_then(|f| f.parse::<usize>().ok())
            .ok_or_else(|| {
                Failure::from(stochprof::Error::Parse {
                    line: i + 1,
                    column: 3,
                    message: "expected a population-1 count".into(),
                })
            })?;
        out.push(count);
    }
    if out.len() != samples {
        return Err(stochprof::Error::Data(format!("truth file has {} rows for {samples} samples", out.len())).into());
    }
    Ok(out)
}

pub fn predict(a: &PredictArgs) -> CmdResult {
    let data = load_data(&a.data)?;
    let (spec, params) = match &a.fit {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let fit: FitResult =
                serde_json::from_str(&text).map_err(|e| stochprof::Error::Data(format!("{}: {e}", path.display())))?;
            (fit.spec, fit.mle)
        }
        None => build_params(&a.params, Some(data.genes()))?,
    };
    if a.gene == 0 || a.gene > data.genes() {
        return Err(usage(format!("--gene must lie in 1..={}", data.genes())));
    }
    let truth = a.truth.as_deref().map(|p| read_truth(p, data.samples())).transpose()?;
    let prediction = predict_compositions(&data, &spec, &params, a.gene - 1, truth.as_deref())?;
    let report = format_prediction_report(&data, a.gene - 1, &prediction, truth.as_deref());
    print!("{report}");
    if let Some(out) = &a.out {
        create_dir(out)?;
        std::fs::write(out.join("prediction.txt"), &report).context("writing prediction")?;
        let mut manifest = RunManifest::new("predict", None, a)?;
        manifest.add_input(&a.data.data)?;
        if let Some(f) = &a.fit {
            manifest.add_input(f)?;
        }
        manifest.write(out)?;
    }
    Ok(())
}

pub fn compare(a: &CompareArgs) -> CmdResult {
    let fa = LogNormalParams::new(a.mu_a, a.sigma_a).map_err(|e| usage(format!("population A: {e}")))?;
    let fb = LogNormalParams::new(a.mu_b, a.sigma_b).map_err(|e| usage(format!("population B: {e}")))?;
    let r = overlap_test(&fa, &fb, a.count_a, a.count_b, a.replicates, a.seed)?;
    println!("OVL = {:.3}", r.ovl_original);
    println!(
        "null 5% quantile = {:.3} ({} replicates, {} vs {} cells)",
        r.null_quantile_05, a.replicates, a.count_a, a.count_b
    );
    println!("decision: {}", if r.reject { "rejected" } else { "not rejected" });
    Ok(())
}

fn parse_setting(s: &str) -> Result<PoolSetting, Failure> {
    let s = s.trim();
    if let Some(list) = s.strip_prefix("mix:") {
        let sizes = list
            .split('/')
            .map(|n| {
                n.trim()
                    .parse::<usize>()
                    .map_err(|_| usage(format!("--settings: invalid size '{n}'")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        return Ok(PoolSetting::Mixed(sizes));
    }
    s.parse::<usize>()
        .map(PoolSetting::Homogeneous)
        .map_err(|_| usage(format!("--settings: invalid pool setting '{s}'")))
}

pub fn simstudy(a: &SimstudyArgs) -> CmdResult {
    let defaults = StudyParameters::defaults();
    let parameter_sets = if a.sets.is_empty() {
        defaults
    } else {
        a.sets
            .iter()
            .map(|name| {
                defaults
                    .iter()
                    .find(|s| s.name == *name)
                    .cloned()
                    .ok_or_else(|| usage(format!("--sets: unknown parameter set '{name}'")))
            })
            .collect::<Result<_, _>>()?
    };
    let pool_settings = if a.settings.is_empty() {
        PoolSetting::defaults()
    } else {
        a.settings.iter().map(|s| parse_setting(s)).collect::<Result<_, _>>()?
    };
    let mut config = StudyConfig {
        parameter_sets,
        pool_settings,
        replicates: a.replicates,
        samples: a.samples,
        seed: a.optimizer.seed,
        optimizer: optimizer_config(&a.optimizer, 1)?,
        true_pool_size: a.true_pool_size,
        ..StudyConfig::default()
    };
    if !a.assumed.is_empty() {
        config.assumed_pool_sizes = a.assumed.clone();
    }
    config.validate()?;

    let (records, comparison) = match a.study {
        StudyKind::PoolSize => (run_pool_size_study(&config)?, None),
        StudyKind::Sensitivity => {
            let s = run_sensitivity_study(&config)?;
            (s.records, Some(s.comparison))
        }
        StudyKind::MisspecFixed => (run_misspec_study(&config, MisspecMode::FixedOffset)?, None),
        StudyKind::MisspecPoisson => (run_misspec_study(&config, MisspecMode::PoissonPerturbed)?, None),
    };
    let summaries = summarize(&records)?;

    create_dir(&a.out)?;
    let mut w = create(&a.out.join("raw.tsv"))?;
    write_raw_tsv(&mut w, &records)?;
    w.flush().context("writing raw estimates")?;
    let mut w = create(&a.out.join("summary.tsv"))?;
    write_summary_tsv(&mut w, &summaries)?;
    w.flush().context("writing summary")?;
    if let Some(rows) = comparison {
        let mut w = create(&a.out.join("sensitivity.tsv"))?;
        writeln!(
            w,
            "set\tsetting\tparameter\ttrue\treference_true\tmedian\treference_median"
        )
        .context("writing")?;
        for r in rows {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.set, r.setting, r.parameter, r.true_value, r.reference_true_value, r.median, r.reference_median
            )
            .context("writing sensitivity table")?;
        }
        w.flush().context("writing sensitivity table")?;
    }
    RunManifest::new("simstudy", Some(a.optimizer.seed), a)?.write(&a.out)?;

    let failures = records.iter().filter(|r| r.estimates.is_err()).count();
    println!(
        "{} fits ({failures} failed); results in {}",
        records.len(),
        a.out.display()
    );
    Ok(())
}
