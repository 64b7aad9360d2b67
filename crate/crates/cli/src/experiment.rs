//! Experiment pipelines: initialize or load networks, optionally train,
//! sample pairs, walk them and aggregate.

use rand::Rng;
use rand_distr::StandardNormal;
use relubridge::data::{load_cache, load_cifar10, load_idx, sample_pairs, Dataset};
use relubridge::network::{he_init, normalize_output, LayerGraph};
use relubridge::pathwalk::{walk_path_with, LinearPath, PathProfile, WalkOptions};
use relubridge::rng::{self, derive_seed, domain};
use relubridge::stats::{
    self, bridge_simulate, deflection_midpoint, gap_variance_theory, margin,
    midpoint_deviation_product_2layer, midpoint_deviation_theory_2layer, node_count_check,
    pair_fluctuation, pair_margin, profile_gap_sigma, rms, GaussianIncrements,
};
use relubridge::train::{train, TrainLog};
use relubridge::Execution;
use sha2::{Digest, Sha256};

use crate::checkpoint::load_checkpoint;
use crate::config::{DataSource, ExperimentConfig, ExperimentKind};
use crate::report::{ExperimentReport, ReportRow, SummaryRow};
use crate::CliError;

/// Everything measured on one pair.
#[derive(Debug, Clone)]
pub struct PairResult {
    pub pair_id: usize,
    pub seed: u64,
    pub k: usize,
    pub sigma_hat: Option<f64>,
    pub gap_dev_mid: Option<f64>,
    /// Midpoint deflection per output component (`None` when `K = 0`).
    pub deflection: Vec<Option<f64>>,
    pub pm: Option<f64>,
    pub pf: f64,
    /// Gaps of all components, pooled.
    pub gaps: Vec<f64>,
}

/// Walk one pair and compute every per-pair statistic. Margins need labels.
pub fn analyze_pair(
    net: &LayerGraph,
    x0: &[f64],
    x1: &[f64],
    labels: Option<(usize, usize)>,
    opts: &WalkOptions,
) -> Result<(PathProfile, PairResult), relubridge::Error> {
    let path = LinearPath::new(x0, x1)?;
    let prof = walk_path_with(net, &path, opts)?;
    let k = prof.node_count();
    let mut gaps = Vec::new();
    let mut deflection = Vec::with_capacity(prof.num_components());
    for j in 0..prof.num_components() {
        gaps.extend(relubridge::pathwalk::gradient_gaps(&prof, j)?);
        deflection.push(deflection_midpoint(&prof, j)?);
    }
    let sigma_hat = profile_gap_sigma(&prof)?.map(|g| g.sigma);
    let gap_dev_mid = sigma_hat.map(|s| {
        let ks = k / 2;
        s * ((ks * (k - ks)) as f64 / k as f64).sqrt()
    });
    let [f0, f1] = prof.endpoint_outputs();
    let s = prof.norm_scale();
    let fmid = net.forward(&path.point(0.5))?;
    let scaled = |v: &[f64]| v.iter().map(|x| x / s).collect::<Vec<_>>();
    let pf = pair_fluctuation(
        &scaled(f0.values()),
        &scaled(f1.values()),
        &scaled(fmid.values()),
    )?;
    let pm = match labels {
        Some((y0, y1)) => Some(pair_margin(
            margin(&normalize_output(f0)?, y0)?,
            margin(&normalize_output(f1)?, y1)?,
        )),
        None => None,
    };
    let res = PairResult {
        pair_id: 0,
        seed: 0,
        k,
        sigma_hat,
        gap_dev_mid,
        deflection,
        pm,
        pf,
        gaps,
    };
    Ok((prof, res))
}

fn read_source(
    cfg: &ExperimentConfig,
    data: &std::path::Path,
    labels: Option<&std::path::Path>,
) -> Result<Dataset, CliError> {
    let ds = match cfg.data {
        DataSource::Gaussian => unreachable!("no dataset for gaussian endpoints"),
        DataSource::Mnist => load_idx(cfg.resolve(data), cfg.resolve(labels.expect("validated")))?,
        DataSource::Cifar10 => load_cifar10(cfg.resolve(data))?,
        DataSource::Cache => load_cache(cfg.resolve(data))?,
    };
    Ok(match cfg.data_limit {
        Some(n) => ds.head(n),
        None => ds,
    })
}

/// Training dataset, or `None` for fresh Gaussian endpoints.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Option<Dataset>, CliError> {
    match (&cfg.data, &cfg.data_path) {
        (DataSource::Gaussian, _) | (_, None) => Ok(None),
        (_, Some(p)) => read_source(cfg, p, cfg.labels_path.as_deref()).map(Some),
    }
}

/// Dataset that pairs are drawn from: `pair_data_path` if set, else `train`.
pub fn pair_dataset(
    cfg: &ExperimentConfig,
    train: Option<Dataset>,
) -> Result<Option<Dataset>, CliError> {
    match &cfg.pair_data_path {
        Some(p) => read_source(cfg, p, cfg.pair_labels_path.as_deref()).map(Some),
        None => Ok(train),
    }
}

/// Seed of network `i`.
pub fn net_seed(master: u64, i: usize) -> u64 {
    derive_seed(master, domain::INIT, i as u64)
}

/// Network `i`: the configured checkpoint, or a fresh He initialization.
pub fn build_network(cfg: &ExperimentConfig, i: usize) -> Result<LayerGraph, CliError> {
    if let Some(p) = &cfg.checkpoint {
        return Ok(load_checkpoint(cfg.resolve(p))?);
    }
    let arch = cfg
        .architecture()?
        .ok_or_else(|| CliError::Config("missing `arch`".into()))?;
    Ok(he_init(&arch, net_seed(cfg.seed, i))?)
}

type Pair = (Vec<f64>, Vec<f64>, Option<(usize, usize)>);

/// The pairs analysed on network `i`.
pub fn pairs_for(
    cfg: &ExperimentConfig,
    data: Option<&Dataset>,
    net: &LayerGraph,
    i: usize,
) -> Result<Vec<Pair>, CliError> {
    match data {
        None => {
            let d = net.input_dim();
            Ok((0..cfg.pairs)
                .map(|p| {
                    let mut r = rng::stream(cfg.seed, domain::SYNTH, (i * cfg.pairs + p) as u64);
                    let mut draw = || {
                        (0..d)
                            .map(|_| r.sample(StandardNormal))
                            .collect::<Vec<f64>>()
                    };
                    let x0 = draw();
                    let x1 = draw();
                    (x0, x1, None)
                })
                .collect())
        }
        Some(ds) => {
            if ds.dim() != net.input_dim() {
                return Err(CliError::Config(format!(
                    "network expects {} inputs, dataset has {}",
                    net.input_dim(),
                    ds.dim()
                )));
            }
            let labelled = ds.classes() >= 2 && ds.classes() <= net.output_dim();
            let pairs = sample_pairs(
                ds,
                cfg.pairs,
                derive_seed(cfg.seed, domain::PAIRS, i as u64),
                cfg.pair_mode()?,
            )?;
            Ok(pairs
                .into_iter()
                .map(|p| {
                    let labels = labelled.then(|| (ds.labels()[p.i], ds.labels()[p.j]));
                    (p.x_i, p.x_j, labels)
                })
                .collect())
        }
    }
}

fn walk_options(cfg: &ExperimentConfig) -> Result<WalkOptions, CliError> {
    Ok(WalkOptions {
        max_nodes: cfg.max_nodes,
        scale: cfg.output_scale()?,
        ..WalkOptions::default()
    })
}

/// Analyse `pairs` on `net`, in pair order.
pub fn analyze_pairs(
    net: &LayerGraph,
    pairs: &[Pair],
    opts: &WalkOptions,
    first_id: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<PairResult>, CliError> {
    let results = exec.try_map(pairs.len(), |p| {
        let (x0, x1, labels) = &pairs[p];
        analyze_pair(net, x0, x1, *labels, opts).map(|(_, mut r)| {
            r.pair_id = first_id + p;
            r.seed = seed;
            r
        })
    })?;
    Ok(results)
}

fn count_rows(results: &[PairResult]) -> Vec<ReportRow> {
    results
        .iter()
        .map(|r| ReportRow {
            pair_id: r.pair_id,
            component: -1,
            k: r.k,
            sigma_hat: None,
            gap_dev_mid: None,
            deflection_mid: None,
            pm: None,
            pf: None,
            seed: r.seed,
        })
        .collect()
}

fn component_rows(results: &[PairResult]) -> Vec<ReportRow> {
    results
        .iter()
        .flat_map(|r| {
            r.deflection
                .iter()
                .enumerate()
                .map(move |(j, d)| ReportRow {
                    pair_id: r.pair_id,
                    component: j as i64,
                    k: r.k,
                    sigma_hat: r.sigma_hat,
                    gap_dev_mid: r.gap_dev_mid,
                    deflection_mid: *d,
                    pm: r.pm,
                    pf: Some(r.pf),
                    seed: r.seed,
                })
        })
        .collect()
}

/// Mean/std of every numeric report column over rows where it is present.
pub fn column_summaries(rows: &[ReportRow]) -> Vec<SummaryRow> {
    let col = |name: &str, f: &dyn Fn(&ReportRow) -> Option<f64>| {
        let v: Vec<f64> = rows.iter().filter_map(f).collect();
        (!v.is_empty()).then(|| SummaryRow::of(name, 0.0, &v))
    };
    [
        col("K", &|r| Some(r.k as f64)),
        col("sigma_hat", &|r| r.sigma_hat),
        col("gap_dev_mid", &|r| r.gap_dev_mid),
        col("deflection_mid", &|r| r.deflection_mid),
        col("pm", &|r| r.pm),
        col("pf", &|r| r.pf),
    ]
    .into_iter()
    .flatten()
    .collect()
}

/// RMS aggregates over pairs.
pub fn pair_aggregates(results: &[PairResult], x: f64) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    let dev: Vec<f64> = results.iter().filter_map(|r| r.gap_dev_mid).collect();
    if let Some(v) = rms(&dev) {
        out.push(SummaryRow::new("gap_dev_mid_rms", x, v, 0.0, dev.len()));
    }
    let defl: Vec<f64> = results
        .iter()
        .flat_map(|r| r.deflection.iter().flatten().copied())
        .collect();
    if let Some(v) = rms(&defl) {
        out.push(SummaryRow::new("deflection_mid_rms", x, v, 0.0, defl.len()));
    }
    let gaps: Vec<f64> = results
        .iter()
        .flat_map(|r| r.gaps.iter().copied())
        .collect();
    if let Ok(g) = stats::empirical_gap_sigma(&gaps) {
        out.push(SummaryRow::new(
            "gap_variance",
            x,
            g.second_moment,
            0.0,
            g.count,
        ));
    }
    let ks: Vec<f64> = results.iter().map(|r| r.k as f64).collect();
    out.push(SummaryRow::of("K_mean", x, &ks));
    let pm_pf: Vec<(f64, f64)> = results
        .iter()
        .filter_map(|r| r.pm.map(|pm| (pm, r.pf)))
        .collect();
    if !pm_pf.is_empty() {
        let pm: Vec<f64> = pm_pf.iter().map(|p| p.0).collect();
        let pf: Vec<f64> = pm_pf.iter().map(|p| p.1).collect();
        let wins = pm_pf.iter().filter(|(a, b)| a > b).count();
        out.push(SummaryRow::of("pm_mean", x, &pm));
        out.push(SummaryRow::of("pf_mean", x, &pf));
        out.push(SummaryRow::new(
            "pm_gt_pf_frac",
            x,
            wins as f64 / pm_pf.len() as f64,
            0.0,
            pm_pf.len(),
        ));
    }
    out
}

fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn metadata(cfg: &ExperimentConfig) -> Vec<(String, String)> {
    vec![
        ("kind".into(), cfg.kind.name().into()),
        ("seed".into(), cfg.seed.to_string()),
        ("config_sha256".into(), sha256_hex(&cfg.source_text)),
        ("version".into(), env!("CARGO_PKG_VERSION").into()),
    ]
}

/// Result of [`run_experiment`]: the report plus any trained state.
#[derive(Debug, Default)]
pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub trained: Option<(LayerGraph, TrainLog)>,
    /// Per-pair results of the final analysed network.
    pub pairs: Vec<PairResult>,
}

pub fn run_experiment(
    cfg: &ExperimentConfig,
    exec: Execution,
) -> Result<ExperimentOutput, CliError> {
    cfg.validate()?;
    let mut out = match cfg.kind {
        ExperimentKind::BridgeSim => run_bridge(cfg, exec)?,
        ExperimentKind::NodeCount => run_node_count(cfg, exec)?,
        ExperimentKind::GapDeviation | ExperimentKind::Deflection => run_gap(cfg, exec)?,
        ExperimentKind::TrainSweep | ExperimentKind::MarginFluctuation => run_trained(cfg, exec)?,
    };
    let mut meta = metadata(cfg);
    meta.append(&mut out.report.meta);
    out.report.meta = meta;
    Ok(out)
}

fn run_bridge(cfg: &ExperimentConfig, exec: Execution) -> Result<ExperimentOutput, CliError> {
    let k = cfg.bridge_k.expect("validated");
    let trials = cfg.bridge_trials.expect("validated");
    let sigma = cfg.bridge_sigma.unwrap_or(1.0);
    let st = bridge_simulate(
        &GaussianIncrements { sigma },
        k,
        (0.0, 0.0),
        trials,
        cfg.seed,
        exec,
    )?;
    let mut report = ExperimentReport::default();
    for i in 0..=k {
        report.summary.push(SummaryRow::new(
            "bridge_var_empirical",
            i as f64,
            st.second_moment[i],
            st.second_moment_se[i],
            trials,
        ));
    }
    for i in 0..=k {
        let t = st.deviation_profile[i];
        report.summary.push(SummaryRow::new(
            "bridge_var_theory",
            i as f64,
            t * t,
            0.0,
            trials,
        ));
    }
    report.meta.push((
        "bridge_max_endpoint_abs".into(),
        st.max_endpoint_abs.to_string(),
    ));
    Ok(ExperimentOutput {
        report,
        ..Default::default()
    })
}

/// Networks and their pairs, one entry per init.
fn nets_and_pairs(
    cfg: &ExperimentConfig,
    data: Option<&Dataset>,
    exec: Execution,
) -> Result<Vec<(LayerGraph, Vec<Pair>)>, CliError> {
    exec.try_map(cfg.inits, |i| {
        let net = build_network(cfg, i)?;
        let pairs = pairs_for(cfg, data, &net, i)?;
        Ok((net, pairs))
    })
}

fn analyze_all(
    cfg: &ExperimentConfig,
    nets: &[(LayerGraph, Vec<Pair>)],
    exec: Execution,
) -> Result<Vec<PairResult>, CliError> {
    let opts = walk_options(cfg)?;
    let jobs: Vec<(usize, usize)> = (0..nets.len())
        .flat_map(|i| (0..nets[i].1.len()).map(move |p| (i, p)))
        .collect();
    let results = exec.try_map(jobs.len(), |job| -> Result<PairResult, CliError> {
        let (i, p) = jobs[job];
        let (net, pairs) = &nets[i];
        let (x0, x1, labels) = &pairs[p];
        let (_, mut r) = analyze_pair(net, x0, x1, *labels, &opts)?;
        r.pair_id = job;
        r.seed = if cfg.checkpoint.is_some() {
            cfg.seed
        } else {
            net_seed(cfg.seed, i)
        };
        Ok(r)
    })?;
    Ok(results)
}

fn run_node_count(cfg: &ExperimentConfig, exec: Execution) -> Result<ExperimentOutput, CliError> {
    let data = pair_dataset(cfg, load_dataset(cfg)?)?;
    let nets = nets_and_pairs(cfg, data.as_ref(), exec)?;
    let results = analyze_all(cfg, &nets, exec)?;
    let mut report = ExperimentReport {
        rows: count_rows(&results),
        ..Default::default()
    };
    report.summary = column_summaries(&report.rows);
    let counts: Vec<usize> = results.iter().map(|r| r.k).collect();
    let max_k = counts.iter().copied().max().unwrap_or(0);
    for k in 0..=max_k {
        let hits = counts.iter().filter(|&&c| c == k).count();
        report.summary.push(SummaryRow::new(
            "K_freq",
            k as f64,
            hits as f64 / counts.len() as f64,
            0.0,
            counts.len(),
        ));
    }
    let net = &nets[0].0;
    if net.num_sites() == 1 && counts.len() >= 2 {
        let m = net.widths()[0];
        let check = node_count_check(&counts, m)?;
        let binom = statrs::distribution::Binomial::new(0.5, m as u64).expect("valid binomial");
        for k in 0..=m {
            use statrs::distribution::Discrete;
            report.summary.push(SummaryRow::new(
                "K_binomial",
                k as f64,
                binom.pmf(k as u64),
                0.0,
                counts.len(),
            ));
        }
        report.meta.extend([
            ("binomial_m".into(), m.to_string()),
            ("k_mean".into(), check.mean.to_string()),
            ("k_mean_se".into(), check.mean_se.to_string()),
            ("k_variance".into(), check.variance.to_string()),
            ("k_variance_se".into(), check.variance_se.to_string()),
            ("z_mean".into(), check.z_mean.to_string()),
            ("z_variance".into(), check.z_variance.to_string()),
            ("chi_square".into(), check.chi_square.statistic.to_string()),
            ("chi_square_dof".into(), check.chi_square.dof.to_string()),
            ("chi_square_p".into(), check.chi_square.p_value.to_string()),
        ]);
    }
    Ok(ExperimentOutput {
        report,
        trained: None,
        pairs: results,
    })
}

fn theory_rows(net: &LayerGraph, x: f64) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    if net.num_sites() == 1 {
        let (m, d) = (net.widths()[0], net.input_dim());
        if let Ok(v) = gap_variance_theory(1, m, d) {
            out.push(SummaryRow::new("gap_variance_theory", x, v, 0.0, 1));
        }
        out.push(SummaryRow::new(
            "midpoint_theory",
            x,
            midpoint_deviation_theory_2layer(m, d),
            0.0,
            1,
        ));
        out.push(SummaryRow::new(
            "midpoint_product",
            x,
            midpoint_deviation_product_2layer(m, d),
            0.0,
            1,
        ));
    }
    out
}

fn run_gap(cfg: &ExperimentConfig, exec: Execution) -> Result<ExperimentOutput, CliError> {
    let data = load_dataset(cfg)?;
    let pair_data = match &cfg.pair_data_path {
        Some(_) => pair_dataset(cfg, None)?,
        None => data.clone(),
    };
    let mut nets = nets_and_pairs(cfg, pair_data.as_ref(), exec)?;
    let mut trained = None;
    if cfg.kind == ExperimentKind::Deflection && cfg.epochs.is_some() {
        let ds = data
            .as_ref()
            .ok_or_else(|| CliError::Config("training needs a labelled dataset".into()))?;
        let tc = cfg.train_config();
        for (i, (net, _)) in nets.iter_mut().enumerate() {
            let (t, log) = train(net.clone(), ds, &tc)?;
            *net = t;
            if i == 0 {
                trained = Some((net.clone(), log));
            }
        }
    }
    let results = analyze_all(cfg, &nets, exec)?;
    let mut report = ExperimentReport {
        rows: component_rows(&results),
        ..Default::default()
    };
    report.summary = column_summaries(&report.rows);
    report.summary.extend(pair_aggregates(&results, 0.0));
    report.summary.extend(theory_rows(&nets[0].0, 0.0));
    Ok(ExperimentOutput {
        report,
        trained,
        pairs: results,
    })
}

fn run_trained(cfg: &ExperimentConfig, exec: Execution) -> Result<ExperimentOutput, CliError> {
    if cfg.inits != 1 {
        return Err(CliError::Config(format!(
            "{} trains one network; set inits = 1",
            cfg.kind.name()
        )));
    }
    let data = load_dataset(cfg)?
        .ok_or_else(|| CliError::Config("training needs a labelled dataset".into()))?;
    let net = build_network(cfg, 0)?;
    let pair_data = pair_dataset(cfg, None)?;
    let pairs = pairs_for(cfg, Some(pair_data.as_ref().unwrap_or(&data)), &net, 0)?;
    let (net, log) = train(net, &data, &cfg.train_config())?;
    let opts = walk_options(cfg)?;
    let seed = if cfg.checkpoint.is_some() {
        cfg.seed
    } else {
        net_seed(cfg.seed, 0)
    };
    let mut report = ExperimentReport::default();
    let mut final_results = Vec::new();
    let snapshots: Vec<&(usize, LayerGraph)> = match cfg.kind {
        ExperimentKind::TrainSweep => log.checkpoints.iter().collect(),
        _ => log.checkpoints.iter().rev().take(1).collect(),
    };
    let mut per_step = Vec::new();
    for (step, snap) in snapshots {
        let results = analyze_pairs(snap, &pairs, &opts, 0, seed, exec)?;
        per_step.extend(pair_aggregates(&results, *step as f64));
        final_results = results;
    }
    report.rows = component_rows(&final_results);
    report.summary = column_summaries(&report.rows);
    if cfg.kind == ExperimentKind::TrainSweep {
        // Group the per-step aggregates by series so each series is contiguous.
        let mut names: Vec<String> = Vec::new();
        for r in &per_step {
            if !names.contains(&r.series) {
                names.push(r.series.clone());
            }
        }
        for n in names {
            report.summary.extend(
                per_step
                    .iter()
                    .filter(|r| r.series == n)
                    .map(|r| SummaryRow {
                        series: format!("{}_by_step", r.series),
                        ..r.clone()
                    }),
            );
        }
        for e in &log.evals {
            report.summary.push(SummaryRow::new(
                "train_loss",
                e.step as f64,
                e.loss,
                0.0,
                data.len(),
            ));
        }
        for e in &log.evals {
            report.summary.push(SummaryRow::new(
                "train_accuracy",
                e.step as f64,
                e.accuracy,
                0.0,
                data.len(),
            ));
        }
    } else {
        report.summary.extend(per_step);
    }
    if let Some(e) = log.evals.last() {
        report
            .meta
            .push(("final_train_accuracy".into(), e.accuracy.to_string()));
        report.meta.push(("final_step".into(), e.step.to_string()));
    }
    Ok(ExperimentOutput {
        report,
        trained: Some((net, log)),
        pairs: final_results,
    })
}
