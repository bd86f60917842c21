//! Command implementations.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use log::{info, warn};
use msm_core::data::PathOptions;
use msm_core::hazard::{Block, ModelData};
use msm_core::keyactions::{extract_key_actions, ExtractOptions};
use msm_core::posterior::{self, BoxStats, Estimate};
use msm_core::sampler::run_chain;
use msm_core::simgen::{self, SimDesign};
use msm_core::{ChainStore, Dataset, StateIndex};
use serde_json::json;

use crate::cli::{DataArgs, ExtractArgs, FitArgs, SimulateArgs, SummarizeArgs};
use crate::config::{FitConfig, RunManifest};
use crate::error::{CliError, Result};
use crate::io::{self, num, opt_num};
use crate::svg;

/// A dataset ready for one analysis, with its output directory.
struct Part {
    label: Option<String>,
    dataset: Dataset,
    out: PathBuf,
}

fn dir_name(value: &str) -> String {
    let s: String = value
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect();
    if s.is_empty() || s == "." || s == ".." {
        "_".into()
    } else {
        s
    }
}

fn load_parts(d: &DataArgs, use_covariates: bool, out: &Path) -> Result<Vec<Part>> {
    let events = io::read_events(&d.events).map_err(|e| CliError::input(format!("--events {e}")))?;
    let labels = io::read_labels(&d.labels, d.correct_score).map_err(|e| CliError::input(format!("--labels {e}")))?;
    let cov = d
        .covariates
        .as_deref()
        .map(|p| io::read_covariates(p, d.partition_by.as_deref()))
        .transpose()
        .map_err(|e| CliError::input(format!("--covariates {e}")))?;
    let table = if use_covariates {
        cov.as_ref().map(|c| &c.table)
    } else {
        None
    };
    let (ds, summary) = events.attach(table, &labels).map_err(CliError::input)?;
    if summary.dropped() > 0 {
        warn!(
            "dropped {} respondent(s): {} without covariates, {} without labels",
            summary.dropped(),
            summary.missing_covariates,
            summary.missing_labels
        );
    }
    let Some(column) = d.partition_by.as_deref() else {
        return Ok(vec![Part {
            label: None,
            dataset: ds,
            out: out.to_path_buf(),
        }]);
    };
    let partition = &cov.as_ref().expect("clap requires --covariates").partition;
    let values: BTreeSet<&String> = ds.respondents.iter().filter_map(|r| partition.get(&r.id)).collect();
    let unassigned = ds.respondents.iter().filter(|r| !partition.contains_key(&r.id)).count();
    if unassigned > 0 {
        warn!("{unassigned} respondent(s) have no {column} value and are skipped");
    }
    values
        .into_iter()
        .map(|v| {
            let dataset = ds
                .filter(|r| partition.get(&r.id) == Some(v))
                .map_err(|e| CliError::input(format!("partition {column}={v}: {e}")))?;
            Ok(Part {
                label: Some(format!("{column}={v}")),
                dataset,
                out: out.join(dir_name(v)),
            })
        })
        .collect()
}

/// Runs `f` over `items` with at most `jobs` in flight; results keep input order.
fn run_limited<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let mut out = Vec::with_capacity(items.len());
    for chunk in items.chunks(jobs.max(1)) {
        if chunk.len() == 1 {
            out.push(f(&chunk[0]));
            continue;
        }
        std::thread::scope(|s| {
            let handles: Vec<_> = chunk.iter().map(|it| s.spawn(|| f(it))).collect();
            for h in handles {
                out.push(h.join().expect("worker panicked"));
            }
        });
    }
    out
}

fn first_error(results: Vec<Result<()>>) -> Result<()> {
    results.into_iter().collect::<Result<Vec<()>>>().map(|_| ())
}

fn data_inputs(m: &mut RunManifest, d: &DataArgs) {
    m.input("events", Some(&d.events));
    m.input("labels", Some(&d.labels));
    m.input("covariates", d.covariates.as_deref());
}

fn data_note(part: &Part) -> String {
    match &part.label {
        Some(l) => format!("data: partition {l}, {} respondents", part.dataset.n_respondents()),
        None => format!("data: pooled input, {} respondents", part.dataset.n_respondents()),
    }
}

pub fn extract_keys(args: &ExtractArgs) -> Result<()> {
    let parts = load_parts(&args.data, false, &args.out)?;
    let opts = ExtractOptions {
        isf_denominator: args.isf_denominator.into(),
        override_k: args.k,
    };
    first_error(run_limited(&parts, args.data.jobs, |part| {
        extract_part(args, part, opts)
    }))
}

fn extract_part(args: &ExtractArgs, part: &Part, opts: ExtractOptions) -> Result<()> {
    let ds = &part.dataset;
    let report = extract_key_actions(ds, opts)?;
    let sel = &report.selection;
    let mut order: Vec<StateIndex> = sel.ranking.clone();
    order.extend((0..ds.n_states()).map(StateIndex).filter(|s| !sel.ranking.contains(s)));
    let rows: Vec<Vec<String>> = order
        .iter()
        .map(|&s| {
            let a = &report.table.actions[s.get()];
            vec![
                ds.catalog.name(s).to_string(),
                num(a.score),
                num(a.n),
                num(a.m),
                a.ratio_pass.to_string(),
                report.rank_of(s).map(|r| r.to_string()).unwrap_or_default(),
                report.selected().contains(&s).to_string(),
                num(report.mean_frequency[s.get()]),
                opt_num(report.mean_onset[s.get()]),
            ]
        })
        .collect();
    let isf = match opts.isf_denominator {
        msm_core::keyactions::IsfDenominator::Sequences => "sequences",
        msm_core::keyactions::IsfDenominator::States => "states",
    };
    let comments = vec![
        "log: natural".to_string(),
        format!("isf_denominator: {isf}"),
        data_note(part),
        format!(
            "elbow_rank: {}",
            sel.elbow.rank.map(|r| r.to_string()).unwrap_or_else(|| "NA".into())
        ),
        match opts.override_k {
            Some(k) => format!("selected: {k} (fixed by --k)"),
            None => format!("selected: {}", sel.selected.len()),
        },
    ];
    let header = [
        "action_id",
        "chi2_score",
        "n_i",
        "m_i",
        "ratio_pass",
        "rank",
        "selected",
        "mean_frequency",
        "mean_onset_min",
    ];
    io::write_table(&part.out.join("report.csv"), &comments, &header, &rows)?;
    let scores: Vec<f64> = sel
        .ranking
        .iter()
        .map(|s| report.table.actions[s.get()].score)
        .collect();
    let names: Vec<String> = sel.ranking.iter().map(|&s| ds.catalog.name(s).to_string()).collect();
    io::write_string(
        &part.out.join("elbow.svg"),
        &svg::elbow_plot(&scores, &names, sel.elbow.rank, sel.selected.len()),
    )?;
    info!(
        "{}: selected {:?}",
        part.label.as_deref().unwrap_or("pooled"),
        report
            .selected()
            .iter()
            .map(|&s| ds.catalog.name(s))
            .collect::<Vec<_>>()
    );
    let mut m = RunManifest::new("extract-keys", &part.out);
    data_inputs(&mut m, &args.data);
    m.config = json!({
        "isf_denominator": isf,
        "k": args.k,
        "correct_score": args.data.correct_score,
        "partition": part.label,
        "respondents": ds.n_respondents(),
    });
    m.outputs = vec!["report.csv".into(), "elbow.svg".into()];
    m.write(&part.out)
}

pub fn fit(args: &FitArgs) -> Result<()> {
    if args.chains == 0 {
        return Err(CliError::input("--chains must be at least 1"));
    }
    let config = FitConfig::load(args.config.as_deref()).map_err(|e| CliError::input(format!("--config {e}")))?;
    let mcmc = config.resolved(args.anchor, args.seed);
    mcmc.validate().map_err(CliError::input)?;
    config.priors.validate().map_err(CliError::input)?;
    let keys = io::read_keys(&args.keys).map_err(|e| CliError::input(format!("--keys {e}")))?;
    let parts = load_parts(&args.data, true, &args.out)?;
    first_error(run_limited(&parts, args.data.jobs, |part| {
        fit_part(args, &config, &mcmc, &keys, part)
    }))
}

fn fit_part(
    args: &FitArgs,
    config: &FitConfig,
    mcmc: &msm_core::McmcConfig,
    keys: &[String],
    part: &Part,
) -> Result<()> {
    let mut ds = part.dataset.clone();
    if config.standardize_covariates {
        ds.standardize_covariates();
    }
    let key_states = keys
        .iter()
        .map(|k| {
            ds.catalog
                .get(k)
                .ok_or_else(|| CliError::input(format!("--keys: action `{k}` does not occur in the event log")))
        })
        .collect::<Result<Vec<_>>>()?;
    let path_options = PathOptions {
        include_initial_sojourn: config.include_initial_sojourn,
    };
    let model = ModelData::new(&ds, &key_states, path_options)?;
    let seeds: Vec<u64> = (0..args.chains as u64).map(|j| mcmc.seed.wrapping_add(j)).collect();

    let mut m = RunManifest::new("fit", &part.out);
    data_inputs(&mut m, &args.data);
    m.input("keys", Some(&args.keys));
    m.config_path = args.config.as_ref().map(|p| p.display().to_string());
    m.seed = Some(mcmc.seed);
    m.config = json!({
        "priors": config.priors,
        "mcmc": mcmc,
        "retained_draws": mcmc.retained(),
        "chains": args.chains,
        "chain_seeds": seeds,
        "include_initial_sojourn": config.include_initial_sojourn,
        "standardize_covariates": config.standardize_covariates,
        "key_actions": keys,
        "partition": part.label,
        "respondents": ds.n_respondents(),
        "dry_run": args.dry_run,
    });
    if args.dry_run {
        return m.write(&part.out);
    }

    let results: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                let model = &model;
                let priors = &config.priors;
                s.spawn(move || {
                    let cfg = msm_core::McmcConfig { seed, ..mcmc.clone() };
                    run_chain(model, priors, &cfg, None)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("chain thread panicked"))
            .collect()
    });
    let mut chains = Vec::with_capacity(results.len());
    for r in results {
        chains.push(r.map_err(|e| CliError::from(msm_core::Error::from(e)))?);
    }
    for (j, c) in chains.iter().enumerate() {
        for w in &c.warnings {
            warn!("chain {} (seed {}): {w}", j + 1, c.config.seed);
        }
        let name = format!("chain_{}.csv", j + 1);
        io::write_chain(&part.out.join(&name), c)?;
        m.outputs.push(name);
    }
    if chains.len() > 1 {
        write_rhat(&part.out.join("rhat.csv"), &chains)?;
        m.outputs.push("rhat.csv".into());
    }
    m.write(&part.out)
}

fn write_rhat(path: &Path, chains: &[ChainStore]) -> Result<()> {
    let r = posterior::rhat(chains).map_err(CliError::input)?;
    let rows: Vec<Vec<String>> = chains[0]
        .param_names
        .iter()
        .zip(&r)
        .map(|(n, v)| vec![n.clone(), num(*v)])
        .collect();
    io::write_table(path, &[], &["parameter", "rhat"], &rows)
}

/// `kappa0[wb]` -> `wb`.
fn label_of(name: &str) -> &str {
    name.split_once('[')
        .and_then(|(_, rest)| rest.strip_suffix(']'))
        .unwrap_or(name)
}

fn family(b: Block) -> (&'static str, Option<usize>) {
    match b {
        Block::Kappa0 => ("kappa", Some(0)),
        Block::Kappa1 => ("kappa", Some(1)),
        Block::Gamma0 => ("gamma", Some(0)),
        Block::Gamma1 => ("gamma", Some(1)),
        other => (other.name(), None),
    }
}

fn estimate_cells(e: &Estimate) -> [String; 5] {
    [
        num(e.mean),
        num(e.sd),
        num(e.hpd.low),
        num(e.hpd.high),
        e.significance.marker().to_string(),
    ]
}

fn box_cells(b: &BoxStats) -> [String; 9] {
    [
        b.min,
        b.q1,
        b.median,
        b.q3,
        b.max,
        b.lower_fence,
        b.upper_fence,
        b.whisker_low,
        b.whisker_high,
    ]
    .map(num)
}

const BOX_HEADER: [&str; 9] = [
    "min",
    "q1",
    "median",
    "q3",
    "max",
    "lower_fence",
    "upper_fence",
    "whisker_low",
    "whisker_high",
];

pub fn summarize(args: &SummarizeArgs) -> Result<()> {
    let chains = args
        .chains
        .iter()
        .map(|p| io::read_chain(p))
        .collect::<Result<Vec<_>>>()?;
    let merged =
        ChainStore::merge(&chains).ok_or_else(|| CliError::input("chain files have different parameter layouts"))?;
    let summary = posterior::summarize(&merged, args.mass).map_err(CliError::input)?;
    for w in &summary.warnings {
        info!("{w}");
    }
    let d = merged.dims;
    let action_names: Vec<&str> = (0..d.states)
        .map(|m| label_of(&merged.param_names[Block::Kappa0.offset(d) + m]))
        .collect();
    let key_names: BTreeSet<String> = match &args.keys {
        Some(p) => io::read_keys(p)
            .map_err(|e| CliError::input(format!("--keys {e}")))?
            .into_iter()
            .collect(),
        None => merged.key_states.iter().map(|&k| action_names[k].to_string()).collect(),
    };
    let is_key = |m: usize| key_names.contains(action_names[m]);

    let mut rows = Vec::with_capacity(summary.params.len());
    for p in &summary.params {
        let (fam, group) = family(p.param.block);
        let group = match (p.param.block, group) {
            (_, Some(g)) => g.to_string(),
            (Block::Tau, None) => merged.respondent_groups[p.param.index].to_string(),
            _ => "all".into(),
        };
        let key = match p.param.block {
            Block::Kappa0 | Block::Kappa1 | Block::Gamma0 | Block::Gamma1 => is_key(p.param.index).to_string(),
            Block::Beta1 | Block::Beta2 | Block::Beta3 => "true".into(),
            _ => "false".into(),
        };
        let mut row = vec![fam.to_string(), label_of(&p.name).to_string(), group, key];
        row.extend(estimate_cells(&p.estimate));
        rows.push(row);
    }
    let out = &args.out;
    let mut written = Vec::new();
    let comments = vec![
        format!("hpd_mass: {}", args.mass),
        format!("draws: {} from {} chain(s)", merged.n_rows, chains.len()),
        "group: 0 = incorrect, 1 = correct".to_string(),
    ];
    io::write_table(
        &out.join("summary.csv"),
        &comments,
        &[
            "parameter",
            "label",
            "group",
            "key_action",
            "mean",
            "sd",
            "hpd_low",
            "hpd_high",
            "significance",
        ],
        &rows,
    )?;
    written.push("summary.csv");

    let mut diff_header = vec![
        "action_id",
        "key_action",
        "mean",
        "sd",
        "hpd_low",
        "hpd_high",
        "significance",
    ];
    diff_header.extend(BOX_HEADER);
    for (name, diffs, title) in [
        (
            "diff_kappa",
            &summary.kappa_diff,
            "kappa (correct - incorrect), departing action",
        ),
        (
            "diff_gamma",
            &summary.gamma_diff,
            "gamma (correct - incorrect), arriving action",
        ),
    ] {
        let rows: Vec<Vec<String>> = diffs
            .iter()
            .map(|s| {
                let mut r = vec![action_names[s.state].to_string(), is_key(s.state).to_string()];
                r.extend(estimate_cells(&s.estimate));
                r.extend(box_cells(&s.boxplot));
                r
            })
            .collect();
        io::write_table(&out.join(format!("{name}.csv")), &comments[..2], &diff_header, &rows)?;
        let items: Vec<(String, BoxStats, bool)> = diffs
            .iter()
            .map(|s| (action_names[s.state].to_string(), s.boxplot, is_key(s.state)))
            .collect();
        io::write_string(
            &out.join(format!("{name}.svg")),
            &svg::boxplot(title, "difference", &items),
        )?;
    }
    written.extend(["diff_kappa.csv", "diff_kappa.svg", "diff_gamma.csv", "diff_gamma.svg"]);

    let mut tau_header = vec!["group", "respondents", "mean_tau"];
    tau_header.extend(BOX_HEADER);
    tau_header.extend([
        "log_tau_mean",
        "log_tau_hpd_low",
        "log_tau_hpd_high",
        "log_tau_significance",
    ]);
    let mut tau_rows = Vec::new();
    let mut tau_items = Vec::new();
    for g in &summary.tau_groups {
        let mut r = vec![g.group.to_string(), g.respondents.to_string(), num(g.mean)];
        match &g.boxplot {
            Some(b) => {
                r.extend(box_cells(b));
                tau_items.push((
                    if g.group == 1 { "correct" } else { "incorrect" }.to_string(),
                    *b,
                    g.group == 1,
                ));
            }
            None => r.extend(std::iter::repeat("NA".to_string()).take(9)),
        }
        match &g.log_mean {
            Some(e) => r.extend([
                num(e.mean),
                num(e.hpd.low),
                num(e.hpd.high),
                e.significance.marker().into(),
            ]),
            None => r.extend(std::iter::repeat("NA".to_string()).take(4)),
        }
        tau_rows.push(r);
    }
    io::write_table(&out.join("tau_by_group.csv"), &comments, &tau_header, &tau_rows)?;
    io::write_string(
        &out.join("tau_by_group.svg"),
        &svg::boxplot("posterior mean tau by outcome group", "tau", &tau_items),
    )?;
    written.extend(["tau_by_group.csv", "tau_by_group.svg"]);

    if chains.len() > 1 {
        write_rhat(&out.join("rhat.csv"), &chains)?;
        written.push("rhat.csv");
    }
    if args.raw_draws {
        let diffs = posterior::group_differences(&merged);
        for (name, cols) in [
            ("draws_diff_kappa.csv", &diffs.kappa),
            ("draws_diff_gamma.csv", &diffs.gamma),
        ] {
            write_columns(&out.join(name), &action_names, cols)?;
            written.push(name);
        }
        let lt = posterior::log_tau_group_means(&merged);
        write_columns(&out.join("draws_log_tau_group.csv"), &["incorrect", "correct"], &lt)?;
        written.push("draws_log_tau_group.csv");
    }

    let mut m = RunManifest::new("summarize", out);
    for (j, p) in args.chains.iter().enumerate() {
        m.input(&format!("chain_{}", j + 1), Some(p));
    }
    m.input("keys", args.keys.as_deref());
    m.config = json!({
        "mass": args.mass,
        "raw_draws": args.raw_draws,
        "draws": merged.n_rows,
        "warnings": summary.warnings,
    });
    m.outputs = written.into_iter().map(String::from).collect();
    m.write(out)
}

fn write_columns(path: &Path, names: &[&str], cols: &[Vec<f64>]) -> Result<()> {
    let n = cols.iter().map(Vec::len).max().unwrap_or(0);
    let rows: Vec<Vec<String>> = (0..n)
        .map(|r| {
            cols.iter()
                .map(|c| c.get(r).map(|v| num(*v)).unwrap_or_else(|| "NA".into()))
                .collect()
        })
        .collect();
    io::write_table(path, &[], names, &rows)
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.design).map_err(|e| CliError::file(&args.design, e))?;
    let mut design: SimDesign = serde_json::from_str(&text).map_err(|e| CliError::file(&args.design, e))?;
    if let Some(s) = args.seed {
        design.seed = s;
    }
    let out = simgen::simulate(&design).map_err(CliError::input)?;
    io::write_dataset(&args.out, &out.dataset)?;
    let ds = &out.dataset;
    let names = msm_core::hazard::param_names(
        design.dims(),
        ds.catalog.actions(),
        &ds.respondents.iter().map(|r| r.id.clone()).collect::<Vec<_>>(),
        &ds.covariate_names,
        &out.key_states
            .iter()
            .map(|&k| ds.catalog.name(k).to_string())
            .collect::<Vec<_>>(),
    );
    let values = out.truth.to_flat();
    let parameters: Vec<_> = names
        .iter()
        .zip(&values)
        .map(|(n, v)| json!({"name": n, "value": v}))
        .collect();
    let onsets: BTreeMap<&str, &Vec<Option<f64>>> =
        ds.respondents.iter().map(|r| r.id.as_str()).zip(&out.onsets).collect();
    let truth = json!({
        "design": design,
        "key_actions": out.key_states.iter().map(|&k| ds.catalog.name(k)).collect::<Vec<_>>(),
        "parameters": parameters,
        "onsets": onsets,
    });
    let text = serde_json::to_string_pretty(&truth).map_err(CliError::runtime)?;
    io::write_string(&args.out.join("truth.json"), &(text + "\n"))?;
    let mut m = RunManifest::new("simulate", &args.out);
    m.input("design", Some(&args.design));
    m.seed = Some(design.seed);
    m.config = serde_json::to_value(&design).map_err(CliError::runtime)?;
    m.outputs = ["events.csv", "covariates.csv", "labels.csv", "truth.json"]
        .map(String::from)
        .to_vec();
    m.write(&args.out)
}
