//! Acceptance suite. Prints one PASS/FAIL line per criterion and fails if
//! any criterion fails.

mod support;

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::fs;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use msm_core::data::PathOptions;
use msm_core::hazard::{log_likelihood, Block, ModelData, Param};
use msm_core::keyactions::{chi_square_scores, compute_weights, IsfDenominator};
use msm_core::posterior::{equal_tail_interval, hpd_interval, log_tau_group_means, mean, summarize};
use msm_core::sampler::{run_chain, McmcConfig, PriorConfig};
use msm_core::simgen::{simulate, SimDesign, TauSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, StandardNormal};
use support::*;
use tempfile::tempdir;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn chi_square_oracle() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let ds = common::random_corpus(&mut rng, 50, 10);
        let table = chi_square_scores(&compute_weights(&ds, IsfDenominator::Sequences), &ds.labels().unwrap()).unwrap();
        for (a, want) in table.actions.iter().zip(common::naive_chi_square(&ds)) {
            worst = worst.max((a.score - want).abs());
        }
    }
    let secs = t.elapsed().as_secs_f64();
    check(
        worst <= 1e-10 && secs < 5.0,
        format!("100 corpora, max |d| = {worst:.2e} (<= 1e-10), {secs:.2} s (< 5 s)"),
    )
}

fn likelihood_oracle() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let inst = common::random_instance(&mut rng, 5, 4, 2, 8);
        let md = ModelData::new(&inst.ds, &inst.keys, PathOptions::default()).unwrap();
        let got = log_likelihood(&md, &inst.theta).unwrap();
        let want = common::quadrature_log_likelihood(&inst.ds, &inst.keys, &inst.theta, false);
        worst = worst.max((got - want).abs());
    }
    let secs = t.elapsed().as_secs_f64();
    check(
        worst <= 1e-6 && secs < 30.0,
        format!("200 instances, max |d| = {worst:.2e} (<= 1e-6), {secs:.2} s (< 30 s)"),
    )
}

fn gradient() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut worst = (0.0, "");
    for _ in 0..50 {
        let inst = common::random_instance(&mut rng, 5, 4, 2, 8);
        let r = common::gradient_check(&inst, &mut rng);
        if r.0 > worst.0 {
            worst = r;
        }
    }
    check(
        worst.0 < 1e-4,
        format!(
            "50 instances, max relative error {:.2e} (< 1e-4) in block {}",
            worst.0, worst.1
        ),
    )
}

fn conjugate() -> Outcome {
    let model = ModelData::new(&common::conjugate_dataset(), &[], PathOptions::default()).unwrap();
    let priors = PriorConfig::default();
    let cfg = McmcConfig {
        n_iter: 5000 + 20_000 * 25,
        burn_in: 5000,
        adapt_until: 5000,
        thin: 25,
        seed: 104,
        frozen: vec![Block::Kappa0, Block::Kappa1, Block::Gamma0, Block::Gamma1],
        ..Default::default()
    };
    let chain = run_chain(&model, &priors, &cfg, None).unwrap();
    let tau = chain.column_of(Param::new(Block::Tau, 0));
    let (shape, rate) = (priors.a_tau + 20.0, priors.b_tau + 25.0);
    let m = mean(&tau);
    let v = tau.iter().map(|t| (t - m).powi(2)).sum::<f64>() / (tau.len() - 1) as f64;
    let (em, ev) = (m / (shape / rate) - 1.0, v / (shape / rate / rate) - 1.0);
    check(
        tau.len() == 20_000 && em.abs() < 0.02 && ev.abs() < 0.02,
        format!(
            "{} draws, mean error {:+.2}%, variance error {:+.2}% (within 2%)",
            tau.len(),
            100.0 * em,
            100.0 * ev
        ),
    )
}

fn hpd_calibration() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let normal: Vec<f64> = (0..20_000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let h = hpd_interval(&normal, 0.95).unwrap();
    let ends = (h.low + 1.96).abs() <= 0.1 && (h.high - 1.96).abs() <= 0.1;
    let mut sets: Vec<Vec<f64>> = vec![
        normal,
        Exp::new(1.0).unwrap().sample_iter(&mut rng).take(20_000).collect(),
    ];
    for j in 0..300 {
        let n = rng.random_range(100..2000);
        sets.push(match j % 3 {
            0 => LogNormal::new(0.0, 1.0)
                .unwrap()
                .sample_iter(&mut rng)
                .take(n)
                .collect(),
            1 => (0..n).map(|_| f64::from(rng.random_range(0..6u8))).collect(),
            _ => (0..n).map(|_| rng.random::<f64>() * 10.0 - 5.0).collect(),
        });
    }
    let mut narrower = 0;
    for (j, s) in sets.iter().enumerate() {
        let mass = [0.95, 0.9, 0.5, 0.99][j % 4];
        if hpd_interval(s, mass).unwrap().width() <= equal_tail_interval(s, mass).unwrap().width() {
            narrower += 1;
        }
    }
    check(
        ends && narrower == sets.len(),
        format!(
            "normal HPD [{:.4}, {:.4}] (within 0.1 of +-1.96); HPD <= equal-tail on {narrower}/{} sample sets",
            h.low,
            h.high,
            sets.len()
        ),
    )
}

fn recovery_design(seed: u64) -> SimDesign {
    let mut d = SimDesign::neutral(200, 5, 2, 2, 30, seed);
    d.kappa = [vec![1.0, 1.0, 0.8, 1.2, 0.9], vec![1.0, 1.5, 0.8, 1.2, 0.9]];
    d.gamma = [vec![1.0, 0.7, 1.3, 0.05, 0.05], vec![1.0, 0.7, 1.3, 0.05, 0.05]];
    d.alpha = vec![0.3, -0.2];
    d.beta1 = vec![0.4, -0.3];
    d.beta2 = vec![0.5, -0.4];
    d.tau = TauSpec::ByGroup {
        mean: [0.8, 1.2],
        log_sd: 0.2,
    };
    d.key_presence = vec![[0.5, 0.5]; 2];
    d
}

struct Replication {
    covered: Vec<bool>,
    kappa_significant: bool,
    rates: Vec<(String, f64)>,
}

fn replicate(seed: u64) -> Replication {
    let d = recovery_design(seed);
    let out = simulate(&d).unwrap();
    let model = ModelData::new(&out.dataset, &out.key_states, PathOptions::default()).unwrap();
    let cfg = McmcConfig {
        n_iter: 60_000,
        burn_in: 20_000,
        adapt_until: 20_000,
        thin: 4,
        seed,
        anchor: true,
        ..Default::default()
    };
    let chain = run_chain(&model, &PriorConfig::default(), &cfg, None).unwrap();
    let s = summarize(&chain, 0.95).unwrap();
    let mut covered = Vec::new();
    for (b, truth) in [
        (Block::Alpha, &d.alpha),
        (Block::Beta1, &d.beta1),
        (Block::Beta2, &d.beta2),
    ] {
        for (i, t) in truth.iter().enumerate() {
            covered.push(s.get(Param::new(b, i)).unwrap().estimate.hpd.contains(*t));
        }
    }
    let draws = log_tau_group_means(&chain);
    for (g, group_draws) in draws.iter().enumerate() {
        let logs: Vec<f64> = out
            .truth
            .tau
            .iter()
            .zip(&chain.respondent_groups)
            .filter(|(_, &c)| c == g)
            .map(|(t, _)| t.ln())
            .collect();
        covered.push(hpd_interval(group_draws, 0.95).unwrap().contains(mean(&logs)));
    }
    // the planted difference sits on state a1
    let kappa_significant = s.kappa_diff[1].estimate.significance.is_significant();
    let rates = chain.accept_rates.iter().map(|(k, v)| (k.clone(), v.rate())).collect();
    Replication {
        covered,
        kappa_significant,
        rates,
    }
}

const COMPONENTS: [&str; 8] = [
    "alpha[0]",
    "alpha[1]",
    "beta1[0]",
    "beta1[1]",
    "beta2[0]",
    "beta2[1]",
    "log_tau[0]",
    "log_tau[1]",
];

fn recovery(reps: &[Replication], secs: f64) -> Outcome {
    let n = reps.len() as f64;
    let mut parts = Vec::new();
    let mut ok = true;
    for (j, name) in COMPONENTS.iter().enumerate() {
        let share = reps.iter().filter(|r| r.covered[j]).count() as f64 / n;
        ok &= share >= 0.8;
        parts.push(format!("{name} {:.0}%", 100.0 * share));
    }
    let sig = reps.iter().filter(|r| r.kappa_significant).count() as f64 / n;
    ok &= sig >= 0.9 && secs <= 1800.0;
    check(
        ok,
        format!(
            "{} seeds; coverage (>= 80%): {}; kappa1-kappa0 significant in {:.0}% (>= 90%); {secs:.0} s (<= 1800 s)",
            reps.len(),
            parts.join(", "),
            100.0 * sig
        ),
    )
}

fn acceptance_rates(reps: &[Replication]) -> Outcome {
    let mut lo = (f64::INFINITY, String::new());
    let mut hi = (f64::NEG_INFINITY, String::new());
    for r in reps {
        for (k, v) in &r.rates {
            if *v < lo.0 {
                lo = (*v, k.clone());
            }
            if *v > hi.0 {
                hi = (*v, k.clone());
            }
        }
    }
    check(
        lo.0 >= 0.15 && hi.0 <= 0.55,
        format!(
            "block rates over {} fits span [{:.3} ({}), {:.3} ({})] (within [0.15, 0.55])",
            reps.len(),
            lo.0,
            lo.1,
            hi.0,
            hi.1
        ),
    )
}

fn schedule() -> Outcome {
    let dir = tempdir().unwrap();
    let sim = simulate_dir(dir.path(), TINY_DESIGN);
    let keys = write(&dir.path().join("keys.txt"), "a2\n");
    let out = dir.path().join("dry");
    let mut a: Vec<String> = ["fit", "--keys", p(&keys), "--dry-run", "--out", p(&out)]
        .map(String::from)
        .to_vec();
    a.extend(data_args(&sim));
    ok(&a);
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let c = &m["config"];
    let field = |v: &serde_json::Value| v.as_u64().unwrap_or(0);
    let got = (
        field(&c["mcmc"]["n_iter"]),
        field(&c["mcmc"]["burn_in"]),
        field(&c["mcmc"]["thin"]),
        field(&c["retained_draws"]),
    );
    check(
        got == (300_000, 100_000, 10, 20_000),
        format!(
            "manifest: n_iter {}, burn_in {}, thin {}, retained {}",
            got.0, got.1, got.2, got.3
        ),
    )
}

fn simulate_dir(dir: &std::path::Path, design: &str) -> std::path::PathBuf {
    support::simulate(dir, design)
}

fn determinism() -> Outcome {
    let dir = tempdir().unwrap();
    let d = dir.path();
    let design = write(&d.join("design.json"), E2E_DESIGN);
    let sim = d.join("sim");
    let strings = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    assert_rerun_identical(&strings(&["simulate", p(&design), "--out", p(&sim)]), &sim);
    let keys = d.join("keys");
    let mut a = strings(&["extract-keys", "--out", p(&keys)]);
    a.extend(data_args(&sim));
    assert_rerun_identical(&a, &keys);
    let cfg = write(&d.join("cfg.json"), SHORT_FIT);
    let fit = d.join("fit");
    let report = keys.join("report.csv");
    let mut a = strings(&[
        "fit",
        "--keys",
        p(&report),
        "--config",
        p(&cfg),
        "--chains",
        "2",
        "--out",
        p(&fit),
    ]);
    a.extend(data_args(&sim));
    assert_rerun_identical(&a, &fit);
    let sum = d.join("sum");
    let c1 = fit.join("chain_1.csv");
    let c2 = fit.join("chain_2.csv");
    assert_rerun_identical(
        &strings(&["summarize", p(&c1), p(&c2), "--raw-draws", "--out", p(&sum)]),
        &sum,
    );
    Ok("simulate, extract-keys, fit (2 chains), summarize: reruns byte-identical".into())
}

fn end_to_end() -> Outcome {
    let t = Instant::now();
    let dir = tempdir().unwrap();
    let d = dir.path();
    let sim = simulate_dir(d, E2E_DESIGN);
    let keys = d.join("keys");
    let mut a: Vec<String> = ["extract-keys", "--out", p(&keys)].map(String::from).to_vec();
    a.extend(data_args(&sim));
    ok(&a);
    let cfg = write(&d.join("cfg.json"), SHORT_FIT);
    let fit = d.join("fit");
    let report = keys.join("report.csv");
    let mut a: Vec<String> = ["fit", "--keys", p(&report), "--config", p(&cfg), "--out", p(&fit)]
        .map(String::from)
        .to_vec();
    a.extend(data_args(&sim));
    ok(&a);
    let sum = d.join("sum");
    ok(["summarize", p(&fit.join("chain_1.csv")), "--out", p(&sum)]);
    let truth: serde_json::Value = serde_json::from_str(&fs::read_to_string(sim.join("truth.json")).unwrap()).unwrap();
    let planted = truth["key_actions"][0].as_str().unwrap().to_string();
    let selected: Vec<String> = rows(&report)
        .into_iter()
        .filter(|r| r["selected"] == "true")
        .map(|r| r["action_id"].clone())
        .collect();
    let summary_ok = rows(&sum.join("summary.csv"))
        .iter()
        .any(|r| r["parameter"] == "beta2" && r["label"] == planted);
    let secs = t.elapsed().as_secs_f64();
    check(
        selected.contains(&planted) && summary_ok && secs < 300.0,
        format!("planted {planted}, selected {selected:?}, {secs:.1} s (< 300 s)"),
    )
}

#[test]
fn acceptance_criteria() {
    let run = |f: &dyn Fn() -> Outcome| -> Outcome {
        match catch_unwind(AssertUnwindSafe(f)) {
            Ok(r) => r,
            Err(e) => Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())),
        }
    };
    let t = Instant::now();
    let reps: Vec<Replication> = catch_unwind(|| (1..=20).map(replicate).collect()).unwrap_or_default();
    let rec_secs = t.elapsed().as_secs_f64();
    let have_reps = |f: &dyn Fn() -> Outcome| {
        if reps.len() == 20 {
            f()
        } else {
            Err("recovery fits failed".into())
        }
    };

    let results: Vec<(&str, Outcome)> = vec![
        ("chi-square oracle equivalence", run(&chi_square_oracle)),
        ("likelihood oracle equivalence", run(&likelihood_oracle)),
        ("gradient check", run(&gradient)),
        ("conjugate sanity", run(&conjugate)),
        ("HPD calibration", run(&hpd_calibration)),
        ("recovery study", have_reps(&|| recovery(&reps, rec_secs))),
        ("acceptance-rate contract", have_reps(&|| acceptance_rates(&reps))),
        ("schedule fidelity", run(&schedule)),
        ("determinism", run(&determinism)),
        ("end-to-end smoke", run(&end_to_end)),
    ];
    let mut out = std::io::stdout().lock();
    let mut failed = Vec::new();
    for (j, (name, r)) in results.iter().enumerate() {
        let (tag, detail) = match r {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed.push(j + 1);
                ("FAIL", d)
            }
        };
        let _ = writeln!(out, "criterion {:>2} {tag}: {name}: {detail}", j + 1);
    }
    let _ = out.flush();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
