//! Reference implementations used as test oracles. The oracles work from
//! the raw event lists and never call into the library's likelihood or
//! scoring code; the checkers at the end compare library paths with each
//! other.

#![allow(dead_code)]

use msm_core::data::PathOptions;
use msm_core::data::{CovariateTable, Labels, SequenceInput};
use msm_core::hazard::{log_likelihood, Block, Dims, ExposureStats, ModelData, ParamState};
use msm_core::{Dataset, StateIndex};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

/// Brute-force weighted chi-square score of every catalog action.
pub fn naive_chi_square(ds: &Dataset) -> Vec<f64> {
    let n = ds.respondents.len() as f64;
    let e = ds.catalog.len();
    let tf = |j: usize, i: usize| ds.respondents[j].events.iter().filter(|ev| ev.state.0 == i).count();
    let weight = |j: usize, i: usize| {
        let sf = (0..ds.respondents.len()).filter(|&r| tf(r, i) > 0).count() as f64;
        let t = tf(j, i);
        if t == 0 {
            0.0
        } else {
            (1.0 + (t as f64).ln()) * (n / sf).ln()
        }
    };
    let group = |j: usize| ds.respondents[j].correct.unwrap();
    let mut len1 = 0.0;
    let mut len2 = 0.0;
    for j in 0..ds.respondents.len() {
        for i in 0..e {
            if group(j) {
                len1 += weight(j, i);
            } else {
                len2 += weight(j, i);
            }
        }
    }
    (0..e)
        .map(|i| {
            let mut o11 = 0.0;
            let mut o12 = 0.0;
            for j in 0..ds.respondents.len() {
                if group(j) {
                    o11 += weight(j, i);
                } else {
                    o12 += weight(j, i);
                }
            }
            let o21 = len1 - o11;
            let o22 = len2 - o12;
            let den = (o11 + o12) * (o11 + o21) * (o12 + o22) * (o21 + o22);
            if den == 0.0 {
                0.0
            } else {
                (len1 + len2) * (o11 * o22 - o12 * o21).powi(2) / den
            }
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    eps: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * eps {
        left + right + delta / 15.0
    } else {
        simpson_step(f, a, m, fa, flm, fm, left, eps / 2.0, depth - 1)
            + simpson_step(f, m, b, fm, frm, fb, right, eps / 2.0, depth - 1)
    }
}

/// Adaptive Simpson quadrature.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, eps: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(&f, a, b, fa, fm, fb, whole, eps, 60)
}

/// Onset of each key action for respondent `i`.
pub fn onsets(ds: &Dataset, i: usize, keys: &[StateIndex]) -> Vec<Option<f64>> {
    keys.iter()
        .map(|k| ds.respondents[i].events.iter().find(|e| e.state == *k).map(|e| e.time))
        .collect()
}

/// Exponent of respondent `i` at `t`; `strict` evaluates the left limit.
pub fn exponent(ds: &Dataset, i: usize, keys: &[StateIndex], th: &ParamState, t: f64, strict: bool) -> f64 {
    let r = &ds.respondents[i];
    let mut eta: f64 = r.covariates.iter().zip(&th.alpha).map(|(x, a)| x * a).sum();
    for (k, on) in onsets(ds, i, keys).into_iter().enumerate() {
        if let Some(tk) = on {
            eta += th.beta1[k] + th.beta3[k] * tk;
            if tk < t || (!strict && tk == t) {
                eta += th.beta2[k];
            }
        }
    }
    eta
}

/// Total exit rate from `m` at time `t`.
pub fn exit_rate(ds: &Dataset, i: usize, keys: &[StateIndex], th: &ParamState, m: usize, t: f64) -> f64 {
    let c = usize::from(ds.respondents[i].correct.unwrap());
    let e = ds.catalog.len();
    let eta = exponent(ds, i, keys, th, t, false);
    (0..e)
        .filter(|&l| l != m)
        .map(|l| th.kappa[c][m] * th.gamma[c][l] * th.tau[i] * eta.exp())
        .sum()
}

/// Log-likelihood by direct evaluation of the event terms and quadrature
/// of every sojourn.
pub fn quadrature_log_likelihood(ds: &Dataset, keys: &[StateIndex], th: &ParamState, include_initial: bool) -> f64 {
    let mut ll = 0.0;
    for (i, r) in ds.respondents.iter().enumerate() {
        let c = usize::from(r.correct.unwrap());
        let ev = &r.events;
        for w in ev.windows(2) {
            let (m, l, t) = (w[0].state.0, w[1].state.0, w[1].time);
            let eta = exponent(ds, i, keys, th, t, true);
            ll += (th.kappa[c][m] * th.gamma[c][l] * th.tau[i]).ln() + eta;
        }
        let mut bounds: Vec<(usize, f64, f64)> = Vec::new();
        let start = if include_initial { 0.0 } else { ev[0].time };
        for (j, w) in ev.windows(2).enumerate() {
            let s = if j == 0 { start } else { w[0].time };
            bounds.push((w[0].state.0, s, w[1].time));
        }
        let last = ev[ev.len() - 1];
        let s = if ev.len() == 1 { start } else { last.time };
        bounds.push((last.state.0, s, r.total_time));
        for (m, a, b) in bounds {
            ll -= adaptive_simpson(|t| exit_rate(ds, i, keys, th, m, t), a, b, 1e-12);
        }
    }
    ll
}

/// A random labeled instance with its key actions and parameters.
pub struct Instance {
    pub ds: Dataset,
    pub keys: Vec<StateIndex>,
    pub theta: ParamState,
}

pub fn random_theta(rng: &mut ChaCha8Rng, d: Dims, spread: f64) -> ParamState {
    let ln = Normal::new(0.0, spread).unwrap();
    let mut pos = |n: usize| -> Vec<f64> { (0..n).map(|_| ln.sample(rng).exp()).collect() };
    let kappa = [pos(d.states), pos(d.states)];
    let gamma = [pos(d.states), pos(d.states)];
    let tau = pos(d.respondents);
    let mut real = |n: usize| -> Vec<f64> { (0..n).map(|_| ln.sample(rng)).collect() };
    ParamState {
        kappa,
        gamma,
        tau,
        alpha: real(d.covariates),
        beta1: real(d.keys),
        beta2: real(d.keys),
        beta3: real(d.keys),
    }
}

/// Random sequences with at most `max_n` respondents, `max_e` actions and
/// `max_k` key actions.
pub fn random_instance(rng: &mut ChaCha8Rng, max_n: usize, max_e: usize, max_k: usize, max_events: usize) -> Instance {
    loop {
        let n = rng.random_range(1..=max_n);
        let e = rng.random_range(2..=max_e);
        let p = rng.random_range(0..=2usize);
        let mut seqs = Vec::new();
        let mut labels = Labels::new();
        let mut cov = CovariateTable {
            names: (0..p).map(|j| format!("x{j}")).collect(),
            ..Default::default()
        };
        for i in 0..n {
            let len = rng.random_range(1..=max_events);
            let mut t = rng.random::<f64>();
            let mut state = rng.random_range(0..e);
            let mut events = Vec::with_capacity(len);
            for j in 0..len {
                if j > 0 {
                    t += 0.05 + rng.random::<f64>() * 2.0;
                    let next = rng.random_range(0..e - 1);
                    state = if next >= state { next + 1 } else { next };
                }
                events.push((format!("s{state}"), t));
            }
            let total_time = if rng.random_bool(0.5) {
                Some(t + rng.random::<f64>())
            } else {
                None
            };
            let id = format!("r{i}");
            labels.insert(id.clone(), rng.random_bool(0.5));
            cov.rows
                .insert(id.clone(), (0..p).map(|_| rng.sample(StandardNormal)).collect());
            seqs.push(SequenceInput {
                id,
                events,
                total_time,
                line: i + 1,
            });
        }
        let Ok(ds) = Dataset::from_sequences(seqs) else {
            continue;
        };
        let (ds, _) = ds.attach(Some(&cov), &labels).unwrap();
        let e = ds.n_states();
        let k = rng.random_range(0..=max_k.min(e));
        let mut keys: Vec<StateIndex> = Vec::new();
        while keys.len() < k {
            let s = StateIndex(rng.random_range(0..e));
            if !keys.contains(&s) {
                keys.push(s);
            }
        }
        let d = Dims {
            states: e,
            respondents: ds.n_respondents(),
            covariates: ds.n_covariates(),
            keys: keys.len(),
        };
        let theta = random_theta(rng, d, 0.5);
        return Instance { ds, keys, theta };
    }
}

/// Random labeled corpus for chi-square checks (both groups present).
pub fn random_corpus(rng: &mut ChaCha8Rng, max_n: usize, max_e: usize) -> Dataset {
    loop {
        let inst = random_instance(rng, max_n, max_e, 0, 12);
        let labels: Vec<bool> = inst.ds.respondents.iter().map(|r| r.correct.unwrap()).collect();
        if labels.iter().any(|&c| c) && labels.iter().any(|&c| !c) {
            return inst.ds;
        }
    }
}

/// Kolmogorov-Smirnov statistic against a continuous CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(j, &x)| {
            let f = cdf(x);
            (f - j as f64 / n).abs().max(((j + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Critical value of the one-sample KS test at level 0.01 for large n.
pub fn ks_critical_01(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}

/// Largest relative error, over all blocks, between the analytic
/// directional derivative of the log-likelihood along a random direction
/// and its central difference (step 1e-5). Positive blocks move on the
/// log scale.
pub fn gradient_check(inst: &Instance, rng: &mut ChaCha8Rng) -> (f64, &'static str) {
    let md = ModelData::new(&inst.ds, &inst.keys, PathOptions::default()).unwrap();
    let grad = ExposureStats::new(&md).gradient(&inst.theta);
    let h = 1e-5;
    let mut worst = (0.0, "");
    for block in Block::ALL {
        let n = block.len(md.dims);
        if n == 0 {
            continue;
        }
        let dir: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let analytic: f64 = grad.block(block).iter().zip(&dir).map(|(g, u)| g * u).sum();
        let moved = |s: f64| {
            let mut th = inst.theta.clone();
            for (v, u) in th.block_mut(block).iter_mut().zip(&dir) {
                if block.is_positive() {
                    *v *= (s * u).exp();
                } else {
                    *v += s * u;
                }
            }
            log_likelihood(&md, &th).unwrap()
        };
        let fd = (moved(h) - moved(-h)) / (2.0 * h);
        let rel = (fd - analytic).abs() / analytic.abs().max(1e-6);
        if rel > worst.0 {
            worst = (rel, block.name());
        }
    }
    worst
}

/// One respondent alternating between two actions: 20 transitions over
/// 25 minutes.
pub fn conjugate_dataset() -> Dataset {
    let events = (0..21)
        .map(|j| ((if j % 2 == 0 { "a" } else { "b" }).to_string(), j as f64 * 1.2))
        .collect();
    let ds = Dataset::from_sequences([SequenceInput {
        id: "r".into(),
        events,
        total_time: Some(25.0),
        line: 1,
    }])
    .unwrap();
    let labels: Labels = [("r".to_string(), true)].into_iter().collect();
    ds.attach(None, &labels).unwrap().0
}
