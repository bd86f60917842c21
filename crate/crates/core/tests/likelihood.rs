mod common;

use common::{adaptive_simpson, exit_rate, gradient_check, quadrature_log_likelihood, random_instance, Instance};
use msm_core::data::{ActionCatalog, Event, PathOptions};
use msm_core::hazard::{
    hazard, log_likelihood, sojourn_integral, Block, ExposureStats, LikelihoodCache, ModelData, Param, ParamState,
};
use msm_core::{Dataset, StateIndex};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn model(inst: &Instance, opts: PathOptions) -> ModelData {
    ModelData::new(&inst.ds, &inst.keys, opts).unwrap()
}

fn instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_instance(&mut rng, 5, 4, 2, 8)
}

#[test]
fn sojourn_integral_matches_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let inst = random_instance(&mut rng, 5, 4, 2, 8);
        let md = model(&inst, PathOptions::default());
        let i = rng.random_range(0..inst.ds.n_respondents());
        let m = rng.random_range(0..inst.ds.n_states());
        let r = &inst.ds.respondents[i];
        let span = r.total_time + 1.0;
        let a = rng.random::<f64>() * span;
        let b = a + rng.random::<f64>() * (span - a);
        let got = sojourn_integral(&md, i, m, a, b, &inst.theta);
        let want = adaptive_simpson(|t| exit_rate(&inst.ds, i, &inst.keys, &inst.theta, m, t), a, b, 1e-13);
        assert!((got - want).abs() <= 1e-8 * (1.0 + want.abs()), "{got} vs {want}");
    }
}

#[test]
fn log_likelihood_matches_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for j in 0..200 {
        let inst = random_instance(&mut rng, 5, 4, 2, 8);
        let include = j % 2 == 1;
        let md = model(
            &inst,
            PathOptions {
                include_initial_sojourn: include,
            },
        );
        let got = log_likelihood(&md, &inst.theta).unwrap();
        let want = quadrature_log_likelihood(&inst.ds, &inst.keys, &inst.theta, include);
        assert!((got - want).abs() <= 1e-6, "instance {j}: {got} vs {want}");
    }
}

#[test]
fn arrival_at_onset_uses_left_limit() {
    let mut catalog = ActionCatalog::new();
    let a = catalog.intern("a").unwrap();
    let b = catalog.intern("b").unwrap();
    let ds = Dataset {
        catalog,
        respondents: vec![msm_core::RespondentRecord {
            id: "r".into(),
            events: vec![Event { state: a, time: 0.0 }, Event { state: b, time: 2.0 }],
            covariates: vec![],
            correct: Some(true),
            total_time: 3.0,
        }],
        covariate_names: vec![],
    };
    let md = ModelData::new(&ds, &[b], PathOptions::default()).unwrap();
    let mut th = ParamState::neutral(md.dims);
    th.beta2[0] = 0.7;
    let ll = log_likelihood(&md, &th).unwrap();
    let want = -2.0 - 0.7f64.exp();
    assert!((ll - want).abs() < 1e-12, "{ll} vs {want}");
    assert!((hazard(&md, 0, 0, 1, 2.0, &th).unwrap() - 0.7f64.exp()).abs() < 1e-12);
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..50 {
        let inst = random_instance(&mut rng, 5, 4, 2, 8);
        let (rel, block) = gradient_check(&inst, &mut rng);
        assert!(rel < 1e-4, "{block}: relative error {rel}");
    }
}

fn random_value(rng: &mut ChaCha8Rng, block: Block, old: f64) -> f64 {
    let step = rng.random::<f64>() - 0.5;
    if block.is_positive() {
        old * step.exp()
    } else {
        old + step
    }
}

#[test]
fn fast_path_agrees_with_direct_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..200 {
        let inst = random_instance(&mut rng, 5, 4, 2, 8);
        let md = model(&inst, PathOptions::default());
        let stats = ExposureStats::new(&md);
        let full = log_likelihood(&md, &inst.theta).unwrap();
        assert!((stats.log_likelihood(&inst.theta) - full).abs() <= 1e-9 * (1.0 + full.abs()));
        let mut theta = inst.theta.clone();
        let mut cache = LikelihoodCache::new(&stats, &theta);
        for _ in 0..20 {
            let block = Block::ALL[rng.random_range(0..Block::ALL.len())];
            let n = block.len(md.dims);
            if n == 0 {
                continue;
            }
            let p = Param::new(block, rng.random_range(0..n));
            let v = random_value(&mut rng, block, theta.get(p));
            let before = log_likelihood(&md, &theta).unwrap();
            let mut next = theta.clone();
            next.set(p, v);
            let after = log_likelihood(&md, &next).unwrap();
            let want = after - before;
            let got = cache.delta(&theta, p, v);
            assert!(
                (got - want).abs() <= 1e-9 * (1.0 + after.abs()),
                "{p:?}: {got} vs {want}"
            );
            let block_delta = stats.log_likelihood_delta(block, &theta, &next);
            assert!((block_delta - want).abs() <= 1e-9 * (1.0 + after.abs()));
            cache.commit(&mut theta, p, v);
            assert_eq!(theta, next);
            assert!((cache.total(&theta) - after).abs() <= 1e-9 * (1.0 + after.abs()));
        }
    }
}

fn integral_total(md: &ModelData, th: &ParamState) -> f64 {
    (0..md.respondents.len())
        .map(|i| {
            md.respondents[i]
                .path
                .sojourns()
                .map(|s| sojourn_integral(md, i, s.state.get(), s.start, s.end, th))
                .sum::<f64>()
        })
        .sum()
}

/// Permutes the state labels of a dataset and the matching parameters.
fn relabel(inst: &Instance, perm: &[usize]) -> Instance {
    let ds = &inst.ds;
    let mut names = vec![String::new(); perm.len()];
    for (m, &p) in perm.iter().enumerate() {
        names[p] = ds.catalog.name(StateIndex(m)).to_string();
    }
    let catalog = ActionCatalog::from_actions(names).unwrap();
    let mut out = ds.clone();
    out.catalog = catalog;
    for r in &mut out.respondents {
        for e in &mut r.events {
            e.state = StateIndex(perm[e.state.0]);
        }
    }
    let mut th = inst.theta.clone();
    for c in 0..2 {
        for (m, &p) in perm.iter().enumerate() {
            th.kappa[c][p] = inst.theta.kappa[c][m];
            th.gamma[c][p] = inst.theta.gamma[c][m];
        }
    }
    Instance {
        ds: out,
        keys: inst.keys.iter().map(|k| StateIndex(perm[k.0])).collect(),
        theta: th,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn tau_scaling_identity(seed in any::<u64>(), c in 0.1f64..10.0) {
        let inst = instance(seed);
        let md = model(&inst, PathOptions::default());
        let base = log_likelihood(&md, &inst.theta).unwrap();
        let mut th = inst.theta.clone();
        th.tau.iter_mut().for_each(|t| *t *= c);
        let scaled = log_likelihood(&md, &th).unwrap();
        let want = md.n_transitions() as f64 * c.ln() - (c - 1.0) * integral_total(&md, &inst.theta);
        prop_assert!((scaled - base - want).abs() <= 1e-9 * (1.0 + scaled.abs()));
    }

    #[test]
    fn beta1_raises_hazard_and_integral(seed in any::<u64>(), bump in 0.01f64..2.0) {
        let inst = instance(seed);
        prop_assume!(!inst.keys.is_empty());
        let md = model(&inst, PathOptions::default());
        let mut th = inst.theta.clone();
        th.beta1[0] += bump;
        for (i, r) in md.respondents.iter().enumerate() {
            if r.onsets[0].is_none() {
                continue;
            }
            let total = inst.ds.respondents[i].total_time;
            for t in [0.0, 0.5 * total, total] {
                prop_assert!(hazard(&md, i, 0, 1, t, &th).unwrap() > hazard(&md, i, 0, 1, t, &inst.theta).unwrap());
            }
            for s in r.path.sojourns().filter(|s| s.end > s.start) {
                let m = s.state.get();
                prop_assert!(
                    sojourn_integral(&md, i, m, s.start, s.end, &th)
                        > sojourn_integral(&md, i, m, s.start, s.end, &inst.theta)
                );
            }
        }
    }

    #[test]
    fn relabeling_states_leaves_likelihood_unchanged(seed in any::<u64>(), shuffle in any::<u64>()) {
        let inst = instance(seed);
        let e = inst.ds.n_states();
        let mut perm: Vec<usize> = (0..e).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(shuffle);
        for j in (1..e).rev() {
            perm.swap(j, rng.random_range(0..=j));
        }
        let other = relabel(&inst, &perm);
        let a = log_likelihood(&model(&inst, PathOptions::default()), &inst.theta).unwrap();
        let b = log_likelihood(&model(&other, PathOptions::default()), &other.theta).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "{} vs {}", a, b);
    }
}
