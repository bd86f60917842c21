//! Forward simulator with known parameters.
//!
//! Each respondent's key-action set is drawn before any time is simulated,
//! so the intercept term of every executed key action is in force from time
//! 0. A present key action is inserted at a uniformly chosen step of the
//! path; all other steps move to a non-key state chosen by the path law.
//! In state `m` the exit rate is `kappa[c][m] * sum_{l != m} gamma[c][l] *
//! tau_i * exp(eta(t))`, which is constant between events.
//!
//! Exact mode requires every `beta3` to be zero. Approximate mode adds
//! `beta3[k] * T_ik` only once the onset has been generated, which is not
//! the law the likelihood scores.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{ActionCatalog, Dataset, Event, RespondentRecord, StateIndex};
use crate::error::SimError;
use crate::hazard::{Dims, ParamState};
use crate::math;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    #[default]
    Exact,
    Approximate,
}

/// Next-state distribution for non-key steps. Key states are never chosen
/// by the path law.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathLaw {
    /// Proportional to `gamma[c][l]`.
    #[default]
    Gamma,
    Uniform,
    /// Row `m` holds unnormalized weights over destinations.
    Matrix(Vec<Vec<f64>>),
}

/// How respondent speed factors are set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauSpec {
    Explicit(Vec<f64>),
    /// `tau_i = mean[c_i] * exp(log_sd * z - log_sd^2 / 2)`, so the group
    /// mean of `tau` is `mean[c]`.
    ByGroup {
        mean: [f64; 2],
        log_sd: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub respondents: usize,
    pub states: usize,
    pub covariates: usize,
    /// The last `keys` states are the key actions.
    pub keys: usize,
    pub kappa: [Vec<f64>; 2],
    pub gamma: [Vec<f64>; 2],
    pub alpha: Vec<f64>,
    pub beta1: Vec<f64>,
    pub beta2: Vec<f64>,
    pub beta3: Vec<f64>,
    pub tau: TauSpec,
    /// Share of respondents in the correct group; the first
    /// `round(share * N)` respondents are correct.
    #[serde(default = "half")]
    pub correct_share: f64,
    /// Probability that key action `k` occurs, as `[incorrect, correct]`.
    pub key_presence: Vec<[f64; 2]>,
    #[serde(default)]
    pub path_law: PathLaw,
    /// Events per respondent, counting the initial one at time 0.
    pub max_events: usize,
    #[serde(default)]
    pub mode: SimMode,
    pub seed: u64,
}

fn half() -> f64 {
    0.5
}

impl SimDesign {
    /// All rates one, all coefficients zero, every key action present with
    /// probability 0.5.
    pub fn neutral(
        respondents: usize,
        states: usize,
        covariates: usize,
        keys: usize,
        max_events: usize,
        seed: u64,
    ) -> Self {
        SimDesign {
            respondents,
            states,
            covariates,
            keys,
            kappa: [vec![1.0; states], vec![1.0; states]],
            gamma: [vec![1.0; states], vec![1.0; states]],
            alpha: vec![0.0; covariates],
            beta1: vec![0.0; keys],
            beta2: vec![0.0; keys],
            beta3: vec![0.0; keys],
            tau: TauSpec::Explicit(vec![1.0; respondents]),
            correct_share: 0.5,
            key_presence: vec![[0.5, 0.5]; keys],
            path_law: PathLaw::Gamma,
            max_events,
            mode: SimMode::Exact,
            seed,
        }
    }

    pub fn dims(&self) -> Dims {
        Dims {
            states: self.states,
            respondents: self.respondents,
            covariates: self.covariates,
            keys: self.keys,
        }
    }

    pub fn key_states(&self) -> Vec<StateIndex> {
        (self.states - self.keys..self.states).map(StateIndex).collect()
    }

    pub fn n_correct(&self) -> usize {
        math::floor(self.correct_share * self.respondents as f64 + 0.5) as usize
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Design(m));
        let (n, e, p, k) = (self.respondents, self.states, self.covariates, self.keys);
        if n == 0 {
            return bad("respondents must be positive".into());
        }
        if e < k + 2 {
            return bad(format!("need at least two non-key states (states = {e}, keys = {k})"));
        }
        if self.max_events < 2 || self.max_events < k + 1 {
            return bad(format!(
                "max_events must be at least max(2, keys + 1), got {}",
                self.max_events
            ));
        }
        for c in 0..2 {
            if self.kappa[c].len() != e || self.gamma[c].len() != e {
                return bad("kappa and gamma need one entry per state".into());
            }
            if self.kappa[c]
                .iter()
                .chain(&self.gamma[c])
                .any(|v| !(v.is_finite() && *v > 0.0))
            {
                return bad("kappa and gamma must be positive".into());
            }
        }
        if self.alpha.len() != p {
            return bad("alpha needs one entry per covariate".into());
        }
        if self.beta1.len() != k || self.beta2.len() != k || self.beta3.len() != k || self.key_presence.len() != k {
            return bad("beta blocks and key_presence need one entry per key action".into());
        }
        if self
            .alpha
            .iter()
            .chain(&self.beta1)
            .chain(&self.beta2)
            .chain(&self.beta3)
            .any(|v| !v.is_finite())
        {
            return bad("coefficients must be finite".into());
        }
        if self.key_presence.iter().flatten().any(|q| !(0.0..=1.0).contains(q)) {
            return bad("key_presence entries must lie in [0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.correct_share) {
            return bad("correct_share must lie in [0, 1]".into());
        }
        match &self.tau {
            TauSpec::Explicit(t) => {
                if t.len() != n {
                    return bad("explicit tau needs one entry per respondent".into());
                }
                if t.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return bad("tau must be positive".into());
                }
            }
            TauSpec::ByGroup { mean, log_sd } => {
                if mean.iter().any(|v| !(v.is_finite() && *v > 0.0)) || !(log_sd.is_finite() && *log_sd >= 0.0) {
                    return bad("tau group means must be positive and log_sd non-negative".into());
                }
            }
        }
        if let PathLaw::Matrix(rows) = &self.path_law {
            if rows.len() != e || rows.iter().any(|r| r.len() != e) {
                return bad("path matrix must be states x states".into());
            }
            for (m, row) in rows.iter().enumerate() {
                if row.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                    return bad("path matrix weights must be non-negative".into());
                }
                let mass: f64 = (0..e - k).filter(|&l| l != m).map(|l| row[l]).sum();
                if mass <= 0.0 {
                    return bad(format!("path matrix row {m} puts no weight on non-key states"));
                }
            }
        }
        if self.mode == SimMode::Exact {
            if let Some(k) = self.beta3.iter().position(|&b| b != 0.0) {
                return Err(SimError::NonZeroBeta3(k));
            }
        }
        Ok(())
    }
}

/// Inverse-CDF draw from a piecewise-constant hazard given as
/// `(length, rate)` segments. The last segment is unbounded; rates may be
/// zero. Returns infinity if the total hazard is finite.
pub fn piecewise_exponential_draw<R: Rng + ?Sized>(segments: &[(f64, f64)], rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    piecewise_exponential_quantile(segments, -math::ln(1.0 - u))
}

/// Time at which the cumulative hazard reaches `target`.
pub fn piecewise_exponential_quantile(segments: &[(f64, f64)], target: f64) -> f64 {
    let mut remaining = target;
    let mut t = 0.0;
    for (j, &(len, rate)) in segments.iter().enumerate() {
        let last = j + 1 == segments.len();
        if last {
            return if rate > 0.0 {
                t + remaining / rate
            } else {
                f64::INFINITY
            };
        }
        let mass = rate * len;
        if mass >= remaining && rate > 0.0 {
            return t + remaining / rate;
        }
        remaining -= mass;
        t += len;
    }
    f64::INFINITY
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub dataset: Dataset,
    pub key_states: Vec<StateIndex>,
    pub truth: ParamState,
    /// `onsets[i][k]` is respondent i's first execution time of key k.
    pub onsets: Vec<Vec<Option<f64>>>,
}

/// RNG for respondent `i`, independent of every other respondent.
pub fn respondent_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64 + 1);
    rng
}

fn pick<R: Rng + ?Sized>(weights: &[(usize, f64)], rng: &mut R) -> usize {
    let total: f64 = weights.iter().map(|w| w.1).sum();
    let mut u = rng.random::<f64>() * total;
    for &(l, w) in weights {
        if u < w {
            return l;
        }
        u -= w;
    }
    weights
        .iter()
        .rev()
        .find(|w| w.1 > 0.0)
        .map(|w| w.0)
        .unwrap_or(weights[0].0)
}

struct Walk {
    covariates: Vec<f64>,
    tau: f64,
    events: Vec<Event>,
    onsets: Vec<Option<f64>>,
}

fn simulate_respondent(design: &SimDesign, i: usize, group: usize) -> Walk {
    let mut rng = respondent_rng(design.seed, i);
    let (e, k) = (design.states, design.keys);
    let n_plain = e - k;
    let covariates: Vec<f64> = (0..design.covariates).map(|_| rng.sample(StandardNormal)).collect();
    let tau = match &design.tau {
        TauSpec::Explicit(t) => t[i],
        TauSpec::ByGroup { mean, log_sd } => {
            let z: f64 = rng.sample(StandardNormal);
            mean[group] * math::exp(log_sd * z - log_sd * log_sd / 2.0)
        }
    };
    let present: Vec<usize> = (0..k)
        .filter(|&kk| rng.random::<f64>() < design.key_presence[kk][group])
        .collect();
    let n_steps = design.max_events - 1;
    let steps = index::sample(&mut rng, n_steps, present.len());
    // step s (1-based) -> key executed there
    let mut designated: Vec<Option<usize>> = vec![None; n_steps + 1];
    for (j, s) in steps.iter().enumerate() {
        designated[s + 1] = Some(present[j]);
    }

    let kappa = &design.kappa[group];
    let gamma = &design.gamma[group];
    let gamma_total: f64 = gamma.iter().sum();
    let mut eta: f64 = covariates.iter().zip(&design.alpha).map(|(x, a)| x * a).sum();
    for &kk in &present {
        eta += design.beta1[kk];
    }

    let mut state = rng.random_range(0..n_plain);
    let mut t = 0.0;
    let mut events = Vec::with_capacity(design.max_events);
    let mut onsets = vec![None; k];
    events.push(Event {
        state: StateIndex(state),
        time: t,
    });
    for slot in designated.iter().skip(1) {
        let rate = kappa[state] * (gamma_total - gamma[state]) * tau * math::exp(eta);
        t += piecewise_exponential_draw(&[(f64::INFINITY, rate)], &mut rng);
        let next = match *slot {
            Some(kk) => {
                onsets[kk] = Some(t);
                eta += design.beta2[kk];
                if design.mode == SimMode::Approximate {
                    eta += design.beta3[kk] * t;
                }
                n_plain + kk
            }
            None => {
                let weights: Vec<(usize, f64)> = (0..n_plain)
                    .filter(|&l| l != state)
                    .map(|l| {
                        let w = match &design.path_law {
                            PathLaw::Gamma => gamma[l],
                            PathLaw::Uniform => 1.0,
                            PathLaw::Matrix(rows) => rows[state][l],
                        };
                        (l, w)
                    })
                    .collect();
                pick(&weights, &mut rng)
            }
        };
        state = next;
        events.push(Event {
            state: StateIndex(state),
            time: t,
        });
    }
    Walk {
        covariates,
        tau,
        events,
        onsets,
    }
}

/// Simulates a labeled dataset. Action `m` is named `a{m}`, respondent `i`
/// is `r{i}` and covariate `p` is `x{p}`.
pub fn simulate(design: &SimDesign) -> Result<SimOutput, SimError> {
    design.validate()?;
    let n_correct = design.n_correct();
    let catalog = ActionCatalog::from_actions((0..design.states).map(|m| format!("a{m}")))
        .map_err(|e| SimError::Design(format!("{e}")))?;
    let mut respondents = Vec::with_capacity(design.respondents);
    let mut taus = Vec::with_capacity(design.respondents);
    let mut onsets = Vec::with_capacity(design.respondents);
    for i in 0..design.respondents {
        let group = usize::from(i < n_correct);
        let walk = simulate_respondent(design, i, group);
        let total_time = walk.events[walk.events.len() - 1].time;
        respondents.push(RespondentRecord {
            id: format!("r{i}"),
            events: walk.events,
            covariates: walk.covariates,
            correct: Some(group == 1),
            total_time,
        });
        taus.push(walk.tau);
        onsets.push(walk.onsets);
    }
    let dataset = Dataset {
        catalog,
        respondents,
        covariate_names: (0..design.covariates).map(|p| format!("x{p}")).collect(),
    };
    dataset
        .validate()
        .map_err(|e| SimError::Design(format!("generated invalid data: {e}")))?;
    let truth = ParamState {
        kappa: design.kappa.clone(),
        gamma: design.gamma.clone(),
        tau: taus,
        alpha: design.alpha.clone(),
        beta1: design.beta1.clone(),
        beta2: design.beta2.clone(),
        beta3: design.beta3.clone(),
    };
    Ok(SimOutput {
        dataset,
        key_states: design.key_states(),
        truth,
        onsets,
    })
}
