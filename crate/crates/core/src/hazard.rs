//! Transition hazards and the multi-state log-likelihood.
//!
//! For respondent `i` in group `c` (1 = correct), the hazard of moving from
//! state `m` to state `l != m` at time `t` is
//!
//! ```text
//! kappa[c][m] * gamma[c][l] * tau[i] * exp(eta_i(t))
//! eta_i(t) = alpha . x_i + sum_{k in S_i} (beta1[k] + beta2[k] * 1{t >= T_ik} + beta3[k] * T_ik)
//! ```
//!
//! where `T_ik` is the first time respondent `i` executed key action `k`.
//! `eta_i` is piecewise constant and right-continuous with jumps at the
//! onset times, so every sojourn integral is a finite sum over segments.
//!
//! Two evaluation paths are provided:
//!
//! * [`log_likelihood`] walks every transition and sojourn, calling
//!   [`hazard`] and [`sojourn_integral`] directly.
//! * [`ExposureStats`] condenses each respondent to transition counts and
//!   state-by-phase exposure times, which is what the sampler uses. The two
//!   paths are checked against each other in the tests.
//!
//! A transition that arrives at the first occurrence of a key action is
//! scored with the hazard in force just before that instant; the step for
//! that key action only applies to later sojourns.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, PathOptions, RespondentPath, StateIndex};
use crate::error::{DataError, ModelError};
use crate::math;

/// Model dimensions: states E, respondents N, covariates P, key actions K.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub states: usize,
    pub respondents: usize,
    pub covariates: usize,
    pub keys: usize,
}

/// A parameter block. Group-specific blocks carry the group in their name
/// (`Kappa0` is the incorrect group, `Kappa1` the correct group).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Kappa0,
    Kappa1,
    Gamma0,
    Gamma1,
    Tau,
    Alpha,
    Beta1,
    Beta2,
    Beta3,
}

impl Block {
    /// Flattening and update order.
    pub const ALL: [Block; 9] = [
        Block::Kappa0,
        Block::Kappa1,
        Block::Gamma0,
        Block::Gamma1,
        Block::Tau,
        Block::Alpha,
        Block::Beta1,
        Block::Beta2,
        Block::Beta3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Block::Kappa0 => "kappa0",
            Block::Kappa1 => "kappa1",
            Block::Gamma0 => "gamma0",
            Block::Gamma1 => "gamma1",
            Block::Tau => "tau",
            Block::Alpha => "alpha",
            Block::Beta1 => "beta1",
            Block::Beta2 => "beta2",
            Block::Beta3 => "beta3",
        }
    }

    pub fn from_name(name: &str) -> Option<Block> {
        Block::ALL.into_iter().find(|b| b.name() == name)
    }

    pub fn len(self, d: Dims) -> usize {
        match self {
            Block::Kappa0 | Block::Kappa1 | Block::Gamma0 | Block::Gamma1 => d.states,
            Block::Tau => d.respondents,
            Block::Alpha => d.covariates,
            Block::Beta1 | Block::Beta2 | Block::Beta3 => d.keys,
        }
    }

    /// Column offset of the block in the flattened parameter vector.
    pub fn offset(self, d: Dims) -> usize {
        Block::ALL.iter().take_while(|&&b| b != self).map(|b| b.len(d)).sum()
    }

    /// Positive blocks (kappa, gamma, tau) are sampled on the log scale.
    pub fn is_positive(self) -> bool {
        matches!(
            self,
            Block::Kappa0 | Block::Kappa1 | Block::Gamma0 | Block::Gamma1 | Block::Tau
        )
    }
}

/// One scalar parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Param {
    pub block: Block,
    pub index: usize,
}

impl Param {
    pub fn new(block: Block, index: usize) -> Self {
        Param { block, index }
    }
}

/// Total number of scalar parameters.
pub fn n_params(d: Dims) -> usize {
    Block::ALL.iter().map(|b| b.len(d)).sum()
}

/// The full parameter vector.
///
/// `kappa[c]` and `gamma[c]` are indexed by state; `c = 0` is the incorrect
/// group and `c = 1` the correct group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamState {
    pub kappa: [Vec<f64>; 2],
    pub gamma: [Vec<f64>; 2],
    pub tau: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta1: Vec<f64>,
    pub beta2: Vec<f64>,
    pub beta3: Vec<f64>,
}

impl ParamState {
    /// kappa = gamma = tau = 1 and every coefficient 0: the hazard is 1
    /// everywhere.
    pub fn neutral(d: Dims) -> Self {
        ParamState {
            kappa: [vec![1.0; d.states], vec![1.0; d.states]],
            gamma: [vec![1.0; d.states], vec![1.0; d.states]],
            tau: vec![1.0; d.respondents],
            alpha: vec![0.0; d.covariates],
            beta1: vec![0.0; d.keys],
            beta2: vec![0.0; d.keys],
            beta3: vec![0.0; d.keys],
        }
    }

    pub fn dims(&self) -> Dims {
        Dims {
            states: self.kappa[0].len(),
            respondents: self.tau.len(),
            covariates: self.alpha.len(),
            keys: self.beta1.len(),
        }
    }

    pub fn block(&self, block: Block) -> &[f64] {
        match block {
            Block::Kappa0 => &self.kappa[0],
            Block::Kappa1 => &self.kappa[1],
            Block::Gamma0 => &self.gamma[0],
            Block::Gamma1 => &self.gamma[1],
            Block::Tau => &self.tau,
            Block::Alpha => &self.alpha,
            Block::Beta1 => &self.beta1,
            Block::Beta2 => &self.beta2,
            Block::Beta3 => &self.beta3,
        }
    }

    pub fn block_mut(&mut self, block: Block) -> &mut Vec<f64> {
        match block {
            Block::Kappa0 => &mut self.kappa[0],
            Block::Kappa1 => &mut self.kappa[1],
            Block::Gamma0 => &mut self.gamma[0],
            Block::Gamma1 => &mut self.gamma[1],
            Block::Tau => &mut self.tau,
            Block::Alpha => &mut self.alpha,
            Block::Beta1 => &mut self.beta1,
            Block::Beta2 => &mut self.beta2,
            Block::Beta3 => &mut self.beta3,
        }
    }

    pub fn get(&self, p: Param) -> f64 {
        self.block(p.block)[p.index]
    }

    pub fn set(&mut self, p: Param, value: f64) {
        self.block_mut(p.block)[p.index] = value;
    }

    pub fn validate(&self, d: Dims) -> Result<(), ModelError> {
        for b in Block::ALL {
            let got = self.block(b).len();
            if got != b.len(d) {
                return Err(ModelError::Dimension(format!(
                    "{} has length {got}, expected {}",
                    b.name(),
                    b.len(d)
                )));
            }
            for (i, &v) in self.block(b).iter().enumerate() {
                if !v.is_finite() {
                    return Err(ModelError::Dimension(format!("{}[{i}] is not finite", b.name())));
                }
                if b.is_positive() && v <= 0.0 {
                    return Err(ModelError::NonPositive(format!("{}[{i}]", b.name())));
                }
            }
        }
        Ok(())
    }

    /// Concatenates the blocks in [`Block::ALL`] order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(n_params(self.dims()));
        for b in Block::ALL {
            out.extend_from_slice(self.block(b));
        }
        out
    }

    pub fn from_flat(d: Dims, flat: &[f64]) -> Result<Self, ModelError> {
        if flat.len() != n_params(d) {
            return Err(ModelError::Dimension(format!(
                "flat vector has {} entries, expected {}",
                flat.len(),
                n_params(d)
            )));
        }
        let mut s = ParamState::neutral(d);
        let mut at = 0;
        for b in Block::ALL {
            let n = b.len(d);
            s.block_mut(b).copy_from_slice(&flat[at..at + n]);
            at += n;
        }
        Ok(s)
    }
}

/// One respondent, bound to the key-action set.
#[derive(Debug, Clone, PartialEq)]
pub struct RespondentData {
    /// 1 if correct, 0 otherwise.
    pub group: usize,
    pub covariates: Vec<f64>,
    /// Onset time of each key action, `None` when never executed.
    pub onsets: Vec<Option<f64>>,
    pub path: RespondentPath,
}

impl RespondentData {
    /// Time-invariant part of the exponent.
    pub fn static_exponent(&self, theta: &ParamState) -> f64 {
        let mut eta: f64 = self.covariates.iter().zip(&theta.alpha).map(|(x, a)| x * a).sum();
        for (k, onset) in self.onsets.iter().enumerate() {
            if let Some(t) = onset {
                eta += theta.beta1[k] + theta.beta3[k] * t;
            }
        }
        eta
    }

    /// Sum of `beta2[k]` over key actions with onset `<= t`.
    pub fn step(&self, theta: &ParamState, t: f64) -> f64 {
        self.onsets
            .iter()
            .zip(&theta.beta2)
            .filter(|(on, _)| matches!(on, Some(o) if *o <= t))
            .map(|(_, b)| b)
            .sum()
    }

    /// Sum of `beta2[k]` over key actions with onset `< t` (left limit).
    pub fn step_before(&self, theta: &ParamState, t: f64) -> f64 {
        self.onsets
            .iter()
            .zip(&theta.beta2)
            .filter(|(on, _)| matches!(on, Some(o) if *o < t))
            .map(|(_, b)| b)
            .sum()
    }

    /// Exponent at time `t` (right-continuous).
    pub fn exponent(&self, theta: &ParamState, t: f64) -> f64 {
        self.static_exponent(theta) + self.step(theta, t)
    }
}

/// A dataset bound to a key-action set, ready for likelihood evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelData {
    pub dims: Dims,
    pub key_states: Vec<StateIndex>,
    pub respondents: Vec<RespondentData>,
    pub path_options: PathOptions,
    pub names: ModelNames,
}

/// Labels used to name parameters in chain output.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelNames {
    pub actions: Vec<String>,
    pub respondents: Vec<String>,
    pub covariates: Vec<String>,
    pub keys: Vec<String>,
}

impl ModelNames {
    pub fn param_names(&self, d: Dims) -> Vec<String> {
        param_names(d, &self.actions, &self.respondents, &self.covariates, &self.keys)
    }
}

impl ModelData {
    pub fn new(ds: &Dataset, key_states: &[StateIndex], path_options: PathOptions) -> Result<Self, crate::Error> {
        ds.validate()?;
        for &k in key_states {
            if k.get() >= ds.n_states() {
                return Err(ModelError::UnknownKeyState(k.get()).into());
            }
        }
        let paths = ds.transition_table(path_options);
        let mut respondents = Vec::with_capacity(ds.n_respondents());
        for (r, path) in ds.respondents.iter().zip(paths) {
            let correct = r.correct.ok_or_else(|| DataError::MissingLabel(r.id.clone()))?;
            respondents.push(RespondentData {
                group: usize::from(correct),
                covariates: r.covariates.clone(),
                onsets: key_states.iter().map(|&k| r.first_occurrence(k)).collect(),
                path,
            });
        }
        Ok(ModelData {
            dims: Dims {
                states: ds.n_states(),
                respondents: ds.n_respondents(),
                covariates: ds.n_covariates(),
                keys: key_states.len(),
            },
            key_states: key_states.to_vec(),
            respondents,
            path_options,
            names: ModelNames {
                actions: ds.catalog.actions().to_vec(),
                respondents: ds.respondents.iter().map(|r| r.id.clone()).collect(),
                covariates: ds.covariate_names.clone(),
                keys: key_states.iter().map(|&k| ds.catalog.name(k).into()).collect(),
            },
        })
    }

    fn respondent(&self, i: usize) -> Result<&RespondentData, ModelError> {
        self.respondents.get(i).ok_or(ModelError::UnknownRespondent(i))
    }

    /// Number of observed transitions over all respondents.
    pub fn n_transitions(&self) -> usize {
        self.respondents.iter().map(|r| r.path.transitions.len()).sum()
    }
}

/// Instantaneous rate of moving `m -> l` at time `t` for respondent `i`.
pub fn hazard(model: &ModelData, i: usize, m: usize, l: usize, t: f64, theta: &ParamState) -> Result<f64, ModelError> {
    if m == l {
        return Err(ModelError::SelfTransition(m));
    }
    let r = model.respondent(i)?;
    let c = r.group;
    Ok(theta.kappa[c][m] * theta.gamma[c][l] * theta.tau[i] * math::exp(r.exponent(theta, t)))
}

/// Hazard just before `t`, used for the transition density at an arrival.
pub fn arrival_hazard(
    model: &ModelData,
    i: usize,
    m: usize,
    l: usize,
    t: f64,
    theta: &ParamState,
) -> Result<f64, ModelError> {
    if m == l {
        return Err(ModelError::SelfTransition(m));
    }
    let r = model.respondent(i)?;
    let c = r.group;
    let eta = r.static_exponent(theta) + r.step_before(theta, t);
    Ok(theta.kappa[c][m] * theta.gamma[c][l] * theta.tau[i] * math::exp(eta))
}

/// `sum_{l != m} gamma[c][l]`.
fn gamma_excluding(theta: &ParamState, c: usize, m: usize) -> f64 {
    theta.gamma[c]
        .iter()
        .enumerate()
        .filter(|&(l, _)| l != m)
        .map(|(_, g)| g)
        .sum()
}

/// Exact integral of the total exit hazard out of `m` over `[start, end]`.
///
/// The interval is split at every onset time inside it; on each piece the
/// hazard is constant.
pub fn sojourn_integral(model: &ModelData, i: usize, m: usize, start: f64, end: f64, theta: &ParamState) -> f64 {
    if end <= start {
        return 0.0;
    }
    let r = &model.respondents[i];
    let c = r.group;
    let rate = theta.kappa[c][m] * gamma_excluding(theta, c, m) * theta.tau[i];
    let base = r.static_exponent(theta);
    let mut cuts: Vec<f64> = r
        .onsets
        .iter()
        .flatten()
        .copied()
        .filter(|&t| t > start && t < end)
        .collect();
    cuts.sort_by(f64::total_cmp);
    let mut total = 0.0;
    let mut a = start;
    for b in cuts.into_iter().chain(core::iter::once(end)) {
        if b > a {
            total += (b - a) * math::exp(base + r.step(theta, a));
            a = b;
        }
    }
    rate * total
}

/// Log-likelihood contribution of one respondent, by direct evaluation.
pub fn respondent_log_likelihood(model: &ModelData, i: usize, theta: &ParamState) -> f64 {
    let r = &model.respondents[i];
    let mut ll = 0.0;
    for tr in &r.path.transitions {
        let h = arrival_hazard(model, i, tr.from.get(), tr.to.get(), tr.end, theta)
            .expect("transition table never contains self-transitions");
        ll += math::ln(h);
    }
    for s in r.path.sojourns() {
        ll -= sojourn_integral(model, i, s.state.get(), s.start, s.end, theta);
    }
    ll
}

/// Full log-likelihood, summed over respondents in index order.
pub fn log_likelihood(model: &ModelData, theta: &ParamState) -> Result<f64, ModelError> {
    theta.validate(model.dims)?;
    let mut total = 0.0;
    for i in 0..model.respondents.len() {
        let ll = respondent_log_likelihood(model, i, theta);
        if !ll.is_finite() {
            return Err(ModelError::NonFinite { respondent: i });
        }
        total += ll;
    }
    Ok(total)
}

/// Sufficient statistics for one respondent.
///
/// Phase `p` is the stretch of time during which exactly the first `p`
/// executed key actions (in onset order) have occurred.
#[derive(Debug, Clone, PartialEq)]
pub struct RespondentStats {
    pub group: usize,
    pub n_transitions: f64,
    pub from_counts: Vec<f64>,
    pub to_counts: Vec<f64>,
    /// Executed key actions sorted by onset time.
    pub key_order: Vec<usize>,
    /// Position of each key action in `key_order`, `None` if not executed.
    pub key_position: Vec<Option<usize>>,
    /// `exposure[m * n_phases + p]`: time spent in state `m` during phase `p`.
    pub exposure: Vec<f64>,
    /// Transitions whose pre-arrival phase is `p`.
    pub transitions_in_phase: Vec<f64>,
    pub covariates: Vec<f64>,
    pub onsets: Vec<Option<f64>>,
}

impl RespondentStats {
    fn new(r: &RespondentData, n_states: usize) -> Self {
        let mut executed: Vec<(usize, f64)> = r
            .onsets
            .iter()
            .enumerate()
            .filter_map(|(k, o)| o.map(|t| (k, t)))
            .collect();
        executed.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        let key_order: Vec<usize> = executed.iter().map(|&(k, _)| k).collect();
        let times: Vec<f64> = executed.iter().map(|&(_, t)| t).collect();
        let mut key_position = vec![None; r.onsets.len()];
        for (pos, &k) in key_order.iter().enumerate() {
            key_position[k] = Some(pos);
        }
        let n_phases = key_order.len() + 1;
        let phase_at = |t: f64| times.iter().filter(|&&o| o <= t).count();
        let phase_before = |t: f64| times.iter().filter(|&&o| o < t).count();

        let mut exposure = vec![0.0; n_states * n_phases];
        for s in r.path.sojourns() {
            if s.end <= s.start {
                continue;
            }
            let m = s.state.get();
            let mut a = s.start;
            for b in times
                .iter()
                .copied()
                .filter(|&t| t > s.start && t < s.end)
                .chain(core::iter::once(s.end))
            {
                if b > a {
                    exposure[m * n_phases + phase_at(a)] += b - a;
                    a = b;
                }
            }
        }
        let mut from_counts = vec![0.0; n_states];
        let mut to_counts = vec![0.0; n_states];
        let mut transitions_in_phase = vec![0.0; n_phases];
        for tr in &r.path.transitions {
            from_counts[tr.from.get()] += 1.0;
            to_counts[tr.to.get()] += 1.0;
            transitions_in_phase[phase_before(tr.end)] += 1.0;
        }
        RespondentStats {
            group: r.group,
            n_transitions: r.path.transitions.len() as f64,
            from_counts,
            to_counts,
            key_order,
            key_position,
            exposure,
            transitions_in_phase,
            covariates: r.covariates.clone(),
            onsets: r.onsets.clone(),
        }
    }

    fn n_phases(&self) -> usize {
        self.key_order.len() + 1
    }

    fn static_exponent(&self, theta: &ParamState) -> f64 {
        let mut eta: f64 = self.covariates.iter().zip(&theta.alpha).map(|(x, a)| x * a).sum();
        for (k, onset) in self.onsets.iter().enumerate() {
            if let Some(t) = onset {
                eta += theta.beta1[k] + theta.beta3[k] * t;
            }
        }
        eta
    }

    /// Cumulative beta2 step per phase.
    fn phase_steps(&self, beta2: &[f64]) -> Vec<f64> {
        let mut cum = Vec::with_capacity(self.n_phases());
        let mut acc = 0.0;
        cum.push(acc);
        for &k in &self.key_order {
            acc += beta2[k];
            cum.push(acc);
        }
        cum
    }

    /// `X_m = sum_p exposure[m][p] * exp(step_p)` for every state.
    fn weighted_exposure(&self, beta2: &[f64]) -> Vec<f64> {
        let cum = self.phase_steps(beta2);
        let w: Vec<f64> = cum.iter().map(|&c| math::exp(c)).collect();
        let np = self.n_phases();
        self.exposure
            .chunks(np)
            .map(|row| row.iter().zip(&w).map(|(e, w)| e * w).sum())
            .collect()
    }

    fn step_term(&self, beta2: &[f64]) -> f64 {
        self.phase_steps(beta2)
            .iter()
            .zip(&self.transitions_in_phase)
            .map(|(c, n)| c * n)
            .sum()
    }

    /// Log-likelihood contribution computed from the statistics.
    pub fn log_likelihood(&self, i: usize, theta: &ParamState) -> f64 {
        let c = self.group;
        let x = self.weighted_exposure(&theta.beta2);
        let static_eta = self.static_exponent(theta);
        self.evaluate(theta, c, theta.tau[i], static_eta, &x, self.step_term(&theta.beta2))
    }

    fn evaluate(&self, theta: &ParamState, c: usize, tau: f64, static_eta: f64, x: &[f64], step_term: f64) -> f64 {
        let kappa = &theta.kappa[c];
        let gamma = &theta.gamma[c];
        let gamma_total: f64 = gamma.iter().sum();
        let mut ll = self.n_transitions * (math::ln(tau) + static_eta) + step_term;
        let mut rate = 0.0;
        for m in 0..kappa.len() {
            if self.from_counts[m] > 0.0 {
                ll += self.from_counts[m] * math::ln(kappa[m]);
            }
            if self.to_counts[m] > 0.0 {
                ll += self.to_counts[m] * math::ln(gamma[m]);
            }
            rate += kappa[m] * (gamma_total - gamma[m]) * x[m];
        }
        ll - tau * math::exp(static_eta) * rate
    }
}

/// Per-respondent sufficient statistics for the whole dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureStats {
    pub dims: Dims,
    pub respondents: Vec<RespondentStats>,
    /// `from_totals[c][m]`: transitions out of `m` in group `c`.
    pub from_totals: [Vec<f64>; 2],
    pub to_totals: [Vec<f64>; 2],
    pub by_group: [Vec<usize>; 2],
    /// Respondents who executed each key action.
    pub by_key: Vec<Vec<usize>>,
}

impl ExposureStats {
    pub fn new(model: &ModelData) -> Self {
        let e = model.dims.states;
        let respondents: Vec<RespondentStats> = model.respondents.iter().map(|r| RespondentStats::new(r, e)).collect();
        let mut from_totals = [vec![0.0; e], vec![0.0; e]];
        let mut to_totals = [vec![0.0; e], vec![0.0; e]];
        let mut by_group = [Vec::new(), Vec::new()];
        let mut by_key = vec![Vec::new(); model.dims.keys];
        for (i, r) in respondents.iter().enumerate() {
            for m in 0..e {
                from_totals[r.group][m] += r.from_counts[m];
                to_totals[r.group][m] += r.to_counts[m];
            }
            by_group[r.group].push(i);
            for (k, pos) in r.key_position.iter().enumerate() {
                if pos.is_some() {
                    by_key[k].push(i);
                }
            }
        }
        ExposureStats {
            dims: model.dims,
            respondents,
            from_totals,
            to_totals,
            by_group,
            by_key,
        }
    }

    pub fn log_likelihood(&self, theta: &ParamState) -> f64 {
        self.respondents
            .iter()
            .enumerate()
            .map(|(i, r)| r.log_likelihood(i, theta))
            .sum()
    }

    /// Respondents whose contribution can change when `block` changes.
    fn affected(&self, block: Block, old: &ParamState, new: &ParamState) -> Vec<usize> {
        match block {
            Block::Kappa0 | Block::Gamma0 => self.by_group[0].clone(),
            Block::Kappa1 | Block::Gamma1 => self.by_group[1].clone(),
            Block::Tau => (0..self.dims.respondents)
                .filter(|&i| old.tau[i] != new.tau[i])
                .collect(),
            Block::Alpha => (0..self.dims.respondents).collect(),
            Block::Beta1 | Block::Beta2 | Block::Beta3 => {
                let mut hit = vec![false; self.dims.respondents];
                for k in 0..self.dims.keys {
                    if old.block(block)[k] != new.block(block)[k] {
                        for &i in &self.by_key[k] {
                            hit[i] = true;
                        }
                    }
                }
                (0..self.dims.respondents).filter(|&i| hit[i]).collect()
            }
        }
    }

    /// `ll(new) - ll(old)` when the two states differ only in `block`.
    ///
    /// Only respondents touched by the block are re-evaluated.
    pub fn log_likelihood_delta(&self, block: Block, old: &ParamState, new: &ParamState) -> f64 {
        self.affected(block, old, new)
            .into_iter()
            .map(|i| {
                let r = &self.respondents[i];
                r.log_likelihood(i, new) - r.log_likelihood(i, old)
            })
            .sum()
    }

    /// Analytic gradient. Positive blocks are differentiated with respect
    /// to their logarithm, coefficient blocks directly.
    pub fn gradient(&self, theta: &ParamState) -> ParamState {
        let d = self.dims;
        let mut g = ParamState {
            kappa: [vec![0.0; d.states], vec![0.0; d.states]],
            gamma: [vec![0.0; d.states], vec![0.0; d.states]],
            tau: vec![0.0; d.respondents],
            alpha: vec![0.0; d.covariates],
            beta1: vec![0.0; d.keys],
            beta2: vec![0.0; d.keys],
            beta3: vec![0.0; d.keys],
        };
        for (i, r) in self.respondents.iter().enumerate() {
            let c = r.group;
            let kappa = &theta.kappa[c];
            let gamma = &theta.gamma[c];
            let gamma_total: f64 = gamma.iter().sum();
            let cum = r.phase_steps(&theta.beta2);
            let np = r.n_phases();
            let f = theta.tau[i] * math::exp(r.static_exponent(theta));
            let x = r.weighted_exposure(&theta.beta2);
            // contribution of state m to the integrated hazard
            let h: Vec<f64> = (0..d.states)
                .map(|m| f * kappa[m] * (gamma_total - gamma[m]) * x[m])
                .collect();
            let total_rate: f64 = h.iter().sum();
            let resid = r.n_transitions - total_rate;

            g.tau[i] += resid;
            for (p, xp) in r.covariates.iter().enumerate() {
                g.alpha[p] += xp * resid;
            }
            for (k, onset) in r.onsets.iter().enumerate() {
                if let Some(t) = onset {
                    g.beta1[k] += resid;
                    g.beta3[k] += t * resid;
                }
            }
            for (k, pos) in r.key_position.iter().enumerate() {
                let Some(pos) = *pos else { continue };
                let after_trans: f64 = r.transitions_in_phase[pos + 1..].iter().sum();
                let mut after_rate = 0.0;
                for m in 0..d.states {
                    let row = &r.exposure[m * np..(m + 1) * np];
                    let xa: f64 = (pos + 1..np).map(|p| row[p] * math::exp(cum[p])).sum();
                    after_rate += kappa[m] * (gamma_total - gamma[m]) * xa;
                }
                g.beta2[k] += after_trans - f * after_rate;
            }
            for m in 0..d.states {
                g.kappa[c][m] += r.from_counts[m] - h[m];
            }
            // d/dlog gamma_l of sum_m kappa_m (G - gamma_m) X_m = gamma_l * sum_{m != l} kappa_m X_m
            let kx: Vec<f64> = (0..d.states).map(|m| kappa[m] * x[m]).collect();
            let kx_total: f64 = kx.iter().sum();
            for l in 0..d.states {
                g.gamma[c][l] += r.to_counts[l] - f * gamma[l] * (kx_total - kx[l]);
            }
        }
        g
    }
}

/// Incrementally maintained likelihood terms for single-scalar updates.
///
/// Holds, per respondent, the static exponent and the beta2-weighted
/// exposure per state; everything else is recomputed on demand.
#[derive(Debug, Clone)]
pub struct LikelihoodCache<'a> {
    stats: &'a ExposureStats,
    static_eta: Vec<f64>,
    /// `x[i * E + m]`.
    x: Vec<f64>,
}

impl<'a> LikelihoodCache<'a> {
    pub fn new(stats: &'a ExposureStats, theta: &ParamState) -> Self {
        let e = stats.dims.states;
        let mut x = Vec::with_capacity(stats.respondents.len() * e);
        for r in &stats.respondents {
            x.extend(r.weighted_exposure(&theta.beta2));
        }
        LikelihoodCache {
            stats,
            static_eta: stats.respondents.iter().map(|r| r.static_exponent(theta)).collect(),
            x,
        }
    }

    pub fn stats(&self) -> &ExposureStats {
        self.stats
    }

    fn x_row(&self, i: usize) -> &[f64] {
        let e = self.stats.dims.states;
        &self.x[i * e..(i + 1) * e]
    }

    /// `sum_m kappa_m (G - gamma_m) X_im` for respondent `i`.
    fn rate_factor(&self, theta: &ParamState, i: usize) -> f64 {
        let c = self.stats.respondents[i].group;
        let kappa = &theta.kappa[c];
        let gamma = &theta.gamma[c];
        let gt: f64 = gamma.iter().sum();
        self.x_row(i)
            .iter()
            .enumerate()
            .map(|(m, x)| kappa[m] * (gt - gamma[m]) * x)
            .sum()
    }

    /// Log-likelihood change from setting `param` to `new_value`.
    pub fn delta(&self, theta: &ParamState, param: Param, new_value: f64) -> f64 {
        let old = theta.get(param);
        if new_value == old {
            return 0.0;
        }
        let s = self.stats;
        match param.block {
            Block::Kappa0 | Block::Kappa1 => {
                let c = usize::from(param.block == Block::Kappa1);
                let m = param.index;
                let gamma = &theta.gamma[c];
                let g_ex: f64 = gamma.iter().sum::<f64>() - gamma[m];
                let exposure: f64 = s.by_group[c]
                    .iter()
                    .map(|&i| theta.tau[i] * math::exp(self.static_eta[i]) * self.x_row(i)[m])
                    .sum();
                s.from_totals[c][m] * (math::ln(new_value) - math::ln(old)) - (new_value - old) * g_ex * exposure
            }
            Block::Gamma0 | Block::Gamma1 => {
                let c = usize::from(param.block == Block::Gamma1);
                let l = param.index;
                let kappa = &theta.kappa[c];
                let exposure: f64 = s.by_group[c]
                    .iter()
                    .map(|&i| {
                        let x = self.x_row(i);
                        let kx: f64 = (0..kappa.len()).filter(|&m| m != l).map(|m| kappa[m] * x[m]).sum();
                        theta.tau[i] * math::exp(self.static_eta[i]) * kx
                    })
                    .sum();
                s.to_totals[c][l] * (math::ln(new_value) - math::ln(old)) - (new_value - old) * exposure
            }
            Block::Tau => {
                let i = param.index;
                let r = &s.respondents[i];
                r.n_transitions * (math::ln(new_value) - math::ln(old))
                    - (new_value - old) * math::exp(self.static_eta[i]) * self.rate_factor(theta, i)
            }
            Block::Alpha => {
                let p = param.index;
                let d = new_value - old;
                (0..s.respondents.len())
                    .map(|i| {
                        let xp = s.respondents[i].covariates[p];
                        self.static_shift(theta, i, xp * d)
                    })
                    .sum()
            }
            Block::Beta1 => {
                let d = new_value - old;
                s.by_key[param.index]
                    .iter()
                    .map(|&i| self.static_shift(theta, i, d))
                    .sum()
            }
            Block::Beta3 => {
                let k = param.index;
                let d = new_value - old;
                s.by_key[k]
                    .iter()
                    .map(|&i| {
                        let t = s.respondents[i].onsets[k].unwrap_or(0.0);
                        self.static_shift(theta, i, t * d)
                    })
                    .sum()
            }
            Block::Beta2 => {
                let k = param.index;
                let d = new_value - old;
                let growth = math::expm1(d);
                s.by_key[k]
                    .iter()
                    .map(|&i| {
                        let r = &s.respondents[i];
                        let pos = r.key_position[k].expect("by_key lists executing respondents");
                        let np = r.n_phases();
                        let cum = r.phase_steps(&theta.beta2);
                        let c = r.group;
                        let kappa = &theta.kappa[c];
                        let gamma = &theta.gamma[c];
                        let gt: f64 = gamma.iter().sum();
                        let mut after = 0.0;
                        for m in 0..kappa.len() {
                            let row = &r.exposure[m * np..(m + 1) * np];
                            let xa: f64 = (pos + 1..np).map(|p| row[p] * math::exp(cum[p])).sum();
                            after += kappa[m] * (gt - gamma[m]) * xa;
                        }
                        let after_trans: f64 = r.transitions_in_phase[pos + 1..].iter().sum();
                        d * after_trans - theta.tau[i] * math::exp(self.static_eta[i]) * growth * after
                    })
                    .sum()
            }
        }
    }

    /// Change in respondent `i`'s contribution when its static exponent
    /// moves by `shift`.
    fn static_shift(&self, theta: &ParamState, i: usize, shift: f64) -> f64 {
        if shift == 0.0 {
            return 0.0;
        }
        let r = &self.stats.respondents[i];
        r.n_transitions * shift
            - theta.tau[i] * math::exp(self.static_eta[i]) * math::expm1(shift) * self.rate_factor(theta, i)
    }

    /// Writes `new_value` into `theta` and refreshes the affected cache rows.
    pub fn commit(&mut self, theta: &mut ParamState, param: Param, new_value: f64) {
        theta.set(param, new_value);
        let s = self.stats;
        let e = s.dims.states;
        match param.block {
            Block::Alpha => {
                for (i, r) in s.respondents.iter().enumerate() {
                    self.static_eta[i] = r.static_exponent(theta);
                }
            }
            Block::Beta1 | Block::Beta3 => {
                for &i in &s.by_key[param.index] {
                    self.static_eta[i] = s.respondents[i].static_exponent(theta);
                }
            }
            Block::Beta2 => {
                for &i in &s.by_key[param.index] {
                    let x = s.respondents[i].weighted_exposure(&theta.beta2);
                    self.x[i * e..(i + 1) * e].copy_from_slice(&x);
                }
            }
            _ => {}
        }
    }

    /// Full log-likelihood from cached terms.
    pub fn total(&self, theta: &ParamState) -> f64 {
        self.stats
            .respondents
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r.evaluate(
                    theta,
                    r.group,
                    theta.tau[i],
                    self.static_eta[i],
                    self.x_row(i),
                    r.step_term(&theta.beta2),
                )
            })
            .sum()
    }
}

/// Human-readable parameter names, `block[label]`.
pub fn param_names(
    d: Dims,
    actions: &[String],
    respondents: &[String],
    covariates: &[String],
    keys: &[String],
) -> Vec<String> {
    let mut out = Vec::with_capacity(n_params(d));
    for b in Block::ALL {
        let labels: &[String] = match b {
            Block::Kappa0 | Block::Kappa1 | Block::Gamma0 | Block::Gamma1 => actions,
            Block::Tau => respondents,
            Block::Alpha => covariates,
            Block::Beta1 | Block::Beta2 | Block::Beta3 => keys,
        };
        for label in labels.iter().take(b.len(d)) {
            out.push(format!("{}[{}]", b.name(), label));
        }
    }
    out
}
