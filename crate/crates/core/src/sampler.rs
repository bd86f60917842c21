//! Adaptive random-walk Metropolis-within-Gibbs.
//!
//! Every scalar parameter is updated in turn by a Gaussian random walk.
//! kappa, gamma and tau move on the log scale (the Jacobian enters the
//! acceptance ratio), the regression coefficients on their natural scale.
//! During the adaptation phase each scalar's step size is nudged every
//! `adapt_window` iterations toward the target acceptance band; after
//! `adapt_until` the kernel is fixed.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::SamplerError;
use crate::hazard::{Block, Dims, ExposureStats, LikelihoodCache, ModelData, Param, ParamState};
use crate::math;

/// Hyperparameters: gamma(shape, rate) priors on the positive blocks and
/// zero-mean normal priors (standard deviations) on the coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorConfig {
    pub a_kappa: f64,
    pub b_kappa: f64,
    pub a_gamma: f64,
    pub b_gamma: f64,
    pub a_tau: f64,
    pub b_tau: f64,
    pub sigma_alpha: f64,
    pub sigma_beta: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            a_kappa: 1.0,
            b_kappa: 1.0,
            a_gamma: 1.0,
            b_gamma: 1.0,
            a_tau: 1.0,
            b_tau: 1.0,
            sigma_alpha: 10.0,
            sigma_beta: 10.0,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        let all = [
            self.a_kappa,
            self.b_kappa,
            self.a_gamma,
            self.b_gamma,
            self.a_tau,
            self.b_tau,
            self.sigma_alpha,
            self.sigma_beta,
        ];
        if all.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(SamplerError::Config(
                "every prior hyperparameter must be positive".into(),
            ))
        }
    }

    /// `(shape, rate)` for positive blocks, `None` for coefficient blocks.
    fn gamma_prior(&self, block: Block) -> Option<(f64, f64)> {
        match block {
            Block::Kappa0 | Block::Kappa1 => Some((self.a_kappa, self.b_kappa)),
            Block::Gamma0 | Block::Gamma1 => Some((self.a_gamma, self.b_gamma)),
            Block::Tau => Some((self.a_tau, self.b_tau)),
            _ => None,
        }
    }

    fn sigma(&self, block: Block) -> f64 {
        match block {
            Block::Alpha => self.sigma_alpha,
            _ => self.sigma_beta,
        }
    }

    /// Log prior density of one scalar, up to a constant.
    pub fn log_density(&self, block: Block, value: f64) -> f64 {
        match self.gamma_prior(block) {
            Some((a, b)) => (a - 1.0) * math::ln(value) - b * value,
            None => {
                let s = self.sigma(block);
                -0.5 * value * value / (s * s)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scan {
    /// Blocks in [`Block::ALL`] order every sweep.
    #[default]
    Fixed,
    /// Block order reshuffled every sweep.
    Random,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// kappa = gamma = tau = 1, coefficients 0.
    #[default]
    Neutral,
    /// Every scalar drawn from its prior.
    PriorDraw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub target_accept: (f64, f64),
    pub adapt_window: usize,
    pub adapt_until: usize,
    pub initial_step: f64,
    pub scan: Scan,
    pub init: InitMode,
    /// Fix kappa and gamma of the first catalog state to 1 in both groups.
    pub anchor: bool,
    /// Blocks held at their initial values.
    pub frozen: Vec<Block>,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            n_iter: 300_000,
            burn_in: 100_000,
            thin: 10,
            seed: 1,
            target_accept: (0.2, 0.5),
            adapt_window: 100,
            adapt_until: 100_000,
            initial_step: 0.3,
            scan: Scan::Fixed,
            init: InitMode::Neutral,
            anchor: false,
            frozen: Vec::new(),
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        let fail = |m: &str| Err(SamplerError::Config(m.into()));
        if self.burn_in >= self.n_iter {
            return fail("burn_in must be smaller than n_iter");
        }
        if self.thin == 0 {
            return fail("thin must be at least 1");
        }
        let (lo, hi) = self.target_accept;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return fail("target_accept must satisfy 0 < low < high < 1");
        }
        if self.adapt_until > self.burn_in {
            return fail("adapt_until must not exceed burn_in");
        }
        if self.adapt_window == 0 {
            return fail("adapt_window must be at least 1");
        }
        if !(self.initial_step.is_finite() && self.initial_step > 0.0) {
            return fail("initial_step must be positive");
        }
        Ok(())
    }

    /// `(n_iter - burn_in) / thin`.
    pub fn retained(&self) -> usize {
        (self.n_iter - self.burn_in) / self.thin
    }

    fn is_anchored(&self, p: Param) -> bool {
        self.anchor && p.index == 0 && matches!(p.block, Block::Kappa0 | Block::Kappa1 | Block::Gamma0 | Block::Gamma1)
    }
}

/// Multiplicative step change per adaptation.
pub const ADAPT_DELTA: f64 = 0.1;

/// Shrinks the step when the windowed acceptance rate is below the band,
/// grows it when above, and leaves it alone inside.
pub fn adapt_step(accepted: u64, proposed: u64, step: f64, band: (f64, f64)) -> f64 {
    if proposed == 0 {
        return step;
    }
    let rate = accepted as f64 / proposed as f64;
    if rate < band.0 {
        step * math::exp(-ADAPT_DELTA)
    } else if rate > band.1 {
        step * math::exp(ADAPT_DELTA)
    } else {
        step
    }
}

/// Starting point of a chain. Anchored entries are set to 1 by the caller.
pub fn init_state<R: Rng + ?Sized>(dims: Dims, priors: &PriorConfig, mode: InitMode, rng: &mut R) -> ParamState {
    let mut s = ParamState::neutral(dims);
    if mode == InitMode::PriorDraw {
        for b in Block::ALL {
            let values = s.block_mut(b);
            match priors.gamma_prior(b) {
                Some((a, rate)) => {
                    let g = Gamma::new(a, 1.0 / rate).expect("validated hyperparameters");
                    for v in values.iter_mut() {
                        // keep draws away from an exact zero
                        *v = g.sample(rng).max(f64::MIN_POSITIVE);
                    }
                }
                None => {
                    let n = Normal::new(0.0, priors.sigma(b)).expect("validated hyperparameters");
                    for v in values.iter_mut() {
                        *v = n.sample(rng);
                    }
                }
            }
        }
    }
    s
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptCount {
    pub accepted: u64,
    pub proposed: u64,
}

impl AcceptCount {
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    fn add(&mut self, other: AcceptCount) {
        self.accepted += other.accepted;
        self.proposed += other.proposed;
    }
}

/// Retained draws of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainStore {
    pub dims: Dims,
    pub param_names: Vec<String>,
    /// Row-major, one row per retained draw.
    pub draws: Vec<f64>,
    pub n_rows: usize,
    /// Post-adaptation acceptance per block name.
    pub accept_rates: BTreeMap<String, AcceptCount>,
    /// Final per-scalar step sizes, flattened like the draws.
    pub step_sizes: Vec<f64>,
    pub warnings: Vec<String>,
    pub config: McmcConfig,
    pub priors: PriorConfig,
    /// Outcome group (0/1) of every respondent, for grouped summaries.
    pub respondent_groups: Vec<usize>,
    /// Catalog indices of the key actions.
    pub key_states: Vec<usize>,
}

impl ChainStore {
    pub fn n_cols(&self) -> usize {
        self.param_names.len()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let n = self.n_cols();
        &self.draws[r * n..(r + 1) * n]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.draws[r * self.n_cols() + j]).collect()
    }

    pub fn column_of(&self, p: Param) -> Vec<f64> {
        self.column(p.block.offset(self.dims) + p.index)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.param_names.iter().position(|n| n == name)
    }

    pub fn state_at(&self, r: usize) -> ParamState {
        ParamState::from_flat(self.dims, self.row(r)).expect("rows match dims")
    }

    /// Keeps every `k`-th row, starting with the `k`-th.
    pub fn thinned(&self, k: usize) -> ChainStore {
        let k = k.max(1);
        let n = self.n_cols();
        let mut draws = Vec::new();
        let mut rows = 0;
        for r in (k - 1..self.n_rows).step_by(k) {
            draws.extend_from_slice(&self.draws[r * n..(r + 1) * n]);
            rows += 1;
        }
        ChainStore {
            draws,
            n_rows: rows,
            ..self.clone()
        }
    }

    /// Appends the rows of other chains with the same layout.
    pub fn merge(chains: &[ChainStore]) -> Option<ChainStore> {
        let first = chains.first()?;
        let mut out = first.clone();
        for other in &chains[1..] {
            if other.param_names != first.param_names || other.respondent_groups != first.respondent_groups {
                return None;
            }
            out.draws.extend_from_slice(&other.draws);
            out.n_rows += other.n_rows;
            for (k, v) in &other.accept_rates {
                out.accept_rates.entry(k.clone()).or_default().add(*v);
            }
            out.warnings.extend(other.warnings.iter().cloned());
        }
        Some(out)
    }
}

/// Runs one chain.
pub fn run_chain(
    model: &ModelData,
    priors: &PriorConfig,
    cfg: &McmcConfig,
    init: Option<ParamState>,
) -> Result<ChainStore, SamplerError> {
    cfg.validate()?;
    priors.validate()?;
    let dims = model.dims;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut theta = match init {
        Some(t) => t,
        None => init_state(dims, priors, cfg.init, &mut rng),
    };
    if cfg.anchor {
        for b in [Block::Kappa0, Block::Kappa1, Block::Gamma0, Block::Gamma1] {
            if let Some(v) = theta.block_mut(b).first_mut() {
                *v = 1.0;
            }
        }
    }
    theta.validate(dims)?;

    let stats = ExposureStats::new(model);
    let mut cache = LikelihoodCache::new(&stats, &theta);
    if !cache.total(&theta).is_finite() {
        return Err(SamplerError::NonFiniteInit);
    }

    // every updatable scalar, grouped by block in update order
    let blocks: Vec<(Block, Vec<usize>)> = Block::ALL
        .into_iter()
        .filter(|b| !cfg.frozen.contains(b))
        .map(|b| {
            let idx: Vec<usize> = (0..b.len(dims))
                .filter(|&i| !cfg.is_anchored(Param::new(b, i)))
                .collect();
            (b, idx)
        })
        .filter(|(_, idx)| !idx.is_empty())
        .collect();

    let n_flat = crate::hazard::n_params(dims);
    let mut steps = vec![cfg.initial_step; n_flat];
    let mut window = vec![AcceptCount::default(); n_flat];
    let mut settled = vec![AcceptCount::default(); n_flat];
    let offsets: Vec<usize> = Block::ALL.iter().map(|b| b.offset(dims)).collect();
    let flat_index = |p: Param| offsets[Block::ALL.iter().position(|&b| b == p.block).unwrap()] + p.index;

    let n_rows = cfg.retained();
    let mut draws = Vec::with_capacity(n_rows * n_flat);
    let mut order: Vec<usize> = (0..blocks.len()).collect();

    for iter in 0..cfg.n_iter {
        if cfg.scan == Scan::Random {
            for i in (1..order.len()).rev() {
                let j = rng.random_range(0..=i);
                order.swap(i, j);
            }
        }
        let adapting = iter < cfg.adapt_until;
        for &bi in &order {
            let (block, ref indices) = blocks[bi];
            for &index in indices {
                let p = Param::new(block, index);
                let f = flat_index(p);
                let old = theta.get(p);
                let z: f64 = StandardNormal.sample(&mut rng);
                let u: f64 = rng.random();
                let (new, log_jacobian) = if block.is_positive() {
                    let jump = steps[f] * z;
                    (old * math::exp(jump), jump)
                } else {
                    (old + steps[f] * z, 0.0)
                };
                let mut accepted = false;
                if new.is_finite() && (!block.is_positive() || new > 0.0) {
                    let log_ratio = cache.delta(&theta, p, new) + priors.log_density(block, new)
                        - priors.log_density(block, old)
                        + log_jacobian;
                    if log_ratio.is_finite() && math::ln(u) < log_ratio {
                        cache.commit(&mut theta, p, new);
                        accepted = true;
                    }
                }
                let counter = if adapting { &mut window[f] } else { &mut settled[f] };
                counter.proposed += 1;
                counter.accepted += u64::from(accepted);
            }
        }
        if adapting && (iter + 1) % cfg.adapt_window == 0 {
            for (block, indices) in &blocks {
                for &index in indices {
                    let f = flat_index(Param::new(*block, index));
                    steps[f] = adapt_step(window[f].accepted, window[f].proposed, steps[f], cfg.target_accept);
                    window[f] = AcceptCount::default();
                }
            }
        }
        if iter >= cfg.burn_in && (iter + 1 - cfg.burn_in) % cfg.thin == 0 {
            for b in Block::ALL {
                draws.extend_from_slice(theta.block(b));
            }
        }
    }

    let mut accept_rates = BTreeMap::new();
    let mut warnings = Vec::new();
    for (block, indices) in &blocks {
        let mut total = AcceptCount::default();
        for &index in indices {
            total.add(settled[flat_index(Param::new(*block, index))]);
        }
        if total.proposed > 0 && (total.accepted == 0 || total.accepted == total.proposed) {
            warnings.push(format!(
                "acceptance rate of block {} is pinned at {} after adaptation",
                block.name(),
                total.rate()
            ));
        }
        accept_rates.insert(String::from(block.name()), total);
    }

    Ok(ChainStore {
        dims,
        param_names: model.names.param_names(dims),
        n_rows: draws.len() / n_flat.max(1),
        draws,
        accept_rates,
        step_sizes: steps,
        warnings,
        config: cfg.clone(),
        priors: *priors,
        respondent_groups: model.respondents.iter().map(|r| r.group).collect(),
        key_states: model.key_states.iter().map(|k| k.get()).collect(),
    })
}
