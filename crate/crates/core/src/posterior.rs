//! Posterior summaries from retained draws: means, highest posterior
//! density intervals, significance, correct-minus-incorrect differences for
//! kappa and gamma, and per-group tau summaries.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::PosteriorError;
use crate::hazard::{Block, Param};
use crate::math;
use crate::sampler::ChainStore;

/// Smallest sample accepted by [`hpd_interval`].
pub const MIN_HPD_SAMPLES: usize = 100;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    math::sqrt(xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64)
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Linear-interpolation quantile of already sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = math::floor(h) as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
    /// All samples were identical.
    pub degenerate: bool,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.high - self.low
    }

    pub fn contains(&self, v: f64) -> bool {
        self.low <= v && v <= self.high
    }
}

fn check_mass(mass: f64) -> Result<(), PosteriorError> {
    if mass > 0.0 && mass < 1.0 {
        Ok(())
    } else {
        Err(PosteriorError::Mass(mass))
    }
}

/// Shortest window of consecutive sorted samples holding `ceil(mass * n)`
/// of them. Equal-width windows resolve to the leftmost.
pub fn hpd_interval(samples: &[f64], mass: f64) -> Result<Interval, PosteriorError> {
    check_mass(mass)?;
    let n = samples.len();
    if n < MIN_HPD_SAMPLES {
        return Err(PosteriorError::TooFewSamples {
            needed: MIN_HPD_SAMPLES,
            got: n,
        });
    }
    let s = sorted(samples);
    let k = (math::ceil(mass * n as f64) as usize).clamp(1, n);
    let mut best = 0;
    let mut best_width = f64::INFINITY;
    for i in 0..=n - k {
        let w = s[i + k - 1] - s[i];
        if w < best_width {
            best_width = w;
            best = i;
        }
    }
    Ok(Interval {
        low: s[best],
        high: s[best + k - 1],
        degenerate: s[0] == s[n - 1],
    })
}

/// Equal-tailed interval holding the same `ceil(mass * n)` sorted samples
/// as [`hpd_interval`], with the excluded samples split evenly between the
/// tails (the extra one, if any, goes to the upper tail).
pub fn equal_tail_interval(samples: &[f64], mass: f64) -> Result<Interval, PosteriorError> {
    check_mass(mass)?;
    if samples.is_empty() {
        return Err(PosteriorError::EmptyChain);
    }
    let s = sorted(samples);
    let n = s.len();
    let k = (math::ceil(mass * n as f64) as usize).clamp(1, n);
    let lo = (n - k) / 2;
    Ok(Interval {
        low: s[lo],
        high: s[lo + k - 1],
        degenerate: s[0] == s[n - 1],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Significance {
    Positive,
    Negative,
    NotSignificant,
}

impl Significance {
    pub fn from_interval(iv: &Interval) -> Self {
        if iv.low > 0.0 {
            Significance::Positive
        } else if iv.high < 0.0 {
            Significance::Negative
        } else {
            Significance::NotSignificant
        }
    }

    pub fn is_significant(self) -> bool {
        self != Significance::NotSignificant
    }

    /// Table marker: `sig+`, `sig-` or `ns`.
    pub fn marker(self) -> &'static str {
        match self {
            Significance::Positive => "sig+",
            Significance::Negative => "sig-",
            Significance::NotSignificant => "ns",
        }
    }
}

/// Mean, sd, HPD and significance of one quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub sd: f64,
    pub hpd: Interval,
    pub significance: Significance,
}

impl Estimate {
    pub fn from_draws(draws: &[f64], mass: f64) -> Result<Self, PosteriorError> {
        let hpd = hpd_interval(draws, mass)?;
        Ok(Estimate {
            mean: mean(draws),
            sd: sd(draws),
            hpd,
            significance: Significance::from_interval(&hpd),
        })
    }
}

/// Five-number summary plus Tukey fences; whiskers stop at the most
/// extreme data inside the fences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub lower_fence: f64,
    pub upper_fence: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
}

impl BoxStats {
    pub fn from_values(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let s = sorted(xs);
        let q1 = quantile_sorted(&s, 0.25);
        let q3 = quantile_sorted(&s, 0.75);
        let iqr = q3 - q1;
        let lower_fence = q1 - 1.5 * iqr;
        let upper_fence = q3 + 1.5 * iqr;
        let whisker_low = s.iter().copied().find(|&v| v >= lower_fence).unwrap_or(s[0]);
        let whisker_high = s
            .iter()
            .rev()
            .copied()
            .find(|&v| v <= upper_fence)
            .unwrap_or(s[s.len() - 1]);
        Some(BoxStats {
            min: s[0],
            q1,
            median: quantile_sorted(&s, 0.5),
            q3,
            max: s[s.len() - 1],
            lower_fence,
            upper_fence,
            whisker_low,
            whisker_high,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub param: Param,
    pub estimate: Estimate,
}

/// Correct-minus-incorrect difference for one state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffSummary {
    pub state: usize,
    pub key_action: bool,
    pub estimate: Estimate,
    pub boxplot: BoxStats,
}

/// Difference draws `kappa1[m] - kappa0[m]` and `gamma1[l] - gamma0[l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupDifferences {
    /// `kappa[m]` holds one value per retained draw.
    pub kappa: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<f64>>,
}

pub fn group_differences(chain: &ChainStore) -> GroupDifferences {
    let e = chain.dims.states;
    let diff = |hi: Block, lo: Block| -> Vec<Vec<f64>> {
        (0..e)
            .map(|m| {
                let a = chain.column_of(Param::new(hi, m));
                let b = chain.column_of(Param::new(lo, m));
                a.iter().zip(&b).map(|(x, y)| x - y).collect()
            })
            .collect()
    };
    GroupDifferences {
        kappa: diff(Block::Kappa1, Block::Kappa0),
        gamma: diff(Block::Gamma1, Block::Gamma0),
    }
}

/// Per-draw mean of `ln tau_i` within each outcome group.
pub fn log_tau_group_means(chain: &ChainStore) -> [Vec<f64>; 2] {
    let offset = Block::Tau.offset(chain.dims);
    let mut out = [Vec::with_capacity(chain.n_rows), Vec::with_capacity(chain.n_rows)];
    let counts = [0usize, 1].map(|g| chain.respondent_groups.iter().filter(|&&c| c == g).count());
    for r in 0..chain.n_rows {
        let row = chain.row(r);
        let mut sums = [0.0; 2];
        for (i, &g) in chain.respondent_groups.iter().enumerate() {
            sums[g] += math::ln(row[offset + i]);
        }
        for g in 0..2 {
            if counts[g] > 0 {
                out[g].push(sums[g] / counts[g] as f64);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauGroup {
    pub group: usize,
    pub respondents: usize,
    /// Mean over respondents of the tau posterior means.
    pub mean: f64,
    /// Boxplot of per-respondent posterior means.
    pub boxplot: Option<BoxStats>,
    /// Posterior of the group mean of `ln tau`.
    pub log_mean: Option<Estimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub mass: f64,
    pub params: Vec<ParamSummary>,
    pub kappa_diff: Vec<DiffSummary>,
    pub gamma_diff: Vec<DiffSummary>,
    pub tau_groups: Vec<TauGroup>,
    /// Posterior mean of each `tau_i`, in respondent order.
    pub tau_means: Vec<f64>,
    pub warnings: Vec<String>,
}

impl PosteriorSummary {
    pub fn get(&self, p: Param) -> Option<&ParamSummary> {
        self.params.iter().find(|s| s.param == p)
    }
}

/// Summarizes every parameter and the derived group quantities.
pub fn summarize(chain: &ChainStore, mass: f64) -> Result<PosteriorSummary, PosteriorError> {
    if chain.n_rows == 0 {
        return Err(PosteriorError::EmptyChain);
    }
    let d = chain.dims;
    let mut warnings = Vec::new();
    let mut params = Vec::with_capacity(chain.n_cols());
    for b in Block::ALL {
        for i in 0..b.len(d) {
            let p = Param::new(b, i);
            let draws = chain.column_of(p);
            let estimate = Estimate::from_draws(&draws, mass)?;
            if estimate.hpd.degenerate && b.is_positive() {
                // fixed (anchored or frozen) parameters end up here
                warnings.push(alloc::format!(
                    "{} is constant across draws",
                    chain.param_names[b.offset(d) + i]
                ));
            }
            params.push(ParamSummary {
                name: chain.param_names[b.offset(d) + i].clone(),
                param: p,
                estimate,
            });
        }
    }
    let diffs = group_differences(chain);
    let diff_summaries = |draws: &[Vec<f64>]| -> Result<Vec<DiffSummary>, PosteriorError> {
        draws
            .iter()
            .enumerate()
            .map(|(m, v)| {
                Ok(DiffSummary {
                    state: m,
                    key_action: chain.key_states.contains(&m),
                    estimate: Estimate::from_draws(v, mass)?,
                    boxplot: BoxStats::from_values(v).expect("non-empty chain"),
                })
            })
            .collect()
    };
    let kappa_diff = diff_summaries(&diffs.kappa)?;
    let gamma_diff = diff_summaries(&diffs.gamma)?;

    let tau_offset = Block::Tau.offset(d);
    let tau_means: Vec<f64> = (0..d.respondents)
        .map(|i| params[tau_offset + i].estimate.mean)
        .collect();
    let log_means = log_tau_group_means(chain);
    let mut tau_groups = Vec::with_capacity(2);
    for g in 0..2 {
        let members: Vec<f64> = chain
            .respondent_groups
            .iter()
            .zip(&tau_means)
            .filter(|(&c, _)| c == g)
            .map(|(_, &t)| t)
            .collect();
        let log_mean = if log_means[g].is_empty() {
            None
        } else {
            Some(Estimate::from_draws(&log_means[g], mass)?)
        };
        tau_groups.push(TauGroup {
            group: g,
            respondents: members.len(),
            mean: if members.is_empty() { f64::NAN } else { mean(&members) },
            boxplot: BoxStats::from_values(&members),
            log_mean,
        });
    }
    Ok(PosteriorSummary {
        mass,
        params,
        kappa_diff,
        gamma_diff,
        tau_groups,
        tau_means,
        warnings,
    })
}

/// Gelman-Rubin potential scale reduction for one quantity across chains
/// of equal length.
pub fn gelman_rubin(chains: &[&[f64]]) -> f64 {
    let m = chains.len();
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    if m < 2 || n < 2 {
        return f64::NAN;
    }
    let means: Vec<f64> = chains.iter().map(|c| mean(&c[..n])).collect();
    let grand = mean(&means);
    let b = n as f64 / (m - 1) as f64 * means.iter().map(|x| (x - grand) * (x - grand)).sum::<f64>();
    let w = chains.iter().map(|c| {
        let s = sd(&c[..n]);
        s * s
    });
    let w = w.sum::<f64>() / m as f64;
    if w == 0.0 {
        return if b == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var = (n - 1) as f64 / n as f64 * w + b / n as f64;
    math::sqrt(var / w)
}

/// R-hat for every column of chains with a shared layout.
pub fn rhat(chains: &[ChainStore]) -> Result<Vec<f64>, PosteriorError> {
    let first = chains.first().ok_or(PosteriorError::EmptyChain)?;
    if chains.iter().any(|c| c.param_names != first.param_names) {
        return Err(PosteriorError::IncompatibleChains);
    }
    Ok((0..first.n_cols())
        .map(|j| {
            let cols: Vec<Vec<f64>> = chains.iter().map(|c| c.column(j)).collect();
            let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
            gelman_rubin(&refs)
        })
        .collect())
}

/// Draws as a vector of per-parameter columns (used by plotting helpers).
pub fn columns(chain: &ChainStore) -> Vec<Vec<f64>> {
    (0..chain.n_cols()).map(|j| chain.column(j)).collect()
}
