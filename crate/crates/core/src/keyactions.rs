//! Key-action extraction: ISF/TF weighting, weighted 2x2 chi-square scores,
//! the group-ratio filter and an elbow cutoff on the ranked scores.
//!
//! All logarithms are natural. Changing the base multiplies every weight
//! and every score by the same constant, so rankings and selections do not
//! depend on it.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, StateIndex};
use crate::error::KeyActionError;
use crate::math;

/// Numerator of the inverse sequence frequency.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IsfDenominator {
    /// `ln(N / sf_i)` with N the number of sequences (respondents).
    #[default]
    Sequences,
    /// `ln(E / sf_i)` with E the number of distinct actions.
    States,
}

/// Per-respondent, per-action weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    n_respondents: usize,
    n_states: usize,
    /// Row-major, `values[j * n_states + i]` is weight(i, j).
    values: Vec<f64>,
    /// Term frequencies, same layout as `values`.
    tf: Vec<u32>,
    pub isf: Vec<f64>,
    /// Number of sequences containing each action.
    pub sf: Vec<usize>,
}

impl WeightMatrix {
    pub fn weight(&self, respondent: usize, action: usize) -> f64 {
        self.values[respondent * self.n_states + action]
    }

    pub fn term_frequency(&self, respondent: usize, action: usize) -> u32 {
        self.tf[respondent * self.n_states + action]
    }

    pub fn n_respondents(&self) -> usize {
        self.n_respondents
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// Multiplies every weight by `c` (used to check scale invariance).
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }
}

/// `(1 + ln tf) * isf` for `tf >= 1`, zero otherwise.
pub fn tf_isf_weight(tf: u32, isf: f64) -> f64 {
    if tf == 0 {
        0.0
    } else {
        (1.0 + math::ln(tf as f64)) * isf
    }
}

pub fn compute_weights(ds: &Dataset, denominator: IsfDenominator) -> WeightMatrix {
    let n = ds.n_respondents();
    let e = ds.n_states();
    let mut tf = vec![0u32; n * e];
    for (j, r) in ds.respondents.iter().enumerate() {
        for ev in &r.events {
            tf[j * e + ev.state.get()] += 1;
        }
    }
    let mut sf = vec![0usize; e];
    for j in 0..n {
        for i in 0..e {
            if tf[j * e + i] > 0 {
                sf[i] += 1;
            }
        }
    }
    let numer = match denominator {
        IsfDenominator::Sequences => n as f64,
        IsfDenominator::States => e as f64,
    };
    let isf: Vec<f64> = sf
        .iter()
        .map(|&s| {
            // the catalog only contains actions that occur somewhere; subsets
            // produced by filtering may not, and such actions carry no weight
            if s == 0 {
                0.0
            } else {
                math::ln(numer / s as f64)
            }
        })
        .collect();
    let mut values = vec![0.0; n * e];
    for j in 0..n {
        for i in 0..e {
            values[j * e + i] = tf_isf_weight(tf[j * e + i], isf[i]);
        }
    }
    WeightMatrix {
        n_respondents: n,
        n_states: e,
        values,
        tf,
        isf,
        sf,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionScore {
    pub state: StateIndex,
    /// Weighted mass in the correct group.
    pub n: f64,
    /// Weighted mass in the incorrect group.
    pub m: f64,
    pub score: f64,
    pub ratio_pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareTable {
    pub actions: Vec<ActionScore>,
    pub len_correct: f64,
    pub len_incorrect: f64,
}

/// The 2x2 chi-square statistic for one action.
///
/// Rows are (action, all other actions); columns are (correct, incorrect).
/// Returns 0 if any margin vanishes.
pub fn chi_square_2x2(n: f64, m: f64, len_correct: f64, len_incorrect: f64) -> f64 {
    let o11 = n;
    let o12 = m;
    let o21 = len_correct - n;
    let o22 = len_incorrect - m;
    let denom = (o11 + o12) * (o11 + o21) * (o12 + o22) * (o21 + o22);
    if denom == 0.0 {
        return 0.0;
    }
    let total = len_correct + len_incorrect;
    let cross = o11 * o22 - o12 * o21;
    total * cross * cross / denom
}

/// `n / m > len_correct / len_incorrect`, evaluated without division.
/// An action never seen in the incorrect group passes when `n > 0`.
fn ratio_filter(n: f64, m: f64, len_correct: f64, len_incorrect: f64) -> bool {
    if m == 0.0 {
        n > 0.0
    } else {
        n * len_incorrect > m * len_correct
    }
}

pub fn chi_square_scores(w: &WeightMatrix, labels: &[bool]) -> Result<ChiSquareTable, KeyActionError> {
    if labels.len() != w.n_respondents {
        return Err(KeyActionError::LabelLength {
            expected: w.n_respondents,
            got: labels.len(),
        });
    }
    if !labels.iter().any(|&c| c) || labels.iter().all(|&c| c) {
        return Err(KeyActionError::EmptyGroup);
    }
    let e = w.n_states;
    let mut n = vec![0.0; e];
    let mut m = vec![0.0; e];
    for (j, &correct) in labels.iter().enumerate() {
        let row = &w.values[j * e..(j + 1) * e];
        let acc = if correct { &mut n } else { &mut m };
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    let len_correct: f64 = n.iter().sum();
    let len_incorrect: f64 = m.iter().sum();
    let actions = (0..e)
        .map(|i| ActionScore {
            state: StateIndex(i),
            n: n[i],
            m: m[i],
            score: chi_square_2x2(n[i], m[i], len_correct, len_incorrect),
            ratio_pass: ratio_filter(n[i], m[i], len_correct, len_incorrect),
        })
        .collect();
    Ok(ChiSquareTable {
        actions,
        len_correct,
        len_incorrect,
    })
}

/// Result of the elbow search on a descending score curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Elbow {
    /// 1-based rank of the elbow point, if the curve has one.
    pub rank: Option<usize>,
    /// Number of actions ranked strictly above the elbow point (at least 1).
    pub cutoff: usize,
}

/// Finds the interior point farthest from the chord joining the first and
/// last points of the rank-score curve. Everything ranked above that point
/// is kept. Collinear curves, and curves with no interior point, keep only
/// the top action. Ties go to the better rank.
pub fn elbow_cutoff(scores: &[f64]) -> Elbow {
    let r = scores.len();
    if r < 3 {
        return Elbow { rank: None, cutoff: 1 };
    }
    let (x1, y1) = (1.0, scores[0]);
    let (x2, y2) = (r as f64, scores[r - 1]);
    let norm = math::hypot(y2 - y1, x2 - x1);
    // distances at rounding level count as collinear
    let mut best = 1e-12 * (y1.abs() + y2.abs() + r as f64);
    let mut best_rank = None;
    for (idx, &y) in scores.iter().enumerate().take(r - 1).skip(1) {
        let x = (idx + 1) as f64;
        let d = ((y2 - y1) * x - (x2 - x1) * y + x2 * y1 - y2 * x1).abs() / norm;
        if d > best {
            best = d;
            best_rank = Some(idx + 1);
        }
    }
    match best_rank {
        Some(rank) => Elbow {
            rank: Some(rank),
            cutoff: (rank - 1).max(1),
        },
        None => Elbow { rank: None, cutoff: 1 },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Ratio-passing actions by descending score (ties by catalog index).
    pub ranking: Vec<StateIndex>,
    pub elbow: Elbow,
    /// Number of selected actions; equals `elbow.cutoff` unless overridden.
    pub elbow_index: usize,
    pub selected: Vec<StateIndex>,
}

pub fn select_key_actions(table: &ChiSquareTable, override_k: Option<usize>) -> Result<Selection, KeyActionError> {
    let mut candidates: Vec<&ActionScore> = table.actions.iter().filter(|a| a.ratio_pass).collect();
    candidates.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.state.cmp(&b.state)));
    let ranking: Vec<StateIndex> = candidates.iter().map(|a| a.state).collect();
    let scores: Vec<f64> = candidates.iter().map(|a| a.score).collect();
    let elbow = elbow_cutoff(&scores);
    let k = match override_k {
        Some(0) => return Err(KeyActionError::ZeroK),
        Some(k) => {
            if ranking.len() < k {
                return Err(KeyActionError::TooFewCandidates {
                    found: ranking.len(),
                    needed: k,
                });
            }
            k
        }
        None => {
            if ranking.len() < 2 {
                return Err(KeyActionError::TooFewCandidates {
                    found: ranking.len(),
                    needed: 2,
                });
            }
            elbow.cutoff
        }
    };
    Ok(Selection {
        selected: ranking[..k].to_vec(),
        ranking,
        elbow,
        elbow_index: k,
    })
}

/// First-occurrence time of each selected action, per respondent.
pub fn onset_times(ds: &Dataset, selected: &[StateIndex]) -> Vec<Vec<Option<f64>>> {
    ds.respondents
        .iter()
        .map(|r| selected.iter().map(|&s| r.first_occurrence(s)).collect())
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractOptions {
    pub isf_denominator: IsfDenominator,
    pub override_k: Option<usize>,
}

/// Everything the extraction step produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyActionReport {
    pub table: ChiSquareTable,
    pub selection: Selection,
    /// `onset_times[i][k]`: first time respondent `i` executed selected action `k`.
    pub onset_times: Vec<Vec<Option<f64>>>,
    /// Mean term frequency per respondent, per action.
    pub mean_frequency: Vec<f64>,
    /// Mean first-occurrence time among respondents who executed the action.
    pub mean_onset: Vec<Option<f64>>,
    pub options: ExtractOptions,
}

impl KeyActionReport {
    pub fn selected(&self) -> &[StateIndex] {
        &self.selection.selected
    }

    /// 1-based rank of `state` among ratio-passing actions.
    pub fn rank_of(&self, state: StateIndex) -> Option<usize> {
        self.selection.ranking.iter().position(|&s| s == state).map(|p| p + 1)
    }
}

/// Runs the full extraction pipeline on a labeled dataset.
pub fn extract_key_actions(ds: &Dataset, opts: ExtractOptions) -> Result<KeyActionReport, crate::Error> {
    let labels = ds.labels()?;
    let weights = compute_weights(ds, opts.isf_denominator);
    let table = chi_square_scores(&weights, &labels)?;
    let selection = select_key_actions(&table, opts.override_k)?;
    let onset_times = onset_times(ds, &selection.selected);
    let n = ds.n_respondents() as f64;
    let e = ds.n_states();
    let mean_frequency = (0..e)
        .map(|i| {
            (0..ds.n_respondents())
                .map(|j| weights.term_frequency(j, i) as f64)
                .sum::<f64>()
                / n
        })
        .collect();
    let mean_onset = (0..e)
        .map(|i| {
            let mut sum = 0.0;
            let mut count = 0usize;
            for r in &ds.respondents {
                if let Some(t) = r.first_occurrence(StateIndex(i)) {
                    sum += t;
                    count += 1;
                }
            }
            (count > 0).then(|| sum / count as f64)
        })
        .collect();
    Ok(KeyActionReport {
        table,
        selection,
        onset_times,
        mean_frequency,
        mean_onset,
        options: opts,
    })
}
