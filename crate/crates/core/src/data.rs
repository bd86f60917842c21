//! Canonical in-memory representation of action-sequence logs.
//!
//! A [`Dataset`] owns an [`ActionCatalog`] (the state space) and one
//! [`RespondentRecord`] per respondent. Construction validates every
//! invariant the downstream modules rely on, after which the dataset is
//! treated as immutable.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::DataError;
use crate::math;

/// Index of an action in the catalog (a state of the multi-state model).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateIndex(pub usize);

impl StateIndex {
    #[inline]
    pub fn get(self) -> usize {
        self.0
    }
}

/// Ordered set of distinct action identifiers.
///
/// Order is first appearance at parse time and never changes afterwards, so
/// parameter columns keep their meaning across runs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionCatalog {
    actions: Vec<String>,
    #[serde(skip)]
    index: BTreeMap<String, StateIndex>,
}

impl ActionCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a catalog from identifiers in the given order.
    pub fn from_actions<I, S>(actions: I) -> Result<Self, DataError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut catalog = Self::new();
        for action in actions {
            let action = action.into();
            if catalog.get(&action).is_some() {
                return Err(DataError::Malformed {
                    line: 0,
                    message: format!("duplicate action id {action}"),
                });
            }
            catalog.intern(&action)?;
        }
        Ok(catalog)
    }

    /// Returns the index of `action`, appending it if unseen.
    pub fn intern(&mut self, action: &str) -> Result<StateIndex, DataError> {
        if action.is_empty() {
            return Err(DataError::EmptyAction);
        }
        if let Some(&idx) = self.index.get(action) {
            return Ok(idx);
        }
        let idx = StateIndex(self.actions.len());
        self.actions.push(action.to_string());
        self.index.insert(action.to_string(), idx);
        Ok(idx)
    }

    pub fn get(&self, action: &str) -> Option<StateIndex> {
        self.index.get(action).copied()
    }

    pub fn name(&self, idx: StateIndex) -> &str {
        &self.actions[idx.0]
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Rebuilds the lookup map after deserialization.
    pub fn reindex(&mut self) {
        self.index = self
            .actions
            .iter()
            .enumerate()
            .map(|(i, a)| (a.clone(), StateIndex(i)))
            .collect();
    }
}

/// One logged action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub state: StateIndex,
    /// Minutes since the start of the item.
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RespondentRecord {
    pub id: String,
    /// Strictly increasing in time, never empty.
    pub events: Vec<Event>,
    pub covariates: Vec<f64>,
    /// `None` until labels are attached.
    pub correct: Option<bool>,
    /// Total time on the item; at least the last event time.
    pub total_time: f64,
}

impl RespondentRecord {
    pub fn first_time(&self) -> f64 {
        self.events[0].time
    }

    pub fn last_time(&self) -> f64 {
        self.events[self.events.len() - 1].time
    }

    /// Number of occurrences of `state` in the sequence.
    pub fn count(&self, state: StateIndex) -> usize {
        self.events.iter().filter(|e| e.state == state).count()
    }

    /// Time of the first occurrence of `state`, if any.
    pub fn first_occurrence(&self, state: StateIndex) -> Option<f64> {
        self.events.iter().find(|e| e.state == state).map(|e| e.time)
    }

    fn validate(&self) -> Result<(), DataError> {
        if self.events.is_empty() {
            return Err(DataError::NoEvents);
        }
        for e in &self.events {
            if !e.time.is_finite() || e.time < 0.0 {
                return Err(DataError::InvalidTime {
                    respondent: self.id.clone(),
                    time: e.time,
                });
            }
        }
        for w in self.events.windows(2) {
            if w[1].time == w[0].time {
                return Err(DataError::DuplicateTime {
                    respondent: self.id.clone(),
                    time: w[0].time,
                });
            }
            if w[1].time < w[0].time {
                return Err(DataError::NonMonotone {
                    respondent: self.id.clone(),
                    message: format!("{} follows {}", w[1].time, w[0].time),
                });
            }
        }
        if !self.total_time.is_finite() || self.total_time < self.last_time() {
            return Err(DataError::TotalTimeTooShort {
                respondent: self.id.clone(),
                total: self.total_time,
                last: self.last_time(),
            });
        }
        Ok(())
    }
}

/// A single `(respondent, action, time)` row of a long-format event file.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRow {
    pub respondent: String,
    pub action: String,
    pub time: f64,
    /// Source line, used in error messages.
    pub line: usize,
}

/// One respondent's sequence as written in a per-respondent file.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceInput {
    pub id: String,
    pub events: Vec<(String, f64)>,
    pub total_time: Option<f64>,
    pub line: usize,
}

/// Numeric covariates keyed by respondent id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CovariateTable {
    pub names: Vec<String>,
    pub rows: BTreeMap<String, Vec<f64>>,
}

/// Correctness labels keyed by respondent id.
pub type Labels = BTreeMap<String, bool>;

/// Dichotomizes item scores: correct exactly when the score equals `full_credit`.
pub fn labels_from_scores<'a, I>(scores: I, full_credit: i64) -> Labels
where
    I: IntoIterator<Item = (&'a str, i64)>,
{
    scores
        .into_iter()
        .map(|(id, s)| (id.to_string(), s == full_credit))
        .collect()
}

/// Bookkeeping from [`Dataset::attach`] (listwise deletion counts).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AttachSummary {
    pub kept: usize,
    pub missing_covariates: usize,
    pub missing_labels: usize,
}

impl AttachSummary {
    pub fn dropped(&self) -> usize {
        self.missing_covariates + self.missing_labels
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub catalog: ActionCatalog,
    pub respondents: Vec<RespondentRecord>,
    pub covariate_names: Vec<String>,
}

impl Dataset {
    /// Groups long-format rows by respondent (first-appearance order) and
    /// sorts each respondent's events by time.
    ///
    /// Rows may appear in any order within a respondent; two rows with the
    /// same respondent and time are rejected.
    pub fn from_rows<I>(rows: I) -> Result<Self, DataError>
    where
        I: IntoIterator<Item = EventRow>,
    {
        let mut catalog = ActionCatalog::new();
        let mut order: Vec<String> = Vec::new();
        let mut grouped: BTreeMap<String, Vec<(Event, usize)>> = BTreeMap::new();
        for row in rows {
            if row.respondent.is_empty() {
                return Err(DataError::Malformed {
                    line: row.line,
                    message: "empty respondent id".into(),
                });
            }
            if !row.time.is_finite() || row.time < 0.0 {
                return Err(DataError::Malformed {
                    line: row.line,
                    message: format!("invalid time {}", row.time),
                });
            }
            let state = catalog.intern(&row.action).map_err(|_| DataError::Malformed {
                line: row.line,
                message: "empty action id".into(),
            })?;
            let entry = grouped.entry(row.respondent.clone()).or_insert_with(|| {
                order.push(row.respondent.clone());
                Vec::new()
            });
            entry.push((Event { state, time: row.time }, row.line));
        }
        if order.is_empty() {
            return Err(DataError::NoEvents);
        }
        let mut respondents = Vec::with_capacity(order.len());
        for id in order {
            let mut events = grouped.remove(&id).unwrap_or_default();
            // stable sort keeps file order for the (rejected) equal-time case
            events.sort_by(|a, b| a.0.time.total_cmp(&b.0.time));
            for w in events.windows(2) {
                if w[0].0.time == w[1].0.time {
                    return Err(DataError::DuplicateTime {
                        respondent: id,
                        time: w[0].0.time,
                    });
                }
            }
            let events: Vec<Event> = events.into_iter().map(|(e, _)| e).collect();
            let total_time = events[events.len() - 1].time;
            respondents.push(RespondentRecord {
                id,
                events,
                covariates: Vec::new(),
                correct: None,
                total_time,
            });
        }
        let ds = Dataset {
            catalog,
            respondents,
            covariate_names: Vec::new(),
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Builds a dataset from per-respondent sequences, which must already be
    /// in strictly increasing time order.
    pub fn from_sequences<I>(sequences: I) -> Result<Self, DataError>
    where
        I: IntoIterator<Item = SequenceInput>,
    {
        let mut catalog = ActionCatalog::new();
        let mut respondents: Vec<RespondentRecord> = Vec::new();
        let mut seen: BTreeMap<String, ()> = BTreeMap::new();
        for seq in sequences {
            if seen.insert(seq.id.clone(), ()).is_some() {
                return Err(DataError::DuplicateRespondent(seq.id));
            }
            if seq.events.is_empty() {
                return Err(DataError::Malformed {
                    line: seq.line,
                    message: format!("respondent {} has no events", seq.id),
                });
            }
            let mut events = Vec::with_capacity(seq.events.len());
            for (action, time) in &seq.events {
                let state = catalog.intern(action).map_err(|_| DataError::Malformed {
                    line: seq.line,
                    message: "empty action id".into(),
                })?;
                events.push(Event { state, time: *time });
            }
            let last = events[events.len() - 1].time;
            respondents.push(RespondentRecord {
                id: seq.id,
                events,
                covariates: Vec::new(),
                correct: None,
                total_time: seq.total_time.unwrap_or(last),
            });
        }
        if respondents.is_empty() {
            return Err(DataError::NoEvents);
        }
        let ds = Dataset {
            catalog,
            respondents,
            covariate_names: Vec::new(),
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Checks every dataset invariant.
    pub fn validate(&self) -> Result<(), DataError> {
        if self.respondents.is_empty() {
            return Err(DataError::NoRespondents);
        }
        if self.catalog.len() < 2 {
            return Err(DataError::TooFewActions(self.catalog.len()));
        }
        let p = self.covariate_names.len();
        let mut ids = BTreeMap::new();
        for r in &self.respondents {
            if ids.insert(r.id.as_str(), ()).is_some() {
                return Err(DataError::DuplicateRespondent(r.id.clone()));
            }
            r.validate()?;
            if r.events.iter().any(|e| e.state.0 >= self.catalog.len()) {
                return Err(DataError::Malformed {
                    line: 0,
                    message: format!("respondent {} references an unknown action", r.id),
                });
            }
            if r.covariates.len() != p {
                return Err(DataError::CovariateLength {
                    respondent: r.id.clone(),
                    expected: p,
                    got: r.covariates.len(),
                });
            }
        }
        Ok(())
    }

    pub fn n_respondents(&self) -> usize {
        self.respondents.len()
    }

    pub fn n_states(&self) -> usize {
        self.catalog.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    /// Joins covariates and labels, dropping respondents that lack either.
    ///
    /// With `covariates = None` the model has no person covariates (P = 0)
    /// and only labels are required.
    pub fn attach(
        mut self,
        covariates: Option<&CovariateTable>,
        labels: &Labels,
    ) -> Result<(Self, AttachSummary), DataError> {
        let mut summary = AttachSummary::default();
        let names = covariates.map(|c| c.names.clone()).unwrap_or_default();
        let mut kept = Vec::with_capacity(self.respondents.len());
        for mut r in self.respondents.drain(..) {
            let cov = match covariates {
                Some(table) => match table.rows.get(&r.id) {
                    Some(row) => {
                        if row.len() != names.len() {
                            return Err(DataError::CovariateLength {
                                respondent: r.id,
                                expected: names.len(),
                                got: row.len(),
                            });
                        }
                        row.clone()
                    }
                    None => {
                        summary.missing_covariates += 1;
                        continue;
                    }
                },
                None => Vec::new(),
            };
            let Some(&correct) = labels.get(&r.id) else {
                summary.missing_labels += 1;
                continue;
            };
            r.covariates = cov;
            r.correct = Some(correct);
            kept.push(r);
        }
        if kept.is_empty() {
            return Err(DataError::NoRespondents);
        }
        summary.kept = kept.len();
        self.respondents = kept;
        self.covariate_names = names;
        self.validate()?;
        Ok((self, summary))
    }

    /// Z-scores every covariate column (sample mean 0, sample sd 1).
    ///
    /// Constant columns are centered and left at zero.
    pub fn standardize_covariates(&mut self) {
        let n = self.respondents.len();
        if n < 2 {
            return;
        }
        for p in 0..self.covariate_names.len() {
            let mean = self.respondents.iter().map(|r| r.covariates[p]).sum::<f64>() / n as f64;
            let var = self
                .respondents
                .iter()
                .map(|r| {
                    let d = r.covariates[p] - mean;
                    d * d
                })
                .sum::<f64>()
                / (n - 1) as f64;
            let sd = math::sqrt(var);
            for r in &mut self.respondents {
                let centered = r.covariates[p] - mean;
                r.covariates[p] = if sd > 0.0 { centered / sd } else { 0.0 };
            }
        }
    }

    /// Correctness flags in respondent order.
    pub fn labels(&self) -> Result<Vec<bool>, DataError> {
        self.respondents
            .iter()
            .map(|r| r.correct.ok_or_else(|| DataError::MissingLabel(r.id.clone())))
            .collect()
    }

    /// Keeps only respondents for which `keep` returns true; the catalog is
    /// left unchanged so state indices stay comparable.
    pub fn filter<F>(&self, mut keep: F) -> Result<Self, DataError>
    where
        F: FnMut(&RespondentRecord) -> bool,
    {
        let respondents: Vec<_> = self.respondents.iter().filter(|r| keep(r)).cloned().collect();
        if respondents.is_empty() {
            return Err(DataError::NoRespondents);
        }
        Ok(Dataset {
            catalog: self.catalog.clone(),
            respondents,
            covariate_names: self.covariate_names.clone(),
        })
    }

    /// Expands every respondent into transitions and a final censored sojourn.
    pub fn transition_table(&self, opts: PathOptions) -> Vec<RespondentPath> {
        self.respondents.iter().map(|r| RespondentPath::new(r, opts)).collect()
    }
}

/// How sojourns are derived from a sequence.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathOptions {
    /// Treat `[0, t_1)` as time spent in the first logged state. Off by
    /// default: the process starts at the first logged action.
    pub include_initial_sojourn: bool,
}

/// An observed move `from -> to`; the respondent occupied `from` on
/// `(start, end]` and arrived in `to` at `end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub from: StateIndex,
    pub to: StateIndex,
    pub start: f64,
    pub end: f64,
}

/// Time spent in a state without an observed exit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sojourn {
    pub state: StateIndex,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RespondentPath {
    pub transitions: Vec<Transition>,
    /// Right-censored sojourn from the last event to the total time.
    pub censored: Sojourn,
}

impl RespondentPath {
    pub fn new(r: &RespondentRecord, opts: PathOptions) -> Self {
        let mut transitions = Vec::with_capacity(r.events.len().saturating_sub(1));
        for (j, w) in r.events.windows(2).enumerate() {
            let start = if j == 0 && opts.include_initial_sojourn {
                0.0
            } else {
                w[0].time
            };
            transitions.push(Transition {
                from: w[0].state,
                to: w[1].state,
                start,
                end: w[1].time,
            });
        }
        let last = r.events[r.events.len() - 1];
        let start = if r.events.len() == 1 && opts.include_initial_sojourn {
            0.0
        } else {
            last.time
        };
        RespondentPath {
            transitions,
            censored: Sojourn {
                state: last.state,
                start,
                end: r.total_time,
            },
        }
    }

    /// All occupied intervals in time order, censored last.
    pub fn sojourns(&self) -> impl Iterator<Item = Sojourn> + '_ {
        self.transitions
            .iter()
            .map(|t| Sojourn {
                state: t.from,
                start: t.start,
                end: t.end,
            })
            .chain(core::iter::once(self.censored))
    }
}
