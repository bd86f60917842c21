//! File formats: event logs, covariates, labels, key-action lists and
//! chain files.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use msm_core::data::{CovariateTable, EventRow, Labels, SequenceInput};
use msm_core::hazard::Dims;
use msm_core::sampler::{AcceptCount, McmcConfig, PriorConfig};
use msm_core::{ChainStore, Dataset};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, Result};

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| CliError::file(path, e))
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))?;
        }
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

pub(crate) fn write_string(path: &Path, s: &str) -> Result<()> {
    let mut f = create(path)?;
    f.write_all(s.as_bytes())
        .and_then(|_| f.flush())
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| CliError::file(path, format!("missing column `{name}`")))
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(open(path)?))
}

fn parse_time(s: &str, path: &Path, line: usize) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| CliError::file(path, format!("line {line}: invalid time `{s}`")))
}

fn is_jsonl(path: &Path) -> Result<bool> {
    if let Some(ext) = path.extension().and_then(|e| e.to_str()) {
        match ext.to_ascii_lowercase().as_str() {
            "jsonl" | "ndjson" | "json" => return Ok(true),
            "csv" => return Ok(false),
            _ => {}
        }
    }
    let mut first = String::new();
    for line in BufReader::new(open(path)?).lines() {
        let line = line.map_err(|e| CliError::file(path, e))?;
        if !line.trim().is_empty() {
            first = line;
            break;
        }
    }
    Ok(first.trim_start().starts_with('{'))
}

/// Reads a long-format CSV (`respondent_id,action_id,time_min`) or a JSONL
/// file with one `{"id", "events", "total_time"}` object per respondent.
pub fn read_events(path: &Path) -> Result<Dataset> {
    if is_jsonl(path)? {
        read_events_jsonl(path)
    } else {
        read_events_csv(path)
    }
}

fn read_events_csv(path: &Path) -> Result<Dataset> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| CliError::file(path, e))?.clone();
    let (ri, ai, ti) = (
        column(&headers, "respondent_id", path)?,
        column(&headers, "action_id", path)?,
        column(&headers, "time_min", path)?,
    );
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::file(path, e))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        rows.push(EventRow {
            respondent: rec.get(ri).unwrap_or("").to_string(),
            action: rec.get(ai).unwrap_or("").to_string(),
            time: parse_time(rec.get(ti).unwrap_or(""), path, line)?,
            line,
        });
    }
    Dataset::from_rows(rows).map_err(|e| CliError::file(path, e))
}

fn id_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

#[derive(Deserialize)]
struct JsonSequence {
    id: Value,
    events: Vec<(Value, f64)>,
    #[serde(default)]
    total_time: Option<f64>,
}

fn read_events_jsonl(path: &Path) -> Result<Dataset> {
    let mut seqs = Vec::new();
    for (n, line) in BufReader::new(open(path)?).lines().enumerate() {
        let line = line.map_err(|e| CliError::file(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let seq: JsonSequence =
            serde_json::from_str(&line).map_err(|e| CliError::file(path, format!("line {}: {e}", n + 1)))?;
        let bad = |what: &str| CliError::file(path, format!("line {}: {what} must be a string or number", n + 1));
        let id = id_string(&seq.id).ok_or_else(|| bad("id"))?;
        let events = seq
            .events
            .iter()
            .map(|(a, t)| id_string(a).map(|a| (a, *t)).ok_or_else(|| bad("action id")))
            .collect::<Result<Vec<_>>>()?;
        seqs.push(SequenceInput {
            id,
            events,
            total_time: seq.total_time,
            line: n + 1,
        });
    }
    Dataset::from_sequences(seqs).map_err(|e| CliError::file(path, e))
}

/// Covariates plus the optional partition column.
#[derive(Debug, Clone, Default)]
pub struct CovariateFile {
    pub table: CovariateTable,
    /// Partition value per respondent, when a partition column was requested.
    pub partition: BTreeMap<String, String>,
}

fn is_missing(s: &str) -> bool {
    s.is_empty() || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan")
}

/// Reads `respondent_id,<name1>,...`. Respondents with an empty or `NA`
/// cell are left out (listwise deletion). `partition_by` names a
/// non-numeric column to split on instead of treating it as a covariate.
pub fn read_covariates(path: &Path, partition_by: Option<&str>) -> Result<CovariateFile> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| CliError::file(path, e))?.clone();
    let id_col = column(&headers, "respondent_id", path)?;
    let part_col = partition_by.map(|p| column(&headers, p, path)).transpose()?;
    let cov_cols: Vec<usize> = (0..headers.len())
        .filter(|&j| j != id_col && Some(j) != part_col)
        .collect();
    let mut out = CovariateFile {
        table: CovariateTable {
            names: cov_cols.iter().map(|&j| headers[j].to_string()).collect(),
            rows: BTreeMap::new(),
        },
        partition: BTreeMap::new(),
    };
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::file(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let id = rec.get(id_col).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(CliError::file(path, format!("line {line}: empty respondent_id")));
        }
        if let Some(pc) = part_col {
            out.partition.insert(id.clone(), rec.get(pc).unwrap_or("").to_string());
        }
        let mut values = Vec::with_capacity(cov_cols.len());
        let mut missing = false;
        for &j in &cov_cols {
            let cell = rec.get(j).unwrap_or("");
            if is_missing(cell) {
                missing = true;
                break;
            }
            values.push(
                cell.parse::<f64>().map_err(|_| {
                    CliError::file(path, format!("line {line}: `{}` is not numeric", headers[j].trim()))
                })?,
            );
        }
        if out.table.rows.contains_key(&id) {
            return Err(CliError::file(path, format!("line {line}: duplicate respondent {id}")));
        }
        if !missing {
            out.table.rows.insert(id, values);
        }
    }
    Ok(out)
}

/// Reads `respondent_id,correct` (0/1) or `respondent_id,score`, the latter
/// dichotomized at `correct_score` (full credit).
pub fn read_labels(path: &Path, correct_score: Option<i64>) -> Result<Labels> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| CliError::file(path, e))?.clone();
    let id_col = column(&headers, "respondent_id", path)?;
    let correct_col = headers.iter().position(|h| h.trim() == "correct");
    let score_col = headers.iter().position(|h| h.trim() == "score");
    let mut labels = Labels::new();
    let mut scores: Vec<(String, i64)> = Vec::new();
    match (correct_col, score_col, correct_score) {
        (Some(_), _, _) | (None, Some(_), Some(_)) => {}
        (None, Some(_), None) => {
            return Err(CliError::file(path, "a `score` column requires --correct-score"));
        }
        (None, None, _) => return Err(CliError::file(path, "missing column `correct` (or `score`)")),
    }
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::file(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let id = rec.get(id_col).unwrap_or("").to_string();
        if let Some(c) = correct_col {
            let value = match rec.get(c).unwrap_or("") {
                "1" | "true" | "TRUE" | "True" => true,
                "0" | "false" | "FALSE" | "False" => false,
                s if is_missing(s) => continue,
                s => {
                    return Err(CliError::file(
                        path,
                        format!("line {line}: correct must be 0 or 1, got `{s}`"),
                    ))
                }
            };
            labels.insert(id, value);
        } else if let Some(c) = score_col {
            let cell = rec.get(c).unwrap_or("");
            if is_missing(cell) {
                continue;
            }
            let s = cell
                .parse::<i64>()
                .map_err(|_| CliError::file(path, format!("line {line}: score must be an integer, got `{cell}`")))?;
            scores.push((id, s));
        }
    }
    if let Some(k) = correct_score {
        if correct_col.is_none() {
            labels = msm_core::data::labels_from_scores(scores.iter().map(|(id, s)| (id.as_str(), *s)), k);
        }
    }
    Ok(labels)
}

/// Reads key actions from `report.csv` (rows with `selected = true`, in
/// rank order) or from a plain list with one action id per line.
pub fn read_keys(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::file(path, e))?;
    let lines: Vec<&str> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect();
    let Some(first) = lines.first() else {
        return Err(CliError::file(path, "no key actions listed"));
    };
    if first.split(',').any(|h| h.trim() == "selected") {
        let mut rdr = reader(path)?;
        let headers = rdr.headers().map_err(|e| CliError::file(path, e))?.clone();
        let (ai, si, ri) = (
            column(&headers, "action_id", path)?,
            column(&headers, "selected", path)?,
            column(&headers, "rank", path)?,
        );
        let mut keys: Vec<(usize, String)> = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| CliError::file(path, e))?;
            if rec.get(si) == Some("true") {
                let rank = rec.get(ri).and_then(|r| r.parse().ok()).unwrap_or(usize::MAX);
                keys.push((rank, rec.get(ai).unwrap_or("").to_string()));
            }
        }
        keys.sort();
        if keys.is_empty() {
            return Err(CliError::file(path, "report selects no key actions"));
        }
        Ok(keys.into_iter().map(|k| k.1).collect())
    } else {
        let skip = usize::from(*first == "action_id");
        Ok(lines[skip..].iter().map(|l| l.to_string()).collect())
    }
}

pub const CHAIN_FORMAT: &str = "msm-chain/1";

/// Everything in a chain file except the draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainHeader {
    pub format: String,
    pub dims: Dims,
    pub n_rows: usize,
    pub accept_rates: BTreeMap<String, AcceptCount>,
    pub step_sizes: Vec<f64>,
    pub warnings: Vec<String>,
    pub config: McmcConfig,
    pub priors: PriorConfig,
    pub respondent_groups: Vec<usize>,
    pub key_states: Vec<usize>,
}

/// Chain file: a `# {json header}` line, a CSV header of parameter names,
/// then one row per retained draw.
pub fn write_chain(path: &Path, chain: &ChainStore) -> Result<()> {
    let header = ChainHeader {
        format: CHAIN_FORMAT.into(),
        dims: chain.dims,
        n_rows: chain.n_rows,
        accept_rates: chain.accept_rates.clone(),
        step_sizes: chain.step_sizes.clone(),
        warnings: chain.warnings.clone(),
        config: chain.config.clone(),
        priors: chain.priors,
        respondent_groups: chain.respondent_groups.clone(),
        key_states: chain.key_states.clone(),
    };
    let err = |e: &dyn std::fmt::Display| CliError::runtime(format!("{}: {e}", path.display()));
    let mut f = create(path)?;
    let json = serde_json::to_string(&header).map_err(|e| err(&e))?;
    writeln!(f, "# {json}").map_err(|e| err(&e))?;
    {
        let mut w = csv::Writer::from_writer(&mut f);
        w.write_record(&chain.param_names).map_err(|e| err(&e))?;
        for r in 0..chain.n_rows {
            w.write_record(chain.row(r).iter().map(|v| v.to_string()))
                .map_err(|e| err(&e))?;
        }
        w.flush().map_err(|e| err(&e))?;
    }
    f.flush().map_err(|e| err(&e))
}

pub fn read_chain(path: &Path) -> Result<ChainStore> {
    let text = fs::read_to_string(path).map_err(|e| CliError::file(path, e))?;
    let (first, rest) = text.split_once('\n').unwrap_or((&text, ""));
    let json = first
        .strip_prefix("# ")
        .ok_or_else(|| CliError::file(path, "not a chain file (missing `# {header}` line)"))?;
    let header: ChainHeader =
        serde_json::from_str(json).map_err(|e| CliError::file(path, format!("bad header: {e}")))?;
    if header.format != CHAIN_FORMAT {
        return Err(CliError::file(
            path,
            format!("unsupported chain format `{}`", header.format),
        ));
    }
    let mut rdr = csv::ReaderBuilder::new().from_reader(rest.as_bytes());
    let param_names: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::file(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let n_cols = msm_core::hazard::n_params(header.dims);
    if param_names.len() != n_cols {
        return Err(CliError::file(
            path,
            format!("expected {n_cols} parameter columns, found {}", param_names.len()),
        ));
    }
    let mut draws = Vec::with_capacity(header.n_rows * n_cols);
    let mut n_rows = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::file(path, e))?;
        for cell in rec.iter() {
            draws.push(
                cell.parse::<f64>()
                    .map_err(|_| CliError::file(path, format!("row {}: invalid value `{cell}`", n_rows + 1)))?,
            );
        }
        n_rows += 1;
    }
    if n_rows == 0 {
        return Err(CliError::file(path, "chain has no draws"));
    }
    Ok(ChainStore {
        dims: header.dims,
        param_names,
        draws,
        n_rows,
        accept_rates: header.accept_rates,
        step_sizes: header.step_sizes,
        warnings: header.warnings,
        config: header.config,
        priors: header.priors,
        respondent_groups: header.respondent_groups,
        key_states: header.key_states,
    })
}

/// Writes CSV rows with a header; all cells are preformatted strings.
pub(crate) fn write_table(path: &Path, comments: &[String], header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let err = |e: &dyn std::fmt::Display| CliError::runtime(format!("{}: {e}", path.display()));
    let mut f = create(path)?;
    for c in comments {
        writeln!(f, "# {c}").map_err(|e| err(&e))?;
    }
    {
        let mut w = csv::Writer::from_writer(&mut f);
        w.write_record(header).map_err(|e| err(&e))?;
        for r in rows {
            w.write_record(r).map_err(|e| err(&e))?;
        }
        w.flush().map_err(|e| err(&e))?;
    }
    f.flush().map_err(|e| err(&e))
}

/// Shortest round-trip formatting; non-finite values are written as `NA`.
pub(crate) fn num(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        "NA".into()
    }
}

pub(crate) fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_else(|| "NA".into())
}

/// One JSON object per respondent, readable by [`read_events`].
pub fn write_events_jsonl(path: &Path, ds: &Dataset) -> Result<()> {
    let err = |e: &dyn std::fmt::Display| CliError::runtime(format!("{}: {e}", path.display()));
    let mut f = create(path)?;
    for r in &ds.respondents {
        let events: Vec<(&str, f64)> = r.events.iter().map(|e| (ds.catalog.name(e.state), e.time)).collect();
        let line = serde_json::json!({ "id": r.id, "events": events, "total_time": r.total_time });
        writeln!(f, "{line}").map_err(|e| err(&e))?;
    }
    f.flush().map_err(|e| err(&e))
}

/// Respondent-level data after joining, as written by `simulate`.
pub fn write_dataset(dir: &Path, ds: &Dataset) -> Result<()> {
    let mut events = Vec::new();
    for r in &ds.respondents {
        for e in &r.events {
            events.push(vec![r.id.clone(), ds.catalog.name(e.state).to_string(), num(e.time)]);
        }
    }
    write_table(
        &dir.join("events.csv"),
        &[],
        &["respondent_id", "action_id", "time_min"],
        &events,
    )?;
    let mut header = vec!["respondent_id"];
    header.extend(ds.covariate_names.iter().map(String::as_str));
    let covs: Vec<Vec<String>> = ds
        .respondents
        .iter()
        .map(|r| {
            std::iter::once(r.id.clone())
                .chain(r.covariates.iter().map(|v| num(*v)))
                .collect()
        })
        .collect();
    write_table(&dir.join("covariates.csv"), &[], &header, &covs)?;
    let labels: Vec<Vec<String>> = ds
        .respondents
        .iter()
        .map(|r| {
            vec![
                r.id.clone(),
                if r.correct == Some(true) { "1" } else { "0" }.to_string(),
            ]
        })
        .collect();
    write_table(&dir.join("labels.csv"), &[], &["respondent_id", "correct"], &labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn csv_and_jsonl_agree() {
        let dir = tempfile::tempdir().unwrap();
        let csv = write(
            dir.path(),
            "e.csv",
            "respondent_id,action_id,time_min\nr1,wb,1.33\nr1,start,0.5\nr2,start,0.2\nr2,wb,0.9\n",
        );
        let jsonl = write(
            dir.path(),
            "e.jsonl",
            "{\"id\":\"r1\",\"events\":[[\"start\",0.5],[\"wb\",1.33]]}\n{\"id\":\"r2\",\"events\":[[\"start\",0.2],[\"wb\",0.9]]}\n",
        );
        let a = read_events(&csv).unwrap();
        let b = read_events(&jsonl).unwrap();
        let names = |d: &Dataset| -> Vec<Vec<(String, f64)>> {
            d.respondents
                .iter()
                .map(|r| {
                    r.events
                        .iter()
                        .map(|e| (d.catalog.name(e.state).to_string(), e.time))
                        .collect()
                })
                .collect()
        };
        assert_eq!(names(&a), names(&b));
        // first appearance in the CSV is `wb`
        assert_eq!(a.catalog.actions(), ["wb", "start"]);
    }

    #[test]
    fn jsonl_rejects_unsorted() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "e.jsonl",
            "{\"id\":7,\"events\":[[\"a\",2.0],[\"b\",1.0]]}\n",
        );
        let msg = read_events(&p).unwrap_err().to_string();
        assert!(msg.contains("respondent 7"), "{msg}");
    }

    #[test]
    fn labels_from_score_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "l.csv", "respondent_id,score\nr1,3\nr2,1\nr3,\n");
        assert!(read_labels(&p, None).is_err());
        let l = read_labels(&p, Some(3)).unwrap();
        assert_eq!(l.get("r1"), Some(&true));
        assert_eq!(l.get("r2"), Some(&false));
        assert_eq!(l.get("r3"), None);
    }

    #[test]
    fn covariates_with_partition_and_missing() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "c.csv", "respondent_id,country,age\nr1,DE,3\nr2,US,NA\n");
        let c = read_covariates(&p, Some("country")).unwrap();
        assert_eq!(c.table.names, ["age"]);
        assert_eq!(c.table.rows.len(), 1);
        assert_eq!(c.partition.get("r2").map(String::as_str), Some("US"));
        assert!(read_covariates(&p, None).is_err());
    }

    #[test]
    fn plain_key_list() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "k.txt", "action_id\nwb\n\nsort\n");
        assert_eq!(read_keys(&p).unwrap(), ["wb", "sort"]);
    }
}
