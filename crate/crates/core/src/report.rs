//! Report emission, parsing and aggregation.
//!
//! CSV layout: a `# config_fingerprint=<hex> object_diameter_m=<d>` line, then
//! the header `trial,algorithm,kp_rmse_m,add_m,adds_m,vote_time_ns,fit_time_ns,rank_flags`
//! and one row per (trial, algorithm). Reals are written with 17 significant
//! digits; fields that do not exist for a degenerate trial are left empty.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{Algorithm, ExperimentConfig, ExperimentOutcome, SweepAxis, SweepLevel, TrialReport};
use crate::metrics::{add_0_1d_accuracy, auc, DEFAULT_AUC_MAX_THRESHOLD};

pub const CSV_HEADER: [&str; 8] = [
    "trial",
    "algorithm",
    "kp_rmse_m",
    "add_m",
    "adds_m",
    "vote_time_ns",
    "fit_time_ns",
    "rank_flags",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Structured,
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub trial: usize,
    pub algorithm: Algorithm,
    pub kp_rmse_m: Option<f64>,
    pub add_m: Option<f64>,
    pub adds_m: Option<f64>,
    pub vote_time_ns: Option<u64>,
    pub fit_time_ns: Option<u64>,
    pub rank_flags: String,
}

impl ReportRow {
    /// A trial counts as failed when it produced no pose.
    pub fn is_failure(&self) -> bool {
        self.add_m.is_none()
    }
}

impl From<&TrialReport> for ReportRow {
    fn from(r: &TrialReport) -> Self {
        ReportRow {
            trial: r.trial,
            algorithm: r.algorithm,
            kp_rmse_m: r.keypoint_rmse_m,
            add_m: r.add_m,
            adds_m: r.adds_m,
            vote_time_ns: r.vote_time_ns,
            fit_time_ns: r.fit_time_ns,
            rank_flags: r.rank_flags.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub fingerprint: String,
    pub object_diameter_m: f64,
    pub rows: Vec<ReportRow>,
}

fn real(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.16e}")).unwrap_or_default()
}

fn int(v: Option<u64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn parse_opt<T: std::str::FromStr>(field: &str, name: &str, line: u64) -> Result<Option<T>> {
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse()
        .map(Some)
        .map_err(|_| Error::InvalidInput(format!("record {line}: bad {name} {field:?}")))
}

impl ReportTable {
    pub fn from_outcome(outcome: &ExperimentOutcome) -> Self {
        ReportTable {
            fingerprint: outcome.fingerprint.clone(),
            object_diameter_m: outcome.object_diameter_m,
            rows: outcome.reports.iter().map(ReportRow::from).collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# config_fingerprint={} object_diameter_m={:.16e}\n",
            self.fingerprint, self.object_diameter_m
        );
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER).expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.trial.to_string(),
                r.algorithm.to_string(),
                real(r.kp_rmse_m),
                real(r.add_m),
                real(r.adds_m),
                int(r.vote_time_ns),
                int(r.fit_time_ns),
                r.rank_flags.clone(),
            ])
            .expect("in-memory write");
        }
        let body = w.into_inner().expect("in-memory flush");
        out.push_str(std::str::from_utf8(&body).expect("fields are UTF-8"));
        out
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
        let meta = first
            .strip_prefix('#')
            .ok_or_else(|| Error::InvalidInput("missing fingerprint line".into()))?;
        let mut fingerprint = None;
        let mut diameter = None;
        for token in meta.split_whitespace() {
            match token.split_once('=') {
                Some(("config_fingerprint", v)) => fingerprint = Some(v.to_string()),
                Some(("object_diameter_m", v)) => diameter = v.parse::<f64>().ok(),
                _ => {}
            }
        }
        let (Some(fingerprint), Some(object_diameter_m)) = (fingerprint, diameter) else {
            return Err(Error::InvalidInput("fingerprint line lacks required keys".into()));
        };

        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(rest.as_bytes());
        let header = reader
            .headers()
            .map_err(|e| Error::InvalidInput(format!("csv header: {e}")))?;
        if header.iter().ne(CSV_HEADER) {
            return Err(Error::InvalidInput(format!("unexpected header {header:?}")));
        }
        let mut rows = Vec::new();
        for (n, record) in reader.records().enumerate() {
            let rec = record.map_err(|e| Error::InvalidInput(format!("csv: {e}")))?;
            let n = n as u64 + 1;
            let trial = parse_opt(&rec[0], "trial", n)?
                .ok_or_else(|| Error::InvalidInput(format!("record {n}: empty trial")))?;
            rows.push(ReportRow {
                trial,
                algorithm: rec[1].parse()?,
                kp_rmse_m: parse_opt(&rec[2], "kp_rmse_m", n)?,
                add_m: parse_opt(&rec[3], "add_m", n)?,
                adds_m: parse_opt(&rec[4], "adds_m", n)?,
                vote_time_ns: parse_opt(&rec[5], "vote_time_ns", n)?,
                fit_time_ns: parse_opt(&rec[6], "fit_time_ns", n)?,
                rank_flags: rec[7].to_string(),
            });
        }
        Ok(ReportTable {
            fingerprint,
            object_diameter_m,
            rows,
        })
    }
}

/// JSON document with per-keypoint detail.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructuredReport {
    pub config_fingerprint: String,
    pub object_diameter_m: f64,
    pub config: ExperimentConfig,
    pub trials: Vec<TrialReport>,
}

pub fn render_report(outcome: &ExperimentOutcome, config: &ExperimentConfig, format: ReportFormat) -> Result<String> {
    if outcome.reports.is_empty() {
        return Err(Error::InvalidInput("no reports to emit".into()));
    }
    Ok(match format {
        ReportFormat::Csv => ReportTable::from_outcome(outcome).to_csv(),
        ReportFormat::Structured => {
            let doc = StructuredReport {
                config_fingerprint: outcome.fingerprint.clone(),
                object_diameter_m: outcome.object_diameter_m,
                config: config.clone(),
                trials: outcome.reports.clone(),
            };
            serde_json::to_string_pretty(&doc).expect("report is always serializable") + "\n"
        }
    })
}

pub fn emit_report(
    outcome: &ExperimentOutcome,
    config: &ExperimentConfig,
    format: ReportFormat,
    path: &Path,
) -> Result<()> {
    let text = render_report(outcome, config, format)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSummary {
    pub algorithm: Algorithm,
    pub trials: usize,
    pub failures: usize,
    pub failure_rate: f64,
    pub mean_kp_rmse_m: Option<f64>,
    pub median_kp_rmse_m: Option<f64>,
    /// Failed trials count as infinite error.
    pub add_auc: f64,
    pub adds_auc: f64,
    pub add_0_1d: f64,
    pub median_vote_time_ns: Option<f64>,
    pub median_fit_time_ns: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub fingerprint: String,
    pub object_diameter_m: f64,
    pub algorithms: Vec<AlgorithmSummary>,
    /// MeanShift median voting time over WVWV median voting time; present only
    /// when both were run and timed.
    pub speedup: Option<f64>,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Aggregates one or more tables from the same configuration.
pub fn summarize(tables: &[ReportTable]) -> Result<Summary> {
    let first = tables
        .first()
        .ok_or_else(|| Error::InvalidInput("nothing to summarize".into()))?;
    if tables.iter().any(|t| t.fingerprint != first.fingerprint) {
        return Err(Error::InvalidInput("reports come from different configurations".into()));
    }
    let rows: Vec<&ReportRow> = tables.iter().flat_map(|t| &t.rows).collect();
    if rows.is_empty() {
        return Err(Error::InvalidInput("nothing to summarize".into()));
    }
    let mut algorithms: Vec<Algorithm> = rows.iter().map(|r| r.algorithm).collect();
    algorithms.sort_by_key(|a| a.as_str());
    algorithms.dedup();

    let diameter = first.object_diameter_m;
    let mut summaries = Vec::new();
    for alg in algorithms {
        let mine: Vec<&ReportRow> = rows.iter().copied().filter(|r| r.algorithm == alg).collect();
        let failures = mine.iter().filter(|r| r.is_failure()).count();
        let kp: Vec<f64> = mine.iter().filter_map(|r| r.kp_rmse_m).collect();
        let add: Vec<f64> = mine.iter().map(|r| r.add_m.unwrap_or(f64::INFINITY)).collect();
        let adds: Vec<f64> = mine.iter().map(|r| r.adds_m.unwrap_or(f64::INFINITY)).collect();
        let vote: Vec<f64> = mine.iter().filter_map(|r| r.vote_time_ns).map(|t| t as f64).collect();
        let fit: Vec<f64> = mine.iter().filter_map(|r| r.fit_time_ns).map(|t| t as f64).collect();
        summaries.push(AlgorithmSummary {
            algorithm: alg,
            trials: mine.len(),
            failures,
            failure_rate: failures as f64 / mine.len() as f64,
            mean_kp_rmse_m: mean(&kp),
            median_kp_rmse_m: median(&kp),
            add_auc: auc(&add, DEFAULT_AUC_MAX_THRESHOLD)?,
            adds_auc: auc(&adds, DEFAULT_AUC_MAX_THRESHOLD)?,
            add_0_1d: add_0_1d_accuracy(&add, diameter)?,
            median_vote_time_ns: median(&vote),
            median_fit_time_ns: median(&fit),
        });
    }
    let time_of = |a: Algorithm| {
        summaries
            .iter()
            .find(|s| s.algorithm == a)
            .and_then(|s| s.median_vote_time_ns)
    };
    let speedup = match (time_of(Algorithm::Meanshift), time_of(Algorithm::Wvwv)) {
        (Some(base), Some(w)) => Some(base / w),
        _ => None,
    };
    Ok(Summary {
        fingerprint: first.fingerprint.clone(),
        object_diameter_m: diameter,
        algorithms: summaries,
        speedup,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6e}")).unwrap_or_else(|| "-".into())
}

impl Summary {
    /// Plain-text table, one line per algorithm. The speedup column appears
    /// only when a speedup exists.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "config_fingerprint={}", self.fingerprint);
        let mut header = vec![
            "algorithm",
            "trials",
            "failure_rate",
            "mean_kp_rmse_m",
            "median_kp_rmse_m",
            "mean_kp_rmse_cm",
            "add_auc",
            "adds_auc",
            "add_0.1d",
            "median_vote_ns",
            "median_fit_ns",
        ];
        if self.speedup.is_some() {
            header.push("speedup");
        }
        let _ = writeln!(out, "{}", header.join("\t"));
        for s in &self.algorithms {
            let mut cells = vec![
                s.algorithm.to_string(),
                s.trials.to_string(),
                format!("{:.3}", s.failure_rate),
                cell(s.mean_kp_rmse_m),
                cell(s.median_kp_rmse_m),
                cell(s.mean_kp_rmse_m.map(|m| m * 100.0)),
                format!("{:.4}", s.add_auc),
                format!("{:.4}", s.adds_auc),
                format!("{:.4}", s.add_0_1d),
                cell(s.median_vote_time_ns),
                cell(s.median_fit_time_ns),
            ];
            if let Some(x) = self.speedup {
                cells.push(if s.algorithm == Algorithm::Wvwv { format!("{x:.3}") } else { "1".into() });
            }
            let _ = writeln!(out, "{}", cells.join("\t"));
        }
        out
    }
}

/// Wide CSV with one row per sweep level:
/// `axis,level,{alg}_add01d,{alg}_auc,{alg}_kp_rmse_m,{alg}_failures` per algorithm.
pub fn sweep_table(axis: SweepAxis, levels: &[SweepLevel]) -> Result<String> {
    let summaries = levels
        .iter()
        .map(|l| summarize(&[ReportTable::from_outcome(&l.outcome)]))
        .collect::<Result<Vec<_>>>()?;
    let algorithms: Vec<Algorithm> = summaries
        .first()
        .map(|s| s.algorithms.iter().map(|a| a.algorithm).collect())
        .unwrap_or_default();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["axis".to_string(), "level".to_string()];
    for a in &algorithms {
        for col in ["add01d", "auc", "kp_rmse_m", "failures"] {
            header.push(format!("{a}_{col}"));
        }
    }
    w.write_record(&header).expect("in-memory write");
    for (level, summary) in levels.iter().zip(&summaries) {
        let mut rec = vec![axis.as_str().to_string(), format!("{}", level.level)];
        for a in &algorithms {
            let s = summary
                .algorithms
                .iter()
                .find(|s| s.algorithm == *a)
                .ok_or_else(|| Error::InvalidInput(format!("level {} lacks {a}", level.level)))?;
            rec.push(format!("{:.16e}", s.add_0_1d));
            rec.push(format!("{:.16e}", s.add_auc));
            rec.push(real(s.mean_kp_rmse_m));
            rec.push(s.failures.to_string());
        }
        w.write_record(&rec).expect("in-memory write");
    }
    Ok(String::from_utf8(w.into_inner().expect("in-memory flush")).expect("fields are UTF-8"))
}
