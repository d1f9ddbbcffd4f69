//! AUROC, F1 and call-count reporting over labeled outcome streams.
//!
//! Each outcome gets a misinformation score in [0, 1] from the claim
//! probability `p` and the decision:
//!
//! | decision                 | score          |
//! |--------------------------|----------------|
//! | `harmless_no_claim`      | `0.5 * p`      |
//! | `misinformative`         | `0.5 + 0.5 * p`|
//! | `harmless_verified`      | `0.25 * p`     |
//! | `unverifiable_harmless`  | `0.25 * p`     |
//! | failed (error outcome)   | `0`            |
//!
//! The hard prediction is `decision == misinformative`.

use crate::pipeline::{Outcome, OutcomeDecision};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("auroc needs both classes (positives {positives}, negatives {negatives})")]
    SingleClass { positives: usize, negatives: usize },
    #[error("score {0} is not finite")]
    NonFiniteScore(f64),
    #[error("scores and labels differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no outcome for labeled bundle {0:?}")]
    MissingOutcome(String),
    #[error("bundle {0:?} appears more than once")]
    Duplicate(String),
    #[error("{file} line {line}: {msg}")]
    Parse { file: String, line: usize, msg: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Pair-counting AUROC: `(concordant + 0.5 * tied) / (P * N)`.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch(scores.len(), labels.len()));
    }
    if let Some(&s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(EvalError::NonFiniteScore(s));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(EvalError::SingleClass { positives, negatives });
    }
    let mut items: Vec<(f64, bool)> = scores.iter().copied().zip(labels.iter().copied()).collect();
    items.sort_by(|a, b| a.0.total_cmp(&b.0));
    // walk groups of equal score in ascending order, counting in integers
    let (mut concordant, mut tied, mut neg_below) = (0u128, 0u128, 0u128);
    let mut i = 0;
    while i < items.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u128, 0u128);
        while j < items.len() && items[j].0 == items[i].0 {
            if items[j].1 {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        concordant += pos * neg_below;
        tied += pos * neg;
        neg_below += neg;
        i = j;
    }
    let pairs = positives as f64 * negatives as f64;
    Ok((2 * concordant + tied) as f64 / (2.0 * pairs))
}

/// `2tp / (2tp + fp + fn)`, or 0 when `tp == 0`.
pub fn f1(tp: u64, fp: u64, fn_: u64) -> f64 {
    if tp == 0 {
        return 0.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn from_predictions(predicted: &[bool], truth: &[bool]) -> Self {
        let mut c = Confusion::default();
        for (&p, &t) in predicted.iter().zip(truth) {
            match (p, t) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn f1(&self) -> f64 {
        f1(self.tp, self.fp, self.fn_)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthLabel {
    Misinformative,
    NotMisinformative,
}

/// One line of an evaluation label file. Other fields on the line are
/// ignored, so a check manifest with an added `truth` field also works.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalLabel {
    pub bundle_id: String,
    pub truth: TruthLabel,
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<EvalLabel>, EvalError> {
    let path = path.as_ref();
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| EvalError::Parse {
            file: path.display().to_string(),
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Misinformation score of an outcome; see the module docs.
pub fn outcome_score(o: &Outcome) -> f64 {
    let p = o.claim_probability.unwrap_or(0.0);
    match o.decision {
        Some(OutcomeDecision::HarmlessNoClaim) => 0.5 * p,
        Some(OutcomeDecision::Misinformative) => 0.5 + 0.5 * p,
        Some(OutcomeDecision::HarmlessVerified | OutcomeDecision::UnverifiableHarmless) => 0.25 * p,
        None => 0.0,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub bundle_id: String,
    pub true_label: TruthLabel,
    pub score: f64,
    pub predicted: bool,
    pub decision: Option<OutcomeDecision>,
}

/// A table row. Values are display strings so comparison rows keep their
/// original text.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRow {
    pub system: String,
    pub auroc: String,
    pub f1: String,
    pub api_calls: String,
    /// True for the row computed in this run.
    pub measured: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub system: String,
    pub n_items: usize,
    pub n_errors: usize,
    pub auroc: Option<f64>,
    /// AUROC of the 0/1 predictions.
    pub auroc_hard: Option<f64>,
    pub f1: f64,
    pub api_calls: u64,
    pub confusion: Confusion,
    pub rows: Vec<ReportRow>,
    pub records: Vec<EvalRecord>,
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "N/A".to_string(), |x| format!("{:.1}", 100.0 * x))
}

/// Scores every labeled bundle. Records follow ascending bundle id, so the
/// report does not depend on input order. AUROC is `None` when the labels
/// hold a single class.
pub fn evaluate(
    outcomes: &[Outcome],
    labels: &[EvalLabel],
    system: &str,
    comparison: &[ReportRow],
) -> Result<EvalReport, EvalError> {
    let mut by_id: HashMap<&str, &Outcome> = HashMap::new();
    for o in outcomes {
        if by_id.insert(&o.bundle_id, o).is_some() {
            return Err(EvalError::Duplicate(o.bundle_id.clone()));
        }
    }
    let mut sorted: Vec<&EvalLabel> = labels.iter().collect();
    sorted.sort_by(|a, b| a.bundle_id.cmp(&b.bundle_id));
    if let Some(w) = sorted.windows(2).find(|w| w[0].bundle_id == w[1].bundle_id) {
        return Err(EvalError::Duplicate(w[0].bundle_id.clone()));
    }
    let mut records = Vec::with_capacity(sorted.len());
    let mut api_calls = 0;
    let mut n_errors = 0;
    for l in sorted {
        let o = by_id
            .get(l.bundle_id.as_str())
            .ok_or_else(|| EvalError::MissingOutcome(l.bundle_id.clone()))?;
        api_calls += o.api_calls.llm + o.api_calls.database;
        n_errors += o.error.is_some() as usize;
        records.push(EvalRecord {
            bundle_id: l.bundle_id.clone(),
            true_label: l.truth,
            score: outcome_score(o),
            predicted: o.decision == Some(OutcomeDecision::Misinformative),
            decision: o.decision,
        });
    }
    let truth: Vec<bool> = records.iter().map(|r| r.true_label == TruthLabel::Misinformative).collect();
    let scores: Vec<f64> = records.iter().map(|r| r.score).collect();
    let hard: Vec<f64> = records.iter().map(|r| r.predicted as u8 as f64).collect();
    let predicted: Vec<bool> = records.iter().map(|r| r.predicted).collect();
    let single_class_ok = |r: Result<f64, EvalError>| match r {
        Ok(v) => Ok(Some(v)),
        Err(EvalError::SingleClass { .. }) => Ok(None),
        Err(e) => Err(e),
    };
    let auroc_v = single_class_ok(auroc(&scores, &truth))?;
    let auroc_hard = single_class_ok(auroc(&hard, &truth))?;
    let confusion = Confusion::from_predictions(&predicted, &truth);
    let f1_v = confusion.f1();
    let mut rows = vec![ReportRow {
        system: system.to_string(),
        auroc: pct(auroc_v),
        f1: pct(Some(f1_v)),
        api_calls: api_calls.to_string(),
        measured: true,
    }];
    rows.extend(comparison.iter().cloned());
    Ok(EvalReport {
        system: system.to_string(),
        n_items: records.len(),
        n_errors,
        auroc: auroc_v,
        auroc_hard,
        f1: f1_v,
        api_calls,
        confusion,
        rows,
        records,
    })
}

/// Reads comparison rows from CSV: `system,auroc,f1,api_calls` with values
/// in percent (any text, e.g. `N/A`, is kept as is). Lines starting with `#`
/// are comments; a header row whose first field is `system` is skipped.
pub fn read_comparison(path: impl AsRef<Path>) -> Result<Vec<ReportRow>, EvalError> {
    let path = path.as_ref();
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)?;
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != 4 {
            return Err(EvalError::Parse {
                file: path.display().to_string(),
                line: rec.position().map_or(i + 1, |p| p.line() as usize),
                msg: format!("expected 4 fields (system, auroc, f1, api_calls), found {}", rec.len()),
            });
        }
        if rows.is_empty() && rec[0].eq_ignore_ascii_case("system") {
            continue;
        }
        rows.push(ReportRow {
            system: rec[0].to_string(),
            auroc: rec[1].to_string(),
            f1: rec[2].to_string(),
            api_calls: rec[3].to_string(),
            measured: false,
        });
    }
    Ok(rows)
}

/// Aligned plain-text table: system, AUROC (%), F1 (%), # API calls.
pub fn render_table(report: &EvalReport) -> String {
    let header = ["System", "AUROC (%)", "F1 Score (%)", "# API Calls"];
    let cells: Vec<[String; 4]> = report
        .rows
        .iter()
        .map(|r| {
            let name = if r.measured {
                format!("{} (this run)", r.system)
            } else {
                r.system.clone()
            };
            [name, r.auroc.clone(), r.f1.clone(), r.api_calls.clone()]
        })
        .collect();
    let mut width = header.map(str::len);
    for row in &cells {
        for (w, c) in width.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cols: [&str; 4]| {
        let mut s = format!("{:<w$}", cols[0], w = width[0]);
        for k in 1..4 {
            s.push_str(&format!("  {:>w$}", cols[k], w = width[k]));
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(header);
    out.push_str(&line(width.map(|w| "-".repeat(w)).each_ref().map(String::as_str)));
    for row in &cells {
        out.push_str(&line(row.each_ref().map(String::as_str)));
    }
    let c = report.confusion;
    out.push_str(&format!(
        "\nitems {}  errors {}  confusion tp {} fp {} tn {} fn {}  hard-prediction AUROC {}\n",
        report.n_items,
        report.n_errors,
        c.tp,
        c.fp,
        c.tn,
        c.fn_,
        pct(report.auroc_hard)
    ));
    out
}

/// Per-item CSV: `bundle_id,true_label,score,predicted,decision`.
pub fn write_records_csv(w: impl Write, report: &EvalReport) -> Result<(), EvalError> {
    let mut c = csv::Writer::from_writer(w);
    c.write_record(["bundle_id", "true_label", "score", "predicted", "decision"])?;
    for r in &report.records {
        let truth = match r.true_label {
            TruthLabel::Misinformative => "misinformative",
            TruthLabel::NotMisinformative => "not_misinformative",
        };
        c.write_record([
            r.bundle_id.as_str(),
            truth,
            &r.score.to_string(),
            if r.predicted { "true" } else { "false" },
            r.decision.map_or("error", OutcomeDecision::as_str),
        ])?;
    }
    c.flush()?;
    Ok(())
}

/// Writes `report.json`, `report.txt` and `records.csv` into `dir`.
pub fn write_report(dir: impl AsRef<Path>, report: &EvalReport) -> Result<(), EvalError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut json = serde_json::to_vec_pretty(report).map_err(std::io::Error::other)?;
    json.push(b'\n');
    std::fs::write(dir.join("report.json"), json)?;
    std::fs::write(dir.join("report.txt"), render_table(report))?;
    write_records_csv(std::fs::File::create(dir.join("records.csv"))?, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::ApiCalls;

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&[0.9, 0.8, 0.3, 0.2], &[true, false, true, false]).unwrap(), 0.75);
        assert_eq!(auroc(&[0.9, 0.8, 0.1], &[true, true, false]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.4; 6], &[true, false, true, false, false, true]).unwrap(), 0.5);
        assert!(matches!(auroc(&[0.1, 0.2], &[true, true]), Err(EvalError::SingleClass { .. })));
        assert!(auroc(&[f64::NAN, 0.2], &[true, false]).is_err());
    }

    #[test]
    fn f1_examples() {
        assert_eq!(f1(5, 0, 0), 1.0);
        assert_eq!(f1(0, 3, 4), 0.0);
        assert!((f1(8, 1, 2) - 16.0 / 19.0).abs() < 1e-15);
    }

    fn outcome(id: &str, d: OutcomeDecision, p: f64) -> Outcome {
        Outcome {
            bundle_id: id.into(),
            decision: Some(d),
            claim_probability: Some(p),
            verdict: None,
            api_calls: if d == OutcomeDecision::HarmlessNoClaim {
                ApiCalls::default()
            } else {
                ApiCalls { llm: 2, database: 1 }
            },
            wall_time_ms: None,
            error: None,
        }
    }

    fn label(id: &str, mis: bool) -> EvalLabel {
        EvalLabel {
            bundle_id: id.into(),
            truth: if mis {
                TruthLabel::Misinformative
            } else {
                TruthLabel::NotMisinformative
            },
        }
    }

    #[test]
    fn perfect_ten_item_fixture() {
        let mut outs = Vec::new();
        let mut labels = Vec::new();
        for i in 0..10 {
            let id = format!("b{i}");
            let mis = i % 2 == 0;
            let d = if mis {
                OutcomeDecision::Misinformative
            } else {
                OutcomeDecision::HarmlessNoClaim
            };
            outs.push(outcome(&id, d, 0.9));
            labels.push(label(&id, mis));
        }
        let r = evaluate(&outs, &labels, "vimguard", &[]).unwrap();
        assert_eq!(r.f1, 1.0);
        assert_eq!(r.confusion, Confusion { tp: 5, fp: 0, tn: 5, fn_: 0 });
        assert_eq!(r.auroc, Some(1.0));
        assert_eq!(r.api_calls, 15);
        outs.reverse();
        assert_eq!(evaluate(&outs, &labels, "vimguard", &[]).unwrap(), r);
    }

    #[test]
    fn missing_and_duplicate() {
        let outs = vec![outcome("a", OutcomeDecision::HarmlessNoClaim, 0.1)];
        assert!(matches!(
            evaluate(&outs, &[label("b", true)], "s", &[]),
            Err(EvalError::MissingOutcome(_))
        ));
        let dup = vec![outs[0].clone(), outs[0].clone()];
        assert!(matches!(evaluate(&dup, &[], "s", &[]), Err(EvalError::Duplicate(_))));
    }

    #[test]
    fn comparison_rows_are_verbatim() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cmp.csv");
        std::fs::write(&p, "# published\nsystem,auroc,f1,api_calls\nClaimBuster, 79.8, 81.3, 734\nLookup,N/A,58.90,734\n")
            .unwrap();
        let rows = read_comparison(&p).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!((rows[0].auroc.as_str(), rows[0].f1.as_str(), rows[0].api_calls.as_str()), ("79.8", "81.3", "734"));
        let outs = vec![
            outcome("a", OutcomeDecision::Misinformative, 0.8),
            outcome("b", OutcomeDecision::HarmlessNoClaim, 0.2),
        ];
        let r = evaluate(&outs, &[label("a", true), label("b", false)], "vimguard", &rows).unwrap();
        let table = render_table(&r);
        assert!(table.lines().any(|l| l.starts_with("ClaimBuster") && l.contains("79.8") && l.contains("81.3") && l.ends_with("734")));
        assert!(table.contains("58.90"));
        assert!(table.contains("vimguard (this run)"));
        std::fs::write(&p, "a,b\n").unwrap();
        assert!(read_comparison(&p).is_err());
    }

    #[test]
    fn scores_follow_convention() {
        assert_eq!(outcome_score(&outcome("a", OutcomeDecision::HarmlessNoClaim, 0.4)), 0.2);
        assert!((outcome_score(&outcome("a", OutcomeDecision::Misinformative, 0.4)) - 0.7).abs() < 1e-15);
        assert_eq!(outcome_score(&outcome("a", OutcomeDecision::HarmlessVerified, 0.4)), 0.1);
        assert_eq!(outcome_score(&outcome("a", OutcomeDecision::UnverifiableHarmless, 0.4)), 0.1);
    }

    #[test]
    fn report_files() {
        let outs = vec![
            outcome("a", OutcomeDecision::Misinformative, 0.8),
            outcome("b", OutcomeDecision::HarmlessVerified, 0.7),
        ];
        let r = evaluate(&outs, &[label("a", true), label("b", false)], "vimguard", &[]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_report(dir.path(), &r).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("records.csv")).unwrap();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.contains("b,not_misinformative,0.175,false,harmless_verified"));
        let back: EvalReport = serde_json::from_slice(&std::fs::read(dir.path().join("report.json")).unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
