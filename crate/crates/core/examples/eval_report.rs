//! Scores a hand-written outcome stream against ground truth and prints the
//! comparison table.
//!
//! cargo run --example eval_report

use vimguard::eval::{evaluate, render_table, EvalLabel, ReportRow, TruthLabel};
use vimguard::pipeline::{Outcome, OutcomeDecision};
use vimguard::verify::ApiCalls;

fn outcome(id: &str, decision: OutcomeDecision, p: f64) -> Outcome {
    let adjudicated = decision != OutcomeDecision::HarmlessNoClaim;
    Outcome {
        bundle_id: id.into(),
        decision: Some(decision),
        claim_probability: Some(p),
        verdict: None,
        api_calls: ApiCalls {
            llm: if adjudicated { 3 } else { 0 },
            database: adjudicated as u64,
        },
        wall_time_ms: None,
        error: None,
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    use OutcomeDecision::*;
    use TruthLabel::{Misinformative as Yes, NotMisinformative as No};
    let items = [
        ("v1", Misinformative, 0.97, Yes),
        ("v2", Misinformative, 0.81, No),
        ("v3", HarmlessVerified, 0.92, No),
        ("v4", UnverifiableHarmless, 0.66, Yes),
        ("v5", HarmlessNoClaim, 0.12, No),
        ("v6", HarmlessNoClaim, 0.31, No),
        ("v7", Misinformative, 0.74, Yes),
    ];
    let outcomes: Vec<Outcome> = items.iter().map(|&(id, d, p, _)| outcome(id, d, p)).collect();
    let labels: Vec<EvalLabel> = items
        .iter()
        .map(|&(id, _, _, truth)| EvalLabel {
            bundle_id: id.into(),
            truth,
        })
        .collect();
    let baseline = ReportRow {
        system: "keyword baseline".into(),
        auroc: "61.0".into(),
        f1: "55.5".into(),
        api_calls: "7".into(),
        measured: false,
    };
    let report = evaluate(&outcomes, &labels, "demo", &[baseline])?;
    for r in &report.records {
        println!("{} {:?} score {:.3} predicted {}", r.bundle_id, r.true_label, r.score, r.predicted);
    }
    println!("{:?}\n", report.confusion);
    print!("{}", render_table(&report));
    Ok(())
}
