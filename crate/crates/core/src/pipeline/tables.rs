use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::Flags;
use crate::corpus::Split;
use crate::vrrmodel::{round_half_up, EvalReport, LossKind};

pub const EVAL_FILE: &str = "eval.json";

/// One evaluated model of a run directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    /// `baseline` or `finetuned`.
    pub model: String,
    pub loss: LossKind,
    /// Generation flags; only for fine-tuned models.
    pub flags: Option<Flags>,
    pub budget_few: Option<usize>,
    pub budget_medium: Option<usize>,
    pub report: EvalReport,
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{:.2}", round_half_up(x, 2)))
}

fn on(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn method(r: &EvalRecord) -> String {
    let loss = match r.loss {
        LossKind::Ce => "CE",
        LossKind::Wce => "WCE",
    };
    if r.model == "baseline" {
        loss.to_string()
    } else {
        format!("{loss} + DiffAugment")
    }
}

const SPLITS: [(&str, Option<Split>); 4] = [
    ("many", Some(Split::Many)),
    ("medium", Some(Split::Medium)),
    ("few", Some(Split::Few)),
    ("all", None),
];

/// Markdown tables (per-split accuracies, then the flag grid of fine-tuned
/// runs) and a flat `run.model.head.split=value` listing.
pub fn render_report(runs: &[(String, Vec<EvalRecord>)]) -> (String, String) {
    let mut md = String::from("# Long-tail evaluation\n\n");
    md.push_str("| run | method | many S/O | medium S/O | few S/O | all S/O | many R | medium R | few R | all R | combined |\n");
    md.push_str("|---|---|---|---|---|---|---|---|---|---|---|\n");
    let mut kv = String::new();
    for (name, records) in runs {
        for r in records {
            let _ = write!(md, "| {name} | {} ", method(r));
            for scores in [&r.report.so, &r.report.r] {
                for (_, s) in SPLITS {
                    let _ = write!(md, "| {} ", cell(scores.get(s)));
                }
            }
            let _ = writeln!(md, "| {} |", cell(r.report.combined));
            for (head, scores) in [("so", &r.report.so), ("r", &r.report.r)] {
                for (split, s) in SPLITS {
                    let _ = writeln!(kv, "{name}.{}.{head}.{split}={}", r.model, cell(scores.get(s)));
                }
            }
            let _ = writeln!(kv, "{name}.{}.combined={}", r.model, cell(r.report.combined));
        }
    }
    let grid: Vec<(&String, &EvalRecord, Flags)> = runs
        .iter()
        .flat_map(|(n, rs)| rs.iter().filter_map(move |r| r.flags.map(|f| (n, r, f))))
        .collect();
    if !grid.is_empty() {
        md.push_str("\n## Generation flags\n\n");
        md.push_str("| run | so seed | hardness | curriculum | few S/O | all S/O | all R | combined |\n");
        md.push_str("|---|---|---|---|---|---|---|---|\n");
        for (name, r, f) in grid {
            let _ = writeln!(
                md,
                "| {name} | {} | {} | {} | {} | {} | {} | {} |",
                on(f.so_seed),
                on(f.hardness_condition),
                on(f.curriculum),
                cell(r.report.so.few),
                cell(r.report.so.all),
                cell(r.report.r.all),
                cell(r.report.combined)
            );
        }
    }
    (md, kv)
}
