use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{LabeledSample, VrrClassifier};
use crate::corpus::{CorpusSplits, Split, SplitAssignment};
use crate::error::{Error, Result};

/// Average per-class accuracy (percent) within each split. `None` when no
/// class of the split occurs in the test set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitScores {
    pub many: Option<f64>,
    pub medium: Option<f64>,
    pub few: Option<f64>,
    pub all: Option<f64>,
}

impl SplitScores {
    pub fn get(&self, split: Option<Split>) -> Option<f64> {
        match split {
            Some(Split::Many) => self.many,
            Some(Split::Medium) => self.medium,
            Some(Split::Few) => self.few,
            None => self.all,
        }
    }

    /// Scores from per-class `(correct, total)` counts. Classes with zero
    /// total are left out of every average.
    fn from_counts(counts: &[(u64, u64)], splits: &SplitAssignment) -> Self {
        let mean = |filter: &dyn Fn(usize) -> bool| {
            let accs: Vec<f64> = counts
                .iter()
                .enumerate()
                .filter(|&(c, &(_, n))| n > 0 && filter(c))
                .map(|(_, &(k, n))| k as f64 / n as f64)
                .collect();
            (!accs.is_empty()).then(|| 100.0 * accs.iter().sum::<f64>() / accs.len() as f64)
        };
        Self {
            many: mean(&|c| splits.of(c) == Split::Many),
            medium: mean(&|c| splits.of(c) == Split::Medium),
            few: mean(&|c| splits.of(c) == Split::Few),
            all: mean(&|_| true),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Subject and object predictions pooled per object class.
    pub so: SplitScores,
    pub r: SplitScores,
    pub combined: Option<f64>,
    pub samples: usize,
}

/// Rounds half away from minus infinity, absorbing binary representation
/// error (14.655 rounds to 14.66).
pub fn round_half_up(x: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    let scaled = ((x * scale) * 1e6).round() / 1e6;
    (scaled + 0.5).floor() / scale
}

pub fn combined_score(so_all: f64, r_all: f64) -> f64 {
    (so_all + r_all) / 2.0
}

fn fmt_score(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{:.2}", round_half_up(x, 2)))
}

impl EvalReport {
    /// Table rows in the order (split, S/O, R); the last row is "all" with
    /// the combined score.
    pub fn to_text(&self, title: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{title}");
        let _ = writeln!(out, "{:<8} {:>8} {:>8}", "split", "S/O", "R");
        for (name, s) in [
            ("many", Some(Split::Many)),
            ("medium", Some(Split::Medium)),
            ("few", Some(Split::Few)),
            ("all", None),
        ] {
            let _ = writeln!(
                out,
                "{:<8} {:>8} {:>8}",
                name,
                fmt_score(self.so.get(s)),
                fmt_score(self.r.get(s))
            );
        }
        let _ = writeln!(out, "combined {:>8}", fmt_score(self.combined));
        let _ = writeln!(out, "samples  {:>8}", self.samples);
        out
    }

    /// `key=value` lines such as `so.few=10.14`, rounded to 2 decimals.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for (head, scores) in [("so", &self.so), ("r", &self.r)] {
            for (name, s) in [
                ("many", Some(Split::Many)),
                ("medium", Some(Split::Medium)),
                ("few", Some(Split::Few)),
                ("all", None),
            ] {
                let _ = writeln!(out, "{head}.{name}={}", fmt_score(scores.get(s)));
            }
        }
        let _ = writeln!(out, "combined={}", fmt_score(self.combined));
        out
    }
}

/// Scores `(subject, relation, object)` predictions against ground truth.
pub fn evaluate_predictions(
    predictions: &[(usize, usize, usize)],
    truth: &[(usize, usize, usize)],
    splits: &CorpusSplits,
) -> Result<EvalReport> {
    if truth.is_empty() {
        return Err(Error::invalid("test set is empty"));
    }
    if predictions.len() != truth.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} test samples",
            predictions.len(),
            truth.len()
        )));
    }
    let (no, nr) = (splits.objects.len(), splits.relations.len());
    let mut so = vec![(0u64, 0u64); no];
    let mut r = vec![(0u64, 0u64); nr];
    for (p, t) in predictions.iter().zip(truth) {
        for (kind, id, size) in [("object", t.0, no), ("relation", t.1, nr), ("object", t.2, no)] {
            if id >= size {
                return Err(Error::ClassOutOfRange { kind, id, size });
            }
        }
        let tally = |table: &mut Vec<(u64, u64)>, pred: usize, gold: usize| {
            table[gold].1 += 1;
            table[gold].0 += u64::from(pred == gold);
        };
        tally(&mut so, p.0, t.0);
        tally(&mut so, p.2, t.2);
        tally(&mut r, p.1, t.1);
    }
    let so = SplitScores::from_counts(&so, &splits.objects);
    let r = SplitScores::from_counts(&r, &splits.relations);
    let combined = so.all.zip(r.all).map(|(a, b)| combined_score(a, b));
    Ok(EvalReport {
        so,
        r,
        combined,
        samples: truth.len(),
    })
}

pub fn evaluate(model: &VrrClassifier, test: &[LabeledSample], splits: &CorpusSplits) -> Result<EvalReport> {
    if splits.objects.len() != model.config.num_objects || splits.relations.len() != model.config.num_relations {
        return Err(Error::invalid("split vocabularies do not match the classifier heads"));
    }
    for s in test {
        if s.x.len() != model.config.visual_width {
            return Err(Error::WidthMismatch {
                expected: model.config.visual_width,
                actual: s.x.len(),
            });
        }
    }
    let preds: Vec<_> = test.par_iter().map(|s| model.predict(&s.x)).collect();
    let truth: Vec<_> = test.iter().map(|s| (s.subject, s.relation, s.object)).collect();
    evaluate_predictions(&preds, &truth, splits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::compute_splits;

    fn splits() -> CorpusSplits {
        CorpusSplits {
            objects: compute_splits(&[50, 40, 30, 20]).unwrap(),
            relations: compute_splits(&[9, 8, 7]).unwrap(),
        }
    }

    #[test]
    fn half_up_rounding() {
        assert_eq!(round_half_up(combined_score(17.51, 11.80), 2), 14.66);
        assert_eq!(round_half_up(2.675, 2), 2.68);
        assert_eq!(round_half_up(1.005, 2), 1.01);
        assert_eq!(round_half_up(3.14159, 2), 3.14);
    }

    #[test]
    fn perfect_and_half() {
        let truth = vec![(0, 0, 1), (2, 1, 3), (1, 2, 0)];
        let rep = evaluate_predictions(&truth, &truth, &splits()).unwrap();
        for s in [rep.so, rep.r] {
            assert_eq!(s.all, Some(100.0));
        }
        assert_eq!(rep.combined, Some(100.0));

        // Relation 0 always right, relation 1 always wrong.
        let truth = vec![(0, 0, 0), (0, 1, 0)];
        let preds = vec![(0, 0, 0), (0, 0, 0)];
        let rep = evaluate_predictions(&preds, &truth, &splits()).unwrap();
        assert_eq!(rep.r.all, Some(50.0));
        assert_eq!(rep.so.medium, None);
        assert!(evaluate_predictions(&[], &[], &splits()).is_err());
    }

    #[test]
    fn order_and_duplication_invariance() {
        let truth = vec![(0, 0, 1), (2, 1, 3), (1, 2, 0), (3, 0, 3)];
        let preds = vec![(0, 1, 1), (2, 1, 0), (1, 0, 0), (3, 0, 2)];
        let base = evaluate_predictions(&preds, &truth, &splits()).unwrap();
        let (mut p2, mut t2) = (preds.clone(), truth.clone());
        p2.reverse();
        t2.reverse();
        assert_eq!(evaluate_predictions(&p2, &t2, &splits()).unwrap(), base);
        // Duplicate every sample involving relation 1.
        let (mut p3, mut t3) = (preds.clone(), truth.clone());
        for i in 0..truth.len() {
            if truth[i].1 == 1 {
                p3.push(preds[i]);
                t3.push(truth[i]);
            }
        }
        assert_eq!(evaluate_predictions(&p3, &t3, &splits()).unwrap().r, base.r);
    }

    #[test]
    fn kv_layout() {
        let truth = vec![(0, 0, 1)];
        let kv = evaluate_predictions(&truth, &truth, &splits()).unwrap().to_kv();
        assert!(kv.contains("so.many=100.00"));
        assert!(kv.contains("r.few=-"));
        assert!(kv.ends_with("combined=100.00\n"));
    }
}
