use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ClassId, CorpusSplits, Dataset, Slot, Split, Triplet};
use crate::error::{Error, Result};
use crate::rng;
use crate::taxonomy::{check_threshold, Taxonomy};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub threshold: f64,
    /// `None` keeps every variant of that origin.
    pub budget_few: Option<usize>,
    pub budget_medium: Option<usize>,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            threshold: 2.26,
            budget_few: Some(48_000),
            budget_medium: Some(48_000),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentedTriplet {
    /// Index of the original triplet in the source dataset.
    pub source: usize,
    pub triplet: Triplet,
    pub slot: Slot,
    /// Class that was replaced in `slot`.
    pub replaced: ClassId,
    /// LCH score between the replaced class and its replacement.
    pub score: f64,
    pub origin: Split,
}

impl AugmentedTriplet {
    /// Stable key: source index, slot and replacement class.
    pub fn key(&self) -> String {
        let tag = match self.slot {
            Slot::Subject => 's',
            Slot::Object => 'o',
        };
        format!("aug{}.{}.{}", self.source, tag, self.triplet.slot(self.slot))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Augmentation {
    pub triplets: Vec<AugmentedTriplet>,
    pub warnings: Vec<String>,
}

/// Per object class: training-vocabulary classes with LCH at or above the
/// threshold, best first.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityIndex {
    pub neighbours: Vec<Vec<(ClassId, f64)>>,
}

impl SimilarityIndex {
    pub fn build(dataset: &Dataset, taxonomy: &Taxonomy, threshold: f64) -> Result<Self> {
        check_threshold(threshold)?;
        let present: Vec<bool> = dataset.frequencies().objects.iter().map(|&c| c > 0).collect();
        let labels = dataset.objects.labels();
        let resolution = taxonomy.resolve_vocabulary(labels);
        for label in &resolution.unresolved {
            log::warn!("object class `{label}` is not in the taxonomy and will not be replaced");
        }
        let neighbours = labels
            .par_iter()
            .map(|label| {
                taxonomy.similar_classes(label, labels, threshold).map(|hits| {
                    hits.into_iter().filter(|&(c, _)| present[c]).collect::<Vec<_>>()
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { neighbours })
    }
}

/// The tail-most of two optional origins (few beats medium).
fn tailmost(a: Option<Split>, b: Option<Split>) -> Option<Split> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.max(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

fn variants_for(
    index: usize,
    t: &Triplet,
    splits: &CorpusSplits,
    sim: &SimilarityIndex,
) -> Vec<AugmentedTriplet> {
    let tail = |s: Split| s.is_tail().then_some(s);
    let rel = tail(splits.relations.of(t.relation));
    let subj = tail(splits.objects.of(t.subject));
    let obj = tail(splits.objects.of(t.object));
    // Tail relation: replace either slot. Tail subject: replace the object.
    // Tail object: replace the subject.
    let plan = [
        (Slot::Subject, tailmost(rel, obj)),
        (Slot::Object, tailmost(rel, subj)),
    ];
    let mut out = Vec::new();
    for (slot, origin) in plan {
        let Some(origin) = origin else { continue };
        let (replaced, other) = match slot {
            Slot::Subject => (t.subject, t.object),
            Slot::Object => (t.object, t.subject),
        };
        for &(class, score) in &sim.neighbours[replaced] {
            if class == replaced || class == other {
                continue;
            }
            out.push(AugmentedTriplet {
                source: index,
                triplet: t.with_slot(slot, class),
                slot,
                replaced,
                score,
                origin,
            });
        }
    }
    out
}

/// Replaces one slot of each tail-involving triplet with taxonomy-similar
/// classes, then subsamples each origin split to its budget.
pub fn augment_triplets(
    dataset: &Dataset,
    splits: &CorpusSplits,
    taxonomy: &Taxonomy,
    config: &AugmentConfig,
) -> Result<Augmentation> {
    if splits.objects.len() != dataset.objects.len()
        || splits.relations.len() != dataset.relations.len()
    {
        return Err(Error::invalid("split assignment does not match dataset vocabularies"));
    }
    let sim = SimilarityIndex::build(dataset, taxonomy, config.threshold)?;
    augment_with_index(dataset, splits, &sim, config)
}

pub fn augment_with_index(
    dataset: &Dataset,
    splits: &CorpusSplits,
    sim: &SimilarityIndex,
    config: &AugmentConfig,
) -> Result<Augmentation> {
    check_threshold(config.threshold)?;
    let all: Vec<AugmentedTriplet> = dataset
        .triplets
        .par_iter()
        .enumerate()
        .map(|(i, t)| variants_for(i, t, splits, sim))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();

    let mut keep = vec![false; all.len()];
    let mut warnings = Vec::new();
    for (tag, origin, budget) in [
        (1u64, Split::Few, config.budget_few),
        (2u64, Split::Medium, config.budget_medium),
    ] {
        let members: Vec<usize> = (0..all.len()).filter(|&i| all[i].origin == origin).collect();
        match budget {
            Some(b) if members.len() > b => {
                let mut r = rng::stream(config.seed, &[tag]);
                for pick in index::sample(&mut r, members.len(), b) {
                    keep[members[pick]] = true;
                }
            }
            Some(b) => {
                if members.len() < b {
                    let w = format!(
                        "budget of {b} {} variants exceeds the {} available; keeping all",
                        origin.as_str(),
                        members.len()
                    );
                    log::warn!("{w}");
                    warnings.push(w);
                }
                members.iter().for_each(|&i| keep[i] = true);
            }
            None => members.iter().for_each(|&i| keep[i] = true),
        }
    }
    let triplets = all
        .into_iter()
        .zip(keep)
        .filter_map(|(a, k)| k.then_some(a))
        .collect();
    Ok(Augmentation { triplets, warnings })
}

const HEADER: &str = "# key\tsource\tslot\treplaced\tscore\torigin\tsubject\trelation\tobject";

pub fn write_augmented(
    path: impl AsRef<Path>,
    dataset: &Dataset,
    augmented: &[AugmentedTriplet],
) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from(HEADER);
    out.push('\n');
    for a in augmented {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            a.key(),
            a.source,
            a.slot.as_str(),
            dataset.objects.label(a.replaced),
            a.score,
            a.origin.as_str(),
            dataset.objects.label(a.triplet.subject),
            dataset.relations.label(a.triplet.relation),
            dataset.objects.label(a.triplet.object),
        );
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_augmented(path: impl AsRef<Path>, dataset: &Dataset) -> Result<Vec<AugmentedTriplet>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |msg: String| Error::Parse {
            path: path.display().to_string(),
            line: n + 1,
            msg,
        };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 9 {
            return Err(bad(format!("expected 9 fields, found {}", f.len())));
        }
        let obj = |s: &str| {
            dataset
                .objects
                .id(s)
                .ok_or_else(|| bad(format!("unknown object label `{s}`")))
        };
        let rel = dataset
            .relations
            .id(f[7])
            .ok_or_else(|| bad(format!("unknown relation label `{}`", f[7])))?;
        let a = AugmentedTriplet {
            source: f[1].parse().map_err(|_| bad("bad source index".into()))?,
            slot: Slot::parse(f[2]).ok_or_else(|| bad(format!("bad slot `{}`", f[2])))?,
            replaced: obj(f[3])?,
            score: f[4].parse().map_err(|_| bad("bad score".into()))?,
            origin: Split::parse(f[5]).ok_or_else(|| bad(format!("bad origin `{}`", f[5])))?,
            triplet: Triplet::new(obj(f[6])?, rel, obj(f[8])?),
        };
        if a.key() != f[0] {
            return Err(bad(format!("key `{}` does not match row contents", f[0])));
        }
        out.push(a);
    }
    Ok(out)
}
