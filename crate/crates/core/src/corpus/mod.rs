//! Triplet datasets, class statistics, frequency splits, taxonomy-driven
//! triplet augmentation and the synthetic long-tail benchmark.

mod augment;
mod splits;
mod synth;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use augment::{
    augment_triplets, read_augmented, write_augmented, AugmentConfig, AugmentedTriplet,
    Augmentation, SimilarityIndex,
};
pub use splits::{compute_splits, CorpusSplits, Split, SplitAssignment};
pub use synth::{
    apportion_zipf, generate_synthetic_world, SynthConfig, SyntheticBench, SyntheticWorld,
};

/// Class id within a vocabulary (the label's line number in its sidecar).
pub type ClassId = usize;

/// Which object slot of a triplet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Slot {
    Subject,
    Object,
}

impl Slot {
    pub fn as_str(self) -> &'static str {
        match self {
            Slot::Subject => "subject",
            Slot::Object => "object",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "subject" => Some(Slot::Subject),
            "object" => Some(Slot::Object),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triplet {
    pub subject: ClassId,
    pub relation: ClassId,
    pub object: ClassId,
    pub image_id: Option<String>,
    /// Key of the relation-region embedding in a visual store.
    pub region_key: Option<String>,
}

impl Triplet {
    pub fn new(subject: ClassId, relation: ClassId, object: ClassId) -> Self {
        Self {
            subject,
            relation,
            object,
            image_id: None,
            region_key: None,
        }
    }

    pub fn slot(&self, slot: Slot) -> ClassId {
        match slot {
            Slot::Subject => self.subject,
            Slot::Object => self.object,
        }
    }

    pub fn with_slot(&self, slot: Slot, class: ClassId) -> Self {
        let mut t = Triplet::new(self.subject, self.relation, self.object);
        match slot {
            Slot::Subject => t.subject = class,
            Slot::Object => t.object = class,
        }
        t
    }
}

/// Subject/object region keys derived from a relation-region key.
pub fn slot_region_key(region_key: &str, slot: Slot) -> String {
    match slot {
        Slot::Subject => format!("{region_key}#s"),
        Slot::Object => format!("{region_key}#o"),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocabulary {
    labels: Vec<String>,
    index: HashMap<String, ClassId>,
}

impl Vocabulary {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let mut v = Vocabulary::default();
        for l in labels {
            let l = l.into();
            if v.index.insert(l.clone(), v.labels.len()).is_some() {
                return Err(Error::DuplicateKey(l));
            }
            v.labels.push(l);
        }
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, id: ClassId) -> &str {
        &self.labels[id]
    }

    pub fn id(&self, label: &str) -> Option<ClassId> {
        self.index.get(label).copied()
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::new(text.lines().map(|l| l.trim_end_matches('\r').to_string()))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        for l in &self.labels {
            out.push_str(l);
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// A triplet dataset with its two label vocabularies.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    pub objects: Vocabulary,
    pub relations: Vocabulary,
    pub triplets: Vec<Triplet>,
}

impl Dataset {
    pub fn new(objects: Vocabulary, relations: Vocabulary, triplets: Vec<Triplet>) -> Result<Self> {
        let ds = Self {
            objects,
            relations,
            triplets,
        };
        for t in &ds.triplets {
            ds.check_triplet(t)?;
        }
        Ok(ds)
    }

    pub fn check_triplet(&self, t: &Triplet) -> Result<()> {
        let n_obj = self.objects.len();
        for id in [t.subject, t.object] {
            if id >= n_obj {
                return Err(Error::ClassOutOfRange {
                    kind: "object",
                    id,
                    size: n_obj,
                });
            }
        }
        if t.relation >= self.relations.len() {
            return Err(Error::ClassOutOfRange {
                kind: "relation",
                id: t.relation,
                size: self.relations.len(),
            });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    /// `subject|relation|object` label key, used to look up text embeddings.
    pub fn text_key(&self, t: &Triplet) -> String {
        format!(
            "{}|{}|{}",
            self.objects.label(t.subject),
            self.relations.label(t.relation),
            self.objects.label(t.object)
        )
    }

    pub fn frequencies(&self) -> ClassFrequencyTable {
        let mut objects = vec![0u64; self.objects.len()];
        let mut relations = vec![0u64; self.relations.len()];
        for t in &self.triplets {
            objects[t.subject] += 1;
            objects[t.object] += 1;
            relations[t.relation] += 1;
        }
        ClassFrequencyTable { objects, relations }
    }

    pub fn sidecar_paths(path: &Path) -> (PathBuf, PathBuf) {
        let base = path.as_os_str().to_owned();
        let mut o = base.clone();
        o.push(".objects");
        let mut r = base;
        r.push(".relations");
        (PathBuf::from(o), PathBuf::from(r))
    }

    /// Reads `path` plus its `<path>.objects` / `<path>.relations` sidecars.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let (op, rp) = Self::sidecar_paths(path);
        let objects = Vocabulary::read(&op)?;
        let relations = Vocabulary::read(&rp)?;
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&text, objects, relations, &path.display().to_string())
    }

    pub fn parse_tsv(
        text: &str,
        objects: Vocabulary,
        relations: Vocabulary,
        source: &str,
    ) -> Result<Self> {
        let mut triplets = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 5 {
                return Err(Error::Parse {
                    path: source.to_string(),
                    line: n + 1,
                    msg: format!("expected 5 tab-separated fields, found {}", f.len()),
                });
            }
            let lookup = |vocab: &Vocabulary, kind: &'static str, label: &str| {
                vocab.id(label).ok_or_else(|| Error::UnknownLabel {
                    kind,
                    label: label.to_string(),
                })
            };
            let opt = |s: &str| (!s.is_empty()).then(|| s.to_string());
            triplets.push(Triplet {
                subject: lookup(&objects, "object", f[0])?,
                relation: lookup(&relations, "relation", f[1])?,
                object: lookup(&objects, "object", f[2])?,
                image_id: opt(f[3]),
                region_key: opt(f[4]),
            });
        }
        Ok(Self {
            objects,
            relations,
            triplets,
        })
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for t in &self.triplets {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                self.objects.label(t.subject),
                self.relations.label(t.relation),
                self.objects.label(t.object),
                t.image_id.as_deref().unwrap_or(""),
                t.region_key.as_deref().unwrap_or("")
            );
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let (op, rp) = Self::sidecar_paths(path);
        self.objects.write(op)?;
        self.relations.write(rp)?;
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

/// Per-class occurrence counts. Object counts include both subject and
/// object occurrences.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassFrequencyTable {
    pub objects: Vec<u64>,
    pub relations: Vec<u64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        let objects = Vocabulary::new(["cake", "spoons", "cookie"]).unwrap();
        let relations = Vocabulary::new(["near", "on"]).unwrap();
        let mut t = Triplet::new(1, 0, 0);
        t.image_id = Some("img1".into());
        t.region_key = Some("r1".into());
        Dataset::new(objects, relations, vec![t, Triplet::new(0, 1, 2)]).unwrap()
    }

    #[test]
    fn tsv_round_trip_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("train.tsv");
        let ds = tiny();
        ds.write(&p).unwrap();
        assert!(p.with_extension("tsv.objects").exists());
        assert_eq!(Dataset::read(&p).unwrap(), ds);
    }

    #[test]
    fn frequencies_count_both_object_slots() {
        let f = tiny().frequencies();
        assert_eq!(f.objects, vec![2, 1, 1]);
        assert_eq!(f.relations, vec![1, 1]);
        assert_eq!(f.objects.iter().sum::<u64>(), 4);
    }

    #[test]
    fn unknown_label_and_bad_rows_are_errors() {
        let ds = tiny();
        let bad = "cake\tnear\tpie\t\t\n";
        assert!(matches!(
            Dataset::parse_tsv(bad, ds.objects.clone(), ds.relations.clone(), "x"),
            Err(Error::UnknownLabel { .. })
        ));
        assert!(matches!(
            Dataset::parse_tsv("cake\tnear\n", ds.objects.clone(), ds.relations.clone(), "x"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(Dataset::new(ds.objects.clone(), ds.relations.clone(), vec![Triplet::new(0, 5, 0)])
            .is_err());
    }

    #[test]
    fn text_key_uses_labels() {
        let ds = tiny();
        assert_eq!(ds.text_key(&ds.triplets[0]), "spoons|near|cake");
    }
}
