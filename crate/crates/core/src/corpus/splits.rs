use serde::{Deserialize, Serialize};

use super::{ClassFrequencyTable, ClassId};
use crate::error::{Error, Result};

/// Frequency band of a class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Split {
    Many,
    Medium,
    Few,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Many, Split::Medium, Split::Few];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Many => "many",
            Split::Medium => "medium",
            Split::Few => "few",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "many" => Some(Split::Many),
            "medium" => Some(Split::Medium),
            "few" => Some(Split::Few),
            _ => None,
        }
    }

    /// Medium and few classes are eligible for augmentation.
    pub fn is_tail(self) -> bool {
        self != Split::Many
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    tags: Vec<Split>,
}

impl SplitAssignment {
    pub fn from_tags(tags: Vec<Split>) -> Self {
        Self { tags }
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn of(&self, class: ClassId) -> Split {
        self.tags[class]
    }

    pub fn tags(&self) -> &[Split] {
        &self.tags
    }

    pub fn classes_in(&self, split: Split) -> Vec<ClassId> {
        (0..self.tags.len()).filter(|&c| self.tags[c] == split).collect()
    }

    /// `(many, medium, few)` class counts.
    pub fn sizes(&self) -> (usize, usize, usize) {
        let count = |s| self.tags.iter().filter(|&&t| t == s).count();
        (count(Split::Many), count(Split::Medium), count(Split::Few))
    }
}

/// Object and relation split assignments of one dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSplits {
    pub objects: SplitAssignment,
    pub relations: SplitAssignment,
}

impl CorpusSplits {
    pub fn from_frequencies(freqs: &ClassFrequencyTable) -> Result<Self> {
        Ok(Self {
            objects: compute_splits(&freqs.objects)?,
            relations: compute_splits(&freqs.relations)?,
        })
    }
}

/// Ranks classes by descending count (ties by ascending id); the first
/// `ceil(5% N)` are many, up to `ceil(20% N)` medium, the rest few.
pub fn compute_splits(counts: &[u64]) -> Result<SplitAssignment> {
    let n = counts.len();
    if n < 3 {
        return Err(Error::invalid(format!(
            "frequency splits need at least 3 classes, got {n}"
        )));
    }
    let mut order: Vec<ClassId> = (0..n).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    let many = (5 * n).div_ceil(100);
    let many_medium = (20 * n).div_ceil(100);
    let mut tags = vec![Split::Few; n];
    for (rank, &c) in order.iter().enumerate() {
        tags[c] = if rank < many {
            Split::Many
        } else if rank < many_medium {
            Split::Medium
        } else {
            Split::Few
        };
    }
    Ok(SplitAssignment { tags })
}
