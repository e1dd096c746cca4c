//! Text and visual embeddings: the binary store, a deterministic synthetic
//! text encoder, condition-token assembly and stored-region sampling.

mod store;

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{slot_region_key, ClassId, Dataset, Slot, SyntheticWorld, Triplet};
use crate::error::{Error, Result};
use crate::hardness::HardnessVector;
use crate::nn;
use crate::rng;

pub use store::{EmbeddingKind, EmbeddingStore, STORE_MAGIC};

pub const DEFAULT_TEXT_WIDTH: usize = 768;
pub const DEFAULT_VISUAL_WIDTH: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextEmbedding(pub Vec<f64>);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisualEmbedding(pub Vec<f64>);

impl TextEmbedding {
    pub fn width(&self) -> usize {
        self.0.len()
    }
}

impl VisualEmbedding {
    pub fn width(&self) -> usize {
        self.0.len()
    }
}

/// Stream tag for synthetic text perturbations.
const TEXT_STREAM: u64 = 0x7465_7874;

/// Deterministic stand-in for a text encoder: the three class text
/// prototypes side by side, zero padded, plus a small perturbation seeded by
/// the triplet and the world seed, scaled to unit norm.
pub fn synthetic_text_encode(t: &Triplet, world: &SyntheticWorld) -> Result<TextEmbedding> {
    let n_obj = world.obj_text.len();
    let n_rel = world.rel_text.len();
    for id in [t.subject, t.object] {
        if id >= n_obj {
            return Err(Error::ClassOutOfRange {
                kind: "object",
                id,
                size: n_obj,
            });
        }
    }
    if t.relation >= n_rel {
        return Err(Error::ClassOutOfRange {
            kind: "relation",
            id: t.relation,
            size: n_rel,
        });
    }
    let width = world.config.dim_text;
    let mut v = Vec::with_capacity(width);
    v.extend_from_slice(&world.obj_text[t.subject]);
    v.extend_from_slice(&world.rel_text[t.relation]);
    v.extend_from_slice(&world.obj_text[t.object]);
    v.resize(width, 0.0);
    let mut r = rng::stream(
        world.config.seed,
        &[TEXT_STREAM, t.subject as u64, t.relation as u64, t.object as u64],
    );
    let noise = nn::gaussian_vec(&mut r, width);
    let scale = world.config.text_noise / (width as f64).sqrt();
    for (x, n) in v.iter_mut().zip(noise) {
        *x += scale * n;
    }
    nn::normalize(&mut v);
    Ok(TextEmbedding(v))
}

/// Declared widths of the condition tokens.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionWidths {
    pub text: usize,
    /// Hardness token width (number of cluster centres), when enabled.
    pub hardness: Option<usize>,
}

impl ConditionWidths {
    pub fn token_widths(&self) -> Vec<usize> {
        let mut w = vec![self.text];
        w.extend(self.hardness);
        w
    }
}

/// Ordered condition tokens for cross-attention: the text embedding, then
/// optionally the hardness vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionVector {
    pub tokens: Vec<Vec<f64>>,
}

impl ConditionVector {
    pub fn text_only(text: Vec<f64>) -> Self {
        Self { tokens: vec![text] }
    }

    pub fn widths(&self) -> Vec<usize> {
        self.tokens.iter().map(Vec::len).collect()
    }
}

pub fn build_condition(
    text: &TextEmbedding,
    hardness: Option<&HardnessVector>,
    widths: &ConditionWidths,
) -> Result<ConditionVector> {
    if text.width() != widths.text {
        return Err(Error::WidthMismatch {
            expected: widths.text,
            actual: text.width(),
        });
    }
    let mut tokens = vec![text.0.clone()];
    match (hardness, widths.hardness) {
        (None, None) => {}
        (Some(h), Some(k)) => {
            if h.width() != k {
                return Err(Error::WidthMismatch {
                    expected: k,
                    actual: h.width(),
                });
            }
            tokens.push(h.values().to_vec());
        }
        (Some(h), None) => {
            return Err(Error::invalid(format!(
                "hardness token of width {} given but the condition declares none",
                h.width()
            )))
        }
        (None, Some(k)) => {
            return Err(Error::invalid(format!(
                "condition declares a hardness token of width {k} but none was given"
            )))
        }
    }
    Ok(ConditionVector { tokens })
}

/// Store rows holding subject and object regions, grouped by class.
#[derive(Clone, Debug, Default)]
pub struct RegionIndex {
    rows: HashMap<(Slot, ClassId), Vec<usize>>,
}

impl RegionIndex {
    /// Collects `<region_key>#s` / `<region_key>#o` rows for every triplet.
    pub fn from_dataset(dataset: &Dataset, store: &EmbeddingStore) -> Self {
        let mut rows: HashMap<(Slot, ClassId), Vec<usize>> = HashMap::new();
        for t in &dataset.triplets {
            let Some(key) = &t.region_key else { continue };
            for slot in [Slot::Subject, Slot::Object] {
                if let Some(i) = store.index_of(&slot_region_key(key, slot)) {
                    rows.entry((slot, t.slot(slot))).or_default().push(i);
                }
            }
        }
        Self { rows }
    }

    pub fn rows(&self, class: ClassId, slot: Slot) -> &[usize] {
        self.rows.get(&(slot, class)).map_or(&[], Vec::as_slice)
    }
}

/// Uniformly picks one stored region of `class` in `slot`.
pub fn sample_region_embedding<R: Rng + ?Sized>(
    store: &EmbeddingStore,
    regions: &RegionIndex,
    class: ClassId,
    slot: Slot,
    rng: &mut R,
) -> Result<VisualEmbedding> {
    let rows = regions.rows(class, slot);
    if rows.is_empty() {
        return Err(Error::NoRegions {
            class: class.to_string(),
            slot: slot.as_str(),
        });
    }
    let pick = rows[rng.random_range(0..rows.len())];
    Ok(VisualEmbedding(store.row_f64(pick)))
}
