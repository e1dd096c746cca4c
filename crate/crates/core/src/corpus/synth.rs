//! Synthetic long-tail benchmark: a desk-scale stand-in for a real
//! relationship dataset with precomputed features.
//!
//! Object classes come in sibling groups under a deep chain, so siblings sit
//! two is-a edges apart. Visual prototypes of siblings share a group
//! direction; text prototypes are a fixed random linear image of the visual
//! ones, so text and vision stay aligned the way a joint embedding would.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{slot_region_key, ClassId, Dataset, Triplet, Vocabulary};
use crate::encoders::{synthetic_text_encode, EmbeddingKind, EmbeddingStore};
use crate::error::{Error, Result};
use crate::nn;
use crate::rng;
use crate::taxonomy::{SynsetRecord, Taxonomy};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub num_obj_classes: usize,
    pub num_rel_classes: usize,
    pub dim_visual: usize,
    pub dim_text: usize,
    pub zipf_exponent: f64,
    pub total_triplets: usize,
    /// Test triplets with uniformly drawn classes.
    pub test_triplets: usize,
    /// Per-coordinate standard deviation of region noise.
    pub visual_noise: f64,
    /// Norm of the perturbation added by the synthetic text encoder.
    pub text_noise: f64,
    /// Object classes per sibling group.
    pub group_size: usize,
    /// Weight of the class-specific direction relative to the group direction.
    pub sibling_spread: f64,
    /// Edge count from the root to an object class.
    pub taxonomy_depth: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_obj_classes: 60,
            num_rel_classes: 20,
            dim_visual: 32,
            dim_text: 96,
            zipf_exponent: 1.5,
            total_triplets: 3000,
            test_triplets: 3000,
            visual_noise: 0.15,
            text_noise: 0.05,
            group_size: 4,
            sibling_spread: 0.8,
            taxonomy_depth: 19,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim_visual < 8 || self.dim_text < 8 {
            return Err(Error::invalid("synthetic embedding widths must be at least 8"));
        }
        if self.num_obj_classes < 6 || self.num_rel_classes < 6 {
            return Err(Error::invalid("synthetic worlds need at least 6 classes per vocabulary"));
        }
        if !(self.zipf_exponent >= 0.0) || !self.zipf_exponent.is_finite() {
            return Err(Error::invalid(format!(
                "zipf exponent must be finite and >= 0, got {}",
                self.zipf_exponent
            )));
        }
        if self.group_size == 0 || self.taxonomy_depth < 2 {
            return Err(Error::invalid("group_size must be >= 1 and taxonomy_depth >= 2"));
        }
        if self.total_triplets == 0 {
            return Err(Error::invalid("total_triplets must be positive"));
        }
        Ok(())
    }

    /// Width of each class text sub-vector.
    pub fn text_part(&self) -> usize {
        self.dim_text / 3
    }
}

/// Class prototypes and per-class counts of a synthetic world; a pure
/// function of its config.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticWorld {
    pub config: SynthConfig,
    pub obj_visual: Vec<Vec<f64>>,
    pub rel_visual: Vec<Vec<f64>>,
    pub obj_text: Vec<Vec<f64>>,
    pub rel_text: Vec<Vec<f64>>,
    /// Sibling group of each object class.
    pub obj_group: Vec<usize>,
    /// Apportioned occurrence counts (objects count both slots).
    pub obj_counts: Vec<u64>,
    pub rel_counts: Vec<u64>,
}

const PROTO_STREAM: u64 = 1;
const RANK_STREAM: u64 = 2;
const TRIPLET_STREAM: u64 = 3;
const NOISE_STREAM: u64 = 4;
const TEST_STREAM: u64 = 5;

fn unit_gaussian(r: &mut impl rand::Rng, dim: usize) -> Vec<f64> {
    let mut v = nn::gaussian_vec(r, dim);
    nn::normalize(&mut v);
    v
}

/// Counts proportional to `rank^-exponent` summing to `total`, by the
/// largest-remainder method (remainder ties go to the better rank).
pub fn apportion_zipf(n: usize, exponent: f64, total: u64) -> Vec<u64> {
    let weights: Vec<f64> = (1..=n).map(|r| (r as f64).powf(-exponent)).collect();
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<u64> = quotas.iter().map(|q| q.floor() as u64).collect();
    let assigned: u64 = counts.iter().sum();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let (fa, fb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take((total - assigned) as usize) {
        counts[i] += 1;
    }
    counts
}

/// Fixed signed permutation applied to object-slot prototypes so that the
/// subject and object roles stay distinguishable in the relation region.
fn object_role(v: &[f64]) -> Vec<f64> {
    v.iter()
        .rev()
        .enumerate()
        .map(|(i, &x)| if i % 2 == 0 { x } else { -x })
        .collect()
}

impl SyntheticWorld {
    pub fn new(config: SynthConfig) -> Result<Self> {
        config.validate()?;
        let mut r = rng::stream(config.seed, &[PROTO_STREAM]);
        let (dv, part) = (config.dim_visual, config.text_part());

        let n_groups = config.num_obj_classes.div_ceil(config.group_size);
        let groups: Vec<Vec<f64>> = (0..n_groups).map(|_| unit_gaussian(&mut r, dv)).collect();
        let obj_group: Vec<usize> = (0..config.num_obj_classes)
            .map(|c| c / config.group_size)
            .collect();
        let obj_visual: Vec<Vec<f64>> = obj_group
            .iter()
            .map(|&g| {
                let own = unit_gaussian(&mut r, dv);
                let mut v: Vec<f64> = groups[g]
                    .iter()
                    .zip(&own)
                    .map(|(a, b)| a + config.sibling_spread * b)
                    .collect();
                nn::normalize(&mut v);
                v
            })
            .collect();
        let rel_visual: Vec<Vec<f64>> = (0..config.num_rel_classes)
            .map(|_| unit_gaussian(&mut r, dv))
            .collect();

        let projection = |r: &mut rand_chacha::ChaCha8Rng| nn::gaussian_vec(r, part * dv);
        let obj_proj = projection(&mut r);
        let rel_proj = projection(&mut r);
        let project = |m: &[f64], v: &[f64]| {
            let mut out = vec![0.0; part];
            nn::matvec(m, v, &mut out);
            nn::normalize(&mut out);
            out
        };
        let obj_text = obj_visual.iter().map(|v| project(&obj_proj, v)).collect();
        let rel_text = rel_visual.iter().map(|v| project(&rel_proj, v)).collect();

        // Frequency ranks are shuffled so each sibling group mixes head and tail.
        let mut rr = rng::stream(config.seed, &[RANK_STREAM]);
        let rank_counts = |n: usize, total: u64, rr: &mut rand_chacha::ChaCha8Rng| {
            let by_rank = apportion_zipf(n, config.zipf_exponent, total);
            let mut ranks: Vec<usize> = (0..n).collect();
            ranks.shuffle(rr);
            ranks.iter().map(|&k| by_rank[k]).collect::<Vec<u64>>()
        };
        let total = config.total_triplets as u64;
        let obj_counts = rank_counts(config.num_obj_classes, 2 * total, &mut rr);
        let rel_counts = rank_counts(config.num_rel_classes, total, &mut rr);
        for (kind, counts) in [("object", &obj_counts), ("relation", &rel_counts)] {
            let missing = counts.iter().filter(|&&c| c == 0).count();
            if missing > 0 {
                log::warn!("{missing} {kind} classes receive no training triplets");
            }
        }

        Ok(Self {
            config,
            obj_visual,
            rel_visual,
            obj_text,
            rel_text,
            obj_group,
            obj_counts,
            rel_counts,
        })
    }

    pub fn object_label(c: ClassId) -> String {
        format!("obj{c:03}")
    }

    pub fn relation_label(c: ClassId) -> String {
        format!("rel{c:02}")
    }

    pub fn vocabularies(&self) -> (Vocabulary, Vocabulary) {
        let o = (0..self.config.num_obj_classes).map(Self::object_label);
        let r = (0..self.config.num_rel_classes).map(Self::relation_label);
        (Vocabulary::new(o).unwrap(), Vocabulary::new(r).unwrap())
    }

    /// Deep chain, one node per sibling group, object classes as leaves.
    pub fn taxonomy(&self) -> Taxonomy {
        let depth = self.config.taxonomy_depth;
        let mut records = Vec::new();
        for i in 0..depth - 1 {
            let parents: Vec<String> = if i == 0 { vec![] } else { vec![format!("t{}", i - 1)] };
            records.push(SynsetRecord {
                id: format!("t{i}"),
                parents,
                lemmas: vec![format!("level{i}")],
            });
        }
        let n_groups = self.obj_group.iter().max().map_or(0, |g| g + 1);
        for g in 0..n_groups {
            records.push(SynsetRecord {
                id: format!("g{g}"),
                parents: vec![format!("t{}", depth - 2)],
                lemmas: vec![format!("group{g}")],
            });
        }
        for (c, &g) in self.obj_group.iter().enumerate() {
            records.push(SynsetRecord {
                id: format!("n.{}", Self::object_label(c)),
                parents: vec![format!("g{g}")],
                lemmas: vec![Self::object_label(c)],
            });
        }
        Taxonomy::from_records(records).expect("synthetic taxonomy is a tree")
    }

    /// Noise-free relation-region direction of a triplet.
    pub fn relation_prototype(&self, t: &Triplet) -> Vec<f64> {
        let o = object_role(&self.obj_visual[t.object]);
        let mut v: Vec<f64> = self.obj_visual[t.subject]
            .iter()
            .zip(&self.rel_visual[t.relation])
            .zip(&o)
            .map(|((a, b), c)| a + b + c)
            .collect();
        nn::normalize(&mut v);
        v
    }

    fn noisy(&self, base: &[f64], r: &mut impl rand::Rng) -> Vec<f64> {
        let noise = nn::gaussian_vec(r, base.len());
        base.iter()
            .zip(noise)
            .map(|(b, n)| b + self.config.visual_noise * n)
            .collect()
    }

    fn push_regions(
        &self,
        store: &mut EmbeddingStore,
        key: &str,
        t: &Triplet,
        r: &mut impl rand::Rng,
    ) -> Result<()> {
        store.push(key, &self.noisy(&self.relation_prototype(t), r))?;
        let subj = self.noisy(&self.obj_visual[t.subject], r);
        store.push(slot_region_key(key, super::Slot::Subject), &subj)?;
        let obj = self.noisy(&object_role(&self.obj_visual[t.object]), r);
        store.push(slot_region_key(key, super::Slot::Object), &obj)?;
        Ok(())
    }
}

/// Everything the benchmark produces.
#[derive(Clone, Debug)]
pub struct SyntheticBench {
    pub world: SyntheticWorld,
    pub taxonomy: Taxonomy,
    pub train: Dataset,
    pub test: Dataset,
    /// Relation, subject and object regions of train and test triplets.
    pub visual: EmbeddingStore,
    /// Text embeddings of the distinct training triplets, keyed by
    /// [`Dataset::text_key`].
    pub text: EmbeddingStore,
}

pub fn generate_synthetic_world(config: SynthConfig) -> Result<SyntheticBench> {
    let world = SyntheticWorld::new(config)?;
    let cfg = &world.config;
    let (objects, relations) = world.vocabularies();

    let mut r = rng::stream(cfg.seed, &[TRIPLET_STREAM]);
    let expand = |counts: &[u64]| -> Vec<ClassId> {
        counts
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| std::iter::repeat_n(c, n as usize))
            .collect()
    };
    let mut rel_pool = expand(&world.rel_counts);
    let mut obj_pool = expand(&world.obj_counts);
    rel_pool.shuffle(&mut r);
    obj_pool.shuffle(&mut r);

    let mut visual = EmbeddingStore::new(EmbeddingKind::Visual, cfg.dim_visual);
    let mut nr = rng::stream(cfg.seed, &[NOISE_STREAM]);
    let mut train = Vec::with_capacity(cfg.total_triplets);
    for (i, &rel) in rel_pool.iter().enumerate() {
        let mut t = Triplet::new(obj_pool[2 * i], rel, obj_pool[2 * i + 1]);
        let key = format!("tr{i}");
        world.push_regions(&mut visual, &key, &t, &mut nr)?;
        t.image_id = Some(format!("img{i}"));
        t.region_key = Some(key);
        train.push(t);
    }

    let mut tr = rng::stream(cfg.seed, &[TEST_STREAM]);
    let mut test = Vec::with_capacity(cfg.test_triplets);
    for i in 0..cfg.test_triplets {
        use rand::Rng;
        let mut t = Triplet::new(
            tr.random_range(0..cfg.num_obj_classes),
            tr.random_range(0..cfg.num_rel_classes),
            tr.random_range(0..cfg.num_obj_classes),
        );
        let key = format!("te{i}");
        world.push_regions(&mut visual, &key, &t, &mut tr)?;
        t.image_id = Some(format!("test{i}"));
        t.region_key = Some(key);
        test.push(t);
    }

    let train = Dataset::new(objects.clone(), relations.clone(), train)?;
    let test = Dataset::new(objects, relations, test)?;

    let mut text = EmbeddingStore::new(EmbeddingKind::Text, cfg.dim_text);
    for t in &train.triplets {
        let key = train.text_key(t);
        if !text.contains(&key) {
            text.push(key, &synthetic_text_encode(t, &world)?.0)?;
        }
    }

    Ok(SyntheticBench {
        taxonomy: world.taxonomy(),
        world,
        train,
        test,
        visual,
        text,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            num_obj_classes: 12,
            num_rel_classes: 6,
            dim_visual: 8,
            dim_text: 24,
            total_triplets: 200,
            test_triplets: 50,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn four_class_apportionment() {
        assert_eq!(apportion_zipf(4, 1.0, 25), vec![12, 6, 4, 3]);
    }

    #[test]
    fn zero_exponent_is_flat() {
        let c = apportion_zipf(7, 0.0, 100);
        assert_eq!(c.iter().sum::<u64>(), 100);
        assert!(c.iter().max().unwrap() - c.iter().min().unwrap() <= 1);
    }

    #[test]
    fn negative_exponent_is_rejected() {
        let cfg = SynthConfig {
            zipf_exponent: -0.5,
            ..small()
        };
        assert!(generate_synthetic_world(cfg).is_err());
        assert!(generate_synthetic_world(SynthConfig { dim_visual: 4, ..small() }).is_err());
        assert!(generate_synthetic_world(SynthConfig { num_rel_classes: 5, ..small() }).is_err());
    }

    #[test]
    fn empirical_counts_match_apportionment() {
        let b = generate_synthetic_world(small()).unwrap();
        let f = b.train.frequencies();
        assert_eq!(f.objects, b.world.obj_counts);
        assert_eq!(f.relations, b.world.rel_counts);
        let mut sorted = f.relations.clone();
        sorted.sort_unstable_by(|a, b| b.cmp(a));
        assert_eq!(sorted, apportion_zipf(6, 1.5, 200));
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let a = generate_synthetic_world(small()).unwrap();
        let b = generate_synthetic_world(small()).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
        assert_eq!(a.visual.to_bytes(), b.visual.to_bytes());
        assert_eq!(a.text.to_bytes(), b.text.to_bytes());
        let c = generate_synthetic_world(SynthConfig { seed: 1, ..small() }).unwrap();
        assert_ne!(a.visual.to_bytes(), c.visual.to_bytes());
    }

    #[test]
    fn prototypes_are_unit_norm_and_siblings_are_close() {
        let b = generate_synthetic_world(small()).unwrap();
        for v in b.world.obj_visual.iter().chain(&b.world.rel_visual) {
            assert!((nn::l2_norm(v) - 1.0).abs() < 1e-12);
        }
        let tax = &b.taxonomy;
        assert_eq!(tax.depth(), 19);
        let sib = tax.label_similarity("obj000", "obj001").unwrap();
        let far = tax.label_similarity("obj000", "obj011").unwrap();
        assert!(sib >= 2.26 && far < 2.26);
    }

    #[test]
    fn every_training_triplet_has_regions() {
        let b = generate_synthetic_world(small()).unwrap();
        for t in &b.train.triplets {
            let k = t.region_key.as_ref().unwrap();
            assert!(b.visual.contains(k));
            assert!(b.visual.contains(&slot_region_key(k, super::super::Slot::Subject)));
            assert!(b.text.contains(&b.train.text_key(t)));
        }
        assert_eq!(b.visual.len(), 3 * (200 + 50));
    }
}
