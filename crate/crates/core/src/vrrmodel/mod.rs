//! Reference relationship classifier: CE/WCE baseline training, fine-tuning
//! on generated features (optionally easy-then-hard) and per-class
//! long-tail evaluation.

mod classifier;
mod report;

pub use classifier::{ClassifierConfig, FitConfig, HeadWeights, LabeledSample, VrrClassifier};
pub use report::{combined_score, evaluate, evaluate_predictions, round_half_up, EvalReport, SplitScores};

use serde::{Deserialize, Serialize};

use crate::corpus::{AugmentedTriplet, ClassFrequencyTable, Dataset};
use crate::encoders::EmbeddingStore;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Ce,
    Wce,
}

impl LossKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ce" => Some(Self::Ce),
            "wce" => Some(Self::Wce),
            _ => None,
        }
    }
}

/// Inverse-frequency weights normalized to sum to the class count. Classes
/// with zero count get the largest observed weight.
pub fn wce_weights(freqs: &[u64]) -> Result<Vec<f64>> {
    let inv: Vec<Option<f64>> = freqs
        .iter()
        .map(|&f| (f > 0).then(|| 1.0 / f as f64))
        .collect();
    let max = inv
        .iter()
        .flatten()
        .copied()
        .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))))
        .ok_or_else(|| Error::invalid("all class frequencies are zero"))?;
    let raw: Vec<f64> = inv.iter().map(|w| w.unwrap_or(max)).collect();
    let sum: f64 = raw.iter().sum();
    let c = freqs.len() as f64;
    Ok(raw.iter().map(|w| w * c / sum).collect())
}

impl HeadWeights {
    pub fn uniform(num_objects: usize, num_relations: usize) -> Self {
        Self {
            objects: vec![1.0; num_objects],
            relations: vec![1.0; num_relations],
        }
    }

    pub fn from_frequencies(freqs: &ClassFrequencyTable) -> Result<Self> {
        Ok(Self {
            objects: wce_weights(&freqs.objects)?,
            relations: wce_weights(&freqs.relations)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            epochs: 30,
            batch: 64,
            lr: 3e-3,
            seed: 0,
        }
    }
}

/// Pairs each triplet with its relation-region embedding.
pub fn samples_from_dataset(dataset: &Dataset, visual: &EmbeddingStore) -> Result<Vec<LabeledSample>> {
    dataset
        .triplets
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let key = t
                .region_key
                .as_deref()
                .ok_or_else(|| Error::invalid(format!("triplet {i} has no region key")))?;
            let x = visual.get_f64(key).ok_or_else(|| Error::UnknownKey(key.to_string()))?;
            Ok(LabeledSample {
                x,
                subject: t.subject,
                relation: t.relation,
                object: t.object,
            })
        })
        .collect()
}

/// Pairs each augmented triplet with its generated embedding. Triplets with
/// no generated row are skipped; the second value lists their positions.
pub fn samples_from_generated(
    augmented: &[AugmentedTriplet],
    generated: &EmbeddingStore,
) -> (Vec<LabeledSample>, Vec<usize>) {
    let mut out = Vec::with_capacity(augmented.len());
    let mut missing = Vec::new();
    for (i, a) in augmented.iter().enumerate() {
        match generated.get_f64(&a.key()) {
            Some(x) => out.push(LabeledSample {
                x,
                subject: a.triplet.subject,
                relation: a.triplet.relation,
                object: a.triplet.object,
            }),
            None => missing.push(i),
        }
    }
    (out, missing)
}

/// Trains a fresh classifier with the summed three-head (weighted)
/// cross-entropy.
pub fn train_baseline(
    samples: &[LabeledSample],
    freqs: &ClassFrequencyTable,
    loss: LossKind,
    cfg: &BaselineConfig,
) -> Result<VrrClassifier> {
    let first = samples
        .first()
        .ok_or_else(|| Error::invalid("baseline training needs at least one sample"))?;
    let config = ClassifierConfig {
        visual_width: first.x.len(),
        hidden: cfg.hidden,
        num_objects: freqs.objects.len(),
        num_relations: freqs.relations.len(),
    };
    let mut model = VrrClassifier::new(config, cfg.seed)?;
    let weights = match loss {
        LossKind::Ce => None,
        LossKind::Wce => Some(HeadWeights::from_frequencies(freqs)?),
    };
    let fit = FitConfig {
        epochs: cfg.epochs,
        batch: cfg.batch,
        lr: cfg.lr,
        seed: cfg.seed,
    };
    model.fit(samples, weights.as_ref(), &fit)?;
    Ok(model)
}

/// Fine-tuning schedule; defaults follow the reference setup of 10 epochs
/// at batch 256.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    pub loss: LossKind,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch: 256,
            lr: 1e-3,
            seed: 0,
            loss: LossKind::Ce,
        }
    }
}

/// An easy/hard partition of the fine-tuning sample indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Curriculum {
    pub easy: Vec<usize>,
    pub hard: Vec<usize>,
}

impl Curriculum {
    fn groups(&self, n: usize) -> Result<Vec<Vec<usize>>> {
        let mut seen = vec![false; n];
        for &i in self.easy.iter().chain(&self.hard) {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(Error::invalid(format!("curriculum index {i} is out of range or repeated")));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::invalid("curriculum does not cover every sample"));
        }
        let mut easy = self.easy.clone();
        let mut hard = self.hard.clone();
        easy.sort_unstable();
        hard.sort_unstable();
        Ok([easy, hard].into_iter().filter(|g| !g.is_empty()).collect())
    }
}

/// Continues training `model` on `samples`. With a curriculum, each epoch
/// runs all easy batches before the hard ones.
pub fn finetune(
    model: &VrrClassifier,
    samples: &[LabeledSample],
    freqs: Option<&ClassFrequencyTable>,
    cfg: &FinetuneConfig,
    curriculum: Option<&Curriculum>,
) -> Result<VrrClassifier> {
    let mut out = model.clone();
    if cfg.epochs == 0 {
        return Ok(out);
    }
    if samples.is_empty() {
        return Err(Error::invalid("fine-tuning needs at least one sample"));
    }
    let weights = match cfg.loss {
        LossKind::Ce => None,
        LossKind::Wce => {
            let f = freqs.ok_or_else(|| Error::invalid("weighted loss needs class frequencies"))?;
            Some(HeadWeights::from_frequencies(f)?)
        }
    };
    let groups = match curriculum {
        Some(c) => c.groups(samples.len())?,
        None => vec![(0..samples.len()).collect()],
    };
    let fit = FitConfig {
        epochs: cfg.epochs,
        batch: cfg.batch,
        lr: cfg.lr,
        seed: cfg.seed,
    };
    out.fit_groups(samples, &groups, weights.as_ref(), &fit)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy_samples() -> Vec<LabeledSample> {
        // Two separable blobs; class c sits at +/-2 on the first axis.
        let mut r = crate::rng::stream(3, &[]);
        (0..80)
            .map(|i| {
                let c = i % 2;
                let mut x = crate::nn::gaussian_vec(&mut r, 4);
                x.iter_mut().for_each(|v| *v *= 0.3);
                x[0] += if c == 0 { -2.0 } else { 2.0 };
                LabeledSample {
                    x,
                    subject: c,
                    relation: c,
                    object: 1 - c,
                }
            })
            .collect()
    }

    fn toy_freqs() -> ClassFrequencyTable {
        ClassFrequencyTable {
            objects: vec![80, 80],
            relations: vec![40, 40],
        }
    }

    #[test]
    fn wce_hand_values() {
        let w = wce_weights(&[9, 1]).unwrap();
        assert!((w[0] - 0.2).abs() < 1e-12 && (w[1] - 1.8).abs() < 1e-12);
        assert_eq!(wce_weights(&[5, 5, 5]).unwrap(), vec![1.0; 3]);
        assert!(wce_weights(&[0, 0]).is_err());
        let w = wce_weights(&[4, 0, 2]).unwrap();
        assert_eq!(w[1], w[2]);
    }

    proptest! {
        #[test]
        fn wce_sum_order_and_equivariance(f in proptest::collection::vec(1u64..1000, 2..20), rot in 0usize..20) {
            let w = wce_weights(&f).unwrap();
            prop_assert!((w.iter().sum::<f64>() - f.len() as f64).abs() < 1e-9);
            for i in 0..f.len() {
                for j in 0..f.len() {
                    if f[i] < f[j] {
                        prop_assert!(w[i] > w[j]);
                    }
                }
            }
            let k = rot % f.len();
            let mut g = f.clone();
            g.rotate_left(k);
            let mut wr = w.clone();
            wr.rotate_left(k);
            let wg = wce_weights(&g).unwrap();
            for (a, b) in wg.iter().zip(&wr) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn separable_toy_world_trains() {
        let s = toy_samples();
        // 80 samples at batch 16 for 40 epochs is 200 steps.
        let cfg = BaselineConfig {
            hidden: 16,
            epochs: 40,
            batch: 16,
            lr: 1e-2,
            seed: 1,
        };
        let m = train_baseline(&s, &toy_freqs(), LossKind::Ce, &cfg).unwrap();
        assert!(m.exact_match_accuracy(&s) > 0.95);
        let again = train_baseline(&s, &toy_freqs(), LossKind::Ce, &cfg).unwrap();
        assert_eq!(m, again);
        // Equal frequencies make WCE the unweighted loss.
        let w = train_baseline(&s, &toy_freqs(), LossKind::Wce, &cfg).unwrap();
        assert_eq!(m, w);
    }

    #[test]
    fn out_of_vocabulary_label_is_rejected() {
        let mut s = toy_samples();
        s[3].relation = 7;
        let cfg = BaselineConfig {
            epochs: 1,
            ..Default::default()
        };
        assert!(matches!(
            train_baseline(&s, &toy_freqs(), LossKind::Ce, &cfg),
            Err(Error::ClassOutOfRange { .. })
        ));
    }

    #[test]
    fn finetune_identities() {
        let s = toy_samples();
        let base = VrrClassifier::new(
            ClassifierConfig {
                visual_width: 4,
                hidden: 8,
                num_objects: 2,
                num_relations: 2,
            },
            5,
        )
        .unwrap();
        let zero = FinetuneConfig {
            epochs: 0,
            ..Default::default()
        };
        assert_eq!(finetune(&base, &s, None, &zero, None).unwrap(), base);
        let still = FinetuneConfig {
            lr: 0.0,
            epochs: 2,
            batch: 16,
            ..Default::default()
        };
        assert_eq!(finetune(&base, &s, None, &still, None).unwrap().params, base.params);

        let cfg = FinetuneConfig {
            epochs: 2,
            batch: 16,
            ..Default::default()
        };
        let plain = finetune(&base, &s, None, &cfg, None).unwrap();
        let mut easy: Vec<usize> = (0..s.len()).collect();
        easy.reverse();
        let cur = Curriculum { easy, hard: vec![] };
        assert_eq!(finetune(&base, &s, None, &cfg, Some(&cur)).unwrap(), plain);

        let split = Curriculum {
            easy: (0..40).collect(),
            hard: (40..80).collect(),
        };
        assert_ne!(finetune(&base, &s, None, &cfg, Some(&split)).unwrap(), plain);
        let bad = Curriculum {
            easy: vec![0, 1],
            hard: vec![1],
        };
        assert!(finetune(&base, &s, None, &cfg, Some(&bad)).is_err());
    }

    #[test]
    fn classifier_gradient_matches_finite_differences() {
        let m = VrrClassifier::new(
            ClassifierConfig {
                visual_width: 3,
                hidden: 4,
                num_objects: 3,
                num_relations: 2,
            },
            9,
        )
        .unwrap();
        let s = LabeledSample {
            x: vec![0.3, -0.7, 1.1],
            subject: 2,
            relation: 1,
            object: 0,
        };
        let w = HeadWeights {
            objects: vec![0.5, 1.0, 1.5],
            relations: vec![1.2, 0.8],
        };
        let (_, g) = m.sample_loss_and_grad(&s, Some(&w));
        let h = 1e-5;
        for i in 0..m.params.len() {
            let mut p = m.clone();
            p.params[i] += h;
            let up = p.sample_loss_and_grad(&s, Some(&w)).0;
            p.params[i] -= 2.0 * h;
            let down = p.sample_loss_and_grad(&s, Some(&w)).0;
            let fd = (up - down) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-6 + 1e-4 * fd.abs(), "param {i}: {fd} vs {}", g[i]);
        }
    }
}
