use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{self, Adam, ParamLayout};
use crate::rng;

/// A relation-region embedding with its three labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    pub x: Vec<f64>,
    pub subject: usize,
    pub relation: usize,
    pub object: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub visual_width: usize,
    pub hidden: usize,
    pub num_objects: usize,
    pub num_relations: usize,
}

impl ClassifierConfig {
    fn layout(&self) -> ParamLayout {
        let (v, h) = (self.visual_width, self.hidden);
        let mut l = ParamLayout::default();
        l.push("trunk.w", h, v);
        l.push("trunk.b", h, 1);
        l.push("subject.w", self.num_objects, h);
        l.push("subject.b", self.num_objects, 1);
        l.push("relation.w", self.num_relations, h);
        l.push("relation.b", self.num_relations, 1);
        l.push("object.w", self.num_objects, h);
        l.push("object.b", self.num_objects, 1);
        l
    }
}

/// Per-class loss weights for the object heads and the relation head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadWeights {
    pub objects: Vec<f64>,
    pub relations: Vec<f64>,
}

/// Shared SiLU trunk with subject, relation and object softmax heads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VrrClassifier {
    pub config: ClassifierConfig,
    pub params: Vec<f64>,
}

struct Heads<'a> {
    trunk_w: &'a [f64],
    trunk_b: &'a [f64],
    heads: [(&'a [f64], &'a [f64]); 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch: 256,
            lr: 1e-3,
            seed: 0,
        }
    }
}

const CHUNK: usize = 32;

impl VrrClassifier {
    pub fn new(config: ClassifierConfig, seed: u64) -> Result<Self> {
        if config.visual_width == 0 || config.hidden == 0 {
            return Err(Error::invalid("classifier widths must be positive"));
        }
        if config.num_objects == 0 || config.num_relations == 0 {
            return Err(Error::invalid("classifier vocabularies must be non-empty"));
        }
        let layout = config.layout();
        let params = nn::init_params(&layout, &mut ChaCha8Rng::seed_from_u64(seed));
        Ok(Self { config, params })
    }

    fn views(&self) -> Heads<'_> {
        let l = self.config.layout();
        let p = |n: &str| &self.params[l.get(n).unwrap().range()];
        Heads {
            trunk_w: p("trunk.w"),
            trunk_b: p("trunk.b"),
            heads: [
                (p("subject.w"), p("subject.b")),
                (p("relation.w"), p("relation.b")),
                (p("object.w"), p("object.b")),
            ],
        }
    }

    fn check_sample(&self, s: &LabeledSample) -> Result<()> {
        let c = &self.config;
        if s.x.len() != c.visual_width {
            return Err(Error::WidthMismatch {
                expected: c.visual_width,
                actual: s.x.len(),
            });
        }
        for (kind, id, size) in [
            ("object", s.subject, c.num_objects),
            ("relation", s.relation, c.num_relations),
            ("object", s.object, c.num_objects),
        ] {
            if id >= size {
                return Err(Error::ClassOutOfRange { kind, id, size });
            }
        }
        Ok(())
    }

    /// Per-head logits.
    pub fn logits(&self, x: &[f64]) -> [Vec<f64>; 3] {
        let v = self.views();
        let h = self.config.hidden;
        let mut pre = vec![0.0; h];
        nn::affine(v.trunk_w, v.trunk_b, x, &mut pre);
        let act: Vec<f64> = pre.iter().map(|&z| nn::silu(z)).collect();
        let sizes = [self.config.num_objects, self.config.num_relations, self.config.num_objects];
        std::array::from_fn(|k| {
            let mut out = vec![0.0; sizes[k]];
            nn::affine(v.heads[k].0, v.heads[k].1, &act, &mut out);
            out
        })
    }

    /// `(subject, relation, object)` argmax predictions, ties to the lowest id.
    pub fn predict(&self, x: &[f64]) -> (usize, usize, usize) {
        let [s, r, o] = self.logits(x);
        (nn::argmax(&s), nn::argmax(&r), nn::argmax(&o))
    }

    /// Summed (optionally class-weighted) cross-entropy of the three heads,
    /// with its gradient added into `grad`.
    fn loss_and_grad(&self, s: &LabeledSample, weights: Option<&HeadWeights>, grad: &mut [f64]) -> f64 {
        let c = &self.config;
        let v = self.views();
        let (vw, h) = (c.visual_width, c.hidden);
        let mut pre = vec![0.0; h];
        nn::affine(v.trunk_w, v.trunk_b, &s.x, &mut pre);
        let act: Vec<f64> = pre.iter().map(|&z| nn::silu(z)).collect();

        let l = c.layout();
        let labels = [s.subject, s.relation, s.object];
        let names = ["subject", "relation", "object"];
        let mut dact = vec![0.0; h];
        let mut loss = 0.0;
        for k in 0..3 {
            let (w, b) = v.heads[k];
            let n = b.len();
            let mut logits = vec![0.0; n];
            nn::affine(w, b, &act, &mut logits);
            let probs = nn::softmax(&logits);
            let y = labels[k];
            let cw = weights.map_or(1.0, |hw| {
                if k == 1 {
                    hw.relations[y]
                } else {
                    hw.objects[y]
                }
            });
            loss += -cw * probs[y].max(1e-300).ln();
            let mut dlogits = probs;
            dlogits[y] -= 1.0;
            dlogits.iter_mut().for_each(|d| *d *= cw);
            let we = l.get(&format!("{}.w", names[k])).unwrap();
            let be = l.get(&format!("{}.b", names[k])).unwrap();
            let (left, right) = grad.split_at_mut(be.offset);
            nn::affine_backward(w, &act, &dlogits, &mut left[we.range()], Some(&mut right[..n]), Some(&mut dact));
        }
        let dpre: Vec<f64> = dact.iter().zip(&pre).map(|(d, &z)| d * nn::silu_grad(z)).collect();
        let we = l.get("trunk.w").unwrap();
        let be = l.get("trunk.b").unwrap();
        let (left, right) = grad.split_at_mut(be.offset);
        nn::affine_backward(v.trunk_w, &s.x, &dpre, &mut left[we.range()], Some(&mut right[..h]), None);
        let _ = vw;
        loss
    }

    /// One Adam step on a mini-batch; returns the mean loss.
    fn batch_step(
        &mut self,
        samples: &[LabeledSample],
        batch: &[usize],
        weights: Option<&HeadWeights>,
        opt: &mut Adam,
    ) -> f64 {
        let this = &*self;
        let partials: Vec<(f64, Vec<f64>)> = batch
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut g = vec![0.0; this.params.len()];
                let loss = chunk
                    .iter()
                    .map(|&i| this.loss_and_grad(&samples[i], weights, &mut g))
                    .sum::<f64>();
                (loss, g)
            })
            .collect();
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        for (l, g) in partials {
            loss += l;
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b;
            }
        }
        let scale = 1.0 / batch.len() as f64;
        grad.iter_mut().for_each(|g| *g *= scale);
        opt.step(&mut self.params, &grad);
        loss * scale
    }

    /// Mini-batch training over `groups` of sample indices visited in order
    /// each epoch; each group is shuffled and batched on its own. Returns the
    /// mean loss per epoch.
    pub fn fit_groups(
        &mut self,
        samples: &[LabeledSample],
        groups: &[Vec<usize>],
        weights: Option<&HeadWeights>,
        cfg: &FitConfig,
    ) -> Result<Vec<f64>> {
        for s in samples {
            self.check_sample(s)?;
        }
        if let Some(w) = weights {
            if w.objects.len() != self.config.num_objects || w.relations.len() != self.config.num_relations {
                return Err(Error::invalid("class weights do not match the classifier heads"));
            }
        }
        if cfg.batch == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        let mut opt = Adam::new(self.params.len(), cfg.lr);
        let mut history = Vec::with_capacity(cfg.epochs);
        for epoch in 0..cfg.epochs {
            let mut r = rng::stream(cfg.seed, &[epoch as u64]);
            let (mut total, mut count) = (0.0, 0usize);
            for g in groups {
                let mut order = g.clone();
                order.shuffle(&mut r);
                for batch in order.chunks(cfg.batch) {
                    total += self.batch_step(samples, batch, weights, &mut opt) * batch.len() as f64;
                    count += batch.len();
                }
            }
            history.push(if count > 0 { total / count as f64 } else { 0.0 });
        }
        Ok(history)
    }

    pub fn fit(
        &mut self,
        samples: &[LabeledSample],
        weights: Option<&HeadWeights>,
        cfg: &FitConfig,
    ) -> Result<Vec<f64>> {
        let all: Vec<usize> = (0..samples.len()).collect();
        self.fit_groups(samples, &[all], weights, cfg)
    }

    /// Fraction of samples whose three labels are all predicted correctly.
    pub fn exact_match_accuracy(&self, samples: &[LabeledSample]) -> f64 {
        let hits = samples
            .iter()
            .filter(|s| self.predict(&s.x) == (s.subject, s.relation, s.object))
            .count();
        hits as f64 / samples.len().max(1) as f64
    }

    /// Central-difference check helper: loss of a single sample.
    #[doc(hidden)]
    pub fn sample_loss_and_grad(&self, s: &LabeledSample, weights: Option<&HeadWeights>) -> (f64, Vec<f64>) {
        let mut g = vec![0.0; self.params.len()];
        let l = self.loss_and_grad(s, weights, &mut g);
        (l, g)
    }
}
