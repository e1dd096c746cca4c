use rand::Rng;
use rayon::prelude::*;

use super::network::NoisePredictor;
use super::schedule::{forward_diffuse, NoiseSchedule};
use crate::corpus::{AugmentedTriplet, Dataset, Slot};
use crate::encoders::{
    build_condition, sample_region_embedding, ConditionVector, ConditionWidths, EmbeddingKind,
    EmbeddingStore, RegionIndex, TextEmbedding, VisualEmbedding,
};
use crate::error::{Error, Result};
use crate::hardness::{hardness_vector, KMeansModel};
use crate::nn;
use crate::rng;

/// How the reverse process is initialised.
#[derive(Clone, Debug, PartialEq)]
pub enum SeedMode {
    /// `x_T ~ N(0, I)`.
    Random,
    /// `x_T = sqrt(abar_T) v + sqrt(1 - abar_T) eps` for a seed vector `v`.
    SubjectObject(Vec<f64>),
}

/// Coordinate-wise mean of a subject and an object region.
pub fn make_so_seed(subject: &VisualEmbedding, object: &VisualEmbedding) -> Result<VisualEmbedding> {
    if subject.width() != object.width() {
        return Err(Error::WidthMismatch {
            expected: subject.width(),
            actual: object.width(),
        });
    }
    Ok(VisualEmbedding(
        subject.0.iter().zip(&object.0).map(|(a, b)| 0.5 * (a + b)).collect(),
    ))
}

/// Ancestral DDPM sampling with `sigma_t = sqrt(beta_t)` and no noise on the
/// final step.
pub fn sample<P: NoisePredictor + ?Sized, R: Rng + ?Sized>(
    net: &P,
    schedule: &NoiseSchedule,
    cond: &ConditionVector,
    seed: &SeedMode,
    rng: &mut R,
) -> Result<VisualEmbedding> {
    net.check_ready()?;
    let width = net.visual_width();
    let big_t = schedule.steps();
    let mut x = match seed {
        SeedMode::Random => nn::gaussian_vec(rng, width),
        SeedMode::SubjectObject(v) => {
            if v.len() != width {
                return Err(Error::WidthMismatch {
                    expected: width,
                    actual: v.len(),
                });
            }
            let eps = nn::gaussian_vec(rng, width);
            forward_diffuse(schedule, v, big_t, &eps)?
        }
    };
    for t in (1..=big_t).rev() {
        let eps_hat = net.predict(&x, t, cond)?;
        let (beta, alpha, ab) = (schedule.beta(t), schedule.alpha(t), schedule.alpha_bar(t));
        let coef = beta / (1.0 - ab).sqrt();
        let inv = 1.0 / alpha.sqrt();
        let z = if t > 1 {
            nn::gaussian_vec(rng, width)
        } else {
            vec![0.0; width]
        };
        let sigma = beta.sqrt();
        for i in 0..width {
            x[i] = inv * (x[i] - coef * eps_hat[i]) + sigma * z[i];
        }
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("sampled coordinate {i}")));
    }
    Ok(VisualEmbedding(x))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeedKind {
    Random,
    SubjectObject,
}

/// Inputs for generating one feature vector per augmented triplet.
pub struct GenerationRequest<'a> {
    /// Source dataset; supplies the label vocabularies.
    pub dataset: &'a Dataset,
    pub augmented: &'a [AugmentedTriplet],
    /// Text embeddings keyed by [`Dataset::text_key`].
    pub text: &'a EmbeddingStore,
    pub hardness: Option<&'a KMeansModel>,
    /// Stored regions for subject–object seeding.
    pub visual: &'a EmbeddingStore,
    pub regions: &'a RegionIndex,
    pub seed_kind: SeedKind,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ItemError {
    pub key: String,
    pub message: String,
}

#[derive(Clone, Debug)]
pub struct Generation {
    pub store: EmbeddingStore,
    pub errors: Vec<ItemError>,
}

/// Condition fed to the denoiser for one augmented triplet.
pub fn condition_for(
    dataset: &Dataset,
    a: &AugmentedTriplet,
    text: &EmbeddingStore,
    hardness: Option<&KMeansModel>,
) -> Result<ConditionVector> {
    let key = dataset.text_key(&a.triplet);
    let emb = TextEmbedding(text.get_f64(&key).ok_or(Error::UnknownKey(key))?);
    let widths = ConditionWidths {
        text: text.width(),
        hardness: hardness.map(KMeansModel::k),
    };
    let h = hardness.map(|m| hardness_vector(&emb, m)).transpose()?;
    build_condition(&emb, h.as_ref(), &widths)
}

/// Samples one visual embedding per augmented triplet, keyed by
/// [`AugmentedTriplet::key`]. Item `i` uses its own stream derived from
/// `(seed, i)`; failing items are reported and skipped.
pub fn generate_for_augmented<P: NoisePredictor + ?Sized>(
    net: &P,
    schedule: &NoiseSchedule,
    req: &GenerationRequest<'_>,
) -> Result<Generation> {
    net.check_ready()?;
    let results: Vec<Result<VisualEmbedding>> = req
        .augmented
        .par_iter()
        .enumerate()
        .map(|(i, a)| {
            let mut r = rng::stream(req.seed, &[i as u64]);
            let cond = condition_for(req.dataset, a, req.text, req.hardness)?;
            let seed = match req.seed_kind {
                SeedKind::Random => SeedMode::Random,
                SeedKind::SubjectObject => {
                    let s = sample_region_embedding(
                        req.visual,
                        req.regions,
                        a.triplet.subject,
                        Slot::Subject,
                        &mut r,
                    )?;
                    let o = sample_region_embedding(
                        req.visual,
                        req.regions,
                        a.triplet.object,
                        Slot::Object,
                        &mut r,
                    )?;
                    SeedMode::SubjectObject(make_so_seed(&s, &o)?.0)
                }
            };
            sample(net, schedule, &cond, &seed, &mut r)
        })
        .collect();

    let mut store = EmbeddingStore::new(EmbeddingKind::Visual, net.visual_width());
    let mut errors = Vec::new();
    for (a, res) in req.augmented.iter().zip(results) {
        match res {
            Ok(v) => {
                store.push(a.key(), &v.0)?;
            }
            Err(e) => errors.push(ItemError {
                key: a.key(),
                message: e.to_string(),
            }),
        }
    }
    Ok(Generation { store, errors })
}
