// Text clusters, hardness vectors and the easy/hard curriculum split.
//
// `cargo run --example hardness_curriculum`

use std::error::Error;

use tailforge::encoders::TextEmbedding;
use tailforge::hardness::{curriculum_split, fit_kmeans, hardness_entropy, hardness_vector, KMeansConfig};
use tailforge::rng;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    // Three loose blobs of "text embeddings".
    let mut r = rng::stream(1, &[]);
    let anchors = [[4.0, 0.0], [-4.0, 0.0], [0.0, 5.0]];
    let points: Vec<Vec<f64>> = (0..90)
        .map(|i| {
            let a = anchors[i % 3];
            let z = tailforge::nn::gaussian_vec(&mut r, 2);
            vec![a[0] + 0.5 * z[0], a[1] + 0.5 * z[1]]
        })
        .collect();

    let model = fit_kmeans(
        &points,
        &KMeansConfig {
            k: 3,
            seed: 7,
            ..Default::default()
        },
    )?;
    println!("inertia {:.3} after {} iterations", model.meta.inertia, model.meta.iterations);

    let vectors = points
        .iter()
        .map(|p| hardness_vector(&TextEmbedding(p.clone()), &model))
        .collect::<Result<Vec<_>, _>>()?;
    for (p, h) in points.iter().zip(&vectors).take(3) {
        println!("{p:.2?} -> {:.3?} entropy {:.4}", h.values(), hardness_entropy(h));
    }
    // A point between all centres is maximally uncertain.
    let mid = hardness_vector(&TextEmbedding(vec![0.0, 1.5]), &model)?;
    println!("middle point entropy {:.4} (ln 3 = {:.4})", hardness_entropy(&mid), 3f64.ln());

    let (easy, hard) = curriculum_split(&vectors)?;
    println!("{} easy, {} hard samples", easy.len(), hard.len());
    assert_eq!(easy.len() + hard.len(), points.len());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
