// Leacock-Chodorow similarity over a small is-a taxonomy.
//
// `cargo run --example lch_similarity`

use std::error::Error;

use tailforge::taxonomy::Taxonomy;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/toy_taxonomy.tsv");
    let tax = Taxonomy::load(path)?;
    println!("{} synsets, depth {}", tax.len(), tax.depth());

    for (a, b) in [("cake.n.01", "cookie.n.01"), ("cake.n.01", "bagel.n.01"), ("cake.n.01", "spoon.n.01")] {
        let edges = tax.shortest_path_edges(a, b)?;
        println!("{a:>12} ~ {b:<12} {edges} edges  lch {:.4}", tax.lch_similarity(a, b)? + 0.0);
    }

    // Labels resolve through lemmas, so "biscuit" finds the cookie synset.
    let vocab = ["cake", "biscuit", "bagel", "spoon", "table", "brownie"];
    for (label, score) in tax.similar_labels("cake", &vocab, 0.6)? {
        println!("cake -> {label} ({score:.4})");
    }
    let best = tax.similar_classes("cake", &vocab, 0.6)?;
    assert_eq!(best.first().map(|h| vocab[h.0]), Some("biscuit"));
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
