// Frequency splits and taxonomy-driven replacement of tail classes.
//
// `cargo run --example augment_triplets`

use std::error::Error;

use tailforge::corpus::{augment_triplets, AugmentConfig, CorpusSplits, Dataset, Triplet, Vocabulary};
use tailforge::taxonomy::Taxonomy;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let tax = Taxonomy::load(concat!(env!("CARGO_MANIFEST_DIR"), "/data/toy_taxonomy.tsv"))?;
    let objects = Vocabulary::new([
        "table", "chair", "spoon", "fork", "cake", "bagel", "cookie", "brownie", "baguette", "bread",
    ])?;
    let relations = Vocabulary::new(["on", "near", "next to", "under", "beside", "holding"])?;

    // Head objects appear often; the desserts and breads are rare.
    let mut triplets = Vec::new();
    for i in 0..40 {
        triplets.push(Triplet::new(i % 4, i % 2, (i + 1) % 4));
    }
    triplets.push(Triplet::new(4, 0, 0)); // cake on table
    triplets.push(Triplet::new(2, 1, 6)); // spoon near cookie
    triplets.push(Triplet::new(5, 4, 8)); // bagel beside baguette
    triplets.push(Triplet::new(7, 5, 1));
    let data = Dataset::new(objects, relations, triplets)?;

    let splits = CorpusSplits::from_frequencies(&data.frequencies())?;
    println!("object splits (many, medium, few): {:?}", splits.objects.sizes());

    // The toy taxonomy is only 3 levels deep, so siblings score ln 2.
    let cfg = AugmentConfig {
        threshold: 0.69,
        ..Default::default()
    };
    let aug = augment_triplets(&data, &splits, &tax, &cfg)?;
    println!("{} variants; those of the rare food triplets:", aug.triplets.len());
    for a in aug.triplets.iter().filter(|a| a.source >= 40) {
        let t = &a.triplet;
        println!(
            "{:<14} <{}, {}, {}>  replaced {} ({:.3}, {:?})",
            a.key(),
            data.objects.label(t.subject),
            data.relations.label(t.relation),
            data.objects.label(t.object),
            data.objects.label(a.replaced),
            a.score,
            a.origin
        );
    }
    assert!(aug.triplets.iter().all(|a| a.triplet.subject != a.triplet.object));
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
