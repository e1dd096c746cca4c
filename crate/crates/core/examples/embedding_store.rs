// Writing and reading the binary embedding store with its key index.
//
// `cargo run --example embedding_store`

use std::error::Error;

use tailforge::encoders::{EmbeddingKind, EmbeddingStore};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("regions.emb");

    let mut store = EmbeddingStore::new(EmbeddingKind::Visual, 4);
    store.push("img1/r0", &[0.5, -1.0, 0.25, 2.0])?;
    store.push("img1/r0#s", &[0.1, 0.2, 0.3, 0.4])?;
    store.push("img2/r3", &[1.0, 1.0, 1.0, 1.0])?;
    store.write(&path)?;

    let back = EmbeddingStore::read_expecting(&path, EmbeddingKind::Visual, 4)?;
    println!("{} rows of width {}", back.len(), back.width());
    for key in back.keys() {
        println!("{key:<10} {:?}", back.get(key).unwrap());
    }
    assert_eq!(back.get("img1/r0"), store.get("img1/r0"));

    // Width and kind are checked on load.
    assert!(EmbeddingStore::read_expecting(&path, EmbeddingKind::Visual, 8).is_err());
    assert!(EmbeddingStore::read_expecting(&path, EmbeddingKind::Text, 4).is_err());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
