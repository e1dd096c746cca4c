// Average per-class accuracy by frequency split, and the combined score.
//
// `cargo run --example evaluation_report`

use std::error::Error;

use tailforge::corpus::{compute_splits, CorpusSplits};
use tailforge::vrrmodel::{combined_score, evaluate_predictions, round_half_up};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    // 20 object classes and 20 relation classes with falling frequencies.
    let counts: Vec<u64> = (0..20).map(|i| 200 / (i + 1)).collect();
    let splits = CorpusSplits {
        objects: compute_splits(&counts)?,
        relations: compute_splits(&counts)?,
    };

    // A classifier that always gets class 0 right, and the others right
    // only on even ids.
    let truth: Vec<(usize, usize, usize)> = (0..20).map(|c| (c, c, (c + 1) % 20)).collect();
    let preds: Vec<(usize, usize, usize)> = truth
        .iter()
        .map(|&(s, r, o)| {
            let keep = |c: usize| if c % 2 == 0 { c } else { 0 };
            (keep(s), keep(r), keep(o))
        })
        .collect();
    let report = evaluate_predictions(&preds, &truth, &splits)?;
    print!("{}", report.to_text("toy classifier"));
    print!("{}", report.to_kv());

    // Combined accuracy rounds half up to two places.
    let c = round_half_up(combined_score(17.51, 11.80), 2);
    println!("combined(17.51, 11.80) = {c:.2}");
    assert_eq!(c, 14.66);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
