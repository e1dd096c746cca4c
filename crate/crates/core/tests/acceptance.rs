//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and fails if any criterion fails. Pass criterion numbers as arguments to
//! run a subset, e.g. `cargo test --test acceptance -- 1 11`.

mod common;

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::time::Instant;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tailforge::corpus::{compute_splits, Split};
use tailforge::diffusion::{forward_diffuse, NoiseSchedule};
use tailforge::hardness::{fit_kmeans, hardness_entropy, hardness_vector, HardnessVector, KMeansConfig, KMeansModel};
use tailforge::encoders::TextEmbedding;
use tailforge::pipeline::{run_all, run_commands, Command, RunManifest};
use tailforge::taxonomy::{lch_score, SynsetRecord, Taxonomy};
use tailforge::vrrmodel::{combined_score, round_half_up};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c1_splits() -> Outcome {
    let sizes = |n: usize| {
        let counts: Vec<u64> = (0..n as u64).map(|i| 10_000 - i).collect();
        compute_splits(&counts).unwrap().sizes()
    };
    let (a, b) = (sizes(1703), sizes(310));
    check(
        a == (86, 255, 1362) && b == (16, 46, 248),
        format!("N=1703 -> {a:?}, N=310 -> {b:?}"),
    )
}

/// Random DAG: node 0 is the root; every later node takes one or two
/// parents among earlier nodes. Some taxonomies get a second root.
fn random_taxonomy(r: &mut ChaCha8Rng) -> (Vec<Vec<usize>>, Vec<SynsetRecord>) {
    let n = r.random_range(2..=200);
    let second_root = n > 3 && r.random_bool(0.3);
    let mut parents = vec![Vec::new(); n];
    for i in 1..n {
        if second_root && i == n / 2 {
            continue;
        }
        let first = r.random_range(0..i);
        parents[i].push(first);
        if i > 1 && r.random_bool(0.25) {
            let second = r.random_range(0..i);
            if second != first {
                parents[i].push(second);
            }
        }
    }
    let records = (0..n)
        .map(|i| {
            let ps: Vec<String> = parents[i].iter().map(|p| format!("s{p}")).collect();
            let ps: Vec<&str> = ps.iter().map(String::as_str).collect();
            let lemma = format!("w{}", i % (n / 2 + 1));
            SynsetRecord::new(&format!("s{i}"), &ps, &[&lemma])
        })
        .collect();
    (parents, records)
}

/// Upward BFS distances from `start` to each ancestor (itself at 0).
fn up_distances(parents: &[Vec<usize>], start: usize) -> HashMap<usize, usize> {
    let mut dist = HashMap::from([(start, 0)]);
    let mut q = VecDeque::from([start]);
    while let Some(u) = q.pop_front() {
        for &p in &parents[u] {
            if !dist.contains_key(&p) {
                dist.insert(p, dist[&u] + 1);
                q.push_back(p);
            }
        }
    }
    dist
}

fn c2_lch() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(2024);
    let mut pairs = 0usize;
    let mut queries = 0usize;
    for case in 0..50 {
        let (parents, records) = random_taxonomy(&mut r);
        let tax = Taxonomy::from_records(records.clone()).unwrap();
        let n = parents.len();
        let ups: Vec<HashMap<usize, usize>> = (0..n).map(|i| up_distances(&parents, i)).collect();
        let roots: Vec<usize> = (0..n).filter(|&i| parents[i].is_empty()).collect();
        let depth = (0..n)
            .map(|i| roots.iter().filter_map(|root| ups[i].get(root)).min().copied().unwrap_or(0))
            .max()
            .unwrap()
            .max(1);
        if tax.depth() != depth {
            return Err(format!("case {case}: depth {} vs oracle {depth}", tax.depth()));
        }
        let oracle = |a: usize, b: usize| -> Option<usize> {
            ups[a].iter().filter_map(|(anc, da)| ups[b].get(anc).map(|db| da + db)).min()
        };
        for a in 0..n {
            for b in 0..n {
                let (ia, ib) = (format!("s{a}"), format!("s{b}"));
                let got = tax.lch_similarity(&ia, &ib).ok();
                let want = oracle(a, b).map(|p| -(((p + 1) as f64) / (2.0 * depth as f64)).ln());
                if got != want {
                    return Err(format!("case {case}: lch({ia},{ib}) = {got:?}, oracle {want:?}"));
                }
                pairs += 1;
            }
            let id = format!("s{a}");
            let ident = tax.lch_similarity(&id, &id).unwrap();
            if (ident - (-(1.0 / (2.0 * depth as f64)).ln())).abs() > 1e-12 {
                return Err(format!("case {case}: identity score {ident}"));
            }
        }
        // similar_classes over the lemma vocabulary against a brute-force scan.
        let mut vocab: Vec<String> = records.iter().flat_map(|s| s.lemmas.clone()).collect();
        vocab.sort();
        vocab.dedup();
        let synsets_of = |w: &str| -> Vec<usize> {
            (0..n).filter(|&i| records[i].lemmas.iter().any(|l| l == w)).collect()
        };
        let threshold = lch_score(r.random_range(0..6), depth).max(0.05);
        for q in &vocab {
            let mut want: Vec<(usize, f64)> = vocab
                .iter()
                .enumerate()
                .filter(|(_, w)| *w != q)
                .filter_map(|(id, w)| {
                    let mut best: Option<f64> = None;
                    for &a in &synsets_of(q) {
                        for &b in &synsets_of(w) {
                            if let Some(p) = oracle(a, b) {
                                let s = lch_score(p, depth);
                                best = Some(best.map_or(s, |x: f64| x.max(s)));
                            }
                        }
                    }
                    best.filter(|&s| s >= threshold).map(|s| (id, s))
                })
                .collect();
            want.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then(x.0.cmp(&y.0)));
            let got = tax.similar_classes(q, &vocab, threshold).unwrap();
            if got != want {
                return Err(format!("case {case}: similar_classes({q}) differs from oracle"));
            }
            queries += 1;
        }
    }
    Ok(format!("50 taxonomies, {pairs} synset pairs and {queries} similar-class queries match"))
}

fn c3_forward() -> Outcome {
    let s = NoiseSchedule::scaled_linear(50).unwrap();
    let n = 100_000;
    let width = 4;
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for t in [1, 10, 25, 40, 50] {
        let mut sq = vec![0.0; width];
        let x0 = vec![0.0; width];
        for _ in 0..n {
            let z = tailforge::nn::gaussian_vec(&mut r, width);
            let x = forward_diffuse(&s, &x0, t, &z).unwrap();
            for (a, v) in sq.iter_mut().zip(&x) {
                *a += v * v;
            }
        }
        let var = 1.0 - s.alpha_bar(t);
        let sigma = (2.0 * var * var / n as f64).sqrt();
        for a in sq {
            worst = worst.max((a / n as f64 - var).abs() / sigma);
        }
    }
    check(worst < 3.0, format!("largest deviation {worst:.2} sigma over 5 steps x {width} coordinates"))
}

fn c4_gradients() -> Outcome {
    let (net, x_t, cond, noise) = toy_gradient_setup();
    let mut worst = (String::new(), 0.0f64);
    let mut groups = 0;
    for t in [1, 4, 7, 10] {
        for (name, rel) in gradient_check(&net, &x_t, t, &cond, &noise) {
            groups += 1;
            if rel > worst.1 {
                worst = (format!("{name}@t={t}"), rel);
            }
        }
    }
    check(
        worst.1 < 1e-4,
        format!("{groups} group checks, worst relative error {:.2e} ({})", worst.1, worst.0),
    )
}

fn c5_two_mode() -> Outcome {
    let steps = 3000;
    let (net, s) = train_two_mode(steps);
    let rate = two_mode_hit_rate(&net, &s, 500);
    check(rate >= 0.95, format!("{:.1}% of 500 samples within 1.0 of their mode after {steps} steps", rate * 100.0))
}

fn sse(points: &[Vec<f64>], members: &[usize]) -> f64 {
    if members.is_empty() {
        return 0.0;
    }
    let d = points[0].len();
    let mut mean = vec![0.0; d];
    for &i in members {
        for (m, v) in mean.iter_mut().zip(&points[i]) {
            *m += v / members.len() as f64;
        }
    }
    members
        .iter()
        .map(|&i| points[i].iter().zip(&mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
        .sum()
}

fn c6_kmeans() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(6);
    let mut cases = 0;
    for case in 0..60 {
        let n = r.random_range(2..=8);
        let dim = r.random_range(1..=3);
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| r.random_range(-5.0..5.0)).collect())
            .collect();
        let mut best = f64::INFINITY;
        for mask in 1u32..(1 << (n - 1)) {
            let a: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
            let b: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) == 0).collect();
            best = best.min(sse(&points, &a) + sse(&points, &b));
        }
        let cfg = KMeansConfig {
            k: 2,
            seed: case,
            ..Default::default()
        };
        let got = fit_kmeans(&points, &cfg).unwrap().meta.inertia;
        if (got - best).abs() > 1e-9 * best.max(1.0) {
            return Err(format!("case {case} ({n} points): inertia {got} vs optimum {best}"));
        }
        cases += 1;
    }
    Ok(format!("{cases} datasets of 2..=8 points reach the exhaustive optimum"))
}

fn c7_hardness() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(7);
    let mut worst_sum = 0.0f64;
    let mut worst_scale = 0.0f64;
    for i in 0..10_000 {
        let k = r.random_range(1..=40);
        let dim = r.random_range(1..=6);
        let centers: Vec<Vec<f64>> = (0..k).map(|_| tailforge::nn::gaussian_vec(&mut r, dim)).collect();
        let model = KMeansModel::from_centers(centers.clone()).unwrap();
        let emb = TextEmbedding(tailforge::nn::gaussian_vec(&mut r, dim));
        let h = hardness_vector(&emb, &model).unwrap();
        if h.values().iter().any(|&v| v < 0.0) {
            return Err(format!("vector {i} has a negative entry"));
        }
        worst_sum = worst_sum.max((h.values().iter().sum::<f64>() - 1.0).abs());
        let e = hardness_entropy(&h);
        if !(e >= 0.0 && e <= (k as f64).ln() + 1e-12) {
            return Err(format!("vector {i}: entropy {e} outside [0, ln {k}]"));
        }
        let dists: Vec<f64> = centers
            .iter()
            .map(|c| c.iter().zip(&emb.0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
            .collect();
        let c = r.random_range(1e-3..1e3);
        let scaled: Vec<f64> = dists.iter().map(|d| d * c).collect();
        let (a, b) = (HardnessVector::from_distances(&dists), HardnessVector::from_distances(&scaled));
        for (x, y) in a.values().iter().zip(b.values()) {
            worst_scale = worst_scale.max((x - y).abs());
        }
        for (x, y) in a.values().iter().zip(h.values()) {
            worst_scale = worst_scale.max((x - y).abs());
        }
    }
    check(
        worst_sum <= 1e-9 && worst_scale <= 1e-12,
        format!("10^4 vectors: max |sum - 1| = {worst_sum:.1e}, max scaling drift = {worst_scale:.1e}"),
    )
}

fn c8_tail_improvement() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = bench_config(dir.path(), &[]);
    run_all(&cfg).map_err(|e| e.to_string())?;
    let evals = load_evals(dir.path());
    let (base, tuned) = (&eval_of(&evals, "baseline").report, &eval_of(&evals, "finetuned").report);
    let few = tuned.so.few.unwrap() - base.so.few.unwrap();
    let comb = tuned.combined.unwrap() - base.combined.unwrap();
    check(
        few >= 2.0 && comb >= 1.0,
        format!(
            "few S/O {:.2} -> {:.2} ({few:+.2}), combined {:.2} -> {:.2} ({comb:+.2}), many S/O {:.2} -> {:.2}",
            base.so.few.unwrap(),
            tuned.so.few.unwrap(),
            base.combined.unwrap(),
            tuned.combined.unwrap(),
            base.so.get(Some(Split::Many)).unwrap(),
            tuned.so.get(Some(Split::Many)).unwrap(),
        ),
    )
}

/// Budgets (few, medium) with totals in ratio 1 : 3 : 5.
const BUDGETS: [(usize, usize); 3] = [(900, 300), (2700, 900), (4500, 1500)];

fn c9_budgets() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let mut per_budget: Vec<Vec<f64>> = vec![Vec::new(); BUDGETS.len()];
    for seed in 1..=3u64 {
        let base_dir = root.path().join(format!("seed{seed}"));
        let seeds = seed_overrides(seed);
        let cfg = bench_config(&base_dir, &seeds);
        use Command::*;
        run_commands(&[SynthBench, FitHardness, TrainDiffusion, TrainBaseline], &cfg).map_err(|e| e.to_string())?;
        for (b, (few, medium)) in BUDGETS.iter().enumerate() {
            let dir = root.path().join(format!("seed{seed}-budget{b}"));
            copy_artifacts(&base_dir, &dir);
            let mut o = seeds.clone();
            o.push(format!("augment.budget_few={few}"));
            o.push(format!("augment.budget_medium={medium}"));
            let cfg = bench_config(&dir, &o);
            run_commands(&[Augment, EncodeText, Sample, Finetune, Evaluate], &cfg).map_err(|e| e.to_string())?;
            per_budget[b].push(eval_of(&load_evals(&dir), "finetuned").report.combined.unwrap());
        }
    }
    let medians: Vec<f64> = per_budget
        .iter()
        .map(|v| {
            let mut v = v.clone();
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        })
        .collect();
    let ok = medians.windows(2).all(|w| w[1] >= w[0]);
    check(
        ok,
        format!(
            "median combined at budgets 1200/3600/6000: {:.2} / {:.2} / {:.2} (per seed {per_budget:.2?})",
            medians[0], medians[1], medians[2]
        ),
    )
}

/// `(so_seed, hardness_condition, curriculum)` rows of the ablation grid.
const GRID: [(bool, bool, bool); 6] = [
    (false, false, false),
    (false, true, false),
    (false, true, true),
    (true, false, false),
    (true, true, false),
    (true, true, true),
];

fn c10_flag_grid() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let mut rows = Vec::new();
    for (i, &(so, h, c)) in GRID.iter().enumerate() {
        let overrides = vec![
            format!("flags.so_seed={so}"),
            format!("flags.hardness_condition={h}"),
            format!("flags.curriculum={c}"),
            "augment.budget_few=1500".to_string(),
            "augment.budget_medium=500".to_string(),
            "diffusion.train.steps=800".to_string(),
        ];
        let mut hashes: Vec<BTreeMap<String, BTreeMap<String, String>>> = Vec::new();
        for rep in 0..2 {
            let dir = root.path().join(format!("run{rep}")).join(format!("combo{i}"));
            let cfg = bench_config(&dir, &overrides);
            run_all(&cfg).map_err(|e| format!("combo {i}: {e}"))?;
            let entries = RunManifest::in_dir(&dir).entries().unwrap();
            hashes.push(entries.into_iter().map(|e| (e.command, e.outputs)).collect());
            if rep == 0 {
                let ev = load_evals(&dir);
                let t = eval_of(&ev, "finetuned");
                if t.flags.map(|f| (f.so_seed, f.hardness_condition, f.curriculum)) != Some((so, h, c)) {
                    return Err(format!("combo {i}: report carries the wrong flags"));
                }
                rows.push(t.report.combined.unwrap());
            }
        }
        if hashes[0] != hashes[1] {
            let differing: Vec<&String> = hashes[0]
                .iter()
                .filter(|(k, v)| hashes[1].get(*k) != Some(v))
                .map(|(k, _)| k)
                .collect();
            return Err(format!("combo {i}: re-run output hashes differ for {differing:?}"));
        }
    }
    let shown: Vec<String> = rows.iter().map(|v| format!("{:.2}", round_half_up(*v, 2))).collect();
    Ok(format!("6 combinations ran twice with identical output hashes; combined: {}", shown.join(" / ")))
}

fn c11_metric() -> Outcome {
    let v = round_half_up(combined_score(17.51, 11.80), 2);
    check(v == 14.66, format!("combined(17.51, 11.80) = {v:.2}"))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 11] = [
        (1, "split-rule fidelity", c1_splits),
        (2, "LCH oracle equivalence", c2_lch),
        (3, "diffusion forward statistics", c3_forward),
        (4, "gradient correctness", c4_gradients),
        (5, "conditional fidelity", c5_two_mode),
        (6, "k-means optimality", c6_kmeans),
        (7, "hardness invariants", c7_hardness),
        (8, "end-to-end tail improvement", c8_tail_improvement),
        (9, "budget monotonicity", c9_budgets),
        (10, "flag-grid reproducibility", c10_flag_grid),
        (11, "metric arithmetic", c11_metric),
    ];
    let wanted: HashSet<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, f) in criteria {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".to_string()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {n:>2} PASS  {name} ({secs:.1}s): {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name} ({secs:.1}s): {d}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
