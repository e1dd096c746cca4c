#![allow(dead_code)]

use tailforge::diffusion::{
    sample, train, DenoiserConfig, DenoiserNetwork, NoisePredictor, NoiseSchedule, SeedMode, TrainConfig,
    TrainExample,
};
use tailforge::encoders::ConditionVector;
use tailforge::rng;
use tailforge::Result;

/// Predicts a fixed function of its inputs.
pub struct StubNet {
    pub width: usize,
    pub f: fn(&[f64], usize) -> Vec<f64>,
}

impl NoisePredictor for StubNet {
    fn visual_width(&self) -> usize {
        self.width
    }

    fn predict(&self, x_t: &[f64], t: usize, _cond: &ConditionVector) -> Result<Vec<f64>> {
        Ok((self.f)(x_t, t))
    }
}

pub fn zero_net(width: usize) -> StubNet {
    StubNet {
        width,
        f: |x, _| vec![0.0; x.len()],
    }
}

/// Per-group relative error `|fd - g| / max(|fd|, |g|)` of the analytic
/// loss gradient, over every named parameter tensor.
pub fn gradient_check(net: &DenoiserNetwork, x_t: &[f64], t: usize, cond: &ConditionVector, noise: &[f64]) -> Vec<(String, f64)> {
    let mut g = vec![0.0; net.params.len()];
    net.loss_and_grad(x_t, t, cond, noise, Some(&mut g)).unwrap();
    let h = 1e-5;
    let mut probe = net.clone();
    net.layout()
        .entries()
        .iter()
        .map(|e| {
            let (mut diff, mut fd_norm, mut g_norm) = (0.0f64, 0.0f64, 0.0f64);
            for i in e.range() {
                let orig = probe.params[i];
                probe.params[i] = orig + h;
                let up = probe.loss_and_grad(x_t, t, cond, noise, None).unwrap();
                probe.params[i] = orig - h;
                let down = probe.loss_and_grad(x_t, t, cond, noise, None).unwrap();
                probe.params[i] = orig;
                let fd = (up - down) / (2.0 * h);
                diff += (fd - g[i]).powi(2);
                fd_norm += fd * fd;
                g_norm += g[i] * g[i];
            }
            let denom = fd_norm.sqrt().max(g_norm.sqrt()).max(1e-12);
            (e.name.clone(), diff.sqrt() / denom)
        })
        .collect()
}

/// Toy width-8 network with a text token and a hardness token, every
/// parameter (biases included) randomised so no gradient is trivially zero.
pub fn toy_gradient_setup() -> (DenoiserNetwork, Vec<f64>, ConditionVector, Vec<f64>) {
    let cfg = DenoiserConfig::new(8, 8, vec![6, 4]);
    let mut r = rng::stream(11, &[]);
    let n = cfg.layout().total();
    let params: Vec<f64> = tailforge::nn::gaussian_vec(&mut r, n).iter().map(|v| v * 0.4).collect();
    let net = DenoiserNetwork::from_params(cfg, params);
    let x_t = tailforge::nn::gaussian_vec(&mut r, 8);
    let cond = ConditionVector {
        tokens: vec![tailforge::nn::gaussian_vec(&mut r, 6), vec![0.1, 0.2, 0.3, 0.4]],
    };
    let noise = tailforge::nn::gaussian_vec(&mut r, 8);
    (net, x_t, cond, noise)
}

pub fn two_mode_token(mode: usize) -> ConditionVector {
    let mut tok = vec![0.0; 2];
    tok[mode] = 1.0;
    ConditionVector::text_only(tok)
}

/// Trains a 1-D denoiser on `x0 = -3` (token 0) and `x0 = +3` (token 1).
pub fn train_two_mode(steps: usize) -> (DenoiserNetwork, NoiseSchedule) {
    let schedule = NoiseSchedule::scaled_linear(50).unwrap();
    let examples: Vec<TrainExample> = [-3.0, 3.0]
        .iter()
        .enumerate()
        .map(|(m, &x)| TrainExample {
            key: format!("mode{m}"),
            x0: vec![x],
            cond: two_mode_token(m),
        })
        .collect();
    let net = DenoiserNetwork::new(DenoiserConfig::new(1, 32, vec![2]), 3).unwrap();
    let cfg = TrainConfig {
        steps,
        batch: 64,
        lr: 2e-3,
        seed: 5,
        ..Default::default()
    };
    let state = train(&examples, &schedule, net, cfg).unwrap();
    (state.net, schedule)
}

/// Fraction of `draws` conditioned samples within 1.0 of the right mode,
/// over both modes.
pub fn two_mode_hit_rate(net: &DenoiserNetwork, schedule: &NoiseSchedule, draws: usize) -> f64 {
    let mut hits = 0;
    for i in 0..draws {
        let m = i % 2;
        let target = if m == 0 { -3.0 } else { 3.0 };
        let mut r = rng::stream(77, &[i as u64]);
        let x = sample(net, schedule, &two_mode_token(m), &SeedMode::Random, &mut r).unwrap();
        if (x.0[0] - target).abs() <= 1.0 {
            hits += 1;
        }
    }
    hits as f64 / draws as f64
}

use std::path::Path;

use tailforge::pipeline::{EvalRecord, PipelineConfig, EVAL_FILE, LOCK_FILE, MANIFEST_FILE};

pub const BENCH_CONFIG: &str = include_str!("../../configs/bench.toml");

/// The benchmark config family rooted at `out_dir`, with extra overrides.
pub fn bench_config(out_dir: &Path, overrides: &[String]) -> PipelineConfig {
    PipelineConfig::from_toml_str(
        BENCH_CONFIG,
        &[("paths.out_dir".to_string(), out_dir.display().to_string())],
        overrides,
    )
    .unwrap()
}

/// Overrides that reseed every stochastic stage except the benchmark itself.
pub fn seed_overrides(seed: u64) -> Vec<String> {
    [
        "augment.seed",
        "diffusion.init_seed",
        "diffusion.sample_seed",
        "diffusion.train.seed",
        "baseline.seed",
        "finetune.seed",
    ]
    .iter()
    .map(|k| format!("{k}={seed}"))
    .collect()
}

pub fn load_evals(dir: &Path) -> Vec<EvalRecord> {
    let bytes = std::fs::read(dir.join(EVAL_FILE)).unwrap();
    serde_json::from_slice(&bytes).unwrap()
}

pub fn eval_of<'a>(records: &'a [EvalRecord], model: &str) -> &'a EvalRecord {
    records.iter().find(|r| r.model == model).unwrap()
}

/// Copies the artifacts of one output directory into another, leaving out
/// the manifest and lock.
pub fn copy_artifacts(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for e in std::fs::read_dir(from).unwrap() {
        let e = e.unwrap();
        let name = e.file_name();
        if name == MANIFEST_FILE || name == LOCK_FILE {
            continue;
        }
        std::fs::copy(e.path(), to.join(name)).unwrap();
    }
}
