//! Stage-wise orchestration with file hand-off between commands, a run
//! manifest and a per-directory lock.

mod config;
mod manifest;
mod tables;

pub use config::{
    AugmentSection, BaselineSection, DiffusionSection, EncodeMode, EncodeSection, FinetuneSection, Flags,
    PathsConfig, PipelineConfig, ReportSection, PATH_ENV,
};
pub use manifest::{sha256_bytes, sha256_file, DirLock, ManifestEntry, RunManifest, LOCK_FILE, MANIFEST_FILE};
pub use tables::{render_report, EvalRecord, EVAL_FILE};

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::seq::index::sample as sample_indices;

use crate::corpus::{
    augment_triplets, generate_synthetic_world, read_augmented, write_augmented, AugmentedTriplet, CorpusSplits,
    Dataset, SyntheticWorld,
};
use crate::diffusion::{
    generate_for_augmented, train, Checkpoint, DenoiserConfig, DenoiserNetwork, GenerationRequest, NoiseSchedule,
    SeedKind, TrainExample,
};
use crate::encoders::{
    build_condition, synthetic_text_encode, ConditionWidths, EmbeddingKind, EmbeddingStore, RegionIndex,
    TextEmbedding,
};
use crate::error::{Error, Result};
use crate::hardness::{curriculum_split, fit_kmeans, hardness_vector, KMeansModel};
use crate::rng;
use crate::taxonomy::Taxonomy;
use crate::vrrmodel::{
    evaluate, finetune, samples_from_dataset, samples_from_generated, train_baseline, Curriculum, VrrClassifier,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Command {
    SynthBench,
    Augment,
    EncodeText,
    FitHardness,
    TrainDiffusion,
    Sample,
    TrainBaseline,
    Finetune,
    Evaluate,
    Report,
}

impl Command {
    /// Every command in dependency order.
    pub const ALL: [Command; 10] = [
        Command::SynthBench,
        Command::Augment,
        Command::EncodeText,
        Command::FitHardness,
        Command::TrainDiffusion,
        Command::Sample,
        Command::TrainBaseline,
        Command::Finetune,
        Command::Evaluate,
        Command::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Command::SynthBench => "synth-bench",
            Command::Augment => "augment",
            Command::EncodeText => "encode-text",
            Command::FitHardness => "fit-hardness",
            Command::TrainDiffusion => "train-diffusion",
            Command::Sample => "sample",
            Command::TrainBaseline => "train-baseline",
            Command::Finetune => "finetune",
            Command::Evaluate => "evaluate",
            Command::Report => "report",
        }
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown command `{s}`")))
    }
}

impl std::fmt::Display for Command {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Process exit status for a failed command: 1 usage or config, 2 missing
/// upstream artifact, 3 anything else.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } => 1,
        Error::MissingDependency { .. } => 2,
        _ => 3,
    }
}

/// Artifact locations of one output directory.
#[derive(Clone, Debug)]
pub struct Artifacts {
    pub out_dir: PathBuf,
    paths: PathsConfig,
}

const USER_INPUT: &str = "user input";

impl Artifacts {
    pub fn new(cfg: &PipelineConfig) -> Self {
        Self {
            out_dir: cfg.paths.out_dir.clone(),
            paths: cfg.paths.clone(),
        }
    }

    fn input(&self, given: &Option<PathBuf>, default: &str) -> (PathBuf, &'static str) {
        match given {
            Some(p) => (p.clone(), USER_INPUT),
            None => (self.out_dir.join(default), "synth-bench"),
        }
    }

    pub fn taxonomy(&self) -> (PathBuf, &'static str) {
        self.input(&self.paths.taxonomy, "taxonomy.tsv")
    }
    pub fn train(&self) -> (PathBuf, &'static str) {
        self.input(&self.paths.train, "train.tsv")
    }
    pub fn test(&self) -> (PathBuf, &'static str) {
        self.input(&self.paths.test, "test.tsv")
    }
    pub fn visual(&self) -> (PathBuf, &'static str) {
        self.input(&self.paths.visual, "visual.emb")
    }
    pub fn text(&self) -> (PathBuf, &'static str) {
        self.input(&self.paths.text, "text.emb")
    }
    pub fn file(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

pub const AUGMENTED_FILE: &str = "augmented.tsv";
pub const TEXT_FULL_FILE: &str = "text_full.emb";
pub const HARDNESS_FILE: &str = "hardness.emb";
pub const DIFFUSION_FILE: &str = "diffusion.ddpm";
pub const DIFFUSION_LOSS_FILE: &str = "diffusion_loss.tsv";
pub const GENERATED_FILE: &str = "generated.emb";
pub const SAMPLE_ERRORS_FILE: &str = "sample_errors.tsv";
pub const BASELINE_FILE: &str = "baseline.json";
pub const FINETUNED_FILE: &str = "finetuned.json";
pub const REPORT_FILE: &str = "report.md";
pub const REPORT_KV_FILE: &str = "report.kv";

/// The file itself plus whichever sidecars exist next to it.
fn with_sidecars(path: &Path) -> Vec<PathBuf> {
    let mut out = vec![path.to_path_buf()];
    for ext in [".idx", ".meta.json", ".objects", ".relations"] {
        let mut s = path.as_os_str().to_owned();
        s.push(ext);
        let p = PathBuf::from(s);
        if p.exists() {
            out.push(p);
        }
    }
    out
}

/// Bookkeeping for one command invocation.
struct Run<'a> {
    cfg: &'a PipelineConfig,
    art: Artifacts,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    warnings: Vec<String>,
}

impl<'a> Run<'a> {
    fn label(&self, p: &Path) -> String {
        p.strip_prefix(&self.art.out_dir)
            .map(|r| r.display().to_string())
            .unwrap_or_else(|_| p.display().to_string())
    }

    /// Checks an upstream artifact exists and records its hash.
    fn need(&mut self, (path, producer): (PathBuf, &'static str)) -> Result<PathBuf> {
        if !path.exists() {
            return Err(Error::MissingDependency {
                artifact: path,
                producer,
            });
        }
        for p in with_sidecars(&path) {
            let h = sha256_file(&p)?;
            self.inputs.insert(self.label(&p), h);
        }
        Ok(path)
    }

    fn need_file(&mut self, name: &str, producer: &'static str) -> Result<PathBuf> {
        let p = self.art.file(name);
        self.need((p, producer))
    }

    fn wrote(&mut self, path: &Path) -> Result<()> {
        for p in with_sidecars(path) {
            let h = sha256_file(&p)?;
            self.outputs.insert(self.label(&p), h);
        }
        Ok(())
    }

    fn warn(&mut self, msg: String) {
        log::warn!("{msg}");
        self.warnings.push(msg);
    }

    fn splits(train: &Dataset) -> Result<CorpusSplits> {
        CorpusSplits::from_frequencies(&train.frequencies())
    }

    fn load_train(&mut self) -> Result<Dataset> {
        let p = self.need(self.art.train())?;
        Dataset::read(p)
    }

    fn load_visual(&mut self) -> Result<EmbeddingStore> {
        let p = self.need(self.art.visual())?;
        EmbeddingStore::read(p)
    }

    fn load_augmented(&mut self, train: &Dataset) -> Result<Vec<AugmentedTriplet>> {
        let p = self.need_file(AUGMENTED_FILE, "augment")?;
        read_augmented(p, train)
    }

    fn load_text(&mut self) -> Result<EmbeddingStore> {
        let p = self.need(self.art.text())?;
        EmbeddingStore::read(p)
    }

    fn load_text_full(&mut self) -> Result<EmbeddingStore> {
        let p = self.need_file(TEXT_FULL_FILE, "encode-text")?;
        EmbeddingStore::read(p)
    }

    fn load_hardness(&mut self) -> Result<KMeansModel> {
        let p = self.need_file(HARDNESS_FILE, "fit-hardness")?;
        KMeansModel::load(p)
    }

    fn load_classifier(&mut self, name: &str, producer: &'static str) -> Result<VrrClassifier> {
        let p = self.need_file(name, producer)?;
        let bytes = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    fn write_json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let p = self.art.file(name);
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        std::fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
        self.wrote(&p)
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        let p = self.art.file(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        self.wrote(&p)
    }
}

/// Hash of the configuration with locations stripped, so identical settings
/// in different directories hash alike.
fn config_hash(snapshot: &serde_json::Value) -> String {
    let mut v = snapshot.clone();
    if let Some(obj) = v.as_object_mut() {
        obj.remove("paths");
        obj.remove("report");
    }
    sha256_bytes(v.to_string().as_bytes())
}

/// Runs one command under the output-directory lock and appends its
/// manifest entry.
pub fn run_command(command: Command, cfg: &PipelineConfig) -> Result<ManifestEntry> {
    let art = Artifacts::new(cfg);
    let _lock = DirLock::acquire(&art.out_dir)?;
    let started = Instant::now();
    let started_unix_ms = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0);
    let mut run = Run {
        cfg,
        art,
        inputs: BTreeMap::new(),
        outputs: BTreeMap::new(),
        warnings: Vec::new(),
    };
    log::info!("{command}: starting in {}", run.art.out_dir.display());
    match command {
        Command::SynthBench => synth_bench(&mut run)?,
        Command::Augment => augment(&mut run)?,
        Command::EncodeText => encode_text(&mut run)?,
        Command::FitHardness => fit_hardness(&mut run)?,
        Command::TrainDiffusion => train_diffusion(&mut run)?,
        Command::Sample => sample(&mut run)?,
        Command::TrainBaseline => baseline(&mut run)?,
        Command::Finetune => finetune_stage(&mut run)?,
        Command::Evaluate => evaluate_stage(&mut run)?,
        Command::Report => report(&mut run)?,
    }
    let snapshot = serde_json::to_value(cfg)?;
    let entry = ManifestEntry {
        command: command.as_str().to_string(),
        config_hash: config_hash(&snapshot),
        inputs: run.inputs,
        outputs: run.outputs,
        config: snapshot,
        started_unix_ms,
        elapsed_ms: started.elapsed().as_millis(),
        warnings: run.warnings,
    };
    RunManifest::in_dir(&run.art.out_dir).append(&entry)?;
    log::info!("{command}: done in {} ms", entry.elapsed_ms);
    Ok(entry)
}

/// Runs `commands` in order, stopping at the first failure.
pub fn run_commands(commands: &[Command], cfg: &PipelineConfig) -> Result<Vec<ManifestEntry>> {
    commands.iter().map(|&c| run_command(c, cfg)).collect()
}

/// The full chain from benchmark generation to the report.
pub fn run_all(cfg: &PipelineConfig) -> Result<Vec<ManifestEntry>> {
    run_commands(&Command::ALL, cfg)
}

fn synth_bench(run: &mut Run) -> Result<()> {
    let bench = generate_synthetic_world(run.cfg.synth.clone())?;
    let art = run.art.clone();
    let p = art.file("taxonomy.tsv");
    bench.taxonomy.write(&p)?;
    run.wrote(&p)?;
    for (name, ds) in [("train.tsv", &bench.train), ("test.tsv", &bench.test)] {
        let p = art.file(name);
        ds.write(&p)?;
        run.wrote(&p)?;
    }
    for (name, store) in [("visual.emb", &bench.visual), ("text.emb", &bench.text)] {
        let p = art.file(name);
        store.write(&p)?;
        run.wrote(&p)?;
    }
    log::info!(
        "synthetic benchmark: {} train, {} test triplets, {} objects, {} relations",
        bench.train.len(),
        bench.test.len(),
        bench.train.objects.len(),
        bench.train.relations.len()
    );
    Ok(())
}

fn augment(run: &mut Run) -> Result<()> {
    let train = run.load_train()?;
    let tax = Taxonomy::load(run.need(run.art.taxonomy())?)?;
    let splits = Run::splits(&train)?;
    let aug = augment_triplets(&train, &splits, &tax, &run.cfg.augment.to_config())?;
    for w in aug.warnings {
        run.warn(w);
    }
    let p = run.art.file(AUGMENTED_FILE);
    write_augmented(&p, &train, &aug.triplets)?;
    log::info!("augment: {} variants", aug.triplets.len());
    run.wrote(&p)
}

fn encode_text(run: &mut Run) -> Result<()> {
    let train = run.load_train()?;
    let augmented = run.load_augmented(&train)?;
    let base = run.load_text()?;
    let world = match run.cfg.encode.mode {
        EncodeMode::Precomputed => None,
        EncodeMode::Synthetic => {
            let w = SyntheticWorld::new(run.cfg.synth.clone())?;
            let (objects, relations) = w.vocabularies();
            if objects != train.objects || relations != train.relations {
                return Err(Error::invalid(
                    "synthetic text encoding needs the benchmark vocabularies; use encode.mode = \"precomputed\"",
                ));
            }
            Some(w)
        }
    };
    let mut out = EmbeddingStore::new(EmbeddingKind::Text, base.width());
    let mut seen = HashSet::new();
    let mut missing = Vec::new();
    let triplets = train.triplets.iter().chain(augmented.iter().map(|a| &a.triplet));
    for t in triplets {
        let key = train.text_key(t);
        if !seen.insert(key.clone()) {
            continue;
        }
        if let Some(row) = base.get(&key) {
            out.push_f32(key, row)?;
        } else if let Some(w) = &world {
            let e = synthetic_text_encode(t, w)?;
            out.push(key, &e.0)?;
        } else {
            missing.push(key);
        }
    }
    if !missing.is_empty() {
        return Err(Error::invalid(format!(
            "text store lacks {} triplets (first: {})",
            missing.len(),
            missing[0]
        )));
    }
    let p = run.art.file(TEXT_FULL_FILE);
    out.write(&p)?;
    run.wrote(&p)
}

fn fit_hardness(run: &mut Run) -> Result<()> {
    let train_ds = run.load_train()?;
    let text = run.load_text()?;
    let mut seen = HashSet::new();
    let mut points = Vec::new();
    for t in &train_ds.triplets {
        let key = train_ds.text_key(t);
        if seen.insert(key.clone()) {
            points.push(text_embedding(&text, &key)?.0);
        }
    }
    let model = fit_kmeans(&points, &run.cfg.hardness)?;
    log::info!(
        "fit-hardness: k = {} over {} triplets, inertia {:.4} after {} iterations",
        model.k(),
        points.len(),
        model.meta.inertia,
        model.meta.iterations
    );
    let p = run.art.file(HARDNESS_FILE);
    model.save(&p)?;
    run.wrote(&p)
}

fn text_embedding(text: &EmbeddingStore, key: &str) -> Result<TextEmbedding> {
    text.get_f64(key)
        .map(TextEmbedding)
        .ok_or_else(|| Error::UnknownKey(key.to_string()))
}

fn train_diffusion(run: &mut Run) -> Result<()> {
    let train_ds = run.load_train()?;
    let visual = run.load_visual()?;
    let text = run.load_text()?;
    let hardness = if run.cfg.flags.hardness_condition {
        Some(run.load_hardness()?)
    } else {
        None
    };
    let widths = ConditionWidths {
        text: text.width(),
        hardness: hardness.as_ref().map(KMeansModel::k),
    };
    let mut examples = Vec::with_capacity(train_ds.len());
    for (i, t) in train_ds.triplets.iter().enumerate() {
        let Some(key) = &t.region_key else {
            return Err(Error::invalid(format!("training triplet {i} has no region key")));
        };
        let x0 = visual.get_f64(key).ok_or_else(|| Error::UnknownKey(key.clone()))?;
        let emb = text_embedding(&text, &train_ds.text_key(t))?;
        let h = hardness.as_ref().map(|m| hardness_vector(&emb, m)).transpose()?;
        examples.push(TrainExample {
            key: key.clone(),
            x0,
            cond: build_condition(&emb, h.as_ref(), &widths)?,
        });
    }
    let d = &run.cfg.diffusion;
    let schedule = NoiseSchedule::scaled_linear(d.timesteps)?;
    let mut net_cfg = DenoiserConfig::new(visual.width(), d.hidden, widths.token_widths());
    net_cfg.depth = d.depth;
    let net = DenoiserNetwork::new(net_cfg, d.init_seed)?;
    let state = train(&examples, &schedule, net, d.train.clone())?;
    let mut curve = String::from("# step\tloss\tsmoothed\n");
    for (i, (l, s)) in state.loss_history.iter().zip(&state.smoothed_loss).enumerate() {
        let _ = writeln!(curve, "{}\t{l}\t{s}", i + 1);
    }
    log::info!(
        "train-diffusion: smoothed loss {:.4} -> {:.4}",
        state.smoothed_loss.first().copied().unwrap_or(f64::NAN),
        state.smoothed_loss.last().copied().unwrap_or(f64::NAN)
    );
    let ck = Checkpoint {
        schedule,
        net: state.net,
        optimizer: None,
    };
    let p = run.art.file(DIFFUSION_FILE);
    ck.save(&p)?;
    run.wrote(&p)?;
    run.write_text(DIFFUSION_LOSS_FILE, &curve)
}

fn sample(run: &mut Run) -> Result<()> {
    let train_ds = run.load_train()?;
    let visual = run.load_visual()?;
    let text = run.load_text_full()?;
    let ck_path = run.need_file(DIFFUSION_FILE, "train-diffusion")?;
    let ck = Checkpoint::load_expecting(&ck_path, visual.width(), text.width())?;
    let hardness = if run.cfg.flags.hardness_condition {
        Some(run.load_hardness()?)
    } else {
        None
    };
    let expected = ConditionWidths {
        text: text.width(),
        hardness: hardness.as_ref().map(KMeansModel::k),
    }
    .token_widths();
    if ck.net.config().token_widths != expected {
        return Err(Error::invalid(format!(
            "checkpoint was trained with condition widths {:?} but the flags need {:?}; re-run train-diffusion",
            ck.net.config().token_widths,
            expected
        )));
    }
    let augmented = run.load_augmented(&train_ds)?;
    let regions = RegionIndex::from_dataset(&train_ds, &visual);
    let req = GenerationRequest {
        dataset: &train_ds,
        augmented: &augmented,
        text: &text,
        hardness: hardness.as_ref(),
        visual: &visual,
        regions: &regions,
        seed_kind: if run.cfg.flags.so_seed {
            SeedKind::SubjectObject
        } else {
            SeedKind::Random
        },
        seed: run.cfg.diffusion.sample_seed,
    };
    let generation = generate_for_augmented(&ck.net, &ck.schedule, &req)?;
    let mut errors = String::from("# key\terror\n");
    for e in &generation.errors {
        let _ = writeln!(errors, "{}\t{}", e.key, e.message);
    }
    if !generation.errors.is_empty() {
        run.warn(format!(
            "{} of {} augmented triplets could not be generated; see {SAMPLE_ERRORS_FILE}",
            generation.errors.len(),
            augmented.len()
        ));
    }
    let p = run.art.file(GENERATED_FILE);
    generation.store.write(&p)?;
    run.wrote(&p)?;
    log::info!("sample: {} feature vectors", generation.store.len());
    run.write_text(SAMPLE_ERRORS_FILE, &errors)
}

fn baseline(run: &mut Run) -> Result<()> {
    let train_ds = run.load_train()?;
    let visual = run.load_visual()?;
    let samples = samples_from_dataset(&train_ds, &visual)?;
    let b = &run.cfg.baseline;
    let model = train_baseline(&samples, &train_ds.frequencies(), b.loss, &b.to_config())?;
    run.write_json(BASELINE_FILE, &model)
}

fn finetune_stage(run: &mut Run) -> Result<()> {
    let train_ds = run.load_train()?;
    let base = run.load_classifier(BASELINE_FILE, "train-baseline")?;
    let gen_path = run.need_file(GENERATED_FILE, "sample")?;
    let generated = EmbeddingStore::read(gen_path)?;
    let augmented = run.load_augmented(&train_ds)?;
    let (mut samples, missing) = samples_from_generated(&augmented, &generated);
    if !missing.is_empty() {
        run.warn(format!("{} augmented triplets have no generated sample", missing.len()));
    }
    let n_generated = samples.len();
    let mut curriculum = None;
    if run.cfg.flags.curriculum && n_generated > 0 {
        let model = run.load_hardness()?;
        let text = run.load_text_full()?;
        let skip: HashSet<usize> = missing.into_iter().collect();
        let vectors = augmented
            .iter()
            .enumerate()
            .filter(|(i, _)| !skip.contains(i))
            .map(|(_, a)| hardness_vector(&text_embedding(&text, &train_ds.text_key(&a.triplet))?, &model))
            .collect::<Result<Vec<_>>>()?;
        curriculum = Some(if vectors.len() >= 2 {
            let (easy, hard) = curriculum_split(&vectors)?;
            Curriculum { easy, hard }
        } else {
            Curriculum {
                easy: (0..vectors.len()).collect(),
                hard: vec![],
            }
        });
    }
    let ft = &run.cfg.finetune;
    let n_mix = ((ft.mix_ratio * n_generated as f64).round() as usize).min(train_ds.len());
    if n_mix > 0 {
        let visual = run.load_visual()?;
        let originals = samples_from_dataset(&train_ds, &visual)?;
        let mut r = rng::stream(ft.seed, &[u64::MAX]);
        let mut picks = sample_indices(&mut r, originals.len(), n_mix).into_vec();
        picks.sort_unstable();
        for i in picks {
            if let Some(c) = &mut curriculum {
                c.easy.push(samples.len());
            }
            samples.push(originals[i].clone());
        }
    }
    let tuned = finetune(&base, &samples, Some(&train_ds.frequencies()), &ft.to_config(), curriculum.as_ref())?;
    log::info!("finetune: {} samples ({} generated)", samples.len(), n_generated);
    run.write_json(FINETUNED_FILE, &tuned)
}

fn evaluate_stage(run: &mut Run) -> Result<()> {
    let train_ds = run.load_train()?;
    let test = Dataset::read(run.need(run.art.test())?)?;
    if test.objects != train_ds.objects || test.relations != train_ds.relations {
        return Err(Error::invalid("test and training vocabularies differ"));
    }
    let visual = run.load_visual()?;
    let splits = Run::splits(&train_ds)?;
    let test_samples = samples_from_dataset(&test, &visual)?;
    let base = run.load_classifier(BASELINE_FILE, "train-baseline")?;
    let cfg = run.cfg;
    let mut records = vec![EvalRecord {
        model: "baseline".into(),
        loss: cfg.baseline.loss,
        flags: None,
        budget_few: None,
        budget_medium: None,
        report: evaluate(&base, &test_samples, &splits)?,
    }];
    if run.art.file(FINETUNED_FILE).exists() {
        let tuned = run.load_classifier(FINETUNED_FILE, "finetune")?;
        records.push(EvalRecord {
            model: "finetuned".into(),
            loss: cfg.finetune.loss,
            flags: Some(cfg.flags),
            budget_few: cfg.augment.budget_few,
            budget_medium: cfg.augment.budget_medium,
            report: evaluate(&tuned, &test_samples, &splits)?,
        });
    }
    for r in &records {
        log::info!("evaluate {}:\n{}", r.model, r.report.to_text(&r.model));
        run.write_text(&format!("eval_{}.txt", r.model), &r.report.to_text(&r.model))?;
        run.write_text(&format!("eval_{}.kv", r.model), &r.report.to_kv())?;
    }
    run.write_json(EVAL_FILE, &records)
}

fn report(run: &mut Run) -> Result<()> {
    let mut dirs = vec![run.art.out_dir.clone()];
    dirs.extend(run.cfg.report.runs.iter().cloned());
    let mut runs = Vec::new();
    for d in dirs {
        let p = run.need((d.join(EVAL_FILE), "evaluate"))?;
        let bytes = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
        let records: Vec<EvalRecord> = serde_json::from_slice(&bytes)?;
        let name = d
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| d.display().to_string());
        runs.push((name, records));
    }
    let (md, kv) = render_report(&runs);
    run.write_text(REPORT_FILE, &md)?;
    run.write_text(REPORT_KV_FILE, &kv)
}
