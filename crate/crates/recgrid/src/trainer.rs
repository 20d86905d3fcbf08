//! Per-task training loop: fresh model, 2048 batches of 16 generator draws,
//! cross-entropy averaged per cell, one optimizer step per batch.
//!
//! Mixed grid sizes inside a batch are handled by grouping examples of equal
//! extents and accumulating gradients across the groups with cell-count
//! weights, which keeps the per-example depth schedule intact (padding
//! would change `2 * max(H, W)`).

use crate::error::{Error, Result};
use crate::model::{build, ArchConfig, ModelParams};
use crate::optim::{AdamWConfig, AdamWOptimizer, MuonConfig, MuonOptimizer, Optimizer, Schedule};
use crate::seeding::{derive_seed, rng_for, SeedPart};
use crate::taskgen::{generate, ExamplePair, TaskSpec};
use crate::tensor::Real;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "name")]
pub enum OptimizerChoice {
    Muon { config: MuonConfig },
    Adamw { config: AdamWConfig },
}

impl OptimizerChoice {
    pub fn muon() -> Self {
        OptimizerChoice::Muon {
            config: MuonConfig::default(),
        }
    }

    pub fn adamw() -> Self {
        OptimizerChoice::Adamw {
            config: AdamWConfig::default(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OptimizerChoice::Muon { .. } => "muon",
            OptimizerChoice::Adamw { .. } => "adamw",
        }
    }

    fn instantiate(&self) -> Box<dyn Optimizer> {
        match self {
            OptimizerChoice::Muon { config } => Box::new(MuonOptimizer::new(*config)),
            OptimizerChoice::Adamw { config } => Box::new(AdamWOptimizer::new(*config)),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batches: usize,
    pub batch_size: usize,
    /// Training difficulty band passed to the generator.
    pub lower: f64,
    pub upper: f64,
    pub arch: ArchConfig,
    pub optimizer: OptimizerChoice,
    pub schedule: Schedule,
    pub seed: u64,
    /// Upper bound on examples per forward pass (memory cap).
    pub micro_batch: usize,
}

impl TrainConfig {
    /// The reference recipe: 2048 batches of 16, difficulty 0.3-0.5, Muon at
    /// peak 0.01 with 16 warmup steps and cosine decay to 1e-7.
    pub fn reference(arch: ArchConfig, seed: u64) -> Self {
        Self {
            batches: 2048,
            batch_size: 16,
            lower: 0.3,
            upper: 0.5,
            arch,
            optimizer: OptimizerChoice::muon(),
            schedule: Schedule::WarmupCosine(
                crate::optim::LrSchedule::new(0.01, 16, 2048, 1e-7).expect("valid reference"),
            ),
            seed,
            micro_batch: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        if self.batches == 0 || self.batch_size == 0 || self.micro_batch == 0 {
            return Err(Error::InvalidConfig(
                "batches, batch_size and micro_batch must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.lower)
            || !(0.0..=1.0).contains(&self.upper)
            || self.lower > self.upper
        {
            return Err(Error::InvalidRange(format!(
                "difficulty band must satisfy 0 <= l <= u <= 1, got {} and {}",
                self.lower, self.upper
            )));
        }
        if let Schedule::WarmupCosine(s) = &self.schedule {
            if s.total < self.batches {
                return Err(Error::InvalidConfig(format!(
                    "schedule covers {} steps but training runs {}",
                    s.total, self.batches
                )));
            }
        }
        Ok(())
    }
}

/// Per-step progress record; rendered as one JSON line by the CLI.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainRecord {
    pub task_id: String,
    pub arch: String,
    pub optimizer: String,
    pub seed: u64,
    pub losses: Vec<f64>,
    pub lrs: Vec<f64>,
    pub wall_secs: f64,
    pub checkpoint: Option<String>,
}

impl TrainRecord {
    /// median(last 64 losses) / median(first 64 losses); None when the run
    /// is shorter than 128 steps.
    pub fn improvement_ratio(&self) -> Option<f64> {
        if self.losses.len() < 128 {
            return None;
        }
        let first = median(&self.losses[..64]);
        let last = median(&self.losses[self.losses.len() - 64..]);
        Some(last / first)
    }
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

enum Source<'a> {
    Generator(&'a TaskSpec),
    /// Fixed example list; batches cycle through it in order, so a dataset
    /// the size of the batch is trained on verbatim every step.
    Dataset(&'a [ExamplePair]),
}

/// Train a fresh model on a generator task.
pub fn train_task(config: &TrainConfig, spec: &TaskSpec) -> Result<(ModelParams, TrainRecord)> {
    train_task_with_progress(config, spec, &mut |_| {})
}

pub fn train_task_with_progress(
    config: &TrainConfig,
    spec: &TaskSpec,
    progress: &mut dyn FnMut(&StepRecord),
) -> Result<(ModelParams, TrainRecord)> {
    run_training(config, &spec.task_id, Source::Generator(spec), progress)
}

/// Train on a fixed list of examples (ingested dataset or memorization runs).
pub fn train_on_pairs(
    config: &TrainConfig,
    task_id: &str,
    pairs: &[ExamplePair],
    progress: &mut dyn FnMut(&StepRecord),
) -> Result<(ModelParams, TrainRecord)> {
    if pairs.is_empty() {
        return Err(Error::InvalidConfig("empty example list".into()));
    }
    run_training(config, task_id, Source::Dataset(pairs), progress)
}

fn run_training(
    config: &TrainConfig,
    task_id: &str,
    source: Source<'_>,
    progress: &mut dyn FnMut(&StepRecord),
) -> Result<(ModelParams, TrainRecord)> {
    config.validate()?;
    let start = Instant::now();

    let model_seed = derive_seed(
        config.seed,
        &[
            SeedPart::Str("model"),
            SeedPart::Str(task_id),
            SeedPart::Str(config.arch.arch.name()),
        ],
    );
    let mut params = build(&config.arch, model_seed)?;
    let mut optimizer = config.optimizer.instantiate();
    let mut data_rng = rng_for(config.seed, &[SeedPart::Str("data"), SeedPart::Str(task_id)]);

    let mut losses = Vec::with_capacity(config.batches);
    let mut lrs = Vec::with_capacity(config.batches);

    for step in 0..config.batches {
        let lr = config.schedule.lr_at(step)?;

        let batch: Vec<ExamplePair> = match &source {
            Source::Generator(spec) => (0..config.batch_size)
                .map(|_| generate(spec, config.lower, config.upper, &mut data_rng))
                .collect::<Result<_>>()?,
            Source::Dataset(pairs) => (0..config.batch_size)
                .map(|i| pairs[(step * config.batch_size + i) % pairs.len()].clone())
                .collect(),
        };

        let (loss, grads) = batch_loss_and_grads(&params, &batch, config.micro_batch)?;
        if !loss.is_finite() {
            let tail_start = losses.len().saturating_sub(8);
            return Err(Error::NonFiniteLoss {
                step,
                lr,
                tail: losses[tail_start..].to_vec(),
            });
        }
        optimizer.step(&mut params, &grads, lr)?;

        losses.push(loss);
        lrs.push(lr);
        progress(&StepRecord { step, loss, lr });
    }

    let record = TrainRecord {
        task_id: task_id.to_string(),
        arch: config.arch.arch.name().to_string(),
        optimizer: config.optimizer.name().to_string(),
        seed: config.seed,
        losses,
        lrs,
        wall_secs: start.elapsed().as_secs_f64(),
        checkpoint: None,
    };
    Ok((params, record))
}

/// Cross-entropy of one mixed-size batch, averaged over every cell, plus the
/// parameter gradients. Examples are grouped by extent; each group's tape is
/// backpropagated with weight cells/total_cells, which reproduces the single
/// per-cell mean exactly while bounding peak memory.
pub fn batch_loss_and_grads(
    params: &ModelParams,
    batch: &[ExamplePair],
    micro_batch: usize,
) -> Result<(f64, Vec<Vec<Real>>)> {
    let mut groups: BTreeMap<(usize, usize), Vec<&ExamplePair>> = BTreeMap::new();
    for pair in batch {
        groups
            .entry((pair.input.height(), pair.input.width()))
            .or_default()
            .push(pair);
    }
    let total_cells: usize = batch.iter().map(|p| p.input.area()).sum();

    let mut grads: Vec<Vec<Real>> = params
        .buffers()
        .iter()
        .map(|b| vec![0.0; b.len()])
        .collect();
    let mut total_loss = 0.0f64;

    for group in groups.values() {
        for chunk in group.chunks(micro_batch) {
            let inputs: Vec<_> = chunk.iter().map(|p| p.input.clone()).collect();
            let outputs: Vec<_> = chunk.iter().map(|p| p.output.clone()).collect();
            let chunk_cells: usize = inputs.iter().map(crate::taskgen::Grid::area).sum();
            let weight = chunk_cells as f64 / total_cells as f64;

            let mut tape = crate::tensor::Tape::new();
            let ids = params.register(&mut tape)?;
            let (logits, _) = params.forward_on(&mut tape, &ids, &inputs, None)?;
            let targets = crate::model::targets_of(&outputs);
            let loss = tape.softmax_cross_entropy(logits, &targets, params.config.colors)?;
            total_loss += f64::from(tape.scalar(loss)) * weight;
            tape.backward_seeded(loss, weight as Real)?;
            for (acc, id) in grads.iter_mut().zip(ids.all()) {
                if let Some(g) = tape.grad(*id) {
                    for (a, &gv) in acc.iter_mut().zip(g) {
                        *a += gv;
                    }
                }
            }
        }
    }
    Ok((total_loss, grads))
}

// ── Checkpoints ─────────────────────────────────────────────────────────
//
// Byte layout (all integers little-endian):
//   magic   8 bytes  b"RGCHKPT1"
//   hlen    u32      header length in bytes
//   header  hlen     JSON: config, seed, precision, buffer names + shapes
//   payload          buffer data in header order, IEEE-754 little-endian
//   digest  32 bytes SHA-256 over everything above
// The layout is stable; bump the magic suffix on any incompatible change.

const CHECKPOINT_MAGIC: &[u8; 8] = b"RGCHKPT1";

#[cfg(not(feature = "precision-f32"))]
const PRECISION: &str = "f64";
#[cfg(feature = "precision-f32")]
const PRECISION: &str = "f32";

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    config: ArchConfig,
    seed: u64,
    precision: String,
    init: String,
    buffers: Vec<BufferEntry>,
}

#[derive(Serialize, Deserialize)]
struct BufferEntry {
    name: String,
    shape: Vec<usize>,
}

/// Description of the initialization policy, embedded in checkpoints so a
/// stored model documents how it started.
pub fn init_description() -> String {
    format!(
        "conv/linear ~ N(0, 1/fan_in); biases/shifts 0; gains 1; embed ~ N(0, {}^2)",
        crate::model::EMBED_INIT_STD
    )
}

pub fn checkpoint_save(params: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    let header = CheckpointHeader {
        config: params.config,
        seed: params.seed,
        precision: PRECISION.to_string(),
        init: init_description(),
        buffers: params
            .buffers()
            .iter()
            .map(|b| BufferEntry {
                name: b.name.to_string(),
                shape: b.shape.clone(),
            })
            .collect(),
    };
    let header_bytes = serde_json::to_vec(&header)?;

    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(header_bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    for buf in params.buffers() {
        for &v in &buf.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);

    let mut file = std::fs::File::create(path.as_ref())?;
    file.write_all(&out)?;
    Ok(())
}

pub fn checkpoint_load(path: impl AsRef<Path>) -> Result<ModelParams> {
    let mut bytes = Vec::new();
    std::fs::File::open(path.as_ref())?.read_to_end(&mut bytes)?;
    if bytes.len() < CHECKPOINT_MAGIC.len() + 4 + 32 {
        return Err(Error::Integrity("checkpoint file is truncated".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    let expect = Sha256::digest(body);
    if digest != expect.as_slice() {
        return Err(Error::Integrity("checkpoint checksum mismatch".into()));
    }
    if &body[..8] != CHECKPOINT_MAGIC {
        return Err(Error::Integrity("not a checkpoint file (bad magic)".into()));
    }
    let hlen = u32::from_le_bytes(body[8..12].try_into().unwrap()) as usize;
    if body.len() < 12 + hlen {
        return Err(Error::Integrity("checkpoint header is truncated".into()));
    }
    let header: CheckpointHeader = serde_json::from_slice(&body[12..12 + hlen])?;
    if header.precision != PRECISION {
        return Err(Error::ConfigMismatch(format!(
            "checkpoint stores {} values but this build uses {}",
            header.precision, PRECISION
        )));
    }
    let mut payload = &body[12 + hlen..];
    let width = std::mem::size_of::<Real>();
    let mut buffers = Vec::with_capacity(header.buffers.len());
    for entry in &header.buffers {
        let n: usize = entry.shape.iter().product();
        if payload.len() < n * width {
            return Err(Error::Integrity(format!(
                "checkpoint payload too short for buffer '{}'",
                entry.name
            )));
        }
        let (raw, rest) = payload.split_at(n * width);
        payload = rest;
        let data: Vec<Real> = raw
            .chunks_exact(width)
            .map(|c| Real::from_le_bytes(c.try_into().unwrap()))
            .collect();
        buffers.push((entry.name.clone(), data));
    }
    if !payload.is_empty() {
        return Err(Error::Integrity("trailing bytes in checkpoint".into()));
    }
    ModelParams::from_buffers(header.config, header.seed, buffers)
}

/// Load and verify the stored architecture matches `expected`.
pub fn checkpoint_load_expecting(
    path: impl AsRef<Path>,
    expected: &ArchConfig,
) -> Result<ModelParams> {
    let params = checkpoint_load(path)?;
    if params.config != *expected {
        return Err(Error::ConfigMismatch(format!(
            "checkpoint holds {:?} C={}, expected {:?} C={}",
            params.config.arch, params.config.channels, expected.arch, expected.channels
        )));
    }
    Ok(params)
}

/// Hex SHA-256 of a serialized checkpoint file, for manifests and reports.
pub fn checkpoint_digest(path: impl AsRef<Path>) -> Result<String> {
    let bytes = std::fs::read(path.as_ref())?;
    Ok(hex_string(&Sha256::digest(&bytes)))
}

pub(crate) fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
