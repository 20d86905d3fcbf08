//! Exact-match grading and the difficulty-sweep evaluation protocol.
//!
//! A sweep walks an ordered list of difficulty values (ID: 0.30-0.50,
//! OOD: 0.55-0.80, both in 0.05 increments), draws 64 fresh grids per value
//! from the task generator over a narrow band [d, d+0.01], and scores each
//! grid 1 only when every predicted cell matches. RNG streams are keyed by
//! (task, difficulty bits, instance), so parallel and serial evaluation
//! orders produce identical numbers.

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::seeding::{rng_for, SeedPart};
use crate::taskgen::{generate, Grid, TaskSpec};
use crate::tensor::Real;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Id,
    Ood,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Id => "id",
            Split::Ood => "ood",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "id" => Ok(Split::Id),
            "ood" => Ok(Split::Ood),
            other => Err(Error::InvalidConfig(format!("unknown split '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepConfig {
    pub split: Split,
    /// Strictly increasing difficulty values in [0, 1].
    pub values: Vec<f64>,
    pub grids_per_value: usize,
    /// Width of the band [d, d+width] handed to the generator per value.
    pub band_width: f64,
    pub eval_seed: u64,
}

impl SweepConfig {
    /// In-distribution band 0.30..=0.50: five values.
    pub fn id(eval_seed: u64) -> Self {
        Self::with_band(Split::Id, 0.30, 5, eval_seed)
    }

    /// Out-of-distribution band 0.55..=0.80: six values.
    pub fn ood(eval_seed: u64) -> Self {
        Self::with_band(Split::Ood, 0.55, 6, eval_seed)
    }

    pub fn for_split(split: Split, eval_seed: u64) -> Self {
        match split {
            Split::Id => Self::id(eval_seed),
            Split::Ood => Self::ood(eval_seed),
        }
    }

    fn with_band(split: Split, start: f64, count: usize, eval_seed: u64) -> Self {
        let values = (0..count)
            .map(|i| (start * 100.0 + 5.0 * i as f64).round() / 100.0)
            .collect();
        Self {
            split,
            values,
            grids_per_value: 64,
            band_width: 0.01,
            eval_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grids_per_value == 0 {
            return Err(Error::InvalidConfig("grids_per_value must be >= 1".into()));
        }
        if self.values.is_empty() {
            return Err(Error::InvalidConfig("no difficulty values".into()));
        }
        for pair in self.values.windows(2) {
            if pair[1] <= pair[0] {
                return Err(Error::InvalidConfig(
                    "difficulty values must be strictly increasing".into(),
                ));
            }
        }
        if self
            .values
            .iter()
            .any(|d| !(0.0..=1.0).contains(d))
        {
            return Err(Error::InvalidConfig(
                "difficulty values must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DifficultyPoint {
    pub difficulty: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TaskResult {
    pub task_id: String,
    pub split: Split,
    pub per_difficulty: Vec<DifficultyPoint>,
    /// Arithmetic mean of the per-difficulty accuracies.
    pub task_accuracy: f64,
}

/// Dense class scores over an `h x w` grid.
#[derive(Clone, Debug)]
pub struct Logits {
    pub h: usize,
    pub w: usize,
    pub k: usize,
    /// Row-major `h x w x k`.
    pub data: Vec<Real>,
}

/// Anything that maps an input grid to per-cell logits.
pub trait Predictor {
    fn predict(&self, input: &Grid) -> Result<Logits>;

    /// Batched prediction over same-size inputs; the default loops.
    fn predict_batch(&self, inputs: &[Grid]) -> Result<Vec<Logits>> {
        inputs.iter().map(|g| self.predict(g)).collect()
    }
}

impl Predictor for ModelParams {
    fn predict(&self, input: &Grid) -> Result<Logits> {
        Ok(self
            .predict_batch(std::slice::from_ref(input))?
            .pop()
            .expect("one logits per input"))
    }

    fn predict_batch(&self, inputs: &[Grid]) -> Result<Vec<Logits>> {
        let pass = self.forward(inputs)?;
        let (h, w) = (inputs[0].height(), inputs[0].width());
        let k = self.config.colors;
        let per = h * w * k;
        let data = pass.tape.data(pass.logits);
        Ok((0..inputs.len())
            .map(|i| Logits {
                h,
                w,
                k,
                data: data[i * per..(i + 1) * per].to_vec(),
            })
            .collect())
    }
}

/// 1 iff the argmax at every cell equals the target; argmax ties resolve to
/// the lowest class index.
pub fn exact_match(logits: &Logits, target: &Grid) -> Result<bool> {
    if logits.h != target.height() || logits.w != target.width() {
        return Err(Error::InvalidShape(format!(
            "logits {}x{} vs target {}x{}",
            logits.h,
            logits.w,
            target.height(),
            target.width()
        )));
    }
    if logits.data.len() != logits.h * logits.w * logits.k {
        return Err(Error::InvalidShape("logits buffer length mismatch".into()));
    }
    for (cell, row) in logits.data.chunks_exact(logits.k).enumerate() {
        let mut best = 0usize;
        for (j, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = j;
            }
        }
        if best != usize::from(target.cells()[cell]) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Run the difficulty sweep for one task. Grids are fresh draws from streams
/// keyed by (task, difficulty, instance) and are never reused from training.
pub fn sweep(
    predictor: &impl Predictor,
    spec: &TaskSpec,
    config: &SweepConfig,
) -> Result<TaskResult> {
    config.validate()?;
    let mut per_difficulty = Vec::with_capacity(config.values.len());
    for &d in &config.values {
        let upper = (d + config.band_width).min(1.0);
        let pairs: Vec<_> = (0..config.grids_per_value)
            .map(|i| {
                let mut rng = rng_for(
                    config.eval_seed,
                    &[
                        SeedPart::Str("eval"),
                        SeedPart::Str(&spec.task_id),
                        SeedPart::Num(d.to_bits()),
                        SeedPart::Num(i as u64),
                    ],
                );
                generate(spec, d, upper, &mut rng)
            })
            .collect::<Result<_>>()?;

        // group same-size grids so the model sees real batches
        let mut groups: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (i, p) in pairs.iter().enumerate() {
            groups
                .entry((p.input.height(), p.input.width()))
                .or_default()
                .push(i);
        }
        let mut hits = 0usize;
        for idxs in groups.values() {
            for chunk in idxs.chunks(8) {
                let inputs: Vec<Grid> =
                    chunk.iter().map(|&i| pairs[i].input.clone()).collect();
                let logits = predictor.predict_batch(&inputs)?;
                for (&i, l) in chunk.iter().zip(&logits) {
                    if exact_match(l, &pairs[i].output)? {
                        hits += 1;
                    }
                }
            }
        }
        per_difficulty.push(DifficultyPoint {
            difficulty: d,
            accuracy: hits as f64 / config.grids_per_value as f64,
        });
    }
    let task_accuracy =
        per_difficulty.iter().map(|p| p.accuracy).sum::<f64>() / per_difficulty.len() as f64;
    Ok(TaskResult {
        task_id: spec.task_id.clone(),
        split: config.split,
        per_difficulty,
        task_accuracy,
    })
}

/// Grade a fixed example list as a single pseudo-difficulty point. Used for
/// ingested datasets, which carry no difficulty axis of their own.
pub fn evaluate_pairs(
    predictor: &impl Predictor,
    task_id: &str,
    pairs: &[crate::taskgen::ExamplePair],
    split: Split,
) -> Result<TaskResult> {
    if pairs.is_empty() {
        return Err(Error::InvalidConfig("no pairs to evaluate".into()));
    }
    let mut hits = 0usize;
    for pair in pairs {
        let logits = predictor.predict(&pair.input)?;
        if exact_match(&logits, &pair.output)? {
            hits += 1;
        }
    }
    let accuracy = hits as f64 / pairs.len() as f64;
    Ok(TaskResult {
        task_id: task_id.to_string(),
        split,
        per_difficulty: vec![DifficultyPoint {
            difficulty: 0.0,
            accuracy,
        }],
        task_accuracy: accuracy,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SplitSummary {
    pub task_ids: Vec<String>,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub median: f64,
}

/// Per-split accuracy vector ordered by task id, plus mean and median.
pub fn aggregate(results: &[TaskResult]) -> Result<SplitSummary> {
    if results.is_empty() {
        return Err(Error::InvalidInput("no task results".into()));
    }
    let mut ordered: Vec<(&str, f64)> = results
        .iter()
        .map(|r| (r.task_id.as_str(), r.task_accuracy))
        .collect();
    ordered.sort_by(|a, b| a.0.cmp(b.0));
    for pair in ordered.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(Error::Contract(format!(
                "duplicate task id '{}' in aggregation",
                pair[0].0
            )));
        }
    }
    let accuracies: Vec<f64> = ordered.iter().map(|&(_, a)| a).collect();
    let mean = accuracies.iter().sum::<f64>() / accuracies.len() as f64;
    let mut sorted = accuracies.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2]) / 2.0
    };
    Ok(SplitSummary {
        task_ids: ordered.into_iter().map(|(id, _)| id.to_string()).collect(),
        accuracies,
        mean,
        median,
    })
}
