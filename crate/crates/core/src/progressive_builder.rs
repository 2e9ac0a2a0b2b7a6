//! Layer-by-layer construction of the accuracy table.
//!
//! The meta network uses the largest block everywhere. Layers are then
//! processed in ascending order: each of the candidate blocks is swapped
//! into the current layer, with the best blocks found so far below it and the
//! largest block above it, and the evaluator's accuracy is recorded. The
//! best block of the layer is frozen before moving on.
//!
//! Gradient training is not performed here; an [`Evaluator`] stands in for
//! fine-tuning plus validation. The schedule types are carried as run
//! metadata.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accuracy_table::{to_micros, AccuracyTable};
use crate::cost_model::block_cost;
use crate::error::{Error, Result};
use crate::search_space::{
    decode, ArchitectureSpec, CandidateBlock, Chromosome, LayerSlot, MacroArchitecture,
    LARGEST_BLOCK,
};

/// Validation accuracy of a concrete architecture.
///
/// Implementations must be deterministic and safe to call from several
/// threads at once; the candidates of one layer may be evaluated in parallel.
pub trait Evaluator: Sync {
    fn evaluate(&self, spec: &ArchitectureSpec) -> f64;
}

impl<F> Evaluator for F
where
    F: Fn(&ArchitectureSpec) -> f64 + Sync,
{
    fn evaluate(&self, spec: &ArchitectureSpec) -> f64 {
        self(spec)
    }
}

/// Hyperparameters of the two training stages. Recorded, not executed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoStageSchedule {
    pub meta_epochs: u32,
    pub finetune_epochs_per_layer: u32,
    pub meta_lr: f64,
    pub finetune_lr: f64,
    pub lr_decay_epochs: Vec<u32>,
    pub batch_size: u32,
}

impl Default for TwoStageSchedule {
    fn default() -> Self {
        Self {
            meta_epochs: 50,
            finetune_epochs_per_layer: 3,
            meta_lr: 0.1,
            finetune_lr: 0.001,
            lr_decay_epochs: vec![20, 40],
            batch_size: 256,
        }
    }
}

impl TwoStageSchedule {
    pub fn validate(&self) -> Result<()> {
        let positive = self.meta_epochs > 0
            && self.finetune_epochs_per_layer > 0
            && self.meta_lr > 0.0
            && self.finetune_lr > 0.0
            && self.batch_size > 0
            && self.lr_decay_epochs.iter().all(|&e| e > 0);
        if positive {
            Ok(())
        } else {
            Err(Error::InvalidConfig(
                "schedule values must be positive".into(),
            ))
        }
    }
}

/// Result of [`build_table`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BuildOutcome {
    pub table: AccuracyTable,
    pub best_genes: Chromosome,
    pub evaluations: usize,
}

/// Fills the accuracy table against `evaluator`.
///
/// `threads` caps the parallelism inside one layer; `None` uses the global
/// pool. The output does not depend on it.
pub fn build_table(
    macro_arch: &MacroArchitecture,
    evaluator: &dyn Evaluator,
    threads: Option<usize>,
) -> Result<BuildOutcome> {
    build_table_observed(macro_arch, evaluator, threads, |_, _| {})
}

/// [`build_table`] with a callback invoked after each layer's row is stored.
/// The callback receives the layer index and all rows filled so far.
pub fn build_table_observed<F>(
    macro_arch: &MacroArchitecture,
    evaluator: &dyn Evaluator,
    threads: Option<usize>,
    mut on_layer: F,
) -> Result<BuildOutcome>
where
    F: FnMut(usize, &[Vec<u32>]),
{
    let layers = macro_arch.num_searchable();
    let candidates = macro_arch.num_candidates();
    let pool = match threads {
        Some(n) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?,
        ),
        None => None,
    };

    let mut genes = vec![LARGEST_BLOCK; layers];
    let mut rows: Vec<Vec<u32>> = Vec::with_capacity(layers);
    let mut evaluations = 0;

    for layer in 0..layers {
        let specs = (0..candidates)
            .map(|i| {
                let mut g = genes.clone();
                g[layer] = i;
                decode(&Chromosome::new(g), macro_arch)
            })
            .collect::<Result<Vec<_>>>()?;
        let run = || {
            specs
                .par_iter()
                .map(|s| evaluator.evaluate(s))
                .collect::<Vec<f64>>()
        };
        let accuracies = match &pool {
            Some(p) => p.install(run),
            None => run(),
        };
        evaluations += accuracies.len();

        let mut row = Vec::with_capacity(candidates);
        for (candidate, &value) in accuracies.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::EvaluatorOutOfRange {
                    layer,
                    candidate,
                    value,
                });
            }
            row.push(to_micros(value));
        }
        let mut best = 0;
        for (i, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = i;
            }
        }
        genes[layer] = best;
        rows.push(row);
        on_layer(layer, &rows);
    }

    let table = AccuracyTable::from_micros(layers, candidates, rows.concat())?;
    Ok(BuildOutcome {
        table,
        best_genes: Chromosome::new(genes),
        evaluations,
    })
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seeded accuracy model: each layer adds a utility for its block, plus a
/// small deterministic perturbation keyed on the whole gene vector.
///
/// Larger blocks tend to score higher, but how much each of kernel size,
/// expansion and squeeze-excite matters is drawn per layer, as is the
/// layer's overall weight.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticEvaluator {
    seed: u64,
    base: f64,
    noise: f64,
    utilities: Vec<Vec<f64>>,
}

impl SyntheticEvaluator {
    pub const BASE_ACCURACY: f64 = 0.76;
    pub const NOISE: f64 = 0.0005;

    pub fn new(seed: u64, layers: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let utilities = (0..layers)
            .map(|_| {
                let weight = rng.gen_range(0.001..0.012);
                let (wk, we, ws) = (rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>() * 0.5);
                let raw: Vec<f64> = (0..LARGEST_BLOCK + 1)
                    .map(|i| {
                        let b = CandidateBlock::from_index(i).unwrap();
                        let k = f64::from(b.kernel() - 3) / 4.0;
                        let e = f64::from(b.expansion() - 3) / 3.0;
                        let s = f64::from(u8::from(b.se()));
                        wk * k + we * e + ws * s + rng.gen_range(0.0..0.15)
                    })
                    .collect();
                let hi = raw.iter().cloned().fold(f64::MIN, f64::max);
                let lo = raw.iter().cloned().fold(f64::MAX, f64::min);
                let span = (hi - lo).max(f64::EPSILON);
                raw.iter().map(|r| -weight * (hi - r) / span).collect()
            })
            .collect();
        Self {
            seed,
            base: Self::BASE_ACCURACY,
            noise: Self::NOISE,
            utilities,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Accuracy without the perturbation term.
    pub fn expected_accuracy(&self, genes: &[usize]) -> f64 {
        let total: f64 = genes
            .iter()
            .zip(&self.utilities)
            .map(|(&g, row)| row[g])
            .sum();
        self.base + total
    }

    pub fn accuracy(&self, genes: &[usize]) -> f64 {
        let mut h = splitmix64(self.seed);
        for &g in genes {
            h = splitmix64(h ^ g as u64);
        }
        let unit = (h >> 11) as f64 / (1u64 << 53) as f64;
        (self.expected_accuracy(genes) + self.noise * (2.0 * unit - 1.0)).clamp(0.0, 1.0)
    }
}

impl Evaluator for SyntheticEvaluator {
    fn evaluate(&self, spec: &ArchitectureSpec) -> f64 {
        self.accuracy(spec.genes().genes())
    }
}

/// Rounds of block orderings; every block is trained once per round.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FairnessSchedule {
    pub rounds: Vec<Vec<usize>>,
}

pub fn fairness_schedule(seed: u64, candidates: usize, rounds: usize) -> Result<FairnessSchedule> {
    if rounds == 0 {
        return Err(Error::InvalidConfig(
            "fairness schedule needs at least one round".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rounds = (0..rounds)
        .map(|_| {
            let mut order: Vec<usize> = (0..candidates).collect();
            order.shuffle(&mut rng);
            order
        })
        .collect();
    Ok(FairnessSchedule { rounds })
}

/// One parameter tensor of the largest block and the sub-range kept for a
/// smaller block. `ranges` holds `(start, len)` per dimension; `None` means
/// the tensor is dropped.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TensorCrop {
    pub name: &'static str,
    pub source_shape: Vec<u64>,
    pub ranges: Option<Vec<(u64, u64)>>,
}

impl TensorCrop {
    pub fn target_shape(&self) -> Option<Vec<u64>> {
        self.ranges
            .as_ref()
            .map(|r| r.iter().map(|&(_, len)| len).collect())
    }

    pub fn source_len(&self) -> u64 {
        self.source_shape.iter().product()
    }

    pub fn target_len(&self) -> u64 {
        self.target_shape().map_or(0, |s| s.iter().product())
    }
}

/// How the weights of a smaller block are cut out of the largest block's
/// weights at one slot.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TensorShapeCrop {
    #[serde(skip)]
    pub target: CandidateBlock,
    pub tensors: Vec<TensorCrop>,
}

impl TensorShapeCrop {
    pub fn source_params(&self) -> u64 {
        self.tensors.iter().map(TensorCrop::source_len).sum()
    }

    pub fn target_params(&self) -> u64 {
        self.tensors.iter().map(TensorCrop::target_len).sum()
    }
}

fn full(shape: &[u64]) -> Vec<(u64, u64)> {
    shape.iter().map(|&d| (0, d)).collect()
}

/// Crop plan for `target` at `slot`. Channel crops keep the leading
/// channels, kernel crops keep the centered window. Normalization tensors
/// are listed only when `include_norm` is set.
pub fn crop_plan(
    target: CandidateBlock,
    slot: &LayerSlot,
    include_norm: bool,
) -> Result<TensorShapeCrop> {
    // Validates the slot the same way the cost model does.
    block_cost(target, slot)?;
    let source = CandidateBlock::largest();
    let (cin, cout) = (u64::from(slot.in_channels), u64::from(slot.out_channels));
    let big_exp = u64::from(source.expansion()) * cin;
    let big_red = big_exp.div_ceil(4);
    let big_k = u64::from(source.kernel());
    let exp = u64::from(target.expansion()) * cin;
    let red = exp.div_ceil(4);
    let k = u64::from(target.kernel());
    let offset = (big_k - k) / 2;

    let crop = |name, shape: Vec<u64>, ranges: Option<Vec<(u64, u64)>>| TensorCrop {
        name,
        source_shape: shape,
        ranges,
    };
    let se = target.se();
    let mut tensors = vec![crop(
        "expand.weight",
        vec![big_exp, cin, 1, 1],
        Some(vec![(0, exp), (0, cin), (0, 1), (0, 1)]),
    )];
    if include_norm {
        tensors.push(crop(
            "expand.norm",
            vec![2, big_exp],
            Some(vec![(0, 2), (0, exp)]),
        ));
    }
    tensors.push(crop(
        "depthwise.weight",
        vec![big_exp, 1, big_k, big_k],
        Some(vec![(0, exp), (0, 1), (offset, k), (offset, k)]),
    ));
    if include_norm {
        tensors.push(crop(
            "depthwise.norm",
            vec![2, big_exp],
            Some(vec![(0, 2), (0, exp)]),
        ));
    }
    tensors.extend([
        crop(
            "se.reduce.weight",
            vec![big_red, big_exp],
            se.then(|| vec![(0, red), (0, exp)]),
        ),
        crop("se.reduce.bias", vec![big_red], se.then(|| vec![(0, red)])),
        crop(
            "se.expand.weight",
            vec![big_exp, big_red],
            se.then(|| vec![(0, exp), (0, red)]),
        ),
        crop("se.expand.bias", vec![big_exp], se.then(|| vec![(0, exp)])),
        crop(
            "project.weight",
            vec![cout, big_exp, 1, 1],
            Some(vec![(0, cout), (0, exp), (0, 1), (0, 1)]),
        ),
    ]);
    if include_norm {
        let shape = vec![2, cout];
        let ranges = full(&shape);
        tensors.push(crop("project.norm", shape, Some(ranges)));
    }
    Ok(TensorShapeCrop { target, tensors })
}
