//! The per-(layer, block) accuracy table and its accuracy-loss transform.
//!
//! Entries are held as integer micro-units (1e-6 of a fraction), the
//! resolution of the on-disk format. Loss values, row maxima and chromosome
//! sums are therefore exact, and ties compare equal.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::error::{Error, Result};
use crate::fmt::micros_raw;

/// Micro-units per unit fraction.
pub const MICROS: u32 = 1_000_000;

/// Format tag shared by accuracy and loss tables.
pub const TABLE_FORMAT: &str = "ponas-acc-table-v1";

pub(crate) fn to_micros(value: f64) -> u32 {
    (value * f64::from(MICROS)).round() as u32
}

pub(crate) fn from_micros(value: u64) -> f64 {
    value as f64 / f64::from(MICROS)
}

fn argmax_lowest(row: &[u32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn argmin_lowest(row: &[u32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v < row[best] {
            best = i;
        }
    }
    best
}

/// Validation accuracy of every candidate block at every layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AccuracyTable {
    layers: usize,
    candidates: usize,
    micros: Vec<u32>,
}

impl AccuracyTable {
    /// Builds a table from rows of fractions, rounding to micro-units.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let (layers, candidates) = dims(rows)?;
        let mut micros = Vec::with_capacity(layers * candidates);
        for (layer, row) in rows.iter().enumerate() {
            for (candidate, &value) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&value) {
                    return Err(Error::EntryOutOfRange {
                        layer,
                        candidate,
                        value,
                    });
                }
                micros.push(to_micros(value));
            }
        }
        Ok(Self {
            layers,
            candidates,
            micros,
        })
    }

    pub fn from_micros(layers: usize, candidates: usize, micros: Vec<u32>) -> Result<Self> {
        if layers == 0 || candidates == 0 || micros.len() != layers * candidates {
            return Err(Error::malformed(
                "accuracy table",
                format!("{} entries for a {layers}x{candidates} table", micros.len()),
            ));
        }
        if let Some(k) = micros.iter().position(|&m| m > MICROS) {
            return Err(Error::EntryOutOfRange {
                layer: k / candidates,
                candidate: k % candidates,
                value: from_micros(u64::from(micros[k])),
            });
        }
        Ok(Self {
            layers,
            candidates,
            micros,
        })
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn candidates(&self) -> usize {
        self.candidates
    }

    pub fn get(&self, layer: usize, candidate: usize) -> f64 {
        from_micros(u64::from(self.row(layer)[candidate]))
    }

    pub fn row(&self, layer: usize) -> &[u32] {
        &self.micros[layer * self.candidates..(layer + 1) * self.candidates]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u32]> {
        self.micros.chunks(self.candidates)
    }

    pub fn check_dims(&self, layers: usize, candidates: usize) -> Result<()> {
        if self.layers != layers || self.candidates != candidates {
            return Err(Error::DimensionMismatch {
                layers: self.layers,
                candidates: self.candidates,
                expected_layers: layers,
                expected_candidates: candidates,
            });
        }
        Ok(())
    }

    /// Highest-accuracy block of `layer`, lowest index on ties.
    pub fn row_best(&self, layer: usize) -> Result<usize> {
        if layer >= self.layers {
            return Err(Error::LayerOutOfRange {
                layer,
                layers: self.layers,
            });
        }
        Ok(argmax_lowest(self.row(layer)))
    }

    /// The zero-loss startpoint: every layer's best block.
    pub fn best_genes(&self) -> Vec<usize> {
        self.rows().map(argmax_lowest).collect()
    }

    /// Distance of every entry from its row's best entry.
    pub fn to_loss_domain(&self) -> AccuracyLossTable {
        let mut micros = Vec::with_capacity(self.micros.len());
        for row in self.rows() {
            let best = *row.iter().max().unwrap();
            micros.extend(row.iter().map(|&v| best - v));
        }
        AccuracyLossTable {
            layers: self.layers,
            candidates: self.candidates,
            micros,
        }
    }

    pub fn document(&self) -> TableDocument {
        table_document(self.layers, self.candidates, &self.micros, None)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.document()).expect("table serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        match parse_table(text)? {
            Table::Accuracy(t) => Ok(t),
            Table::Loss(_) => Err(Error::malformed(
                "accuracy table",
                "file holds a loss-domain table",
            )),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path.as_ref(), &self.to_json())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&read_text(path.as_ref())?)
    }
}

/// Accuracy loss of every block relative to the best block of its layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AccuracyLossTable {
    layers: usize,
    candidates: usize,
    micros: Vec<u32>,
}

impl AccuracyLossTable {
    /// Builds a loss table from rows of non-negative fractions.
    ///
    /// Rows are not required to contain a zero; tables produced by
    /// [`AccuracyTable::to_loss_domain`] always do.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let (layers, candidates) = dims(rows)?;
        let mut micros = Vec::with_capacity(layers * candidates);
        for (layer, row) in rows.iter().enumerate() {
            for (candidate, &value) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&value) {
                    return Err(Error::LossOutOfRange {
                        layer,
                        candidate,
                        value,
                    });
                }
                micros.push(to_micros(value));
            }
        }
        Ok(Self {
            layers,
            candidates,
            micros,
        })
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn candidates(&self) -> usize {
        self.candidates
    }

    pub fn get(&self, layer: usize, candidate: usize) -> f64 {
        from_micros(u64::from(self.row(layer)[candidate]))
    }

    pub fn micros(&self, layer: usize, candidate: usize) -> u32 {
        self.row(layer)[candidate]
    }

    pub fn row(&self, layer: usize) -> &[u32] {
        &self.micros[layer * self.candidates..(layer + 1) * self.candidates]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u32]> {
        self.micros.chunks(self.candidates)
    }

    /// Lowest-loss block of `layer`, lowest index on ties.
    pub fn row_best(&self, layer: usize) -> Result<usize> {
        if layer >= self.layers {
            return Err(Error::LayerOutOfRange {
                layer,
                layers: self.layers,
            });
        }
        Ok(argmin_lowest(self.row(layer)))
    }

    pub fn best_genes(&self) -> Vec<usize> {
        self.rows().map(argmin_lowest).collect()
    }

    /// Largest-loss block of `layer`, lowest index on ties.
    pub fn row_worst(&self, layer: usize) -> Result<usize> {
        if layer >= self.layers {
            return Err(Error::LayerOutOfRange {
                layer,
                layers: self.layers,
            });
        }
        Ok(argmax_lowest(self.row(layer)))
    }

    /// Maximum loss of each layer, in micro-units.
    pub fn layer_importance_micros(&self) -> Vec<u32> {
        self.rows().map(|r| *r.iter().max().unwrap()).collect()
    }

    /// Maximum loss of each layer.
    pub fn layer_importance(&self) -> Vec<f64> {
        self.layer_importance_micros()
            .into_iter()
            .map(|m| from_micros(u64::from(m)))
            .collect()
    }

    /// Total loss of a gene vector in micro-units. Genes must be in range.
    pub fn total_micros(&self, genes: &[usize]) -> u64 {
        genes
            .iter()
            .enumerate()
            .map(|(l, &g)| u64::from(self.micros[l * self.candidates + g]))
            .sum()
    }

    pub fn document(&self) -> TableDocument {
        table_document(self.layers, self.candidates, &self.micros, Some("loss"))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.document()).expect("table serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        match parse_table(text)? {
            Table::Loss(t) => Ok(t),
            Table::Accuracy(_) => Err(Error::malformed(
                "loss table",
                "file holds an accuracy-domain table",
            )),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path.as_ref(), &self.to_json())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&read_text(path.as_ref())?)
    }
}

/// Either kind of table, as found in a file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Table {
    Accuracy(AccuracyTable),
    Loss(AccuracyLossTable),
}

impl Table {
    /// The loss-domain view, transforming accuracy tables on the way.
    pub fn into_loss(self) -> AccuracyLossTable {
        match self {
            Table::Accuracy(t) => t.to_loss_domain(),
            Table::Loss(t) => t,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        parse_table(&read_text(path.as_ref())?)
    }
}

fn dims(rows: &[Vec<f64>]) -> Result<(usize, usize)> {
    let candidates = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || candidates == 0 {
        return Err(Error::malformed("table", "no layers or no candidates"));
    }
    if let Some(l) = rows.iter().position(|r| r.len() != candidates) {
        return Err(Error::malformed(
            "table",
            format!(
                "row {l} has {} entries, expected {candidates}",
                rows[l].len()
            ),
        ));
    }
    Ok((rows.len(), candidates))
}

/// Serializable form of a table, values in fixed 6-decimal notation.
#[derive(Debug, Serialize)]
pub struct TableDocument {
    format: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    domain: Option<&'static str>,
    layers: usize,
    candidates: usize,
    values: Vec<Vec<Box<RawValue>>>,
}

#[derive(Deserialize)]
struct TableIn {
    format: String,
    #[serde(default)]
    domain: Option<String>,
    layers: usize,
    candidates: usize,
    values: Vec<Vec<f64>>,
}

fn table_document(
    layers: usize,
    candidates: usize,
    micros: &[u32],
    domain: Option<&'static str>,
) -> TableDocument {
    let values = micros
        .chunks(candidates)
        .map(|row| row.iter().map(|&m| micros_raw(u64::from(m))).collect())
        .collect();
    TableDocument {
        format: TABLE_FORMAT,
        domain,
        layers,
        candidates,
        values,
    }
}

/// Parses either an accuracy table or a loss table (`"domain": "loss"`).
pub fn parse_table(text: &str) -> Result<Table> {
    let raw: TableIn = serde_json::from_str(text).map_err(|e| Error::malformed("table", e))?;
    if raw.format != TABLE_FORMAT {
        return Err(Error::malformed(
            "table",
            format!("format {:?}, expected {TABLE_FORMAT:?}", raw.format),
        ));
    }
    if raw.values.len() != raw.layers || raw.values.iter().any(|r| r.len() != raw.candidates) {
        return Err(Error::DimensionMismatch {
            layers: raw.values.len(),
            candidates: raw.values.first().map_or(0, Vec::len),
            expected_layers: raw.layers,
            expected_candidates: raw.candidates,
        });
    }
    match raw.domain.as_deref() {
        None | Some("accuracy") => AccuracyTable::from_rows(&raw.values).map(Table::Accuracy),
        Some("loss") => AccuracyLossTable::from_rows(&raw.values).map(Table::Loss),
        Some(other) => Err(Error::malformed(
            "table",
            format!("unknown domain {other:?}"),
        )),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Shape of a synthetic accuracy table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthProfile {
    /// Each layer prefers one random block; accuracy decays smoothly with
    /// distance from it.
    Peaked,
    /// Independent uniform entries in the base-accuracy band.
    Uniform,
}

const BASE_LOW: f64 = 0.60;
const BASE_HIGH: f64 = 0.75;
const NOISE: f64 = 0.005;
const MAX_DECAY: f64 = 0.03;

/// Deterministic stand-in for a table measured on real data.
pub fn synth_table(
    seed: u64,
    layers: usize,
    candidates: usize,
    profile: SynthProfile,
) -> Result<AccuracyTable> {
    if layers == 0 || candidates == 0 {
        return Err(Error::InvalidConfig(
            "synthetic table needs L, I >= 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut micros = Vec::with_capacity(layers * candidates);
    for _ in 0..layers {
        let base = rng.gen_range(BASE_LOW..=BASE_HIGH);
        match profile {
            SynthProfile::Peaked => {
                let peak = rng.gen_range(0..candidates);
                let decay = rng.gen_range(0.0..MAX_DECAY);
                let span = (candidates.max(2) - 1) as f64;
                for i in 0..candidates {
                    let d = (i as f64 - peak as f64).abs() / span;
                    let noise = rng.gen_range(-NOISE..=NOISE);
                    let v = (base - decay * d * d + noise).clamp(0.0, 1.0);
                    micros.push(to_micros(v));
                }
            }
            SynthProfile::Uniform => {
                for _ in 0..candidates {
                    micros.push(to_micros(rng.gen_range(BASE_LOW..=BASE_HIGH)));
                }
            }
        }
    }
    AccuracyTable::from_micros(layers, candidates, micros)
}
