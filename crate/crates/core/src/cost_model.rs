//! Analytic FLOPs and parameter counting.
//!
//! FLOPs are multiply-accumulates. Every convolution is followed by a
//! normalization layer with two parameters per channel; squeeze-excite uses
//! a reduction ratio of 4 on the expanded channels, with biases. Pooling,
//! activations and residual additions are free. All arithmetic is integer.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::search_space::{
    ArchitectureSpec, CandidateBlock, FixedBlock, LayerSlot, MacroArchitecture, ResolvedBlock,
    NUM_CANDIDATES,
};

const SE_REDUCTION: u64 = 4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CostReport {
    pub flops: u64,
    pub params: u64,
}

impl CostReport {
    pub const ZERO: CostReport = CostReport {
        flops: 0,
        params: 0,
    };

    pub fn new(flops: u64, params: u64) -> Self {
        Self { flops, params }
    }

    pub fn get(&self, metric: Metric) -> u64 {
        match metric {
            Metric::Flops => self.flops,
            Metric::Params => self.params,
        }
    }
}

impl Add for CostReport {
    type Output = CostReport;

    fn add(self, rhs: CostReport) -> CostReport {
        CostReport {
            flops: self.flops + rhs.flops,
            params: self.params + rhs.params,
        }
    }
}

impl AddAssign for CostReport {
    fn add_assign(&mut self, rhs: CostReport) {
        *self = *self + rhs;
    }
}

impl Sum for CostReport {
    fn sum<I: Iterator<Item = CostReport>>(iter: I) -> CostReport {
        iter.fold(CostReport::ZERO, Add::add)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Flops,
    Params,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Flops => "flops",
            Metric::Params => "params",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "flops" => Ok(Metric::Flops),
            "params" => Ok(Metric::Params),
            other => Err(Error::malformed(
                "metric",
                format!("{other:?} is not flops or params"),
            )),
        }
    }
}

/// Upper bound on one cost metric.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Constraint {
    metric: Metric,
    ceiling: u64,
}

impl Constraint {
    pub fn new(metric: Metric, ceiling: u64) -> Result<Self> {
        if ceiling == 0 {
            return Err(Error::NonPositiveCeiling);
        }
        Ok(Self { metric, ceiling })
    }

    /// A ceiling no architecture can reach.
    pub fn unbounded(metric: Metric) -> Self {
        Self {
            metric,
            ceiling: 1 << 62,
        }
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn ceiling(&self) -> u64 {
        self.ceiling
    }

    pub fn admits(&self, cost: &CostReport) -> bool {
        cost.get(self.metric) <= self.ceiling
    }
}

fn mbconv_cost(kernel: u32, expansion: u32, se: bool, slot: &LayerSlot) -> Result<CostReport> {
    slot.validate()?;
    let (h, cin, cout) = (
        u64::from(slot.input_resolution),
        u64::from(slot.in_channels),
        u64::from(slot.out_channels),
    );
    let hout = u64::from(slot.output_resolution());
    let (k, e) = (u64::from(kernel), u64::from(expansion));
    let cexp = e * cin;

    let mut c = CostReport::ZERO;
    if e != 1 {
        c.flops += h * h * cin * cexp;
        c.params += cin * cexp + 2 * cexp;
    }
    c.flops += hout * hout * cexp * k * k;
    c.params += cexp * k * k + 2 * cexp;
    if se {
        let r = cexp.div_ceil(SE_REDUCTION);
        c.flops += 2 * cexp * r;
        c.params += 2 * cexp * r + r + cexp;
    }
    c.flops += hout * hout * cexp * cout;
    c.params += cexp * cout + 2 * cout;
    Ok(c)
}

/// Cost of a candidate MBConv block placed in `slot`.
pub fn block_cost(block: CandidateBlock, slot: &LayerSlot) -> Result<CostReport> {
    mbconv_cost(block.kernel(), block.expansion(), block.se(), slot)
}

/// Cost of a non-searchable layer.
pub fn fixed_block_cost(block: FixedBlock, slot: &LayerSlot) -> Result<CostReport> {
    slot.validate()?;
    let (cin, cout) = (u64::from(slot.in_channels), u64::from(slot.out_channels));
    let hout = u64::from(slot.output_resolution());
    Ok(match block {
        FixedBlock::StemConv { kernel } => {
            let k2 = u64::from(kernel) * u64::from(kernel);
            CostReport::new(hout * hout * cin * k2 * cout, cin * cout * k2 + 2 * cout)
        }
        FixedBlock::MbConvE1 { kernel } => return mbconv_cost(kernel, 1, false, slot),
        FixedBlock::HeadConv => CostReport::new(hout * hout * cin * cout, cin * cout + 2 * cout),
        FixedBlock::AvgPool { .. } => CostReport::ZERO,
        FixedBlock::FullyConnected => CostReport::new(cin * cout, cin * cout + cout),
    })
}

/// Sum of the per-slot costs of a decoded architecture.
pub fn architecture_cost(spec: &ArchitectureSpec) -> Result<CostReport> {
    spec.slots()
        .iter()
        .map(|s| {
            let slot = s.layer_slot();
            match s.block {
                ResolvedBlock::Candidate(b) => block_cost(b, &slot),
                ResolvedBlock::Fixed(b) => fixed_block_cost(b, &slot),
            }
        })
        .sum()
}

pub fn satisfies(spec: &ArchitectureSpec, constraint: &Constraint) -> Result<bool> {
    Ok(constraint.admits(&architecture_cost(spec)?))
}

/// Precomputed additive cost model: a constant for the fixed layers plus one
/// cost per (layer, block). Lets the search price a chromosome with L lookups.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerCostTable {
    fixed: CostReport,
    blocks: Vec<Vec<CostReport>>,
}

/// On-disk format tag for [`LayerCostTable`].
pub const COST_TABLE_FORMAT: &str = "ponas-cost-table-v1";

#[derive(Serialize, Deserialize)]
struct CostTableFile {
    format: String,
    fixed: CostReport,
    blocks: Vec<Vec<CostReport>>,
}

impl LayerCostTable {
    pub fn new(fixed: CostReport, blocks: Vec<Vec<CostReport>>) -> Result<Self> {
        let width = blocks.first().map_or(0, Vec::len);
        if blocks.is_empty() || width == 0 {
            return Err(Error::malformed("cost table", "no layers or no candidates"));
        }
        if let Some(l) = blocks.iter().position(|row| row.len() != width) {
            return Err(Error::malformed(
                "cost table",
                format!(
                    "layer {l} has {} candidates, expected {width}",
                    blocks[l].len()
                ),
            ));
        }
        Ok(Self { fixed, blocks })
    }

    pub fn from_macro(macro_arch: &MacroArchitecture) -> Result<Self> {
        let mut fixed = CostReport::ZERO;
        for slot in macro_arch.slots() {
            if let Some(b) = slot.fixed_block() {
                fixed += fixed_block_cost(b, slot)?;
            }
        }
        let blocks = (0..macro_arch.num_searchable())
            .map(|l| {
                let slot = macro_arch.searchable_slot(l).unwrap();
                (0..NUM_CANDIDATES)
                    .map(|i| block_cost(CandidateBlock::from_index(i).unwrap(), slot))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { fixed, blocks })
    }

    pub fn fixed(&self) -> CostReport {
        self.fixed
    }

    pub fn block(&self, layer: usize, candidate: usize) -> CostReport {
        self.blocks[layer][candidate]
    }

    pub fn layers(&self) -> usize {
        self.blocks.len()
    }

    pub fn candidates(&self) -> usize {
        self.blocks[0].len()
    }

    /// Cost of a gene vector. Genes must already be in range.
    pub fn cost(&self, genes: &[usize]) -> CostReport {
        genes
            .iter()
            .zip(&self.blocks)
            .fold(self.fixed, |acc, (&g, row)| acc + row[g])
    }

    pub fn metric_cost(&self, genes: &[usize], metric: Metric) -> u64 {
        genes
            .iter()
            .zip(&self.blocks)
            .fold(self.fixed.get(metric), |acc, (&g, row)| {
                acc + row[g].get(metric)
            })
    }

    /// Per-layer cheapest block for `metric`, lowest index on ties.
    pub fn cheapest_genes(&self, metric: Metric) -> Vec<usize> {
        self.blocks
            .iter()
            .map(|row| {
                (0..row.len())
                    .min_by_key(|&i| (row[i].get(metric), i))
                    .unwrap()
            })
            .collect()
    }

    pub fn cheapest(&self, metric: Metric) -> u64 {
        self.metric_cost(&self.cheapest_genes(metric), metric)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CostTableFile =
            serde_json::from_str(text).map_err(|e| Error::malformed("cost table", e))?;
        if file.format != COST_TABLE_FORMAT {
            return Err(Error::malformed(
                "cost table",
                format!("format {:?}, expected {COST_TABLE_FORMAT:?}", file.format),
            ));
        }
        Self::new(file.fixed, file.blocks)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&CostTableFile {
            format: COST_TABLE_FORMAT.to_string(),
            fixed: self.fixed,
            blocks: self.blocks.clone(),
        })
        .expect("cost table serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search_space::{decode, default_macro, Chromosome};

    #[test]
    fn mbconv_e1_slot_golden() {
        let slot = LayerSlot::fixed(FixedBlock::MbConvE1 { kernel: 3 }, 112, 32, 16, 1);
        let c = fixed_block_cost(FixedBlock::MbConvE1 { kernel: 3 }, &slot).unwrap();
        assert_eq!(c, CostReport::new(10_035_200, 896));
    }

    #[test]
    fn degenerate_slot() {
        let slot = LayerSlot::searchable(1, 1, 1, 1);
        let c = block_cost(CandidateBlock::new(3, 3, false).unwrap(), &slot).unwrap();
        assert_eq!(c.flops, 33);
    }

    #[test]
    fn se_adds_cost() {
        let slot = LayerSlot::searchable(28, 40, 40, 1);
        let off = block_cost(CandidateBlock::new(5, 6, false).unwrap(), &slot).unwrap();
        let on = block_cost(CandidateBlock::new(5, 6, true).unwrap(), &slot).unwrap();
        assert!(on.flops > off.flops);
        assert!(on.params > off.params);
    }

    #[test]
    fn zero_shape_rejected() {
        let slot = LayerSlot::searchable(0, 16, 32, 1);
        assert!(block_cost(CandidateBlock::largest(), &slot).is_err());
        let slot = LayerSlot::searchable(14, 16, 32, 3);
        assert!(block_cost(CandidateBlock::largest(), &slot).is_err());
    }

    #[test]
    fn stem_and_classifier() {
        let m = default_macro();
        let stem = &m.slots()[0];
        let c = fixed_block_cost(stem.fixed_block().unwrap(), stem).unwrap();
        assert_eq!(c, CostReport::new(10_838_016, 3 * 32 * 9 + 2 * 32));
        let fc = m.slots().last().unwrap();
        let c = fixed_block_cost(fc.fixed_block().unwrap(), fc).unwrap();
        assert_eq!(c, CostReport::new(1_280_000, 1_281_000));
        let pool = &m.slots()[m.slots().len() - 2];
        assert_eq!(
            fixed_block_cost(pool.fixed_block().unwrap(), pool).unwrap(),
            CostReport::ZERO
        );
        let head = &m.slots()[m.slots().len() - 3];
        assert_eq!(
            fixed_block_cost(head.fixed_block().unwrap(), head).unwrap(),
            CostReport::new(49 * 320 * 1280, 320 * 1280 + 2 * 1280)
        );
    }

    #[test]
    fn constraint_boundary() {
        let m = default_macro();
        let spec = decode(&Chromosome::uniform(19, 0), &m).unwrap();
        let flops = architecture_cost(&spec).unwrap().flops;
        assert!(satisfies(&spec, &Constraint::new(Metric::Flops, flops).unwrap()).unwrap());
        assert!(!satisfies(&spec, &Constraint::new(Metric::Flops, flops - 1).unwrap()).unwrap());
        assert!(satisfies(&spec, &Constraint::unbounded(Metric::Params)).unwrap());
        assert!(matches!(
            Constraint::new(Metric::Flops, 0),
            Err(Error::NonPositiveCeiling)
        ));
    }

    #[test]
    fn layer_table_matches_architecture_cost() {
        let m = default_macro();
        let table = LayerCostTable::from_macro(&m).unwrap();
        let genes: Vec<usize> = (0..19).map(|l| (l * 7) % 12).collect();
        let spec = decode(&Chromosome::new(genes.clone()), &m).unwrap();
        assert_eq!(table.cost(&genes), architecture_cost(&spec).unwrap());
        assert_eq!(table.cheapest_genes(Metric::Flops), vec![0; 19]);
        assert_eq!(
            table.metric_cost(&genes, Metric::Params),
            table.cost(&genes).params
        );
    }

    #[test]
    fn cost_table_json_round_trip() {
        let t = LayerCostTable::new(
            CostReport::new(10, 1),
            vec![vec![CostReport::new(1, 1), CostReport::new(2, 3)]; 3],
        )
        .unwrap();
        assert_eq!(LayerCostTable::from_json(&t.to_json()).unwrap(), t);
        assert!(LayerCostTable::from_json(
            r#"{"format":"x","fixed":{"flops":0,"params":0},"blocks":[[]]}"#
        )
        .is_err());
    }

    #[test]
    fn ragged_cost_table_rejected() {
        let rows = vec![vec![CostReport::ZERO; 3], vec![CostReport::ZERO; 2]];
        assert!(LayerCostTable::new(CostReport::ZERO, rows).is_err());
    }
}
