//! Candidate-block vocabulary, the fixed macro-architecture skeleton and the
//! chromosome encoding of a specialized network.
//!
//! Every searchable layer picks one of twelve MBConv configurations
//! (kernel {3,5,7} x expansion {3,6} x squeeze-excite on/off). Blocks are
//! indexed kernel-major, then expansion, then SE, so index 0 is the cheapest
//! block and index 11 is the largest one.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of candidate blocks per searchable layer.
pub const NUM_CANDIDATES: usize = 12;

/// Canonical index of the largest block (k7, e6, SE).
pub const LARGEST_BLOCK: usize = 11;

/// Identifier written into architecture files for [`default_macro`].
pub const MACRO_NAME: &str = "ponas-v1";

const KERNELS: [u32; 3] = [3, 5, 7];
const EXPANSIONS: [u32; 2] = [3, 6];

/// One MBConv configuration selectable at a searchable layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CandidateBlock {
    kernel: u32,
    expansion: u32,
    se: bool,
}

impl CandidateBlock {
    pub fn new(kernel: u32, expansion: u32, se: bool) -> Result<Self> {
        if !KERNELS.contains(&kernel) {
            return Err(Error::InvalidShape(format!(
                "kernel {kernel} is not one of {KERNELS:?}"
            )));
        }
        if !EXPANSIONS.contains(&expansion) {
            return Err(Error::InvalidShape(format!(
                "expansion {expansion} is not one of {EXPANSIONS:?}"
            )));
        }
        Ok(Self {
            kernel,
            expansion,
            se,
        })
    }

    pub fn from_index(index: usize) -> Option<Self> {
        if index >= NUM_CANDIDATES {
            return None;
        }
        Some(Self {
            kernel: KERNELS[index / 4],
            expansion: EXPANSIONS[(index / 2) % 2],
            se: index % 2 == 1,
        })
    }

    /// The block every layer of the meta network uses.
    pub fn largest() -> Self {
        Self {
            kernel: 7,
            expansion: 6,
            se: true,
        }
    }

    pub fn index(&self) -> usize {
        let kernel_rank = KERNELS.iter().position(|&k| k == self.kernel).unwrap();
        let expansion_rank = EXPANSIONS
            .iter()
            .position(|&e| e == self.expansion)
            .unwrap();
        kernel_rank * 4 + expansion_rank * 2 + usize::from(self.se)
    }

    pub fn kernel(&self) -> u32 {
        self.kernel
    }

    pub fn expansion(&self) -> u32 {
        self.expansion
    }

    pub fn se(&self) -> bool {
        self.se
    }
}

impl fmt::Display for CandidateBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "MBConv-E{}-{}x{}",
            self.expansion, self.kernel, self.kernel
        )?;
        if self.se {
            f.write_str("-SE")?;
        }
        Ok(())
    }
}

/// All twelve candidate blocks in canonical index order.
pub fn enumerate_candidate_blocks() -> Vec<CandidateBlock> {
    (0..NUM_CANDIDATES)
        .map(|i| CandidateBlock::from_index(i).unwrap())
        .collect()
}

/// Non-searchable layers of the macro-architecture.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FixedBlock {
    /// Plain k x k convolution followed by normalization.
    StemConv {
        kernel: u32,
    },
    /// MBConv without the expansion convolution.
    MbConvE1 {
        kernel: u32,
    },
    /// 1x1 convolution followed by normalization.
    HeadConv,
    /// Global k x k average pooling.
    AvgPool {
        kernel: u32,
    },
    FullyConnected,
}

impl FixedBlock {
    pub fn name(&self) -> &'static str {
        match self {
            FixedBlock::StemConv { .. } => "stem_conv",
            FixedBlock::MbConvE1 { .. } => "mbconv_e1",
            FixedBlock::HeadConv => "head_conv",
            FixedBlock::AvgPool { .. } => "avg_pool",
            FixedBlock::FullyConnected => "fully_connected",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SlotKind {
    Searchable,
    Fixed(FixedBlock),
}

/// Shape and placement of one layer of the macro-architecture.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LayerSlot {
    pub input_resolution: u32,
    pub in_channels: u32,
    pub out_channels: u32,
    pub stride: u32,
    pub kind: SlotKind,
}

impl LayerSlot {
    pub fn searchable(
        input_resolution: u32,
        in_channels: u32,
        out_channels: u32,
        stride: u32,
    ) -> Self {
        Self {
            input_resolution,
            in_channels,
            out_channels,
            stride,
            kind: SlotKind::Searchable,
        }
    }

    pub fn fixed(
        block: FixedBlock,
        input_resolution: u32,
        in_channels: u32,
        out_channels: u32,
        stride: u32,
    ) -> Self {
        Self {
            input_resolution,
            in_channels,
            out_channels,
            stride,
            kind: SlotKind::Fixed(block),
        }
    }

    pub fn is_searchable(&self) -> bool {
        matches!(self.kind, SlotKind::Searchable)
    }

    pub fn fixed_block(&self) -> Option<FixedBlock> {
        match self.kind {
            SlotKind::Searchable => None,
            SlotKind::Fixed(block) => Some(block),
        }
    }

    /// Spatial side after this slot. Pooling and the classifier collapse the
    /// feature map to 1x1.
    pub fn output_resolution(&self) -> u32 {
        match self.kind {
            SlotKind::Fixed(FixedBlock::AvgPool { .. })
            | SlotKind::Fixed(FixedBlock::FullyConnected) => 1,
            _ => self.input_resolution / self.stride.max(1),
        }
    }

    /// Checks positivity, the stride domain and exact halving for stride 2.
    pub fn validate(&self) -> Result<()> {
        if self.input_resolution == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::InvalidShape(format!(
                "slot has a zero dimension: {}x{} -> {}",
                self.input_resolution, self.in_channels, self.out_channels
            )));
        }
        if !matches!(self.stride, 1 | 2) {
            return Err(Error::InvalidShape(format!(
                "stride {} not in {{1, 2}}",
                self.stride
            )));
        }
        if self.stride == 2 && !self.input_resolution.is_multiple_of(2) {
            return Err(Error::InvalidShape(format!(
                "stride 2 on odd resolution {}",
                self.input_resolution
            )));
        }
        Ok(())
    }
}

/// Ordered list of slots: a fixed stem, the searchable body and a fixed head.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MacroArchitecture {
    name: String,
    slots: Vec<LayerSlot>,
    searchable: Vec<usize>,
    num_candidates: usize,
}

impl MacroArchitecture {
    /// Builds a macro-architecture after checking that channels and
    /// resolutions chain from slot to slot.
    pub fn new(name: impl Into<String>, slots: Vec<LayerSlot>) -> Result<Self> {
        for (j, slot) in slots.iter().enumerate() {
            slot.validate()?;
            if j > 0 {
                let prev = &slots[j - 1];
                if slot.in_channels != prev.out_channels {
                    return Err(Error::InvalidShape(format!(
                        "slot {j} takes {} channels but slot {} produces {}",
                        slot.in_channels,
                        j - 1,
                        prev.out_channels
                    )));
                }
                if slot.input_resolution != prev.output_resolution() {
                    return Err(Error::InvalidShape(format!(
                        "slot {j} expects resolution {} but slot {} produces {}",
                        slot.input_resolution,
                        j - 1,
                        prev.output_resolution()
                    )));
                }
            }
        }
        let searchable = slots
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_searchable())
            .map(|(j, _)| j)
            .collect();
        Ok(Self {
            name: name.into(),
            slots,
            searchable,
            num_candidates: NUM_CANDIDATES,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn slots(&self) -> &[LayerSlot] {
        &self.slots
    }

    /// Number of searchable layers, L.
    pub fn num_searchable(&self) -> usize {
        self.searchable.len()
    }

    /// Number of candidate blocks per layer, I.
    pub fn num_candidates(&self) -> usize {
        self.num_candidates
    }

    /// Slot-list positions of the searchable layers, in layer order.
    pub fn searchable_positions(&self) -> &[usize] {
        &self.searchable
    }

    pub fn searchable_slot(&self, layer: usize) -> Option<&LayerSlot> {
        self.searchable.get(layer).map(|&j| &self.slots[j])
    }
}

/// The 224x224 ImageNet macro-architecture with 19 searchable layers.
///
/// The last body row (7x7x320 -> 1280) is a fixed 1x1 head convolution, not a
/// searchable layer.
pub fn default_macro() -> MacroArchitecture {
    // (input resolution, in, out, repeat, first stride)
    const BODY: [(u32, u32, u32, u32, u32); 9] = [
        (112, 16, 32, 1, 2),
        (56, 32, 32, 1, 1),
        (56, 32, 40, 1, 2),
        (28, 40, 40, 3, 1),
        (28, 40, 80, 1, 2),
        (14, 80, 96, 4, 1),
        (14, 96, 96, 3, 1),
        (14, 96, 192, 1, 2),
        (7, 192, 320, 4, 1),
    ];

    let mut slots = vec![
        LayerSlot::fixed(FixedBlock::StemConv { kernel: 3 }, 224, 3, 32, 2),
        LayerSlot::fixed(FixedBlock::MbConvE1 { kernel: 3 }, 112, 32, 16, 1),
    ];
    for (resolution, cin, cout, repeat, stride) in BODY {
        slots.push(LayerSlot::searchable(resolution, cin, cout, stride));
        let next = resolution / stride;
        for _ in 1..repeat {
            slots.push(LayerSlot::searchable(next, cout, cout, 1));
        }
    }
    slots.push(LayerSlot::fixed(FixedBlock::HeadConv, 7, 320, 1280, 1));
    slots.push(LayerSlot::fixed(
        FixedBlock::AvgPool { kernel: 7 },
        7,
        1280,
        1280,
        1,
    ));
    slots.push(LayerSlot::fixed(
        FixedBlock::FullyConnected,
        1,
        1280,
        1000,
        1,
    ));

    MacroArchitecture::new(MACRO_NAME, slots).expect("built-in macro-architecture is consistent")
}

/// Block indices of one specialized network, one gene per searchable layer.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Chromosome(Vec<usize>);

impl Chromosome {
    pub fn new(genes: Vec<usize>) -> Self {
        Self(genes)
    }

    pub fn uniform(len: usize, gene: usize) -> Self {
        Self(vec![gene; len])
    }

    pub fn genes(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_genes(self) -> Vec<usize> {
        self.0
    }

    /// Checks length against `layers` and every gene against `candidates`.
    pub fn validate(&self, layers: usize, candidates: usize) -> Result<()> {
        if self.0.len() != layers {
            return Err(Error::GeneCount {
                expected: layers,
                actual: self.0.len(),
            });
        }
        if let Some((layer, &gene)) = self.0.iter().enumerate().find(|(_, &g)| g >= candidates) {
            return Err(Error::GeneOutOfRange {
                layer,
                gene,
                candidates,
            });
        }
        Ok(())
    }
}

impl From<Vec<usize>> for Chromosome {
    fn from(genes: Vec<usize>) -> Self {
        Self(genes)
    }
}

impl fmt::Display for Chromosome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, g) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{g}")?;
        }
        Ok(())
    }
}

impl FromStr for Chromosome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.split(',')
            .map(|g| {
                g.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::malformed("gene list", format!("{g:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResolvedBlock {
    Candidate(CandidateBlock),
    Fixed(FixedBlock),
}

/// A slot of a decoded architecture with its concrete block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ResolvedSlot {
    pub slot_index: usize,
    pub block: ResolvedBlock,
    pub in_channels: u32,
    pub out_channels: u32,
    pub stride: u32,
    pub resolution: u32,
}

impl ResolvedSlot {
    pub fn layer_slot(&self) -> LayerSlot {
        LayerSlot {
            input_resolution: self.resolution,
            in_channels: self.in_channels,
            out_channels: self.out_channels,
            stride: self.stride,
            kind: match self.block {
                ResolvedBlock::Candidate(_) => SlotKind::Searchable,
                ResolvedBlock::Fixed(b) => SlotKind::Fixed(b),
            },
        }
    }
}

/// Fully concrete architecture: every slot carries its block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArchitectureSpec {
    macro_name: String,
    genes: Chromosome,
    slots: Vec<ResolvedSlot>,
}

impl ArchitectureSpec {
    pub fn macro_name(&self) -> &str {
        &self.macro_name
    }

    pub fn genes(&self) -> &Chromosome {
        &self.genes
    }

    pub fn slots(&self) -> &[ResolvedSlot] {
        &self.slots
    }

    /// Re-derives the gene vector from the candidate blocks in slot order.
    pub fn extract_genes(&self) -> Chromosome {
        Chromosome(
            self.slots
                .iter()
                .filter_map(|s| match s.block {
                    ResolvedBlock::Candidate(b) => Some(b.index()),
                    ResolvedBlock::Fixed(_) => None,
                })
                .collect(),
        )
    }

    pub fn to_json(&self, expanded: bool) -> ArchitectureJson {
        let slots = expanded.then(|| {
            self.slots
                .iter()
                .filter_map(|s| match s.block {
                    ResolvedBlock::Candidate(b) => Some(SlotJson {
                        slot_index: s.slot_index,
                        kernel: b.kernel(),
                        expansion: b.expansion(),
                        se: b.se(),
                        in_ch: s.in_channels,
                        out_ch: s.out_channels,
                        stride: s.stride,
                        resolution: s.resolution,
                    }),
                    ResolvedBlock::Fixed(_) => None,
                })
                .collect()
        });
        ArchitectureJson {
            macro_name: self.macro_name.clone(),
            genes: self.genes.0.clone(),
            slots,
        }
    }
}

/// Replaces every searchable slot of `macro_arch` with the block named by
/// the corresponding gene.
pub fn decode(chromosome: &Chromosome, macro_arch: &MacroArchitecture) -> Result<ArchitectureSpec> {
    chromosome.validate(macro_arch.num_searchable(), macro_arch.num_candidates())?;
    let mut genes = chromosome.genes().iter();
    let slots = macro_arch
        .slots()
        .iter()
        .enumerate()
        .map(|(slot_index, slot)| {
            let block = match slot.kind {
                SlotKind::Searchable => {
                    let g = *genes.next().expect("length validated");
                    ResolvedBlock::Candidate(CandidateBlock::from_index(g).expect("gene validated"))
                }
                SlotKind::Fixed(b) => ResolvedBlock::Fixed(b),
            };
            ResolvedSlot {
                slot_index,
                block,
                in_channels: slot.in_channels,
                out_channels: slot.out_channels,
                stride: slot.stride,
                resolution: slot.input_resolution,
            }
        })
        .collect();
    Ok(ArchitectureSpec {
        macro_name: macro_arch.name().to_string(),
        genes: chromosome.clone(),
        slots,
    })
}

/// Serialized architecture: `{"macro": "ponas-v1", "genes": [...]}` with an
/// optional per-slot listing of the searchable layers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureJson {
    #[serde(rename = "macro")]
    pub macro_name: String,
    pub genes: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slots: Option<Vec<SlotJson>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotJson {
    pub slot_index: usize,
    pub kernel: u32,
    pub expansion: u32,
    pub se: bool,
    pub in_ch: u32,
    pub out_ch: u32,
    pub stride: u32,
    pub resolution: u32,
}

impl ArchitectureJson {
    pub fn decode(&self, macro_arch: &MacroArchitecture) -> Result<ArchitectureSpec> {
        if self.macro_name != macro_arch.name() {
            return Err(Error::malformed(
                "architecture",
                format!(
                    "macro {:?} does not match {:?}",
                    self.macro_name,
                    macro_arch.name()
                ),
            ));
        }
        decode(&Chromosome(self.genes.clone()), macro_arch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn twelve_blocks_in_canonical_order() {
        let blocks = enumerate_candidate_blocks();
        assert_eq!(blocks.len(), 12);
        assert_eq!(blocks[0], CandidateBlock::new(3, 3, false).unwrap());
        assert_eq!(blocks[11], CandidateBlock::largest());
        assert_eq!(CandidateBlock::largest().index(), LARGEST_BLOCK);
        for (i, b) in blocks.iter().enumerate() {
            assert_eq!(b.index(), i);
        }
    }

    #[test]
    fn block_constructor_rejects_off_grid_values() {
        assert!(CandidateBlock::new(4, 3, false).is_err());
        assert!(CandidateBlock::new(3, 4, false).is_err());
        assert!(CandidateBlock::from_index(12).is_none());
    }

    #[test]
    fn default_macro_matches_table() {
        let m = default_macro();
        assert_eq!(m.num_searchable(), 19);
        assert_eq!(m.num_candidates(), 12);
        let first = m.searchable_slot(0).unwrap();
        assert_eq!(
            (
                first.input_resolution,
                first.in_channels,
                first.out_channels,
                first.stride
            ),
            (112, 16, 32, 2)
        );
        let last = m.slots().last().unwrap();
        assert_eq!(last.fixed_block(), Some(FixedBlock::FullyConnected));
        assert_eq!(last.out_channels, 1000);
        // The channel change inside the repeated 14x14 group happens on its first repeat.
        let group: Vec<_> = (7..11).map(|l| m.searchable_slot(l).unwrap()).collect();
        assert_eq!((group[0].in_channels, group[0].out_channels), (80, 96));
        assert!(group[1..]
            .iter()
            .all(|s| s.in_channels == 96 && s.out_channels == 96));
        let head = &m.slots()[m.slots().len() - 3];
        assert_eq!(head.fixed_block(), Some(FixedBlock::HeadConv));
        assert_eq!((head.in_channels, head.out_channels), (320, 1280));
    }

    #[test]
    fn macro_rejects_broken_chain() {
        let slots = vec![
            LayerSlot::searchable(8, 4, 8, 2),
            LayerSlot::searchable(4, 16, 16, 1),
        ];
        assert!(matches!(
            MacroArchitecture::new("x", slots),
            Err(Error::InvalidShape(_))
        ));
        let slots = vec![
            LayerSlot::searchable(8, 4, 8, 2),
            LayerSlot::searchable(8, 8, 8, 1),
        ];
        assert!(MacroArchitecture::new("x", slots).is_err());
    }

    #[test]
    fn decode_largest_and_smallest() {
        let m = default_macro();
        let big = decode(&Chromosome::uniform(19, 11), &m).unwrap();
        let small = decode(&Chromosome::uniform(19, 0), &m).unwrap();
        let candidates = |a: &ArchitectureSpec| -> Vec<CandidateBlock> {
            a.slots()
                .iter()
                .filter_map(|s| match s.block {
                    ResolvedBlock::Candidate(b) => Some(b),
                    _ => None,
                })
                .collect()
        };
        assert!(candidates(&big)
            .iter()
            .all(|b| *b == CandidateBlock::largest()));
        assert!(candidates(&small)
            .iter()
            .all(|b| *b == CandidateBlock::new(3, 3, false).unwrap()));
        assert_eq!(big.slots().len(), m.slots().len());
    }

    #[test]
    fn decode_rejects_wrong_length() {
        let err = decode(&Chromosome::uniform(18, 0), &default_macro()).unwrap_err();
        assert!(matches!(
            err,
            Error::GeneCount {
                expected: 19,
                actual: 18
            }
        ));
        assert!(err.to_string().contains("19"));
    }

    #[test]
    fn decode_rejects_bad_gene() {
        let mut genes = vec![0; 19];
        genes[4] = 12;
        let err = decode(&Chromosome::new(genes), &default_macro()).unwrap_err();
        assert!(matches!(
            err,
            Error::GeneOutOfRange {
                layer: 4,
                gene: 12,
                ..
            }
        ));
    }

    #[test]
    fn architecture_json_field_names() {
        let m = default_macro();
        let spec = decode(&Chromosome::uniform(19, 5), &m).unwrap();
        let compact = serde_json::to_value(spec.to_json(false)).unwrap();
        assert_eq!(compact["macro"], "ponas-v1");
        assert_eq!(compact["genes"].as_array().unwrap().len(), 19);
        assert!(compact.get("slots").is_none());

        let expanded = serde_json::to_value(spec.to_json(true)).unwrap();
        let first = &expanded["slots"][0];
        for key in [
            "slot_index",
            "kernel",
            "expansion",
            "se",
            "in_ch",
            "out_ch",
            "stride",
            "resolution",
        ] {
            assert!(first.get(key).is_some(), "missing {key}");
        }
        assert_eq!(first["slot_index"], 2);
        assert_eq!(first["kernel"], 5);

        let back: ArchitectureJson = serde_json::from_value(expanded).unwrap();
        assert_eq!(back.decode(&m).unwrap(), spec);
    }

    #[test]
    fn gene_list_parsing() {
        let c: Chromosome = "1, 2,3".parse().unwrap();
        assert_eq!(c.genes(), &[1, 2, 3]);
        assert_eq!(c.to_string(), "1,2,3");
        assert!("1,x".parse::<Chromosome>().is_err());
    }

    proptest! {
        #[test]
        fn index_bijection(i in 0usize..12) {
            prop_assert_eq!(CandidateBlock::from_index(i).unwrap().index(), i);
        }

        #[test]
        fn decode_round_trip_and_shape_chaining(genes in proptest::collection::vec(0usize..12, 19)) {
            let m = default_macro();
            let c = Chromosome::new(genes);
            let spec = decode(&c, &m).unwrap();
            prop_assert_eq!(spec.extract_genes(), c);
            for pair in spec.slots().windows(2) {
                let prev = pair[0].layer_slot();
                prop_assert_eq!(pair[1].in_channels, prev.out_channels);
                prop_assert_eq!(pair[1].resolution, prev.output_resolution());
            }
        }
    }
}
