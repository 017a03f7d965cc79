//! Network ⇄ chromosome encodings.
//!
//! A chromosome stores every trainable value of a network in one buffer,
//! ordered layer by layer, then filter by filter (or neuron by neuron), then
//! row-major within the unit. A dense neuron's unit is its column of ingoing
//! weights. The [`Granularity`] only decides where gene boundaries fall:
//!
//! * [`Granularity::Folded`]: one gene per parameterized layer (the compact
//!   "Accordion" form).
//! * [`Granularity::SemiFolded`]: one gene per convolution filter or dense
//!   neuron; the operators work on this view.
//! * [`Granularity::Flat`]: one gene per scalar (the traditional encoding).
//!
//! Because the buffer order is shared, [`refold`] never moves a value.

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{contract, Error, Result};
use crate::nn::{Network, NetworkSpec, ParamLayer, Section};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "kebab-case"))]
pub enum Granularity {
    Folded,
    SemiFolded,
    Flat,
}

impl Granularity {
    pub const ALL: [Granularity; 3] = [Granularity::Folded, Granularity::SemiFolded, Granularity::Flat];

    pub fn tag(self) -> u8 {
        match self {
            Granularity::Folded => 0,
            Granularity::SemiFolded => 1,
            Granularity::Flat => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.get(tag as usize).copied()
    }
}

/// What a gene holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GeneKind {
    /// A whole layer's parameters.
    Layer,
    /// One convolution filter: `kh·kw·c_in` values.
    Filter,
    /// One dense neuron's ingoing weights: `in_features` values.
    Neuron,
    /// One scalar parameter.
    Scalar,
}

impl GeneKind {
    pub fn tag(self) -> u8 {
        match self {
            GeneKind::Layer => 0,
            GeneKind::Filter => 1,
            GeneKind::Neuron => 2,
            GeneKind::Scalar => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        [GeneKind::Layer, GeneKind::Filter, GeneKind::Neuron, GeneKind::Scalar].get(tag as usize).copied()
    }
}

/// A borrowed view of one gene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gene<'a> {
    pub kind: GeneKind,
    pub section: Section,
    /// Index of the parameterized layer the gene belongs to.
    pub layer: usize,
    pub values: &'a [f32],
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Block {
    index: usize,
    offset: usize,
    param: ParamLayer,
    /// SemiFolded gene index of this block's first unit.
    first_unit: usize,
}

/// Where every gene of a network's chromosome lives in the value buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneLayout {
    spec: Arc<NetworkSpec>,
    blocks: Vec<Block>,
    total: usize,
    units: usize,
    feature_layers: usize,
    feature_units: usize,
    feature_scalars: usize,
}

impl GeneLayout {
    pub fn new(spec: Arc<NetworkSpec>) -> Result<Self> {
        spec.validate()?;
        let mut blocks = Vec::new();
        let (mut offset, mut units) = (0, 0);
        let (mut feature_layers, mut feature_units, mut feature_scalars) = (0, 0, 0);
        for param in spec.param_layers() {
            if param.section == Section::FeatureExtraction {
                feature_layers += 1;
                feature_units += param.units;
                feature_scalars += param.len();
            }
            blocks.push(Block { index: blocks.len(), offset, param, first_unit: units });
            offset += param.len();
            units += param.units;
        }
        Ok(Self { spec, blocks, total: offset, units, feature_layers, feature_units, feature_scalars })
    }

    pub fn spec(&self) -> &Arc<NetworkSpec> {
        &self.spec
    }

    /// Total number of scalars.
    pub fn scalar_count(&self) -> usize {
        self.total
    }

    pub fn param_layers(&self) -> impl Iterator<Item = &ParamLayer> {
        self.blocks.iter().map(|b| &b.param)
    }

    pub fn gene_count(&self, g: Granularity) -> usize {
        match g {
            Granularity::Folded => self.blocks.len(),
            Granularity::SemiFolded => self.units,
            Granularity::Flat => self.total,
        }
    }

    /// Genes in the feature-extraction section; they precede all others.
    pub fn feature_gene_count(&self, g: Granularity) -> usize {
        match g {
            Granularity::Folded => self.feature_layers,
            Granularity::SemiFolded => self.feature_units,
            Granularity::Flat => self.feature_scalars,
        }
    }

    fn block_of_unit(&self, unit: usize) -> &Block {
        let i = self.blocks.partition_point(|b| b.first_unit + b.param.units <= unit);
        &self.blocks[i]
    }

    fn block_of_scalar(&self, pos: usize) -> &Block {
        let i = self.blocks.partition_point(|b| b.offset + b.param.len() <= pos);
        &self.blocks[i]
    }

    /// Buffer range, kind and owning layer of gene `index`.
    ///
    /// Panics when `index >= gene_count(g)`.
    pub fn gene_info(&self, g: Granularity, index: usize) -> (Range<usize>, GeneKind, usize, Section) {
        assert!(index < self.gene_count(g), "gene {index} out of range");
        match g {
            Granularity::Folded => {
                let b = &self.blocks[index];
                (b.offset..b.offset + b.param.len(), GeneKind::Layer, index, b.param.section)
            }
            Granularity::SemiFolded => {
                let b = self.block_of_unit(index);
                let start = b.offset + (index - b.first_unit) * b.param.unit_len;
                let kind = match b.param.section {
                    Section::FeatureExtraction => GeneKind::Filter,
                    Section::Classification => GeneKind::Neuron,
                };
                (start..start + b.param.unit_len, kind, b.index, b.param.section)
            }
            Granularity::Flat => {
                let b = self.block_of_scalar(index);
                (index..index + 1, GeneKind::Scalar, b.index, b.param.section)
            }
        }
    }

    /// Expected gene lengths at a granularity.
    pub fn gene_lengths(&self, g: Granularity) -> impl Iterator<Item = usize> + '_ {
        self.blocks.iter().flat_map(move |b| {
            let (count, len) = match g {
                Granularity::Folded => (1, b.param.len()),
                Granularity::SemiFolded => (b.param.units, b.param.unit_len),
                Granularity::Flat => (b.param.len(), 1),
            };
            core::iter::repeat_n(len, count)
        })
    }

    /// Kinds of every gene in order, run-length encoded as `(kind, count)`.
    pub fn gene_kinds(&self, g: Granularity) -> Vec<(GeneKind, usize)> {
        self.blocks
            .iter()
            .map(|b| match g {
                Granularity::Folded => (GeneKind::Layer, 1),
                Granularity::SemiFolded => (
                    match b.param.section {
                        Section::FeatureExtraction => GeneKind::Filter,
                        Section::Classification => GeneKind::Neuron,
                    },
                    b.param.units,
                ),
                Granularity::Flat => (GeneKind::Scalar, b.param.len()),
            })
            .collect()
    }
}

/// A network's genotype.
#[derive(Debug, Clone, PartialEq)]
pub struct Chromosome {
    layout: Arc<GeneLayout>,
    granularity: Granularity,
    values: Vec<f32>,
}

impl Chromosome {
    /// Wraps a value buffer already in gene order.
    pub fn from_values(layout: Arc<GeneLayout>, granularity: Granularity, values: Vec<f32>) -> Result<Self> {
        if values.len() != layout.total {
            let gene = layout.gene_count(granularity).min(values.len());
            return Err(Error::Codec {
                gene,
                message: alloc::format!("expected {} values in total, got {}", layout.total, values.len()),
            });
        }
        Ok(Self { layout, granularity, values })
    }

    /// Assembles a chromosome from individual genes, checking each length.
    pub fn from_genes<'a>(
        layout: Arc<GeneLayout>,
        granularity: Granularity,
        genes: impl IntoIterator<Item = &'a [f32]>,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(layout.total);
        let lengths: Vec<usize> = layout.gene_lengths(granularity).collect();
        let mut expected = lengths.into_iter();
        let mut count = 0;
        for (i, gene) in genes.into_iter().enumerate() {
            match expected.next() {
                Some(len) if len == gene.len() => values.extend_from_slice(gene),
                Some(len) => {
                    return Err(Error::Codec {
                        gene: i,
                        message: alloc::format!("expected {len} values, got {}", gene.len()),
                    })
                }
                None => {
                    return Err(Error::Codec { gene: i, message: "more genes than the architecture has".into() })
                }
            }
            count += 1;
        }
        if expected.next().is_some() {
            return Err(Error::Codec {
                gene: count,
                message: alloc::format!("missing genes: expected {}", layout.gene_count(granularity)),
            });
        }
        Ok(Self { layout, granularity, values })
    }

    pub fn layout(&self) -> &Arc<GeneLayout> {
        &self.layout
    }

    pub fn spec(&self) -> &Arc<NetworkSpec> {
        &self.layout.spec
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    pub fn len(&self) -> usize {
        self.layout.gene_count(self.granularity)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index of the first classification gene.
    pub fn section_boundary(&self) -> usize {
        self.layout.feature_gene_count(self.granularity)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn gene(&self, index: usize) -> Gene<'_> {
        let (range, kind, layer, section) = self.layout.gene_info(self.granularity, index);
        Gene { kind, section, layer, values: &self.values[range] }
    }

    pub fn genes(&self) -> impl Iterator<Item = Gene<'_>> + '_ {
        (0..self.len()).map(|i| self.gene(i))
    }

    pub(crate) fn gene_range(&self, index: usize) -> Range<usize> {
        self.layout.gene_info(self.granularity, index).0
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    /// Whether two chromosomes encode the same architecture.
    pub fn compatible_with(&self, other: &Chromosome) -> bool {
        Arc::ptr_eq(&self.layout, &other.layout) || *self.layout == *other.layout
    }

    /// Bit-level equality (distinguishes `-0.0`/`0.0` and compares NaNs).
    pub fn bit_eq(&self, other: &Chromosome) -> bool {
        self.granularity == other.granularity
            && self.compatible_with(other)
            && self.values.iter().zip(&other.values).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Encodes a network's parameters at the given granularity.
pub fn encode(net: &Network, granularity: Granularity) -> Chromosome {
    let layout = Arc::new(GeneLayout::new(net.spec().clone()).expect("networks hold validated specs"));
    encode_with(layout, net, granularity)
}

/// As [`encode`] but reusing a precomputed layout.
pub fn encode_with(layout: Arc<GeneLayout>, net: &Network, granularity: Granularity) -> Chromosome {
    let mut values = Vec::with_capacity(layout.total);
    for (block, tensor) in layout.blocks.iter().zip(net.params()) {
        let data = tensor.data();
        if block.param.rank == 2 {
            // [in, out] -> neuron-major
            let (inputs, outputs) = (block.param.shape[0], block.param.shape[1]);
            for j in 0..outputs {
                values.extend((0..inputs).map(|i| data[i * outputs + j]));
            }
        } else {
            values.extend_from_slice(data);
        }
    }
    Chromosome { layout, granularity, values }
}

/// Rebuilds the network a chromosome encodes.
pub fn decode(chrom: &Chromosome, spec: &NetworkSpec) -> Result<Network> {
    if **chrom.spec() != *spec {
        return Err(Error::Codec {
            gene: 0,
            message: alloc::format!("chromosome encodes `{}`, not `{}`", chrom.spec().name, spec.name),
        });
    }
    let layout = &chrom.layout;
    if chrom.values.len() != layout.total {
        return Err(Error::Codec {
            gene: layout.gene_count(chrom.granularity),
            message: alloc::format!("expected {} values, got {}", layout.total, chrom.values.len()),
        });
    }
    let mut params = Vec::with_capacity(layout.blocks.len());
    for block in &layout.blocks {
        let src = &chrom.values[block.offset..block.offset + block.param.len()];
        let data = if block.param.rank == 2 {
            let (inputs, outputs) = (block.param.shape[0], block.param.shape[1]);
            let mut data = alloc::vec![0.0f32; src.len()];
            for (j, neuron) in src.chunks_exact(inputs).enumerate() {
                for (i, &w) in neuron.iter().enumerate() {
                    data[i * outputs + j] = w;
                }
            }
            data
        } else {
            src.to_vec()
        };
        params.push(Tensor::new(block.param.tensor_shape(), data)?);
    }
    Network::new(chrom.spec().clone(), params)
}

/// Moves gene boundaries without touching values.
pub fn refold(chrom: &Chromosome, target: Granularity) -> Chromosome {
    Chromosome { layout: chrom.layout.clone(), granularity: target, values: chrom.values.clone() }
}

/// `(feature extraction genes, classification genes)` of a semi-folded
/// chromosome.
pub fn section_lengths(chrom: &Chromosome) -> Result<(usize, usize)> {
    if chrom.granularity != Granularity::SemiFolded {
        return Err(contract!("section lengths are defined on semi-folded chromosomes, got {:?}", chrom.granularity));
    }
    let feature = chrom.section_boundary();
    Ok((feature, chrom.len() - feature))
}
