//! Binary chromosome container and population/checkpoint files.
//!
//! Chromosome container, all integers little-endian:
//!
//! ```text
//! "ACRD"  u16 version  u8 granularity  u8 0
//! u32 name_len  name (utf-8)
//! u32 run_count  run_count x (u8 gene_kind, u32 gene_count, u32 gene_len)
//! f32 values (sum of gene_count * gene_len)
//! ```
//!
//! The gene table is run-length coded: a folded chromosome has one run per
//! layer with one gene each, a semi-folded one has one run of filters or
//! neurons per layer, and a flat one has one run of scalars per layer.
//!
//! A population file is `"ACPF" u16 version u16 0 u32 header_len`, a JSON
//! header (architecture, seed, generation, member fitness, metrics so far)
//! and one chromosome container per member.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use accordion_core::genome::{Chromosome, GeneKind, GeneLayout, Granularity};
use accordion_core::nn::{Evaluation, NetworkSpec, Section};
use accordion_core::schemes::{EngineState, Member, MetricsRecord, Population};
use serde::{Deserialize, Serialize};

use crate::error::{format_err, io_err, Error, Result};

const CHROMOSOME_MAGIC: &[u8; 4] = b"ACRD";
const POPULATION_MAGIC: &[u8; 4] = b"ACPF";
const VERSION: u16 = 1;

fn runs(layout: &GeneLayout, g: Granularity) -> Vec<(GeneKind, u32, u32)> {
    layout
        .param_layers()
        .map(|p| match g {
            Granularity::Folded => (GeneKind::Layer, 1, p.len() as u32),
            Granularity::SemiFolded => {
                let kind = match p.section {
                    Section::FeatureExtraction => GeneKind::Filter,
                    Section::Classification => GeneKind::Neuron,
                };
                (kind, p.units as u32, p.unit_len as u32)
            }
            Granularity::Flat => (GeneKind::Scalar, p.len() as u32, 1),
        })
        .collect()
}

pub fn write_chromosome(out: &mut Vec<u8>, chrom: &Chromosome) {
    out.extend_from_slice(CHROMOSOME_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(chrom.granularity().tag());
    out.push(0);
    let name = chrom.spec().name.as_bytes();
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name);
    let table = runs(chrom.layout(), chrom.granularity());
    out.extend_from_slice(&(table.len() as u32).to_le_bytes());
    for (kind, count, len) in table {
        out.push(kind.tag());
        out.extend_from_slice(&count.to_le_bytes());
        out.extend_from_slice(&len.to_le_bytes());
    }
    out.reserve(chrom.len() * 4);
    for v in chrom.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Little-endian cursor that reports failures with byte offsets.
struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(self.fail(format!("truncated while reading {what}"))),
        }
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn fail(&self, message: impl Into<String>) -> Error {
        format_err(self.path, self.pos as u64, message)
    }

    fn magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let at = self.pos;
        if self.take(4, "magic")? != magic {
            return Err(format_err(self.path, at as u64, format!("bad magic, expected {:?}", String::from_utf8_lossy(magic))));
        }
        let version = self.u16("version")?;
        if version != VERSION {
            return Err(self.fail(format!("unsupported version {version}")));
        }
        Ok(())
    }
}

fn read_chromosome_at(r: &mut Reader<'_>, layout: &Arc<GeneLayout>) -> Result<Chromosome> {
    r.magic(CHROMOSOME_MAGIC)?;
    let tag = r.u8("granularity")?;
    let granularity = Granularity::from_tag(tag).ok_or_else(|| r.fail(format!("unknown granularity tag {tag}")))?;
    r.u8("padding")?;
    let name_len = r.u32("name length")? as usize;
    let name = r.take(name_len, "architecture name")?;
    if name != layout.spec().name.as_bytes() {
        return Err(r.fail(format!(
            "chromosome is for `{}`, expected `{}`",
            String::from_utf8_lossy(name),
            layout.spec().name
        )));
    }
    let expected = runs(layout, granularity);
    let count = r.u32("gene table length")? as usize;
    if count != expected.len() {
        return Err(r.fail(format!("gene table has {count} runs, architecture has {}", expected.len())));
    }
    let mut gene = 0u64;
    for (want_kind, want_count, want_len) in expected {
        let kind = r.u8("gene kind")?;
        let n = r.u32("gene count")?;
        let len = r.u32("gene length")?;
        if GeneKind::from_tag(kind) != Some(want_kind) || n != want_count || len != want_len {
            return Err(r.fail(format!(
                "gene {gene}: table says {n} x {len} values of kind {kind}, architecture needs {want_count} x {want_len} of {want_kind:?}"
            )));
        }
        gene += n as u64;
    }
    let raw = r.take(layout.scalar_count() * 4, "values")?;
    let values = raw.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
    Ok(Chromosome::from_values(layout.clone(), granularity, values)?)
}

/// Parses one chromosome container for the architecture behind `layout`.
pub fn read_chromosome(bytes: &[u8], layout: &Arc<GeneLayout>, path: &Path) -> Result<Chromosome> {
    let mut r = Reader { path, bytes, pos: 0 };
    let chrom = read_chromosome_at(&mut r, layout)?;
    if r.pos != bytes.len() {
        return Err(r.fail("trailing bytes after chromosome"));
    }
    Ok(chrom)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MemberHeader {
    id: u64,
    accuracy: Option<f64>,
    loss: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    architecture: NetworkSpec,
    seed: u64,
    generation: u64,
    next_id: u64,
    evaluations: u64,
    members: Vec<MemberHeader>,
    history: Vec<MetricsRecord>,
}

/// A stored population: an initial population, a checkpoint or a final one.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationFile {
    pub spec: Arc<NetworkSpec>,
    pub seed: u64,
    pub state: EngineState,
    /// Metrics recorded up to and including `state.population.generation`.
    pub history: Vec<MetricsRecord>,
}

impl PopulationFile {
    /// Unevaluated generation-0 population.
    pub fn initial(spec: Arc<NetworkSpec>, seed: u64, chromosomes: Vec<Chromosome>) -> Self {
        let members: Vec<Member> = chromosomes
            .into_iter()
            .enumerate()
            .map(|(i, chromosome)| Member { id: i as u64, chromosome, evaluation: None })
            .collect();
        let next_id = members.len() as u64;
        Self {
            spec,
            seed,
            state: EngineState { population: Population { generation: 0, members }, next_id, evaluations: 0 },
            history: Vec::new(),
        }
    }

    pub fn chromosomes(&self) -> Vec<Chromosome> {
        self.state.population.members.iter().map(|m| m.chromosome.clone()).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let pop = &self.state.population;
        let header = Header {
            architecture: (*self.spec).clone(),
            seed: self.seed,
            generation: pop.generation,
            next_id: self.state.next_id,
            evaluations: self.state.evaluations,
            members: pop
                .members
                .iter()
                .map(|m| MemberHeader {
                    id: m.id,
                    accuracy: m.evaluation.map(|e| e.accuracy),
                    loss: m.evaluation.map(|e| e.loss),
                })
                .collect(),
            history: self.history.clone(),
        };
        let json = serde_json::to_vec(&header).expect("header is plain data");
        let mut out = Vec::new();
        out.extend_from_slice(POPULATION_MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for m in &pop.members {
            write_chromosome(&mut out, &m.chromosome);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { path, bytes, pos: 0 };
        r.magic(POPULATION_MAGIC)?;
        r.u16("padding")?;
        let len = r.u32("header length")? as usize;
        let at = r.pos;
        let header: Header = serde_json::from_slice(r.take(len, "header")?)
            .map_err(|e| format_err(path, at as u64, format!("header: {e}")))?;
        let spec = Arc::new(header.architecture);
        spec.validate()?;
        let layout = Arc::new(GeneLayout::new(spec.clone())?);
        let mut members = Vec::with_capacity(header.members.len());
        for m in header.members {
            let chromosome = read_chromosome_at(&mut r, &layout)?;
            let evaluation = match (m.accuracy, m.loss) {
                (Some(accuracy), Some(loss)) => Some(Evaluation { accuracy, loss }),
                (None, None) => None,
                _ => return Err(format_err(path, at as u64, format!("member {} has half an evaluation", m.id))),
            };
            members.push(Member { id: m.id, chromosome, evaluation });
        }
        if r.pos != bytes.len() {
            return Err(r.fail("trailing bytes after last member"));
        }
        Ok(Self {
            spec,
            seed: header.seed,
            state: EngineState {
                population: Population { generation: header.generation, members },
                next_id: header.next_id,
                evaluations: header.evaluations,
            },
            history: header.history,
        })
    }

    /// Writes atomically: a temporary sibling is renamed over `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(&self.to_bytes()).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
        fs::rename(&tmp, path).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(io_err(path))?;
        Self::from_bytes(&bytes, path)
    }
}
