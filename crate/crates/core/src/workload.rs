// SPDX-License-Identifier: Apache-2.0

//! SNN workloads: neurons, synapses and per-synapse activation counts.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type NeuronId = u32;

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("schema violation at `{field}`: {message}")]
    Schema { field: String, message: String },
    #[error("duplicate neuron id {0}")]
    DuplicateId(NeuronId),
    #[error("synapses reference unknown neuron ids {0:?}")]
    Dangling(Vec<NeuronId>),
    #[error("self-loop on {kind:?} neuron {id}")]
    SelfLoop { id: NeuronId, kind: NeuronKind },
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NeuronKind {
    Input,
    Hidden,
    Output,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Neuron {
    pub id: NeuronId,
    pub kind: NeuronKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Synapse {
    pub pre: NeuronId,
    pub post: NeuronId,
    pub weight: f64,
    pub activations: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnnGraph {
    pub neurons: Vec<Neuron>,
    pub synapses: Vec<Synapse>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GraphStats {
    pub neurons: usize,
    pub synapses: usize,
    pub total_activations: u64,
    pub max_fan_in: usize,
    pub max_fan_out: usize,
}

impl SnnGraph {
    /// Checks id uniqueness, endpoint existence and self-loop rules.
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let mut kinds = BTreeMap::new();
        for n in &self.neurons {
            if kinds.insert(n.id, n.kind).is_some() {
                return Err(WorkloadError::DuplicateId(n.id));
            }
        }
        let dangling: BTreeSet<NeuronId> = self
            .synapses
            .iter()
            .flat_map(|s| [s.pre, s.post])
            .filter(|id| !kinds.contains_key(id))
            .collect();
        if !dangling.is_empty() {
            return Err(WorkloadError::Dangling(dangling.into_iter().collect()));
        }
        for s in &self.synapses {
            if s.pre == s.post && kinds[&s.pre] != NeuronKind::Hidden {
                return Err(WorkloadError::SelfLoop {
                    id: s.pre,
                    kind: kinds[&s.pre],
                });
            }
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self, WorkloadError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let graph: SnnGraph = serde_path_to_error::deserialize(de).map_err(schema_error)?;
        graph.validate()?;
        Ok(graph)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, WorkloadError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| WorkloadError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let de = &mut serde_json::Deserializer::from_reader(BufReader::new(file));
        let graph: SnnGraph = serde_path_to_error::deserialize(de).map_err(schema_error)?;
        graph.validate()?;
        Ok(graph)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), WorkloadError> {
        let path = path.as_ref();
        let io_err = |source| WorkloadError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
        serde_json::to_writer(&mut out, self).map_err(|e| io_err(e.into()))?;
        out.write_all(b"\n").map_err(io_err)?;
        out.flush().map_err(io_err)
    }

    pub fn kind_of(&self) -> BTreeMap<NeuronId, NeuronKind> {
        self.neurons.iter().map(|n| (n.id, n.kind)).collect()
    }

    /// Number of incoming synapses per neuron (zero entries included).
    pub fn fan_in(&self) -> BTreeMap<NeuronId, usize> {
        let mut m: BTreeMap<NeuronId, usize> = self.neurons.iter().map(|n| (n.id, 0)).collect();
        for s in &self.synapses {
            *m.entry(s.post).or_default() += 1;
        }
        m
    }

    pub fn fan_out(&self) -> BTreeMap<NeuronId, usize> {
        let mut m: BTreeMap<NeuronId, usize> = self.neurons.iter().map(|n| (n.id, 0)).collect();
        for s in &self.synapses {
            *m.entry(s.pre).or_default() += 1;
        }
        m
    }

    pub fn total_activations(&self) -> u64 {
        self.synapses.iter().map(|s| s.activations).sum()
    }
}

fn schema_error(e: serde_path_to_error::Error<serde_json::Error>) -> WorkloadError {
    WorkloadError::Schema {
        field: e.path().to_string(),
        message: e.into_inner().to_string(),
    }
}

pub fn stats(graph: &SnnGraph) -> GraphStats {
    GraphStats {
        neurons: graph.neurons.len(),
        synapses: graph.synapses.len(),
        total_activations: graph.total_activations(),
        max_fan_in: graph.fan_in().into_values().max().unwrap_or(0),
        max_fan_out: graph.fan_out().into_values().max().unwrap_or(0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Topology {
    Feedforward { layers: Vec<usize> },
    Reservoir { n: usize, connectivity: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ActivationDist {
    /// Integers drawn uniformly from `lo..=hi`.
    Uniform { lo: u64, hi: u64 },
    /// Zipf-distributed integers in `1..=max` with exponent `s`.
    Zipf { s: f64, max: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub topology: Topology,
    pub activations: ActivationDist,
    pub seed: u64,
}

fn split_inline<'a>(text: &'a str, what: &str) -> Result<(&'a str, Vec<&'a str>), WorkloadError> {
    let (name, args) = text
        .split_once(':')
        .ok_or_else(|| WorkloadError::InvalidSpec(format!("{what} `{text}` lacks `name:args`")))?;
    Ok((name.trim(), args.split(',').map(str::trim).collect()))
}

fn parse_num<T: FromStr>(s: &str, what: &str) -> Result<T, WorkloadError> {
    s.parse()
        .map_err(|_| WorkloadError::InvalidSpec(format!("cannot parse `{s}` as {what}")))
}

impl FromStr for Topology {
    type Err = WorkloadError;

    /// `feedforward:784,100,10` or `reservoir:200,0.1`.
    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let (name, args) = split_inline(text, "topology")?;
        match name {
            "feedforward" => Ok(Topology::Feedforward {
                layers: args
                    .iter()
                    .map(|a| parse_num(a, "layer size"))
                    .collect::<Result<_, _>>()?,
            }),
            "reservoir" if args.len() == 2 => Ok(Topology::Reservoir {
                n: parse_num(args[0], "neuron count")?,
                connectivity: parse_num(args[1], "connectivity")?,
            }),
            _ => Err(WorkloadError::InvalidSpec(format!(
                "unknown topology `{text}` (expected feedforward:L1,L2,... or reservoir:N,P)"
            ))),
        }
    }
}

impl FromStr for ActivationDist {
    type Err = WorkloadError;

    /// `uniform:5,50` or `zipf:1.2,1000`.
    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let (name, args) = split_inline(text, "distribution")?;
        match (name, args.as_slice()) {
            ("uniform", [lo, hi]) => Ok(ActivationDist::Uniform {
                lo: parse_num(lo, "integer")?,
                hi: parse_num(hi, "integer")?,
            }),
            ("zipf", [s, max]) => Ok(ActivationDist::Zipf {
                s: parse_num(s, "exponent")?,
                max: parse_num(max, "integer")?,
            }),
            _ => Err(WorkloadError::InvalidSpec(format!(
                "unknown distribution `{text}` (expected uniform:LO,HI or zipf:S,MAX)"
            ))),
        }
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |m: String| Err(WorkloadError::InvalidSpec(m));
        match &self.topology {
            Topology::Feedforward { layers } => {
                if layers.len() < 2 || layers.contains(&0) {
                    return bad(format!(
                        "feedforward needs >= 2 layers of size >= 1, got {layers:?}"
                    ));
                }
            }
            Topology::Reservoir { n, connectivity } => {
                if *n == 0 {
                    return bad("reservoir size must be >= 1".into());
                }
                if !(*connectivity > 0.0 && *connectivity <= 1.0) {
                    return bad(format!("connectivity {connectivity} must lie in (0, 1]"));
                }
            }
        }
        match self.activations {
            ActivationDist::Uniform { lo, hi } if lo > hi => {
                bad(format!("uniform bounds {lo} > {hi}"))
            }
            ActivationDist::Zipf { s, max } if !(s > 0.0) || max == 0 => {
                bad(format!("zipf needs s > 0 and max >= 1, got s={s}, max={max}"))
            }
            _ => Ok(()),
        }
    }
}

enum Sampler {
    Uniform(u64, u64),
    Zipf(Zipf<f64>),
}

impl Sampler {
    fn draw(&self, rng: &mut ChaCha8Rng) -> u64 {
        match self {
            Sampler::Uniform(lo, hi) => rng.random_range(*lo..=*hi),
            Sampler::Zipf(z) => z.sample(rng) as u64,
        }
    }
}

/// Deterministic synthetic workload for a given spec.
pub fn generate(spec: &GeneratorSpec) -> Result<SnnGraph, WorkloadError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sampler = match spec.activations {
        ActivationDist::Uniform { lo, hi } => Sampler::Uniform(lo, hi),
        ActivationDist::Zipf { s, max } => Sampler::Zipf(
            Zipf::new(max as f64, s).map_err(|e| WorkloadError::InvalidSpec(e.to_string()))?,
        ),
    };
    let mut graph = SnnGraph::default();
    let push = |graph: &mut SnnGraph, rng: &mut ChaCha8Rng, pre, post| {
        let activations = sampler.draw(rng);
        let weight = rng.random_range(-1.0..=1.0);
        graph.synapses.push(Synapse {
            pre,
            post,
            weight,
            activations,
        });
    };
    match &spec.topology {
        Topology::Feedforward { layers } => {
            let mut start = Vec::with_capacity(layers.len());
            let mut next: NeuronId = 0;
            for (l, &size) in layers.iter().enumerate() {
                start.push(next);
                let kind = match l {
                    0 => NeuronKind::Input,
                    _ if l + 1 == layers.len() => NeuronKind::Output,
                    _ => NeuronKind::Hidden,
                };
                for _ in 0..size {
                    graph.neurons.push(Neuron { id: next, kind });
                    next += 1;
                }
            }
            for l in 1..layers.len() {
                for post in start[l]..start[l] + layers[l] as NeuronId {
                    for pre in start[l - 1]..start[l - 1] + layers[l - 1] as NeuronId {
                        push(&mut graph, &mut rng, pre, post);
                    }
                }
            }
        }
        Topology::Reservoir { n, connectivity } => {
            let n = *n as NeuronId;
            graph.neurons = (0..n)
                .map(|id| Neuron {
                    id,
                    kind: NeuronKind::Hidden,
                })
                .collect();
            for pre in 0..n {
                for post in 0..n {
                    if pre != post && rng.random_bool(*connectivity) {
                        push(&mut graph, &mut rng, pre, post);
                    }
                }
            }
        }
    }
    Ok(graph)
}
