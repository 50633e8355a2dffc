//! Attribute-graph ingestion: edge lists paired with binary attribute
//! vectors whose Hamming distances, rescaled so the farthest pair sits
//! at 2, act as latent coordinates. Optionally loads ground-truth labels.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::graph::{LabelVector, WeightedGraph};

/// Largest node count for which the normalizing maximum Hamming
/// distance is computed exactly over all pairs.
pub const EXACT_MAX_NODES: usize = 5000;

/// Number of sampled pairs used to estimate the maximum Hamming
/// distance on larger graphs.
pub const SAMPLED_MAX_PAIRS: usize = 1_000_000;

/// Fixed seed for the sampled-maximum estimate, keeping loads
/// reproducible without threading a seed through the file API.
const SAMPLED_MAX_SEED: u64 = 1_000_003;

/// A weighted graph whose nodes carry equal-length binary attribute
/// vectors. Pairwise distances are Hamming distances normalized so the
/// farthest pair is exactly 2 apart.
#[derive(Debug, Clone)]
pub struct AttributeGraph {
    pub graph: WeightedGraph,
    attributes: Vec<Vec<u8>>,
    /// Attribute rows packed 64 bits per word for fast Hamming counts.
    packed: Vec<Vec<u64>>,
    pub labels: Option<LabelVector>,
    max_hamming: usize,
    max_is_sampled: bool,
}

fn pack_bits(row: &[u8]) -> Vec<u64> {
    let mut words = vec![0u64; row.len().div_ceil(64)];
    for (t, &b) in row.iter().enumerate() {
        if b == 1 {
            words[t / 64] |= 1u64 << (t % 64);
        }
    }
    words
}

fn hamming_packed(a: &[u64], b: &[u64]) -> usize {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x ^ y).count_ones() as usize)
        .sum()
}

impl AttributeGraph {
    /// Builds the structure, validating shapes and computing the
    /// normalizing maximum Hamming distance (exact up to
    /// [`EXACT_MAX_NODES`] nodes, sampled above).
    pub fn new(
        graph: WeightedGraph,
        attributes: Vec<Vec<u8>>,
        labels: Option<LabelVector>,
    ) -> Result<Self> {
        let n = graph.n();
        if attributes.len() != n {
            return Err(Error::Config(format!(
                "graph has {n} nodes but {} attribute vectors were given",
                attributes.len()
            )));
        }
        let m_attr = attributes.first().map(|r| r.len()).unwrap_or(0);
        if n > 0 && m_attr == 0 {
            return Err(Error::Config(
                "attribute vectors must have at least one bit".into(),
            ));
        }
        for (i, row) in attributes.iter().enumerate() {
            if row.len() != m_attr {
                return Err(Error::Config(format!(
                    "attribute vector for node {i} has length {}, expected {m_attr}",
                    row.len()
                )));
            }
            if let Some(&bad) = row.iter().find(|&&b| b > 1) {
                return Err(Error::Config(format!(
                    "attribute vector for node {i} contains {bad}; bits must be 0 or 1"
                )));
            }
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::LabelLength {
                    got: l.len(),
                    expected: n,
                });
            }
        }
        let packed: Vec<Vec<u64>> = attributes.iter().map(|r| pack_bits(r)).collect();
        let (max_hamming, max_is_sampled) = if n <= EXACT_MAX_NODES {
            let mut max = 0usize;
            for i in 0..n {
                for j in (i + 1)..n {
                    max = max.max(hamming_packed(&packed[i], &packed[j]));
                }
            }
            (max, false)
        } else {
            let mut rng = StdRng::seed_from_u64(SAMPLED_MAX_SEED);
            let mut max = 0usize;
            for _ in 0..SAMPLED_MAX_PAIRS {
                let i = rng.gen_range(0..n);
                let j = rng.gen_range(0..n - 1);
                let j = if j >= i { j + 1 } else { j };
                max = max.max(hamming_packed(&packed[i], &packed[j]));
            }
            (max, true)
        };
        Ok(Self {
            graph,
            attributes,
            packed,
            labels,
            max_hamming,
            max_is_sampled,
        })
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    /// Attribute vector length.
    pub fn m_attr(&self) -> usize {
        self.attributes.first().map(|r| r.len()).unwrap_or(0)
    }

    pub fn attributes(&self) -> &[Vec<u8>] {
        &self.attributes
    }

    /// The normalizing maximum Hamming distance.
    pub fn max_hamming(&self) -> usize {
        self.max_hamming
    }

    /// True when the normalizer came from sampled pairs rather than the
    /// exact maximum (graphs above [`EXACT_MAX_NODES`] nodes).
    pub fn max_is_sampled(&self) -> bool {
        self.max_is_sampled
    }

    /// Raw Hamming distance between two nodes' attribute vectors.
    pub fn hamming(&self, i: usize, j: usize) -> Result<usize> {
        let n = self.n();
        if i >= n || j >= n {
            return Err(Error::NodeOutOfRange { id: i.max(j), n });
        }
        Ok(hamming_packed(&self.packed[i], &self.packed[j]))
    }

    /// Normalized distance `2 * hamming(i, j) / max_pair_hamming`,
    /// zero everywhere when all vectors coincide.
    pub fn distance(&self, i: usize, j: usize) -> Result<f64> {
        let h = self.hamming(i, j)?;
        if self.max_hamming == 0 {
            return Ok(0.0);
        }
        Ok(2.0 * h as f64 / self.max_hamming as f64)
    }

    /// Serializes the attribute table (`node_id b_1 … b_m` per line).
    pub fn attributes_to_string(&self) -> String {
        let mut out = String::new();
        for (id, row) in self.attributes.iter().enumerate() {
            let _ = write!(out, "{id}");
            for &b in row {
                let _ = write!(out, " {b}");
            }
            out.push('\n');
        }
        out
    }

    /// Serializes the labels table (`node_id label` per line).
    pub fn labels_to_string(&self) -> Option<String> {
        self.labels.as_ref().map(|l| {
            let mut out = String::new();
            for (id, &lab) in l.as_slice().iter().enumerate() {
                let _ = writeln!(out, "{id} {lab}");
            }
            out
        })
    }

    /// Writes the edge list, attribute table, and (when present and a
    /// path is given) labels. Reloading the files reproduces identical
    /// distances.
    pub fn write_files(
        &self,
        edge_path: &Path,
        attribute_path: &Path,
        label_path: Option<&Path>,
    ) -> Result<()> {
        self.graph.write_edge_list(edge_path)?;
        std::fs::write(attribute_path, self.attributes_to_string())?;
        if let Some(path) = label_path {
            if let Some(text) = self.labels_to_string() {
                std::fs::write(path, text)?;
            } else {
                return Err(Error::Config(
                    "label output requested but the graph has no labels".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Parses `node_id b_1 … b_m` lines into rows ordered by node id.
/// Ids must cover `0..n` exactly once; `#` starts a comment line.
fn parse_attribute_text(text: &str, origin: &str) -> Result<Vec<Vec<u8>>> {
    let mut rows: Vec<(usize, Vec<u8>, usize)> = Vec::new();
    let mut m_attr: Option<usize> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: origin.to_string(),
            line: lineno + 1,
            msg,
        };
        let mut parts = line.split_whitespace();
        let id = parts
            .next()
            .expect("non-empty line has a first token")
            .parse::<usize>()
            .map_err(|_| parse_err("bad node id".into()))?;
        let mut bits = Vec::new();
        for tok in parts {
            match tok {
                "0" => bits.push(0u8),
                "1" => bits.push(1u8),
                other => {
                    return Err(parse_err(format!(
                        "attribute bits must be 0 or 1, got `{other}`"
                    )))
                }
            }
        }
        if bits.is_empty() {
            return Err(parse_err("node has no attribute bits".into()));
        }
        match m_attr {
            None => m_attr = Some(bits.len()),
            Some(m) if m != bits.len() => {
                return Err(parse_err(format!(
                    "expected {m} attribute bits, got {}",
                    bits.len()
                )))
            }
            _ => {}
        }
        rows.push((id, bits, lineno + 1));
    }
    let n = rows.len();
    let mut seen = HashSet::new();
    for (id, _, lineno) in &rows {
        if *id >= n {
            return Err(Error::Parse {
                path: origin.to_string(),
                line: *lineno,
                msg: format!("node id {id} out of range for {n} attribute rows"),
            });
        }
        if !seen.insert(*id) {
            return Err(Error::Parse {
                path: origin.to_string(),
                line: *lineno,
                msg: format!("duplicate node id {id}"),
            });
        }
    }
    rows.sort_by_key(|(id, _, _)| *id);
    Ok(rows.into_iter().map(|(_, bits, _)| bits).collect())
}

/// Parses `node_id label` lines; ids must cover `0..n` exactly once.
fn parse_labels_text(text: &str, origin: &str, n: usize) -> Result<LabelVector> {
    let mut rows: Vec<(usize, usize, usize)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: origin.to_string(),
            line: lineno + 1,
            msg,
        };
        let mut parts = line.split_whitespace();
        let id = parts
            .next()
            .expect("non-empty line has a first token")
            .parse::<usize>()
            .map_err(|_| parse_err("bad node id".into()))?;
        let label = parts
            .next()
            .ok_or_else(|| parse_err("missing label".into()))?
            .parse::<usize>()
            .map_err(|_| parse_err("bad label".into()))?;
        if parts.next().is_some() {
            return Err(parse_err("trailing fields".into()));
        }
        rows.push((id, label, lineno + 1));
    }
    if rows.len() != n {
        return Err(Error::Config(format!(
            "label file defines {} nodes but the graph has {n}",
            rows.len()
        )));
    }
    let mut seen = HashSet::new();
    for (id, _, lineno) in &rows {
        if *id >= n {
            return Err(Error::Parse {
                path: origin.to_string(),
                line: *lineno,
                msg: format!("node id {id} out of range for {n} nodes"),
            });
        }
        if !seen.insert(*id) {
            return Err(Error::Parse {
                path: origin.to_string(),
                line: *lineno,
                msg: format!("duplicate node id {id}"),
            });
        }
    }
    rows.sort_by_key(|(id, _, _)| *id);
    let labels: Vec<usize> = rows.iter().map(|&(_, l, _)| l).collect();
    let k = labels.iter().max().map(|&m| m + 1).unwrap_or(1);
    LabelVector::new(labels, k)
}

/// Loads a `node_id label` table. With `expected_n` the ids must cover
/// `0..n` exactly once; otherwise the row count defines the node set.
pub fn load_labels_file(path: &Path, expected_n: Option<usize>) -> Result<LabelVector> {
    let text = std::fs::read_to_string(path)?;
    let origin = path.display().to_string();
    let n = match expected_n {
        Some(n) => n,
        None => text
            .lines()
            .filter(|l| {
                let l = l.trim();
                !l.is_empty() && !l.starts_with('#')
            })
            .count(),
    };
    parse_labels_text(&text, &origin, n)
}

/// Writes a `node_id label` table.
pub fn write_labels_file(labels: &LabelVector, path: &Path) -> Result<()> {
    let mut out = String::new();
    for (id, &lab) in labels.as_slice().iter().enumerate() {
        let _ = writeln!(out, "{id} {lab}");
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Loads an attribute graph from an edge list, an attribute table, and
/// optionally a label table. The attribute file defines the node set;
/// the edge file may not reference nodes outside it.
pub fn load_attribute_graph(
    edge_path: &Path,
    attribute_path: &Path,
    label_path: Option<&Path>,
) -> Result<AttributeGraph> {
    let attr_text = std::fs::read_to_string(attribute_path)?;
    let attributes = parse_attribute_text(&attr_text, &attribute_path.display().to_string())?;
    let n = attributes.len();

    let edge_text = std::fs::read_to_string(edge_path)?;
    let natural = WeightedGraph::parse_edge_list(&edge_text, None).map_err(|e| match e {
        Error::Parse { line, msg, .. } => Error::Parse {
            path: edge_path.display().to_string(),
            line,
            msg,
        },
        other => other,
    })?;
    if natural.n() > n {
        return Err(Error::Config(format!(
            "edge file `{}` references {} nodes but the attribute file defines {n}",
            edge_path.display(),
            natural.n()
        )));
    }
    let graph = if natural.n() == n {
        natural
    } else {
        // Isolated trailing nodes: widen to the attribute count.
        WeightedGraph::parse_edge_list(&edge_text, Some(n))?
    };

    let labels = match label_path {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            Some(parse_labels_text(&text, &path.display().to_string(), n)?)
        }
        None => None,
    };
    AttributeGraph::new(graph, attributes, labels)
}
