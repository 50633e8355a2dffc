//! Weighted undirected graphs over contiguous node ids `0..n`.
//!
//! Storage is an adjacency list sorted by neighbor id (deterministic
//! iteration) plus a hash map keyed on normalized `(min, max)` pairs for
//! expected O(1) weight lookup. The map is never iterated, so its order
//! cannot leak into results.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Undirected graph with strictly positive edge weights and no self-loops.
#[derive(Debug, Clone)]
pub struct WeightedGraph {
    n: usize,
    adj: Vec<Vec<(usize, f64)>>,
    weights: HashMap<(usize, usize), f64>,
    duplicate_overwrites: usize,
}

impl WeightedGraph {
    /// Builds a graph from an edge list.
    ///
    /// Duplicate `(i, j)` entries keep the last weight seen. Edges whose
    /// final weight is exactly zero are dropped. Endpoint order and the
    /// mirrored duplicate `(j, i)` are treated as the same edge.
    ///
    /// # Errors
    ///
    /// Returns an error on self-loops, negative weights, or node ids
    /// outside `0..n_nodes`.
    pub fn build(n_nodes: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut weights: HashMap<(usize, usize), f64> = HashMap::with_capacity(edges.len());
        let mut duplicate_overwrites = 0;
        for &(i, j, w) in edges {
            if i >= n_nodes {
                return Err(Error::NodeOutOfRange { id: i, n: n_nodes });
            }
            if j >= n_nodes {
                return Err(Error::NodeOutOfRange { id: j, n: n_nodes });
            }
            if i == j {
                return Err(Error::SelfLoop(i));
            }
            if w < 0.0 || !w.is_finite() {
                return Err(Error::NegativeWeight { i, j, w });
            }
            let key = (i.min(j), i.max(j));
            if weights.insert(key, w).is_some() {
                duplicate_overwrites += 1;
            }
        }
        weights.retain(|_, w| *w != 0.0);

        let mut adj = vec![Vec::new(); n_nodes];
        for (&(i, j), &w) in &weights {
            adj[i].push((j, w));
            adj[j].push((i, w));
        }
        for row in &mut adj {
            row.sort_unstable_by_key(|&(j, _)| j);
        }
        Ok(Self {
            n: n_nodes,
            adj,
            weights,
            duplicate_overwrites,
        })
    }

    /// Number of nodes.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of (undirected) edges.
    pub fn edge_count(&self) -> usize {
        self.weights.len()
    }

    /// How many input entries were overwritten by a later duplicate
    /// during [`WeightedGraph::build`].
    pub fn duplicate_overwrites(&self) -> usize {
        self.duplicate_overwrites
    }

    /// Neighbors of `i` with weights, sorted by neighbor id.
    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adj[i]
    }

    /// Weight of edge `(i, j)`, or `None` if absent.
    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        self.weights.get(&(i.min(j), i.max(j))).copied()
    }

    /// Whether edge `(i, j)` is present.
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.weights.contains_key(&(i.min(j), i.max(j)))
    }

    /// Overwrites the weight of an existing edge.
    ///
    /// # Errors
    ///
    /// Returns an error if the edge is absent or the new weight is not a
    /// strictly positive finite number. Reweighting never changes the
    /// edge set, so zero is rejected here (unlike in `build`).
    pub fn set_weight(&mut self, i: usize, j: usize, w: f64) -> Result<()> {
        if w <= 0.0 || !w.is_finite() {
            return Err(Error::NegativeWeight { i, j, w });
        }
        let key = (i.min(j), i.max(j));
        match self.weights.get_mut(&key) {
            Some(slot) => *slot = w,
            None => return Err(Error::EdgeNotFound(i, j)),
        }
        for &(a, b) in &[(i, j), (j, i)] {
            let row = &mut self.adj[a];
            let pos = row
                .binary_search_by_key(&b, |&(x, _)| x)
                .expect("adjacency and weight map out of sync");
            row[pos].1 = w;
        }
        Ok(())
    }

    /// Edges as `(i, j, w)` with `i < j`, sorted lexicographically.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.weights.len());
        for (i, row) in self.adj.iter().enumerate() {
            for &(j, w) in row {
                if i < j {
                    out.push((i, j, w));
                }
            }
        }
        out
    }

    /// Per-node sum of incident edge weights; zero for isolated nodes.
    pub fn weighted_degrees(&self) -> Vec<f64> {
        self.adj
            .iter()
            .map(|row| row.iter().map(|&(_, w)| w).sum())
            .collect()
    }

    /// Sum of all edge weights (each undirected edge counted once).
    pub fn total_weight(&self) -> f64 {
        self.adj
            .iter()
            .flat_map(|row| row.iter().map(|&(_, w)| w))
            .sum::<f64>()
            / 2.0
    }

    /// Largest edge weight, or `None` for an edgeless graph.
    pub fn max_weight(&self) -> Option<f64> {
        self.edges()
            .iter()
            .map(|&(_, _, w)| w)
            .fold(None, |acc, w| Some(acc.map_or(w, |m: f64| m.max(w))))
    }

    /// FNV-1a hash over `(n, sorted edges)` with weights hashed bit-exactly.
    ///
    /// Two graphs hash equal iff they have the same node count and the
    /// same edge set with bit-identical weights.
    pub fn content_hash(&self) -> u64 {
        const OFFSET: u64 = 0xcbf29ce484222325;
        const PRIME: u64 = 0x100000001b3;
        let mut h = OFFSET;
        let mut feed = |v: u64| {
            for byte in v.to_le_bytes() {
                h ^= u64::from(byte);
                h = h.wrapping_mul(PRIME);
            }
        };
        feed(self.n as u64);
        for (i, j, w) in self.edges() {
            feed(i as u64);
            feed(j as u64);
            feed(w.to_bits());
        }
        h
    }

    /// Serializes to the edge-list text format.
    ///
    /// One edge per line as `i j w` with `i < j` in sorted order, preceded
    /// by a `# n=<count>` comment so isolated trailing nodes survive a
    /// round-trip. Weights are printed with 17 significant digits, which
    /// reproduces every `f64` bit-exactly on parse.
    pub fn to_edge_list_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# n={}", self.n);
        for (i, j, w) in self.edges() {
            let _ = writeln!(out, "{} {} {:.16e}", i, j, w);
        }
        out
    }

    /// Writes the edge-list format to `path`.
    pub fn write_edge_list(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_edge_list_string().as_bytes())?;
        Ok(())
    }

    /// Parses the edge-list text format.
    ///
    /// Lines starting with `#` are comments; a `# n=<count>` comment sets
    /// the node count. `n_nodes` overrides any such comment; when both are
    /// absent the node count is `max id + 1`.
    pub fn parse_edge_list(text: &str, n_nodes: Option<usize>) -> Result<Self> {
        let mut edges = Vec::new();
        let mut header_n = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                let comment = comment.trim();
                if let Some(v) = comment.strip_prefix("n=") {
                    header_n = v.trim().parse::<usize>().ok();
                }
                continue;
            }
            let mut parts = line.split_whitespace();
            let parse_err = |msg: &str| Error::Parse {
                path: String::from("<edge list>"),
                line: lineno + 1,
                msg: msg.to_string(),
            };
            let i = parts
                .next()
                .ok_or_else(|| parse_err("missing source id"))?
                .parse::<usize>()
                .map_err(|_| parse_err("bad source id"))?;
            let j = parts
                .next()
                .ok_or_else(|| parse_err("missing target id"))?
                .parse::<usize>()
                .map_err(|_| parse_err("bad target id"))?;
            let w = parts
                .next()
                .ok_or_else(|| parse_err("missing weight"))?
                .parse::<f64>()
                .map_err(|_| parse_err("bad weight"))?;
            if parts.next().is_some() {
                return Err(parse_err("trailing fields"));
            }
            edges.push((i, j, w));
        }
        let implied = edges
            .iter()
            .map(|&(i, j, _)| i.max(j) + 1)
            .max()
            .unwrap_or(0);
        let n = n_nodes.or(header_n).unwrap_or(implied).max(implied);
        Self::build(n, &edges)
    }

    /// Loads the edge-list format from `path`.
    pub fn load_edge_list(path: &Path, n_nodes: Option<usize>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        let mut text = String::new();
        for line in BufReader::new(f).lines() {
            text.push_str(&line?);
            text.push('\n');
        }
        Self::parse_edge_list(&text, n_nodes).map_err(|e| match e {
            Error::Parse { line, msg, .. } => Error::Parse {
                path: path.display().to_string(),
                line,
                msg,
            },
            other => other,
        })
    }
}

/// Cluster assignment with labels in `0..k`.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct LabelVector {
    labels: Vec<usize>,
    k: usize,
}

impl LabelVector {
    /// Wraps raw labels, validating that each is `< k`.
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("label vector needs k >= 1".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::LabelOutOfRange { label: bad, k });
        }
        Ok(Self { labels, k })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of clusters the labels are drawn from.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.labels
    }

    pub fn get(&self, i: usize) -> usize {
        self.labels[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn build_rejects_self_loop() {
        let err = WeightedGraph::build(3, &[(1, 1, 1.0)]).unwrap_err();
        assert!(matches!(err, Error::SelfLoop(1)));
    }

    #[test]
    fn build_rejects_negative_weight() {
        let err = WeightedGraph::build(3, &[(0, 1, -0.5)]).unwrap_err();
        assert!(matches!(err, Error::NegativeWeight { .. }));
    }

    #[test]
    fn build_rejects_out_of_range_id() {
        let err = WeightedGraph::build(3, &[(0, 3, 1.0)]).unwrap_err();
        assert!(matches!(err, Error::NodeOutOfRange { id: 3, n: 3 }));
    }

    #[test]
    fn duplicates_keep_last_weight() {
        let g = WeightedGraph::build(3, &[(0, 1, 1.0), (1, 0, 2.5)]).unwrap();
        assert_eq!(g.weight(0, 1), Some(2.5));
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.duplicate_overwrites(), 1);
    }

    #[test]
    fn zero_weight_edges_are_dropped() {
        let g = WeightedGraph::build(3, &[(0, 1, 1.0), (0, 1, 0.0), (1, 2, 0.5)]).unwrap();
        assert!(!g.has_edge(0, 1));
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn degrees_match_hand_computation() {
        // Triangle 0-1-2 with weights 1, 2, 3 plus isolated node 3.
        let g = WeightedGraph::build(4, &[(0, 1, 1.0), (1, 2, 2.0), (0, 2, 3.0)]).unwrap();
        assert_eq!(g.weighted_degrees(), vec![4.0, 3.0, 5.0, 0.0]);
    }

    #[test]
    fn degree_sum_is_twice_total_weight() {
        let g = WeightedGraph::build(5, &[(0, 1, 0.3), (1, 2, 1.7), (3, 4, 2.0)]).unwrap();
        let deg_sum: f64 = g.weighted_degrees().iter().sum();
        assert!((deg_sum - 2.0 * g.total_weight()).abs() < 1e-12);
    }

    #[test]
    fn set_weight_requires_existing_edge() {
        let mut g = WeightedGraph::build(3, &[(0, 1, 1.0)]).unwrap();
        assert!(matches!(
            g.set_weight(0, 2, 1.0),
            Err(Error::EdgeNotFound(0, 2))
        ));
        g.set_weight(1, 0, 4.0).unwrap();
        assert_eq!(g.weight(0, 1), Some(4.0));
        assert_eq!(g.weighted_degrees(), vec![4.0, 4.0, 0.0]);
    }

    #[test]
    fn edge_list_round_trip_is_bit_exact() {
        let edges = vec![
            (0, 1, 0.1 + 0.2),
            (2, 5, 1.0 / 3.0),
            (4, 6, 7.213_412_312_3e-3),
        ];
        let g = WeightedGraph::build(8, &edges).unwrap();
        let text = g.to_edge_list_string();
        let back = WeightedGraph::parse_edge_list(&text, None).unwrap();
        assert_eq!(back.n(), 8);
        for (i, j, w) in g.edges() {
            assert_eq!(back.weight(i, j).map(f64::to_bits), Some(w.to_bits()));
        }
        assert_eq!(g.content_hash(), back.content_hash());
    }

    #[test]
    fn parse_accepts_comments_and_blank_lines() {
        let text = "# a comment\n\n0 1 1.5\n# another\n1 2 2.0\n";
        let g = WeightedGraph::parse_edge_list(text, None).unwrap();
        assert_eq!(g.n(), 3);
        assert_eq!(g.edge_count(), 2);
    }

    #[test]
    fn parse_reports_line_numbers() {
        let err = WeightedGraph::parse_edge_list("0 1 1.0\n0 2 oops\n", None).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn label_vector_validates_range() {
        assert!(LabelVector::new(vec![0, 1, 2], 3).is_ok());
        assert!(matches!(
            LabelVector::new(vec![0, 3], 3),
            Err(Error::LabelOutOfRange { label: 3, k: 3 })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        /// Edge input order never changes the resulting graph.
        #[test]
        fn build_is_permutation_invariant(
            mut edges in proptest::collection::vec((0usize..20, 0usize..20, 0.01f64..10.0), 0..60),
            swap_seed in any::<u64>(),
        ) {
            edges.retain(|&(i, j, _)| i != j);
            // Deduplicate endpoint pairs so last-write-wins cannot interact
            // with the reordering.
            let mut seen = std::collections::HashSet::new();
            edges.retain(|&(i, j, _)| seen.insert((i.min(j), i.max(j))));

            let g1 = WeightedGraph::build(20, &edges).unwrap();
            let mut shuffled = edges.clone();
            let mut state = swap_seed;
            for i in (1..shuffled.len()).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let j = (state >> 33) as usize % (i + 1);
                shuffled.swap(i, j);
            }
            let g2 = WeightedGraph::build(20, &shuffled).unwrap();
            prop_assert_eq!(g1.content_hash(), g2.content_hash());
        }

        /// Symmetry: weight lookup ignores endpoint order.
        #[test]
        fn weight_lookup_is_symmetric(
            edges in proptest::collection::vec((0usize..12, 0usize..12, 0.01f64..5.0), 0..40),
        ) {
            let clean: Vec<_> = edges.into_iter().filter(|&(i, j, _)| i != j).collect();
            let g = WeightedGraph::build(12, &clean).unwrap();
            for i in 0..12 {
                for j in 0..12 {
                    prop_assert_eq!(g.weight(i, j), g.weight(j, i));
                }
            }
        }
    }
}
