//! Radial feeder description, the feeder text format, and the topological
//! operators derived from the parent relation.
//!
//! Nodes are re-indexed at parse time so that the substation is node 0 and
//! every parent precedes its children. Per-node vectors elsewhere in the crate
//! use row `k - 1` for node `k`, since the substation carries no variables.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The bundled 37-node feeder in the text format accepted by [`parse_feeder`].
pub const IEEE37_MODIFIED: &str = include_str!("../data/ieee37_modified.feeder");

/// Parses the bundled 37-node feeder.
pub fn ieee37_modified() -> RadialNetwork {
    parse_feeder(IEEE37_MODIFIED).expect("bundled feeder is valid")
}

/// A distribution line feeding node `to` from its parent `from`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    pub p_limit: f64,
    pub q_limit: f64,
}

/// An aggregator attached to a non-substation node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregatorSite {
    pub label: String,
    pub node: usize,
}

/// Unvalidated feeder contents keyed by external node ids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeederDescription {
    pub base_mva: f64,
    pub base_kv: f64,
    pub substation: String,
    pub v0: f64,
    pub delta0: f64,
    pub epsilon: f64,
    /// `(id, name)` pairs; the name may be empty.
    pub nodes: Vec<(String, String)>,
    pub lines: Vec<LineDescription>,
    /// `(label, node id)` pairs.
    pub aggregators: Vec<(String, String)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineDescription {
    pub from: String,
    pub to: String,
    pub r: f64,
    pub x: f64,
    pub p_limit: f64,
    pub q_limit: f64,
}

/// A validated radial feeder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialNetwork {
    pub base_mva: f64,
    pub base_kv: f64,
    /// Substation voltage magnitude in pu.
    pub v0: f64,
    /// Substation voltage angle in radians.
    pub delta0: f64,
    /// Allowed voltage deviation from `v0` in pu.
    pub epsilon: f64,
    node_ids: Vec<String>,
    node_names: Vec<String>,
    lines: Vec<Line>,
    aggregators: Vec<AggregatorSite>,
}

impl RadialNetwork {
    /// Validates a description and re-indexes it into topological order.
    pub fn new(desc: FeederDescription) -> Result<Self> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(desc.base_mva) || !positive(desc.base_kv) {
            return Err(Error::InvalidNetwork(
                "base quantities must be positive".into(),
            ));
        }
        if !positive(desc.v0) || !desc.delta0.is_finite() {
            return Err(Error::InvalidNetwork(
                "substation voltage must be positive".into(),
            ));
        }
        if !positive(desc.epsilon) {
            return Err(Error::InvalidNetwork("epsilon must be positive".into()));
        }

        let mut index: HashMap<&str, usize> = HashMap::new();
        for (i, (id, _)) in desc.nodes.iter().enumerate() {
            if index.insert(id.as_str(), i).is_some() {
                return Err(Error::InvalidNetwork(format!("node {id} declared twice")));
            }
        }
        let root = *index.get(desc.substation.as_str()).ok_or_else(|| {
            Error::InvalidNetwork(format!(
                "substation {} is not a declared node",
                desc.substation
            ))
        })?;
        let n_total = desc.nodes.len();

        let mut seen = HashSet::new();
        let mut uf = UnionFind::new(n_total);
        let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_total];
        for (li, line) in desc.lines.iter().enumerate() {
            let lookup = |id: &str| {
                index.get(id).copied().ok_or_else(|| {
                    Error::InvalidNetwork(format!("line references unknown node {id}"))
                })
            };
            let (a, b) = (lookup(&line.from)?, lookup(&line.to)?);
            if a == b {
                return Err(Error::Cycle(line.to.clone()));
            }
            if !seen.insert((a, b)) {
                return Err(Error::DuplicateLine(line.from.clone(), line.to.clone()));
            }
            let bad = |v: f64| !v.is_finite() || v < 0.0;
            if bad(line.r) || bad(line.x) || !(line.r > 0.0 || line.x > 0.0) {
                return Err(Error::BadImpedance(line.to.clone()));
            }
            if !positive(line.p_limit) || !positive(line.q_limit) {
                return Err(Error::InvalidNetwork(format!(
                    "line {} -> {} needs positive flow limits",
                    line.from, line.to
                )));
            }
            if !uf.union(a, b) {
                return Err(Error::Cycle(line.to.clone()));
            }
            adjacency[a].push((b, li));
            adjacency[b].push((a, li));
        }
        for (i, (id, _)) in desc.nodes.iter().enumerate() {
            if uf.find(i) != uf.find(root) {
                return Err(Error::Disconnected(id.clone()));
            }
        }

        // Kahn's order with file position as the tie-break, so a file that is
        // already topologically ordered keeps its numbering.
        let mut new_index = vec![usize::MAX; n_total];
        let mut parent_line: Vec<Option<(usize, usize)>> = vec![None; n_total];
        let mut order = Vec::with_capacity(n_total);
        let mut heap = BinaryHeap::new();
        heap.push(Reverse(root));
        new_index[root] = usize::MAX - 1;
        while let Some(Reverse(v)) = heap.pop() {
            new_index[v] = order.len();
            order.push(v);
            for &(w, li) in &adjacency[v] {
                if new_index[w] == usize::MAX {
                    new_index[w] = usize::MAX - 1;
                    parent_line[w] = Some((v, li));
                    heap.push(Reverse(w));
                }
            }
        }

        let node_ids = order.iter().map(|&v| desc.nodes[v].0.clone()).collect();
        let node_names = order.iter().map(|&v| desc.nodes[v].1.clone()).collect();
        let lines = order[1..]
            .iter()
            .map(|&v| {
                let (parent, li) = parent_line[v].expect("non-root node has a parent");
                let d = &desc.lines[li];
                Line {
                    from: new_index[parent],
                    to: new_index[v],
                    r: d.r,
                    x: d.x,
                    p_limit: d.p_limit,
                    q_limit: d.q_limit,
                }
            })
            .collect();

        let mut labels = HashSet::new();
        let mut aggregators = Vec::with_capacity(desc.aggregators.len());
        for (label, node) in &desc.aggregators {
            if !labels.insert(label.as_str()) {
                return Err(Error::InvalidNetwork(format!(
                    "aggregator {label} declared twice"
                )));
            }
            match index.get(node.as_str()) {
                Some(&v) if v != root => aggregators.push(AggregatorSite {
                    label: label.clone(),
                    node: new_index[v],
                }),
                _ => {
                    return Err(Error::UnknownAggregatorNode {
                        label: label.clone(),
                        node: node.clone(),
                    })
                }
            }
        }

        Ok(Self {
            base_mva: desc.base_mva,
            base_kv: desc.base_kv,
            v0: desc.v0,
            delta0: desc.delta0,
            epsilon: desc.epsilon,
            node_ids,
            node_names,
            lines,
            aggregators,
        })
    }

    /// Number of non-substation nodes, which is also the number of lines.
    pub fn node_count(&self) -> usize {
        self.lines.len()
    }

    pub fn aggregator_count(&self) -> usize {
        self.aggregators.len()
    }

    /// Parent of node `k` (1-based).
    pub fn parent(&self, k: usize) -> usize {
        self.lines[k - 1].from
    }

    /// The line feeding node `k` (1-based).
    pub fn line(&self, k: usize) -> &Line {
        &self.lines[k - 1]
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn aggregators(&self) -> &[AggregatorSite] {
        &self.aggregators
    }

    /// External id of internal node `k`.
    pub fn node_id(&self, k: usize) -> &str {
        &self.node_ids[k]
    }

    pub fn node_name(&self, k: usize) -> &str {
        &self.node_names[k]
    }

    /// Internal index of the node with external id `id`.
    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.node_ids.iter().position(|n| n == id)
    }

    pub fn aggregator_index(&self, label: &str) -> Option<usize> {
        self.aggregators.iter().position(|a| a.label == label)
    }

    /// Node-by-aggregator incidence matrix; entry `(k-1, j)` is 1 when
    /// aggregator `j` sits at node `k`.
    pub fn incidence(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.node_count(), self.aggregator_count());
        for (j, site) in self.aggregators.iter().enumerate() {
            a[(site.node - 1, j)] = 1.0;
        }
        a
    }

    /// Sums per-aggregator values onto nodes.
    pub fn nodal(&self, per_aggregator: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.node_count()];
        for (site, v) in self.aggregators.iter().zip(per_aggregator) {
            out[site.node - 1] += v;
        }
        out
    }

    /// Returns a copy with a different voltage band.
    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::InvalidNetwork("epsilon must be positive".into()));
        }
        self.epsilon = epsilon;
        Ok(self)
    }

    /// Returns a copy with new flow limits on the line feeding node `k`.
    pub fn with_line_limits(mut self, k: usize, p_limit: f64, q_limit: f64) -> Result<Self> {
        if k == 0 || k > self.node_count() {
            return Err(Error::InvalidNetwork(format!("no line feeds node {k}")));
        }
        if !(p_limit.is_finite() && p_limit > 0.0 && q_limit.is_finite() && q_limit > 0.0) {
            return Err(Error::InvalidNetwork("flow limits must be positive".into()));
        }
        self.lines[k - 1].p_limit = p_limit;
        self.lines[k - 1].q_limit = q_limit;
        Ok(self)
    }

    /// Writes the network back out in the feeder text format.
    pub fn to_feeder_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[base]");
        let _ = writeln!(s, "mva = {}", self.base_mva);
        let _ = writeln!(s, "kv = {}", self.base_kv);
        let _ = writeln!(s, "substation = {}", self.node_ids[0]);
        let _ = writeln!(s, "v0_pu = {}", self.v0);
        let _ = writeln!(s, "angle0_rad = {}", self.delta0);
        let _ = writeln!(s, "\n[nodes]");
        for (id, name) in self.node_ids.iter().zip(&self.node_names) {
            if name.is_empty() {
                let _ = writeln!(s, "{id}");
            } else {
                let _ = writeln!(s, "{id}  {name}");
            }
        }
        let _ = writeln!(s, "\n[lines]");
        for l in &self.lines {
            let _ = writeln!(
                s,
                "{}  {}  {}  {}  {}  {}",
                self.node_ids[l.from], self.node_ids[l.to], l.r, l.x, l.p_limit, l.q_limit
            );
        }
        let _ = writeln!(s, "\n[aggregators]");
        for a in &self.aggregators {
            let _ = writeln!(s, "{}  {}", a.label, self.node_ids[a.node]);
        }
        let _ = writeln!(s, "\n[limits]");
        let _ = writeln!(s, "epsilon_pu = {}", self.epsilon);
        s
    }
}

/// Parses and validates a feeder document.
///
/// The document has `[base]`, `[nodes]`, `[lines]`, `[aggregators]` and
/// `[limits]` sections. `#` starts a comment. Keyed sections use
/// `key = value`; the others hold whitespace separated rows:
///
/// * `[nodes]`: `id [name]`
/// * `[lines]`: `from to r_pu x_pu p_limit_pu q_limit_pu`
/// * `[aggregators]`: `label node`
pub fn parse_feeder(text: &str) -> Result<RadialNetwork> {
    RadialNetwork::new(parse_description(text)?)
}

/// Reads a feeder file from disk.
pub fn load_feeder(path: impl AsRef<std::path::Path>) -> Result<RadialNetwork> {
    parse_feeder(&std::fs::read_to_string(path)?)
}

/// Parses the document without validating the topology.
pub fn parse_description(text: &str) -> Result<FeederDescription> {
    #[derive(PartialEq, Clone, Copy)]
    enum Section {
        None,
        Base,
        Nodes,
        Lines,
        Aggregators,
        Limits,
    }
    let err = |line: usize, msg: String| Error::Parse { line, msg };
    let mut section = Section::None;
    let mut keys: HashMap<&'static str, f64> = HashMap::new();
    let mut substation = None;
    let mut nodes = Vec::new();
    let mut lines = Vec::new();
    let mut aggregators = Vec::new();
    let mut seen_sections = HashSet::new();

    for (i, raw) in text.lines().enumerate() {
        let no = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|c| c.strip_suffix(']')) {
            section = match name.trim() {
                "base" => Section::Base,
                "nodes" => Section::Nodes,
                "lines" => Section::Lines,
                "aggregators" => Section::Aggregators,
                "limits" => Section::Limits,
                other => return Err(err(no, format!("unknown section [{other}]"))),
            };
            if !seen_sections.insert(name.trim().to_string()) {
                return Err(err(no, format!("section [{}] repeated", name.trim())));
            }
            continue;
        }
        let number = |tok: &str| {
            tok.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(no, format!("expected a number, found {tok:?}")))
        };
        match section {
            Section::None => return Err(err(no, "content before the first section".into())),
            Section::Base | Section::Limits => {
                let (key, value) = content
                    .split_once('=')
                    .ok_or_else(|| err(no, "expected key = value".into()))?;
                let (key, value) = (key.trim(), value.trim());
                let slot: &'static str = match (section, key) {
                    (Section::Base, "substation") => {
                        substation = Some(value.to_string());
                        continue;
                    }
                    (Section::Base, "mva") => "mva",
                    (Section::Base, "kv") => "kv",
                    (Section::Base, "v0_pu") => "v0",
                    (Section::Base, "angle0_rad") => "delta0",
                    (Section::Limits, "epsilon_pu") => "epsilon",
                    _ => return Err(err(no, format!("unknown key {key:?}"))),
                };
                if keys.insert(slot, number(value)?).is_some() {
                    return Err(err(no, format!("key {key:?} repeated")));
                }
            }
            Section::Nodes => {
                let mut toks = content.split_whitespace();
                let id = toks.next().unwrap_or_default().to_string();
                let name = toks.collect::<Vec<_>>().join(" ");
                nodes.push((id, name));
            }
            Section::Lines => {
                let toks: Vec<&str> = content.split_whitespace().collect();
                if toks.len() != 6 {
                    return Err(err(
                        no,
                        format!("line row needs 6 fields, found {}", toks.len()),
                    ));
                }
                lines.push(LineDescription {
                    from: toks[0].to_string(),
                    to: toks[1].to_string(),
                    r: number(toks[2])?,
                    x: number(toks[3])?,
                    p_limit: number(toks[4])?,
                    q_limit: number(toks[5])?,
                });
            }
            Section::Aggregators => {
                let toks: Vec<&str> = content.split_whitespace().collect();
                if toks.len() != 2 {
                    return Err(err(no, "aggregator row needs label and node".into()));
                }
                aggregators.push((toks[0].to_string(), toks[1].to_string()));
            }
        }
    }

    let end = text.lines().count();
    let need = |k: &str| {
        keys.get(k)
            .copied()
            .ok_or_else(|| err(end, format!("missing {k}")))
    };
    if nodes.is_empty() {
        return Err(err(end, "no nodes declared".into()));
    }
    Ok(FeederDescription {
        base_mva: need("mva")?,
        base_kv: need("kv")?,
        substation: substation.ok_or_else(|| err(end, "missing substation".into()))?,
        v0: keys.get("v0").copied().unwrap_or(1.0),
        delta0: keys.get("delta0").copied().unwrap_or(0.0),
        epsilon: need("epsilon")?,
        nodes,
        lines,
        aggregators,
    })
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }

    fn find(&mut self, mut v: usize) -> usize {
        while self.0[v] != v {
            self.0[v] = self.0[self.0[v]];
            v = self.0[v];
        }
        v
    }

    /// Returns false when `a` and `b` were already connected.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        self.0[ra] = rb;
        ra != rb
    }
}

/// Downstream/upstream sets and the matrices built from them.
///
/// Sets hold 1-based node ids and never contain the substation. Matrices are
/// N×N with row and column `k - 1` for node `k`.
#[derive(Clone, Debug)]
pub struct TopologyOperators {
    parent: Vec<usize>,
    children: Vec<Vec<usize>>,
    downstream: Vec<Vec<usize>>,
    upstream: Vec<Vec<usize>>,
    tree: DMatrix<f64>,
    parent_difference: DMatrix<f64>,
    root_indicator: DVector<f64>,
}

/// Derives the topological operators of a validated network.
pub fn build_topology(net: &RadialNetwork) -> TopologyOperators {
    let n = net.node_count();
    let mut parent = vec![0; n + 1];
    let mut children = vec![Vec::new(); n + 1];
    for k in 1..=n {
        parent[k] = net.parent(k);
        children[parent[k]].push(k);
    }

    // Parents precede children, so one reverse pass accumulates subtrees.
    let mut downstream: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
    for k in (1..=n).rev() {
        let mut below = std::mem::take(&mut downstream[k]);
        below.sort_unstable();
        let up = parent[k];
        downstream[up].push(k);
        downstream[up].extend_from_slice(&below);
        downstream[k] = below;
    }
    downstream[0].sort_unstable();

    let mut upstream = vec![Vec::new(); n + 1];
    for k in 1..=n {
        let mut path = Vec::new();
        let mut v = parent[k];
        while v != 0 {
            path.push(v);
            v = parent[v];
        }
        path.sort_unstable();
        upstream[k] = path;
    }

    let mut tree = DMatrix::zeros(n, n);
    for k in 1..=n {
        for &l in &downstream[k] {
            tree[(k - 1, l - 1)] = 1.0;
        }
    }

    let mut parent_difference = DMatrix::zeros(n, n);
    let mut root_indicator = DVector::zeros(n);
    for k in 1..=n {
        parent_difference[(k - 1, k - 1)] = -1.0;
        if parent[k] == 0 {
            root_indicator[k - 1] = 1.0;
        } else {
            parent_difference[(k - 1, parent[k] - 1)] = 1.0;
        }
    }

    TopologyOperators {
        parent,
        children,
        downstream,
        upstream,
        tree,
        parent_difference,
        root_indicator,
    }
}

impl TopologyOperators {
    pub fn node_count(&self) -> usize {
        self.parent.len() - 1
    }

    pub fn parent(&self, k: usize) -> usize {
        self.parent[k]
    }

    /// Children of node `k`; `children(0)` lists the root lines.
    pub fn children(&self, k: usize) -> &[usize] {
        &self.children[k]
    }

    /// Nodes strictly below `k`, sorted ascending.
    pub fn downstream(&self, k: usize) -> &[usize] {
        &self.downstream[k]
    }

    /// Non-substation nodes strictly above `k`, sorted ascending.
    pub fn upstream(&self, k: usize) -> &[usize] {
        &self.upstream[k]
    }

    /// `T[k, l] = 1` exactly when `l` is downstream of `k`.
    pub fn tree(&self) -> &DMatrix<f64> {
        &self.tree
    }

    /// Maps node values `v` to `v[u(k)] - v[k]`, omitting the substation term.
    pub fn parent_difference(&self) -> &DMatrix<f64> {
        &self.parent_difference
    }

    /// Indicator of nodes fed directly by the substation; carries the omitted
    /// substation term of [`Self::parent_difference`].
    pub fn root_indicator(&self) -> &DVector<f64> {
        &self.root_indicator
    }

    /// `I + T`.
    pub fn subtree(&self) -> DMatrix<f64> {
        let n = self.node_count();
        &self.tree + DMatrix::identity(n, n)
    }
}
