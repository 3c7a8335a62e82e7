//! Chimera graphs and the RAN1 / AC3 instance classes.
//!
//! A Chimera graph `C(rows, cols, L)` is a grid of `K_{L,L}` unit cells. Each
//! cell has a horizontal and a vertical shore of `L` qubits; every horizontal
//! qubit couples to every vertical qubit of its cell. Horizontal qubit `k`
//! also couples to horizontal qubit `k` of the cells to its left and right,
//! and vertical qubit `k` to vertical qubit `k` of the cells above and below.
//!
//! Ideal node index: `((row * cols + col) * 2 + shore) * L + offset` with
//! shore 0 horizontal and 1 vertical. Dead qubits are removed and surviving
//! nodes renumbered in ideal-index order.

use std::collections::{HashSet, VecDeque};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Edge, IsingModel, ModelMeta};
use crate::rng::{self, tag};

/// Deserializes from the full struct or from a tag such as `C4`, `4` or `2x3`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SpecRepr")]
pub struct ChimeraSpec {
    pub rows: usize,
    pub cols: usize,
    #[serde(default = "default_shore")]
    pub shore: usize,
    /// Ideal indices of qubits to delete.
    #[serde(default)]
    pub dead_qubits: Vec<usize>,
    /// Ideal index pairs of couplers to delete.
    #[serde(default)]
    pub dead_couplers: Vec<(usize, usize)>,
}

fn default_shore() -> usize {
    4
}

#[derive(Deserialize)]
struct SpecFields {
    rows: usize,
    cols: usize,
    #[serde(default = "default_shore")]
    shore: usize,
    #[serde(default)]
    dead_qubits: Vec<usize>,
    #[serde(default)]
    dead_couplers: Vec<(usize, usize)>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SpecRepr {
    Tag(String),
    Full(SpecFields),
}

impl TryFrom<SpecRepr> for ChimeraSpec {
    type Error = Error;

    fn try_from(r: SpecRepr) -> Result<Self> {
        match r {
            SpecRepr::Tag(s) => s.parse(),
            SpecRepr::Full(f) => Ok(ChimeraSpec {
                rows: f.rows,
                cols: f.cols,
                shore: f.shore,
                dead_qubits: f.dead_qubits,
                dead_couplers: f.dead_couplers,
            }),
        }
    }
}

impl FromStr for ChimeraSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let body = s.trim_start_matches(['C', 'c']);
        let bad = || Error::Config(format!("bad size `{s}`"));
        let (r, c) = match body.split_once('x') {
            Some((r, c)) => (r.parse().map_err(|_| bad())?, c.parse().map_err(|_| bad())?),
            None => {
                let n = body.parse().map_err(|_| bad())?;
                (n, n)
            }
        };
        if r == 0 || c == 0 {
            return Err(bad());
        }
        Ok(ChimeraSpec::new(r, c))
    }
}

impl ChimeraSpec {
    pub fn square(n: usize) -> Self {
        ChimeraSpec::new(n, n)
    }

    pub fn new(rows: usize, cols: usize) -> Self {
        ChimeraSpec {
            rows,
            cols,
            shore: 4,
            dead_qubits: Vec::new(),
            dead_couplers: Vec::new(),
        }
    }

    pub fn with_dead_qubits(mut self, dead: Vec<usize>) -> Self {
        self.dead_qubits = dead;
        self
    }

    /// Short tag such as `C4` or `C2x3`, with a `-dN` suffix for defects.
    pub fn tag(&self) -> String {
        let mut s = if self.rows == self.cols {
            format!("C{}", self.rows)
        } else {
            format!("C{}x{}", self.rows, self.cols)
        };
        let dead = self.dead_qubits.len() + self.dead_couplers.len();
        if dead > 0 {
            s.push_str(&format!("-d{dead}"));
        }
        s
    }

    fn ideal_nodes(&self) -> usize {
        self.rows * self.cols * 2 * self.shore
    }

    fn ideal_index(&self, c: ChimeraCoord) -> usize {
        ((c.row * self.cols + c.col) * 2 + c.shore) * self.shore + c.offset
    }

    fn coord(&self, idx: usize) -> ChimeraCoord {
        let offset = idx % self.shore;
        let rest = idx / self.shore;
        let shore = rest % 2;
        let cell = rest / 2;
        ChimeraCoord {
            row: cell / self.cols,
            col: cell % self.cols,
            shore,
            offset,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChimeraCoord {
    pub row: usize,
    pub col: usize,
    /// 0 = horizontal, 1 = vertical.
    pub shore: usize,
    pub offset: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeKind {
    Intra,
    Inter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyEdge {
    pub i: usize,
    pub j: usize,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyGraph {
    pub spec: ChimeraSpec,
    pub n_nodes: usize,
    pub edges: Vec<TopologyEdge>,
    pub coords: Vec<ChimeraCoord>,
    pub ideal_index: Vec<usize>,
    /// Two-coloring: `(row + col + shore) mod 2`.
    pub colors: Vec<u8>,
}

fn classify(a: ChimeraCoord, b: ChimeraCoord) -> Option<EdgeKind> {
    if a.row == b.row && a.col == b.col {
        return (a.shore != b.shore).then_some(EdgeKind::Intra);
    }
    if a.shore != b.shore || a.offset != b.offset {
        return None;
    }
    let horizontal_step = a.row == b.row && a.col.abs_diff(b.col) == 1;
    let vertical_step = a.col == b.col && a.row.abs_diff(b.row) == 1;
    match a.shore {
        0 if horizontal_step => Some(EdgeKind::Inter),
        1 if vertical_step => Some(EdgeKind::Inter),
        _ => None,
    }
}

pub fn build_chimera(spec: &ChimeraSpec) -> Result<TopologyGraph> {
    if spec.rows == 0 || spec.cols == 0 || spec.shore == 0 {
        return Err(Error::InvalidTopology("rows, cols and shore must all be at least 1".into()));
    }
    let ideal = spec.ideal_nodes();
    let mut dead = vec![false; ideal];
    for &q in &spec.dead_qubits {
        if q >= ideal {
            return Err(Error::InvalidTopology(format!("dead qubit {q} outside ideal graph of {ideal}")));
        }
        dead[q] = true;
    }
    let mut dead_couplers = HashSet::new();
    for &(a, b) in &spec.dead_couplers {
        if a >= ideal || b >= ideal || classify(spec.coord(a), spec.coord(b)).is_none() {
            return Err(Error::InvalidTopology(format!("dead coupler ({a},{b}) is not an ideal edge")));
        }
        dead_couplers.insert((a.min(b), a.max(b)));
    }

    let mut new_index = vec![usize::MAX; ideal];
    let mut coords = Vec::new();
    let mut ideal_index = Vec::new();
    for q in 0..ideal {
        if !dead[q] {
            new_index[q] = coords.len();
            coords.push(spec.coord(q));
            ideal_index.push(q);
        }
    }

    let mut edges = Vec::new();
    for row in 0..spec.rows {
        for col in 0..spec.cols {
            let at = |shore, offset, r, c| spec.ideal_index(ChimeraCoord { row: r, col: c, shore, offset });
            let mut push = |a: usize, b: usize, kind| {
                let key = (a.min(b), a.max(b));
                if !dead[a] && !dead[b] && !dead_couplers.contains(&key) {
                    edges.push(TopologyEdge {
                        i: new_index[key.0],
                        j: new_index[key.1],
                        kind,
                    });
                }
            };
            for h in 0..spec.shore {
                for v in 0..spec.shore {
                    push(at(0, h, row, col), at(1, v, row, col), EdgeKind::Intra);
                }
            }
            for k in 0..spec.shore {
                if col + 1 < spec.cols {
                    push(at(0, k, row, col), at(0, k, row, col + 1), EdgeKind::Inter);
                }
                if row + 1 < spec.rows {
                    push(at(1, k, row, col), at(1, k, row + 1, col), EdgeKind::Inter);
                }
            }
        }
    }

    let colors = coords.iter().map(|c| ((c.row + c.col + c.shore) % 2) as u8).collect();
    Ok(TopologyGraph {
        spec: spec.clone(),
        n_nodes: coords.len(),
        edges,
        coords,
        ideal_index,
        colors,
    })
}

impl TopologyGraph {
    pub fn coloring(&self) -> Coloring {
        Coloring::from_colors(&self.colors)
    }

    pub fn n_intra(&self) -> usize {
        self.edges.iter().filter(|e| e.kind == EdgeKind::Intra).count()
    }

    pub fn n_inter(&self) -> usize {
        self.edges.iter().filter(|e| e.kind == EdgeKind::Inter).count()
    }

    /// Recomputes each edge's kind from node coordinates.
    pub fn recomputed_kinds(&self) -> Vec<Option<EdgeKind>> {
        self.edges
            .iter()
            .map(|e| classify(self.coords[e.i], self.coords[e.j]))
            .collect()
    }

    /// Order in which to eliminate variables column by column. Within a
    /// column the vertical qubits go first, top to bottom, then the
    /// horizontal ones; the frontier stays at one column of horizontals.
    pub fn column_sweep_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.n_nodes).collect();
        order.sort_by_key(|&v| {
            let c = self.coords[v];
            (c.col, c.shore != 1, c.row, c.offset)
        });
        order
    }
}

fn generator_meta(graph: &TopologyGraph, class: &str, seed: u64) -> ModelMeta {
    ModelMeta {
        label: format!("{class}-{}-s{seed}", graph.spec.tag()),
        generator: class.to_string(),
        seed: Some(seed),
    }
}

/// RAN1: couplings i.i.d. uniform on {-1, +1}, no fields.
pub fn gen_ran1(graph: &TopologyGraph, seed: u64) -> IsingModel {
    let mut rng = rng::tagged(seed, tag::GENERATOR, 0);
    let edges = graph
        .edges
        .iter()
        .map(|e| Edge {
            i: e.i,
            j: e.j,
            weight: if rng.gen::<bool>() { 1.0 } else { -1.0 },
        })
        .collect();
    IsingModel::new(graph.n_nodes, edges, vec![0.0; graph.n_nodes], generator_meta(graph, "ran1", seed))
        .expect("chimera edges form a valid model")
}

/// AC3: intra-cell couplings uniform on {-1/3, +1/3}, inter-cell couplings -1.
///
/// With `randomize_inter_gauge` the inter-cell signs are drawn uniformly from
/// {-1, +1} instead, which is equivalent up to a spin gauge.
pub fn gen_ac3(graph: &TopologyGraph, seed: u64, randomize_inter_gauge: bool) -> IsingModel {
    let mut rng = rng::tagged(seed, tag::GENERATOR, 1);
    let edges = graph
        .edges
        .iter()
        .map(|e| {
            let weight = match e.kind {
                EdgeKind::Intra => {
                    if rng.gen::<bool>() {
                        1.0 / 3.0
                    } else {
                        -1.0 / 3.0
                    }
                }
                EdgeKind::Inter if randomize_inter_gauge => {
                    if rng.gen::<bool>() {
                        1.0
                    } else {
                        -1.0
                    }
                }
                EdgeKind::Inter => -1.0,
            };
            Edge { i: e.i, j: e.j, weight }
        })
        .collect();
    IsingModel::new(graph.n_nodes, edges, vec![0.0; graph.n_nodes], generator_meta(graph, "ac3", seed))
        .expect("chimera edges form a valid model")
}

/// Problem class selector used by configs and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemClass {
    Ran1,
    Ac3,
}

impl ProblemClass {
    pub fn generate(self, graph: &TopologyGraph, seed: u64) -> IsingModel {
        match self {
            ProblemClass::Ran1 => gen_ran1(graph, seed),
            ProblemClass::Ac3 => gen_ac3(graph, seed, false),
        }
    }

    /// Default terminal inverse temperature of the annealer for this class.
    pub fn default_beta_t(self) -> f64 {
        match self {
            ProblemClass::Ran1 => 3.54,
            ProblemClass::Ac3 => 4.82,
        }
    }
}

impl std::str::FromStr for ProblemClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ran1" => Ok(ProblemClass::Ran1),
            "ac3" => Ok(ProblemClass::Ac3),
            other => Err(Error::InvalidArgument(format!("unknown problem class `{other}`"))),
        }
    }
}

/// A partition of the spins into independent sets, updated in class order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Coloring {
    classes: Vec<Vec<usize>>,
}

impl Coloring {
    pub fn from_colors(colors: &[u8]) -> Self {
        let k = colors.iter().map(|&c| c as usize + 1).max().unwrap_or(0);
        let mut classes = vec![Vec::new(); k];
        for (v, &c) in colors.iter().enumerate() {
            classes[c as usize].push(v);
        }
        classes.retain(|c| !c.is_empty());
        Coloring { classes }
    }

    pub fn from_classes(classes: Vec<Vec<usize>>) -> Self {
        Coloring { classes }
    }

    /// Greedy coloring in index order, for graphs without a known bipartition.
    pub fn greedy(model: &IsingModel) -> Self {
        let n = model.n_spins();
        let mut color = vec![usize::MAX; n];
        for v in 0..n {
            let used: HashSet<usize> = model.neighbors(v).map(|(u, _)| color[u]).collect();
            color[v] = (0..).find(|c| !used.contains(c)).unwrap();
        }
        let k = color.iter().map(|c| c + 1).max().unwrap_or(0);
        let mut classes = vec![Vec::new(); k];
        for (v, c) in color.into_iter().enumerate() {
            classes[c].push(v);
        }
        Coloring { classes }
    }

    /// Two-coloring by breadth-first search, if the model graph is bipartite.
    pub fn bipartite(model: &IsingModel) -> Option<Self> {
        let colors = bfs_two_coloring(model.n_spins(), model.edges().iter().map(|e| (e.i, e.j)))?;
        Some(Coloring::from_colors(&colors))
    }

    pub fn classes(&self) -> &[Vec<usize>] {
        &self.classes
    }

    pub fn n_colors(&self) -> usize {
        self.classes.len()
    }

    /// Checks that the classes partition the spins and are independent sets.
    pub fn validate(&self, model: &IsingModel) -> Result<()> {
        let n = model.n_spins();
        let mut class_of = vec![usize::MAX; n];
        for (c, class) in self.classes.iter().enumerate() {
            for &v in class {
                if v >= n {
                    return Err(Error::InvalidColoring(format!("spin {v} out of range")));
                }
                if class_of[v] != usize::MAX {
                    return Err(Error::InvalidColoring(format!("spin {v} appears twice")));
                }
                class_of[v] = c;
            }
        }
        if let Some(v) = class_of.iter().position(|&c| c == usize::MAX) {
            return Err(Error::InvalidColoring(format!("spin {v} has no color")));
        }
        for e in model.edges() {
            if class_of[e.i] == class_of[e.j] {
                return Err(Error::InvalidColoring(format!(
                    "edge ({},{}) joins two spins of color {}",
                    e.i, e.j, class_of[e.i]
                )));
            }
        }
        Ok(())
    }
}

/// Breadth-first 2-coloring; `None` if an odd cycle exists.
pub fn bfs_two_coloring(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Option<Vec<u8>> {
    let mut adj = vec![Vec::new(); n];
    for (a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut color = vec![u8::MAX; n];
    let mut queue = VecDeque::new();
    for start in 0..n {
        if color[start] != u8::MAX {
            continue;
        }
        color[start] = 0;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            for &u in &adj[v] {
                if color[u] == u8::MAX {
                    color[u] = 1 - color[v];
                    queue.push_back(u);
                } else if color[u] == color[v] {
                    return None;
                }
            }
        }
    }
    Some(color)
}
