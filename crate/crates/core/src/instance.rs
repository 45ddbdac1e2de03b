//! Hypergraph colouring instances with per-edge pinnings.
//!
//! Vertices are `0..n`, colours are `0..q`. Each edge carries a pinning set
//! `P_e` of colours that are already forced to appear inside it, and a
//! colouring is proper when every edge sees at least two colours once its
//! pinning is counted. Edges whose pinning already holds two colours are
//! dropped on construction.
//!
//! Vertex lists inside an edge are kept sorted, so "first vertices of an
//! edge" always agrees with the global vertex order.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use thiserror::Error;

pub type Colour = u32;
pub type FullColouring = Vec<Colour>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InstanceError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: vertex {vertex} out of range (n = {n})")]
    VertexOutOfRange { line: usize, vertex: usize, n: usize },
    #[error("line {line}: vertex {vertex} repeated in edge")]
    DuplicateVertex { line: usize, vertex: usize },
    #[error("line {line}: colour {colour} out of range (q = {q})")]
    ColourOutOfRange { line: usize, colour: Colour, q: Colour },
    #[error("edge {0} out of range")]
    EdgeOutOfRange(usize),
    #[error("vertex {0} is not a vertex of the instance")]
    NoSuchVertex(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Edge {
    vertices: Vec<usize>,
    pinned: Vec<Colour>,
}

impl Edge {
    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    /// Sorted pinning set.
    pub fn pinned(&self) -> &[Colour] {
        &self.pinned
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn contains(&self, v: usize) -> bool {
        self.vertices.binary_search(&v).is_ok()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Instance {
    n: usize,
    q: Colour,
    edges: Vec<Edge>,
}

/// Assignment of a colour or a blank to every vertex.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PartialColouring {
    slots: Vec<Option<Colour>>,
}

impl PartialColouring {
    pub fn blank(n: usize) -> Self {
        PartialColouring {
            slots: vec![None; n],
        }
    }

    pub fn from_slots(slots: Vec<Option<Colour>>) -> Self {
        PartialColouring { slots }
    }

    pub fn from_full(sigma: &[Colour]) -> Self {
        PartialColouring {
            slots: sigma.iter().map(|&c| Some(c)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn get(&self, v: usize) -> Option<Colour> {
        self.slots[v]
    }

    pub fn set(&mut self, v: usize, c: Colour) {
        self.slots[v] = Some(c);
    }

    pub fn clear(&mut self, v: usize) {
        self.slots[v] = None;
    }

    pub fn is_coloured(&self, v: usize) -> bool {
        self.slots[v].is_some()
    }

    pub fn slots(&self) -> &[Option<Colour>] {
        &self.slots
    }

    pub fn coloured(&self) -> impl Iterator<Item = (usize, Colour)> + '_ {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(v, c)| c.map(|c| (v, c)))
    }

    pub fn coloured_count(&self) -> usize {
        self.slots.iter().filter(|c| c.is_some()).count()
    }

    /// Total colouring, if every vertex is coloured.
    pub fn to_full(&self) -> Option<FullColouring> {
        self.slots.iter().copied().collect()
    }
}

impl Instance {
    /// Builds an instance from edge vertex lists with empty pinnings.
    pub fn new(n: usize, q: Colour, edges: Vec<Vec<usize>>) -> Result<Self, InstanceError> {
        let m = edges.len();
        Self::with_pinnings(n, q, edges, vec![Vec::new(); m])
    }

    pub fn with_pinnings(
        n: usize,
        q: Colour,
        edges: Vec<Vec<usize>>,
        pinnings: Vec<Vec<Colour>>,
    ) -> Result<Self, InstanceError> {
        if q == 0 {
            return Err(InstanceError::Syntax {
                line: 0,
                msg: "colour count must be positive".into(),
            });
        }
        if pinnings.len() != edges.len() {
            return Err(InstanceError::Syntax {
                line: 0,
                msg: "pinning list length differs from edge count".into(),
            });
        }
        let mut out = Vec::with_capacity(edges.len());
        for (vs, ps) in edges.into_iter().zip(pinnings) {
            out.push(make_edge(vs, ps, n, q, 0)?);
        }
        Ok(Self::from_edges(n, q, out))
    }

    fn from_edges(n: usize, q: Colour, edges: Vec<Edge>) -> Self {
        let edges = edges.into_iter().filter(|e| e.pinned.len() < 2).collect();
        Instance { n, q, edges }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> Colour {
        self.q
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> &Edge {
        &self.edges[e]
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Maximum vertex degree.
    pub fn delta(&self) -> usize {
        self.degrees().into_iter().max().unwrap_or(0)
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n];
        for e in &self.edges {
            for &v in &e.vertices {
                d[v] += 1;
            }
        }
        d
    }

    pub fn k_min(&self) -> usize {
        self.edges.iter().map(Edge::len).min().unwrap_or(0)
    }

    pub fn k_max(&self) -> usize {
        self.edges.iter().map(Edge::len).max().unwrap_or(0)
    }

    /// For each vertex, the indices of the edges containing it, in edge order.
    pub fn incidence(&self) -> Vec<Vec<usize>> {
        let mut inc = vec![Vec::new(); self.n];
        for (i, e) in self.edges.iter().enumerate() {
            for &v in &e.vertices {
                inc[v].push(i);
            }
        }
        inc
    }

    /// Vertices that lie in no edge.
    pub fn isolated_vertices(&self) -> Vec<usize> {
        self.degrees()
            .iter()
            .enumerate()
            .filter(|(_, &d)| d == 0)
            .map(|(v, _)| v)
            .collect()
    }

    pub fn is_proper(&self, sigma: &[Colour]) -> bool {
        assert_eq!(sigma.len(), self.n, "colouring must be total");
        self.edges.iter().all(|e| {
            let first = e
                .pinned
                .first()
                .copied()
                .or_else(|| e.vertices.first().map(|&v| sigma[v]));
            match first {
                None => false,
                Some(c) => e.vertices.iter().any(|&v| sigma[v] != c),
            }
        })
    }

    pub fn edge_satisfied(&self, e: usize, x: &PartialColouring) -> Result<bool, InstanceError> {
        let edge = self.edges.get(e).ok_or(InstanceError::EdgeOutOfRange(e))?;
        Ok(satisfied_by(edge.vertices(), edge.pinned(), x))
    }

    /// Pins `v` to `c`: `v` leaves every edge, `c` joins those pinnings and
    /// edges that become satisfied are removed. The vertex index space is
    /// kept, so `v` remains as an isolated vertex.
    pub fn pin_vertex(&self, v: usize, c: Colour) -> Result<Instance, InstanceError> {
        if v >= self.n {
            return Err(InstanceError::NoSuchVertex(v));
        }
        if c >= self.q {
            return Err(InstanceError::ColourOutOfRange {
                line: 0,
                colour: c,
                q: self.q,
            });
        }
        let edges = self
            .edges
            .iter()
            .map(|e| {
                if !e.contains(v) {
                    return e.clone();
                }
                let vertices = e.vertices.iter().copied().filter(|&w| w != v).collect();
                let mut pinned = e.pinned.clone();
                if let Err(pos) = pinned.binary_search(&c) {
                    pinned.insert(pos, c);
                }
                Edge { vertices, pinned }
            })
            .collect();
        Ok(Self::from_edges(self.n, self.q, edges))
    }

    /// Pins every coloured vertex of `x`, in vertex order.
    pub fn pin_partial(&self, x: &PartialColouring) -> Instance {
        let edges = self
            .edges
            .iter()
            .map(|e| {
                let mut pinned: BTreeSet<Colour> = e.pinned.iter().copied().collect();
                let mut vertices = Vec::with_capacity(e.len());
                for &w in &e.vertices {
                    match x.get(w) {
                        Some(c) => {
                            pinned.insert(c);
                        }
                        None => vertices.push(w),
                    }
                }
                Edge {
                    vertices,
                    pinned: pinned.into_iter().collect(),
                }
            })
            .collect();
        Self::from_edges(self.n, self.q, edges)
    }

    /// Instance on the same vertices keeping only the first `len` vertices
    /// of each edge; pinnings are dropped.
    pub fn truncated(&self, len: usize) -> Instance {
        let edges = self
            .edges
            .iter()
            .map(|e| Edge {
                vertices: e.vertices.iter().take(len).copied().collect(),
                pinned: Vec::new(),
            })
            .collect();
        Instance {
            n: self.n,
            q: self.q,
            edges,
        }
    }

    /// Sub-instance induced by an edge subset (given by index).
    pub fn restrict_edges(&self, keep: &[usize]) -> Instance {
        Instance {
            n: self.n,
            q: self.q,
            edges: keep.iter().map(|&i| self.edges[i].clone()).collect(),
        }
    }

    pub fn parse(text: &str) -> Result<Instance, InstanceError> {
        let mut q: Option<Colour> = None;
        let mut n: Option<usize> = None;
        let mut raw: Vec<(usize, Vec<usize>)> = Vec::new();
        let mut pins: Vec<(usize, usize, Vec<Colour>)> = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let mut words = body.split_whitespace();
            let head = words.next().unwrap_or_default();
            let args: Vec<&str> = words.collect();
            let syntax = |msg: &str| InstanceError::Syntax {
                line: line_no,
                msg: msg.to_string(),
            };
            let nums = |args: &[&str]| -> Result<Vec<usize>, InstanceError> {
                args.iter()
                    .map(|a| {
                        a.parse::<usize>().map_err(|_| InstanceError::Syntax {
                            line: line_no,
                            msg: format!("expected a non-negative integer, got `{a}`"),
                        })
                    })
                    .collect()
            };
            match head {
                "colours" | "vertices" => {
                    let vals = nums(&args)?;
                    if vals.len() != 1 {
                        return Err(syntax(&format!("`{head}` takes exactly one value")));
                    }
                    if head == "colours" {
                        if q.is_some() {
                            return Err(syntax("`colours` given twice"));
                        }
                        if vals[0] == 0 || vals[0] > Colour::MAX as usize {
                            return Err(syntax("colour count must be positive"));
                        }
                        q = Some(vals[0] as Colour);
                    } else {
                        if n.is_some() {
                            return Err(syntax("`vertices` given twice"));
                        }
                        n = Some(vals[0]);
                    }
                }
                "edge" => {
                    if args.is_empty() {
                        return Err(syntax("edge with no vertices"));
                    }
                    raw.push((line_no, nums(&args)?));
                }
                "pin" => {
                    let vals = nums(&args)?;
                    if vals.len() < 2 {
                        return Err(syntax("`pin` needs an edge ordinal and at least one colour"));
                    }
                    let cols = vals[1..].iter().map(|&c| c.min(u32::MAX as usize) as Colour);
                    pins.push((line_no, vals[0], cols.collect()));
                }
                other => return Err(syntax(&format!("unknown directive `{other}`"))),
            }
        }
        let q = q.ok_or(InstanceError::Syntax {
            line: 0,
            msg: "missing `colours` directive".into(),
        })?;
        let n = n.ok_or(InstanceError::Syntax {
            line: 0,
            msg: "missing `vertices` directive".into(),
        })?;
        let mut pinnings = vec![Vec::new(); raw.len()];
        for (line, e, cols) in pins {
            let slot = pinnings.get_mut(e).ok_or(InstanceError::Syntax {
                line,
                msg: format!("pin refers to edge {e}, but only {} edges exist", raw.len()),
            })?;
            for c in cols {
                if c >= q {
                    return Err(InstanceError::ColourOutOfRange { line, colour: c, q });
                }
                slot.push(c);
            }
        }
        let mut edges = Vec::with_capacity(raw.len());
        for ((line, vs), ps) in raw.into_iter().zip(pinnings) {
            edges.push(make_edge(vs, ps, n, q, line)?);
        }
        Ok(Self::from_edges(n, q, edges))
    }

    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "colours {}", self.q);
        let _ = writeln!(s, "vertices {}", self.n);
        for e in &self.edges {
            s.push_str("edge");
            for v in &e.vertices {
                let _ = write!(s, " {v}");
            }
            s.push('\n');
        }
        for (i, e) in self.edges.iter().enumerate() {
            if e.pinned.is_empty() {
                continue;
            }
            let _ = write!(s, "pin {i}");
            for c in &e.pinned {
                let _ = write!(s, " {c}");
            }
            s.push('\n');
        }
        s
    }
}

/// Whether the coloured vertices of `vertices` together with `pinned`
/// witness at least two colours.
pub fn satisfied_by(vertices: &[usize], pinned: &[Colour], x: &PartialColouring) -> bool {
    let mut seen = pinned.first().copied();
    if pinned.len() > 1 {
        return true;
    }
    for &v in vertices {
        if let Some(c) = x.get(v) {
            match seen {
                None => seen = Some(c),
                Some(s) if s != c => return true,
                _ => {}
            }
        }
    }
    false
}

fn make_edge(
    mut vertices: Vec<usize>,
    pinned: Vec<Colour>,
    n: usize,
    q: Colour,
    line: usize,
) -> Result<Edge, InstanceError> {
    for &v in &vertices {
        if v >= n {
            return Err(InstanceError::VertexOutOfRange { line, vertex: v, n });
        }
    }
    vertices.sort_unstable();
    if let Some(w) = vertices.windows(2).find(|w| w[0] == w[1]) {
        return Err(InstanceError::DuplicateVertex { line, vertex: w[0] });
    }
    let mut set = BTreeSet::new();
    for c in pinned {
        if c >= q {
            return Err(InstanceError::ColourOutOfRange { line, colour: c, q });
        }
        set.insert(c);
    }
    Ok(Edge {
        vertices,
        pinned: set.into_iter().collect(),
    })
}
