//! Unrooted binary tree topology.
//!
//! Vertices are `0..|V|`, edges carry stable ids `0..|E|` in the order they
//! were read. Every vertex has degree 1 (leaf) or 3 (internal).

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;

use rand::Rng;

use crate::error::{CfnError, Result};

/// How a raw per-edge number in an input file is to be read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Theta,
    P,
    Len,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawEdgeValue {
    pub kind: ParamKind,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeFormat {
    EdgeList,
    Newick,
}

impl std::str::FromStr for TreeFormat {
    type Err = CfnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "edge-list" | "edgelist" | "el" => Ok(TreeFormat::EdgeList),
            "newick" | "nwk" => Ok(TreeFormat::Newick),
            other => Err(CfnError::InvalidInput(format!("unknown tree format '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    /// `(neighbor, edge id)` per vertex.
    adjacency: Vec<Vec<(usize, usize)>>,
    edges: Vec<(usize, usize)>,
    leaves: Vec<usize>,
    leaf_pos: Vec<Option<usize>>,
    labels: Vec<Option<String>>,
}

impl Tree {
    /// Build and validate a tree from an edge table.
    pub fn new(vertex_count: usize, edges: Vec<(usize, usize)>, labels: Vec<Option<String>>) -> Result<Self> {
        if vertex_count < 2 {
            return Err(CfnError::InvalidTree(format!("need at least 2 vertices, got {vertex_count}")));
        }
        if labels.len() != vertex_count {
            return Err(CfnError::InvalidTree("label table length mismatch".into()));
        }
        if edges.len() + 1 != vertex_count {
            return Err(CfnError::InvalidTree(format!(
                "{} vertices need {} edges, got {}",
                vertex_count,
                vertex_count - 1,
                edges.len()
            )));
        }
        let mut adjacency = vec![Vec::new(); vertex_count];
        for (id, &(a, b)) in edges.iter().enumerate() {
            if a >= vertex_count || b >= vertex_count {
                return Err(CfnError::InvalidTree(format!("edge {id} references vertex outside 0..{vertex_count}")));
            }
            if a == b {
                return Err(CfnError::InvalidTree(format!("edge {id} is a self-loop at {a}")));
            }
            if adjacency[a].iter().any(|&(nb, _)| nb == b) {
                return Err(CfnError::InvalidTree(format!("duplicate edge {a}-{b}")));
            }
            adjacency[a].push((b, id));
            adjacency[b].push((a, id));
        }
        for (v, nbrs) in adjacency.iter().enumerate() {
            if nbrs.len() != 1 && nbrs.len() != 3 {
                return Err(CfnError::InvalidTree(format!("vertex {v} has degree {}, expected 1 or 3", nbrs.len())));
            }
        }
        // |E| = |V| - 1 plus connectivity rules out cycles.
        let mut seen = vec![false; vertex_count];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &(nb, _) in &adjacency[v] {
                if !seen[nb] {
                    seen[nb] = true;
                    stack.push(nb);
                }
            }
        }
        if let Some(v) = seen.iter().position(|s| !s) {
            return Err(CfnError::InvalidTree(format!("disconnected: vertex {v} unreachable from vertex 0")));
        }
        let leaves: Vec<usize> = (0..vertex_count).filter(|&v| adjacency[v].len() == 1).collect();
        let mut leaf_pos = vec![None; vertex_count];
        for (i, &v) in leaves.iter().enumerate() {
            leaf_pos[v] = Some(i);
        }
        debug_assert_eq!(vertex_count, 2 * leaves.len() - 2);
        Ok(Tree { adjacency, edges, leaves, leaf_pos, labels })
    }

    pub fn vertex_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    /// Leaves in increasing vertex id; this is the order of every leaf configuration.
    pub fn leaves(&self) -> &[usize] {
        &self.leaves
    }

    /// Position of `v` within [`Tree::leaves`], if it is a leaf.
    pub fn leaf_position(&self, v: usize) -> Option<usize> {
        self.leaf_pos[v]
    }

    pub fn is_leaf(&self, v: usize) -> bool {
        self.leaf_pos[v].is_some()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> Result<(usize, usize)> {
        self.edges.get(e).copied().ok_or(CfnError::UnknownEdge(e))
    }

    /// `(neighbor, edge id)` pairs of `v`.
    pub fn incident(&self, v: usize) -> &[(usize, usize)] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn edge_between(&self, a: usize, b: usize) -> Option<usize> {
        self.adjacency[a].iter().find(|&&(nb, _)| nb == b).map(|&(_, e)| e)
    }

    pub fn label(&self, v: usize) -> Option<&str> {
        self.labels[v].as_deref()
    }

    pub fn find_label(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|l| l.as_deref() == Some(name))
    }

    /// Lowest-id internal vertex, or vertex 0 for the single-edge tree.
    pub fn default_root(&self) -> usize {
        (0..self.vertex_count()).find(|&v| !self.is_leaf(v)).unwrap_or(0)
    }

    /// BFS from `root`: vertices in visiting order and, for each non-root
    /// vertex, its `(parent, edge id)`.
    pub fn rooting(&self, root: usize) -> Rooting {
        let nv = self.vertex_count();
        let mut order = Vec::with_capacity(nv);
        let mut parent = vec![None; nv];
        let mut seen = vec![false; nv];
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &(nb, e) in &self.adjacency[v] {
                if !seen[nb] {
                    seen[nb] = true;
                    parent[nb] = Some((v, e));
                    queue.push_back(nb);
                }
            }
        }
        Rooting { root, order, parent }
    }

    fn bfs_distances(&self, from: usize) -> (Vec<usize>, Vec<usize>) {
        let nv = self.vertex_count();
        let mut dist = vec![usize::MAX; nv];
        let mut parent = vec![usize::MAX; nv];
        let mut queue = VecDeque::from([from]);
        dist[from] = 0;
        while let Some(v) = queue.pop_front() {
            for &(nb, _) in &self.adjacency[v] {
                if dist[nb] == usize::MAX {
                    dist[nb] = dist[v] + 1;
                    parent[nb] = v;
                    queue.push_back(nb);
                }
            }
        }
        (dist, parent)
    }

    /// Graph distance between the nearest endpoints of `e` and `f`.
    pub fn edge_distance(&self, e: usize, f: usize) -> Result<usize> {
        let (a, b) = self.edge(e)?;
        let (c, d) = self.edge(f)?;
        if e == f {
            return Err(CfnError::SameEdge(e));
        }
        let (da, _) = self.bfs_distances(a);
        let (db, _) = self.bfs_distances(b);
        Ok(da[c].min(da[d]).min(db[c]).min(db[d]))
    }

    /// Path between `e = {x, y}` and `f = {u, v}` oriented so that `f` lies in
    /// the subtree cut off on the `y` side of `e` and `u` is the endpoint of
    /// `f` nearer to `y`.
    pub fn path_decomposition(&self, e: usize, f: usize) -> Result<PathDecomposition> {
        let (a, b) = self.edge(e)?;
        let (c, d) = self.edge(f)?;
        if e == f {
            return Err(CfnError::SameEdge(e));
        }
        let (dist_a, parent_a) = self.bfs_distances(a);
        let (dist_b, parent_b) = self.bfs_distances(b);
        let near_a = dist_a[c].min(dist_a[d]);
        let near_b = dist_b[c].min(dist_b[d]);
        let (x, y, dist_y, parent_y) =
            if near_a < near_b { (b, a, dist_a, parent_a) } else { (a, b, dist_b, parent_b) };
        let (u, v) = if dist_y[c] < dist_y[d] { (c, d) } else { (d, c) };
        let n = dist_y[u];

        // y_0 = u up to y_N = y by walking parents toward y.
        let mut up = Vec::with_capacity(n + 1);
        let mut cur = u;
        up.push(cur);
        while cur != y {
            cur = parent_y[cur];
            up.push(cur);
        }
        debug_assert_eq!(up.len(), n + 1);

        let mut path = Vec::with_capacity(n + 3);
        path.push(x);
        path.extend(up.iter().rev());
        path.push(v);

        let mut path_edges = Vec::with_capacity(n + 2);
        for k in 0..path.len() - 1 {
            path_edges.push(self.edge_between(path[k], path[k + 1]).expect("path is connected"));
        }

        let mut off_path = Vec::with_capacity(n + 1);
        let mut off_path_edges = Vec::with_capacity(n + 1);
        for j in 0..=n {
            let k = n + 1 - j;
            let (prev, next) = (path[k + 1], path[k - 1]);
            let &(w, ew) = self.adjacency[path[k]]
                .iter()
                .find(|&&(nb, _)| nb != prev && nb != next)
                .ok_or_else(|| CfnError::InvalidTree(format!("path vertex {} is a leaf", path[k])))?;
            off_path.push(w);
            off_path_edges.push(ew);
        }

        Ok(PathDecomposition { e, f, n, path, off_path, path_edges, off_path_edges })
    }

    /// Serialize as an edge list with `leaf <id> <name>` lines for labelled leaves.
    pub fn to_edge_list(&self, theta: Option<&[f64]>) -> String {
        let mut out = String::new();
        for &v in &self.leaves {
            if let Some(name) = self.label(v) {
                let _ = writeln!(out, "leaf {v} {name}");
            }
        }
        for (id, &(a, b)) in self.edges.iter().enumerate() {
            match theta {
                Some(t) => {
                    let _ = writeln!(out, "{a} {b} theta={}", t[id]);
                }
                None => {
                    let _ = writeln!(out, "{a} {b}");
                }
            }
        }
        out
    }

    /// Quartet `((A,B),(C,D))`: leaves 0..=3, internal `u = 4` (joins A, B)
    /// and `v = 5` (joins C, D). Edge order: A-u, B-u, C-v, D-v, u-v.
    pub fn quartet() -> Tree {
        let labels = ["A", "B", "C", "D", "u", "v"].iter().map(|s| Some(s.to_string())).collect();
        Tree::new(6, vec![(0, 4), (1, 4), (2, 5), (3, 5), (4, 5)], labels).expect("valid quartet")
    }

    /// Caterpillar with `n ≥ 2` leaves. Leaves are `0..n`, spine vertices
    /// `n..2n-2`. Pendant edges come first in leaf order, then spine edges.
    pub fn caterpillar(n: usize) -> Result<Tree> {
        if n < 2 {
            return Err(CfnError::InvalidTree(format!("caterpillar needs n >= 2, got {n}")));
        }
        if n == 2 {
            return Tree::new(2, vec![(0, 1)], vec![Some("L0".into()), Some("L1".into())]);
        }
        let spine = n - 2;
        let mut edges = Vec::with_capacity(2 * n - 3);
        for leaf in 0..n {
            let s = leaf.saturating_sub(1).min(spine - 1);
            edges.push((leaf, n + s));
        }
        for s in 0..spine - 1 {
            edges.push((n + s, n + s + 1));
        }
        let mut labels: Vec<Option<String>> = (0..n).map(|i| Some(format!("L{i}"))).collect();
        labels.extend((0..spine).map(|_| None));
        Tree::new(2 * n - 2, edges, labels)
    }

    /// Spine of `k ≥ 2` internal vertices `0..k`, each carrying a cherry, with
    /// one extra leaf at each end: `2k + 2` leaves in total. The end leaves are
    /// vertices `k` and `k + 1`; spine vertex `i` holds cherry root `k + 2 + 3i`
    /// with leaves `k + 3 + 3i` and `k + 4 + 3i`. Every subtree hanging off the
    /// path between the end leaves is a cherry.
    pub fn spine_of_cherries(k: usize) -> Result<Tree> {
        if k < 2 {
            return Err(CfnError::InvalidTree(format!("spine needs k >= 2, got {k}")));
        }
        let mut edges = vec![(k, 0), (k + 1, k - 1)];
        for i in 0..k - 1 {
            edges.push((i, i + 1));
        }
        for i in 0..k {
            let c = k + 2 + 3 * i;
            edges.push((i, c));
            edges.push((c, c + 1));
            edges.push((c, c + 2));
        }
        let count = 4 * k + 2;
        Tree::new(count, edges, vec![None; count])
    }

    /// A vertex `0` whose two child subtrees are complete binary trees of the
    /// given depth, plus one pendant leaf (vertex `1`) so that vertex `0`
    /// has degree 3. Rooting at the pendant leaf makes vertex `0` the root of
    /// a complete binary descendant subtree with `2^depth` leaves.
    pub fn planted_complete(depth: usize) -> Result<Tree> {
        if depth == 0 {
            return Err(CfnError::InvalidTree("depth must be at least 1".into()));
        }
        let mut edges = vec![(0, 1)];
        let mut count = 2;
        let mut frontier = vec![0usize];
        for _ in 0..depth {
            let mut next = Vec::with_capacity(frontier.len() * 2);
            for &p in &frontier {
                for _ in 0..2 {
                    edges.push((p, count));
                    next.push(count);
                    count += 1;
                }
            }
            frontier = next;
        }
        let mut labels = vec![None; count];
        labels[1] = Some("pendant".to_string());
        Tree::new(count, edges, labels)
    }

    /// Uniform-ish random binary tree built by repeatedly grafting a new leaf
    /// onto a random edge.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Tree> {
        if n < 2 {
            return Err(CfnError::InvalidTree(format!("need n >= 2, got {n}")));
        }
        let mut edges = vec![(0usize, 1usize)];
        let mut count = 2;
        for _ in 2..n {
            let pick = rng.random_range(0..edges.len());
            let (a, b) = edges[pick];
            let mid = count;
            let leaf = count + 1;
            count += 2;
            edges[pick] = (a, mid);
            edges.push((mid, b));
            edges.push((mid, leaf));
        }
        Tree::new(count, edges, vec![None; count])
    }
}

/// BFS rooting of a tree.
#[derive(Debug, Clone)]
pub struct Rooting {
    pub root: usize,
    pub order: Vec<usize>,
    pub parent: Vec<Option<(usize, usize)>>,
}

/// Path between two edges `e` and `f`.
///
/// `path` lists `y_{N+1}, y_N, …, y_0, y_{−1}` where `e = {y_{N+1}, y_N}` and
/// `f = {y_0, y_{−1}}`. `off_path[j]` is `w_j`, the third neighbor of `y_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathDecomposition {
    pub e: usize,
    pub f: usize,
    pub n: usize,
    pub path: Vec<usize>,
    pub off_path: Vec<usize>,
    /// `path_edges[k]` joins `path[k]` and `path[k + 1]`; so it starts with `e`
    /// and ends with `f`.
    pub path_edges: Vec<usize>,
    /// Edge `{y_j, w_j}` for `j = 0..=N`.
    pub off_path_edges: Vec<usize>,
}

impl PathDecomposition {
    /// Vertex `y_j` for `j ∈ [−1, N+1]`.
    pub fn y(&self, j: isize) -> usize {
        self.path[(self.n as isize + 1 - j) as usize]
    }

    /// Edge `{y_j, y_{j+1}}` for `j ∈ [−1, N]`; `j = −1` is `f` and `j = N` is `e`.
    pub fn step_edge(&self, j: isize) -> usize {
        self.path_edges[(self.n as isize - j) as usize]
    }

    pub fn x(&self) -> usize {
        self.path[0]
    }

    pub fn u(&self) -> usize {
        self.path[self.n + 1]
    }

    pub fn v(&self) -> usize {
        self.path[self.n + 2]
    }
}

/// Parse a tree; returns the per-edge raw values untransformed.
pub fn load_tree(text: &str, format: TreeFormat) -> Result<(Tree, Vec<Option<RawEdgeValue>>)> {
    match format {
        TreeFormat::EdgeList => parse_edge_list(text),
        TreeFormat::Newick => parse_newick(text),
    }
}

fn parse_edge_list(text: &str) -> Result<(Tree, Vec<Option<RawEdgeValue>>)> {
    struct EdgeLine<'a> {
        a: &'a str,
        b: &'a str,
        raw: Option<RawEdgeValue>,
    }
    let mut edge_lines = Vec::new();
    let mut leaf_lines: Vec<(usize, &str, &str)> = Vec::new();

    for (idx, full) in text.lines().enumerate() {
        let line = idx + 1;
        let body = full.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = body.split_whitespace().collect();
        if tokens[0] == "leaf" {
            if tokens.len() != 3 {
                return Err(CfnError::Parse { line, msg: "expected `leaf <id> <name>`".into() });
            }
            leaf_lines.push((line, tokens[1], tokens[2]));
            continue;
        }
        if tokens.len() < 2 || tokens.len() > 3 {
            return Err(CfnError::Parse { line, msg: "expected `u v [key=value]`".into() });
        }
        let raw = match tokens.get(2) {
            None => None,
            Some(kv) => {
                let (key, val) = kv
                    .split_once('=')
                    .ok_or_else(|| CfnError::Parse { line, msg: format!("expected key=value, got '{kv}'") })?;
                let kind = match key {
                    "theta" => ParamKind::Theta,
                    "p" => ParamKind::P,
                    "len" => ParamKind::Len,
                    other => return Err(CfnError::Parse { line, msg: format!("unknown key '{other}'") }),
                };
                let value: f64 =
                    val.parse().map_err(|_| CfnError::Parse { line, msg: format!("'{val}' is not a number") })?;
                Some(RawEdgeValue { kind, value })
            }
        };
        edge_lines.push(EdgeLine { a: tokens[0], b: tokens[1], raw });
    }
    if edge_lines.is_empty() {
        return Err(CfnError::Parse { line: 0, msg: "no edges".into() });
    }

    let numeric = edge_lines
        .iter()
        .flat_map(|l| [l.a, l.b])
        .chain(leaf_lines.iter().map(|l| l.1))
        .all(|t| t.parse::<usize>().is_ok());

    let mut ids: HashMap<&str, usize> = HashMap::new();
    let mut names: Vec<Option<String>> = Vec::new();
    let mut edges = Vec::with_capacity(edge_lines.len());
    let mut raws = Vec::with_capacity(edge_lines.len());
    for l in &edge_lines {
        let mut ends = [0usize; 2];
        for (slot, tok) in ends.iter_mut().zip([l.a, l.b]) {
            *slot = if numeric {
                tok.parse().expect("checked numeric")
            } else {
                let next = names.len();
                let id = *ids.entry(tok).or_insert(next);
                if id == next {
                    names.push(Some(tok.to_string()));
                }
                id
            };
        }
        edges.push((ends[0], ends[1]));
        raws.push(l.raw);
    }
    let vertex_count = if numeric { edges.iter().map(|&(a, b)| a.max(b)).max().unwrap_or(0) + 1 } else { names.len() };
    let mut labels: Vec<Option<String>> = if numeric { vec![None; vertex_count] } else { names };
    for &(line, id_tok, name) in &leaf_lines {
        let id = if numeric {
            id_tok.parse::<usize>().expect("checked numeric")
        } else {
            *ids.get(id_tok)
                .ok_or_else(|| CfnError::Parse { line, msg: format!("leaf line names unknown vertex '{id_tok}'") })?
        };
        if id >= vertex_count {
            return Err(CfnError::Parse { line, msg: format!("leaf id {id} is not a vertex") });
        }
        labels[id] = Some(name.to_string());
    }
    let tree = Tree::new(vertex_count, edges, labels)?;
    for &(line, id_tok, _) in &leaf_lines {
        let id = if numeric { id_tok.parse::<usize>().unwrap() } else { ids[id_tok] };
        if !tree.is_leaf(id) {
            return Err(CfnError::Parse { line, msg: format!("vertex {id_tok} is not a leaf") });
        }
    }
    Ok((tree, raws))
}

struct NewickParser<'a> {
    bytes: &'a [u8],
    pos: usize,
    labels: Vec<Option<String>>,
    /// `(parent, child, length)` in the order lengths appear in the text.
    edges: Vec<(usize, usize, Option<f64>)>,
}

impl<'a> NewickParser<'a> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(CfnError::Parse { line: 1, msg: format!("{} (at byte {})", msg.into(), self.pos) })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn label(&mut self) -> Result<Option<String>> {
        self.skip_ws();
        if self.peek() == Some(b'\'') {
            self.pos += 1;
            let start = self.pos;
            while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\'' {
                self.pos += 1;
            }
            if self.pos >= self.bytes.len() {
                return self.err("unterminated quoted label");
            }
            let s = String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned();
            self.pos += 1;
            return Ok(Some(s));
        }
        let start = self.pos;
        while self.pos < self.bytes.len() {
            let c = self.bytes[self.pos];
            if c.is_ascii_whitespace() || b"(),:;".contains(&c) {
                break;
            }
            self.pos += 1;
        }
        if start == self.pos {
            Ok(None)
        } else {
            Ok(Some(String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned()))
        }
    }

    fn length(&mut self) -> Result<Option<f64>> {
        if self.peek() != Some(b':') {
            return Ok(None);
        }
        self.pos += 1;
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len() && !b"(),:;".contains(&self.bytes[self.pos]) {
            if self.bytes[self.pos].is_ascii_whitespace() {
                break;
            }
            self.pos += 1;
        }
        let s = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap_or("");
        match s.parse::<f64>() {
            Ok(v) => Ok(Some(v)),
            Err(_) => self.err(format!("bad branch length '{s}'")),
        }
    }

    /// Parses one subtree, returning its vertex id and number of children.
    fn subtree(&mut self) -> Result<(usize, usize)> {
        let id = self.labels.len();
        self.labels.push(None);
        let mut children = 0;
        if self.peek() == Some(b'(') {
            self.pos += 1;
            loop {
                let (child, _) = self.subtree()?;
                let len = self.length()?;
                self.edges.push((id, child, len));
                children += 1;
                match self.peek() {
                    Some(b',') => self.pos += 1,
                    Some(b')') => {
                        self.pos += 1;
                        break;
                    }
                    _ => return self.err("expected ',' or ')'"),
                }
            }
            let name = self.label()?;
            self.labels[id] = name;
        } else {
            let name = self.label()?;
            if name.is_none() {
                return self.err("expected a leaf label or '('");
            }
            self.labels[id] = name;
        }
        Ok((id, children))
    }
}

fn parse_newick(text: &str) -> Result<(Tree, Vec<Option<RawEdgeValue>>)> {
    let mut p = NewickParser { bytes: text.as_bytes(), pos: 0, labels: Vec::new(), edges: Vec::new() };
    let (root, children) = p.subtree()?;
    let _ = p.length()?;
    if p.peek() != Some(b';') {
        return p.err("expected ';'");
    }
    p.pos += 1;
    if p.peek().is_some() {
        return p.err("trailing text after ';'");
    }

    let mut labels = p.labels;
    let mut edges = p.edges;
    if children == 2 {
        // Rooted input: splice out the degree-2 root.
        let first = edges.iter().position(|&(a, _, _)| a == root).expect("root has children");
        let second = edges.iter().rposition(|&(a, _, _)| a == root).expect("root has children");
        let (_, c1, l1) = edges[first];
        let (_, c2, l2) = edges[second];
        let merged = match (l1, l2) {
            (Some(a), Some(b)) => Some(a + b),
            _ => None,
        };
        edges[first] = (c1, c2, merged);
        edges.remove(second);
        labels.remove(root);
        for edge in edges.iter_mut() {
            if edge.0 > root {
                edge.0 -= 1;
            }
            if edge.1 > root {
                edge.1 -= 1;
            }
        }
    }
    let vertex_count = labels.len();
    let raws = edges.iter().map(|&(_, _, l)| l.map(|value| RawEdgeValue { kind: ParamKind::Len, value })).collect();
    let tree = Tree::new(vertex_count, edges.iter().map(|&(a, b, _)| (a, b)).collect(), labels)?;
    Ok((tree, raws))
}
