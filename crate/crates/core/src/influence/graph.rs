use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::InfluenceError;
use crate::model::{dependencies, validate, SystemSpec};

/// Directed graph of direct influences. Mutual influence is two edges; cycles
/// are allowed. Self-pairs are never stored.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InfluenceGraph {
    nodes: Vec<String>,
    edges: BTreeSet<(usize, usize)>,
}

impl InfluenceGraph {
    pub fn new<S: Into<String>>(nodes: impl IntoIterator<Item = S>) -> Self {
        InfluenceGraph { nodes: nodes.into_iter().map(Into::into).collect(), edges: BTreeSet::new() }
    }

    /// Builds a graph from named edges. Unknown names are an error, self-pairs
    /// are dropped.
    pub fn from_edges<S: Into<String>>(
        nodes: impl IntoIterator<Item = S>,
        edges: &[(&str, &str)],
    ) -> Result<Self, InfluenceError> {
        let mut g = Self::new(nodes);
        for (from, to) in edges {
            g.add_edge(from, to)?;
        }
        Ok(g)
    }

    pub fn add_edge(&mut self, from: &str, to: &str) -> Result<(), InfluenceError> {
        let j = self.index(from)?;
        let k = self.index(to)?;
        if j != k {
            self.edges.insert((j, k));
        }
        Ok(())
    }

    pub fn remove_edge(&mut self, from: &str, to: &str) -> Result<bool, InfluenceError> {
        let j = self.index(from)?;
        let k = self.index(to)?;
        Ok(self.edges.remove(&(j, k)))
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edge_indices(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    /// Edges as name pairs, sorted lexicographically by (source, target).
    pub fn edges(&self) -> Vec<(&str, &str)> {
        let mut out: Vec<(&str, &str)> =
            self.edges.iter().map(|&(j, k)| (self.nodes[j].as_str(), self.nodes[k].as_str())).collect();
        out.sort_unstable();
        out
    }

    pub fn has_edge_idx(&self, j: usize, k: usize) -> bool {
        self.edges.contains(&(j, k))
    }

    pub fn has_edge(&self, from: &str, to: &str) -> bool {
        match (self.position(from), self.position(to)) {
            (Some(j), Some(k)) => self.has_edge_idx(j, k),
            _ => false,
        }
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.position(name).is_some()
    }

    pub(crate) fn index(&self, name: &str) -> Result<usize, InfluenceError> {
        self.position(name).ok_or_else(|| InfluenceError::UnknownNode(name.to_string()))
    }

    pub(crate) fn successors(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.range((j, 0)..=(j, usize::MAX)).map(|&(_, k)| k)
    }

    pub(crate) fn predecessors(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter(move |&&(_, to)| to == k).map(|&(from, _)| from)
    }

    /// Shortest path `from -> ... -> to` avoiding `blocked` nodes, as node
    /// indices. `from == to` is the trivial path.
    pub(crate) fn shortest_path(&self, from: usize, to: usize, blocked: &[bool]) -> Option<Vec<usize>> {
        if blocked[from] || blocked[to] {
            return None;
        }
        let mut parent = vec![usize::MAX; self.nodes.len()];
        let mut seen = vec![false; self.nodes.len()];
        let mut queue = VecDeque::from([from]);
        seen[from] = true;
        while let Some(u) = queue.pop_front() {
            if u == to {
                let mut path = vec![to];
                let mut cur = to;
                while cur != from {
                    cur = parent[cur];
                    path.push(cur);
                }
                path.reverse();
                return Some(path);
            }
            for w in self.successors(u) {
                if !seen[w] && !blocked[w] {
                    seen[w] = true;
                    parent[w] = u;
                    queue.push_back(w);
                }
            }
        }
        None
    }

    /// Nodes with a directed path to `k` (excluding `k` itself unless it lies
    /// on a cycle through `k`).
    pub(crate) fn ancestors(&self, k: usize) -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([k]);
        while let Some(u) = queue.pop_front() {
            for p in self.predecessors(u) {
                if seen.insert(p) {
                    queue.push_back(p);
                }
            }
        }
        seen
    }

    pub(crate) fn names(&self, idx: impl IntoIterator<Item = usize>) -> Vec<String> {
        idx.into_iter().map(|i| self.nodes[i].clone()).collect()
    }

    /// Restriction to a subset of nodes, keeping only edges among them.
    pub fn induced(&self, keep: &[&str]) -> Result<InfluenceGraph, InfluenceError> {
        let mut g = InfluenceGraph::new(keep.iter().copied());
        for &(j, k) in &self.edges {
            if keep.contains(&self.nodes[j].as_str()) && keep.contains(&self.nodes[k].as_str()) {
                g.add_edge(&self.nodes[j], &self.nodes[k])?;
            }
        }
        Ok(g)
    }

    /// Graphviz rendering: nodes in declaration order, edges sorted.
    pub fn to_dot(&self, name: &str) -> String {
        self.to_dot_with(name, |_, _| None)
    }

    /// As [`to_dot`](Self::to_dot), with optional attribute lists per edge.
    pub fn to_dot_with(&self, name: &str, edge_attrs: impl Fn(&str, &str) -> Option<String>) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "digraph {} {{", dot_id(name));
        for n in &self.nodes {
            let _ = writeln!(out, "  {};", dot_id(n));
        }
        for (j, k) in self.edges() {
            match edge_attrs(j, k) {
                Some(attrs) => writeln!(out, "  {} -> {} [{attrs}];", dot_id(j), dot_id(k)),
                None => writeln!(out, "  {} -> {};", dot_id(j), dot_id(k)),
            }
            .expect("writing to a string");
        }
        out.push_str("}\n");
        out
    }

    /// `{"nodes": [...], "edges": [[j, k], ...]}` with stable ordering.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Dump<'a> {
            nodes: &'a [String],
            edges: Vec<[&'a str; 2]>,
        }
        let dump = Dump { nodes: &self.nodes, edges: self.edges().into_iter().map(|(j, k)| [j, k]).collect() };
        let mut s = serde_json::to_string_pretty(&dump).expect("graph serializes");
        s.push('\n');
        s
    }

    /// Reads the format written by [`to_json`](Self::to_json).
    pub fn from_json(text: &str) -> Result<InfluenceGraph, InfluenceError> {
        #[derive(Deserialize)]
        struct Dump {
            nodes: Vec<String>,
            edges: Vec<[String; 2]>,
        }
        let dump: Dump =
            serde_json::from_str(text).map_err(|e| InfluenceError::Precondition(format!("graph JSON: {e}")))?;
        let mut seen = BTreeSet::new();
        if let Some(dup) = dump.nodes.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(InfluenceError::Precondition(format!("graph JSON: node `{dup}` listed twice")));
        }
        let mut g = InfluenceGraph::new(dump.nodes);
        for [j, k] in &dump.edges {
            g.add_edge(j, k)?;
        }
        Ok(g)
    }
}

fn dot_id(name: &str) -> String {
    let plain = !name.is_empty()
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !name.starts_with(|c: char| c.is_ascii_digit());
    if plain {
        name.to_string()
    } else {
        format!("\"{}\"", name.replace('\\', "\\\\").replace('"', "\\\""))
    }
}

/// Influence graph of a valid spec: components in declaration order followed
/// by inputs, which only ever appear as sources.
pub fn derive_graph(spec: &SystemSpec) -> Result<InfluenceGraph, InfluenceError> {
    let report = validate(spec);
    if !report.is_empty() {
        return Err(InfluenceError::InvalidSpec(report));
    }
    let nodes = spec.components.iter().map(|c| c.name.clone()).chain(spec.inputs.iter().map(|i| i.name.clone()));
    let mut g = InfluenceGraph::new(nodes);
    for comp in &spec.components {
        for dep in dependencies(spec, &comp.name)? {
            g.add_edge(&dep, &comp.name)?;
        }
        for input in comp.drift.input_refs() {
            g.add_edge(input, &comp.name)?;
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::model::{ComponentSpec, InitialValue};

    #[test]
    fn dot_output_for_single_edge() {
        let g = InfluenceGraph::from_edges(["A", "B"], &[("A", "B")]).unwrap();
        assert_eq!(g.to_dot("g"), "digraph g {\n  A;\n  B;\n  A -> B;\n}\n");
    }

    #[test]
    fn json_round_trip() {
        let g = InfluenceGraph::from_edges(["A", "B", "C"], &[("A", "B"), ("C", "B"), ("B", "A")]).unwrap();
        assert_eq!(InfluenceGraph::from_json(&g.to_json()).unwrap(), g);
        assert!(InfluenceGraph::from_json(r#"{"nodes": ["A", "A"], "edges": []}"#).is_err());
        assert!(matches!(
            InfluenceGraph::from_json(r#"{"nodes": ["A"], "edges": [["A", "Z"]]}"#),
            Err(InfluenceError::UnknownNode(_))
        ));
    }

    #[test]
    fn dot_output_for_edgeless_graph() {
        let g = InfluenceGraph::new(["X", "Y"]);
        assert_eq!(g.to_dot("g"), "digraph g {\n  X;\n  Y;\n}\n");
    }

    #[test]
    fn mutual_edges_render_separately() {
        let g = InfluenceGraph::from_edges(["B", "A"], &[("A", "B"), ("B", "A")]).unwrap();
        let dot = g.to_dot("m");
        assert!(dot.contains("  A -> B;\n  B -> A;\n"));
        assert!(dot.starts_with("digraph m {\n  B;\n  A;\n"));
    }

    #[test]
    fn json_dump() {
        let g = InfluenceGraph::from_edges(["A", "B"], &[("A", "B")]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&g.to_json()).unwrap();
        assert_eq!(v["nodes"], serde_json::json!(["A", "B"]));
        assert_eq!(v["edges"], serde_json::json!([["A", "B"]]));
    }

    #[test]
    fn single_component_has_no_edges() {
        let mut spec = SystemSpec::new("s");
        spec.components.push(ComponentSpec::diffusion("X", Expr::comp("X"), Expr::c(1.0), InitialValue::Fixed(0.0)));
        let g = derive_graph(&spec).unwrap();
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.nodes(), &["X".to_string()]);
    }

    #[test]
    fn invalid_spec_is_rejected() {
        let mut spec = SystemSpec::new("s");
        spec.components.push(ComponentSpec::diffusion("X", Expr::c(0.0), Expr::comp("X"), InitialValue::Fixed(0.0)));
        assert!(matches!(derive_graph(&spec), Err(InfluenceError::InvalidSpec(_))));
    }

    #[test]
    fn quoted_identifiers() {
        assert_eq!(dot_id("T*"), "\"T*\"");
        assert_eq!(dot_id("V_I"), "V_I");
    }
}
