//! Graph-level relations: weak/strong local independence, influence,
//! blocking, dynamical independence and non-influenced groups.

use std::collections::BTreeSet;

use serde::Serialize;

use super::{InfluenceError, InfluenceGraph};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Wcli,
    DirectInfluence,
    ScliLiteral,
    Influence,
    IndirectInfluence,
    Blocks,
    DynamicalIndependence,
    NonInfluenced,
    Faithful,
    Instrumental,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "nodes", rename_all = "snake_case")]
pub enum Witness {
    /// A directed path, listed node by node.
    Path(Vec<String>),
    /// A set of nodes (blockers, common ancestors, offending sources).
    Nodes(Vec<String>),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct QueryVerdict {
    pub relation: Relation,
    pub holds: bool,
    pub witness: Option<Witness>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub caveats: Vec<String>,
}

impl QueryVerdict {
    fn new(relation: Relation, holds: bool, witness: Option<Witness>) -> Self {
        QueryVerdict { relation, holds, witness, label: None, caveats: Vec::new() }
    }
}

impl InfluenceGraph {
    fn pair(&self, j: &str, k: &str) -> Result<(usize, usize), InfluenceError> {
        let (a, b) = (self.index(j)?, self.index(k)?);
        if a == b {
            return Err(InfluenceError::Diagonal(j.to_string()));
        }
        Ok((a, b))
    }

    fn path_names(&self, path: Vec<usize>) -> Witness {
        Witness::Path(self.names(path))
    }

    fn no_blocks(&self) -> Vec<bool> {
        vec![false; self.len()]
    }

    /// `k` is weakly locally independent of `j`: no edge `j -> k`.
    pub fn wcli(&self, j: &str, k: &str) -> Result<QueryVerdict, InfluenceError> {
        let (a, b) = self.pair(j, k)?;
        let edge = self.has_edge_idx(a, b);
        let witness = edge.then(|| self.path_names(vec![a, b]));
        Ok(QueryVerdict::new(Relation::Wcli, !edge, witness))
    }

    pub fn direct_influence(&self, j: &str, k: &str) -> Result<QueryVerdict, InfluenceError> {
        let (a, b) = self.pair(j, k)?;
        let edge = self.has_edge_idx(a, b);
        let witness = edge.then(|| self.path_names(vec![a, b]));
        Ok(QueryVerdict::new(Relation::DirectInfluence, edge, witness))
    }

    /// Path-based influence: a directed path `j -> ... -> k` exists. The
    /// witness is one shortest path.
    pub fn influence(&self, j: &str, k: &str) -> Result<QueryVerdict, InfluenceError> {
        let (a, b) = self.pair(j, k)?;
        let path = self.shortest_path(a, b, &self.no_blocks());
        let holds = path.is_some();
        Ok(QueryVerdict::new(Relation::Influence, holds, path.map(|p| self.path_names(p))))
    }

    /// Influence that does not go through a direct edge: a path of length at
    /// least two exists and `j -> k` is absent.
    pub fn indirect_influence(&self, j: &str, k: &str) -> Result<QueryVerdict, InfluenceError> {
        let (a, b) = self.pair(j, k)?;
        if self.has_edge_idx(a, b) {
            return Ok(QueryVerdict::new(Relation::IndirectInfluence, false, Some(self.path_names(vec![a, b]))));
        }
        let path = self.shortest_path(a, b, &self.no_blocks());
        let holds = path.is_some();
        Ok(QueryVerdict::new(Relation::IndirectInfluence, holds, path.map(|p| self.path_names(p))))
    }

    /// Strong local independence read literally: no edge `j -> k` and no
    /// single intermediary `d` with `j -> d -> k`. Longer chains are not
    /// considered; use [`InfluenceGraph::influence`] for reachability.
    pub fn scli_literal(&self, j: &str, k: &str) -> Result<QueryVerdict, InfluenceError> {
        let (a, b) = self.pair(j, k)?;
        if self.has_edge_idx(a, b) {
            return Ok(QueryVerdict::new(Relation::ScliLiteral, false, Some(self.path_names(vec![a, b]))));
        }
        let hop = self.successors(a).find(|&d| self.has_edge_idx(d, b));
        let witness = hop.map(|d| self.path_names(vec![a, d, b]));
        Ok(QueryVerdict::new(Relation::ScliLiteral, hop.is_none(), witness))
    }

    /// `blockers` blocks `l -> k` when every directed path from `l` to `k`
    /// meets a blocker. Vacuously true without any path.
    pub fn blocks(&self, blockers: &[&str], l: &str, k: &str) -> Result<QueryVerdict, InfluenceError> {
        let (a, b) = self.pair(l, k)?;
        let mut blocked = self.no_blocks();
        for c in blockers {
            let i = self.index(c)?;
            if i == a || i == b {
                return Err(InfluenceError::EndpointBlocked(c.to_string()));
            }
            blocked[i] = true;
        }
        let verdict = match self.shortest_path(a, b, &blocked) {
            Some(path) => QueryVerdict::new(Relation::Blocks, false, Some(self.path_names(path))),
            None => {
                let mut v = QueryVerdict::new(
                    Relation::Blocks,
                    true,
                    Some(Witness::Nodes(blockers.iter().map(|s| s.to_string()).collect())),
                );
                if self.shortest_path(a, b, &self.no_blocks()).is_none() {
                    v.caveats.push(format!("no path from {l} to {k}; blocking holds trivially"));
                }
                v
            }
        };
        Ok(verdict)
    }

    /// No path in either direction and no common ancestor distinct from both.
    pub fn dynamical_independence(&self, j: &str, k: &str) -> Result<QueryVerdict, InfluenceError> {
        let (a, b) = self.pair(j, k)?;
        let none = self.no_blocks();
        if let Some(p) = self.shortest_path(a, b, &none) {
            return Ok(QueryVerdict::new(Relation::DynamicalIndependence, false, Some(self.path_names(p))));
        }
        if let Some(p) = self.shortest_path(b, a, &none) {
            return Ok(QueryVerdict::new(Relation::DynamicalIndependence, false, Some(self.path_names(p))));
        }
        let anc_a = self.ancestors(a);
        let anc_b = self.ancestors(b);
        let common: Vec<usize> = anc_a.intersection(&anc_b).copied().filter(|&w| w != a && w != b).collect();
        if !common.is_empty() {
            return Ok(QueryVerdict::new(
                Relation::DynamicalIndependence,
                false,
                Some(Witness::Nodes(self.names(common))),
            ));
        }
        Ok(QueryVerdict::new(Relation::DynamicalIndependence, true, None))
    }

    /// No edge enters `group` from outside it.
    pub fn non_influenced(&self, group: &[&str]) -> Result<QueryVerdict, InfluenceError> {
        let mut inside = self.no_blocks();
        for g in group {
            inside[self.index(g)?] = true;
        }
        let sources: BTreeSet<usize> =
            self.edge_indices().filter(|&(u, v)| !inside[u] && inside[v]).map(|(u, _)| u).collect();
        if sources.is_empty() {
            Ok(QueryVerdict::new(Relation::NonInfluenced, true, None))
        } else {
            Ok(QueryVerdict::new(Relation::NonInfluenced, false, Some(Witness::Nodes(self.names(sources)))))
        }
    }

    /// Splits the nodes of a dynamically independent pair into the ancestor
    /// closure of `j`, that of `k`, and the rest.
    pub fn lemma3_partition(&self, j: &str, k: &str) -> Result<Partition, InfluenceError> {
        let verdict = self.dynamical_independence(j, k)?;
        if !verdict.holds {
            return Err(InfluenceError::Precondition(format!("{j} and {k} are not dynamically independent")));
        }
        let (a, b) = self.pair(j, k)?;
        let mut group_a = self.ancestors(a);
        group_a.insert(a);
        let mut group_b = self.ancestors(b);
        group_b.insert(b);
        let rest: Vec<usize> = (0..self.len()).filter(|i| !group_a.contains(i) && !group_b.contains(i)).collect();
        Ok(Partition { a: self.names(group_a), b: self.names(group_b), c: self.names(rest) })
    }
}

/// Three-way split of the node set; each part lists nodes in graph order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Partition {
    pub a: Vec<String>,
    pub b: Vec<String>,
    pub c: Vec<String>,
}
