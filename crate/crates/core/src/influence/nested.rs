//! Queries across nested systems: faithfulness of direct influences and the
//! instrumental-process argument for causal influence.

use serde::Serialize;

use super::{InfluenceError, InfluenceGraph, QueryVerdict, Relation, Witness};

/// A pair whose direct influence in a larger system is missing in a smaller
/// one, which faithfulness forbids.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FaithfulnessViolation {
    pub from: String,
    pub to: String,
    pub small: usize,
    pub large: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InstabilityKind {
    /// The pair is still connected by a longer path in the larger system.
    BecameIndirect,
    /// No path remains in the larger system.
    Disappeared,
}

/// A direct influence of a smaller system that does not survive as a direct
/// influence in a larger one. Allowed under faithfulness, reported as a note.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct UnstableInfluence {
    pub from: String,
    pub to: String,
    pub small: usize,
    pub large: usize,
    pub kind: InstabilityKind,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct FaithfulnessReport {
    pub violations: Vec<FaithfulnessViolation>,
    pub unstable: Vec<UnstableInfluence>,
}

impl FaithfulnessReport {
    pub fn is_consistent(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn verdict(&self) -> QueryVerdict {
        let witness = self.violations.first().map(|v| Witness::Path(vec![v.from.clone(), v.to.clone()]));
        QueryVerdict {
            relation: Relation::Faithful,
            holds: self.is_consistent(),
            witness,
            label: None,
            caveats: Vec::new(),
        }
    }
}

/// Compares every pair of graphs `(i, l)`, `i < l`, of a nested sequence.
pub fn faithfulness_across(graphs: &[InfluenceGraph]) -> Result<FaithfulnessReport, InfluenceError> {
    for (i, w) in graphs.windows(2).enumerate() {
        if let Some(missing) = w[0].nodes().iter().find(|n| !w[1].contains(n)) {
            return Err(InfluenceError::NotNested { index: i, node: missing.clone() });
        }
    }
    let mut report = FaithfulnessReport::default();
    for small in 0..graphs.len() {
        for large in small + 1..graphs.len() {
            let (gs, gl) = (&graphs[small], &graphs[large]);
            for (j, k) in gl.edges() {
                if gs.contains(j) && gs.contains(k) && !gs.has_edge(j, k) {
                    report.violations.push(FaithfulnessViolation { from: j.into(), to: k.into(), small, large });
                }
            }
            for (j, k) in gs.edges() {
                if !gl.has_edge(j, k) {
                    let kind = if gl.influence(j, k)?.holds {
                        InstabilityKind::BecameIndirect
                    } else {
                        InstabilityKind::Disappeared
                    };
                    report.unstable.push(UnstableInfluence { from: j.into(), to: k.into(), small, large, kind });
                }
            }
        }
    }
    Ok(report)
}

/// Graph-level part of the randomized-treatment argument: `instrument` is
/// non-influenced in the larger system, directly influences `k` in the smaller
/// one, and `j` blocks every path from `instrument` to `k` in the larger one.
/// When all three hold the direct influence of the instrument is read as a
/// causal influence of `j` on `k`.
pub fn instrumental_query(
    small: &InfluenceGraph,
    large: &InfluenceGraph,
    instrument: &str,
    j: &str,
    k: &str,
) -> Result<QueryVerdict, InfluenceError> {
    for n in [instrument, k] {
        small.index(n)?;
        large.index(n)?;
    }
    large.index(j)?;

    let mut failures = Vec::new();
    let non_inf = large.non_influenced(&[instrument])?;
    if !non_inf.holds {
        failures.push(format!("{instrument} is influenced in the larger system"));
    }
    let direct = small.direct_influence(instrument, k)?;
    if !direct.holds {
        failures.push(format!("{instrument} does not directly influence {k} in the smaller system"));
    }
    let blocking = large.blocks(&[j], instrument, k)?;
    if !blocking.holds {
        failures.push(format!("{j} does not block the paths from {instrument} to {k}"));
    }

    let holds = failures.is_empty();
    let witness = if holds {
        large.influence(instrument, k)?.witness
    } else if !blocking.holds {
        blocking.witness
    } else {
        non_inf.witness
    };
    let mut verdict = QueryVerdict {
        relation: Relation::Instrumental,
        holds,
        witness,
        label: Some(format!("causal influence of {j} on {k} via instrument {instrument}")),
        caveats: vec![
            "assumes the true probability is faithful for the nested pair (not checked)".into(),
            "assumes the dynamical-independence conditions linking graph and law hold (not checked)".into(),
        ],
    };
    verdict.caveats.extend(failures);
    Ok(verdict)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nested_pair() -> (InfluenceGraph, InfluenceGraph) {
        let small = InfluenceGraph::from_edges(
            ["X1", "X2", "X3", "X4"],
            &[("X1", "X2"), ("X2", "X4"), ("X4", "X2"), ("X3", "X4")],
        )
        .unwrap();
        let large = InfluenceGraph::from_edges(
            ["X1", "X2", "X3", "X4", "X5", "X6"],
            &[("X1", "X5"), ("X5", "X2"), ("X2", "X4"), ("X4", "X2"), ("X6", "X3"), ("X6", "X4")],
        )
        .unwrap();
        (small, large)
    }

    #[test]
    fn nested_pair_is_compatible_with_faithfulness() {
        let (small, large) = nested_pair();
        let report = faithfulness_across(&[small, large]).unwrap();
        assert!(report.violations.is_empty());
        assert_eq!(
            report.unstable,
            vec![
                UnstableInfluence {
                    from: "X1".into(),
                    to: "X2".into(),
                    small: 0,
                    large: 1,
                    kind: InstabilityKind::BecameIndirect
                },
                UnstableInfluence {
                    from: "X3".into(),
                    to: "X4".into(),
                    small: 0,
                    large: 1,
                    kind: InstabilityKind::Disappeared
                },
            ]
        );
    }

    #[test]
    fn reversed_order_flags_new_direct_influences() {
        // Treating the richer graph as the smaller system is not nested.
        let (small, large) = nested_pair();
        assert!(matches!(faithfulness_across(&[large.clone(), small.clone()]), Err(InfluenceError::NotNested { .. })));
        // A larger system adding a direct edge that the smaller one lacks.
        let mut richer = large;
        richer.add_edge("X1", "X3").unwrap();
        let report = faithfulness_across(&[small, richer]).unwrap();
        assert_eq!(
            report.violations,
            vec![FaithfulnessViolation { from: "X1".into(), to: "X3".into(), small: 0, large: 1 }]
        );
    }

    #[test]
    fn identical_and_extended_graphs() {
        let (small, _) = nested_pair();
        assert_eq!(faithfulness_across(&[small.clone(), small.clone()]).unwrap(), FaithfulnessReport::default());
        let chain = InfluenceGraph::from_edges(["A", "B", "C"], &[("A", "B"), ("B", "C")]).unwrap();
        let plus = InfluenceGraph::from_edges(["A", "B", "C", "D"], &[("A", "B"), ("B", "C")]).unwrap();
        assert_eq!(faithfulness_across(&[chain, plus]).unwrap(), FaithfulnessReport::default());
    }

    fn instrument_graphs() -> (InfluenceGraph, InfluenceGraph) {
        let large = InfluenceGraph::from_edges(["I", "Xj", "Xk"], &[("I", "Xj"), ("Xj", "Xk")]).unwrap();
        let small = InfluenceGraph::from_edges(["I", "Xk"], &[("I", "Xk")]).unwrap();
        (small, large)
    }

    #[test]
    fn instrument_through_blocker() {
        let (small, large) = instrument_graphs();
        let v = instrumental_query(&small, &large, "I", "Xj", "Xk").unwrap();
        assert!(v.holds);
        assert_eq!(v.caveats.len(), 2);
        assert!(v.label.unwrap().contains("Xj on Xk"));
    }

    #[test]
    fn instrument_with_bypass_edge() {
        let (small, mut large) = instrument_graphs();
        large.add_edge("I", "Xk").unwrap();
        let v = instrumental_query(&small, &large, "I", "Xj", "Xk").unwrap();
        assert!(!v.holds);
        assert_eq!(v.witness, Some(Witness::Path(vec!["I".into(), "Xk".into()])));
    }

    #[test]
    fn influenced_instrument() {
        let (small, mut large) = instrument_graphs();
        large.add_edge("Xj", "I").unwrap();
        assert!(!instrumental_query(&small, &large, "I", "Xj", "Xk").unwrap().holds);
    }
}
