use clap::ValueEnum;
use dynograph_core::influence::InfluenceError;
use dynograph_core::{InfluenceGraph, QueryVerdict};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RelationArg {
    /// No edge `from -> to`.
    Wcli,
    /// An edge `from -> to`.
    Direct,
    /// A directed path `from -> ... -> to`.
    Influence,
    /// A path but no edge.
    Indirect,
    /// No edge and no two-step path.
    ScliLiteral,
    /// Every path `from -> ... -> to` passes through `--block`.
    Blocks,
    /// No path either way and no common ancestor.
    Dynindep,
    /// No node outside `--group` points into it.
    Noninfluenced,
}

pub struct QueryArgs<'a> {
    pub relation: RelationArg,
    pub from: Option<&'a str>,
    pub to: Option<&'a str>,
    pub block: &'a [String],
    pub group: &'a [String],
}

fn usage(e: InfluenceError) -> CliError {
    CliError::usage(e.to_string())
}

fn pair<'a>(q: &QueryArgs<'a>) -> CliResult<(&'a str, &'a str)> {
    match (q.from, q.to) {
        (Some(j), Some(k)) => Ok((j, k)),
        _ => Err(CliError::usage(format!("relation {:?} needs --from and --to", q.relation))),
    }
}

pub fn run(g: &InfluenceGraph, q: &QueryArgs<'_>) -> CliResult<QueryVerdict> {
    if q.relation != RelationArg::Blocks && !q.block.is_empty() {
        return Err(CliError::usage("--block only applies to --relation blocks"));
    }
    if q.relation != RelationArg::Noninfluenced && !q.group.is_empty() {
        return Err(CliError::usage("--group only applies to --relation noninfluenced"));
    }
    if q.relation == RelationArg::Noninfluenced {
        if q.from.is_some() || q.to.is_some() {
            return Err(CliError::usage("noninfluenced takes --group, not --from/--to"));
        }
        if q.group.is_empty() {
            return Err(CliError::usage("noninfluenced needs a non-empty --group"));
        }
        let refs: Vec<&str> = q.group.iter().map(String::as_str).collect();
        return g.non_influenced(&refs).map_err(usage);
    }
    let (j, k) = pair(q)?;
    match q.relation {
        RelationArg::Wcli => g.wcli(j, k),
        RelationArg::Direct => g.direct_influence(j, k),
        RelationArg::Influence => g.influence(j, k),
        RelationArg::Indirect => g.indirect_influence(j, k),
        RelationArg::ScliLiteral => g.scli_literal(j, k),
        RelationArg::Blocks => {
            let refs: Vec<&str> = q.block.iter().map(String::as_str).collect();
            g.blocks(&refs, j, k)
        }
        RelationArg::Dynindep => g.dynamical_independence(j, k),
        RelationArg::Noninfluenced => unreachable!("handled above"),
    }
    .map_err(usage)
}
