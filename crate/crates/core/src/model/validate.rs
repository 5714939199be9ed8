use std::collections::{BTreeMap, VecDeque};

use fixedbitset::FixedBitSet;
use serde::Serialize;

use super::graph::{adjacency, topological_order, weakly_connected};
use super::{Dag, NodeId, NodeKind, TaskSpec, Time};
use crate::{Error, Result};

/// One violated invariant of a task specification.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Diagnostic {
    EmptyGraph,
    /// Duplicate node ids or dangling edge endpoints.
    Malformed(String),
    ZeroPeriod,
    DeadlineExceedsPeriod { deadline: Time, period: Time },
    ZeroDeadline,
    MissingTag(NodeId),
    ControlNodeWcet(NodeId),
    Cycle,
    NotWeaklyConnected,
    AltOutDegree(NodeId),
    AltIsSink(NodeId),
    MalformedRegion(NodeId),
}

/// A single-entry/single-exit block opened by an alternative or conditional
/// node and closed by its junction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Region {
    pub opener: NodeId,
    pub kind: NodeKind,
    pub junction: NodeId,
    /// Nodes strictly between opener and junction, sorted by id.
    pub interior: Vec<NodeId>,
    /// One entry per outgoing edge of the opener (sorted by destination id):
    /// the interior nodes reachable through that edge. Empty for an edge
    /// straight to the junction.
    pub branches: Vec<Vec<NodeId>>,
}

/// Checks every structural invariant; an empty list means valid.
pub fn validate_spec(spec: &TaskSpec) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if spec.nodes.is_empty() {
        out.push(Diagnostic::EmptyGraph);
        return out;
    }
    if spec.period == 0 {
        out.push(Diagnostic::ZeroPeriod);
    }
    if spec.deadline == 0 {
        out.push(Diagnostic::ZeroDeadline);
    }
    if spec.deadline > spec.period && spec.period > 0 {
        out.push(Diagnostic::DeadlineExceedsPeriod { deadline: spec.deadline, period: spec.period });
    }
    for node in &spec.nodes {
        if node.is_subtask() && node.tag.is_none() {
            out.push(Diagnostic::MissingTag(node.id));
        }
        if !node.is_subtask() && node.wcet != 0 {
            out.push(Diagnostic::ControlNodeWcet(node.id));
        }
    }
    let (_, _, succ, pred) = match adjacency(spec) {
        Ok(adj) => adj,
        Err(e) => {
            out.push(Diagnostic::Malformed(e.to_string()));
            return out;
        }
    };
    let acyclic = topological_order(&succ, &pred).is_some();
    if !acyclic {
        out.push(Diagnostic::Cycle);
    }
    if !weakly_connected(&succ, &pred) {
        out.push(Diagnostic::NotWeaklyConnected);
    }
    for (i, node) in spec.nodes.iter().enumerate() {
        if node.kind.opens_region() {
            match succ[i].len() {
                0 => out.push(Diagnostic::AltIsSink(node.id)),
                1 => out.push(Diagnostic::AltOutDegree(node.id)),
                _ => {}
            }
        }
    }
    if acyclic {
        let dag = Dag::new(spec).expect("acyclic graph with valid adjacency");
        let (_, problems) = analyze_regions(spec, &dag);
        out.extend(problems.into_iter().map(Diagnostic::MalformedRegion));
    }
    out
}

/// Pairs every opener with its junction. Fails on the first malformed region.
pub fn find_regions(spec: &TaskSpec, dag: &Dag) -> Result<Vec<Region>> {
    let (regions, problems) = analyze_regions(spec, dag);
    match problems.first() {
        Some(&node) => Err(Error::RegionMalformed { task: spec.id, node }),
        None => Ok(regions),
    }
}

/// Openers with fewer than two outgoing edges are skipped: they are already
/// reported by the out-degree checks.
fn analyze_regions(spec: &TaskSpec, dag: &Dag) -> (Vec<Region>, Vec<NodeId>) {
    let desc = dag.descendants();
    let n = dag.len();
    let kinds: Vec<NodeKind> = spec.nodes.iter().map(|node| node.kind).collect();
    let mut regions = Vec::new();
    let mut problems = Vec::new();
    let mut claimed: BTreeMap<usize, usize> = BTreeMap::new();

    for &x in dag.topo() {
        if !kinds[x].opens_region() || dag.succ(x).len() < 2 {
            continue;
        }
        let junction = dag
            .topo()
            .iter()
            .copied()
            .filter(|&j| kinds[j] == NodeKind::Junction && desc[x].contains(j))
            .find(|&j| postdominates(dag, x, j));
        let Some(j) = junction else {
            problems.push(dag.id(x));
            continue;
        };
        let mut interior = FixedBitSet::with_capacity(n);
        for v in desc[x].ones() {
            if v != j && desc[v].contains(j) {
                interior.insert(v);
            }
        }
        let inside_or = |v: usize, extra: usize| v == extra || interior.contains(v);
        let sese = dag.succ(x).iter().all(|&s| inside_or(s, j))
            && dag.pred(j).iter().all(|&p| inside_or(p, x))
            && interior.ones().all(|v| {
                dag.pred(v).iter().all(|&p| inside_or(p, x)) && dag.succ(v).iter().all(|&s| inside_or(s, j))
            });
        if !sese || claimed.insert(j, x).is_some() {
            // The junction is accounted for by this opener's diagnostic.
            claimed.entry(j).or_insert(x);
            problems.push(dag.id(x));
            continue;
        }
        let mut interior_ids: Vec<NodeId> = interior.ones().map(|v| dag.id(v)).collect();
        interior_ids.sort_unstable();
        let branches = dag
            .succ(x)
            .iter()
            .map(|&s| {
                if s == j {
                    return Vec::new();
                }
                let mut ids: Vec<NodeId> =
                    std::iter::once(s).chain(desc[s].ones().filter(|&v| interior.contains(v))).map(|v| dag.id(v)).collect();
                ids.sort_unstable();
                ids
            })
            .collect();
        regions.push(Region { opener: dag.id(x), kind: kinds[x], junction: dag.id(j), interior: interior_ids, branches });
    }
    for (v, kind) in kinds.iter().enumerate() {
        if *kind == NodeKind::Junction && !claimed.contains_key(&v) {
            problems.push(dag.id(v));
        }
    }
    (regions, problems)
}

/// Every path from `x` to a sink passes through `j`.
fn postdominates(dag: &Dag, x: usize, j: usize) -> bool {
    let mut seen = FixedBitSet::with_capacity(dag.len());
    let mut queue = VecDeque::from([x]);
    seen.insert(x);
    while let Some(u) = queue.pop_front() {
        if dag.succ(u).is_empty() {
            return false;
        }
        for &v in dag.succ(u) {
            if v != j && !seen.put(v) {
                queue.push_back(v);
            }
        }
    }
    true
}
