//! Intermediate offsets and deadlines, sequential subsets and preemption
//! cost inflation.

use std::collections::{BTreeMap, BTreeSet};

use fixedbitset::FixedBitSet;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::model::{longest_paths, ConcreteTask, CostRatio, Dag, NodeId, TaskId, TaskSpec, Time};
use crate::{Error, Result};

/// How the slack `D - L` of a task is spread over its nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SlackMode {
    /// Every hop of the longest path receives the same share.
    Fair,
    /// Windows are the earliest-start schedule stretched by `D / L`.
    Proportional,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub offset: Time,
    pub deadline: Time,
}

impl Window {
    pub fn len(&self) -> Time {
        self.deadline - self.offset
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Offset and local deadline of every node, relative to the job release.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowAssignment {
    pub windows: BTreeMap<NodeId, Window>,
}

impl WindowAssignment {
    pub fn get(&self, node: NodeId) -> Option<Window> {
        self.windows.get(&node).copied()
    }

    /// Lists the violated window invariants for `task`; empty means valid.
    pub fn violations(&self, task: &TaskSpec) -> Vec<String> {
        let mut out = Vec::new();
        for node in &task.nodes {
            match self.get(node.id) {
                None => out.push(format!("node {} has no window", node.id)),
                Some(w) if w.deadline < w.offset || w.len() < node.demand() => {
                    out.push(format!("node {} window {:?} shorter than {}", node.id, w, node.demand()))
                }
                Some(w) if w.deadline > task.deadline => {
                    out.push(format!("node {} deadline {} past {}", node.id, w.deadline, task.deadline))
                }
                Some(_) => {}
            }
        }
        for &(u, v) in &task.edges {
            if let (Some(wu), Some(wv)) = (self.get(u), self.get(v)) {
                if wv.offset < wu.deadline {
                    out.push(format!("edge ({u}, {v}): offset {} before deadline {}", wv.offset, wu.deadline));
                }
            }
        }
        out
    }
}

/// Windows of every node of `concrete`; fails when the critical path does
/// not fit in the deadline.
pub fn assign_windows(concrete: &ConcreteTask, mode: SlackMode) -> Result<WindowAssignment> {
    let task = &concrete.task;
    let dag = Dag::new(task)?;
    let paths = longest_paths(concrete)?;
    let critical = paths.critical;
    let deadline = task.deadline;
    if critical > deadline {
        return Err(Error::CriticalPathExceedsDeadline { critical, deadline });
    }
    let mut windows = BTreeMap::new();
    match mode {
        SlackMode::Proportional if critical > 0 => {
            let scale = |t: Time| (u128::from(t) * u128::from(deadline) / u128::from(critical)) as Time;
            for node in &task.nodes {
                let e = paths.e(node.id);
                windows.insert(node.id, Window { offset: scale(e - node.demand()), deadline: scale(e) });
            }
        }
        // With no work at all the proportional stretch is undefined; fall
        // back to even hop shares.
        _ => {
            let hops = dag.hop_depths();
            let max_hops = dag.depth().max(1) as u128;
            let slack = u128::from(deadline - critical);
            let share = |h: usize| (h as u128 * slack / max_hops) as Time;
            for (idx, node) in task.nodes.iter().enumerate() {
                let e = paths.e(node.id);
                let h = hops[idx];
                windows.insert(node.id, Window { offset: e - node.demand() + share(h - 1), deadline: e + share(h) });
            }
        }
    }
    // Both formulas already dominate every predecessor deadline; the max
    // keeps that explicit.
    for &idx in dag.topo() {
        let id = dag.id(idx);
        let floor = dag.pred(idx).iter().map(|&p| windows[&dag.id(p)].deadline).max().unwrap_or(0);
        let w = windows.get_mut(&id).expect("window of every node");
        w.offset = w.offset.max(floor);
    }
    Ok(WindowAssignment { windows })
}

/// Unrounded proportional windows `(offset, deadline)`.
pub fn proportional_bounds(concrete: &ConcreteTask) -> Result<BTreeMap<NodeId, (Ratio<u128>, Ratio<u128>)>> {
    let paths = longest_paths(concrete)?;
    let l = u128::from(paths.critical.max(1));
    let d = u128::from(concrete.deadline());
    Ok(concrete
        .task
        .nodes
        .iter()
        .map(|n| {
            let e = u128::from(paths.e(n.id));
            let o = e - u128::from(n.demand());
            (n.id, (Ratio::new(o * d, l), Ratio::new(e * d, l)))
        })
        .collect())
}

/// Reachability between the nodes of one task.
#[derive(Clone, Debug)]
pub struct Reachability {
    dag: Dag,
    desc: Vec<FixedBitSet>,
    rank: Vec<usize>,
}

impl Reachability {
    pub fn new(task: &TaskSpec) -> Result<Self> {
        let dag = Dag::new(task)?;
        let desc = dag.descendants();
        let mut rank = vec![0; dag.len()];
        for (pos, &idx) in dag.topo().iter().enumerate() {
            rank[idx] = pos;
        }
        Ok(Reachability { dag, desc, rank })
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    /// `a` reaches `b` through at least one edge.
    pub fn reaches(&self, a: NodeId, b: NodeId) -> bool {
        match (self.dag.index(a), self.dag.index(b)) {
            (Some(x), Some(y)) => self.desc[x].contains(y),
            _ => false,
        }
    }

    pub fn comparable(&self, a: NodeId, b: NodeId) -> bool {
        self.reaches(a, b) || self.reaches(b, a)
    }

    /// Position in the deterministic topological order.
    pub fn rank(&self, id: NodeId) -> usize {
        self.dag.index(id).map_or(usize::MAX, |i| self.rank[i])
    }
}

/// Partitions `nodes` into chains of pairwise comparable nodes, longest
/// chain first; equally long chains are compared by their id sequence.
/// Each chain is listed in topological order.
pub fn maximal_sequential_subsets(reach: &Reachability, nodes: &BTreeSet<NodeId>) -> Vec<Vec<NodeId>> {
    let mut left: Vec<NodeId> = nodes.iter().copied().collect();
    left.sort_by_key(|&id| (reach.rank(id), id));
    let mut out = Vec::new();
    while !left.is_empty() {
        // best[i]: preferred chain starting at left[i].
        let mut best: Vec<Vec<NodeId>> = vec![Vec::new(); left.len()];
        for i in (0..left.len()).rev() {
            let tail = (i + 1..left.len())
                .filter(|&j| reach.reaches(left[i], left[j]))
                .map(|j| &best[j])
                .min_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
            let mut chain = vec![left[i]];
            if let Some(tail) = tail {
                chain.extend_from_slice(tail);
            }
            best[i] = chain;
        }
        let chain = best.into_iter().min_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b))).expect("non-empty");
        left.retain(|id| !chain.contains(id));
        out.push(chain);
    }
    out
}

/// How preemption cost is charged to the sub-tasks sharing an engine.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PreemptionScheme {
    /// Every sub-task that may be preempted pays its own cost.
    #[serde(rename = "MAX_PREEMP")]
    Max,
    /// One sub-task per maximal sequential subset pays, the one with the
    /// largest cost.
    #[serde(rename = "REDUCED_PREM")]
    Reduced,
}

/// One sub-task placed on an engine, as seen by the cost charging.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChargeItem {
    pub task: TaskId,
    pub wcet: Time,
    /// Maximal sequential subset the item belongs to, unique per engine.
    pub group: usize,
    /// Position inside that subset, in precedence order.
    pub position: usize,
}

/// Extra execution time of each item on an engine with preemption cost
/// `ratio`: a preempted sub-task pays `ceil(ratio * wcet)`. Items only pay
/// when a sub-task of another task shares the engine; zero-WCET items
/// never pay.
pub fn preemption_charges(ratio: CostRatio, items: &[ChargeItem], scheme: PreemptionScheme) -> Vec<Time> {
    let mut tasks = items.iter().filter(|i| i.wcet > 0).map(|i| i.task);
    let first = tasks.next();
    let shared = tasks.any(|t| Some(t) != first);
    let mut out = vec![0; items.len()];
    if !shared {
        return out;
    }
    match scheme {
        PreemptionScheme::Max => {
            for (slot, item) in out.iter_mut().zip(items) {
                *slot = ratio.charge(item.wcet);
            }
        }
        PreemptionScheme::Reduced => {
            // Representative per group: largest cost, then earliest position.
            let mut best: BTreeMap<usize, (Time, usize, usize)> = BTreeMap::new();
            for (k, item) in items.iter().enumerate().filter(|(_, i)| i.wcet > 0) {
                let cost = ratio.charge(item.wcet);
                let entry = best.entry(item.group).or_insert((cost, item.position, k));
                if cost > entry.0 || (cost == entry.0 && item.position < entry.1) {
                    *entry = (cost, item.position, k);
                }
            }
            for (cost, _, k) in best.into_values() {
                out[k] = cost;
            }
        }
    }
    out
}

/// WCET of a sub-task split into `nb_intervals` pieces, each paying
/// `split_cost`.
pub fn ilp_split_inflation(wcet: Time, nb_intervals: u64, split_cost: Time) -> Time {
    debug_assert!(nb_intervals >= 1);
    wcet + nb_intervals * split_cost
}

/// Inflated WCETs of every placement of `alloc` under `scheme`.
pub fn inflate_wcets(
    alloc: &crate::alloc::Allocation,
    arch: &crate::model::Architecture,
    scheme: PreemptionScheme,
) -> Result<crate::alloc::Allocation> {
    let mut out = alloc.clone();
    let reach: BTreeMap<TaskId, Reachability> =
        alloc.concretes.iter().map(|c| Ok((c.id(), Reachability::new(&c.task)?))).collect::<Result<_>>()?;
    for (engine_id, placements) in out.engines.iter_mut() {
        let ratio = arch.engine(*engine_id).map_or(CostRatio::ZERO, |e| e.preempt_cost_ratio);
        let items = charge_items(placements.iter().map(|p| (p.task, p.node, p.wcet)), |t| reach.get(&t));
        for (p, extra) in placements.iter_mut().zip(preemption_charges(ratio, &items, scheme)) {
            p.inflated_wcet = p.wcet + extra;
        }
    }
    Ok(out)
}

/// Charge items of the nodes sharing one engine, in input order. Each task's
/// positive-WCET nodes are split into maximal sequential subsets; zero-WCET
/// nodes get a group of their own. Without reachability every node is its
/// own subset.
pub fn charge_items<'r>(
    nodes: impl IntoIterator<Item = (TaskId, NodeId, Time)>,
    reach: impl Fn(TaskId) -> Option<&'r Reachability>,
) -> Vec<ChargeItem> {
    let nodes: Vec<(TaskId, NodeId, Time)> = nodes.into_iter().collect();
    let mut per_task: BTreeMap<TaskId, BTreeSet<NodeId>> = BTreeMap::new();
    for &(task, node, wcet) in &nodes {
        if wcet > 0 {
            per_task.entry(task).or_default().insert(node);
        }
    }
    let mut place: BTreeMap<(TaskId, NodeId), (usize, usize)> = BTreeMap::new();
    let mut group = 0;
    for (task, ids) in per_task {
        let chains = match reach(task) {
            Some(r) => maximal_sequential_subsets(r, &ids),
            None => ids.into_iter().map(|id| vec![id]).collect(),
        };
        for chain in chains {
            for (position, id) in chain.into_iter().enumerate() {
                place.insert((task, id), (group, position));
            }
            group += 1;
        }
    }
    nodes
        .into_iter()
        .map(|(task, node, wcet)| {
            let (g, position) = place.get(&(task, node)).copied().unwrap_or_else(|| {
                group += 1;
                (group - 1, 0)
            });
            ChargeItem { task, wcet, group: g, position }
        })
        .collect()
}
