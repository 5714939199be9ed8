//! Mixed-integer model of a time table.
//!
//! Every job `k` of a sub-task `(i, j)` owns `nb` intervals on every engine
//! of its tag. Interval `l` on engine `m` is the pair `s_i_j_k_l_m <=
//! f_i_j_k_l_m` inside the job window `[k*T, k*T + D]`. Unused intervals
//! collapse to zero length.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use hpcdag::model::{hyperperiod, Architecture, ConcreteTask, Dag, EngineId, Node, NodeId, NodeKind, TaskId, Time};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::{Result, TtError};

pub type VarId = usize;

/// Upper bound on the number of intervals a model may hold.
const INTERVAL_LIMIT: usize = 50_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Jobs may spread their intervals over every engine of the tag.
    Global,
    /// Each sub-task lives on one engine for all its jobs.
    Partitioned,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Global => "global",
            Method::Partitioned => "partitioned",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "global" => Ok(Method::Global),
            "partitioned" => Ok(Method::Partitioned),
            other => Err(format!("unknown method {other:?} (expected global or partitioned)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum VarKind {
    Start { task: TaskId, node: NodeId, job: u64, interval: u64, engine: EngineId },
    Finish { task: TaskId, node: NodeId, job: u64, interval: u64, engine: EngineId },
    /// Disjunction selector `x<n>`.
    Selector(usize),
    /// `a_i_j_m`: sub-task `(i, j)` resides on engine `m`.
    Residence { task: TaskId, node: NodeId, engine: EngineId },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Variable {
    pub kind: VarKind,
    pub lower: i128,
    pub upper: i128,
}

impl Variable {
    pub fn is_binary(&self) -> bool {
        matches!(self.kind, VarKind::Selector(_) | VarKind::Residence { .. })
    }

    pub fn name(&self) -> String {
        match &self.kind {
            VarKind::Start { task, node, job, interval, engine } => format!("s_{task}_{node}_{job}_{interval}_{engine}"),
            VarKind::Finish { task, node, job, interval, engine } => format!("f_{task}_{node}_{job}_{interval}_{engine}"),
            VarKind::Selector(n) => format!("x{n}"),
            VarKind::Residence { task, node, engine } => format!("a_{task}_{node}_{engine}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl Sense {
    pub fn holds<T: PartialOrd>(self, lhs: &T, rhs: &T) -> bool {
        match self {
            Sense::Le => lhs <= rhs,
            Sense::Ge => lhs >= rhs,
            Sense::Eq => lhs == rhs,
        }
    }
}

/// `sum(coef * var) sense rhs`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Row {
    pub terms: Vec<(VarId, i128)>,
    pub sense: Sense,
    pub rhs: i128,
}

impl Row {
    pub fn new(terms: Vec<(VarId, i128)>, sense: Sense, rhs: i128) -> Self {
        Row { terms, sense, rhs }
    }
}

/// Variables of one interval.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntervalVars {
    pub task: TaskId,
    pub node: NodeId,
    pub job: u64,
    pub interval: u64,
    pub engine: EngineId,
    pub start: VarId,
    pub finish: VarId,
}

/// One job of a sub-task with its window and inflated demand.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JobDemand {
    pub task: TaskId,
    pub node: NodeId,
    pub job: u64,
    pub release: Time,
    pub deadline: Time,
    pub intervals: u64,
    pub demand: Time,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IlpModel {
    pub iteration: u32,
    pub method: Method,
    pub hyperperiod: Time,
    pub big_m: i128,
    pub vars: Vec<Variable>,
    pub rows: Vec<Row>,
    /// Maximised.
    pub objective: Vec<(VarId, i128)>,
    pub intervals: Vec<IntervalVars>,
    pub jobs: Vec<JobDemand>,
    selectors: usize,
}

impl IlpModel {
    fn new(iteration: u32, method: Method, hyperperiod: Time, big_m: i128) -> Self {
        IlpModel {
            iteration,
            method,
            hyperperiod,
            big_m,
            vars: Vec::new(),
            rows: Vec::new(),
            objective: Vec::new(),
            intervals: Vec::new(),
            jobs: Vec::new(),
            selectors: 0,
        }
    }

    fn add_var(&mut self, kind: VarKind, lower: i128, upper: i128) -> VarId {
        self.vars.push(Variable { kind, lower, upper });
        self.vars.len() - 1
    }

    fn add_selector(&mut self) -> VarId {
        let n = self.selectors;
        self.selectors += 1;
        self.add_var(VarKind::Selector(n), 0, 1)
    }

    pub fn binaries(&self) -> impl Iterator<Item = VarId> + '_ {
        (0..self.vars.len()).filter(|&v| self.vars[v].is_binary())
    }

    pub fn binary_count(&self) -> usize {
        self.binaries().count()
    }

    /// Adds "interval a before b, or b before a" with two fresh selectors.
    fn add_disjunction(&mut self, a: (VarId, VarId), b: (VarId, VarId)) {
        let x1 = self.add_selector();
        let x2 = self.add_selector();
        let rows = linearize_disjunction(a.1, b.0, b.1, a.0, x1, x2, self.big_m);
        self.rows.extend(rows);
    }

    /// Index of the first row, bound or integrality requirement violated by
    /// `values`, checked exactly. Bound and integrality failures report
    /// `rows.len() + var`.
    pub fn first_violation(&self, values: &[BigRational]) -> Option<usize> {
        let int = |v: i128| BigRational::from_integer(BigInt::from(v));
        for (r, row) in self.rows.iter().enumerate() {
            let mut lhs = BigRational::zero();
            for &(v, c) in &row.terms {
                lhs += int(c) * &values[v];
            }
            if !row.sense.holds(&lhs, &int(row.rhs)) {
                return Some(r);
            }
        }
        for (v, var) in self.vars.iter().enumerate() {
            let x = &values[v];
            let in_bounds = *x >= int(var.lower) && *x <= int(var.upper);
            let integral = !var.is_binary() || x.is_integer();
            if !in_bounds || !integral {
                return Some(self.rows.len() + v);
            }
        }
        None
    }
}

/// Interval budget of deepening iteration `it`.
pub fn nb_int(it: u32) -> u64 {
    if it >= 63 {
        u64::MAX
    } else {
        1 << it
    }
}

/// Intervals per job of `node` at iteration `it`: one on a non-preemptive
/// tag, else the iteration budget capped by the allowed preemptions.
pub fn nb_intervals(node: &Node, preemptive: bool, it: u32) -> u64 {
    if preemptive {
        nb_int(it).min(u64::from(node.max_preemptions) + 1)
    } else {
        1
    }
}

/// WCET plus one split cost per interval.
pub fn ilp_split_inflation(wcet: Time, nb_intervals: u64, split_cost: Time) -> Time {
    wcet + nb_intervals * split_cost
}

/// Big-M rows for "`f <= s2` or `f2 <= s`" over intervals `[s, f]` and
/// `[s2, f2]`. `x1 = 0` selects `f <= s2`, `x2 = 0` selects `f2 <= s`, and
/// exactly one of them is set.
pub fn linearize_disjunction(
    f: VarId,
    s2: VarId,
    f2: VarId,
    s: VarId,
    x1: VarId,
    x2: VarId,
    big_m: i128,
) -> [Row; 5] {
    [
        Row::new(vec![(f, 1), (x1, -big_m), (s2, -1)], Sense::Le, 0),
        Row::new(vec![(f, 1), (x1, -big_m), (s2, -1)], Sense::Ge, -big_m),
        Row::new(vec![(f2, 1), (x2, -big_m), (s, -1)], Sense::Le, 0),
        Row::new(vec![(f2, 1), (x2, -big_m), (s, -1)], Sense::Ge, -big_m),
        Row::new(vec![(x1, 1), (x2, 1)], Sense::Eq, 1),
    ]
}

/// Sub-tasks that take part in the table: zero-WCET nodes need no time and
/// only relay precedence.
pub(crate) fn is_scheduled(node: &Node) -> bool {
    node.is_subtask() && node.wcet > 0
}

/// Precedence between scheduled sub-tasks, seen through unscheduled nodes.
/// Returns `(pred, succ)` node ids in ascending order.
pub(crate) fn scheduled_edges(task: &ConcreteTask, dag: &Dag) -> Vec<(NodeId, NodeId)> {
    let nodes = &task.task.nodes;
    let mut edges = Vec::new();
    for u in 0..dag.len() {
        if !is_scheduled(&nodes[u]) {
            continue;
        }
        let mut seen = vec![false; dag.len()];
        let mut stack: Vec<usize> = dag.succ(u).to_vec();
        while let Some(v) = stack.pop() {
            if std::mem::replace(&mut seen[v], true) {
                continue;
            }
            if is_scheduled(&nodes[v]) {
                edges.push((dag.id(u), dag.id(v)));
            } else {
                stack.extend_from_slice(dag.succ(v));
            }
        }
    }
    edges.sort_unstable();
    edges
}

/// Whether every engine of `node`'s tag can be preempted.
pub(crate) fn tag_preemptive(arch: &Architecture, node: &Node) -> bool {
    node.tag.as_ref().is_some_and(|tag| arch.engines_with_tag(tag).all(|e| e.preemptive))
}

pub(crate) fn check_tasks(tasks: &[ConcreteTask], arch: &Architecture) -> Result<()> {
    for t in tasks {
        for node in &t.task.nodes {
            if matches!(node.kind, NodeKind::Conditional | NodeKind::Alternative) {
                return Err(TtError::UnsupportedNodeKind { task: t.id(), node: node.id, kind: node.kind });
            }
            if let Some(tag) = node.tag.as_ref().filter(|_| is_scheduled(node)) {
                if arch.count(tag) == 0 {
                    return Err(hpcdag::Error::UnknownTag(tag.clone()).into());
                }
            }
        }
        if t.period() == 0 || t.deadline() == 0 {
            return Err(hpcdag::Error::InvalidTask { task: t.id(), reason: "period and deadline must be positive".into() }.into());
        }
    }
    Ok(())
}

/// Builds the model of iteration `it`.
///
/// Intervals on one engine get a disjunction whenever their windows
/// intersect and no precedence already orders them. Under `Global` the
/// intervals of one job on different engines are kept apart as well; under
/// `Partitioned` residence binaries pin each sub-task to a single engine.
/// The intervals of one job on one engine are ordered by index instead of
/// being paired by disjunctions.
pub fn build_ilp(tasks: &[ConcreteTask], arch: &Architecture, it: u32, method: Method) -> Result<IlpModel> {
    check_tasks(tasks, arch)?;
    let h = hyperperiod(tasks.iter().map(|t| t.period()));
    let max_d = tasks.iter().map(|t| t.deadline()).max().unwrap_or(0);
    let big_m = i128::from(h) + i128::from(max_d) + 1;
    let mut model = IlpModel::new(it, method, h, big_m);

    let mut planned = 0usize;
    for t in tasks {
        for node in t.task.nodes.iter().filter(|n| is_scheduled(n)) {
            let engines = arch.count(node.tag.as_ref().unwrap());
            let nb = nb_intervals(node, tag_preemptive(arch, node), it) as usize;
            planned = planned.saturating_add((h / t.period()) as usize * engines * nb);
        }
    }
    if planned > INTERVAL_LIMIT {
        return Err(TtError::ModelTooLarge { intervals: planned, limit: INTERVAL_LIMIT });
    }

    // (task index, node id, job) -> interval indices grouped per engine
    let mut per_job: BTreeMap<(usize, NodeId, u64), Vec<Vec<usize>>> = BTreeMap::new();
    let mut dags = Vec::with_capacity(tasks.len());
    for (ti, t) in tasks.iter().enumerate() {
        let dag = Dag::new(&t.task)?;
        let period = t.period();
        for k in 0..h / period {
            let release = k * period;
            let deadline = release + t.deadline();
            for node in t.task.nodes.iter().filter(|n| is_scheduled(n)) {
                let tag = node.tag.as_ref().unwrap();
                let nb = nb_intervals(node, tag_preemptive(arch, node), it);
                let demand = ilp_split_inflation(node.wcet, nb, node.split_cost);
                let mut groups = Vec::new();
                let mut lengths = Vec::new();
                for engine in arch.engines_with_tag(tag) {
                    let mut group = Vec::new();
                    for l in 0..nb {
                        let (task, node_id, engine_id) = (t.id(), node.id, engine.id);
                        let lo = i128::from(release);
                        let hi = i128::from(deadline);
                        let s = model.add_var(
                            VarKind::Start { task, node: node_id, job: k, interval: l, engine: engine_id },
                            lo,
                            hi,
                        );
                        let f = model.add_var(
                            VarKind::Finish { task, node: node_id, job: k, interval: l, engine: engine_id },
                            lo,
                            hi,
                        );
                        model.rows.push(Row::new(vec![(s, 1), (f, -1)], Sense::Le, 0));
                        if let Some(&prev) = group.last() {
                            let prev: &IntervalVars = &model.intervals[prev];
                            let prev_f = prev.finish;
                            model.rows.push(Row::new(vec![(prev_f, 1), (s, -1)], Sense::Le, 0));
                        }
                        model.objective.push((f, 1));
                        model.objective.push((s, -1));
                        lengths.push((f, 1));
                        lengths.push((s, -1));
                        group.push(model.intervals.len());
                        model.intervals.push(IntervalVars {
                            task,
                            node: node_id,
                            job: k,
                            interval: l,
                            engine: engine_id,
                            start: s,
                            finish: f,
                        });
                    }
                    groups.push(group);
                }
                model.rows.push(Row::new(lengths, Sense::Ge, i128::from(demand)));
                model.jobs.push(JobDemand {
                    task: t.id(),
                    node: node.id,
                    job: k,
                    release,
                    deadline,
                    intervals: nb,
                    demand,
                });
                per_job.insert((ti, node.id, k), groups);
            }
        }
        dags.push(dag);
    }

    // precedence within a job
    for (ti, t) in tasks.iter().enumerate() {
        for (u, v) in scheduled_edges(t, &dags[ti]) {
            for k in 0..h / t.period() {
                let before: Vec<usize> = per_job[&(ti, u, k)].iter().flatten().copied().collect();
                let after: Vec<usize> = per_job[&(ti, v, k)].iter().flatten().copied().collect();
                for &a in &before {
                    for &b in &after {
                        let (fa, sb) = (model.intervals[a].finish, model.intervals[b].start);
                        model.rows.push(Row::new(vec![(fa, 1), (sb, -1)], Sense::Le, 0));
                    }
                }
            }
        }
    }

    let reach: Vec<_> = dags.iter().map(|d| d.descendants()).collect();
    let ordered = |model: &IlpModel, a: usize, b: usize| -> bool {
        let (ia, ib) = (&model.intervals[a], &model.intervals[b]);
        if ia.task != ib.task || ia.job != ib.job {
            return false;
        }
        let ti = tasks.iter().position(|t| t.id() == ia.task).unwrap();
        let dag = &dags[ti];
        let (Some(x), Some(y)) = (dag.index(ia.node), dag.index(ib.node)) else { return false };
        x == y || reach[ti][x].contains(y) || reach[ti][y].contains(x)
    };
    let window = |model: &IlpModel, a: usize| -> (i128, i128) {
        let var = &model.vars[model.intervals[a].start];
        (var.lower, var.upper)
    };

    // same-engine pairs
    let mut by_engine: BTreeMap<EngineId, Vec<usize>> = BTreeMap::new();
    for (idx, iv) in model.intervals.iter().enumerate() {
        by_engine.entry(iv.engine).or_default().push(idx);
    }
    for list in by_engine.values() {
        for (p, &a) in list.iter().enumerate() {
            for &b in &list[p + 1..] {
                let (lo_a, hi_a) = window(&model, a);
                let (lo_b, hi_b) = window(&model, b);
                if lo_a.max(lo_b) >= hi_a.min(hi_b) || ordered(&model, a, b) {
                    continue;
                }
                let (ia, ib) = (&model.intervals[a], &model.intervals[b]);
                let pair = ((ia.start, ia.finish), (ib.start, ib.finish));
                model.add_disjunction(pair.0, pair.1);
            }
        }
    }

    match method {
        Method::Global => {
            for groups in per_job.values() {
                for (g, group) in groups.iter().enumerate() {
                    for other in &groups[g + 1..] {
                        for &a in group {
                            for &b in other {
                                let (ia, ib) = (&model.intervals[a], &model.intervals[b]);
                                let pair = ((ia.start, ia.finish), (ib.start, ib.finish));
                                model.add_disjunction(pair.0, pair.1);
                            }
                        }
                    }
                }
            }
        }
        Method::Partitioned => {
            for t in tasks {
                for node in t.task.nodes.iter().filter(|n| is_scheduled(n)) {
                    let mut residence = Vec::new();
                    for engine in arch.engines_with_tag(node.tag.as_ref().unwrap()) {
                        let a = model.add_var(VarKind::Residence { task: t.id(), node: node.id, engine: engine.id }, 0, 1);
                        residence.push((a, 1));
                        let own: Vec<(VarId, VarId)> = model
                            .intervals
                            .iter()
                            .filter(|iv| iv.task == t.id() && iv.node == node.id && iv.engine == engine.id)
                            .map(|iv| (iv.start, iv.finish))
                            .collect();
                        for (s, f) in own {
                            let terms = vec![(f, 1), (a, -big_m), (s, -1)];
                            model.rows.push(Row::new(terms.clone(), Sense::Le, 0));
                            model.rows.push(Row::new(terms, Sense::Ge, -big_m));
                        }
                    }
                    model.rows.push(Row::new(residence, Sense::Eq, 1));
                }
            }
        }
    }
    Ok(model)
}
