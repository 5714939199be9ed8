//! Time tables: construction by iterative deepening and validation.

use std::collections::BTreeMap;
use std::fmt;

use hpcdag::model::{hyperperiod, Architecture, ConcreteTask, Dag, EngineId, NodeId, TaskId, Time};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::model::{build_ilp, check_tasks, ilp_split_inflation, is_scheduled, nb_int, nb_intervals, scheduled_edges};
use crate::model::{tag_preemptive, IlpModel, Method};
use crate::solver::{solve_builtin, Solution, SolverConfig};
use crate::Result;

/// Execution of one job of a sub-task on one engine during `[start, finish)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reservation {
    pub engine: EngineId,
    pub task: TaskId,
    pub node: NodeId,
    pub job: u64,
    #[serde(with = "rational_text")]
    pub start: BigRational,
    #[serde(with = "rational_text")]
    pub finish: BigRational,
}

impl Reservation {
    pub fn length(&self) -> BigRational {
        &self.finish - &self.start
    }

    fn label(&self) -> String {
        format!("task {} node {} job {} on engine {} [{}, {})", self.task, self.node, self.job, self.engine, self.start, self.finish)
    }
}

/// Reservations over one hyperperiod, sorted by engine then start.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeTable {
    pub method: Method,
    /// Deepening iteration that produced the table; fixes the split costs.
    pub iteration: u32,
    pub hyperperiod: Time,
    pub reservations: Vec<Reservation>,
}

impl TimeTable {
    /// Positive-length intervals of a solved model.
    pub fn from_solution(model: &IlpModel, values: &[BigRational]) -> Self {
        let mut reservations: Vec<Reservation> = model
            .intervals
            .iter()
            .filter(|iv| values[iv.finish] > values[iv.start])
            .map(|iv| Reservation {
                engine: iv.engine,
                task: iv.task,
                node: iv.node,
                job: iv.job,
                start: values[iv.start].clone(),
                finish: values[iv.finish].clone(),
            })
            .collect();
        sort(&mut reservations);
        TimeTable { method: model.method, iteration: model.iteration, hyperperiod: model.hyperperiod, reservations }
    }

    pub fn on_engine(&self, engine: EngineId) -> impl Iterator<Item = &Reservation> {
        self.reservations.iter().filter(move |r| r.engine == engine)
    }
}

fn sort(reservations: &mut [Reservation]) {
    reservations.sort_by(|a, b| {
        (a.engine, &a.start, a.task, a.node, a.job).cmp(&(b.engine, &b.start, b.task, b.node, b.job))
    });
}

mod rational_text {
    use num_rational::BigRational;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &BigRational, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(value)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigRational, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(|_| D::Error::custom(format!("not a rational number: {text:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FailReason {
    /// The last iteration's model has no solution.
    Infeasible,
    SolverTimeout { iteration: u32, nodes: usize },
    TooLarge { iteration: u32, binaries: usize },
}

impl fmt::Display for FailReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FailReason::Infeasible => f.write_str("no feasible table within the interval budget"),
            FailReason::SolverTimeout { iteration, nodes } => {
                write!(f, "solver gave up at iteration {iteration} after {nodes} nodes")
            }
            FailReason::TooLarge { iteration, binaries } => {
                write!(f, "iteration {iteration} needs {binaries} binaries, above the solver cap")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Construction {
    Success(TimeTable),
    /// `iterations` counts the models built.
    Fail { iterations: u32, reason: FailReason },
}

/// Deepens `it = 0, 1, ..` until a model is feasible. Stops after
/// `max_it`, or once every sub-task already has all the intervals it may
/// use.
pub fn construct_timetable(
    tasks: &[ConcreteTask],
    arch: &Architecture,
    method: Method,
    max_it: u32,
    solver: &SolverConfig,
) -> Result<Construction> {
    check_tasks(tasks, arch)?;
    let saturation = tasks
        .iter()
        .flat_map(|t| t.task.nodes.iter())
        .filter(|n| is_scheduled(n))
        .map(|n| if tag_preemptive(arch, n) { u64::from(n.max_preemptions) + 1 } else { 1 })
        .max()
        .unwrap_or(1);
    let mut it = 0;
    loop {
        // Interval counts only grow, so an overload stays an overload.
        if exceeds_capacity(tasks, arch, it) {
            return Ok(Construction::Fail { iterations: it + 1, reason: FailReason::Infeasible });
        }
        let model = build_ilp(tasks, arch, it, method)?;
        match solve_builtin(&model, solver) {
            Solution::Feasible(values) => return Ok(Construction::Success(TimeTable::from_solution(&model, &values))),
            Solution::Infeasible => {}
            Solution::Timeout { nodes } => {
                let reason = FailReason::SolverTimeout { iteration: it, nodes };
                return Ok(Construction::Fail { iterations: it + 1, reason });
            }
            Solution::TooLarge { binaries } => {
                let reason = FailReason::TooLarge { iteration: it, binaries };
                return Ok(Construction::Fail { iterations: it + 1, reason });
            }
        }
        if it >= max_it || nb_int(it) >= saturation {
            return Ok(Construction::Fail { iterations: it + 1, reason: FailReason::Infeasible });
        }
        it += 1;
    }
}

/// Necessary conditions at iteration `it`: every job of a sub-task fits its
/// window, and no tag needs more than its engines offer over a hyperperiod.
pub fn exceeds_capacity(tasks: &[ConcreteTask], arch: &Architecture, it: u32) -> bool {
    let h = hyperperiod(tasks.iter().map(|t| t.period()));
    let mut demand: BTreeMap<&hpcdag::model::Tag, u128> = BTreeMap::new();
    for t in tasks {
        for node in t.task.nodes.iter().filter(|n| is_scheduled(n)) {
            let need = ilp_split_inflation(node.wcet, nb_intervals(node, tag_preemptive(arch, node), it), node.split_cost);
            if need > t.deadline() {
                return true;
            }
            if let Some(tag) = &node.tag {
                *demand.entry(tag).or_default() += u128::from(need) * u128::from(h / t.period());
            }
        }
    }
    demand.into_iter().any(|(tag, d)| d > arch.count(tag) as u128 * u128::from(h))
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum TableViolation {
    #[error("tasks cannot be tabled: {0}")]
    InvalidInput(String),
    #[error("table hyperperiod {table} differs from the task set's {expected}")]
    Hyperperiod { table: Time, expected: Time },
    #[error("{0}: unknown task, node, job or engine")]
    Unknown(String),
    #[error("{0}: engine tag does not match the sub-task")]
    WrongTag(String),
    #[error("{0}: empty or reversed interval")]
    EmptyReservation(String),
    #[error("{0}: outside the job window")]
    Window(String),
    #[error("engine {engine}: {first} overlaps {second}")]
    EngineOverlap { engine: EngineId, first: String, second: String },
    #[error("job overlaps itself across engines: {first} and {second}")]
    JobOverlap { first: String, second: String },
    #[error("task {task} node {node} runs on engines {first} and {second}")]
    Migration { task: TaskId, node: NodeId, first: EngineId, second: EngineId },
    #[error("task {task} node {node} job {job}: {got} reserved, {need} needed")]
    Sufficiency { task: TaskId, node: NodeId, job: u64, got: BigRational, need: Time },
    #[error("task {task} job {job}: node {succ} starts before node {pred} finishes")]
    Precedence { task: TaskId, pred: NodeId, succ: NodeId, job: u64 },
}

fn rational(v: Time) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

/// First violated table invariant, if any.
pub fn validate_timetable(
    table: &TimeTable,
    tasks: &[ConcreteTask],
    arch: &Architecture,
) -> std::result::Result<(), TableViolation> {
    check_tasks(tasks, arch).map_err(|e| TableViolation::InvalidInput(e.to_string()))?;
    let h = hyperperiod(tasks.iter().map(|t| t.period()));
    if table.hyperperiod != h {
        return Err(TableViolation::Hyperperiod { table: table.hyperperiod, expected: h });
    }
    let by_id: BTreeMap<TaskId, &ConcreteTask> = tasks.iter().map(|t| (t.id(), t)).collect();

    for r in &table.reservations {
        let task = by_id.get(&r.task).ok_or_else(|| TableViolation::Unknown(r.label()))?;
        let node = task.task.node(r.node).filter(|n| is_scheduled(n)).ok_or_else(|| TableViolation::Unknown(r.label()))?;
        let engine = arch.engine(r.engine).ok_or_else(|| TableViolation::Unknown(r.label()))?;
        if r.job >= h / task.period() {
            return Err(TableViolation::Unknown(r.label()));
        }
        if node.tag.as_ref() != Some(&engine.tag) {
            return Err(TableViolation::WrongTag(r.label()));
        }
        if r.start >= r.finish {
            return Err(TableViolation::EmptyReservation(r.label()));
        }
        let release = r.job * task.period();
        if r.start < rational(release) || r.finish > rational(release + task.deadline()) {
            return Err(TableViolation::Window(r.label()));
        }
    }

    let mut sorted = table.reservations.clone();
    sort(&mut sorted);
    let mut engines: BTreeMap<EngineId, Vec<&Reservation>> = BTreeMap::new();
    let mut jobs: BTreeMap<(TaskId, NodeId, u64), Vec<&Reservation>> = BTreeMap::new();
    for r in &sorted {
        engines.entry(r.engine).or_default().push(r);
        jobs.entry((r.task, r.node, r.job)).or_default().push(r);
    }
    for (&engine, list) in &engines {
        if let Some((a, b)) = first_overlap(list) {
            return Err(TableViolation::EngineOverlap { engine, first: a.label(), second: b.label() });
        }
    }
    for list in jobs.values_mut() {
        list.sort_by(|a, b| (&a.start, a.engine).cmp(&(&b.start, b.engine)));
        if let Some((a, b)) = first_overlap(list) {
            return Err(TableViolation::JobOverlap { first: a.label(), second: b.label() });
        }
    }
    if table.method == Method::Partitioned {
        let mut home: BTreeMap<(TaskId, NodeId), EngineId> = BTreeMap::new();
        for r in &table.reservations {
            let first = *home.entry((r.task, r.node)).or_insert(r.engine);
            if first != r.engine {
                return Err(TableViolation::Migration { task: r.task, node: r.node, first, second: r.engine });
            }
        }
    }

    for t in tasks {
        for node in t.task.nodes.iter().filter(|n| is_scheduled(n)) {
            let nb = nb_intervals(node, tag_preemptive(arch, node), table.iteration);
            let need = ilp_split_inflation(node.wcet, nb, node.split_cost);
            for job in 0..h / t.period() {
                let got: BigRational = jobs
                    .get(&(t.id(), node.id, job))
                    .map(|list| list.iter().map(|r| r.length()).sum())
                    .unwrap_or_else(BigRational::zero);
                if got < rational(need) {
                    return Err(TableViolation::Sufficiency { task: t.id(), node: node.id, job, got, need });
                }
            }
        }
        let dag = Dag::new(&t.task).map_err(|e| TableViolation::InvalidInput(e.to_string()))?;
        for (pred, succ) in scheduled_edges(t, &dag) {
            for job in 0..h / t.period() {
                let (Some(before), Some(after)) = (jobs.get(&(t.id(), pred, job)), jobs.get(&(t.id(), succ, job))) else {
                    continue;
                };
                let finish = before.iter().map(|r| &r.finish).max().unwrap();
                let start = after.iter().map(|r| &r.start).min().unwrap();
                if start < finish {
                    return Err(TableViolation::Precedence { task: t.id(), pred, succ, job });
                }
            }
        }
    }
    Ok(())
}

/// First pair of overlapping reservations in a start-sorted list.
fn first_overlap<'a>(list: &[&'a Reservation]) -> Option<(&'a Reservation, &'a Reservation)> {
    let mut reach: Option<&Reservation> = None;
    for &r in list {
        if let Some(prev) = reach {
            if r.start < prev.finish {
                return Some((prev, r));
            }
            if r.finish > prev.finish {
                reach = Some(r);
            }
        } else {
            reach = Some(r);
        }
    }
    None
}
