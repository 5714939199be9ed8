//! Partitioned allocation of task specifications onto engines: the
//! top-level driver, sequential placement of a concrete task and
//! parallelization by sub-task omission.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{conditional_is_schedulable, EngineWorkload, WorkItem, DEFAULT_SCENARIO_LIMIT};
use crate::expand::{conditional_scenarios, enumerate_concretes, filter_tagged, sort_concretes, OrderRelation, TaggedTask};
use crate::model::{
    longest_paths, Architecture, BranchChoice, ConcreteTask, EngineId, NodeId, NodeKind, Tag, TaskId, TaskSpec, Time,
};
use crate::timing::{
    assign_windows, charge_items, preemption_charges, PreemptionScheme, Reachability, SlackMode, WindowAssignment,
};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Fit {
    /// Fullest engine first.
    Best,
    /// Emptiest engine first.
    Worst,
}

/// Which sub-task leaves a tagged task that does not fit an engine.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Omit {
    /// Off-critical-path nodes first, neighbours of omitted nodes preferred.
    Parallel,
    /// Uniformly at random.
    Random,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocParams {
    pub order: OrderRelation,
    pub slack: SlackMode,
    pub fit: Fit,
    pub omit: Omit,
    pub scheme: PreemptionScheme,
    pub seed: u64,
    /// Times a residual task may go back to the queue.
    pub retries: u32,
    pub scenario_limit: usize,
    /// Analyse non-preemptive engines as running jobs in chunks, each split
    /// paying the engine's preemption cost, instead of charging blocking.
    #[serde(default = "chunked_default")]
    pub chunked: bool,
}

fn chunked_default() -> bool {
    true
}

impl AllocParams {
    pub fn new(fit: Fit, order: OrderRelation, slack: SlackMode, omit: Omit) -> Self {
        AllocParams {
            order,
            slack,
            fit,
            omit,
            scheme: PreemptionScheme::Reduced,
            seed: 0,
            retries: 3,
            scenario_limit: DEFAULT_SCENARIO_LIMIT,
            chunked: true,
        }
    }

    pub fn with_scheme(mut self, scheme: PreemptionScheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Heuristic name such as `BRF-P`: fit, order, slack, then omission.
    pub fn name(&self) -> String {
        let fit = match self.fit {
            Fit::Best => 'B',
            Fit::Worst => 'W',
        };
        let order = match self.order {
            OrderRelation::R => 'R',
            OrderRelation::O => 'O',
        };
        let slack = match self.slack {
            SlackMode::Fair => 'F',
            SlackMode::Proportional => 'P',
        };
        let omit = match self.omit {
            Omit::Parallel => 'P',
            Omit::Random => 'R',
        };
        format!("{fit}{order}{slack}-{omit}")
    }
}

impl FromStr for AllocParams {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("unknown heuristic {s:?}"));
        let chars: Vec<char> = s.chars().collect();
        if chars.len() != 5 || chars[3] != '-' {
            return Err(bad());
        }
        let fit = match chars[0] {
            'B' => Fit::Best,
            'W' => Fit::Worst,
            _ => return Err(bad()),
        };
        let order = match chars[1] {
            'R' => OrderRelation::R,
            'O' => OrderRelation::O,
            _ => return Err(bad()),
        };
        let slack = match chars[2] {
            'F' => SlackMode::Fair,
            'P' => SlackMode::Proportional,
            _ => return Err(bad()),
        };
        let omit = match chars[4] {
            'P' => Omit::Parallel,
            'R' => Omit::Random,
            _ => return Err(bad()),
        };
        Ok(AllocParams::new(fit, order, slack, omit))
    }
}

impl fmt::Display for AllocParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// One sub-task on an engine.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub task: TaskId,
    pub node: NodeId,
    pub wcet: Time,
    /// Execution time including the preemption charge.
    pub inflated_wcet: Time,
    pub offset: Time,
    pub deadline: Time,
    pub period: Time,
}

impl Placement {
    pub fn work_item(&self) -> WorkItem {
        WorkItem {
            task: self.task,
            node: self.node,
            wcet: self.inflated_wcet,
            offset: self.offset,
            deadline: self.deadline,
            period: self.period,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    /// The concrete task chosen for every (partially) allocated spec.
    pub concretes: Vec<ConcreteTask>,
    /// Placements per engine, in allocation order.
    pub engines: BTreeMap<EngineId, Vec<Placement>>,
    /// Specs left without a complete placement.
    pub unallocated: Vec<TaskId>,
}

impl Allocation {
    pub fn concrete(&self, task: TaskId) -> Option<&ConcreteTask> {
        self.concretes.iter().find(|c| c.id() == task)
    }

    /// Engines running at least one sub-task with positive WCET.
    pub fn active_engines(&self) -> impl Iterator<Item = EngineId> + '_ {
        self.engines.iter().filter(|(_, p)| p.iter().any(|p| p.wcet > 0)).map(|(&e, _)| e)
    }

    /// Sum of inflated WCET over period on `engine`.
    pub fn utilization(&self, engine: EngineId) -> f64 {
        self.engines.get(&engine).map_or(0.0, |ps| ps.iter().map(|p| p.inflated_wcet as f64 / p.period as f64).sum())
    }

    pub fn workload(&self, arch: &Architecture, engine: EngineId) -> Option<EngineWorkload> {
        let e = arch.engine(engine)?.clone();
        let items = self.engines.get(&engine).map_or_else(Vec::new, |ps| ps.iter().map(Placement::work_item).collect());
        Some(EngineWorkload::new(e, items))
    }

    /// Total preemption charge over every placement.
    pub fn total_inflation(&self) -> Time {
        self.engines.values().flatten().map(|p| p.inflated_wcet - p.wcet).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AllocOutcome {
    Success(Allocation),
    /// `task` could not be placed; `partial` holds what was placed before.
    Fail { task: TaskId, partial: Allocation },
}

impl AllocOutcome {
    pub fn is_success(&self) -> bool {
        matches!(self, AllocOutcome::Success(_))
    }

    pub fn allocation(&self) -> &Allocation {
        match self {
            AllocOutcome::Success(a) => a,
            AllocOutcome::Fail { partial, .. } => partial,
        }
    }
}

/// Per-concrete data reused by every trial.
struct Prepared {
    concrete: ConcreteTask,
    windows: WindowAssignment,
    reach: Reachability,
    scenarios: Option<Vec<BTreeSet<NodeId>>>,
    /// Task-wide critical path membership.
    critical: BTreeSet<NodeId>,
    neighbours: BTreeMap<NodeId, BTreeSet<NodeId>>,
}

impl Prepared {
    fn new(concrete: ConcreteTask, slack: SlackMode) -> Result<Self> {
        let windows = assign_windows(&concrete, slack)?;
        let reach = Reachability::new(&concrete.task)?;
        let scenarios = if concrete.task.has_kind(NodeKind::Conditional) {
            Some(conditional_scenarios(&concrete)?)
        } else {
            None
        };
        let paths = longest_paths(&concrete)?;
        let critical = concrete
            .task
            .nodes
            .iter()
            .filter(|n| paths.on_critical_path(n.id, n.demand()))
            .map(|n| n.id)
            .collect();
        let dag = reach.dag();
        let neighbours = (0..dag.len())
            .map(|i| (dag.id(i), dag.succ(i).iter().chain(dag.pred(i)).map(|&j| dag.id(j)).collect()))
            .collect();
        Ok(Prepared { concrete, windows, reach, scenarios, critical, neighbours })
    }

    fn id(&self) -> TaskId {
        self.concrete.id()
    }

    fn placement(&self, node: NodeId) -> Placement {
        let n = self.concrete.task.node(node).expect("node of the concrete task");
        let w = self.windows.get(node).expect("window of every node");
        Placement {
            task: self.id(),
            node,
            wcet: n.wcet,
            inflated_wcet: n.wcet,
            offset: w.offset,
            deadline: w.deadline,
            period: self.concrete.period(),
        }
    }
}

/// Context the omission heuristic needs about a concrete task.
pub struct OmitContext<'a> {
    pub critical: &'a BTreeSet<NodeId>,
    pub neighbours: &'a BTreeMap<NodeId, BTreeSet<NodeId>>,
}

/// Picks the sub-task to move out of `remaining`.
pub fn remove_one<R: Rng + ?Sized>(
    remaining: &BTreeSet<NodeId>,
    omitted: &BTreeSet<NodeId>,
    ctx: &OmitContext<'_>,
    omit: Omit,
    rng: &mut R,
) -> Result<NodeId> {
    if remaining.is_empty() {
        return Err(Error::EmptyTaggedTask);
    }
    match omit {
        Omit::Random => {
            let k = rng.gen_range(0..remaining.len());
            Ok(*remaining.iter().nth(k).expect("index in range"))
        }
        Omit::Parallel => {
            let off_path: Vec<NodeId> = remaining.iter().copied().filter(|n| !ctx.critical.contains(n)).collect();
            let pool: Vec<NodeId> = if off_path.is_empty() { remaining.iter().copied().collect() } else { off_path };
            let near_omitted = |n: &NodeId| {
                ctx.neighbours.get(n).is_some_and(|ns| ns.iter().any(|m| omitted.contains(m)))
            };
            Ok(pool.iter().copied().find(near_omitted).unwrap_or(pool[0]))
        }
    }
}

/// Engine, engine version, task, concrete choice vector, candidate nodes.
type MemoKey = (EngineId, u64, TaskId, Vec<BranchChoice>, Vec<NodeId>);

/// Mutable state of one allocation run.
struct State<'a> {
    arch: &'a Architecture,
    params: &'a AllocParams,
    placements: BTreeMap<EngineId, Vec<Placement>>,
    /// Inflated utilization per engine, refreshed on commit.
    util: BTreeMap<EngineId, f64>,
    version: BTreeMap<EngineId, u64>,
    reach: BTreeMap<TaskId, Reachability>,
    scenarios: BTreeMap<TaskId, Vec<BTreeSet<NodeId>>>,
    memo: HashMap<MemoKey, bool>,
    rng: ChaCha8Rng,
}

impl<'a> State<'a> {
    fn new(arch: &'a Architecture, params: &'a AllocParams) -> Self {
        State {
            arch,
            params,
            placements: BTreeMap::new(),
            util: BTreeMap::new(),
            version: BTreeMap::new(),
            reach: BTreeMap::new(),
            scenarios: BTreeMap::new(),
            memo: HashMap::new(),
            rng: ChaCha8Rng::seed_from_u64(params.seed),
        }
    }

    /// Engines of `tag` in fit order.
    fn engines_in_fit_order(&self, tag: &Tag) -> Vec<EngineId> {
        let mut ids: Vec<EngineId> = self.arch.engines_with_tag(tag).map(|e| e.id).collect();
        let util = |e: &EngineId| self.util.get(e).copied().unwrap_or(0.0);
        ids.sort_by(|a, b| {
            let by_util = util(a).total_cmp(&util(b));
            let by_util = if self.params.fit == Fit::Best { by_util.reverse() } else { by_util };
            by_util.then(a.cmp(b))
        });
        ids
    }

    /// Existing placements of `engine` plus `extra`, inflated together.
    fn inflated(&self, engine: EngineId, extra: &[Placement], reach: &BTreeMap<TaskId, &Reachability>) -> Vec<Placement> {
        let mut all: Vec<Placement> = self.placements.get(&engine).cloned().unwrap_or_default();
        all.extend_from_slice(extra);
        let ratio = self.arch.engine(engine).expect("known engine").preempt_cost_ratio;
        let items = charge_items(all.iter().map(|p| (p.task, p.node, p.wcet)), |t| reach.get(&t).copied());
        for (p, extra) in all.iter_mut().zip(preemption_charges(ratio, &items, self.params.scheme)) {
            p.inflated_wcet = p.wcet + extra;
        }
        all
    }

    fn reach_with<'s>(&'s self, prepared: &'s Prepared) -> BTreeMap<TaskId, &'s Reachability> {
        let mut map: BTreeMap<TaskId, &Reachability> = self.reach.iter().map(|(&k, v)| (k, v)).collect();
        map.insert(prepared.id(), &prepared.reach);
        map
    }

    /// Whether `engine` stays schedulable with `nodes` of `prepared` added.
    fn fits(&mut self, engine: EngineId, prepared: &Prepared, nodes: &BTreeSet<NodeId>) -> bool {
        let key = (
            engine,
            self.version.get(&engine).copied().unwrap_or(0),
            prepared.id(),
            prepared.concrete.choices.clone(),
            nodes.iter().copied().collect(),
        );
        if let Some(&hit) = self.memo.get(&key) {
            return hit;
        }
        let extra: Vec<Placement> = nodes.iter().map(|&n| prepared.placement(n)).collect();
        let reach = self.reach_with(prepared);
        let all = self.inflated(engine, &extra, &reach);
        let workload = EngineWorkload::new(
            analysed_engine(self.arch, engine, self.params.chunked),
            all.iter().map(Placement::work_item).collect(),
        );
        let mut scenarios = self.scenarios.clone();
        if let Some(s) = &prepared.scenarios {
            scenarios.insert(prepared.id(), s.clone());
        }
        let ok = conditional_is_schedulable(&workload, &scenarios, self.params.scenario_limit);
        self.memo.insert(key, ok);
        ok
    }

    fn commit(&mut self, prepared: &Prepared, chosen: &BTreeMap<EngineId, BTreeSet<NodeId>>) {
        self.reach.entry(prepared.id()).or_insert_with(|| prepared.reach.clone());
        if let Some(s) = &prepared.scenarios {
            self.scenarios.entry(prepared.id()).or_insert_with(|| s.clone());
        }
        for (&engine, nodes) in chosen {
            let list = self.placements.entry(engine).or_default();
            list.extend(nodes.iter().map(|&n| prepared.placement(n)));
            let reach: BTreeMap<TaskId, &Reachability> = self.reach.iter().map(|(&k, v)| (k, v)).collect();
            let inflated = self.inflated(engine, &[], &reach);
            let util = inflated.iter().map(|p| p.inflated_wcet as f64 / p.period as f64).sum();
            self.placements.insert(engine, inflated);
            self.util.insert(engine, util);
            *self.version.entry(engine).or_insert(0) += 1;
        }
    }

    fn into_allocation(self, concretes: Vec<ConcreteTask>, unallocated: Vec<TaskId>) -> Allocation {
        Allocation { concretes, engines: self.placements, unallocated }
    }
}

/// Node ids of `tagged`, restricted to `remaining`.
fn tagged_nodes(tagged: &TaggedTask, remaining: &BTreeSet<NodeId>) -> BTreeSet<NodeId> {
    tagged.nodes.iter().map(|n| n.id).filter(|id| remaining.contains(id)).collect()
}

/// Places every tagged task of `remaining` whole on one engine each.
fn feasible_sequential(
    state: &mut State<'_>,
    prepared: &Prepared,
    remaining: &BTreeSet<NodeId>,
) -> Result<Option<BTreeMap<EngineId, BTreeSet<NodeId>>>> {
    let mut chosen = BTreeMap::new();
    for (tag, tagged) in filter_tagged(&prepared.concrete) {
        let nodes = tagged_nodes(&tagged, remaining);
        if nodes.is_empty() {
            continue;
        }
        let engines = state.engines_in_fit_order(&tag);
        if engines.is_empty() {
            return Err(Error::UnknownTag(tag));
        }
        let Some(engine) = engines.into_iter().find(|&e| state.fits(e, prepared, &nodes)) else {
            return Ok(None);
        };
        chosen.insert(engine, nodes);
    }
    Ok(Some(chosen))
}

/// Splits each tagged task of `remaining` over the engines of its tag.
/// Returns the placed part, or `None` when some tag places nothing.
fn parallelize(
    state: &mut State<'_>,
    prepared: &Prepared,
    remaining: &BTreeSet<NodeId>,
) -> Result<Option<BTreeMap<EngineId, BTreeSet<NodeId>>>> {
    let ctx = OmitContext { critical: &prepared.critical, neighbours: &prepared.neighbours };
    let mut chosen: BTreeMap<EngineId, BTreeSet<NodeId>> = BTreeMap::new();
    for (tag, tagged) in filter_tagged(&prepared.concrete) {
        let mut current = tagged_nodes(&tagged, remaining);
        if current.is_empty() {
            continue;
        }
        let mut placed_any = false;
        for engine in state.engines_in_fit_order(&tag) {
            if current.is_empty() {
                break;
            }
            let mut trial = current.clone();
            let mut omitted = BTreeSet::new();
            while !trial.is_empty() && !state.fits(engine, prepared, &trial) {
                let victim = remove_one(&trial, &omitted, &ctx, state.params.omit, &mut state.rng)?;
                trial.remove(&victim);
                omitted.insert(victim);
            }
            if !trial.is_empty() {
                placed_any = true;
                chosen.insert(engine, trial);
                current = omitted;
            }
        }
        if !placed_any {
            return Ok(None);
        }
    }
    Ok(Some(chosen))
}

enum Entry {
    Spec(TaskSpec),
    Residual { index: usize, remaining: BTreeSet<NodeId>, requeued: u32 },
}

/// Allocates every spec or reports the first one that cannot be placed.
pub fn allocate_taskset(specs: &[TaskSpec], arch: &Architecture, params: &AllocParams) -> Result<AllocOutcome> {
    arch.check()?;
    let mut state = State::new(arch, params);
    let mut prepared: Vec<Prepared> = Vec::new();
    let mut queue: VecDeque<Entry> = specs.iter().cloned().map(Entry::Spec).collect();
    let mut unallocated = Vec::new();

    let fail = |state: State<'_>, prepared: Vec<Prepared>, task: TaskId| {
        let concretes = prepared.into_iter().map(|p| p.concrete).collect();
        Ok(AllocOutcome::Fail { task, partial: state.into_allocation(concretes, vec![task]) })
    };

    while let Some(entry) = queue.pop_front() {
        match entry {
            Entry::Spec(spec) => {
                let concretes = sort_concretes(enumerate_concretes(&spec)?, params.order, arch)?;
                let mut candidates = Vec::new();
                for c in concretes {
                    match Prepared::new(c, params.slack) {
                        Ok(p) => candidates.push(p),
                        Err(Error::CriticalPathExceedsDeadline { .. }) => {}
                        Err(e) => return Err(e),
                    }
                }
                let mut done = false;
                for (k, cand) in candidates.iter().enumerate() {
                    let all = all_subtasks(cand);
                    if let Some(chosen) = feasible_sequential(&mut state, cand, &all)? {
                        state.commit(cand, &chosen);
                        prepared.push(candidates.swap_remove(k));
                        done = true;
                        break;
                    }
                }
                if done {
                    continue;
                }
                for (k, cand) in candidates.iter().enumerate() {
                    let all = all_subtasks(cand);
                    if let Some(chosen) = parallelize(&mut state, cand, &all)? {
                        state.commit(cand, &chosen);
                        let placed: BTreeSet<NodeId> = chosen.values().flatten().copied().collect();
                        let rest: BTreeSet<NodeId> = all.difference(&placed).copied().collect();
                        prepared.push(candidates.swap_remove(k));
                        if !rest.is_empty() {
                            queue.push_back(Entry::Residual { index: prepared.len() - 1, remaining: rest, requeued: 1 });
                        }
                        done = true;
                        break;
                    }
                }
                if !done {
                    unallocated.push(spec.id);
                    return fail(state, prepared, spec.id);
                }
            }
            Entry::Residual { index, remaining, requeued } => {
                let cand = &prepared[index];
                let task = cand.id();
                if let Some(chosen) = feasible_sequential(&mut state, cand, &remaining)? {
                    state.commit(cand, &chosen);
                    continue;
                }
                let Some(chosen) = parallelize(&mut state, cand, &remaining)? else {
                    return fail(state, prepared, task);
                };
                state.commit(cand, &chosen);
                let placed: BTreeSet<NodeId> = chosen.values().flatten().copied().collect();
                let rest: BTreeSet<NodeId> = remaining.difference(&placed).copied().collect();
                if !rest.is_empty() {
                    if requeued >= params.retries {
                        return fail(state, prepared, task);
                    }
                    queue.push_back(Entry::Residual { index, remaining: rest, requeued: requeued + 1 });
                }
            }
        }
    }
    let concretes = prepared.into_iter().map(|p| p.concrete).collect();
    Ok(AllocOutcome::Success(state.into_allocation(concretes, unallocated)))
}

fn all_subtasks(prepared: &Prepared) -> BTreeSet<NodeId> {
    prepared.concrete.task.subtasks().map(|n| n.id).collect()
}

/// Each spec replaced by one uniformly drawn concrete task.
pub fn cpdag_reduction<R: Rng + ?Sized>(specs: &[TaskSpec], rng: &mut R) -> Result<Vec<TaskSpec>> {
    specs.iter().map(|s| crate::expand::derive_cpdag(s, rng).map(|c| c.task)).collect()
}

/// The engine as the demand test sees it.
fn analysed_engine(arch: &Architecture, engine: EngineId, chunked: bool) -> crate::model::Engine {
    let mut e = arch.engine(engine).expect("known engine").clone();
    e.preemptive |= chunked;
    e
}

/// Re-checks an allocation from scratch: tag match, every sub-task placed
/// exactly once, recomputed inflation and the per-engine test under the
/// scheme and engine treatment of `params`. Returns the problems found.
pub fn verify_allocation(alloc: &Allocation, arch: &Architecture, params: &AllocParams) -> Result<Vec<String>> {
    let mut problems = Vec::new();
    let mut seen: BTreeMap<(TaskId, NodeId), usize> = BTreeMap::new();
    for (&engine, placements) in &alloc.engines {
        let Some(e) = arch.engine(engine) else {
            problems.push(format!("unknown engine {engine}"));
            continue;
        };
        for p in placements {
            *seen.entry((p.task, p.node)).or_default() += 1;
            let tag = alloc.concrete(p.task).and_then(|c| c.task.node(p.node)).and_then(|n| n.tag.clone());
            if tag.as_ref() != Some(&e.tag) {
                problems.push(format!("task {} node {} on engine {engine} with tag {}", p.task, p.node, e.tag));
            }
        }
    }
    for c in &alloc.concretes {
        if alloc.unallocated.contains(&c.id()) {
            continue;
        }
        for n in c.task.subtasks() {
            match seen.get(&(c.id(), n.id)) {
                Some(1) => {}
                Some(k) => problems.push(format!("task {} node {} placed {k} times", c.id(), n.id)),
                None => problems.push(format!("task {} node {} not placed", c.id(), n.id)),
            }
        }
    }
    let inflated = crate::timing::inflate_wcets(alloc, arch, params.scheme)?;
    let scenarios: BTreeMap<TaskId, Vec<BTreeSet<NodeId>>> = alloc
        .concretes
        .iter()
        .filter(|c| c.task.has_kind(NodeKind::Conditional))
        .map(|c| Ok((c.id(), conditional_scenarios(c)?)))
        .collect::<Result<_>>()?;
    for &engine in inflated.engines.keys() {
        if let Some(mut w) = inflated.workload(arch, engine) {
            w.engine = analysed_engine(arch, engine, params.chunked);
            if !crate::analysis::analyze_engine_conditional(&w, &scenarios, params.scenario_limit).is_schedulable() {
                problems.push(format!("engine {engine} fails the demand test"));
            }
        }
    }
    Ok(problems)
}

/// Number of sub-tasks of `spec` with tag `tag` and positive WCET.
pub fn positive_subtasks(spec: &TaskSpec, tag: &Tag) -> usize {
    spec.subtasks().filter(|n| n.wcet > 0 && n.tag.as_ref() == Some(tag)).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{tag, CostRatio, Engine, Node};

    fn cpu_arch(n: u32, preemptive: bool) -> Architecture {
        Architecture {
            engines: (0..n)
                .map(|id| Engine { id, tag: tag("CPU"), preemptive, preempt_cost_ratio: CostRatio::ZERO })
                .collect(),
        }
    }

    fn task(id: TaskId, period: Time, nodes: Vec<Node>, edges: Vec<(NodeId, NodeId)>) -> TaskSpec {
        TaskSpec { id, period, deadline: period, nodes, edges }
    }

    fn cpu(id: NodeId, wcet: Time) -> Node {
        Node::subtask(id, tag("CPU"), wcet)
    }

    fn brf_p() -> AllocParams {
        "BRF-P".parse().unwrap()
    }

    #[test]
    fn heuristic_names_round_trip() {
        for name in ["BRF-P", "BOF-R", "WRP-P", "WOP-R"] {
            assert_eq!(name.parse::<AllocParams>().unwrap().name(), name);
        }
        assert!("XRF-P".parse::<AllocParams>().is_err());
        assert!("BRFP".parse::<AllocParams>().is_err());
    }

    #[test]
    fn single_node_goes_to_first_engine() {
        let arch = Architecture::xavier();
        let specs = vec![task(0, 10, vec![cpu(1, 1)], vec![])];
        let out = allocate_taskset(&specs, &arch, &brf_p()).unwrap();
        let AllocOutcome::Success(alloc) = out else { panic!("{out:?}") };
        assert_eq!(alloc.engines.keys().copied().collect::<Vec<_>>(), vec![0]);
        assert!(verify_allocation(&alloc, &arch, &brf_p()).unwrap().is_empty());
    }

    #[test]
    fn critical_path_beyond_deadline_fails() {
        let arch = cpu_arch(2, true);
        let specs = vec![task(4, 10, vec![cpu(1, 6), cpu(2, 6)], vec![(1, 2)])];
        let out = allocate_taskset(&specs, &arch, &brf_p()).unwrap();
        assert!(matches!(out, AllocOutcome::Fail { task: 4, .. }));
    }

    #[test]
    fn parallel_pair_is_split() {
        // Engine 0 already holds 6/10; the two parallel 6-unit nodes of task
        // 1 fit neither there nor together, so they land on engines 1 and 2.
        let arch = cpu_arch(3, true);
        let specs = vec![
            task(0, 10, vec![cpu(1, 6)], vec![]),
            task(1, 10, vec![cpu(1, 0), cpu(2, 6), cpu(3, 6)], vec![(1, 2), (1, 3)]),
        ];
        let out = allocate_taskset(&specs, &arch, &brf_p()).unwrap();
        let AllocOutcome::Success(alloc) = out else { panic!("{out:?}") };
        let engines_of_1: BTreeSet<EngineId> = alloc
            .engines
            .iter()
            .filter(|(_, ps)| ps.iter().any(|p| p.task == 1 && p.wcet > 0))
            .map(|(&e, _)| e)
            .collect();
        assert_eq!(engines_of_1, BTreeSet::from([1, 2]));
        assert!(verify_allocation(&alloc, &arch, &brf_p()).unwrap().is_empty());
    }

    #[test]
    fn fit_orders() {
        let arch = cpu_arch(2, true);
        let params_b = brf_p();
        let mut state = State::new(&arch, &params_b);
        state.util.insert(0, 0.2);
        state.util.insert(1, 0.5);
        assert_eq!(state.engines_in_fit_order(&tag("CPU")), vec![1, 0]);
        let params_w: AllocParams = "WRF-P".parse().unwrap();
        let mut state = State::new(&arch, &params_w);
        state.util.insert(0, 0.2);
        state.util.insert(1, 0.5);
        assert_eq!(state.engines_in_fit_order(&tag("CPU")), vec![0, 1]);
    }

    fn prepared(t: TaskSpec) -> Prepared {
        Prepared::new(ConcreteTask { task: t, choices: vec![] }, SlackMode::Fair).unwrap()
    }

    #[test]
    fn best_fit_skips_a_full_engine() {
        // Engine loads 0.5 and 0.2; a 0.6 task only fits the second.
        let arch = cpu_arch(2, true);
        let params = brf_p();
        let mut state = State::new(&arch, &params);
        state.commit(&prepared(task(0, 10, vec![cpu(1, 5)], vec![])), &BTreeMap::from([(0, BTreeSet::from([1]))]));
        state.commit(&prepared(task(1, 10, vec![cpu(1, 2)], vec![])), &BTreeMap::from([(1, BTreeSet::from([1]))]));
        assert_eq!(state.engines_in_fit_order(&tag("CPU")), vec![0, 1]);
        let heavy = prepared(task(2, 10, vec![cpu(1, 6)], vec![]));
        let chosen = feasible_sequential(&mut state, &heavy, &all_subtasks(&heavy)).unwrap();
        assert_eq!(chosen, Some(BTreeMap::from([(1, BTreeSet::from([1]))])));
        let empty = prepared(task(3, 10, vec![cpu(1, 0)], vec![]));
        assert_eq!(feasible_sequential(&mut state, &empty, &BTreeSet::new()).unwrap(), Some(BTreeMap::new()));
    }

    fn diamond_ctx() -> (BTreeSet<NodeId>, BTreeMap<NodeId, BTreeSet<NodeId>>) {
        // 1 -> {2 (C=5), 3 (C=1)} -> 4: node 3 is off the critical path.
        let p = prepared(task(0, 100, vec![cpu(1, 1), cpu(2, 5), cpu(3, 1), cpu(4, 1)], vec![(1, 2), (1, 3), (2, 4), (3, 4)]));
        (p.critical, p.neighbours)
    }

    #[test]
    fn parallel_omission_prefers_off_path_then_neighbours() {
        let (critical, neighbours) = diamond_ctx();
        assert_eq!(critical, BTreeSet::from([1, 2, 4]));
        let ctx = OmitContext { critical: &critical, neighbours: &neighbours };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let all = BTreeSet::from([1, 2, 3, 4]);
        assert_eq!(remove_one(&all, &BTreeSet::new(), &ctx, Omit::Parallel, &mut rng).unwrap(), 3);
        // With 3 gone, the critical nodes adjacent to it (1 and 4) come first.
        let rest = BTreeSet::from([1, 2, 4]);
        let omitted = BTreeSet::from([3]);
        assert_eq!(remove_one(&rest, &omitted, &ctx, Omit::Parallel, &mut rng).unwrap(), 1);
        let rest = BTreeSet::from([2, 4]);
        assert_eq!(remove_one(&rest, &omitted, &ctx, Omit::Parallel, &mut rng).unwrap(), 4);

        let single = BTreeSet::from([2]);
        for omit in [Omit::Parallel, Omit::Random] {
            assert_eq!(remove_one(&single, &BTreeSet::new(), &ctx, omit, &mut rng).unwrap(), 2);
        }
        assert!(matches!(
            remove_one(&BTreeSet::new(), &BTreeSet::new(), &ctx, Omit::Random, &mut rng),
            Err(Error::EmptyTaggedTask)
        ));
    }

    #[test]
    fn deterministic() {
        let arch = Architecture::xavier();
        let specs = vec![
            task(0, 20, vec![cpu(1, 3), cpu(2, 4), cpu(3, 2)], vec![(1, 2), (1, 3)]),
            task(1, 40, vec![cpu(1, 10), Node::subtask(2, tag("dGPU"), 8)], vec![(1, 2)]),
        ];
        let params: AllocParams = "BOF-R".parse::<AllocParams>().unwrap().with_seed(9);
        let a = allocate_taskset(&specs, &arch, &params).unwrap();
        let b = allocate_taskset(&specs, &arch, &params).unwrap();
        assert_eq!(a, b);
    }
}
