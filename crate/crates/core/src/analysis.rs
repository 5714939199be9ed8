//! Demand-bound schedulability test for one engine under EDF, scenario
//! handling for conditional branches and a discrete-event EDF simulator.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::model::{hyperperiod, Engine, NodeId, TaskId, Time};

/// One periodic sub-task placed on an engine.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WorkItem {
    pub task: TaskId,
    pub node: NodeId,
    /// Inflated execution time.
    pub wcet: Time,
    pub offset: Time,
    pub deadline: Time,
    pub period: Time,
}

impl WorkItem {
    /// Number of jobs `k >= 0` with `k*T + o >= t1` and `k*T + d <= t2`.
    fn jobs_within(&self, t1: Time, t2: Time) -> u64 {
        if t2 < self.deadline {
            return 0;
        }
        let last = (t2 - self.deadline) / self.period;
        let first = t1.saturating_sub(self.offset).div_ceil(self.period);
        (last + 1).saturating_sub(first)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineWorkload {
    pub engine: Engine,
    pub items: Vec<WorkItem>,
}

impl EngineWorkload {
    pub fn new(engine: Engine, items: Vec<WorkItem>) -> Self {
        EngineWorkload { engine, items }
    }

    /// Items with positive execution time.
    fn active(&self) -> impl Iterator<Item = &WorkItem> {
        self.items.iter().filter(|i| i.wcet > 0)
    }

    pub fn utilization(&self) -> f64 {
        self.active().map(|i| i.wcet as f64 / i.period as f64).sum()
    }

    pub fn hyperperiod(&self) -> Time {
        hyperperiod(self.active().map(|i| i.period))
    }
}

/// Demand of the jobs released at or after `t1` with deadline at or
/// before `t2`.
pub fn dbf(workload: &EngineWorkload, t1: Time, t2: Time) -> Time {
    workload.active().map(|i| i.wcet * i.jobs_within(t1, t2)).sum()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    /// The item cannot run within its own window.
    WindowTooShort { task: TaskId, node: NodeId },
    /// Demand plus blocking exceeds the window `[t1, t2]`.
    Demand { t1: Time, t2: Time, demand: Time, blocking: Time },
    /// Long-run utilization above one.
    Overload,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Schedulable,
    Unschedulable(Violation),
}

impl Verdict {
    pub fn is_schedulable(&self) -> bool {
        matches!(self, Verdict::Schedulable)
    }
}

/// Exact-arithmetic check of `sum C/T <= 1`.
fn within_capacity(items: &[&WorkItem]) -> bool {
    let h = u128::from(hyperperiod(items.iter().map(|i| i.period)));
    let demand: u128 = items.iter().map(|i| u128::from(i.wcet) * (h / u128::from(i.period))).sum();
    demand <= h
}

/// Processor-demand test over every window `[t1, t2]` with `t1` a job
/// release and `t2` a job deadline in `[0, 2H]`.
///
/// On a non-preemptive engine a window with positive demand additionally
/// pays the largest execution time of a job released before `t1` with
/// deadline after `t2`, which may have started just before the window.
/// Reports the violated window with the smallest `t1`, then smallest `t2`.
pub fn dbf_test(workload: &EngineWorkload) -> Verdict {
    run_test(workload, false)
}

/// Same verdict as [`dbf_test`], stopping at the first violation found.
pub fn is_schedulable(workload: &EngineWorkload) -> bool {
    run_test(workload, true).is_schedulable()
}

fn run_test(workload: &EngineWorkload, fast: bool) -> Verdict {
    let items: Vec<&WorkItem> = workload.active().collect();
    if let Some(i) = items.iter().find(|i| i.offset > i.deadline || i.wcet > i.deadline - i.offset) {
        return Verdict::Unschedulable(Violation::WindowTooShort { task: i.task, node: i.node });
    }
    if items.is_empty() {
        return Verdict::Schedulable;
    }
    let capacity = within_capacity(&items);
    if fast && !capacity {
        return Verdict::Unschedulable(Violation::Overload);
    }
    match demand_sweep(&items, !workload.engine.preemptive) {
        Some(v) => Verdict::Unschedulable(v),
        None if capacity => Verdict::Schedulable,
        None => Verdict::Unschedulable(Violation::Overload),
    }
}

#[derive(Clone, Copy, Debug)]
struct Job {
    release: Time,
    deadline: Time,
    wcet: Time,
}

fn jobs_until(items: &[&WorkItem], horizon: Time) -> Vec<Job> {
    let mut jobs = Vec::new();
    for item in items {
        let mut base = 0;
        while base + item.offset < horizon {
            jobs.push(Job { release: base + item.offset, deadline: base + item.deadline, wcet: item.wcet });
            base += item.period;
        }
    }
    jobs
}

/// Sweeps `t1` upwards over the releases. A segment tree over the deadline
/// points holds `a = dbf(t1, t2) - t2` and the blocking `b(t2)`, the largest
/// execution time of a job released before `t1` with deadline after `t2`.
/// Only windows with positive demand are checked.
fn demand_sweep(items: &[&WorkItem], non_preemptive: bool) -> Option<Violation> {
    let horizon = 2 * hyperperiod(items.iter().map(|i| i.period));
    let mut jobs = jobs_until(items, horizon);
    jobs.sort_by_key(|j| (j.release, j.deadline));

    let mut ends: Vec<Time> = jobs.iter().map(|j| j.deadline).filter(|&d| d <= horizon).collect();
    ends.sort_unstable();
    ends.dedup();
    if ends.is_empty() {
        return None;
    }
    let at = |d: Time| ends.partition_point(|&t| t < d);

    let mut per_end = vec![0i128; ends.len()];
    for j in &jobs {
        if let Some(slot) = per_end.get_mut(at(j.deadline)) {
            *slot += j.wcet as i128;
        }
    }
    let mut sum = 0;
    let base: Vec<i128> = per_end
        .iter()
        .zip(&ends)
        .map(|(c, &t)| {
            sum += c;
            sum - t as i128
        })
        .collect();
    let mut tree = DemandTree::new(&base);

    // Earliest deadline among the jobs released at or after each job.
    let mut min_deadline = vec![Time::MAX; jobs.len() + 1];
    for k in (0..jobs.len()).rev() {
        min_deadline[k] = min_deadline[k + 1].min(jobs[k].deadline);
    }

    let mut k = 0;
    while k < jobs.len() {
        let t1 = jobs[k].release;
        let from = at(min_deadline[k]);
        if let Some(p) = tree.first_above(from, -(t1 as i128)) {
            let t2 = ends[p];
            let demand = jobs.iter().filter(|j| j.release >= t1 && j.deadline <= t2).map(|j| j.wcet).sum();
            let blocking = if non_preemptive {
                jobs.iter().filter(|j| j.release < t1 && j.deadline > t2).map(|j| j.wcet).max().unwrap_or(0)
            } else {
                0
            };
            return Some(Violation::Demand { t1, t2, demand, blocking });
        }
        while k < jobs.len() && jobs[k].release == t1 {
            let job = jobs[k];
            let end = at(job.deadline);
            tree.add_suffix(end, -(job.wcet as i128));
            if non_preemptive {
                let first = tree.first_below(job.wcet as i128);
                if first < end {
                    tree.assign(first, end, job.wcet as i128);
                }
            }
            k += 1;
        }
    }
    None
}

/// Lazy segment tree over two arrays: `a` takes range additions, `b` takes
/// range assignments and stays non-increasing. Answers leftmost queries on
/// `a + b` and on `b`.
struct DemandTree {
    n: usize,
    max_a: Vec<i128>,
    max_ab: Vec<i128>,
    min_b: Vec<i128>,
    add: Vec<i128>,
    set: Vec<Option<i128>>,
}

impl DemandTree {
    fn new(a: &[i128]) -> Self {
        let n = a.len();
        let size = 4 * n.max(1);
        let mut tree = DemandTree {
            n,
            max_a: vec![0; size],
            max_ab: vec![0; size],
            min_b: vec![0; size],
            add: vec![0; size],
            set: vec![None; size],
        };
        if n > 0 {
            tree.build(1, 0, n, a);
        }
        tree
    }

    fn build(&mut self, node: usize, lo: usize, hi: usize, a: &[i128]) {
        if hi - lo == 1 {
            self.max_a[node] = a[lo];
            self.max_ab[node] = a[lo];
            return;
        }
        let mid = (lo + hi) / 2;
        self.build(2 * node, lo, mid, a);
        self.build(2 * node + 1, mid, hi, a);
        self.pull(node);
    }

    fn pull(&mut self, node: usize) {
        let (l, r) = (2 * node, 2 * node + 1);
        self.max_a[node] = self.max_a[l].max(self.max_a[r]);
        self.max_ab[node] = self.max_ab[l].max(self.max_ab[r]);
        self.min_b[node] = self.min_b[l].min(self.min_b[r]);
    }

    fn apply_add(&mut self, node: usize, value: i128) {
        self.max_a[node] += value;
        self.max_ab[node] += value;
        self.add[node] += value;
    }

    fn apply_set(&mut self, node: usize, value: i128) {
        self.min_b[node] = value;
        self.max_ab[node] = self.max_a[node] + value;
        self.set[node] = Some(value);
    }

    fn push(&mut self, node: usize) {
        let add = std::mem::take(&mut self.add[node]);
        if add != 0 {
            self.apply_add(2 * node, add);
            self.apply_add(2 * node + 1, add);
        }
        if let Some(value) = self.set[node].take() {
            self.apply_set(2 * node, value);
            self.apply_set(2 * node + 1, value);
        }
    }

    fn add_suffix(&mut self, from: usize, value: i128) {
        if from < self.n {
            self.update(1, 0, self.n, from, self.n, &|t, node| t.apply_add(node, value));
        }
    }

    fn assign(&mut self, from: usize, to: usize, value: i128) {
        self.update(1, 0, self.n, from, to, &|t, node| t.apply_set(node, value));
    }

    fn update(&mut self, node: usize, lo: usize, hi: usize, from: usize, to: usize, op: &dyn Fn(&mut Self, usize)) {
        if hi <= from || to <= lo {
            return;
        }
        if from <= lo && hi <= to {
            op(self, node);
            return;
        }
        self.push(node);
        let mid = (lo + hi) / 2;
        self.update(2 * node, lo, mid, from, to, op);
        self.update(2 * node + 1, mid, hi, from, to, op);
        self.pull(node);
    }

    /// Leftmost index `>= from` with `a + b > limit`.
    fn first_above(&mut self, from: usize, limit: i128) -> Option<usize> {
        self.descend(1, 0, self.n, from, limit)
    }

    fn descend(&mut self, node: usize, lo: usize, hi: usize, from: usize, limit: i128) -> Option<usize> {
        if hi <= from || self.max_ab[node] <= limit {
            return None;
        }
        if hi - lo == 1 {
            return Some(lo);
        }
        self.push(node);
        let mid = (lo + hi) / 2;
        self.descend(2 * node, lo, mid, from, limit).or_else(|| self.descend(2 * node + 1, mid, hi, from, limit))
    }

    /// Leftmost index with `b < value`, or `n` when there is none.
    fn first_below(&mut self, value: i128) -> usize {
        let (mut node, mut lo, mut hi) = (1, 0, self.n);
        if self.min_b[node] >= value {
            return self.n;
        }
        while hi - lo > 1 {
            self.push(node);
            let mid = (lo + hi) / 2;
            if self.min_b[2 * node] < value {
                node *= 2;
                hi = mid;
            } else {
                node = 2 * node + 1;
                lo = mid;
            }
        }
        lo
    }
}

/// How many scenario combinations are enumerated before falling back to
/// the envelope.
pub const DEFAULT_SCENARIO_LIMIT: usize = 256;

/// Runs the test on every combination of conditional scenarios.
///
/// `scenarios` maps a task to the node sets of its run-time scenarios;
/// items of tasks without an entry are always active. Above `limit`
/// combinations every branch is kept at once, which can only add demand.
pub fn analyze_engine_conditional(
    workload: &EngineWorkload,
    scenarios: &BTreeMap<TaskId, Vec<BTreeSet<NodeId>>>,
    limit: usize,
) -> Verdict {
    conditional(workload, scenarios, limit, false)
}

/// Same verdict as [`analyze_engine_conditional`] without locating the
/// earliest violation.
pub fn conditional_is_schedulable(
    workload: &EngineWorkload,
    scenarios: &BTreeMap<TaskId, Vec<BTreeSet<NodeId>>>,
    limit: usize,
) -> bool {
    conditional(workload, scenarios, limit, true).is_schedulable()
}

fn conditional(
    workload: &EngineWorkload,
    scenarios: &BTreeMap<TaskId, Vec<BTreeSet<NodeId>>>,
    limit: usize,
    fast: bool,
) -> Verdict {
    // Distinct restrictions of each task's scenarios to the items here.
    let mut axes: Vec<(TaskId, Vec<BTreeSet<NodeId>>)> = Vec::new();
    for (&task, sets) in scenarios {
        let here: BTreeSet<NodeId> = workload.active().filter(|i| i.task == task).map(|i| i.node).collect();
        let restricted: BTreeSet<BTreeSet<NodeId>> =
            sets.iter().map(|s| s.intersection(&here).copied().collect()).collect();
        if restricted.len() > 1 {
            axes.push((task, restricted.into_iter().collect()));
        }
    }
    let combos = axes.iter().try_fold(1usize, |acc, (_, v)| acc.checked_mul(v.len()));
    match combos {
        Some(n) if n <= limit && n > 1 => {}
        _ => return run_test(workload, fast),
    }
    // The envelope dominates every scenario, so its acceptance settles it.
    if run_test(workload, true).is_schedulable() {
        return Verdict::Schedulable;
    }
    let mut pick = vec![0usize; axes.len()];
    loop {
        let items = workload
            .items
            .iter()
            .filter(|i| match axes.iter().position(|(t, _)| *t == i.task) {
                Some(a) => axes[a].1[pick[a]].contains(&i.node),
                None => true,
            })
            .copied()
            .collect();
        let verdict = run_test(&EngineWorkload { engine: workload.engine.clone(), items }, fast);
        if !verdict.is_schedulable() {
            return verdict;
        }
        let mut a = 0;
        loop {
            if a == axes.len() {
                return Verdict::Schedulable;
            }
            pick[a] += 1;
            if pick[a] < axes[a].1.len() {
                break;
            }
            pick[a] = 0;
            a += 1;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeadlineMiss {
    pub task: TaskId,
    pub node: NodeId,
    pub release: Time,
    pub deadline: Time,
    pub finish: Time,
}

/// EDF schedule of every job released before `horizon`, from a synchronous
/// start; returns the miss with the earliest deadline among jobs due by
/// `horizon`. Ties in deadline go to the earlier release, then task and
/// node id.
pub fn simulate_edf(workload: &EngineWorkload, horizon: Time) -> Option<DeadlineMiss> {
    struct SimJob {
        item: WorkItem,
        release: Time,
        deadline: Time,
        left: Time,
    }
    let mut jobs: Vec<SimJob> = Vec::new();
    for item in workload.active() {
        let mut base = 0;
        while base + item.offset < horizon {
            jobs.push(SimJob { item: *item, release: base + item.offset, deadline: base + item.deadline, left: item.wcet });
            base += item.period;
        }
    }
    jobs.sort_by_key(|j| (j.release, j.deadline, j.item.task, j.item.node));
    let key = |j: &SimJob, idx: usize| Reverse((j.deadline, j.release, j.item.task, j.item.node, idx));

    let preemptive = workload.engine.preemptive;
    let mut ready = BinaryHeap::new();
    let mut next = 0;
    let mut now: Time = 0;
    let mut worst: Option<DeadlineMiss> = None;
    let mut finished = 0;
    while finished < jobs.len() {
        while next < jobs.len() && jobs[next].release <= now {
            ready.push(key(&jobs[next], next));
            next += 1;
        }
        let Some(Reverse((.., idx))) = ready.pop() else {
            now = jobs[next].release;
            continue;
        };
        let run = if preemptive && next < jobs.len() {
            jobs[idx].left.min(jobs[next].release - now)
        } else {
            jobs[idx].left
        };
        now += run;
        jobs[idx].left -= run;
        if jobs[idx].left > 0 {
            ready.push(key(&jobs[idx], idx));
            continue;
        }
        finished += 1;
        let job = &jobs[idx];
        if now > job.deadline && job.deadline <= horizon {
            let miss = DeadlineMiss {
                task: job.item.task,
                node: job.item.node,
                release: job.release,
                deadline: job.deadline,
                finish: now,
            };
            if worst.is_none_or(|w| (miss.deadline, miss.release) < (w.deadline, w.release)) {
                worst = Some(miss);
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{tag, CostRatio};

    fn engine(preemptive: bool) -> Engine {
        Engine { id: 0, tag: tag("CPU"), preemptive, preempt_cost_ratio: CostRatio::ZERO }
    }

    fn item(task: TaskId, wcet: Time, offset: Time, deadline: Time, period: Time) -> WorkItem {
        WorkItem { task, node: 1, wcet, offset, deadline, period }
    }

    fn load(preemptive: bool, items: Vec<WorkItem>) -> EngineWorkload {
        EngineWorkload::new(engine(preemptive), items)
    }

    /// Direct enumeration of every window.
    fn brute_force(w: &EngineWorkload) -> bool {
        let items: Vec<&WorkItem> = w.items.iter().filter(|i| i.wcet > 0).collect();
        if items.iter().any(|i| i.wcet > i.deadline - i.offset) {
            return false;
        }
        if items.is_empty() {
            return true;
        }
        let h = 2 * hyperperiod(items.iter().map(|i| i.period));
        let jobs = jobs_until(&items, h);
        let util: f64 = items.iter().map(|i| i.wcet as f64 / i.period as f64).sum();
        if util > 1.0 + 1e-12 {
            return false;
        }
        for a in &jobs {
            for b in &jobs {
                let (t1, t2) = (a.release, b.deadline);
                if t1 >= t2 || t2 > h {
                    continue;
                }
                let demand = dbf(w, t1, t2);
                if demand == 0 {
                    continue;
                }
                let blocking = if w.engine.preemptive {
                    0
                } else {
                    jobs.iter().filter(|j| j.release < t1 && j.deadline > t2).map(|j| j.wcet).max().unwrap_or(0)
                };
                if demand + blocking > t2 - t1 {
                    return false;
                }
            }
        }
        true
    }

    #[test]
    fn dbf_values() {
        let w = load(true, vec![item(0, 2, 0, 5, 10)]);
        assert_eq!(dbf(&w, 0, 5), 2);
        assert_eq!(dbf(&w, 0, 4), 0);
        assert_eq!(dbf(&w, 0, 14), 2);
        assert_eq!(dbf(&w, 0, 15), 4);
        assert_eq!(dbf(&w, 0, 25), 6);
        assert_eq!(dbf(&w, 1, 25), 4);
        assert_eq!(dbf_test(&w), Verdict::Schedulable);
        let sparse = load(true, vec![item(0, 2, 0, 5, 20)]);
        assert_eq!(dbf(&sparse, 0, 15), 2);
        assert_eq!(dbf(&sparse, 0, 25), 4);
    }

    #[test]
    fn overloaded_pair() {
        let w = load(true, vec![item(0, 6, 0, 10, 10), item(1, 6, 0, 10, 10)]);
        assert_eq!(dbf_test(&w), Verdict::Unschedulable(Violation::Demand { t1: 0, t2: 10, demand: 12, blocking: 0 }));
        assert!(!is_schedulable(&w));
        let miss = simulate_edf(&w, 20).unwrap();
        assert_eq!(miss.deadline, 10);
    }

    #[test]
    fn non_preemptive_blocking() {
        // Fine with preemption; without it the long job, released at 0,
        // can start just before the short job released at 10.
        let p = load(true, vec![item(0, 5, 0, 5, 10), item(1, 6, 0, 24, 24)]);
        assert_eq!(dbf_test(&p), Verdict::Schedulable);
        let np = load(false, p.items.clone());
        assert_eq!(dbf_test(&np), Verdict::Unschedulable(Violation::Demand { t1: 10, t2: 15, demand: 5, blocking: 6 }));
        assert!(simulate_edf(&np, 48).is_some());
        // A window with no demand is never charged.
        let idle = load(false, vec![item(0, 6, 0, 1443, 6000), item(0, 1, 1441, 2879, 6000)]);
        assert_eq!(dbf_test(&idle), Verdict::Schedulable);
    }

    #[test]
    fn short_window() {
        let w = load(true, vec![item(3, 4, 2, 5, 10)]);
        assert_eq!(dbf_test(&w), Verdict::Unschedulable(Violation::WindowTooShort { task: 3, node: 1 }));
    }

    #[test]
    fn empty_workload() {
        let w = load(false, vec![]);
        assert_eq!(dbf_test(&w), Verdict::Schedulable);
        assert_eq!(simulate_edf(&w, 100), None);
    }

    #[test]
    fn scenario_enumeration_needs_every_branch() {
        // Node 2 only runs in the first scenario, node 3 only in the second;
        // node 3 alone overloads the engine.
        let w = load(
            true,
            vec![
                WorkItem { task: 0, node: 2, wcet: 4, offset: 0, deadline: 10, period: 10 },
                WorkItem { task: 0, node: 3, wcet: 7, offset: 0, deadline: 10, period: 10 },
                WorkItem { task: 1, node: 1, wcet: 5, offset: 0, deadline: 10, period: 10 },
            ],
        );
        let scenarios = BTreeMap::from([(0, vec![BTreeSet::from([2]), BTreeSet::from([3])])]);
        assert!(!analyze_engine_conditional(&w, &scenarios, DEFAULT_SCENARIO_LIMIT).is_schedulable());
        let light = load(true, vec![w.items[0], WorkItem { wcet: 5, ..w.items[1] }, w.items[2]]);
        assert!(analyze_engine_conditional(&light, &scenarios, DEFAULT_SCENARIO_LIMIT).is_schedulable());
        // Both branches at once exceed the engine: the envelope rejects.
        assert!(!analyze_engine_conditional(&light, &scenarios, 1).is_schedulable());
        assert_eq!(analyze_engine_conditional(&light, &BTreeMap::new(), 1), dbf_test(&light));
    }

    #[test]
    fn sweep_matches_brute_force_on_fixed_cases() {
        let cases = [
            load(false, vec![item(0, 3, 1, 6, 8), item(1, 2, 0, 4, 6), item(2, 1, 2, 5, 12)]),
            load(true, vec![item(0, 3, 1, 6, 8), item(1, 2, 0, 4, 6), item(2, 1, 2, 5, 12)]),
            load(false, vec![item(0, 1, 0, 2, 4), item(1, 2, 1, 4, 4)]),
        ];
        for w in &cases {
            assert_eq!(dbf_test(w).is_schedulable(), brute_force(w), "{w:?}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn workload() -> impl Strategy<Value = EngineWorkload> {
            let item = (prop::sample::select(vec![4u64, 6, 8, 10, 12, 15, 20, 30, 60]), 0u64..60, 0u64..60, 0u64..8)
                .prop_map(|(t, a, b, c)| {
                    let o = a % t;
                    let d = o + 1 + b % (t - o);
                    (t, o, d, 1 + c % (d - o))
                });
            (any::<bool>(), prop::collection::vec(item, 0..=6)).prop_map(|(p, raw)| {
                let items = raw
                    .into_iter()
                    .enumerate()
                    .map(|(k, (t, o, d, c))| WorkItem { task: k as TaskId, node: 1, wcet: c, offset: o, deadline: d, period: t })
                    .collect();
                load(p, items)
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(300))]

            #[test]
            fn sweep_equals_window_enumeration(w in workload()) {
                prop_assert_eq!(dbf_test(&w).is_schedulable(), brute_force(&w));
                prop_assert_eq!(is_schedulable(&w), dbf_test(&w).is_schedulable());
            }

            #[test]
            fn accepted_sets_never_miss(w in workload()) {
                if dbf_test(&w).is_schedulable() {
                    let h = if w.items.is_empty() { 1 } else { w.hyperperiod() };
                    prop_assert_eq!(simulate_edf(&w, 2 * h), None);
                }
            }

            #[test]
            fn superadditive(w in workload(), a in 0u64..120, b in 0u64..120, c in 0u64..120) {
                let mut t = [a, b, c];
                t.sort_unstable();
                prop_assert!(dbf(&w, t[0], t[2]) >= dbf(&w, t[0], t[1]) + dbf(&w, t[1], t[2]));
            }

            #[test]
            fn monotone_in_wcet(w in workload(), pick in 0usize..6, extra in 1u64..5) {
                if !w.items.is_empty() && !dbf_test(&w).is_schedulable() {
                    let mut heavier = w.clone();
                    let k = pick % heavier.items.len();
                    heavier.items[k].wcet += extra;
                    prop_assert!(!dbf_test(&heavier).is_schedulable());
                }
            }

            #[test]
            fn envelope_never_over_accepts(w in workload(), split in 0usize..7) {
                // Task 0's items split in two scenarios by position.
                let nodes: Vec<WorkItem> = w.items.iter().enumerate().map(|(k, i)| WorkItem { task: 0, node: k as NodeId, ..*i }).collect();
                let w = load(w.engine.preemptive, nodes);
                let (first, second): (BTreeSet<NodeId>, BTreeSet<NodeId>) =
                    (0..w.items.len() as NodeId).partition(|&k| (k as usize) < split);
                let scenarios = BTreeMap::from([(0, vec![first, second])]);
                if analyze_engine_conditional(&w, &scenarios, 1).is_schedulable() {
                    prop_assert!(analyze_engine_conditional(&w, &scenarios, DEFAULT_SCENARIO_LIMIT).is_schedulable());
                }
            }
        }
    }
}
