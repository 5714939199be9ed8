use std::collections::{BTreeMap, HashMap, VecDeque};

use fixedbitset::FixedBitSet;
use num_integer::Integer;

use super::{ConcreteTask, NodeId, TaskSpec, Time};
use crate::{Error, Result};

/// Index-based adjacency view of a task graph.
///
/// Node indices follow the order of `TaskSpec::nodes`; successor and
/// predecessor lists are sorted by node id.
#[derive(Clone, Debug)]
pub struct Dag {
    ids: Vec<NodeId>,
    index: HashMap<NodeId, usize>,
    succ: Vec<Vec<usize>>,
    pred: Vec<Vec<usize>>,
    topo: Vec<usize>,
}

impl Dag {
    pub fn new(task: &TaskSpec) -> Result<Self> {
        let (ids, index, succ, pred) = adjacency(task)?;
        let topo = topological_order(&succ, &pred).ok_or(Error::CyclicGraph { task: task.id })?;
        Ok(Dag { ids, index, succ, pred, topo })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn id(&self, idx: usize) -> NodeId {
        self.ids[idx]
    }

    pub fn index(&self, id: NodeId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn succ(&self, idx: usize) -> &[usize] {
        &self.succ[idx]
    }

    pub fn pred(&self, idx: usize) -> &[usize] {
        &self.pred[idx]
    }

    /// Topological order, ties resolved by smallest node id first.
    pub fn topo(&self) -> &[usize] {
        &self.topo
    }

    pub fn sources(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| self.pred[i].is_empty())
    }

    pub fn sinks(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| self.succ[i].is_empty())
    }

    /// `reach[u]` holds every node reachable from `u` by a non-empty path.
    pub fn descendants(&self) -> Vec<FixedBitSet> {
        let n = self.len();
        let mut reach = vec![FixedBitSet::with_capacity(n); n];
        for &u in self.topo.iter().rev() {
            let mut set = FixedBitSet::with_capacity(n);
            for &v in &self.succ[u] {
                set.insert(v);
                set.union_with(&reach[v]);
            }
            reach[u] = set;
        }
        reach
    }

    /// Maximum node count over paths from any source to each node, inclusive.
    pub fn hop_depths(&self) -> Vec<usize> {
        let mut depth = vec![1usize; self.len()];
        for &v in &self.topo {
            for &u in &self.pred[v] {
                depth[v] = depth[v].max(depth[u] + 1);
            }
        }
        depth
    }

    /// Node count of the longest source-to-sink path.
    pub fn depth(&self) -> usize {
        self.hop_depths().into_iter().max().unwrap_or(0)
    }
}

type Adjacency = (Vec<NodeId>, HashMap<NodeId, usize>, Vec<Vec<usize>>, Vec<Vec<usize>>);

pub(super) fn adjacency(task: &TaskSpec) -> Result<Adjacency> {
    let ids: Vec<NodeId> = task.nodes.iter().map(|n| n.id).collect();
    let mut index = HashMap::with_capacity(ids.len());
    for (i, &id) in ids.iter().enumerate() {
        if index.insert(id, i).is_some() {
            return Err(Error::InvalidTask { task: task.id, reason: format!("duplicate node id {id}") });
        }
    }
    let mut succ = vec![Vec::new(); ids.len()];
    let mut pred = vec![Vec::new(); ids.len()];
    for &(a, b) in &task.edges {
        let ia = *index.get(&a).ok_or(Error::UnknownNode { task: task.id, node: a })?;
        let ib = *index.get(&b).ok_or(Error::UnknownNode { task: task.id, node: b })?;
        if !succ[ia].contains(&ib) {
            succ[ia].push(ib);
            pred[ib].push(ia);
        }
    }
    for list in succ.iter_mut().chain(pred.iter_mut()) {
        list.sort_by_key(|&i| ids[i]);
    }
    Ok((ids, index, succ, pred))
}

/// Kahn's algorithm with a min-id ready queue; `None` on a cycle.
pub(super) fn topological_order(succ: &[Vec<usize>], pred: &[Vec<usize>]) -> Option<Vec<usize>> {
    let n = succ.len();
    let mut indeg: Vec<usize> = pred.iter().map(Vec::len).collect();
    let mut ready: std::collections::BinaryHeap<std::cmp::Reverse<usize>> =
        (0..n).filter(|&i| indeg[i] == 0).map(std::cmp::Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(std::cmp::Reverse(u)) = ready.pop() {
        order.push(u);
        for &v in &succ[u] {
            indeg[v] -= 1;
            if indeg[v] == 0 {
                ready.push(std::cmp::Reverse(v));
            }
        }
    }
    (order.len() == n).then_some(order)
}

pub(super) fn weakly_connected(succ: &[Vec<usize>], pred: &[Vec<usize>]) -> bool {
    let n = succ.len();
    if n == 0 {
        return true;
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = queue.pop_front() {
        for &v in succ[u].iter().chain(&pred[u]) {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                queue.push_back(v);
            }
        }
    }
    count == n
}

/// Longest WCET-weighted paths through every node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LongestPaths {
    /// `(e, l)` per node: heaviest path from a source ending at the node and
    /// heaviest path from the node to a sink, both inclusive.
    pub per_node: BTreeMap<NodeId, (Time, Time)>,
    pub critical: Time,
}

impl LongestPaths {
    pub fn e(&self, id: NodeId) -> Time {
        self.per_node[&id].0
    }

    pub fn l(&self, id: NodeId) -> Time {
        self.per_node[&id].1
    }

    /// Nodes lying on at least one critical path.
    pub fn on_critical_path(&self, id: NodeId, wcet: Time) -> bool {
        let (e, l) = self.per_node[&id];
        e + l - wcet == self.critical
    }
}

/// Control nodes weigh zero; diverging conditional branches combine by
/// maximum, which is what the longest path computes anyway.
pub fn longest_paths(concrete: &ConcreteTask) -> Result<LongestPaths> {
    let dag = Dag::new(&concrete.task)?;
    Ok(longest_paths_in(&concrete.task, &dag))
}

pub(crate) fn longest_paths_in(task: &TaskSpec, dag: &Dag) -> LongestPaths {
    let n = dag.len();
    let w: Vec<Time> = task.nodes.iter().map(|node| node.demand()).collect();
    let mut e = w.clone();
    for &v in dag.topo() {
        let best = dag.pred(v).iter().map(|&u| e[u]).max().unwrap_or(0);
        e[v] = best + w[v];
    }
    let mut l = w.clone();
    for &v in dag.topo().iter().rev() {
        let best = dag.succ(v).iter().map(|&s| l[s]).max().unwrap_or(0);
        l[v] = best + w[v];
    }
    let critical = (0..n).map(|i| e[i] + l[i] - w[i]).max().unwrap_or(0);
    let per_node = (0..n).map(|i| (dag.id(i), (e[i], l[i]))).collect();
    LongestPaths { per_node, critical }
}

/// Least common multiple of the periods.
pub fn hyperperiod<I>(periods: I) -> Time
where
    I: IntoIterator<Item = Time>,
{
    periods.into_iter().fold(1, |acc, p| {
        assert!(p > 0, "period must be positive");
        acc.lcm(&p)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{tag, Node};

    fn concrete(nodes: Vec<Node>, edges: Vec<(NodeId, NodeId)>) -> ConcreteTask {
        ConcreteTask { task: TaskSpec { id: 0, period: 100, deadline: 100, nodes, edges }, choices: vec![] }
    }

    fn cpu(id: NodeId, wcet: Time) -> Node {
        Node::subtask(id, tag("CPU"), wcet)
    }

    /// Every source-to-sink path, as node index lists.
    fn all_paths(dag: &Dag) -> Vec<Vec<usize>> {
        fn walk(dag: &Dag, at: usize, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            path.push(at);
            if dag.succ(at).is_empty() {
                out.push(path.clone());
            }
            for &s in dag.succ(at) {
                walk(dag, s, path, out);
            }
            path.pop();
        }
        let mut out = Vec::new();
        for s in dag.sources() {
            walk(dag, s, &mut Vec::new(), &mut out);
        }
        out
    }

    /// Brute-force (e, l, L) by enumerating every path.
    fn brute_force(c: &ConcreteTask) -> (BTreeMap<NodeId, (Time, Time)>, Time) {
        let dag = Dag::new(&c.task).unwrap();
        let w: Vec<Time> = c.task.nodes.iter().map(|n| n.demand()).collect();
        let mut per = BTreeMap::new();
        let mut crit = 0;
        for path in all_paths(&dag) {
            let total: Time = path.iter().map(|&i| w[i]).sum();
            crit = crit.max(total);
            let mut prefix = 0;
            for (pos, &i) in path.iter().enumerate() {
                prefix += w[i];
                let suffix: Time = path[pos..].iter().map(|&j| w[j]).sum();
                let entry = per.entry(dag.id(i)).or_insert((0, 0));
                entry.0 = entry.0.max(prefix);
                entry.1 = entry.1.max(suffix);
            }
        }
        (per, crit)
    }

    #[test]
    fn chain_of_two() {
        let c = concrete(vec![cpu(1, 2), cpu(2, 3)], vec![(1, 2)]);
        let lp = longest_paths(&c).unwrap();
        assert_eq!(lp.per_node[&1], (2, 5));
        assert_eq!(lp.per_node[&2], (5, 3));
        assert_eq!(lp.critical, 5);
        assert_eq!(brute_force(&c), (lp.per_node.clone(), lp.critical));
    }

    #[test]
    fn single_node() {
        let c = concrete(vec![cpu(1, 7)], vec![]);
        let lp = longest_paths(&c).unwrap();
        assert_eq!(lp.per_node[&1], (7, 7));
        assert_eq!(lp.critical, 7);
    }

    #[test]
    fn diamond_critical_path_via_heavier_branch() {
        let c = concrete(
            vec![cpu(1, 1), cpu(2, 4), cpu(3, 2), cpu(4, 1)],
            vec![(1, 2), (1, 3), (2, 4), (3, 4)],
        );
        let lp = longest_paths(&c).unwrap();
        assert_eq!(lp.critical, 6);
        assert!(lp.on_critical_path(2, 4));
        assert!(!lp.on_critical_path(3, 2));
        assert_eq!(brute_force(&c), (lp.per_node, lp.critical));
    }

    #[test]
    fn cycle_is_reported() {
        let c = concrete(vec![cpu(1, 1), cpu(2, 1)], vec![(1, 2), (2, 1)]);
        assert!(matches!(longest_paths(&c), Err(Error::CyclicGraph { .. })));
    }

    #[test]
    fn hyperperiods() {
        assert_eq!(hyperperiod([120]), 120);
        assert_eq!(hyperperiod([120, 240]), 240);
        assert_eq!(hyperperiod([120, 360, 600]), 1800);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        /// Random DAG: edges only go from lower to higher index.
        fn arb_concrete() -> impl Strategy<Value = ConcreteTask> {
            (1usize..9).prop_flat_map(|n| {
                (
                    proptest::collection::vec(0u64..20, n),
                    proptest::collection::vec(any::<bool>(), n * n),
                )
                    .prop_map(move |(w, bits)| {
                        let nodes = w.iter().enumerate().map(|(i, &c)| cpu(i as NodeId, c)).collect();
                        let mut edges = Vec::new();
                        for a in 0..n {
                            for b in a + 1..n {
                                if bits[a * n + b] {
                                    edges.push((a as NodeId, b as NodeId));
                                }
                            }
                        }
                        concrete(nodes, edges)
                    })
            })
        }

        proptest! {
            #[test]
            fn matches_path_enumeration(c in arb_concrete()) {
                let lp = longest_paths(&c).unwrap();
                let (per, crit) = brute_force(&c);
                prop_assert_eq!(lp.per_node, per);
                prop_assert_eq!(lp.critical, crit);
            }

            #[test]
            fn earliest_finish_is_tight_along_edges(c in arb_concrete()) {
                let lp = longest_paths(&c).unwrap();
                let dag = Dag::new(&c.task).unwrap();
                for v in 0..dag.len() {
                    let wv = c.task.nodes[v].wcet;
                    let ev = lp.e(dag.id(v));
                    for &u in dag.pred(v) {
                        prop_assert!(ev >= lp.e(dag.id(u)) + wv);
                    }
                    if !dag.pred(v).is_empty() {
                        prop_assert!(dag.pred(v).iter().any(|&u| ev == lp.e(dag.id(u)) + wv));
                    }
                }
                let sink_max = dag.sinks().map(|s| lp.e(dag.id(s))).max().unwrap();
                prop_assert_eq!(lp.critical, sink_max);
            }

            #[test]
            fn hyperperiod_extension_is_multiple(ps in proptest::collection::vec(1u64..500, 1..6), extra in 1u64..500) {
                let h = hyperperiod(ps.iter().copied());
                let h2 = hyperperiod(ps.iter().copied().chain([extra]));
                prop_assert_eq!(h2 % h, 0);
                for p in ps {
                    prop_assert_eq!(h % p, 0);
                }
            }
        }
    }
}
