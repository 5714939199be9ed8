//! Concrete-task enumeration, ordering and per-tag splitting.

use std::collections::{BTreeMap, BTreeSet};

use num_integer::Integer;
use num_rational::Ratio;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{
    find_regions, Architecture, BranchChoice, ConcreteTask, Dag, Node, NodeId, NodeKind, Region, Tag, TaskId,
    TaskSpec, Time,
};
use crate::{Error, Result};

/// Ordering of the concrete tasks of one specification.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OrderRelation {
    /// Lowest total utilization first.
    O,
    /// Lowest scarcity-weighted utilization first: each sub-task counts
    /// `wcet / (T * m_tag)` where `m_tag` is the number of engines of its tag.
    R,
}

/// Every concrete task of `spec`, one per branch-choice vector, sorted by
/// choice vector.
///
/// A resolved alternative node becomes a zero-WCET sub-task that keeps the
/// node id; the interiors of the non-selected branches are dropped and the
/// matching junction is contracted away. Conditional regions are untouched.
pub fn enumerate_concretes(spec: &TaskSpec) -> Result<Vec<ConcreteTask>> {
    let mut out = Vec::new();
    expand_into(spec.clone(), NodeKind::Alternative, Vec::new(), &mut out)?;
    out.sort_by(|a, b| a.choices.cmp(&b.choices));
    Ok(out)
}

/// Node sets of the run-time scenarios of a concrete task: one per
/// combination of conditional branches, sorted by choice vector.
pub fn conditional_scenarios(concrete: &ConcreteTask) -> Result<Vec<BTreeSet<NodeId>>> {
    let mut out = Vec::new();
    expand_into(concrete.task.clone(), NodeKind::Conditional, Vec::new(), &mut out)?;
    out.sort_by(|a, b| a.choices.cmp(&b.choices));
    Ok(out.into_iter().map(|c| c.task.nodes.iter().map(|n| n.id).collect()).collect())
}

fn expand_into(task: TaskSpec, kind: NodeKind, mut choices: Vec<BranchChoice>, out: &mut Vec<ConcreteTask>) -> Result<()> {
    let dag = Dag::new(&task)?;
    let regions = find_regions(&task, &dag)?;
    let Some(region) = outermost(&regions, kind) else {
        choices.sort_unstable();
        out.push(ConcreteTask { task, choices });
        return Ok(());
    };
    for branch in 0..region.branches.len() {
        let resolved = resolve(&task, &dag, region, branch)?;
        let mut next = choices.clone();
        next.push(BranchChoice { node: region.opener, branch });
        expand_into(resolved, kind, next, out)?;
    }
    Ok(())
}

/// Smallest-id region of `kind` not nested inside another region of `kind`.
fn outermost(regions: &[Region], kind: NodeKind) -> Option<&Region> {
    let nested: BTreeSet<NodeId> =
        regions.iter().filter(|r| r.kind == kind).flat_map(|r| r.interior.iter().copied()).collect();
    regions.iter().filter(|r| r.kind == kind && !nested.contains(&r.opener)).min_by_key(|r| r.opener)
}

/// Keeps branch `branch` of `region`, rewrites the opener into a dummy and
/// contracts the junction.
fn resolve(task: &TaskSpec, dag: &Dag, region: &Region, branch: usize) -> Result<TaskSpec> {
    let kept: BTreeSet<NodeId> = region.branches[branch].iter().copied().collect();
    let removed: BTreeSet<NodeId> = region.interior.iter().copied().filter(|id| !kept.contains(id)).collect();
    let opener_idx = dag.index(region.opener).expect("opener in graph");
    let chosen_head = dag.id(dag.succ(opener_idx)[branch]);

    let dummy_tag = dummy_tag(task, dag, region, &kept).ok_or_else(|| Error::InvalidTask {
        task: task.id,
        reason: format!("no tag available for the dummy replacing node {}", region.opener),
    })?;

    let nodes: Vec<Node> = task
        .nodes
        .iter()
        .filter(|n| !removed.contains(&n.id) && n.id != region.junction)
        .map(|n| {
            if n.id == region.opener {
                Node { kind: NodeKind::SubTask, tag: Some(dummy_tag.clone()), wcet: 0, ..n.clone() }
            } else {
                n.clone()
            }
        })
        .collect();

    let mut edges: BTreeSet<(NodeId, NodeId)> = BTreeSet::new();
    let mut into_junction = Vec::new();
    let mut out_of_junction = Vec::new();
    for &(a, b) in &task.edges {
        if removed.contains(&a) || removed.contains(&b) {
            continue;
        }
        if a == region.opener && b != chosen_head {
            continue;
        }
        if b == region.junction {
            into_junction.push(a);
        } else if a == region.junction {
            out_of_junction.push(b);
        } else {
            edges.insert((a, b));
        }
    }
    for &p in &into_junction {
        for &s in &out_of_junction {
            edges.insert((p, s));
        }
    }
    Ok(TaskSpec { id: task.id, period: task.period, deadline: task.deadline, nodes, edges: edges.into_iter().collect() })
}

/// The opener's own tag if it has one, else the smallest-id tagged
/// predecessor's, else the first sub-task of the kept branch, else any
/// sub-task of the task.
fn dummy_tag(task: &TaskSpec, dag: &Dag, region: &Region, kept: &BTreeSet<NodeId>) -> Option<Tag> {
    let node_of = |idx: usize| &task.nodes[idx];
    let opener_idx = dag.index(region.opener)?;
    if let Some(tag) = &node_of(opener_idx).tag {
        return Some(tag.clone());
    }
    let from_pred = dag.pred(opener_idx).iter().map(|&p| node_of(p)).find(|n| n.is_subtask()).and_then(|n| n.tag.clone());
    from_pred
        .or_else(|| kept.iter().filter_map(|id| task.node(*id)).find(|n| n.is_subtask()).and_then(|n| n.tag.clone()))
        .or_else(|| task.subtasks().min_by_key(|n| n.id).and_then(|n| n.tag.clone()))
}

/// Sort key of a concrete task; compares by the selected relation, then the
/// other one, then the branch-choice vector.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct OrderKey {
    pub primary: Ratio<u128>,
    pub secondary: Ratio<u128>,
    pub choices: Vec<BranchChoice>,
}

/// `(total utilization, scarcity-weighted utilization)` of a concrete task.
pub fn utilization_keys(concrete: &ConcreteTask, arch: &Architecture) -> Result<(Ratio<u128>, Ratio<u128>)> {
    let period = u128::from(concrete.period());
    let mut total: u128 = 0;
    let mut weighted: Vec<(u128, u128)> = Vec::new();
    for node in concrete.task.subtasks() {
        let tag = node.tag.as_ref().ok_or_else(|| Error::InvalidTask {
            task: concrete.id(),
            reason: format!("sub-task {} has no tag", node.id),
        })?;
        let engines = arch.count(tag);
        if engines == 0 {
            return Err(Error::UnknownTag(tag.clone()));
        }
        total += u128::from(node.wcet);
        weighted.push((u128::from(node.wcet), engines as u128));
    }
    let lcm = weighted.iter().fold(1u128, |acc, &(_, m)| acc.lcm(&m));
    let scaled: u128 = weighted.iter().map(|&(w, m)| w * (lcm / m)).sum();
    Ok((Ratio::new(total, period), Ratio::new(scaled, period * lcm)))
}

pub fn order_key(concrete: &ConcreteTask, relation: OrderRelation, arch: &Architecture) -> Result<OrderKey> {
    let (o, r) = utilization_keys(concrete, arch)?;
    let (primary, secondary) = match relation {
        OrderRelation::O => (o, r),
        OrderRelation::R => (r, o),
    };
    Ok(OrderKey { primary, secondary, choices: concrete.choices.clone() })
}

/// Stable sort by [`order_key`].
pub fn sort_concretes(
    concretes: Vec<ConcreteTask>,
    relation: OrderRelation,
    arch: &Architecture,
) -> Result<Vec<ConcreteTask>> {
    let mut keyed = concretes
        .into_iter()
        .map(|c| order_key(&c, relation, arch).map(|k| (k, c)))
        .collect::<Result<Vec<_>>>()?;
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(keyed.into_iter().map(|(_, c)| c).collect())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedNode {
    pub id: NodeId,
    pub wcet: Time,
}

/// The sub-tasks of one concrete task carrying one tag.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedTask {
    pub task: TaskId,
    pub period: Time,
    pub tag: Tag,
    /// Sorted by node id.
    pub nodes: Vec<TaggedNode>,
}

impl TaggedTask {
    pub fn utilization(&self) -> f64 {
        self.nodes.iter().map(|n| n.wcet as f64).sum::<f64>() / self.period as f64
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Splits the sub-tasks of a concrete task by tag.
pub fn filter_tagged(concrete: &ConcreteTask) -> BTreeMap<Tag, TaggedTask> {
    let mut map: BTreeMap<Tag, TaggedTask> = BTreeMap::new();
    let mut subtasks: Vec<&Node> = concrete.task.subtasks().collect();
    subtasks.sort_by_key(|n| n.id);
    for node in subtasks {
        let Some(tag) = node.tag.clone() else { continue };
        map.entry(tag.clone())
            .or_insert_with(|| TaggedTask { task: concrete.id(), period: concrete.period(), tag, nodes: Vec::new() })
            .nodes
            .push(TaggedNode { id: node.id, wcet: node.wcet });
    }
    map
}

/// A uniformly drawn concrete task: the CP-DAG reduction of `spec`.
pub fn derive_cpdag<R: Rng + ?Sized>(spec: &TaskSpec, rng: &mut R) -> Result<ConcreteTask> {
    let mut all = enumerate_concretes(spec)?;
    let pick = rng.gen_range(0..all.len());
    Ok(all.swap_remove(pick))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{tag, validate_spec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn st(id: NodeId, t: &str, wcet: Time) -> Node {
        Node::subtask(id, tag(t), wcet)
    }

    fn ctl(id: NodeId, kind: NodeKind) -> Node {
        Node::control(id, kind)
    }

    fn spec(nodes: Vec<Node>, edges: Vec<(NodeId, NodeId)>) -> TaskSpec {
        TaskSpec { id: 7, period: 100, deadline: 100, nodes, edges }
    }

    /// The task of the running example: sources 1, 2 feed an alternative
    /// between the chain 3 -> 4 -> 5 and a dummy fanning out to 6, 7.
    pub(crate) fn example_task() -> TaskSpec {
        spec(
            vec![
                st(1, "CPU", 2),
                st(2, "CPU", 3),
                ctl(10, NodeKind::Alternative),
                st(3, "dGPU", 4),
                st(4, "DLA", 5),
                st(5, "dGPU", 3),
                st(9, "CPU", 0),
                st(6, "DLA", 6),
                st(7, "dGPU", 2),
                ctl(11, NodeKind::Junction),
                st(8, "CPU", 2),
            ],
            vec![(1, 10), (2, 10), (10, 3), (10, 9), (3, 4), (4, 5), (9, 6), (9, 7), (5, 11), (6, 11), (7, 11), (11, 8)],
        )
    }

    /// Brute force: every assignment of an outgoing edge to every alternative
    /// node, walking from the sources and following only selected edges.
    fn visited_sets(s: &TaskSpec) -> BTreeSet<BTreeSet<NodeId>> {
        let dag = Dag::new(s).unwrap();
        let alts: Vec<usize> = (0..dag.len()).filter(|&i| s.nodes[i].kind == NodeKind::Alternative).collect();
        let mut sets = BTreeSet::new();
        let total: usize = alts.iter().map(|&a| dag.succ(a).len()).product();
        for mut code in 0..total {
            let mut pick = vec![usize::MAX; dag.len()];
            for &a in &alts {
                let k = dag.succ(a).len();
                pick[a] = code % k;
                code /= k;
            }
            let mut seen = BTreeSet::new();
            let mut stack: Vec<usize> = dag.sources().collect();
            while let Some(u) = stack.pop() {
                if !seen.insert(u) {
                    continue;
                }
                if pick[u] != usize::MAX {
                    stack.push(dag.succ(u)[pick[u]]);
                } else {
                    stack.extend(dag.succ(u));
                }
            }
            let junctions: BTreeSet<usize> = (0..dag.len()).filter(|&i| s.nodes[i].kind == NodeKind::Junction).collect();
            sets.insert(seen.into_iter().filter(|i| !junctions.contains(i)).map(|i| dag.id(i)).collect());
        }
        sets
    }

    fn node_sets(concretes: &[ConcreteTask]) -> BTreeSet<BTreeSet<NodeId>> {
        concretes
            .iter()
            .map(|c| c.task.nodes.iter().filter(|n| n.kind != NodeKind::Junction).map(|n| n.id).collect())
            .collect()
    }

    #[test]
    fn no_alternative_yields_the_spec() {
        let s = spec(vec![st(1, "CPU", 1), st(2, "CPU", 2)], vec![(1, 2)]);
        let all = enumerate_concretes(&s).unwrap();
        assert_eq!(all.len(), 1);
        assert_eq!(all[0].task, s);
        assert!(all[0].choices.is_empty());
    }

    #[test]
    fn running_example_has_two_concretes() {
        let s = example_task();
        assert_eq!(validate_spec(&s), vec![]);
        let all = enumerate_concretes(&s).unwrap();
        assert_eq!(all.len(), 2);
        for c in &all {
            assert_eq!(validate_spec(&c.task), vec![]);
            assert!(!c.task.has_kind(NodeKind::Alternative));
            assert!(!c.task.has_kind(NodeKind::Junction));
            let dummy = c.task.node(10).unwrap();
            assert!(dummy.is_dummy());
            assert_eq!(dummy.tag, Some(tag("CPU")));
        }
        // Branch 1 drops the GPU/DLA chain: edges 9 -> {6, 7} -> 8 remain.
        let second = &all[1];
        assert!(second.task.node(3).is_none());
        assert!(second.task.edges.contains(&(6, 8)));
        assert!(second.task.edges.contains(&(10, 9)));
        assert_eq!(visited_sets(&s), node_sets(&all));
    }

    #[test]
    fn independent_alternatives_multiply() {
        // 1 -> A(10) -> {2, 3} -> J(11) -> 4 -> A(12) -> {5, 6, 7} -> J(13)
        let s = spec(
            vec![
                st(1, "CPU", 1),
                ctl(10, NodeKind::Alternative),
                st(2, "CPU", 1),
                st(3, "CPU", 1),
                ctl(11, NodeKind::Junction),
                st(4, "CPU", 1),
                ctl(12, NodeKind::Alternative),
                st(5, "CPU", 1),
                st(6, "CPU", 1),
                st(7, "CPU", 1),
                ctl(13, NodeKind::Junction),
            ],
            vec![(1, 10), (10, 2), (10, 3), (2, 11), (3, 11), (11, 4), (4, 12), (12, 5), (12, 6), (12, 7), (5, 13), (6, 13), (7, 13)],
        );
        let all = enumerate_concretes(&s).unwrap();
        assert_eq!(all.len(), 6);
        assert_eq!(visited_sets(&s), node_sets(&all));
        let vectors: Vec<_> = all.iter().map(|c| c.choices.clone()).collect();
        let mut sorted = vectors.clone();
        sorted.sort();
        assert_eq!(vectors, sorted);
    }

    #[test]
    fn nested_alternatives_follow_the_choice_tree() {
        // A(10) -> {A(12) -> {2, 3} -> J(13), 4} -> J(11); nested choice only
        // matters in the first branch: 2 + 1 = 3 concretes.
        let s = spec(
            vec![
                st(1, "CPU", 1),
                ctl(10, NodeKind::Alternative),
                ctl(12, NodeKind::Alternative),
                st(2, "CPU", 1),
                st(3, "CPU", 1),
                ctl(13, NodeKind::Junction),
                st(4, "CPU", 1),
                ctl(11, NodeKind::Junction),
            ],
            vec![(1, 10), (10, 4), (10, 12), (12, 2), (12, 3), (2, 13), (3, 13), (13, 11), (4, 11)],
        );
        let all = enumerate_concretes(&s).unwrap();
        assert_eq!(all.len(), 3);
        assert_eq!(visited_sets(&s), node_sets(&all));
    }

    #[test]
    fn conditional_scenarios_leave_alternatives_alone() {
        let s = spec(
            vec![
                st(1, "CPU", 1),
                ctl(10, NodeKind::Conditional),
                st(2, "CPU", 1),
                st(3, "dGPU", 1),
                ctl(11, NodeKind::Junction),
            ],
            vec![(1, 10), (10, 2), (10, 3), (2, 11), (3, 11)],
        );
        let concretes = enumerate_concretes(&s).unwrap();
        assert_eq!(concretes.len(), 1);
        assert_eq!(concretes[0].task, s);
        let scenarios = conditional_scenarios(&concretes[0]).unwrap();
        assert_eq!(scenarios, vec![BTreeSet::from([1, 2, 10]), BTreeSet::from([1, 3, 10])]);
    }

    #[test]
    fn order_keys() {
        let arch = Architecture::xavier();
        let c = ConcreteTask { task: TaskSpec { id: 0, period: 10, deadline: 10, nodes: vec![st(1, "CPU", 5)], edges: vec![] }, choices: vec![] };
        let (o, r) = utilization_keys(&c, &arch).unwrap();
        assert_eq!(o, Ratio::new(1, 2));
        assert_eq!(r, Ratio::new(1, 16));

        let dummies = ConcreteTask { task: TaskSpec { nodes: vec![st(1, "CPU", 0)], ..c.task.clone() }, choices: vec![] };
        assert_eq!(utilization_keys(&dummies, &arch).unwrap(), (Ratio::from_integer(0), Ratio::from_integer(0)));

        let unknown = ConcreteTask { task: TaskSpec { nodes: vec![st(1, "FPGA", 1)], ..c.task.clone() }, choices: vec![] };
        assert!(matches!(order_key(&unknown, OrderRelation::O, &arch), Err(Error::UnknownTag(_))));
    }

    #[test]
    fn scarce_engines_sort_last_under_both_relations() {
        let arch = Architecture::xavier();
        let on = |t: &str, choice: usize| ConcreteTask {
            task: TaskSpec { id: 0, period: 10, deadline: 10, nodes: vec![st(1, t, 4)], edges: vec![] },
            choices: vec![BranchChoice { node: 99, branch: choice }],
        };
        // B comes first in choice order, so only the keys can put A ahead.
        let a = on("CPU", 1);
        let b = on("DLA", 0);
        for relation in [OrderRelation::O, OrderRelation::R] {
            let sorted = sort_concretes(vec![b.clone(), a.clone()], relation, &arch).unwrap();
            assert_eq!(sorted[0], a, "{relation:?}");
        }
    }

    #[test]
    fn tagged_split() {
        let all = enumerate_concretes(&example_task()).unwrap();
        let first = filter_tagged(&all[0]);
        assert_eq!(first.keys().map(Tag::as_str).collect::<Vec<_>>(), vec!["CPU", "DLA", "dGPU"]);
        let total: usize = first.values().map(|t| t.nodes.len()).sum();
        assert_eq!(total, all[0].task.subtasks().count());

        let single = ConcreteTask { task: spec(vec![st(1, "CPU", 1), st(2, "CPU", 1)], vec![(1, 2)]), choices: vec![] };
        assert_eq!(filter_tagged(&single).len(), 1);

        let dummy = ConcreteTask { task: spec(vec![st(1, "PVA", 0)], vec![]), choices: vec![] };
        let map = filter_tagged(&dummy);
        assert_eq!(map.len(), 1);
        assert_eq!(map[&tag("PVA")].utilization(), 0.0);
    }

    #[test]
    fn cpdag_is_deterministic_and_unbiased() {
        let s = example_task();
        let plain = spec(vec![st(1, "CPU", 1)], vec![]);
        assert_eq!(derive_cpdag(&plain, &mut ChaCha8Rng::seed_from_u64(3)).unwrap().task, plain);

        let a = derive_cpdag(&s, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let b = derive_cpdag(&s, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(a, b);

        let all = enumerate_concretes(&s).unwrap();
        let draws = 10_000;
        let mut first = 0;
        for seed in 0..draws {
            let c = derive_cpdag(&s, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert!(all.contains(&c));
            if c.choices[0].branch == 0 {
                first += 1;
            }
        }
        // Binomial(10^4, 1/2): sigma = 50.
        let dev = (first as f64 - draws as f64 / 2.0).abs();
        assert!(dev <= 150.0, "branch 0 drawn {first} times");
    }
}
