//! Random HPC-DAG task sets with per-tag utilization targets.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{Architecture, Dag, Node, NodeId, NodeKind, Tag, TaskSpec, Time};
use crate::{Error, Result};

/// Candidate periods; every pair divides 120000.
pub const PERIODS: [Time; 10] = [120, 240, 600, 1200, 3000, 6000, 12000, 30000, 60000, 120000];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    /// Total utilization per tag over the whole set.
    pub utilization: BTreeMap<Tag, f64>,
    pub tasks: (usize, usize),
    pub nodes: (usize, usize),
    /// Chance of an edge between two nodes of different layers.
    pub edge_prob: f64,
    /// Graph depth stays within `depth_factor * node count`.
    pub depth_factor: f64,
    /// Chance that a sub-task gets a branching successor.
    pub region_prob: f64,
    pub max_alternatives: usize,
    pub periods: Vec<Time>,
    pub max_preemptions: u32,
    pub max_split_cost: Time,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            utilization: BTreeMap::new(),
            tasks: (20, 25),
            nodes: (10, 30),
            edge_prob: 0.15,
            depth_factor: 0.6,
            region_prob: 0.7,
            max_alternatives: 10,
            periods: PERIODS.to_vec(),
            max_preemptions: 3,
            max_split_cost: 2,
        }
    }
}

impl GenConfig {
    pub fn with_utilization(mut self, utilization: BTreeMap<Tag, f64>) -> Self {
        self.utilization = utilization;
        self
    }

    pub fn check(&self, arch: &Architecture) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        for (tag, &u) in &self.utilization {
            let m = arch.count(tag);
            if m == 0 {
                return Err(Error::UnknownTag(tag.clone()));
            }
            if !(0.0..=m as f64).contains(&u) {
                return bad(format!("utilization {u} for {tag} outside [0, {m}]"));
            }
        }
        for (name, p) in [("edge_prob", self.edge_prob), ("region_prob", self.region_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} {p} outside [0, 1]"));
            }
        }
        if !(self.depth_factor > 0.0 && self.depth_factor <= 1.0) {
            return bad(format!("depth_factor {} outside (0, 1]", self.depth_factor));
        }
        if self.tasks.0 == 0 || self.tasks.0 > self.tasks.1 {
            return bad(format!("task count range {:?}", self.tasks));
        }
        if self.nodes.0 < 2 || self.nodes.0 > self.nodes.1 {
            return bad(format!("node count range {:?}", self.nodes));
        }
        if self.periods.is_empty() || self.periods.contains(&0) {
            return bad("period list empty or containing 0".into());
        }
        Ok(())
    }
}

/// UUniFast: `n` shares summing to `total`, uniformly over the simplex.
pub fn uunifast<R: Rng + ?Sized>(n: usize, total: f64, rng: &mut R) -> Vec<f64> {
    let mut shares = Vec::with_capacity(n);
    let mut left = total;
    for i in 1..n {
        let next = left * rng.gen::<f64>().powf(1.0 / (n - i) as f64);
        shares.push(left - next);
        left = next;
    }
    if n > 0 {
        shares.push(left);
    }
    shares
}

const DISCARD_ATTEMPTS: usize = 100_000;

/// UUniFast-Discard: redraws until every share is at most one.
pub fn uunifast_discard<R: Rng + ?Sized>(n: usize, total: f64, rng: &mut R) -> Result<Vec<f64>> {
    if n == 0 || total > n as f64 {
        return Err(Error::InfeasibleTarget { n, target: total });
    }
    for _ in 0..DISCARD_ATTEMPTS {
        let shares = uunifast(n, total, rng);
        if shares.iter().all(|&u| u <= 1.0) {
            return Ok(shares);
        }
    }
    Err(Error::InfeasibleTarget { n, target: total })
}

/// Graph structure and tags of one task; utilizations come later.
pub fn gen_task_graph<R: Rng + ?Sized>(rng: &mut R, cfg: &GenConfig, tags: &[Tag]) -> TaskSpec {
    let target = rng.gen_range(cfg.nodes.0..=cfg.nodes.1);
    // Coin flips deciding which base nodes get a branching successor; each
    // region adds three nodes, so the base graph shrinks accordingly.
    let coins: Vec<bool> = (0..target).map(|_| rng.gen_bool(cfg.region_prob)).collect();
    let mut base = target;
    while base > cfg.nodes.0.min(target) && base + 3 * coins[..base].iter().filter(|&&c| c).count() > target {
        base -= 1;
    }
    let budget = (target - base) / 3;

    let mut task = layered_dag(rng, cfg, base, tags);
    let period = *cfg.periods.choose(rng).expect("non-empty period list");
    task.period = period;
    task.deadline = period;
    add_regions(rng, cfg, &mut task, &coins[..base], budget, tags);
    task.canonicalize();
    task
}

fn random_subtask<R: Rng + ?Sized>(rng: &mut R, cfg: &GenConfig, id: NodeId, tags: &[Tag]) -> Node {
    Node {
        id,
        kind: NodeKind::SubTask,
        tag: Some(tags.choose(rng).expect("non-empty tag list").clone()),
        wcet: 0,
        max_preemptions: rng.gen_range(0..=cfg.max_preemptions),
        split_cost: rng.gen_range(0..=cfg.max_split_cost),
    }
}

/// `n` sub-tasks spread over layers; edges only go to later layers, so the
/// layer count bounds the depth.
fn layered_dag<R: Rng + ?Sized>(rng: &mut R, cfg: &GenConfig, n: usize, tags: &[Tag]) -> TaskSpec {
    let layers = ((cfg.depth_factor * n as f64) as usize / 2).clamp(2, n);
    let layer: Vec<usize> = (0..n).map(|i| if i < layers { i } else { rng.gen_range(0..layers) }).collect();
    let nodes: Vec<Node> = (0..n).map(|i| random_subtask(rng, cfg, i as NodeId, tags)).collect();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in 0..n {
            if layer[u] < layer[v] && rng.gen_bool(cfg.edge_prob) {
                edges.push((u as NodeId, v as NodeId));
            }
        }
    }
    // Join components: attach a node of each stray component to a node of
    // another layer, from the lower layer to the higher.
    let mut comp: Vec<usize> = (0..n).collect();
    fn root(comp: &mut [usize], mut x: usize) -> usize {
        while comp[x] != x {
            comp[x] = comp[comp[x]];
            x = comp[x];
        }
        x
    }
    for &(u, v) in &edges {
        let (a, b) = (root(&mut comp, u as usize), root(&mut comp, v as usize));
        comp[a] = b;
    }
    loop {
        let roots: Vec<usize> = (0..n).map(|x| root(&mut comp, x)).collect();
        let first = roots[0];
        let Some(stray) = (0..n).find(|&x| roots[x] != first) else { break };
        let members: Vec<usize> = (0..n).filter(|&x| roots[x] == roots[stray]).collect();
        let mut outside: Vec<(usize, usize)> = Vec::new();
        for &m in &members {
            outside.extend((0..n).filter(|&o| roots[o] != roots[m] && layer[m] != layer[o]).map(|o| (m, o)));
        }
        let &(m, o) = outside.choose(rng).expect("layers 0 and 1 are both populated");
        let (u, v) = if layer[m] < layer[o] { (m, o) } else { (o, m) };
        edges.push((u as NodeId, v as NodeId));
        let (a, b) = (root(&mut comp, u), root(&mut comp, v));
        comp[a] = b;
    }
    TaskSpec { id: 0, period: 1, deadline: 1, nodes, edges }
}

/// Turns successors of base nodes into alternative or conditional regions:
/// `preds(s) -> X -> {s, s'} -> J -> succ(s)`.
fn add_regions<R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &GenConfig,
    task: &mut TaskSpec,
    coins: &[bool],
    budget: usize,
    tags: &[Tag],
) {
    let mut converted = vec![false; coins.len()];
    let mut done = 0;
    let mut alternatives = 0;
    let order: Vec<NodeId> = {
        let dag = Dag::new(task).expect("generated graph is acyclic");
        dag.topo().iter().map(|&i| dag.id(i)).collect()
    };
    for u in order {
        if done == budget {
            break;
        }
        if !coins[u as usize] {
            continue;
        }
        let eligible: Vec<NodeId> = task
            .edges
            .iter()
            .filter(|&&(a, b)| a == u && (b as usize) < coins.len() && !converted[b as usize])
            .map(|&(_, b)| b)
            .collect();
        let Some(&s) = eligible.choose(rng) else { continue };
        let kind = if alternatives < cfg.max_alternatives && rng.gen_bool(0.5) {
            NodeKind::Alternative
        } else {
            NodeKind::Conditional
        };
        let next = task.nodes.iter().map(|n| n.id).max().unwrap_or(0) + 1;
        let (x, twin, j) = (next, next + 1, next + 2);
        let mut trial = task.clone();
        trial.nodes.push(Node::control(x, kind));
        trial.nodes.push(random_subtask(rng, cfg, twin, tags));
        trial.nodes.push(Node::control(j, NodeKind::Junction));
        let mut edges = Vec::with_capacity(trial.edges.len() + 4);
        for &(a, b) in &trial.edges {
            if b == s {
                edges.push((a, x));
            } else if a == s {
                edges.push((j, b));
            } else {
                edges.push((a, b));
            }
        }
        edges.extend([(x, s), (x, twin), (s, j), (twin, j)]);
        trial.edges = edges;
        let depth = Dag::new(&trial).expect("acyclic").depth();
        if depth as f64 > cfg.depth_factor * trial.nodes.len() as f64 {
            continue;
        }
        *task = trial;
        converted[s as usize] = true;
        done += 1;
        if kind == NodeKind::Alternative {
            alternatives += 1;
        }
    }
}

/// A whole task set: structure first, then per-tag utilizations spread over
/// the tasks holding that tag and over their sub-tasks.
pub fn gen_taskset<R: Rng + ?Sized>(arch: &Architecture, cfg: &GenConfig, rng: &mut R) -> Result<Vec<TaskSpec>> {
    cfg.check(arch)?;
    let tags = arch.tags();
    const ATTEMPTS: usize = 1000;
    'set: for _ in 0..ATTEMPTS {
        let n = rng.gen_range(cfg.tasks.0..=cfg.tasks.1);
        let mut tasks: Vec<TaskSpec> = (0..n)
            .map(|i| {
                let mut t = gen_task_graph(rng, cfg, &tags);
                t.id = i as u32;
                t
            })
            .collect();
        for (tag, &target) in &cfg.utilization {
            if target <= 0.0 {
                continue;
            }
            let holders: Vec<(usize, Vec<usize>)> = tasks
                .iter()
                .enumerate()
                .map(|(t, spec)| {
                    let idx = spec
                        .nodes
                        .iter()
                        .enumerate()
                        .filter(|(_, nd)| nd.is_subtask() && nd.tag.as_ref() == Some(tag))
                        .map(|(k, _)| k)
                        .collect();
                    (t, idx)
                })
                .filter(|(_, idx): &(usize, Vec<usize>)| !idx.is_empty())
                .collect();
            if holders.is_empty() {
                continue 'set;
            }
            let capacity: f64 = holders.iter().map(|(_, idx)| idx.len() as f64).sum();
            if target > capacity {
                continue 'set;
            }
            let per_task = 'draw: {
                for _ in 0..ATTEMPTS {
                    let shares = uunifast(holders.len(), target, rng);
                    if shares.iter().zip(&holders).all(|(&u, (_, idx))| u <= idx.len() as f64) {
                        break 'draw shares;
                    }
                }
                continue 'set;
            };
            for ((t, idx), share) in holders.into_iter().zip(per_task) {
                let spec = &mut tasks[t];
                let period = spec.period;
                let split = uunifast_discard(idx.len(), share, rng)?;
                for (k, u) in idx.into_iter().zip(split) {
                    spec.nodes[k].wcet = (u * period as f64).round() as Time;
                }
            }
        }
        return Ok(tasks);
    }
    Err(Error::InvalidConfig("could not draw a task set meeting the utilization targets".into()))
}
