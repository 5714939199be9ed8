//! Architectures, HPC-DAG task specifications and graph utilities.
//!
//! Time is an integer number of abstract units throughout the crate. A task
//! is a periodic DAG whose nodes are either sub-tasks (typed units of work),
//! alternative nodes (design-time choice between branches), conditional
//! nodes (run-time choice between branches) or junctions closing the region
//! opened by an alternative or conditional node.

mod graph;
mod validate;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use graph::{hyperperiod, longest_paths, Dag, LongestPaths};
pub use validate::{find_regions, validate_spec, Diagnostic, Region};

pub type NodeId = u32;
pub type TaskId = u32;
pub type EngineId = u32;
pub type Time = u64;

/// Capability class of an engine (`CPU`, `dGPU`, `DLA`, ...).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Tag(String);

impl Tag {
    pub fn new(name: impl Into<String>) -> Option<Self> {
        let name = name.into();
        if name.is_empty() {
            None
        } else {
            Some(Tag(name))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Tag {
    type Error = String;

    fn try_from(value: String) -> std::result::Result<Self, Self::Error> {
        Tag::new(value).ok_or_else(|| "tag must be non-empty".to_string())
    }
}

impl From<Tag> for String {
    fn from(tag: Tag) -> String {
        tag.0
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Shorthand used by presets and tests. Panics on an empty name.
pub fn tag(name: &str) -> Tag {
    Tag::new(name).expect("empty tag name")
}

/// Fraction of a sub-task's WCET charged per preemption, stored in parts per
/// million so that charges stay exact integers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct CostRatio(u32);

impl CostRatio {
    pub const ZERO: CostRatio = CostRatio(0);
    const SCALE: u64 = 1_000_000;

    pub fn from_ppm(ppm: u32) -> Option<Self> {
        (u64::from(ppm) <= Self::SCALE).then_some(CostRatio(ppm))
    }

    pub fn ppm(self) -> u32 {
        self.0
    }

    /// `ceil(ratio * wcet)`.
    pub fn charge(self, wcet: Time) -> Time {
        let num = u128::from(wcet) * u128::from(self.0);
        num.div_ceil(u128::from(Self::SCALE)) as Time
    }
}

impl TryFrom<f64> for CostRatio {
    type Error = String;

    fn try_from(value: f64) -> std::result::Result<Self, Self::Error> {
        if !(0.0..=1.0).contains(&value) {
            return Err(format!("preemption cost ratio {value} outside [0, 1]"));
        }
        Ok(CostRatio((value * Self::SCALE as f64).round() as u32))
    }
}

impl From<CostRatio> for f64 {
    fn from(ratio: CostRatio) -> f64 {
        f64::from(ratio.0) / CostRatio::SCALE as f64
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Engine {
    pub id: EngineId,
    pub tag: Tag,
    pub preemptive: bool,
    #[serde(default)]
    pub preempt_cost_ratio: CostRatio,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub engines: Vec<Engine>,
}

impl Architecture {
    /// NVIDIA Jetson AGX Xavier: 8 preemptive CPU cores and one engine per
    /// accelerator class. DLA and PVA cannot be preempted.
    pub fn xavier() -> Self {
        Self::build(&[("CPU", 8), ("dGPU", 1), ("iGPU", 1), ("DLA", 1), ("PVA", 1)])
    }

    /// NVIDIA Pegasus: 16 engines over five tags.
    pub fn pegasus() -> Self {
        Self::build(&[("CPU", 8), ("dGPU", 2), ("iGPU", 2), ("DLA", 2), ("PVA", 2)])
    }

    fn build(counts: &[(&str, usize)]) -> Self {
        let mut engines = Vec::new();
        for &(name, count) in counts {
            let preemptive = !matches!(name, "DLA" | "PVA");
            for _ in 0..count {
                engines.push(Engine {
                    id: engines.len() as EngineId,
                    tag: tag(name),
                    preemptive,
                    preempt_cost_ratio: default_ratio(name),
                });
            }
        }
        Architecture { engines }
    }

    /// Replaces every engine's preemption ratio by the one given for its tag.
    pub fn with_ratios(mut self, ratio_of: impl Fn(&Tag) -> CostRatio) -> Self {
        for engine in &mut self.engines {
            engine.preempt_cost_ratio = ratio_of(&engine.tag);
        }
        self
    }

    pub fn engine(&self, id: EngineId) -> Option<&Engine> {
        self.engines.iter().find(|e| e.id == id)
    }

    pub fn engines_with_tag<'a>(&'a self, tag: &'a Tag) -> impl Iterator<Item = &'a Engine> + 'a {
        self.engines.iter().filter(move |e| &e.tag == tag)
    }

    /// Number of engines carrying `tag`.
    pub fn count(&self, tag: &Tag) -> usize {
        self.engines_with_tag(tag).count()
    }

    /// Distinct tags in first-appearance order.
    pub fn tags(&self) -> Vec<Tag> {
        let mut tags: Vec<Tag> = Vec::new();
        for engine in &self.engines {
            if !tags.contains(&engine.tag) {
                tags.push(engine.tag.clone());
            }
        }
        tags
    }

    pub fn check(&self) -> crate::Result<()> {
        if self.engines.is_empty() {
            return Err(crate::Error::InvalidConfig("architecture has no engine".into()));
        }
        let mut ids: Vec<EngineId> = self.engines.iter().map(|e| e.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(crate::Error::InvalidConfig("duplicate engine id".into()));
        }
        Ok(())
    }
}

/// Preemption cost ratios measured on the Xavier engines.
pub fn default_ratio(tag_name: &str) -> CostRatio {
    match tag_name {
        "CPU" => CostRatio(200),
        "dGPU" | "iGPU" => CostRatio(300_000),
        "DLA" | "PVA" => CostRatio(100_000),
        _ => CostRatio::ZERO,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    SubTask,
    Alternative,
    Conditional,
    Junction,
}

impl NodeKind {
    /// Alternative and conditional nodes open a branching region.
    pub fn opens_region(self) -> bool {
        matches!(self, NodeKind::Alternative | NodeKind::Conditional)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<Tag>,
    #[serde(default)]
    pub wcet: Time,
    #[serde(default)]
    pub max_preemptions: u32,
    #[serde(default)]
    pub split_cost: Time,
}

impl Node {
    pub fn subtask(id: NodeId, tag: Tag, wcet: Time) -> Self {
        Node { id, kind: NodeKind::SubTask, tag: Some(tag), wcet, max_preemptions: 0, split_cost: 0 }
    }

    pub fn control(id: NodeId, kind: NodeKind) -> Self {
        Node { id, kind, tag: None, wcet: 0, max_preemptions: 0, split_cost: 0 }
    }

    pub fn is_subtask(&self) -> bool {
        self.kind == NodeKind::SubTask
    }

    /// Execution demand on the critical path; control nodes contribute nothing.
    pub fn demand(&self) -> Time {
        if self.is_subtask() {
            self.wcet
        } else {
            0
        }
    }

    /// A zero-WCET sub-task: schedulable anywhere at no cost.
    pub fn is_dummy(&self) -> bool {
        self.is_subtask() && self.wcet == 0
    }
}

/// A periodic HPC-DAG task.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub id: TaskId,
    pub period: Time,
    pub deadline: Time,
    pub nodes: Vec<Node>,
    pub edges: Vec<(NodeId, NodeId)>,
}

impl TaskSpec {
    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn subtasks(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| n.is_subtask())
    }

    pub fn has_kind(&self, kind: NodeKind) -> bool {
        self.nodes.iter().any(|n| n.kind == kind)
    }

    /// Sorts nodes by id and edges lexicographically.
    pub fn canonicalize(&mut self) {
        self.nodes.sort_by_key(|n| n.id);
        self.edges.sort_unstable();
        self.edges.dedup();
    }

    pub fn utilization(&self) -> f64 {
        self.subtasks().map(|n| n.wcet as f64).sum::<f64>() / self.period as f64
    }
}

/// One resolved alternative: `branch` indexes the outgoing edges of `node`
/// sorted by destination id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchChoice {
    pub node: NodeId,
    pub branch: usize,
}

/// A task specification with every alternative resolved.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConcreteTask {
    pub task: TaskSpec,
    pub choices: Vec<BranchChoice>,
}

impl ConcreteTask {
    pub fn id(&self) -> TaskId {
        self.task.id
    }

    pub fn period(&self) -> Time {
        self.task.period
    }

    pub fn deadline(&self) -> Time {
        self.task.deadline
    }
}
