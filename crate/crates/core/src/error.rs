use crate::model::{NodeId, TaskId, Tag, Time};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("task {task}: graph contains a directed cycle")]
    CyclicGraph { task: TaskId },

    #[error("task {task}: edge references unknown node {node}")]
    UnknownNode { task: TaskId, node: NodeId },

    #[error("task {task}: region opened by node {node} is not single-entry/single-exit")]
    RegionMalformed { task: TaskId, node: NodeId },

    #[error("tag {0} has no engine in the architecture")]
    UnknownTag(Tag),

    #[error("critical path {critical} exceeds deadline {deadline}")]
    CriticalPathExceedsDeadline { critical: Time, deadline: Time },

    #[error("cannot remove a sub-task from an empty tagged task")]
    EmptyTaggedTask,

    #[error("utilization target {target} cannot be split over {n} shares of at most 1")]
    InfeasibleTarget { n: usize, target: f64 },

    #[error("task {task} is invalid: {reason}")]
    InvalidTask { task: TaskId, reason: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
