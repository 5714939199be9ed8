use hpcdag::model::{NodeId, NodeKind, TaskId};

#[derive(Debug, thiserror::Error)]
pub enum TtError {
    #[error("task {task}: node {node} is {kind:?}; resolve alternatives and conditionals first")]
    UnsupportedNodeKind { task: TaskId, node: NodeId, kind: NodeKind },

    #[error("model would hold {intervals} intervals, above the limit of {limit}")]
    ModelTooLarge { intervals: usize, limit: usize },

    #[error(transparent)]
    Model(#[from] hpcdag::Error),
}

pub type Result<T> = std::result::Result<T, TtError>;
