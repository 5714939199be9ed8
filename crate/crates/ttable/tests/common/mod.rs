#![allow(dead_code)]

use hpcdag::model::{tag, Architecture, ConcreteTask, CostRatio, Engine, Node, NodeId, TaskSpec, Time};

pub fn engines(spec: &[(&str, bool)]) -> Architecture {
    let engines = spec
        .iter()
        .enumerate()
        .map(|(id, &(name, preemptive))| Engine {
            id: id as u32,
            tag: tag(name),
            preemptive,
            preempt_cost_ratio: CostRatio::ZERO,
        })
        .collect();
    Architecture { engines }
}

/// Sub-task node: (id, tag, wcet, max preemptions, split cost).
pub fn node(id: NodeId, name: &str, wcet: Time, preemptions: u32, split: Time) -> Node {
    let mut n = Node::subtask(id, tag(name), wcet);
    n.max_preemptions = preemptions;
    n.split_cost = split;
    n
}

pub fn task(id: u32, period: Time, deadline: Time, nodes: Vec<Node>, edges: Vec<(NodeId, NodeId)>) -> ConcreteTask {
    ConcreteTask { task: TaskSpec { id, period, deadline, nodes, edges }, choices: vec![] }
}
