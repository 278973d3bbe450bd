//! Multistart search over several nodes that share their records.
//!
//! Every node runs its own solver. A node that beats the best value it
//! knows broadcasts the value and vector; when a node stagnates it adopts
//! a better received record by rebuilding its probability vector around
//! that vector. Node 0 coordinates: it stops the cluster after a quiet
//! period and assembles the answer.

pub mod message;
pub mod node;
pub mod transport;

use std::sync::atomic::AtomicBool;
use std::sync::Arc;

pub use message::{read_frame, write_frame, Message, MessageKind};
pub use node::{
    average_probability, node_seed, reconstruct_probability, run_node, ClusterConfig, ClusterResult,
    NodeOutcome, NodeReport, NodeState, Reseed,
};
pub use transport::{queue_network, NullTransport, QueueTransport, TcpOptions, TcpTransport, Transport};

use crate::error::{Error, Result};
use crate::model::Problem;

/// Result of an in-process cluster run.
#[derive(Clone, Debug)]
pub struct ClusterRun {
    pub result: ClusterResult,
    /// Per-node reports, indexed by node id.
    pub nodes: Vec<NodeReport>,
}

/// Runs `nodes` nodes on threads of this process, linked by queues.
pub fn run_in_process(
    problem: &Problem,
    config: &ClusterConfig,
    nodes: usize,
    cancel: Option<Arc<AtomicBool>>,
) -> Result<ClusterRun> {
    if nodes == 0 {
        return Err(Error::invalid("a cluster needs at least one node"));
    }
    config.solver.validate()?;
    let transports: Vec<Box<dyn Transport>> = if nodes == 1 {
        vec![Box::new(NullTransport { node_id: 0 })]
    } else {
        queue_network(nodes)
            .into_iter()
            .map(|t| Box::new(t) as Box<dyn Transport>)
            .collect()
    };
    let outcomes: Vec<Result<NodeOutcome>> = std::thread::scope(|s| {
        let handles: Vec<_> = transports
            .into_iter()
            .map(|t| {
                let cancel = cancel.clone();
                s.spawn(move || run_node(problem, config, t, cancel))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Transport("node thread panicked".into()))))
            .collect()
    });
    let mut reports = Vec::with_capacity(nodes);
    let mut result = None;
    for o in outcomes {
        let o = o?;
        if o.result.is_some() {
            result = o.result;
        }
        reports.push(o.report);
    }
    Ok(ClusterRun {
        result: result.expect("node 0 always produces the result"),
        nodes: reports,
    })
}
