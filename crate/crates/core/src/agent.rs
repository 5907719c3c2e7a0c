use serde::{Deserialize, Serialize};

use crate::config::Group;

pub type AgentId = u64;

/// One simulated individual and its lifecycle bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub id: AgentId,
    pub group: Group,
    pub features: Vec<f64>,
    pub effort_mean: f64,
    pub entry_time: usize,
    pub first_negative_time: Option<usize>,
    pub exit_time: Option<usize>,
    pub cumulative_cost: f64,
}

impl Agent {
    pub fn new(id: AgentId, group: Group, features: Vec<f64>, effort_mean: f64, entry_time: usize) -> Self {
        Self {
            id,
            group,
            features,
            effort_mean,
            entry_time,
            first_negative_time: None,
            exit_time: None,
            cumulative_cost: 0.0,
        }
    }

    pub fn is_active(&self) -> bool {
        self.exit_time.is_none()
    }

    /// Lifecycle ordering: entry <= first negative <= exit whenever present.
    pub fn timestamps_ordered(&self) -> bool {
        let entry = self.entry_time;
        match (self.first_negative_time, self.exit_time) {
            (Some(n), Some(x)) => entry <= n && n <= x,
            (Some(n), None) => entry <= n,
            (None, Some(x)) => entry <= x,
            (None, None) => true,
        }
    }
}

/// Hands out run-unique agent ids.
#[derive(Debug, Clone, Default)]
pub struct IdAllocator {
    next: AgentId,
}

impl IdAllocator {
    pub fn starting_at(next: AgentId) -> Self {
        Self { next }
    }

    pub fn next_id(&mut self) -> AgentId {
        let id = self.next;
        self.next += 1;
        id
    }

    pub fn peek(&self) -> AgentId {
        self.next
    }
}
