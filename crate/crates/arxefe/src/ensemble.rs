//! Wiring of multiple scalar agents into a coupled or uncoupled set.
//!
//! Coupling is purely informational: a coupled agent reads its peers' output
//! buffers as extra regressor entries. Each timestep runs in two phases.
//! All agents first decide simultaneously from time-(k-1) information; after
//! the plant responds, `absorb` scores the step with pre-update beliefs,
//! updates every agent, and finally synchronizes the shared output buffers.

use serde::{Deserialize, Serialize};

use crate::agent::ArxEfeAgent;
use crate::error::{Error, Result};

/// Which peers each agent reads. An empty peer list per agent is the
/// uncoupled configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CouplingTopology {
    peers: Vec<Vec<usize>>,
}

impl CouplingTopology {
    pub fn new(peers: Vec<Vec<usize>>) -> Result<Self> {
        let n_agents = peers.len();
        for (i, list) in peers.iter().enumerate() {
            for &j in list {
                if j == i {
                    return Err(Error::SelfCoupling { agent: i });
                }
                if j >= n_agents {
                    return Err(Error::PeerOutOfRange { peer: j, n_agents });
                }
            }
        }
        Ok(Self { peers })
    }

    /// No agent reads any peer.
    pub fn uncoupled(n_agents: usize) -> Self {
        Self {
            peers: vec![Vec::new(); n_agents],
        }
    }

    /// Every agent reads every other agent, in ascending index order.
    pub fn fully_coupled(n_agents: usize) -> Self {
        Self {
            peers: (0..n_agents)
                .map(|i| (0..n_agents).filter(|&j| j != i).collect())
                .collect(),
        }
    }

    pub fn n_agents(&self) -> usize {
        self.peers.len()
    }

    pub fn peers(&self, agent: usize) -> &[usize] {
        &self.peers[agent]
    }
}

/// Per-agent record of one executed step, scored with the pre-update belief.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub control: f64,
    pub observation: f64,
    pub pred_mean: f64,
    pub pred_std: f64,
    pub surprise: f64,
    pub goal_alignment: f64,
}

/// A set of agents plus their coupling topology.
#[derive(Debug, Clone)]
pub struct Ensemble {
    agents: Vec<ArxEfeAgent>,
    topology: CouplingTopology,
    step_index: usize,
}

impl Ensemble {
    pub fn new(agents: Vec<ArxEfeAgent>, topology: CouplingTopology) -> Result<Self> {
        if agents.len() != topology.n_agents() {
            return Err(Error::DimensionMismatch {
                expected: topology.n_agents(),
                got: agents.len(),
            });
        }
        for (i, agent) in agents.iter().enumerate() {
            let expected = 1
                + agent.memory().input_len()
                + agent.memory().output_len() * (1 + topology.peers(i).len());
            if agent.belief().dim() != expected
                || agent.memory().n_peers() != topology.peers(i).len()
            {
                return Err(Error::DimensionMismatch {
                    expected,
                    got: agent.belief().dim(),
                });
            }
        }
        Ok(Self {
            agents,
            topology,
            step_index: 0,
        })
    }

    pub fn agents(&self) -> &[ArxEfeAgent] {
        &self.agents
    }

    pub fn topology(&self) -> &CouplingTopology {
        &self.topology
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    /// Every agent independently selects its control from time-(k-1)
    /// information.
    pub fn decide(&self) -> Result<Vec<f64>> {
        self.agents
            .iter()
            .map(|agent| agent.select_control().map(|(u, _)| u))
            .collect()
    }

    /// Absorbs executed controls and the resulting observations: per agent,
    /// metrics with the pre-update belief, then the belief/buffer update;
    /// afterwards every peer buffer is shifted with the corresponding peer's
    /// observation.
    pub fn absorb(&mut self, controls: &[f64], observations: &[f64]) -> Result<Vec<StepMetrics>> {
        let n = self.agents.len();
        if controls.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: controls.len(),
            });
        }
        if observations.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: observations.len(),
            });
        }

        let mut metrics = Vec::with_capacity(n);
        for (i, agent) in self.agents.iter_mut().enumerate() {
            let (u, y) = (controls[i], observations[i]);
            let (pred_mean, pred_std) = agent.predict(u)?;
            let surprise = agent.surprise(u, y)?;
            let goal_alignment = agent.goal_alignment(y)?;
            agent.observe(u, y)?;
            metrics.push(StepMetrics {
                control: u,
                observation: y,
                pred_mean,
                pred_std,
                surprise,
                goal_alignment,
            });
        }
        for i in 0..n {
            for (slot, &j) in self.topology.peers(i).iter().enumerate() {
                self.agents[i]
                    .memory_mut()
                    .shift_peer_output(slot, observations[j]);
            }
        }
        self.step_index += 1;
        Ok(metrics)
    }
}
