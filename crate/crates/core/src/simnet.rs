//! Synchronous full-mesh broadcast network that drives the CBBA agents.
//!
//! A round is: every agent runs its bidding phase, every agent's message is
//! snapshotted, then every agent resolves the messages of all its peers in
//! sender-id order. Because resolution only reads the snapshot, the outcome
//! does not depend on the order agents are stored in.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::cbba::{self, AgentState, CbbaError, ConsensusMessage};
use crate::domain::{Allocation, AllocationFailure, Application, Capacity};
use crate::scoring::{NormBounds, Weights};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct NetworkStats {
    /// Rounds executed, including the final quiet round that confirms convergence.
    pub rounds: u64,
    /// Last round in which any agent's state changed (0 if none did).
    pub settled_round: u64,
    /// Point-to-point deliveries: `rounds * n * (n - 1)`.
    pub messages_sent: u64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CbbaConfig {
    /// Round cap. `None` means `|MS| * |RA| + 1`: the quadratic bound on
    /// state-changing rounds plus one quiet round to observe convergence.
    pub max_rounds: Option<u64>,
    /// Step agents on the rayon pool within each round.
    pub parallel: bool,
}

impl CbbaConfig {
    pub fn round_cap(&self, tasks: usize, agents: usize) -> u64 {
        self.max_rounds.unwrap_or((tasks as u64) * (agents as u64) + 1).max(1)
    }
}

#[derive(Debug, Serialize)]
struct TraceLine<'a> {
    round: u64,
    #[serde(flatten)]
    message: &'a ConsensusMessage,
}

/// Runs one round. Returns whether any agent's state changed; each agent's
/// `changed` flag is updated.
pub fn run_round(agents: &mut [AgentState], round: u64, parallel: bool) -> Result<bool, CbbaError> {
    run_round_traced(agents, round, parallel, None)
}

fn run_round_traced<'w>(
    agents: &mut [AgentState],
    round: u64,
    parallel: bool,
    trace: Option<&mut (dyn Write + 'w)>,
) -> Result<bool, CbbaError> {
    let before: Vec<AgentState> = agents.to_vec();

    if parallel {
        agents.par_iter_mut().for_each(|a| a.build_bundle(round));
    } else {
        agents.iter_mut().for_each(|a| a.build_bundle(round));
    }

    let mut inbox: Vec<ConsensusMessage> = agents.iter().map(AgentState::message).collect();
    inbox.sort_by_key(|m| m.sender_id);
    if let Some(out) = trace {
        for message in &inbox {
            serde_json::to_writer(&mut *out, &TraceLine { round, message })
                .map_err(std::io::Error::from)
                .and_then(|_| out.write_all(b"\n"))
                .map_err(|e| CbbaError::Trace(e.to_string()))?;
        }
    }

    let deliver = |agent: &mut AgentState| -> Result<(), CbbaError> {
        let id = agent.agent_id;
        for msg in inbox.iter().filter(|m| m.sender_id != id) {
            agent.resolve(msg, round)?;
        }
        Ok(())
    };
    if parallel {
        agents.par_iter_mut().try_for_each(deliver)?;
    } else {
        agents.iter_mut().try_for_each(deliver)?;
    }

    let mut any = false;
    for (agent, old) in agents.iter_mut().zip(&before) {
        agent.changed = agent.differs_from(old);
        any |= agent.changed;
    }
    Ok(any)
}

/// Outcome of one distributed allocation.
#[derive(Debug, Clone)]
pub struct CbbaRun {
    pub result: Result<Allocation, AllocationFailure>,
    pub stats: NetworkStats,
    /// Final agent states, for inspection.
    pub agents: Vec<AgentState>,
}

/// Allocates `app` over `caps` (one agent per capacity) by running rounds
/// until convergence or the round cap.
pub fn allocate_cbba(
    app: &Application,
    caps: &[Capacity],
    w: &Weights,
    nb: &NormBounds,
    config: &CbbaConfig,
) -> Result<CbbaRun, CbbaError> {
    allocate_cbba_traced(app, caps, w, nb, config, None)
}

/// As [`allocate_cbba`], writing every broadcast message to `trace` as one
/// JSON line (`{"round": r, "sender_id": ..., "y": ..., ...}`).
pub fn allocate_cbba_traced(
    app: &Application,
    caps: &[Capacity],
    w: &Weights,
    nb: &NormBounds,
    config: &CbbaConfig,
    mut trace: Option<&mut dyn Write>,
) -> Result<CbbaRun, CbbaError> {
    let mut agents: Vec<AgentState> = caps.iter().map(|c| AgentState::new(c, app, w, nb)).collect();
    let n = agents.len() as u64;
    let cap = config.round_cap(app.microservices.len(), agents.len());
    let mut stats = NetworkStats::default();

    while stats.rounds < cap {
        stats.rounds += 1;
        let changed = run_round_traced(&mut agents, stats.rounds, config.parallel, trace.as_deref_mut())?;
        stats.messages_sent += n * n.saturating_sub(1);
        if changed {
            stats.settled_round = stats.rounds;
        }
        if cbba::converged(&agents) {
            stats.converged = true;
            break;
        }
    }

    let result = if stats.converged {
        cbba::extract_allocation(&agents, app, w, nb)?
    } else {
        Err(AllocationFailure::ConvergenceTimeout { max_rounds: cap })
    };
    Ok(CbbaRun { result, stats, agents })
}
