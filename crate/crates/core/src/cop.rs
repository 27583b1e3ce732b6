//! The cumulative offer process, one proposal at a time in the order given
//! by a ranking of all contracts.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::SchoolChoices;
use crate::model::{Allocation, ContractId, ContractSet, Market, PreferenceOrder};

/// A strict order over every contract of the market. Among the contracts
/// students are able to propose, the earliest one in this order goes next.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProposalOrder {
    pub ranked: Vec<ContractId>,
}

impl ProposalOrder {
    /// Students by index, each walking down their own ranking; unranked
    /// contracts trail in id order.
    pub fn canonical(market: &Market, prefs: &[PreferenceOrder]) -> Self {
        let mut ranked: Vec<ContractId> = prefs.iter().flat_map(|p| p.ranked.iter().copied()).collect();
        let mut listed = vec![false; market.num_contracts()];
        for c in &ranked {
            listed[c.index()] = true;
        }
        ranked.extend(market.contract_ids().filter(|c| !listed[c.index()]));
        ProposalOrder { ranked }
    }

    pub fn shuffled(market: &Market, rng: &mut ChaCha8Rng) -> Self {
        let mut ranked: Vec<ContractId> = market.contract_ids().collect();
        ranked.shuffle(rng);
        ProposalOrder { ranked }
    }

    fn positions(&self, market: &Market) -> Result<Vec<u32>> {
        let n = market.num_contracts();
        let mut pos = vec![u32::MAX; n];
        if self.ranked.len() != n {
            return Err(Error::invalid(format!(
                "proposal order lists {} contracts, the market has {n}",
                self.ranked.len()
            )));
        }
        for (p, c) in self.ranked.iter().enumerate() {
            if c.index() >= n || pos[c.index()] != u32::MAX {
                return Err(Error::invalid("proposal order is not a permutation of the contracts"));
            }
            pos[c.index()] = p as u32;
        }
        Ok(pos)
    }
}

/// State after one proposal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CopStep {
    pub step: usize,
    /// Contracts students could propose before this step.
    pub proposable: ContractSet,
    pub proposal: ContractId,
    /// Every contract proposed so far.
    pub offered: ContractSet,
    /// What each school holds from its offers after the step.
    pub held: Vec<ContractSet>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CopOutcome {
    pub allocation: Allocation,
    /// Every contract proposed during the run.
    pub offered: ContractSet,
    pub proposals: usize,
    pub transcript: Vec<CopStep>,
}

fn run(
    inst: &impl SchoolChoices,
    prefs: &[PreferenceOrder],
    pos: &[u32],
    record: bool,
) -> CopOutcome {
    let m = inst.market();
    let ns = m.num_students();
    let mut next = vec![0usize; ns];
    let mut holder: Vec<Option<ContractId>> = vec![None; ns];
    let mut offered_at = vec![ContractSet::new(); m.num_schools()];
    let mut held = vec![ContractSet::new(); m.num_schools()];
    let mut offered = ContractSet::new();
    let mut transcript = Vec::new();
    let mut step = 0;
    loop {
        let proposable = prefs
            .iter()
            .enumerate()
            .filter(|(i, _)| holder[*i].is_none())
            .filter_map(|(i, p)| p.ranked.get(next[i]).copied());
        let pick = if record {
            let all: ContractSet = proposable.collect();
            all.iter().copied().min_by_key(|c| pos[c.index()]).map(|c| (c, all))
        } else {
            proposable.min_by_key(|c| pos[c.index()]).map(|c| (c, ContractSet::new()))
        };
        let Some((proposal, proposable)) = pick else { break };
        step += 1;
        let x = m.contract(proposal);
        next[x.student.index()] += 1;
        offered.insert(proposal);
        let s = x.school;
        offered_at[s.index()].insert(proposal);
        let chosen = inst.choose(s, &offered_at[s.index()]);
        for &c in &held[s.index()] {
            holder[m.contract(c).student.index()] = None;
        }
        for &c in &chosen {
            let st = m.contract(c).student.index();
            debug_assert!(holder[st].is_none(), "student held at two schools");
            holder[st] = Some(c);
        }
        held[s.index()] = chosen;
        if record {
            transcript.push(CopStep {
                step,
                proposable,
                proposal,
                offered: offered.clone(),
                held: held.clone(),
            });
        }
    }
    CopOutcome {
        allocation: Allocation::new(held.into_iter().flatten().collect()),
        offered,
        proposals: step,
        transcript,
    }
}

/// Runs the process under `order` with a full transcript.
pub fn run_cop(inst: &impl SchoolChoices, prefs: &[PreferenceOrder], order: &ProposalOrder) -> Result<CopOutcome> {
    let pos = order.positions(inst.market())?;
    Ok(run(inst, prefs, &pos, true))
}

/// Outcome under the canonical order, without a transcript.
pub fn run_cop_default(inst: &impl SchoolChoices, prefs: &[PreferenceOrder]) -> Allocation {
    cop_outcome(inst, prefs).allocation
}

/// Like [`run_cop_default`] but also returns the offered set.
pub fn cop_outcome(inst: &impl SchoolChoices, prefs: &[PreferenceOrder]) -> CopOutcome {
    let order = ProposalOrder::canonical(inst.market(), prefs);
    let pos = order.positions(inst.market()).expect("canonical order is a permutation");
    run(inst, prefs, &pos, false)
}

/// Two proposal orders that led to different outcomes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OrderDivergence {
    pub reference: Allocation,
    pub order: ProposalOrder,
    pub outcome: Allocation,
}

/// Runs the process under the canonical order and `trials` shuffled orders;
/// returns the first order whose outcome differs from the canonical one.
pub fn check_order_independence(
    inst: &impl SchoolChoices,
    prefs: &[PreferenceOrder],
    trials: usize,
    seed: u64,
) -> Result<Option<OrderDivergence>> {
    if trials < 2 {
        return Err(Error::invalid("order independence needs at least two trials"));
    }
    let m = inst.market();
    let reference = run_cop_default(inst, prefs);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let order = ProposalOrder::shuffled(m, &mut rng);
        let pos = order.positions(m)?;
        let outcome = run(inst, prefs, &pos, false).allocation;
        if outcome != reference {
            return Ok(Some(OrderDivergence {
                reference,
                order,
                outcome,
            }));
        }
    }
    Ok(None)
}
