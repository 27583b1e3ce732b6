//! Dynamic reserves choice: slot groups run in precedence order, each as a
//! responsive choice over one privilege type, with capacities fed by the
//! vacancies of earlier groups.

use serde::Serialize;

use crate::choice::scheme::CapacityTransferScheme;
use crate::model::{ContractId, ContractSet, DerivedTypePriority, Market, PriorityOrder, SchoolId, TypeId};

/// Everything a school needs to run its choice function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DynamicReservesSchool {
    pub capacity: u32,
    pub priority: PriorityOrder,
    /// Privilege type served by each group, in the order groups run.
    pub precedence: Vec<TypeId>,
    /// Initial capacity of each group.
    pub targets: Vec<u32>,
    pub scheme: CapacityTransferScheme,
}

impl DynamicReservesSchool {
    pub fn school(&self) -> SchoolId {
        self.priority.school
    }

    pub fn groups(&self) -> usize {
        self.precedence.len()
    }

    /// Per-type target: sum of the initial capacities of the groups serving
    /// `privilege`.
    pub fn type_target(&self, privilege: TypeId) -> u32 {
        self.precedence
            .iter()
            .zip(&self.targets)
            .filter(|(t, _)| **t == privilege)
            .map(|(_, q)| q)
            .sum()
    }

    /// The same school with every transfer switched off.
    pub fn rigid(&self) -> DynamicReservesSchool {
        DynamicReservesSchool {
            scheme: CapacityTransferScheme::rigid(self.groups()),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroupTrace {
    pub privilege: TypeId,
    /// Contracts still on the table when the group runs.
    pub available: ContractSet,
    pub capacity: u32,
    pub chosen: ContractSet,
    pub residual: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChoiceTrace {
    pub groups: Vec<GroupTrace>,
    pub chosen: ContractSet,
}

impl ChoiceTrace {
    pub fn residuals(&self) -> Vec<u32> {
        self.groups.iter().map(|g| g.residual).collect()
    }

    pub fn capacities(&self) -> Vec<u32> {
        self.groups.iter().map(|g| g.capacity).collect()
    }
}

/// Responsive choice for one group: the top `capacity` offers naming
/// `ranking.privilege` at `ranking.school`, ordered by the ranking.
pub fn sub_choice(
    offers: &ContractSet,
    capacity: u32,
    ranking: &DerivedTypePriority,
    market: &Market,
) -> ContractSet {
    let mut out = ContractSet::new();
    if capacity == 0 {
        return out;
    }
    for &student in &ranking.ranked {
        for &c in offers {
            let x = market.contract(c);
            if x.student == student && x.school == ranking.school && x.privilege == ranking.privilege {
                out.insert(c);
                if out.len() == capacity as usize {
                    return out;
                }
            }
        }
    }
    out
}

fn run(
    offers: &ContractSet,
    school: &DynamicReservesSchool,
    market: &Market,
    complete: bool,
) -> ChoiceTrace {
    let sid = school.school();
    let mut available: ContractSet = offers
        .iter()
        .copied()
        .filter(|&c| market.contract(c).school == sid)
        .collect();
    let mut groups = Vec::with_capacity(school.groups());
    let mut residuals = Vec::with_capacity(school.groups());
    let mut chosen_all = ContractSet::new();
    for (k, &privilege) in school.precedence.iter().enumerate() {
        let capacity = school.scheme.capacity(&school.targets, k, &residuals);
        let ranking = crate::model::derive_type_priority(&school.priority, privilege, &market.profile)
            .expect("precedence types are validated");
        let chosen = sub_choice(&available, capacity, &ranking, market);
        let residual = capacity - chosen.len() as u32;
        let before = available.clone();
        if complete {
            available.retain(|c| !chosen.contains(c));
        } else {
            available.retain(|&c| {
                let owner = market.contract(c).student;
                !chosen.iter().any(|&y| market.contract(y).student == owner)
            });
        }
        chosen_all.extend(chosen.iter().copied());
        residuals.push(residual);
        groups.push(GroupTrace {
            privilege,
            available: before,
            capacity,
            chosen,
            residual,
        });
    }
    ChoiceTrace {
        groups,
        chosen: chosen_all,
    }
}

/// The school's overall choice from `offers`, with its group-by-group trace.
/// Once a student is picked, all of their contracts leave the table.
pub fn dynamic_reserves_choice(
    offers: &ContractSet,
    school: &DynamicReservesSchool,
    market: &Market,
) -> ChoiceTrace {
    run(offers, school, market, false)
}

/// Like [`dynamic_reserves_choice`], but only the chosen contracts leave the
/// table, so a student may be picked more than once.
pub fn completion_choice(
    offers: &ContractSet,
    school: &DynamicReservesSchool,
    market: &Market,
) -> ChoiceTrace {
    run(offers, school, market, true)
}

/// Precomputed per-school ranking used by the cumulative offer loops, where
/// the same school is asked to choose thousands of times.
#[derive(Debug, Clone)]
pub(crate) struct FastChooser {
    rank: Vec<Option<u32>>,
}

impl FastChooser {
    pub(crate) fn new(school: &DynamicReservesSchool, market: &Market) -> Self {
        FastChooser {
            rank: school.priority.rank_table(market.num_students()),
        }
    }

    /// Same result as [`dynamic_reserves_choice`] without building a trace.
    pub(crate) fn choose(
        &self,
        offers: &ContractSet,
        school: &DynamicReservesSchool,
        market: &Market,
    ) -> ContractSet {
        let sid = school.school();
        let mut pool: Vec<(u32, ContractId)> = offers
            .iter()
            .filter_map(|&c| {
                let x = market.contract(c);
                if x.school != sid {
                    return None;
                }
                self.rank[x.student.index()].map(|r| (r, c))
            })
            .collect();
        pool.sort_unstable();
        let mut live = vec![true; pool.len()];
        let mut residuals = Vec::with_capacity(school.groups());
        let mut out = ContractSet::new();
        for (k, &privilege) in school.precedence.iter().enumerate() {
            let capacity = school.scheme.capacity(&school.targets, k, &residuals);
            let mut taken = 0u32;
            let mut idx = 0;
            while taken < capacity && idx < pool.len() {
                if live[idx] && market.contract(pool[idx].1).privilege == privilege {
                    let (rank, c) = pool[idx];
                    out.insert(c);
                    taken += 1;
                    for (j, &(r, _)) in pool.iter().enumerate() {
                        if r == rank {
                            live[j] = false;
                        }
                    }
                }
                idx += 1;
            }
            residuals.push(capacity - taken);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::ex1;
    use crate::model::derive_type_priority;

    fn names(market: &Market, set: &ContractSet) -> Vec<String> {
        let mut v: Vec<String> = market.names(set).into_iter().map(String::from).collect();
        v.sort();
        v
    }

    #[test]
    fn sub_choice_examples() {
        let inst = ex1();
        let m = &inst.market;
        let s = &inst.schools[0];
        let t = |n| m.find_type(n).unwrap();
        let r1 = derive_type_priority(&s.priority, t("t1"), &m.profile).unwrap();
        let offers = m.contract_set(&["x1", "w1"]).unwrap();
        assert_eq!(names(m, &sub_choice(&offers, 1, &r1, m)), ["x1"]);
        assert!(sub_choice(&offers, 0, &r1, m).is_empty());
        let r3 = derive_type_priority(&s.priority, t("t3"), &m.profile).unwrap();
        let offers = m.contract_set(&["z3", "w3"]).unwrap();
        assert_eq!(names(m, &sub_choice(&offers, 2, &r3, m)), ["w3", "z3"]);
    }

    #[test]
    fn example_table_rows() {
        let inst = ex1();
        let m = &inst.market;
        let rows: [(&[&str], &[&str]); 7] = [
            (&["x1", "y2", "z2", "z3", "w1", "w3"], &["x1", "y2"]),
            (&["y2", "z2", "z3"], &["y2", "z3"]),
            (&["x1", "z2", "z3"], &["x1", "z2"]),
            (&["y2", "w1", "w3"], &["w1", "y2"]),
            (&["x1", "w1", "w3"], &["w3", "x1"]),
            (&["z2", "z3"], &["z2"]),
            (&["w1", "w3"], &["w1"]),
        ];
        for (offers, expected) in rows {
            let offers = m.contract_set(offers).unwrap();
            let trace = dynamic_reserves_choice(&offers, &inst.schools[0], m);
            assert_eq!(names(m, &trace.chosen), expected);
        }
    }

    #[test]
    fn empty_offers_trace() {
        let inst = ex1();
        let trace = dynamic_reserves_choice(&ContractSet::new(), &inst.schools[0], &inst.market);
        assert!(trace.chosen.is_empty());
        assert_eq!(trace.residuals(), [1, 1, 2]);
        assert_eq!(trace.capacities(), [1, 1, 2]);
    }

    #[test]
    fn completion_keeps_other_contracts() {
        let inst = ex1();
        let m = &inst.market;
        let offers = m.contract_set(&["z2", "z3"]).unwrap();
        let c = completion_choice(&offers, &inst.schools[0], m);
        assert_eq!(names(m, &c.chosen), ["z2", "z3"]);
        assert_eq!(c.residuals(), [1, 0, 0]);
        let offers = m.contract_set(&["x1", "y2"]).unwrap();
        assert_eq!(
            completion_choice(&offers, &inst.schools[0], m).chosen,
            dynamic_reserves_choice(&offers, &inst.schools[0], m).chosen
        );
    }

    #[test]
    fn fast_path_matches_traced_choice_on_every_subset() {
        let inst = ex1();
        let m = &inst.market;
        let s = &inst.schools[0];
        let fast = FastChooser::new(s, m);
        let all: Vec<ContractId> = m.contract_ids().collect();
        for mask in 0u32..(1 << all.len()) {
            let offers: ContractSet = (0..all.len()).filter(|b| mask >> b & 1 == 1).map(|b| all[b]).collect();
            assert_eq!(fast.choose(&offers, s, m), dynamic_reserves_choice(&offers, s, m).chosen);
        }
    }

    #[test]
    fn trace_invariants_hold_on_every_subset() {
        let inst = ex1();
        let m = &inst.market;
        let s = &inst.schools[0];
        let all: Vec<ContractId> = m.contract_ids().collect();
        for mask in 0u32..(1 << all.len()) {
            let offers: ContractSet = (0..all.len()).filter(|b| mask >> b & 1 == 1).map(|b| all[b]).collect();
            let trace = dynamic_reserves_choice(&offers, s, m);
            let mut union = ContractSet::new();
            for g in &trace.groups {
                assert_eq!(g.residual + g.chosen.len() as u32, g.capacity);
                assert!(g.chosen.iter().all(|&c| m.contract(c).privilege == g.privilege));
                union.extend(g.chosen.iter().copied());
            }
            assert_eq!(union, trace.chosen);
            assert!(trace.chosen.is_subset(&offers));
            assert!(crate::model::Allocation::new(trace.chosen.clone()).overloaded_students(m).is_empty());
        }
    }
}
