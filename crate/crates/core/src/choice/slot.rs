//! Slot-specific priorities: each seat has its own ranking over contracts,
//! seats fill in a fixed order. Any such school can be rewritten as a
//! dynamic reserves school over one artificial type per contract.

use std::collections::BTreeSet;

use crate::choice::dynamic::DynamicReservesSchool;
use crate::choice::scheme::CapacityTransferScheme;
use crate::error::{Error, Result};
use crate::instance::{ProblemInstance, SlotSpecificInstance};
use crate::model::{
    ContractId, ContractSet, Market, NamedContract, PriorityOrder, SchoolId, StudentId, TypeId, TypeProfile,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotSpecificSchool {
    pub school: SchoolId,
    /// Seats in the order they are filled; each lists its acceptable
    /// contracts, best first.
    pub slots: Vec<Vec<ContractId>>,
}

/// Fills seats in order; each seat takes its best offer from a student not
/// already seated.
pub fn slot_specific_choice(offers: &ContractSet, school: &SlotSpecificSchool, market: &Market) -> ContractSet {
    let mut seated = BTreeSet::new();
    let mut out = ContractSet::new();
    for slot in &school.slots {
        let pick = slot.iter().copied().find(|c| {
            let x = market.contract(*c);
            offers.contains(c) && x.school == school.school && !seated.contains(&x.student)
        });
        if let Some(c) = pick {
            seated.insert(market.contract(c).student);
            out.insert(c);
        }
    }
    out
}

/// Artificial type carried by contract `c` after conversion.
pub fn artificial_type(c: ContractId) -> TypeId {
    TypeId(c.0)
}

/// The same market with one privilege type per contract; every student can
/// claim exactly the types of their own contracts.
pub fn artificial_market(market: &Market) -> Result<Market> {
    let mut claims = vec![BTreeSet::new(); market.num_students()];
    let mut contracts = Vec::with_capacity(market.num_contracts());
    for (i, nc) in market.contracts.iter().enumerate() {
        let tau = artificial_type(ContractId::from(i));
        claims[nc.contract.student.index()].insert(tau);
        let mut contract = nc.contract;
        contract.privilege = tau;
        contracts.push(NamedContract {
            name: nc.name.clone(),
            contract,
        });
    }
    if let Some(i) = claims.iter().position(BTreeSet::is_empty) {
        return Err(Error::invalid(format!(
            "student `{}` has no contracts, so no artificial type can be assigned",
            market.students[i]
        )));
    }
    Ok(Market {
        types: market.contracts.iter().map(|nc| format!("tau:{}", nc.name)).collect(),
        students: market.students.clone(),
        schools: market.schools.clone(),
        profile: TypeProfile {
            num_types: market.num_contracts(),
            claims,
        },
        contracts,
        preferences: market.preferences.clone(),
    })
}

/// Dynamic reserves rendering of a slot-specific school, over the types of
/// [`artificial_market`].
///
/// Each seat becomes a run of single-contract groups, one per contract on
/// its ranking: the first group holds the seat, each later one inherits
/// whatever the previous group left empty. Types not used by any run get a
/// trailing zero-capacity group so the precedence covers every type.
pub fn convert_slot_specific(school: &SlotSpecificSchool, market: &Market) -> DynamicReservesSchool {
    let mut precedence = Vec::new();
    let mut targets = Vec::new();
    let mut donors: Vec<Vec<usize>> = Vec::new();
    for slot in &school.slots {
        for (pos, &c) in slot.iter().enumerate() {
            precedence.push(artificial_type(c));
            if pos == 0 {
                targets.push(1);
                donors.push(Vec::new());
            } else {
                targets.push(0);
                donors.push(vec![donors.len() - 1]);
            }
        }
    }
    let used: BTreeSet<TypeId> = precedence.iter().copied().collect();
    for c in market.contract_ids() {
        let tau = artificial_type(c);
        if !used.contains(&tau) {
            precedence.push(tau);
            targets.push(0);
            donors.push(Vec::new());
        }
    }
    let owners: BTreeSet<StudentId> = market
        .contracts_of_school(school.school)
        .iter()
        .map(|&c| market.contract(c).student)
        .collect();
    DynamicReservesSchool {
        capacity: targets.iter().sum(),
        priority: PriorityOrder::new(school.school, owners.into_iter().collect()),
        precedence,
        targets,
        scheme: CapacityTransferScheme::ForwardSum { donors },
    }
}

/// Converts every school of a slot-specific instance.
pub fn convert_instance(instance: &SlotSpecificInstance) -> Result<ProblemInstance> {
    let market = artificial_market(&instance.market)?;
    let schools = instance
        .schools
        .iter()
        .map(|s| convert_slot_specific(s, &instance.market))
        .collect();
    Ok(ProblemInstance { market, schools })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::choice::dynamic::dynamic_reserves_choice;
    use crate::model::{Contract, PreferenceOrder};

    /// One school, one student per contract.
    fn market(n: usize) -> Market {
        Market {
            types: vec!["t".into()],
            students: (0..n).map(|i| format!("s{i}")).collect(),
            schools: vec!["a".into()],
            profile: TypeProfile {
                num_types: 1,
                claims: vec![BTreeSet::from([TypeId(0)]); n],
            },
            contracts: (0..n)
                .map(|i| NamedContract {
                    name: format!("c{i}"),
                    contract: Contract {
                        student: StudentId::from(i),
                        school: SchoolId(0),
                        privilege: TypeId(0),
                    },
                })
                .collect(),
            preferences: (0..n)
                .map(|i| PreferenceOrder::new(StudentId::from(i), vec![ContractId::from(i)]))
                .collect(),
        }
    }

    fn agree_everywhere(school: &SlotSpecificSchool, m: &Market) {
        let am = artificial_market(m).unwrap();
        let conv = convert_slot_specific(school, m);
        let n = m.num_contracts();
        for mask in 0u32..(1 << n) {
            let offers: ContractSet = (0..n).filter(|b| mask >> b & 1 == 1).map(ContractId::from).collect();
            assert_eq!(
                slot_specific_choice(&offers, school, m),
                dynamic_reserves_choice(&offers, &conv, &am).chosen,
                "offers {offers:?}"
            );
        }
    }

    #[test]
    fn single_seat_takes_best_available() {
        let m = market(2);
        let school = SlotSpecificSchool {
            school: SchoolId(0),
            slots: vec![vec![ContractId(0), ContractId(1)]],
        };
        let got = slot_specific_choice(&ContractSet::from([ContractId(1)]), &school, &m);
        assert_eq!(got, ContractSet::from([ContractId(1)]));
        assert!(slot_specific_choice(&ContractSet::new(), &school, &m).is_empty());
    }

    #[test]
    fn student_is_seated_once() {
        let mut m = market(2);
        m.contracts[1].contract.student = StudentId(0);
        m.contracts[1].contract.privilege = TypeId(0);
        let school = SlotSpecificSchool {
            school: SchoolId(0),
            slots: vec![vec![ContractId(0), ContractId(1)]; 2],
        };
        let all = ContractSet::from([ContractId(0), ContractId(1)]);
        assert_eq!(slot_specific_choice(&all, &school, &m).len(), 1);
    }

    #[test]
    fn one_contract_seat_converts_to_one_group() {
        let m = market(1);
        let school = SlotSpecificSchool {
            school: SchoolId(0),
            slots: vec![vec![ContractId(0)]],
        };
        let conv = convert_slot_specific(&school, &m);
        assert_eq!(conv.precedence, [TypeId(0)]);
        assert_eq!(conv.targets, [1]);
        agree_everywhere(&school, &m);
    }

    #[test]
    fn vacancy_passes_down_the_run() {
        let m = market(2);
        let school = SlotSpecificSchool {
            school: SchoolId(0),
            slots: vec![vec![ContractId(0), ContractId(1)]],
        };
        let conv = convert_slot_specific(&school, &m);
        assert_eq!(conv.targets, [1, 0]);
        let am = artificial_market(&m).unwrap();
        let trace = dynamic_reserves_choice(&ContractSet::from([ContractId(1)]), &conv, &am);
        assert_eq!(trace.residuals(), [1, 0]);
        assert_eq!(trace.chosen, ContractSet::from([ContractId(1)]));
        agree_everywhere(&school, &m);
    }

    #[test]
    fn converted_instance_validates() {
        let m = market(3);
        let inst = SlotSpecificInstance {
            market: m,
            schools: vec![SlotSpecificSchool {
                school: SchoolId(0),
                slots: vec![vec![ContractId(2), ContractId(0)], vec![ContractId(1)]],
            }],
        };
        let conv = convert_instance(&inst).unwrap();
        assert!(crate::instance::validate_instance(&conv).is_empty());
        agree_everywhere(&inst.schools[0], &inst.market);
    }
}
