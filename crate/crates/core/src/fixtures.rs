//! Small hand-built instances used by examples, tests and the CLI demos.

use std::collections::BTreeSet;

use crate::choice::dynamic::DynamicReservesSchool;
use crate::choice::scheme::CapacityTransferScheme;
use crate::instance::ProblemInstance;
use crate::model::{
    Contract, ContractId, Market, NamedContract, PreferenceOrder, PriorityOrder, SchoolId, StudentId, TypeId,
    TypeProfile,
};

/// Builds a market from names. Panics on unknown names; meant for literals.
///
/// `students` pairs each student with the types they can claim, `contracts`
/// lists `(name, student, school, type)` and `prefs` gives rankings by
/// contract name (students left out rank nothing).
pub fn build_market(
    types: &[&str],
    students: &[(&str, &[&str])],
    schools: &[&str],
    contracts: &[(&str, &str, &str, &str)],
    prefs: &[(&str, &[&str])],
) -> Market {
    let pos = |list: &[&str], name: &str| {
        list.iter()
            .position(|n| *n == name)
            .unwrap_or_else(|| panic!("unknown name `{name}`"))
    };
    let student_names: Vec<&str> = students.iter().map(|(n, _)| *n).collect();
    let claims = students
        .iter()
        .map(|(_, ts)| ts.iter().map(|t| TypeId::from(pos(types, t))).collect::<BTreeSet<_>>())
        .collect();
    let contracts: Vec<NamedContract> = contracts
        .iter()
        .map(|(name, st, sc, t)| NamedContract {
            name: name.to_string(),
            contract: Contract {
                student: StudentId::from(pos(&student_names, st)),
                school: SchoolId::from(pos(schools, sc)),
                privilege: TypeId::from(pos(types, t)),
            },
        })
        .collect();
    let contract_names: Vec<&str> = contracts.iter().map(|c| c.name.as_str()).collect();
    let mut preferences: Vec<PreferenceOrder> = (0..students.len())
        .map(|i| PreferenceOrder::new(StudentId::from(i), Vec::new()))
        .collect();
    for (st, ranking) in prefs {
        let i = pos(&student_names, st);
        preferences[i].ranked = ranking.iter().map(|c| ContractId::from(pos(&contract_names, c))).collect();
    }
    Market {
        types: types.iter().map(|s| s.to_string()).collect(),
        students: student_names.iter().map(|s| s.to_string()).collect(),
        schools: schools.iter().map(|s| s.to_string()).collect(),
        profile: TypeProfile {
            num_types: types.len(),
            claims,
        },
        contracts,
        preferences,
    }
}

fn ex1_with_prefs(prefs: &[(&str, &[&str])]) -> ProblemInstance {
    let market = build_market(
        &["t1", "t2", "t3"],
        &[("i", &["t1"]), ("j", &["t2"]), ("k", &["t2", "t3"]), ("l", &["t1", "t3"])],
        &["s"],
        &[
            ("x1", "i", "s", "t1"),
            ("y2", "j", "s", "t2"),
            ("z2", "k", "s", "t2"),
            ("z3", "k", "s", "t3"),
            ("w1", "l", "s", "t1"),
            ("w3", "l", "s", "t3"),
        ],
        prefs,
    );
    let school = DynamicReservesSchool {
        capacity: 2,
        priority: PriorityOrder::new(SchoolId(0), (0..4).map(StudentId).collect()),
        precedence: vec![TypeId(0), TypeId(1), TypeId(2)],
        targets: vec![1, 1, 0],
        scheme: CapacityTransferScheme::ForwardSum {
            donors: vec![vec![], vec![], vec![0, 1]],
        },
    };
    ProblemInstance {
        market,
        schools: vec![school],
    }
}

/// One school with two seats, one reserved for `t1` and one for `t2`; the
/// `t3` group runs last and receives every seat the first two leave empty.
pub fn ex1() -> ProblemInstance {
    ex1_with_prefs(&[("i", &["x1"]), ("j", &["y2"]), ("k", &["z2", "z3"]), ("l", &["w1", "w3"])])
}

/// [`ex1`] with thin demand: nobody applies under `t1`, so the rigid school
/// leaves a seat empty that the flexible one hands to `k`.
pub fn ex1_low_demand() -> ProblemInstance {
    ex1_with_prefs(&[("j", &["y2"]), ("k", &["z3", "z2"])])
}

/// Three students with three contracts each at one school, ranked in id
/// order; contract `3i + k` is student `i`'s `k`-th choice.
pub fn three_student_market() -> Market {
    build_market(
        &["t"],
        &[("a", &["t"]), ("b", &["t"]), ("c", &["t"])],
        &["s0", "s1", "s2"],
        &[
            ("a0", "a", "s0", "t"),
            ("a1", "a", "s1", "t"),
            ("a2", "a", "s2", "t"),
            ("b0", "b", "s0", "t"),
            ("b1", "b", "s1", "t"),
            ("b2", "b", "s2", "t"),
            ("c0", "c", "s0", "t"),
            ("c1", "c", "s1", "t"),
            ("c2", "c", "s2", "t"),
        ],
        &[("a", &["a0", "a1", "a2"]), ("b", &["b0", "b1", "b2"]), ("c", &["c0", "c1", "c2"])],
    )
}
