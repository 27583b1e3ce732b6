//! Domain types shared by every other module: contracts, type profiles,
//! student preferences, school priorities and allocations.
//!
//! Identifiers are dense indices into the owning [`Market`]; names only
//! matter at the file boundary.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

macro_rules! dense_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub struct $name(pub u32);

        impl $name {
            #[inline]
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl From<usize> for $name {
            fn from(i: usize) -> Self {
                $name(i as u32)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

dense_id!(StudentId);
dense_id!(SchoolId);
dense_id!(
    /// A privilege type (reservation category).
    TypeId
);
dense_id!(ContractId);

/// Sets of contracts are kept ordered so that every traversal, report and
/// counterexample is deterministic.
pub type ContractSet = BTreeSet<ContractId>;

/// A (student, school, privilege) triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Contract {
    pub student: StudentId,
    pub school: SchoolId,
    pub privilege: TypeId,
}

/// The privileges each student can claim.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeProfile {
    pub num_types: usize,
    pub claims: Vec<BTreeSet<TypeId>>,
}

impl TypeProfile {
    pub fn claims(&self, student: StudentId) -> &BTreeSet<TypeId> {
        &self.claims[student.index()]
    }

    pub fn can_claim(&self, student: StudentId, privilege: TypeId) -> bool {
        self.claims[student.index()].contains(&privilege)
    }
}

/// A student's ranked list of acceptable contracts, best first. Anything not
/// listed sits below the outside option.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreferenceOrder {
    pub student: StudentId,
    pub ranked: Vec<ContractId>,
}

impl PreferenceOrder {
    pub fn new(student: StudentId, ranked: Vec<ContractId>) -> Self {
        PreferenceOrder { student, ranked }
    }

    pub fn rank(&self, contract: ContractId) -> Option<usize> {
        self.ranked.iter().position(|&c| c == contract)
    }

    pub fn is_acceptable(&self, contract: ContractId) -> bool {
        self.rank(contract).is_some()
    }

    /// Strict preference between two outcomes (`None` is the outside option).
    /// Two distinct unacceptable contracts are not ordered against each other.
    pub fn prefers(&self, a: Option<ContractId>, b: Option<ContractId>) -> bool {
        if a == b {
            return false;
        }
        let key = |x: Option<ContractId>| match x {
            None => Some(self.ranked.len()),
            Some(c) => self.rank(c),
        };
        match (key(a), key(b)) {
            (Some(ka), Some(kb)) => ka < kb,
            (Some(_), None) => true,
            _ => false,
        }
    }

    pub fn weakly_prefers(&self, a: Option<ContractId>, b: Option<ContractId>) -> bool {
        a == b || self.prefers(a, b)
    }
}

/// A school's ranked list of acceptable students, best first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PriorityOrder {
    pub school: SchoolId,
    pub ranked: Vec<StudentId>,
}

impl PriorityOrder {
    pub fn new(school: SchoolId, ranked: Vec<StudentId>) -> Self {
        PriorityOrder { school, ranked }
    }

    pub fn rank(&self, student: StudentId) -> Option<usize> {
        self.ranked.iter().position(|&s| s == student)
    }

    /// Strict priority between two students, `None` standing for the empty
    /// seat. Unacceptable students are all tied below it.
    pub fn prefers(&self, a: Option<StudentId>, b: Option<StudentId>) -> bool {
        if a == b {
            return false;
        }
        let key = |x: Option<StudentId>| match x {
            None => Some(self.ranked.len()),
            Some(s) => self.rank(s),
        };
        match (key(a), key(b)) {
            (Some(ka), Some(kb)) => ka < kb,
            (Some(_), None) => true,
            _ => false,
        }
    }

    /// Rank lookup table indexed by student, for hot loops.
    pub fn rank_table(&self, num_students: usize) -> Vec<Option<u32>> {
        let mut table = vec![None; num_students];
        for (pos, s) in self.ranked.iter().enumerate() {
            if let Some(slot) = table.get_mut(s.index()) {
                *slot = Some(pos as u32);
            }
        }
        table
    }
}

/// The priority ranking a school uses for one privilege type. Always derived
/// from a [`PriorityOrder`], never written by hand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DerivedTypePriority {
    pub school: SchoolId,
    pub privilege: TypeId,
    pub ranked: Vec<StudentId>,
}

/// Restricts `priority` to the acceptable students who can claim `privilege`,
/// preserving their relative order.
pub fn derive_type_priority(
    priority: &PriorityOrder,
    privilege: TypeId,
    profile: &TypeProfile,
) -> Result<DerivedTypePriority> {
    if privilege.index() >= profile.num_types {
        return Err(Error::invalid(format!("unknown privilege type {privilege}")));
    }
    let ranked = priority
        .ranked
        .iter()
        .copied()
        .filter(|&s| {
            profile
                .claims
                .get(s.index())
                .is_some_and(|claims| claims.contains(&privilege))
        })
        .collect();
    Ok(DerivedTypePriority {
        school: priority.school,
        privilege,
        ranked,
    })
}

/// The student's pick from a set of offers: their most preferred acceptable
/// contract, or `None` for the outside option.
pub fn student_choice(offers: &ContractSet, pref: &PreferenceOrder) -> Option<ContractId> {
    pref.ranked.iter().copied().find(|c| offers.contains(c))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NamedContract {
    pub name: String,
    pub contract: Contract,
}

/// Everything about a problem except the schools' choice rules: the type
/// space, students and their claims, the contract set and preferences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Market {
    pub types: Vec<String>,
    pub students: Vec<String>,
    pub schools: Vec<String>,
    pub profile: TypeProfile,
    pub contracts: Vec<NamedContract>,
    pub preferences: Vec<PreferenceOrder>,
}

impl Market {
    pub fn num_students(&self) -> usize {
        self.students.len()
    }

    pub fn num_schools(&self) -> usize {
        self.schools.len()
    }

    pub fn num_contracts(&self) -> usize {
        self.contracts.len()
    }

    #[inline]
    pub fn contract(&self, id: ContractId) -> &Contract {
        &self.contracts[id.index()].contract
    }

    pub fn contract_name(&self, id: ContractId) -> &str {
        &self.contracts[id.index()].name
    }

    pub fn contract_ids(&self) -> impl Iterator<Item = ContractId> + '_ {
        (0..self.contracts.len()).map(ContractId::from)
    }

    pub fn all_contracts(&self) -> ContractSet {
        self.contract_ids().collect()
    }

    pub fn contracts_of_school(&self, school: SchoolId) -> ContractSet {
        self.contract_ids()
            .filter(|&c| self.contract(c).school == school)
            .collect()
    }

    pub fn contracts_of_student(&self, student: StudentId) -> ContractSet {
        self.contract_ids()
            .filter(|&c| self.contract(c).student == student)
            .collect()
    }

    pub fn find_contract(&self, name: &str) -> Option<ContractId> {
        self.contracts
            .iter()
            .position(|c| c.name == name)
            .map(ContractId::from)
    }

    pub fn find_student(&self, name: &str) -> Option<StudentId> {
        self.students.iter().position(|s| s == name).map(StudentId::from)
    }

    pub fn find_school(&self, name: &str) -> Option<SchoolId> {
        self.schools.iter().position(|s| s == name).map(SchoolId::from)
    }

    pub fn find_type(&self, name: &str) -> Option<TypeId> {
        self.types.iter().position(|s| s == name).map(TypeId::from)
    }

    pub fn names<'a>(&'a self, set: &'a ContractSet) -> Vec<&'a str> {
        set.iter().map(|&c| self.contract_name(c)).collect()
    }

    /// Resolves contract names into a set, failing on the first unknown name.
    pub fn contract_set<S: AsRef<str>>(&self, names: &[S]) -> Result<ContractSet> {
        names
            .iter()
            .map(|n| {
                self.find_contract(n.as_ref())
                    .ok_or_else(|| Error::invalid(format!("unknown contract `{}`", n.as_ref())))
            })
            .collect()
    }
}

/// A set of contracts with at most one per student.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct Allocation {
    pub contracts: ContractSet,
}

impl Allocation {
    pub fn new(contracts: ContractSet) -> Self {
        Allocation { contracts }
    }

    pub fn empty() -> Self {
        Allocation::default()
    }

    pub fn assignment(&self, market: &Market, student: StudentId) -> Option<ContractId> {
        self.contracts
            .iter()
            .copied()
            .find(|&c| market.contract(c).student == student)
    }

    /// Per-student assignment vector; later contracts win if the set holds
    /// more than one for a student (callers check that separately).
    pub fn assignments(&self, market: &Market) -> Vec<Option<ContractId>> {
        let mut out = vec![None; market.num_students()];
        for &c in &self.contracts {
            out[market.contract(c).student.index()] = Some(c);
        }
        out
    }

    /// Students holding more than one contract.
    pub fn overloaded_students(&self, market: &Market) -> Vec<StudentId> {
        let mut seen = vec![0usize; market.num_students()];
        for &c in &self.contracts {
            seen[market.contract(c).student.index()] += 1;
        }
        seen.iter()
            .enumerate()
            .filter(|(_, &n)| n > 1)
            .map(|(i, _)| StudentId::from(i))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.contracts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contracts.is_empty()
    }
}

/// `y` Pareto dominates `z`: every student weakly prefers `y` and at least one
/// strictly.
pub fn pareto_dominates(
    y: &Allocation,
    z: &Allocation,
    market: &Market,
    prefs: &[PreferenceOrder],
) -> bool {
    let ya = y.assignments(market);
    let za = z.assignments(market);
    let mut strict = false;
    for (i, pref) in prefs.iter().enumerate() {
        if !pref.weakly_prefers(ya[i], za[i]) {
            return false;
        }
        strict |= pref.prefers(ya[i], za[i]);
    }
    strict
}

/// `y` weakly Pareto dominates `z` (dominates or gives everyone the same).
pub fn weakly_pareto_dominates(
    y: &Allocation,
    z: &Allocation,
    market: &Market,
    prefs: &[PreferenceOrder],
) -> bool {
    let ya = y.assignments(market);
    let za = z.assignments(market);
    prefs
        .iter()
        .enumerate()
        .all(|(i, pref)| pref.weakly_prefers(ya[i], za[i]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::ex1;
    use proptest::prelude::*;

    fn sid(i: u32) -> StudentId {
        StudentId(i)
    }

    #[test]
    fn type_priority_for_t3_keeps_k_then_l() {
        let inst = ex1();
        let m = &inst.market;
        let t3 = m.find_type("t3").unwrap();
        let derived = derive_type_priority(&inst.schools[0].priority, t3, &m.profile).unwrap();
        let names: Vec<_> = derived.ranked.iter().map(|s| m.students[s.index()].as_str()).collect();
        assert_eq!(names, ["k", "l"]);
    }

    #[test]
    fn type_priority_for_unclaimed_type_is_empty() {
        let profile = TypeProfile {
            num_types: 2,
            claims: vec![BTreeSet::from([TypeId(0)]), BTreeSet::from([TypeId(0)])],
        };
        let pi = PriorityOrder::new(SchoolId(0), vec![sid(0), sid(1)]);
        let d = derive_type_priority(&pi, TypeId(1), &profile).unwrap();
        assert!(d.ranked.is_empty());
    }

    #[test]
    fn type_priority_drops_unacceptable_students() {
        // i: t1, j: t2, k: t2 (but unacceptable), so t2 -> [j]
        let profile = TypeProfile {
            num_types: 2,
            claims: vec![
                BTreeSet::from([TypeId(0)]),
                BTreeSet::from([TypeId(1)]),
                BTreeSet::from([TypeId(1)]),
            ],
        };
        let pi = PriorityOrder::new(SchoolId(0), vec![sid(0), sid(1)]);
        let d = derive_type_priority(&pi, TypeId(1), &profile).unwrap();
        assert_eq!(d.ranked, vec![sid(1)]);
    }

    #[test]
    fn type_priority_rejects_unknown_type() {
        let profile = TypeProfile {
            num_types: 1,
            claims: vec![BTreeSet::from([TypeId(0)])],
        };
        let pi = PriorityOrder::new(SchoolId(0), vec![sid(0)]);
        assert!(matches!(
            derive_type_priority(&pi, TypeId(3), &profile),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn student_choice_cases() {
        let inst = ex1();
        let m = &inst.market;
        let k = m.find_student("k").unwrap();
        let pref = &m.preferences[k.index()];
        assert_eq!(student_choice(&ContractSet::new(), pref), None);
        let offers = m.contract_set(&["z2", "z3"]).unwrap();
        assert_eq!(student_choice(&offers, pref), m.find_contract("z2"));
        let only_bad = m.contract_set(&["x1", "w3"]).unwrap();
        assert_eq!(student_choice(&only_bad, pref), None);
    }

    #[test]
    fn pareto_examples() {
        let inst = ex1();
        let m = &inst.market;
        let prefs = &m.preferences;
        let y = Allocation::new(m.contract_set(&["x1", "y2", "z2", "w1"]).unwrap());
        assert!(!pareto_dominates(&y, &y, m, prefs));
        let z = Allocation::new(m.contract_set(&["x1", "y2", "z2"]).unwrap());
        assert!(pareto_dominates(&y, &z, m, prefs));
        // k better, l worse
        let a = Allocation::new(m.contract_set(&["z2", "w3"]).unwrap());
        let b = Allocation::new(m.contract_set(&["z3", "w1"]).unwrap());
        assert!(!pareto_dominates(&a, &b, m, prefs));
        assert!(!pareto_dominates(&b, &a, m, prefs));
    }

    fn arb_priority() -> impl Strategy<Value = (Vec<u32>, usize, Vec<Vec<bool>>)> {
        (1usize..7).prop_flat_map(|n| {
            (
                Just((0..n as u32).collect::<Vec<_>>()).prop_shuffle(),
                0..=n,
                proptest::collection::vec(proptest::collection::vec(any::<bool>(), 3), n),
            )
        })
    }

    proptest! {
        #[test]
        fn derived_priority_is_order_preserving_subsequence((perm, cut, claims) in arb_priority(), t in 0u32..3) {
            let n = perm.len();
            let profile = TypeProfile {
                num_types: 3,
                claims: claims.iter().map(|row| row.iter().enumerate().filter(|(_, &b)| b).map(|(k, _)| TypeId(k as u32)).collect()).collect(),
            };
            let pi = PriorityOrder::new(SchoolId(0), perm[..cut].iter().map(|&s| StudentId(s)).collect());
            let d = derive_type_priority(&pi, TypeId(t), &profile).unwrap();
            // subsequence of the acceptable prefix
            let mut it = pi.ranked.iter();
            for s in &d.ranked {
                prop_assert!(it.any(|x| x == s));
            }
            // exactly the acceptable claimers
            for s in 0..n as u32 {
                let expected = pi.rank(StudentId(s)).is_some() && profile.can_claim(StudentId(s), TypeId(t));
                prop_assert_eq!(d.ranked.contains(&StudentId(s)), expected);
            }
        }

        #[test]
        fn student_choice_is_best_available(ranked in Just((0u32..6).collect::<Vec<_>>()).prop_shuffle(), cut in 0usize..=6, offer_bits in 0u32..64) {
            let pref = PreferenceOrder::new(StudentId(0), ranked[..cut].iter().map(|&c| ContractId(c)).collect());
            let offers: ContractSet = (0..6).filter(|b| offer_bits >> b & 1 == 1).map(ContractId).collect();
            let pick = student_choice(&offers, &pref);
            if let Some(c) = pick {
                prop_assert!(offers.contains(&c));
            }
            for &o in &offers {
                prop_assert!(!pref.prefers(Some(o), pick));
            }
        }

        #[test]
        fn pareto_is_irreflexive_and_transitive(a in proptest::collection::vec(0usize..4, 3), b in proptest::collection::vec(0usize..4, 3), c in proptest::collection::vec(0usize..4, 3)) {
            // three students, each with contracts 3i..3i+2 ranked in order; choice 3 = unmatched
            let market = crate::fixtures::three_student_market();
            let prefs = &market.preferences;
            let alloc = |v: &Vec<usize>| Allocation::new(v.iter().enumerate().filter(|(_, &k)| k < 3).map(|(i, &k)| ContractId((3 * i + k) as u32)).collect());
            let (x, y, z) = (alloc(&a), alloc(&b), alloc(&c));
            prop_assert!(!pareto_dominates(&x, &x, &market, prefs));
            if pareto_dominates(&x, &y, &market, prefs) && pareto_dominates(&y, &z, &market, prefs) {
                prop_assert!(pareto_dominates(&x, &z, &market, prefs));
            }
        }
    }
}
