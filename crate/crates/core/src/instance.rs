//! Complete problem instances and their validation.

use std::collections::{BTreeMap, BTreeSet};

use crate::choice::dynamic::{DynamicReservesSchool, FastChooser};
use crate::choice::scheme::{check_monotonic, CapacityTransferScheme, DEFAULT_MONOTONICITY_CAP};
use crate::choice::slot::{slot_specific_choice, SlotSpecificSchool};
use crate::error::{Error, Violation};
use crate::model::{ContractSet, Market, SchoolId, StudentId, TypeId};

/// A market in which every school runs a dynamic reserves choice function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProblemInstance {
    pub market: Market,
    pub schools: Vec<DynamicReservesSchool>,
}

/// A market in which every school runs a slot-specific priorities rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotSpecificInstance {
    pub market: Market,
    pub schools: Vec<SlotSpecificSchool>,
}

/// Anything that can tell the cumulative offer process which contracts a
/// school holds from a set of offers.
pub trait SchoolChoices: Sync {
    fn market(&self) -> &Market;
    fn school_capacity(&self, school: SchoolId) -> u32;
    fn choose(&self, school: SchoolId, offers: &ContractSet) -> ContractSet;
}

impl SchoolChoices for ProblemInstance {
    fn market(&self) -> &Market {
        &self.market
    }

    fn school_capacity(&self, school: SchoolId) -> u32 {
        self.schools[school.index()].capacity
    }

    fn choose(&self, school: SchoolId, offers: &ContractSet) -> ContractSet {
        let s = &self.schools[school.index()];
        FastChooser::new(s, &self.market).choose(offers, s, &self.market)
    }
}

impl SchoolChoices for SlotSpecificInstance {
    fn market(&self) -> &Market {
        &self.market
    }

    fn school_capacity(&self, school: SchoolId) -> u32 {
        self.schools[school.index()].slots.len() as u32
    }

    fn choose(&self, school: SchoolId, offers: &ContractSet) -> ContractSet {
        slot_specific_choice(offers, &self.schools[school.index()], &self.market)
    }
}

impl ProblemInstance {
    /// Copy of the instance with school `school` replaced.
    pub fn with_school(&self, school: DynamicReservesSchool) -> ProblemInstance {
        let mut out = self.clone();
        let idx = school.school().index();
        out.schools[idx] = school;
        out
    }

    /// Fails with the full violation list if the instance is malformed.
    pub fn validated(self) -> Result<Self, Error> {
        let v = validate_instance(&self);
        if v.is_empty() {
            Ok(self)
        } else {
            Err(Error::Validation(v))
        }
    }
}

/// Every broken invariant of a dynamic reserves instance; empty means the
/// instance is well formed.
pub fn validate_instance(instance: &ProblemInstance) -> Vec<Violation> {
    let m = &instance.market;
    let mut out = validate_market(m);
    if instance.schools.len() != m.num_schools() {
        out.push(Violation::new(
            "schools",
            format!("{} school configurations for {} schools", instance.schools.len(), m.num_schools()),
        ));
        return out;
    }
    for (j, school) in instance.schools.iter().enumerate() {
        validate_school(m, j, school, &mut out);
    }
    out
}

pub fn validate_slot_specific(instance: &SlotSpecificInstance) -> Vec<Violation> {
    let m = &instance.market;
    let mut out = validate_market(m);
    if instance.schools.len() != m.num_schools() {
        out.push(Violation::new(
            "schools",
            format!("{} school configurations for {} schools", instance.schools.len(), m.num_schools()),
        ));
        return out;
    }
    for (j, school) in instance.schools.iter().enumerate() {
        if school.school.index() != j {
            out.push(Violation::new(format!("schools[{j}]"), "school index mismatch"));
        }
        for (l, slot) in school.slots.iter().enumerate() {
            let loc = format!("schools[{j}].slots[{l}]");
            let mut seen = BTreeSet::new();
            for &c in slot {
                if c.index() >= m.num_contracts() {
                    out.push(Violation::new(&loc, format!("unknown contract {c}")));
                    continue;
                }
                if m.contract(c).school.index() != j {
                    out.push(Violation::new(
                        &loc,
                        format!("contract `{}` belongs to another school", m.contract_name(c)),
                    ));
                }
                if !seen.insert(c) {
                    out.push(Violation::new(&loc, format!("contract `{}` listed twice", m.contract_name(c))));
                }
            }
        }
    }
    out
}

fn validate_market(m: &Market) -> Vec<Violation> {
    let mut out = Vec::new();
    let nt = m.profile.num_types;
    if nt != m.types.len() {
        out.push(Violation::new("types", "type profile and type list disagree"));
    }
    if m.profile.claims.len() != m.num_students() {
        out.push(Violation::new("students", "type profile does not cover every student"));
        return out;
    }
    for (i, claims) in m.profile.claims.iter().enumerate() {
        if claims.is_empty() {
            out.push(Violation::new(
                format!("students[{i}].types"),
                format!("student `{}` claims no privilege type", m.students[i]),
            ));
        }
        if let Some(t) = claims.iter().find(|t| t.index() >= nt) {
            out.push(Violation::new(format!("students[{i}].types"), format!("unknown type {t}")));
        }
    }
    let mut triples = BTreeMap::new();
    for (c, nc) in m.contracts.iter().enumerate() {
        let x = nc.contract;
        let loc = format!("contracts[{c}]");
        if x.student.index() >= m.num_students() || x.school.index() >= m.num_schools() || x.privilege.index() >= nt {
            out.push(Violation::new(loc, format!("contract `{}` refers to an unknown entity", nc.name)));
            continue;
        }
        if !m.profile.can_claim(x.student, x.privilege) {
            out.push(Violation::new(
                &loc,
                format!(
                    "contract `{}` names type `{}` which student `{}` cannot claim",
                    nc.name,
                    m.types[x.privilege.index()],
                    m.students[x.student.index()]
                ),
            ));
        }
        if let Some(first) = triples.insert((x.student, x.school, x.privilege), c) {
            out.push(Violation::new(
                &loc,
                format!("contract `{}` duplicates `{}`", nc.name, m.contracts[first].name),
            ));
        }
    }
    if m.preferences.len() != m.num_students() {
        out.push(Violation::new("preferences", "one preference list per student is required"));
        return out;
    }
    for (i, pref) in m.preferences.iter().enumerate() {
        let loc = format!("preferences[{i}]");
        if pref.student.index() != i {
            out.push(Violation::new(&loc, "preference list attached to the wrong student"));
        }
        let mut seen = BTreeSet::new();
        for &c in &pref.ranked {
            if c.index() >= m.num_contracts() {
                out.push(Violation::new(&loc, format!("unknown contract {c}")));
                continue;
            }
            if m.contract(c).student.index() != i {
                out.push(Violation::new(
                    &loc,
                    format!("contract `{}` belongs to another student", m.contract_name(c)),
                ));
            }
            if !seen.insert(c) {
                out.push(Violation::new(&loc, format!("contract `{}` ranked twice", m.contract_name(c))));
            }
        }
    }
    out
}

fn validate_school(m: &Market, j: usize, s: &DynamicReservesSchool, out: &mut Vec<Violation>) {
    let loc = |field: &str| format!("schools[{j}].{field}");
    if s.school().index() != j {
        out.push(Violation::new(format!("schools[{j}]"), "school index mismatch"));
    }
    let mut seen = BTreeSet::<StudentId>::new();
    for &st in &s.priority.ranked {
        if st.index() >= m.num_students() {
            out.push(Violation::new(loc("priority"), format!("unknown student {st}")));
        } else if !seen.insert(st) {
            out.push(Violation::new(
                loc("priority"),
                format!("student `{}` ranked twice", m.students[st.index()]),
            ));
        }
    }
    if s.precedence.is_empty() {
        out.push(Violation::new(loc("precedence"), "at least one slot group is required"));
        return;
    }
    let mut covered = BTreeSet::new();
    for &t in &s.precedence {
        if t.index() >= m.profile.num_types {
            out.push(Violation::new(loc("precedence"), format!("unknown type {t}")));
        }
        covered.insert(t);
    }
    let missing: Vec<&str> = (0..m.profile.num_types)
        .filter(|&t| !covered.contains(&TypeId::from(t)))
        .map(|t| m.types[t].as_str())
        .collect();
    if !missing.is_empty() {
        out.push(Violation::new(
            loc("precedence"),
            format!("every type needs a slot group; missing {}", missing.join(", ")),
        ));
    }
    if s.targets.len() != s.precedence.len() {
        out.push(Violation::new(
            loc("targets"),
            format!("{} targets for {} slot groups", s.targets.len(), s.precedence.len()),
        ));
        return;
    }
    let total: u64 = s.targets.iter().map(|&q| q as u64).sum();
    if total != s.capacity as u64 {
        let rel = if total > s.capacity as u64 { "exceed" } else { "fall short of" };
        out.push(Violation::new(
            loc("targets"),
            format!("targets sum to {total} and {rel} the capacity {}", s.capacity),
        ));
    }
    let shape = s.scheme.shape_errors(s.groups());
    if !shape.is_empty() {
        for e in shape {
            out.push(Violation::new(loc("scheme"), e));
        }
        return;
    }
    for k in s.scheme.boundary_errors(&s.targets) {
        out.push(Violation::new(
            loc("scheme"),
            format!("group {} must run at its target when nothing is left over upstream", k + 1),
        ));
    }
    match check_monotonic(&s.scheme, &s.targets, s.capacity, DEFAULT_MONOTONICITY_CAP) {
        Ok(None) => {}
        Ok(Some(v)) => out.push(Violation::new(loc("scheme"), format!("not monotonic: {v}"))),
        // forward sums are monotone by construction, tables must be checked
        Err(_) if matches!(s.scheme, CapacityTransferScheme::ForwardSum { .. }) => {}
        Err(e) => out.push(Violation::new(loc("scheme"), format!("cannot verify monotonicity: {e}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::ex1;
    use crate::model::SchoolId;

    #[test]
    fn ex1_is_valid() {
        assert_eq!(validate_instance(&ex1()), vec![]);
    }

    #[test]
    fn unclaimable_type_names_the_contract() {
        let mut inst = ex1();
        let x1 = inst.market.find_contract("x1").unwrap();
        inst.market.contracts[x1.index()].contract.privilege = inst.market.find_type("t2").unwrap();
        let v = validate_instance(&inst);
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(v[0].message.contains("x1"));
        assert_eq!(v[0].location, format!("contracts[{}]", x1.index()));
    }

    #[test]
    fn targets_exceeding_capacity() {
        let mut inst = ex1();
        inst.schools[0].targets = vec![1, 1, 1];
        let v = validate_instance(&inst);
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].location, "schools[0].targets");
        assert!(v[0].message.contains("exceed"));
    }

    #[test]
    fn precedence_must_cover_every_type() {
        let mut inst = ex1();
        let t1 = inst.market.find_type("t1").unwrap();
        inst.schools[0].precedence[2] = t1;
        let v = validate_instance(&inst);
        assert!(v.iter().any(|v| v.message.contains("missing t3")), "{v:?}");
    }

    #[test]
    fn non_monotone_table_is_rejected() {
        let mut inst = ex1();
        let mut entries = vec![std::collections::BTreeMap::new(); 3];
        entries[2].insert(vec![1, 0], 0);
        entries[2].insert(vec![0, 1], 2);
        inst.schools[0].scheme = CapacityTransferScheme::Table { entries };
        let v = validate_instance(&inst);
        assert!(v.iter().any(|v| v.message.contains("not monotonic")), "{v:?}");
    }

    #[test]
    fn zero_point_must_equal_target() {
        let mut inst = ex1();
        let mut entries = vec![std::collections::BTreeMap::new(); 3];
        entries[1].insert(vec![0], 0);
        inst.schools[0].scheme = CapacityTransferScheme::Table { entries };
        let v = validate_instance(&inst);
        assert!(v.iter().any(|v| v.message.contains("group 2")), "{v:?}");
    }

    #[test]
    fn choose_dispatches_to_the_school() {
        let inst = ex1();
        let all = inst.market.all_contracts();
        let got = inst.choose(SchoolId(0), &all);
        assert_eq!(inst.market.names(&got), ["x1", "y2"]);
    }
}
