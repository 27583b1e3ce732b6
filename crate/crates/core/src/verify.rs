//! Stability checking and exhaustive checkers for choice-function
//! properties (irrelevance of rejected contracts, substitutability, the law
//! of aggregate demand, completions).

use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::SchoolChoices;
use crate::model::{student_choice, Allocation, ContractId, ContractSet, Market, PreferenceOrder, SchoolId, StudentId};

/// Default cap on choice evaluations for the exhaustive checkers.
pub const DEFAULT_SUBSET_CAP: u128 = 1 << 24;

/// Default cap on candidate blocking sets examined per school.
pub const DEFAULT_BLOCKING_CAP: u128 = 1 << 22;

/// A choice function over contracts.
pub trait ChoiceFunction {
    fn choose(&self, offers: &ContractSet) -> ContractSet;
}

impl<F: Fn(&ContractSet) -> ContractSet> ChoiceFunction for F {
    fn choose(&self, offers: &ContractSet) -> ContractSet {
        self(offers)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    IrrelevanceOfRejected,
    Substitutability,
    AggregateDemand,
    Completion,
}

/// First failing instance of a property. `offers` is the base set and
/// `added` the contracts appended to it (empty for completion checks).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PropertyViolation {
    pub property: Property,
    pub offers: ContractSet,
    pub added: Vec<ContractId>,
    pub before: ContractSet,
    pub after: ContractSet,
}

/// `C(Y)` for every `Y` in the power set of `domain`, as bitmasks.
struct ChoiceTable {
    domain: Vec<ContractId>,
    chosen: Vec<u32>,
}

impl ChoiceTable {
    fn build(choice: &dyn ChoiceFunction, domain: &[ContractId], per_set: u128, cap: u128, what: &'static str) -> Result<Self> {
        let n = domain.len();
        let required = if n >= 32 {
            u128::MAX
        } else {
            (1u128 << n).saturating_mul(per_set.max(1))
        };
        if n >= 32 || required > cap {
            return Err(Error::CapExceeded { what, required, cap });
        }
        let mut sorted = domain.to_vec();
        sorted.sort();
        sorted.dedup();
        let chosen = (0u32..(1u32 << sorted.len()))
            .map(|mask| {
                let offers = set_of(&sorted, mask);
                let picked = choice.choose(&offers);
                sorted
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| picked.contains(c))
                    .fold(0u32, |acc, (b, _)| acc | 1 << b)
            })
            .collect();
        Ok(ChoiceTable { domain: sorted, chosen })
    }

    fn n(&self) -> usize {
        self.domain.len()
    }

    fn set(&self, mask: u32) -> ContractSet {
        set_of(&self.domain, mask)
    }

    fn violation(&self, property: Property, y: u32, added: &[usize], after: u32) -> PropertyViolation {
        PropertyViolation {
            property,
            offers: self.set(y),
            added: added.iter().map(|&b| self.domain[b]).collect(),
            before: self.set(self.chosen[y as usize]),
            after: self.set(self.chosen[after as usize]),
        }
    }
}

fn set_of(domain: &[ContractId], mask: u32) -> ContractSet {
    domain
        .iter()
        .enumerate()
        .filter(|(b, _)| mask >> b & 1 == 1)
        .map(|(_, &c)| c)
        .collect()
}

/// Removing a rejected contract never changes the choice:
/// `z ∉ C(Y ∪ {z})` implies `C(Y) = C(Y ∪ {z})`.
pub fn check_irc(choice: &dyn ChoiceFunction, domain: &[ContractId], cap: u128) -> Result<Option<PropertyViolation>> {
    let t = ChoiceTable::build(choice, domain, domain.len() as u128, cap, "irrelevance of rejected contracts check")?;
    for y in 0u32..(1 << t.n()) {
        for z in 0..t.n() {
            let yz = y | 1 << z;
            if yz == y {
                continue;
            }
            if t.chosen[yz as usize] >> z & 1 == 0 && t.chosen[y as usize] != t.chosen[yz as usize] {
                return Ok(Some(t.violation(Property::IrrelevanceOfRejected, y, &[z], yz)));
            }
        }
    }
    Ok(None)
}

/// A rejected contract stays rejected when another contract arrives:
/// `z ∉ C(Y ∪ {z})` implies `z ∉ C(Y ∪ {z, z'})`.
pub fn check_substitutability(
    choice: &dyn ChoiceFunction,
    domain: &[ContractId],
    cap: u128,
) -> Result<Option<PropertyViolation>> {
    let n = domain.len() as u128;
    let t = ChoiceTable::build(choice, domain, n * n, cap, "substitutability check")?;
    for y in 0u32..(1 << t.n()) {
        for z in 0..t.n() {
            let yz = y | 1 << z;
            if yz == y || t.chosen[yz as usize] >> z & 1 == 1 {
                continue;
            }
            for z2 in 0..t.n() {
                let yzz = yz | 1 << z2;
                if yzz == yz {
                    continue;
                }
                if t.chosen[yzz as usize] >> z & 1 == 1 {
                    return Ok(Some(t.violation(Property::Substitutability, y, &[z, z2], yzz)));
                }
            }
        }
    }
    Ok(None)
}

/// Larger offer sets never yield fewer chosen contracts. Checked on
/// single-contract extensions, which covers every nested pair by chaining.
pub fn check_lad(choice: &dyn ChoiceFunction, domain: &[ContractId], cap: u128) -> Result<Option<PropertyViolation>> {
    let t = ChoiceTable::build(choice, domain, domain.len() as u128, cap, "aggregate demand check")?;
    for y in 0u32..(1 << t.n()) {
        for z in 0..t.n() {
            let yz = y | 1 << z;
            if yz != y && t.chosen[yz as usize].count_ones() < t.chosen[y as usize].count_ones() {
                return Ok(Some(t.violation(Property::AggregateDemand, y, &[z], yz)));
            }
        }
    }
    Ok(None)
}

/// `cbar` completes `c`: on every offer set it either agrees with `c` or
/// picks two contracts of the same student.
pub fn check_completion(
    c: &dyn ChoiceFunction,
    cbar: &dyn ChoiceFunction,
    domain: &[ContractId],
    market: &Market,
    cap: u128,
) -> Result<Option<PropertyViolation>> {
    let base = ChoiceTable::build(c, domain, 2, cap, "completion check")?;
    let comp = ChoiceTable::build(cbar, domain, 2, cap, "completion check")?;
    for y in 0u32..(1 << base.n()) {
        let a = base.chosen[y as usize];
        let b = comp.chosen[y as usize];
        if a == b {
            continue;
        }
        let picked = comp.set(b);
        let students: BTreeSet<StudentId> = picked.iter().map(|&x| market.contract(x).student).collect();
        if students.len() == picked.len() {
            return Ok(Some(PropertyViolation {
                property: Property::Completion,
                offers: base.set(y),
                added: Vec::new(),
                before: base.set(a),
                after: picked,
            }));
        }
    }
    Ok(None)
}

/// Outcome of a stability check. Stable iff every field is empty.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct StabilityReport {
    /// Contracts held by students who rank them below the outside option.
    pub unacceptable: Vec<ContractId>,
    /// Students holding more than one contract.
    pub overloaded: Vec<StudentId>,
    /// Schools that would drop part of what they were assigned.
    pub rejecting_schools: Vec<SchoolId>,
    /// The first school with a blocking set, and that set.
    pub blocking: Option<(SchoolId, ContractSet)>,
}

impl StabilityReport {
    pub fn is_stable(&self) -> bool {
        self.unacceptable.is_empty()
            && self.overloaded.is_empty()
            && self.rejecting_schools.is_empty()
            && self.blocking.is_none()
    }
}

/// Individual rationality on both sides plus an exhaustive search for a
/// blocking set at every school.
pub fn is_stable(
    y: &Allocation,
    inst: &impl SchoolChoices,
    prefs: &[PreferenceOrder],
    cap: u128,
) -> Result<StabilityReport> {
    let m = inst.market();
    let mut report = StabilityReport {
        overloaded: y.overloaded_students(m),
        ..Default::default()
    };
    for &c in &y.contracts {
        if !prefs[m.contract(c).student.index()].is_acceptable(c) {
            report.unacceptable.push(c);
        }
    }
    for s in 0..m.num_schools() {
        let s = SchoolId::from(s);
        let ys: ContractSet = y.contracts.iter().copied().filter(|&c| m.contract(c).school == s).collect();
        if inst.choose(s, &y.contracts) != ys {
            report.rejecting_schools.push(s);
        }
    }
    for s in 0..m.num_schools() {
        let s = SchoolId::from(s);
        if let Some(z) = find_blocking_set(y, s, inst, prefs, cap)? {
            report.blocking = Some((s, z));
            break;
        }
    }
    Ok(report)
}

/// Does `z` block `y` through `school`? `z` must be a non-empty set of
/// new contracts at `school` that the school would take alongside `y` and
/// that each involved student would pick over what `y` gives them.
pub fn is_blocking(
    y: &Allocation,
    school: SchoolId,
    z: &ContractSet,
    inst: &impl SchoolChoices,
    prefs: &[PreferenceOrder],
) -> bool {
    let m = inst.market();
    if z.is_empty() || z.iter().any(|c| y.contracts.contains(c) || m.contract(*c).school != school) {
        return false;
    }
    if z.len() > inst.school_capacity(school) as usize {
        return false;
    }
    let union: ContractSet = y.contracts.union(z).copied().collect();
    if !z.is_subset(&inst.choose(school, &union)) {
        return false;
    }
    let students: BTreeSet<StudentId> = z.iter().map(|&c| m.contract(c).student).collect();
    students.into_iter().all(|i| {
        let zi: ContractSet = z.iter().copied().filter(|&c| m.contract(c).student == i).collect();
        let own: ContractSet = union.iter().copied().filter(|&c| m.contract(c).student == i).collect();
        let pick = student_choice(&own, &prefs[i.index()]);
        zi.len() == 1 && pick == zi.first().copied()
    })
}

/// First blocking set at `school`, scanning candidate sets by size and then
/// in contract order. Only contracts their student strictly prefers to the
/// current assignment can appear in a block, and at most one per student,
/// so the search is restricted to those.
pub fn find_blocking_set(
    y: &Allocation,
    school: SchoolId,
    inst: &impl SchoolChoices,
    prefs: &[PreferenceOrder],
    cap: u128,
) -> Result<Option<ContractSet>> {
    let m = inst.market();
    let assigned = y.assignments(m);
    let candidates: Vec<ContractId> = m
        .contracts_of_school(school)
        .into_iter()
        .filter(|c| !y.contracts.contains(c))
        .filter(|&c| {
            let i = m.contract(c).student.index();
            prefs[i].prefers(Some(c), assigned[i])
        })
        .collect();
    let max = (inst.school_capacity(school) as usize).min(candidates.len());
    let required: u128 = (1..=max).map(|k| binomial(candidates.len() as u128, k as u128)).sum();
    if required > cap {
        return Err(Error::CapExceeded {
            what: "blocking set search",
            required,
            cap,
        });
    }
    for size in 1..=max {
        let mut found = None;
        for_each_combination(candidates.len(), size, &mut |idx| {
            let owners: BTreeSet<StudentId> = idx.iter().map(|&k| m.contract(candidates[k]).student).collect();
            if owners.len() < idx.len() {
                return false;
            }
            let z: ContractSet = idx.iter().map(|&k| candidates[k]).collect();
            if is_blocking(y, school, &z, inst, prefs) {
                found = Some(z);
                return true;
            }
            false
        });
        if found.is_some() {
            return Ok(found);
        }
    }
    Ok(None)
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u128, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Calls `f` on every `k`-subset of `0..n` in lexicographic order until it
/// returns true.
fn for_each_combination(n: usize, k: usize, f: &mut dyn FnMut(&[usize]) -> bool) {
    let mut idx: Vec<usize> = (0..k).collect();
    if k > n {
        return;
    }
    loop {
        if f(&idx) {
            return;
        }
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] < n - k + i {
                idx[i] += 1;
                for j in i + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}
