//! Incentive audits: exhaustive misreport search for single students and
//! small coalitions, and the effect of priority improvements.

pub mod flexibility;

use serde::Serialize;

use crate::cop::run_cop_default;
use crate::error::{Error, Result};
use crate::instance::ProblemInstance;
use crate::model::{ContractId, PreferenceOrder, PriorityOrder, StudentId};

pub use flexibility::{
    check_flexibility_pareto, decompose_flexibility, improvement_chains, is_more_flexible, student_deltas,
    unit_increment, waste, ChainOutcome, ChainStep, Change, Decomposition, FlexibilityReport, StudentDelta,
    DEFAULT_MAX_UNIT_STEPS,
};

/// Default cap on the number of reports searched in one misreport query.
pub const DEFAULT_REPORT_CAP: u128 = 1 << 20;

/// Number of strict rankings of some subset of `n` contracts, the empty
/// ranking included.
pub fn preference_space_size(n: usize) -> u128 {
    let mut total = 1u128;
    let mut perm = 1u128;
    for k in 0..n {
        perm = perm.saturating_mul((n - k) as u128);
        total = total.saturating_add(perm);
    }
    total
}

/// Every strict ranking of a subset of `contracts`, shorter prefixes before
/// their extensions.
pub fn preference_space(contracts: &[ContractId]) -> Vec<Vec<ContractId>> {
    fn walk(prefix: &mut Vec<ContractId>, rest: &mut Vec<ContractId>, out: &mut Vec<Vec<ContractId>>) {
        out.push(prefix.clone());
        for i in 0..rest.len() {
            let c = rest.remove(i);
            prefix.push(c);
            walk(prefix, rest, out);
            prefix.pop();
            rest.insert(i, c);
        }
    }
    let mut out = Vec::new();
    walk(&mut Vec::new(), &mut contracts.to_vec(), &mut out);
    out
}

/// A joint deviation and what it earns each deviator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Misreport {
    pub students: Vec<StudentId>,
    pub reports: Vec<Vec<ContractId>>,
    pub truthful: Vec<Option<ContractId>>,
    pub deviating: Vec<Option<ContractId>>,
}

/// First report that gets `student` a contract they truly prefer to their
/// truthful outcome, if any.
pub fn find_profitable_misreport(
    student: StudentId,
    inst: &ProblemInstance,
    prefs: &[PreferenceOrder],
    cap: u128,
) -> Result<Option<Misreport>> {
    find_group_misreport(&[student], inst, prefs, 1, cap)
}

/// First joint report by `coalition` that makes every member strictly
/// better off. Coalitions larger than `max_size` are refused.
pub fn find_group_misreport(
    coalition: &[StudentId],
    inst: &ProblemInstance,
    prefs: &[PreferenceOrder],
    max_size: usize,
    cap: u128,
) -> Result<Option<Misreport>> {
    if coalition.is_empty() {
        return Ok(None);
    }
    if coalition.len() > max_size {
        return Err(Error::invalid(format!(
            "coalition of {} exceeds the limit of {max_size}",
            coalition.len()
        )));
    }
    let m = &inst.market;
    let spaces: Vec<Vec<Vec<ContractId>>> = coalition
        .iter()
        .map(|&i| {
            let own: Vec<ContractId> = m.contracts_of_student(i).into_iter().collect();
            let size = preference_space_size(own.len());
            if size > cap {
                Err(Error::CapExceeded {
                    what: "misreport enumeration",
                    required: size,
                    cap,
                })
            } else {
                Ok(preference_space(&own))
            }
        })
        .collect::<Result<_>>()?;
    let required = spaces.iter().fold(1u128, |acc, s| acc.saturating_mul(s.len() as u128));
    if required > cap {
        return Err(Error::CapExceeded {
            what: "coalition misreport enumeration",
            required,
            cap,
        });
    }
    let truthful_alloc = run_cop_default(inst, prefs);
    let truthful: Vec<Option<ContractId>> = coalition.iter().map(|&i| truthful_alloc.assignment(m, i)).collect();
    let mut reported = prefs.to_vec();
    let mut idx = vec![0usize; coalition.len()];
    loop {
        for (k, &i) in coalition.iter().enumerate() {
            reported[i.index()].ranked = spaces[k][idx[k]].clone();
        }
        let out = run_cop_default(inst, &reported);
        let deviating: Vec<Option<ContractId>> = coalition.iter().map(|&i| out.assignment(m, i)).collect();
        let all_gain = coalition
            .iter()
            .enumerate()
            .all(|(k, &i)| prefs[i.index()].prefers(deviating[k], truthful[k]));
        if all_gain {
            return Ok(Some(Misreport {
                students: coalition.to_vec(),
                reports: coalition.iter().map(|&i| reported[i.index()].ranked.clone()).collect(),
                truthful,
                deviating,
            }));
        }
        // odometer over the product of report spaces
        let mut k = coalition.len();
        loop {
            if k == 0 {
                return Ok(None);
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < spaces[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// `improved` only moves `student` up: at every school, everyone `student`
/// beat before is still beaten, acceptability is not lost, and the ranking
/// among everyone else is untouched.
pub fn is_unambiguous_improvement(base: &[PriorityOrder], improved: &[PriorityOrder], student: StudentId) -> bool {
    if base.len() != improved.len() {
        return false;
    }
    base.iter().zip(improved).all(|(b, n)| {
        if b.school != n.school {
            return false;
        }
        let others = |p: &PriorityOrder| p.ranked.iter().copied().filter(|&s| s != student).collect::<Vec<_>>();
        if others(b) != others(n) {
            return false;
        }
        match b.rank(student) {
            None => true,
            Some(rb) => match n.rank(student) {
                None => false,
                // everyone below `student` before is still below
                Some(rn) => b.ranked[rb + 1..].iter().all(|&s| n.rank(s).is_some_and(|r| r > rn)),
            },
        }
    })
}

/// Moves `student` one place up at this school, or makes them acceptable
/// at the bottom if they were not. `None` if they are already first.
pub fn improve_once(priority: &PriorityOrder, student: StudentId) -> Option<PriorityOrder> {
    let mut ranked = priority.ranked.clone();
    match priority.rank(student) {
        Some(0) => return None,
        Some(r) => ranked.swap(r - 1, r),
        None => ranked.push(student),
    }
    Some(PriorityOrder::new(priority.school, ranked))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ImprovementOutcome {
    pub student: StudentId,
    pub before: Option<ContractId>,
    pub after: Option<ContractId>,
    pub respected: bool,
}

/// Compares `student`'s outcome under the instance's priorities and under
/// `improved`. The improvement must be unambiguous.
pub fn check_respects_improvements(
    inst: &ProblemInstance,
    prefs: &[PreferenceOrder],
    improved: &[PriorityOrder],
    student: StudentId,
) -> Result<ImprovementOutcome> {
    let base: Vec<PriorityOrder> = inst.schools.iter().map(|s| s.priority.clone()).collect();
    if !is_unambiguous_improvement(&base, improved, student) {
        return Err(Error::invalid(format!(
            "priority change is not an unambiguous improvement for student `{}`",
            inst.market.students[student.index()]
        )));
    }
    let mut better = inst.clone();
    for (s, p) in better.schools.iter_mut().zip(improved) {
        s.priority = p.clone();
    }
    let m = &inst.market;
    let before = run_cop_default(inst, prefs).assignment(m, student);
    let after = run_cop_default(&better, prefs).assignment(m, student);
    Ok(ImprovementOutcome {
        student,
        before,
        after,
        respected: prefs[student.index()].weakly_prefers(after, before),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::ex1;
    use crate::model::SchoolId;

    #[test]
    fn preference_space_counts() {
        assert_eq!(preference_space_size(0), 1);
        assert_eq!(preference_space_size(4), 65);
        assert_eq!(preference_space_size(6), 1957);
        let ids: Vec<ContractId> = (0..4).map(ContractId).collect();
        let space = preference_space(&ids);
        assert_eq!(space.len(), 65);
        let distinct: std::collections::BTreeSet<_> = space.iter().collect();
        assert_eq!(distinct.len(), 65);
        assert!(space[0].is_empty());
    }

    #[test]
    fn top_choice_student_has_no_profitable_lie() {
        let inst = ex1();
        let prefs = &inst.market.preferences;
        let i = inst.market.find_student("i").unwrap();
        assert_eq!(find_profitable_misreport(i, &inst, prefs, u128::MAX).unwrap(), None);
    }

    #[test]
    fn nobody_in_ex1_gains_by_lying() {
        let inst = ex1();
        let prefs = &inst.market.preferences;
        for s in 0..4 {
            assert_eq!(find_profitable_misreport(StudentId(s), &inst, prefs, u128::MAX).unwrap(), None);
        }
        assert_eq!(
            find_group_misreport(&[StudentId(2), StudentId(3)], &inst, prefs, 2, u128::MAX).unwrap(),
            None
        );
        assert_eq!(find_group_misreport(&[], &inst, prefs, 2, u128::MAX).unwrap(), None);
    }

    #[test]
    fn singleton_coalition_matches_single_search() {
        let inst = ex1();
        let prefs = &inst.market.preferences;
        let k = StudentId(2);
        assert_eq!(
            find_group_misreport(&[k], &inst, prefs, 2, u128::MAX).unwrap(),
            find_profitable_misreport(k, &inst, prefs, u128::MAX).unwrap()
        );
    }

    #[test]
    fn improvement_examples() {
        let base = vec![PriorityOrder::new(SchoolId(0), vec![StudentId(0), StudentId(1), StudentId(2)])];
        let k = StudentId(2);
        assert!(is_unambiguous_improvement(&base, &base, k));
        let up = vec![improve_once(&base[0], k).unwrap()];
        assert_eq!(up[0].ranked, [StudentId(0), StudentId(2), StudentId(1)]);
        assert!(is_unambiguous_improvement(&base, &up, k));
        assert!(!is_unambiguous_improvement(&up, &base, k));
        let swapped = vec![PriorityOrder::new(SchoolId(0), vec![StudentId(1), StudentId(0), StudentId(2)])];
        assert!(!is_unambiguous_improvement(&base, &swapped, k));
        assert!(improve_once(&base[0], StudentId(0)).is_none());
        let partial = PriorityOrder::new(SchoolId(0), vec![StudentId(0)]);
        let added = improve_once(&partial, k).unwrap();
        assert!(is_unambiguous_improvement(&[partial], &[added], k));
    }

    #[test]
    fn mixed_change_is_refused() {
        let inst = ex1();
        let prefs = &inst.market.preferences;
        let l = inst.market.find_student("l").unwrap();
        let up = vec![improve_once(&inst.schools[0].priority, l).unwrap()];
        let r = check_respects_improvements(&inst, prefs, &up, l).unwrap();
        assert!(r.respected);
        let mut down = inst.schools[0].priority.clone();
        down.ranked.retain(|&s| s != l);
        assert!(check_respects_improvements(&inst, prefs, &[down], l).is_err());
    }
}
