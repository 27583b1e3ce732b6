//! Comparing capacity transfer schemes: the "more flexible" order, the
//! improvement-chain update from a rigid outcome to a flexible one, and
//! the waste of unused seats.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::choice::dynamic::{dynamic_reserves_choice, DynamicReservesSchool};
use crate::choice::scheme::{check_monotonic, CapacityTransferScheme, Lattice, DEFAULT_MONOTONICITY_CAP};
use crate::cop::{cop_outcome, CopOutcome};
use crate::error::{Error, Result};
use crate::instance::{ProblemInstance, SchoolChoices};
use crate::model::{
    weakly_pareto_dominates, Allocation, ContractId, ContractSet, Market, PreferenceOrder, SchoolId, StudentId,
};

/// `flex` is at least `base` at every residual vector in `[0, bound]` and
/// strictly above it somewhere.
pub fn is_more_flexible(
    flex: &CapacityTransferScheme,
    base: &CapacityTransferScheme,
    targets: &[u32],
    bound: u32,
    cap: u128,
) -> Result<bool> {
    let groups = targets.len();
    let required: u128 = (1..groups).map(|k| Lattice::size(k, bound)).sum();
    if required > cap {
        return Err(Error::CapExceeded {
            what: "flexibility comparison",
            required,
            cap,
        });
    }
    let mut strict = false;
    for k in 1..groups {
        for r in Lattice::new(k, bound) {
            let a = flex.capacity(targets, k, &r);
            let b = base.capacity(targets, k, &r);
            if a < b {
                return Ok(false);
            }
            strict |= a > b;
        }
    }
    Ok(strict)
}

fn same_except_scheme(a: &DynamicReservesSchool, b: &DynamicReservesSchool) -> bool {
    a.capacity == b.capacity && a.priority == b.priority && a.precedence == b.precedence && a.targets == b.targets
}

/// The single (group, residual vector) at which `flex` exceeds `rigid` by
/// exactly one seat, with every other point equal.
pub fn unit_increment(rigid: &DynamicReservesSchool, flex: &DynamicReservesSchool) -> Result<(usize, Vec<u32>)> {
    if !same_except_scheme(rigid, flex) {
        return Err(Error::invalid("schools differ in more than their transfer scheme"));
    }
    let mut found = None;
    for k in 1..rigid.groups() {
        for r in Lattice::new(k, rigid.capacity) {
            let a = flex.scheme.capacity(&flex.targets, k, &r);
            let b = rigid.scheme.capacity(&rigid.targets, k, &r);
            if a == b {
                continue;
            }
            if a != b + 1 || found.is_some() {
                return Err(Error::invalid("flexible scheme is not a unit increment of the rigid one"));
            }
            found = Some((k, r));
        }
    }
    found.ok_or_else(|| Error::invalid("flexible scheme equals the rigid one"))
}

/// One change of a student's held contract during an improvement chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChainStep {
    pub student: StudentId,
    pub from: Option<ContractId>,
    pub to: Option<ContractId>,
    /// The student ranks `to` below `from`.
    pub worse: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChainOutcome {
    pub allocation: Allocation,
    pub offered: ContractSet,
    /// Where the extra seat appears: zero-based group and residual vector.
    pub increment: (usize, Vec<u32>),
    pub steps: Vec<ChainStep>,
}

impl ChainOutcome {
    pub fn worse_steps(&self) -> usize {
        self.steps.iter().filter(|s| s.worse).count()
    }
}

/// Mid-run state of the cumulative offer process, resumable after a school's
/// choice function changes.
#[derive(Clone)]
struct ChainState {
    next: Vec<usize>,
    offered_at: Vec<ContractSet>,
    held: Vec<ContractSet>,
    holder: Vec<Option<ContractId>>,
    steps: Vec<ChainStep>,
    work: usize,
}

impl ChainState {
    fn new(m: &Market, prefs: &[PreferenceOrder], start: &CopOutcome) -> Result<Self> {
        let ns = m.num_students();
        let mut next = vec![0usize; ns];
        for (i, pref) in prefs.iter().enumerate() {
            let made = pref.ranked.iter().take_while(|c| start.offered.contains(c)).count();
            let total = start
                .offered
                .iter()
                .filter(|&&c| m.contract(c).student.index() == i)
                .count();
            if made != total {
                return Err(Error::invalid(format!(
                    "offers of student `{}` are not a prefix of their ranking",
                    m.students[i]
                )));
            }
            next[i] = made;
        }
        let mut offered_at = vec![ContractSet::new(); m.num_schools()];
        for &c in &start.offered {
            offered_at[m.contract(c).school.index()].insert(c);
        }
        let mut held = vec![ContractSet::new(); m.num_schools()];
        let mut holder = vec![None; ns];
        for &c in &start.allocation.contracts {
            let x = m.contract(c);
            held[x.school.index()].insert(c);
            holder[x.student.index()] = Some(c);
        }
        Ok(ChainState {
            next,
            offered_at,
            held,
            holder,
            steps: Vec::new(),
            work: 0,
        })
    }

    /// Re-chooses at every dirty school until nothing changes and nobody
    /// can propose.
    fn settle(&mut self, inst: &ProblemInstance, prefs: &[PreferenceOrder], mut dirty: BTreeSet<SchoolId>) -> Result<()> {
        let m = &inst.market;
        let limit = 64 * (m.num_contracts() + 1).pow(3);
        loop {
            while let Some(t) = dirty.pop_first() {
                self.work += 1;
                if self.work > limit {
                    return Err(Error::invalid("improvement chain did not settle"));
                }
                let now = inst.choose(t, &self.offered_at[t.index()]);
                let old = std::mem::replace(&mut self.held[t.index()], now.clone());
                for &c in now.difference(&old) {
                    let i = m.contract(c).student.index();
                    let pref = &prefs[i];
                    let prev = self.holder[i];
                    if pref.prefers(Some(c), prev) {
                        self.holder[i] = Some(c);
                        self.steps.push(ChainStep {
                            student: StudentId::from(i),
                            from: prev,
                            to: Some(c),
                            worse: prev.is_some() && pref.prefers(prev, Some(c)),
                        });
                    }
                    let best = self.holder[i].expect("student holds a contract");
                    let keep = pref.rank(best).expect("held contracts are acceptable") + 1;
                    self.withdraw_below(m, prefs, i, keep, &mut dirty);
                }
                for &c in old.difference(&now) {
                    let i = m.contract(c).student.index();
                    if self.holder[i] == Some(c) {
                        let to = now.iter().copied().find(|&d| m.contract(d).student.index() == i);
                        self.holder[i] = to;
                        self.steps.push(ChainStep {
                            student: StudentId::from(i),
                            from: Some(c),
                            to,
                            worse: prefs[i].prefers(Some(c), to),
                        });
                    }
                }
            }
            let proposer = (0..self.next.len()).find(|&i| self.holder[i].is_none() && self.next[i] < prefs[i].ranked.len());
            let Some(i) = proposer else { return Ok(()) };
            let c = prefs[i].ranked[self.next[i]];
            self.next[i] += 1;
            let s = m.contract(c).school;
            self.offered_at[s.index()].insert(c);
            dirty.insert(s);
        }
    }

    /// Takes back student `i`'s offers from rank `keep` down.
    fn withdraw_below(&mut self, m: &Market, prefs: &[PreferenceOrder], i: usize, keep: usize, dirty: &mut BTreeSet<SchoolId>) {
        for &d in &prefs[i].ranked[keep..self.next[i].max(keep)] {
            let s = m.contract(d).school;
            if self.offered_at[s.index()].remove(&d) {
                dirty.insert(s);
            }
        }
        self.next[i] = self.next[i].min(keep);
    }

    fn allocation(&self) -> Allocation {
        Allocation::new(self.held.iter().flatten().copied().collect())
    }
}

/// Updates a rigid cumulative offer outcome after one school gains a single
/// unit of transfer capacity.
///
/// The school re-chooses from the offers it already has. A student who now
/// holds a better contract withdraws every offer below it, which may open a
/// seat at the school they leave; that school re-chooses in turn, and so on.
/// Students left without a seat resume proposing down their lists.
///
/// Once that settles, students look for a seat they were refused earlier:
/// starting at the school that changed and going down its priority order,
/// a student withdraws everything below a better contract they once offered
/// and the process runs on. The move is kept only when the student ends up
/// better off and nobody ends up worse off, and is recorded by its net
/// effect on each student. The run ends when no such move remains.
pub fn improvement_chains(
    rigid: &ProblemInstance,
    flexible: &DynamicReservesSchool,
    prefs: &[PreferenceOrder],
    start: &CopOutcome,
) -> Result<ChainOutcome> {
    let school = flexible.school();
    let increment = unit_increment(&rigid.schools[school.index()], flexible)?;
    let inst = rigid.with_school(flexible.clone());
    let m = &inst.market;

    let mut state = ChainState::new(m, prefs, start)?;
    state.settle(&inst, prefs, BTreeSet::from([school]))?;

    let order: Vec<SchoolId> = std::iter::once(school)
        .chain((0..m.num_schools()).map(SchoolId::from).filter(|&t| t != school))
        .collect();
    'search: loop {
        let current = state.allocation();
        for &t in &order {
            for &i in &inst.schools[t.index()].priority.ranked {
                let pref = &prefs[i.index()];
                let held_rank = state.holder[i.index()].and_then(|c| pref.rank(c)).unwrap_or(state.next[i.index()]);
                for r in 0..held_rank.min(state.next[i.index()]) {
                    let x = pref.ranked[r];
                    if m.contract(x).school != t {
                        continue;
                    }
                    let mut trial = state.clone();
                    let mut dirty = BTreeSet::from([t]);
                    trial.withdraw_below(m, prefs, i.index(), r + 1, &mut dirty);
                    trial.settle(&inst, prefs, dirty)?;
                    state.work = trial.work;
                    let after = trial.allocation();
                    let gains = pref.prefers(after.assignment(m, i), current.assignment(m, i));
                    if gains && weakly_pareto_dominates(&after, &current, m, prefs) {
                        trial.steps.truncate(state.steps.len());
                        for k in 0..m.num_students() {
                            let (from, to) = (current.assignment(m, k.into()), after.assignment(m, k.into()));
                            if from != to {
                                trial.steps.push(ChainStep {
                                    student: k.into(),
                                    from,
                                    to,
                                    worse: false,
                                });
                            }
                        }
                        state = trial;
                        continue 'search;
                    }
                }
            }
        }
        break;
    }
    Ok(ChainOutcome {
        allocation: state.allocation(),
        offered: state.offered_at.into_iter().flatten().collect(),
        increment,
        steps: state.steps,
    })
}

/// A sequence of schemes from `base` to `flex`, each one seat above the
/// previous at a single point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decomposition {
    Steps(Vec<CapacityTransferScheme>),
    Failed(String),
}

/// Splits the gap between two schemes of the same school into unit
/// increments that each keep the scheme monotone.
///
/// Groups are scanned in order and residual vectors from largest to
/// smallest, raising each point by one seat whenever that keeps the scheme
/// monotone. Points that cannot be raised yet are retried on the next pass.
pub fn decompose_flexibility(
    base: &DynamicReservesSchool,
    flex: &DynamicReservesSchool,
    max_steps: usize,
) -> Result<Decomposition> {
    if !same_except_scheme(base, flex) {
        return Err(Error::invalid("schools differ in more than their transfer scheme"));
    }
    let targets = &base.targets;
    let bound = base.capacity;
    if !is_more_flexible(&flex.scheme, &base.scheme, targets, bound, DEFAULT_MONOTONICITY_CAP)? {
        return Err(Error::invalid("target scheme is not more flexible than the base scheme"));
    }
    let gap: u64 = (1..base.groups())
        .flat_map(|k| Lattice::new(k, bound).map(move |r| (k, r)))
        .map(|(k, r)| (flex.scheme.capacity(targets, k, &r) - base.scheme.capacity(targets, k, &r)) as u64)
        .sum();
    if gap > max_steps as u64 {
        return Ok(Decomposition::Failed(format!(
            "{gap} unit increments exceed the limit of {max_steps}"
        )));
    }
    let mut current = base.scheme.to_table(targets, bound);
    let mut steps = Vec::new();
    loop {
        let mut progress = false;
        let mut remaining = false;
        for k in 1..base.groups() {
            let mut points: Vec<Vec<u32>> = Lattice::new(k, bound).collect();
            points.reverse();
            for r in points {
                while current.capacity(targets, k, &r) < flex.scheme.capacity(targets, k, &r) {
                    let candidate = current.bumped(targets, bound, k, &r);
                    match check_monotonic(&candidate, targets, bound, DEFAULT_MONOTONICITY_CAP) {
                        Ok(None) => {
                            steps.push(candidate.clone());
                            current = candidate;
                            progress = true;
                        }
                        Ok(Some(_)) => {
                            remaining = true;
                            break;
                        }
                        Err(e) => return Ok(Decomposition::Failed(e.to_string())),
                    }
                }
            }
        }
        if !remaining {
            return Ok(Decomposition::Steps(steps));
        }
        if !progress {
            return Ok(Decomposition::Failed(
                "every remaining unit increment breaks monotonicity".into(),
            ));
        }
    }
}

/// Residual seats that no later group can pick up, summed over schools.
/// Under a rigid scheme this is just the number of empty seats.
pub fn waste(inst: &ProblemInstance, alloc: &Allocation) -> u32 {
    let m = &inst.market;
    inst.schools
        .iter()
        .map(|school| {
            let offers: ContractSet = alloc
                .contracts
                .iter()
                .copied()
                .filter(|&c| m.contract(c).school == school.school())
                .collect();
            let residuals = dynamic_reserves_choice(&offers, school, m).residuals();
            (0..residuals.len())
                .filter(|&k| {
                    !(k + 1..residuals.len()).any(|g| {
                        let mut more = residuals[..g].to_vec();
                        more[k] += 1;
                        school.scheme.capacity(&school.targets, g, &more)
                            > school.scheme.capacity(&school.targets, g, &residuals[..g])
                    })
                })
                .map(|k| residuals[k])
                .sum::<u32>()
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Change {
    Better,
    Same,
    Worse,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StudentDelta {
    pub student: StudentId,
    pub before: Option<ContractId>,
    pub after: Option<ContractId>,
    pub change: Change,
}

/// Per-student comparison of two allocations under `prefs`.
pub fn student_deltas(
    inst: &ProblemInstance,
    before: &Allocation,
    after: &Allocation,
    prefs: &[PreferenceOrder],
) -> Vec<StudentDelta> {
    let b = before.assignments(&inst.market);
    let a = after.assignments(&inst.market);
    prefs
        .iter()
        .enumerate()
        .map(|(i, p)| StudentDelta {
            student: StudentId::from(i),
            before: b[i],
            after: a[i],
            change: if p.prefers(a[i], b[i]) {
                Change::Better
            } else if p.prefers(b[i], a[i]) {
                Change::Worse
            } else {
                Change::Same
            },
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FlexibilityReport {
    pub rigid: Allocation,
    pub flexible: Allocation,
    pub deltas: Vec<StudentDelta>,
    /// Every student weakly prefers the flexible outcome.
    pub weakly_dominates: bool,
    /// Outcome reached by chaining unit increments, when the gap could be
    /// decomposed.
    pub chained: Option<Allocation>,
    pub chain_matches: Option<bool>,
    pub unit_steps: usize,
    /// Chain steps in which some student moved down.
    pub worse_steps: usize,
    pub decomposition_failure: Option<String>,
    pub waste_rigid: u32,
    pub waste_flexible: u32,
}

fn equal_pointwise(a: &DynamicReservesSchool, b: &DynamicReservesSchool) -> bool {
    (1..a.groups()).all(|k| {
        Lattice::new(k, a.capacity).all(|r| a.scheme.capacity(&a.targets, k, &r) == b.scheme.capacity(&b.targets, k, &r))
    })
}

/// Default cap on unit increments replayed by [`check_flexibility_pareto`].
pub const DEFAULT_MAX_UNIT_STEPS: usize = 256;

/// Compares the cumulative offer outcomes of two instances that differ only
/// in the transfer schemes of some schools, each more flexible in `flexible`.
///
/// Besides the direct comparison, the gap is replayed one unit increment at
/// a time through [`improvement_chains`], school by school, and the chained
/// outcome is checked against the direct one.
pub fn check_flexibility_pareto(
    rigid: &ProblemInstance,
    flexible: &ProblemInstance,
    prefs: &[PreferenceOrder],
    max_steps: usize,
) -> Result<FlexibilityReport> {
    if rigid.market != flexible.market || rigid.schools.len() != flexible.schools.len() {
        return Err(Error::invalid("instances differ outside their transfer schemes"));
    }
    let mut changed = Vec::new();
    for (j, (a, b)) in rigid.schools.iter().zip(&flexible.schools).enumerate() {
        if a == b {
            continue;
        }
        let not_flexible = || {
            Error::invalid(format!(
                "school `{}` is not made more flexible",
                rigid.market.schools[j]
            ))
        };
        if !same_except_scheme(a, b) {
            return Err(not_flexible());
        }
        if !is_more_flexible(&b.scheme, &a.scheme, &a.targets, a.capacity, DEFAULT_MONOTONICITY_CAP)? {
            if is_more_flexible(&a.scheme, &b.scheme, &a.targets, a.capacity, DEFAULT_MONOTONICITY_CAP)?
                || !equal_pointwise(a, b)
            {
                return Err(not_flexible());
            }
            continue;
        }
        changed.push(SchoolId::from(j));
    }

    let start = cop_outcome(rigid, prefs);
    let flex_alloc = cop_outcome(flexible, prefs).allocation;
    let deltas = student_deltas(rigid, &start.allocation, &flex_alloc, prefs);
    let weakly_dominates = weakly_pareto_dominates(&flex_alloc, &start.allocation, &rigid.market, prefs);

    let mut current = rigid.clone();
    let mut outcome = start.clone();
    let mut unit_steps = 0;
    let mut worse_steps = 0;
    let mut failure = None;
    'schools: for &s in &changed {
        let base = &current.schools[s.index()];
        let target = &flexible.schools[s.index()];
        let steps = match decompose_flexibility(base, target, max_steps.saturating_sub(unit_steps))? {
            Decomposition::Steps(steps) => steps,
            Decomposition::Failed(why) => {
                failure = Some(why);
                break 'schools;
            }
        };
        for scheme in steps {
            let next = DynamicReservesSchool {
                scheme,
                ..current.schools[s.index()].clone()
            };
            let chain = improvement_chains(&current, &next, prefs, &outcome)?;
            unit_steps += 1;
            worse_steps += chain.worse_steps();
            outcome = CopOutcome {
                allocation: chain.allocation,
                offered: chain.offered,
                proposals: 0,
                transcript: Vec::new(),
            };
            current = current.with_school(next);
        }
    }
    let chained = failure.is_none().then(|| outcome.allocation.clone());
    Ok(FlexibilityReport {
        waste_rigid: waste(rigid, &start.allocation),
        waste_flexible: waste(flexible, &flex_alloc),
        chain_matches: chained.as_ref().map(|c| *c == flex_alloc),
        rigid: start.allocation,
        flexible: flex_alloc,
        deltas,
        weakly_dominates,
        chained,
        unit_steps,
        worse_steps,
        decomposition_failure: failure,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cop::run_cop_default;
    use crate::fixtures::{ex1, ex1_low_demand};

    #[test]
    fn scheme_is_not_more_flexible_than_itself() {
        let inst = ex1();
        let s = &inst.schools[0];
        assert!(!is_more_flexible(&s.scheme, &s.scheme, &s.targets, 2, u128::MAX).unwrap());
    }

    #[test]
    fn ex1_scheme_beats_rigid() {
        let inst = ex1();
        let s = &inst.schools[0];
        let rigid = CapacityTransferScheme::rigid(3);
        assert!(is_more_flexible(&s.scheme, &rigid, &s.targets, 2, u128::MAX).unwrap());
        assert!(!is_more_flexible(&rigid, &s.scheme, &s.targets, 2, u128::MAX).unwrap());
    }

    #[test]
    fn incomparable_schemes() {
        let a = CapacityTransferScheme::ForwardSum {
            donors: vec![vec![], vec![0], vec![]],
        };
        let b = CapacityTransferScheme::ForwardSum {
            donors: vec![vec![], vec![], vec![1]],
        };
        let t = [1, 1, 0];
        assert!(!is_more_flexible(&a, &b, &t, 2, u128::MAX).unwrap());
        assert!(!is_more_flexible(&b, &a, &t, 2, u128::MAX).unwrap());
    }

    #[test]
    fn low_demand_waste_drops_under_transfers() {
        let flex = ex1_low_demand();
        let rigid = flex.with_school(flex.schools[0].rigid());
        let prefs = &flex.market.preferences;
        let r = check_flexibility_pareto(&rigid, &flex, prefs, DEFAULT_MAX_UNIT_STEPS).unwrap();
        let m = &flex.market;
        assert_eq!(m.names(&r.rigid.contracts), ["y2"]);
        assert_eq!(m.names(&r.flexible.contracts), ["y2", "z3"]);
        assert!(r.weakly_dominates);
        assert_eq!(r.chain_matches, Some(true));
        assert_eq!(r.worse_steps, 0);
        assert_eq!((r.waste_rigid, r.waste_flexible), (1, 0));
    }

    #[test]
    fn ex1_outcome_unchanged_by_flexibility() {
        let flex = ex1();
        let rigid = flex.with_school(flex.schools[0].rigid());
        let prefs = &flex.market.preferences;
        let r = check_flexibility_pareto(&rigid, &flex, prefs, DEFAULT_MAX_UNIT_STEPS).unwrap();
        assert_eq!(r.rigid, r.flexible);
        assert_eq!(r.chain_matches, Some(true));
        assert!(r.unit_steps > 0);
    }

    #[test]
    fn identical_profiles_compare_equal() {
        let inst = ex1();
        let r = check_flexibility_pareto(&inst, &inst, &inst.market.preferences, 10).unwrap();
        assert!(r.weakly_dominates);
        assert_eq!(r.unit_steps, 0);
        assert_eq!(r.chain_matches, Some(true));
    }

    #[test]
    fn chain_adds_the_rejected_t3_student() {
        let flex = ex1_low_demand();
        let rigid_school = flex.schools[0].rigid();
        let rigid = flex.with_school(rigid_school.clone());
        let prefs = &flex.market.preferences;
        let start = cop_outcome(&rigid, prefs);
        // one extra seat for group 3 when group 1 is empty and group 2 full
        let bumped = DynamicReservesSchool {
            scheme: rigid_school.scheme.bumped(&rigid_school.targets, 2, 2, &[1, 0]),
            ..rigid_school
        };
        let out = improvement_chains(&rigid, &bumped, prefs, &start).unwrap();
        assert_eq!(out.increment, (2, vec![1, 0]));
        let direct = run_cop_default(&rigid.with_school(bumped.clone()), prefs);
        assert_eq!(out.allocation, direct);
        assert_eq!(flex.market.names(&out.allocation.contracts), ["y2", "z3"]);
        assert_eq!(out.worse_steps(), 0);
    }

    #[test]
    fn chain_is_idle_when_increment_never_bites() {
        let flex = ex1_low_demand();
        let rigid_school = flex.schools[0].rigid();
        let rigid = flex.with_school(rigid_school.clone());
        let prefs = &flex.market.preferences;
        let start = cop_outcome(&rigid, prefs);
        let bumped = DynamicReservesSchool {
            scheme: rigid_school.scheme.bumped(&rigid_school.targets, 2, 2, &[2, 2]),
            ..rigid_school
        };
        let out = improvement_chains(&rigid, &bumped, prefs, &start).unwrap();
        assert_eq!(out.allocation, start.allocation);
        assert!(out.steps.is_empty());
    }

    #[test]
    fn chain_recovers_a_seat_refused_before_the_student_filled_group_one() {
        // One seat. `a` asks for the t1 group first, is refused while the
        // t0 group is still empty, then takes the t0 seat. With the t0
        // residual handed to t1 the first offer would have stuck.
        let market = crate::fixtures::build_market(
            &["t0", "t1"],
            &[("a", &["t0", "t1"])],
            &["s"],
            &[("a0", "a", "s", "t0"), ("a1", "a", "s", "t1")],
            &[("a", &["a1", "a0"])],
        );
        let rigid_school = DynamicReservesSchool {
            capacity: 1,
            priority: crate::model::PriorityOrder::new(SchoolId(0), vec![StudentId(0)]),
            precedence: vec![crate::model::TypeId(0), crate::model::TypeId(1)],
            targets: vec![1, 0],
            scheme: CapacityTransferScheme::rigid(2),
        };
        let rigid = ProblemInstance {
            market,
            schools: vec![rigid_school.clone()],
        };
        let prefs = &rigid.market.preferences;
        let bumped = DynamicReservesSchool {
            scheme: CapacityTransferScheme::ForwardSum {
                donors: vec![vec![], vec![0]],
            },
            ..rigid_school
        };
        let start = cop_outcome(&rigid, prefs);
        assert_eq!(rigid.market.names(&start.allocation.contracts), ["a0"]);
        let out = improvement_chains(&rigid, &bumped, prefs, &start).unwrap();
        assert_eq!(out.allocation, run_cop_default(&rigid.with_school(bumped), prefs));
        assert_eq!(rigid.market.names(&out.allocation.contracts), ["a1"]);
        assert_eq!(out.worse_steps(), 0);
    }

    #[test]
    fn chain_rejects_non_unit_changes() {
        let inst = ex1();
        let rigid = inst.with_school(inst.schools[0].rigid());
        let start = cop_outcome(&rigid, &inst.market.preferences);
        let err = improvement_chains(&rigid, &inst.schools[0], &inst.market.preferences, &start);
        assert!(matches!(err, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn decomposition_reaches_the_target() {
        let inst = ex1();
        let flex = &inst.schools[0];
        let rigid = flex.rigid();
        let Decomposition::Steps(steps) = decompose_flexibility(&rigid, flex, 1000).unwrap() else {
            panic!("decomposition failed");
        };
        let last = steps.last().unwrap();
        for k in 1..3 {
            for r in Lattice::new(k, 2) {
                assert_eq!(last.capacity(&flex.targets, k, &r), flex.scheme.capacity(&flex.targets, k, &r));
            }
        }
        // sum over [0,2]^2 of r1 + r2
        assert_eq!(steps.len(), 18);
    }

    #[test]
    fn waste_counts_only_untransferred_residuals() {
        let inst = ex1();
        let m = &inst.market;
        let y = Allocation::new(m.contract_set(&["y2"]).unwrap());
        // r1 = 1 moves to group 3, which leaves it and its own seat unused
        assert_eq!(waste(&inst, &y), 1);
        let rigid = inst.with_school(inst.schools[0].rigid());
        assert_eq!(waste(&rigid, &y), 1);
        assert_eq!(waste(&rigid, &Allocation::empty()), 2);
    }
}
