//! Property suites run over batches of instances.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::choice::dynamic::{completion_choice, dynamic_reserves_choice, DynamicReservesSchool};
use crate::cop::{check_order_independence, cop_outcome, run_cop_default};
use crate::error::{Error, Result};
use crate::harness::generate::{random_forward_sum, stream};
use crate::incentives::flexibility::{
    check_flexibility_pareto, decompose_flexibility, improvement_chains, unit_increment, Decomposition,
};
use crate::incentives::{
    check_respects_improvements, find_group_misreport, find_profitable_misreport, improve_once, preference_space_size,
};
use crate::instance::{validate_instance, ProblemInstance};
use crate::model::{weakly_pareto_dominates, ContractId, ContractSet, StudentId};
use crate::verify::{check_completion, check_irc, check_lad, check_substitutability, is_stable};

/// Search-space caps for the exhaustive checks, all derived from the
/// largest contract domain the caller is willing to enumerate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Caps {
    pub max_contracts: usize,
    pub subsets: u128,
    pub blocking: u128,
    pub reports: u128,
}

impl Caps {
    pub fn for_contracts(n: usize) -> Caps {
        let n = n.min(24);
        let sq = (n * n).max(1) as u128;
        Caps {
            max_contracts: n,
            subsets: (1u128 << n) * sq,
            blocking: 1u128 << n,
            reports: preference_space_size(n).saturating_mul(preference_space_size(n)),
        }
    }
}

impl Default for Caps {
    fn default() -> Self {
        Caps::for_contracts(10)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditConfig {
    pub seed: u64,
    pub caps: Caps,
    /// Random proposal orders per instance in the order-independence suite.
    pub order_trials: usize,
    /// Coalition search runs on every n-th instance.
    pub coalition_every: usize,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            seed: 0,
            caps: Caps::default(),
            order_trials: 20,
            coalition_every: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditFailure {
    pub instance: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SuiteResult {
    pub name: &'static str,
    pub property: &'static str,
    pub checked: usize,
    pub refused: usize,
    pub failures: Vec<AuditFailure>,
    /// Facts recorded without being asserted.
    pub notes: Vec<String>,
}

impl SuiteResult {
    fn new(name: &'static str, property: &'static str) -> Self {
        SuiteResult {
            name,
            property,
            checked: 0,
            refused: 0,
            failures: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    fn absorb(&mut self, other: SuiteResult) {
        self.checked += other.checked;
        self.refused += other.refused;
        self.failures.extend(other.failures);
        self.notes.extend(other.notes);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    pub seed: u64,
    pub instances: usize,
    pub suites: Vec<SuiteResult>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(SuiteResult::passed)
    }
}

pub const SUITES: [(&str, &str); 8] = [
    ("validation", "instances are well formed and schemes monotone"),
    ("completion", "completion is a completion and satisfies IRC, substitutability, LAD"),
    ("stability", "cumulative offer outcome is stable"),
    ("strategy_proofness", "no profitable misreport by one student or a pair"),
    ("improvements", "a priority improvement never hurts its beneficiary"),
    ("flexibility", "more flexible schemes weakly Pareto improve the outcome"),
    ("order_independence", "outcome does not depend on the proposal order"),
    ("overall_substitutability", "overall choice substitutability (recorded, not asserted)"),
];

struct Ctx<'a> {
    label: &'a str,
    suite: SuiteResult,
}

impl Ctx<'_> {
    fn fail(&mut self, detail: impl Into<String>) {
        self.suite.failures.push(AuditFailure {
            instance: self.label.to_string(),
            detail: detail.into(),
        });
    }

    /// Counts a check; cap refusals are tallied, other errors are failures.
    fn run(&mut self, r: Result<Option<String>>) {
        self.suite.checked += 1;
        match r {
            Ok(None) => {}
            Ok(Some(msg)) => self.fail(msg),
            Err(Error::CapExceeded { .. }) => self.suite.refused += 1,
            Err(e) => self.fail(e.to_string()),
        }
    }
}

fn names(inst: &ProblemInstance, set: &ContractSet) -> String {
    format!("{{{}}}", inst.market.names(set).join(", "))
}

fn name_of(inst: &ProblemInstance, c: Option<ContractId>) -> String {
    c.map_or("nothing".to_string(), |c| inst.market.contract_name(c).to_string())
}

fn school_domain(inst: &ProblemInstance, s: &DynamicReservesSchool) -> Vec<ContractId> {
    inst.market.contracts_of_school(s.school()).into_iter().collect()
}

fn audit_one(index: usize, label: &str, inst: &ProblemInstance, cfg: &AuditConfig) -> Vec<SuiteResult> {
    let prefs = &inst.market.preferences;
    let m = &inst.market;
    let mut out = Vec::new();
    let mut rng = stream(cfg.seed ^ 0x5eed_a0d1, index as u64);

    let mut c = Ctx { label, suite: SuiteResult::new(SUITES[0].0, SUITES[0].1) };
    let v = validate_instance(inst);
    c.run(Ok((!v.is_empty()).then(|| format!("{} violations, first: {}", v.len(), v[0]))));
    out.push(c.suite);

    let mut c = Ctx { label, suite: SuiteResult::new(SUITES[1].0, SUITES[1].1) };
    let mut subst = Ctx { label, suite: SuiteResult::new(SUITES[7].0, SUITES[7].1) };
    for s in &inst.schools {
        let d = school_domain(inst, s);
        let cbar = |y: &ContractSet| completion_choice(y, s, m).chosen;
        let ch = |y: &ContractSet| dynamic_reserves_choice(y, s, m).chosen;
        let cap = cfg.caps.subsets;
        let report = |r: Result<Option<crate::verify::PropertyViolation>>| {
            r.map(|o| o.map(|v| format!("school {}: {:?} on {}", m.schools[s.school().index()], v.property, names(inst, &v.offers))))
        };
        c.run(report(check_completion(&ch, &cbar, &d, m, cap)));
        c.run(report(check_irc(&cbar, &d, cap)));
        c.run(report(check_substitutability(&cbar, &d, cap)));
        c.run(report(check_lad(&cbar, &d, cap)));
        c.run(report(check_irc(&ch, &d, cap)));
        subst.suite.checked += 1;
        match check_substitutability(&ch, &d, cap) {
            Ok(Some(v)) => subst.suite.notes.push(format!(
                "{label}: school {} rejects then accepts {}",
                m.schools[s.school().index()],
                name_of(inst, v.added.first().copied())
            )),
            Ok(None) => {}
            Err(_) => subst.suite.refused += 1,
        }
    }
    out.push(c.suite);

    let mut c = Ctx { label, suite: SuiteResult::new(SUITES[2].0, SUITES[2].1) };
    let y = run_cop_default(inst, prefs);
    c.run(is_stable(&y, inst, prefs, cfg.caps.blocking).map(|r| (!r.is_stable()).then(|| format!("{r:?}"))));
    out.push(c.suite);

    let mut c = Ctx { label, suite: SuiteResult::new(SUITES[3].0, SUITES[3].1) };
    for i in 0..m.num_students() {
        let r = find_profitable_misreport(StudentId::from(i), inst, prefs, cfg.caps.reports);
        c.run(r.map(|o| o.map(|mis| format!("student {} gains with report {:?}", m.students[i], mis.reports[0]))));
    }
    if cfg.coalition_every > 0 && index % cfg.coalition_every == 0 {
        for a in 0..m.num_students() {
            for b in a + 1..m.num_students() {
                let pair = [StudentId::from(a), StudentId::from(b)];
                let r = find_group_misreport(&pair, inst, prefs, 2, cfg.caps.reports);
                c.run(r.map(|o| o.map(|_| format!("students {} and {} gain jointly", m.students[a], m.students[b]))));
            }
        }
    }
    out.push(c.suite);

    let mut c = Ctx { label, suite: SuiteResult::new(SUITES[4].0, SUITES[4].1) };
    if let Some((student, improved)) = random_improvement(inst, &mut rng) {
        let r = check_respects_improvements(inst, prefs, &improved, student);
        c.run(r.map(|o| {
            (!o.respected).then(|| {
                format!(
                    "student {} moved from {} to {}",
                    m.students[student.index()],
                    name_of(inst, o.before),
                    name_of(inst, o.after)
                )
            })
        }));
    }
    out.push(c.suite);

    let mut c = Ctx { label, suite: SuiteResult::new(SUITES[5].0, SUITES[5].1) };
    let rigid = rigid_version(inst);
    if rigid != *inst {
        let r = check_flexibility_pareto(&rigid, inst, prefs, 256);
        c.run(r.map(|rep| {
            if !rep.weakly_dominates {
                Some("flexible outcome does not weakly dominate the rigid one".to_string())
            } else if rep.chain_matches == Some(false) {
                Some("chained unit increments end away from the flexible outcome".to_string())
            } else if rep.worse_steps > 0 {
                Some(format!("{} chain steps left a student worse off", rep.worse_steps))
            } else {
                None
            }
        }));
    }
    if let Some(case) = unit_flexibility_case(inst, &mut rng) {
        c.run(check_unit_case(&case));
    }
    out.push(c.suite);

    let mut c = Ctx { label, suite: SuiteResult::new(SUITES[6].0, SUITES[6].1) };
    let r = check_order_independence(inst, prefs, cfg.order_trials.max(2), rng.gen());
    c.run(r.map(|o| {
        o.map(|d| format!("outcome {} under one order, {} under another", names(inst, &d.reference.contracts), names(inst, &d.outcome.contracts)))
    }));
    out.push(c.suite);
    out.push(subst.suite);
    out
}

/// The instance with every school's transfers switched off.
pub fn rigid_version(inst: &ProblemInstance) -> ProblemInstance {
    ProblemInstance {
        market: inst.market.clone(),
        schools: inst.schools.iter().map(DynamicReservesSchool::rigid).collect(),
    }
}

/// A random student moved up one place at a random school where that is
/// possible.
pub fn random_improvement(
    inst: &ProblemInstance,
    rng: &mut ChaCha8Rng,
) -> Option<(StudentId, Vec<crate::model::PriorityOrder>)> {
    let base: Vec<_> = inst.schools.iter().map(|s| s.priority.clone()).collect();
    let mut options: Vec<(usize, usize)> = (0..inst.market.num_students())
        .flat_map(|i| (0..base.len()).map(move |s| (i, s)))
        .filter(|&(i, s)| improve_once(&base[s], StudentId::from(i)).is_some())
        .collect();
    options.shuffle(rng);
    let &(i, s) = options.first()?;
    let mut improved = base;
    improved[s] = improve_once(&improved[s], StudentId::from(i))?;
    Some((StudentId::from(i), improved))
}

/// A unit flexibility increment: a school one seat more flexible than
/// `base` at a single residual vector.
#[derive(Debug, Clone)]
pub struct UnitCase {
    pub base: ProblemInstance,
    pub bumped: DynamicReservesSchool,
    /// The increment sits on the residual vector the school actually
    /// reaches at the base outcome.
    pub bites: bool,
}

/// Picks a unit increment on the way from the rigid version of `inst` to a
/// random forward-sum scheme at one school, preferring increments that land
/// on a residual vector the intermediate outcome actually reaches.
pub fn unit_flexibility_case(inst: &ProblemInstance, rng: &mut ChaCha8Rng) -> Option<UnitCase> {
    let rigid = rigid_version(inst);
    let mut schools: Vec<usize> = (0..inst.schools.len()).filter(|&s| inst.schools[s].groups() > 1).collect();
    schools.shuffle(rng);
    for s in schools {
        let base_school = &rigid.schools[s];
        for _ in 0..8 {
            let target = DynamicReservesSchool {
                scheme: random_forward_sum(base_school.groups(), rng),
                ..base_school.clone()
            };
            let Ok(Decomposition::Steps(steps)) = decompose_flexibility(base_school, &target, 512) else {
                continue;
            };
            if steps.is_empty() {
                continue;
            }
            let mut cases = Vec::with_capacity(steps.len());
            let mut previous = base_school.scheme.clone();
            for scheme in steps {
                let before = DynamicReservesSchool {
                    scheme: previous.clone(),
                    ..base_school.clone()
                };
                let bumped = DynamicReservesSchool {
                    scheme: scheme.clone(),
                    ..base_school.clone()
                };
                let base = rigid.with_school(before);
                let bites = bites(&base, &bumped);
                cases.push(UnitCase { base, bumped, bites });
                previous = scheme;
            }
            let biting: Vec<usize> = (0..cases.len()).filter(|&k| cases[k].bites).collect();
            let pick = if biting.is_empty() {
                rng.gen_range(0..cases.len())
            } else {
                biting[rng.gen_range(0..biting.len())]
            };
            return Some(cases.swap_remove(pick));
        }
    }
    None
}

fn bites(base: &ProblemInstance, bumped: &DynamicReservesSchool) -> bool {
    let Ok((group, point)) = unit_increment(&base.schools[bumped.school().index()], bumped) else {
        return false;
    };
    let outcome = cop_outcome(base, &base.market.preferences);
    let offered: ContractSet = outcome
        .offered
        .iter()
        .copied()
        .filter(|&c| base.market.contract(c).school == bumped.school())
        .collect();
    let trace = dynamic_reserves_choice(&offered, &base.schools[bumped.school().index()], &base.market);
    trace.residuals()[..group] == point[..]
}

/// Checks one unit increment: the flexible outcome weakly dominates and the
/// improvement chain lands exactly on it.
pub fn check_unit_case(case: &UnitCase) -> Result<Option<String>> {
    let prefs = &case.base.market.preferences;
    let start = cop_outcome(&case.base, prefs);
    let flex = run_cop_default(&case.base.with_school(case.bumped.clone()), prefs);
    if !weakly_pareto_dominates(&flex, &start.allocation, &case.base.market, prefs) {
        return Ok(Some(format!(
            "unit increment: {} does not weakly dominate {}",
            names(&case.base, &flex.contracts),
            names(&case.base, &start.allocation.contracts)
        )));
    }
    let chain = improvement_chains(&case.base, &case.bumped, prefs, &start)?;
    if chain.allocation != flex {
        return Ok(Some(format!(
            "improvement chain ends at {}, direct run gives {}",
            names(&case.base, &chain.allocation.contracts),
            names(&case.base, &flex.contracts)
        )));
    }
    if chain.worse_steps() > 0 {
        return Ok(Some(format!("{} chain steps left a student worse off", chain.worse_steps())));
    }
    Ok(None)
}

/// Runs every suite on every instance. Instances are audited in parallel;
/// results are merged in input order.
pub fn run_audit(instances: &[(String, ProblemInstance)], cfg: &AuditConfig) -> AuditReport {
    let per: Vec<Vec<SuiteResult>> = instances
        .par_iter()
        .enumerate()
        .map(|(n, (label, inst))| audit_one(n, label, inst, cfg))
        .collect();
    let mut suites: Vec<SuiteResult> = SUITES.iter().map(|(n, p)| SuiteResult::new(n, p)).collect();
    for results in per {
        for (acc, r) in suites.iter_mut().zip(results) {
            acc.absorb(r);
        }
    }
    AuditReport {
        seed: cfg.seed,
        instances: instances.len(),
        suites,
    }
}

/// Thread pool sized by `REserve_MATCH_WORKERS`, or rayon's default.
pub fn worker_pool() -> rayon::ThreadPool {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = std::env::var("REserve_MATCH_WORKERS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        b = b.num_threads(n);
    }
    b.build().expect("thread pool")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{ex1, ex1_low_demand};
    use crate::harness::generate::{generate_batch, GeneratorParams};

    #[test]
    fn ex1_passes_every_suite() {
        let r = run_audit(&[("ex1".into(), ex1()), ("low".into(), ex1_low_demand())], &AuditConfig::default());
        for s in &r.suites {
            assert!(s.passed(), "{}: {:?}", s.name, s.failures);
        }
        assert!(r.suites[1].checked > 0);
    }

    #[test]
    fn small_batch_passes() {
        let insts: Vec<_> = generate_batch(&GeneratorParams::default().with_seed(9), 12)
            .into_iter()
            .enumerate()
            .map(|(n, i)| (format!("#{n}"), i))
            .collect();
        let r = run_audit(&insts, &AuditConfig::default());
        assert!(r.passed(), "{r:#?}");
    }

    #[test]
    fn unit_case_is_a_unit_increment() {
        let inst = ex1_low_demand();
        let mut rng = stream(1, 0);
        let case = unit_flexibility_case(&inst, &mut rng).unwrap();
        let s = case.bumped.school().index();
        assert!(unit_increment(&case.base.schools[s], &case.bumped).is_ok());
        assert_eq!(check_unit_case(&case).unwrap(), None);
    }
}
