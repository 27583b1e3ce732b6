//! Seeded random instances for audits and experiments.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::choice::dynamic::DynamicReservesSchool;
use crate::choice::scheme::{check_monotonic, CapacityTransferScheme, DEFAULT_MONOTONICITY_CAP};
use crate::choice::slot::SlotSpecificSchool;
use crate::instance::{validate_instance, validate_slot_specific, ProblemInstance, SlotSpecificInstance};
use crate::model::{
    Contract, ContractId, Market, NamedContract, PreferenceOrder, PriorityOrder, SchoolId, StudentId, TypeId,
    TypeProfile,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SchemeFamily {
    Rigid,
    ForwardSum,
    Table,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    /// Inclusive ranges for the number of students, schools and types.
    pub students: (usize, usize),
    pub schools: (usize, usize),
    pub types: (usize, usize),
    pub capacity: (u32, u32),
    pub max_types_per_student: usize,
    pub max_contracts_per_student: usize,
    pub max_contracts_per_school: usize,
    /// Groups beyond one per type, at most.
    pub extra_groups: usize,
    pub scheme: SchemeFamily,
    /// Chance that a school finds a given student acceptable.
    pub school_acceptance: f64,
    /// Chance that a student finds a given contract acceptable.
    pub student_acceptance: f64,
    pub seed: u64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            students: (1, 4),
            schools: (1, 2),
            types: (1, 3),
            capacity: (1, 3),
            max_types_per_student: 2,
            max_contracts_per_student: 4,
            max_contracts_per_school: 8,
            extra_groups: 2,
            scheme: SchemeFamily::Mixed,
            school_acceptance: 0.9,
            student_acceptance: 0.8,
            seed: 0,
        }
    }
}

impl GeneratorParams {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn check(&self) -> Result<(), String> {
        let ranges = [
            ("students", self.students),
            ("schools", self.schools),
            ("types", self.types),
        ];
        for (what, (lo, hi)) in ranges {
            if lo == 0 || lo > hi {
                return Err(format!("{what} range must satisfy 1 <= min <= max"));
            }
        }
        if self.capacity.0 > self.capacity.1 {
            return Err("capacity range must satisfy min <= max".into());
        }
        if self.max_types_per_student == 0 || self.max_contracts_per_student == 0 {
            return Err("students need at least one type and one contract slot".into());
        }
        for p in [self.school_acceptance, self.student_acceptance] {
            if !(0.0..=1.0).contains(&p) {
                return Err("acceptance rates must lie in [0, 1]".into());
            }
        }
        Ok(())
    }
}

/// Independent random stream for item `index` of a batch seeded by `seed`.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn market(p: &GeneratorParams, rng: &mut ChaCha8Rng) -> Market {
    let ns = rng.gen_range(p.students.0..=p.students.1);
    let nsch = rng.gen_range(p.schools.0..=p.schools.1);
    let nt = rng.gen_range(p.types.0..=p.types.1);
    let all_types: Vec<TypeId> = (0..nt).map(TypeId::from).collect();
    let claims: Vec<BTreeSet<TypeId>> = (0..ns)
        .map(|_| {
            let k = rng.gen_range(1..=p.max_types_per_student.min(nt));
            all_types.choose_multiple(rng, k).copied().collect()
        })
        .collect();
    let mut per_school = vec![0usize; nsch];
    let mut contracts = Vec::new();
    let mut order: Vec<usize> = (0..ns).collect();
    order.shuffle(rng);
    let mut owned: Vec<Vec<Contract>> = vec![Vec::new(); ns];
    for &i in &order {
        let mut options: Vec<Contract> = (0..nsch)
            .flat_map(|s| {
                claims[i].iter().map(move |&t| Contract {
                    student: StudentId::from(i),
                    school: SchoolId::from(s),
                    privilege: t,
                })
            })
            .collect();
        options.shuffle(rng);
        let want = rng.gen_range(1..=p.max_contracts_per_student);
        for x in options {
            if owned[i].len() >= want {
                break;
            }
            if per_school[x.school.index()] < p.max_contracts_per_school {
                per_school[x.school.index()] += 1;
                owned[i].push(x);
            }
        }
    }
    for (i, xs) in owned.iter_mut().enumerate() {
        xs.sort();
        for x in xs.iter() {
            contracts.push(NamedContract {
                name: format!("c{}_{}_{}", i, x.school.index(), x.privilege.index()),
                contract: *x,
            });
        }
    }
    let mut m = Market {
        types: (0..nt).map(|t| format!("t{t}")).collect(),
        students: (0..ns).map(|i| format!("i{i}")).collect(),
        schools: (0..nsch).map(|s| format!("s{s}")).collect(),
        profile: TypeProfile {
            num_types: nt,
            claims,
        },
        contracts,
        preferences: Vec::new(),
    };
    m.preferences = (0..ns)
        .map(|i| {
            let mut ranked: Vec<ContractId> = m.contracts_of_student(StudentId::from(i)).into_iter().collect();
            ranked.shuffle(rng);
            ranked.retain(|_| rng.gen_bool(p.student_acceptance));
            PreferenceOrder::new(StudentId::from(i), ranked)
        })
        .collect();
    m
}

fn priority(school: SchoolId, ns: usize, p: &GeneratorParams, rng: &mut ChaCha8Rng) -> PriorityOrder {
    let mut ranked: Vec<StudentId> = (0..ns).map(StudentId::from).collect();
    ranked.shuffle(rng);
    ranked.retain(|_| rng.gen_bool(p.school_acceptance));
    PriorityOrder::new(school, ranked)
}

/// Random donor sets; each earlier group is a donor with probability 1/2.
pub fn random_forward_sum(groups: usize, rng: &mut impl Rng) -> CapacityTransferScheme {
    CapacityTransferScheme::ForwardSum {
        donors: (0..groups)
            .map(|k| (0..k).filter(|_| rng.gen_bool(0.5)).collect())
            .collect(),
    }
}

/// A monotone table: a random forward sum, then random single-point moves
/// that are kept only when the result stays monotone.
fn random_table(targets: &[u32], bound: u32, rng: &mut ChaCha8Rng) -> CapacityTransferScheme {
    let groups = targets.len();
    let mut table = random_forward_sum(groups, rng).to_table(targets, bound);
    if groups < 2 {
        return table;
    }
    for _ in 0..8 {
        let k = rng.gen_range(1..groups);
        let point: Vec<u32> = (0..k).map(|_| rng.gen_range(0..=bound)).collect();
        if point.iter().all(|&r| r == 0) {
            continue;
        }
        let current = table.capacity(targets, k, &point);
        let value = if rng.gen_bool(0.5) { current + 1 } else { current.saturating_sub(1) };
        let mut candidate = table.clone();
        if let CapacityTransferScheme::Table { entries } = &mut candidate {
            entries[k].insert(point, value);
        }
        if let Ok(None) = check_monotonic(&candidate, targets, bound, DEFAULT_MONOTONICITY_CAP) {
            table = candidate;
        }
    }
    if let CapacityTransferScheme::Table { entries } = &mut table {
        for (k, e) in entries.iter_mut().enumerate() {
            e.retain(|_, q| *q != targets[k]);
        }
    }
    table
}

fn school(
    id: SchoolId,
    market: &Market,
    p: &GeneratorParams,
    rng: &mut ChaCha8Rng,
) -> DynamicReservesSchool {
    let nt = market.profile.num_types;
    let capacity = rng.gen_range(p.capacity.0..=p.capacity.1);
    let mut precedence: Vec<TypeId> = (0..nt).map(TypeId::from).collect();
    for _ in 0..rng.gen_range(0..=p.extra_groups) {
        precedence.push(TypeId::from(rng.gen_range(0..nt)));
    }
    precedence.shuffle(rng);
    let mut targets = vec![0u32; precedence.len()];
    for _ in 0..capacity {
        let k = rng.gen_range(0..targets.len());
        targets[k] += 1;
    }
    let family = match p.scheme {
        SchemeFamily::Mixed => *[SchemeFamily::Rigid, SchemeFamily::ForwardSum, SchemeFamily::Table]
            .choose(rng)
            .expect("non-empty"),
        f => f,
    };
    let scheme = match family {
        SchemeFamily::Rigid => CapacityTransferScheme::rigid(precedence.len()),
        SchemeFamily::ForwardSum => random_forward_sum(precedence.len(), rng),
        _ => random_table(&targets, capacity, rng),
    };
    DynamicReservesSchool {
        capacity,
        priority: priority(id, market.num_students(), p, rng),
        precedence,
        targets,
        scheme,
    }
}

/// A random valid dynamic reserves instance, fully determined by the
/// parameters (seed included).
pub fn generate_random_instance(p: &GeneratorParams) -> ProblemInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let market = market(p, &mut rng);
    let schools = (0..market.num_schools())
        .map(|s| school(SchoolId::from(s), &market, p, &mut rng))
        .collect();
    let inst = ProblemInstance { market, schools };
    let v = validate_instance(&inst);
    assert!(v.is_empty(), "generator produced an invalid instance: {v:?}");
    inst
}

/// A random slot-specific instance. Every student owns at least one
/// contract so the instance can be converted.
pub fn generate_slot_specific(p: &GeneratorParams) -> SlotSpecificInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut market = market(p, &mut rng);
    while market.profile.claims.len() != market.contracts.iter().map(|c| c.contract.student).collect::<BTreeSet<_>>().len() {
        market = self::market(p, &mut rng);
    }
    let schools = (0..market.num_schools())
        .map(|s| {
            let sid = SchoolId::from(s);
            let pool: Vec<ContractId> = market.contracts_of_school(sid).into_iter().collect();
            let seats = rng.gen_range(p.capacity.0..=p.capacity.1);
            let slots = (0..seats)
                .map(|_| {
                    let mut ranking = pool.clone();
                    ranking.shuffle(&mut rng);
                    ranking.retain(|_| rng.gen_bool(p.school_acceptance));
                    ranking
                })
                .collect();
            SlotSpecificSchool { school: sid, slots }
        })
        .collect();
    let inst = SlotSpecificInstance { market, schools };
    let v = validate_slot_specific(&inst);
    assert!(v.is_empty(), "generator produced an invalid instance: {v:?}");
    inst
}

/// `count` instances with per-instance seeds drawn from `p.seed`.
pub fn generate_batch(p: &GeneratorParams, count: usize) -> Vec<ProblemInstance> {
    (0..count)
        .map(|n| {
            let seed = stream(p.seed, n as u64).gen();
            generate_random_instance(&p.clone().with_seed(seed))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_instance() {
        let p = GeneratorParams::default().with_seed(1);
        assert_eq!(generate_random_instance(&p), generate_random_instance(&p));
    }

    #[test]
    fn minimal_params() {
        let p = GeneratorParams {
            students: (1, 1),
            schools: (1, 1),
            types: (1, 1),
            capacity: (1, 1),
            ..GeneratorParams::default()
        };
        let inst = generate_random_instance(&p);
        assert_eq!(inst.market.num_students(), 1);
        assert_eq!(inst.schools.len(), 1);
        assert_eq!(inst.market.num_contracts(), 1);
    }

    #[test]
    fn batch_instances_are_valid_and_monotone() {
        for inst in generate_batch(&GeneratorParams::default().with_seed(3), 200) {
            assert!(validate_instance(&inst).is_empty());
            for s in &inst.schools {
                assert_eq!(check_monotonic(&s.scheme, &s.targets, s.capacity, u128::MAX).unwrap(), None);
                assert!(inst.market.contracts_of_school(s.school()).len() <= 8);
            }
        }
    }

    #[test]
    fn slot_instances_are_valid() {
        let p = GeneratorParams::default().with_seed(5);
        let inst = generate_slot_specific(&p);
        assert!(validate_slot_specific(&inst).is_empty());
        assert!(crate::choice::convert_instance(&inst).is_ok());
    }
}
