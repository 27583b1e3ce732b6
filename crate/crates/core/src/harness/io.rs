//! JSON instance files.
//!
//! ```json
//! {
//!   "format": "reserve-match/instance",
//!   "version": 1,
//!   "kind": "dynamic_reserves",
//!   "types": ["t1", "t2"],
//!   "students": [{"id": "i", "types": ["t1"]}],
//!   "schools": [{
//!     "id": "s", "capacity": 1, "priority": ["i"],
//!     "precedence": ["t1", "t2"], "targets": [1, 0],
//!     "scheme": {"kind": "forward_sum", "donors": [[], [1]]}
//!   }],
//!   "contracts": [{"id": "x", "student": "i", "school": "s", "type": "t1"}],
//!   "preferences": [{"student": "i", "ranking": ["x"]}]
//! }
//! ```
//!
//! Groups and donors are numbered from 1 in files. Table schemes list
//! `{"group", "residuals", "capacity"}` entries. Slot-specific files use
//! `"kind": "slot_specific"` and give each school `"slots"`: one ranked
//! contract list per seat, in filling order.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::choice::dynamic::DynamicReservesSchool;
use crate::choice::scheme::CapacityTransferScheme;
use crate::choice::slot::SlotSpecificSchool;
use crate::error::{Error, Result, Violation};
use crate::instance::{validate_slot_specific, ProblemInstance, SlotSpecificInstance};
use crate::model::{
    Allocation, Contract, ContractId, ContractSet, Market, NamedContract, PreferenceOrder, PriorityOrder, SchoolId,
    StudentId, TypeId, TypeProfile,
};

pub const INSTANCE_FORMAT: &str = "reserve-match/instance";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceKind {
    DynamicReserves,
    SlotSpecific,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    format: String,
    version: u32,
    kind: InstanceKind,
    types: Vec<String>,
    students: Vec<StudentEntry>,
    schools: Vec<SchoolEntry>,
    contracts: Vec<ContractEntry>,
    #[serde(default)]
    preferences: Vec<PreferenceEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StudentEntry {
    id: String,
    types: Vec<String>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchoolEntry {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    capacity: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    priority: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    precedence: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    targets: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scheme: Option<SchemeEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    slots: Option<Vec<Vec<String>>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum SchemeEntry {
    ForwardSum { donors: Vec<Vec<usize>> },
    Table { entries: Vec<TableEntry> },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableEntry {
    group: usize,
    residuals: Vec<u32>,
    capacity: u32,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ContractEntry {
    id: String,
    student: String,
    school: String,
    #[serde(rename = "type")]
    privilege: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PreferenceEntry {
    student: String,
    ranking: Vec<String>,
}

#[derive(Deserialize)]
struct Header {
    format: Option<String>,
    version: Option<u32>,
}

/// A parsed instance file of either kind.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LoadedInstance {
    Dynamic(ProblemInstance),
    SlotSpecific(SlotSpecificInstance),
}

fn parse_error(e: serde_json::Error) -> Error {
    Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

fn index_names(kind: &'static str, names: impl Iterator<Item = String>) -> Result<HashMap<String, usize>> {
    let mut map = HashMap::new();
    for (i, n) in names.enumerate() {
        if map.insert(n.clone(), i).is_some() {
            return Err(Error::Duplicate { kind, name: n });
        }
    }
    Ok(map)
}

/// Name lookups that record a violation instead of failing fast.
struct Resolver<'a> {
    map: &'a HashMap<String, usize>,
    kind: &'static str,
}

impl Resolver<'_> {
    fn get(&self, name: &str, loc: &str, out: &mut Vec<Violation>) -> Option<usize> {
        let r = self.map.get(name).copied();
        if r.is_none() {
            out.push(Violation::new(loc, format!("unknown {} `{name}`", self.kind)));
        }
        r
    }
}

/// Parses an instance file of either kind and validates it.
pub fn parse_instance(text: &str) -> Result<LoadedInstance> {
    let header: Header = serde_json::from_str(text).map_err(parse_error)?;
    let found = format!(
        "{}@{}",
        header.format.as_deref().unwrap_or("<missing>"),
        header.version.map_or("<missing>".to_string(), |v| v.to_string())
    );
    if header.format.as_deref() != Some(INSTANCE_FORMAT) || header.version != Some(FORMAT_VERSION) {
        return Err(Error::SchemaVersion {
            found,
            expected: format!("{INSTANCE_FORMAT}@{FORMAT_VERSION}"),
        });
    }
    let file: InstanceFile = serde_json::from_str(text).map_err(parse_error)?;
    let type_ix = index_names("type", file.types.iter().cloned())?;
    let student_ix = index_names("student", file.students.iter().map(|s| s.id.clone()))?;
    let school_ix = index_names("school", file.schools.iter().map(|s| s.id.clone()))?;
    let contract_ix = index_names("contract", file.contracts.iter().map(|c| c.id.clone()))?;
    let types = Resolver { map: &type_ix, kind: "type" };
    let students = Resolver { map: &student_ix, kind: "student" };
    let schools = Resolver { map: &school_ix, kind: "school" };
    let contracts = Resolver { map: &contract_ix, kind: "contract" };
    let mut v = Vec::new();

    let mut claims = Vec::new();
    for (i, s) in file.students.iter().enumerate() {
        let mut set = BTreeSet::new();
        for t in &s.types {
            if let Some(t) = types.get(t, &format!("students[{i}].types"), &mut v) {
                set.insert(TypeId::from(t));
            }
        }
        claims.push(set);
    }
    let mut named = Vec::new();
    let mut triples = BTreeSet::new();
    for (c, x) in file.contracts.iter().enumerate() {
        let loc = format!("contracts[{c}]");
        let st = students.get(&x.student, &loc, &mut v);
        let sc = schools.get(&x.school, &loc, &mut v);
        let t = types.get(&x.privilege, &loc, &mut v);
        let (Some(st), Some(sc), Some(t)) = (st, sc, t) else { continue };
        if !triples.insert((st, sc, t)) {
            return Err(Error::Duplicate {
                kind: "contract",
                name: format!("{} ({}, {}, {})", x.id, x.student, x.school, x.privilege),
            });
        }
        named.push(NamedContract {
            name: x.id.clone(),
            contract: Contract {
                student: StudentId::from(st),
                school: SchoolId::from(sc),
                privilege: TypeId::from(t),
            },
        });
    }
    let mut preferences: Vec<PreferenceOrder> = (0..file.students.len())
        .map(|i| PreferenceOrder::new(StudentId::from(i), Vec::new()))
        .collect();
    let mut seen_pref = BTreeSet::new();
    for (p, entry) in file.preferences.iter().enumerate() {
        let loc = format!("preferences[{p}]");
        let Some(i) = students.get(&entry.student, &loc, &mut v) else { continue };
        if !seen_pref.insert(i) {
            v.push(Violation::new(&loc, format!("second preference list for `{}`", entry.student)));
            continue;
        }
        preferences[i].ranked = entry
            .ranking
            .iter()
            .filter_map(|c| contracts.get(c, &loc, &mut v).map(ContractId::from))
            .collect();
    }
    if !v.is_empty() {
        return Err(Error::Validation(v));
    }
    let market = Market {
        types: file.types.clone(),
        students: file.students.iter().map(|s| s.id.clone()).collect(),
        schools: file.schools.iter().map(|s| s.id.clone()).collect(),
        profile: TypeProfile {
            num_types: file.types.len(),
            claims,
        },
        contracts: named,
        preferences,
    };

    match file.kind {
        InstanceKind::DynamicReserves => {
            let mut out = Vec::new();
            for (j, s) in file.schools.iter().enumerate() {
                let loc = |f: &str| format!("schools[{j}].{f}");
                let mut missing = |f: &str, present: bool| {
                    if !present {
                        v.push(Violation::new(loc(f), "required for dynamic reserves schools"));
                    }
                };
                missing("capacity", s.capacity.is_some());
                missing("priority", s.priority.is_some());
                missing("precedence", s.precedence.is_some());
                missing("targets", s.targets.is_some());
                missing("scheme", s.scheme.is_some());
                if s.slots.is_some() {
                    v.push(Violation::new(loc("slots"), "slots belong in slot-specific files"));
                }
                let (Some(capacity), Some(priority), Some(precedence), Some(targets), Some(scheme)) =
                    (s.capacity, &s.priority, &s.precedence, &s.targets, &s.scheme)
                else {
                    continue;
                };
                let priority: Vec<StudentId> = priority
                    .iter()
                    .filter_map(|n| students.get(n, &loc("priority"), &mut v).map(StudentId::from))
                    .collect();
                let precedence: Vec<TypeId> = precedence
                    .iter()
                    .filter_map(|n| types.get(n, &loc("precedence"), &mut v).map(TypeId::from))
                    .collect();
                let Some(mut scheme) = scheme_from_file(scheme, &loc("scheme"), &mut v) else { continue };
                // tables may stop at the last group that has entries
                if let CapacityTransferScheme::Table { entries } = &mut scheme {
                    if entries.len() < precedence.len() {
                        entries.resize(precedence.len(), BTreeMap::new());
                    }
                }
                out.push(DynamicReservesSchool {
                    capacity,
                    priority: PriorityOrder::new(SchoolId::from(j), priority),
                    precedence,
                    targets: targets.clone(),
                    scheme,
                });
            }
            if !v.is_empty() {
                return Err(Error::Validation(v));
            }
            ProblemInstance { market, schools: out }.validated().map(LoadedInstance::Dynamic)
        }
        InstanceKind::SlotSpecific => {
            let mut out = Vec::new();
            for (j, s) in file.schools.iter().enumerate() {
                let loc = format!("schools[{j}].slots");
                if s.capacity.is_some() || s.priority.is_some() || s.precedence.is_some() || s.targets.is_some() || s.scheme.is_some() {
                    v.push(Violation::new(
                        format!("schools[{j}]"),
                        "slot-specific schools take only `id` and `slots`",
                    ));
                }
                let Some(slots) = &s.slots else {
                    v.push(Violation::new(loc, "required for slot-specific schools"));
                    continue;
                };
                let slots = slots
                    .iter()
                    .map(|slot| {
                        slot.iter()
                            .filter_map(|c| contracts.get(c, &loc, &mut v).map(ContractId::from))
                            .collect()
                    })
                    .collect();
                out.push(SlotSpecificSchool {
                    school: SchoolId::from(j),
                    slots,
                });
            }
            if !v.is_empty() {
                return Err(Error::Validation(v));
            }
            let inst = SlotSpecificInstance { market, schools: out };
            let v = validate_slot_specific(&inst);
            if v.is_empty() {
                Ok(LoadedInstance::SlotSpecific(inst))
            } else {
                Err(Error::Validation(v))
            }
        }
    }
}

fn scheme_from_file(entry: &SchemeEntry, loc: &str, v: &mut Vec<Violation>) -> Option<CapacityTransferScheme> {
    match entry {
        SchemeEntry::ForwardSum { donors } => {
            let mut out = Vec::with_capacity(donors.len());
            for (k, ds) in donors.iter().enumerate() {
                let mut list = Vec::new();
                for &d in ds {
                    if d == 0 || d > k {
                        v.push(Violation::new(
                            loc,
                            format!("group {} cannot draw on group {d}; donors must precede it", k + 1),
                        ));
                    } else {
                        list.push(d - 1);
                    }
                }
                out.push(list);
            }
            Some(CapacityTransferScheme::ForwardSum { donors: out })
        }
        SchemeEntry::Table { entries } => {
            let groups = entries.iter().map(|e| e.group).max().unwrap_or(0);
            let mut out = vec![BTreeMap::new(); groups];
            for (n, e) in entries.iter().enumerate() {
                if e.group == 0 {
                    v.push(Violation::new(format!("{loc}.entries[{n}]"), "groups are numbered from 1"));
                    continue;
                }
                if out[e.group - 1].insert(e.residuals.clone(), e.capacity).is_some() {
                    v.push(Violation::new(format!("{loc}.entries[{n}]"), "residual vector listed twice"));
                }
            }
            Some(CapacityTransferScheme::Table { entries: out })
        }
    }
}

fn read(path: &Path) -> Result<String> {
    Ok(std::fs::read_to_string(path)?)
}

pub fn load_any(path: impl AsRef<Path>) -> Result<LoadedInstance> {
    parse_instance(&read(path.as_ref())?)
}

/// Loads a dynamic reserves instance.
pub fn load_instance(path: impl AsRef<Path>) -> Result<ProblemInstance> {
    match load_any(path)? {
        LoadedInstance::Dynamic(i) => Ok(i),
        LoadedInstance::SlotSpecific(_) => Err(Error::invalid(
            "this is a slot-specific instance; convert it to dynamic reserves first",
        )),
    }
}

pub fn load_slot_specific(path: impl AsRef<Path>) -> Result<SlotSpecificInstance> {
    match load_any(path)? {
        LoadedInstance::SlotSpecific(i) => Ok(i),
        LoadedInstance::Dynamic(_) => Err(Error::invalid("expected a slot-specific instance")),
    }
}

fn market_parts(m: &Market) -> (Vec<StudentEntry>, Vec<ContractEntry>, Vec<PreferenceEntry>) {
    let students = m
        .students
        .iter()
        .enumerate()
        .map(|(i, id)| StudentEntry {
            id: id.clone(),
            types: m.profile.claims[i].iter().map(|t| m.types[t.index()].clone()).collect(),
        })
        .collect();
    let contracts = m
        .contracts
        .iter()
        .map(|nc| ContractEntry {
            id: nc.name.clone(),
            student: m.students[nc.contract.student.index()].clone(),
            school: m.schools[nc.contract.school.index()].clone(),
            privilege: m.types[nc.contract.privilege.index()].clone(),
        })
        .collect();
    let preferences = m
        .preferences
        .iter()
        .map(|p| PreferenceEntry {
            student: m.students[p.student.index()].clone(),
            ranking: p.ranked.iter().map(|&c| m.contract_name(c).to_string()).collect(),
        })
        .collect();
    (students, contracts, preferences)
}

fn to_text(file: &InstanceFile) -> String {
    let mut s = serde_json::to_string_pretty(file).expect("instance files always serialize");
    s.push('\n');
    s
}

/// Canonical JSON text of a dynamic reserves instance.
pub fn instance_to_json(inst: &ProblemInstance) -> String {
    let m = &inst.market;
    let (students, contracts, preferences) = market_parts(m);
    let schools = inst
        .schools
        .iter()
        .enumerate()
        .map(|(j, s)| SchoolEntry {
            id: m.schools[j].clone(),
            capacity: Some(s.capacity),
            priority: Some(s.priority.ranked.iter().map(|i| m.students[i.index()].clone()).collect()),
            precedence: Some(s.precedence.iter().map(|t| m.types[t.index()].clone()).collect()),
            targets: Some(s.targets.clone()),
            scheme: Some(match &s.scheme {
                CapacityTransferScheme::ForwardSum { donors } => SchemeEntry::ForwardSum {
                    donors: donors.iter().map(|ds| ds.iter().map(|d| d + 1).collect()).collect(),
                },
                CapacityTransferScheme::Table { entries } => SchemeEntry::Table {
                    entries: entries
                        .iter()
                        .enumerate()
                        .flat_map(|(k, t)| {
                            t.iter().map(move |(r, &q)| TableEntry {
                                group: k + 1,
                                residuals: r.clone(),
                                capacity: q,
                            })
                        })
                        .collect(),
                },
            }),
            slots: None,
        })
        .collect();
    to_text(&InstanceFile {
        format: INSTANCE_FORMAT.into(),
        version: FORMAT_VERSION,
        kind: InstanceKind::DynamicReserves,
        types: m.types.clone(),
        students,
        schools,
        contracts,
        preferences,
    })
}

pub fn slot_specific_to_json(inst: &SlotSpecificInstance) -> String {
    let m = &inst.market;
    let (students, contracts, preferences) = market_parts(m);
    let schools = inst
        .schools
        .iter()
        .enumerate()
        .map(|(j, s)| SchoolEntry {
            id: m.schools[j].clone(),
            slots: Some(
                s.slots
                    .iter()
                    .map(|slot| slot.iter().map(|&c| m.contract_name(c).to_string()).collect())
                    .collect(),
            ),
            ..Default::default()
        })
        .collect();
    to_text(&InstanceFile {
        format: INSTANCE_FORMAT.into(),
        version: FORMAT_VERSION,
        kind: InstanceKind::SlotSpecific,
        types: m.types.clone(),
        students,
        schools,
        contracts,
        preferences,
    })
}

pub fn save_instance(inst: &ProblemInstance, path: impl AsRef<Path>) -> Result<()> {
    Ok(std::fs::write(path, instance_to_json(inst))?)
}

pub fn save_slot_specific(inst: &SlotSpecificInstance, path: impl AsRef<Path>) -> Result<()> {
    Ok(std::fs::write(path, slot_specific_to_json(inst))?)
}

/// Reads an allocation: either `{"contracts": [...]}` or any report with an
/// `"allocation"` list of contract names.
pub fn parse_allocation(text: &str, market: &Market) -> Result<Allocation> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(parse_error)?;
    let list = value
        .get("contracts")
        .or_else(|| value.get("allocation"))
        .and_then(|v| v.as_array())
        .ok_or_else(|| Error::invalid("allocation file needs a `contracts` or `allocation` list"))?;
    let mut set = ContractSet::new();
    let mut v = Vec::new();
    for (n, item) in list.iter().enumerate() {
        let loc = format!("contracts[{n}]");
        match item.as_str().and_then(|name| market.find_contract(name)) {
            Some(c) => {
                if !set.insert(c) {
                    v.push(Violation::new(loc, "contract listed twice"));
                }
            }
            None => v.push(Violation::new(loc, format!("unknown contract {item}"))),
        }
    }
    if !v.is_empty() {
        return Err(Error::Validation(v));
    }
    Ok(Allocation::new(set))
}

pub fn load_allocation(path: impl AsRef<Path>, market: &Market) -> Result<Allocation> {
    parse_allocation(&read(path.as_ref())?, market)
}

pub fn allocation_to_json(alloc: &Allocation, market: &Market) -> String {
    let names: Vec<&str> = market.names(&alloc.contracts);
    let mut s = serde_json::to_string_pretty(&serde_json::json!({ "contracts": names })).expect("serializable");
    s.push('\n');
    s
}

/// Parses a dynamic reserves instance from text.
pub fn parse_dynamic(text: &str) -> Result<ProblemInstance> {
    match parse_instance(text)? {
        LoadedInstance::Dynamic(i) => Ok(i),
        LoadedInstance::SlotSpecific(_) => Err(Error::invalid("expected a dynamic reserves instance")),
    }
}
