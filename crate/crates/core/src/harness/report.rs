//! Human readable tables and machine readable JSON for command results.

use std::fmt::Write as _;

use serde::Serialize;

use crate::choice::dynamic::dynamic_reserves_choice;
use crate::cop::CopOutcome;
use crate::harness::audit::AuditReport;
use crate::incentives::flexibility::{waste, Change, FlexibilityReport};
use crate::instance::ProblemInstance;
use crate::model::{Allocation, ContractId, ContractSet, Market};
use crate::verify::StabilityReport;

fn name(m: &Market, c: Option<ContractId>) -> Option<String> {
    c.map(|c| m.contract_name(c).to_string())
}

fn names(m: &Market, set: &ContractSet) -> Vec<String> {
    m.names(set).into_iter().map(String::from).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AssignmentRow {
    pub student: String,
    pub contract: Option<String>,
    pub school: Option<String>,
    #[serde(rename = "type")]
    pub privilege: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroupRow {
    pub group: usize,
    #[serde(rename = "type")]
    pub privilege: String,
    pub capacity: u32,
    pub chosen: Vec<String>,
    pub residual: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SchoolRow {
    pub school: String,
    pub capacity: u32,
    pub groups: Vec<GroupRow>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MatchReport {
    pub allocation: Vec<String>,
    pub assignments: Vec<AssignmentRow>,
    pub schools: Vec<SchoolRow>,
    pub proposals: usize,
    pub waste: u32,
}

fn assignments(inst: &ProblemInstance, alloc: &Allocation) -> Vec<AssignmentRow> {
    let m = &inst.market;
    (0..m.num_students())
        .map(|i| {
            let c = alloc.assignment(m, i.into());
            let contract = c.map(|c| m.contract(c));
            AssignmentRow {
                student: m.students[i].clone(),
                contract: name(m, c),
                school: contract.map(|c| m.schools[c.school.index()].clone()),
                privilege: contract.map(|c| m.types[c.privilege.index()].clone()),
            }
        })
        .collect()
}

pub fn match_report(inst: &ProblemInstance, outcome: &CopOutcome) -> MatchReport {
    let m = &inst.market;
    let schools = inst
        .schools
        .iter()
        .map(|s| {
            let offers: ContractSet = outcome
                .offered
                .iter()
                .copied()
                .filter(|&c| m.contract(c).school == s.school())
                .collect();
            let trace = dynamic_reserves_choice(&offers, s, m);
            SchoolRow {
                school: m.schools[s.school().index()].clone(),
                capacity: s.capacity,
                groups: trace
                    .groups
                    .iter()
                    .enumerate()
                    .map(|(k, g)| GroupRow {
                        group: k + 1,
                        privilege: m.types[g.privilege.index()].clone(),
                        capacity: g.capacity,
                        chosen: names(m, &g.chosen),
                        residual: g.residual,
                    })
                    .collect(),
            }
        })
        .collect();
    MatchReport {
        allocation: names(m, &outcome.allocation.contracts),
        assignments: assignments(inst, &outcome.allocation),
        schools,
        proposals: outcome.proposals,
        waste: waste(inst, &outcome.allocation),
    }
}

/// Left-aligned columns separated by two spaces.
fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut width: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, cell) in width.iter_mut().zip(r) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let mut line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (k, (cell, w)) in cells.iter().zip(&width).enumerate() {
            if k + 1 == cells.len() {
                s.push_str(cell);
            } else {
                let _ = write!(s, "{cell:<w$}  ");
            }
        }
        out.push_str(s.trim_end());
        out.push('\n');
    };
    line(header.to_vec());
    for r in rows {
        line(r.iter().map(String::as_str).collect());
    }
    out
}

fn or_dash(s: &Option<String>) -> String {
    s.clone().unwrap_or_else(|| "-".into())
}

pub fn render_match(r: &MatchReport) -> String {
    let rows: Vec<Vec<String>> = r
        .assignments
        .iter()
        .map(|a| vec![a.student.clone(), or_dash(&a.contract), or_dash(&a.school), or_dash(&a.privilege)])
        .collect();
    let mut out = table(&["student", "contract", "school", "type"], &rows);
    for s in &r.schools {
        let _ = writeln!(out, "\nschool {} (capacity {})", s.school, s.capacity);
        let rows: Vec<Vec<String>> = s
            .groups
            .iter()
            .map(|g| {
                vec![
                    g.group.to_string(),
                    g.privilege.clone(),
                    g.capacity.to_string(),
                    g.chosen.join(" "),
                    g.residual.to_string(),
                ]
            })
            .collect();
        out.push_str(&table(&["group", "type", "capacity", "chosen", "residual"], &rows));
    }
    let _ = writeln!(out, "\nproposals: {}  waste: {}", r.proposals, r.waste);
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerifyReport {
    pub stable: bool,
    pub allocation: Vec<String>,
    pub unacceptable: Vec<String>,
    pub overloaded: Vec<String>,
    pub rejecting_schools: Vec<String>,
    pub blocking_school: Option<String>,
    pub blocking_set: Vec<String>,
}

pub fn verify_report(inst: &ProblemInstance, alloc: &Allocation, r: &StabilityReport) -> VerifyReport {
    let m = &inst.market;
    VerifyReport {
        stable: r.is_stable(),
        allocation: names(m, &alloc.contracts),
        unacceptable: r.unacceptable.iter().map(|&c| m.contract_name(c).to_string()).collect(),
        overloaded: r.overloaded.iter().map(|i| m.students[i.index()].clone()).collect(),
        rejecting_schools: r.rejecting_schools.iter().map(|s| m.schools[s.index()].clone()).collect(),
        blocking_school: r.blocking.as_ref().map(|(s, _)| m.schools[s.index()].clone()),
        blocking_set: r.blocking.as_ref().map(|(_, z)| names(m, z)).unwrap_or_default(),
    }
}

pub fn render_verify(r: &VerifyReport) -> String {
    let mut out = format!("allocation: {{{}}}\n", r.allocation.join(", "));
    if r.stable {
        out.push_str("stable\n");
        return out;
    }
    out.push_str("not stable\n");
    if !r.unacceptable.is_empty() {
        let _ = writeln!(out, "  unacceptable contracts: {}", r.unacceptable.join(", "));
    }
    if !r.overloaded.is_empty() {
        let _ = writeln!(out, "  students with several contracts: {}", r.overloaded.join(", "));
    }
    if !r.rejecting_schools.is_empty() {
        let _ = writeln!(out, "  schools rejecting part of their assignment: {}", r.rejecting_schools.join(", "));
    }
    if let Some(s) = &r.blocking_school {
        let _ = writeln!(out, "  school {s} is blocked by {{{}}}", r.blocking_set.join(", "));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DeltaRow {
    pub student: String,
    pub rigid: Option<String>,
    pub flexible: Option<String>,
    pub change: Change,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CompareReport {
    pub rigid: Vec<String>,
    pub flexible: Vec<String>,
    pub students: Vec<DeltaRow>,
    pub weakly_dominates: bool,
    pub unit_steps: usize,
    pub chain_matches: Option<bool>,
    pub worse_steps: usize,
    pub decomposition_failure: Option<String>,
    pub waste_rigid: u32,
    pub waste_flexible: u32,
}

pub fn compare_report(market: &Market, r: &FlexibilityReport) -> CompareReport {
    CompareReport {
        rigid: names(market, &r.rigid.contracts),
        flexible: names(market, &r.flexible.contracts),
        students: r
            .deltas
            .iter()
            .map(|d| DeltaRow {
                student: market.students[d.student.index()].clone(),
                rigid: name(market, d.before),
                flexible: name(market, d.after),
                change: d.change,
            })
            .collect(),
        weakly_dominates: r.weakly_dominates,
        unit_steps: r.unit_steps,
        chain_matches: r.chain_matches,
        worse_steps: r.worse_steps,
        decomposition_failure: r.decomposition_failure.clone(),
        waste_rigid: r.waste_rigid,
        waste_flexible: r.waste_flexible,
    }
}

pub fn render_compare(r: &CompareReport) -> String {
    let rows: Vec<Vec<String>> = r
        .students
        .iter()
        .map(|d| {
            let change = match d.change {
                Change::Better => "better",
                Change::Same => "same",
                Change::Worse => "worse",
            };
            vec![d.student.clone(), or_dash(&d.rigid), or_dash(&d.flexible), change.to_string()]
        })
        .collect();
    let mut out = table(&["student", "rigid", "flexible", "change"], &rows);
    let _ = writeln!(out, "\nwaste: {} rigid, {} flexible", r.waste_rigid, r.waste_flexible);
    let verdict = if r.weakly_dominates { "yes" } else { "no" };
    let _ = writeln!(out, "flexible outcome weakly dominates: {verdict}");
    match (&r.decomposition_failure, r.chain_matches) {
        (Some(why), _) => {
            let _ = writeln!(out, "unit decomposition unavailable: {why}");
        }
        (None, Some(ok)) => {
            let _ = writeln!(
                out,
                "{} unit increments, chained outcome {}, {} steps with a student worse off",
                r.unit_steps,
                if ok { "matches" } else { "differs" },
                r.worse_steps
            );
        }
        (None, None) => {}
    }
    out
}

pub fn render_audit(r: &AuditReport) -> String {
    let rows: Vec<Vec<String>> = r
        .suites
        .iter()
        .map(|s| {
            let status = if s.notes.is_empty() || !s.passed() {
                if s.passed() { "pass" } else { "FAIL" }.to_string()
            } else {
                format!("{} noted", s.notes.len())
            };
            vec![
                s.name.to_string(),
                s.checked.to_string(),
                s.refused.to_string(),
                s.failures.len().to_string(),
                status,
            ]
        })
        .collect();
    let mut out = format!("audit of {} instances, seed {}\n\n", r.instances, r.seed);
    out.push_str(&table(&["suite", "checked", "refused", "failures", "status"], &rows));
    for s in r.suites.iter().filter(|s| !s.passed()) {
        let _ = writeln!(out, "\n{} failures:", s.name);
        for f in s.failures.iter().take(10) {
            let _ = writeln!(out, "  {}: {}", f.instance, f.detail);
        }
        if s.failures.len() > 10 {
            let _ = writeln!(out, "  ... {} more", s.failures.len() - 10);
        }
    }
    out
}

/// Pretty JSON with a trailing newline.
pub fn to_machine<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports always serialize");
    s.push('\n');
    s
}
