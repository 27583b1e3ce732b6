//! Capacity transfer schemes: how unfilled seats of earlier slot groups turn
//! into capacity for later ones.
//!
//! Groups are indexed from zero here. Group 0 always runs at its target;
//! group `k >= 1` receives the residual vector `(r_0, ..., r_{k-1})`.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

/// Default cap on the number of residual-vector steps `check_monotonic`
/// will visit before refusing.
pub const DEFAULT_MONOTONICITY_CAP: u128 = 20_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CapacityTransferScheme {
    /// `capacity(k) = target(k) + sum of r_j over the donors of k`, where a
    /// donor's residual is only counted by the first later group that lists
    /// it. A residual that recipient leaves unused shows up in its own
    /// residual and can travel on from there.
    ForwardSum { donors: Vec<Vec<usize>> },
    /// Explicit capacities per group keyed by residual prefix. Unlisted
    /// vectors fall back to the group's target.
    Table {
        entries: Vec<BTreeMap<Vec<u32>, u32>>,
    },
}

impl CapacityTransferScheme {
    /// Every group keeps its target no matter what is left over upstream.
    pub fn rigid(groups: usize) -> Self {
        CapacityTransferScheme::ForwardSum {
            donors: vec![Vec::new(); groups],
        }
    }

    /// Number of groups the scheme is written for.
    pub fn groups(&self) -> usize {
        match self {
            CapacityTransferScheme::ForwardSum { donors } => donors.len(),
            CapacityTransferScheme::Table { entries } => entries.len(),
        }
    }

    pub fn is_rigid(&self) -> bool {
        match self {
            CapacityTransferScheme::ForwardSum { donors } => donors.iter().all(Vec::is_empty),
            CapacityTransferScheme::Table { entries } => entries.iter().all(BTreeMap::is_empty),
        }
    }

    /// Dynamic capacity of `group` given the residuals of the groups before
    /// it. `residuals` must have exactly `group` entries.
    pub fn capacity(&self, targets: &[u32], group: usize, residuals: &[u32]) -> u32 {
        debug_assert_eq!(residuals.len(), group);
        if group == 0 {
            return targets[0];
        }
        match self {
            CapacityTransferScheme::ForwardSum { donors } => {
                let mut cap = targets[group];
                for &j in &donors[group] {
                    if first_recipient(donors, j) == Some(group) {
                        cap += residuals[j];
                    }
                }
                cap
            }
            CapacityTransferScheme::Table { entries } => entries[group]
                .get(residuals)
                .copied()
                .unwrap_or(targets[group]),
        }
    }

    /// Donor lists that actually transfer residuals (first recipient only).
    /// `None` for table schemes.
    pub fn effective_donors(&self) -> Option<Vec<Vec<usize>>> {
        match self {
            CapacityTransferScheme::ForwardSum { donors } => Some(
                donors
                    .iter()
                    .enumerate()
                    .map(|(k, ds)| {
                        ds.iter()
                            .copied()
                            .filter(|&j| first_recipient(donors, j) == Some(k))
                            .collect()
                    })
                    .collect(),
            ),
            CapacityTransferScheme::Table { .. } => None,
        }
    }

    /// Structural problems independent of any residual values: wrong group
    /// count, donors that do not precede their recipient, residual keys of
    /// the wrong length.
    pub fn shape_errors(&self, groups: usize) -> Vec<String> {
        let mut errs = Vec::new();
        if self.groups() != groups {
            errs.push(format!(
                "scheme describes {} groups but the precedence sequence has {groups}",
                self.groups()
            ));
        }
        match self {
            CapacityTransferScheme::ForwardSum { donors } => {
                for (k, ds) in donors.iter().enumerate() {
                    for &j in ds {
                        if j >= k {
                            errs.push(format!(
                                "group {} lists donor group {} which does not precede it",
                                k + 1,
                                j + 1
                            ));
                        }
                    }
                }
            }
            CapacityTransferScheme::Table { entries } => {
                for (k, table) in entries.iter().enumerate() {
                    if k == 0 && !table.is_empty() {
                        errs.push("group 1 always runs at its target; it takes no table entries".into());
                    }
                    for key in table.keys() {
                        if key.len() != k {
                            errs.push(format!(
                                "group {} entry {:?} should have {} residuals",
                                k + 1,
                                key,
                                k
                            ));
                        }
                    }
                }
            }
        }
        errs
    }

    /// Groups whose capacity at the all-zero residual vector differs from
    /// their target.
    pub fn boundary_errors(&self, targets: &[u32]) -> Vec<usize> {
        (1..targets.len().min(self.groups()))
            .filter(|&k| self.capacity(targets, k, &vec![0; k]) != targets[k])
            .collect()
    }

    /// Explicit table over `[0, bound]^k` for every group, keeping only the
    /// entries that differ from the target.
    pub fn to_table(&self, targets: &[u32], bound: u32) -> CapacityTransferScheme {
        let groups = self.groups();
        let mut entries = vec![BTreeMap::new(); groups];
        for (k, table) in entries.iter_mut().enumerate().skip(1) {
            for r in Lattice::new(k, bound) {
                let q = self.capacity(targets, k, &r);
                if q != targets[k] {
                    table.insert(r, q);
                }
            }
        }
        CapacityTransferScheme::Table { entries }
    }

    /// Same scheme with `capacity(group, point)` raised by one.
    pub fn bumped(&self, targets: &[u32], bound: u32, group: usize, point: &[u32]) -> CapacityTransferScheme {
        let mut table = match self {
            CapacityTransferScheme::Table { .. } => self.clone(),
            CapacityTransferScheme::ForwardSum { .. } => self.to_table(targets, bound),
        };
        let current = self.capacity(targets, group, point);
        if let CapacityTransferScheme::Table { entries } = &mut table {
            entries[group].insert(point.to_vec(), current + 1);
        }
        table
    }
}

fn first_recipient(donors: &[Vec<usize>], donor: usize) -> Option<usize> {
    (donor + 1..donors.len()).find(|&k| donors[k].contains(&donor))
}

/// Lexicographic enumeration of `[0, bound]^dim`.
#[derive(Debug, Clone)]
pub struct Lattice {
    bound: u32,
    next: Option<Vec<u32>>,
}

impl Lattice {
    pub fn new(dim: usize, bound: u32) -> Self {
        Lattice {
            bound,
            next: Some(vec![0; dim]),
        }
    }

    pub fn size(dim: usize, bound: u32) -> u128 {
        (bound as u128 + 1).saturating_pow(dim as u32)
    }
}

impl Iterator for Lattice {
    type Item = Vec<u32>;

    fn next(&mut self) -> Option<Vec<u32>> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut pos = succ.len();
        loop {
            if pos == 0 {
                break;
            }
            pos -= 1;
            if succ[pos] < self.bound {
                succ[pos] += 1;
                self.next = Some(succ);
                break;
            }
            succ[pos] = 0;
        }
        Some(current)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MonotonicityCondition {
    /// More vacancies upstream lowered a group's capacity.
    CapacityDecrease,
    /// Capacities grew by more than the extra vacancies that fed them.
    ExcessTransfer,
}

/// A pair of residual vectors `lower <= upper` at which `group` breaks one
/// of the two monotonicity conditions. `group` is zero-based.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct MonotonicityViolation {
    pub group: usize,
    pub lower: Vec<u32>,
    pub upper: Vec<u32>,
    pub condition: MonotonicityCondition,
}

impl fmt::Display for MonotonicityViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.condition {
            MonotonicityCondition::CapacityDecrease => "capacity decreases",
            MonotonicityCondition::ExcessTransfer => "transfers exceed the extra vacancies",
        };
        write!(
            f,
            "group {}: {what} between residuals {:?} and {:?}",
            self.group + 1,
            self.lower,
            self.upper
        )
    }
}

/// Exhaustive monotonicity check over residual vectors in `[0, bound]`.
///
/// Both conditions say a function of the residual vector is monotone along
/// the componentwise order, so it is enough to visit every covering pair
/// `(r, r + e_m)`; any comparable pair is a chain of those. Returns the first
/// violation in (group, lower vector, coordinate) order.
pub fn check_monotonic(
    scheme: &CapacityTransferScheme,
    targets: &[u32],
    bound: u32,
    cap: u128,
) -> Result<Option<MonotonicityViolation>> {
    let groups = targets.len().min(scheme.groups());
    let required: u128 = (1..groups)
        .map(|j| Lattice::size(j, bound).saturating_mul(j as u128 * j as u128))
        .fold(0u128, u128::saturating_add);
    if required > cap {
        return Err(Error::CapExceeded {
            what: "monotonicity check",
            required,
            cap,
        });
    }
    for j in 1..groups {
        for lower in Lattice::new(j, bound) {
            for m in 0..j {
                if lower[m] == bound {
                    continue;
                }
                let mut upper = lower.clone();
                upper[m] += 1;
                let q_lo = scheme.capacity(targets, j, &lower);
                let q_hi = scheme.capacity(targets, j, &upper);
                if q_hi < q_lo {
                    return Ok(Some(MonotonicityViolation {
                        group: j,
                        lower,
                        upper,
                        condition: MonotonicityCondition::CapacityDecrease,
                    }));
                }
                // sum over groups 1..=j of the capacity change, against the
                // single extra vacancy at coordinate m
                let gained: i64 = (1..=j)
                    .map(|g| {
                        scheme.capacity(targets, g, &upper[..g]) as i64
                            - scheme.capacity(targets, g, &lower[..g]) as i64
                    })
                    .sum();
                if gained > 1 {
                    return Ok(Some(MonotonicityViolation {
                        group: j,
                        lower,
                        upper,
                        condition: MonotonicityCondition::ExcessTransfer,
                    }));
                }
            }
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ex1_scheme() -> CapacityTransferScheme {
        CapacityTransferScheme::ForwardSum {
            donors: vec![vec![], vec![], vec![0, 1]],
        }
    }

    /// All comparable pairs, straight from the definition. Used only to
    /// cross-check the covering-pair search.
    fn monotone_by_all_pairs(scheme: &CapacityTransferScheme, targets: &[u32], bound: u32) -> bool {
        let groups = targets.len();
        for j in 1..groups {
            for lo in Lattice::new(j, bound) {
                for hi in Lattice::new(j, bound) {
                    if !lo.iter().zip(&hi).all(|(a, b)| a <= b) {
                        continue;
                    }
                    if scheme.capacity(targets, j, &hi) < scheme.capacity(targets, j, &lo) {
                        return false;
                    }
                    let dq: i64 = (1..=j)
                        .map(|m| {
                            scheme.capacity(targets, m, &hi[..m]) as i64
                                - scheme.capacity(targets, m, &lo[..m]) as i64
                        })
                        .sum();
                    let dr: i64 = (0..j).map(|m| hi[m] as i64 - lo[m] as i64).sum();
                    if dq > dr {
                        return false;
                    }
                }
            }
        }
        true
    }

    #[test]
    fn lattice_is_lexicographic() {
        let pts: Vec<_> = Lattice::new(2, 1).collect();
        assert_eq!(pts, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
        assert_eq!(Lattice::new(0, 3).count(), 1);
    }

    #[test]
    fn ex1_scheme_capacities() {
        let s = ex1_scheme();
        let t = [1, 1, 0];
        assert_eq!(s.capacity(&t, 0, &[]), 1);
        assert_eq!(s.capacity(&t, 1, &[1]), 1);
        assert_eq!(s.capacity(&t, 2, &[1, 1]), 2);
        assert_eq!(s.capacity(&t, 2, &[0, 1]), 1);
    }

    #[test]
    fn ex1_scheme_is_monotone() {
        // exhaustive: all (r1, r2) pairs up to (2, 2)
        assert!(monotone_by_all_pairs(&ex1_scheme(), &[1, 1, 0], 2));
        assert_eq!(check_monotonic(&ex1_scheme(), &[1, 1, 0], 2, u128::MAX).unwrap(), None);
    }

    #[test]
    fn constant_scheme_is_monotone() {
        let s = CapacityTransferScheme::rigid(4);
        assert_eq!(check_monotonic(&s, &[2, 0, 1, 3], 6, u128::MAX).unwrap(), None);
    }

    #[test]
    fn decreasing_table_reports_first_pair() {
        let mut entries = vec![BTreeMap::new(); 3];
        entries[2].insert(vec![1, 0], 0);
        let s = CapacityTransferScheme::Table { entries };
        let v = check_monotonic(&s, &[1, 0, 1], 2, u128::MAX).unwrap().unwrap();
        assert_eq!(v.group, 2);
        assert_eq!(v.lower, vec![0, 0]);
        assert_eq!(v.upper, vec![1, 0]);
        assert_eq!(v.condition, MonotonicityCondition::CapacityDecrease);
    }

    #[test]
    fn double_counted_transfer_is_excess() {
        // q_2 = r_1 and q_3 = r_1 counted again through a table
        let mut entries = vec![BTreeMap::new(); 3];
        for r1 in 0..=2u32 {
            entries[1].insert(vec![r1], r1);
            for r2 in 0..=2u32 {
                entries[2].insert(vec![r1, r2], r1);
            }
        }
        let s = CapacityTransferScheme::Table { entries };
        let v = check_monotonic(&s, &[1, 0, 0], 2, u128::MAX).unwrap().unwrap();
        assert_eq!(v.condition, MonotonicityCondition::ExcessTransfer);
        assert!(!monotone_by_all_pairs(&s, &[1, 0, 0], 2));
    }

    #[test]
    fn forward_sum_counts_each_donor_once() {
        // group 2 and 3 both list group 1; only group 2 receives r_1
        let s = CapacityTransferScheme::ForwardSum {
            donors: vec![vec![], vec![0], vec![0, 1]],
        };
        let t = [2, 0, 0];
        assert_eq!(s.capacity(&t, 1, &[2]), 2);
        assert_eq!(s.capacity(&t, 2, &[2, 1]), 1);
        assert_eq!(check_monotonic(&s, &t, 3, u128::MAX).unwrap(), None);
    }

    #[test]
    fn refuses_oversized_domain() {
        let s = CapacityTransferScheme::rigid(12);
        let err = check_monotonic(&s, &[1; 12], 9, 1000).unwrap_err();
        assert!(matches!(err, Error::CapExceeded { .. }));
    }

    #[test]
    fn table_round_trip_preserves_capacities() {
        let s = ex1_scheme();
        let t = [1, 1, 0];
        let table = s.to_table(&t, 2);
        for k in 1..3 {
            for r in Lattice::new(k, 2) {
                assert_eq!(s.capacity(&t, k, &r), table.capacity(&t, k, &r));
            }
        }
    }

    fn arb_forward_sum() -> impl Strategy<Value = (Vec<Vec<usize>>, Vec<u32>)> {
        (2usize..5).prop_flat_map(|g| {
            (
                proptest::collection::vec(proptest::collection::vec(any::<bool>(), g), g),
                proptest::collection::vec(0u32..3, g),
            )
                .prop_map(move |(bits, targets)| {
                    let donors = (0..g)
                        .map(|k| (0..k).filter(|&j| bits[k][j]).collect())
                        .collect();
                    (donors, targets)
                })
        })
    }

    fn arb_table() -> impl Strategy<Value = (CapacityTransferScheme, Vec<u32>)> {
        (2usize..4, proptest::collection::vec(0u32..3, 3)).prop_flat_map(|(g, targets)| {
            let targets: Vec<u32> = targets[..g].to_vec();
            let bound = 2u32;
            let npoints: usize = (1..g).map(|k| 3usize.pow(k as u32)).sum();
            proptest::collection::vec(0u32..5, npoints).prop_map(move |vals| {
                let mut entries = vec![BTreeMap::new(); g];
                let mut it = vals.into_iter();
                for (k, table) in entries.iter_mut().enumerate().skip(1) {
                    for r in Lattice::new(k, bound) {
                        let v = it.next().unwrap();
                        if r.iter().all(|&x| x == 0) {
                            continue;
                        }
                        table.insert(r, v);
                    }
                }
                (CapacityTransferScheme::Table { entries }, targets.clone())
            })
        })
    }

    proptest! {
        #[test]
        fn forward_sums_are_monotone((donors, targets) in arb_forward_sum()) {
            let s = CapacityTransferScheme::ForwardSum { donors };
            let bound = targets.iter().sum::<u32>().max(1);
            prop_assert_eq!(check_monotonic(&s, &targets, bound, u128::MAX).unwrap(), None);
            prop_assert!(s.boundary_errors(&targets).is_empty());
        }

        #[test]
        fn covering_pairs_agree_with_all_pairs((scheme, targets) in arb_table()) {
            let fast = check_monotonic(&scheme, &targets, 2, u128::MAX).unwrap().is_none();
            prop_assert_eq!(fast, monotone_by_all_pairs(&scheme, &targets, 2));
        }
    }
}
