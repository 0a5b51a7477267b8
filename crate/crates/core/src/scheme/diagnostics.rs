use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scheme::grid::{ObservationGrid, Side};

/// Exponents of the local-clustering condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct A2Deltas {
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
}

impl Default for A2Deltas {
    fn default() -> Self {
        Self { delta1: 0.05, delta2: 0.05, delta3: 0.05 }
    }
}

impl A2Deltas {
    pub fn new(delta1: f64, delta2: f64, delta3: f64) -> Result<Self> {
        let d = Self { delta1, delta2, delta3 };
        d.validate()?;
        Ok(d)
    }

    /// `(5δ1 + 4δ3) ∨ (3δ1 + 2δ2 + 2δ3) ∨ (3δ1/2 + 3δ2) < 1/2`, all positive.
    pub fn validate(&self) -> Result<()> {
        let Self { delta1: d1, delta2: d2, delta3: d3 } = *self;
        if !(d1 > 0.0 && d2 > 0.0 && d3 > 0.0) {
            return Err(Error::InvalidArgument("deltas must be positive".into()));
        }
        let lhs = (5.0 * d1 + 4.0 * d3).max(3.0 * d1 + 2.0 * d2 + 2.0 * d3).max(1.5 * d1 + 3.0 * d2);
        if lhs < 0.5 {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "deltas ({d1}, {d2}, {d3}) violate the exponent constraint: {lhs} >= 1/2"
            )))
        }
    }
}

/// Worst index pair found on one side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterCheck {
    /// `min |S^{j2} - S^{j1}| / |j2 - j1|` over pairs with `|j2 - j1| >= bn^δ2`;
    /// `None` when no pair qualifies.
    pub min_mean_spacing: Option<f64>,
    /// Pair attaining the minimum.
    pub argmin: Option<(usize, usize)>,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeDiagnostics {
    pub l1: usize,
    pub l2: usize,
    pub bn: f64,
    /// `r_n`.
    pub mesh: f64,
    /// `r_n · bn^{1-δ1}`; stays bounded in probability when the mesh condition holds.
    pub mesh_ratio: f64,
    pub deltas: A2Deltas,
    /// Minimum index gap `bn^δ2` for a pair to qualify.
    pub min_gap: f64,
    /// Spacing threshold `bn^{-1-δ3}`.
    pub spacing_threshold: f64,
    pub side1: ClusterCheck,
    pub side2: ClusterCheck,
    pub violation: bool,
}

fn cluster_check(times: &[f64], min_gap: f64, threshold: f64) -> ClusterCheck {
    let l = times.len() - 1;
    let gap0 = (min_gap.ceil() as usize).max(1);
    if gap0 > l {
        return ClusterCheck { min_mean_spacing: None, argmin: None, violated: false };
    }
    // A window of length >= 2*gap0 splits into two windows of length >= gap0, and its
    // mean spacing is a convex combination of theirs; gaps in [gap0, 2*gap0) suffice.
    let mut best = f64::INFINITY;
    let mut arg = (0, gap0);
    for gap in gap0..(2 * gap0).min(l + 1) {
        for j1 in 0..=(l - gap) {
            let m = (times[j1 + gap] - times[j1]) / gap as f64;
            if m < best {
                best = m;
                arg = (j1, j1 + gap);
            }
        }
    }
    ClusterCheck { min_mean_spacing: Some(best), argmin: Some(arg), violated: best <= threshold }
}

/// Evaluates, on this one realization, the clustering events whose probabilities
/// the condition controls: a violation is a pair `j1 < j2` with
/// `j2 - j1 >= bn^δ2` and `(S^{j2} - S^{j1}) / (j2 - j1) <= bn^{-1-δ3}`.
pub fn check_a2(grid: &ObservationGrid, deltas: A2Deltas) -> Result<SchemeDiagnostics> {
    deltas.validate()?;
    let bn = grid.bn();
    let min_gap = bn.powf(deltas.delta2);
    let threshold = bn.powf(-1.0 - deltas.delta3);
    let side1 = cluster_check(grid.s_times(), min_gap, threshold);
    let side2 = cluster_check(grid.t_times(), min_gap, threshold);
    let mesh = grid.mesh();
    Ok(SchemeDiagnostics {
        l1: grid.l1(),
        l2: grid.l2(),
        bn,
        mesh,
        mesh_ratio: mesh * bn.powf(1.0 - deltas.delta1),
        deltas,
        min_gap,
        spacing_threshold: threshold,
        violation: side1.violated || side2.violated,
        side1,
        side2,
    })
}

/// Index into the combined list of intervals: `0..l1` are the S-intervals,
/// `l1..l1+l2` the T-intervals.
fn combined_interval(grid: &ObservationGrid, l: usize) -> Result<(f64, f64)> {
    let (l1, l2) = (grid.l1(), grid.l2());
    if l < l1 {
        Ok(grid.interval(Side::First, l))
    } else if l < l1 + l2 {
        Ok(grid.interval(Side::Second, l - l1))
    } else {
        Err(Error::InvalidArgument(format!("interval index {l} out of range 0..{}", l1 + l2)))
    }
}

/// Union of all intervals of one side meeting `[lo, hi)`.
fn hull_of_meeting(times: &[f64], lo: f64, hi: f64) -> (f64, f64) {
    let n = times.len() - 1;
    // first interval i with times[i+1] > lo, last with times[i] < hi
    let first = times[1..].partition_point(|&r| r <= lo).min(n - 1);
    let last = times[..n].partition_point(|&l| l < hi).max(1) - 1;
    (times[first], times[last + 1])
}

/// `θ(p, l)`: the union of intervals reachable from interval `l` by `2p` transfers
/// between intersecting intervals of either grid (half-open intersection).
pub fn theta_interval(grid: &ObservationGrid, p: usize, l: usize) -> Result<(f64, f64)> {
    let (mut lo, mut hi) = combined_interval(grid, l)?;
    for _ in 0..2 * p {
        let (a1, b1) = hull_of_meeting(grid.s_times(), lo, hi);
        let (a2, b2) = hull_of_meeting(grid.t_times(), lo, hi);
        let (nlo, nhi) = (a1.min(a2), b1.max(b2));
        if nlo == lo && nhi == hi {
            break;
        }
        lo = nlo;
        hi = nhi;
    }
    Ok((lo, hi))
}

/// `Σ_l |θ(p, l)|` for `p = 0..=p_max`.
pub fn theta_sums(grid: &ObservationGrid, p_max: usize) -> Vec<f64> {
    let total = grid.l1() + grid.l2();
    let mut sums = vec![0.0; p_max + 1];
    for l in 0..total {
        for (p, s) in sums.iter_mut().enumerate() {
            let (a, b) = theta_interval(grid, p, l).expect("index in range");
            *s += b - a;
        }
    }
    sums
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheme::grid::{gen_clustered_grid, gen_poisson_grid, gen_uniform_grid};

    #[test]
    fn delta_constraint() {
        assert!(A2Deltas::default().validate().is_ok());
        assert!(A2Deltas::new(0.1, 0.05, 0.05).is_err());
        assert!(A2Deltas::new(0.0, 0.05, 0.05).is_err());
        assert!(A2Deltas::new(0.01, 0.15, 0.01).is_ok());
        assert!(A2Deltas::new(0.01, 0.17, 0.01).is_err());
    }

    #[test]
    fn uniform_grid_has_no_violation() {
        let g = gen_uniform_grid(1000, 1000, 0.0, 1.0).unwrap().with_bn(1000.0).unwrap();
        let d = check_a2(&g, A2Deltas::default()).unwrap();
        assert!(!d.violation);
        assert!((d.side1.min_mean_spacing.unwrap() - 1e-3).abs() < 1e-12);
        assert!((d.mesh - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn clustered_grid_is_flagged() {
        let g = gen_clustered_grid(1000, 1.0).unwrap();
        let d = check_a2(&g, A2Deltas::default()).unwrap();
        assert!(d.violation);
        assert!(d.side1.violated);
        assert!(!d.side2.violated);
    }

    #[test]
    fn single_intervals_vacuous() {
        let g = ObservationGrid::new(vec![0.0, 1.0], vec![0.0, 1.0], Some(1000.0)).unwrap();
        let d = check_a2(&g, A2Deltas::default()).unwrap();
        assert!(!d.violation);
        assert_eq!(d.side1.min_mean_spacing, None);
    }

    #[test]
    fn window_reduction_matches_all_pairs() {
        for seed in 0..5 {
            let g = gen_poisson_grid(1.0, 1.0, 1.0, 80.0, seed).unwrap();
            let times = g.s_times();
            for gap0 in [1.0, 2.5, 4.0] {
                let fast = cluster_check(times, gap0, 0.0);
                let mut brute = f64::INFINITY;
                let l = times.len() - 1;
                for j1 in 0..=l {
                    for j2 in j1 + 1..=l {
                        if (j2 - j1) as f64 >= gap0 {
                            brute = brute.min((times[j2] - times[j1]) / (j2 - j1) as f64);
                        }
                    }
                }
                assert!((fast.min_mean_spacing.unwrap() - brute).abs() < 1e-15);
            }
        }
    }

    /// Explicit chain enumeration: sets of intervals reachable by k transfers.
    fn theta_brute(grid: &ObservationGrid, p: usize, l: usize) -> (f64, f64) {
        let mut all: Vec<(f64, f64)> = (0..grid.l1()).map(|i| grid.interval(Side::First, i)).collect();
        all.extend((0..grid.l2()).map(|j| grid.interval(Side::Second, j)));
        if p == 0 {
            return all[l];
        }
        let meets = |a: (f64, f64), b: (f64, f64)| a.0 < b.1 && b.0 < a.1;
        let mut frontier: Vec<bool> = all.iter().map(|&k| meets(k, all[l])).collect();
        for _ in 1..2 * p {
            let next: Vec<bool> = (0..all.len())
                .map(|m| (0..all.len()).any(|k| frontier[k] && meets(all[k], all[m])))
                .collect();
            frontier = next;
        }
        let picked: Vec<(f64, f64)> = (0..all.len()).filter(|&k| frontier[k]).map(|k| all[k]).collect();
        let lo = picked.iter().map(|k| k.0).fold(f64::INFINITY, f64::min);
        let hi = picked.iter().map(|k| k.1).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    #[test]
    fn theta_matches_chain_enumeration() {
        for seed in 0..4 {
            let g = gen_poisson_grid(1.0, 1.5, 1.0, 8.0, seed).unwrap();
            for l in 0..g.l1() + g.l2() {
                for p in 0..4 {
                    assert_eq!(theta_interval(&g, p, l).unwrap(), theta_brute(&g, p, l), "l={l} p={p}");
                }
            }
        }
        let g = gen_uniform_grid(6, 5, 0.3, 1.0).unwrap();
        for l in 0..11 {
            for p in 0..3 {
                assert_eq!(theta_interval(&g, p, l).unwrap(), theta_brute(&g, p, l));
            }
        }
    }

    #[test]
    fn theta_edge_cases() {
        let g = gen_uniform_grid(5, 5, 0.0, 1.0).unwrap();
        assert_eq!(theta_interval(&g, 0, 2).unwrap(), g.interval(Side::First, 2));
        // coincident grids: half-open intervals never reach their neighbours
        assert_eq!(theta_interval(&g, 3, 2).unwrap(), g.interval(Side::First, 2));
        let g = gen_uniform_grid(5, 5, 0.5, 1.0).unwrap();
        assert_eq!(theta_interval(&g, 10, 4).unwrap(), (0.0, 1.0));
        assert!(theta_interval(&g, 1, 10).is_err());
        // [0.4, 0.6) -> T-partners [0.3, 0.7) -> S-intervals [0.2, 0.8)
        let (a, b) = theta_interval(&g, 1, 2).unwrap();
        assert!((a - 0.2).abs() < 1e-12 && (b - 0.8).abs() < 1e-12, "{a} {b}");
    }
}
