use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seeded;

/// Which of the two observed components an interval or index belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    /// `Y^1`, observed at the S-times.
    First,
    /// `Y^2`, observed at the T-times.
    Second,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::First => Side::Second,
            Side::Second => Side::First,
        }
    }

    pub fn from_number(n: u8) -> Result<Side> {
        match n {
            1 => Ok(Side::First),
            2 => Ok(Side::Second),
            _ => Err(Error::InvalidArgument(format!("side must be 1 or 2, got {n}"))),
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Side::First => 1,
            Side::Second => 2,
        }
    }
}

/// The two observation-time sequences `0 = S^0 < ... < S^{l1} = T` and
/// `0 = T^0 < ... < T^{l2} = T`, plus their merged grid.
///
/// Interval `i` (0-based) of a side is the half-open `[times[i], times[i+1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationGrid {
    s_times: Vec<f64>,
    t_times: Vec<f64>,
    horizon: f64,
    bn: f64,
    merged: Vec<f64>,
    merged_s: Vec<usize>,
    merged_t: Vec<usize>,
}

/// JSON document form of a grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridFile {
    pub s_times: Vec<f64>,
    pub t_times: Vec<f64>,
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bn: Option<f64>,
}

fn validate_side(name: &str, times: &[f64], horizon: f64) -> Result<()> {
    if times.len() < 2 {
        return Err(Error::InvalidGrid(format!("{name} needs at least two times")));
    }
    if times[0] != 0.0 {
        return Err(Error::InvalidGrid(format!("{name} must start at 0, got {}", times[0])));
    }
    if *times.last().unwrap() != horizon {
        return Err(Error::InvalidGrid(format!(
            "{name} must end at the horizon {horizon}, got {}",
            times.last().unwrap()
        )));
    }
    for w in times.windows(2) {
        if !(w[1] > w[0]) || !w[1].is_finite() {
            return Err(Error::InvalidGrid(format!(
                "{name} not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

impl ObservationGrid {
    /// Builds a grid; `bn` defaults to `l1 + l2`.
    pub fn new(s_times: Vec<f64>, t_times: Vec<f64>, bn: Option<f64>) -> Result<Self> {
        let horizon = *s_times
            .last()
            .ok_or_else(|| Error::InvalidGrid("empty s_times".into()))?;
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidGrid(format!("horizon must be positive, got {horizon}")));
        }
        validate_side("s_times", &s_times, horizon)?;
        validate_side("t_times", &t_times, horizon)?;
        let bn = bn.unwrap_or((s_times.len() + t_times.len() - 2) as f64);
        if !(bn > 0.0) || !bn.is_finite() {
            return Err(Error::InvalidGrid(format!("bn must be positive, got {bn}")));
        }

        let mut merged = Vec::with_capacity(s_times.len() + t_times.len());
        let mut merged_s = Vec::with_capacity(s_times.len());
        let mut merged_t = Vec::with_capacity(t_times.len());
        let (mut a, mut b) = (0, 0);
        while a < s_times.len() || b < t_times.len() {
            let sa = s_times.get(a).copied().unwrap_or(f64::INFINITY);
            let tb = t_times.get(b).copied().unwrap_or(f64::INFINITY);
            let k = merged.len();
            if sa < tb {
                merged.push(sa);
                merged_s.push(k);
                a += 1;
            } else if tb < sa {
                merged.push(tb);
                merged_t.push(k);
                b += 1;
            } else {
                merged.push(sa);
                merged_s.push(k);
                merged_t.push(k);
                a += 1;
                b += 1;
            }
        }

        Ok(Self { s_times, t_times, horizon, bn, merged, merged_s, merged_t })
    }

    pub fn with_bn(mut self, bn: f64) -> Result<Self> {
        if !(bn > 0.0) || !bn.is_finite() {
            return Err(Error::InvalidGrid(format!("bn must be positive, got {bn}")));
        }
        self.bn = bn;
        Ok(self)
    }

    pub fn s_times(&self) -> &[f64] {
        &self.s_times
    }

    pub fn t_times(&self) -> &[f64] {
        &self.t_times
    }

    pub fn times(&self, side: Side) -> &[f64] {
        match side {
            Side::First => &self.s_times,
            Side::Second => &self.t_times,
        }
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn bn(&self) -> f64 {
        self.bn
    }

    pub fn l1(&self) -> usize {
        self.s_times.len() - 1
    }

    pub fn l2(&self) -> usize {
        self.t_times.len() - 1
    }

    pub fn intervals(&self, side: Side) -> usize {
        self.times(side).len() - 1
    }

    pub fn merged(&self) -> &[f64] {
        &self.merged
    }

    /// Position of `times(side)[i]` in the merged grid.
    pub fn merged_index(&self, side: Side, i: usize) -> usize {
        match side {
            Side::First => self.merged_s[i],
            Side::Second => self.merged_t[i],
        }
    }

    pub fn is_synchronous(&self) -> bool {
        self.s_times == self.t_times
    }

    /// Interval `i` of `side` as `(left, right)`.
    pub fn interval(&self, side: Side, i: usize) -> (f64, f64) {
        let t = self.times(side);
        (t[i], t[i + 1])
    }

    /// `r_n`: the longest interval over both sides.
    pub fn mesh(&self) -> f64 {
        self.s_times
            .windows(2)
            .chain(self.t_times.windows(2))
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// Counting process `N_t = #{i >= 1 : times[i] <= t}`.
    pub fn counting(&self, side: Side, t: f64) -> usize {
        let times = self.times(side);
        times[1..].partition_point(|&s| s <= t)
    }

    /// Number of intervals of `side` meeting `[0, t)`, i.e. `tr E^side(t)`.
    pub fn active_intervals(&self, side: Side, t: f64) -> usize {
        let times = self.times(side);
        times[..times.len() - 1].partition_point(|&s| s < t)
    }

    /// Index `j' = max{j : other_times[j] <= t}`.
    pub fn previous_tick(&self, side: Side, t: f64) -> usize {
        let times = self.times(side);
        times.partition_point(|&s| s <= t).saturating_sub(1)
    }

    pub fn to_file(&self) -> GridFile {
        GridFile {
            s_times: self.s_times.clone(),
            t_times: self.t_times.clone(),
            horizon: self.horizon,
            bn: Some(self.bn),
        }
    }

    pub fn from_file(file: GridFile) -> Result<Self> {
        let grid = Self::new(file.s_times, file.t_times, file.bn)?;
        if grid.horizon != file.horizon {
            return Err(Error::InvalidGrid(format!(
                "declared horizon {} does not match last time {}",
                file.horizon, grid.horizon
            )));
        }
        Ok(grid)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("grid serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GridFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_file(file)
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// Loads one `index,time` CSV per side.
    pub fn load_csv_pair(s_path: impl AsRef<Path>, t_path: impl AsRef<Path>, bn: Option<f64>) -> Result<Self> {
        let s = read_time_csv(s_path.as_ref())?;
        let t = read_time_csv(t_path.as_ref())?;
        Self::new(s, t, bn)
    }

    pub fn write_csv_side(&self, side: Side, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        w.write_record(["index", "time"]).map_err(|e| csv_io(path, e))?;
        for (i, t) in self.times(side).iter().enumerate() {
            w.write_record([i.to_string(), format_f64(*t)]).map_err(|e| csv_io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn format_f64(v: f64) -> String {
    // shortest repr that round-trips
    format!("{v:?}")
}

pub(crate) fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse(format!("{}: {other:?}", path.display())),
    }
}

fn read_time_csv(path: &Path) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    let mut rows: Vec<(usize, f64)> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_io(path, e))?;
        if rec.len() != 2 {
            return Err(Error::Parse(format!("{}: expected `index,time` rows", path.display())));
        }
        let idx: usize = rec[0].trim().parse().map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let t: f64 = rec[1].trim().parse().map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        rows.push((idx, t));
    }
    rows.sort_by_key(|r| r.0);
    for (k, (idx, _)) in rows.iter().enumerate() {
        if *idx != k {
            return Err(Error::Parse(format!("{}: indices must be 0..n without gaps", path.display())));
        }
    }
    Ok(rows.into_iter().map(|r| r.1).collect())
}

/// Points of a homogeneous Poisson process of the given intensity on `(0, horizon)`,
/// wrapped with `0` and `horizon`.
pub fn poisson_times<R: Rng + ?Sized>(rng: &mut R, intensity: f64, horizon: f64) -> Vec<f64> {
    let mut times = vec![0.0];
    if intensity > 0.0 && intensity.is_finite() {
        let exp = Exp::new(intensity).expect("positive intensity");
        let mut t = 0.0;
        loop {
            t += exp.sample(rng);
            if t >= horizon {
                break;
            }
            if t > 0.0 {
                times.push(t);
            }
        }
    }
    times.push(horizon);
    times
}

/// Two independent Poisson processes with intensities `bn * rate1`, `bn * rate2`.
pub fn gen_poisson_grid(rate1: f64, rate2: f64, horizon: f64, bn: f64, seed: u64) -> Result<ObservationGrid> {
    let mut rng = seeded(seed, 0);
    poisson_grid_with(&mut rng, rate1, rate2, horizon, bn)
}

pub(crate) fn poisson_grid_with(
    rng: &mut ChaCha8Rng,
    rate1: f64,
    rate2: f64,
    horizon: f64,
    bn: f64,
) -> Result<ObservationGrid> {
    for (name, v) in [("rate1", rate1), ("rate2", rate2), ("horizon", horizon), ("bn", bn)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
        }
    }
    let s = poisson_times(rng, bn * rate1, horizon);
    let t = poisson_times(rng, bn * rate2, horizon);
    ObservationGrid::new(s, t, Some(bn))
}

/// Equispaced S-times and T-times shifted by `offset2` of a T-step.
pub fn gen_uniform_grid(n1: usize, n2: usize, offset2: f64, horizon: f64) -> Result<ObservationGrid> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::InvalidArgument("n1 and n2 must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&offset2) {
        return Err(Error::InvalidArgument(format!("offset2 must lie in [0, 1), got {offset2}")));
    }
    if !(horizon > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    let mut s: Vec<f64> = (0..n1).map(|i| i as f64 * horizon / n1 as f64).collect();
    s.push(horizon);
    let mut t = vec![0.0];
    t.extend((1..n2).map(|j| (j as f64 + offset2) * horizon / n2 as f64));
    t.push(horizon);
    ObservationGrid::new(s, t, Some((n1 + n2) as f64))
}

/// Grid with `n` S-observations crammed into `[0, T/n]`, otherwise equispaced with
/// step `T/n`; T-times equispaced with step `T/n`; `bn = n`.
/// This scheme breaks the local-clustering condition on the S side.
pub fn gen_clustered_grid(n: usize, horizon: f64) -> Result<ObservationGrid> {
    if n < 2 {
        return Err(Error::InvalidArgument("clustered grid needs n >= 2".into()));
    }
    let nf = n as f64;
    let mut s: Vec<f64> = (0..=n).map(|i| i as f64 * horizon / (nf * nf)).collect();
    s.extend((n + 1..2 * n - 1).map(|i| (i + 1 - n) as f64 * horizon / nf));
    s.push(horizon);
    let mut t: Vec<f64> = (0..n).map(|j| j as f64 * horizon / nf).collect();
    t.push(horizon);
    ObservationGrid::new(s, t, Some(nf))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_examples() {
        let g = gen_uniform_grid(2, 2, 0.0, 1.0).unwrap();
        assert_eq!(g.s_times(), &[0.0, 0.5, 1.0]);
        assert_eq!(g.t_times(), &[0.0, 0.5, 1.0]);
        assert_eq!(g.bn(), 4.0);

        let g = gen_uniform_grid(2, 2, 0.5, 2.0).unwrap();
        assert_eq!(g.s_times(), &[0.0, 1.0, 2.0]);
        assert_eq!(g.t_times(), &[0.0, 1.5, 2.0]);
        assert_eq!(g.merged(), &[0.0, 1.0, 1.5, 2.0]);
        assert_eq!(g.merged_index(Side::First, 1), 1);
        assert_eq!(g.merged_index(Side::Second, 1), 2);
        assert_eq!(g.merged_index(Side::Second, 2), 3);
    }

    #[test]
    fn empty_poisson_draw_gives_single_interval() {
        let g = gen_poisson_grid(1e-300, 1e-300, 1.0, 1.0, 3).unwrap();
        assert_eq!(g.s_times(), &[0.0, 1.0]);
        assert_eq!(g.t_times(), &[0.0, 1.0]);
        assert_eq!((g.l1(), g.l2()), (1, 1));
    }

    #[test]
    fn poisson_deterministic_in_seed() {
        let a = gen_poisson_grid(1.0, 2.0, 1.0, 500.0, 42).unwrap();
        let b = gen_poisson_grid(1.0, 2.0, 1.0, 500.0, 42).unwrap();
        let c = gen_poisson_grid(1.0, 2.0, 1.0, 500.0, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn poisson_counts_match_intensity() {
        // Poisson(n) count: mean n, sd sqrt(n); the mean of 100 draws has sd sqrt(n)/10.
        let n = 10_000.0;
        let counts: Vec<f64> = (0..100)
            .map(|seed| gen_poisson_grid(1.0, 1.0, 1.0, n, seed).unwrap().l1() as f64)
            .collect();
        let mean = counts.iter().sum::<f64>() / counts.len() as f64;
        assert!((mean - n).abs() < 4.0 * n.sqrt(), "mean {mean}");
        for c in &counts {
            assert!((c - n).abs() < 5.0 * n.sqrt());
        }
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(ObservationGrid::new(vec![0.0, 1.0], vec![0.0, 2.0], None).is_err());
        assert!(ObservationGrid::new(vec![0.1, 1.0], vec![0.0, 1.0], None).is_err());
        assert!(ObservationGrid::new(vec![0.0, 0.5, 0.5, 1.0], vec![0.0, 1.0], None).is_err());
        assert!(ObservationGrid::new(vec![0.0], vec![0.0], None).is_err());
    }

    #[test]
    fn file_bn_defaults_to_interval_count() {
        let g = ObservationGrid::from_json(r#"{"s_times":[0,0.5,1],"t_times":[0,1],"horizon":1}"#).unwrap();
        assert_eq!(g.bn(), 3.0);
        let back = ObservationGrid::from_json(&g.to_json()).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn counting_and_activity() {
        let g = ObservationGrid::new(vec![0.0, 0.25, 0.5, 1.0], vec![0.0, 1.0], None).unwrap();
        assert_eq!(g.counting(Side::First, 0.25), 1);
        assert_eq!(g.counting(Side::First, 0.3), 1);
        assert_eq!(g.counting(Side::First, 1.0), 3);
        // [0,t) meets intervals whose left end is < t
        assert_eq!(g.active_intervals(Side::First, 0.25), 1);
        assert_eq!(g.active_intervals(Side::First, 0.2500001), 2);
        assert_eq!(g.active_intervals(Side::First, 1.0), 3);
        assert_eq!(g.previous_tick(Side::First, 0.3), 1);
        assert_eq!(g.previous_tick(Side::First, 0.0), 0);
        assert_eq!(g.mesh(), 1.0);
    }

    #[test]
    fn clustered_grid_shape() {
        let g = gen_clustered_grid(10, 1.0).unwrap();
        assert_eq!(g.l1(), 2 * 10 - 1);
        assert_eq!(g.l2(), 10);
        assert!((g.s_times()[10] - 0.1).abs() < 1e-15);
        assert!((g.s_times()[11] - 0.2).abs() < 1e-15);
        assert_eq!(g.bn(), 10.0);
    }
}
