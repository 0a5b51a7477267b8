use std::path::Path as FsPath;

use crate::error::{Error, Result};
use crate::scheme::{csv_io, format_f64, ObservationGrid, Side};
use crate::sde::simulate::Path;

/// `Y^1` at the S-times, `Y^2` at the T-times, and the normalized increments
/// `Z = ((ΔY^1_i / sqrt|I^i|)_i, (ΔY^2_j / sqrt|J^j|)_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NonsyncSample {
    grid: ObservationGrid,
    y1_obs: Vec<f64>,
    y2_obs: Vec<f64>,
    z: Vec<f64>,
}

impl NonsyncSample {
    pub fn new(grid: ObservationGrid, y1_obs: Vec<f64>, y2_obs: Vec<f64>) -> Result<Self> {
        if y1_obs.len() != grid.s_times().len() || y2_obs.len() != grid.t_times().len() {
            return Err(Error::InvalidArgument(format!(
                "observation counts ({}, {}) do not match grid ({}, {})",
                y1_obs.len(),
                y2_obs.len(),
                grid.s_times().len(),
                grid.t_times().len()
            )));
        }
        let mut z = Vec::with_capacity(grid.l1() + grid.l2());
        for (side, obs) in [(Side::First, &y1_obs), (Side::Second, &y2_obs)] {
            let times = grid.times(side);
            z.extend((1..times.len()).map(|i| (obs[i] - obs[i - 1]) / (times[i] - times[i - 1]).sqrt()));
        }
        Ok(Self { grid, y1_obs, y2_obs, z })
    }

    pub fn grid(&self) -> &ObservationGrid {
        &self.grid
    }

    pub fn y1_obs(&self) -> &[f64] {
        &self.y1_obs
    }

    pub fn y2_obs(&self) -> &[f64] {
        &self.y2_obs
    }

    pub fn obs(&self, side: Side) -> &[f64] {
        match side {
            Side::First => &self.y1_obs,
            Side::Second => &self.y2_obs,
        }
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    /// Raw increments `Y_{times[i+1]} - Y_{times[i]}` of one side.
    pub fn increments(&self, side: Side) -> Vec<f64> {
        self.obs(side).windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Writes `side,index,time,value` rows.
    pub fn write_csv(&self, path: impl AsRef<FsPath>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(file).map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn write_csv_to<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Parse(e.to_string());
        w.write_record(["side", "index", "time", "value"]).map_err(err)?;
        for side in [Side::First, Side::Second] {
            for (i, (t, v)) in self.grid.times(side).iter().zip(self.obs(side)).enumerate() {
                w.write_record([side.number().to_string(), i.to_string(), format_f64(*t), format_f64(*v)])
                    .map_err(err)?;
            }
        }
        w.flush().map_err(|e| Error::Parse(e.to_string()))
    }

    /// Reads a `side,index,time,value` file against a known grid.
    pub fn read_csv(grid: ObservationGrid, path: impl AsRef<FsPath>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
        let mut y1 = vec![f64::NAN; grid.s_times().len()];
        let mut y2 = vec![f64::NAN; grid.t_times().len()];
        let bad = |m: String| Error::Parse(format!("{}: {m}", path.display()));
        for rec in r.records() {
            let rec = rec.map_err(|e| csv_io(path, e))?;
            if rec.len() != 4 {
                return Err(bad("expected `side,index,time,value` rows".into()));
            }
            let side: u8 = rec[0].trim().parse().map_err(|e| bad(format!("{e}")))?;
            let side = Side::from_number(side)?;
            let idx: usize = rec[1].trim().parse().map_err(|e| bad(format!("{e}")))?;
            let t: f64 = rec[2].trim().parse().map_err(|e| bad(format!("{e}")))?;
            let v: f64 = rec[3].trim().parse().map_err(|e| bad(format!("{e}")))?;
            let times = grid.times(side);
            if idx >= times.len() || times[idx] != t {
                return Err(bad(format!("side {} row {idx} at time {t} does not match the grid", side.number())));
            }
            match side {
                Side::First => y1[idx] = v,
                Side::Second => y2[idx] = v,
            }
        }
        if y1.iter().chain(&y2).any(|v| v.is_nan()) {
            return Err(bad("missing observations".into()));
        }
        Self::new(grid, y1, y2)
    }
}

/// Reads `Y^1` at the S-times and `Y^2` at the T-times off a merged-grid path.
pub fn observe(path: &Path, grid: &ObservationGrid) -> Result<NonsyncSample> {
    let on_merged = path.times.as_slice() == grid.merged();
    let lookup = |side: Side, k: usize| -> Result<f64> {
        let t = grid.times(side)[k];
        let idx = if on_merged {
            grid.merged_index(side, k)
        } else {
            path.times.binary_search_by(|p| p.total_cmp(&t)).map_err(|_| Error::Indexing(t))?
        };
        let comp = match side {
            Side::First => 0,
            Side::Second => 1,
        };
        Ok(path.values[idx][comp])
    };
    let y1 = (0..grid.s_times().len()).map(|k| lookup(Side::First, k)).collect::<Result<Vec<_>>>()?;
    let y2 = (0..grid.t_times().len()).map(|k| lookup(Side::Second, k)).collect::<Result<Vec<_>>>()?;
    NonsyncSample::new(grid.clone(), y1, y2)
}
