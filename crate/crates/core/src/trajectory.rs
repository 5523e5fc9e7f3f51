//! Uniformly sampled 2-D particle paths: ingestion, increments, pathwise MSD
//! and principal-axis rotation.

use std::io::{Read, Write};

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::output::fmt_f64;

/// Relative tolerance on successive time gaps.
pub const SAMPLING_RTOL: f64 = 1e-6;

/// Observed positions `X_0, ..., X_N` (microns) at spacing `dt` (seconds).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    id: String,
    dt: f64,
    positions: Vec<[f64; 2]>,
}

impl Trajectory {
    pub fn new(id: impl Into<String>, dt: f64, positions: Vec<[f64; 2]>) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::invalid(format!("time step must be positive, got {dt}")));
        }
        if positions.len() < 3 {
            return Err(Error::data(format!(
                "trajectory needs at least 3 positions, got {}",
                positions.len()
            )));
        }
        if let Some(i) = positions.iter().position(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::data(format!("non-finite position at index {i}")));
        }
        Ok(Self { id: id.into(), dt, positions })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    /// Number of increments `N` (one less than the number of positions).
    pub fn n_steps(&self) -> usize {
        self.positions.len() - 1
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn increments(&self) -> IncrementMatrix {
        let rows = self
            .positions
            .windows(2)
            .map(|w| [w[1][0] - w[0][0], w[1][1] - w[0][1]])
            .collect();
        IncrementMatrix { dt: self.dt, rows }
    }

    /// Writes the trajectory as `t,x,y` CSV.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,x,y")?;
        for (n, p) in self.positions.iter().enumerate() {
            writeln!(w, "{},{},{}", fmt_f64(n as f64 * self.dt), fmt_f64(p[0]), fmt_f64(p[1]))?;
        }
        Ok(())
    }
}

/// First differences `x_n = X_n - X_{n-1}` of a trajectory, one row per step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncrementMatrix {
    pub dt: f64,
    pub rows: Vec<[f64; 2]>,
}

impl IncrementMatrix {
    pub fn new(dt: f64, rows: Vec<[f64; 2]>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::invalid("time step must be positive"));
        }
        if rows.is_empty() {
            return Err(Error::data("increment matrix is empty"));
        }
        Ok(Self { dt, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[c]).collect()
    }

    /// Positions obtained by cumulative summation from the origin.
    pub fn integrate(&self, id: impl Into<String>) -> Trajectory {
        let mut pos = Vec::with_capacity(self.rows.len() + 1);
        let mut cur = [0.0, 0.0];
        pos.push(cur);
        for r in &self.rows {
            cur = [cur[0] + r[0], cur[1] + r[1]];
            pos.push(cur);
        }
        Trajectory { id: id.into(), dt: self.dt, positions: pos }
    }

    /// Increments with the per-coordinate sample mean subtracted.
    pub fn detrended(&self) -> IncrementMatrix {
        let n = self.rows.len() as f64;
        let m0 = self.rows.iter().map(|r| r[0]).sum::<f64>() / n;
        let m1 = self.rows.iter().map(|r| r[1]).sum::<f64>() / n;
        let rows = self.rows.iter().map(|r| [r[0] - m0, r[1] - m1]).collect();
        IncrementMatrix { dt: self.dt, rows }
    }

    /// Sample covariance of the rows about their mean.
    pub fn covariance(&self) -> Matrix2<f64> {
        let d = self.detrended();
        let n = d.rows.len() as f64;
        let mut c = Matrix2::zeros();
        for r in &d.rows {
            let v = Vector2::new(r[0], r[1]);
            c += v * v.transpose();
        }
        c / (n - 1.0).max(1.0)
    }
}

/// How the two per-coordinate MSD statistics are combined into one.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum MsdCombine {
    #[default]
    Mean,
    Sum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MsdCurve {
    /// Lag times `k dt` in seconds, for `k = 1..=max_lag`.
    pub lags: Vec<f64>,
    /// Squared-micron MSD estimates.
    pub values: Vec<f64>,
    /// Number of averaged windows at each lag, `N - k + 1`.
    pub n_terms: Vec<usize>,
}

impl MsdCurve {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "lag_s,msd_um2,n_terms")?;
        for ((l, v), n) in self.lags.iter().zip(&self.values).zip(&self.n_terms) {
            writeln!(w, "{},{},{}", fmt_f64(*l), fmt_f64(*v), n)?;
        }
        Ok(())
    }
}

/// One-dimensional pathwise MSD at lag `k`:
/// `(1 / (N - k + 1)) * sum_{n=0}^{N-k} (X_{n+k} - X_n)^2`.
pub fn msd_1d(positions: &[f64], k: usize) -> f64 {
    let terms = positions.len() - k;
    let s: f64 = positions[k..].iter().zip(positions).map(|(a, b)| (a - b) * (a - b)).sum();
    s / terms as f64
}

fn coordinate_paths(traj: &Trajectory, detrend: bool) -> [Vec<f64>; 2] {
    if detrend {
        let inc = traj.increments().detrended();
        let mut out = [Vec::with_capacity(inc.len() + 1), Vec::with_capacity(inc.len() + 1)];
        let start = traj.positions[0];
        for c in 0..2 {
            let mut cur = start[c];
            out[c].push(cur);
            for r in &inc.rows {
                cur += r[c];
                out[c].push(cur);
            }
        }
        out
    } else {
        [
            traj.positions.iter().map(|p| p[0]).collect(),
            traj.positions.iter().map(|p| p[1]).collect(),
        ]
    }
}

/// Default largest lag, `floor(N / 2)`.
pub fn default_max_lag(n_steps: usize) -> usize {
    (n_steps / 2).max(1)
}

pub fn pathwise_msd(traj: &Trajectory, max_lag: usize, detrend: bool) -> Result<MsdCurve> {
    pathwise_msd_with(traj, max_lag, detrend, MsdCombine::Mean)
}

pub fn pathwise_msd_with(traj: &Trajectory, max_lag: usize, detrend: bool, combine: MsdCombine) -> Result<MsdCurve> {
    if max_lag == 0 || max_lag > traj.n_steps() {
        return Err(Error::invalid(format!("max_lag {max_lag} outside 1..={}", traj.n_steps())));
    }
    let lags: Vec<usize> = (1..=max_lag).collect();
    msd_at_lags(traj, &lags, detrend, combine)
}

/// Pathwise MSD at an arbitrary set of lags (in steps).
pub fn msd_at_lags(traj: &Trajectory, lags: &[usize], detrend: bool, combine: MsdCombine) -> Result<MsdCurve> {
    let n = traj.n_steps();
    if let Some(&k) = lags.iter().find(|&&k| k == 0 || k > n) {
        return Err(Error::invalid(format!("lag {k} outside 1..={n}")));
    }
    let paths = coordinate_paths(traj, detrend);
    let factor = match combine {
        MsdCombine::Mean => 0.5,
        MsdCombine::Sum => 1.0,
    };
    let values = lags
        .iter()
        .map(|&k| factor * (msd_1d(&paths[0], k) + msd_1d(&paths[1], k)))
        .collect();
    Ok(MsdCurve {
        lags: lags.iter().map(|&k| k as f64 * traj.dt).collect(),
        values,
        n_terms: lags.iter().map(|&k| n - k + 1).collect(),
    })
}

/// Mean-centres the positions and rotates them onto the principal axes of the
/// (detrended) increment covariance, major axis first.
///
/// Returns the rotated trajectory and the rotation `R` (rows are the principal
/// directions), so that rotated positions are `R (X - mean)`.
pub fn pc_rotation(traj: &Trajectory) -> Result<(Trajectory, Matrix2<f64>)> {
    let cov = traj.increments().covariance();
    let (vals, vecs) = linalg::sym2_eigen(&cov);
    let scale = vals[0].abs().max(f64::MIN_POSITIVE);
    if !(vals[1] > 1e-14 * scale) {
        return Err(Error::data(format!(
            "degenerate increment covariance (eigenvalues {:e}, {:e})",
            vals[0], vals[1]
        )));
    }
    let rot = vecs.transpose();
    let n = traj.positions.len() as f64;
    let mx = traj.positions.iter().map(|p| p[0]).sum::<f64>() / n;
    let my = traj.positions.iter().map(|p| p[1]).sum::<f64>() / n;
    let positions = traj
        .positions
        .iter()
        .map(|p| {
            let v = rot * Vector2::new(p[0] - mx, p[1] - my);
            [v[0], v[1]]
        })
        .collect();
    Ok((Trajectory { id: traj.id.clone(), dt: traj.dt, positions }, rot))
}

enum TimeColumn {
    Seconds(usize),
    Frame(usize),
}

/// Reads a `t,x,y` or `frame,x,y` CSV table (column names case-insensitive,
/// `#` comment lines ignored).
///
/// With a `t` column the successive gaps must agree to [`SAMPLING_RTOL`] and
/// `dt` is their median; with a `frame` column `expected_dt` is required.
pub fn ingest_csv<R: Read>(source: R, id: &str, expected_dt: Option<f64>) -> Result<Trajectory> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.to_ascii_lowercase()).collect();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let time = match (find("t"), find("frame")) {
        (Some(i), _) => TimeColumn::Seconds(i),
        (None, Some(i)) => TimeColumn::Frame(i),
        (None, None) => return Err(Error::data(format!("{id}: missing time column (expected 't' or 'frame')"))),
    };
    let (ix, iy) = match (find("x"), find("y")) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::data(format!("{id}: missing 'x' or 'y' column"))),
    };
    let time_idx = match time {
        TimeColumn::Seconds(i) | TimeColumn::Frame(i) => i,
    };

    let mut times = Vec::new();
    let mut positions = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize, name: &str| -> Result<f64> {
            let raw = rec
                .get(i)
                .ok_or_else(|| Error::data(format!("{id}: line {line}: missing field '{name}'")))?;
            let v: f64 = raw
                .parse()
                .map_err(|_| Error::data(format!("{id}: line {line}: cannot parse '{raw}' as {name}")))?;
            if !v.is_finite() {
                return Err(Error::data(format!("{id}: line {line}: non-finite {name}")));
            }
            Ok(v)
        };
        times.push((field(time_idx, "time")?, line));
        positions.push([field(ix, "x")?, field(iy, "y")?]);
    }
    if positions.len() < 3 {
        return Err(Error::data(format!("{id}: need at least 3 rows, found {}", positions.len())));
    }

    let gaps: Vec<f64> = times.windows(2).map(|w| w[1].0 - w[0].0).collect();
    let mut sorted = gaps.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    if !(median > 0.0) {
        return Err(Error::data(format!("{id}: time column is not increasing")));
    }
    for (g, w) in gaps.iter().zip(times.windows(2)) {
        if (g - median).abs() > SAMPLING_RTOL * median {
            return Err(Error::data(format!(
                "{id}: line {}: non-uniform sampling (gap {g} vs median {median})",
                w[1].1
            )));
        }
    }
    let dt = match time {
        TimeColumn::Seconds(_) => median,
        TimeColumn::Frame(_) => {
            let dt = expected_dt.ok_or_else(|| {
                Error::invalid(format!("{id}: frame-indexed file requires an explicit time step (missing dt)"))
            })?;
            dt * median
        }
    };
    Trajectory::new(id, dt, positions)
}
