//! Time-major state trajectories, the common currency between data
//! generation, training, and verification.

use crate::error::{Error, Result};
use crate::Scalar;
use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

/// A sequence of system states at a fixed cadence.
///
/// `data` has shape `(n_time, n_state)`. For gridded systems the state axis
/// unflattens to `(nx, ny, nz)` with x fastest, then y, then z; every module
/// in the crate shares that convention. The native model step is `dt_model`
/// and the effective step of the stored samples is `n_sub * dt_model`.
/// Durations are in model-native units (MTU for Lorenz-96, minutes for the
/// turbulence solver).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    data: Array2<T>,
    dt_model: f64,
    n_sub: usize,
}

impl<T: Scalar> Trajectory<T> {
    pub fn new(data: Array2<T>, dt_model: f64, n_sub: usize) -> Result<Self> {
        if dt_model <= 0.0 {
            return Err(Error::config(format!("dt_model must be positive, got {dt_model}")));
        }
        if n_sub < 1 {
            return Err(Error::config("n_sub must be >= 1"));
        }
        if data.nrows() < 2 {
            return Err(Error::config(format!(
                "trajectory needs at least 2 states, got {}",
                data.nrows()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateData("trajectory contains non-finite values".into()));
        }
        Ok(Trajectory { data, dt_model, n_sub })
    }

    pub fn n_time(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_state(&self) -> usize {
        self.data.ncols()
    }

    pub fn dt_model(&self) -> f64 {
        self.dt_model
    }

    pub fn n_sub(&self) -> usize {
        self.n_sub
    }

    /// `n_sub * dt_model`.
    pub fn dt_effective(&self) -> f64 {
        self.n_sub as f64 * self.dt_model
    }

    pub fn data(&self) -> ArrayView2<'_, T> {
        self.data.view()
    }

    pub fn state(&self, index: usize) -> ArrayView1<'_, T> {
        self.data.row(index)
    }

    /// Contiguous time slice `[start, end)` as an owned trajectory.
    pub fn slice_time(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.n_time() {
            return Err(Error::config(format!(
                "invalid time slice {start}..{end} of {}",
                self.n_time()
            )));
        }
        Ok(Trajectory {
            data: self.data.slice(ndarray::s![start..end, ..]).to_owned(),
            dt_model: self.dt_model,
            n_sub: self.n_sub,
        })
    }

    /// Keep every `n_sub`-th state starting at index 0.
    pub fn subsample(&self, n_sub: usize) -> Result<Self> {
        if n_sub < 1 {
            return Err(Error::config("subsampling factor must be >= 1"));
        }
        if n_sub == 1 {
            return Ok(self.clone());
        }
        let kept = self.data.slice(ndarray::s![..;n_sub, ..]).to_owned();
        Ok(Trajectory {
            data: kept,
            dt_model: self.dt_model,
            n_sub: self.n_sub * n_sub,
        })
    }

    /// Mean over all times and channels.
    pub fn pooled_mean(&self) -> T {
        let count = T::cast((self.data.len()) as f64);
        self.data.iter().copied().sum::<T>() / count
    }
}

/// Keep every `n_sub`-th step of `traj`.
pub fn subsample<T: Scalar>(traj: &Trajectory<T>, n_sub: usize) -> Result<Trajectory<T>> {
    traj.subsample(n_sub)
}

/// Contiguous, non-overlapping partitions of one generated run, ordered
/// train, validation, test.
#[derive(Debug, Clone)]
pub struct DatasetSplit<T> {
    pub train: Trajectory<T>,
    pub validation: Trajectory<T>,
    pub test: Trajectory<T>,
    /// Duration of the discarded spinup, model units.
    pub spinup_discarded: f64,
}

impl<T: Scalar> DatasetSplit<T> {
    /// Partition a single trajectory by state counts.
    pub fn partition(
        full: &Trajectory<T>,
        n_train: usize,
        n_validation: usize,
        n_test: usize,
        spinup_discarded: f64,
    ) -> Result<Self> {
        let total = n_train + n_validation + n_test;
        if full.n_time() < total {
            return Err(Error::config(format!(
                "trajectory has {} states, need {total} for the requested splits",
                full.n_time()
            )));
        }
        Ok(DatasetSplit {
            train: full.slice_time(0, n_train)?,
            validation: full.slice_time(n_train, n_train + n_validation)?,
            test: full.slice_time(n_train + n_validation, total)?,
            spinup_discarded,
        })
    }
}

/// Requested split durations in model units.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SplitDurations {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl SplitDurations {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("train", self.train),
            ("validation", self.validation),
            ("test", self.test),
        ] {
            if v <= 0.0 {
                return Err(Error::config(format!("{name} duration must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn steps(&self, dt: f64) -> (usize, usize, usize) {
        let to_steps = |d: f64| (d / dt).round() as usize;
        (to_steps(self.train), to_steps(self.validation), to_steps(self.test))
    }
}

/// Stack rows into a trajectory without re-validating finiteness; used by
/// generators that already check for blowup step by step.
pub(crate) fn from_rows_unchecked<T: Scalar>(
    rows: Array2<T>,
    dt_model: f64,
    n_sub: usize,
) -> Trajectory<T> {
    Trajectory {
        data: rows,
        dt_model,
        n_sub,
    }
}

/// Simple helper: split a trajectory view along time.
pub fn concat_time<T: Scalar>(parts: &[&Trajectory<T>]) -> Result<Trajectory<T>> {
    if parts.is_empty() {
        return Err(Error::config("nothing to concatenate"));
    }
    let views: Vec<ArrayView2<T>> = parts.iter().map(|t| t.data()).collect();
    let data = ndarray::concatenate(Axis(0), &views)
        .map_err(|e| Error::shape("matching state dims", e.to_string()))?;
    Trajectory::new(data, parts[0].dt_model(), parts[0].n_sub())
}
