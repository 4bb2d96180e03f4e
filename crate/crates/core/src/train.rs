//! Ridge-regression readout fitting and data normalization.
//!
//! Both architectures share the same linear readout, fit by solving the
//! regularized normal equations `(R R^T / N + beta I) W^T = R V^T / N`.
//! Hidden histories can reach millions of columns, so Gram matrices are
//! accumulated from bounded blocks and the full history never has to be
//! materialized.

use crate::error::{Error, Result};
use crate::linalg::{cholesky_in_place, cholesky_solve_in_place};
use crate::trajectory::Trajectory;
use crate::Scalar;
use ndarray::{Array1, Array2, ArrayView2};

/// Default number of time columns per accumulation block.
pub const DEFAULT_BLOCK: usize = 512;

/// Dense ridge problem with hidden states and targets in column-per-step
/// layout, for small explicitly-materialized instances.
#[derive(Debug, Clone)]
pub struct RidgeProblem<T> {
    /// `(n_hidden, n_train)`
    pub hidden: Array2<T>,
    /// `(n_out, n_train)`
    pub targets: Array2<T>,
    pub beta: T,
}

/// Streaming accumulator for `R R^T` and `V R^T`.
///
/// Blocks arrive in row-per-step layout `(block, n_hidden)` /
/// `(block, n_out)`. Only the upper triangle of the Gram matrix is formed
/// during accumulation (in chunked matrix products); it is mirrored once at
/// solve time.
#[derive(Debug, Clone)]
pub struct GramAccumulator<T> {
    rr: Array2<T>,
    vr: Array2<T>,
    n_seen: usize,
    chunk: usize,
}

impl<T: Scalar> GramAccumulator<T> {
    pub fn new(n_hidden: usize, n_out: usize) -> Self {
        GramAccumulator {
            rr: Array2::zeros((n_hidden, n_hidden)),
            vr: Array2::zeros((n_out, n_hidden)),
            n_seen: 0,
            chunk: 128,
        }
    }

    pub fn n_seen(&self) -> usize {
        self.n_seen
    }

    pub fn add_block(&mut self, hidden_rows: ArrayView2<T>, target_rows: ArrayView2<T>) {
        debug_assert_eq!(hidden_rows.nrows(), target_rows.nrows());
        debug_assert_eq!(hidden_rows.ncols(), self.rr.nrows());
        debug_assert_eq!(target_rows.ncols(), self.vr.nrows());
        let n = self.rr.nrows();
        // upper-triangular chunked R^T R
        let mut lo_a = 0;
        while lo_a < n {
            let hi_a = (lo_a + self.chunk).min(n);
            let a = hidden_rows.slice(ndarray::s![.., lo_a..hi_a]);
            let mut lo_b = lo_a;
            while lo_b < n {
                let hi_b = (lo_b + self.chunk).min(n);
                let b = hidden_rows.slice(ndarray::s![.., lo_b..hi_b]);
                let mut dst = self.rr.slice_mut(ndarray::s![lo_a..hi_a, lo_b..hi_b]);
                ndarray::linalg::general_mat_mul(T::one(), &a.t(), &b, T::one(), &mut dst);
                lo_b = hi_b;
            }
            lo_a = hi_a;
        }
        let mut vr = self.vr.view_mut();
        ndarray::linalg::general_mat_mul(
            T::one(),
            &target_rows.t(),
            &hidden_rows,
            T::one(),
            &mut vr,
        );
        self.n_seen += hidden_rows.nrows();
    }

    /// Root-mean-square of each accumulated feature over the training
    /// period, read off the Gram diagonal.
    pub fn feature_rms(&self) -> Array1<T> {
        let inv_n = T::one() / T::cast(self.n_seen.max(1) as f64);
        Array1::from_iter((0..self.rr.nrows()).map(|i| (self.rr[[i, i]] * inv_n).sqrt()))
    }

    /// Rescale accumulated statistics as if every feature row `i` had been
    /// divided by `scales[i]` before accumulation.
    pub fn rescale_features(&mut self, scales: &Array1<T>) {
        let n = self.rr.nrows();
        debug_assert_eq!(scales.len(), n);
        for i in 0..n {
            for j in i..n {
                self.rr[[i, j]] /= scales[i] * scales[j];
            }
        }
        for mut row in self.vr.rows_mut() {
            for (v, &s) in row.iter_mut().zip(scales.iter()) {
                *v /= s;
            }
        }
    }

    /// Solve for the readout `W` of shape `(n_out, n_hidden)`.
    pub fn solve(&self, beta: T) -> Result<Array2<T>> {
        if self.n_seen == 0 {
            return Err(Error::config("no training columns accumulated"));
        }
        if beta <= T::zero() {
            return Err(Error::config("ridge beta must be positive"));
        }
        let n = self.rr.nrows();
        let inv_n = T::one() / T::cast(self.n_seen as f64);
        let mut gram = Array2::zeros((n, n));
        for i in 0..n {
            for j in i..n {
                let v = self.rr[[i, j]] * inv_n;
                gram[[i, j]] = v;
                gram[[j, i]] = v;
            }
            gram[[i, i]] += beta;
        }
        let mut rhs = Array2::zeros((n, self.vr.nrows()));
        rhs.assign(&self.vr.t());
        rhs.mapv_inplace(|v| v * inv_n);
        cholesky_in_place(&mut gram).map_err(|e| {
            Error::Numerical(format!("ridge solve failed ({e}); beta = {beta:e}"))
        })?;
        cholesky_solve_in_place(&gram, &mut rhs);
        let mut out = Array2::zeros((self.vr.nrows(), n));
        out.assign(&rhs.t());
        Ok(out)
    }
}

/// Fit the readout of a dense ridge problem.
pub fn fit_readout<T: Scalar>(problem: &RidgeProblem<T>) -> Result<Array2<T>> {
    let n_train = problem.hidden.ncols();
    if n_train == 0 {
        return Err(Error::config("ridge problem has no training columns"));
    }
    if problem.targets.ncols() != n_train {
        return Err(Error::shape(
            format!("targets with {n_train} columns"),
            format!("{}", problem.targets.ncols()),
        ));
    }
    let mut acc = GramAccumulator::new(problem.hidden.nrows(), problem.targets.nrows());
    let mut start = 0;
    while start < n_train {
        let end = (start + DEFAULT_BLOCK).min(n_train);
        acc.add_block(
            problem.hidden.slice(ndarray::s![.., start..end]).t(),
            problem.targets.slice(ndarray::s![.., start..end]).t(),
        );
        start = end;
    }
    acc.solve(problem.beta)
}

/// Data normalization strategies. Statistics always come from the training
/// split; the same transform is then applied everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationKind {
    /// Pooled mean and standard deviation over all channels and times.
    GlobalSd,
    /// Pooled mean, scaled by the full data range.
    GlobalMaxMin,
    /// Separate mean/SD per channel. Destroys cross-channel covariance;
    /// provided for the comparison experiment.
    PerChannelSd,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Normalizer<T> {
    GlobalSd { mu: T, sd: T },
    GlobalMaxMin { mu: T, range: T },
    PerChannelSd { mu: Array1<T>, sd: Array1<T> },
}

impl<T: Scalar> Normalizer<T> {
    /// Compute statistics from `traj` (the training split).
    pub fn fit(traj: &Trajectory<T>, kind: NormalizationKind) -> Result<Self> {
        let data = traj.data();
        let count = data.len();
        match kind {
            NormalizationKind::GlobalSd => {
                let mu = traj.pooled_mean();
                let ss = data.iter().map(|&v| (v - mu) * (v - mu)).sum::<T>();
                let sd = (ss / T::cast((count - 1) as f64)).sqrt();
                if sd <= T::zero() {
                    return Err(Error::DegenerateData(
                        "pooled standard deviation is zero".into(),
                    ));
                }
                Ok(Normalizer::GlobalSd { mu, sd })
            }
            NormalizationKind::GlobalMaxMin => {
                let mu = traj.pooled_mean();
                let mut lo = T::infinity();
                let mut hi = T::neg_infinity();
                for &v in data.iter() {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                let range = hi - lo;
                if range <= T::zero() {
                    return Err(Error::DegenerateData("data range is zero".into()));
                }
                Ok(Normalizer::GlobalMaxMin { mu, range })
            }
            NormalizationKind::PerChannelSd => {
                let n_time = data.nrows();
                let denom = T::cast((n_time - 1) as f64);
                let mut mu = Array1::zeros(data.ncols());
                let mut sd = Array1::zeros(data.ncols());
                for (j, col) in data.columns().into_iter().enumerate() {
                    let m = col.iter().copied().sum::<T>() / T::cast(n_time as f64);
                    let ss = col.iter().map(|&v| (v - m) * (v - m)).sum::<T>();
                    let s = (ss / denom).sqrt();
                    if s <= T::zero() {
                        return Err(Error::DegenerateData(format!(
                            "channel {j} has zero variance"
                        )));
                    }
                    mu[j] = m;
                    sd[j] = s;
                }
                Ok(Normalizer::PerChannelSd { mu, sd })
            }
        }
    }

    pub fn kind(&self) -> NormalizationKind {
        match self {
            Normalizer::GlobalSd { .. } => NormalizationKind::GlobalSd,
            Normalizer::GlobalMaxMin { .. } => NormalizationKind::GlobalMaxMin,
            Normalizer::PerChannelSd { .. } => NormalizationKind::PerChannelSd,
        }
    }

    pub fn normalize_value(&self, channel: usize, v: T) -> T {
        match self {
            Normalizer::GlobalSd { mu, sd } => (v - *mu) / *sd,
            Normalizer::GlobalMaxMin { mu, range } => (v - *mu) / *range,
            Normalizer::PerChannelSd { mu, sd } => (v - mu[channel]) / sd[channel],
        }
    }

    pub fn denormalize_value(&self, channel: usize, v: T) -> T {
        match self {
            Normalizer::GlobalSd { mu, sd } => v * *sd + *mu,
            Normalizer::GlobalMaxMin { mu, range } => v * *range + *mu,
            Normalizer::PerChannelSd { mu, sd } => v * sd[channel] + mu[channel],
        }
    }

    pub fn normalize(&self, traj: &Trajectory<T>) -> Trajectory<T> {
        let mut data = traj.data().to_owned();
        for mut row in data.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.normalize_value(j, *v);
            }
        }
        crate::trajectory::from_rows_unchecked(data, traj.dt_model(), traj.n_sub())
    }

    pub fn denormalize(&self, traj: &Trajectory<T>) -> Trajectory<T> {
        let mut data = traj.data().to_owned();
        for mut row in data.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.denormalize_value(j, *v);
            }
        }
        crate::trajectory::from_rows_unchecked(data, traj.dt_model(), traj.n_sub())
    }

    pub fn denormalize_rows(&self, rows: &mut Array2<T>) {
        for mut row in rows.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.denormalize_value(j, *v);
            }
        }
    }
}

/// Normalize a trajectory, returning the transformed data and the fitted
/// transform.
pub fn normalize<T: Scalar>(
    traj: &Trajectory<T>,
    kind: NormalizationKind,
) -> Result<(Trajectory<T>, Normalizer<T>)> {
    let norm = Normalizer::fit(traj, kind)?;
    Ok((norm.normalize(traj), norm))
}

/// Exact inverse of [`normalize`].
pub fn denormalize<T: Scalar>(traj: &Trajectory<T>, normalizer: &Normalizer<T>) -> Trajectory<T> {
    normalizer.denormalize(traj)
}
