//! Forecast verification: normalized root-mean-square errors, kinetic
//! energy spectra and their error measures, valid prediction time, the
//! persistence baseline, and sample-ensemble aggregation.

use crate::dynamics::sqg::{SqgConfig, SqgDiagnostics};
use crate::error::{Error, Result};
use crate::rng::CounterRng;
use crate::Scalar;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rustfft::FftNum;

/// Pooled standard deviation over all times and channels (ddof = 1).
pub fn pooled_sd<T: Scalar>(data: ArrayView2<T>) -> T {
    let n = T::cast(data.len() as f64);
    let mean = data.iter().copied().sum::<T>() / n;
    let ss = data.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>();
    (ss / (n - T::one())).sqrt()
}

/// Per-channel temporal standard deviation (ddof = 1).
pub fn per_channel_sd<T: Scalar>(data: ArrayView2<T>) -> Array1<T> {
    let n_time = T::cast(data.nrows() as f64);
    Array1::from_iter(data.columns().into_iter().map(|col| {
        let mean = col.iter().copied().sum::<T>() / n_time;
        let ss = col.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>();
        (ss / (n_time - T::one())).sqrt()
    }))
}

/// Per-step spatial RMS of `(pred - truth) / sd`.
pub fn nrmse_timeseries<T: Scalar>(
    pred: ArrayView2<T>,
    truth: ArrayView2<T>,
    sd: T,
) -> Result<Array1<T>> {
    if pred.dim() != truth.dim() {
        return Err(Error::shape(
            format!("{:?}", truth.dim()),
            format!("{:?}", pred.dim()),
        ));
    }
    if sd <= T::zero() {
        return Err(Error::DegenerateData("normalizing SD is zero".into()));
    }
    let n_state = T::cast(pred.ncols() as f64);
    Ok(Array1::from_iter(
        pred.rows().into_iter().zip(truth.rows()).map(|(p, t)| {
            let ss = p
                .iter()
                .zip(t.iter())
                .map(|(&a, &b)| {
                    let d = (a - b) / sd;
                    d * d
                })
                .sum::<T>();
            (ss / n_state).sqrt()
        }),
    ))
}

/// Appendix-style NRMSE with per-channel normalization, used by the valid
/// prediction time.
pub fn nrmse_timeseries_per_channel<T: Scalar>(
    pred: ArrayView2<T>,
    truth: ArrayView2<T>,
    sd: ArrayView1<T>,
) -> Result<Array1<T>> {
    if pred.dim() != truth.dim() {
        return Err(Error::shape(
            format!("{:?}", truth.dim()),
            format!("{:?}", pred.dim()),
        ));
    }
    if sd.len() != pred.ncols() {
        return Err(Error::shape(
            format!("{} channel SDs", pred.ncols()),
            format!("{}", sd.len()),
        ));
    }
    if sd.iter().any(|&s| s <= T::zero()) {
        return Err(Error::DegenerateData("a channel SD is zero".into()));
    }
    let n_state = T::cast(pred.ncols() as f64);
    Ok(Array1::from_iter(
        pred.rows().into_iter().zip(truth.rows()).map(|(p, t)| {
            let ss = p
                .iter()
                .zip(t.iter())
                .zip(sd.iter())
                .map(|((&a, &b), &s)| {
                    let d = (a - b) / s;
                    d * d
                })
                .sum::<T>();
            (ss / n_state).sqrt()
        }),
    ))
}

/// RMS pooled over time and space; equals the RMS of the per-step series.
pub fn nrmse_total<T: Scalar>(pred: ArrayView2<T>, truth: ArrayView2<T>, sd: T) -> Result<T> {
    let series = nrmse_timeseries(pred, truth, sd)?;
    let n = T::cast(series.len() as f64);
    Ok((series.iter().map(|&v| v * v).sum::<T>() / n).sqrt())
}

/// Kinetic energy density per isotropic wavenumber bin over time.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSeries<T> {
    /// `(n_time, n_bins)`, non-negative.
    pub energy: Array2<T>,
    /// Bin centers, rad/km, strictly increasing.
    pub wavenumber_bins: Array1<f64>,
}

impl<T: Scalar> SpectrumSeries<T> {
    pub fn n_time(&self) -> usize {
        self.energy.nrows()
    }

    pub fn n_bins(&self) -> usize {
        self.energy.ncols()
    }
}

/// Isotropic KE spectrum of each state row (states are boundary
/// temperature fields of the two-surface model).
pub fn ke_spectrum_series<T: Scalar + FftNum>(
    states: ArrayView2<T>,
    cfg: &SqgConfig,
) -> Result<SpectrumSeries<T>> {
    let diag = SqgDiagnostics::<T>::new(cfg.clone())?;
    ke_spectrum_series_with(&diag, states)
}

/// Same as [`ke_spectrum_series`] but reusing prebuilt spectral tables.
pub fn ke_spectrum_series_with<T: Scalar + FftNum>(
    diag: &SqgDiagnostics<T>,
    states: ArrayView2<T>,
) -> Result<SpectrumSeries<T>> {
    let n_time = states.nrows();
    let mut energy = Array2::zeros((n_time, diag.n_bins()));
    for (i, row) in states.rows().into_iter().enumerate() {
        let spec = diag.ke_spectrum_row(row)?;
        energy.row_mut(i).assign(&spec);
    }
    Ok(SpectrumSeries {
        energy,
        wavenumber_bins: diag.wavenumber_bins(),
    })
}

/// Signed relative spectrum error `(E_pred - E_true) / |E_true|` per time
/// and bin. Bins with zero true energy are flagged as NaN and excluded
/// from aggregates.
pub fn ke_relative_error<T: Scalar>(
    pred: &SpectrumSeries<T>,
    truth: &SpectrumSeries<T>,
) -> Result<Array2<T>> {
    if pred.energy.dim() != truth.energy.dim() {
        return Err(Error::shape(
            format!("{:?}", truth.energy.dim()),
            format!("{:?}", pred.energy.dim()),
        ));
    }
    Ok(Array2::from_shape_fn(pred.energy.raw_dim(), |(i, k)| {
        let e = truth.energy[[i, k]];
        if e == T::zero() {
            T::nan()
        } else {
            (pred.energy[[i, k]] - e) / e.abs()
        }
    }))
}

/// Temporal standard deviation of each spectral coefficient (ddof = 1).
pub fn spectrum_temporal_sd<T: Scalar>(spec: &SpectrumSeries<T>) -> Array1<T> {
    per_channel_sd(spec.energy.view())
}

/// RMS over time and bins of `(E_pred - E_true) / sd_k`.
pub fn ke_nrmse<T: Scalar>(
    pred: &SpectrumSeries<T>,
    truth: &SpectrumSeries<T>,
    sd_k: ArrayView1<T>,
) -> Result<T> {
    if pred.energy.dim() != truth.energy.dim() {
        return Err(Error::shape(
            format!("{:?}", truth.energy.dim()),
            format!("{:?}", pred.energy.dim()),
        ));
    }
    if sd_k.len() != pred.n_bins() {
        return Err(Error::shape(
            format!("{} bin SDs", pred.n_bins()),
            format!("{}", sd_k.len()),
        ));
    }
    if sd_k.iter().any(|&s| s <= T::zero()) {
        return Err(Error::DegenerateData("a spectral-bin SD is zero".into()));
    }
    let mut ss = T::zero();
    for i in 0..pred.n_time() {
        for k in 0..pred.n_bins() {
            let d = (pred.energy[[i, k]] - truth.energy[[i, k]]) / sd_k[k];
            ss += d * d;
        }
    }
    let count = T::cast((pred.n_time() * pred.n_bins()) as f64);
    Ok((ss / count).sqrt())
}

/// Valid prediction time: the first series index whose NRMSE exceeds
/// `epsilon`, in model time units. A series that never exceeds the
/// threshold is right-censored at its full length.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Vpt {
    /// Number of fully valid steps times the effective step.
    pub time: f64,
    pub censored: bool,
}

pub fn vpt<T: Scalar>(nrmse: ArrayView1<T>, epsilon: T, dt_effective: f64) -> Vpt {
    match nrmse.iter().position(|&v| v > epsilon) {
        Some(idx) => Vpt {
            time: idx as f64 * dt_effective,
            censored: false,
        },
        None => Vpt {
            time: nrmse.len() as f64 * dt_effective,
            censored: true,
        },
    }
}

/// Forecast that repeats the initial condition.
pub fn persistence_baseline<T: Scalar>(initial: ArrayView1<T>, n_steps: usize) -> Array2<T> {
    let mut out = Array2::zeros((n_steps, initial.len()));
    for mut row in out.rows_mut() {
        row.assign(&initial);
    }
    out
}

/// Per-sample skill summary; spectra fields are present for gridded
/// systems only.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SkillReport {
    pub sample_id: usize,
    pub setting: String,
    pub nrmse_total: f64,
    pub nrmse_t: Vec<f64>,
    pub ke_nrmse: Option<f64>,
    pub vpt: f64,
    pub vpt_censored: bool,
    pub truncated_at: Option<usize>,
}

/// Mean and bootstrap confidence band per timestep over samples.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct EnsembleSummary {
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// If any sample diverged, aggregation stops just before the earliest
    /// divergence step.
    pub truncated_at: Option<usize>,
}

/// Aggregate per-step series over samples with a percentile bootstrap
/// confidence interval. `diverged_at[i]` marks the first invalid step of
/// sample `i`; aggregation is cut at the earliest one.
pub fn ensemble_summary(
    series: &[Vec<f64>],
    diverged_at: &[Option<usize>],
    confidence: f64,
    n_resamples: usize,
    seed: u64,
) -> Result<EnsembleSummary> {
    if series.is_empty() || series.len() != diverged_at.len() {
        return Err(Error::config("need matching non-empty series and divergence markers"));
    }
    let full_len = series.iter().map(|s| s.len()).max().unwrap_or(0);
    let cut = diverged_at
        .iter()
        .filter_map(|d| *d)
        .min()
        .unwrap_or(full_len)
        .min(full_len);
    let n = series.len();
    let mut rng = CounterRng::new(seed, 0xb007);
    let mut mean = Vec::with_capacity(cut);
    let mut lower = Vec::with_capacity(cut);
    let mut upper = Vec::with_capacity(cut);
    let alpha = (1.0 - confidence) / 2.0;
    let mut resample_means = vec![0.0f64; n_resamples];
    for step in 0..cut {
        let values: Vec<f64> = series.iter().map(|s| s[step]).collect();
        let m = values.iter().sum::<f64>() / n as f64;
        mean.push(m);
        if n == 1 {
            lower.push(m);
            upper.push(m);
            continue;
        }
        for rm in resample_means.iter_mut() {
            let mut acc = 0.0;
            for _ in 0..n {
                acc += values[rng.index(n)];
            }
            *rm = acc / n as f64;
        }
        resample_means.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let lo_idx = ((alpha * n_resamples as f64) as usize).min(n_resamples - 1);
        let hi_idx = (((1.0 - alpha) * n_resamples as f64) as usize).min(n_resamples - 1);
        lower.push(resample_means[lo_idx]);
        upper.push(resample_means[hi_idx]);
    }
    Ok(EnsembleSummary {
        mean,
        lower,
        upper,
        truncated_at: if cut < full_len { Some(cut) } else { None },
    })
}
