//! Experiment orchestration: declarative configuration, dataset
//! preparation, per-setting tune/train/evaluate pipelines, and parameter
//! sweeps. This is the layer the command-line driver and the acceptance
//! suite both call into.

use crate::dynamics::{generate_dataset, SqgConfig, SystemConfig};
use crate::error::{Error, Result};
use crate::hyperopt::{
    tune_esn, EsnCostContext, MacroCostConfig, OptBudget, ParamBound, SearchSpace, TuneResult,
};
use crate::metrics::{self, SkillReport, SpectrumSeries};
use crate::nvar::{train_nvar, NvarConfig};
use crate::parallel::DomainDecomposition;
use crate::reservoir::{train_esn, EsnBase, EsnMacroParams, EsnParams, InputScaling};
use crate::rng::CounterRng;
use crate::rollout::predict_autonomous;
use crate::train::{NormalizationKind, Normalizer};
use crate::trajectory::{DatasetSplit, SplitDurations};
use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Durations are always in the system's native time units (MTU for
/// Lorenz-96, minutes for the turbulence model).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub spinup: f64,
    pub train: f64,
    pub validation: f64,
    pub test: f64,
    /// Temporal subsampling factor applied to every split.
    #[serde(default = "default_n_sub")]
    pub n_sub: usize,
    /// Truncate the (subsampled) training split to this many samples.
    #[serde(default)]
    pub fixed_samples: Option<usize>,
}

fn default_n_sub() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionConfig {
    pub nx_loc: usize,
    pub ny_loc: usize,
    pub n_overlap: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArchitectureConfig {
    Esn {
        n_hidden: usize,
        kappa: usize,
        #[serde(default = "default_input_scaling")]
        input_scaling: InputScaling,
        /// Fixed macro parameters; omit when tuning.
        #[serde(default)]
        macro_params: Option<EsnMacroParams>,
    },
    Nvar {
        n_lag: usize,
        n_neighbor: usize,
        #[serde(default = "default_nvar_beta")]
        beta: f64,
    },
}

fn default_input_scaling() -> InputScaling {
    InputScaling::SingularValue
}

fn default_nvar_beta() -> f64 {
    1e-4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningConfig {
    #[serde(default)]
    pub gamma: f64,
    pub n_macro: usize,
    pub n_initial: usize,
    pub n_iterations: usize,
    /// Validation forecast horizon, native time units.
    pub forecast: f64,
    /// Teacher-forced spinup before each validation forecast.
    pub spinup: f64,
    /// Override the default search bounds.
    #[serde(default)]
    pub bounds: Option<Vec<ParamBound>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationConfig {
    pub n_test_ics: usize,
    /// Test forecast horizon, native time units.
    pub forecast: f64,
    /// Teacher-forced spinup before each test forecast.
    pub spinup: f64,
    /// Valid-prediction-time threshold.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Lead time of the spectral-error snapshot, native units.
    #[serde(default)]
    pub snapshot: Option<f64>,
}

fn default_epsilon() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub data: DataConfig,
    #[serde(default)]
    pub decomposition: Option<DecompositionConfig>,
    pub architecture: ArchitectureConfig,
    #[serde(default = "default_normalization")]
    pub normalization: NormalizationKind,
    #[serde(default)]
    pub tuning: Option<TuningConfig>,
    pub evaluation: EvaluationConfig,
}

fn default_normalization() -> NormalizationKind {
    NormalizationKind::GlobalSd
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.system
            .validate()
            .map_err(|e| Error::config(format!("system: {e}")))?;
        if self.data.spinup < 0.0 {
            return Err(Error::config("data.spinup: must be non-negative"));
        }
        if self.data.n_sub < 1 {
            return Err(Error::config("data.n_sub: must be >= 1"));
        }
        SplitDurations {
            train: self.data.train,
            validation: self.data.validation,
            test: self.data.test,
        }
        .validate()
        .map_err(|e| Error::config(format!("data: {e}")))?;
        if self.evaluation.n_test_ics < 1 {
            return Err(Error::config("evaluation.n_test_ics: must be >= 1"));
        }
        if self.evaluation.forecast <= 0.0 {
            return Err(Error::config("evaluation.forecast: must be positive"));
        }
        if let Some(t) = &self.tuning {
            if t.n_macro < 1 {
                return Err(Error::config("tuning.n_macro: must be >= 1"));
            }
            if t.forecast <= 0.0 {
                return Err(Error::config("tuning.forecast: must be positive"));
            }
            if t.gamma > 0.0 && !matches!(self.system, SystemConfig::Sqg(_)) {
                return Err(Error::config(
                    "tuning.gamma: spectral penalty requires the gridded system",
                ));
            }
        }
        self.decomp()?;
        Ok(())
    }

    /// Decomposition of the system's grid; defaults to a single group.
    pub fn decomp(&self) -> Result<DomainDecomposition> {
        let (nx, ny, nz) = self.system.grid_dims();
        match &self.decomposition {
            Some(d) => DomainDecomposition::new(nx, ny, nz, d.nx_loc, d.ny_loc, d.n_overlap)
                .map_err(|e| Error::config(format!("decomposition: {e}"))),
            None => DomainDecomposition::new(nx, ny, nz, nx, ny, 0),
        }
    }

    pub fn sqg(&self) -> Option<&SqgConfig> {
        match &self.system {
            SystemConfig::Sqg(c) => Some(c),
            SystemConfig::Lorenz96(_) => None,
        }
    }

    /// Hash of the canonical JSON encoding.
    pub fn config_hash(&self) -> Result<u64> {
        let json = serde_json::to_string(self)
            .map_err(|e| Error::config(format!("config serialization failed: {e}")))?;
        Ok(fnv1a(json.as_bytes()))
    }
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

/// Content digest of a dataset split (array bit patterns plus cadence).
pub fn dataset_hash(split: &DatasetSplit<f64>) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |x: u64| {
        h ^= x;
        h = h.wrapping_mul(0x1000_0000_01b3);
    };
    for traj in [&split.train, &split.validation, &split.test] {
        eat(traj.n_time() as u64);
        eat(traj.n_state() as u64);
        eat(traj.n_sub() as u64);
        eat(traj.dt_model().to_bits());
        for &v in traj.data().iter() {
            eat(v.to_bits());
        }
    }
    format!("{h:016x}")
}

/// Generate the dataset for a configuration and apply subsampling (and the
/// optional fixed-sample truncation of the training split).
pub fn prepare_dataset(cfg: &ExperimentConfig, seed: u64) -> Result<DatasetSplit<f64>> {
    cfg.validate()?;
    let splits = SplitDurations {
        train: cfg.data.train,
        validation: cfg.data.validation,
        test: cfg.data.test,
    };
    let full: DatasetSplit<f64> = generate_dataset(&cfg.system, cfg.data.spinup, splits, seed)?;
    subsample_split(&full, cfg.data.n_sub, cfg.data.fixed_samples)
}

/// Subsample every split by `n_sub`; optionally truncate the training
/// split to a fixed number of samples (the fixed-sample-count protocol).
pub fn subsample_split(
    full: &DatasetSplit<f64>,
    n_sub: usize,
    fixed_samples: Option<usize>,
) -> Result<DatasetSplit<f64>> {
    let mut train = full.train.subsample(n_sub)?;
    if let Some(n) = fixed_samples {
        if n < 2 || n > train.n_time() {
            return Err(Error::config(format!(
                "data.fixed_samples: {n} not in 2..={}",
                train.n_time()
            )));
        }
        train = train.slice_time(0, n)?;
    }
    Ok(DatasetSplit {
        train,
        validation: full.validation.subsample(n_sub)?,
        test: full.test.subsample(n_sub)?,
        spinup_discarded: full.spinup_discarded,
    })
}

fn steps_for(duration: f64, dt_effective: f64, what: &str) -> Result<usize> {
    let steps = (duration / dt_effective).round() as usize;
    if steps < 1 {
        return Err(Error::config(format!(
            "{what}: duration {duration} is below one effective step ({dt_effective})"
        )));
    }
    Ok(steps)
}

/// Identifier of a tuned/trained/evaluated variant within a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingLabel(pub String);

/// Everything produced by evaluating one setting on the test split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SettingOutcome {
    pub setting: String,
    pub reports: Vec<SkillReport>,
    /// Per-sample spectral snapshot: relative error per bin at the
    /// configured snapshot lead (absent for diverged-by-then samples and
    /// for non-gridded systems).
    pub snapshot_rel_err: Vec<Option<Vec<f64>>>,
    /// Long-format spectra rows for persistence.
    pub spectra_rows: Vec<SpectraRow>,
    pub tuned_params: Option<EsnMacroParams>,
    pub tuned_cost: Option<f64>,
    /// Optimization log: (params, cost, origin) triples.
    pub tuning_log: Vec<TuningLogEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuningLogEntry {
    pub params: Vec<f64>,
    pub cost: f64,
    pub origin: String,
}

/// One spectra observation: truth and prediction energy in one bin of one
/// sample at one lead time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectraRow {
    pub sample_id: usize,
    pub time: f64,
    pub bin: f64,
    pub e_true: f64,
    pub e_pred: f64,
    pub rel_err: f64,
}

/// Streams of the experiment seed, kept distinct per purpose.
const STREAM_TEST_ICS: u64 = 0x7e57;

/// Draw test-forecast initial-condition indices from the test split:
/// seeded, uniform over indices with room for the spinup before and the
/// horizon after.
pub fn test_initial_conditions(
    n_test: usize,
    spinup_steps: usize,
    forecast_steps: usize,
    n_ics: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let first = spinup_steps.max(1);
    let last = n_test
        .checked_sub(forecast_steps + 1)
        .filter(|last| *last >= first)
        .ok_or_else(|| {
            Error::config(format!(
                "test split too short: {n_test} states for spinup {spinup_steps} + horizon {forecast_steps}"
            ))
        })?;
    let mut rng = CounterRng::new(seed, STREAM_TEST_ICS);
    Ok((0..n_ics).map(|_| first + rng.index(last - first + 1)).collect())
}

/// Tune (or take fixed parameters), train, and evaluate one ESN setting.
pub fn run_esn_setting(
    cfg: &ExperimentConfig,
    data: &DatasetSplit<f64>,
    setting: &str,
    seed: u64,
) -> Result<SettingOutcome> {
    let decomp = cfg.decomp()?;
    let (n_hidden, kappa, input_scaling, fixed) = match &cfg.architecture {
        ArchitectureConfig::Esn {
            n_hidden,
            kappa,
            input_scaling,
            macro_params,
        } => (*n_hidden, *kappa, *input_scaling, *macro_params),
        ArchitectureConfig::Nvar { .. } => {
            return Err(Error::config("run_esn_setting called with an NVAR architecture"))
        }
    };
    let normalizer = Normalizer::fit(&data.train, cfg.normalization)?;
    let esn_params = EsnParams {
        n_hidden,
        kappa,
        seed,
        input_scaling,
    };
    let dt_eff = data.train.dt_effective();

    let (model, tuned_params, tuned_cost, tuning_log) = match (&cfg.tuning, fixed) {
        (Some(t), _) => {
            let cost_cfg = MacroCostConfig {
                gamma: t.gamma,
                n_macro: t.n_macro,
                forecast_steps: steps_for(t.forecast, dt_eff, "tuning.forecast")?,
                spinup_steps: steps_for(t.spinup, dt_eff, "tuning.spinup")?,
            };
            let ctx = EsnCostContext::new(
                esn_params,
                &data.train,
                &data.validation,
                normalizer.clone(),
                cost_cfg,
                decomp.clone(),
                cfg.sqg(),
                seed,
            )?;
            let space = match &t.bounds {
                Some(bounds) => SearchSpace {
                    bounds: bounds.clone(),
                },
                None => crate::hyperopt::default_search_space(),
            };
            // matrices and validation ICs stay paired across settings via
            // `seed`; the search path decorrelates per setting label
            let budget = OptBudget {
                n_initial: t.n_initial,
                n_iterations: t.n_iterations,
                seed: seed ^ fnv1a(setting.as_bytes()),
            };
            let TuneResult {
                best_params,
                best_cost,
                best_model,
                run,
            } = tune_esn(&ctx, &space, &budget)?;
            let log = run
                .evaluations
                .iter()
                .map(|e| TuningLogEntry {
                    params: e.params.clone(),
                    cost: e.cost,
                    origin: e.origin.clone(),
                })
                .collect();
            (best_model, Some(best_params), Some(best_cost), log)
        }
        (None, Some(macro_params)) => {
            let base = EsnBase::draw(esn_params, decomp.input_len())?;
            let train_norm = normalizer.normalize(&data.train);
            let model = train_esn(&base, &macro_params, &train_norm, &decomp)?;
            (model, None, None, Vec::new())
        }
        (None, None) => {
            return Err(Error::config(
                "architecture.macro_params: required when no tuning block is given",
            ))
        }
    };

    let mut outcome = evaluate_model(
        cfg,
        data,
        &decomp,
        &normalizer,
        &model,
        setting,
        seed,
    )?;
    outcome.tuned_params = tuned_params;
    outcome.tuned_cost = tuned_cost;
    outcome.tuning_log = tuning_log;
    Ok(outcome)
}

/// Train and evaluate one NVAR setting (no outer optimization).
pub fn run_nvar_setting(
    cfg: &ExperimentConfig,
    data: &DatasetSplit<f64>,
    setting: &str,
    seed: u64,
) -> Result<SettingOutcome> {
    let decomp = cfg.decomp()?;
    let nvar_cfg = match &cfg.architecture {
        ArchitectureConfig::Nvar {
            n_lag,
            n_neighbor,
            beta,
        } => NvarConfig {
            degree: 2,
            n_lag: *n_lag,
            n_neighbor: *n_neighbor,
            beta: *beta,
        },
        ArchitectureConfig::Esn { .. } => {
            return Err(Error::config("run_nvar_setting called with an ESN architecture"))
        }
    };
    let normalizer = Normalizer::fit(&data.train, cfg.normalization)?;
    let train_norm = normalizer.normalize(&data.train);
    let model = train_nvar(&nvar_cfg, &train_norm, &decomp)?;
    evaluate_model(cfg, data, &decomp, &normalizer, &model, setting, seed)
}

/// Shared test-split evaluation: seeded initial conditions, parallel
/// rollouts, NRMSE/VPT/spectral metrics per sample.
fn evaluate_model<M>(
    cfg: &ExperimentConfig,
    data: &DatasetSplit<f64>,
    decomp: &DomainDecomposition,
    normalizer: &Normalizer<f64>,
    model: &M,
    setting: &str,
    seed: u64,
) -> Result<SettingOutcome>
where
    M: crate::rollout::StepModel<f64> + Sync,
{
    let dt_eff = data.test.dt_effective();
    let forecast_steps = steps_for(cfg.evaluation.forecast, dt_eff, "evaluation.forecast")?;
    let spinup_steps = steps_for(cfg.evaluation.spinup, dt_eff, "evaluation.spinup")?;
    let ics = test_initial_conditions(
        data.test.n_time(),
        spinup_steps,
        forecast_steps,
        cfg.evaluation.n_test_ics,
        seed,
    )?;
    let test_norm = normalizer.normalize(&data.test);
    let sd_pooled = metrics::pooled_sd(data.test.data());
    let sd_channels = metrics::per_channel_sd(data.train.data());
    let epsilon = cfg.evaluation.epsilon;

    // spectral machinery for gridded systems
    let spectra_ctx = match cfg.sqg() {
        Some(sqg_cfg) => {
            let diag = crate::dynamics::sqg::SqgDiagnostics::<f64>::new(sqg_cfg.clone())?;
            let truth = metrics::ke_spectrum_series_with(&diag, data.test.data())?;
            let sd_k = metrics::spectrum_temporal_sd(&truth);
            Some((diag, truth, sd_k))
        }
        None => None,
    };
    let snapshot_row = match cfg.evaluation.snapshot {
        Some(lead) => {
            let row = (lead / dt_eff).round() as usize;
            if row == 0 || row > forecast_steps {
                return Err(Error::config(format!(
                    "evaluation.snapshot: lead {lead} outside the forecast horizon"
                )));
            }
            Some(row - 1)
        }
        None => None,
    };

    struct PerSample {
        report: SkillReport,
        snapshot: Option<Vec<f64>>,
        spectra: Vec<SpectraRow>,
    }

    let samples: Vec<Result<PerSample>> = ics
        .par_iter()
        .enumerate()
        .map(|(sample_id, &ic)| -> Result<PerSample> {
            let window = test_norm.slice_time(ic - spinup_steps, ic + 1)?;
            let fc = predict_autonomous(model, decomp, &window, forecast_steps)?;
            let n_done = fc.n_steps();
            let mut pred = fc.states;
            normalizer.denormalize_rows(&mut pred);
            let truth = data.test.slice_time(ic + 1, ic + 1 + forecast_steps)?;
            let truth_data = truth.data();
            let truth_done = truth_data.slice(ndarray::s![..n_done, ..]);

            let (nrmse_t, nrmse_total) = if n_done > 0 {
                let series = metrics::nrmse_timeseries(pred.view(), truth_done, sd_pooled)?;
                let total = metrics::nrmse_total(pred.view(), truth_done, sd_pooled)?;
                (series, total)
            } else {
                (Array1::zeros(0), f64::INFINITY)
            };
            let vpt = if n_done > 0 {
                let per_channel = metrics::nrmse_timeseries_per_channel(
                    pred.view(),
                    truth_done,
                    sd_channels.view(),
                )?;
                let mut v = metrics::vpt(per_channel.view(), epsilon, dt_eff);
                // a truncated forecast can never be censored: skill is lost
                // at the divergence point at the latest
                if fc.diverged_at.is_some() && v.censored {
                    v.censored = false;
                }
                v
            } else {
                metrics::Vpt {
                    time: 0.0,
                    censored: false,
                }
            };

            let mut ke_nrmse_value = None;
            let mut snapshot = None;
            let mut spectra_rows = Vec::new();
            if let Some((diag, truth_spec, sd_k)) = &spectra_ctx {
                if n_done > 0 {
                    let pred_spec = metrics::ke_spectrum_series_with(diag, pred.view())?;
                    let true_spec = SpectrumSeries {
                        energy: truth_spec
                            .energy
                            .slice(ndarray::s![ic + 1..ic + 1 + n_done, ..])
                            .to_owned(),
                        wavenumber_bins: truth_spec.wavenumber_bins.clone(),
                    };
                    ke_nrmse_value =
                        Some(metrics::ke_nrmse(&pred_spec, &true_spec, sd_k.view())?);
                    let rel = metrics::ke_relative_error(&pred_spec, &true_spec)?;
                    for step in 0..n_done {
                        for (b, &bin) in true_spec.wavenumber_bins.iter().enumerate() {
                            spectra_rows.push(SpectraRow {
                                sample_id,
                                time: (step + 1) as f64 * dt_eff,
                                bin,
                                e_true: true_spec.energy[[step, b]],
                                e_pred: pred_spec.energy[[step, b]],
                                rel_err: rel[[step, b]],
                            });
                        }
                    }
                    if let Some(row) = snapshot_row {
                        if row < n_done {
                            snapshot = Some(rel.row(row).to_vec());
                        }
                    }
                }
            }

            Ok(PerSample {
                report: SkillReport {
                    sample_id,
                    setting: setting.to_string(),
                    nrmse_total,
                    nrmse_t: nrmse_t.to_vec(),
                    ke_nrmse: ke_nrmse_value,
                    vpt: vpt.time,
                    vpt_censored: vpt.censored,
                    truncated_at: fc.diverged_at,
                },
                snapshot,
                spectra: spectra_rows,
            })
        })
        .collect();

    let mut reports = Vec::with_capacity(samples.len());
    let mut snapshot_rel_err = Vec::with_capacity(samples.len());
    let mut spectra_rows = Vec::new();
    for s in samples {
        let s = s?;
        reports.push(s.report);
        snapshot_rel_err.push(s.snapshot);
        spectra_rows.extend(s.spectra);
    }
    Ok(SettingOutcome {
        setting: setting.to_string(),
        reports,
        snapshot_rel_err,
        spectra_rows,
        tuned_params: None,
        tuned_cost: None,
        tuning_log: Vec::new(),
    })
}

/// Axis swept by the `sweep` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", rename_all = "snake_case")]
pub enum SweepAxis {
    NSub { values: Vec<usize> },
    Gamma { values: Vec<f64> },
    NHidden { values: Vec<usize> },
    NLag { values: Vec<usize> },
}

impl SweepAxis {
    pub fn len(&self) -> usize {
        match self {
            SweepAxis::NSub { values } => values.len(),
            SweepAxis::Gamma { values } => values.len(),
            SweepAxis::NHidden { values } => values.len(),
            SweepAxis::NLag { values } => values.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Run the full tune-train-evaluate pipeline per axis value. The base
/// dataset is generated once at the native cadence and re-subsampled per
/// setting for the `NSub` axis.
pub fn grid_sweep(
    cfg: &ExperimentConfig,
    axis: &SweepAxis,
    base_data: &DatasetSplit<f64>,
    seed: u64,
) -> Result<Vec<SettingOutcome>> {
    if axis.is_empty() {
        return Err(Error::config("sweep axis has no values"));
    }
    let mut outcomes = Vec::with_capacity(axis.len());
    match axis {
        SweepAxis::NSub { values } => {
            for &n_sub in values {
                let mut sub_cfg = cfg.clone();
                sub_cfg.data.n_sub = n_sub;
                let data = subsample_split(base_data, n_sub, cfg.data.fixed_samples)?;
                let label = format!("n_sub={n_sub}");
                outcomes.push(run_setting(&sub_cfg, &data, &label, seed)?);
            }
        }
        SweepAxis::Gamma { values } => {
            let data = subsample_split(base_data, cfg.data.n_sub, cfg.data.fixed_samples)?;
            for &gamma in values {
                let mut sub_cfg = cfg.clone();
                match &mut sub_cfg.tuning {
                    Some(t) => t.gamma = gamma,
                    None => {
                        return Err(Error::config(
                            "sweep over gamma requires a tuning block",
                        ))
                    }
                }
                let label = format!("gamma={gamma}");
                outcomes.push(run_setting(&sub_cfg, &data, &label, seed)?);
            }
        }
        SweepAxis::NHidden { values } => {
            let data = subsample_split(base_data, cfg.data.n_sub, cfg.data.fixed_samples)?;
            for &n_hidden in values {
                let mut sub_cfg = cfg.clone();
                match &mut sub_cfg.architecture {
                    ArchitectureConfig::Esn { n_hidden: slot, .. } => *slot = n_hidden,
                    ArchitectureConfig::Nvar { .. } => {
                        return Err(Error::config("sweep over n_hidden requires the ESN"))
                    }
                }
                let label = format!("n_hidden={n_hidden}");
                outcomes.push(run_setting(&sub_cfg, &data, &label, seed)?);
            }
        }
        SweepAxis::NLag { values } => {
            let data = subsample_split(base_data, cfg.data.n_sub, cfg.data.fixed_samples)?;
            for &n_lag in values {
                let mut sub_cfg = cfg.clone();
                match &mut sub_cfg.architecture {
                    ArchitectureConfig::Nvar { n_lag: slot, .. } => *slot = n_lag,
                    ArchitectureConfig::Esn { .. } => {
                        return Err(Error::config("sweep over n_lag requires the NVAR"))
                    }
                }
                let label = format!("n_lag={n_lag}");
                outcomes.push(run_setting(&sub_cfg, &data, &label, seed)?);
            }
        }
    }
    Ok(outcomes)
}

/// Evaluate a persisted checkpoint on the test split of `data`, using the
/// normalizer and decomposition stored with the model.
pub fn evaluate_checkpoint(
    cfg: &ExperimentConfig,
    data: &DatasetSplit<f64>,
    checkpoint: &crate::io::Checkpoint,
    setting: &str,
    seed: u64,
) -> Result<SettingOutcome> {
    match &checkpoint.model {
        crate::io::ModelCheckpoint::Esn(model) => evaluate_model(
            cfg,
            data,
            &checkpoint.decomp,
            &checkpoint.normalizer,
            model,
            setting,
            seed,
        ),
        crate::io::ModelCheckpoint::Nvar(model) => evaluate_model(
            cfg,
            data,
            &checkpoint.decomp,
            &checkpoint.normalizer,
            model,
            setting,
            seed,
        ),
    }
}

/// Dispatch on the configured architecture.
pub fn run_setting(
    cfg: &ExperimentConfig,
    data: &DatasetSplit<f64>,
    setting: &str,
    seed: u64,
) -> Result<SettingOutcome> {
    match cfg.architecture {
        ArchitectureConfig::Esn { .. } => run_esn_setting(cfg, data, setting, seed),
        ArchitectureConfig::Nvar { .. } => run_nvar_setting(cfg, data, setting, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Lorenz96Config;

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            system: SystemConfig::Lorenz96(Lorenz96Config {
                n_vars: 6,
                forcing: 8.0,
                dt: 0.01,
            }),
            data: DataConfig {
                spinup: 2.0,
                train: 20.0,
                validation: 6.0,
                test: 8.0,
                n_sub: 1,
                fixed_samples: None,
            },
            decomposition: None,
            architecture: ArchitectureConfig::Esn {
                n_hidden: 60,
                kappa: 3,
                input_scaling: InputScaling::SingularValue,
                macro_params: Some(EsnMacroParams {
                    rho: 0.6,
                    sigma: 0.8,
                    sigma_b: 0.5,
                    alpha: 0.9,
                    beta: 1e-6,
                }),
            },
            normalization: NormalizationKind::GlobalSd,
            tuning: None,
            evaluation: EvaluationConfig {
                n_test_ics: 4,
                forecast: 1.0,
                spinup: 2.0,
                epsilon: 0.2,
                snapshot: None,
            },
        }
    }

    #[test]
    fn fixed_params_pipeline_produces_reports() {
        let cfg = tiny_config();
        let data = prepare_dataset(&cfg, 3).unwrap();
        let outcome = run_esn_setting(&cfg, &data, "base", 3).unwrap();
        assert_eq!(outcome.reports.len(), 4);
        for r in &outcome.reports {
            assert!(r.nrmse_total.is_finite());
            assert!(r.ke_nrmse.is_none());
            assert_eq!(r.nrmse_t.len(), 100);
        }
    }

    #[test]
    fn pipeline_is_deterministic() {
        let cfg = tiny_config();
        let data = prepare_dataset(&cfg, 5).unwrap();
        let a = run_esn_setting(&cfg, &data, "x", 5).unwrap();
        let b = run_esn_setting(&cfg, &data, "x", 5).unwrap();
        for (ra, rb) in a.reports.iter().zip(b.reports.iter()) {
            assert_eq!(ra.nrmse_total.to_bits(), rb.nrmse_total.to_bits());
            assert_eq!(ra.vpt, rb.vpt);
        }
    }

    #[test]
    fn nvar_pipeline_runs() {
        let mut cfg = tiny_config();
        cfg.architecture = ArchitectureConfig::Nvar {
            n_lag: 1,
            n_neighbor: 1,
            beta: 1e-4,
        };
        let data = prepare_dataset(&cfg, 7).unwrap();
        let outcome = run_nvar_setting(&cfg, &data, "nvar", 7).unwrap();
        assert_eq!(outcome.reports.len(), 4);
    }

    #[test]
    fn config_hash_changes_with_content() {
        let a = tiny_config();
        let mut b = tiny_config();
        b.data.n_sub = 4;
        assert_ne!(a.config_hash().unwrap(), b.config_hash().unwrap());
        assert_eq!(a.config_hash().unwrap(), tiny_config().config_hash().unwrap());
    }

    #[test]
    fn validation_names_offending_key() {
        let mut cfg = tiny_config();
        cfg.evaluation.forecast = 0.0;
        match cfg.validate() {
            Err(Error::Config(msg)) => assert!(msg.contains("evaluation.forecast"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
        let mut cfg = tiny_config();
        cfg.data.train = -1.0;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn sweep_produces_one_outcome_per_value() {
        let mut cfg = tiny_config();
        cfg.evaluation.n_test_ics = 2;
        let data = prepare_dataset(&cfg, 9).unwrap();
        let outcomes = grid_sweep(
            &cfg,
            &SweepAxis::NSub { values: vec![1, 2] },
            &data,
            9,
        )
        .unwrap();
        assert_eq!(outcomes.len(), 2);
        assert_eq!(outcomes[0].setting, "n_sub=1");
        assert_eq!(outcomes[1].setting, "n_sub=2");
        assert_eq!(outcomes[0].reports.len(), 2);
        // effective steps double, horizons in model units stay fixed
        assert_eq!(outcomes[1].reports[0].nrmse_t.len(), 50);
    }

    #[test]
    fn fixed_sample_truncation() {
        let cfg = tiny_config();
        let data = prepare_dataset(&cfg, 11).unwrap();
        let truncated = subsample_split(&data, 2, Some(300)).unwrap();
        assert_eq!(truncated.train.n_time(), 300);
        assert_eq!(truncated.validation.n_time(), 300);
        // requesting more samples than the split holds is a config error
        assert!(subsample_split(&data, 1, Some(5000)).is_err());
    }
}
