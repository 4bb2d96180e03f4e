//! Two-stage optimization of the ESN macro parameters: the inner stage
//! fits readouts by ridge regression, the outer stage scores candidate
//! parameter sets on validation forecasts with an NRMSE + gamma * KE_NRMSE
//! cost and searches the five-dimensional space by Bayesian optimization.

pub mod bayes;
pub mod gp;

pub use bayes::{
    bayes_optimize, expected_improvement, latin_hypercube, Evaluation, OptBudget, OptRun,
    ParamBound, SearchSpace,
};
pub use gp::GpModel;

use crate::dynamics::sqg::{SqgConfig, SqgDiagnostics};
use crate::error::{Error, Result};
use crate::metrics;
use crate::parallel::DomainDecomposition;
use crate::reservoir::{train_esn, EsnBase, EsnMacroParams, EsnModel, EsnParams};
use crate::rng::CounterRng;
use crate::rollout::predict_autonomous;
use crate::train::Normalizer;
use crate::trajectory::Trajectory;
use ndarray::Array1;
use rayon::prelude::*;

/// Cost assigned to a diverged validation forecast (and to candidates whose
/// training fails outright).
pub const DIVERGENCE_SENTINEL: f64 = 1.0e6;

/// Outer-loop cost settings.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MacroCostConfig {
    /// Weight of the spectral term.
    pub gamma: f64,
    /// Validation forecasts per cost evaluation.
    pub n_macro: usize,
    /// Forecast horizon in emulator steps.
    pub forecast_steps: usize,
    /// Teacher-forced spinup before each forecast, emulator steps.
    pub spinup_steps: usize,
}

impl MacroCostConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gamma < 0.0 {
            return Err(Error::config("gamma must be non-negative"));
        }
        if self.n_macro < 1 {
            return Err(Error::config("n_macro must be >= 1"));
        }
        if self.forecast_steps < 1 {
            return Err(Error::config("forecast horizon must be >= 1 step"));
        }
        Ok(())
    }
}

/// Everything fixed across candidate evaluations: normalized data, fixed
/// validation initial conditions, truth statistics, and the raw matrix
/// draws (so the cost surface over the macro parameters is deterministic).
pub struct EsnCostContext {
    pub decomp: DomainDecomposition,
    pub cfg: MacroCostConfig,
    base: EsnBase<f64>,
    train_norm: Trajectory<f64>,
    validation_norm: Trajectory<f64>,
    normalizer: Normalizer<f64>,
    ic_indices: Vec<usize>,
    /// Pooled SD of the physical validation truth.
    sd_pooled: f64,
    /// Spectrum machinery and per-bin SD for gridded systems.
    spectra: Option<SpectraContext>,
}

struct SpectraContext {
    diag: SqgDiagnostics<f64>,
    sd_k: Array1<f64>,
    /// Physical validation truth spectra, one row per validation state.
    truth: metrics::SpectrumSeries<f64>,
}

impl EsnCostContext {
    /// `seed` fixes both the matrix draws and the validation initial
    /// conditions. `sqg` enables the spectral term and must be given when
    /// `gamma > 0`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        params: EsnParams,
        train_physical: &Trajectory<f64>,
        validation_physical: &Trajectory<f64>,
        normalizer: Normalizer<f64>,
        cfg: MacroCostConfig,
        decomp: DomainDecomposition,
        sqg: Option<&SqgConfig>,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        if cfg.gamma > 0.0 && sqg.is_none() {
            return Err(Error::Unsupported(
                "spectral penalty requires a gridded system configuration".into(),
            ));
        }
        let train_norm = normalizer.normalize(train_physical);
        let validation_norm = normalizer.normalize(validation_physical);
        let n_valid = validation_norm.n_time();
        let first_ic = cfg.spinup_steps.max(1);
        let last_ic = n_valid
            .checked_sub(cfg.forecast_steps + 1)
            .filter(|last| *last >= first_ic)
            .ok_or_else(|| {
                Error::config(format!(
                    "validation split too short: {n_valid} states for spinup {} + horizon {}",
                    cfg.spinup_steps, cfg.forecast_steps
                ))
            })?;
        let mut rng = CounterRng::new(seed, 0x1c5);
        let ic_indices: Vec<usize> = (0..cfg.n_macro)
            .map(|_| first_ic + rng.index(last_ic - first_ic + 1))
            .collect();
        let sd_pooled = metrics::pooled_sd(validation_physical.data());
        let spectra = match sqg {
            Some(cfg_sqg) => {
                let diag = SqgDiagnostics::<f64>::new(cfg_sqg.clone())?;
                let truth =
                    metrics::ke_spectrum_series_with(&diag, validation_physical.data())?;
                let sd_k = metrics::spectrum_temporal_sd(&truth);
                if sd_k.iter().any(|&s| s <= 0.0) {
                    return Err(Error::DegenerateData(
                        "validation spectra have a zero-variance bin".into(),
                    ));
                }
                Some(SpectraContext { diag, sd_k, truth })
            }
            None => None,
        };
        let base = EsnBase::draw(params, decomp.input_len())?;
        Ok(EsnCostContext {
            decomp,
            cfg,
            base,
            train_norm,
            validation_norm,
            normalizer,
            ic_indices,
            sd_pooled,
            spectra,
        })
    }

    pub fn ic_indices(&self) -> &[usize] {
        &self.ic_indices
    }

    /// Train with the candidate parameters and score the fixed validation
    /// forecasts. Returns the cost and the trained model.
    pub fn evaluate(&self, macro_params: &EsnMacroParams) -> (f64, Option<EsnModel<f64>>) {
        let model = match train_esn(&self.base, macro_params, &self.train_norm, &self.decomp) {
            Ok(m) => m,
            Err(_) => return (DIVERGENCE_SENTINEL, None),
        };
        let costs: Vec<f64> = self
            .ic_indices
            .par_iter()
            .map(|&ic| self.score_forecast(&model, ic))
            .collect();
        let mean = costs.iter().sum::<f64>() / costs.len() as f64;
        (mean, Some(model))
    }

    fn score_forecast(&self, model: &EsnModel<f64>, ic: usize) -> f64 {
        let start = ic.saturating_sub(self.cfg.spinup_steps);
        let window = match self.validation_norm.slice_time(start, ic + 1) {
            Ok(w) => w,
            Err(_) => return DIVERGENCE_SENTINEL,
        };
        let fc = match predict_autonomous(model, &self.decomp, &window, self.cfg.forecast_steps)
        {
            Ok(fc) => fc,
            Err(_) => return DIVERGENCE_SENTINEL,
        };
        if fc.diverged() {
            return DIVERGENCE_SENTINEL;
        }
        let mut pred = fc.states;
        self.normalizer.denormalize_rows(&mut pred);
        // physical truth rows ic+1 .. ic+forecast_steps
        let truth_norm = self
            .validation_norm
            .slice_time(ic + 1, ic + 1 + self.cfg.forecast_steps)
            .expect("ic chosen to fit");
        let truth = self.normalizer.denormalize(&truth_norm);
        let nrmse = match metrics::nrmse_total(pred.view(), truth.data(), self.sd_pooled) {
            Ok(v) => v,
            Err(_) => return DIVERGENCE_SENTINEL,
        };
        let mut cost = nrmse;
        if self.cfg.gamma > 0.0 {
            let ctx = self.spectra.as_ref().expect("validated in new()");
            let pred_spec = match metrics::ke_spectrum_series_with(&ctx.diag, pred.view()) {
                Ok(s) => s,
                Err(_) => return DIVERGENCE_SENTINEL,
            };
            let truth_spec = metrics::SpectrumSeries {
                energy: ctx
                    .truth
                    .energy
                    .slice(ndarray::s![ic + 1..ic + 1 + self.cfg.forecast_steps, ..])
                    .to_owned(),
                wavenumber_bins: ctx.truth.wavenumber_bins.clone(),
            };
            match metrics::ke_nrmse(&pred_spec, &truth_spec, ctx.sd_k.view()) {
                Ok(v) => cost += self.cfg.gamma * v,
                Err(_) => return DIVERGENCE_SENTINEL,
            }
        }
        cost
    }
}

/// One-shot evaluation of the macro cost (builds the full context; tuners
/// should construct [`EsnCostContext`] once and reuse it).
#[allow(clippy::too_many_arguments)]
pub fn macro_cost(
    macro_params: &EsnMacroParams,
    esn: EsnParams,
    train_physical: &Trajectory<f64>,
    validation_physical: &Trajectory<f64>,
    normalizer: Normalizer<f64>,
    cfg: MacroCostConfig,
    decomp: DomainDecomposition,
    sqg: Option<&SqgConfig>,
    seed: u64,
) -> Result<f64> {
    let ctx = EsnCostContext::new(
        esn,
        train_physical,
        validation_physical,
        normalizer,
        cfg,
        decomp,
        sqg,
        seed,
    )?;
    Ok(ctx.evaluate(macro_params).0)
}

/// Default search bounds for the five macro parameters.
pub fn default_search_space() -> SearchSpace {
    SearchSpace {
        bounds: vec![
            ParamBound::new("rho", 0.01, 2.0, false),
            ParamBound::new("sigma", 0.01, 5.0, true),
            ParamBound::new("sigma_b", 0.0, 2.0, false),
            ParamBound::new("alpha", 0.01, 1.0, false),
            ParamBound::new("beta", 1e-9, 1e-2, true),
        ],
    }
}

fn params_from_vec(v: &[f64]) -> EsnMacroParams {
    EsnMacroParams {
        rho: v[0],
        sigma: v[1],
        sigma_b: v[2],
        alpha: v[3],
        beta: v[4],
    }
}

/// Result of a full tuning run; the model trained with the selected
/// parameters is cached from its evaluation.
pub struct TuneResult {
    pub best_params: EsnMacroParams,
    pub best_cost: f64,
    pub best_model: EsnModel<f64>,
    pub run: OptRun,
}

/// Bayesian optimization of the macro parameters against the macro cost.
pub fn tune_esn(
    ctx: &EsnCostContext,
    space: &SearchSpace,
    budget: &OptBudget,
) -> Result<TuneResult> {
    if space.dim() != 5 {
        return Err(Error::config("macro search space must have 5 dimensions"));
    }
    let best_model = std::cell::RefCell::new(None::<(f64, EsnModel<f64>)>);
    let run = bayes_optimize(space, budget, &[], |v| {
        let params = params_from_vec(v);
        let (cost, model) = ctx.evaluate(&params);
        if let Some(model) = model {
            let mut slot = best_model.borrow_mut();
            let replace = slot.as_ref().map_or(true, |(c, _)| cost < *c);
            if replace {
                *slot = Some((cost, model));
            }
        }
        cost
    })?;
    let best = run.best();
    let best_params = params_from_vec(&best.params);
    let best_cost = best.cost;
    let cached = best_model.into_inner();
    let best_model = match cached {
        Some((c, m)) if c <= best_cost => m,
        // the best evaluation failed to cache (should not happen); retrain
        _ => {
            ctx.evaluate(&best_params)
                .1
                .ok_or_else(|| Error::Numerical("best candidate failed to train".into()))?
        }
    };
    Ok(TuneResult {
        best_params,
        best_cost,
        best_model,
        run,
    })
}
