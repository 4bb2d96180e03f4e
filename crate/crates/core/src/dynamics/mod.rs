//! Ground-truth dynamics: the Lorenz-96 testbed and the two-surface
//! quasi-geostrophic turbulence solver, plus dataset generation.

pub mod lorenz96;
pub mod rk4;
pub mod spectral;
pub mod sqg;

pub use lorenz96::{lorenz96_rhs, Lorenz96Config};
pub use rk4::integrate_rk4;
pub use sqg::{invert_streamfunction, sqg_step, SpectralState, SqgConfig, SqgDiagnostics, SqgSolver};

use crate::error::{Error, Result};
use crate::rng::CounterRng;
use crate::trajectory::{from_rows_unchecked, DatasetSplit, SplitDurations, Trajectory};
use crate::Scalar;
use ndarray::{Array1, Array2};
use rustfft::FftNum;

/// Which system generates the data.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemConfig {
    Lorenz96(Lorenz96Config),
    Sqg(SqgConfig),
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            SystemConfig::Lorenz96(c) => c.validate(),
            SystemConfig::Sqg(c) => c.validate(),
        }
    }

    /// Native model step in the system's own time units.
    pub fn dt(&self) -> f64 {
        match self {
            SystemConfig::Lorenz96(c) => c.dt,
            SystemConfig::Sqg(c) => c.dt,
        }
    }

    pub fn state_len(&self) -> usize {
        match self {
            SystemConfig::Lorenz96(c) => c.n_vars,
            SystemConfig::Sqg(c) => c.state_len(),
        }
    }

    /// Grid dimensions for gridded systems; Lorenz-96 presents as a 1-D ring.
    pub fn grid_dims(&self) -> (usize, usize, usize) {
        match self {
            SystemConfig::Lorenz96(c) => (c.n_vars, 1, 1),
            SystemConfig::Sqg(c) => (c.nx, c.ny, c.nz),
        }
    }
}

/// Generate spinup + splits from Gaussian random initial conditions.
///
/// The spinup segment is discarded; the first retained state is the state
/// reached at the end of the spinup (with zero spinup, the random initial
/// state itself). Splits are contiguous and ordered train, validation, test.
/// Identical `(system, seed)` pairs produce bit-identical datasets.
pub fn generate_dataset<T: Scalar + FftNum>(
    system: &SystemConfig,
    spinup: f64,
    splits: SplitDurations,
    seed: u64,
) -> Result<DatasetSplit<T>> {
    system.validate()?;
    splits.validate()?;
    if spinup < 0.0 {
        return Err(Error::config("spinup duration must be non-negative"));
    }
    let dt = system.dt();
    let spinup_steps = (spinup / dt).round() as usize;
    let (n_train, n_validation, n_test) = splits.steps(dt);
    let n_total = n_train + n_validation + n_test;
    if n_train == 0 || n_validation == 0 || n_test == 0 {
        return Err(Error::config("each split must span at least one step"));
    }

    let full: Trajectory<T> = match system {
        SystemConfig::Lorenz96(cfg) => {
            let mut rng = CounterRng::new(seed, 0x4c39_3649); // init stream
            let mut state: Array1<T> =
                Array1::from_shape_fn(cfg.n_vars, |_| T::cast(rng.normal()));
            let forcing = T::cast(cfg.forcing);
            for step in 0..spinup_steps {
                rk4::rk4_step_in_place(
                    |v, k| lorenz96::lorenz96_rhs_into(v, forcing, k),
                    &mut state,
                    cfg.dt,
                );
                if state.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Blowup { step: step + 1 });
                }
            }
            let states = rk4::integrate_rk4(
                |v, k| lorenz96::lorenz96_rhs_into(v, forcing, k),
                state.view(),
                cfg.dt,
                n_total - 1,
            )?;
            from_rows_unchecked(states, cfg.dt, 1)
        }
        SystemConfig::Sqg(cfg) => {
            let mut solver = SqgSolver::<T>::new(cfg.clone())?;
            let mut state = solver.random_initial_state(seed);
            for _ in 0..spinup_steps {
                solver.step(&mut state)?;
            }
            let mut rows = Array2::zeros((n_total, cfg.state_len()));
            rows.row_mut(0)
                .assign(&solver.diagnostics().spectral_to_row(&state));
            for i in 1..n_total {
                solver.step(&mut state)?;
                rows.row_mut(i)
                    .assign(&solver.diagnostics().spectral_to_row(&state));
            }
            from_rows_unchecked(rows, cfg.dt, 1)
        }
    };

    DatasetSplit::partition(&full, n_train, n_validation, n_test, spinup)
}
