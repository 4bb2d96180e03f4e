//! Acceptance suite: one test per criterion, each printing a PASS line
//! with the measured quantities. The heavier criteria share fixtures
//! (datasets, tuned models) through lazy statics.

use ndarray::{Array1, Array2};
use std::sync::OnceLock;
use turbem::dynamics::sqg::SqgConfig;
use turbem::dynamics::{generate_dataset, Lorenz96Config, SystemConfig};
use turbem::experiment::{
    grid_sweep, subsample_split, ArchitectureConfig, DataConfig, EvaluationConfig,
    ExperimentConfig, SettingOutcome, SweepAxis, TuningConfig,
};
use turbem::hyperopt::{tune_esn, EsnCostContext, MacroCostConfig, OptBudget};
use turbem::metrics;
use turbem::nvar;
use turbem::parallel::decompose;
use turbem::reservoir::{EsnParams, InputScaling};
use turbem::rng::CounterRng;
use turbem::rollout::predict_autonomous;
use turbem::train::{fit_readout, NormalizationKind, Normalizer, RidgeProblem};
use turbem::trajectory::{DatasetSplit, SplitDurations, Trajectory};

// ---------------------------------------------------------------- 1

/// Gauss-Jordan inverse; test-side oracle, independent of the solver path.
fn invert(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let mut aug = Array2::zeros((n, 2 * n));
    for i in 0..n {
        for j in 0..n {
            aug[[i, j]] = a[[i, j]];
        }
        aug[[i, n + i]] = 1.0;
    }
    for col in 0..n {
        let mut pivot = col;
        for r in col + 1..n {
            if aug[[r, col]].abs() > aug[[pivot, col]].abs() {
                pivot = r;
            }
        }
        if pivot != col {
            for j in 0..2 * n {
                let tmp = aug[[col, j]];
                aug[[col, j]] = aug[[pivot, j]];
                aug[[pivot, j]] = tmp;
            }
        }
        let p = aug[[col, col]];
        for j in 0..2 * n {
            aug[[col, j]] /= p;
        }
        for r in 0..n {
            if r != col {
                let f = aug[[r, col]];
                for j in 0..2 * n {
                    aug[[r, j]] -= f * aug[[col, j]];
                }
            }
        }
    }
    aug.slice(ndarray::s![.., n..]).to_owned()
}

#[test]
fn criterion_01_ridge_matches_explicit_inverse() {
    let start = std::time::Instant::now();
    let mut rng = CounterRng::new(0xacc1, 0);
    let mut worst: f64 = 0.0;
    for trial in 0..20 {
        let n_r = 5 + rng.index(46); // <= 50
        let n_train = n_r + 1 + rng.index(200 - n_r); // <= 200
        let n_out = 1 + rng.index(6);
        let beta = 10f64.powf(rng.uniform_in(-6.0, -1.0));
        let r = Array2::from_shape_fn((n_r, n_train), |_| rng.uniform_sym());
        let v = Array2::from_shape_fn((n_out, n_train), |_| rng.uniform_sym());
        let w = fit_readout(&RidgeProblem {
            hidden: r.clone(),
            targets: v.clone(),
            beta,
        })
        .unwrap();
        // textbook evaluation with the explicit inverse
        let nt = n_train as f64;
        let mut gram = Array2::zeros((n_r, n_r));
        ndarray::linalg::general_mat_mul(1.0 / nt, &r, &r.t(), 0.0, &mut gram);
        for i in 0..n_r {
            gram[[i, i]] += beta;
        }
        let inv = invert(&gram);
        let mut vr = Array2::zeros((n_out, n_r));
        ndarray::linalg::general_mat_mul(1.0 / nt, &v, &r.t(), 0.0, &mut vr);
        let mut oracle = Array2::zeros((n_out, n_r));
        ndarray::linalg::general_mat_mul(1.0, &vr, &inv, 0.0, &mut oracle);
        let num = w
            .iter()
            .zip(oracle.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let den = oracle.iter().map(|x| x * x).sum::<f64>().sqrt();
        let rel = num / den;
        assert!(rel < 1e-8, "trial {trial}: relative error {rel}");
        worst = worst.max(rel);
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!(
        "[PASS] criterion 1: ridge solve matches explicit inverse on 20 instances \
         (worst rel err {worst:.2e}, {elapsed:?})"
    );
}

// ---------------------------------------------------------------- 2

#[test]
fn criterion_02_nvar_layout_matches_worked_example() {
    let start = std::time::Instant::now();
    let decomp = decompose(4, 1, 1, 4, 1, 0).unwrap();
    let cfg = nvar::NvarConfig {
        degree: 2,
        n_lag: 0,
        n_neighbor: 1,
        beta: 1e-4,
    };
    let layout = nvar::build_layout(&decomp, &cfg).unwrap();
    let quads: std::collections::BTreeSet<(usize, usize)> = layout
        .descriptors
        .iter()
        .filter_map(|d| match *d {
            nvar::FeatureDescriptor::Quadratic { cell_a, cell_b, .. } => Some((cell_a, cell_b)),
            _ => None,
        })
        .collect();
    let expected: std::collections::BTreeSet<(usize, usize)> =
        [(0, 0), (1, 1), (2, 2), (3, 3), (0, 1), (0, 3), (1, 2), (2, 3)]
            .into_iter()
            .collect();
    assert_eq!(quads, expected, "quadratic set differs from the worked example");
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0);
    println!(
        "[PASS] criterion 2: periodic 4-variable quadratic set is exactly \
         {{u0^2,u1^2,u2^2,u3^2,u0u1,u0u3,u1u2,u2u3}} ({elapsed:?})"
    );
}

// ---------------------------------------------------------------- 3

#[test]
fn criterion_03_decomposition_arithmetic_and_round_trips() {
    let start = std::time::Instant::now();
    let d = decompose(64, 64, 2, 8, 8, 1).unwrap();
    assert_eq!(d.n_groups(), 64);
    assert_eq!(d.input_len(), 200);
    assert_eq!(d.output_len(), 128);

    let mut rng = CounterRng::new(0xacc3, 0);
    for field_idx in 0..50 {
        let global = Array1::from_shape_fn(d.global_len(), |_| rng.uniform_sym());
        // gather interiors, scatter back: identity
        let interiors: Vec<Array1<f64>> = d
            .groups()
            .iter()
            .map(|g| Array1::from_iter(g.interior.iter().map(|&i| global[i])))
            .collect();
        let rebuilt = d.scatter_local_outputs(&interiors).unwrap();
        assert_eq!(rebuilt, global, "round trip failed on field {field_idx}");
        // halo exchange equals scatter-then-gather
        let direct = d.halo_exchange(global.view()).unwrap();
        for k in 0..d.n_groups() {
            let gathered = d.gather_local_input(global.view(), k).unwrap();
            assert_eq!(direct[k], gathered, "halo mismatch group {k}");
        }
    }
    // halo indices against a brute-force neighbor oracle with periodic wrap
    let (nx, ny) = (64i64, 64i64);
    for g in d.groups() {
        let x0 = (g.group_x * 8) as i64;
        let y0 = (g.group_y * 8) as i64;
        let mut expected = Vec::new();
        for z in 0..2i64 {
            for dy in -1..9 {
                for dx in -1..9 {
                    let x = (x0 + dx).rem_euclid(nx);
                    let y = (y0 + dy).rem_euclid(ny);
                    expected.push((x + nx * (y + ny * z)) as usize);
                }
            }
        }
        assert_eq!(g.input, expected, "halo oracle mismatch group {}", g.group_id);
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!(
        "[PASS] criterion 3: 64x64x2 / 8x8 / overlap 1 gives N_g=64, N_u=200, N_v=128; \
         50-field round trips and halo oracle hold ({elapsed:?})"
    );
}

// ---------------------------------------------------------------- 4

#[test]
fn criterion_04_spectrum_parseval_and_single_mode() {
    let start = std::time::Instant::now();
    let cfg = SqgConfig::default();
    let diag = turbem::dynamics::sqg::SqgDiagnostics::<f64>::new(cfg.clone()).unwrap();
    let solver = turbem::dynamics::sqg::SqgSolver::<f64>::new(cfg.clone()).unwrap();
    let mut worst: f64 = 0.0;
    for trial in 0..20 {
        let state = solver.random_initial_state(1000 + trial);
        let row = diag.spectral_to_row(&state);
        let spec = diag.ke_spectrum_row(row.view()).unwrap();
        let binned: f64 = spec.sum();
        let direct = diag.mean_kinetic_energy(row.view()).unwrap();
        let rel = (binned - direct).abs() / direct.abs().max(1e-30);
        assert!(rel <= 1e-10, "trial {trial}: Parseval violation {rel}");
        worst = worst.max(rel);
    }
    // single mode: all energy in its ring at the closed-form value
    let (mx, my) = (4usize, 3usize);
    let amp = 0.8;
    let mut row = Array1::zeros(cfg.state_len());
    for z in 0..2 {
        for iy in 0..cfg.ny {
            for ix in 0..cfg.nx {
                let phase = 2.0 * std::f64::consts::PI
                    * (mx as f64 * ix as f64 / cfg.nx as f64
                        + my as f64 * iy as f64 / cfg.ny as f64);
                row[ix + cfg.nx * (iy + cfg.ny * z)] = amp * phase.cos();
            }
        }
    }
    let spec = diag.ke_spectrum_row(row.view()).unwrap();
    for (i, &e) in spec.iter().enumerate() {
        if i != 4 {
            assert!(e.abs() < 1e-18, "energy leaked into bin {i}: {e}");
        }
    }
    let theta = diag.row_to_spectral(row.view()).unwrap();
    let psi = diag.invert_streamfunction(&theta);
    let k2 = diag.grid().k_abs(my, mx).powi(2);
    let mut want = 0.0;
    for level in 0..2 {
        want += 0.5
            * k2
            * (psi.levels[level][[my, mx]].norm_sqr()
                + psi.levels[level][[cfg.ny - my, cfg.nx - mx]].norm_sqr());
    }
    want *= 0.5;
    let rel = (spec[4] - want).abs() / want;
    assert!(rel <= 1e-10, "single-mode closed form off by {rel}");
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!(
        "[PASS] criterion 4: Parseval within 1e-10 on 20 fields (worst {worst:.2e}); \
         single-mode ring value matches closed form ({elapsed:?})"
    );
}

// ---------------------------------------------------------------- 5 & 6 harness

struct LorenzArmOutcome {
    /// VPT values in MTU, one per (matrix seed, test IC).
    vpts: Vec<f64>,
}

struct LorenzHarness {
    global_sd: LorenzArmOutcome,
    max_min: LorenzArmOutcome,
    raw_input: LorenzArmOutcome,
}

fn lorenz_harness() -> &'static LorenzHarness {
    static HARNESS: OnceLock<LorenzHarness> = OnceLock::new();
    HARNESS.get_or_init(|| {
        let system = SystemConfig::Lorenz96(Lorenz96Config {
            n_vars: 6,
            forcing: 8.0,
            dt: 0.01,
        });
        let splits = SplitDurations {
            train: 420.0,
            validation: 60.0,
            test: 120.0,
        };
        let data: DatasetSplit<f64> = generate_dataset(&system, 10.0, splits, 90).unwrap();

        let matrix_seeds = [11u64, 12, 13];
        let n_ics = 25usize;
        let arms = [
            (NormalizationKind::GlobalSd, InputScaling::SingularValue),
            (NormalizationKind::GlobalMaxMin, InputScaling::SingularValue),
            (NormalizationKind::GlobalSd, InputScaling::Raw),
        ];

        // shared test initial conditions for paired comparisons
        let spinup_steps = 500; // 5 MTU
        let forecast_steps = 1500; // 15 MTU
        let ics = turbem::experiment::test_initial_conditions(
            data.test.n_time(),
            spinup_steps,
            forecast_steps,
            n_ics,
            0x196,
        )
        .unwrap();

        let jobs: Vec<(usize, u64)> = (0..arms.len())
            .flat_map(|a| matrix_seeds.iter().map(move |&s| (a, s)))
            .collect();
        use rayon::prelude::*;
        let results: Vec<(usize, Vec<f64>)> = jobs
            .par_iter()
            .map(|&(arm_idx, seed)| {
                let (norm_kind, scaling) = arms[arm_idx];
                let vpts = run_lorenz_arm(&data, norm_kind, scaling, seed, &ics);
                (arm_idx, vpts)
            })
            .collect();
        let mut per_arm: Vec<Vec<f64>> = vec![Vec::new(); arms.len()];
        for (arm_idx, vpts) in results {
            per_arm[arm_idx].extend(vpts);
        }
        let mut iter = per_arm.into_iter();
        LorenzHarness {
            global_sd: LorenzArmOutcome { vpts: iter.next().unwrap() },
            max_min: LorenzArmOutcome { vpts: iter.next().unwrap() },
            raw_input: LorenzArmOutcome { vpts: iter.next().unwrap() },
        }
    })
}

fn run_lorenz_arm(
    data: &DatasetSplit<f64>,
    norm_kind: NormalizationKind,
    scaling: InputScaling,
    seed: u64,
    ics: &[usize],
) -> Vec<f64> {
    let decomp = decompose(6, 1, 1, 6, 1, 0).unwrap();
    let normalizer = Normalizer::fit(&data.train, norm_kind).unwrap();
    let params = EsnParams {
        n_hidden: 500,
        kappa: 6,
        seed,
        input_scaling: scaling,
    };
    let cost_cfg = MacroCostConfig {
        gamma: 0.0,
        n_macro: 8,
        forecast_steps: 100, // 1 MTU validation forecasts
        spinup_steps: 500,   // 5 MTU network spinup
    };
    let ctx = EsnCostContext::new(
        params,
        &data.train,
        &data.validation,
        normalizer.clone(),
        cost_cfg,
        decomp.clone(),
        None,
        seed,
    )
    .unwrap();
    let budget = OptBudget {
        n_initial: 10,
        n_iterations: 5,
        seed,
    };
    let tuned = tune_esn(&ctx, &turbem::hyperopt::default_search_space(), &budget).unwrap();

    // test-phase VPT with per-channel SD from the training data
    let sd_channels = metrics::per_channel_sd(data.train.data());
    let test_norm = normalizer.normalize(&data.test);
    let spinup_steps = 500;
    let forecast_steps = 1500;
    ics.iter()
        .map(|&ic| {
            let window = test_norm.slice_time(ic - spinup_steps, ic + 1).unwrap();
            let fc = predict_autonomous(&tuned.best_model, &decomp, &window, forecast_steps)
                .unwrap();
            let n_done = fc.n_steps();
            let mut pred = fc.states;
            normalizer.denormalize_rows(&mut pred);
            let truth = data
                .test
                .slice_time(ic + 1, ic + 1 + forecast_steps)
                .unwrap();
            let truth_data = truth.data();
            let series = metrics::nrmse_timeseries_per_channel(
                pred.view(),
                truth_data.slice(ndarray::s![..n_done, ..]),
                sd_channels.view(),
            )
            .unwrap();
            let mut v = metrics::vpt(series.view(), 0.2, data.test.dt_effective());
            if fc.diverged_at.is_some() && v.censored {
                v.censored = false;
            }
            v.time
        })
        .collect()
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

#[test]
fn criterion_05_global_sd_beats_max_min_normalization() {
    let start = std::time::Instant::now();
    let h = lorenz_harness();
    let med_sd = median(&h.global_sd.vpts);
    let med_mm = median(&h.max_min.vpts);
    assert!(
        med_sd > med_mm,
        "median VPT(GlobalSD) = {med_sd} MTU not above median VPT(GlobalMaxMin) = {med_mm} MTU"
    );
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1800.0, "took {elapsed:?}");
    println!(
        "[PASS] criterion 5: median VPT GlobalSD {med_sd:.2} MTU > GlobalMaxMin {med_mm:.2} MTU \
         over 3 seeds x 25 ICs ({elapsed:?})"
    );
}

#[test]
fn criterion_06_singular_value_input_scaling_not_worse() {
    let start = std::time::Instant::now();
    let h = lorenz_harness();
    let med_normalized = median(&h.global_sd.vpts);
    let med_raw = median(&h.raw_input.vpts);
    assert!(
        med_normalized >= med_raw - 0.1,
        "median VPT normalized = {med_normalized} MTU below raw = {med_raw} MTU by more than 0.1"
    );
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1800.0, "took {elapsed:?}");
    println!(
        "[PASS] criterion 6: median VPT with sigma_max input normalization {med_normalized:.2} MTU \
         vs raw scaling {med_raw:.2} MTU (tolerance 0.1) ({elapsed:?})"
    );
}

// ---------------------------------------------------------------- 7-9 fixtures

const MINUTES_PER_DAY: f64 = 24.0 * 60.0;
const SQG_SEED: u64 = 2026;

fn sqg_experiment_config(gamma: f64) -> ExperimentConfig {
    ExperimentConfig {
        system: SystemConfig::Sqg(SqgConfig::default()), // 32x32x2 desk scale
        data: DataConfig {
            spinup: 360.0 * MINUTES_PER_DAY,
            train: 360.0 * MINUTES_PER_DAY, // one simulated year
            validation: 90.0 * MINUTES_PER_DAY,
            test: 120.0 * MINUTES_PER_DAY,
            n_sub: 1,
            fixed_samples: None,
        },
        decomposition: Some(turbem::experiment::DecompositionConfig {
            nx_loc: 4,
            ny_loc: 4,
            n_overlap: 1,
        }),
        architecture: ArchitectureConfig::Esn {
            n_hidden: 1000,
            kappa: 6,
            input_scaling: InputScaling::SingularValue,
            macro_params: None,
        },
        normalization: NormalizationKind::GlobalSd,
        tuning: Some(TuningConfig {
            gamma,
            n_macro: 4,
            n_initial: 6,
            n_iterations: 3,
            forecast: 720.0,  // 12 h validation forecasts
            spinup: 14_400.0, // 10 day network spinup
            bounds: None,
        }),
        evaluation: EvaluationConfig {
            n_test_ics: 20,
            forecast: 720.0,  // 12 h
            spinup: 14_400.0, // 10 days
            epsilon: 0.2,
            snapshot: Some(240.0), // 4 h lead
        },
    }
}

/// Native-cadence dataset shared by the turbulence criteria.
fn sqg_dataset() -> &'static DatasetSplit<f64> {
    static DATA: OnceLock<DatasetSplit<f64>> = OnceLock::new();
    DATA.get_or_init(|| {
        let cfg = sqg_experiment_config(0.1);
        let splits = SplitDurations {
            train: cfg.data.train,
            validation: cfg.data.validation,
            test: cfg.data.test,
        };
        generate_dataset(&cfg.system, cfg.data.spinup, splits, SQG_SEED).unwrap()
    })
}

struct SqgEsnFixture {
    /// gamma = 0.1, n_sub in {1, 4, 16}.
    gamma01: Vec<SettingOutcome>,
    /// gamma = 0, n_sub = 1.
    gamma0: SettingOutcome,
}

fn sqg_esn_fixture() -> &'static SqgEsnFixture {
    static FIXTURE: OnceLock<SqgEsnFixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let data = sqg_dataset();
        let cfg01 = sqg_experiment_config(0.1);
        let gamma01 = grid_sweep(
            &cfg01,
            &SweepAxis::NSub {
                values: vec![1, 4, 16],
            },
            data,
            SQG_SEED,
        )
        .unwrap();
        let cfg0 = sqg_experiment_config(0.0);
        let sub = subsample_split(data, 1, None).unwrap();
        let gamma0 =
            turbem::experiment::run_esn_setting(&cfg0, &sub, "gamma=0", SQG_SEED).unwrap();
        SqgEsnFixture { gamma01, gamma0 }
    })
}

/// Mean over samples of the mean relative spectrum error in the top third
/// of wavenumber bins at the snapshot lead.
fn top_third_snapshot_mean(outcome: &SettingOutcome) -> (f64, usize) {
    let mut per_sample = Vec::new();
    for snap in outcome.snapshot_rel_err.iter().flatten() {
        let n_bins = snap.len();
        let start = n_bins - n_bins.div_ceil(3); // last ceil(n/3) bins
        let tail: Vec<f64> = snap[start..]
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .collect();
        if !tail.is_empty() {
            per_sample.push(tail.iter().sum::<f64>() / tail.len() as f64);
        }
    }
    let n = per_sample.len();
    (per_sample.iter().sum::<f64>() / n.max(1) as f64, n)
}

fn mean_ke_nrmse(outcome: &SettingOutcome) -> f64 {
    let values: Vec<f64> = outcome
        .reports
        .iter()
        .filter_map(|r| r.ke_nrmse)
        .collect();
    values.iter().sum::<f64>() / values.len().max(1) as f64
}

fn mean_nrmse(outcome: &SettingOutcome) -> f64 {
    let values: Vec<f64> = outcome
        .reports
        .iter()
        .map(|r| r.nrmse_total)
        .filter(|v| v.is_finite())
        .collect();
    values.iter().sum::<f64>() / values.len().max(1) as f64
}

// ---------------------------------------------------------------- 7

#[test]
fn criterion_07_subsampling_induces_high_wavenumber_bias() {
    let start = std::time::Instant::now();
    let fixture = sqg_esn_fixture();
    let (tt1, n1) = top_third_snapshot_mean(&fixture.gamma01[0]);
    let (tt4, _n4) = top_third_snapshot_mean(&fixture.gamma01[1]);
    let (tt16, n16) = top_third_snapshot_mean(&fixture.gamma01[2]);
    assert!(n1 >= 10 && n16 >= 10, "too few valid snapshots: {n1}, {n16}");
    assert!(
        tt16 < 0.0,
        "top-third KE relative error at 4 h must be negative for n_sub=16, got {tt16}"
    );
    assert!(
        tt16 < tt1,
        "n_sub=16 bias ({tt16}) not more negative than n_sub=1 ({tt1})"
    );
    let ke: Vec<f64> = fixture.gamma01.iter().map(mean_ke_nrmse).collect();
    assert!(
        ke[0] <= ke[1] && ke[1] <= ke[2],
        "mean KE_NRMSE not non-decreasing across n_sub 1,4,16: {ke:?}"
    );
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 4.0 * 3600.0, "took {elapsed:?}");
    println!(
        "[PASS] criterion 7: top-third KE rel err at 4 h: n_sub=1 {tt1:+.3}, n_sub=4 {tt4:+.3}, \
         n_sub=16 {tt16:+.3}; mean KE_NRMSE {:.3} <= {:.3} <= {:.3} ({elapsed:?})",
        ke[0], ke[1], ke[2]
    );
}

// ---------------------------------------------------------------- 8

#[test]
fn criterion_08_gamma_trades_nrmse_for_spectrum() {
    let start = std::time::Instant::now();
    let fixture = sqg_esn_fixture();
    let with_gamma = &fixture.gamma01[0]; // n_sub = 1, gamma = 0.1
    let without = &fixture.gamma0;
    let ke_g = mean_ke_nrmse(with_gamma);
    let ke_0 = mean_ke_nrmse(without);
    let nr_g = mean_nrmse(with_gamma);
    let nr_0 = mean_nrmse(without);
    assert!(
        ke_g < ke_0,
        "gamma=0.1 should lower mean KE_NRMSE: {ke_g} vs {ke_0}"
    );
    assert!(
        nr_g > nr_0,
        "gamma=0.1 should raise mean NRMSE: {nr_g} vs {nr_0}"
    );
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 2.0 * 3600.0, "took {elapsed:?}");
    println!(
        "[PASS] criterion 8: gamma=0.1 vs gamma=0 at n_sub=1: KE_NRMSE {ke_g:.3} < {ke_0:.3}, \
         NRMSE {nr_g:.4} > {nr_0:.4} ({elapsed:?})"
    );
}

// ---------------------------------------------------------------- 9

#[test]
fn criterion_09_nvar_stabilizes_with_subsampling() {
    let start = std::time::Instant::now();
    let data = sqg_dataset();
    // 90-day training span is ample for the quadratic readout and keeps
    // the Gram accumulation tractable
    let train_days = 90.0;
    let n_train = (train_days * MINUTES_PER_DAY / data.train.dt_model()).round() as usize;
    let base = DatasetSplit {
        train: data.train.slice_time(0, n_train).unwrap(),
        validation: data.validation.clone(),
        test: data.test.clone(),
        spinup_discarded: data.spinup_discarded,
    };
    let mut cfg = sqg_experiment_config(0.0);
    cfg.architecture = ArchitectureConfig::Nvar {
        n_lag: 1,
        n_neighbor: 1,
        beta: 1e-4,
    };
    cfg.tuning = None;
    let outcomes = grid_sweep(
        &cfg,
        &SweepAxis::NSub {
            values: vec![1, 4, 16],
        },
        &base,
        SQG_SEED,
    )
    .unwrap();
    let fractions: Vec<f64> = outcomes
        .iter()
        .map(|o| {
            let diverged = o.reports.iter().filter(|r| r.truncated_at.is_some()).count();
            diverged as f64 / o.reports.len() as f64
        })
        .collect();
    assert!(
        fractions[0] >= fractions[1] && fractions[1] >= fractions[2],
        "divergence fraction must be non-increasing across n_sub 1,4,16: {fractions:?}"
    );
    let any_nsub1_diverged = fractions[0] > 0.0;
    let all_nsub16_complete = fractions[2] == 0.0;
    assert!(
        any_nsub1_diverged || all_nsub16_complete,
        "expected instability at n_sub=1 or full stability at n_sub=16: {fractions:?}"
    );
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 3600.0, "took {elapsed:?}");
    println!(
        "[PASS] criterion 9: NVAR divergence fractions within 12 h across n_sub 1,4,16: \
         {:.2}, {:.2}, {:.2} ({elapsed:?})",
        fractions[0], fractions[1], fractions[2]
    );
}
