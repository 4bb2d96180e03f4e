//! Subcommand implementations.

use crate::config::{load, FileConfig};
use crate::{Cli, Command};
use anyhow::{anyhow, bail, Context as _, Result};
use std::path::{Path, PathBuf};
use turbem::dynamics::SystemConfig;
use turbem::experiment::{
    self, dataset_hash, evaluate_checkpoint, grid_sweep, prepare_dataset, subsample_split,
    ArchitectureConfig, ExperimentConfig, SettingOutcome,
};
use turbem::hyperopt::{bayes_optimize, EsnCostContext, Evaluation, MacroCostConfig, OptBudget};
use turbem::io::{atomic_write, ArrayContainer, Checkpoint, ModelCheckpoint, Provenance};
use turbem::report;
use turbem::reservoir::{train_esn, EsnBase, EsnMacroParams, EsnParams};
use turbem::rollout::predict_autonomous;
use turbem::train::Normalizer;
use turbem::trajectory::{DatasetSplit, Trajectory};

pub fn dispatch(cli: &Cli) -> Result<()> {
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| anyhow!(turbem::Error::Config("--config is required".into())))?;
    let file = load(config_path)?;
    let seed = cli.seed.ok_or_else(|| {
        anyhow!(turbem::Error::Config(
            "--seed is required for every stochastic invocation".into()
        ))
    })?;
    match &cli.command {
        Command::Generate { out } => generate(&file, seed, out),
        Command::Train { data, out, params } => train(&file, seed, data, out, params.as_deref()),
        Command::Predict {
            data,
            model,
            out,
            sample,
        } => predict(&file, seed, data, model, out, *sample),
        Command::Evaluate {
            data,
            model,
            out_dir,
        } => evaluate(&file, seed, data, model, out_dir),
        Command::Tune { data, out, journal } => tune(&file, seed, data, out, journal.as_deref()),
        Command::Sweep { data, out_dir } => sweep(&file, seed, data.as_deref(), out_dir),
    }
}

// ---- dataset containers ----

fn split_to_container(
    split: &DatasetSplit<f64>,
    system: &SystemConfig,
    spinup: f64,
    seed: u64,
    config_hash: u64,
) -> Result<ArrayContainer> {
    let mut c = ArrayContainer::new(seed, config_hash);
    for (name, traj) in [
        ("train", &split.train),
        ("validation", &split.validation),
        ("test", &split.test),
    ] {
        c.insert_f64_slice(
            name,
            &[traj.n_time(), traj.n_state()],
            traj.data().as_slice().expect("contiguous"),
        )?;
    }
    c.meta
        .insert("dt_model".into(), format!("{}", split.train.dt_model()));
    c.meta
        .insert("n_sub".into(), split.train.n_sub().to_string());
    c.meta.insert("spinup".into(), format!("{spinup}"));
    c.meta.insert(
        "system".into(),
        serde_json::to_string(system).map_err(|e| turbem::Error::Config(e.to_string()))?,
    );
    c.meta
        .insert("dataset_hash".into(), dataset_hash(split));
    Ok(c)
}

fn split_from_container(c: &ArrayContainer) -> Result<DatasetSplit<f64>> {
    let dt_model: f64 = c
        .meta_str("dt_model")?
        .parse()
        .map_err(|_| turbem::Error::Integrity("bad dt_model metadata".into()))?;
    let n_sub = c.meta_u64("n_sub")? as usize;
    let spinup: f64 = c
        .meta_str("spinup")?
        .parse()
        .map_err(|_| turbem::Error::Integrity("bad spinup metadata".into()))?;
    let mut trajs = Vec::with_capacity(3);
    for name in ["train", "validation", "test"] {
        let arr = c.get_array2(name)?;
        trajs.push(Trajectory::new(arr, dt_model, n_sub).map_err(anyhow::Error::from)?);
    }
    let test = trajs.pop().unwrap();
    let validation = trajs.pop().unwrap();
    let train = trajs.pop().unwrap();
    Ok(DatasetSplit {
        train,
        validation,
        test,
        spinup_discarded: spinup,
    })
}

fn load_dataset(path: &Path) -> Result<(DatasetSplit<f64>, String)> {
    let c = ArrayContainer::load(path)
        .with_context(|| format!("loading dataset {}", path.display()))?;
    let split = split_from_container(&c)?;
    let recorded = c.meta_str("dataset_hash")?.to_string();
    let actual = dataset_hash(&split);
    if recorded != actual {
        bail!(turbem::Error::Integrity(format!(
            "dataset content hash {actual} does not match recorded {recorded}"
        )));
    }
    Ok((split, recorded))
}

/// Dataset cache key: system + spans + seed (independent of subsampling,
/// architecture, and evaluation settings).
fn cache_key(cfg: &ExperimentConfig, seed: u64) -> Result<String> {
    let doc = serde_json::json!({
        "system": &cfg.system,
        "spinup": cfg.data.spinup,
        "train": cfg.data.train,
        "validation": cfg.data.validation,
        "test": cfg.data.test,
        "seed": seed,
    });
    let body = serde_json::to_string(&doc).map_err(|e| turbem::Error::Config(e.to_string()))?;
    Ok(format!("{:016x}", experiment::fnv1a(body.as_bytes())))
}

/// Generate the native-cadence dataset, consulting `TURBEM_CACHE_DIR`.
fn native_dataset(cfg: &ExperimentConfig, seed: u64) -> Result<DatasetSplit<f64>> {
    let mut native_cfg = cfg.clone();
    native_cfg.data.n_sub = 1;
    native_cfg.data.fixed_samples = None;
    if let Ok(dir) = std::env::var("TURBEM_CACHE_DIR") {
        let path = PathBuf::from(dir).join(format!("dataset-{}.tem", cache_key(cfg, seed)?));
        if path.exists() {
            let (split, _) = load_dataset(&path)?;
            return Ok(split);
        }
        let split = prepare_dataset(&native_cfg, seed)?;
        let c = split_to_container(
            &split,
            &cfg.system,
            cfg.data.spinup,
            seed,
            cfg.config_hash()?,
        )?;
        c.save(&path)?;
        return Ok(split);
    }
    Ok(prepare_dataset(&native_cfg, seed)?)
}

fn generate(file: &FileConfig, seed: u64, out: &Path) -> Result<()> {
    let cfg = &file.experiment;
    let native = native_dataset(cfg, seed)?;
    let split = subsample_split(&native, cfg.data.n_sub, cfg.data.fixed_samples)?;
    let c = split_to_container(&split, &cfg.system, cfg.data.spinup, seed, cfg.config_hash()?)?;
    c.save(out)?;
    println!(
        "wrote {} (train {} x {}, n_sub {})",
        out.display(),
        split.train.n_time(),
        split.train.n_state(),
        cfg.data.n_sub
    );
    Ok(())
}

// ---- train ----

fn train(
    file: &FileConfig,
    seed: u64,
    data: &Path,
    out: &Path,
    params: Option<&Path>,
) -> Result<()> {
    let cfg = &file.experiment;
    let (split, ds_hash) = load_dataset(data)?;
    let decomp = cfg.decomp()?;
    let normalizer = Normalizer::fit(&split.train, cfg.normalization)?;
    let train_norm = normalizer.normalize(&split.train);
    let (model, beta) = match &cfg.architecture {
        ArchitectureConfig::Esn {
            n_hidden,
            kappa,
            input_scaling,
            macro_params,
        } => {
            let macro_params = match params {
                Some(path) => {
                    let text = std::fs::read_to_string(path)
                        .with_context(|| format!("reading params {}", path.display()))?;
                    serde_json::from_str::<EsnMacroParams>(&text)
                        .map_err(|e| turbem::Error::Config(format!("params file: {e}")))?
                }
                None => macro_params.ok_or_else(|| {
                    turbem::Error::Config(
                        "architecture.macro_params: required for train (or pass --params)".into(),
                    )
                })?,
            };
            let esn_params = EsnParams {
                n_hidden: *n_hidden,
                kappa: *kappa,
                seed,
                input_scaling: *input_scaling,
            };
            let base = EsnBase::draw(esn_params, decomp.input_len())?;
            let model = train_esn(&base, &macro_params, &train_norm, &decomp)?;
            let beta = macro_params.beta;
            (ModelCheckpoint::Esn(model), beta)
        }
        ArchitectureConfig::Nvar {
            n_lag,
            n_neighbor,
            beta,
        } => {
            let nvar_cfg = turbem::nvar::NvarConfig {
                degree: 2,
                n_lag: *n_lag,
                n_neighbor: *n_neighbor,
                beta: *beta,
            };
            let model = turbem::nvar::train_nvar(&nvar_cfg, &train_norm, &decomp)?;
            (ModelCheckpoint::Nvar(model), *beta)
        }
    };
    let ckpt = Checkpoint {
        model,
        decomp,
        normalizer,
        provenance: Provenance {
            dataset_hash: ds_hash,
            config_hash: format!("{:016x}", cfg.config_hash()?),
            seed,
            n_train: split.train.n_time() - 1,
            beta,
        },
    };
    ckpt.save(out)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn check_hashes(cfg: &ExperimentConfig, ckpt: &Checkpoint, ds_hash: &str) -> Result<()> {
    if ckpt.provenance.dataset_hash != ds_hash {
        bail!(turbem::Error::Integrity(format!(
            "checkpoint was trained on dataset {} but this dataset is {}",
            ckpt.provenance.dataset_hash, ds_hash
        )));
    }
    let here = format!("{:016x}", cfg.config_hash()?);
    if ckpt.provenance.config_hash != here {
        bail!(turbem::Error::Integrity(format!(
            "checkpoint config hash {} does not match this config {here}",
            ckpt.provenance.config_hash
        )));
    }
    Ok(())
}

// ---- predict ----

fn predict(
    file: &FileConfig,
    seed: u64,
    data: &Path,
    model: &Path,
    out: &Path,
    sample: usize,
) -> Result<()> {
    let cfg = &file.experiment;
    let (split, ds_hash) = load_dataset(data)?;
    let ckpt = Checkpoint::load(model)?;
    check_hashes(cfg, &ckpt, &ds_hash)?;
    let dt_eff = split.test.dt_effective();
    let forecast_steps = (cfg.evaluation.forecast / dt_eff).round() as usize;
    let spinup_steps = (cfg.evaluation.spinup / dt_eff).round().max(1.0) as usize;
    let ics = experiment::test_initial_conditions(
        split.test.n_time(),
        spinup_steps,
        forecast_steps,
        cfg.evaluation.n_test_ics,
        seed,
    )?;
    let ic = *ics.get(sample).ok_or_else(|| {
        turbem::Error::Config(format!(
            "--sample {sample} out of range ({} seeded initial conditions)",
            ics.len()
        ))
    })?;
    let test_norm = ckpt.normalizer.normalize(&split.test);
    let window = test_norm.slice_time(ic - spinup_steps, ic + 1)?;
    let fc = match &ckpt.model {
        ModelCheckpoint::Esn(m) => predict_autonomous(m, &ckpt.decomp, &window, forecast_steps)?,
        ModelCheckpoint::Nvar(m) => predict_autonomous(m, &ckpt.decomp, &window, forecast_steps)?,
    };
    let diverged = fc.diverged_at;
    let mut pred = fc.states;
    ckpt.normalizer.denormalize_rows(&mut pred);
    let truth = split.test.slice_time(ic + 1, ic + 1 + forecast_steps)?;

    let mut c = ArrayContainer::new(seed, cfg.config_hash()?);
    c.insert_f64_slice(
        "forecast",
        &[pred.nrows(), pred.ncols()],
        pred.as_slice().expect("contiguous"),
    )?;
    c.insert_f64_slice(
        "truth",
        &[truth.n_time(), truth.n_state()],
        truth.data().as_slice().expect("contiguous"),
    )?;
    c.meta.insert("dataset_hash".into(), ds_hash);
    c.meta.insert("ic_index".into(), ic.to_string());
    c.meta.insert("sample".into(), sample.to_string());
    c.meta.insert("dt_effective".into(), format!("{dt_eff}"));
    if let Some(step) = diverged {
        c.meta.insert("diverged_at".into(), step.to_string());
    }
    c.save(out)?;
    println!(
        "wrote {} ({} of {} steps{})",
        out.display(),
        pred.nrows(),
        forecast_steps,
        if diverged.is_some() { ", diverged" } else { "" }
    );
    if file.fail_on_divergence {
        if let Some(step) = diverged {
            bail!(turbem::Error::Divergence { group: 0, step });
        }
    }
    Ok(())
}

// ---- evaluate ----

fn evaluate(file: &FileConfig, seed: u64, data: &Path, model: &Path, out_dir: &Path) -> Result<()> {
    let cfg = &file.experiment;
    let (split, ds_hash) = load_dataset(data)?;
    let ckpt = Checkpoint::load(model)?;
    check_hashes(cfg, &ckpt, &ds_hash)?;
    let setting = format!("n_sub={}", split.train.n_sub());
    let outcome = evaluate_checkpoint(cfg, &split, &ckpt, &setting, seed)?;
    write_outcomes(cfg, seed, std::slice::from_ref(&outcome), out_dir)?;
    if file.fail_on_divergence {
        if let Some(r) = outcome.reports.iter().find(|r| r.truncated_at.is_some()) {
            bail!(turbem::Error::Divergence {
                group: 0,
                step: r.truncated_at.unwrap_or(0),
            });
        }
    }
    Ok(())
}

fn write_outcomes(
    cfg: &ExperimentConfig,
    seed: u64,
    outcomes: &[SettingOutcome],
    out_dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let has_spectra = outcomes.iter().any(|o| !o.spectra_rows.is_empty());
    let spectra_path = out_dir.join("spectra.csv");
    report::save_outcomes(
        outcomes,
        &out_dir.join("skill.csv"),
        has_spectra.then_some(spectra_path.as_path()),
        &out_dir.join("report.json"),
        cfg.config_hash()?,
        seed,
        &serde_json::json!({
            "n_settings": outcomes.len(),
        }),
    )?;
    println!(
        "wrote {} ({} rows)",
        out_dir.join("skill.csv").display(),
        outcomes.iter().map(|o| o.reports.len()).sum::<usize>()
    );
    Ok(())
}

// ---- tune ----

fn tune(
    file: &FileConfig,
    seed: u64,
    data: &Path,
    out: &Path,
    journal: Option<&Path>,
) -> Result<()> {
    let cfg = &file.experiment;
    let (split, _) = load_dataset(data)?;
    let tuning = cfg
        .tuning
        .as_ref()
        .ok_or_else(|| turbem::Error::Config("tuning: block required for tune".into()))?;
    let (n_hidden, kappa, input_scaling) = match &cfg.architecture {
        ArchitectureConfig::Esn {
            n_hidden,
            kappa,
            input_scaling,
            ..
        } => (*n_hidden, *kappa, *input_scaling),
        ArchitectureConfig::Nvar { .. } => {
            bail!(turbem::Error::Config(
                "tune applies to the ESN architecture only".into()
            ))
        }
    };
    let normalizer = Normalizer::fit(&split.train, cfg.normalization)?;
    let dt_eff = split.train.dt_effective();
    let cost_cfg = MacroCostConfig {
        gamma: tuning.gamma,
        n_macro: tuning.n_macro,
        forecast_steps: (tuning.forecast / dt_eff).round().max(1.0) as usize,
        spinup_steps: (tuning.spinup / dt_eff).round().max(1.0) as usize,
    };
    let ctx = EsnCostContext::new(
        EsnParams {
            n_hidden,
            kappa,
            seed,
            input_scaling,
        },
        &split.train,
        &split.validation,
        normalizer,
        cost_cfg,
        cfg.decomp()?,
        cfg.sqg(),
        seed,
    )?;
    let space = match &tuning.bounds {
        Some(bounds) => turbem::hyperopt::SearchSpace {
            bounds: bounds.clone(),
        },
        None => turbem::hyperopt::default_search_space(),
    };
    let budget = OptBudget {
        n_initial: tuning.n_initial,
        n_iterations: tuning.n_iterations,
        seed,
    };

    let prior = match journal {
        Some(path) if path.exists() => read_journal(path)?,
        _ => Vec::new(),
    };
    let mut sink = match journal {
        Some(path) => Some(
            std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)?,
        ),
        None => None,
    };
    let config_hash = cfg.config_hash()?;
    let run = bayes_optimize(&space, &budget, &prior, |params| {
        let mp = EsnMacroParams {
            rho: params[0],
            sigma: params[1],
            sigma_b: params[2],
            alpha: params[3],
            beta: params[4],
        };
        let (cost, _) = ctx.evaluate(&mp);
        if let Some(w) = sink.as_mut() {
            use std::io::Write as _;
            let line = serde_json::json!({
                "params": params,
                "cost": cost,
                "seed": seed,
                "config_hash": format!("{config_hash:016x}"),
                "timestamp": std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0),
            });
            let _ = writeln!(w, "{line}");
        }
        cost
    })?;
    let best = run.best();
    let best_params = EsnMacroParams {
        rho: best.params[0],
        sigma: best.params[1],
        sigma_b: best.params[2],
        alpha: best.params[3],
        beta: best.params[4],
    };
    atomic_write(out, |w| {
        use std::io::Write as _;
        let doc = serde_json::json!({
            "config_hash": format!("{config_hash:016x}"),
            "seed": seed,
            "best_cost": best.cost,
            "rho": best_params.rho,
            "sigma": best_params.sigma,
            "sigma_b": best_params.sigma_b,
            "alpha": best_params.alpha,
            "beta": best_params.beta,
        });
        serde_json::to_writer_pretty(&mut *w, &doc)
            .map_err(|e| turbem::Error::Numerical(format!("json: {e}")))?;
        writeln!(w)?;
        Ok(())
    })?;
    println!(
        "best cost {:.6} after {} evaluations -> {}",
        best.cost,
        run.evaluations.len(),
        out.display()
    );
    Ok(())
}

fn read_journal(path: &Path) -> Result<Vec<Evaluation>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| turbem::Error::Integrity(format!("journal line: {e}")))?;
        let params: Vec<f64> = v["params"]
            .as_array()
            .ok_or_else(|| turbem::Error::Integrity("journal line lacks params".into()))?
            .iter()
            .filter_map(|x| x.as_f64())
            .collect();
        let cost = v["cost"]
            .as_f64()
            .ok_or_else(|| turbem::Error::Integrity("journal line lacks cost".into()))?;
        out.push(Evaluation {
            unit: Vec::new(),
            params,
            cost,
            origin: "journal".into(),
        });
    }
    Ok(out)
}

// ---- sweep ----

fn sweep(file: &FileConfig, seed: u64, data: Option<&Path>, out_dir: &Path) -> Result<()> {
    let cfg = &file.experiment;
    let axis = file
        .sweep
        .clone()
        .ok_or_else(|| turbem::Error::Config("sweep: block required for sweep".into()))?;
    let native = match data {
        Some(path) => load_dataset(path)?.0,
        None => native_dataset(cfg, seed)?,
    };
    let outcomes = grid_sweep(cfg, &axis, &native, seed)?;
    write_outcomes(cfg, seed, &outcomes, out_dir)?;
    // persist per-setting tuning journals alongside the tables
    for outcome in &outcomes {
        if !outcome.tuning_log.is_empty() {
            let path = out_dir.join(format!("tuning-{}.ndjson", sanitize(&outcome.setting)));
            atomic_write(&path, |w| {
                use std::io::Write as _;
                for entry in &outcome.tuning_log {
                    let line = serde_json::json!({
                        "setting": outcome.setting,
                        "params": entry.params,
                        "cost": entry.cost,
                        "origin": entry.origin,
                        "seed": seed,
                    });
                    writeln!(w, "{line}")?;
                }
                Ok(())
            })?;
        }
    }
    Ok(())
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}
