//! Tabular result emission: skill tables as CSV, structured reports as
//! JSON. Numbers are written with full round-trip precision so reruns with
//! the same seed produce byte-identical files.

use crate::error::Result;
use crate::experiment::{SettingOutcome, SpectraRow};
use crate::io::atomic_write;
use crate::metrics::SkillReport;
use std::io::Write;
use std::path::Path;

fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        // shortest representation that round-trips
        let mut s = format!("{v}");
        if !s.contains('.') && !s.contains('e') && !s.contains("inf") && !s.contains("NaN") {
            s.push_str(".0");
        }
        s
    } else if v.is_nan() {
        "nan".to_string()
    } else if v > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

pub const SKILL_HEADER: &str = "sample_id,setting,nrmse_total,ke_nrmse,vpt,truncated_at";

/// Comment line carrying provenance; every emitted file embeds the config
/// hash and seed.
pub fn provenance_line(config_hash: u64, seed: u64) -> String {
    format!("# config_hash={config_hash:016x} seed={seed}")
}

pub fn write_skill_csv<W: Write>(mut w: W, reports: &[SkillReport]) -> Result<()> {
    writeln!(w, "{SKILL_HEADER}")?;
    for r in reports {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.sample_id,
            r.setting,
            fmt_f64(r.nrmse_total),
            r.ke_nrmse.map(fmt_f64).unwrap_or_default(),
            fmt_f64(r.vpt),
            r.truncated_at.map(|v| v.to_string()).unwrap_or_default(),
        )?;
    }
    Ok(())
}

pub const SPECTRA_HEADER: &str = "sample_id,time,bin,e_true,e_pred,rel_err";

pub fn write_spectra_csv<W: Write>(mut w: W, rows: &[SpectraRow]) -> Result<()> {
    writeln!(w, "{SPECTRA_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.sample_id,
            fmt_f64(r.time),
            fmt_f64(r.bin),
            fmt_f64(r.e_true),
            fmt_f64(r.e_pred),
            fmt_f64(r.rel_err),
        )?;
    }
    Ok(())
}

/// Persist one or more setting outcomes: a combined skill CSV, a combined
/// spectra CSV (when any rows exist), and a JSON document with the full
/// structured content. `config_hash` and `seed` are embedded in every
/// file.
pub fn save_outcomes(
    outcomes: &[SettingOutcome],
    skill_csv: &Path,
    spectra_csv: Option<&Path>,
    json: &Path,
    config_hash: u64,
    seed: u64,
    meta: &serde_json::Value,
) -> Result<()> {
    let preamble = provenance_line(config_hash, seed);
    let reports: Vec<&SkillReport> = outcomes.iter().flat_map(|o| o.reports.iter()).collect();
    atomic_write(skill_csv, |w| {
        writeln!(w, "{preamble}")?;
        let owned: Vec<SkillReport> = reports.iter().map(|r| (*r).clone()).collect();
        write_skill_csv(w, &owned)
    })?;
    if let Some(path) = spectra_csv {
        let rows: Vec<SpectraRow> = outcomes
            .iter()
            .flat_map(|o| o.spectra_rows.iter().cloned())
            .collect();
        atomic_write(path, |w| {
            writeln!(w, "{preamble}")?;
            write_spectra_csv(w, &rows)
        })?;
    }
    let doc = serde_json::json!({
        "config_hash": format!("{config_hash:016x}"),
        "seed": seed,
        "meta": meta,
        "outcomes": outcomes,
    });
    atomic_write(json, |w| {
        serde_json::to_writer_pretty(&mut *w, &doc)
            .map_err(|e| crate::error::Error::Numerical(format!("json encoding failed: {e}")))?;
        writeln!(w)?;
        Ok(())
    })?;
    Ok(())
}
