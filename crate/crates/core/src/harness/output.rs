use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::config::ExperimentConfig;
use super::experiment::{AggregateResult, ExperimentOutcome, RunFailure};
use super::verdict::Verdict;
use crate::error::{Error, Result};
use crate::estimator::ReferenceKind;
use crate::Scalar;

pub const FIG1_FILE: &str = "fig1.csv";
pub const FIG2_FILE: &str = "fig2.csv";
pub const LTI_FILE: &str = "lti.csv";
pub const SPECTRAL_FILE: &str = "spectral.json";
pub const VERDICT_FILE: &str = "verdict.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.toml";

/// Writes a `t,value,stderr` series; a missing stderr column is left empty.
pub fn write_series<W: Write, T: Scalar>(mut w: W, t: &[u64], values: &[T], stderr: Option<&[T]>) -> Result<()> {
    writeln!(w, "t,value,stderr")?;
    for (k, (&t, v)) in t.iter().zip(values).enumerate() {
        match stderr {
            Some(se) => writeln!(w, "{t},{},{}", v.as_f64(), se[k].as_f64())?,
            None => writeln!(w, "{t},{},", v.as_f64())?,
        }
    }
    Ok(())
}

fn write_series_file<T: Scalar>(path: &Path, t: &[u64], values: &[T], stderr: Option<&[T]>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_series(&mut w, t, values, stderr)?;
    w.flush()?;
    Ok(())
}

pub fn write_json<V: Serialize + ?Sized>(path: &Path, value: &V) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Run bookkeeping, including every failed run.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest<'a> {
    pub mode: &'a super::config::Mode,
    pub master_seed: u64,
    pub feature_seed: u64,
    pub runs_requested: usize,
    pub runs_completed: usize,
    pub reference: ReferenceKind,
    pub reference_theta: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pool_rows: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lti_unavailable: Option<&'a str>,
    pub failures: &'a [RunFailure],
}

/// Everything `write_outputs` needs besides the outcome.
pub struct OutputContext<'a> {
    pub config: &'a ExperimentConfig,
    pub reference: ReferenceKind,
    pub reference_theta: Vec<f64>,
    pub pool_rows: Option<usize>,
    pub lti_unavailable: Option<&'a str>,
}

/// Writes figure CSVs, the spectral report, the verdict and the manifest into `dir`.
pub fn write_outputs<T: Scalar + Serialize>(
    dir: &Path,
    ctx: &OutputContext<'_>,
    outcome: &ExperimentOutcome<T>,
    verdict: Option<&Verdict>,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(CONFIG_FILE), ctx.config.to_toml_string()?)?;
    if let Some(res) = &outcome.result {
        write_figures(dir, res)?;
        write_json(&dir.join(SPECTRAL_FILE), &res.spectral)?;
    }
    if let Some(v) = verdict {
        write_json(&dir.join(VERDICT_FILE), v)?;
    }
    let run = &ctx.config.run;
    let manifest = Manifest {
        mode: &ctx.config.mode,
        master_seed: run.master_seed,
        feature_seed: ctx.config.model.feature_seed.unwrap_or(run.master_seed),
        runs_requested: outcome.runs_requested,
        runs_completed: outcome.result.as_ref().map_or(0, |r| r.runs),
        reference: ctx.reference,
        reference_theta: ctx.reference_theta.clone(),
        pool_rows: ctx.pool_rows,
        lti_unavailable: ctx.lti_unavailable,
        failures: &outcome.failures,
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)
}

pub fn write_figures<T: Scalar + Serialize>(dir: &Path, res: &AggregateResult<T>) -> Result<()> {
    write_series_file(&dir.join(FIG1_FILE), &res.t, &res.fig1, Some(&res.fig1_stderr))?;
    write_series_file(&dir.join(FIG2_FILE), &res.t, &res.fig2, Some(&res.fig2_stderr))?;
    if let Some(lti) = res.lti_series() {
        write_series_file(&dir.join(LTI_FILE), &res.t, &lti, None)?;
    }
    Ok(())
}

/// Parses a `t,value,stderr` file back into columns.
pub fn read_series(path: &Path) -> Result<(Vec<u64>, Vec<f64>)> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut t = Vec::new();
    let mut v = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let parse_err = || Error::InvalidParameter(format!("bad row in {}", path.display()));
        t.push(rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(parse_err)?);
        v.push(rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(parse_err)?);
    }
    Ok((t, v))
}
