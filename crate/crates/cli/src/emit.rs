//! Artifact emission. Every file is written from deterministic content and
//! listed in `manifest.json` with its SHA-256 digest.

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use dobkit_core::sim::SimTrace;
use dobkit_core::tf::ComplexResponse;

use crate::config::Format;
use crate::run::{Provenance, ReportBundle};
use crate::CliError;

pub const CURVE_HEADER: &str = "w_rad_s,re,im,mag_db,phase_deg";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub provenance: Option<Provenance>,
    pub artifacts: Vec<ManifestEntry>,
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

/// One row per grid point; magnitude in dB as `20·log10|v|`, phase unwrapped
/// along the grid.
pub fn curve_csv(c: &ComplexResponse) -> String {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    let mut prev: Option<f64> = None;
    for (w, v) in c.grid.iter().zip(&c.values) {
        let mut ph = v.arg().to_degrees();
        if let (Some(p), true) = (prev, ph.is_finite()) {
            ph -= 360.0 * ((ph - p) / 360.0).round();
        }
        if ph.is_finite() {
            prev = Some(ph);
        }
        let _ = writeln!(out, "{},{},{},{},{}", w, v.re, v.im, 20.0 * v.norm().log10(), ph);
    }
    out
}

/// `t,y,u,d_hat` followed by the named channels in key order.
pub fn trace_csv(t: &SimTrace) -> String {
    let mut out = String::from("t,y,u,d_hat");
    for k in t.channels.keys() {
        out.push(',');
        out.push_str(k);
    }
    out.push('\n');
    for i in 0..t.len() {
        let _ = write!(out, "{},{},{},{}", t.t[i], t.y[i], t.u[i], t.d_hat[i]);
        for ch in t.channels.values() {
            let _ = write!(out, ",{}", ch[i]);
        }
        out.push('\n');
    }
    out
}

pub fn provenance(bundle: &ReportBundle) -> Option<Provenance> {
    bundle.config.as_ref().map(|c| Provenance {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: sha256_hex(c.to_toml().as_bytes()),
    })
}

/// Structured report. Keys are sorted; non-finite reals become `null`.
pub fn report_json(bundle: &ReportBundle) -> Value {
    let curves: Vec<&String> = bundle.curves.keys().collect();
    json!({
        "case": bundle.name,
        "command": bundle.command.map(|c| c.name()),
        "theorem": bundle.theorem,
        "constraint": bundle.constraint,
        "points": bundle.points,
        "sweeps": bundle.sweeps,
        "admissible_interval": bundle.admissible_interval,
        "values": bundle.values,
        "notes": bundle.notes,
        "curves": curves,
        "traces": bundle.trace_summaries(),
        "provenance": provenance(bundle),
    })
}

fn write(dir: &Path, name: &str, data: &[u8], entries: &mut Vec<ManifestEntry>) -> Result<(), CliError> {
    let path = dir.join(name);
    std::fs::write(&path, data).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    entries.push(ManifestEntry {
        file: name.to_string(),
        sha256: sha256_hex(data),
        bytes: data.len(),
    });
    Ok(())
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

/// Writes the bundle into `dir` and returns the manifest, which is also
/// written as `manifest.json`.
pub fn emit(bundle: &ReportBundle, dir: &Path, formats: &[Format]) -> Result<Manifest, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io {
        path: dir.display().to_string(),
        message: e.to_string(),
    })?;
    let mut entries = Vec::new();
    if let Some(c) = &bundle.config {
        write(dir, "config.toml", c.to_toml().as_bytes(), &mut entries)?;
    }
    if formats.contains(&Format::Csv) {
        for (name, c) in &bundle.curves {
            write(dir, &format!("curve_{}.csv", file_stem(name)), curve_csv(c).as_bytes(), &mut entries)?;
        }
        for (name, t) in &bundle.traces {
            write(dir, &format!("trace_{}.csv", file_stem(name)), trace_csv(t).as_bytes(), &mut entries)?;
        }
    }
    if formats.contains(&Format::Json) && !bundle.is_empty() {
        let mut text = serde_json::to_string_pretty(&report_json(bundle)).expect("report serializes");
        text.push('\n');
        write(dir, "report.json", text.as_bytes(), &mut entries)?;
    }
    entries.sort_by(|a, b| a.file.cmp(&b.file));
    let manifest = Manifest {
        provenance: provenance(bundle),
        artifacts: entries,
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    std::fs::write(dir.join("manifest.json"), text).map_err(|e| CliError::Io {
        path: dir.join("manifest.json").display().to_string(),
        message: e.to_string(),
    })?;
    Ok(manifest)
}

/// Digest per artifact, for comparing two runs.
pub fn digests(m: &Manifest) -> BTreeMap<String, String> {
    m.artifacts.iter().map(|e| (e.file.clone(), e.sha256.clone())).collect()
}
