//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored; a trailing `# ...`
//! comment after a value is stripped. Keys name fields of [`DimerConfig`] and
//! [`SweepSpec`]; tolerances use the prefixed names listed in [`KNOWN_KEYS`].

use std::path::Path;

use crate::error::{Error, Result};
use crate::functionals::XcChoice;
use crate::model::{DeltaConvention, DensitySource};
use crate::protocol::Protocol;
use crate::sweep::{Quantity, SweepSpec};

pub const KNOWN_KEYS: &[&str] = &[
    "j",
    "u",
    "delta0",
    "delta_tau",
    "tau",
    "beta",
    "n_steps",
    "delta_convention",
    "density_source",
    "tpf_fixed_initial_state",
    "group_tol",
    "work_merge_tol",
    "scf_tol",
    "scf_max_iter",
    "scf_mixing",
    "tpf_tol",
    "tpf_max_iter",
    "tpf_rescue_mixing",
    "relative_error_guard",
    "u_min",
    "u_max",
    "u_count",
    "tau_min",
    "tau_max",
    "tau_count",
    "protocol",
    "xc",
    "fop",
    "tpf",
    "quantity",
];

/// One `key = value` entry with its source line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

pub fn parse_entries(text: &str) -> Result<Vec<Entry>> {
    let mut out: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split_once('#').map_or(raw, |(before, _)| before).trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
        let key = k.trim().to_ascii_lowercase();
        if key.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", i + 1)));
        }
        if let Some(prev) = out.iter().find(|e| e.key == key) {
            return Err(Error::Config(format!(
                "line {}: key `{key}` already set on line {}",
                i + 1,
                prev.line
            )));
        }
        out.push(Entry {
            key,
            value: v.trim().to_string(),
            line: i + 1,
        });
    }
    Ok(out)
}

fn num(key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::Config(format!("`{key}` expects a finite number, got `{v}`")))
}

fn count(key: &str, v: &str) -> Result<usize> {
    v.parse::<usize>()
        .map_err(|_| Error::Config(format!("`{key}` expects a non-negative integer, got `{v}`")))
}

fn boolean(key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!(
            "`{key}` expects true/false, got `{v}`"
        ))),
    }
}

/// Sets one field of `spec` from its textual value.
pub fn apply(spec: &mut SweepSpec, key: &str, value: &str) -> Result<()> {
    let b = &mut spec.base;
    let t = &mut b.tolerances;
    match key {
        "j" => b.j = num(key, value)?,
        "u" => b.u = num(key, value)?,
        "delta0" => b.delta0 = num(key, value)?,
        "delta_tau" => b.delta_tau = num(key, value)?,
        "tau" => b.tau = num(key, value)?,
        "beta" => b.beta = num(key, value)?,
        "n_steps" => {
            b.n_steps = match value.to_ascii_lowercase().as_str() {
                "auto" | "default" => None,
                _ => Some(count(key, value)?),
            }
        }
        "delta_convention" => b.delta_convention = DeltaConvention::parse(value)?,
        "density_source" => b.density_source = DensitySource::parse(value)?,
        "tpf_fixed_initial_state" => b.tpf_fixed_initial_state = boolean(key, value)?,
        "group_tol" => t.group = num(key, value)?,
        "work_merge_tol" => t.work_merge = num(key, value)?,
        "scf_tol" => t.scf = num(key, value)?,
        "scf_max_iter" => t.scf_max_iter = count(key, value)?,
        "scf_mixing" => t.scf_mixing = num(key, value)?,
        "tpf_tol" => t.tpf = num(key, value)?,
        "tpf_max_iter" => t.tpf_max_iter = count(key, value)?,
        "tpf_rescue_mixing" => t.tpf_rescue_mixing = num(key, value)?,
        "relative_error_guard" => t.relative_error_guard = num(key, value)?,
        "u_min" => spec.u_over_j.min = num(key, value)?,
        "u_max" => spec.u_over_j.max = num(key, value)?,
        "u_count" => spec.u_over_j.count = count(key, value)?,
        "tau_min" => spec.tau_j.min = num(key, value)?,
        "tau_max" => spec.tau_j.max = num(key, value)?,
        "tau_count" => spec.tau_j.count = count(key, value)?,
        "protocol" => spec.protocol = Protocol::parse(value)?,
        "xc" => {
            spec.protocol = match XcChoice::parse(value)? {
                XcChoice::None => Protocol::Ni,
                XcChoice::Plda => Protocol::KsPlda,
                XcChoice::Par => Protocol::KsPar,
            }
        }
        "fop" => spec.flags.fop = boolean(key, value)?,
        "tpf" => spec.flags.tpf = boolean(key, value)?,
        "quantity" => spec.quantity = Quantity::parse(value)?,
        other => {
            return Err(Error::Config(format!(
                "unknown key `{other}`; known keys: {}",
                KNOWN_KEYS.join(", ")
            )))
        }
    }
    Ok(())
}

/// Applies all entries of `text` on top of `spec`.
pub fn apply_text(spec: &mut SweepSpec, text: &str) -> Result<()> {
    for e in parse_entries(text)? {
        apply(spec, &e.key, &e.value).map_err(|err| match err {
            Error::Config(m) => Error::Config(format!("line {}: {m}", e.line)),
            other => other,
        })?;
    }
    Ok(())
}

pub fn load(path: &Path, spec: &mut SweepSpec) -> Result<()> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    apply_text(spec, &text)
}
