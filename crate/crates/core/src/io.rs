//! Design CSV files, WRMSE profiles, study configs and reports.
//!
//! A design file has three header lines followed by one line per run:
//!
//! ```text
//! name,x1,z1
//! role,control,noise_ext
//! transform,none,dt:0.6666666666666666
//! 5.0000000000000000e-1,1.2500000000000000e-1
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::criteria::wrmse_many;
use crate::dist::NoiseModel;
use crate::error::{Error, Result};
use crate::gp::{CorrelationParams, Design, FactorSpec, Role, Transform};
use crate::study::{StudyConfig, StudyReport};

const HEADERS: [&str; 3] = ["name", "role", "transform"];

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// 17 significant digits, enough to round-trip any `f64`.
fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_role(s: &str) -> Option<Role> {
    match s {
        "control" => Some(Role::Control),
        "noise_ext" => Some(Role::NoiseExt),
        "noise_int" => Some(Role::NoiseInt),
        _ => None,
    }
}

fn parse_transform(s: &str) -> Option<Transform> {
    match s {
        "none" => Some(Transform::None),
        "tr" => Some(Transform::Tr),
        "hybrid" => Some(Transform::Hybrid),
        _ => s
            .strip_prefix("dt:")
            .and_then(|a| a.parse::<f64>().ok())
            .filter(|a| a.is_finite())
            .map(Transform::Dt),
    }
}

/// Renders a design in the CSV layout described in the module docs.
pub fn design_to_csv(design: &Design) -> String {
    let f = design.factors();
    let mut out = String::new();
    out.push_str("name");
    for s in f {
        out.push(',');
        out.push_str(&s.name);
    }
    out.push_str("\nrole");
    for s in f {
        out.push(',');
        out.push_str(s.role.as_str());
    }
    out.push_str("\ntransform");
    for s in f {
        out.push(',');
        out.push_str(&s.transform.to_string());
    }
    out.push('\n');
    for r in design.rows() {
        let line: Vec<String> = r.iter().map(|&v| fmt_num(v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Parses the CSV layout written by [`design_to_csv`].
pub fn design_from_csv(text: &str) -> Result<Design> {
    let mut lines = text.split('\n').enumerate().map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)));
    let mut header: Vec<Vec<&str>> = Vec::with_capacity(3);
    for key in HEADERS {
        let (no, line) = lines
            .next()
            .ok_or_else(|| parse_err(header.len() + 1, format!("missing `{key}` header line")))?;
        let fields: Vec<&str> = line.split(',').collect();
        if fields[0] != key {
            return Err(parse_err(no, format!("expected `{key}` header line, found `{}`", fields[0])));
        }
        if fields.len() < 2 {
            return Err(parse_err(no, format!("`{key}` header lists no factors")));
        }
        if let Some(prev) = header.first() {
            if prev.len() != fields.len() - 1 {
                return Err(parse_err(
                    no,
                    format!("`{key}` header has {} columns, `name` has {}", fields.len() - 1, prev.len()),
                ));
            }
        }
        header.push(fields[1..].to_vec());
    }
    let d = header[0].len();
    let mut factors = Vec::with_capacity(d);
    for j in 0..d {
        let name = header[0][j].trim();
        if name.is_empty() {
            return Err(parse_err(1, format!("column {} has an empty name", j + 1)));
        }
        let role = parse_role(header[1][j].trim())
            .ok_or_else(|| parse_err(2, format!("column {}: unknown role `{}`", j + 1, header[1][j])))?;
        let transform = parse_transform(header[2][j].trim())
            .ok_or_else(|| parse_err(3, format!("column {}: unknown transform `{}`", j + 1, header[2][j])))?;
        if role == Role::Control && transform != Transform::None {
            return Err(parse_err(3, format!("column {}: control column cannot carry transform `{transform}`", j + 1)));
        }
        factors.push(FactorSpec {
            name: name.to_string(),
            role,
            transform,
        });
    }
    let mut rows = Vec::new();
    for (no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d {
            let hint = if fields.len() > d { " (the decimal separator must be '.')" } else { "" };
            return Err(parse_err(
                no,
                format!("column {}: expected {d} fields, found {}{hint}", d.min(fields.len()) + 1, fields.len()),
            ));
        }
        let mut row = Vec::with_capacity(d);
        for (j, s) in fields.iter().enumerate() {
            let v: f64 = s
                .trim()
                .parse()
                .map_err(|_| parse_err(no, format!("column {}: `{s}` is not a number", j + 1)))?;
            if !v.is_finite() {
                return Err(parse_err(no, format!("column {}: non-finite value `{s}`", j + 1)));
            }
            row.push(v);
        }
        rows.push(row);
    }
    Design::new(rows, factors)
}

pub fn write_design(design: &Design, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, design_to_csv(design))?;
    Ok(())
}

pub fn read_design(path: impl AsRef<Path>) -> Result<Design> {
    design_from_csv(&fs::read_to_string(path)?)
}

/// WRMSE at each grid point, one CSV line per point after a `<factor names>,wrmse` header.
pub fn profile_to_csv(design: &Design, theta: &CorrelationParams, model: &NoiseModel, grid: &[Vec<f64>]) -> Result<String> {
    let mut out: Vec<u8> = Vec::new();
    let names: Vec<&str> = design.factors().iter().map(|f| f.name.as_str()).collect();
    writeln!(out, "{},wrmse", names.join(","))?;
    if !grid.is_empty() {
        let values = wrmse_many(design, theta, grid, model)?;
        for (p, v) in grid.iter().zip(values) {
            let coords: Vec<String> = p.iter().map(|&c| fmt_num(c)).collect();
            writeln!(out, "{},{}", coords.join(","), fmt_num(v))?;
        }
    }
    Ok(String::from_utf8(out).expect("ascii output"))
}

pub fn emit_profile(
    design: &Design,
    theta: &CorrelationParams,
    model: &NoiseModel,
    grid: &[Vec<f64>],
    path: impl AsRef<Path>,
) -> Result<()> {
    fs::write(path, profile_to_csv(design, theta, model, grid)?)?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    robustfill_config_v1: StudyConfig,
}

pub fn config_to_json(cfg: &StudyConfig) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ConfigFile {
        robustfill_config_v1: cfg.clone(),
    })?)
}

pub fn config_from_json(text: &str) -> Result<StudyConfig> {
    let file: ConfigFile = serde_json::from_str(text).map_err(|e| parse_err(e.line(), e.to_string()))?;
    file.robustfill_config_v1.validate()?;
    Ok(file.robustfill_config_v1)
}

pub fn read_config(path: impl AsRef<Path>) -> Result<StudyConfig> {
    config_from_json(&fs::read_to_string(path)?)
}

/// One line per (replication, design) with the drawn coefficients, errors and failure reason.
pub fn report_to_csv(report: &StudyReport) -> String {
    let mut out = String::from(
        "replication,design,beta1,beta2,beta3,beta4,gamma1,gamma2,gamma3,gamma4,gamma5,x_true,x_hat,error,rmspe,flat,failure\n",
    );
    let opt = |v: Option<f64>| v.map(fmt_num).unwrap_or_default();
    for r in &report.results {
        let coef: Vec<String> = r.function.beta.iter().chain(&r.function.gamma).map(|&v| fmt_num(v)).collect();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.replication,
            r.design.name(),
            coef.join(","),
            fmt_num(r.x_true),
            opt(r.x_hat),
            opt(r.error),
            opt(r.rmspe),
            r.flat,
            r.failure.as_deref().unwrap_or("").replace([',', '\n'], ";"),
        ));
    }
    out
}

pub fn report_to_json(report: &StudyReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)?)
}
