//! Deterministic report serialization.

use std::fs;
use std::path::Path;

use serde_json::Value;

use crate::diagnose::DiagnosticsReport;
use crate::error::Result;

pub const SIGNIFICANT_DIGITS: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    /// Directory with `structure.csv`, `explosion.csv`, `density_tests.csv`.
    CsvBundle,
}

/// Rounds to [`SIGNIFICANT_DIGITS`] significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().unwrap_or(x)
}

/// Shortest decimal form of `x` rounded to 12 significant digits.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    format!("{}", round_sig(x))
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) => {
            if n.is_f64() {
                if let Some(x) = n.as_f64() {
                    if let Some(r) = serde_json::Number::from_f64(round_sig(x)) {
                        *n = r;
                    }
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

pub fn to_json_string(report: &DiagnosticsReport) -> Result<String> {
    let mut value = serde_json::to_value(report)?;
    round_value(&mut value);
    let mut text = serde_json::to_string_pretty(&value)?;
    text.push('\n');
    Ok(text)
}

pub fn emit_report(report: &DiagnosticsReport, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let path = path.as_ref();
    match format {
        ReportFormat::Json => fs::write(path, to_json_string(report)?)?,
        ReportFormat::CsvBundle => {
            fs::create_dir_all(path)?;
            fs::write(path.join("structure.csv"), structure_csv(report))?;
            let mut explosion = Vec::new();
            let mut header = true;
            for v in &report.explosion {
                let mut buf = Vec::new();
                v.write_csv(&mut buf)?;
                let text = String::from_utf8_lossy(&buf).into_owned();
                for (i, line) in text.lines().enumerate() {
                    if i == 0 {
                        if header {
                            explosion.push(format!("sigma,{line}"));
                            header = false;
                        }
                        continue;
                    }
                    explosion.push(format!("{},{line}", fmt_float(v.sigma_time)));
                }
            }
            if header {
                explosion.push("sigma,level,eps,K_estimate,slope".into());
            }
            fs::write(path.join("explosion.csv"), explosion.join("\n") + "\n")?;
            let mut tests = vec!["sigma,s,t,wealth_id,gap,stderr,pass".to_string()];
            for d in &report.density {
                let mut buf = Vec::new();
                d.supermartingale.write_csv(&mut buf)?;
                let text = String::from_utf8_lossy(&buf).into_owned();
                tests.extend(text.lines().skip(1).map(|l| format!("{},{l}", d.sigma)));
            }
            fs::write(path.join("density_tests.csv"), tests.join("\n") + "\n")?;
            fs::write(path.join("report.json"), to_json_string(report)?)?;
        }
    }
    Ok(())
}

fn structure_csv(report: &DiagnosticsReport) -> String {
    let mut out = String::from("classification,violation_fraction,violations,cells,satisfied,worst_path,worst_cell,worst_time,worst_residual\n");
    let label = report.classification.as_str();
    match &report.structure {
        Some(s) => {
            let (wp, wc, wt, wr) = match s.worst_cell {
                Some(w) => (w.path.to_string(), w.cell.to_string(), fmt_float(w.time), fmt_float(w.residual_norm)),
                None => Default::default(),
            };
            out.push_str(&format!(
                "{label},{},{},{},{},{wp},{wc},{wt},{wr}\n",
                fmt_float(s.violation_fraction),
                s.violations,
                s.cells,
                s.satisfied
            ));
        }
        None => out.push_str(&format!("{label},,,,,,,,\n")),
    }
    out
}
