//! Bundle export: one CSV per field, header `path_id,t_0,…,t_N`.
//!
//! Per-cell fields (increments) are labelled by the left endpoint of the
//! cell, so they have columns `t_0 … t_{N−1}`. Multi-asset bundles get one
//! file per component (`S_1.csv`, `dQV_1_2.csv`, …).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::array::PathArray;
use crate::error::Result;
use crate::report::fmt_float;
use crate::sim::PathBundle;

pub fn write_field_csv<W: Write>(mut out: W, values: &PathArray, component: usize, first_path: usize) -> Result<()> {
    let header: Vec<String> = (0..values.len()).map(|i| format!("t_{i}")).collect();
    writeln!(out, "path_id,{}", header.join(","))?;
    for p in 0..values.n_paths() {
        let row: Vec<String> = (0..values.len()).map(|i| fmt_float(values.get(p, i)[component])).collect();
        writeln!(out, "{},{}", first_path + p, row.join(","))?;
    }
    Ok(())
}

/// Writes every field of `bundle` into `dir`, returning the files created.
pub fn write_bundle_csv(bundle: &PathBundle, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let d = bundle.dim;
    let mut written = Vec::new();
    let mut emit = |name: String, values: &PathArray, component: usize| -> Result<()> {
        let path = dir.join(format!("{name}.csv"));
        let file = std::io::BufWriter::new(fs::File::create(&path)?);
        write_field_csv(file, values, component, bundle.first_path)?;
        written.push(path);
        Ok(())
    };
    let vector_fields: [(&str, &PathArray); 5] =
        [("S", &bundle.s), ("M", &bundle.m), ("A", &bundle.a), ("dM", &bundle.dm), ("dA", &bundle.da)];
    for (name, values) in vector_fields {
        for k in 0..d {
            let label = if d == 1 { name.to_string() } else { format!("{name}_{}", k + 1) };
            emit(label, values, k)?;
        }
    }
    for i in 0..d {
        for j in 0..d {
            let label = if d == 1 { "dQV".to_string() } else { format!("dQV_{}_{}", i + 1, j + 1) };
            emit(label, &bundle.dqv, i * d + j)?;
        }
    }
    Ok(written)
}
