//! Value-table files.
//!
//! A file is a plain-text header of `key = value` lines closed by
//! `end_header`, followed by the little-endian payload: `rows * cols` scalars
//! in row-major order (the grid's row order, `p` fastest within a row).
//!
//! ```text
//! il7ctl-value-table
//! format_version = 1
//! precision = f64
//! rows = 28917
//! cols = 1891
//! n_p = 31
//! n_r = 61
//! horizon = 365
//! config_hash = 5f0c...
//! iterations = 19
//! residual = 9.3e-7
//! value_at_delta = 0.0
//! end_header
//! <payload>
//! ```
//!
//! Floats in the header are written in Rust's shortest round-trip form, so
//! with `f64` precision a save/load cycle is bitwise lossless.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::grid::Grid;
use super::table::ValueTable;
use crate::error::{Error, Result};
use crate::model::ModelConfig;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "il7ctl-value-table";
const END: &str = "end_header";

/// Scalar width of the payload. Iterations always run in `f64`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    F64,
    F32,
}

impl Precision {
    fn name(self) -> &'static str {
        match self {
            Precision::F64 => "f64",
            Precision::F32 => "f32",
        }
    }
}

pub fn save_table(table: &ValueTable, path: &Path, precision: Precision) -> Result<()> {
    let io = |e| Error::io(path, e);
    let grid = table.grid();
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    let header = format!(
        "{MAGIC}\nformat_version = {FORMAT_VERSION}\nprecision = {}\nrows = {}\ncols = {}\n\
         n_p = {}\nn_r = {}\nhorizon = {}\nconfig_hash = {}\niterations = {}\nresidual = {:?}\n\
         value_at_delta = {:?}\n{END}\n",
        precision.name(),
        grid.n_sum,
        grid.n_pr,
        grid.n_p,
        grid.n_r,
        grid.horizon,
        table.config_hash,
        table.iterations,
        table.residual,
        table.value_at_delta,
    );
    out.write_all(header.as_bytes()).map_err(io)?;
    match precision {
        Precision::F64 => {
            for v in table.values() {
                out.write_all(&v.to_le_bytes()).map_err(io)?;
            }
        }
        Precision::F32 => {
            for v in table.values() {
                out.write_all(&(*v as f32).to_le_bytes()).map_err(io)?;
            }
        }
    }
    out.flush().map_err(io)
}

/// Read a table written by [`save_table`] for the model `config` whose
/// configuration hash is `expected_hash`.
pub fn load_table(path: &Path, config: &ModelConfig, expected_hash: &str) -> Result<ValueTable> {
    let corrupt = |reason: String| Error::CorruptTable {
        path: path.to_path_buf(),
        reason,
    };
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut fields = HashMap::new();
    let mut line = String::new();
    let mut first = true;
    loop {
        line.clear();
        let n = reader
            .read_line(&mut line)
            .map_err(|e| corrupt(format!("unreadable header: {e}")))?;
        if n == 0 {
            return Err(corrupt("header ends before end_header".into()));
        }
        let text = line.trim_end();
        if first {
            if text != MAGIC {
                return Err(corrupt("not a value-table file".into()));
            }
            first = false;
            continue;
        }
        if text == END {
            break;
        }
        let (k, v) = text
            .split_once(" = ")
            .ok_or_else(|| corrupt(format!("bad header line {text:?}")))?;
        fields.insert(k.to_string(), v.to_string());
    }
    let get = |k: &str| {
        fields
            .get(k)
            .cloned()
            .ok_or_else(|| corrupt(format!("header lacks {k}")))
    };
    fn num<T: std::str::FromStr>(v: String, k: &str, corrupt: impl Fn(String) -> Error) -> Result<T> {
        v.parse().map_err(|_| corrupt(format!("bad {k} value {v:?}")))
    }
    let version: u32 = num(get("format_version")?, "format_version", corrupt)?;
    if version != FORMAT_VERSION {
        return Err(corrupt(format!("unsupported format version {version}")));
    }
    let found = get("config_hash")?;
    if found != expected_hash {
        return Err(Error::HashMismatch {
            expected: expected_hash.to_string(),
            found,
        });
    }
    let precision = match get("precision")?.as_str() {
        "f64" => Precision::F64,
        "f32" => Precision::F32,
        other => return Err(corrupt(format!("unknown precision {other:?}"))),
    };
    let grid = Grid::build(config)?;
    let rows: usize = num(get("rows")?, "rows", corrupt)?;
    let cols: usize = num(get("cols")?, "cols", corrupt)?;
    if rows != grid.n_sum || cols != grid.n_pr {
        return Err(corrupt(format!(
            "table is {rows} x {cols}, the configured grid is {} x {}",
            grid.n_sum, grid.n_pr
        )));
    }
    let iterations: usize = num(get("iterations")?, "iterations", corrupt)?;
    let residual: f64 = num(get("residual")?, "residual", corrupt)?;
    let value_at_delta: f64 = num(get("value_at_delta")?, "value_at_delta", corrupt)?;

    let count = rows * cols;
    let width = match precision {
        Precision::F64 => 8,
        Precision::F32 => 4,
    };
    let mut payload = Vec::with_capacity(count * width);
    reader
        .read_to_end(&mut payload)
        .map_err(|e| corrupt(format!("unreadable payload: {e}")))?;
    if payload.len() != count * width {
        return Err(corrupt(format!(
            "payload has {} bytes, expected {}",
            payload.len(),
            count * width
        )));
    }
    let values: Vec<f64> = match precision {
        Precision::F64 => payload
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect(),
        Precision::F32 => payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect(),
    };
    let mut table = ValueTable::from_values(grid, values, value_at_delta)?;
    table.config_hash = found;
    table.iterations = iterations;
    table.residual = residual;
    Ok(table)
}
