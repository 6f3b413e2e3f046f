//! Deterministic serialization helpers.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;

/// Rounds to 9 significant digits.
pub fn sig9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

fn round_floats(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            serde_json::Number::from_f64(sig9(x)).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_floats).collect()),
        Value::Object(o) => {
            Value::Object(o.into_iter().map(|(k, v)| (k, round_floats(v))).collect())
        }
        other => other,
    }
}

/// Pretty JSON with every float rounded to 9 significant digits.
pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let v = round_floats(serde_json::to_value(value).expect("report serializes"));
    let mut out = serde_json::to_vec_pretty(&v).expect("value serializes");
    out.push(b'\n');
    out
}

/// Writes to `path`, or standard output when absent.
pub fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, bytes)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(bytes)
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::Io(format!("cannot write to stdout: {e}")))
        }
    }
}

pub const KEPT_RGB: [u8; 3] = [0, 0, 255];
pub const REMOVED_RGB: [u8; 3] = [128, 128, 128];

/// Binary P6 image with one `cell × cell` block per patch, row-major.
pub fn patch_grid_ppm(mask: &[bool], rows: usize, cols: usize, cell: usize) -> Vec<u8> {
    let (w, h) = (cols * cell, rows * cell);
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(w * h * 3);
    for r in 0..rows {
        for _ in 0..cell {
            for c in 0..cols {
                let rgb = if mask[r * cols + c] {
                    KEPT_RGB
                } else {
                    REMOVED_RGB
                };
                for _ in 0..cell {
                    out.extend_from_slice(&rgb);
                }
            }
        }
    }
    out
}
