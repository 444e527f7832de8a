//! `x,y,z` position CSV files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

pub const HEADER: &str = "x,y,z";

/// Parses CSV text with an `x,y,z` header into an `[n, 3]` tensor.
pub fn parse_positions_csv(text: &str) -> Result<Tensor<f32>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == HEADER => {}
        Some((_, h)) => {
            return Err(Error::Parse { line: 1, message: format!("expected header `{HEADER}`, found `{}`", h.trim()) })
        }
        None => return Err(Error::Parse { line: 1, message: "empty file".into() }),
    }
    let mut data = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Parse { line: line_no, message: format!("expected 3 columns, found {}", fields.len()) });
        }
        for f in fields {
            let v: f32 = f.trim().parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("`{f}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse { line: line_no, message: format!("`{f}` is not finite") });
            }
            data.push(v);
        }
    }
    if data.is_empty() {
        return Err(Error::Parse { line: 2, message: "no position rows".into() });
    }
    Tensor::new(vec![data.len() / 3, 3], data)
}

pub fn load_positions_csv(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_positions_csv(&text)
}

pub fn format_positions_csv<T: Element>(positions: &Tensor<T>) -> Result<String> {
    if positions.ndim() != 2 || positions.dim(1) != 3 {
        return Err(Error::dim("positions", "[n, 3]", positions.shape()));
    }
    let mut out = format!("{HEADER}\n");
    for row in positions.data().chunks_exact(3) {
        writeln!(out, "{},{},{}", row[0], row[1], row[2]).expect("write to string");
    }
    Ok(out)
}

pub fn save_positions_csv<T: Element>(path: impl AsRef<Path>, positions: &Tensor<T>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_positions_csv(positions)?).map_err(|e| Error::io(path, e))
}
