//! Versioned weight files.
//!
//! ```text
//! semgen-weights 1
//! key=value          (any number of header lines)
//! tensors N
//! rows cols          (N lines)
//! end
//! <row-major little-endian f64 values of every tensor, in order>
//! ```

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use super::{Array, AutodiffError};
use crate::scalar::Scalar;

const MAGIC: &str = "semgen-weights 1";

#[derive(Clone, Debug, PartialEq)]
pub struct WeightFile<T> {
    pub header: BTreeMap<String, String>,
    pub tensors: Vec<Array<T>>,
}

fn bad(msg: impl Into<String>) -> AutodiffError {
    AutodiffError::Weights(msg.into())
}

pub fn write_weights<T: Scalar>(w: &mut impl Write, file: &WeightFile<T>) -> std::io::Result<()> {
    writeln!(w, "{MAGIC}")?;
    for (k, v) in &file.header {
        writeln!(w, "{k}={v}")?;
    }
    writeln!(w, "tensors {}", file.tensors.len())?;
    for t in &file.tensors {
        writeln!(w, "{} {}", t.rows, t.cols)?;
    }
    writeln!(w, "end")?;
    for t in &file.tensors {
        for v in &t.data {
            w.write_all(&v.to_f64_lossy().to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_weights<T: Scalar>(r: &mut impl BufRead) -> Result<WeightFile<T>, AutodiffError> {
    let mut line = String::new();
    let mut next = |line: &mut String| -> Result<String, AutodiffError> {
        line.clear();
        let n = r.read_line(line).map_err(|e| bad(e.to_string()))?;
        if n == 0 {
            return Err(bad("unexpected end of header"));
        }
        Ok(line.trim_end_matches(['\n', '\r']).to_string())
    };
    if next(&mut line)? != MAGIC {
        return Err(bad("not a semgen weight file (bad magic line)"));
    }
    let mut header = BTreeMap::new();
    let count = loop {
        let l = next(&mut line)?;
        if let Some(n) = l.strip_prefix("tensors ") {
            break n.parse::<usize>().map_err(|_| bad(format!("bad tensor count `{n}`")))?;
        }
        let (k, v) = l
            .split_once('=')
            .ok_or_else(|| bad(format!("bad header line `{l}`")))?;
        header.insert(k.to_string(), v.to_string());
    };
    let mut shapes = Vec::with_capacity(count);
    for _ in 0..count {
        let l = next(&mut line)?;
        let dims: Vec<usize> = l
            .split_whitespace()
            .map(|d| d.parse().map_err(|_| bad(format!("bad shape `{l}`"))))
            .collect::<Result<_, _>>()?;
        let [rows, cols] = dims[..] else {
            return Err(bad(format!("bad shape `{l}`")));
        };
        shapes.push((rows, cols));
    }
    if next(&mut line)? != "end" {
        return Err(bad("missing `end` after shapes"));
    }
    let mut tensors = Vec::with_capacity(count);
    let mut buf = [0u8; 8];
    for (rows, cols) in shapes {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            r.read_exact(&mut buf).map_err(|_| bad("truncated weight data"))?;
            data.push(T::lit(f64::from_le_bytes(buf)));
        }
        tensors.push(Array::new(rows, cols, data));
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest).map_err(|e| bad(e.to_string()))?;
    if !rest.is_empty() {
        return Err(bad(format!("{} trailing bytes after weight data", rest.len())));
    }
    Ok(WeightFile { header, tensors })
}
