//! Dense matrix files.
//!
//! Two formats are supported, both storing a matrix row by row (for spectra,
//! one row per band):
//!
//! * **CSV**: one matrix row per line, comma-separated, `.` decimal point,
//!   no header. Blank lines and lines starting with `#` are ignored. Values
//!   are written with 17 significant digits (`{:.16e}`), which round-trips
//!   every `f64` exactly.
//! * **RAWF64**: the bare values as little-endian IEEE-754 doubles in
//!   row-major order, with no header. A sidecar text file at
//!   `<data path>.desc` holds `key=value` lines; `rows`, `cols`,
//!   `dtype=f64le` and `layout=row_major` are required, other keys are kept
//!   as free-form metadata.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::error::{Result, UnmixError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    RawF64,
}

impl MatrixFormat {
    /// `.csv` is CSV; `.f64`, `.raw` and `.bin` are RAWF64.
    pub fn from_path(path: &Path) -> Result<Self> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref()
        {
            Some("csv") => Ok(MatrixFormat::Csv),
            Some("f64" | "raw" | "bin") => Ok(MatrixFormat::RawF64),
            _ => Err(UnmixError::UnsupportedFormat(format!(
                "cannot infer matrix format from {}",
                path.display()
            ))),
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            MatrixFormat::Csv => "csv",
            MatrixFormat::RawF64 => "f64",
        }
    }
}

impl std::str::FromStr for MatrixFormat {
    type Err = UnmixError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(MatrixFormat::Csv),
            "rawf64" | "f64" | "raw" => Ok(MatrixFormat::RawF64),
            other => Err(UnmixError::UnsupportedFormat(other.to_string())),
        }
    }
}

/// Sidecar descriptor path for a RAWF64 file.
pub fn descriptor_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".desc");
    PathBuf::from(s)
}

pub fn load_matrix(path: &Path, format: MatrixFormat) -> Result<Array2<f64>> {
    match format {
        MatrixFormat::Csv => {
            let text = fs::read_to_string(path).map_err(|e| UnmixError::io(path, e))?;
            parse_csv(&text, path)
        }
        MatrixFormat::RawF64 => load_raw(path).map(|(m, _)| m),
    }
}

/// Loads using the format implied by the extension.
pub fn load_matrix_auto(path: &Path) -> Result<Array2<f64>> {
    load_matrix(path, MatrixFormat::from_path(path)?)
}

pub fn save_matrix(matrix: &Array2<f64>, path: &Path, format: MatrixFormat) -> Result<()> {
    match format {
        MatrixFormat::Csv => fs::write(path, to_csv(matrix)).map_err(|e| UnmixError::io(path, e)),
        MatrixFormat::RawF64 => save_raw(matrix, path, &BTreeMap::new()),
    }
}

pub fn to_csv(matrix: &Array2<f64>) -> String {
    let mut out = String::with_capacity(matrix.len() * 24);
    for row in matrix.rows() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{v:.16e}").expect("writing to a String");
        }
        out.push('\n');
    }
    out
}

pub fn parse_csv(text: &str, path: &Path) -> Result<Array2<f64>> {
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut count = 0;
        for (field_no, field) in line.split(',').enumerate() {
            let field = field.trim();
            let v: f64 = field.parse().map_err(|_| UnmixError::Parse {
                path: path.to_path_buf(),
                location: format!("line {}, field {}", lineno + 1, field_no + 1),
                msg: format!("not a number: {field:?}"),
            })?;
            values.push(v);
            count += 1;
        }
        match cols {
            None => cols = Some(count),
            Some(c) if c != count => {
                return Err(UnmixError::ShapeMismatch(format!(
                    "{}: line {} has {count} values, expected {c}",
                    path.display(),
                    lineno + 1
                )))
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| UnmixError::Parse {
        path: path.to_path_buf(),
        location: "end of file".into(),
        msg: "no data rows".into(),
    })?;
    Ok(Array2::from_shape_vec((rows, cols), values).expect("row lengths checked"))
}

/// Writes RAWF64 data and its descriptor. `extra` keys are echoed into the descriptor.
pub fn save_raw(matrix: &Array2<f64>, path: &Path, extra: &BTreeMap<String, String>) -> Result<()> {
    let mut bytes = Vec::with_capacity(matrix.len() * 8);
    for v in matrix.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| UnmixError::io(path, e))?;
    let mut desc = format!(
        "rows={}\ncols={}\ndtype=f64le\nlayout=row_major\n",
        matrix.nrows(),
        matrix.ncols()
    );
    for (k, v) in extra {
        if matches!(k.as_str(), "rows" | "cols" | "dtype" | "layout") {
            continue;
        }
        writeln!(desc, "{k}={v}").expect("writing to a String");
    }
    let dpath = descriptor_path(path);
    fs::write(&dpath, desc).map_err(|e| UnmixError::io(dpath, e))
}

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_key_values(text: &str, path: &Path) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| UnmixError::Parse {
            path: path.to_path_buf(),
            location: format!("line {}", lineno + 1),
            msg: "expected key=value".into(),
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

/// Loads RAWF64 data, returning the matrix and the full descriptor.
pub fn load_raw(path: &Path) -> Result<(Array2<f64>, BTreeMap<String, String>)> {
    let dpath = descriptor_path(path);
    let text = fs::read_to_string(&dpath).map_err(|e| UnmixError::io(&dpath, e))?;
    let desc = parse_key_values(&text, &dpath)?;
    let field = |key: &str| {
        desc.get(key).ok_or_else(|| UnmixError::Parse {
            path: dpath.clone(),
            location: key.to_string(),
            msg: "missing required key".into(),
        })
    };
    let dim = |key: &str| -> Result<usize> {
        field(key)?.parse().map_err(|_| UnmixError::Parse {
            path: dpath.clone(),
            location: key.to_string(),
            msg: "not a nonnegative integer".into(),
        })
    };
    let (rows, cols) = (dim("rows")?, dim("cols")?);
    if field("dtype")? != "f64le" {
        return Err(UnmixError::UnsupportedFormat(format!(
            "dtype {}",
            field("dtype")?
        )));
    }
    if field("layout")? != "row_major" {
        return Err(UnmixError::UnsupportedFormat(format!(
            "layout {}",
            field("layout")?
        )));
    }
    let bytes = fs::read(path).map_err(|e| UnmixError::io(path, e))?;
    if bytes.len() != rows * cols * 8 {
        return Err(UnmixError::ShapeMismatch(format!(
            "{}: descriptor declares {rows}x{cols} ({} bytes), file has {} bytes",
            path.display(),
            rows * cols * 8,
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let m = Array2::from_shape_vec((rows, cols), values).expect("length checked");
    Ok((m, desc))
}

/// Reads a list of indices separated by commas or whitespace; `#` starts a comment.
pub fn parse_index_list(text: &str, path: &Path) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        for tok in line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
        {
            out.push(tok.parse().map_err(|_| UnmixError::Parse {
                path: path.to_path_buf(),
                location: format!("line {}", lineno + 1),
                msg: format!("not an index: {tok:?}"),
            })?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn csv_basic() {
        let m = parse_csv("1,2\n3,4", Path::new("t.csv")).unwrap();
        assert_eq!(m, array![[1.0, 2.0], [3.0, 4.0]]);
        let m = parse_csv("# header\n\n 1.5 , 2e-3\n", Path::new("t.csv")).unwrap();
        assert_eq!(m, array![[1.5, 2e-3]]);
    }

    #[test]
    fn csv_ragged_and_garbage() {
        assert!(matches!(
            parse_csv("1,2,3\n4,5", Path::new("t.csv")),
            Err(UnmixError::ShapeMismatch(_))
        ));
        match parse_csv("1,2\n3,x", Path::new("t.csv")) {
            Err(UnmixError::Parse { location, .. }) => assert_eq!(location, "line 2, field 2"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_csv("# nothing\n", Path::new("t.csv")),
            Err(UnmixError::Parse { .. })
        ));
    }

    #[test]
    fn format_inference() {
        assert_eq!(
            MatrixFormat::from_path(Path::new("a/b.CSV")).unwrap(),
            MatrixFormat::Csv
        );
        assert_eq!(
            MatrixFormat::from_path(Path::new("b.f64")).unwrap(),
            MatrixFormat::RawF64
        );
        assert!(matches!(
            MatrixFormat::from_path(Path::new("b.hdr")),
            Err(UnmixError::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn index_list() {
        let v = parse_index_list("1, 2 3\n# skip 9\n10 # trailing\n", Path::new("m")).unwrap();
        assert_eq!(v, vec![1, 2, 3, 10]);
        assert!(parse_index_list("1,-2", Path::new("m")).is_err());
    }
}
