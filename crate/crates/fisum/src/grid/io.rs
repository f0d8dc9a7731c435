//! File formats for tensors and fields.
//!
//! Input tensors load from NPY, PNG, or CSV; fields save to NPY, CSV, or JSON
//! and load back from NPY and JSON. Format rules:
//!
//! * **NPY** — format version 1.0 exactly: `\x93NUMPY`, version bytes 1,0, a
//!   little-endian u16 header length, and a padded Python-dict header.
//!   Reading accepts `<f8`/`<f4` C-order arrays with 1–4 axes; a 2-axis array
//!   is a single-channel grid, 3/4-axis arrays are channels-first (d,T₁,T₂)
//!   or (d,T₁,T₂,T₃). Writing always emits `<f8` with one axis per grid axis.
//! * **PNG** — 8-bit grayscale (d=1) or RGB (d=3), scaled to [0,1] by x/255,
//!   loaded as a (height, width) grid.
//! * **CSV** — comma-separated rows, no header, one 2-D grid with d=1.
//!   Written values use C's `%.17g` formatting (17 significant digits, so
//!   every f64 round-trips).
//! * **JSON** — `{"shape": […], "semiring": "real"|"max-plus",
//!   "values": […]}` with −∞ encoded as the string `"-inf"`. Numbers are
//!   printed shortest-round-trip, so decode(encode(x)) is bit-exact.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{DataTensor, GridShape, ScalarField};
use crate::semiring::SemiringTag;

/// Formats accepted by [`load_tensor`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorFormat {
    Npy,
    Png,
    Csv,
}

impl TensorFormat {
    /// Picks the format from a file extension.
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("npy") => Ok(TensorFormat::Npy),
            Some("png") => Ok(TensorFormat::Png),
            Some("csv") => Ok(TensorFormat::Csv),
            other => Err(Error::Config(format!(
                "cannot infer tensor format from extension {other:?} (expected npy, png, or csv)"
            ))),
        }
    }
}

/// Formats accepted by [`save_field`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldFormat {
    Npy,
    Csv,
    Json,
}

impl FieldFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("npy") => Ok(FieldFormat::Npy),
            Some("csv") => Ok(FieldFormat::Csv),
            Some("json") => Ok(FieldFormat::Json),
            other => Err(Error::Config(format!(
                "cannot infer field format from extension {other:?} (expected npy, csv, or json)"
            ))),
        }
    }
}

// ---------------------------------------------------------------------------
// NPY
// ---------------------------------------------------------------------------

const NPY_MAGIC: &[u8; 6] = b"\x93NUMPY";

/// Writes a C-order `<f8` array, format version 1.0, header padded to a
/// 64-byte boundary.
fn npy_write(path: &Path, dims: &[usize], values: &[f64]) -> Result<()> {
    let shape = match dims.len() {
        1 => format!("({},)", dims[0]),
        _ => format!(
            "({})",
            dims.iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        ),
    };
    let mut header = format!("{{'descr': '<f8', 'fortran_order': False, 'shape': {shape}, }}");
    let unpadded = NPY_MAGIC.len() + 2 + 2 + header.len() + 1; // +1 for '\n'
    let pad = (64 - unpadded % 64) % 64;
    header.push_str(&" ".repeat(pad));
    header.push('\n');

    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    w.write_all(NPY_MAGIC).map_err(io_err)?;
    w.write_all(&[1, 0]).map_err(io_err)?;
    w.write_all(&(header.len() as u16).to_le_bytes()).map_err(io_err)?;
    w.write_all(header.as_bytes()).map_err(io_err)?;
    for v in values {
        w.write_all(&v.to_le_bytes()).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Reads a version-1.0 NPY file; returns (dims, values). `<f4` is widened to
/// f64; anything else in the header is an error naming the offending field.
fn npy_read(path: &Path) -> Result<(Vec<usize>, Vec<f64>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: String| Error::Ingestion(format!("{}: {msg}", path.display()));

    if bytes.len() < 10 || &bytes[..6] != NPY_MAGIC {
        return Err(bad("not an NPY file (bad magic)".into()));
    }
    let (major, minor) = (bytes[6], bytes[7]);
    if (major, minor) != (1, 0) {
        return Err(bad(format!(
            "NPY format version {major}.{minor} unsupported (need 1.0)"
        )));
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    if bytes.len() < 10 + header_len {
        return Err(bad("truncated header".into()));
    }
    let header = std::str::from_utf8(&bytes[10..10 + header_len])
        .map_err(|_| bad("header is not valid UTF-8".into()))?;

    let descr = npy_header_str(header, "descr").ok_or_else(|| bad("header missing 'descr'".into()))?;
    let width = match descr.as_str() {
        "<f8" => 8,
        "<f4" => 4,
        other => {
            return Err(bad(format!(
                "unsupported descr '{other}' (need '<f8' or '<f4')"
            )))
        }
    };
    match npy_header_raw(header, "fortran_order") {
        Some(ref v) if v == "False" => {}
        Some(ref v) if v == "True" => {
            return Err(bad("fortran_order=True unsupported (C order only)".into()))
        }
        _ => return Err(bad("header missing 'fortran_order'".into())),
    }
    let shape_src =
        npy_header_raw(header, "shape").ok_or_else(|| bad("header missing 'shape'".into()))?;
    let dims = parse_py_tuple(&shape_src)
        .ok_or_else(|| bad(format!("cannot parse shape {shape_src:?}")))?;

    let count: usize = dims.iter().product();
    let data = &bytes[10 + header_len..];
    if data.len() != count * width {
        return Err(bad(format!(
            "data length {} does not match shape {dims:?} ({} bytes expected)",
            data.len(),
            count * width
        )));
    }
    let mut values = Vec::with_capacity(count);
    match width {
        8 => {
            for chunk in data.chunks_exact(8) {
                values.push(f64::from_le_bytes(chunk.try_into().unwrap()));
            }
        }
        _ => {
            for chunk in data.chunks_exact(4) {
                values.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
            }
        }
    }
    Ok((dims, values))
}

/// Extracts a quoted string value for `key` from an NPY header dict.
fn npy_header_str(header: &str, key: &str) -> Option<String> {
    let raw = npy_header_raw(header, key)?;
    let raw = raw.trim();
    let inner = raw
        .strip_prefix('\'')
        .and_then(|s| s.strip_suffix('\''))
        .or_else(|| raw.strip_prefix('"').and_then(|s| s.strip_suffix('"')))?;
    Some(inner.to_string())
}

/// Extracts the raw text of `key`'s value (up to the next top-level comma).
fn npy_header_raw(header: &str, key: &str) -> Option<String> {
    let pat = format!("'{key}':");
    let start = header.find(&pat)? + pat.len();
    let rest = &header[start..];
    let mut depth = 0usize;
    let mut end = rest.len();
    for (i, c) in rest.char_indices() {
        match c {
            '(' | '[' => depth += 1,
            ')' | ']' => depth = depth.saturating_sub(1),
            ',' if depth == 0 => {
                end = i;
                break;
            }
            '}' if depth == 0 => {
                end = i;
                break;
            }
            _ => {}
        }
    }
    Some(rest[..end].trim().to_string())
}

/// Parses `(3,)`, `(2, 3)`, `()`-style Python int tuples.
fn parse_py_tuple(src: &str) -> Option<Vec<usize>> {
    let inner = src.trim().strip_prefix('(')?.strip_suffix(')')?;
    let mut dims = Vec::new();
    for part in inner.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        dims.push(part.parse().ok()?);
    }
    Some(dims)
}

// ---------------------------------------------------------------------------
// %.17g formatting (CSV)
// ---------------------------------------------------------------------------

/// Formats like C's `printf("%.17g", v)`: 17 significant digits, fixed
/// notation when the decimal exponent is in [-4, 17), scientific otherwise,
/// trailing zeros trimmed. 17 digits make the text round-trip to the same f64.
pub fn fmt_g17(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v == f64::INFINITY {
        return "inf".into();
    }
    if v == f64::NEG_INFINITY {
        return "-inf".into();
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0" } else { "0" }.into();
    }
    // {:.16e} rounds to 17 significant digits; take the decimal exponent of
    // the *rounded* value so boundary cases pick the right notation.
    let sci = format!("{v:.16e}");
    let epos = sci.find('e').unwrap();
    let exp: i32 = sci[epos + 1..].parse().unwrap();
    if (-4..17).contains(&exp) {
        let frac = (16 - exp).max(0) as usize;
        let fixed = format!("{v:.frac$}");
        if fixed.contains('.') {
            fixed.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            fixed
        }
    } else {
        let mantissa = sci[..epos].trim_end_matches('0').trim_end_matches('.');
        format!(
            "{mantissa}e{}{:02}",
            if exp < 0 { '-' } else { '+' },
            exp.abs()
        )
    }
}

// ---------------------------------------------------------------------------
// Tensor loading
// ---------------------------------------------------------------------------

/// Loads an input tensor.
///
/// Axis conventions per format: NPY 1/2-axis arrays are single-channel grids;
/// 3/4-axis arrays are channels-first and are transposed to the in-memory
/// channels-last layout. PNG loads as a (height, width) grid with 1 or 3
/// channels. CSV loads one 2-D grid with d=1. NaN and ±∞ are rejected with
/// the offending position named.
pub fn load_tensor(path: &Path, format: TensorFormat) -> Result<DataTensor> {
    match format {
        TensorFormat::Npy => load_tensor_npy(path),
        TensorFormat::Png => load_tensor_png(path),
        TensorFormat::Csv => load_tensor_csv(path),
    }
}

fn load_tensor_npy(path: &Path) -> Result<DataTensor> {
    let (dims, values) = npy_read(path)?;
    let (extents, channels) = match dims.len() {
        1 => (vec![dims[0]], 1),
        2 => (vec![dims[0], dims[1]], 1),
        3 => (vec![dims[1], dims[2]], dims[0]),
        4 => (vec![dims[1], dims[2], dims[3]], dims[0]),
        n => {
            return Err(Error::Ingestion(format!(
                "{}: {n}-axis arrays unsupported (expected 1-4 axes)",
                path.display()
            )))
        }
    };
    let shape = GridShape::new(extents)?;
    let reordered = if channels == 1 {
        values
    } else {
        // channels-first on disk → channels-last in memory
        let points = shape.len();
        let mut out = vec![0.0; values.len()];
        for c in 0..channels {
            for p in 0..points {
                out[p * channels + c] = values[c * points + p];
            }
        }
        out
    };
    DataTensor::new(shape, channels, reordered)
}

fn load_tensor_png(path: &Path) -> Result<DataTensor> {
    let img = image::open(path)
        .map_err(|e| Error::Ingestion(format!("{}: png decode: {e}", path.display())))?;
    match img {
        image::DynamicImage::ImageLuma8(gray) => {
            let (w, h) = gray.dimensions();
            let shape = GridShape::new(vec![h as usize, w as usize])?;
            let mut values = Vec::with_capacity((w * h) as usize);
            for y in 0..h {
                for x in 0..w {
                    values.push(gray.get_pixel(x, y).0[0] as f64 / 255.0);
                }
            }
            DataTensor::new(shape, 1, values)
        }
        image::DynamicImage::ImageRgb8(rgb) => {
            let (w, h) = rgb.dimensions();
            let shape = GridShape::new(vec![h as usize, w as usize])?;
            let mut values = Vec::with_capacity((w * h * 3) as usize);
            for y in 0..h {
                for x in 0..w {
                    let px = rgb.get_pixel(x, y).0;
                    values.extend(px.iter().map(|&b| b as f64 / 255.0));
                }
            }
            DataTensor::new(shape, 3, values)
        }
        other => Err(Error::Ingestion(format!(
            "{}: unsupported png layout {:?} (need 8-bit grayscale or RGB)",
            path.display(),
            other.color()
        ))),
    }
}

fn load_tensor_csv(path: &Path) -> Result<DataTensor> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: String| Error::Ingestion(format!("{}: {msg}", path.display()));
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue; // tolerate blank/trailing lines
        }
        let mut row = Vec::new();
        for (c, tok) in line.split(',').enumerate() {
            let v: f64 = tok
                .trim()
                .parse()
                .map_err(|_| bad(format!("row {r}, column {c}: cannot parse {:?}", tok.trim())))?;
            if !v.is_finite() {
                return Err(bad(format!("row {r}, column {c}: non-finite value {v}")));
            }
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(bad(format!(
                    "row {r} has {} columns, row 0 has {}",
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(bad("no rows".into()));
    }
    let shape = GridShape::new(vec![rows.len(), rows[0].len()])?;
    DataTensor::new(shape, 1, rows.into_iter().flatten().collect())
}

// ---------------------------------------------------------------------------
// Field save/load
// ---------------------------------------------------------------------------

/// Saves a field. NPY writes one `<f8` axis per grid axis; CSV (order ≤ 2
/// only) writes `%.17g` values; JSON writes the tagged schema documented at
/// the top of this module. NPY and JSON round-trip bit-exactly through the
/// corresponding loaders.
pub fn save_field(field: &ScalarField, path: &Path, format: FieldFormat) -> Result<()> {
    match format {
        FieldFormat::Npy => npy_write(path, field.shape().extents(), field.values()),
        FieldFormat::Csv => save_field_csv(field, path),
        FieldFormat::Json => {
            let text = serde_json::to_string(&field_to_json(field)).expect("json encode");
            fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
        }
    }
}

fn save_field_csv(field: &ScalarField, path: &Path) -> Result<()> {
    let extents = field.shape().extents();
    let (rows, cols) = match extents {
        [n] => (1, *n),
        [r, c] => (*r, *c),
        _ => {
            return Err(Error::Config(format!(
                "csv supports fields of order <= 2, got order {}",
                extents.len()
            )))
        }
    };
    let mut text = String::new();
    for r in 0..rows {
        for c in 0..cols {
            if c > 0 {
                text.push(',');
            }
            text.push_str(&fmt_g17(field.get(r * cols + c)));
        }
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads a field saved as NPY; the caller names the semiring the values live
/// in (NPY stores no tag). Values are validated against the tag.
pub fn load_field_npy(path: &Path, tag: SemiringTag) -> Result<ScalarField> {
    let (dims, values) = npy_read(path)?;
    ScalarField::new(GridShape::new(dims)?, tag, values)
}

/// Loads a field saved as JSON; the tag comes from the file.
pub fn load_field_json(path: &Path) -> Result<ScalarField> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Schema {
        pointer: "".into(),
        message: format!("{}: {e}", path.display()),
    })?;
    field_from_json(&value)
}

/// Encodes one semiring value for JSON: finite → number, −∞ → `"-inf"`.
pub fn value_to_json(v: f64) -> serde_json::Value {
    if v == f64::NEG_INFINITY {
        serde_json::Value::String("-inf".into())
    } else {
        serde_json::Value::Number(
            serde_json::Number::from_f64(v).expect("finite value encodes as JSON number"),
        )
    }
}

/// Decodes what [`value_to_json`] produces; `pointer` feeds error messages.
pub fn value_from_json(value: &serde_json::Value, pointer: &str) -> Result<f64> {
    match value {
        serde_json::Value::Number(n) => n.as_f64().ok_or_else(|| Error::Schema {
            pointer: pointer.into(),
            message: format!("number {n} does not fit in f64"),
        }),
        serde_json::Value::String(s) if s == "-inf" => Ok(f64::NEG_INFINITY),
        other => Err(Error::Schema {
            pointer: pointer.into(),
            message: format!("expected a number or \"-inf\", got {other}"),
        }),
    }
}

fn field_to_json(field: &ScalarField) -> serde_json::Value {
    serde_json::json!({
        "shape": field.shape().extents(),
        "semiring": field.tag().name(),
        "values": field.values().iter().map(|&v| value_to_json(v)).collect::<Vec<_>>(),
    })
}

fn field_from_json(value: &serde_json::Value) -> Result<ScalarField> {
    let obj = value.as_object().ok_or_else(|| Error::Schema {
        pointer: "".into(),
        message: "expected an object".into(),
    })?;
    let shape_val = obj.get("shape").ok_or_else(|| Error::Schema {
        pointer: "/shape".into(),
        message: "missing".into(),
    })?;
    let extents: Vec<usize> = serde_json::from_value(shape_val.clone()).map_err(|e| Error::Schema {
        pointer: "/shape".into(),
        message: e.to_string(),
    })?;
    let tag_val = obj.get("semiring").ok_or_else(|| Error::Schema {
        pointer: "/semiring".into(),
        message: "missing".into(),
    })?;
    let tag = tag_val
        .as_str()
        .ok_or_else(|| Error::Schema {
            pointer: "/semiring".into(),
            message: format!("expected a string, got {tag_val}"),
        })
        .and_then(|s| {
            SemiringTag::parse(s).map_err(|_| Error::Schema {
                pointer: "/semiring".into(),
                message: format!("unknown semiring {s:?}"),
            })
        })?;
    let values_val = obj.get("values").ok_or_else(|| Error::Schema {
        pointer: "/values".into(),
        message: "missing".into(),
    })?;
    let arr = values_val.as_array().ok_or_else(|| Error::Schema {
        pointer: "/values".into(),
        message: "expected an array".into(),
    })?;
    let mut values = Vec::with_capacity(arr.len());
    for (i, v) in arr.iter().enumerate() {
        values.push(value_from_json(v, &format!("/values/{i}"))?);
    }
    ScalarField::new(GridShape::new(extents)?, tag, values)
}
