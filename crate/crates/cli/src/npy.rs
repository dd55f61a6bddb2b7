//! Reader and writer for 2-D `.npy` arrays (format version 1.0).

use std::io::{Read, Write};

use ndarray::Array2;

const MAGIC: &[u8] = b"\x93NUMPY";

#[derive(Debug, PartialEq, Eq)]
pub enum NpyError {
    BadMagic,
    UnsupportedVersion(u8, u8),
    MalformedHeader(String),
    UnsupportedDtype(String),
    FortranOrder,
    NotTwoDimensional(usize),
    Truncated { expected: usize, found: usize },
}

impl std::fmt::Display for NpyError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NpyError::BadMagic => write!(f, "missing NPY magic string"),
            NpyError::UnsupportedVersion(a, b) => write!(f, "NPY version {a}.{b} unsupported (need 1.0)"),
            NpyError::MalformedHeader(h) => write!(f, "malformed NPY header: {h}"),
            NpyError::UnsupportedDtype(d) => write!(f, "unsupported dtype {d} (need <f4 or <f8)"),
            NpyError::FortranOrder => write!(f, "unsupported layout: fortran_order arrays are not read"),
            NpyError::NotTwoDimensional(n) => write!(f, "expected a 2-D array, found {n} dimensions"),
            NpyError::Truncated { expected, found } => {
                write!(f, "data section holds {found} bytes, header implies {expected}")
            }
        }
    }
}

impl std::error::Error for NpyError {}

#[derive(Debug)]
struct Header {
    little_f8: bool,
    fortran: bool,
    shape: Vec<usize>,
}

/// Value of `'key': value` in the header dict, up to the next top-level comma.
fn dict_value<'a>(h: &'a str, key: &str) -> Result<&'a str, NpyError> {
    let pat = format!("'{key}':");
    let start = h.find(&pat).ok_or_else(|| NpyError::MalformedHeader(format!("no '{key}' entry")))? + pat.len();
    let rest = h[start..].trim_start();
    let end = if rest.starts_with('(') {
        rest.find(')').map(|i| i + 1)
    } else {
        rest.find([',', '}'])
    }
    .ok_or_else(|| NpyError::MalformedHeader(format!("unterminated '{key}' entry")))?;
    Ok(rest[..end].trim())
}

fn parse_header(h: &str) -> Result<Header, NpyError> {
    let descr = dict_value(h, "descr")?.trim_matches(|c| c == '\'' || c == '"');
    let little_f8 = match descr {
        "<f8" | "f8" => true,
        "<f4" | "f4" => false,
        other => return Err(NpyError::UnsupportedDtype(other.to_string())),
    };
    let fortran = match dict_value(h, "fortran_order")? {
        "False" => false,
        "True" => true,
        other => return Err(NpyError::MalformedHeader(format!("fortran_order = {other}"))),
    };
    let shape_txt = dict_value(h, "shape")?;
    let inner = shape_txt
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| NpyError::MalformedHeader(format!("shape = {shape_txt}")))?;
    let shape = inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().map_err(|_| NpyError::MalformedHeader(format!("shape entry {s}"))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Header { little_f8, fortran, shape })
}

pub fn read_npy<R: Read>(mut r: R) -> Result<Array2<f64>, Box<dyn std::error::Error + Send + Sync>> {
    let mut pre = [0u8; 10];
    r.read_exact(&mut pre).map_err(|_| NpyError::BadMagic)?;
    if &pre[..6] != MAGIC {
        return Err(NpyError::BadMagic.into());
    }
    if (pre[6], pre[7]) != (1, 0) {
        return Err(NpyError::UnsupportedVersion(pre[6], pre[7]).into());
    }
    let hlen = u16::from_le_bytes([pre[8], pre[9]]) as usize;
    let mut hbuf = vec![0u8; hlen];
    r.read_exact(&mut hbuf).map_err(|_| NpyError::MalformedHeader("header shorter than declared".into()))?;
    let htxt = std::str::from_utf8(&hbuf).map_err(|_| NpyError::MalformedHeader("header is not ASCII".into()))?;
    let header = parse_header(htxt)?;
    if header.fortran {
        return Err(NpyError::FortranOrder.into());
    }
    if header.shape.len() != 2 {
        return Err(NpyError::NotTwoDimensional(header.shape.len()).into());
    }
    let (rows, cols) = (header.shape[0], header.shape[1]);
    let width = if header.little_f8 { 8 } else { 4 };
    let expected = rows * cols * width;
    let mut data = Vec::with_capacity(expected);
    r.read_to_end(&mut data)?;
    if data.len() != expected {
        return Err(NpyError::Truncated { expected, found: data.len() }.into());
    }
    let values: Vec<f64> = if header.little_f8 {
        data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()
    } else {
        data.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect()
    };
    Ok(Array2::from_shape_vec((rows, cols), values)?)
}

/// Writes a little-endian float64, C-order array.
pub fn write_npy<W: Write>(mut w: W, a: &Array2<f64>) -> std::io::Result<()> {
    let (rows, cols) = a.dim();
    let mut header = format!("{{'descr': '<f8', 'fortran_order': False, 'shape': ({rows}, {cols}), }}");
    // Magic, version and length take 10 bytes; the header ends in '\n' at a 64-byte boundary.
    let total = (10 + header.len() + 1).div_ceil(64) * 64;
    header.push_str(&" ".repeat(total - 10 - header.len() - 1));
    header.push('\n');
    w.write_all(MAGIC)?;
    w.write_all(&[1, 0])?;
    w.write_all(&(header.len() as u16).to_le_bytes())?;
    w.write_all(header.as_bytes())?;
    for v in a.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}
