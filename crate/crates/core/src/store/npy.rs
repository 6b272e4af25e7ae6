// SPDX-License-Identifier: MIT OR Apache-2.0

//! NPY v1.0 container for 2-D little-endian float32 matrices.
//!
//! Layout: magic `\x93NUMPY`, version bytes `1 0`, a little-endian `u16`
//! header length, an ASCII dict literal padded with spaces and terminated by
//! `\n` so the preamble is a multiple of 64 bytes, then the row-major payload.

use std::fs::File;
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use super::{ActivationMatrix, MatrixKind};
use crate::error::{AuditError, Result};

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const PREAMBLE_FIXED: usize = 10;
const ALIGN: usize = 64;

/// Parsed NPY header: matrix shape and where the payload starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NpyHeader {
    pub n_rows: usize,
    pub n_cols: usize,
    pub data_offset: u64,
}

impl NpyHeader {
    pub fn payload_bytes(&self) -> u64 {
        self.n_rows as u64 * self.n_cols as u64 * 4
    }
}

fn format_err(offset: u64, message: impl Into<String>) -> AuditError {
    AuditError::Format {
        offset,
        message: message.into(),
    }
}

/// Builds the full preamble (magic through the terminating newline).
pub fn encode_header(n_rows: usize, n_cols: usize) -> Vec<u8> {
    let dict = format!("{{'descr': '<f4', 'fortran_order': False, 'shape': ({n_rows}, {n_cols}), }}");
    // +1 for the trailing newline
    let unpadded = PREAMBLE_FIXED + dict.len() + 1;
    let total = unpadded.div_ceil(ALIGN) * ALIGN;
    let header_len = total - PREAMBLE_FIXED;

    let mut out = Vec::with_capacity(total);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header_len as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out.resize(total - 1, b' ');
    out.push(b'\n');
    out
}

/// Reads and validates the preamble, checking it against the file length.
pub fn read_header<R: Read>(reader: &mut R, file_len: u64) -> Result<NpyHeader> {
    let mut fixed = [0u8; PREAMBLE_FIXED];
    reader
        .read_exact(&mut fixed)
        .map_err(|_| format_err(0, "file shorter than the 10-byte preamble"))?;
    if &fixed[..6] != MAGIC {
        return Err(format_err(0, "bad magic, not an NPY file"));
    }
    if fixed[6..8] != [1, 0] {
        return Err(format_err(
            6,
            format!("unsupported NPY version {}.{}", fixed[6], fixed[7]),
        ));
    }
    let header_len = u16::from_le_bytes([fixed[8], fixed[9]]) as u64;
    if PREAMBLE_FIXED as u64 + header_len > file_len {
        return Err(format_err(
            8,
            format!("header length {header_len} exceeds file size {file_len}"),
        ));
    }
    let mut header = vec![0u8; header_len as usize];
    reader
        .read_exact(&mut header)
        .map_err(|_| format_err(PREAMBLE_FIXED as u64, "truncated header"))?;
    let text = std::str::from_utf8(&header)
        .ok()
        .filter(|s| s.is_ascii())
        .ok_or_else(|| format_err(PREAMBLE_FIXED as u64, "header is not ASCII"))?;
    if !text.ends_with('\n') {
        return Err(format_err(
            PREAMBLE_FIXED as u64 + header_len - 1,
            "header not terminated by newline",
        ));
    }
    let (n_rows, n_cols) = parse_dict(text.trim_end())?;
    let data_offset = PREAMBLE_FIXED as u64 + header_len;
    let hdr = NpyHeader {
        n_rows,
        n_cols,
        data_offset,
    };
    let expected = (n_rows as u64)
        .checked_mul(n_cols as u64)
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| AuditError::Shape(format!("shape ({n_rows}, {n_cols}) overflows")))?;
    if file_len - data_offset != expected {
        return Err(format_err(
            data_offset,
            format!(
                "payload is {} bytes, shape ({n_rows}, {n_cols}) needs {expected}",
                file_len - data_offset
            ),
        ));
    }
    Ok(hdr)
}

fn dict_value<'a>(dict: &'a str, key: &str) -> Result<&'a str> {
    let pat = format!("'{key}'");
    let start = dict
        .find(&pat)
        .ok_or_else(|| format_err(PREAMBLE_FIXED as u64, format!("header lacks key {pat}")))?;
    let rest = dict[start + pat.len()..].trim_start();
    let rest = rest
        .strip_prefix(':')
        .ok_or_else(|| format_err(PREAMBLE_FIXED as u64, format!("no ':' after {pat}")))?
        .trim_start();
    let end = if rest.starts_with('(') {
        rest.find(')').map(|i| i + 1)
    } else {
        rest.find([',', '}'])
    }
    .ok_or_else(|| format_err(PREAMBLE_FIXED as u64, format!("unterminated value for {pat}")))?;
    Ok(rest[..end].trim())
}

fn parse_dict(dict: &str) -> Result<(usize, usize)> {
    if !(dict.starts_with('{') && dict.ends_with('}')) {
        return Err(format_err(PREAMBLE_FIXED as u64, "header is not a dict literal"));
    }
    let descr = dict_value(dict, "descr")?;
    let descr = descr.trim_matches(|c| c == '\'' || c == '"');
    if descr != "<f4" {
        return Err(AuditError::UnsupportedDtype(format!(
            "{descr} (only little-endian float32 '<f4' is supported)"
        )));
    }
    match dict_value(dict, "fortran_order")? {
        "False" => {}
        "True" => {
            return Err(format_err(
                PREAMBLE_FIXED as u64,
                "fortran-order arrays are not supported",
            ))
        }
        other => {
            return Err(format_err(
                PREAMBLE_FIXED as u64,
                format!("bad fortran_order value {other}"),
            ))
        }
    }
    let shape = dict_value(dict, "shape")?;
    let inner = shape
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| format_err(PREAMBLE_FIXED as u64, format!("bad shape {shape}")))?;
    let dims = inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| format_err(PREAMBLE_FIXED as u64, format!("bad dimension {s:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if dims.len() != 2 {
        return Err(AuditError::Shape(format!(
            "expected a rank-2 array, found rank {}",
            dims.len()
        )));
    }
    Ok((dims[0], dims[1]))
}

/// Writes `m` as an NPY v1.0 file.
pub fn write_matrix(m: &ActivationMatrix, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| AuditError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        w.write_all(&encode_header(m.n_rows(), m.n_cols()))?;
        for v in m.data() {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()
    };
    write().map_err(|e| AuditError::io(path, e))
}

/// Reads an NPY v1.0 float32 matrix, validating it as `kind`.
pub fn read_matrix(path: &Path, kind: MatrixKind) -> Result<ActivationMatrix> {
    let mut file = File::open(path).map_err(|e| AuditError::io(path, e))?;
    let file_len = file.metadata().map_err(|e| AuditError::io(path, e))?.len();
    let hdr = read_header(&mut file, file_len)?;
    let mut bytes = vec![0u8; hdr.payload_bytes() as usize];
    file.read_exact(&mut bytes)
        .map_err(|e| AuditError::io(path, e))?;
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    ActivationMatrix::new(hdr.n_rows, hdr.n_cols, data, kind)
}

/// Random-access column-block reader for matrices too large to load whole.
pub struct NpyColumnReader {
    file: File,
    header: NpyHeader,
}

impl NpyColumnReader {
    pub fn open(path: &Path) -> Result<Self> {
        let mut file = File::open(path).map_err(|e| AuditError::io(path, e))?;
        let file_len = file.metadata().map_err(|e| AuditError::io(path, e))?.len();
        let header = read_header(&mut file, file_len)?;
        Ok(NpyColumnReader { file, header })
    }

    pub fn header(&self) -> NpyHeader {
        self.header
    }

    /// Reads columns `start..start + width` as a row-major `n_rows × width` block.
    pub fn read_columns(&mut self, start: usize, width: usize) -> Result<Vec<f32>> {
        let NpyHeader {
            n_rows,
            n_cols,
            data_offset,
        } = self.header;
        if start.checked_add(width).is_none_or(|end| end > n_cols) {
            return Err(AuditError::Shape(format!(
                "column block {start}..{} outside 0..{n_cols}",
                start.saturating_add(width)
            )));
        }
        let mut out = Vec::with_capacity(n_rows * width);
        let mut row_buf = vec![0u8; width * 4];
        for r in 0..n_rows {
            let offset = data_offset + ((r * n_cols + start) as u64) * 4;
            self.file
                .seek(SeekFrom::Start(offset))
                .and_then(|_| self.file.read_exact(&mut row_buf))
                .map_err(|e| AuditError::io("<npy column block>", e))?;
            out.extend(
                row_buf
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])),
            );
        }
        Ok(out)
    }
}
