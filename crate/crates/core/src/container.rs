//! Binary framing shared by model checkpoints and dataset caches.
//!
//! Layout: 4 magic bytes, a little-endian `u64` header length, a UTF-8 JSON
//! header, then every array as consecutive little-endian `f64` values. The
//! header records each array's length under `array_lengths`.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};

const LENGTHS_KEY: &str = "array_lengths";
/// Upper bound on the header size; guards against reading garbage as a length.
const MAX_HEADER_BYTES: u64 = 1 << 30;

fn format_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Writes `header` and `arrays` to `path` via a temporary sibling file, so a
/// crash never leaves a truncated container behind.
pub fn write_container(
    path: &Path,
    magic: &[u8; 4],
    header: &Value,
    arrays: &[&[f64]],
) -> Result<()> {
    let mut header = header.clone();
    let obj = header
        .as_object_mut()
        .ok_or_else(|| format_error(path, "container header must be a JSON object"))?;
    obj.insert(
        LENGTHS_KEY.into(),
        Value::from(arrays.iter().map(|a| a.len() as u64).collect::<Vec<_>>()),
    );
    let text = serde_json::to_vec(&header)?;

    let tmp = path.with_extension("partial");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        w.write_all(magic)?;
        w.write_all(&(text.len() as u64).to_le_bytes())?;
        w.write_all(&text)?;
        for array in arrays {
            for v in *array {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Reads a container written by [`write_container`], checking the magic
/// bytes and that the payload matches the declared array lengths exactly.
pub fn read_container(path: &Path, magic: &[u8; 4]) -> Result<(Value, Vec<Vec<f64>>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut found = [0u8; 4];
    r.read_exact(&mut found)
        .map_err(|_| format_error(path, "file too short for magic bytes"))?;
    if &found != magic {
        return Err(format_error(
            path,
            format!(
                "expected magic {:?}, found {:?}",
                String::from_utf8_lossy(magic),
                String::from_utf8_lossy(&found)
            ),
        ));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)
        .map_err(|_| format_error(path, "truncated header length"))?;
    let len = u64::from_le_bytes(len);
    if len > MAX_HEADER_BYTES {
        return Err(format_error(
            path,
            format!("implausible header length {len}"),
        ));
    }
    let mut text = vec![0u8; len as usize];
    r.read_exact(&mut text)
        .map_err(|_| format_error(path, "truncated header"))?;
    let header: Value = serde_json::from_slice(&text)
        .map_err(|e| format_error(path, format!("header is not valid JSON: {e}")))?;
    let lengths: Vec<u64> = header
        .get(LENGTHS_KEY)
        .and_then(Value::as_array)
        .and_then(|a| a.iter().map(Value::as_u64).collect())
        .ok_or_else(|| format_error(path, "header lacks array lengths"))?;

    let mut arrays = Vec::with_capacity(lengths.len());
    let mut buf = [0u8; 8];
    for (i, n) in lengths.iter().enumerate() {
        let mut a = Vec::with_capacity(*n as usize);
        for _ in 0..*n {
            r.read_exact(&mut buf)
                .map_err(|_| format_error(path, format!("array {i} is truncated")))?;
            a.push(f64::from_le_bytes(buf));
        }
        arrays.push(a);
    }
    if r.read(&mut buf)? != 0 {
        return Err(format_error(path, "trailing bytes after the last array"));
    }
    Ok((header, arrays))
}
