//! Versioned file container shared by datasets and checkpoints.
//!
//! Layout: a text header of `key = value` lines starting with a magic line
//! and ending with a blank line, followed by a little-endian binary body.
//! The header records the body length and its SHA-256, so truncation,
//! corruption and version skew are reported as distinct errors.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::Mat;

pub const MAGIC: &str = "GRSSM-CONTAINER 1";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Header {
    pub entries: BTreeMap<String, String>,
}

impl Header {
    pub fn new(kind: &str, schema_version: u32) -> Self {
        let mut h = Self::default();
        h.set("kind", kind);
        h.set("schema_version", schema_version);
        h
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        let v = value.to_string();
        assert!(!key.contains('=') && !key.contains('\n') && !v.contains('\n'), "header entries are single-line");
        self.entries.insert(key.to_string(), v);
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.entries
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Corrupt(format!("header is missing '{key}'")))
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.get(key)?;
        raw.parse()
            .map_err(|_| Error::Corrupt(format!("header value for '{key}' is malformed: '{raw}'")))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn encode(header: &Header, body: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(body.len() + 512);
    out.extend_from_slice(MAGIC.as_bytes());
    out.push(b'\n');
    for (k, v) in &header.entries {
        out.extend_from_slice(format!("{k} = {v}\n").as_bytes());
    }
    out.extend_from_slice(format!("body_len = {}\n", body.len()).as_bytes());
    out.extend_from_slice(format!("sha256 = {}\n\n", hex(&Sha256::digest(body))).as_bytes());
    out.extend_from_slice(body);
    out
}

/// Splits and verifies a container. `kind` and `schema_version` must match.
pub fn decode(bytes: &[u8], kind: &str, schema_version: u32) -> Result<(Header, Vec<u8>)> {
    let end = bytes
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| Error::Truncated("header never terminates".into()))?;
    let text = std::str::from_utf8(&bytes[..end]).map_err(|_| Error::Corrupt("header is not UTF-8".into()))?;
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err(Error::Corrupt("not a container file (bad magic line)".into()));
    }
    let mut header = Header::default();
    for line in lines {
        let (k, v) = line
            .split_once(" = ")
            .ok_or_else(|| Error::Corrupt(format!("malformed header line '{line}'")))?;
        header.entries.insert(k.to_string(), v.to_string());
    }
    let found_kind = header.get("kind")?;
    if found_kind != kind {
        return Err(Error::Corrupt(format!("expected a '{kind}' file, found '{found_kind}'")));
    }
    let found = header.get("schema_version")?;
    if found.parse::<u32>().ok() != Some(schema_version) {
        return Err(Error::VersionMismatch {
            found: found.to_string(),
            expected: schema_version,
        });
    }
    let body_len: usize = header.parse("body_len")?;
    let body = &bytes[end + 2..];
    if body.len() < body_len {
        return Err(Error::Truncated(format!("body has {} bytes, header declares {body_len}", body.len())));
    }
    if body.len() > body_len {
        return Err(Error::Corrupt(format!(
            "body has {} trailing bytes beyond the declared {body_len}",
            body.len() - body_len
        )));
    }
    let expected = header.get("sha256")?.to_string();
    let actual = hex(&Sha256::digest(body));
    if expected != actual {
        return Err(Error::Checksum { expected, actual });
    }
    header.entries.remove("body_len");
    header.entries.remove("sha256");
    Ok((header, body.to_vec()))
}

/// Writes via a temporary sibling and a rename so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn save(path: &Path, header: &Header, body: &[u8]) -> Result<()> {
    write_atomic(path, &encode(header, body))
}

pub fn load(path: &Path, kind: &str, schema_version: u32) -> Result<(Header, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, kind, schema_version)
}

#[derive(Default)]
pub struct BodyWriter {
    pub buf: Vec<u8>,
}

impl BodyWriter {
    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64s(&mut self, v: &[f64]) {
        for x in v {
            self.f64(*x);
        }
    }

    pub fn i64s(&mut self, v: &[i64]) {
        for x in v {
            self.buf.extend_from_slice(&x.to_le_bytes());
        }
    }

    pub fn bytes(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(v);
    }

    pub fn str(&mut self, s: &str) {
        self.u64(s.len() as u64);
        self.bytes(s.as_bytes());
    }

    pub fn mat(&mut self, m: &Mat) {
        self.u64(m.rows as u64);
        self.u64(m.cols as u64);
        self.f64s(&m.data);
    }

    /// Count-prefixed list of named matrices.
    pub fn named_mats(&mut self, mats: &[(String, Mat)]) {
        self.u64(mats.len() as u64);
        for (name, m) in mats {
            self.str(name);
            self.mat(m);
        }
    }
}

pub struct BodyReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> BodyReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < k {
            return Err(Error::Corrupt(format!(
                "body ends after {} bytes while reading {k} more",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + k];
        self.pos += k;
        Ok(s)
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// A length that must fit in what is left of the body.
    pub fn len(&mut self, elem_size: usize) -> Result<usize> {
        let v = self.u64()? as usize;
        if v.saturating_mul(elem_size.max(1)) > self.remaining() {
            return Err(Error::Corrupt(format!("declared length {v} exceeds the remaining body")));
        }
        Ok(v)
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64s(&mut self, k: usize) -> Result<Vec<f64>> {
        let raw = self.take(k.checked_mul(8).ok_or_else(|| Error::Corrupt("length overflow".into()))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    pub fn i64s(&mut self, k: usize) -> Result<Vec<i64>> {
        let raw = self.take(k.checked_mul(8).ok_or_else(|| Error::Corrupt("length overflow".into()))?)?;
        Ok(raw.chunks_exact(8).map(|c| i64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    pub fn bytes(&mut self, k: usize) -> Result<&'a [u8]> {
        self.take(k)
    }

    pub fn str(&mut self) -> Result<String> {
        let k = self.len(1)?;
        String::from_utf8(self.take(k)?.to_vec()).map_err(|_| Error::Corrupt("string is not UTF-8".into()))
    }

    pub fn mat(&mut self) -> Result<Mat> {
        let rows = self.u64()? as usize;
        let cols = self.u64()? as usize;
        let k = rows.checked_mul(cols).ok_or_else(|| Error::Corrupt("matrix size overflow".into()))?;
        Ok(Mat::from_vec(rows, cols, self.f64s(k)?))
    }

    pub fn named_mats(&mut self) -> Result<Vec<(String, Mat)>> {
        let k = self.len(16)?;
        (0..k).map(|_| Ok((self.str()?, self.mat()?))).collect()
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::Corrupt(format!("{} unread bytes at end of body", self.remaining())));
        }
        Ok(())
    }
}
