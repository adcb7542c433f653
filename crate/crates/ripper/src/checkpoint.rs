//! On-disk container for model weights and datasets.
//!
//! Layout: the 4-byte magic `BBR1`, one newline-terminated manifest line of
//! space-separated tokens (`key=value` metadata first, then tensor names in
//! record order), then one binary record per tensor: rank as `u64` LE, each
//! extent as `u64` LE, then the values as `f64` LE. Round trips are
//! bit-exact because values never pass through a decimal representation.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"BBR1";

/// Upper bound on manifest size; anything larger is a corrupt file, not a
/// plausible checkpoint.
const MAX_MANIFEST_BYTES: usize = 1 << 20;
/// Caps applied to extents read from disk so a corrupt header produces a
/// format error instead of an absurd allocation.
const MAX_RANK: u64 = 8;
const MAX_ELEMENTS: u64 = 1 << 26;

#[derive(Debug, Clone, Default)]
pub struct Container {
    /// Metadata in manifest order. Duplicate keys are rejected on write and
    /// on read.
    pub meta: Vec<(String, String)>,
    /// Named tensors in manifest order.
    pub tensors: Vec<(String, Tensor)>,
}

impl Container {
    pub fn new() -> Self {
        Container::default()
    }

    pub fn push_meta(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.meta.push((key.into(), value.into()));
    }

    pub fn push_tensor(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.push((name.into(), tensor));
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    /// Like [`Container::tensor`] but failing with a format error naming the
    /// missing entry.
    pub fn require(&self, path: &Path, name: &str) -> Result<&Tensor> {
        self.tensor(name)
            .ok_or_else(|| Error::format(path.display().to_string(), format!("missing tensor '{name}'")))
    }
}

fn valid_key(s: &str) -> bool {
    !s.is_empty() && !s.contains(['=', ' ', '\n', '\r', '\t'])
}

fn valid_value(s: &str) -> bool {
    !s.is_empty() && !s.contains([' ', '\n', '\r', '\t'])
}

pub fn write_container(path: &Path, container: &Container) -> Result<()> {
    let display = path.display().to_string();
    let mut seen = std::collections::HashSet::new();
    let mut manifest = String::new();
    for (k, v) in &container.meta {
        if !valid_key(k) || !valid_value(v) {
            return Err(Error::invalid(format!(
                "metadata token '{k}={v}' contains whitespace or '=' in the key"
            )));
        }
        if !seen.insert(k.clone()) {
            return Err(Error::invalid(format!("duplicate metadata key '{k}'")));
        }
        if !manifest.is_empty() {
            manifest.push(' ');
        }
        manifest.push_str(k);
        manifest.push('=');
        manifest.push_str(v);
    }
    let mut seen_names = std::collections::HashSet::new();
    for (name, _) in &container.tensors {
        if !valid_key(name) {
            return Err(Error::invalid(format!("invalid tensor name '{name}'")));
        }
        if !seen_names.insert(name.clone()) {
            return Err(Error::invalid(format!("duplicate tensor name '{name}'")));
        }
        if !manifest.is_empty() {
            manifest.push(' ');
        }
        manifest.push_str(name);
    }

    let file = File::create(path).map_err(|e| Error::io(&display, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(&display, e);
    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(manifest.as_bytes()).map_err(io_err)?;
    w.write_all(b"\n").map_err(io_err)?;
    for (_, tensor) in &container.tensors {
        w.write_all(&(tensor.rank() as u64).to_le_bytes())
            .map_err(io_err)?;
        for &extent in tensor.shape() {
            w.write_all(&(extent as u64).to_le_bytes()).map_err(io_err)?;
        }
        for &v in tensor.data() {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

pub fn read_container(path: &Path) -> Result<Container> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(&display, e))?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, &display, "magic")?;
    if &magic != MAGIC {
        return Err(Error::format(&display, "bad magic, not a BBR1 container"));
    }

    // Manifest line: read byte-wise until newline, bounded.
    let mut manifest = Vec::new();
    loop {
        let mut b = [0u8; 1];
        read_exact(&mut r, &mut b, &display, "manifest")?;
        if b[0] == b'\n' {
            break;
        }
        manifest.push(b[0]);
        if manifest.len() > MAX_MANIFEST_BYTES {
            return Err(Error::format(&display, "manifest line exceeds 1 MiB"));
        }
    }
    let manifest = String::from_utf8(manifest)
        .map_err(|_| Error::format(&display, "manifest is not valid UTF-8"))?;

    let mut container = Container::new();
    let mut names: Vec<String> = Vec::new();
    let mut keys = std::collections::HashSet::new();
    let mut in_meta = true;
    for token in manifest.split(' ').filter(|t| !t.is_empty()) {
        if let Some((k, v)) = token.split_once('=') {
            if !in_meta {
                return Err(Error::format(
                    &display,
                    format!("metadata token '{token}' after tensor names"),
                ));
            }
            if k.is_empty() || v.is_empty() {
                return Err(Error::format(&display, format!("malformed token '{token}'")));
            }
            if !keys.insert(k.to_string()) {
                return Err(Error::format(&display, format!("duplicate metadata key '{k}'")));
            }
            container.push_meta(k, v);
        } else {
            in_meta = false;
            if names.contains(&token.to_string()) {
                return Err(Error::format(
                    &display,
                    format!("duplicate tensor name '{token}'"),
                ));
            }
            names.push(token.to_string());
        }
    }

    for name in names {
        let rank = read_u64(&mut r, &display, "tensor rank")?;
        if rank > MAX_RANK {
            return Err(Error::format(
                &display,
                format!("tensor '{name}' claims rank {rank} (cap {MAX_RANK})"),
            ));
        }
        let mut shape = Vec::with_capacity(rank as usize);
        let mut elements: u64 = 1;
        for _ in 0..rank {
            let extent = read_u64(&mut r, &display, "tensor extent")?;
            elements = elements.saturating_mul(extent.max(1));
            if elements > MAX_ELEMENTS || extent > MAX_ELEMENTS {
                return Err(Error::format(
                    &display,
                    format!("tensor '{name}' claims {elements}+ elements (cap {MAX_ELEMENTS})"),
                ));
            }
            shape.push(extent as usize);
        }
        let count: usize = shape.iter().product();
        let mut data = vec![0.0f64; count];
        let mut buf = [0u8; 8];
        for v in data.iter_mut() {
            read_exact(&mut r, &mut buf, &display, "tensor values")?;
            *v = f64::from_le_bytes(buf);
        }
        let tensor = Tensor::new(shape, data).map_err(|e| {
            Error::format(&display, format!("tensor '{name}' invalid: {e}"))
        })?;
        container.push_tensor(name, tensor);
    }

    // Anything left over means the writer and manifest disagree.
    let mut trailing = [0u8; 1];
    match r.read(&mut trailing) {
        Ok(0) => Ok(container),
        Ok(_) => Err(Error::format(&display, "trailing bytes after last tensor")),
        Err(e) => Err(Error::io(&display, e)),
    }
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], path: &str, what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::format(path, format!("truncated while reading {what}"))
        } else {
            Error::io(path, e)
        }
    })
}

fn read_u64(r: &mut impl Read, path: &str, what: &str) -> Result<u64> {
    let mut buf = [0u8; 8];
    read_exact(r, &mut buf, path, what)?;
    Ok(u64::from_le_bytes(buf))
}
