//! Plain-text cache of eigen-data keyed by weight and truncation.

use super::Eigenform;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Version string of the eigen-data computation; part of every checksum.
pub const FORMS_VERSION: &str = "qvar-forms-1";

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed cache file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
}

/// Outcome of a cache lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheStatus {
    /// Valid file found and used.
    Cached,
    /// No file present.
    Missing,
    /// File present but its version or checksum did not match.
    Stale,
}

pub fn cache_path(dir: &Path, k: u32, n: usize) -> PathBuf {
    dir.join(format!("eigen_k{k}_N{n}.txt"))
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn body(forms: &[Eigenform], n: usize) -> String {
    let mut s = String::new();
    let row = |name: &str, vals: Vec<f64>| {
        let mut line = name.to_string();
        for v in vals {
            line.push(' ');
            line.push_str(&fmt(v));
        }
        line
    };
    writeln!(s, "{}", row("l_sym2", forms.iter().map(|f| f.l_sym2).collect())).unwrap();
    writeln!(s, "{}", row("a1_sq", forms.iter().map(|f| f.a1_sq).collect())).unwrap();
    for m in 1..=n {
        writeln!(
            s,
            "{}",
            row(&m.to_string(), forms.iter().map(|f| f.lambda(m)).collect())
        )
        .unwrap();
    }
    s
}

fn checksum(header: &str, body: &str) -> String {
    let mut h = Sha256::new();
    h.update(FORMS_VERSION.as_bytes());
    h.update(header.as_bytes());
    h.update(body.as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn header(k: u32, n: usize, dim: usize) -> String {
    format!("version {FORMS_VERSION}\nk {k}\nN {n}\ndim {dim}\n")
}

/// Writes eigen-data for weight k truncated at n.
pub fn save_eigendata(dir: &Path, k: u32, n: usize, forms: &[Eigenform]) -> Result<PathBuf, CacheError> {
    std::fs::create_dir_all(dir)?;
    let head = header(k, n, forms.len());
    let b = body(forms, n);
    let sum = checksum(&head, &b);
    let path = cache_path(dir, k, n);
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, format!("{head}checksum {sum}\n{b}"))?;
    std::fs::rename(&tmp, &path)?;
    Ok(path)
}

/// Reads eigen-data if a valid file exists; a stale or missing file yields `None`.
pub fn load_eigendata(dir: &Path, k: u32, n: usize) -> Result<(Option<Vec<Eigenform>>, CacheStatus), CacheError> {
    let path = cache_path(dir, k, n);
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((None, CacheStatus::Missing)),
        Err(e) => return Err(e.into()),
    };
    let bad = |reason: &str| CacheError::Malformed {
        path: path.clone(),
        reason: reason.to_string(),
    };
    let mut lines = text.splitn(6, '\n');
    let mut field = |name: &str| -> Result<String, CacheError> {
        let line = lines.next().ok_or_else(|| bad("truncated header"))?;
        line.strip_prefix(name)
            .and_then(|r| r.strip_prefix(' '))
            .map(str::to_string)
            .ok_or_else(|| bad(&format!("expected {name}")))
    };
    let version = field("version")?;
    let kk: u32 = field("k")?.parse().map_err(|_| bad("k"))?;
    let nn: usize = field("N")?.parse().map_err(|_| bad("N"))?;
    let dim: usize = field("dim")?.parse().map_err(|_| bad("dim"))?;
    let sum = field("checksum")?;
    let b = lines.next().unwrap_or("");
    if version != FORMS_VERSION || kk != k || nn != n || sum != checksum(&header(kk, nn, dim), b) {
        return Ok((None, CacheStatus::Stale));
    }
    let mut rows = b.lines();
    let mut parse_row = |name: &str| -> Result<Vec<f64>, CacheError> {
        let line = rows.next().ok_or_else(|| bad("missing row"))?;
        let mut it = line.split(' ');
        if it.next() != Some(name) {
            return Err(bad(&format!("expected row {name}")));
        }
        let vals = it
            .map(|v| v.parse::<f64>().map_err(|_| bad("number")))
            .collect::<Result<Vec<_>, _>>()?;
        if vals.len() != dim {
            return Err(bad("row width"));
        }
        Ok(vals)
    };
    let l = parse_row("l_sym2")?;
    let a = parse_row("a1_sq")?;
    let mut forms: Vec<Eigenform> = (0..dim)
        .map(|i| Eigenform {
            weight: k,
            lambda: Vec::with_capacity(n),
            l_sym2: l[i],
            a1_sq: a[i],
            conjugacy_id: i,
        })
        .collect();
    for m in 1..=n {
        for (f, v) in forms.iter_mut().zip(parse_row(&m.to_string())?) {
            f.lambda.push(v);
        }
    }
    Ok((Some(forms), CacheStatus::Cached))
}
