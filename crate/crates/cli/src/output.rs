//! Plain-text report writing: every output file starts with a comment header
//! embedding the serialized run configuration and any content hashes, then
//! carries whitespace-separated tables that external plotting can consume.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rfgp_core::error::{Error, Result};

pub struct Report {
    buf: String,
}

impl Report {
    pub fn new(command: &str, config_json: &str) -> Self {
        let mut buf = String::new();
        let _ = writeln!(buf, "# rfgp {command}");
        let _ = writeln!(buf, "# config = {config_json}");
        Self { buf }
    }

    pub fn meta(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        let _ = writeln!(self.buf, "# {key} = {value}");
        self
    }

    pub fn comment(&mut self, text: &str) -> &mut Self {
        let _ = writeln!(self.buf, "# {text}");
        self
    }

    pub fn columns(&mut self, names: &[&str]) -> &mut Self {
        let _ = writeln!(self.buf, "# columns: {}", names.join(" "));
        self
    }

    pub fn row(&mut self, cells: &[String]) -> &mut Self {
        let _ = writeln!(self.buf, "{}", cells.join(" "));
        self
    }

    pub fn blank(&mut self) -> &mut Self {
        let _ = writeln!(self.buf);
        self
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent.display(), e))?;
            }
        }
        fs::write(path, &self.buf).map_err(|e| Error::io(path.display(), e))
    }
}

pub fn fmt(v: f64) -> String {
    format!("{v:.12e}")
}

/// Parse "lo:hi:count" (inclusive linspace) or a comma-separated list; values
/// are log10 units and are exponentiated here.
pub fn parse_log10_grid(text: &str) -> Result<Vec<f64>> {
    let raw = parse_linspace(text)?;
    Ok(raw.into_iter().map(|v| 10f64.powf(v)).collect())
}

/// Parse "lo:hi:count" or comma list without exponentiation.
pub fn parse_linspace(text: &str) -> Result<Vec<f64>> {
    let bad = |why: &str| Error::InvalidInput(format!("grid '{text}': {why}"));
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected lo:hi:count"));
        }
        let lo: f64 = parts[0].parse().map_err(|_| bad("lo is not numeric"))?;
        let hi: f64 = parts[1].parse().map_err(|_| bad("hi is not numeric"))?;
        let count: usize = parts[2].parse().map_err(|_| bad("count is not an integer"))?;
        if count == 0 {
            return Err(bad("count must be >= 1"));
        }
        if count == 1 {
            return Ok(vec![lo]);
        }
        Ok((0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect())
    } else {
        text.split(',')
            .map(|c| {
                c.trim()
                    .parse::<f64>()
                    .map_err(|_| bad("value is not numeric"))
            })
            .collect()
    }
}

/// Parse "lo:hi" bounds.
pub fn parse_bounds(text: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 2 {
        return Err(Error::InvalidInput(format!(
            "bounds '{text}': expected lo:hi"
        )));
    }
    let lo: f64 = parts[0]
        .parse()
        .map_err(|_| Error::InvalidInput(format!("bounds '{text}': lo is not numeric")))?;
    let hi: f64 = parts[1]
        .parse()
        .map_err(|_| Error::InvalidInput(format!("bounds '{text}': hi is not numeric")))?;
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linspace_and_lists() {
        assert_eq!(parse_linspace("0:2:3").unwrap(), vec![0.0, 1.0, 2.0]);
        assert_eq!(parse_linspace("1.5").unwrap(), vec![1.5]);
        assert_eq!(parse_linspace("1,2,3").unwrap(), vec![1.0, 2.0, 3.0]);
        assert!(parse_linspace("1:2").is_err());
        assert!(parse_linspace("a,b").is_err());
        let g = parse_log10_grid("-1:1:3").unwrap();
        assert!((g[0] - 0.1).abs() < 1e-12 && (g[2] - 10.0).abs() < 1e-12);
    }
}
