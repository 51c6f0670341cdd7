//! Deterministic file output: CSV with a header row and LF endings, JSON
//! summaries, shortest round-trip float formatting.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

/// Shortest representation that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub struct Csv {
    path: PathBuf,
    out: BufWriter<File>,
    columns: usize,
}

impl Csv {
    pub fn create(dir: &Path, name: &str, header: &[&str]) -> Result<Self> {
        let path = dir.join(name);
        let file = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
        let mut csv = Csv { path, out: BufWriter::new(file), columns: header.len() };
        csv.raw(header.iter().map(|s| s.to_string()))?;
        Ok(csv)
    }

    pub fn row<I: IntoIterator<Item = String>>(&mut self, fields: I) -> Result<()> {
        self.raw(fields)
    }

    fn raw<I: IntoIterator<Item = String>>(&mut self, fields: I) -> Result<()> {
        let line: Vec<String> = fields.into_iter().collect();
        debug_assert_eq!(line.len(), self.columns, "row width in {}", self.path.display());
        writeln!(self.out, "{}", line.join(",")).with_context(|| format!("cannot write {}", self.path.display()))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().with_context(|| format!("cannot write {}", self.path.display()))
    }
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(dir, name, &text)
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0, -2.5e-13, 1e300, 0.30000000000000004, 6.02214076e23] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(0.1), "0.1");
        assert_eq!(num(1.0), "1.0");
        assert_eq!(opt(None), "");
    }
}
