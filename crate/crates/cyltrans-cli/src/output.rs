//! Artifact writers: JSON manifests and RFC-4180 CSV tables.

use anyhow::{Context, Result};
use cyltrans::geom::C2;
use cyltrans::transform::{GeodesicPath, PathDomain};
use serde::Serialize;
use std::path::{Path, PathBuf};

/// Writes artifacts into one directory and remembers their names.
pub struct ArtifactWriter {
    dir: PathBuf,
    written: Vec<String>,
}

impl ArtifactWriter {
    /// Creates the directory if needed.
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(ArtifactWriter { dir: dir.to_path_buf(), written: Vec::new() })
    }

    /// The directory.
    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Names written so far.
    pub fn written(&self) -> &[String] {
        &self.written
    }

    /// Pretty JSON.
    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)?;
        self.text(name, &text)
    }

    /// Raw text.
    pub fn text(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(name.to_string());
        Ok(())
    }

    /// A CSV table with a header row.
    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("csv buffer: {e}"))?;
        self.text(name, &String::from_utf8(bytes)?)
    }
}

/// Shortest round-trip formatting of a float.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}

fn z_cols(z: &C2) -> [String; 4] {
    [num(z[0].re), num(z[0].im), num(z[1].re), num(z[1].im)]
}

/// Header of node tables.
pub const NODE_HEADER: [&str; 9] = ["level", "t", "node", "param_a", "param_b", "re_z1", "im_z1", "re_z2", "im_z2"];

/// Per-time node table of a path.
pub fn path_rows(path: &GeodesicPath) -> Vec<Vec<String>> {
    let params: Vec<[f64; 2]> = match path.domain {
        PathDomain::Polar { grid } => (0..grid.len()).map(|i| grid.xi(i / grid.m, i % grid.m)).collect(),
        PathDomain::Line { grid } => (0..grid.len()).map(|i| [grid.x(i), 0.0]).collect(),
    };
    let mut rows = Vec::new();
    for (l, lv) in path.levels.iter().enumerate() {
        for (i, z) in lv.iter().enumerate() {
            let mut r = vec![l.to_string(), num(path.time(l)), i.to_string(), num(params[i][0]), num(params[i][1])];
            r.extend(z_cols(z));
            rows.push(r);
        }
    }
    rows
}

/// Nodal Hamiltonian table.
pub fn h_rows(path: &GeodesicPath) -> Vec<Vec<String>> {
    path.h.iter().enumerate().map(|(i, v)| vec![i.to_string(), num(*v)]).collect()
}

/// Writes a path as a JSON manifest, a node CSV and an `h` CSV.
pub fn write_path(w: &mut ArtifactWriter, stem: &str, path: &GeodesicPath) -> Result<()> {
    w.json(&format!("{stem}.json"), path)?;
    w.csv(&format!("{stem}_nodes.csv"), &NODE_HEADER, &path_rows(path))?;
    w.csv(&format!("{stem}_h.csv"), &["node", "h"], &h_rows(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_quotes_per_rfc4180() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = ArtifactWriter::new(dir.path()).unwrap();
        w.csv("t.csv", &["a", "b"], &[vec!["x,y".into(), "say \"hi\"".into()]]).unwrap();
        let text = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
        assert_eq!(text, "a,b\r\n\"x,y\",\"say \"\"hi\"\"\"\r\n");
        assert_eq!(w.written(), ["t.csv"]);
    }
}
