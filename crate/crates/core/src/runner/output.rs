//! CSV tables, manifests and atomic file writes.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::numeric::format_hex_float;

/// A CSV table with a fixed column order. Rows are buffered and written in
/// insertion order.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
    hex: bool,
}

impl Table {
    pub fn new(header: &[&'static str], hex: bool) -> Self {
        Table {
            header: header.to_vec(),
            rows: Vec::new(),
            hex,
        }
    }

    pub fn float(&self, x: f64) -> String {
        if self.hex {
            format_hex_float(x)
        } else {
            format!("{x}")
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("fields are UTF-8")
    }
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

#[derive(Clone, Debug, Serialize)]
pub struct RowSeed {
    pub row: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: &'static str,
    pub config: serde_json::Value,
    pub threads: Option<usize>,
    pub hex_floats: bool,
    pub wall_time_seconds: f64,
    pub exit_code: i32,
    pub csv: Option<String>,
    pub rows: usize,
    pub row_seeds: Vec<RowSeed>,
    pub failures: Vec<String>,
    pub warnings: Vec<String>,
    pub diagnostics: serde_json::Map<String, serde_json::Value>,
}
