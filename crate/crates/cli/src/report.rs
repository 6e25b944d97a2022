//! Report objects and their JSON and CSV files.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub scenario: String,
    pub kind: String,
    pub seed: Option<u64>,
    pub passed: bool,
    pub failures: Vec<String>,
    pub result: Value,
    pub tables: BTreeMap<String, Table>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
    /// Both the JSON report and the CSV tables.
    All,
}

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cannot serialize report: {0}")]
    Serialize(#[from] serde_json::Error),
}

/// Pretty JSON with every float written as `d.dddddddddddddddde±x`, which is
/// 17 significant digits and round-trips exactly.
pub struct Sig17<'a>(PrettyFormatter<'a>);

impl Default for Sig17<'_> {
    fn default() -> Self {
        Sig17(PrettyFormatter::with_indent(b"  "))
    }
}

macro_rules! delegate {
    ($($name:ident($($arg:ident: $ty:ty),*)),* $(,)?) => {
        $(fn $name<W: ?Sized + Write>(&mut self, w: &mut W $(, $arg: $ty)*) -> io::Result<()> {
            self.0.$name(w $(, $arg)*)
        })*
    };
}

impl Formatter for Sig17<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        write!(w, "{}", sig17(v))
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        write!(w, "{}", sig17(v as f64))
    }

    delegate!(
        begin_array(),
        end_array(),
        begin_array_value(first: bool),
        end_array_value(),
        begin_object(),
        end_object(),
        begin_object_key(first: bool),
        begin_object_value(),
        end_object_value(),
    );
}

pub fn sig17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, serde_json::Error> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17::default());
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(buf)
}

pub fn table_csv(t: &Table) -> String {
    let mut out = t.columns.join(",");
    out.push('\n');
    for row in &t.rows {
        let cells: Vec<String> = row.iter().map(|&v| sig17(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn write_file(path: PathBuf, bytes: &[u8]) -> Result<PathBuf, EmitError> {
    std::fs::write(&path, bytes).map_err(|source| EmitError::Write { path: path.clone(), source })?;
    Ok(path)
}

/// Writes `<scenario>.json` and/or `<scenario>_<table>.csv` into `dir`.
pub fn emit_report(report: &Report, dir: &Path, format: Format) -> Result<Vec<PathBuf>, EmitError> {
    std::fs::create_dir_all(dir).map_err(|source| EmitError::Write {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    if matches!(format, Format::Json | Format::All) {
        let path = dir.join(format!("{}.json", report.scenario));
        written.push(write_file(path, &to_json_bytes(report)?)?);
    }
    if matches!(format, Format::Csv | Format::All) {
        for (name, table) in &report.tables {
            let path = dir.join(format!("{}_{name}.csv", report.scenario));
            written.push(write_file(path, table_csv(table).as_bytes())?);
        }
    }
    Ok(written)
}
