//! Report formatting shared by the library and the command-line front end.
//!
//! JSON reports are wrapped in [`Report`], which carries the schema version
//! and the configuration that produced them. Every float, in JSON and CSV
//! alike, is printed with 17 significant digits so that it round-trips.

use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::{Error, Result};

/// Version of the JSON report layout.
pub const SCHEMA_VERSION: u32 = 1;

/// A float with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// Pretty JSON with floats in 17-significant-digit exponent form. Non-finite
/// floats become `null`, as in `serde_json`.
struct SeventeenDigits<'a>(PrettyFormatter<'a>);

impl Formatter for SeventeenDigits<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            w.write_all(fmt_f64(value).as_bytes())
        } else {
            w.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Serialize `value` as pretty JSON with 17-digit floats.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SeventeenDigits(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

/// A versioned JSON report: `{ "schema": 1, "command": …, "config": …, "result": … }`.
#[derive(Debug, Clone, Serialize)]
pub struct Report<'a, C: Serialize, R: Serialize> {
    pub schema: u32,
    pub command: &'a str,
    pub config: &'a C,
    pub result: &'a R,
}

impl<'a, C: Serialize, R: Serialize> Report<'a, C, R> {
    pub fn new(command: &'a str, config: &'a C, result: &'a R) -> Self {
        Report { schema: SCHEMA_VERSION, command, config, result }
    }
}

/// Which report files to write.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
    Both,
}

impl OutputFormat {
    pub fn json(self) -> bool {
        matches!(self, OutputFormat::Json | OutputFormat::Both)
    }

    pub fn csv(self) -> bool {
        matches!(self, OutputFormat::Csv | OutputFormat::Both)
    }
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            "both" => Ok(OutputFormat::Both),
            _ => Err(Error::Usage(format!("--format {s}: expected json, csv or both"))),
        }
    }
}

impl std::fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OutputFormat::Json => "json",
            OutputFormat::Csv => "csv",
            OutputFormat::Both => "both",
        })
    }
}

/// CSV tables attached to a report, as `(file suffix, writer)` pairs.
pub type CsvTable<'a> = (&'a str, Box<dyn Fn(&mut dyn Write) -> io::Result<()> + 'a>);

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

/// Write `<stem>.json` and the CSV tables `<stem>_<suffix>.csv` into `dir`
/// according to `format`; returns the paths written. The JSON file is always
/// written when there are no tables.
pub fn emit_report<C: Serialize, R: Serialize>(
    dir: &Path,
    stem: &str,
    report: &Report<'_, C, R>,
    csv: &[CsvTable<'_>],
    format: OutputFormat,
) -> Result<Vec<PathBuf>> {
    emit_rendered(dir, stem, &to_json(report)?, csv, format)
}

/// [`emit_report`] with the JSON already rendered.
pub fn emit_rendered(dir: &Path, stem: &str, json: &str, csv: &[CsvTable<'_>], format: OutputFormat) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    if format.json() || csv.is_empty() {
        let path = dir.join(format!("{stem}.json"));
        std::fs::write(&path, json).map_err(io_err(&path))?;
        written.push(path);
    }
    if format.csv() {
        for (suffix, table) in csv {
            let path = dir.join(format!("{stem}_{suffix}.csv"));
            let file = std::fs::File::create(&path).map_err(io_err(&path))?;
            let mut w = io::BufWriter::new(file);
            table(&mut w).and_then(|_| w.flush()).map_err(io_err(&path))?;
            written.push(path);
        }
    }
    Ok(written)
}
