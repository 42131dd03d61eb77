//! Manifest files and delimited matrix IO.
//!
//! View files store one sample per line and one feature per column; they are
//! transposed on load into the `d × N` layout used by the library.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use stcca::MultiViewDataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub views: Vec<PathBuf>,
    pub labels: PathBuf,
    #[serde(default)]
    pub names: Option<Vec<String>>,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    #[serde(default)]
    pub header: bool,
}

fn default_delimiter() -> char {
    ','
}

impl Manifest {
    /// Reads a manifest; relative paths are resolved against its directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read manifest {}", path.display()))?;
        let mut m: Self =
            toml::from_str(&text).with_context(|| format!("invalid manifest {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for v in &mut m.views {
            *v = base.join(&*v);
        }
        m.labels = base.join(&m.labels);
        if m.views.is_empty() {
            bail!("manifest {} lists no views", path.display());
        }
        if !m.delimiter.is_ascii() {
            bail!("delimiter {:?} is not ASCII", m.delimiter);
        }
        Ok(m)
    }
}

/// Rows-as-samples numeric table.
pub fn read_matrix(path: &Path, delimiter: char, header: bool) -> anyhow::Result<DMatrix<f64>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter as u8)
        .has_headers(header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut width = None;
    let mut values = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            anyhow!("{}:{line}: {e}", path.display())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => bail!(
                "{}:{line}: expected {w} columns, found {}",
                path.display(),
                record.len()
            ),
            _ => {}
        }
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                anyhow!("{}:{line}: column {}: {cell:?} is not a number", path.display(), col + 1)
            })?;
            values.push(v);
        }
        rows += 1;
    }
    let Some(cols) = width else {
        bail!("{}: no data rows", path.display());
    };
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

/// One non-negative integer per line; blank lines are skipped.
pub fn read_labels(path: &Path) -> anyhow::Result<Vec<usize>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut labels = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("{}:{}: read error", path.display(), i + 1))?;
        let s = line.trim();
        if s.is_empty() {
            continue;
        }
        let v: usize = s.parse().map_err(|_| {
            anyhow!("{}:{}: {s:?} is not a non-negative integer label", path.display(), i + 1)
        })?;
        labels.push(v);
    }
    Ok(labels)
}

pub fn load_dataset(manifest_path: &Path) -> anyhow::Result<MultiViewDataset> {
    let m = Manifest::load(manifest_path)?;
    let labels = read_labels(&m.labels)?;
    let mut views = Vec::with_capacity(m.views.len());
    for path in &m.views {
        let rows = read_matrix(path, m.delimiter, m.header)?;
        if rows.nrows() != labels.len() {
            bail!(
                "{}: {} samples, but {} has {} labels",
                path.display(),
                rows.nrows(),
                m.labels.display(),
                labels.len()
            );
        }
        views.push(rows.transpose());
    }
    let ds = MultiViewDataset::new(views, labels)?;
    match m.names {
        Some(names) => Ok(ds.with_names(names)?),
        None => Ok(ds),
    }
}

/// Writes `x` with one line per row.
pub fn write_matrix(path: &Path, x: &DMatrix<f64>, header: Option<&[String]>) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))?;
    if let Some(h) = header {
        w.write_record(h)?;
    }
    for row in x.row_iter() {
        w.write_record(row.iter().map(|v| format_float(*v)))?;
    }
    w.flush()?;
    Ok(())
}

/// Shortest representation that parses back to the same value.
pub fn format_float(v: f64) -> String {
    format!("{v:?}")
}

/// Saves `ds` as comma-separated files next to a manifest at `manifest_path`.
pub fn save_dataset(ds: &MultiViewDataset, manifest_path: &Path) -> anyhow::Result<()> {
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut views = Vec::new();
    for (p, x) in ds.views().iter().enumerate() {
        let name = PathBuf::from(format!("view{p}.csv"));
        write_matrix(&dir.join(&name), &x.transpose(), None)?;
        views.push(name);
    }
    let label_name = PathBuf::from("labels.txt");
    let mut f = File::create(dir.join(&label_name))?;
    for l in ds.labels() {
        writeln!(f, "{l}")?;
    }
    let manifest = Manifest {
        views,
        labels: label_name,
        names: ds.names().map(|n| n.to_vec()),
        delimiter: ',',
        header: false,
    };
    std::fs::write(manifest_path, toml::to_string(&manifest)?)?;
    Ok(())
}
