//! Dataset CSV (`x0,…,x{d-1},z,y`) with a JSON manifest beside it.

use std::path::{Path, PathBuf};

use dpfe_core::data::{Dataset, DatasetManifest, Provenance, SplitFractions};
use dpfe_core::Tensor2;

use crate::error::{read_text, write_text, Error, Result};

/// `data/train.csv` → `data/train.manifest.json`.
pub fn manifest_path(path: &Path) -> PathBuf {
    path.with_extension("manifest.json")
}

pub fn dataset_to_csv(dataset: &Dataset) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let d = dataset.input_dim();
    let mut header: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    header.push("z".into());
    header.push("y".into());
    w.write_record(&header).expect("in-memory write");
    for (i, row) in dataset.x().row_iter().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        rec.push(dataset.z()[i].to_string());
        rec.push(dataset.y()[i].to_string());
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}

pub fn write_dataset(path: &Path, dataset: &Dataset, manifest: &DatasetManifest) -> Result<()> {
    write_text(path, &dataset_to_csv(dataset))?;
    let mut json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    json.push('\n');
    write_text(&manifest_path(path), &json)
}

/// Parses dataset CSV text. Without a manifest the class counts are taken
/// from the largest label seen.
pub fn parse_dataset(
    text: &str,
    manifest: Option<&DatasetManifest>,
    path: &Path,
) -> Result<(Dataset, DatasetManifest)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let header = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let cols: Vec<&str> = header.iter().collect();
    if cols.len() < 3 || cols[cols.len() - 2] != "z" || cols[cols.len() - 1] != "y" {
        return Err(parse_err(1, "header must be x0,...,x{d-1},z,y".into()));
    }
    let d = cols.len() - 2;
    if let Some((i, c)) = cols[..d].iter().enumerate().find(|(i, c)| **c != format!("x{i}")) {
        return Err(parse_err(1, format!("column {i} is '{c}', expected 'x{i}'")));
    }
    let mut values = Vec::new();
    let mut z = Vec::new();
    let mut y = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        for (i, field) in record.iter().take(d).enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(line, format!("x{i} = '{field}' is not a real number")))?;
            values.push(v);
        }
        let label = |k: usize, name: &str| -> Result<usize> {
            record[k]
                .trim()
                .parse()
                .map_err(|_| parse_err(line, format!("{name} = '{}' is not a label", &record[k])))
        };
        z.push(label(d, "z")?);
        y.push(label(d + 1, "y")?);
    }
    if z.is_empty() {
        return Err(parse_err(1, "no samples".into()));
    }
    let n = z.len();
    let manifest = match manifest {
        Some(m) => {
            if m.sample_count != n || m.input_dim != d {
                return Err(Error::format(
                    path,
                    format!(
                        "manifest declares {}x{} but the file holds {n}x{d}",
                        m.sample_count, m.input_dim
                    ),
                ));
            }
            m.clone()
        }
        None => DatasetManifest {
            sample_count: n,
            input_dim: d,
            primary_classes: z.iter().max().map_or(2, |m| (m + 1).max(2)),
            sensitive_classes: y.iter().max().map_or(2, |m| (m + 1).max(2)),
            seed: None,
            fractions: SplitFractions::default(),
            provenance: Provenance::External,
        },
    };
    manifest.validate()?;
    let x = Tensor2::from_vec(n, d, values)?;
    let dataset = Dataset::new(x, z, y, manifest.primary_classes, manifest.sensitive_classes)?;
    Ok((dataset, manifest))
}

/// Reads a dataset and, when present, its sidecar manifest.
pub fn read_dataset(path: &Path) -> Result<(Dataset, DatasetManifest)> {
    let text = read_text(path)?;
    let mpath = manifest_path(path);
    let manifest = if mpath.exists() {
        let m: DatasetManifest = serde_json::from_str(&read_text(&mpath)?).map_err(|e| Error::format(&mpath, e))?;
        Some(m)
    } else {
        None
    };
    parse_dataset(&text, manifest.as_ref(), path)
}
