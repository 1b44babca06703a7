//! Trade-off curve CSV, reals at 10 significant digits.

use std::path::Path;

use dpfe_core::tradeoff::{CurvePoint, TradeoffCurve};

use crate::error::{read_text, write_text, Error, Result};

pub const HEADER: [&str; 7] = [
    "ratio",
    "accuracy",
    "lrp",
    "rank_mean",
    "rank_std",
    "one_nn_error",
    "seed_count",
];

pub fn format_real(v: f64) -> String {
    format!("{v:.9e}")
}

/// The value a real takes after a write/parse cycle.
pub fn round_real(v: f64) -> f64 {
    format_real(v).parse().expect("formatted real parses")
}

pub fn curve_to_csv(curve: &TradeoffCurve) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HEADER).expect("in-memory write");
    for p in &curve.points {
        let mut rec: Vec<String> = [p.ratio, p.accuracy, p.lrp, p.rank_mean, p.rank_std, p.one_nn_error]
            .iter()
            .map(|&v| format_real(v))
            .collect();
        rec.push(p.seed_count.to_string());
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}

pub fn parse_curve(text: &str, path: &Path) -> Result<TradeoffCurve> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let header = reader.headers().map_err(|e| err(1, e.to_string()))?;
    if header.iter().ne(HEADER) {
        return Err(err(1, format!("header must be {}", HEADER.join(","))));
    }
    let mut points = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let mut reals = [0.0; 6];
        for (k, slot) in reals.iter_mut().enumerate() {
            *slot = record[k]
                .trim()
                .parse()
                .map_err(|_| err(line, format!("{} = '{}' is not a real number", HEADER[k], &record[k])))?;
        }
        let seed_count = record[6]
            .trim()
            .parse()
            .map_err(|_| err(line, format!("seed_count = '{}' is not a count", &record[6])))?;
        let [ratio, accuracy, lrp, rank_mean, rank_std, one_nn_error] = reals;
        points.push(CurvePoint {
            ratio,
            accuracy,
            lrp,
            rank_mean,
            rank_std,
            one_nn_error,
            seed_count,
        });
    }
    if points.is_empty() {
        return Err(err(1, "curve has no points".into()));
    }
    Ok(TradeoffCurve { points })
}

pub fn write_curve(path: &Path, curve: &TradeoffCurve) -> Result<()> {
    write_text(path, &curve_to_csv(curve))
}

pub fn read_curve(path: &Path) -> Result<TradeoffCurve> {
    parse_curve(&read_text(path)?, path)
}
