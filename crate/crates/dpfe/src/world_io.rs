//! Finite oracle worlds as CSV rows `x,z,y,f,probability`.

use std::path::Path;

use dpfe_core::metrics::oracle::{DiscreteJoint, JointEntry};

use crate::error::{read_text, Error, Result};

pub const HEADER: [&str; 5] = ["x", "z", "y", "f", "probability"];

pub fn world_to_csv(world: &DiscreteJoint) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HEADER).expect("in-memory write");
    for e in world.entries() {
        w.write_record([
            e.x.to_string(),
            e.z.to_string(),
            e.y.to_string(),
            world.feature_of()[e.x].to_string(),
            e.probability.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}

pub fn parse_world(text: &str, path: &Path) -> Result<DiscreteJoint> {
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
    let mut entries = Vec::new();
    let mut feature_of: Vec<Option<usize>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let int = |k: usize| -> Result<usize> {
            record[k]
                .trim()
                .parse()
                .map_err(|_| err(line, format!("{} = '{}' is not an index", HEADER[k], &record[k])))
        };
        let (x, z, y, f) = (int(0)?, int(1)?, int(2)?, int(3)?);
        let probability: f64 = record[4]
            .trim()
            .parse()
            .map_err(|_| err(line, format!("probability = '{}' is not a real number", &record[4])))?;
        if feature_of.len() <= x {
            feature_of.resize(x + 1, None);
        }
        match feature_of[x] {
            Some(prev) if prev != f => {
                return Err(err(line, format!("x={x} maps to both f={prev} and f={f}")));
            }
            _ => feature_of[x] = Some(f),
        }
        entries.push(JointEntry { x, z, y, probability });
    }
    let feature_of = feature_of
        .into_iter()
        .enumerate()
        .map(|(x, f)| f.ok_or_else(|| Error::format(path, format!("outcome x={x} never appears"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(DiscreteJoint::new(entries, feature_of)?)
}

pub fn read_world(path: &Path) -> Result<DiscreteJoint> {
    parse_world(&read_text(path)?, path)
}
