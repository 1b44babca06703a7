//! Versioned JSON checkpoints. Reals are written in shortest round-trip form
//! and parsed exactly, so save/load reproduces every parameter bit for bit.

use std::path::Path;

use dpfe_core::nn::{Dense, Layer, Network, SplitModel, Standardize};
use serde::{Deserialize, Serialize};

use crate::error::{read_text, write_text, Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Network(Network),
    Split(SplitModel),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum Stored {
    Network {
        layers: Vec<Layer>,
    },
    Split {
        extractor: Vec<Layer>,
        predictor: Vec<Layer>,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    schema_version: u32,
    model: Stored,
}

fn checked(layers: Vec<Layer>) -> dpfe_core::Result<Network> {
    let layers = layers
        .into_iter()
        .map(|l| match l {
            Layer::Dense(d) => Ok(Layer::Dense(Dense::new(d.in_dim, d.out_dim, d.weights, d.bias)?)),
            Layer::Standardize(s) => {
                if s.mean.len() != s.var.len() {
                    return Err(dpfe_core::Error::Shape(
                        "standardize mean and variance differ in length".into(),
                    ));
                }
                if s.mean.iter().chain(&s.var).any(|v| !v.is_finite()) || s.var.iter().any(|&v| v < 0.0) {
                    return Err(dpfe_core::Error::Validation(
                        "invalid standardization statistics".into(),
                    ));
                }
                Ok(Layer::Standardize(Standardize {
                    mean: s.mean,
                    var: s.var,
                }))
            }
            other => Ok(other),
        })
        .collect::<dpfe_core::Result<Vec<_>>>()?;
    Network::new(layers)
}

impl Model {
    pub fn to_json(&self) -> String {
        let model = match self {
            Model::Network(n) => Stored::Network {
                layers: n.layers().to_vec(),
            },
            Model::Split(m) => Stored::Split {
                extractor: m.extractor().layers().to_vec(),
                predictor: m.predictor().layers().to_vec(),
            },
        };
        let doc = Document {
            schema_version: SCHEMA_VERSION,
            model,
        };
        let mut text = serde_json::to_string_pretty(&doc).expect("checkpoint serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let doc: Document = serde_json::from_str(text).map_err(|e| Error::format(path, e))?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(Error::format(
                path,
                format!("schema version {} (expected {SCHEMA_VERSION})", doc.schema_version),
            ));
        }
        Ok(match doc.model {
            Stored::Network { layers } => Model::Network(checked(layers)?),
            Stored::Split { extractor, predictor } => {
                Model::Split(SplitModel::new(checked(extractor)?, checked(predictor)?)?)
            }
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read_text(path)?, path)
    }
}

pub fn load_network(path: &Path) -> Result<Network> {
    match Model::load(path)? {
        Model::Network(n) => Ok(n),
        Model::Split(_) => Err(Error::format(path, "expected an unsplit network, found a split model")),
    }
}

pub fn load_split(path: &Path) -> Result<SplitModel> {
    match Model::load(path)? {
        Model::Split(m) => Ok(m),
        Model::Network(_) => Err(Error::format(
            path,
            "expected a split model, found an unsplit network (run embed-bottleneck first)",
        )),
    }
}
