use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scorenet::{NetConfig, ScoreModel};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// JSON snapshot of a [`ScoreModel`]. Floats are written in shortest
/// round-trip form, so save then load reproduces every bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub dim: usize,
    pub net: NetConfig,
    pub kappa: f64,
    pub freqs: Vec<f64>,
    pub layers: BTreeMap<String, TensorEntry>,
    /// Hash of the run configuration that produced the model.
    pub config_hash: String,
}

impl Checkpoint {
    pub fn from_model(model: &ScoreModel, config_hash: &str) -> Self {
        let layers = model
            .named_tensors()
            .into_iter()
            .map(|(name, shape, data)| {
                (
                    name,
                    TensorEntry {
                        shape,
                        data: data.to_vec(),
                    },
                )
            })
            .collect();
        Self {
            version: CHECKPOINT_VERSION,
            dim: model.dim(),
            net: model.config().clone(),
            kappa: model.kappa(),
            freqs: model.features().freqs().to_vec(),
            layers,
            config_hash: config_hash.to_string(),
        }
    }

    pub fn to_model(&self) -> Result<ScoreModel> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint version {}",
                self.version
            )));
        }
        // a zero model of the same layout gives the expected names and shapes
        let probe = ScoreModel::from_parts(
            self.dim,
            self.net.clone(),
            vec![0.0; layout_len(self.dim, &self.net)],
            self.kappa,
            self.freqs.clone(),
        )?;
        let mut params = Vec::with_capacity(probe.param_count());
        for (name, shape, _) in probe.named_tensors() {
            let entry = self
                .layers
                .get(&name)
                .ok_or_else(|| Error::Config(format!("checkpoint lacks tensor {name}")))?;
            let want: usize = shape.iter().product();
            if entry.shape != shape || entry.data.len() != want {
                return Err(Error::Shape {
                    context: "checkpoint tensor",
                    expected: want,
                    got: entry.data.len(),
                });
            }
            params.extend_from_slice(&entry.data);
        }
        if self.layers.len() != probe.named_tensors().len() {
            return Err(Error::Config("checkpoint has unexpected extra tensors".into()));
        }
        ScoreModel::from_parts(self.dim, self.net.clone(), params, self.kappa, self.freqs.clone())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        serde_json::from_slice(&bytes).map_err(|e| Error::format(path, e.to_string()))
    }
}

fn layout_len(dim: usize, net: &NetConfig) -> usize {
    let mut fan_in = dim + net.time_feat_dim;
    let mut total = 0;
    for &w in net.hidden.iter().chain(std::iter::once(&dim)) {
        total += w * fan_in + w;
        fan_in = w;
    }
    total
}
