//! A stack of catalog layers with an optional readout.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::complex::Complex;
use crate::engine::{constants, Dims, Engine, LayerSpec, VarMap};
use crate::error::{Error, Result};
use crate::features::FeatureStore;
use crate::layers::{chain_dims, CatalogLayer, Readout};
use crate::tensor::{DenseMatrix, ParamStore, Tape, Var};

/// The model configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default)]
    pub layers: Vec<CatalogLayer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub readout: Option<Readout>,
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn specs(&self) -> Result<Vec<LayerSpec>> {
        self.layers.iter().map(CatalogLayer::spec).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    specs: Vec<LayerSpec>,
    pub params: ParamStore,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    pub features: FeatureStore,
    /// Readout predictions, one row per cell or a single row.
    pub logits: Option<DenseMatrix>,
}

impl Model {
    /// Builds the layers and draws every parameter from a ChaCha stream
    /// seeded with `seed`. `complex` supplies the cell count used by a
    /// flatten readout.
    pub fn init(config: ModelConfig, complex: &Complex, input: &Dims, seed: u64) -> Result<Self> {
        let specs = config.specs()?;
        let out = chain_dims(&specs, input)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let mut dims = input.clone();
        for (i, spec) in specs.iter().enumerate() {
            spec.init_params(i, &dims, input, &mut params, &mut rng)
                .map_err(|e| e.in_layer(i, 0))?;
            dims = spec.output_dims(&dims)?;
        }
        if let Some(r) = &config.readout {
            let rank = r.rank();
            match out.get(&rank) {
                Some(&w) if w == r.in_dim => {}
                Some(&w) => {
                    return Err(Error::Config(format!(
                        "readout expects width {} but rank {rank} ends with width {w}",
                        r.in_dim
                    )))
                }
                None => return Err(Error::MissingFeatures(rank)),
            }
            r.init_params(complex.num_cells(rank), &mut params, &mut rng)?;
        }
        Ok(Self { config, specs, params })
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    /// Records all layers, then the readout if configured.
    pub fn record(&self, engine: &Engine<'_>, tape: &mut Tape, h: &VarMap) -> Result<(VarMap, Option<Var>)> {
        let mut cur = h.clone();
        for (i, spec) in self.specs.iter().enumerate() {
            cur = engine.record_layer(tape, &self.params, spec, i, &cur, h)?;
        }
        let logits = match &self.config.readout {
            Some(r) => {
                let x = *cur.get(&r.rank()).ok_or(Error::MissingFeatures(r.rank()))?;
                Some(r.record(tape, &self.params, x)?)
            }
            None => None,
        };
        Ok((cur, logits))
    }

    pub fn forward(&self, complex: &Complex, h: &FeatureStore) -> Result<ModelOutput> {
        h.validate(complex)?;
        let engine = Engine::new(complex);
        let mut tape = Tape::new();
        let vars = constants(&mut tape, h);
        let (out, logits) = self.record(&engine, &mut tape, &vars)?;
        let mut features = FeatureStore::new();
        features.layer = h.layer + self.specs.len();
        for (r, v) in out {
            features.insert(r, tape.value(v).clone());
        }
        Ok(ModelOutput {
            features,
            logits: logits.map(|v| tape.value(v).clone()),
        })
    }

    /// Parameter values by name.
    pub fn export_params(&self) -> BTreeMap<String, DenseMatrix> {
        self.params.iter().map(|p| (p.name.clone(), p.value.clone())).collect()
    }

    /// Overwrites parameters by name; shapes and names must match exactly.
    pub fn import_params(&mut self, values: &BTreeMap<String, DenseMatrix>) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(Error::Config(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                values.len()
            )));
        }
        for (name, v) in values {
            let id = self.params.id(name)?;
            let p = self.params.get_mut(id);
            if p.value.shape() != v.shape() {
                return Err(Error::shape("import_params", p.value.shape(), v.shape()));
            }
            p.value = v.clone();
        }
        Ok(())
    }
}
