//! JSON model files.
//!
//! Weights are stored as flat row-major arrays. `serde_json` prints the
//! shortest decimal that round-trips and is built with `float_roundtrip`, so a
//! save/load cycle reproduces every parameter bit for bit.

use std::io::{Read, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::model::{VdeConfig, VdeModel};
use super::train::TrainingHistory;
use crate::error::{Error, Result};
use crate::nn::DenseLayer;
use crate::preprocess::RobustScaler;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerRole {
    Encoder,
    Decoder,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerRecord {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub role: Option<LayerRole>,
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaHeads {
    pub mu: LayerRecord,
    pub log_var: LayerRecord,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format_version: u32,
    pub config: VdeConfig,
    pub scaler: RobustScaler,
    pub frame_interval: f64,
    pub layers: Vec<LayerRecord>,
    pub lambda_heads: LambdaHeads,
    pub history: TrainingHistory,
}

impl LayerRecord {
    fn from_layer(layer: &DenseLayer, role: Option<LayerRole>) -> Self {
        Self {
            role,
            rows: layer.outputs(),
            cols: layer.inputs(),
            weights: layer.weights.iter().copied().collect(),
            bias: layer.bias.iter().copied().collect(),
        }
    }

    fn to_layer(&self) -> Result<DenseLayer> {
        let bad = |what: &str| Error::Data(format!("model file: {what}"));
        let weights = Array2::from_shape_vec((self.rows, self.cols), self.weights.clone())
            .map_err(|_| bad("weights length does not match rows × cols"))?;
        let bias = Array2::from_shape_vec((1, self.rows), self.bias.clone())
            .map_err(|_| bad("bias length does not match rows"))?;
        Ok(DenseLayer { weights, bias })
    }
}

impl VdeModel {
    pub fn to_file(&self) -> ModelFile {
        let enc = self
            .encoder
            .iter()
            .map(|l| LayerRecord::from_layer(l, Some(LayerRole::Encoder)));
        let dec = self
            .decoder
            .iter()
            .map(|l| LayerRecord::from_layer(l, Some(LayerRole::Decoder)));
        ModelFile {
            format_version: FORMAT_VERSION,
            config: self.config.clone(),
            scaler: self.scaler.clone(),
            frame_interval: self.frame_interval,
            layers: enc.chain(dec).collect(),
            lambda_heads: LambdaHeads {
                mu: LayerRecord::from_layer(&self.mu_head, None),
                log_var: LayerRecord::from_layer(&self.log_var_head, None),
            },
            history: self.history.clone(),
        }
    }

    pub fn from_file(file: ModelFile) -> Result<Self> {
        if file.format_version != FORMAT_VERSION {
            return Err(Error::Data(format!(
                "unsupported model format_version {}",
                file.format_version
            )));
        }
        file.config.validate()?;
        let n_enc = file.config.hidden_layers + 1;
        if file.layers.len() != 2 * n_enc {
            return Err(Error::Data(format!(
                "model file has {} layers, config implies {}",
                file.layers.len(),
                2 * n_enc
            )));
        }
        let layers = file
            .layers
            .iter()
            .map(LayerRecord::to_layer)
            .collect::<Result<Vec<_>>>()?;
        let (encoder, decoder) = layers.split_at(n_enc);
        let model = Self {
            config: file.config,
            scaler: file.scaler,
            frame_interval: file.frame_interval,
            encoder: encoder.to_vec(),
            mu_head: file.lambda_heads.mu.to_layer()?,
            log_var_head: file.lambda_heads.log_var.to_layer()?,
            decoder: decoder.to_vec(),
            history: file.history,
        };
        model.check_architecture()?;
        Ok(model)
    }

    fn check_architecture(&self) -> Result<()> {
        let f = self.input_dim();
        let chain = |layers: &[DenseLayer], input: usize, output: usize| {
            let mut width = input;
            for l in layers {
                if l.inputs() != width {
                    return false;
                }
                width = l.outputs();
            }
            width == output
        };
        let heads_ok = [&self.mu_head, &self.log_var_head]
            .iter()
            .all(|h| h.inputs() == 1 && h.outputs() == 1);
        if chain(&self.encoder, f, 1) && chain(&self.decoder, 1, f) && heads_ok {
            Ok(())
        } else {
            Err(Error::Data("model file layer shapes are inconsistent".into()))
        }
    }

    pub fn save<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer(out, &self.to_file())?;
        Ok(())
    }

    pub fn load<R: Read>(input: R) -> Result<Self> {
        let file: ModelFile = serde_json::from_reader(input)?;
        Self::from_file(file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;

    fn model(seed: u64) -> VdeModel {
        let cfg = VdeConfig {
            hidden_layers: 2,
            hidden_width: 7,
            rng_seed: seed,
            ..Default::default()
        };
        let scaler = RobustScaler {
            mode: Default::default(),
            center: vec![0.1, -0.3, 1.0 / 3.0],
            scale: vec![0.7, 2.0, 1e-3],
        };
        VdeModel::new(cfg, scaler, 10.0).unwrap()
    }

    #[test]
    fn file_lists_expected_fields() {
        let mut buf = Vec::new();
        model(0).save(&mut buf).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        for key in ["format_version", "config", "scaler", "layers", "lambda_heads", "history"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["layers"][0]["rows"], 7);
        assert_eq!(v["layers"][0]["cols"], 3);
    }

    #[test]
    fn corrupted_shapes_are_rejected() {
        let mut file = model(0).to_file();
        file.layers[1].weights.pop();
        assert!(VdeModel::from_file(file).is_err());
        let mut file = model(0).to_file();
        file.layers.swap(0, 1);
        assert!(VdeModel::from_file(file).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn save_load_is_bit_exact(seed in 0u64..1000, scale in -300i32..300) {
            let mut m = model(seed);
            // push some weights to extreme magnitudes
            m.layers_mut().next().unwrap().weights[[0, 0]] = 1.2345678901234567 * 10f64.powi(scale);
            let mut buf = Vec::new();
            m.save(&mut buf).unwrap();
            let back = VdeModel::load(buf.as_slice()).unwrap();
            for (a, b) in m.parameters().iter().zip(back.parameters()) {
                prop_assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
            let x = Array2::from_shape_fn((4, 3), |(i, j)| (i * 3 + j) as f64 * 0.37 - 1.0);
            let za = m.encode(&x).unwrap();
            let zb = back.encode(&x).unwrap();
            prop_assert!(za.iter().zip(zb.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
            prop_assert_eq!(back, m);
        }
    }
}
