//! JSON serialization of networks.
//!
//! Document layout (version 1):
//!
//! ```json
//! {
//!   "format": "labelgan-mlp",
//!   "version": 1,
//!   "layers": [
//!     { "input_width": 2, "output_width": 1, "activation": "linear",
//!       "weights": [w00, w01], "biases": [b0] }
//!   ]
//! }
//! ```
//!
//! `weights` is row-major over the `(output_width, input_width)` matrix.
//! Floats are written with shortest round-trip precision, so a save/load
//! cycle reproduces every parameter bit for bit.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Activation, LayerSpec, MlpNetwork};
use crate::{Error, Result};

pub const NETWORK_FORMAT: &str = "labelgan-mlp";
pub const NETWORK_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDocument {
    pub format: String,
    pub version: u32,
    pub layers: Vec<LayerDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDocument {
    pub input_width: usize,
    pub output_width: usize,
    pub activation: Activation,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl From<&MlpNetwork> for NetworkDocument {
    fn from(net: &MlpNetwork) -> Self {
        let layers = net
            .layers()
            .iter()
            .enumerate()
            .map(|(i, s)| LayerDocument {
                input_width: s.input_width,
                output_width: s.output_width,
                activation: s.activation,
                weights: net.weights(i).iter().copied().collect(),
                biases: net.biases(i).to_vec(),
            })
            .collect();
        NetworkDocument {
            format: NETWORK_FORMAT.to_owned(),
            version: NETWORK_FORMAT_VERSION,
            layers,
        }
    }
}

impl TryFrom<NetworkDocument> for MlpNetwork {
    type Error = Error;

    fn try_from(doc: NetworkDocument) -> Result<Self> {
        if doc.format != NETWORK_FORMAT {
            return Err(Error::format("format", format!("unknown format {:?}", doc.format)));
        }
        if doc.version != NETWORK_FORMAT_VERSION {
            return Err(Error::format(
                "version",
                format!("unsupported version {}", doc.version),
            ));
        }
        let mut specs = Vec::with_capacity(doc.layers.len());
        let mut weights = Vec::with_capacity(doc.layers.len());
        let mut biases = Vec::with_capacity(doc.layers.len());
        for (i, l) in doc.layers.into_iter().enumerate() {
            specs.push(LayerSpec::new(l.input_width, l.output_width, l.activation));
            let w = Array2::from_shape_vec((l.output_width, l.input_width), l.weights)
                .map_err(|e| Error::format(format!("layers[{i}].weights"), e.to_string()))?;
            if l.biases.len() != l.output_width {
                return Err(Error::format(
                    format!("layers[{i}].biases"),
                    format!("expected {} entries, got {}", l.output_width, l.biases.len()),
                ));
            }
            weights.push(w);
            biases.push(Array1::from(l.biases));
        }
        let net = MlpNetwork::from_parameters(specs, weights, biases)?;
        if !net.is_finite() {
            return Err(Error::format("weights", "non-finite parameter"));
        }
        Ok(net)
    }
}

impl MlpNetwork {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&NetworkDocument::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: NetworkDocument = serde_json::from_str(text)?;
        doc.try_into()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{chain_specs, init_network};
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn json_roundtrip_is_bit_exact(seed in any::<u64>(), hidden in 1usize..12) {
            let specs = chain_specs(&[5, hidden, 2], Activation::Relu, Activation::Softmax);
            let net = init_network(&specs, seed).unwrap();
            let back = MlpNetwork::from_json(&net.to_json().unwrap()).unwrap();
            prop_assert!(net.params().zip(back.params()).all(|(a, b)| a.to_bits() == b.to_bits()));
            prop_assert_eq!(net.layers(), back.layers());
        }
    }

    #[test]
    fn rejects_wrong_version_and_shape() {
        let specs = chain_specs(&[2, 1], Activation::Relu, Activation::Linear);
        let net = init_network(&specs, 0).unwrap();
        let mut doc = NetworkDocument::from(&net);
        doc.version = 9;
        assert!(matches!(MlpNetwork::try_from(doc.clone()), Err(Error::Format { .. })));
        doc.version = NETWORK_FORMAT_VERSION;
        doc.layers[0].weights.pop();
        let err = MlpNetwork::try_from(doc).unwrap_err();
        assert!(err.to_string().contains("layers[0].weights"));
    }
}
