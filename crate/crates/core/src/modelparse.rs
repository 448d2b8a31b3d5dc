//! Model descriptors: post-fusion layer lists lowered to priced operators.
//!
//! Input graphs are expected after TFLite conversion, where activation and
//! bias fusion has already happened. A pre-fusion graph lists operators the
//! runtime never executes separately and will be overcounted.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::expr::ParamEnv;
use crate::instlib::{OperatorInstance, OP_TYPES};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("model document: {0}")]
    Schema(String),
    #[error("layer {index}: unsupported layer type {layer_type:?}")]
    UnknownLayer { index: usize, layer_type: String },
    #[error("layer {index} ({layer_type}): missing required parameter {param:?}")]
    MissingParam {
        index: usize,
        layer_type: String,
        param: String,
    },
    #[error("layer {index} ({layer_type}): {message}")]
    InvalidParam {
        index: usize,
        layer_type: String,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    #[serde(rename = "type")]
    pub layer_type: String,
    #[serde(default)]
    pub params: ParamEnv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub name: String,
    pub layers: Vec<Layer>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub metadata: serde_json::Value,
}

const SPATIAL: &[&str] = &["in_h", "in_w", "in_c", "kh", "kw", "stride", "pad"];

/// Parameters each layer type must supply.
pub fn required_params(layer_type: &str) -> Option<Vec<&'static str>> {
    Some(match layer_type {
        "Conv2D" => [SPATIAL, &["out_c"]].concat(),
        "DepthConv2D" | "MaxPool2D" | "AvgPool2D" => SPATIAL.to_vec(),
        "FullyConnected" => vec!["in_features", "out_features"],
        "ReLU" | "Add" | "Mul" | "Softmax" | "Reshape" => vec!["n"],
        "BatchNormalization" => vec!["in_h", "in_w", "in_c"],
        _ => return None,
    })
}

pub fn load_model(document: &str) -> Result<ModelDescriptor, ModelError> {
    let m: ModelDescriptor =
        serde_json::from_str(document).map_err(|e| ModelError::Schema(e.to_string()))?;
    for (index, layer) in m.layers.iter().enumerate() {
        let required =
            required_params(&layer.layer_type).ok_or_else(|| ModelError::UnknownLayer {
                index,
                layer_type: layer.layer_type.clone(),
            })?;
        for p in required {
            if layer.params.get(p).is_none() {
                return Err(ModelError::MissingParam {
                    index,
                    layer_type: layer.layer_type.clone(),
                    param: p.to_string(),
                });
            }
        }
        if layer.params.get("stride") == Some(0) {
            return Err(ModelError::InvalidParam {
                index,
                layer_type: layer.layer_type.clone(),
                message: "stride must be positive".into(),
            });
        }
    }
    Ok(m)
}

/// `⌊(input + 2·pad − k) / stride⌋ + 1`, or 0 when the window does not fit.
pub fn conv_out_dim(input: u64, k: u64, stride: u64, pad: u64) -> u64 {
    let padded = input + 2 * pad;
    if padded < k || stride == 0 {
        return 0;
    }
    (padded - k) / stride + 1
}

fn with_derived(index: usize, layer: &Layer) -> ParamEnv {
    let mut params = layer.params.clone();
    let p = |k: &str| params.get(k).unwrap_or(0);
    let (in_h, in_w, kh, kw, s, pad) = (
        p("in_h"),
        p("in_w"),
        p("kh"),
        p("kw"),
        p("stride"),
        p("pad"),
    );
    let mut derived = BTreeMap::new();
    for (name, input, k) in [("out_h", in_h, kh), ("out_w", in_w, kw)] {
        if input + 2 * pad < k {
            log::warn!(
                "layer {index} ({}): {name} underflows ({input} + 2*{pad} < {k}); clamped to 0",
                layer.layer_type
            );
        }
        derived.insert(name, conv_out_dim(input, k, s, pad));
    }
    if layer.layer_type == "DepthConv2D" {
        derived.insert(
            "out_c",
            p("in_c") * params.get("depth_multiplier").unwrap_or(1),
        );
    }
    for (name, v) in derived {
        match params.get(name) {
            Some(given) if given != v => log::warn!(
                "layer {index} ({}): given {name}={given} differs from derived {v}; keeping given",
                layer.layer_type
            ),
            Some(_) => {}
            None => params.set(name, v),
        }
    }
    params
}

/// Expands layers into operators. Batch normalization becomes an
/// element-wise Add and Mul over its input; convolution and pooling layers
/// gain derived `out_h`/`out_w`.
pub fn lower_layers(m: &ModelDescriptor) -> Result<Vec<OperatorInstance>, ModelError> {
    let mut ops = Vec::with_capacity(m.layers.len());
    for (index, layer) in m.layers.iter().enumerate() {
        match layer.layer_type.as_str() {
            "BatchNormalization" => {
                let p = |k: &str| layer.params.get(k).unwrap_or(0);
                let n = p("in_h")
                    .checked_mul(p("in_w"))
                    .and_then(|x| x.checked_mul(p("in_c")))
                    .ok_or_else(|| ModelError::InvalidParam {
                        index,
                        layer_type: layer.layer_type.clone(),
                        message: "element count overflows".into(),
                    })?;
                let env = ParamEnv::new().with("n", n);
                ops.push(OperatorInstance::new("Add", env.clone()));
                ops.push(OperatorInstance::new("Mul", env));
            }
            "Conv2D" | "DepthConv2D" | "MaxPool2D" | "AvgPool2D" => {
                ops.push(OperatorInstance::new(
                    layer.layer_type.clone(),
                    with_derived(index, layer),
                ));
            }
            t if OP_TYPES.contains(&t) => {
                ops.push(OperatorInstance::new(t, layer.params.clone()));
            }
            t => {
                return Err(ModelError::UnknownLayer {
                    index,
                    layer_type: t.to_string(),
                })
            }
        }
    }
    Ok(ops)
}

/// Multiply-accumulate count of one operator (window operations for
/// pooling, element count for element-wise operators).
pub fn macs(op: &OperatorInstance) -> u64 {
    let p = |k: &str| op.params.get(k).unwrap_or(0);
    let window = p("out_h") * p("out_w") * p("kh") * p("kw");
    match op.op_type.as_str() {
        "Conv2D" => window * p("in_c") * p("out_c"),
        "DepthConv2D" => window * p("out_c"),
        "MaxPool2D" | "AvgPool2D" => window * p("in_c"),
        "FullyConnected" => p("in_features") * p("out_features"),
        "ReLU" | "Add" | "Mul" | "Softmax" => p("n"),
        _ => 0,
    }
}

pub fn model_macs(ops: &[OperatorInstance]) -> u64 {
    ops.iter().map(macs).sum()
}
