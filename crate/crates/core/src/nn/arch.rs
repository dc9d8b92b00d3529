use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{NnError, Shape};

/// One entry of the layer vocabulary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Same padding, stride 1, odd square kernel.
    Conv2d {
        filters: usize,
        kernel: usize,
    },
    MaxPool2x2,
    /// Inverted dropout; identity at inference.
    Dropout {
        rate: f64,
    },
    Flatten,
    Dense {
        units: usize,
    },
    Relu,
    Softmax,
}

impl LayerSpec {
    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Conv2d { .. } | LayerSpec::Dense { .. })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::MaxPool2x2 => "maxpool2x2",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Relu => "relu",
            LayerSpec::Softmax => "softmax",
        }
    }

    fn output_shape(&self, input: Shape) -> Result<Shape, NnError> {
        match *self {
            LayerSpec::Conv2d { filters, kernel } => {
                if filters == 0 || kernel == 0 || kernel % 2 == 0 {
                    return Err(NnError::InvalidArchitecture("conv kernel must be odd and filters > 0"));
                }
                Ok(Shape::new(filters, input.height, input.width))
            }
            LayerSpec::MaxPool2x2 => {
                if input.height < 2 || input.width < 2 {
                    return Err(NnError::InvalidArchitecture("max pooling needs at least 2x2 input"));
                }
                Ok(Shape::new(input.channels, input.height / 2, input.width / 2))
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(NnError::InvalidArchitecture("dropout rate must be in [0, 1)"));
                }
                Ok(input)
            }
            LayerSpec::Flatten => Ok(Shape::flat(input.len())),
            LayerSpec::Dense { units } => {
                if units == 0 {
                    return Err(NnError::InvalidArchitecture("dense layer needs units > 0"));
                }
                Ok(Shape::flat(units))
            }
            LayerSpec::Relu | LayerSpec::Softmax => Ok(input),
        }
    }
}

/// Input shape plus ordered layer list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input: Shape,
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    pub fn new(input: Shape, layers: Vec<LayerSpec>) -> Result<Self, NnError> {
        let arch = Self { input, layers };
        arch.shapes()?;
        Ok(arch)
    }

    /// `shapes[i]` is the input shape of layer `i`; the last entry is the
    /// network output shape.
    pub fn shapes(&self) -> Result<Vec<Shape>, NnError> {
        if self.input.is_empty() {
            return Err(NnError::InvalidArchitecture("empty input shape"));
        }
        let mut shapes = Vec::with_capacity(self.layers.len() + 1);
        let mut cur = self.input;
        shapes.push(cur);
        for (i, layer) in self.layers.iter().enumerate() {
            if matches!(layer, LayerSpec::Softmax) && i + 1 != self.layers.len() {
                return Err(NnError::InvalidArchitecture("softmax must be the final layer"));
            }
            cur = layer.output_shape(cur)?;
            shapes.push(cur);
        }
        Ok(shapes)
    }

    pub fn output_len(&self) -> usize {
        self.shapes().map(|s| s.last().map_or(0, |o| o.len())).unwrap_or(0)
    }

    /// Index of the last parametric layer, i.e. the classifier head.
    pub fn head_index(&self) -> Option<usize> {
        self.layers.iter().rposition(LayerSpec::has_params)
    }

    pub fn first_conv_index(&self) -> Option<usize> {
        self.layers.iter().position(|l| matches!(l, LayerSpec::Conv2d { .. }))
    }

    /// Stable textual description used for hashing.
    pub fn canonical(&self) -> String {
        let mut s = format!("input:{}", self.input);
        for layer in &self.layers {
            s.push(';');
            let _ = match layer {
                LayerSpec::Conv2d { filters, kernel } => write!(s, "conv2d:{filters}:{kernel}"),
                LayerSpec::Dropout { rate } => write!(s, "dropout:{rate}"),
                LayerSpec::Dense { units } => write!(s, "dense:{units}"),
                other => write!(s, "{}", other.kind()),
            };
        }
        s
    }

    /// Hex SHA-256 of [`Architecture::canonical`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        let mut out = String::with_capacity(64);
        for b in digest {
            let _ = write!(out, "{b:02x}");
        }
        out
    }

    /// True when `other` differs at most in the head's unit count.
    pub fn matches_except_head(&self, other: &Architecture) -> bool {
        if self.input != other.input || self.layers.len() != other.layers.len() {
            return false;
        }
        let head = self.head_index();
        if head != other.head_index() {
            return false;
        }
        self.layers.iter().zip(&other.layers).enumerate().all(|(i, (a, b))| {
            a == b || (Some(i) == head && matches!((a, b), (LayerSpec::Dense { .. }, LayerSpec::Dense { .. })))
        })
    }
}
