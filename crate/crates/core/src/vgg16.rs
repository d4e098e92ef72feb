//! VGG-16 convolution workload preset: thirteen 3x3 stride-1 pad-1
//! layers, batch size one.

use crate::tensor::{ConvLayerSpec, Precision};

#[derive(Debug, Clone, Copy)]
pub struct PresetLayer {
    pub name: &'static str,
    pub spec: ConvLayerSpec,
}

/// (name, c_in, c_out, spatial extent) for each convolution layer.
const LAYERS: [(&str, usize, usize, usize); 13] = [
    ("conv1_1", 3, 64, 224),
    ("conv1_2", 64, 64, 224),
    ("conv2_1", 64, 128, 112),
    ("conv2_2", 128, 128, 112),
    ("conv3_1", 128, 256, 56),
    ("conv3_2", 256, 256, 56),
    ("conv3_3", 256, 256, 56),
    ("conv4_1", 256, 512, 28),
    ("conv4_2", 512, 512, 28),
    ("conv4_3", 512, 512, 28),
    ("conv5_1", 512, 512, 14),
    ("conv5_2", 512, 512, 14),
    ("conv5_3", 512, 512, 14),
];

pub fn vgg16(precision: Precision) -> Vec<PresetLayer> {
    LAYERS
        .iter()
        .map(|&(name, c_in, c_out, hw)| PresetLayer {
            name,
            spec: ConvLayerSpec {
                c_in,
                c_out,
                h_in: hw,
                w_in: hw,
                k_y: 3,
                k_x: 3,
                stride: 1,
                pad: 1,
                precision,
            },
        })
        .collect()
}

/// Work in binary giga-ops (2^30), the unit the published per-layer GOPs
/// figures use.
pub fn gops_binary(ops: u64) -> f64 {
    ops as f64 / (1u64 << 30) as f64
}

/// Shrink channel counts by the divisor (never below one), preserving
/// spatial shape. Used to keep full-network simulations tractable while
/// the per-tile arithmetic scales linearly with it.
pub fn scale_channels(spec: &ConvLayerSpec, divisor: usize) -> ConvLayerSpec {
    ConvLayerSpec {
        c_in: (spec.c_in / divisor).max(1),
        c_out: (spec.c_out / divisor).max(1),
        ..*spec
    }
}
