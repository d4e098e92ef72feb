//! Layer shorthand parsing and run-config files.
//!
//! Shorthand: `CIxHxWxCO[,kKY[xKX]][,sS][,pP][,fp32|int8x4]`, for example
//! `3x224x224x64,k3,s1,p1` or `256x56x56x256,k3,int8x4`. Kernel, stride
//! and pad default to 1x1, 1, 0.

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;

use lanesim_core::fixture::TensorFixture;
use lanesim_core::{ConvLayerSpec, CoreConfig, Precision};

pub fn parse_layer(text: &str, default_precision: Precision) -> Result<ConvLayerSpec> {
    let mut parts = text.split(',');
    let dims = parts.next().ok_or_else(|| anyhow!("empty layer spec"))?;
    let d: Vec<usize> = dims
        .split('x')
        .map(|v| {
            v.parse::<usize>()
                .map_err(|e| anyhow!("bad dimension {v:?}: {e}"))
        })
        .collect::<Result<_>>()?;
    if d.len() != 4 {
        bail!("layer dims must be CIxHxWxCO, got {dims:?}");
    }
    let (mut k_y, mut k_x, mut stride, mut pad) = (1usize, 1usize, 1usize, 0usize);
    let mut precision = default_precision;
    for part in parts {
        if let Some(k) = part.strip_prefix('k') {
            let mut it = k.split('x');
            k_y = it
                .next()
                .unwrap()
                .parse()
                .with_context(|| format!("bad kernel {part:?}"))?;
            k_x = match it.next() {
                Some(v) => v.parse().with_context(|| format!("bad kernel {part:?}"))?,
                None => k_y,
            };
        } else if let Some(s) = part.strip_prefix('s') {
            stride = s.parse().with_context(|| format!("bad stride {part:?}"))?;
        } else if let Some(p) = part.strip_prefix('p') {
            pad = p.parse().with_context(|| format!("bad pad {part:?}"))?;
        } else if part == "fp32" {
            precision = Precision::Fp32;
        } else if part == "int8x4" || part == "int8" {
            precision = Precision::Int8x4;
        } else {
            bail!("unknown layer attribute {part:?}");
        }
    }
    // dims are CI x H x W x CO
    ConvLayerSpec::new(d[0], d[3], d[1], d[2], k_y, k_x, stride, pad, precision)
        .map_err(|e| anyhow!("invalid layer {text:?}: {e}"))
}

/// One JSON document describing a run: the layer, optionally the core and
/// explicit tensors (frontend layouts WHC / KyKxCiCo or core layouts).
#[derive(Debug, Deserialize)]
pub struct RunConfig {
    pub layer: ConvLayerSpec,
    #[serde(default)]
    pub core: Option<CoreConfig>,
    #[serde(default)]
    pub input: Option<TensorFixture>,
    #[serde(default)]
    pub weights: Option<TensorFixture>,
}

pub fn load_config(path: &str) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
    let cfg: RunConfig = serde_json::from_str(&text).with_context(|| format!("parsing {path}"))?;
    cfg.layer
        .validate()
        .map_err(|e| anyhow!("invalid layer in {path}: {e}"))?;
    Ok(cfg)
}
