//! Tensor fixture files and the deterministic fill generator.
//!
//! A fixture is one JSON document with `layout`, `dims` and either an
//! explicit `data` array or a `seed`. Seeded fixtures regenerate
//! identically everywhere: values come from a SplitMix64 stream seeded
//! per tensor, walked in flat storage order, mapped as
//!
//! * fp32: top 24 bits of each draw, scaled to the 2^-23 grid in [-1, 1)
//! * int8: top 8 bits of each draw

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Layout3, Layout4, Tensor3, Tensor4};

/// SplitMix64 generator (Steele, Lea, Flood 2014).
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform on the 2^-23 grid in [-1, 1). Exactly representable, so
    /// fills are reproducible across platforms.
    pub fn next_f32(&mut self) -> f32 {
        let bits = (self.next_u64() >> 40) as u32;
        (bits as f32) * (2.0 / 16_777_216.0) - 1.0
    }

    pub fn next_i8(&mut self) -> i8 {
        (self.next_u64() >> 56) as u8 as i8
    }

    /// Uniform integer in [0, bound).
    pub fn next_below(&mut self, bound: u64) -> u64 {
        self.next_u64() % bound
    }
}

/// Self-describing tensor file. `data` wins over `seed` when both appear.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorFixture {
    pub layout: String,
    pub dims: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn layout3_from_str(s: &str) -> Result<Layout3> {
    match s {
        "CHW" => Ok(Layout3::Chw),
        "WHC" => Ok(Layout3::Whc),
        other => Err(Error::Fixture(format!("unknown rank-3 layout {other:?}"))),
    }
}

fn layout4_from_str(s: &str) -> Result<Layout4> {
    match s {
        "KyKxCiCo" => Ok(Layout4::KyKxCiCo),
        "CiKyKxCo" => Ok(Layout4::CiKyKxCo),
        other => Err(Error::Fixture(format!("unknown rank-4 layout {other:?}"))),
    }
}

pub fn layout3_name(l: Layout3) -> &'static str {
    match l {
        Layout3::Chw => "CHW",
        Layout3::Whc => "WHC",
    }
}

pub fn layout4_name(l: Layout4) -> &'static str {
    match l {
        Layout4::KyKxCiCo => "KyKxCiCo",
        Layout4::CiKyKxCo => "CiKyKxCo",
    }
}

impl TensorFixture {
    pub fn from_tensor3_f32(t: &Tensor3<f32>) -> Self {
        Self {
            layout: layout3_name(t.layout()).to_string(),
            dims: t.dims().to_vec(),
            data: Some(t.data().iter().map(|&v| v as f64).collect()),
            seed: None,
        }
    }

    pub fn from_tensor3_i32(t: &Tensor3<i32>) -> Self {
        Self {
            layout: layout3_name(t.layout()).to_string(),
            dims: t.dims().to_vec(),
            data: Some(t.data().iter().map(|&v| v as f64).collect()),
            seed: None,
        }
    }

    fn element_count(&self, rank: usize) -> Result<usize> {
        if self.dims.len() != rank {
            return Err(Error::Fixture(format!(
                "expected rank-{rank} dims, got {:?}",
                self.dims
            )));
        }
        Ok(self.dims.iter().product())
    }

    fn raw_f32(&self, rank: usize) -> Result<Vec<f32>> {
        let n = self.element_count(rank)?;
        match (&self.data, self.seed) {
            (Some(data), _) => {
                if data.len() != n {
                    return Err(Error::Fixture(format!(
                        "data length {} does not match dims {:?}",
                        data.len(),
                        self.dims
                    )));
                }
                Ok(data.iter().map(|&v| v as f32).collect())
            }
            (None, Some(seed)) => {
                let mut rng = SplitMix64::new(seed);
                Ok((0..n).map(|_| rng.next_f32()).collect())
            }
            (None, None) => Err(Error::Fixture("fixture has neither data nor seed".into())),
        }
    }

    fn raw_i8(&self, rank: usize) -> Result<Vec<i8>> {
        let n = self.element_count(rank)?;
        match (&self.data, self.seed) {
            (Some(data), _) => {
                if data.len() != n {
                    return Err(Error::Fixture(format!(
                        "data length {} does not match dims {:?}",
                        data.len(),
                        self.dims
                    )));
                }
                data.iter()
                    .map(|&v| {
                        if v.fract() != 0.0 || !(-128.0..=127.0).contains(&v) {
                            Err(Error::Fixture(format!("value {v} is not an int8")))
                        } else {
                            Ok(v as i8)
                        }
                    })
                    .collect()
            }
            (None, Some(seed)) => {
                let mut rng = SplitMix64::new(seed);
                Ok((0..n).map(|_| rng.next_i8()).collect())
            }
            (None, None) => Err(Error::Fixture("fixture has neither data nor seed".into())),
        }
    }

    pub fn to_tensor3_f32(&self) -> Result<Tensor3<f32>> {
        let layout = layout3_from_str(&self.layout)?;
        let data = self.raw_f32(3)?;
        Tensor3::from_vec(layout, [self.dims[0], self.dims[1], self.dims[2]], data)
    }

    pub fn to_tensor3_i8(&self) -> Result<Tensor3<i8>> {
        let layout = layout3_from_str(&self.layout)?;
        let data = self.raw_i8(3)?;
        Tensor3::from_vec(layout, [self.dims[0], self.dims[1], self.dims[2]], data)
    }

    pub fn to_tensor4_f32(&self) -> Result<Tensor4<f32>> {
        let layout = layout4_from_str(&self.layout)?;
        let data = self.raw_f32(4)?;
        Tensor4::from_vec(
            layout,
            [self.dims[0], self.dims[1], self.dims[2], self.dims[3]],
            data,
        )
    }

    pub fn to_tensor4_i8(&self) -> Result<Tensor4<i8>> {
        let layout = layout4_from_str(&self.layout)?;
        let data = self.raw_i8(4)?;
        Tensor4::from_vec(
            layout,
            [self.dims[0], self.dims[1], self.dims[2], self.dims[3]],
            data,
        )
    }
}
