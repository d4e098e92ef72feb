//! Dense tensor containers, layout transforms, zero padding and int8
//! channel packing.
//!
//! Feature maps are stored either `CHW` (the layout the core streams) or
//! `WHC` (the layout frontends usually hand over). Weights are stored
//! `KyKxCiCo` (frontend) or `CiKyKxCo` (the broadcast order the core
//! consumes). All transforms are pure permutations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Arithmetic mode of the PE array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    /// One fp32 multiply-accumulate per PE per cycle.
    Fp32,
    /// Four int8 lanes reduced into one 32-bit accumulator per cycle (vPE).
    Int8x4,
}

impl Precision {
    pub fn lanes(self) -> usize {
        match self {
            Precision::Fp32 => 1,
            Precision::Int8x4 => 4,
        }
    }
}

/// Shape of one convolution layer plus the arithmetic mode it runs in.
///
/// `stride` applies to both axes, `pad` is zero padding on all four sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayerSpec {
    pub c_in: usize,
    pub c_out: usize,
    pub h_in: usize,
    pub w_in: usize,
    pub k_y: usize,
    pub k_x: usize,
    pub stride: usize,
    pub pad: usize,
    pub precision: Precision,
}

impl ConvLayerSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        c_in: usize,
        c_out: usize,
        h_in: usize,
        w_in: usize,
        k_y: usize,
        k_x: usize,
        stride: usize,
        pad: usize,
        precision: Precision,
    ) -> Result<Self> {
        let spec = Self {
            c_in,
            c_out,
            h_in,
            w_in,
            k_y,
            k_x,
            stride,
            pad,
            precision,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.c_in == 0 || self.c_out == 0 || self.h_in == 0 || self.w_in == 0 {
            return Err(Error::Shape(
                "channel and spatial extents must be >= 1".into(),
            ));
        }
        if self.k_y == 0 || self.k_x == 0 {
            return Err(Error::Shape("kernel extents must be >= 1".into()));
        }
        if self.stride != 1 && self.stride != 2 {
            return Err(Error::Shape(format!(
                "stride must be 1 or 2, got {}",
                self.stride
            )));
        }
        for (name, span, k) in [
            ("height", self.h_in + 2 * self.pad, self.k_y),
            ("width", self.w_in + 2 * self.pad, self.k_x),
        ] {
            if span < k {
                return Err(Error::Shape(format!("kernel exceeds padded input {name}")));
            }
            if (span - k) % self.stride != 0 {
                return Err(Error::Shape(format!(
                    "padded input {name} {span} with kernel {k} is not stride-aligned"
                )));
            }
        }
        Ok(())
    }

    pub fn h_out(&self) -> usize {
        (self.h_in + 2 * self.pad - self.k_y) / self.stride + 1
    }

    pub fn w_out(&self) -> usize {
        (self.w_in + 2 * self.pad - self.k_x) / self.stride + 1
    }

    pub fn padded_h(&self) -> usize {
        self.h_in + 2 * self.pad
    }

    pub fn padded_w(&self) -> usize {
        self.w_in + 2 * self.pad
    }

    /// Input channel count after rounding up to the vPE lane width.
    /// Layers whose channel count is not a lane multiple run with zeroed
    /// spare lanes; cycle counts reflect the padded count.
    pub fn padded_c_in(&self) -> usize {
        let lanes = self.precision.lanes();
        self.c_in.div_ceil(lanes) * lanes
    }

    /// Number of streamed input groups (channels for fp32, packed
    /// four-channel vectors for int8).
    pub fn groups(&self) -> usize {
        self.padded_c_in() / self.precision.lanes()
    }

    /// Copy of this spec with `c_in` rounded up to the lane width.
    pub fn channel_padded(&self) -> Self {
        Self {
            c_in: self.padded_c_in(),
            ..*self
        }
    }

    /// Nominal multiply-accumulate count of the layer (unpadded channels).
    pub fn macs(&self) -> u64 {
        self.h_out() as u64
            * self.w_out() as u64
            * self.c_out as u64
            * self.c_in as u64
            * self.k_y as u64
            * self.k_x as u64
    }

    /// Nominal op count, one MAC counted as an add plus a multiply.
    pub fn ops(&self) -> u64 {
        2 * self.macs()
    }
}

/// Storage order of a rank-3 feature map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layout3 {
    /// Channel-major, the order the core streams: index = (c*H + h)*W + w.
    Chw,
    /// Width-major frontend order: index = (w*H + h)*C + c.
    Whc,
}

/// Storage order of a rank-4 weight tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layout4 {
    /// Frontend order: index = ((ky*Kx + kx)*Ci + ci)*Co + co.
    KyKxCiCo,
    /// Broadcast order the core consumes: index = ((ci*Ky + ky)*Kx + kx)*Co + co.
    CiKyKxCo,
}

/// Dense rank-3 tensor with an explicit layout tag.
///
/// `dims` are the extents in storage order; accessors always take semantic
/// (c, h, w) coordinates and translate.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3<T> {
    layout: Layout3,
    dims: [usize; 3],
    data: Vec<T>,
}

impl<T: Copy + Default> Tensor3<T> {
    pub fn zeroed(layout: Layout3, dims: [usize; 3]) -> Self {
        Self {
            layout,
            dims,
            data: vec![T::default(); dims[0] * dims[1] * dims[2]],
        }
    }

    pub fn from_vec(layout: Layout3, dims: [usize; 3], data: Vec<T>) -> Result<Self> {
        if data.len() != dims[0] * dims[1] * dims[2] {
            return Err(Error::Shape(format!(
                "rank-3 data length {} does not match dims {:?}",
                data.len(),
                dims
            )));
        }
        Ok(Self { layout, dims, data })
    }

    pub fn layout(&self) -> Layout3 {
        self.layout
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn c(&self) -> usize {
        match self.layout {
            Layout3::Chw => self.dims[0],
            Layout3::Whc => self.dims[2],
        }
    }

    pub fn h(&self) -> usize {
        self.dims[1]
    }

    pub fn w(&self) -> usize {
        match self.layout {
            Layout3::Chw => self.dims[2],
            Layout3::Whc => self.dims[0],
        }
    }

    fn index(&self, c: usize, h: usize, w: usize) -> usize {
        debug_assert!(c < self.c() && h < self.h() && w < self.w());
        match self.layout {
            Layout3::Chw => (c * self.dims[1] + h) * self.dims[2] + w,
            Layout3::Whc => (w * self.dims[1] + h) * self.dims[2] + c,
        }
    }

    pub fn at(&self, c: usize, h: usize, w: usize) -> T {
        self.data[self.index(c, h, w)]
    }

    pub fn set(&mut self, c: usize, h: usize, w: usize, v: T) {
        let i = self.index(c, h, w);
        self.data[i] = v;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// Pure permutation into the requested layout (identity if already there).
    pub fn to_layout(&self, layout: Layout3) -> Self {
        if layout == self.layout {
            return self.clone();
        }
        let (c, h, w) = (self.c(), self.h(), self.w());
        let dims = match layout {
            Layout3::Chw => [c, h, w],
            Layout3::Whc => [w, h, c],
        };
        let mut out = Self::zeroed(layout, dims);
        for ci in 0..c {
            for hi in 0..h {
                for wi in 0..w {
                    out.set(ci, hi, wi, self.at(ci, hi, wi));
                }
            }
        }
        out
    }
}

/// Dense rank-4 weight tensor with an explicit layout tag. Accessors take
/// semantic (ci, ky, kx, co) coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<T> {
    layout: Layout4,
    dims: [usize; 4],
    data: Vec<T>,
}

impl<T: Copy + Default> Tensor4<T> {
    pub fn zeroed(layout: Layout4, dims: [usize; 4]) -> Self {
        Self {
            layout,
            dims,
            data: vec![T::default(); dims.iter().product()],
        }
    }

    pub fn from_vec(layout: Layout4, dims: [usize; 4], data: Vec<T>) -> Result<Self> {
        if data.len() != dims.iter().product::<usize>() {
            return Err(Error::Shape(format!(
                "rank-4 data length {} does not match dims {:?}",
                data.len(),
                dims
            )));
        }
        Ok(Self { layout, dims, data })
    }

    pub fn layout(&self) -> Layout4 {
        self.layout
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn c_in(&self) -> usize {
        match self.layout {
            Layout4::KyKxCiCo => self.dims[2],
            Layout4::CiKyKxCo => self.dims[0],
        }
    }

    pub fn k_y(&self) -> usize {
        match self.layout {
            Layout4::KyKxCiCo => self.dims[0],
            Layout4::CiKyKxCo => self.dims[1],
        }
    }

    pub fn k_x(&self) -> usize {
        match self.layout {
            Layout4::KyKxCiCo => self.dims[1],
            Layout4::CiKyKxCo => self.dims[2],
        }
    }

    pub fn c_out(&self) -> usize {
        self.dims[3]
    }

    fn index(&self, ci: usize, ky: usize, kx: usize, co: usize) -> usize {
        debug_assert!(ci < self.c_in() && ky < self.k_y() && kx < self.k_x() && co < self.c_out());
        match self.layout {
            Layout4::KyKxCiCo => ((ky * self.dims[1] + kx) * self.dims[2] + ci) * self.dims[3] + co,
            Layout4::CiKyKxCo => ((ci * self.dims[1] + ky) * self.dims[2] + kx) * self.dims[3] + co,
        }
    }

    pub fn at(&self, ci: usize, ky: usize, kx: usize, co: usize) -> T {
        self.data[self.index(ci, ky, kx, co)]
    }

    pub fn set(&mut self, ci: usize, ky: usize, kx: usize, co: usize, v: T) {
        let i = self.index(ci, ky, kx, co);
        self.data[i] = v;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn to_layout(&self, layout: Layout4) -> Self {
        if layout == self.layout {
            return self.clone();
        }
        let (ci, ky, kx, co) = (self.c_in(), self.k_y(), self.k_x(), self.c_out());
        let dims = match layout {
            Layout4::KyKxCiCo => [ky, kx, ci, co],
            Layout4::CiKyKxCo => [ci, ky, kx, co],
        };
        let mut out = Self::zeroed(layout, dims);
        for a in 0..ci {
            for b in 0..ky {
                for c in 0..kx {
                    for d in 0..co {
                        out.set(a, b, c, d, self.at(a, b, c, d));
                    }
                }
            }
        }
        out
    }
}

/// Frontend weight order to the broadcast order the core consumes.
pub fn transform_weights<T: Copy + Default>(w: &Tensor4<T>) -> Result<Tensor4<T>> {
    if w.layout() != Layout4::KyKxCiCo {
        return Err(Error::Shape(
            "transform_weights expects KyKxCiCo input".into(),
        ));
    }
    Ok(w.to_layout(Layout4::CiKyKxCo))
}

/// Frontend feature order to the channel-major order the core streams.
pub fn transform_features<T: Copy + Default>(t: &Tensor3<T>) -> Result<Tensor3<T>> {
    if t.layout() != Layout3::Whc {
        return Err(Error::Shape("transform_features expects WHC input".into()));
    }
    Ok(t.to_layout(Layout3::Chw))
}

/// Materialize the zero-padded plane the core streams. Border is zero,
/// interior is the original tensor.
pub fn pad_input<T: Copy + Default>(t: &Tensor3<T>, pad: usize) -> Result<Tensor3<T>> {
    if t.layout() != Layout3::Chw {
        return Err(Error::Shape("pad_input expects CHW input".into()));
    }
    if pad == 0 {
        return Ok(t.clone());
    }
    let (c, h, w) = (t.c(), t.h(), t.w());
    let mut out = Tensor3::zeroed(Layout3::Chw, [c, h + 2 * pad, w + 2 * pad]);
    for ci in 0..c {
        for hi in 0..h {
            for wi in 0..w {
                out.set(ci, hi + pad, wi + pad, t.at(ci, hi, wi));
            }
        }
    }
    Ok(out)
}

/// Extend the channel dimension with zero channels up to `c_to`.
pub fn pad_channels<T: Copy + Default>(t: &Tensor3<T>, c_to: usize) -> Result<Tensor3<T>> {
    if t.layout() != Layout3::Chw {
        return Err(Error::Shape("pad_channels expects CHW input".into()));
    }
    if c_to < t.c() {
        return Err(Error::Shape("pad_channels cannot shrink".into()));
    }
    if c_to == t.c() {
        return Ok(t.clone());
    }
    let (h, w) = (t.h(), t.w());
    let mut out = Tensor3::zeroed(Layout3::Chw, [c_to, h, w]);
    for ci in 0..t.c() {
        for hi in 0..h {
            for wi in 0..w {
                out.set(ci, hi, wi, t.at(ci, hi, wi));
            }
        }
    }
    Ok(out)
}

/// Extend the input-channel dimension of a weight tensor with zeros.
pub fn pad_weight_channels<T: Copy + Default>(w: &Tensor4<T>, c_to: usize) -> Result<Tensor4<T>> {
    if c_to < w.c_in() {
        return Err(Error::Shape("pad_weight_channels cannot shrink".into()));
    }
    if c_to == w.c_in() {
        return Ok(w.clone());
    }
    let dims = match w.layout() {
        Layout4::KyKxCiCo => [w.k_y(), w.k_x(), c_to, w.c_out()],
        Layout4::CiKyKxCo => [c_to, w.k_y(), w.k_x(), w.c_out()],
    };
    let mut out = Tensor4::zeroed(w.layout(), dims);
    for ci in 0..w.c_in() {
        for ky in 0..w.k_y() {
            for kx in 0..w.k_x() {
                for co in 0..w.c_out() {
                    out.set(ci, ky, kx, co, w.at(ci, ky, kx, co));
                }
            }
        }
    }
    Ok(out)
}

/// int8 feature map packed four channels per lane vector, group-major.
///
/// Lane `l` of group `g` at position (y, x) holds channel `4g + l` of the
/// unpacked tensor at (y, x).
#[derive(Debug, Clone, PartialEq)]
pub struct PackedInput {
    groups: usize,
    h: usize,
    w: usize,
    data: Vec<[i8; 4]>,
}

impl PackedInput {
    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn at(&self, g: usize, y: usize, x: usize) -> [i8; 4] {
        self.data[(g * self.h + y) * self.w + x]
    }

    pub fn unpack(&self) -> Tensor3<i8> {
        let mut out = Tensor3::zeroed(Layout3::Chw, [self.groups * 4, self.h, self.w]);
        for g in 0..self.groups {
            for y in 0..self.h {
                for x in 0..self.w {
                    let v = self.at(g, y, x);
                    for (l, &lane) in v.iter().enumerate() {
                        out.set(g * 4 + l, y, x, lane);
                    }
                }
            }
        }
        out
    }
}

/// Pack an int8 CHW tensor into four-channel lane vectors.
pub fn pack_int8(t: &Tensor3<i8>) -> Result<PackedInput> {
    if t.layout() != Layout3::Chw {
        return Err(Error::Shape("pack_int8 expects CHW input".into()));
    }
    if !t.c().is_multiple_of(4) {
        return Err(Error::Packing(t.c()));
    }
    let groups = t.c() / 4;
    let (h, w) = (t.h(), t.w());
    let mut data = Vec::with_capacity(groups * h * w);
    for g in 0..groups {
        for y in 0..h {
            for x in 0..w {
                data.push([
                    t.at(g * 4, y, x),
                    t.at(g * 4 + 1, y, x),
                    t.at(g * 4 + 2, y, x),
                    t.at(g * 4 + 3, y, x),
                ]);
            }
        }
    }
    Ok(PackedInput { groups, h, w, data })
}

pub type TensorF32 = Tensor3<f32>;
pub type TensorI8 = Tensor3<i8>;
pub type TensorI32 = Tensor3<i32>;
pub type WeightsF32 = Tensor4<f32>;
pub type WeightsI8 = Tensor4<i8>;

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(c_in: usize, c_out: usize, hw: usize, k: usize, s: usize, p: usize) -> ConvLayerSpec {
        ConvLayerSpec::new(c_in, c_out, hw, hw, k, k, s, p, Precision::Fp32).unwrap()
    }

    #[test]
    fn output_extent_formula() {
        let s = spec(3, 64, 224, 3, 1, 1);
        assert_eq!(s.h_out(), 224);
        assert_eq!(s.w_out(), 224);
        let s = ConvLayerSpec::new(3, 2, 5, 5, 3, 3, 2, 1, Precision::Fp32).unwrap();
        assert_eq!(s.h_out(), 3);
        assert_eq!(s.w_out(), 3);
    }

    #[test]
    fn spec_validation_rejects_bad_shapes() {
        assert!(ConvLayerSpec::new(0, 1, 1, 1, 1, 1, 1, 0, Precision::Fp32).is_err());
        assert!(ConvLayerSpec::new(1, 1, 4, 4, 3, 3, 3, 0, Precision::Fp32).is_err());
        // (4 - 3) not divisible by stride 2
        assert!(ConvLayerSpec::new(1, 1, 4, 4, 3, 3, 2, 0, Precision::Fp32).is_err());
    }

    #[test]
    fn int8_channel_padding_rounds_up() {
        let s = ConvLayerSpec::new(3, 2, 5, 5, 3, 3, 2, 1, Precision::Int8x4).unwrap();
        assert_eq!(s.padded_c_in(), 4);
        assert_eq!(s.groups(), 1);
        assert_eq!(s.channel_padded().c_in, 4);
        // nominal op counting ignores the padding
        assert_eq!(s.macs(), 3 * 3 * 2 * 3 * 9);
    }

    #[test]
    #[allow(clippy::erasing_op, clippy::identity_op)] // index oracle written out in full
    fn weight_transform_identity_and_spot_check() {
        let w = Tensor4::<i32>::from_vec(Layout4::KyKxCiCo, [1, 1, 1, 1], vec![7]).unwrap();
        let t = transform_weights(&w).unwrap();
        assert_eq!(t.at(0, 0, 0, 0), 7);

        // dims (ky, kx, ci, co) = (3, 3, 2, 4) filled with 0..71
        let w =
            Tensor4::<i32>::from_vec(Layout4::KyKxCiCo, [3, 3, 2, 4], (0..72).collect()).unwrap();
        let t = transform_weights(&w).unwrap();
        // source flat index of (ky=1, kx=2, ci=0, co=3)
        let src = ((1 * 3 + 2) * 2 + 0) * 4 + 3;
        assert_eq!(src, 43);
        assert_eq!(t.at(0, 1, 2, 3), 43);
        // destination flat index in CiKyKxCo
        let dst = ((0 * 3 + 1) * 3 + 2) * 4 + 3;
        assert_eq!(t.data()[dst], 43);
        // round trip is the identity
        assert_eq!(t.to_layout(Layout4::KyKxCiCo), w);
    }

    #[test]
    #[allow(clippy::erasing_op, clippy::identity_op)] // index oracle written out in full
    fn feature_transform_spot_check_and_round_trip() {
        let t = Tensor3::<i32>::from_vec(Layout3::Whc, [1, 1, 1], vec![5]).unwrap();
        assert_eq!(transform_features(&t).unwrap().at(0, 0, 0), 5);

        // dims (w, h, c) = (4, 3, 2) with distinct values
        let t = Tensor3::<i32>::from_vec(Layout3::Whc, [4, 3, 2], (0..24).collect()).unwrap();
        let c = transform_features(&t).unwrap();
        let src = (2 * 3 + 1) * 2 + 0; // (w=2, h=1, c=0)
        assert_eq!(src, 14);
        assert_eq!(c.at(0, 1, 2), 14);
        let dst = (0 * 3 + 1) * 4 + 2; // (c=0, h=1, w=2) in CHW
        assert_eq!(c.data()[dst], 14);
        assert_eq!(c.to_layout(Layout3::Whc), t);
    }

    #[test]
    fn pad_input_zero_is_identity() {
        let t = Tensor3::<f32>::from_vec(Layout3::Chw, [1, 1, 1], vec![3.5]).unwrap();
        assert_eq!(pad_input(&t, 0).unwrap(), t);
    }

    #[test]
    fn pad_input_single_pixel() {
        let t = Tensor3::<f32>::from_vec(Layout3::Chw, [1, 1, 1], vec![2.25]).unwrap();
        let p = pad_input(&t, 1).unwrap();
        assert_eq!(p.dims(), [1, 3, 3]);
        for y in 0..3 {
            for x in 0..3 {
                let expect = if y == 1 && x == 1 { 2.25 } else { 0.0 };
                assert_eq!(p.at(0, y, x), expect);
            }
        }
    }

    #[test]
    fn pad_input_interior_and_border() {
        let mut rng = crate::fixture::SplitMix64::new(11);
        let data: Vec<f32> = (0..2 * 4 * 4).map(|_| rng.next_f32()).collect();
        let t = Tensor3::from_vec(Layout3::Chw, [2, 4, 4], data).unwrap();
        let p = pad_input(&t, 2).unwrap();
        assert_eq!(p.dims(), [2, 8, 8]);
        for c in 0..2 {
            for y in 0..8 {
                for x in 0..8 {
                    let inside = (2..6).contains(&y) && (2..6).contains(&x);
                    let expect = if inside { t.at(c, y - 2, x - 2) } else { 0.0 };
                    assert_eq!(p.at(c, y, x), expect);
                }
            }
        }
    }

    #[test]
    fn pack_constant_channels() {
        let mut t = Tensor3::<i8>::zeroed(Layout3::Chw, [4, 2, 2]);
        for c in 0..4 {
            for y in 0..2 {
                for x in 0..2 {
                    t.set(c, y, x, (c + 1) as i8);
                }
            }
        }
        let p = pack_int8(&t).unwrap();
        assert_eq!(p.groups(), 1);
        for y in 0..2 {
            for x in 0..2 {
                assert_eq!(p.at(0, y, x), [1, 2, 3, 4]);
            }
        }
        assert_eq!(p.unpack(), t);
    }

    #[test]
    fn pack_lane_index_oracle() {
        let mut rng = crate::fixture::SplitMix64::new(3);
        let data: Vec<i8> = (0..8 * 3 * 3).map(|_| rng.next_i8()).collect();
        let t = Tensor3::from_vec(Layout3::Chw, [8, 3, 3], data).unwrap();
        let p = pack_int8(&t).unwrap();
        // group 1, lane 2 at (0, 0) is channel 6 at (0, 0)
        assert_eq!(p.at(1, 0, 0)[2], t.at(6, 0, 0));
        // full lane invariant
        for g in 0..2 {
            for l in 0..4 {
                for y in 0..3 {
                    for x in 0..3 {
                        assert_eq!(p.at(g, y, x)[l], t.at(4 * g + l, y, x));
                    }
                }
            }
        }
        assert_eq!(p.unpack(), t);
    }

    #[test]
    fn pack_rejects_non_multiple_of_four() {
        let t = Tensor3::<i8>::zeroed(Layout3::Chw, [3, 2, 2]);
        assert!(matches!(pack_int8(&t), Err(Error::Packing(3))));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn rank3_layout_round_trip(c in 1usize..5, h in 1usize..5, w in 1usize..5, seed: u64) {
                let mut rng = crate::fixture::SplitMix64::new(seed);
                let data: Vec<i32> = (0..c * h * w).map(|_| rng.next_u64() as i32).collect();
                let t = Tensor3::from_vec(Layout3::Whc, [w, h, c], data).unwrap();
                let round = transform_features(&t).unwrap().to_layout(Layout3::Whc);
                prop_assert_eq!(round, t);
            }

            #[test]
            fn rank4_layout_round_trip(
                ky in 1usize..4, kx in 1usize..4, ci in 1usize..4, co in 1usize..4, seed: u64
            ) {
                let mut rng = crate::fixture::SplitMix64::new(seed);
                let data: Vec<i32> =
                    (0..ky * kx * ci * co).map(|_| rng.next_u64() as i32).collect();
                let t = Tensor4::from_vec(Layout4::KyKxCiCo, [ky, kx, ci, co], data).unwrap();
                let round = transform_weights(&t).unwrap().to_layout(Layout4::KyKxCiCo);
                prop_assert_eq!(round, t);
            }

            #[test]
            fn pack_unpack_identity(groups in 1usize..4, h in 1usize..5, w in 1usize..5, seed: u64) {
                let mut rng = crate::fixture::SplitMix64::new(seed);
                let data: Vec<i8> = (0..groups * 4 * h * w).map(|_| rng.next_i8()).collect();
                let t = Tensor3::from_vec(Layout3::Chw, [groups * 4, h, w], data).unwrap();
                prop_assert_eq!(pack_int8(&t).unwrap().unpack(), t);
            }
        }
    }

    #[test]
    fn channel_padding_preserves_content() {
        let t = Tensor3::<i8>::from_vec(Layout3::Chw, [3, 1, 2], vec![1, 2, 3, 4, 5, 6]).unwrap();
        let p = pad_channels(&t, 4).unwrap();
        assert_eq!(p.c(), 4);
        assert_eq!(p.at(2, 0, 1), 6);
        assert_eq!(p.at(3, 0, 0), 0);
        let w = Tensor4::<i8>::from_vec(Layout4::CiKyKxCo, [3, 1, 1, 1], vec![1, 2, 3]).unwrap();
        let pw = pad_weight_channels(&w, 4).unwrap();
        assert_eq!(pw.at(1, 0, 0, 0), 2);
        assert_eq!(pw.at(3, 0, 0, 0), 0);
    }
}
