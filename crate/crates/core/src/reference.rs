//! Exact reference convolution the simulator is verified against.
//!
//! The accumulation order is pinned so fp32 comparisons against the
//! simulator are bit-exact instead of tolerance-based: one running
//! accumulator per output element, summed over c_i outermost, then k_y,
//! then k_x. Padding contributes explicit zero products (the core streams
//! a materialized zero border, so the reference multiplies the same
//! zeros).

use crate::error::{Error, Result};
use crate::tensor::{ConvLayerSpec, Layout3, Layout4, Precision, Tensor3, Tensor4};

fn check_dims<TI: Copy + Default, TW: Copy + Default>(
    input: &Tensor3<TI>,
    weights: &Tensor4<TW>,
    spec: &ConvLayerSpec,
) -> Result<()> {
    spec.validate()?;
    if input.layout() != Layout3::Chw {
        return Err(Error::Shape(
            "reference convolution expects CHW input".into(),
        ));
    }
    if weights.layout() != Layout4::CiKyKxCo {
        return Err(Error::Shape(
            "reference convolution expects CiKyKxCo weights".into(),
        ));
    }
    if input.c() != spec.c_in || input.h() != spec.h_in || input.w() != spec.w_in {
        return Err(Error::Shape(format!(
            "input dims ({}, {}, {}) do not match layer ({}, {}, {})",
            input.c(),
            input.h(),
            input.w(),
            spec.c_in,
            spec.h_in,
            spec.w_in
        )));
    }
    if weights.c_in() != spec.c_in
        || weights.k_y() != spec.k_y
        || weights.k_x() != spec.k_x
        || weights.c_out() != spec.c_out
    {
        return Err(Error::Shape(format!(
            "weight dims ({}, {}, {}, {}) do not match layer",
            weights.c_in(),
            weights.k_y(),
            weights.k_x(),
            weights.c_out()
        )));
    }
    Ok(())
}

/// fp32 reference convolution with zero-padding semantics.
pub fn conv2d_reference_f32(
    input: &Tensor3<f32>,
    weights: &Tensor4<f32>,
    spec: &ConvLayerSpec,
) -> Result<Tensor3<f32>> {
    check_dims(input, weights, spec)?;
    let (h_out, w_out) = (spec.h_out(), spec.w_out());
    let mut out = Tensor3::zeroed(Layout3::Chw, [spec.c_out, h_out, w_out]);
    for co in 0..spec.c_out {
        for y in 0..h_out {
            for x in 0..w_out {
                let mut acc = 0.0f32;
                for ci in 0..spec.c_in {
                    for ky in 0..spec.k_y {
                        for kx in 0..spec.k_x {
                            let v = padded_at_f32(
                                input,
                                spec.pad,
                                ci,
                                y * spec.stride + ky,
                                x * spec.stride + kx,
                            );
                            acc += v * weights.at(ci, ky, kx, co);
                        }
                    }
                }
                out.set(co, y, x, acc);
            }
        }
    }
    Ok(out)
}

fn padded_at_f32(t: &Tensor3<f32>, pad: usize, c: usize, py: usize, px: usize) -> f32 {
    if py < pad || px < pad {
        return 0.0;
    }
    let (y, x) = (py - pad, px - pad);
    if y >= t.h() || x >= t.w() {
        return 0.0;
    }
    t.at(c, y, x)
}

fn padded_at_i8(t: &Tensor3<i8>, pad: usize, c: usize, py: usize, px: usize) -> i8 {
    if py < pad || px < pad {
        return 0;
    }
    let (y, x) = (py - pad, px - pad);
    if y >= t.h() || x >= t.w() {
        return 0;
    }
    t.at(c, y, x)
}

/// int8 reference convolution. Accumulates into i32 grouped four channels
/// at a time, lanes reduced as ((p0 + p1) + (p2 + p3)) + acc, matching the
/// vPE adder tree. Channel count must already be a multiple of four.
pub fn conv2d_reference_int8(
    input: &Tensor3<i8>,
    weights: &Tensor4<i8>,
    spec: &ConvLayerSpec,
) -> Result<Tensor3<i32>> {
    if spec.precision != Precision::Int8x4 {
        return Err(Error::Shape("int8 reference needs an int8x4 layer".into()));
    }
    if !spec.c_in.is_multiple_of(4) {
        return Err(Error::Packing(spec.c_in));
    }
    check_dims(input, weights, spec)?;
    let (h_out, w_out) = (spec.h_out(), spec.w_out());
    let mut out = Tensor3::zeroed(Layout3::Chw, [spec.c_out, h_out, w_out]);
    for co in 0..spec.c_out {
        for y in 0..h_out {
            for x in 0..w_out {
                let mut acc = 0i32;
                for g in 0..spec.c_in / 4 {
                    for ky in 0..spec.k_y {
                        for kx in 0..spec.k_x {
                            let (py, px) = (y * spec.stride + ky, x * spec.stride + kx);
                            let mut p = [0i32; 4];
                            for (l, pl) in p.iter_mut().enumerate() {
                                let v = padded_at_i8(input, spec.pad, g * 4 + l, py, px) as i32;
                                *pl = v * weights.at(g * 4 + l, ky, kx, co) as i32;
                            }
                            acc = acc.wrapping_add((p[0] + p[1]) + (p[2] + p[3]));
                        }
                    }
                }
                out.set(co, y, x, acc);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture::SplitMix64;
    use crate::tensor::{pad_channels, pad_weight_channels};

    #[test]
    fn single_mac() {
        let spec = ConvLayerSpec::new(1, 1, 1, 1, 1, 1, 1, 0, Precision::Fp32).unwrap();
        let input = Tensor3::from_vec(Layout3::Chw, [1, 1, 1], vec![1.5f32]).unwrap();
        let weights = Tensor4::from_vec(Layout4::CiKyKxCo, [1, 1, 1, 1], vec![-2.0f32]).unwrap();
        let out = conv2d_reference_f32(&input, &weights, &spec).unwrap();
        assert_eq!(out.at(0, 0, 0), -3.0);
    }

    #[test]
    fn vgg_first_layer_output_shape() {
        let spec = ConvLayerSpec::new(3, 64, 224, 224, 3, 3, 1, 1, Precision::Fp32).unwrap();
        let input = Tensor3::<f32>::zeroed(Layout3::Chw, [3, 224, 224]);
        let weights = Tensor4::<f32>::zeroed(Layout4::CiKyKxCo, [3, 3, 3, 64]);
        let out = conv2d_reference_f32(&input, &weights, &spec).unwrap();
        assert_eq!(out.dims(), [64, 224, 224]);
    }

    /// Independent quadruple-loop integer convolution, coded without the
    /// lane grouping, used as the oracle for the packed int8 path.
    fn naive_int_conv(
        input: &Tensor3<i8>,
        weights: &Tensor4<i8>,
        spec: &ConvLayerSpec,
    ) -> Tensor3<i64> {
        let mut out = Tensor3::zeroed(Layout3::Chw, [spec.c_out, spec.h_out(), spec.w_out()]);
        for co in 0..spec.c_out {
            for y in 0..spec.h_out() {
                for x in 0..spec.w_out() {
                    let mut acc = 0i64;
                    for ci in 0..spec.c_in {
                        for ky in 0..spec.k_y {
                            for kx in 0..spec.k_x {
                                let py = y * spec.stride + ky;
                                let px = x * spec.stride + kx;
                                let v = if py >= spec.pad
                                    && px >= spec.pad
                                    && py - spec.pad < spec.h_in
                                    && px - spec.pad < spec.w_in
                                {
                                    input.at(ci, py - spec.pad, px - spec.pad) as i64
                                } else {
                                    0
                                };
                                acc += v * weights.at(ci, ky, kx, co) as i64;
                            }
                        }
                    }
                    out.set(co, y, x, acc);
                }
            }
        }
        out
    }

    #[test]
    fn int8_matches_naive_integer_convolution() {
        // 3 channels padded to 4, 3x3 kernel, stride 2, pad 1 on a 5x5 input
        let nominal = ConvLayerSpec::new(3, 2, 5, 5, 3, 3, 2, 1, Precision::Int8x4).unwrap();
        let mut rng = SplitMix64::new(0xC0FFEE);
        let data: Vec<i8> = (0..3 * 5 * 5).map(|_| rng.next_i8()).collect();
        let input = Tensor3::from_vec(Layout3::Chw, [3, 5, 5], data).unwrap();
        let wdata: Vec<i8> = (0..3 * 3 * 3 * 2).map(|_| rng.next_i8()).collect();
        let weights = Tensor4::from_vec(Layout4::CiKyKxCo, [3, 3, 3, 2], wdata).unwrap();

        let spec = nominal.channel_padded();
        let pin = pad_channels(&input, 4).unwrap();
        let pw = pad_weight_channels(&weights, 4).unwrap();
        let got = conv2d_reference_int8(&pin, &pw, &spec).unwrap();

        let expect = naive_int_conv(&input, &weights, &nominal);
        assert_eq!(got.dims(), [2, 3, 3]);
        for co in 0..2 {
            for y in 0..3 {
                for x in 0..3 {
                    assert_eq!(got.at(co, y, x) as i64, expect.at(co, y, x));
                }
            }
        }
    }

    #[test]
    fn int8_rejects_unpadded_channels() {
        let spec = ConvLayerSpec::new(3, 1, 3, 3, 1, 1, 1, 0, Precision::Int8x4).unwrap();
        let input = Tensor3::<i8>::zeroed(Layout3::Chw, [3, 3, 3]);
        let weights = Tensor4::<i8>::zeroed(Layout4::CiKyKxCo, [3, 1, 1, 1]);
        assert!(matches!(
            conv2d_reference_int8(&input, &weights, &spec),
            Err(Error::Packing(3))
        ));
    }

    #[test]
    fn one_by_one_kernel_is_channel_scaling() {
        let spec = ConvLayerSpec::new(1, 3, 4, 4, 1, 1, 1, 0, Precision::Fp32).unwrap();
        let mut rng = SplitMix64::new(9);
        let data: Vec<f32> = (0..16).map(|_| rng.next_f32()).collect();
        let input = Tensor3::from_vec(Layout3::Chw, [1, 4, 4], data).unwrap();
        let scales = [0.5f32, -1.25, 3.0];
        let weights = Tensor4::from_vec(Layout4::CiKyKxCo, [1, 1, 1, 3], scales.to_vec()).unwrap();
        let out = conv2d_reference_f32(&input, &weights, &spec).unwrap();
        for (co, s) in scales.iter().enumerate() {
            for y in 0..4 {
                for x in 0..4 {
                    assert_eq!(out.at(co, y, x), input.at(0, y, x) * s);
                }
            }
        }
    }

    #[test]
    fn linearity_under_power_of_two_scaling() {
        let spec = ConvLayerSpec::new(2, 2, 6, 6, 3, 3, 1, 1, Precision::Fp32).unwrap();
        let mut rng = SplitMix64::new(77);
        let data: Vec<f32> = (0..2 * 36).map(|_| rng.next_f32()).collect();
        let input = Tensor3::from_vec(Layout3::Chw, [2, 6, 6], data.clone()).unwrap();
        let scaled = Tensor3::from_vec(
            Layout3::Chw,
            [2, 6, 6],
            data.iter().map(|v| v * 2.0).collect(),
        )
        .unwrap();
        let wdata: Vec<f32> = (0..2 * 9 * 2).map(|_| rng.next_f32()).collect();
        let weights = Tensor4::from_vec(Layout4::CiKyKxCo, [2, 3, 3, 2], wdata).unwrap();

        let a = conv2d_reference_f32(&input, &weights, &spec).unwrap();
        let b = conv2d_reference_f32(&scaled, &weights, &spec).unwrap();
        for co in 0..2 {
            for y in 0..6 {
                for x in 0..6 {
                    // power-of-two scaling commutes exactly with the sum
                    assert_eq!(b.at(co, y, x), 2.0 * a.at(co, y, x));
                }
            }
        }
    }
}
