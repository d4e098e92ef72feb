//! Closed-form performance model: spatial/temporal utilization, cycle
//! prediction, peak rates and per-stream bandwidth demands.
//!
//! All three interconnects move one word per cycle, so per input group a
//! tile needs `win` cycles of input streaming against `k_y*k_x*c_out`
//! cycles of compute, and `pixels*c_out` drain cycles at the end. With
//! double buffering the slower of input and compute paces each group;
//! utilization follows:
//!
//! * spatial: active PEs / provisioned PEs
//! * temporal: compute time / max(input read time, output writeback time),
//!   capped at 1
//! * total: spatial * temporal
//!
//! Temporal terms are precision-aware: a vPE consumes packed four-channel
//! words (input read and compute shrink by the lane count) but still
//! produces one 32-bit output per pixel per channel, so int8 runs into
//! the output bound four times sooner.

use serde::{Deserialize, Serialize};

use crate::config::CoreConfig;
use crate::error::{Error, Result};
use crate::tensor::ConvLayerSpec;
use crate::tiler::tile_output_plane;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BindingConstraint {
    Compute,
    InputBw,
    OutputBw,
    Spatial,
}

impl BindingConstraint {
    pub fn name(self) -> &'static str {
        match self {
            BindingConstraint::Compute => "compute",
            BindingConstraint::InputBw => "input_bw",
            BindingConstraint::OutputBw => "output_bw",
            BindingConstraint::Spatial => "spatial",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilizationReport {
    pub u_spatial: f64,
    pub u_temporal: f64,
    pub u_total: f64,
    pub binding_constraint: BindingConstraint,
}

/// Ratio of active PEs to provisioned PEs for one tile.
pub fn spatial_utilization(pixels: usize, num_pes: usize) -> f64 {
    assert!(
        pixels <= num_pes,
        "tile of {pixels} pixels cannot run on {num_pes} PEs"
    );
    pixels as f64 / num_pes as f64
}

/// Word counts governing one scheduled tile: (compute, input, output).
fn tile_words(spec: &ConvLayerSpec, win_words: f64, pixels: f64, c_out: f64) -> (f64, f64, f64) {
    let groups = spec.groups() as f64;
    let kk = (spec.k_y * spec.k_x) as f64;
    let compute = groups * kk * c_out;
    let input = groups * win_words;
    let output = pixels * c_out;
    (compute, input, output)
}

fn temporal_from_words(compute: f64, input: f64, output: f64) -> f64 {
    (compute / input.max(output)).min(1.0)
}

/// Temporal utilization of the layer run as one tile, using the padded
/// input extents for the read time.
pub fn temporal_utilization(spec: &ConvLayerSpec) -> f64 {
    let win = (spec.padded_h() * spec.padded_w()) as f64;
    let px = (spec.h_out() * spec.w_out()) as f64;
    let (c, i, o) = tile_words(spec, win, px, spec.c_out as f64);
    temporal_from_words(c, i, o)
}

fn binding(u_s: f64, u_t: f64, input: f64, output: f64) -> BindingConstraint {
    if u_s >= 1.0 && u_t >= 1.0 {
        BindingConstraint::Compute
    } else if u_s <= u_t {
        BindingConstraint::Spatial
    } else if input >= output {
        BindingConstraint::InputBw
    } else {
        BindingConstraint::OutputBw
    }
}

/// Utilization of the layer over its actual tile schedule, aggregated by
/// per-tile compute-span weight.
pub fn total_utilization(spec: &ConvLayerSpec, core: &CoreConfig) -> Result<UtilizationReport> {
    spec.validate()?;
    core.validate()?;
    let tiles = tile_output_plane(spec.h_out(), spec.w_out(), core.num_pes);
    let chunk = core.max_co_chunk().min(spec.c_out);
    let chunks = spec.c_out.div_ceil(chunk);
    let mut wsum = 0.0;
    let mut us_sum = 0.0;
    let mut ut_sum = 0.0;
    let mut in_sum = 0.0;
    let mut out_sum = 0.0;
    for tile in &tiles {
        for c in 0..chunks {
            let co = chunk.min(spec.c_out - c * chunk) as f64;
            let win_h = ((tile.height - 1) * spec.stride + spec.k_y) as f64;
            let win_w = ((tile.width - 1) * spec.stride + spec.k_x) as f64;
            let (compute, input, output) =
                tile_words(spec, win_h * win_w, tile.pixels() as f64, co);
            let w = compute.max(input);
            let u_s = spatial_utilization(tile.pixels(), core.num_pes);
            let u_t = temporal_from_words(compute, input, output);
            wsum += w;
            us_sum += w * u_s;
            ut_sum += w * u_t;
            in_sum += w * input;
            out_sum += w * output;
        }
    }
    let u_spatial = us_sum / wsum;
    let u_temporal = ut_sum / wsum;
    Ok(UtilizationReport {
        u_spatial,
        u_temporal,
        u_total: u_spatial * u_temporal,
        binding_constraint: binding(u_spatial, u_temporal, in_sum, out_sum),
    })
}

/// Utilization bound assuming ideal tile packing: ceil(pixels/num_pes)
/// tiles, each as full as possible. No schedule can beat this, so
/// `peak * u_total` bounds any sustained rate on the layer. This is also
/// the arithmetic behind the published tiling-loss figures.
pub fn utilization_bound(spec: &ConvLayerSpec, core: &CoreConfig) -> Result<UtilizationReport> {
    spec.validate()?;
    core.validate()?;
    let px_total = (spec.h_out() * spec.w_out()) as f64;
    let tiles = (spec.h_out() * spec.w_out()).div_ceil(core.num_pes) as f64;
    let u_spatial = px_total / (tiles * core.num_pes as f64);
    let win_avg = (spec.padded_h() * spec.padded_w()) as f64 / tiles;
    let (compute, input, output) = tile_words(spec, win_avg, px_total / tiles, spec.c_out as f64);
    let u_temporal = temporal_from_words(compute, input, output);
    Ok(UtilizationReport {
        u_spatial,
        u_temporal,
        u_total: u_spatial * u_temporal,
        binding_constraint: binding(u_spatial, u_temporal, input, output),
    })
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PredictOptions {
    /// Approximate each tile's input read time as window_width^2 instead
    /// of width * height (exact for square windows).
    pub square_input_window: bool,
}

/// Closed-form cycle prediction over the tile schedule.
///
/// Per tile the compute span is groups * max(weight words, window words)
/// (sum instead of max when the kernel cannot double-buffer), the first
/// window primes the pipeline, and drains overlap the next tile's work:
///
/// compute_end(t) = max(compute_end(t-1), handoff(t-1)) + span(t)
/// drain_done(t)  = max(compute_end(t), drain_done(t-1)) + pixels * c_out
///
/// where handoff waits for the previous drain to free the output FIFO.
pub fn predict_cycles(
    spec: &ConvLayerSpec,
    core: &CoreConfig,
    opts: PredictOptions,
) -> Result<u64> {
    spec.validate()?;
    core.validate()?;
    let window = spec.k_y * spec.k_x;
    if window > core.input_buffer_entries {
        return Err(Error::Unschedulable(format!(
            "kernel window {window} exceeds {} input buffer entries",
            core.input_buffer_entries
        )));
    }
    let double_buffered = 2 * window <= core.input_buffer_entries;
    let groups = spec.groups() as u64;
    let chunk = core.max_co_chunk().min(spec.c_out);
    let chunks = spec.c_out.div_ceil(chunk);

    let tiles = tile_output_plane(spec.h_out(), spec.w_out(), core.num_pes);
    let mut compute_end = 0u64;
    let mut drain_done = 0u64;
    let mut prev_handoff = 0u64;
    let mut first = true;
    for tile in &tiles {
        for c in 0..chunks {
            let co = chunk.min(spec.c_out - c * chunk) as u64;
            let win_h = ((tile.height - 1) * spec.stride + spec.k_y) as u64;
            let win_w = ((tile.width - 1) * spec.stride + spec.k_x) as u64;
            let win = if opts.square_input_window {
                win_w * win_w
            } else {
                win_h * win_w
            };
            let wlen = (window as u64) * co;
            let span = if double_buffered {
                groups * wlen.max(win)
            } else {
                groups * (wlen + win)
            };
            let priming = if first { win } else { 0 };
            first = false;
            let start = compute_end.max(prev_handoff);
            compute_end = start + priming + span;
            prev_handoff = compute_end.max(drain_done);
            drain_done = prev_handoff + tile.pixels() as u64 * co;
        }
    }
    Ok(drain_done)
}

/// Theoretical peak in ops/s, one MAC counted as two ops. A vPE performs
/// four lane MACs per cycle.
pub fn peak_ops_per_sec(core: &CoreConfig) -> f64 {
    2.0 * core.precision.lanes() as f64 * core.num_pes as f64 * core.clock_hz()
}

/// One of the three per-core interconnects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stream {
    Input,
    Weight,
    Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthReport {
    /// Demand of each stream in GB/s to keep every PE busy, limited only
    /// by the data reuse the layer offers.
    pub input_gbps: f64,
    pub weight_gbps: f64,
    pub output_gbps: f64,
    /// Per-stream interconnect capacity (one 4-byte word per cycle).
    pub per_stream_cap_gbps: f64,
    /// The highest-demand stream exceeding the cap, if any.
    pub bound_stream: Option<Stream>,
}

/// Reuse-limited bandwidth demand per stream.
///
/// Every input word feeds k_y*k_x*c_out MACs, every weight word
/// h_out*w_out, and one output word absorbs k_y*k_x*groups MAC cycles of
/// a PE. Dividing the PE count by the reuse factor gives words per cycle;
/// at 4 bytes per word and the core clock that is the GB/s each stream
/// would need for full utilization.
pub fn bandwidth_requirement(spec: &ConvLayerSpec, core: &CoreConfig) -> Result<BandwidthReport> {
    spec.validate()?;
    core.validate()?;
    let word_bytes = 4.0;
    let clock = core.clock_hz();
    let pes = core.num_pes as f64;
    let kk = (spec.k_y * spec.k_x) as f64;
    let gbps = |words_per_cycle: f64| clock * words_per_cycle * word_bytes / 1.0e9;

    let input_gbps = gbps(pes / (kk * spec.c_out as f64));
    let weight_gbps = gbps(pes / ((spec.h_out() * spec.w_out()) as f64));
    let output_gbps = gbps(pes / (kk * spec.groups() as f64));
    let per_stream_cap_gbps = gbps(1.0);

    let mut bound_stream = None;
    let mut worst = per_stream_cap_gbps;
    for (demand, which) in [
        (input_gbps, Stream::Input),
        (weight_gbps, Stream::Weight),
        (output_gbps, Stream::Output),
    ] {
        if demand > worst {
            worst = demand;
            bound_stream = Some(which);
        }
    }
    Ok(BandwidthReport {
        input_gbps,
        weight_gbps,
        output_gbps,
        per_stream_cap_gbps,
        bound_stream,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Precision;

    fn fp32_layer(c_in: usize, c_out: usize, hw: usize) -> ConvLayerSpec {
        ConvLayerSpec::new(c_in, c_out, hw, hw, 3, 3, 1, 1, Precision::Fp32).unwrap()
    }

    #[test]
    fn spatial_utilization_basics() {
        assert_eq!(spatial_utilization(625, 625), 1.0);
        assert_eq!(spatial_utilization(64, 64), 1.0);
        assert!((spatial_utilization(523, 625) - 0.8368).abs() < 1e-4);
    }

    #[test]
    fn temporal_compute_bound_tile() {
        // 25x25 tile, 256 channels each side: 589824 compute words against
        // max(186624 input, 160000 output)
        let spec = fp32_layer(256, 256, 56);
        let (c, i, o) = tile_words(&spec, 27.0 * 27.0, 625.0, 256.0);
        assert_eq!(c, 589_824.0);
        assert_eq!(i, 186_624.0);
        assert_eq!(o, 160_000.0);
        assert_eq!(temporal_from_words(c, i, o), 1.0);
    }

    #[test]
    fn temporal_output_bound_shallow_layer() {
        let spec = fp32_layer(3, 64, 224);
        let u = temporal_utilization(&spec);
        assert!(u < 0.01, "u_t = {u}");
    }

    #[test]
    fn temporal_degenerate_unit() {
        let spec = ConvLayerSpec::new(1, 1, 1, 1, 1, 1, 1, 0, Precision::Fp32).unwrap();
        assert_eq!(temporal_utilization(&spec), 1.0);
    }

    #[test]
    fn schedule_utilization_56_on_625() {
        let spec = fp32_layer(256, 256, 56);
        let core = CoreConfig::new(625, Precision::Fp32);
        let r = total_utilization(&spec, &core).unwrap();
        assert!((r.u_spatial - 0.836).abs() < 1e-3);
        assert_eq!(r.u_temporal, 1.0);
        assert!((r.u_total - r.u_spatial * r.u_temporal).abs() < 1e-12);
        assert_eq!(r.binding_constraint, BindingConstraint::Spatial);
    }

    #[test]
    fn bound_utilization_never_below_schedule() {
        let core = CoreConfig::new(16, Precision::Fp32);
        for spec in [
            fp32_layer(512, 512, 14),
            fp32_layer(64, 64, 224),
            fp32_layer(3, 64, 224),
        ] {
            let s = total_utilization(&spec, &core).unwrap();
            let b = utilization_bound(&spec, &core).unwrap();
            assert!(b.u_total >= s.u_total - 1e-9, "{spec:?}");
        }
    }

    #[test]
    fn u_total_bounded_by_factors() {
        let core = CoreConfig::new(324, Precision::Fp32);
        for spec in [
            fp32_layer(3, 64, 224),
            fp32_layer(512, 512, 14),
            fp32_layer(128, 256, 56),
        ] {
            let r = total_utilization(&spec, &core).unwrap();
            assert!(r.u_total <= r.u_spatial.min(r.u_temporal) + 1e-12);
            assert!(r.u_total > 0.0 && r.u_total <= 1.0);
        }
    }

    #[test]
    fn temporal_monotone_in_input_channels_when_output_bound() {
        let mut prev = 0.0;
        for c_in in [1usize, 2, 4, 8, 16, 32] {
            let spec = ConvLayerSpec::new(c_in, 64, 32, 32, 3, 3, 1, 1, Precision::Fp32).unwrap();
            let u = temporal_utilization(&spec);
            assert!(u >= prev, "u_t decreased at c_in={c_in}");
            prev = u;
        }
    }

    #[test]
    fn peak_rates_fp32_and_int8() {
        for (pes, gflops) in [(16usize, 8.0), (64, 32.0), (256, 128.0), (324, 162.0)] {
            let core = CoreConfig::new(pes, Precision::Fp32);
            assert_eq!(peak_ops_per_sec(&core), gflops * 1.0e9);
        }
        for (pes, gops) in [(256usize, 512.0), (324, 648.0), (400, 800.0), (625, 1250.0)] {
            let core = CoreConfig::new(pes, Precision::Int8x4);
            assert_eq!(peak_ops_per_sec(&core), gops * 1.0e9);
        }
    }

    #[test]
    fn weight_bandwidth_demand_14x14_on_625() {
        let spec = fp32_layer(512, 512, 14);
        let core = CoreConfig::new(625, Precision::Fp32);
        let r = bandwidth_requirement(&spec, &core).unwrap();
        // 0.250e9 * 625/196 * 4 bytes
        let expect = 0.250 * 625.0 / (14.0 * 14.0) * 4.0;
        assert!((r.weight_gbps - expect).abs() < 1e-12);
        assert!((r.weight_gbps - 3.19).abs() < 0.01);
        assert_eq!(r.per_stream_cap_gbps, 1.0);
        assert_eq!(r.bound_stream, Some(Stream::Weight));
    }

    #[test]
    fn weight_demand_within_cap_when_reuse_covers_broadcast() {
        let spec = fp32_layer(64, 64, 56);
        let core = CoreConfig::new(625, Precision::Fp32);
        let r = bandwidth_requirement(&spec, &core).unwrap();
        assert!(r.weight_gbps <= r.per_stream_cap_gbps);
    }

    #[test]
    fn shallow_layer_output_demand_exceeds_cap() {
        let spec = fp32_layer(3, 64, 224);
        let core = CoreConfig::new(256, Precision::Fp32);
        let r = bandwidth_requirement(&spec, &core).unwrap();
        assert!(r.output_gbps > r.per_stream_cap_gbps);
        assert_eq!(r.bound_stream, Some(Stream::Output));
    }

    #[test]
    fn int8_output_demand_is_four_times_fp32() {
        let f = fp32_layer(512, 512, 14);
        let i = ConvLayerSpec {
            precision: Precision::Int8x4,
            ..f
        };
        let cf = CoreConfig::new(256, Precision::Fp32);
        let ci = CoreConfig::new(256, Precision::Int8x4);
        let rf = bandwidth_requirement(&f, &cf).unwrap();
        let ri = bandwidth_requirement(&i, &ci).unwrap();
        assert!((ri.output_gbps / rf.output_gbps - 4.0).abs() < 1e-9);
        assert_eq!(ri.input_gbps, rf.input_gbps);
    }

    #[test]
    fn int8_625_sustained_fraction_decomposition() {
        // the published 56x56x256x256 int8 run on 625 vPEs sustained 65.9%
        // of peak, 16.4 points of which the six-tile schedule explains
        let spec = ConvLayerSpec::new(256, 256, 56, 56, 3, 3, 1, 1, Precision::Int8x4).unwrap();
        let core = CoreConfig::new(625, Precision::Int8x4);
        let r = total_utilization(&spec, &core).unwrap();
        assert!((r.u_spatial - 0.836).abs() < 1e-3);
        let measured_fraction = 823.84 / 1250.0;
        assert!(
            r.u_total >= measured_fraction,
            "{} < {measured_fraction}",
            r.u_total
        );
        let b = utilization_bound(&spec, &core).unwrap();
        assert!(b.u_total >= measured_fraction);
    }

    #[test]
    fn predict_single_tile_closed_forms() {
        // one tile, compute-bound: priming + G*wlen + drain
        let spec = ConvLayerSpec::new(8, 16, 6, 6, 3, 3, 1, 1, Precision::Fp32).unwrap();
        let core = CoreConfig::new(36, Precision::Fp32);
        let win = 8 * 8;
        let wlen = 9 * 16;
        let expect = win as u64 + 8 * wlen as u64 + 36 * 16;
        assert_eq!(
            predict_cycles(&spec, &core, PredictOptions::default()).unwrap(),
            expect
        );

        // one tile, input-bound: priming + G*win + drain
        let spec = ConvLayerSpec::new(8, 2, 10, 10, 3, 3, 1, 1, Precision::Fp32).unwrap();
        let core = CoreConfig::new(100, Precision::Fp32);
        let win = 12 * 12;
        let expect = win as u64 + 8 * win as u64 + 100 * 2;
        assert_eq!(
            predict_cycles(&spec, &core, PredictOptions::default()).unwrap(),
            expect
        );
    }

    #[test]
    fn predict_square_window_option_matches_on_square_tiles() {
        let spec = fp32_layer(64, 64, 56);
        let core = CoreConfig::new(625, Precision::Fp32);
        // 56x56 on 625 PEs produces non-square strip tiles, so the square
        // approximation differs
        let exact = predict_cycles(&spec, &core, PredictOptions::default()).unwrap();
        let approx = predict_cycles(
            &spec,
            &core,
            PredictOptions {
                square_input_window: true,
            },
        )
        .unwrap();
        assert_ne!(exact, approx);
        // on a plane cut into only square tiles the two agree
        let spec = fp32_layer(64, 64, 50);
        let exact = predict_cycles(&spec, &core, PredictOptions::default()).unwrap();
        let approx = predict_cycles(
            &spec,
            &core,
            PredictOptions {
                square_input_window: true,
            },
        )
        .unwrap();
        assert_eq!(exact, approx);
    }
}
