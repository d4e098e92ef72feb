//! Cycle-level simulation of one core executing scheduled tile jobs.
//!
//! # Machine model
//!
//! A core is a controller plus a 1-D PE array threaded by three pipelined
//! interconnects, each moving one value per cycle and advancing one PE
//! per hop:
//!
//! * input multicast: (command, data) bundles driving the receiver chain
//! * weight broadcast: every active PE consumes each weight, one MAC per
//!   PE per weight word; PEs hold no weight storage beyond the in-flight
//!   word, so weights re-stream for every input group
//! * output unicast: one finished output read back per cycle
//!
//! Because the input and weight pipelines skew identically (PE p sees
//! both streams p cycles late), controller-level issue times decide all
//! timing: per input group the window streams first, then the group's
//! `c_out * k_y * k_x` weight words. Double-buffered windows let the next
//! group stream during the current group's compute; finished outputs move
//! to the output FIFO and drain while the next tile runs. The controller
//! inserts stalls when a window is not ready (input stall) or when the
//! previous tile's outputs still occupy the output FIFO (output stall).
//!
//! The functional machine (receiver chain, window FIFOs, psum updates) is
//! run word by word with order and capacity assertions; the issue
//! schedule is computed from the same job parameters. Cycle accounting
//! partitions the makespan into compute, the two stall kinds and
//! pipeline fill, per tile and per layer.

use serde::{Deserialize, Serialize};

use crate::config::CoreConfig;
use crate::error::{Error, Result};
use crate::interconnect::ReceiverChain;
use crate::tensor::{
    pack_int8, pad_channels, pad_input, pad_weight_channels, ConvLayerSpec, Layout3, Layout4,
    PackedInput, Precision, Tensor3, Tensor4,
};
use crate::tiler::{build_schedule, Schedule, TileJob};

/// Cycle counters of one tile job or one layer. The identity
/// `total = compute + input_stall + output_stall + pipeline_fill` holds
/// at both granularities.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleStats {
    pub total_cycles: u64,
    pub compute_cycles: u64,
    pub input_stall_cycles: u64,
    pub output_stall_cycles: u64,
    pub pipeline_fill_cycles: u64,
    /// Active PE count of a tile; summed over jobs for a layer.
    pub active_pes: u64,
    /// Lane multiply-accumulates (a vPE executes four per cycle).
    pub macs_executed: u64,
}

impl CycleStats {
    pub fn accounting_holds(&self) -> bool {
        self.total_cycles
            == self.compute_cycles
                + self.input_stall_cycles
                + self.output_stall_cycles
                + self.pipeline_fill_cycles
    }

    /// Sustained rate in ops/s counting one MAC as two ops.
    pub fn ops_per_sec(&self, clock_hz: f64) -> f64 {
        if self.total_cycles == 0 {
            return 0.0;
        }
        2.0 * self.macs_executed as f64 / (self.total_cycles as f64 / clock_hz)
    }
}

/// Layer-level result: aggregate counters plus the per-job breakdown.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerStats {
    pub total: CycleStats,
    pub jobs: Vec<CycleStats>,
    pub tiles: usize,
    pub active_pe_sum: u64,
    /// True when the kernel was too large to double-buffer windows.
    pub single_buffered: bool,
}

impl LayerStats {
    /// Mean ratio of active to provisioned PEs over the schedule.
    pub fn spatial_utilization(&self, num_pes: usize) -> f64 {
        self.active_pe_sum as f64 / (self.jobs.len() as f64 * num_pes as f64)
    }
}

/// Controller issue timeline shared by the jobs of one layer. All times
/// are controller cycles; the per-PE skew cancels between the input and
/// weight pipelines and only reappears in the drain tail.
struct Timeline {
    input_free: u64,
    weight_free: u64,
    /// Completion of the previous job's drain (output FIFOs empty).
    drain_done: u64,
    /// When the previous job's psums moved to the output FIFO.
    handoff_ready: u64,
    /// Earliest reuse time of each window half.
    half_free: [u64; 2],
    parity: usize,
    makespan: u64,
    first_job: bool,
}

impl Timeline {
    fn new() -> Self {
        Self {
            input_free: 0,
            weight_free: 0,
            drain_done: 0,
            handoff_ready: 0,
            half_free: [0, 0],
            parity: 0,
            makespan: 0,
            first_job: true,
        }
    }

    fn schedule_job(&mut self, job: &TileJob) -> CycleStats {
        let groups = job.layer.groups() as u64;
        let win = job.words_per_group() as u64;
        let wlen = job.weights_per_group() as u64;
        let active = job.active_pes() as u64;
        let drain = job.drain_words() as u64;
        debug_assert!(groups >= 1 && win >= 1 && wlen >= 1);

        let span_start = self.weight_free;
        let mut prev_is = 0u64;
        let mut prev_ws = 0u64;
        let mut input_stall = 0u64;
        let mut gap0 = 0u64;
        for g in 0..groups {
            let half = if job.double_buffered { self.parity } else { 0 };
            if job.double_buffered {
                self.parity ^= 1;
            }
            let is = if g == 0 {
                self.input_free.max(self.half_free[half])
            } else {
                (prev_is + win).max(self.half_free[half])
            };
            let ws = if g == 0 {
                self.weight_free.max(is + win).max(self.handoff_ready)
            } else {
                (prev_ws + wlen).max(is + win)
            };
            if g == 0 {
                gap0 = ws - span_start;
            } else {
                input_stall += ws - (prev_ws + wlen);
            }
            self.half_free[half] = ws + wlen;
            prev_is = is;
            prev_ws = ws;
        }
        let compute_end = prev_ws + wlen;
        self.input_free = prev_is + win;
        self.weight_free = compute_end;

        // attribute the pre-compute gap: output backpressure first, the
        // rest is window streaming (priming on the very first job)
        let output_stall = gap0.min(self.handoff_ready.saturating_sub(span_start));
        let input_wait = gap0 - output_stall;
        let mut fill = 0u64;
        if self.first_job {
            fill += input_wait;
        } else {
            input_stall += input_wait;
        }
        self.first_job = false;

        // psums move to the output FIFO once the previous drain freed it,
        // then the unicast read-back occupies the output bus
        let handoff = compute_end.max(self.drain_done);
        self.handoff_ready = handoff;
        let drain_start = handoff;
        self.drain_done = drain_start + drain;
        // last value still traverses the return chain
        self.makespan = self.makespan.max(self.drain_done + active + 1);

        let total = compute_end - span_start;
        let compute = groups * wlen;
        debug_assert_eq!(total, compute + input_stall + output_stall + fill);
        CycleStats {
            total_cycles: total,
            compute_cycles: compute,
            input_stall_cycles: input_stall,
            output_stall_cycles: output_stall,
            pipeline_fill_cycles: fill,
            active_pes: active,
            macs_executed: 0,
        }
    }
}

/// Precision-specific pieces of the functional machine.
trait SimMode {
    type Input;
    type Weights;
    type Word: Copy + Default;
    type Weight: Copy;
    type Acc: Copy + Default;
    type OutScalar: Copy + Default;
    const LANES: u64;
    fn word(input: &Self::Input, g: usize, y: usize, x: usize) -> Self::Word;
    fn weight(w: &Self::Weights, g: usize, ky: usize, kx: usize, co: usize) -> Self::Weight;
    fn mac(acc: Self::Acc, v: Self::Word, w: Self::Weight) -> Self::Acc;
    fn finish(acc: Self::Acc) -> Self::OutScalar;
}

struct Fp32Mode;

impl SimMode for Fp32Mode {
    type Input = Tensor3<f32>;
    type Weights = Tensor4<f32>;
    type Word = f32;
    type Weight = f32;
    type Acc = f32;
    type OutScalar = f32;
    const LANES: u64 = 1;

    fn word(input: &Self::Input, g: usize, y: usize, x: usize) -> f32 {
        input.at(g, y, x)
    }

    fn weight(w: &Self::Weights, g: usize, ky: usize, kx: usize, co: usize) -> f32 {
        w.at(g, ky, kx, co)
    }

    fn mac(acc: f32, v: f32, w: f32) -> f32 {
        acc + v * w
    }

    fn finish(acc: f32) -> f32 {
        acc
    }
}

struct Int8Mode;

impl SimMode for Int8Mode {
    type Input = PackedInput;
    type Weights = Tensor4<i8>;
    type Word = [i8; 4];
    type Weight = [i8; 4];
    type Acc = i32;
    type OutScalar = i32;
    const LANES: u64 = 4;

    fn word(input: &Self::Input, g: usize, y: usize, x: usize) -> [i8; 4] {
        input.at(g, y, x)
    }

    fn weight(w: &Self::Weights, g: usize, ky: usize, kx: usize, co: usize) -> [i8; 4] {
        [
            w.at(4 * g, ky, kx, co),
            w.at(4 * g + 1, ky, kx, co),
            w.at(4 * g + 2, ky, kx, co),
            w.at(4 * g + 3, ky, kx, co),
        ]
    }

    fn mac(acc: i32, v: [i8; 4], w: [i8; 4]) -> i32 {
        // four multiplies and an adder tree, then the accumulate
        let p0 = v[0] as i32 * w[0] as i32;
        let p1 = v[1] as i32 * w[1] as i32;
        let p2 = v[2] as i32 * w[2] as i32;
        let p3 = v[3] as i32 * w[3] as i32;
        acc.wrapping_add((p0 + p1) + (p2 + p3))
    }

    fn finish(acc: i32) -> i32 {
        acc
    }
}

/// Run the functional machine for one job: stream every group through the
/// receiver chain into the window FIFOs, apply the weight broadcast, and
/// collect the tile-local output block. Returns (outputs, MAC words).
fn run_job<M: SimMode>(
    job: &TileJob,
    chain: &mut ReceiverChain,
    input: &M::Input,
    weights: &M::Weights,
) -> (Tensor3<M::OutScalar>, u64) {
    let active = job.active_pes();
    let (k_y, k_x, stride) = (job.layer.k_y, job.layer.k_x, job.layer.stride);
    let wcap = k_y * k_x;
    let co_n = job.co_count;
    let groups = job.layer.groups();
    let tile_w = job.tile.width;

    // windows pe-major, psums co-major so the MAC inner loop is contiguous
    let mut window: Vec<M::Word> = vec![M::Word::default(); active * wcap];
    let mut fill: Vec<usize> = vec![0; active];
    let mut psum: Vec<M::Acc> = vec![M::Acc::default(); co_n * active];
    let mut mac_words = 0u64;

    for g in 0..groups {
        fill.fill(0);
        for w in &job.commands {
            let v = M::word(input, g, job.win_y + w.iy, job.win_x + w.ix);
            chain.step_word(w.cmd, |pe| {
                assert!(
                    pe < active,
                    "receiver outside the tile cached an input word"
                );
                let oy = pe / tile_w;
                let ox = pe % tile_w;
                // the FIFO must receive exactly this PE's window, row-major
                let slot = (w.iy - oy * stride) * k_x + (w.ix - ox * stride);
                assert_eq!(slot, fill[pe], "window word arrived out of FIFO order");
                assert!(slot < wcap);
                window[pe * wcap + slot] = v;
                fill[pe] += 1;
            });
        }
        for (pe, &f) in fill.iter().enumerate() {
            assert_eq!(f, wcap, "PE {pe} window incomplete after group stream");
        }
        for co in 0..co_n {
            let prow = &mut psum[co * active..(co + 1) * active];
            for ky in 0..k_y {
                for kx in 0..k_x {
                    let wt = M::weight(weights, g, ky, kx, job.co_start + co);
                    let slot = ky * k_x + kx;
                    for (pe, acc) in prow.iter_mut().enumerate() {
                        *acc = M::mac(*acc, window[pe * wcap + slot], wt);
                    }
                    mac_words += active as u64;
                }
            }
        }
    }

    let mut out = Tensor3::zeroed(Layout3::Chw, [co_n, job.tile.height, job.tile.width]);
    for pe in 0..active {
        let (oy, ox) = (pe / tile_w, pe % tile_w);
        for co in 0..co_n {
            out.set(co, oy, ox, M::finish(psum[co * active + pe]));
        }
    }
    (out, mac_words)
}

fn run_layer<M: SimMode>(
    core: &CoreConfig,
    spec: &ConvLayerSpec,
    schedule: &Schedule,
    input: &M::Input,
    weights: &M::Weights,
) -> (Tensor3<M::OutScalar>, LayerStats) {
    let mut output = Tensor3::zeroed(Layout3::Chw, [spec.c_out, spec.h_out(), spec.w_out()]);
    let mut chain = ReceiverChain::new(core.num_pes);
    let mut timeline = Timeline::new();
    let mut jobs = Vec::with_capacity(schedule.jobs.len());
    let mut sum = CycleStats::default();

    for job in &schedule.jobs {
        let (block, mac_words) = run_job::<M>(job, &mut chain, input, weights);
        let mut stats = timeline.schedule_job(job);
        stats.macs_executed = mac_words * M::LANES;
        debug_assert!(stats.accounting_holds());
        sum.compute_cycles += stats.compute_cycles;
        sum.input_stall_cycles += stats.input_stall_cycles;
        sum.output_stall_cycles += stats.output_stall_cycles;
        sum.macs_executed += stats.macs_executed;
        sum.active_pes += stats.active_pes;
        jobs.push(stats);
        for co in 0..job.co_count {
            for y in 0..job.tile.height {
                for x in 0..job.tile.width {
                    output.set(
                        job.co_start + co,
                        job.tile.origin_y + y,
                        job.tile.origin_x + x,
                        block.at(co, y, x),
                    );
                }
            }
        }
    }

    let total = CycleStats {
        total_cycles: timeline.makespan,
        pipeline_fill_cycles: timeline.makespan
            - sum.compute_cycles
            - sum.input_stall_cycles
            - sum.output_stall_cycles,
        ..sum
    };
    debug_assert!(total.accounting_holds());
    let stats = LayerStats {
        total,
        jobs,
        tiles: schedule.tiles,
        active_pe_sum: schedule.active_pe_sum,
        single_buffered: schedule.jobs.first().is_some_and(|j| !j.double_buffered),
    };
    (output, stats)
}

fn check_layer_inputs<TI: Copy + Default, TW: Copy + Default>(
    spec: &ConvLayerSpec,
    input: &Tensor3<TI>,
    weights: &Tensor4<TW>,
) -> Result<()> {
    spec.validate()?;
    if input.layout() != Layout3::Chw || weights.layout() != Layout4::CiKyKxCo {
        return Err(Error::Shape(
            "simulation expects CHW input and CiKyKxCo weights".into(),
        ));
    }
    if input.c() != spec.c_in || input.h() != spec.h_in || input.w() != spec.w_in {
        return Err(Error::Shape("input tensor does not match the layer".into()));
    }
    if weights.c_in() != spec.c_in
        || weights.k_y() != spec.k_y
        || weights.k_x() != spec.k_x
        || weights.c_out() != spec.c_out
    {
        return Err(Error::Shape(
            "weight tensor does not match the layer".into(),
        ));
    }
    Ok(())
}

/// Simulate a whole fp32 layer: pad, schedule, run every job, stitch the
/// tile blocks into the output tensor. Functionally bit-exact against the
/// reference convolution.
pub fn simulate_layer_f32(
    core: &CoreConfig,
    spec: &ConvLayerSpec,
    input: &Tensor3<f32>,
    weights: &Tensor4<f32>,
) -> Result<(Tensor3<f32>, LayerStats)> {
    if spec.precision != Precision::Fp32 || core.precision != Precision::Fp32 {
        return Err(Error::Shape(
            "fp32 simulation needs an fp32 layer and core".into(),
        ));
    }
    check_layer_inputs(spec, input, weights)?;
    let schedule = build_schedule(spec, core)?;
    let padded = pad_input(input, spec.pad)?;
    Ok(run_layer::<Fp32Mode>(
        core, spec, &schedule, &padded, weights,
    ))
}

/// Simulate a whole int8 layer. Channel counts that are not a multiple of
/// four are zero-extended (inputs and weights); cycle counts reflect the
/// padded count, outputs are unchanged.
pub fn simulate_layer_int8(
    core: &CoreConfig,
    spec: &ConvLayerSpec,
    input: &Tensor3<i8>,
    weights: &Tensor4<i8>,
) -> Result<(Tensor3<i32>, LayerStats)> {
    if spec.precision != Precision::Int8x4 || core.precision != Precision::Int8x4 {
        return Err(Error::Shape(
            "int8 simulation needs an int8x4 layer and core".into(),
        ));
    }
    check_layer_inputs(spec, input, weights)?;
    let padded_spec = spec.channel_padded();
    let input = pad_channels(input, padded_spec.c_in)?;
    let weights = pad_weight_channels(weights, padded_spec.c_in)?;
    let schedule = build_schedule(&padded_spec, core)?;
    let padded = pad_input(&input, spec.pad)?;
    let packed = pack_int8(&padded)?;
    Ok(run_layer::<Int8Mode>(
        core,
        &padded_spec,
        &schedule,
        &packed,
        &weights,
    ))
}

/// Simulate one job in isolation (fresh pipelines, nothing to overlap
/// with). Returns the tile-local output block and standalone stats whose
/// total includes the priming fill and the exposed drain tail.
pub fn simulate_tile_f32(
    core: &CoreConfig,
    job: &TileJob,
    padded_input: &Tensor3<f32>,
    weights: &Tensor4<f32>,
) -> Result<(Tensor3<f32>, CycleStats)> {
    if core.precision != Precision::Fp32 {
        return Err(Error::Shape(
            "fp32 tile simulation needs an fp32 core".into(),
        ));
    }
    let mut chain = ReceiverChain::new(core.num_pes);
    let (out, mac_words) = run_job::<Fp32Mode>(job, &mut chain, padded_input, weights);
    Ok((out, standalone_stats(job, mac_words, Fp32Mode::LANES)))
}

/// Int8 variant of [`simulate_tile_f32`]; takes the packed padded plane.
pub fn simulate_tile_int8(
    core: &CoreConfig,
    job: &TileJob,
    packed_input: &PackedInput,
    weights: &Tensor4<i8>,
) -> Result<(Tensor3<i32>, CycleStats)> {
    if core.precision != Precision::Int8x4 {
        return Err(Error::Shape(
            "int8 tile simulation needs an int8x4 core".into(),
        ));
    }
    let mut chain = ReceiverChain::new(core.num_pes);
    let (out, mac_words) = run_job::<Int8Mode>(job, &mut chain, packed_input, weights);
    Ok((out, standalone_stats(job, mac_words, Int8Mode::LANES)))
}

fn standalone_stats(job: &TileJob, mac_words: u64, lanes: u64) -> CycleStats {
    let mut timeline = Timeline::new();
    let mut stats = timeline.schedule_job(job);
    stats.macs_executed = mac_words * lanes;
    stats.pipeline_fill_cycles += timeline.makespan - stats.total_cycles;
    stats.total_cycles = timeline.makespan;
    debug_assert!(stats.accounting_holds());
    stats
}
