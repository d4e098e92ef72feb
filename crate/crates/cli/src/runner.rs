//! Per-layer execution pipeline and report assembly.
//!
//! The pipeline mirrors what a host runtime would do: generate or load
//! frontend tensors (WHC features, KyKxCiCo weights), transform them to
//! the core layouts, then schedule, simulate or analyze, and verify
//! against the reference convolution on request.

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;

use lanesim_core::analytics::{
    predict_cycles, total_utilization, PredictOptions, UtilizationReport,
};
use lanesim_core::fixture::{SplitMix64, TensorFixture};
use lanesim_core::reference::{conv2d_reference_f32, conv2d_reference_int8};
use lanesim_core::sim::{simulate_layer_f32, simulate_layer_int8, LayerStats};
use lanesim_core::tensor::{
    pad_channels, pad_weight_channels, transform_features, transform_weights,
};
use lanesim_core::{ConvLayerSpec, CoreConfig, Layout3, Layout4, Precision, Tensor3, Tensor4};

/// Frontend-layout tensors of one layer, before the layout transforms.
pub enum FrontendTensors {
    Fp32 {
        input: Tensor3<f32>,
        weights: Tensor4<f32>,
    },
    Int8 {
        input: Tensor3<i8>,
        weights: Tensor4<i8>,
    },
}

/// Output tensor of a simulated layer.
pub enum LayerOutput {
    Fp32(Tensor3<f32>),
    Int8(Tensor3<i32>),
}

impl LayerOutput {
    pub fn to_fixture(&self) -> TensorFixture {
        match self {
            LayerOutput::Fp32(t) => TensorFixture::from_tensor3_f32(t),
            LayerOutput::Int8(t) => TensorFixture::from_tensor3_i32(t),
        }
    }
}

/// Deterministic frontend tensors for a layer. Seeds derive from the base
/// seed and the tensor role so fixtures regenerate identically.
pub fn generate_tensors(spec: &ConvLayerSpec, seed: u64) -> FrontendTensors {
    let feat_dims = [spec.w_in, spec.h_in, spec.c_in];
    let w_dims = [spec.k_y, spec.k_x, spec.c_in, spec.c_out];
    match spec.precision {
        Precision::Fp32 => {
            let mut rng = SplitMix64::new(seed);
            let input = Tensor3::from_vec(
                Layout3::Whc,
                feat_dims,
                (0..feat_dims.iter().product())
                    .map(|_| rng.next_f32())
                    .collect(),
            )
            .expect("sized by construction");
            let mut rng = SplitMix64::new(seed ^ 0x5eed_0001);
            let weights = Tensor4::from_vec(
                Layout4::KyKxCiCo,
                w_dims,
                (0..w_dims.iter().product())
                    .map(|_| rng.next_f32())
                    .collect(),
            )
            .expect("sized by construction");
            FrontendTensors::Fp32 { input, weights }
        }
        Precision::Int8x4 => {
            let mut rng = SplitMix64::new(seed);
            let input = Tensor3::from_vec(
                Layout3::Whc,
                feat_dims,
                (0..feat_dims.iter().product())
                    .map(|_| rng.next_i8())
                    .collect(),
            )
            .expect("sized by construction");
            let mut rng = SplitMix64::new(seed ^ 0x5eed_0001);
            let weights = Tensor4::from_vec(
                Layout4::KyKxCiCo,
                w_dims,
                (0..w_dims.iter().product())
                    .map(|_| rng.next_i8())
                    .collect(),
            )
            .expect("sized by construction");
            FrontendTensors::Int8 { input, weights }
        }
    }
}

pub fn tensors_from_fixtures(
    spec: &ConvLayerSpec,
    input: &TensorFixture,
    weights: &TensorFixture,
) -> Result<FrontendTensors> {
    Ok(match spec.precision {
        Precision::Fp32 => FrontendTensors::Fp32 {
            input: input
                .to_tensor3_f32()
                .map_err(|e| anyhow!("input fixture: {e}"))?,
            weights: weights
                .to_tensor4_f32()
                .map_err(|e| anyhow!("weight fixture: {e}"))?,
        },
        Precision::Int8x4 => FrontendTensors::Int8 {
            input: input
                .to_tensor3_i8()
                .map_err(|e| anyhow!("input fixture: {e}"))?,
            weights: weights
                .to_tensor4_i8()
                .map_err(|e| anyhow!("weight fixture: {e}"))?,
        },
    })
}

/// Simulate the layer end to end; optionally verify against the reference
/// convolution (bit-exact).
pub fn simulate(
    spec: &ConvLayerSpec,
    core: &CoreConfig,
    tensors: &FrontendTensors,
    verify: bool,
) -> Result<(LayerOutput, LayerStats)> {
    match tensors {
        FrontendTensors::Fp32 { input, weights } => {
            let input = if input.layout() == Layout3::Whc {
                transform_features(input)?
            } else {
                input.clone()
            };
            let weights = if weights.layout() == Layout4::KyKxCiCo {
                transform_weights(weights)?
            } else {
                weights.clone()
            };
            let (out, stats) = simulate_layer_f32(core, spec, &input, &weights)?;
            if verify {
                let expect = conv2d_reference_f32(&input, &weights, spec)?;
                if out != expect {
                    bail!("simulated output diverges from the reference convolution");
                }
            }
            Ok((LayerOutput::Fp32(out), stats))
        }
        FrontendTensors::Int8 { input, weights } => {
            let input = if input.layout() == Layout3::Whc {
                transform_features(input)?
            } else {
                input.clone()
            };
            let weights = if weights.layout() == Layout4::KyKxCiCo {
                transform_weights(weights)?
            } else {
                weights.clone()
            };
            let (out, stats) = simulate_layer_int8(core, spec, &input, &weights)?;
            if verify {
                let padded = spec.channel_padded();
                let pin = pad_channels(&input, padded.c_in)?;
                let pw = pad_weight_channels(&weights, padded.c_in)?;
                let expect = conv2d_reference_int8(&pin, &pw, &padded)?;
                if out != expect {
                    bail!("simulated output diverges from the reference convolution");
                }
            }
            Ok((LayerOutput::Int8(out), stats))
        }
    }
}

/// One row of a report, covering both the analytical and simulated views.
#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub layer: String,
    pub tiles: usize,
    pub u_spatial: f64,
    pub u_temporal: f64,
    pub u_total: f64,
    pub binding_constraint: &'static str,
    pub predicted_cycles: u64,
    pub predicted_gflops: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulated: Option<SimRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimRow {
    pub work_gops: f64,
    pub core_time_ms: f64,
    pub gflops: f64,
    pub total_cycles: u64,
    pub compute_cycles: u64,
    pub input_stall_cycles: u64,
    pub output_stall_cycles: u64,
    pub pipeline_fill_cycles: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub peak_gflops: f64,
    /// Total ops over total simulated time (simulation reports only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overall_gflops: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_fraction_of_peak: Option<f64>,
}

pub fn analyze_row(
    name: &str,
    spec: &ConvLayerSpec,
    core: &CoreConfig,
    opts: PredictOptions,
) -> Result<ReportRow> {
    let u: UtilizationReport =
        total_utilization(spec, core).map_err(|e| anyhow!("layer {name}: {e}"))?;
    let cycles = predict_cycles(spec, core, opts).map_err(|e| anyhow!("layer {name}: {e}"))?;
    let time_s = cycles as f64 / core.clock_hz();
    let tiles =
        lanesim_core::tiler::tile_output_plane(spec.h_out(), spec.w_out(), core.num_pes).len();
    Ok(ReportRow {
        layer: name.to_string(),
        tiles,
        u_spatial: u.u_spatial,
        u_temporal: u.u_temporal,
        u_total: u.u_total,
        binding_constraint: u.binding_constraint.name(),
        predicted_cycles: cycles,
        predicted_gflops: spec.ops() as f64 / time_s / 1e9,
        simulated: None,
    })
}

pub fn sim_row(spec: &ConvLayerSpec, core: &CoreConfig, stats: &LayerStats) -> SimRow {
    let cycles = stats.total.total_cycles;
    let time_s = cycles as f64 / core.clock_hz();
    SimRow {
        work_gops: lanesim_core::vgg16::gops_binary(spec.ops()),
        core_time_ms: time_s * 1e3,
        gflops: spec.ops() as f64 / time_s / 1e9,
        total_cycles: cycles,
        compute_cycles: stats.total.compute_cycles,
        input_stall_cycles: stats.total.input_stall_cycles,
        output_stall_cycles: stats.total.output_stall_cycles,
        pipeline_fill_cycles: stats.total.pipeline_fill_cycles,
    }
}

/// Fixed-format CSV so identical invocations emit identical bytes.
pub fn report_to_csv(report: &Report, simulated: bool) -> String {
    let mut out = String::new();
    if simulated {
        out.push_str(
            "layer,tiles,u_spatial,u_temporal,u_total,binding_constraint,predicted_cycles,\
             predicted_gflops,work_gops,core_time_ms,gflops,total_cycles,compute_cycles,\
             input_stall_cycles,output_stall_cycles,pipeline_fill_cycles\n",
        );
    } else {
        out.push_str(
            "layer,tiles,u_spatial,u_temporal,u_total,binding_constraint,predicted_cycles,\
             predicted_gflops\n",
        );
    }
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{},{},{:.4}",
            r.layer,
            r.tiles,
            r.u_spatial,
            r.u_temporal,
            r.u_total,
            r.binding_constraint,
            r.predicted_cycles,
            r.predicted_gflops
        ));
        if simulated {
            let s = r.simulated.as_ref().expect("simulated row");
            out.push_str(&format!(
                ",{:.4},{:.4},{:.4},{},{},{},{},{}",
                s.work_gops,
                s.core_time_ms,
                s.gflops,
                s.total_cycles,
                s.compute_cycles,
                s.input_stall_cycles,
                s.output_stall_cycles,
                s.pipeline_fill_cycles
            ));
        }
        out.push('\n');
    }
    out.push_str(&format!("peak_gflops,{:.4}\n", report.peak_gflops));
    if let Some(v) = report.overall_gflops {
        out.push_str(&format!("overall_gflops,{v:.4}\n"));
    }
    if let Some(v) = report.max_fraction_of_peak {
        out.push_str(&format!("max_fraction_of_peak,{v:.4}\n"));
    }
    out
}

/// Worker-thread count from LANESIM_THREADS (default 1).
pub fn thread_count() -> usize {
    std::env::var("LANESIM_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

/// Run `f` over the indices 0..n, possibly on LANESIM_THREADS workers,
/// collecting results in index order.
pub fn run_indexed<T: Send, F>(n: usize, f: F) -> Result<Vec<T>>
where
    F: Fn(usize) -> Result<T> + Sync,
{
    let threads = thread_count().min(n.max(1));
    if threads <= 1 {
        return (0..n).map(&f).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let results: Vec<std::sync::Mutex<Option<Result<T>>>> =
        (0..n).map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= n {
                    break;
                }
                *results[i].lock().unwrap() = Some(f(i));
            });
        }
    });
    results
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("worker covered every index"))
        .collect()
}

/// Write a serializable document as pretty JSON.
pub fn write_json<T: Serialize>(path: &str, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).context("serializing JSON")?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {path}"))
}
