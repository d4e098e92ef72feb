//! lanesim: simulate and analyze convolution layers on a 1-D PE-array
//! accelerator core.

mod runner;
mod spec_arg;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use lanesim_core::analytics::PredictOptions;
use lanesim_core::fixture::SplitMix64;
use lanesim_core::sim::LayerStats;
use lanesim_core::tiler::{build_schedule, tile_output_plane};
use lanesim_core::vgg16::{scale_channels, vgg16};
use lanesim_core::{ConvLayerSpec, CoreConfig, Precision};

use runner::{
    analyze_row, generate_tensors, report_to_csv, run_indexed, sim_row, simulate,
    tensors_from_fixtures, write_json, FrontendTensors, Report,
};

#[derive(Parser)]
#[command(
    name = "lanesim",
    version,
    about = "Cycle-level model of a 1-D PE-array CNN accelerator core"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PrecisionArg {
    Fp32,
    Int8x4,
}

impl From<PrecisionArg> for Precision {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::Fp32 => Precision::Fp32,
            PrecisionArg::Int8x4 => Precision::Int8x4,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Analyze,
    Simulate,
    Both,
}

#[derive(Args)]
struct LayerSource {
    /// Layer shorthand CIxHxWxCO[,kKY[xKX]][,sS][,pP][,fp32|int8x4]
    #[arg(long, conflicts_with = "config")]
    layer: Option<String>,
    /// JSON run config with layer, optional core and tensor fixtures
    #[arg(long)]
    config: Option<String>,
}

#[derive(Args)]
struct CoreArgs {
    /// PEs in the core
    #[arg(long)]
    pes: Option<usize>,
    /// Arithmetic mode
    #[arg(long, value_enum, default_value = "fp32")]
    precision: PrecisionArg,
    /// Core clock in MHz (reporting only)
    #[arg(long, default_value_t = 250.0)]
    clock_mhz: f64,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the output-plane tiling as CSV
    Tile {
        #[arg(long)]
        height: usize,
        #[arg(long)]
        width: usize,
        #[arg(long)]
        pes: usize,
    },
    /// Dump the input-interconnect command stream of one scheduled tile
    Commands {
        #[command(flatten)]
        layer: LayerSource,
        #[command(flatten)]
        core: CoreArgs,
        /// Index into the tile list
        #[arg(long, default_value_t = 0)]
        tile: usize,
    },
    /// Simulate one layer cycle-level; write tensors and stats on request
    Simulate {
        #[command(flatten)]
        layer: LayerSource,
        #[command(flatten)]
        core: CoreArgs,
        /// Seed for generated tensors when no fixtures are given
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Check the output against the reference convolution
        #[arg(long)]
        verify: bool,
        /// Write the output tensor fixture here
        #[arg(long)]
        out_tensor: Option<String>,
        /// Write the stats record (JSON) here
        #[arg(long)]
        stats: Option<String>,
    },
    /// Closed-form analysis of one layer (no simulation)
    Analyze {
        #[command(flatten)]
        layer: LayerSource,
        #[command(flatten)]
        core: CoreArgs,
        /// Approximate input read time as window width squared
        #[arg(long)]
        paper_formula: bool,
    },
    /// Randomized simulator-vs-reference sweep
    Verify {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        count: usize,
    },
    /// Run the VGG-16 convolution workload
    Vgg16 {
        #[command(flatten)]
        core: CoreArgs,
        #[arg(long, value_enum, default_value = "analyze")]
        mode: Mode,
        /// Shorthand for --mode analyze
        #[arg(long, conflicts_with = "mode")]
        analyze: bool,
        /// Shorthand for --mode simulate
        #[arg(long, conflicts_with_all = ["mode", "analyze"])]
        simulate: bool,
        /// Check simulated outputs against the reference convolution
        #[arg(long)]
        verify: bool,
        /// Divide channel counts to keep simulation tractable
        #[arg(long, default_value_t = 1)]
        scale_channels: usize,
        /// Approximate input read time as window width squared
        #[arg(long)]
        paper_formula: bool,
        /// Tensor seed for simulation
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Also write the report as JSON
        #[arg(long)]
        json: Option<String>,
        /// Also write the CSV to a file
        #[arg(long)]
        csv: Option<String>,
    },
}

/// Write to stdout, treating a closed pipe as a normal end of output.
fn emit(text: &str) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => std::process::exit(0),
        other => other.context("writing to stdout"),
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Cmd::Tile { height, width, pes } => cmd_tile(height, width, pes),
        Cmd::Commands { layer, core, tile } => cmd_commands(layer, core, tile),
        Cmd::Simulate {
            layer,
            core,
            seed,
            verify,
            out_tensor,
            stats,
        } => cmd_simulate(layer, core, seed, verify, out_tensor, stats),
        Cmd::Analyze {
            layer,
            core,
            paper_formula,
        } => cmd_analyze(layer, core, paper_formula),
        Cmd::Verify { seed, count } => cmd_verify(seed, count),
        Cmd::Vgg16 {
            core,
            mode,
            analyze,
            simulate,
            verify,
            scale_channels: div,
            paper_formula,
            seed,
            json,
            csv,
        } => {
            let mode = if analyze {
                Mode::Analyze
            } else if simulate {
                Mode::Simulate
            } else {
                mode
            };
            cmd_vgg16(core, mode, verify, div, paper_formula, seed, json, csv)
        }
    }
}

/// Resolve the layer and core from CLI arguments and/or a config file.
fn resolve(
    layer: &LayerSource,
    core: &CoreArgs,
) -> Result<(ConvLayerSpec, CoreConfig, Option<FrontendTensors>)> {
    let (spec, cfg_core, tensors) = match (&layer.layer, &layer.config) {
        (Some(text), None) => (
            spec_arg::parse_layer(text, core.precision.into())?,
            None,
            None,
        ),
        (None, Some(path)) => {
            let cfg = spec_arg::load_config(path)?;
            let tensors = match (&cfg.input, &cfg.weights) {
                (Some(i), Some(w)) => Some(tensors_from_fixtures(&cfg.layer, i, w)?),
                (None, None) => None,
                _ => bail!("config must provide both input and weights or neither"),
            };
            (cfg.layer, cfg.core, tensors)
        }
        _ => bail!("exactly one of --layer or --config is required"),
    };
    let core_cfg = match cfg_core {
        Some(c) => c,
        None => {
            let pes = core
                .pes
                .ok_or_else(|| anyhow!("--pes is required without a config core"))?;
            CoreConfig {
                clock_mhz: core.clock_mhz,
                ..CoreConfig::new(pes, spec.precision)
            }
        }
    };
    if core_cfg.precision != spec.precision {
        bail!("core precision does not match the layer");
    }
    Ok((spec, core_cfg, tensors))
}

fn cmd_tile(height: usize, width: usize, pes: usize) -> Result<()> {
    let mut text = String::from("kind,origin_y,origin_x,height,width,pixels\n");
    for t in tile_output_plane(height, width, pes) {
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            t.kind.name(),
            t.origin_y,
            t.origin_x,
            t.height,
            t.width,
            t.pixels()
        ));
    }
    emit(&text)
}

fn cmd_commands(layer: LayerSource, core: CoreArgs, tile: usize) -> Result<()> {
    let (spec, core_cfg, _) = resolve(&layer, &core)?;
    let schedule = build_schedule(&spec.channel_padded(), &core_cfg)
        .map_err(|e| anyhow!("scheduling failed: {e}"))?;
    let tiles: Vec<_> = {
        // one entry per spatial tile (channel chunks share the stream)
        let mut seen = Vec::new();
        for j in &schedule.jobs {
            if seen.last().map(|t| t != &j.tile).unwrap_or(true) {
                seen.push(j.tile);
            }
        }
        seen
    };
    let job = schedule
        .jobs
        .iter()
        .find(|j| tiles.get(tile).is_some_and(|t| &j.tile == t))
        .ok_or_else(|| anyhow!("tile index {tile} out of range ({} tiles)", tiles.len()))?;
    let mut text = format!(
        "# tile {} at ({},{}) {}x{}, window {}x{} at ({},{})\n",
        tile,
        job.tile.origin_y,
        job.tile.origin_x,
        job.tile.height,
        job.tile.width,
        job.win_h,
        job.win_w,
        job.win_y,
        job.win_x
    );
    text.push_str("cycle,code,mnemonic,in_y,in_x\n");
    for (cycle, w) in job.commands.iter().enumerate() {
        text.push_str(&format!(
            "{cycle},{},{},{},{}\n",
            w.cmd.code(),
            w.cmd.mnemonic(),
            w.iy,
            w.ix
        ));
    }
    emit(&text)
}

fn cmd_simulate(
    layer: LayerSource,
    core: CoreArgs,
    seed: u64,
    verify: bool,
    out_tensor: Option<String>,
    stats_path: Option<String>,
) -> Result<()> {
    let (spec, core_cfg, tensors) = resolve(&layer, &core)?;
    let tensors = match tensors {
        Some(t) => t,
        None => generate_tensors(&spec, seed),
    };
    let (out, stats) = simulate(&spec, &core_cfg, &tensors, verify)?;
    print_sim_summary(&spec, &core_cfg, &stats, verify);
    if let Some(path) = out_tensor {
        write_json(&path, &out.to_fixture())?;
    }
    if let Some(path) = stats_path {
        #[derive(serde::Serialize)]
        struct StatsDoc<'a> {
            layer: &'a ConvLayerSpec,
            core: &'a CoreConfig,
            stats: &'a LayerStats,
            gflops: f64,
        }
        let doc = StatsDoc {
            layer: &spec,
            core: &core_cfg,
            stats: &stats,
            gflops: stats.total.ops_per_sec(core_cfg.clock_hz()) / 1e9,
        };
        write_json(&path, &doc)?;
    }
    Ok(())
}

fn print_sim_summary(spec: &ConvLayerSpec, core: &CoreConfig, stats: &LayerStats, verified: bool) {
    let t = &stats.total;
    let ms = t.total_cycles as f64 / core.clock_hz() * 1e3;
    println!(
        "simulated {}x{}x{}x{} k{}x{} s{} p{} on {} PEs: {} cycles ({:.4} ms core-time), \
         {:.3} gflops, compute {} input_stall {} output_stall {} fill {}{}",
        spec.c_in,
        spec.h_in,
        spec.w_in,
        spec.c_out,
        spec.k_y,
        spec.k_x,
        spec.stride,
        spec.pad,
        core.num_pes,
        t.total_cycles,
        ms,
        t.ops_per_sec(core.clock_hz()) / 1e9,
        t.compute_cycles,
        t.input_stall_cycles,
        t.output_stall_cycles,
        t.pipeline_fill_cycles,
        if verified {
            ", verified against reference"
        } else {
            ""
        }
    );
}

fn cmd_analyze(layer: LayerSource, core: CoreArgs, paper_formula: bool) -> Result<()> {
    let (spec, core_cfg, _) = resolve(&layer, &core)?;
    let opts = PredictOptions {
        square_input_window: paper_formula,
    };
    let row = analyze_row("layer", &spec.channel_padded(), &core_cfg, opts)?;
    let report = Report {
        rows: vec![row],
        peak_gflops: lanesim_core::analytics::peak_ops_per_sec(&core_cfg) / 1e9,
        overall_gflops: None,
        max_fraction_of_peak: None,
    };
    emit(&report_to_csv(&report, false))?;
    Ok(())
}

fn cmd_verify(seed: u64, count: usize) -> Result<()> {
    let pe_choices = [1usize, 4, 9, 16, 36, 64];
    let mut rng = SplitMix64::new(seed);
    let mut cases = Vec::with_capacity(count);
    for i in 0..count {
        let precision = if i % 2 == 0 {
            Precision::Fp32
        } else {
            Precision::Int8x4
        };
        let spec = loop {
            let s = ConvLayerSpec {
                c_in: 1 + rng.next_below(16) as usize,
                c_out: 1 + rng.next_below(16) as usize,
                h_in: 1 + rng.next_below(16) as usize,
                w_in: 1 + rng.next_below(16) as usize,
                k_y: 1 + rng.next_below(5) as usize,
                k_x: 1 + rng.next_below(5) as usize,
                stride: 1 + rng.next_below(2) as usize,
                pad: rng.next_below(3) as usize,
                precision,
            };
            if s.validate().is_ok() {
                break s;
            }
        };
        let pes = pe_choices[rng.next_below(pe_choices.len() as u64) as usize];
        cases.push((
            spec,
            pes,
            seed ^ (i as u64).wrapping_mul(0x9E3779B97F4A7C15),
        ));
    }

    let results = run_indexed(cases.len(), |i| {
        let (spec, pes, tseed) = &cases[i];
        let core = CoreConfig::new(*pes, spec.precision);
        let tensors = generate_tensors(spec, *tseed);
        Ok(simulate(spec, &core, &tensors, true).map(|_| ()))
    })?;

    let failures: Vec<&(ConvLayerSpec, usize, u64)> = results
        .iter()
        .zip(cases.iter())
        .filter_map(|(r, c)| r.is_err().then_some(c))
        .collect();
    if failures.is_empty() {
        println!(
            "verify: {count} randomized layers matched the reference bit-exactly (seed {seed})"
        );
        Ok(())
    } else {
        let minimal = failures
            .iter()
            .min_by_key(|(s, _, _)| s.c_in * s.h_in * s.w_in * s.c_out * s.k_y * s.k_x)
            .unwrap();
        println!(
            "verify: {} of {count} layers FAILED; minimal failing spec: {:?} on {} PEs",
            failures.len(),
            minimal.0,
            minimal.1
        );
        bail!("verification failed");
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_vgg16(
    core: CoreArgs,
    mode: Mode,
    verify: bool,
    divisor: usize,
    paper_formula: bool,
    seed: u64,
    json: Option<String>,
    csv: Option<String>,
) -> Result<()> {
    let precision: Precision = core.precision.into();
    let pes = core.pes.ok_or_else(|| anyhow!("--pes is required"))?;
    let core_cfg = CoreConfig {
        clock_mhz: core.clock_mhz,
        ..CoreConfig::new(pes, precision)
    };
    let opts = PredictOptions {
        square_input_window: paper_formula,
    };
    if divisor < 1 {
        bail!("--scale-channels must be at least 1");
    }

    let layers = vgg16(precision);
    let simulate_mode = matches!(mode, Mode::Simulate | Mode::Both);

    let rows = run_indexed(layers.len(), |i| {
        let layer = &layers[i];
        let spec = if divisor > 1 {
            scale_channels(&layer.spec, divisor)
        } else {
            layer.spec
        };
        let mut row = analyze_row(layer.name, &spec.channel_padded(), &core_cfg, opts)
            .with_context(|| format!("layer {}", layer.name))?;
        if simulate_mode {
            let tensors = generate_tensors(&spec, seed ^ ((i as u64) << 32));
            let (_, stats) = simulate(&spec, &core_cfg, &tensors, verify)
                .with_context(|| format!("layer {}", layer.name))?;
            row.simulated = Some(sim_row(&spec, &core_cfg, &stats));
        }
        Ok(row)
    })?;

    let peak = lanesim_core::analytics::peak_ops_per_sec(&core_cfg) / 1e9;
    let (overall, max_frac) = if simulate_mode {
        let total_ops: f64 = rows
            .iter()
            .map(|r| r.simulated.as_ref().unwrap().work_gops * (1u64 << 30) as f64)
            .sum();
        let total_time: f64 = rows
            .iter()
            .map(|r| r.simulated.as_ref().unwrap().core_time_ms / 1e3)
            .sum();
        let best = rows
            .iter()
            .map(|r| r.simulated.as_ref().unwrap().gflops)
            .fold(0.0f64, f64::max);
        (Some(total_ops / total_time / 1e9), Some(best / peak))
    } else {
        (None, None)
    };

    let report = Report {
        rows,
        peak_gflops: peak,
        overall_gflops: overall,
        max_fraction_of_peak: max_frac,
    };
    let text = report_to_csv(&report, simulate_mode);
    emit(&text)?;
    if let Some(path) = csv {
        std::fs::write(&path, &text).with_context(|| format!("writing {path}"))?;
    }
    if let Some(path) = json {
        write_json(&path, &report)?;
    }
    Ok(())
}
