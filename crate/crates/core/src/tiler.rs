//! Output-plane tiling and per-layer scheduling.
//!
//! The output plane is covered with as many PxP regular tiles as fit
//! (P = floor(sqrt(num_pes))), leaving a right strip and a bottom strip.
//! The right strip spans the full height and owns the corner; the bottom
//! strip excludes it. A strip is scheduled whole when its pixel count
//! fits the PE array, otherwise it is cut into sub-tiles of strip width
//! by P (last one shorter). Any rectangle with at most num_pes pixels is
//! schedulable; the array puts no constraint on aspect ratio.
//!
//! Output pixels of a tile map to PE indices row-major:
//! pe = (y - origin_y) * width + (x - origin_x).

use serde::{Deserialize, Serialize};

use crate::config::CoreConfig;
use crate::error::{Error, Result};
use crate::interconnect::{generate_command_stream, CommandWord};
use crate::tensor::ConvLayerSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TileKind {
    /// Regular PxP tile.
    Rr,
    /// Right remainder strip scheduled whole.
    Rs,
    /// Bottom remainder strip scheduled whole.
    Sr,
    /// Sub-tile of a strip that did not fit whole.
    Sub,
}

impl TileKind {
    pub fn name(self) -> &'static str {
        match self {
            TileKind::Rr => "RR",
            TileKind::Rs => "RS",
            TileKind::Sr => "SR",
            TileKind::Sub => "SUB",
        }
    }
}

/// One rectangle of the output plane, in output-pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tile {
    pub origin_y: usize,
    pub origin_x: usize,
    pub height: usize,
    pub width: usize,
    pub kind: TileKind,
}

impl Tile {
    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    /// PE index of output pixel (y, x), which must lie inside the tile.
    pub fn pe_of(&self, y: usize, x: usize) -> usize {
        debug_assert!(y >= self.origin_y && y < self.origin_y + self.height);
        debug_assert!(x >= self.origin_x && x < self.origin_x + self.width);
        (y - self.origin_y) * self.width + (x - self.origin_x)
    }
}

/// Cover the h_out x w_out plane with tiles that each fit num_pes PEs.
/// Tiles come out in raster order: RR tiles, then the right strip, then
/// the bottom strip.
pub fn tile_output_plane(h_out: usize, w_out: usize, num_pes: usize) -> Vec<Tile> {
    assert!(num_pes >= 1, "need at least one PE");
    let p = (num_pes as f64).sqrt().floor() as usize;
    let p = p.max(1);
    let rr_rows = h_out / p;
    let rr_cols = w_out / p;
    let mut tiles = Vec::new();

    for ty in 0..rr_rows {
        for tx in 0..rr_cols {
            tiles.push(Tile {
                origin_y: ty * p,
                origin_x: tx * p,
                height: p,
                width: p,
                kind: TileKind::Rr,
            });
        }
    }

    // right strip: full height, includes the corner
    let rs_w = w_out - rr_cols * p;
    if rs_w > 0 {
        let x0 = rr_cols * p;
        if h_out * rs_w <= num_pes {
            tiles.push(Tile {
                origin_y: 0,
                origin_x: x0,
                height: h_out,
                width: rs_w,
                kind: TileKind::Rs,
            });
        } else {
            let mut y = 0;
            while y < h_out {
                let h = p.min(h_out - y);
                tiles.push(Tile {
                    origin_y: y,
                    origin_x: x0,
                    height: h,
                    width: rs_w,
                    kind: TileKind::Sub,
                });
                y += h;
            }
        }
    }

    // bottom strip: spans only the RR columns
    let sr_h = h_out - rr_rows * p;
    let sr_w = rr_cols * p;
    if sr_h > 0 && sr_w > 0 {
        let y0 = rr_rows * p;
        if sr_h * sr_w <= num_pes {
            tiles.push(Tile {
                origin_y: y0,
                origin_x: 0,
                height: sr_h,
                width: sr_w,
                kind: TileKind::Sr,
            });
        } else {
            let mut x = 0;
            while x < sr_w {
                let w = p.min(sr_w - x);
                tiles.push(Tile {
                    origin_y: y0,
                    origin_x: x,
                    height: sr_h,
                    width: w,
                    kind: TileKind::Sub,
                });
                x += w;
            }
        }
    }

    tiles
}

/// One scheduled unit of work: a tile crossed with an output-channel
/// chunk, together with its input window (in padded-input coordinates)
/// and the input-interconnect command stream that drives it.
///
/// Weights stream per input group in (c_out, k_y, k_x) order, one word
/// per cycle, re-broadcast for every group since PEs hold no weights.
#[derive(Debug, Clone)]
pub struct TileJob {
    pub tile: Tile,
    pub layer: ConvLayerSpec,
    pub co_start: usize,
    pub co_count: usize,
    /// Input window origin in the padded plane.
    pub win_y: usize,
    pub win_x: usize,
    /// Input window extent: ((height-1)*stride + k_y) x ((width-1)*stride + k_x).
    pub win_h: usize,
    pub win_w: usize,
    /// One command per streamed input word, shared by every input group.
    pub commands: Vec<CommandWord>,
    /// Whether the input FIFO holds two windows (next group streams while
    /// the current one is consumed). False only for kernels too large to
    /// double-buffer, which then stall between groups.
    pub double_buffered: bool,
}

impl TileJob {
    /// Streamed input words per group.
    pub fn words_per_group(&self) -> usize {
        self.commands.len()
    }

    /// Broadcast weight words per group.
    pub fn weights_per_group(&self) -> usize {
        self.layer.k_y * self.layer.k_x * self.co_count
    }

    pub fn active_pes(&self) -> usize {
        self.tile.pixels()
    }

    /// Outputs drained after the last group.
    pub fn drain_words(&self) -> usize {
        self.active_pes() * self.co_count
    }
}

/// Ordered schedule of one layer on one core.
#[derive(Debug, Clone)]
pub struct Schedule {
    pub jobs: Vec<TileJob>,
    pub tiles: usize,
    pub active_pe_sum: u64,
}

/// Tile the layer and attach command streams and channel chunking.
pub fn build_schedule(spec: &ConvLayerSpec, core: &CoreConfig) -> Result<Schedule> {
    spec.validate()?;
    core.validate()?;
    if spec.precision != core.precision {
        return Err(Error::Unschedulable(format!(
            "layer precision {:?} does not match core precision {:?}",
            spec.precision, core.precision
        )));
    }
    let window = spec.k_y * spec.k_x;
    if window > core.input_buffer_entries {
        return Err(Error::Unschedulable(format!(
            "kernel window {}x{} needs {} input buffer entries, core has {}",
            spec.k_y, spec.k_x, window, core.input_buffer_entries
        )));
    }
    let double_buffered = 2 * window <= core.input_buffer_entries;
    let chunk = core.max_co_chunk();

    let tiles = tile_output_plane(spec.h_out(), spec.w_out(), core.num_pes);
    let mut jobs = Vec::new();
    let mut active_pe_sum = 0u64;
    for tile in &tiles {
        let commands = generate_command_stream(tile.height, tile.width, spec)?;
        let mut co_start = 0;
        while co_start < spec.c_out {
            let co_count = chunk.min(spec.c_out - co_start);
            jobs.push(TileJob {
                tile: *tile,
                layer: *spec,
                co_start,
                co_count,
                win_y: tile.origin_y * spec.stride,
                win_x: tile.origin_x * spec.stride,
                win_h: (tile.height - 1) * spec.stride + spec.k_y,
                win_w: (tile.width - 1) * spec.stride + spec.k_x,
                commands: commands.clone(),
                double_buffered,
            });
            active_pe_sum += tile.pixels() as u64;
            co_start += co_count;
        }
    }
    Ok(Schedule {
        jobs,
        tiles: tiles.len(),
        active_pe_sum,
    })
}
