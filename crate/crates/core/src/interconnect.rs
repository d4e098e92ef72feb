//! Input-multicast protocol: receiver state machine, command vocabulary,
//! controller-side stream generation, and the geometric oracle both are
//! checked against.
//!
//! Input values stream row-major over a tile's input window, one value
//! per cycle, each bundled with a 4-bit command. The PEs of a tile form a
//! logical 2-D grid (row-major over the tile) threaded by one pipelined
//! chain; a command transforms the set of active receivers (RD flags) as
//! it passes PE to PE. For consecutive inputs of a row the receiver
//! column interval changes by at most one column on each side, so three
//! primitives cover it: dilate, shift, erode. Row changes reset the
//! column interval to the row head and move the active row band with the
//! Y commands.
//!
//! Receiver state is two bits per PE:
//! * RD: active, will cache the arriving data word
//! * LS: this PE is the head (column 0) of a row with active receivers
//!
//! The X commands edit each maximal run of RD flags in chain order, which
//! coincides with per-row column intervals except when full-width runs
//! touch. The one such reachable case, the erode intermediate arriving at
//! a row head, restarts the erode there (see `receiver_step`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ConvLayerSpec;
use crate::tiler::Tile;

/// 4-bit command code travelling with each input word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Command(u8);

impl Command {
    pub const NO_OP: Command = Command(0);
    pub const DILATE_X: Command = Command(1);
    pub const ERODE_X: Command = Command(2);
    pub const SHIFT_X: Command = Command(3);
    pub const ROTATE_Y: Command = Command(4);
    pub const DILATE_Y: Command = Command(5);
    pub const ERODE_Y: Command = Command(6);
    pub const SHIFT_Y: Command = Command(7);
    /// In-flight form of ShiftX past the run start.
    pub const SHIFT_X_MID: Command = Command(8);
    /// In-flight form of DilateX past the run start.
    pub const DILATE_X_MID: Command = Command(9);
    /// In-flight form of ErodeX past the run start.
    pub const ERODE_X_MID: Command = Command(10);
    /// Y-walk seeking the next active run (DilateY/ShiftY).
    pub const Y_MID_SEEK: Command = Command(11);
    /// Y-walk carrying an activation to the next row head (DilateY/ShiftY).
    pub const Y_MID_CARRY: Command = Command(12);
    /// First input of a tile; resets every receiver.
    pub const START: Command = Command(13);
    /// Propagated form of Start behind the head PE.
    pub const STARTED: Command = Command(14);

    pub fn new(code: u8) -> Result<Command> {
        if code <= 14 {
            Ok(Command(code))
        } else {
            Err(Error::Shape(format!("command code {code} out of range")))
        }
    }

    pub fn code(self) -> u8 {
        self.0
    }

    pub fn mnemonic(self) -> &'static str {
        match self.0 {
            0 => "NoOp",
            1 => "DilateX",
            2 => "ErodeX",
            3 => "ShiftX",
            4 => "RotateY",
            5 => "DilateY",
            6 => "ErodeY",
            7 => "ShiftY",
            8 => "ShiftXMid",
            9 => "DilateXMid",
            10 => "ErodeXMid",
            11 => "YMidSeek",
            12 => "YMidCarry",
            13 => "Start",
            14 => "Started",
            _ => unreachable!(),
        }
    }
}

/// Per-PE receiver flags.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReceiverState {
    pub rd: bool,
    pub ls: bool,
}

/// Outcome of one command passing one receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReceiverStep {
    pub state: ReceiverState,
    pub forward: Command,
    /// Whether this PE caches the data word riding with the command.
    pub cache: bool,
}

/// One receiver transition. Unlisted (state, command) pairs forward the
/// command unchanged and keep the state, with one exception: the erode
/// intermediate (10) at an active row head clears RD and keeps eroding,
/// otherwise a full-width erode would skip every row but the first. The
/// exhaustive replay-vs-oracle sweep pins this behaviour down.
pub fn receiver_step(state: ReceiverState, cmd: Command) -> ReceiverStep {
    let ReceiverState { rd, ls } = state;
    let (rd2, ls2, fwd) = match cmd.code() {
        3 if rd => (false, ls, 8),
        8 if !rd => (true, ls, 3),
        1 if rd => (true, ls, 9),
        9 if !rd => (true, ls, 1),
        2 if rd => (false, ls, 10),
        10 if !rd => (false, ls, 2),
        10 if ls => (false, ls, 10),
        4 => (ls, ls, 4),
        6 if ls => (rd, false, 4),
        7 if ls => (rd, false, 11),
        11 if rd => (false, ls, 12),
        12 if !rd => (true, true, 11),
        5 if ls => (true, ls, 11),
        13 => (true, true, 14),
        14 => (false, false, 14),
        c => (rd, ls, c),
    };
    let next = ReceiverState { rd: rd2, ls: ls2 };
    ReceiverStep {
        state: next,
        forward: Command(fwd),
        cache: rd2,
    }
}

/// The receivers of one simulated core, in chain order. The logical 2-D
/// arrangement is row-major over the scheduled tile; PEs past the tile
/// stay inactive. Commands advance one PE per cycle; since words never
/// interact, replaying a word is a fold along the chain.
#[derive(Debug, Clone)]
pub struct ReceiverChain {
    states: Vec<ReceiverState>,
}

impl ReceiverChain {
    pub fn new(num_pes: usize) -> Self {
        Self {
            states: vec![ReceiverState::default(); num_pes],
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, pe: usize) -> ReceiverState {
        self.states[pe]
    }

    /// Push one (command, data) bundle down the chain, invoking `on_cache`
    /// for every PE that caches the data word.
    pub fn step_word(&mut self, cmd: Command, mut on_cache: impl FnMut(usize)) {
        let mut c = cmd;
        for (pe, st) in self.states.iter_mut().enumerate() {
            let r = receiver_step(*st, c);
            *st = r.state;
            c = r.forward;
            if r.cache {
                on_cache(pe);
            }
        }
    }

    /// Convenience wrapper collecting the cached-by set.
    pub fn step_collect(&mut self, cmd: Command) -> Vec<usize> {
        let mut v = Vec::new();
        self.step_word(cmd, |pe| v.push(pe));
        v
    }
}

/// Closed interval of active rows or columns; `None` when no PE needs the
/// input (possible only when the kernel is narrower than the stride).
fn axis_interval(extent: usize, k: usize, stride: usize, i: usize) -> Option<(usize, usize)> {
    let lo = if i + 1 > k {
        (i + 1 - k).div_ceil(stride)
    } else {
        0
    };
    let hi = (i / stride).min(extent - 1);
    (lo <= hi).then_some((lo, hi))
}

/// Rectangle of receiver PEs in tile-local output coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReceiverRect {
    pub rows: (usize, usize),
    pub cols: (usize, usize),
}

impl ReceiverRect {
    pub fn contains(&self, oy: usize, ox: usize) -> bool {
        oy >= self.rows.0 && oy <= self.rows.1 && ox >= self.cols.0 && ox <= self.cols.1
    }

    pub fn pes(&self, tile_w: usize) -> impl Iterator<Item = usize> + '_ {
        let (r0, r1) = self.rows;
        let (c0, c1) = self.cols;
        (r0..=r1).flat_map(move |oy| (c0..=c1).map(move |ox| oy * tile_w + ox))
    }

    pub fn count(&self) -> usize {
        (self.rows.1 - self.rows.0 + 1) * (self.cols.1 - self.cols.0 + 1)
    }
}

/// Receiver set of the input at window-local (iy, ix): every PE whose
/// convolution window covers that input.
pub fn receiver_rect(
    tile_h: usize,
    tile_w: usize,
    k_y: usize,
    k_x: usize,
    stride: usize,
    iy: usize,
    ix: usize,
) -> Option<ReceiverRect> {
    let rows = axis_interval(tile_h, k_y, stride, iy)?;
    let cols = axis_interval(tile_w, k_x, stride, ix)?;
    Some(ReceiverRect { rows, cols })
}

/// Receiver set for an input value at absolute padded-plane coordinates,
/// as tile-local PE indices.
pub fn oracle_receivers(
    tile: &Tile,
    spec: &ConvLayerSpec,
    iy: usize,
    ix: usize,
) -> Result<Vec<usize>> {
    let win_y = tile.origin_y * spec.stride;
    let win_x = tile.origin_x * spec.stride;
    let win_h = (tile.height - 1) * spec.stride + spec.k_y;
    let win_w = (tile.width - 1) * spec.stride + spec.k_x;
    if iy < win_y || iy >= win_y + win_h || ix < win_x || ix >= win_x + win_w {
        return Err(Error::Shape(format!(
            "input ({iy},{ix}) outside tile window origin ({win_y},{win_x}) extent {win_h}x{win_w}"
        )));
    }
    let rect = receiver_rect(
        tile.height,
        tile.width,
        spec.k_y,
        spec.k_x,
        spec.stride,
        iy - win_y,
        ix - win_x,
    );
    Ok(rect
        .map(|r| r.pes(tile.width).collect())
        .unwrap_or_default())
}

/// One streamed word: a command plus the window-local coordinate of the
/// input value riding with it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandWord {
    pub cmd: Command,
    pub iy: usize,
    pub ix: usize,
}

/// Generate the command stream driving one tile's input multicast.
///
/// The stream walks the input window row-major, skipping positions no PE
/// needs (kernel narrower than stride). The first word is Start. Between
/// consecutive words the receiver rectangle moves at most one row or one
/// column per side, matched to a command; width-1 tiles degenerate to a
/// single chain run and use the X commands for row moves. The stream is
/// replayed against the geometric oracle as it is built; a transition no
/// command reproduces is an error.
pub fn generate_command_stream(
    tile_h: usize,
    tile_w: usize,
    spec: &ConvLayerSpec,
) -> Result<Vec<CommandWord>> {
    let (k_y, k_x, stride) = (spec.k_y, spec.k_x, spec.stride);
    let win_h = (tile_h - 1) * stride + k_y;
    let win_w = (tile_w - 1) * stride + k_x;

    let mut words: Vec<CommandWord> = Vec::with_capacity(win_h * win_w);
    let mut chain = ReceiverChain::new(tile_h * tile_w);
    let mut prev: Option<(usize, usize, ReceiverRect)> = None;

    for iy in 0..win_h {
        let Some(rows) = axis_interval(tile_h, k_y, stride, iy) else {
            continue;
        };
        for ix in 0..win_w {
            let Some(cols) = axis_interval(tile_w, k_x, stride, ix) else {
                continue;
            };
            let rect = ReceiverRect { rows, cols };
            let cmd = match &prev {
                None => Command::START,
                Some((piy, _, prect)) => {
                    let err = || Error::Protocol {
                        iy,
                        ix,
                        from_rows: prect.rows,
                        from_cols: prect.cols,
                        to_rows: rect.rows,
                        to_cols: rect.cols,
                    };
                    if *piy == iy {
                        // within a row: the column interval moves
                        match interval_move(prect.cols, rect.cols).ok_or_else(err)? {
                            Move::Hold => Command::NO_OP,
                            Move::Dilate => Command::DILATE_X,
                            Move::Shift => Command::SHIFT_X,
                            Move::Erode => Command::ERODE_X,
                        }
                    } else if tile_w == 1 {
                        // a width-1 tile is a single chain run; row moves
                        // are plain run edits
                        match interval_move(prect.rows, rect.rows).ok_or_else(err)? {
                            Move::Hold => Command::NO_OP,
                            Move::Dilate => Command::DILATE_X,
                            Move::Shift => Command::SHIFT_X,
                            Move::Erode => Command::ERODE_X,
                        }
                    } else {
                        // row change: column interval resets to the head
                        match interval_move(prect.rows, rect.rows).ok_or_else(err)? {
                            Move::Hold => Command::ROTATE_Y,
                            Move::Dilate => Command::DILATE_Y,
                            Move::Shift => Command::SHIFT_Y,
                            Move::Erode => Command::ERODE_Y,
                        }
                    }
                }
            };

            // replay through the chain and require the oracle set
            let mut cached = Vec::with_capacity(rect.count());
            chain.step_word(cmd, |pe| cached.push(pe));
            let expect: Vec<usize> = rect.pes(tile_w).collect();
            if cached != expect {
                return Err(Error::Protocol {
                    iy,
                    ix,
                    from_rows: prev.map(|p| p.2.rows).unwrap_or((0, 0)),
                    from_cols: prev.map(|p| p.2.cols).unwrap_or((0, 0)),
                    to_rows: rect.rows,
                    to_cols: rect.cols,
                });
            }

            words.push(CommandWord { cmd, iy, ix });
            prev = Some((iy, ix, rect));
        }
    }
    Ok(words)
}

enum Move {
    Hold,
    Dilate,
    Shift,
    Erode,
}

fn interval_move(from: (usize, usize), to: (usize, usize)) -> Option<Move> {
    let dl = to.0 as isize - from.0 as isize;
    let dr = to.1 as isize - from.1 as isize;
    match (dl, dr) {
        (0, 0) => Some(Move::Hold),
        (0, 1) => Some(Move::Dilate),
        (1, 1) => Some(Move::Shift),
        (1, 0) => Some(Move::Erode),
        _ => None,
    }
}
