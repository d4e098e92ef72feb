use serde::{Deserialize, Serialize};

use crate::tensor::Precision;

/// Static configuration of one core: PE count, per-PE buffer depths, the
/// arithmetic mode and the clock used for rate reporting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoreConfig {
    pub num_pes: usize,
    #[serde(default = "default_input_entries")]
    pub input_buffer_entries: usize,
    #[serde(default = "default_fifo_entries")]
    pub psum_buffer_entries: usize,
    #[serde(default = "default_fifo_entries")]
    pub output_buffer_entries: usize,
    pub precision: Precision,
    #[serde(default = "default_clock_mhz")]
    pub clock_mhz: f64,
}

fn default_input_entries() -> usize {
    32
}

fn default_fifo_entries() -> usize {
    512
}

fn default_clock_mhz() -> f64 {
    250.0
}

impl CoreConfig {
    pub fn new(num_pes: usize, precision: Precision) -> Self {
        Self {
            num_pes,
            input_buffer_entries: default_input_entries(),
            psum_buffer_entries: default_fifo_entries(),
            output_buffer_entries: default_fifo_entries(),
            precision,
            clock_mhz: default_clock_mhz(),
        }
    }

    pub fn clock_hz(&self) -> f64 {
        self.clock_mhz * 1.0e6
    }

    /// Largest output-channel chunk one PE can hold partial sums and
    /// finished outputs for.
    pub fn max_co_chunk(&self) -> usize {
        self.psum_buffer_entries.min(self.output_buffer_entries)
    }

    pub fn validate(&self) -> crate::error::Result<()> {
        if self.num_pes == 0
            || self.input_buffer_entries == 0
            || self.psum_buffer_entries == 0
            || self.output_buffer_entries == 0
        {
            return Err(crate::error::Error::Shape(
                "core needs at least one PE and non-empty buffers".into(),
            ));
        }
        if !(self.clock_mhz.is_finite() && self.clock_mhz > 0.0) {
            return Err(crate::error::Error::Shape(
                "core clock must be positive".into(),
            ));
        }
        Ok(())
    }
}
