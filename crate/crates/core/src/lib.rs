//! Cycle-level model of a CNN inference accelerator core built as a 1-D
//! array of processing elements, together with the scheduling runtime
//! (layout transforms, tiling, command generation) and the analytical
//! utilization and bandwidth model that predicts and explains its
//! performance.
//!
//! A core couples a controller to `num_pes` PEs through three pipelined
//! interconnects: a weight broadcast, an input multicast driven by a
//! 4-bit command protocol, and an output unicast. Each PE owns a small
//! double-buffered input window FIFO, a partial-sum FIFO and an output
//! FIFO, and performs one MAC per cycle (fp32) or a packed four-lane
//! int8 dot step per cycle (vPE). Convolution layers that exceed the
//! array are tiled over the output plane; any rectangle with at most
//! `num_pes` pixels is schedulable, whatever its aspect ratio.
//!
//! Everything is deterministic: the simulator is verified bit-exact
//! against [`reference::conv2d_reference_f32`] and
//! [`reference::conv2d_reference_int8`], and the receiver protocol is
//! verified set-exact against a geometric oracle.

pub mod analytics;
pub mod config;
pub mod error;
pub mod fixture;
pub mod interconnect;
pub mod reference;
pub mod sim;
pub mod tensor;
pub mod tiler;
pub mod vgg16;

pub use config::CoreConfig;
pub use error::{Error, Result};
pub use tensor::{
    ConvLayerSpec, Layout3, Layout4, PackedInput, Precision, Tensor3, Tensor4, TensorF32,
    TensorI32, TensorI8, WeightsF32, WeightsI8,
};
