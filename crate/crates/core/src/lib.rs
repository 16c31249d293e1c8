//! Families of dense linear and multi-linear algebra algorithms expressed
//! through range partitioning, a packed micro-kernel engine, and control
//! trees that pick the variant, block size and kernel parameters at every
//! level of recursion.

pub mod cli;
pub mod control;
pub mod engine;
pub mod factor;
pub mod oracle;
pub mod scalar;
pub mod tensor;
pub mod views;

pub use scalar::{DType, Scalar};
pub use views::{make_view, partition_steps, Fill, Layout, MatrixView, PartitionStep, Range};
