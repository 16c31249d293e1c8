//! Level-3 compute engine: packing, the micro-kernel, the five-loop GEMM and
//! the products built on it (GEMMT, SYRK, TRSM and the fused skew sandwich).

mod alias;
mod config;
mod gemm;
mod kernel;
mod operand;
mod pack;
mod trsm;
mod workspace;

use thiserror::Error;

pub use config::{KernelConfig, MAX_MICRO_TILE};
pub use gemm::{gemm, gemmt_lower, sandwich_skew, syrk_lower};
pub(crate) use gemm::{run as run_product, GemmArgs, Region};
pub use kernel::microkernel;
pub use pack::{pack_panel, PackTransform, PackedPanel, Side};
pub use trsm::{trsm, TrsmCase};
pub use workspace::{track_allocations, AllocStats, PackBuf};

pub(crate) use operand::{AxisMap, Operand, OutOperand};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("output overlaps an input operand")]
    Aliasing,
    #[error("matrix must be square, got {0}x{1}")]
    NotSquare(usize, usize),
    #[error("transform length {got} does not match expected {expected}")]
    TransformLength { expected: usize, got: usize },
    #[error("zero on the diagonal at index {0}")]
    ZeroDiagonal(usize),
    #[error("invalid kernel configuration: {0}")]
    InvalidConfig(String),
    #[error("negative strides are not supported by packing")]
    NegativeStride,
    #[error("{0}")]
    InvalidArgument(String),
}
