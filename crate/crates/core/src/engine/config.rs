use crate::scalar::DType;

use super::EngineError;

/// Largest micro-tile edge the kernels accept.
pub const MAX_MICRO_TILE: usize = 16;

/// Register and cache blocking parameters for the five-loop engine.
///
/// `mr x nr` is the micro-tile, `mc x kc` the packed block of A and
/// `kc x nc` the packed block of B.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KernelConfig {
    pub mr: usize,
    pub nr: usize,
    pub mc: usize,
    pub kc: usize,
    pub nc: usize,
    pub dtype: DType,
    pub acc_dtype: DType,
}

impl KernelConfig {
    /// Defaults: 8x6 micro-tile, mc=64, kc=256 (512 for f32), nc=2046.
    pub fn default_for(dtype: DType) -> Self {
        let kc = match dtype {
            DType::F64 => 256,
            DType::F32 => 512,
        };
        Self {
            mr: 8,
            nr: 6,
            mc: 64,
            kc,
            nc: 2046,
            dtype,
            acc_dtype: dtype,
        }
    }

    pub fn with_acc(mut self, acc: DType) -> Self {
        self.acc_dtype = acc;
        self
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |msg: String| Err(EngineError::InvalidConfig(msg));
        if self.mr == 0 || self.nr == 0 || self.kc == 0 || self.mc == 0 || self.nc == 0 {
            return bad(format!("all block sizes must be >= 1: {self:?}"));
        }
        if self.mr > MAX_MICRO_TILE || self.nr > MAX_MICRO_TILE {
            return bad(format!("micro-tile {}x{} exceeds {MAX_MICRO_TILE}", self.mr, self.nr));
        }
        if !self.mc.is_multiple_of(self.mr) {
            return bad(format!("mc={} is not a multiple of mr={}", self.mc, self.mr));
        }
        if !self.nc.is_multiple_of(self.nr) {
            return bad(format!("nc={} is not a multiple of nr={}", self.nc, self.nr));
        }
        if self.acc_dtype.precision_bits() < self.dtype.precision_bits() {
            return bad(format!(
                "accumulation type {} is narrower than operand type {}",
                self.acc_dtype, self.dtype
            ));
        }
        Ok(())
    }
}
