use std::fmt::{self, Debug, Display};
use std::iter::Sum;
use std::ops::AddAssign;
use std::str::FromStr;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::KsError;

/// Runtime tag for the element type of a buffer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarKind {
    Fp32,
    Fp64,
}

impl ScalarKind {
    pub fn code(self) -> u8 {
        match self {
            ScalarKind::Fp32 => 0,
            ScalarKind::Fp64 => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(ScalarKind::Fp32),
            1 => Some(ScalarKind::Fp64),
            _ => None,
        }
    }

    pub fn width_bytes(self) -> usize {
        match self {
            ScalarKind::Fp32 => 4,
            ScalarKind::Fp64 => 8,
        }
    }
}

impl Display for ScalarKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScalarKind::Fp32 => "fp32",
            ScalarKind::Fp64 => "fp64",
        })
    }
}

impl FromStr for ScalarKind {
    type Err = KsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fp32" | "f32" => Ok(ScalarKind::Fp32),
            "fp64" | "f64" => Ok(ScalarKind::Fp64),
            other => Err(KsError::Parse(format!("unknown scalar type {other:?}"))),
        }
    }
}

/// Floating-point element type usable in batches, factors and kernels.
pub trait Scalar: Float + Sum + AddAssign + Debug + Default + Send + Sync + 'static {
    const KIND: ScalarKind;

    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    /// Reads one value from the first `KIND.width_bytes()` bytes.
    fn read_le(bytes: &[u8]) -> Self;

    /// `C = alpha * A * B + beta * C` with arbitrary element strides.
    ///
    /// # Safety
    /// All strided accesses implied by the dimensions and strides must stay
    /// inside the allocations behind `a`, `b` and `c`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Scalar for f32 {
    const KIND: ScalarKind = ScalarKind::Fp32;

    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().expect("4 bytes"))
    }
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

impl Scalar for f64 {
    const KIND: ScalarKind = ScalarKind::Fp64;

    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"))
    }
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}
