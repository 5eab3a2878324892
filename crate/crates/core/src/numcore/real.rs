use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::Float;

/// Element type stored in a checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 1,
            DType::F64 => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(DType::F32),
            2 => Some(DType::F64),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

/// Floating point element of a [`Tensor`](super::Tensor).
///
/// Implemented for `f32` (training and benchmarks) and `f64` (gradient
/// checks). The matrix product is routed to `matrixmultiply` with stride
/// tricks, so transposed operands never get materialized.
pub trait Real:
    Float
    + Default
    + Debug
    + Display
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Send
    + Sync
    + 'static
{
    const DTYPE: DType;

    fn lit(x: f64) -> Self;

    fn as_f64(self) -> f64;

    fn erf(self) -> Self;

    /// Derivative of [`Real::erf`] as implemented for this type.
    fn erf_deriv(self) -> Self;

    /// `(erf(x), erf'(x))` in one evaluation.
    fn erf_with_deriv(self) -> (Self, Self);

    /// `c = a·b (+ c if accumulate)`, with `a` logically `m×k` and `b` logically `k×n`.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_trans: bool,
        b: &[Self],
        b_trans: bool,
        c: &mut [Self],
        accumulate: bool,
    );

    fn write_le(self, out: &mut Vec<u8>);

    fn read_le(bytes: &[u8]) -> Self;
}

fn strides(rows: usize, cols: usize, trans: bool) -> (isize, isize) {
    // Logical `rows×cols`; a transposed operand is stored as `cols×rows`.
    if trans {
        (1, rows as isize)
    } else {
        (cols as isize, 1)
    }
}

macro_rules! impl_real {
    ($t:ty, $dtype:expr, $gemm:path, $erf:path, $erf_deriv:path, $erf_both:path) => {
        impl Real for $t {
            const DTYPE: DType = $dtype;

            #[inline]
            fn lit(x: f64) -> Self {
                x as $t
            }

            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }

            #[inline]
            fn erf(self) -> Self {
                $erf(self)
            }

            #[inline]
            fn erf_deriv(self) -> Self {
                $erf_deriv(self)
            }

            #[inline]
            fn erf_with_deriv(self) -> (Self, Self) {
                $erf_both(self)
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                a_trans: bool,
                b: &[Self],
                b_trans: bool,
                c: &mut [Self],
                accumulate: bool,
            ) {
                assert!(a.len() >= m * k, "gemm: lhs too short");
                assert!(b.len() >= k * n, "gemm: rhs too short");
                assert!(c.len() >= m * n, "gemm: output too short");
                if m == 0 || n == 0 {
                    return;
                }
                let (rsa, csa) = strides(m, k, a_trans);
                let (rsb, csb) = strides(k, n, b_trans);
                let beta = if accumulate { 1.0 } else { 0.0 };
                // SAFETY: bounds checked above; strides describe dense row-major
                // buffers of the asserted sizes.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }

            fn write_le(self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }

            fn read_le(bytes: &[u8]) -> Self {
                let mut raw = [0u8; std::mem::size_of::<$t>()];
                raw.copy_from_slice(&bytes[..std::mem::size_of::<$t>()]);
                <$t>::from_le_bytes(raw)
            }
        }
    };
}

const ERF_A: [f64; 6] = [0.0705230784, 0.0422820123, 0.0092705272, 0.0001520143, 0.0002765672, 0.0000430638];

/// Branch-free `erf` for `f32`: `1 − (1 + a₁x + … + a₆x⁶)^−16` on `|x|`,
/// absolute error below 3e-7 (under two f32 ulps near 1). Evaluated in
/// `f64` and simple enough to vectorize, unlike `libm::erff`.
#[inline]
pub fn erf_f32(x: f32) -> f32 {
    const A: [f64; 6] = ERF_A;
    let t = (x as f64).abs().min(6.0);
    let p = 1.0 + t * (A[0] + t * (A[1] + t * (A[2] + t * (A[3] + t * (A[4] + t * A[5])))));
    let p2 = p * p;
    let p4 = p2 * p2;
    let p8 = p4 * p4;
    let r = 1.0 - 1.0 / (p8 * p8);
    (r as f32).copysign(x)
}

/// Exact derivative of [`erf_f32`].
#[inline]
pub fn erf_deriv_f32(x: f32) -> f32 {
    const A: [f64; 6] = ERF_A;
    let t = (x as f64).abs();
    if t >= 6.0 {
        return 0.0;
    }
    let p = 1.0 + t * (A[0] + t * (A[1] + t * (A[2] + t * (A[3] + t * (A[4] + t * A[5])))));
    let dp = A[0] + t * (2.0 * A[1] + t * (3.0 * A[2] + t * (4.0 * A[3] + t * (5.0 * A[4] + t * 6.0 * A[5]))));
    let p2 = p * p;
    let p4 = p2 * p2;
    let p8 = p4 * p4;
    (16.0 * dp / (p8 * p8 * p)) as f32
}

/// [`erf_f32`] and [`erf_deriv_f32`] sharing the polynomial.
#[inline]
pub fn erf_with_deriv_f32(x: f32) -> (f32, f32) {
    const A: [f64; 6] = ERF_A;
    let t = (x as f64).abs().min(6.0);
    let p = 1.0 + t * (A[0] + t * (A[1] + t * (A[2] + t * (A[3] + t * (A[4] + t * A[5])))));
    let dp = A[0] + t * (2.0 * A[1] + t * (3.0 * A[2] + t * (4.0 * A[3] + t * (5.0 * A[4] + t * 6.0 * A[5]))));
    let p2 = p * p;
    let p4 = p2 * p2;
    let p8 = p4 * p4;
    let inv = 1.0 / (p8 * p8);
    let d = if t >= 6.0 { 0.0 } else { 16.0 * dp * inv / p };
    (((1.0 - inv) as f32).copysign(x), d as f32)
}

#[inline]
fn erf_deriv_f64(x: f64) -> f64 {
    std::f64::consts::FRAC_2_SQRT_PI * (-x * x).exp()
}

#[inline]
fn erf_with_deriv_f64(x: f64) -> (f64, f64) {
    (libm::erf(x), erf_deriv_f64(x))
}

impl_real!(f32, DType::F32, matrixmultiply::sgemm, erf_f32, erf_deriv_f32, erf_with_deriv_f32);
impl_real!(f64, DType::F64, matrixmultiply::dgemm, libm::erf, erf_deriv_f64, erf_with_deriv_f64);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_erf_tracks_libm() {
        let mut worst = 0f64;
        for i in -80_000..=80_000 {
            let x = i as f64 * 1e-4;
            let err = (erf_f32(x as f32) as f64 - libm::erf(x)).abs();
            worst = worst.max(err);
        }
        assert!(worst < 4e-7, "max abs error {worst}");
        assert_eq!(erf_f32(0.0), 0.0);
        assert_eq!(erf_f32(30.0), 1.0);
        assert_eq!(erf_f32(-30.0), -1.0);
    }

    #[test]
    fn fast_erf_derivative_is_consistent() {
        let mut worst_true = 0f64;
        for i in -6000..=6000 {
            let x = i as f64 * 1e-3;
            let d = erf_deriv_f32(x as f32) as f64;
            worst_true = worst_true.max((d - erf_deriv_f64(x)).abs());
            // Central difference of the approximation itself, in f64.
            let h = 1e-4;
            let f = |v: f64| {
                let t = v.abs();
                let a = ERF_A;
                let p = 1.0 + t * (a[0] + t * (a[1] + t * (a[2] + t * (a[3] + t * (a[4] + t * a[5])))));
                (1.0 - p.powi(-16)).copysign(v)
            };
            let (e, d2) = erf_with_deriv_f32(x as f32);
            assert_eq!((e, d2), (erf_f32(x as f32), erf_deriv_f32(x as f32)));
            if x.abs() > 2.0 * h {
                assert!((d - (f(x + h) - f(x - h)) / (2.0 * h)).abs() < 1e-6, "x = {x}");
            }
        }
        assert!(worst_true < 2e-5, "max abs error vs 2/sqrt(pi) exp(-x^2): {worst_true}");
    }

    fn naive(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                c[i * n + j] = (0..k).map(|p| a[i * k + p] * b[p * n + j]).sum();
            }
        }
        c
    }

    fn transpose(rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
        let mut t = vec![0.0; x.len()];
        for i in 0..rows {
            for j in 0..cols {
                t[j * rows + i] = x[i * cols + j];
            }
        }
        t
    }

    #[test]
    fn gemm_matches_naive_in_all_transpose_modes() {
        let (m, k, n) = (3, 5, 4);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.11).cos()).collect();
        let want = naive(m, k, n, &a, &b);
        let at = transpose(m, k, &a);
        let bt = transpose(k, n, &b);
        for (aa, ta) in [(&a, false), (&at, true)] {
            for (bb, tb) in [(&b, false), (&bt, true)] {
                let mut c = vec![0.0; m * n];
                f64::gemm(m, k, n, aa, ta, bb, tb, &mut c, false);
                for (x, y) in c.iter().zip(&want) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
        let mut c = want.clone();
        f64::gemm(m, k, n, &a, false, &b, false, &mut c, true);
        for (x, y) in c.iter().zip(&want) {
            assert!((x - 2.0 * y).abs() < 1e-12);
        }
    }

    #[test]
    fn dtype_codes() {
        assert_eq!(DType::from_code(f32::DTYPE.code()), Some(DType::F32));
        assert_eq!(DType::from_code(2), Some(DType::F64));
        assert_eq!(DType::from_code(7), None);
    }
}
