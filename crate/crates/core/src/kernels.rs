//! Reduction kernels shared by the scalar and batched metric paths.
//!
//! Every kernel widens its inputs to `f64` and accumulates into `LANES`
//! independent partial sums that are folded in a fixed order, so the result
//! does not depend on which instruction set the dispatcher picked. Rust never
//! contracts `a * b + c` into an FMA on its own, so the AVX2 build and the
//! baseline build produce identical bits.

const LANES: usize = 8;

/// Scalar types the kernels accept.
pub trait Element: Copy + Send + Sync + 'static {
    fn widen(self) -> f64;
}

impl Element for f32 {
    #[inline(always)]
    fn widen(self) -> f64 {
        self as f64
    }
}

impl Element for f64 {
    #[inline(always)]
    fn widen(self) -> f64 {
        self
    }
}

#[inline(always)]
fn fold_sum(acc: [f64; LANES]) -> f64 {
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]))
}

#[inline(always)]
fn fold_max(acc: [f64; LANES]) -> f64 {
    acc.iter().copied().fold(0.0, f64::max)
}

/// Lane-parallel reduction over two equal-length slices.
#[inline(always)]
fn reduce2<T: Element>(a: &[T], b: &[T], mut step: impl FnMut(&mut f64, f64, f64)) -> [f64; LANES] {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..LANES {
            step(&mut acc[l], x[l].widen(), y[l].widen());
        }
    }
    for l in 0..ra.len() {
        step(&mut acc[l], ra[l].widen(), rb[l].widen());
    }
    acc
}

#[inline(always)]
fn reduce1<T: Element>(a: &[T], mut step: impl FnMut(&mut f64, f64)) -> [f64; LANES] {
    let mut acc = [0.0f64; LANES];
    let ca = a.chunks_exact(LANES);
    let ra = ca.remainder();
    for x in ca {
        for l in 0..LANES {
            step(&mut acc[l], x[l].widen());
        }
    }
    for (l, x) in ra.iter().enumerate() {
        step(&mut acc[l], x.widen());
    }
    acc
}

#[inline(always)]
fn dot_impl<T: Element>(a: &[T], b: &[T]) -> f64 {
    fold_sum(reduce2(a, b, |s, x, y| *s += x * y))
}

#[inline(always)]
fn sum_impl<T: Element>(a: &[T]) -> f64 {
    fold_sum(reduce1(a, |s, x| *s += x))
}

#[inline(always)]
fn sumsq_impl<T: Element>(a: &[T]) -> f64 {
    fold_sum(reduce1(a, |s, x| *s += x * x))
}

#[inline(always)]
fn centered_sumsq_impl<T: Element>(a: &[T], mean: f64) -> f64 {
    fold_sum(reduce1(a, |s, x| {
        let c = x - mean;
        *s += c * c
    }))
}

#[inline(always)]
fn centered_dot_impl<T: Element>(a: &[T], mean_a: f64, b: &[T], mean_b: f64) -> f64 {
    fold_sum(reduce2(a, b, |s, x, y| *s += (x - mean_a) * (y - mean_b)))
}

#[inline(always)]
fn manhattan_impl<T: Element>(a: &[T], b: &[T]) -> f64 {
    fold_sum(reduce2(a, b, |s, x, y| *s += (x - y).abs()))
}

#[inline(always)]
fn sq_euclidean_impl<T: Element>(a: &[T], b: &[T]) -> f64 {
    fold_sum(reduce2(a, b, |s, x, y| {
        let d = x - y;
        *s += d * d
    }))
}

#[inline(always)]
fn chebyshev_impl<T: Element>(a: &[T], b: &[T]) -> f64 {
    fold_max(reduce2(a, b, |s, x, y| *s = s.max((x - y).abs())))
}

#[inline(always)]
fn canberra_impl<T: Element>(a: &[T], b: &[T]) -> f64 {
    fold_sum(reduce2(a, b, |s, x, y| {
        let den = x.abs() + y.abs();
        // 0/0 terms contribute nothing
        *s += if den > 0.0 { (x - y).abs() / den } else { 0.0 }
    }))
}

/// Returns (Σ|a−b|, Σ(a+b)).
#[inline(always)]
fn bray_curtis_parts_impl<T: Element>(a: &[T], b: &[T]) -> (f64, f64) {
    let num = reduce2(a, b, |s, x, y| *s += (x - y).abs());
    let den = reduce2(a, b, |s, x, y| *s += x + y);
    (fold_sum(num), fold_sum(den))
}

macro_rules! dispatched {
    ($(#[$m:meta])* $name:ident => $imp:ident ( $($arg:ident : $ty:ty),* ) -> $ret:ty) => {
        $(#[$m])*
        #[inline]
        pub fn $name<T: Element>($($arg: $ty),*) -> $ret {
            #[cfg(target_arch = "x86_64")]
            {
                #[target_feature(enable = "avx2")]
                unsafe fn avx2<T: Element>($($arg: $ty),*) -> $ret {
                    $imp($($arg),*)
                }
                if std::is_x86_feature_detected!("avx2") {
                    // SAFETY: the CPU supports AVX2, checked just above.
                    return unsafe { avx2($($arg),*) };
                }
            }
            $imp($($arg),*)
        }
    };
}

dispatched!(dot => dot_impl(a: &[T], b: &[T]) -> f64);
dispatched!(sum => sum_impl(a: &[T]) -> f64);
dispatched!(sumsq => sumsq_impl(a: &[T]) -> f64);
dispatched!(centered_sumsq => centered_sumsq_impl(a: &[T], mean: f64) -> f64);
dispatched!(centered_dot => centered_dot_impl(a: &[T], mean_a: f64, b: &[T], mean_b: f64) -> f64);
dispatched!(manhattan => manhattan_impl(a: &[T], b: &[T]) -> f64);
dispatched!(sq_euclidean => sq_euclidean_impl(a: &[T], b: &[T]) -> f64);
dispatched!(chebyshev => chebyshev_impl(a: &[T], b: &[T]) -> f64);
dispatched!(canberra => canberra_impl(a: &[T], b: &[T]) -> f64);
dispatched!(
    /// Numerator and signed denominator of the Bray-Curtis ratio.
    bray_curtis_parts => bray_curtis_parts_impl(a: &[T], b: &[T]) -> (f64, f64)
);
