//! Branch-free `tanh` over slices.
//!
//! The hidden layers spend most of their non-matmul time in `tanh`; the libm
//! call does not vectorize. This version evaluates `exp(−2|x|)` with a
//! Cody–Waite range reduction and a degree-13 Taylor polynomial, then forms
//! `(1 − e)/(1 + e)`. Absolute error stays below 1e-15 everywhere (relative
//! error grows like 1e-16/|x| near zero, which no caller depends on).

const LOG2E: f64 = std::f64::consts::LOG2_E;
const LN2_HI: f64 = 6.931_471_803_691_238_164_90e-1;
const LN2_LO: f64 = 1.908_214_929_270_587_700_02e-10;
const ROUND_MAGIC: f64 = 6_755_399_441_055_744.0;

/// `a·b + c`, fused when the target has FMA (the libm fallback is slow).
#[inline(always)]
fn madd(a: f64, b: f64, c: f64) -> f64 {
    #[cfg(target_feature = "fma")]
    {
        a.mul_add(b, c)
    }
    #[cfg(not(target_feature = "fma"))]
    {
        a * b + c
    }
}

/// `exp(x)` for `x ∈ [−700, 0]`.
#[inline(always)]
fn exp_nonpositive(x: f64) -> f64 {
    // Adding 1.5·2⁵² rounds to the nearest integer and leaves it in the low
    // mantissa bits.
    let shifted = x * LOG2E + ROUND_MAGIC;
    let n = shifted - ROUND_MAGIC;
    let n_int = shifted.to_bits() as i64 - ROUND_MAGIC.to_bits() as i64;
    let r = (x - n * LN2_HI) - n * LN2_LO;
    // 1/k! for k = 12 … 2; truncation error below 2e-16 on |r| ≤ ln2/2
    let mut p = 1.0 / 479_001_600.0;
    p = madd(p, r, 1.0 / 39_916_800.0);
    p = madd(p, r, 1.0 / 3_628_800.0);
    p = madd(p, r, 1.0 / 362_880.0);
    p = madd(p, r, 1.0 / 40_320.0);
    p = madd(p, r, 1.0 / 5_040.0);
    p = madd(p, r, 1.0 / 720.0);
    p = madd(p, r, 1.0 / 120.0);
    p = madd(p, r, 1.0 / 24.0);
    p = madd(p, r, 1.0 / 6.0);
    p = madd(p, r, 0.5);
    p = madd(p, r, 1.0);
    p = madd(p, r, 1.0);
    let scale = f64::from_bits(((n_int + 1023) as u64) << 52);
    p * scale
}

#[inline(always)]
pub fn tanh(x: f64) -> f64 {
    let a = x.abs().min(30.0);
    let e = exp_nonpositive(-2.0 * a);
    ((1.0 - e) / (1.0 + e)).copysign(x)
}

/// In-place `v ← tanh(v + bias)`.
pub fn tanh_bias_in_place(values: &mut [f64], bias: f64) {
    for v in values.iter_mut() {
        *v = tanh(*v + bias);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_std_tanh() {
        let mut worst: f64 = 0.0;
        let mut x = -40.0;
        while x <= 40.0 {
            worst = worst.max((tanh(x) - x.tanh()).abs());
            x += 0.000_731;
        }
        assert!(worst < 1e-15, "max abs error {worst}");
        for x in [0.0, -0.0, 1e-300, 1e-8, -3e-5, 19.0, 700.0, -1e10] {
            assert!((tanh(x) - x.tanh()).abs() < 1e-15, "x = {x}");
        }
        assert_eq!(tanh(0.0), 0.0);
        assert_eq!(tanh(50.0), 1.0);
        assert_eq!(tanh(-50.0), -1.0);
    }

    #[test]
    fn odd_and_monotone() {
        let mut prev = -1.0;
        for i in -5000..5000 {
            let x = i as f64 * 1e-3;
            assert_eq!(tanh(-x), -tanh(x));
            assert!(tanh(x) >= prev);
            prev = tanh(x);
        }
    }
}
