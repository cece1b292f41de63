//! Deterministic transcendental functions.
//!
//! Entropy-model CDF evaluations feed both the differentiable bit estimates
//! and the quantized tables the range coder uses, so they must produce the
//! same values on every platform. System `libm` implementations of `exp`,
//! `ln` and `erf` vary between targets; the fixed polynomial/rational
//! approximations here (Cephes-style for `exp`/`erf`, an atanh series for
//! `ln`) use only IEEE f64 arithmetic in a pinned evaluation order.

#![allow(clippy::excessive_precision)]

const LOG2E: f64 = 1.4426950408889634073599;
const LN2_HI: f64 = 6.93145751953125E-1;
const LN2_LO: f64 = 1.42860682030941723212E-6;
const MAXLOG: f64 = 7.09782712893383996843E2;
const MINLOG: f64 = -7.45133219101941108420E2;

fn polevl(x: f64, coef: &[f64]) -> f64 {
    let mut ans = coef[0];
    for &c in &coef[1..] {
        ans = ans * x + c;
    }
    ans
}

/// Like `polevl` with an implied leading coefficient of 1.
fn p1evl(x: f64, coef: &[f64]) -> f64 {
    let mut ans = x + coef[0];
    for &c in &coef[1..] {
        ans = ans * x + c;
    }
    ans
}

fn ldexp(x: f64, n: i32) -> f64 {
    // Powers of two are exact; split large shifts to stay in range.
    if n > 1023 {
        x * f64::powi(2.0, 1023) * f64::powi(2.0, n - 1023)
    } else if n < -1022 {
        x * f64::powi(2.0, -1022) * f64::powi(2.0, n + 1022)
    } else {
        x * f64::powi(2.0, n)
    }
}

/// e^x with a Pade approximation after range reduction by ln 2.
pub(crate) fn exp(x: f64) -> f64 {
    const P: [f64; 3] = [
        1.26177193074810590878E-4,
        3.02994407707441961300E-2,
        9.99999999999999999910E-1,
    ];
    const Q: [f64; 4] = [
        3.00198505138664455042E-6,
        2.52448340349684104192E-3,
        2.27265548208155028766E-1,
        2.00000000000000000005E0,
    ];
    if x.is_nan() {
        return x;
    }
    if x > MAXLOG {
        return f64::INFINITY;
    }
    if x < MINLOG {
        return 0.0;
    }
    let n = (LOG2E * x + 0.5).floor();
    let mut x = x - n * LN2_HI;
    x -= n * LN2_LO;
    let xx = x * x;
    let px = x * polevl(xx, &P);
    let e = px / (polevl(xx, &Q) - px);
    ldexp(1.0 + 2.0 * e, n as i32)
}

fn frexp(x: f64) -> (f64, i32) {
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i32;
    if exp == 0 {
        // Subnormal: renormalize first.
        let (m, e) = frexp(x * f64::powi(2.0, 64));
        return (m, e - 64);
    }
    let mantissa = f64::from_bits((bits & !(0x7ffu64 << 52)) | (1022u64 << 52));
    (mantissa, exp - 1022)
}

/// Natural logarithm via ln(m · 2^e) = e·ln2 + 2·atanh((m−1)/(m+1)).
pub(crate) fn ln(x: f64) -> f64 {
    // Odd-power series coefficients 1/(2k+1); with m centered on 1 the
    // argument satisfies |t| < 0.1716, so 12 terms reach f64 precision.
    const C: [f64; 12] = [
        1.0 / 23.0,
        1.0 / 21.0,
        1.0 / 19.0,
        1.0 / 17.0,
        1.0 / 15.0,
        1.0 / 13.0,
        1.0 / 11.0,
        1.0 / 9.0,
        1.0 / 7.0,
        1.0 / 5.0,
        1.0 / 3.0,
        1.0,
    ];
    if x.is_nan() || x < 0.0 {
        return f64::NAN;
    }
    if x == 0.0 {
        return f64::NEG_INFINITY;
    }
    if x.is_infinite() {
        return f64::INFINITY;
    }
    let (mut m, mut e) = frexp(x);
    if m < std::f64::consts::FRAC_1_SQRT_2 {
        m *= 2.0;
        e -= 1;
    }
    let t = (m - 1.0) / (m + 1.0);
    let t2 = t * t;
    let mut s = C[0];
    for &c in &C[1..] {
        s = s * t2 + c;
    }
    let ef = e as f64;
    2.0 * t * s + ef * LN2_LO + ef * LN2_HI
}

/// Base-2 logarithm.
pub(crate) fn log2(x: f64) -> f64 {
    ln(x) * LOG2E
}

/// Error function (Cephes rational approximation for |x| ≤ 1).
pub(crate) fn erf(x: f64) -> f64 {
    const T: [f64; 5] = [
        9.60497373987051638749E0,
        9.00260197203842689217E1,
        2.23200534594684319226E3,
        7.00332514112805075473E3,
        5.55923013010394962768E4,
    ];
    const U: [f64; 5] = [
        3.35617141647503099647E1,
        5.21357949780152679795E2,
        4.59432382970980127987E3,
        2.26290000613890934246E4,
        4.92673942608635921086E4,
    ];
    if x.is_nan() {
        return x;
    }
    if x.abs() > 1.0 {
        return 1.0 - erfc(x);
    }
    let z = x * x;
    x * polevl(z, &T) / p1evl(z, &U)
}

/// Complementary error function. Rational approximation on [1, 8); the
/// asymptotic series beyond (those values sit far below the probability
/// floor the entropy models apply).
pub(crate) fn erfc(a: f64) -> f64 {
    const P: [f64; 9] = [
        2.46196981473530512524E-10,
        5.64189564831068821977E-1,
        7.46321056442269912687E0,
        4.86371970985681366614E1,
        1.96520832956077098242E2,
        5.26445194995477358631E2,
        9.34528527171957607540E2,
        1.02755188689515710272E3,
        5.57535335369399327526E2,
    ];
    const Q: [f64; 8] = [
        1.32281951154744992508E1,
        8.67072140885989742329E1,
        3.54937778887819891062E2,
        9.75708501743205489753E2,
        1.82390916687909736289E3,
        2.24633760818710981792E3,
        1.65666309194161350182E3,
        5.57535340817727675546E2,
    ];
    if a.is_nan() {
        return a;
    }
    let x = a.abs();
    if x < 1.0 {
        return 1.0 - erf(a);
    }
    let z = -a * a;
    let y = if z < MINLOG {
        0.0
    } else {
        let z = exp(z);
        if x < 8.0 {
            z * polevl(x, &P) / p1evl(x, &Q)
        } else {
            // erfc(x) ~ exp(-x^2)/(x sqrt(pi)) (1 - 1/(2x^2) + 3/(4x^4) - ...)
            const INV_SQRT_PI: f64 = 5.64189583547756286948E-1;
            let ix2 = 1.0 / (x * x);
            let series = 1.0 + ix2 * (-0.5 + ix2 * (0.75 + ix2 * (-1.875 + ix2 * 6.5625)));
            z * INV_SQRT_PI / x * series
        }
    };
    if a < 0.0 {
        2.0 - y
    } else {
        y
    }
}

const SQRT_2_RECIP: f64 = std::f64::consts::FRAC_1_SQRT_2;
const INV_SQRT_2PI: f64 = 3.98942280401432677940E-1;

/// Standard normal CDF; routed through the erfc tail on both sides.
pub(crate) fn normal_cdf(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 - 0.5 * erfc(x * SQRT_2_RECIP)
    } else {
        0.5 * erfc(-x * SQRT_2_RECIP)
    }
}

/// Standard normal density.
pub(crate) fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * exp(-0.5 * x * x)
}

/// Logistic CDF 1/(1+e^{-x}).
pub(crate) fn logistic_cdf(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

/// Logistic density F(x)(1−F(x)).
pub(crate) fn logistic_pdf(x: f64) -> f64 {
    let f = logistic_cdf(x.abs());
    f * (1.0 - f)
}

/// ln(1 + e^x), overflow-safe.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 34.0 {
        x
    } else if x < -34.0 {
        exp(x)
    } else {
        ln(1.0 + exp(x))
    }
}

/// d/dx softplus(x) = logistic(x).
pub(crate) fn softplus_grad(x: f64) -> f64 {
    logistic_cdf(x)
}

/// Inverse of softplus, for constructing a raw parameter hitting a target.
pub(crate) fn softplus_inverse(y: f64) -> f64 {
    debug_assert!(y > 0.0);
    if y > 34.0 {
        y
    } else {
        ln(exp(y) - 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_matches_std() {
        let mut x = -40.0;
        while x <= 40.0 {
            let got = exp(x);
            let want = f64::exp(x);
            assert!(
                (got - want).abs() <= want.abs() * 1e-14,
                "exp({x}): {got} vs {want}"
            );
            x += 0.0917;
        }
    }

    #[test]
    fn ln_matches_std() {
        for &x in &[1e-12, 1e-3, 0.2, 0.5, 0.9999, 1.0, 1.0001, 2.0, 10.0, 1e6, 1e300] {
            let got = ln(x);
            let want = f64::ln(x);
            assert!(
                (got - want).abs() <= want.abs().max(1.0) * 1e-15,
                "ln({x}): {got} vs {want}"
            );
        }
        assert_eq!(ln(1.0), 0.0);
    }

    #[test]
    fn erf_matches_reference_values() {
        // Frozen 20-digit references (mpmath); statrs alone is only ~1e-12
        // accurate in the erfc region so it serves as a coarse cross-check.
        const REF: [(f64, f64); 13] = [
            (-5.5, -0.99999999999999264215),
            (-3.2, -0.99999397423884823791),
            (-1.6023, -0.97654827332891011126),
            (-1.0, -0.84270079294971486934),
            (-0.37, -0.39920598404299923458),
            (0.0, 0.0),
            (0.25, 0.27632639016823693299),
            (0.5, 0.52049987781304653768),
            (1.0, 0.84270079294971486934),
            (1.7, 0.98379045859077456363),
            (2.2599, 0.99860643822659958848),
            (4.1, 0.99999999329997234592),
            (6.0, 0.99999999999999997848),
        ];
        for &(x, want) in &REF {
            let got = erf(x);
            assert!(
                (got - want).abs() <= 1e-15,
                "erf({x}): {got} vs {want}"
            );
        }
        let mut x = -6.0;
        while x <= 6.0 {
            assert!(
                (erf(x) - statrs::function::erf::erf(x)).abs() <= 1e-9,
                "statrs cross-check at {x}"
            );
            x += 0.0411;
        }
    }

    #[test]
    fn normal_cdf_symmetry_and_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        let mut x = -5.0;
        while x <= 5.0 {
            let s = normal_cdf(x) + normal_cdf(-x);
            assert!((s - 1.0).abs() < 1e-14, "asymmetry at {x}");
            x += 0.173;
        }
        // Phi(0.5) against the statrs oracle.
        let want = 0.5 * statrs::function::erf::erfc(-0.5 * SQRT_2_RECIP);
        assert!((normal_cdf(0.5) - want).abs() < 1e-14);
    }

    #[test]
    fn softplus_roundtrip_and_grad() {
        for &y in &[0.05, 0.11, 1.0, 3.0, 40.0] {
            let raw = softplus_inverse(y);
            assert!((softplus(raw) - y).abs() < 1e-12 * y.max(1.0));
        }
        // FD check of softplus_grad.
        let h = 1e-6;
        for &x in &[-3.0, -0.2, 0.0, 0.7, 5.0] {
            let fd = (softplus(x + h) - softplus(x - h)) / (2.0 * h);
            assert!((softplus_grad(x) - fd).abs() < 1e-8);
        }
    }

    #[test]
    fn logistic_pdf_is_cdf_derivative() {
        let h = 1e-6;
        for &x in &[-4.0, -1.0, 0.0, 0.3, 2.5] {
            let fd = (logistic_cdf(x + h) - logistic_cdf(x - h)) / (2.0 * h);
            assert!((logistic_pdf(x) - fd).abs() < 1e-9);
        }
    }

    #[test]
    fn normal_pdf_is_cdf_derivative() {
        let h = 1e-6;
        for &x in &[-3.0, -0.5, 0.0, 1.2, 4.0] {
            let fd = (normal_cdf(x + h) - normal_cdf(x - h)) / (2.0 * h);
            assert!((normal_pdf(x) - fd).abs() < 1e-9, "at {x}");
        }
    }
}
