//! Gaussian integral family: density phi, CDF Phi, and the iterated
//! integrals Psi(x) = x Phi(x) + phi(x), W(x) = ((x^2+1) Phi(x) + x phi(x)) / 2,
//! plus the inverse CDF and the piecewise loss kernel g.

/// 1 / sqrt(2 pi)
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_68;
/// sqrt(2)
const SQRT_2: f64 = core::f64::consts::SQRT_2;

/// Arguments at or below this are treated as minus infinity: Phi, Psi, W
/// return exactly 0 there, realizing the eta -> infinity limit without
/// special-casing infinities downstream.
pub const DEEP_TAIL: f64 = -38.0;

/// Standard normal density.
#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * libm::exp(-0.5 * x * x)
}

/// Standard normal CDF via the complementary error function; the erfc path
/// keeps full relative accuracy in the lower tail.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    if x <= DEEP_TAIL {
        return 0.0;
    }
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Psi(x) = x Phi(x) + phi(x); primitive of Phi.
#[inline]
pub fn psi(x: f64) -> f64 {
    if x <= DEEP_TAIL {
        return 0.0;
    }
    x * norm_cdf(x) + norm_pdf(x)
}

/// W(x) = ((x^2 + 1) Phi(x) + x phi(x)) / 2; primitive of Psi.
#[inline]
pub fn big_w(x: f64) -> f64 {
    if x <= DEEP_TAIL {
        return 0.0;
    }
    0.5 * ((x * x + 1.0) * norm_cdf(x) + x * norm_pdf(x))
}

/// All four members at once: (phi, Phi, Psi, W).
pub fn gauss_family(x: f64) -> (f64, f64, f64, f64) {
    if x <= DEEP_TAIL {
        return (norm_pdf(x), 0.0, 0.0, 0.0);
    }
    let pdf = norm_pdf(x);
    let cdf = norm_cdf(x);
    (pdf, cdf, x * cdf + pdf, 0.5 * ((x * x + 1.0) * cdf + x * pdf))
}

/// Piecewise loss kernel: 0 for x >= 0, x^2 on [-1, 0], -2x - 1 below -1.
/// Continuous with continuous first derivative at both joins.
pub fn g_piecewise(x: f64) -> f64 {
    if x >= 0.0 {
        0.0
    } else if x >= -1.0 {
        x * x
    } else {
        -2.0 * x - 1.0
    }
}

/// Inverse CDF domain violation: p outside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InverseDomainError;

/// Rational initial guess (Acklam), then Halley refinements against this
/// module's own Phi, so the inverse is self-consistent with the forward CDF.
pub fn phi_inverse(p: f64) -> Result<f64, InverseDomainError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(InverseDomainError);
    }
    // 1 - p is exact for p in [0.5, 1); reduce to the lower half.
    if p > 0.5 {
        return Ok(-phi_inverse_lower(1.0 - p));
    }
    Ok(phi_inverse_lower(p))
}

/// Inverse for p in (0, 0.5].
fn phi_inverse_lower(p: f64) -> f64 {
    let mut x = acklam(p);
    // Halley: x <- x - u / (1 + u x / 2) with u = (Phi(x) - p) / phi(x).
    // Two steps reach the x-quantization floor; afterwards the iteration
    // settles onto the ulp neighbor minimizing |Phi(x) - p| and fixes.
    for _ in 0..8 {
        let pdf = norm_pdf(x);
        if pdf == 0.0 {
            break; // beyond the representable tail; the guess is as good as it gets
        }
        let u = (norm_cdf(x) - p) / pdf;
        let next = x - u / (1.0 + 0.5 * u * x);
        if next == x {
            break;
        }
        x = next;
    }
    x
}

/// Acklam's inverse-normal approximation, |relative error| < 1.15e-9.
fn acklam(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_690e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = libm::sqrt(-2.0 * libm::log(p));
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}
