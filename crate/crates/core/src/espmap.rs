//! Order-parameter map between regularized and unregularized saddle points
//! for unit-sigma markets, and the effective aspect ratio it induces.
//!
//! A converged solution with cost slopes (eta_plus, eta_minus) can be
//! rescaled, factor by factor, into a solution of the unregularized system
//! at a smaller effective ratio r_eff = (1 - n0) r, and back. The factors
//! are combinations of the tail functions evaluated at the solution itself.

use crate::gaussx::gauss_family;
use crate::replica_core::{EtaMinus, OrderParameters, Regularizer, ReplicaSolution};
use core::fmt;
use libm::sqrt;

/// Tail combinations entering the map, all at sigma = 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapFactors {
    /// Psi(x+) - Psi(x-); reduces to z without a regularizer.
    pub a_psi: f64,
    /// Phi(x+) + Phi(x-); equals 1 - n0, the fraction of active assets.
    pub a_phi: f64,
    /// W(x+) + W(x-).
    pub a_w: f64,
    /// Map variable z = (lambda - eta_plus)/s; a plus-side cost only shifts
    /// lambda, so it enters every factor through this shifted argument.
    pub z: f64,
}

impl MapFactors {
    /// 2 A_W - A_Phi: positive inside the physical region, zero on the line
    /// whose image is the unregularized critical point, negative beyond.
    pub fn discriminant(&self) -> f64 {
        2.0 * self.a_w - self.a_phi
    }
}

/// Mapping failures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MapError {
    /// The factor form of the map is only known for sigma identically 1.
    HeterogeneousSigma,
    /// The source of the inverse map must carry no regularizer.
    EffectiveNotUnregularized,
    /// 2 A_W - A_Phi <= 0: the point lies on or beyond the image of the
    /// critical point, where the factors lose meaning.
    NonPositiveDiscriminant(f64),
    /// No z in (0, 40] satisfies r * A_Phi(z) = r_eff: the requested
    /// (r_eff, r) pair is inconsistent with this regularizer.
    NoRoot,
}

impl fmt::Display for MapError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MapError::HeterogeneousSigma => {
                write!(f, "the order-parameter map requires a unit-sigma market")
            }
            MapError::EffectiveNotUnregularized => {
                write!(f, "inverse map source must be an unregularized solution")
            }
            MapError::NonPositiveDiscriminant(d) => {
                write!(f, "map discriminant 2A_W - A_Phi = {d} is not positive")
            }
            MapError::NoRoot => {
                write!(f, "no z in (0, 40] matches the requested aspect ratios")
            }
        }
    }
}

impl core::error::Error for MapError {}

/// Tail combinations at a given (lambda, s = sqrt(-2 q0hat)) and regularizer.
pub fn a_combinations(lambda: f64, s: f64, reg: &Regularizer) -> MapFactors {
    let z = (lambda - reg.eta_plus()) / s;
    let (_, cp, pp, wp) = gauss_family(z);
    let (cm, pm, wm) = match reg.eta_minus() {
        EtaMinus::NoShort => (0.0, 0.0, 0.0),
        EtaMinus::Slope(em) => {
            let (_, c, p, w) = gauss_family(-(lambda + em) / s);
            (c, p, w)
        }
    };
    MapFactors {
        a_psi: pp - pm,
        a_phi: cp + cm,
        a_w: wp + wm,
        z,
    }
}

/// Rescale a converged regularized solution into the unregularized system.
///
/// Returns the effective order parameters together with the effective
/// aspect ratio r_eff = r A_Phi = (1 - n0) r; the effective parameters
/// satisfy the unregularized stationarity conditions at r_eff.
pub fn map_to_effective(sol: &ReplicaSolution) -> Result<(OrderParameters, f64), MapError> {
    if !sol.model.is_unit_sigma() {
        return Err(MapError::HeterogeneousSigma);
    }
    let p = sol.params;
    let s = p.s();
    let f = a_combinations(p.lambda, s, &sol.regularizer);
    let d = f.discriminant();
    if d <= 0.0 {
        return Err(MapError::NonPositiveDiscriminant(d));
    }
    let sq_d = sqrt(d);
    let eff = OrderParameters::from_s(
        s * sq_d / f.a_phi,
        p.epsilon * f.a_psi / sq_d,
        p.q0 * f.a_psi * f.a_psi / d,
        p.delta * f.a_psi / sq_d,
        s / sqrt(f.a_phi),
        p.deltahat * sq_d / (f.a_phi * f.a_psi),
    );
    Ok((eff, sol.model.r() * f.a_phi))
}

/// Reconstruct the regularized parameters at aspect ratio `r` from an
/// unregularized solution at r_eff = eff.model.r().
///
/// Solves the scalar self-consistency r A_Phi(z) = r_eff for the map
/// variable z by bracketed bisection (the width s follows from the inner
/// contraction s = s_eff sqrt(A_Phi)), then applies the inverse factors.
pub fn map_from_effective(
    eff: &ReplicaSolution,
    reg: &Regularizer,
    r: f64,
) -> Result<OrderParameters, MapError> {
    if !eff.model.is_unit_sigma() {
        return Err(MapError::HeterogeneousSigma);
    }
    if eff.regularizer.eta_plus() != 0.0 || eff.regularizer.eta_minus() != EtaMinus::Slope(0.0) {
        return Err(MapError::EffectiveNotUnregularized);
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(MapError::NoRoot);
    }
    let r_eff = eff.model.r();
    let p = eff.params;
    let s_eff = p.s();
    // Without a regularizer A_Phi is identically 1: the map is the identity
    // and the pair is consistent only when the two ratios agree.
    if reg.eta_plus() == 0.0 && reg.eta_minus() == EtaMinus::Slope(0.0) {
        return if (r - r_eff).abs() <= 1e-9 * r.max(r_eff) {
            Ok(p)
        } else {
            Err(MapError::NoRoot)
        };
    }

    let gap = |z: f64| r * factors_at(z, s_eff, reg).a_phi - r_eff;

    // Scan a geometric grid for a sign change, then bisect. A_Phi need not
    // be monotone in z for finite eta_minus, so the first bracket is taken.
    const Z_LO: f64 = 1e-13;
    const Z_HI: f64 = 40.0;
    const STEPS: usize = 2000;
    let mut lo = Z_LO;
    let mut g_lo = gap(lo);
    let mut bracket = None;
    if g_lo == 0.0 {
        bracket = Some((lo, lo));
    } else {
        for i in 1..=STEPS {
            let z = Z_LO * libm::pow(Z_HI / Z_LO, i as f64 / STEPS as f64);
            let g = gap(z);
            if g == 0.0 {
                bracket = Some((z, z));
                break;
            }
            if (g_lo < 0.0) != (g < 0.0) {
                bracket = Some((lo, z));
                break;
            }
            lo = z;
            g_lo = g;
        }
    }
    let (mut lo, mut hi) = bracket.ok_or(MapError::NoRoot)?;
    let mut g_lo = gap(lo);
    for _ in 0..200 {
        if hi - lo <= 1e-15 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let g_mid = gap(mid);
        if g_mid == 0.0 {
            lo = mid;
            hi = mid;
            break;
        }
        if (g_lo < 0.0) == (g_mid < 0.0) {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
        }
    }
    let z = 0.5 * (lo + hi);

    let s = contracted_s(z, s_eff, reg);
    let f = a_combinations(z * s + reg.eta_plus(), s, reg);
    let d = f.discriminant();
    if d <= 0.0 {
        return Err(MapError::NonPositiveDiscriminant(d));
    }
    let sq_d = sqrt(d);
    Ok(OrderParameters::from_s(
        p.lambda * f.z * f.a_phi / sq_d + reg.eta_plus(),
        p.epsilon * sq_d / f.a_psi,
        p.q0 * d / (f.a_psi * f.a_psi),
        p.delta * sq_d / f.a_psi,
        s,
        p.deltahat * f.a_phi * f.a_psi / sq_d,
    ))
}

/// Factors as a function of the map variable z, with the width s resolved
/// by the inner contraction.
fn factors_at(z: f64, s_eff: f64, reg: &Regularizer) -> MapFactors {
    let s = contracted_s(z, s_eff, reg);
    a_combinations(z * s + reg.eta_plus(), s, reg)
}

/// Fixed point of s = s_eff sqrt(A_Phi(z, s)); since A_Phi in (0, 1] this
/// is a contraction from s_eff downward.
fn contracted_s(z: f64, s_eff: f64, reg: &Regularizer) -> f64 {
    let mut s = s_eff;
    for _ in 0..200 {
        let a_phi = a_combinations(z * s + reg.eta_plus(), s, reg).a_phi;
        let next = s_eff * sqrt(a_phi);
        if (next - s).abs() <= 1e-16 * s {
            return next;
        }
        s = next;
    }
    s
}
