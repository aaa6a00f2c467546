//! Domain types for the market ensemble and order parameters, the replica
//! free energy, its six stationarity residuals (generic l1 regularizer,
//! unregularized, no-short), and the representative weight.

use alloc::vec::Vec;
use core::fmt;

use libm::sqrt;

use crate::gaussx::gauss_family;

/// One volatility group: the `fraction` of the asset population with
/// volatility `sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaGroup {
    pub sigma: f64,
    pub fraction: f64,
}

/// Market ensemble: confidence level `alpha`, aspect ratio `r` = N/T, and
/// the volatility profile as population-weighted sigma groups.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketModel {
    alpha: f64,
    r: f64,
    sigma_groups: Vec<SigmaGroup>,
}

/// Constructor-time validation failure; the message names the field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelError {
    Alpha(f64),
    AspectRatio(f64),
    NoSigmaGroups,
    Sigma { index: usize, value: f64 },
    Fraction { index: usize, value: f64 },
    FractionSum(f64),
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::Alpha(v) => write!(f, "alpha must lie in (0.5, 1), got {v}"),
            ModelError::AspectRatio(v) => write!(f, "r must be finite and > 0, got {v}"),
            ModelError::NoSigmaGroups => write!(f, "sigma groups must be non-empty"),
            ModelError::Sigma { index, value } => {
                write!(f, "sigma must be finite and > 0, got {value} in group {index}")
            }
            ModelError::Fraction { index, value } => {
                write!(f, "fraction must be finite and > 0, got {value} in group {index}")
            }
            ModelError::FractionSum(v) => {
                write!(f, "fractions must sum to 1 within 1e-12, got {v}")
            }
        }
    }
}

impl core::error::Error for ModelError {}

impl MarketModel {
    pub fn new(alpha: f64, r: f64, sigma_groups: Vec<SigmaGroup>) -> Result<Self, ModelError> {
        if !(alpha > 0.5 && alpha < 1.0) {
            return Err(ModelError::Alpha(alpha));
        }
        if !(r.is_finite() && r > 0.0) {
            return Err(ModelError::AspectRatio(r));
        }
        if sigma_groups.is_empty() {
            return Err(ModelError::NoSigmaGroups);
        }
        let mut sum = 0.0;
        for (index, g) in sigma_groups.iter().enumerate() {
            if !(g.sigma.is_finite() && g.sigma > 0.0) {
                return Err(ModelError::Sigma { index, value: g.sigma });
            }
            if !(g.fraction.is_finite() && g.fraction > 0.0) {
                return Err(ModelError::Fraction { index, value: g.fraction });
            }
            sum += g.fraction;
        }
        if !((sum - 1.0).abs() <= 1e-12) {
            return Err(ModelError::FractionSum(sum));
        }
        Ok(MarketModel { alpha, r, sigma_groups })
    }

    /// Homogeneous unit-volatility model.
    pub fn unit(alpha: f64, r: f64) -> Result<Self, ModelError> {
        Self::new(alpha, r, alloc::vec![SigmaGroup { sigma: 1.0, fraction: 1.0 }])
    }

    #[inline]
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    #[inline]
    pub fn r(&self) -> f64 {
        self.r
    }

    #[inline]
    pub fn sigma_groups(&self) -> &[SigmaGroup] {
        &self.sigma_groups
    }

    /// Same profile at a different aspect ratio.
    pub fn with_r(&self, r: f64) -> Result<Self, ModelError> {
        Self::new(self.alpha, r, self.sigma_groups.clone())
    }

    /// Same profile at a different confidence level.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self, ModelError> {
        Self::new(alpha, self.r, self.sigma_groups.clone())
    }

    /// Structural factor sum_g fraction_g / sigma_g^2; rescales q0 into the
    /// out-of-sample error q0_tilde and sets the complete-information q0.
    pub fn structural_factor(&self) -> f64 {
        self.sigma_groups
            .iter()
            .fold(0.0, |acc, g| acc + g.fraction / (g.sigma * g.sigma))
    }

    /// True when every group has sigma equal to 1 within 1e-12.
    pub fn is_unit_sigma(&self) -> bool {
        self.sigma_groups.iter().all(|g| (g.sigma - 1.0).abs() <= 1e-12)
    }
}

/// Penalty slope on short positions: a finite slope or an outright ban.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaMinus {
    Slope(f64),
    NoShort,
}

/// Asymmetric l1 regularizer with slope `eta_plus` on long positions and
/// `eta_minus` on short positions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularizer {
    eta_plus: f64,
    eta_minus: EtaMinus,
}

/// Constructor-time validation failure; the message names the field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegularizerError {
    EtaPlus(f64),
    EtaMinus(f64),
}

impl fmt::Display for RegularizerError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegularizerError::EtaPlus(v) => {
                write!(f, "eta-plus must be finite and >= 0, got {v}")
            }
            RegularizerError::EtaMinus(v) => {
                write!(f, "eta-minus must be finite and >= 0, got {v}")
            }
        }
    }
}

impl core::error::Error for RegularizerError {}

impl Regularizer {
    pub fn new(eta_plus: f64, eta_minus: f64) -> Result<Self, RegularizerError> {
        if !(eta_plus.is_finite() && eta_plus >= 0.0) {
            return Err(RegularizerError::EtaPlus(eta_plus));
        }
        if !(eta_minus.is_finite() && eta_minus >= 0.0) {
            return Err(RegularizerError::EtaMinus(eta_minus));
        }
        Ok(Regularizer { eta_plus, eta_minus: EtaMinus::Slope(eta_minus) })
    }

    /// Infinite short penalty (weights constrained to w >= 0).
    pub fn no_short(eta_plus: f64) -> Result<Self, RegularizerError> {
        if !(eta_plus.is_finite() && eta_plus >= 0.0) {
            return Err(RegularizerError::EtaPlus(eta_plus));
        }
        Ok(Regularizer { eta_plus, eta_minus: EtaMinus::NoShort })
    }

    /// No regularization at all.
    pub fn none() -> Self {
        Regularizer { eta_plus: 0.0, eta_minus: EtaMinus::Slope(0.0) }
    }

    #[inline]
    pub fn eta_plus(&self) -> f64 {
        self.eta_plus
    }

    #[inline]
    pub fn eta_minus(&self) -> EtaMinus {
        self.eta_minus
    }

    #[inline]
    pub fn is_no_short(&self) -> bool {
        matches!(self.eta_minus, EtaMinus::NoShort)
    }

    /// Equivalent regularizer with the long slope folded away: shifting
    /// lambda -> lambda - eta_plus and eta_minus -> eta_minus + eta_plus
    /// leaves every tail argument invariant, so the solver works at
    /// eta_plus = 0 and shifts lambda back on output.
    pub(crate) fn shifted_to_zero_plus(&self) -> Regularizer {
        let eta_minus = match self.eta_minus {
            EtaMinus::NoShort => EtaMinus::NoShort,
            EtaMinus::Slope(em) => EtaMinus::Slope(em + self.eta_plus),
        };
        Regularizer { eta_plus: 0.0, eta_minus }
    }
}

/// The six order parameters. `q0hat` is negative; its internal square-root
/// form s = sqrt(-2 q0hat) is exposed via [`OrderParameters::s`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderParameters {
    pub lambda: f64,
    pub epsilon: f64,
    pub q0: f64,
    pub delta: f64,
    pub q0hat: f64,
    pub deltahat: f64,
}

/// Sign/finiteness violation that makes the free-energy surface undefined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DomainError {
    Q0(f64),
    Q0Hat(f64),
    Delta(f64),
    DeltaHat(f64),
    NonFinite,
}

impl fmt::Display for DomainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DomainError::Q0(v) => write!(f, "q0 must be > 0, got {v}"),
            DomainError::Q0Hat(v) => write!(f, "q0hat must be < 0, got {v}"),
            DomainError::Delta(v) => write!(f, "delta must be > 0, got {v}"),
            DomainError::DeltaHat(v) => write!(f, "deltahat must be > 0, got {v}"),
            DomainError::NonFinite => write!(f, "order parameters must be finite"),
        }
    }
}

impl core::error::Error for DomainError {}

impl OrderParameters {
    /// Construct from the square-root conjugate s = sqrt(-2 q0hat) > 0.
    pub fn from_s(lambda: f64, epsilon: f64, q0: f64, delta: f64, s: f64, deltahat: f64) -> Self {
        OrderParameters { lambda, epsilon, q0, delta, q0hat: -0.5 * s * s, deltahat }
    }

    /// s = sqrt(-2 q0hat), the width scale of every tail argument.
    #[inline]
    pub fn s(&self) -> f64 {
        sqrt(-2.0 * self.q0hat)
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        let all = [self.lambda, self.epsilon, self.q0, self.delta, self.q0hat, self.deltahat];
        if !all.iter().all(|v| v.is_finite()) {
            return Err(DomainError::NonFinite);
        }
        if self.q0 <= 0.0 {
            return Err(DomainError::Q0(self.q0));
        }
        if self.q0hat >= 0.0 {
            return Err(DomainError::Q0Hat(self.q0hat));
        }
        if self.delta <= 0.0 {
            return Err(DomainError::Delta(self.delta));
        }
        if self.deltahat <= 0.0 {
            return Err(DomainError::DeltaHat(self.deltahat));
        }
        Ok(())
    }
}

/// Population averages of the regularizer tail terms. Arguments per group:
/// x+ = (lambda - eta_plus)/(sigma s), x- = -(lambda + eta_minus)/(sigma s);
/// under no-short the x- terms vanish identically.
pub(crate) struct TailAverages {
    /// avg_g (Psi(x+) - Psi(x-)) / sigma_g
    pub psi_over_sigma: f64,
    /// avg_g (Phi(x+) + Phi(x-)); equals 1 - n0
    pub phi: f64,
    /// avg_g (W(x+) + W(x-))
    pub w: f64,
}

pub(crate) fn tail_averages(
    lambda: f64,
    s: f64,
    reg: &Regularizer,
    groups: &[SigmaGroup],
) -> TailAverages {
    let mut t = TailAverages { psi_over_sigma: 0.0, phi: 0.0, w: 0.0 };
    for g in groups {
        let ss = g.sigma * s;
        let (_, cp, pp, wp) = gauss_family((lambda - reg.eta_plus()) / ss);
        let (cm, pm, wm) = match reg.eta_minus() {
            EtaMinus::NoShort => (0.0, 0.0, 0.0),
            EtaMinus::Slope(em) => {
                let (_, c, p, w) = gauss_family(-(lambda + em) / ss);
                (c, p, w)
            }
        };
        t.psi_over_sigma += g.fraction * (pp - pm) / g.sigma;
        t.phi += g.fraction * (cp + cm);
        t.w += g.fraction * (wp + wm);
    }
    t
}

/// The free energy (effective cost per asset) in fully integrated form, for
/// arbitrary interior order parameters.
pub fn free_energy(
    params: &OrderParameters,
    model: &MarketModel,
    reg: &Regularizer,
) -> Result<f64, DomainError> {
    params.validate()?;
    let (alpha, r) = (model.alpha(), model.r());
    let s = params.s();
    let t = tail_averages(params.lambda, s, reg, model.sigma_groups());
    let sq = sqrt(params.q0);
    let (_, _, _, wup) = gauss_family((params.delta + params.epsilon) / sq);
    let (_, _, _, wu0) = gauss_family(params.epsilon / sq);
    Ok(params.lambda - alpha * params.epsilon / r - params.delta * params.q0hat
        - params.deltahat * params.q0
        - params.delta / (2.0 * r)
        + params.q0 / (r * params.delta) * (wup - wu0)
        + params.q0hat / params.deltahat * t.w)
}

/// The six stationarity residuals, each in its O(1) normalization, ordered
/// by the differentiation direction (lambda, q0hat, deltahat, q0, epsilon,
/// delta). All six vanish simultaneously iff `params` is a stationary point
/// of [`free_energy`].
pub fn saddle_residuals(
    params: &OrderParameters,
    model: &MarketModel,
    reg: &Regularizer,
) -> Result<[f64; 6], DomainError> {
    params.validate()?;
    let (alpha, r) = (model.alpha(), model.r());
    let s = params.s();
    let t = tail_averages(params.lambda, s, reg, model.sigma_groups());
    let sq = sqrt(params.q0);
    let (_, cup, pup, wup) = gauss_family((params.delta + params.epsilon) / sq);
    let (_, cu0, pu0, wu0) = gauss_family(params.epsilon / sq);
    let (q0, d, dh, eps) = (params.q0, params.delta, params.deltahat, params.epsilon);
    Ok([
        // budget: 1 = (s / 2 deltahat) avg (Psi(x+) - Psi(x-)) / sigma
        1.0 - s / (2.0 * dh) * t.psi_over_sigma,
        // overlap conjugate: 2 delta deltahat = avg (Phi(x+) + Phi(x-)) = 1 - n0
        2.0 * d * dh - t.phi,
        // susceptibility conjugate: 1 = (s^2 / 2 deltahat^2 q0) avg (W(x+) + W(x-))
        1.0 - s * s / (2.0 * dh * dh * q0) * t.w,
        // overlap: 2 r delta deltahat = Phi(u+) - Phi(u0)
        2.0 * d * dh - (cup - cu0) / r,
        // quantile: alpha = (sqrt(q0) / delta) (Psi(u+) - Psi(u0))
        alpha - sq / d * (pup - pu0),
        // susceptibility: r (q0hat + 2 q0 deltahat / delta) + alpha eps / delta
        //                 + 1/2 = (q0 / delta^2) (W(u+) - W(u0))
        r * (params.q0hat + 2.0 * q0 * dh / d) + alpha * eps / d + 0.5
            - q0 / (d * d) * (wup - wu0),
    ])
}

/// Optimal weight of an asset with volatility `sigma` facing the Gaussian
/// field z: positive branch, dead band, or (finite eta_minus only) negative
/// branch. Continuous in z.
pub fn representative_weight(
    z: f64,
    sigma: f64,
    params: &OrderParameters,
    reg: &Regularizer,
) -> f64 {
    let ssz = sigma * params.s() * z;
    let scale = 2.0 * sigma * sigma * params.deltahat;
    let num_pos = params.lambda - reg.eta_plus() + ssz;
    if num_pos >= 0.0 {
        return num_pos / scale;
    }
    if let EtaMinus::Slope(em) = reg.eta_minus() {
        let num_neg = params.lambda + em + ssz;
        if num_neg <= 0.0 {
            return num_neg / scale;
        }
    }
    0.0
}

/// A stationary point together with its derived observables.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaSolution {
    pub model: MarketModel,
    pub regularizer: Regularizer,
    pub params: OrderParameters,
    /// Free energy at `params`; equals lambda at a stationary point.
    pub free_energy: f64,
    /// In-sample expected shortfall lambda r / (1 - alpha).
    pub es_in: f64,
    /// Condensate density: fraction of assets with weight exactly 0.
    pub n0: f64,
    /// Effective aspect ratio (1 - n0) r.
    pub r_eff: f64,
    /// Structure-corrected overlap q0 sum_g fraction_g / sigma_g^2; its
    /// square root is the out-of-sample ES ratio.
    pub q0_tilde: f64,
    /// Infinity norm of the six stationarity residuals at `params`.
    pub residual_norm: f64,
    /// lambda - eta_plus > 0: estimated risk still positive.
    pub physical: bool,
}

impl ReplicaSolution {
    /// Assemble the derived observables at `params`. The residual norm is
    /// recomputed here, so it always describes `params` itself.
    pub fn from_params(
        model: MarketModel,
        regularizer: Regularizer,
        params: OrderParameters,
    ) -> Result<Self, DomainError> {
        let res = saddle_residuals(&params, &model, &regularizer)?;
        let residual_norm = res.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let free_energy = free_energy(&params, &model, &regularizer)?;
        let t = tail_averages(params.lambda, params.s(), &regularizer, model.sigma_groups());
        let es_in = params.lambda * model.r() / (1.0 - model.alpha());
        Ok(ReplicaSolution {
            es_in,
            n0: (1.0 - t.phi).clamp(0.0, 1.0),
            r_eff: model.r() * t.phi,
            q0_tilde: params.q0 * model.structural_factor(),
            residual_norm,
            physical: params.lambda - regularizer.eta_plus() > 0.0,
            free_energy,
            params,
            regularizer,
            model,
        })
    }
}
