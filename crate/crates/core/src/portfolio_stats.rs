//! Observables of a converged saddle point: condensate density, the full
//! weight distribution (atom at zero plus truncated Gaussians per
//! volatility group) with density, closed-form CDF, moments and a sampler,
//! the in-sample shortfall, the out-of-sample estimation error, and the
//! closed-form zero-ratio (complete information) limit.

use crate::gaussx::{gauss_family, norm_cdf, norm_pdf, phi_inverse};
use crate::replica_core::{
    representative_weight, tail_averages, EtaMinus, MarketModel, OrderParameters, Regularizer,
    ReplicaSolution,
};
use alloc::vec::Vec;
use libm::sqrt;
use rand_core::{RngCore, SeedableRng};

/// Fraction of assets whose weight the regularizer pins at exactly zero:
/// the sigma-group average of 1 - Phi(x+) - Phi(x-). Complementary to the
/// active fraction entering the stationarity conditions, so the two always
/// sum to 1 by construction.
pub fn condensate_density(
    params: &OrderParameters,
    model: &MarketModel,
    reg: &Regularizer,
) -> f64 {
    let t = tail_averages(params.lambda, params.s(), reg, model.sigma_groups());
    (1.0 - t.phi).clamp(0.0, 1.0)
}

/// One volatility group's slice of the weight distribution: Gaussians of a
/// common width, the positive branch restricted to w > 0 and the negative
/// branch (absent under a short-selling ban) restricted to w < 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightComponent {
    /// Fraction of assets in the group.
    pub fraction: f64,
    /// Return volatility of the group.
    pub sigma: f64,
    /// Center (lambda - eta_plus) / (2 sigma^2 deltahat) of the positive
    /// branch.
    pub center_pos: f64,
    /// Center (lambda + eta_minus) / (2 sigma^2 deltahat) of the negative
    /// branch. The center itself is positive; only the tail of the Gaussian
    /// that spills below zero is kept. None under a short-selling ban.
    pub center_neg: Option<f64>,
    /// Common width s / (2 sigma deltahat) of both branches.
    pub width: f64,
}

/// Mixture law of a representative weight: a point mass at zero plus one
/// positive- and (short selling permitted) one negative-truncated Gaussian
/// per volatility group.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightDistribution {
    /// Mass of the atom at w = 0.
    pub n0: f64,
    /// One entry per volatility group.
    pub components: Vec<WeightComponent>,
}

impl WeightDistribution {
    /// Continuous part of the density. The atom at zero is excluded:
    /// exactly at w = 0 the truncations put no mass and 0 is returned.
    pub fn density(&self, w: f64) -> f64 {
        let mut p = 0.0;
        for c in &self.components {
            if w > 0.0 {
                p += c.fraction * norm_pdf((w - c.center_pos) / c.width) / c.width;
            } else if w < 0.0 {
                if let Some(cn) = c.center_neg {
                    p += c.fraction * norm_pdf((w - cn) / c.width) / c.width;
                }
            }
        }
        p
    }

    /// Distribution function P(w* <= w), atom included.
    pub fn cdf(&self, w: f64) -> f64 {
        let mut f = 0.0;
        for c in &self.components {
            if let Some(cn) = c.center_neg {
                if w < 0.0 {
                    f += c.fraction * norm_cdf((w - cn) / c.width);
                    continue;
                }
                f += c.fraction * norm_cdf(-cn / c.width);
            }
            if w >= 0.0 {
                f += c.fraction
                    * (norm_cdf((w - c.center_pos) / c.width)
                        - norm_cdf(-c.center_pos / c.width));
            }
        }
        if w >= 0.0 {
            f += self.n0;
        }
        f
    }

    /// Total mass: atom plus both truncated branches of every group.
    pub fn mass(&self) -> f64 {
        let mut m = self.n0;
        for c in &self.components {
            m += c.fraction * norm_cdf(c.center_pos / c.width);
            if let Some(cn) = c.center_neg {
                m += c.fraction * norm_cdf(-cn / c.width);
            }
        }
        m
    }

    /// First moment of the mixture; 1 at any stationary point (the budget
    /// constraint).
    pub fn mean(&self) -> f64 {
        let mut m = 0.0;
        for c in &self.components {
            m += c.fraction * c.width * truncated_first_moment(c.center_pos / c.width);
            if let Some(cn) = c.center_neg {
                m -= c.fraction * c.width * truncated_first_moment(-cn / c.width);
            }
        }
        m
    }

    /// Second moment of sigma w* across the mixture; q0 at any stationary
    /// point (the overlap).
    pub fn scaled_second_moment(&self) -> f64 {
        let mut m = 0.0;
        for c in &self.components {
            let s2 = c.sigma * c.sigma * c.width * c.width;
            m += c.fraction * s2 * 2.0 * truncated_second_moment(c.center_pos / c.width);
            if let Some(cn) = c.center_neg {
                m += c.fraction * s2 * 2.0 * truncated_second_moment(-cn / c.width);
            }
        }
        m
    }
}

/// E[w; w > 0] of a unit Gaussian centered at x: Psi(x) restricted to the
/// positive side.
fn truncated_first_moment(x: f64) -> f64 {
    let (_, _, p, _) = gauss_family(x);
    p
}

/// E[w^2; w > 0] / 2 of a unit Gaussian centered at x: W(x).
fn truncated_second_moment(x: f64) -> f64 {
    let (_, _, _, w) = gauss_family(x);
    w
}

/// Assemble the mixture law of a representative weight at `params`.
pub fn weight_distribution(
    params: &OrderParameters,
    model: &MarketModel,
    reg: &Regularizer,
) -> WeightDistribution {
    let s = params.s();
    let mut components = Vec::with_capacity(model.sigma_groups().len());
    for g in model.sigma_groups() {
        let scale = 2.0 * g.sigma * g.sigma * params.deltahat;
        components.push(WeightComponent {
            fraction: g.fraction,
            sigma: g.sigma,
            center_pos: (params.lambda - reg.eta_plus()) / scale,
            center_neg: match reg.eta_minus() {
                EtaMinus::NoShort => None,
                EtaMinus::Slope(em) => Some((params.lambda + em) / scale),
            },
            width: s / (2.0 * g.sigma * params.deltahat),
        });
    }
    WeightDistribution { n0: condensate_density(params, model, reg), components }
}

/// Draw `count` representative weights: pick a volatility group by its
/// fraction, draw a standard normal field, and take the optimal weight.
/// Fully determined by `seed`; no global state.
pub fn sample_weights(
    params: &OrderParameters,
    model: &MarketModel,
    reg: &Regularizer,
    count: usize,
    seed: u64,
) -> Vec<f64> {
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let ug = unit_uniform(&mut rng);
        let mut sigma = model.sigma_groups().last().expect("nonempty groups").sigma;
        let mut acc = 0.0;
        for g in model.sigma_groups() {
            acc += g.fraction;
            if ug < acc {
                sigma = g.sigma;
                break;
            }
        }
        let z = standard_normal(&mut rng);
        out.push(representative_weight(z, sigma, params, reg));
    }
    out
}

/// Uniform draw strictly inside (0, 1): 53 random bits centered in their
/// quantization cell, so phi_inverse never sees an endpoint.
pub(crate) fn unit_uniform(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0)
}

/// Standard normal draw by inverting the CDF at a strict-interior uniform.
pub(crate) fn standard_normal(rng: &mut impl RngCore) -> f64 {
    phi_inverse(unit_uniform(rng)).expect("uniform in (0, 1)")
}

/// Structure-corrected overlap q0_tilde = q0 avg_g fraction_g / sigma_g^2
/// and the out-of-sample shortfall ratio sqrt(q0_tilde): how many times the
/// realized risk exceeds the true optimum. sqrt(q0_tilde) - 1 is the
/// relative estimation error.
pub fn estimation_error(sol: &ReplicaSolution, model: &MarketModel) -> (f64, f64) {
    let q0_tilde = sol.params.q0 * model.structural_factor();
    (q0_tilde, sqrt(q0_tilde))
}

/// In-sample expected shortfall lambda r / (1 - alpha): the optimum of the
/// training objective, biased low by in-sample optimism.
pub fn in_sample_es(sol: &ReplicaSolution) -> f64 {
    sol.params.lambda * sol.model.r() / (1.0 - sol.model.alpha())
}

/// The closed-form limit of complete information (aspect ratio -> 0).
#[derive(Debug, Clone, PartialEq)]
pub struct LimitReport {
    /// True overlap 1 / avg_g(fraction_g / sigma_g^2); also the normalized
    /// portfolio variance sigma_p^2 / N.
    pub q0_true: f64,
    /// True value at risk Phi^{-1}(alpha) sqrt(q0_true).
    pub epsilon_true: f64,
    /// True expected shortfall phi(Phi^{-1}(alpha)) sqrt(q0_true) / (1 - alpha).
    pub es_true: f64,
    /// Per-group weight q0_true / sigma_g^2, paired with the group fraction.
    pub weights: Vec<GroupWeight>,
    /// Portfolio variance over N; identical to q0_true.
    pub portfolio_variance: f64,
}

/// Weight every asset of one volatility group receives in the limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupWeight {
    pub sigma: f64,
    pub fraction: f64,
    pub weight: f64,
}

/// Observables in the limit of complete information, where the optimizer
/// recovers the variance-minimizing weights exactly. The aspect ratio of
/// `model` is ignored.
pub fn complete_information(model: &MarketModel) -> LimitReport {
    let q0_true = 1.0 / model.structural_factor();
    let sq = sqrt(q0_true);
    let quantile = phi_inverse(model.alpha()).expect("alpha inside (0, 1)");
    let weights = model
        .sigma_groups()
        .iter()
        .map(|g| GroupWeight {
            sigma: g.sigma,
            fraction: g.fraction,
            weight: q0_true / (g.sigma * g.sigma),
        })
        .collect();
    LimitReport {
        q0_true,
        epsilon_true: quantile * sq,
        es_true: norm_pdf(quantile) * sq / (1.0 - model.alpha()),
        weights,
        portfolio_variance: q0_true,
    }
}
