//! Damped Newton solver for the six stationarity conditions, continuation
//! in the aspect ratio, parameter sweeps, and phase-boundary tracing.
//!
//! The positive parameters (q0, Delta, s, Delta_hat) are iterated in log
//! coordinates so Newton steps can never leave the domain; lambda and
//! epsilon stay linear and may cross zero. A plus-side cost is removed up
//! front by the shift lambda -> lambda - eta_plus (the stationarity system
//! depends on eta_plus only through that shift) and restored at the end.

use crate::espmap::a_combinations;
use crate::gaussx::{norm_pdf, phi_inverse};
use crate::replica_core::{
    saddle_residuals, DomainError, EtaMinus, MarketModel, OrderParameters, Regularizer,
    ReplicaSolution,
};
use alloc::vec::Vec;
use core::fmt;
use libm::{exp, log, sqrt};

/// Newton and continuation controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveConfig {
    /// Convergence threshold on the residual infinity norm.
    pub tol: f64,
    /// Newton iteration cap per solve.
    pub max_iter: usize,
    /// Initial backtracking scale in (0, 1].
    pub damping: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            tol: 1e-10,
            max_iter: 200,
            damping: 1.0,
        }
    }
}

impl SolveConfig {
    fn assert_valid(&self) {
        assert!(self.tol > 0.0 && self.tol.is_finite(), "tol must be positive and finite");
        assert!(self.max_iter >= 1, "max_iter must be at least 1");
        assert!(
            self.damping > 0.0 && self.damping <= 1.0,
            "damping must lie in (0, 1]"
        );
    }
}

/// Solver failures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolveError {
    /// The residual stagnated above tolerance.
    NoConvergence { residual_norm: f64 },
    /// Continuation stalled where lambda - eta_plus collapses toward zero
    /// (overlap divergence or fold); the target lies outside the physical
    /// region reachable from the small-r branch.
    LeftPhysicalRegion { r_reached: f64 },
    /// A starting point violated the order-parameter domain.
    Domain(DomainError),
    /// Boundary tracing is restricted to alpha in (0.5, 0.999].
    UnsupportedAlpha(f64),
}

impl fmt::Display for SolveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveError::NoConvergence { residual_norm } => {
                write!(f, "solver stalled with residual norm {residual_norm:e}")
            }
            SolveError::LeftPhysicalRegion { r_reached } => {
                write!(f, "continuation left the physical region at r = {r_reached}")
            }
            SolveError::Domain(e) => write!(f, "{e}"),
            SolveError::UnsupportedAlpha(a) => {
                write!(f, "alpha = {a} outside the boundary-tracing range (0.5, 0.999]")
            }
        }
    }
}

impl core::error::Error for SolveError {}

impl From<DomainError> for SolveError {
    fn from(e: DomainError) -> Self {
        SolveError::Domain(e)
    }
}

/// Solver coordinates: [lambda, epsilon, ln q0, ln Delta, ln s, ln Delta_hat].
type V6 = [f64; 6];

const LOGV: [bool; 6] = [false, false, true, true, true, true];

fn to_solver(p: &OrderParameters) -> V6 {
    [
        p.lambda,
        p.epsilon,
        log(p.q0),
        log(p.delta),
        log(p.s()),
        log(p.deltahat),
    ]
}

fn to_params(v: &V6) -> OrderParameters {
    OrderParameters::from_s(v[0], v[1], exp(v[2]), exp(v[3]), exp(v[4]), exp(v[5]))
}

/// Linear view [lambda, epsilon, q0, Delta, s, Delta_hat] for extrapolation.
fn to_linear(v: &V6) -> V6 {
    [v[0], v[1], exp(v[2]), exp(v[3]), exp(v[4]), exp(v[5])]
}

fn from_linear(l: &V6) -> V6 {
    [l[0], l[1], log(l[2]), log(l[3]), log(l[4]), log(l[5])]
}

fn inf_norm(v: &V6) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn residuals_at(v: &V6, model: &MarketModel, reg: &Regularizer) -> Option<V6> {
    let p = to_params(v);
    let res = saddle_residuals(&p, model, reg).ok()?;
    if res.iter().all(|x| x.is_finite()) {
        Some(res)
    } else {
        None
    }
}

/// 6x6 dense Gaussian elimination with partial pivoting.
fn solve6(mut a: [V6; 6], mut b: V6) -> Option<V6> {
    for col in 0..6 {
        let mut piv = col;
        for row in col + 1..6 {
            if a[row][col].abs() > a[piv][col].abs() {
                piv = row;
            }
        }
        if !(a[piv][col].abs() > 0.0) || !a[piv][col].is_finite() {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..6 {
            let m = a[row][col] / a[col][col];
            if m != 0.0 {
                for k in col..6 {
                    a[row][k] -= m * a[col][k];
                }
                b[row] -= m * b[col];
            }
        }
    }
    let mut x = [0.0; 6];
    for col in (0..6).rev() {
        let mut s = b[col];
        for k in col + 1..6 {
            s -= a[col][k] * x[k];
        }
        x[col] = s / a[col][col];
        if !x[col].is_finite() {
            return None;
        }
    }
    Some(x)
}

/// Damped Newton with a finite-difference Jacobian, an infinity-norm step
/// cap of 3, and halving backtracks under a monotone-decrease test.
/// Returns (point, residual norm, iterations used, converged).
fn newton(start: V6, model: &MarketModel, reg: &Regularizer, cfg: &SolveConfig) -> (V6, f64, usize, bool) {
    let mut v = start;
    let Some(mut f) = residuals_at(&v, model, reg) else {
        return (start, f64::INFINITY, 0, false);
    };
    for it in 0..cfg.max_iter {
        let n0 = inf_norm(&f);
        if n0 <= cfg.tol {
            return (v, n0, it, true);
        }
        let mut jac = [[0.0; 6]; 6];
        let mut broken = false;
        for j in 0..6 {
            let h = if LOGV[j] { 1e-7 } else { 1e-7 * v[j].abs().max(1.0) };
            let mut vj = v;
            vj[j] += h;
            match residuals_at(&vj, model, reg) {
                Some(fj) => {
                    for i in 0..6 {
                        jac[i][j] = (fj[i] - f[i]) / h;
                    }
                }
                None => {
                    broken = true;
                    break;
                }
            }
        }
        if broken {
            return (v, n0, it, false);
        }
        let rhs = [-f[0], -f[1], -f[2], -f[3], -f[4], -f[5]];
        let Some(mut du) = solve6(jac, rhs) else {
            return (v, n0, it, false);
        };
        let m = inf_norm(&du);
        if m > 3.0 {
            for d in &mut du {
                *d *= 3.0 / m;
            }
        }
        let mut t = cfg.damping;
        let mut accepted = false;
        while t > 1e-10 {
            let mut vn = v;
            for k in 0..6 {
                vn[k] += t * du[k];
            }
            if let Some(fnew) = residuals_at(&vn, model, reg) {
                if inf_norm(&fnew) < n0 * (1.0 - 1e-4 * t) + 1e-15 {
                    v = vn;
                    f = fnew;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            return (v, n0, it, false);
        }
    }
    let n = inf_norm(&f);
    (v, n, cfg.max_iter, n <= cfg.tol)
}

/// Closed-form seed in the r -> 0 limit: the complete-information overlap,
/// the Gaussian alpha-quantile, and the leading small-r scalings of the
/// remaining parameters.
fn small_r_seed(model: &MarketModel) -> V6 {
    let alpha = model.alpha();
    let r = model.r();
    let q0 = 1.0 / model.structural_factor();
    let zq = phi_inverse(alpha).expect("alpha lies in (0.5, 1)");
    let delta = r * sqrt(q0) / norm_pdf(zq);
    [
        q0 / delta,
        zq * sqrt(q0),
        log(q0),
        log(delta),
        0.5 * log((1.0 - alpha) / r),
        log(1.0 / (2.0 * delta)),
    ]
}

/// Secant predictor in the linear parameters, with the positive entries
/// floored at 1e-3 of their current value.
fn predict(cur: &V6, cur_t: f64, prev: &V6, prev_t: f64, next_t: f64) -> V6 {
    let a = to_linear(cur);
    let b = to_linear(prev);
    let w = (next_t - cur_t) / (cur_t - prev_t);
    let mut g = [0.0; 6];
    for k in 0..6 {
        g[k] = a[k] + (a[k] - b[k]) * w;
        if LOGV[k] {
            g[k] = g[k].max(a[k] * 1e-3);
        }
    }
    from_linear(&g)
}

/// Geometric continuation in r from the small-r seed up to model.r(), on a
/// system whose eta_plus is already shifted away. Returns the solver vector
/// at the target.
fn continue_to(model: &MarketModel, reg: &Regularizer, cfg: &SolveConfig) -> Result<V6, SolveError> {
    let r_target = model.r();
    let r0 = r_target.min(1e-4);
    let m0 = model.with_r(r0).expect("r0 positive");
    let (mut v, n, _, ok) = newton(small_r_seed(&m0), &m0, reg, cfg);
    if !ok {
        return Err(SolveError::NoConvergence { residual_norm: n });
    }
    let mut r = r0;
    let mut prev: Option<(V6, f64)> = None;
    let mut budget = 3000_usize;
    while r < r_target {
        let mut rn = (r * 1.5).min(r_target);
        let mut tries = 0;
        loop {
            let guess = match &prev {
                Some((pv, pr)) if r > *pr => predict(&v, r, pv, *pr, rn),
                _ => v,
            };
            let mn = model.with_r(rn).expect("rn positive");
            let (vn, _, _, ok) = newton(guess, &mn, reg, cfg);
            budget = budget.saturating_sub(1);
            if ok {
                prev = Some((v, r));
                v = vn;
                r = rn;
                break;
            }
            rn = 0.5 * (r + rn);
            tries += 1;
            if tries > 80 || budget == 0 || rn - r < 1e-14 * r.max(1.0) {
                // Stalled. If lambda has collapsed relative to the weight
                // noise width s, the walk ran into the physical boundary
                // (overlap divergence or the fold of the solution branch);
                // otherwise it is a plain numerical failure.
                let z = v[0] / exp(v[4]);
                return Err(if z < 0.3 {
                    SolveError::LeftPhysicalRegion { r_reached: r }
                } else {
                    SolveError::NoConvergence { residual_norm: f64::INFINITY }
                });
            }
        }
        // Overlap runaway en route means the target sits at or beyond the
        // critical ratio: there is nothing physical to continue toward.
        if r < r_target && v[2] > 23.0 {
            return Err(SolveError::LeftPhysicalRegion { r_reached: r });
        }
    }
    Ok(v)
}

/// Solve the six stationarity conditions.
///
/// With `init` present, Newton runs directly from it on the requested
/// system. Otherwise the solution is grown by continuation in r from the
/// complete-information seed at r = 1e-4. A converged but unphysical
/// target (lambda <= eta_plus) is returned with `physical = false`;
/// `LeftPhysicalRegion` is reserved for continuation dying short of the
/// target.
pub fn solve_saddle(
    model: &MarketModel,
    reg: &Regularizer,
    init: Option<OrderParameters>,
    cfg: &SolveConfig,
) -> Result<ReplicaSolution, SolveError> {
    cfg.assert_valid();
    if let Some(p) = init {
        return refine(&p, model, reg, cfg).map(|(sol, _)| sol);
    }
    let shifted = reg.shifted_to_zero_plus();
    let mut v = continue_to(model, &shifted, cfg)?;
    // Restore the shift and re-polish on the original system so the
    // reported residuals describe (model, reg) itself.
    v[0] += reg.eta_plus();
    let (vf, n, _, ok) = newton(v, model, reg, cfg);
    if !ok {
        return Err(SolveError::NoConvergence { residual_norm: n });
    }
    ReplicaSolution::from_params(model.clone(), *reg, to_params(&vf)).map_err(SolveError::Domain)
}

/// Newton-refine from an explicit starting point, reporting the number of
/// iterations actually used.
pub fn refine(
    init: &OrderParameters,
    model: &MarketModel,
    reg: &Regularizer,
    cfg: &SolveConfig,
) -> Result<(ReplicaSolution, usize), SolveError> {
    cfg.assert_valid();
    init.validate()?;
    let (v, n, iters, ok) = newton(to_solver(init), model, reg, cfg);
    if !ok {
        return Err(SolveError::NoConvergence { residual_norm: n });
    }
    let sol = ReplicaSolution::from_params(model.clone(), *reg, to_params(&v))?;
    Ok((sol, iters))
}

/// Linear parameter path for [`sweep`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepPath {
    /// Grid in the aspect ratio r = N/T.
    AspectRatio { start: f64, end: f64 },
    /// Grid in the tail level alpha.
    Alpha { start: f64, end: f64 },
}

/// Why a sweep stopped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepTermination {
    /// All requested grid points solved and physical.
    Completed,
    /// The solution at `index` converged with lambda - eta_plus <= 0.
    HitPhysicalBoundary { index: usize },
    /// The overlap diverged at `index` (1/q0 -> 0 at the critical ratio).
    Q0Divergence { index: usize },
    /// The solver failed at `index` for another reason.
    ConvergenceFailure { index: usize },
}

/// Solutions along a parameter path, in grid order.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub solutions: Vec<ReplicaSolution>,
    pub termination: SweepTermination,
}

/// Warm-started sweep along `path` with `steps` equally spaced points.
/// Stops early (reporting the index) when a point fails to converge, the
/// overlap diverges, or the path leaves the physical region.
pub fn sweep(
    model: &MarketModel,
    reg: &Regularizer,
    path: SweepPath,
    steps: usize,
    cfg: &SolveConfig,
) -> SweepResult {
    cfg.assert_valid();
    assert!(steps >= 1, "sweep needs at least one step");
    let (start, end) = match path {
        SweepPath::AspectRatio { start, end } => (start, end),
        SweepPath::Alpha { start, end } => (start, end),
    };
    assert!(start != end || steps == 1, "sweep path must be non-degenerate");
    let mut solutions: Vec<ReplicaSolution> = Vec::with_capacity(steps);
    let mut cur: Option<(V6, f64)> = None;
    let mut prev: Option<(V6, f64)> = None;
    let unregularized = reg.eta_plus() == 0.0 && reg.eta_minus() == EtaMinus::Slope(0.0);
    for i in 0..steps {
        let t = if steps == 1 {
            0.0
        } else {
            i as f64 / (steps - 1) as f64
        };
        let val = start + (end - start) * t;
        let m = match path {
            SweepPath::AspectRatio { .. } => model.with_r(val),
            SweepPath::Alpha { .. } => model.with_alpha(val),
        }
        .expect("sweep path within model validity");
        let guess = match (&cur, &prev) {
            (Some((cv, ct)), Some((pv, pt))) => Some(to_params(&predict(cv, *ct, pv, *pt, val))),
            (Some((cv, _)), None) => Some(to_params(cv)),
            _ => None,
        };
        let res = match guess {
            Some(g) => solve_saddle(&m, reg, Some(g), cfg)
                .or_else(|_| solve_saddle(&m, reg, None, cfg)),
            None => solve_saddle(&m, reg, None, cfg),
        };
        match res {
            Ok(sol) => {
                let diverged = sol.params.q0 > 1e8;
                let unphysical = !sol.physical;
                prev = cur;
                cur = Some((to_solver(&sol.params), val));
                solutions.push(sol);
                if unphysical {
                    return SweepResult {
                        solutions,
                        termination: SweepTermination::HitPhysicalBoundary { index: i },
                    };
                }
                if diverged {
                    return SweepResult {
                        solutions,
                        termination: SweepTermination::Q0Divergence { index: i },
                    };
                }
            }
            Err(e) => {
                // For the unregularized system a continuation stall is the
                // overlap divergence at the critical ratio.
                let termination = match e {
                    SolveError::LeftPhysicalRegion { .. } if unregularized => {
                        SweepTermination::Q0Divergence { index: i }
                    }
                    _ => SweepTermination::ConvergenceFailure { index: i },
                };
                return SweepResult {
                    solutions,
                    termination,
                };
            }
        }
    }
    SweepResult {
        solutions,
        termination: SweepTermination::Completed,
    }
}

/// One alpha entry of a traced boundary line.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPoint {
    pub alpha: f64,
    pub r_boundary: Result<f64, SolveError>,
}

/// Trace the feasibility boundary r(alpha) for the given regularizer.
///
/// Without a regularizer this is the critical line where the overlap
/// diverges. With one, it is the line whose image under the
/// order-parameter map is that critical point: the locus where the factor
/// combination 2 A_W - A_Phi crosses zero (under no-short this coincides
/// with lambda - eta_plus = 0). Failures are reported per alpha entry.
pub fn trace_boundary(reg: &Regularizer, alpha_grid: &[f64], cfg: &SolveConfig) -> Vec<BoundaryPoint> {
    cfg.assert_valid();
    alpha_grid
        .iter()
        .map(|&alpha| BoundaryPoint {
            alpha,
            r_boundary: boundary_for_alpha(alpha, reg, cfg),
        })
        .collect()
}

fn boundary_for_alpha(alpha: f64, reg: &Regularizer, cfg: &SolveConfig) -> Result<f64, SolveError> {
    if !(alpha > 0.5 && alpha <= 0.999) {
        return Err(SolveError::UnsupportedAlpha(alpha));
    }
    // Near the divergence q0 reaches ~1e8 and conditioning caps the
    // attainable residual: asking for less than 1e-9 only manufactures
    // spurious stalls, so the walk never does.
    let cfg = &SolveConfig { tol: cfg.tol.max(1e-9), ..*cfg };
    let unregularized = reg.eta_plus() == 0.0 && reg.eta_minus() == EtaMinus::Slope(0.0);
    if unregularized {
        critical_r(alpha, cfg)
    } else {
        characteristic_r(alpha, reg, cfg)
    }
}

/// Critical ratio of the unregularized problem: walk r upward until
/// 1/q0 < 1e-8, then place its zero by a secant through the last two
/// points. 1/q0 vanishes linearly at the critical point (q0 has a
/// simple pole), so the secant estimate is sharp.
fn critical_r(alpha: f64, cfg: &SolveConfig) -> Result<f64, SolveError> {
    let reg = Regularizer::none();
    let m0 = MarketModel::unit(alpha, 1e-4).expect("valid alpha");
    let (mut v, n, _, ok) = newton(small_r_seed(&m0), &m0, &reg, cfg);
    if !ok {
        return Err(SolveError::NoConvergence { residual_norm: n });
    }
    let mut r = 1e-4_f64;
    let mut prev: Option<(V6, f64)> = None;
    let mut hist = (r, exp(-v[2]));
    for _ in 0..600 {
        let mut rn = (r * 1.5).min(0.75);
        let mut tries = 0;
        let vn = loop {
            let guess = match &prev {
                Some((pv, pr)) if r > *pr => predict(&v, r, pv, *pr, rn),
                _ => v,
            };
            let mn = m0.with_r(rn).expect("rn positive");
            let (cand, _, _, ok) = newton(guess, &mn, &reg, cfg);
            // 1/q0 decreases strictly toward the divergence; a converged
            // step that raises it has hopped past it onto a spurious
            // branch, so back off exactly as if Newton had failed.
            if ok && exp(-cand[2]) < exp(-v[2]) {
                break Some(cand);
            }
            rn = 0.5 * (r + rn);
            tries += 1;
            if tries > 70 || rn - r < 1e-13 * r.max(1.0) {
                break None;
            }
        };
        let Some(vn) = vn else {
            // Stuck before the divergence guard fired; extrapolate from
            // where the walk ended if the overlap is already large.
            let inv = exp(-v[2]);
            return if inv < 1e-4 && inv < hist.1 {
                Ok(secant_zero(hist, (r, inv)))
            } else {
                Err(SolveError::NoConvergence { residual_norm: inv })
            };
        };
        let inv = exp(-vn[2]);
        if inv < 1e-8 {
            return Ok(secant_zero(hist, (rn, inv)));
        }
        hist = (r, exp(-v[2]));
        prev = Some((v, r));
        v = vn;
        r = rn;
    }
    Err(SolveError::NoConvergence { residual_norm: f64::INFINITY })
}

/// Zero of the line through (r1, y1), (r2, y2); y decreasing toward 0.
fn secant_zero((r1, y1): (f64, f64), (r2, y2): (f64, f64)) -> f64 {
    r2 + y2 * (r2 - r1) / (y1 - y2)
}

/// Boundary for a finite or no-short regularizer: the r where the factor
/// discriminant 2 A_W - A_Phi crosses zero along the solution branch,
/// located by a warm-started walk and bisection.
fn characteristic_r(alpha: f64, reg: &Regularizer, cfg: &SolveConfig) -> Result<f64, SolveError> {
    let shifted = reg.shifted_to_zero_plus();
    let disc = |v: &V6| a_combinations(v[0], exp(v[4]), &shifted).discriminant();
    let m0 = MarketModel::unit(alpha, 1e-3).expect("valid alpha");
    let mut v = continue_to(&m0, &shifted, cfg)?;
    let mut r = 1e-3_f64;
    if disc(&v) <= 0.0 {
        return Err(SolveError::NoConvergence { residual_norm: f64::INFINITY });
    }
    // Walk outward until the discriminant changes sign.
    let mut bracket = None;
    for _ in 0..400 {
        let mut rn = (r * 1.25).min(16.0);
        let mut tries = 0;
        let vn = loop {
            let mn = m0.with_r(rn).expect("rn positive");
            let (cand, _, _, ok) = newton(v, &mn, &shifted, cfg);
            if ok {
                break Some(cand);
            }
            rn = 0.5 * (r + rn);
            tries += 1;
            if tries > 70 || rn - r < 1e-13 * r.max(1.0) {
                break None;
            }
        };
        let Some(vn) = vn else {
            return Err(SolveError::LeftPhysicalRegion { r_reached: r });
        };
        if disc(&vn) <= 0.0 {
            bracket = Some((r, v, rn, vn));
            break;
        }
        v = vn;
        r = rn;
        if r >= 16.0 {
            break;
        }
    }
    let Some((mut lo, mut v_near, mut hi, hi_v)) = bracket else {
        return Err(SolveError::NoConvergence { residual_norm: f64::INFINITY });
    };
    let mut d_hi_zero = disc(&hi_v) == 0.0;
    if d_hi_zero {
        return Ok(hi);
    }
    for _ in 0..120 {
        if hi - lo <= 1e-13 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let mm = m0.with_r(mid).expect("mid positive");
        let (vm, _, _, ok) = newton(v_near, &mm, &shifted, cfg);
        if !ok {
            return Err(SolveError::NoConvergence { residual_norm: f64::INFINITY });
        }
        let d = disc(&vm);
        v_near = vm;
        if d == 0.0 {
            d_hi_zero = true;
            lo = mid;
            hi = mid;
            break;
        }
        if d > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let _ = d_hi_zero;
    Ok(0.5 * (lo + hi))
}
