//! Finite-sample verification: Gaussian return panels, exact shortfall
//! minimization as a linear program solved by a dense primal simplex, and
//! aggregation of many samples against the saddle-point predictions.

use crate::portfolio_stats::standard_normal;
use crate::replica_core::{EtaMinus, MarketModel, Regularizer, ReplicaSolution, SigmaGroup};
use crate::saddle_solver::{solve_saddle, SolveConfig, SolveError};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use libm::{floor, sqrt};
use rand_core::{RngCore, SeedableRng};

/// Failures of sample construction or of the linear program.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabError {
    /// The objective decreases without bound along a feasible ray: the
    /// finite-sample analogue of crossing the feasibility boundary.
    Unbounded,
    /// Cannot occur for well-formed instances (a budget-on-one-asset point
    /// is always feasible); signals an internal pivoting failure.
    Infeasible,
    /// External matrix rejected (ragged rows, empty, or non-finite entry).
    InvalidSamples(&'static str),
}

impl fmt::Display for LabError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabError::Unbounded => write!(f, "objective unbounded below (runaway weights)"),
            LabError::Infeasible => write!(f, "simplex failed to terminate (internal error)"),
            LabError::InvalidSamples(why) => write!(f, "invalid sample matrix: {why}"),
        }
    }
}

impl core::error::Error for LabError {}

/// A panel of simulated or ingested returns: N assets observed over T
/// periods, with the volatility assigned to each asset.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    n_assets: usize,
    horizon: usize,
    /// Per-asset volatility, grouped: the first block of assets carries the
    /// first group's sigma, and so on.
    sigmas: Vec<f64>,
    /// Row-major N x T returns.
    returns: Vec<f64>,
    seed: u64,
}

impl SampleSet {
    pub fn n_assets(&self) -> usize {
        self.n_assets
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn sigma(&self, asset: usize) -> f64 {
        self.sigmas[asset]
    }

    pub fn ret(&self, asset: usize, t: usize) -> f64 {
        self.returns[asset * self.horizon + t]
    }

    /// Aspect ratio N / T of the panel.
    pub fn aspect_ratio(&self) -> f64 {
        self.n_assets as f64 / self.horizon as f64
    }

    /// Wrap an externally supplied matrix (rows = assets, columns = time).
    /// Volatilities are assigned from `model`'s groups exactly as
    /// `sample_returns` would assign them.
    pub fn from_matrix(rows: &[Vec<f64>], model: &MarketModel) -> Result<Self, LabError> {
        let n_assets = rows.len();
        if n_assets == 0 {
            return Err(LabError::InvalidSamples("no rows"));
        }
        let horizon = rows[0].len();
        if horizon == 0 {
            return Err(LabError::InvalidSamples("empty rows"));
        }
        let mut returns = Vec::with_capacity(n_assets * horizon);
        for row in rows {
            if row.len() != horizon {
                return Err(LabError::InvalidSamples("ragged rows"));
            }
            for v in row {
                if !v.is_finite() {
                    return Err(LabError::InvalidSamples("non-finite entry"));
                }
                returns.push(*v);
            }
        }
        Ok(SampleSet {
            n_assets,
            horizon,
            sigmas: assign_sigmas(model.sigma_groups(), n_assets),
            returns,
            seed: 0,
        })
    }
}

/// Number of assets each volatility group receives out of `n`, by largest
/// remainder: floors first, then one extra per group in decreasing order of
/// the dropped fraction (ties to the earlier group).
pub fn group_counts(groups: &[SigmaGroup], n: usize) -> Vec<usize> {
    let mut counts: Vec<usize> = groups
        .iter()
        .map(|g| floor(g.fraction * n as f64) as usize)
        .collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = groups[a].fraction * n as f64 - counts[a] as f64;
        let rb = groups[b].fraction * n as f64 - counts[b] as f64;
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &g in order.iter().take(n - assigned) {
        counts[g] += 1;
    }
    counts
}

fn assign_sigmas(groups: &[SigmaGroup], n: usize) -> Vec<f64> {
    let counts = group_counts(groups, n);
    let mut sigmas = Vec::with_capacity(n);
    for (g, c) in groups.iter().zip(counts) {
        for _ in 0..c {
            sigmas.push(g.sigma);
        }
    }
    sigmas
}

/// Draw an N x T panel of independent zero-mean Gaussian returns with the
/// per-asset volatilities of `model`'s groups. Bit-identical per seed.
pub fn sample_returns(model: &MarketModel, n_assets: usize, horizon: usize, seed: u64) -> SampleSet {
    let sigmas = assign_sigmas(model.sigma_groups(), n_assets);
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
    let mut returns = Vec::with_capacity(n_assets * horizon);
    for sigma in &sigmas {
        for _ in 0..horizon {
            returns.push(sigma * standard_normal(&mut rng));
        }
    }
    SampleSet { n_assets, horizon, sigmas, returns, seed }
}

/// How far the returned vertex is from exact optimality, measured against
/// the original constraint data with duals recovered by an independent
/// solve of the final basis system (not read off the pivoted tableau).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalityCertificate {
    /// Largest violation of a constraint row.
    pub primal_residual: f64,
    /// Most negative reduced cost under the recovered duals.
    pub dual_residual: f64,
    /// Largest product of a variable and its reduced cost.
    pub slackness_residual: f64,
}

impl OptimalityCertificate {
    pub fn holds(&self, tol: f64) -> bool {
        self.primal_residual <= tol && self.dual_residual <= tol && self.slackness_residual <= tol
    }
}

/// An exact minimizer of the finite-sample shortfall program.
#[derive(Debug, Clone, PartialEq)]
pub struct LPSolution {
    /// Optimal weights, one per asset; sums to N.
    pub weights: Vec<f64>,
    /// The value-at-risk proxy at the optimum.
    pub epsilon_star: f64,
    /// Total cost T(1-alpha) eps + sum_t hinge_t + sum_i penalty_i.
    pub cost: f64,
    /// cost / (T (1-alpha)): the historical expected shortfall of the
    /// optimal portfolio over the panel, in raw return units.
    pub es_in: f64,
    /// Weights within 1e-8 max|w| of zero; vertex solutions are exactly
    /// sparse up to roundoff.
    pub zero_count: usize,
    pub certificate: OptimalityCertificate,
}

/// Column layout of the standard-form program; `wneg` columns exist only
/// when shorting is allowed. Rows: budget first, then one hinge row per
/// scenario, as equalities with surplus columns.
struct Layout {
    n: usize,
    t: usize,
    short: bool,
}

impl Layout {
    fn wpos(&self, i: usize) -> usize {
        i
    }
    fn wneg(&self, i: usize) -> usize {
        debug_assert!(self.short);
        self.n + i
    }
    fn epos(&self) -> usize {
        self.n * if self.short { 2 } else { 1 }
    }
    fn eneg(&self) -> usize {
        self.epos() + 1
    }
    fn u(&self, t: usize) -> usize {
        self.epos() + 2 + t
    }
    fn surplus(&self, t: usize) -> usize {
        self.epos() + 2 + self.t + t
    }
    fn ncols(&self) -> usize {
        self.epos() + 2 + 2 * self.t
    }
    fn nrows(&self) -> usize {
        self.t + 1
    }

    /// Entry of the original constraint matrix; row 0 is the budget, row
    /// 1+t the hinge of scenario t: sum_i x_it w_i + eps + u_t - s_t = 0.
    fn entry(&self, sample: &SampleSet, row: usize, col: usize) -> f64 {
        let wcols = if self.short { 2 * self.n } else { self.n };
        if row == 0 {
            return if col < self.n {
                1.0
            } else if col < wcols {
                -1.0
            } else {
                0.0
            };
        }
        let t = row - 1;
        if col < self.n {
            sample.ret(col, t)
        } else if col < wcols {
            -sample.ret(col - self.n, t)
        } else if col == self.epos() {
            1.0
        } else if col == self.eneg() {
            -1.0
        } else if col == self.u(t) {
            1.0
        } else if col == self.surplus(t) {
            -1.0
        } else {
            0.0
        }
    }

    fn rhs(&self, sample: &SampleSet, row: usize) -> f64 {
        if row == 0 {
            sample.n_assets as f64
        } else {
            0.0
        }
    }
}

/// Dense full tableau with a reduced-cost row below and the RHS column on
/// the right.
struct Tableau {
    rows: usize,
    cols: usize,
    a: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.a[r * (self.cols + 1) + c]
    }
    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.cols)
    }
    fn cost(&self, c: usize) -> f64 {
        self.at(self.rows, c)
    }

    /// Fill the reduced-cost row for objective `c` given the current basis.
    fn load_costs(&mut self, c: &[f64]) {
        let stride = self.cols + 1;
        for j in 0..=self.cols {
            self.a[self.rows * stride + j] = if j < self.cols { c[j] } else { 0.0 };
        }
        for r in 0..self.rows {
            let cb = c[self.basis[r]];
            if cb != 0.0 {
                for j in 0..=self.cols {
                    self.a[self.rows * stride + j] -= cb * self.a[r * stride + j];
                }
            }
        }
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let stride = self.cols + 1;
        let p = self.a[pr * stride + pc];
        for v in &mut self.a[pr * stride..(pr + 1) * stride] {
            *v /= p;
        }
        self.a[pr * stride + pc] = 1.0;
        for r in 0..=self.rows {
            if r == pr {
                continue;
            }
            let f = self.a[r * stride + pc];
            if f == 0.0 {
                continue;
            }
            // Disjoint row views let the elimination loop vectorize.
            let (row, prow) = if r < pr {
                let (lo, hi) = self.a.split_at_mut(pr * stride);
                (&mut lo[r * stride..r * stride + stride], &hi[..stride])
            } else {
                let (lo, hi) = self.a.split_at_mut(r * stride);
                (&mut hi[..stride], &lo[pr * stride..pr * stride + stride])
            };
            for (v, pv) in row.iter_mut().zip(prow) {
                *v -= f * pv;
            }
            row[pc] = 0.0;
        }
        self.basis[pr] = pc;
    }

    /// Run the simplex to optimality. Dantzig pricing with a largest-pivot
    /// tie break handles the generic case; after a grace budget the rule
    /// switches to Bland's so degenerate crafted instances (ties are kept,
    /// not perturbed away) cannot cycle.
    fn optimize(&mut self) -> Result<(), LabError> {
        const DUAL_TOL: f64 = 1e-9;
        const PIVOT_TOL: f64 = 1e-11;
        let grace = 10 * (self.rows + self.cols);
        for iter in 0..(grace + 200_000) {
            let bland = iter > grace;
            let mut enter = None;
            let mut best = -DUAL_TOL;
            for j in 0..self.cols {
                let c = self.cost(j);
                if c < best {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = c;
                }
            }
            let Some(pc) = enter else {
                return Ok(());
            };
            let mut leave: Option<usize> = None;
            let mut ratio = f64::INFINITY;
            let mut pivot = 0.0_f64;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a > PIVOT_TOL {
                    let q = self.rhs(r) / a;
                    let tied = leave.is_some() && (q - ratio).abs() <= 1e-12 * ratio.abs();
                    let better = if tied {
                        if bland {
                            self.basis[r] < self.basis[leave.unwrap()]
                        } else {
                            a > pivot
                        }
                    } else {
                        q < ratio
                    };
                    if better {
                        leave = Some(r);
                        ratio = q;
                        pivot = a;
                    }
                }
            }
            let Some(pr) = leave else {
                return Err(LabError::Unbounded);
            };
            self.pivot(pr, pc);
        }
        Err(LabError::Infeasible)
    }
}

/// Solve the square system transpose(B) y = c by Gaussian elimination with
/// partial pivoting; `bt` is row-major n x n and is consumed.
fn solve_transposed(bt: &mut [f64], y: &mut [f64], n: usize) -> bool {
    for k in 0..n {
        let mut p = k;
        for r in k + 1..n {
            if bt[r * n + k].abs() > bt[p * n + k].abs() {
                p = r;
            }
        }
        if bt[p * n + k].abs() < 1e-12 {
            return false;
        }
        if p != k {
            for j in 0..n {
                bt.swap(k * n + j, p * n + j);
            }
            y.swap(k, p);
        }
        for r in k + 1..n {
            let f = bt[r * n + k] / bt[k * n + k];
            if f != 0.0 {
                for j in k..n {
                    bt[r * n + j] -= f * bt[k * n + j];
                }
                y[r] -= f * y[k];
            }
        }
    }
    for k in (0..n).rev() {
        let mut s = y[k];
        for j in k + 1..n {
            s -= bt[k * n + j] * y[j];
        }
        y[k] = s / bt[k * n + k];
    }
    true
}

/// Minimize T(1-alpha) eps + sum_t max(0, -sum_i w_i x_it - eps) + sum_i
/// (eta_plus w_i^+ + eta_minus w_i^-) over sum_i w_i = N, by simplex on the
/// standard form with the hinge linearized through u_t >= 0.
///
/// No artificial phase is needed: the point with the whole budget on asset
/// 0 and the hinges absorbed by u_t or the surplus is a feasible basis, and
/// for generic returns a nondegenerate one.
pub fn optimize_es_lp(
    sample: &SampleSet,
    alpha: f64,
    reg: &Regularizer,
) -> Result<LPSolution, LabError> {
    assert!(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
    let lay = Layout {
        n: sample.n_assets,
        t: sample.horizon,
        short: !matches!(reg.eta_minus(), EtaMinus::NoShort),
    };
    let (rows, cols) = (lay.nrows(), lay.ncols());
    let stride = cols + 1;
    let mut tab = Tableau {
        rows,
        cols,
        a: vec![0.0; (rows + 1) * stride],
        basis: vec![0; rows],
    };
    for r in 0..rows {
        for j in 0..cols {
            tab.a[r * stride + j] = lay.entry(sample, r, j);
        }
        tab.a[r * stride + cols] = lay.rhs(sample, r);
    }

    // Starting basis: w+_0 carries the budget; eliminate it from the hinge
    // rows, then pick u_t or the surplus per row by the sign of the rhs.
    tab.basis[0] = lay.wpos(0);
    for t in 0..lay.t {
        let r = 1 + t;
        let f = tab.a[r * stride + lay.wpos(0)];
        if f != 0.0 {
            for j in 0..=cols {
                tab.a[r * stride + j] -= f * tab.a[j];
            }
            tab.a[r * stride + lay.wpos(0)] = 0.0;
        }
        if tab.a[r * stride + cols] >= 0.0 {
            tab.basis[r] = lay.u(t);
        } else {
            for j in 0..=cols {
                tab.a[r * stride + j] = -tab.a[r * stride + j];
            }
            tab.basis[r] = lay.surplus(t);
        }
    }

    let horizon_weight = sample.horizon as f64 * (1.0 - alpha);
    let mut cost = vec![0.0; cols];
    for i in 0..lay.n {
        cost[lay.wpos(i)] = reg.eta_plus();
        if lay.short {
            if let EtaMinus::Slope(em) = reg.eta_minus() {
                cost[lay.wneg(i)] = em;
            }
        }
    }
    cost[lay.epos()] = horizon_weight;
    cost[lay.eneg()] = -horizon_weight;
    for t in 0..lay.t {
        cost[lay.u(t)] = 1.0;
    }
    tab.load_costs(&cost);
    tab.optimize()?;

    // Extract the vertex and price it directly against the original data.
    let mut x = vec![0.0; cols];
    for r in 0..rows {
        x[tab.basis[r]] = tab.rhs(r);
    }
    let weights: Vec<f64> = (0..lay.n)
        .map(|i| x[lay.wpos(i)] - if lay.short { x[lay.wneg(i)] } else { 0.0 })
        .collect();
    let epsilon_star = x[lay.epos()] - x[lay.eneg()];
    let total: f64 = cost.iter().zip(&x).map(|(c, v)| c * v).sum();

    // Duals from the final basis system, then the certificate.
    let mut bt = vec![0.0; rows * rows];
    let mut y = vec![0.0; rows];
    for (k, &j) in tab.basis.iter().enumerate() {
        y[k] = cost[j];
        for r in 0..rows {
            bt[k * rows + r] = lay.entry(sample, r, j);
        }
    }
    let duals_ok = solve_transposed(&mut bt, &mut y, rows);
    let mut primal = 0.0_f64;
    for r in 0..rows {
        let lhs: f64 = (0..cols).map(|j| lay.entry(sample, r, j) * x[j]).sum();
        primal = primal.max((lhs - lay.rhs(sample, r)).abs());
    }
    let mut dual = 0.0_f64;
    let mut slackness = 0.0_f64;
    if duals_ok {
        for j in 0..cols {
            let reduced: f64 =
                cost[j] - (0..rows).map(|r| y[r] * lay.entry(sample, r, j)).sum::<f64>();
            dual = dual.max(-reduced);
            slackness = slackness.max((x[j] * reduced).abs());
        }
    } else {
        dual = f64::INFINITY;
        slackness = f64::INFINITY;
    }
    let max_w = weights.iter().fold(0.0_f64, |m, w| m.max(w.abs()));
    let zero_count = weights.iter().filter(|w| w.abs() <= 1e-8 * max_w).count();
    Ok(LPSolution {
        weights,
        epsilon_star,
        cost: total,
        es_in: total / horizon_weight,
        zero_count,
        certificate: OptimalityCertificate {
            primal_residual: primal,
            dual_residual: dual,
            slackness_residual: slackness,
        },
    })
}

/// Direct evaluation of the cost at (weights, epsilon): the hinge sum plus
/// the linear terms, without reference to the LP internals.
pub fn evaluate_cost(
    sample: &SampleSet,
    alpha: f64,
    reg: &Regularizer,
    weights: &[f64],
    epsilon: f64,
) -> f64 {
    let mut c = sample.horizon as f64 * (1.0 - alpha) * epsilon;
    for t in 0..sample.horizon {
        let portfolio: f64 = (0..sample.n_assets).map(|i| weights[i] * sample.ret(i, t)).sum();
        c += (-portfolio - epsilon).max(0.0);
    }
    for w in weights {
        if *w > 0.0 {
            c += reg.eta_plus() * *w;
        } else if let EtaMinus::Slope(em) = reg.eta_minus() {
            c -= em * *w;
        }
    }
    c
}

/// Empirical counterparts of the order parameters at an LP vertex:
/// (q0_emp, n0_emp, es_in_emp). q0_emp is the true-covariance quadratic
/// form (1/N) sum_i sigma_i^2 w_i^2 and n0_emp the zero fraction. es_in_emp
/// is the historical shortfall per sqrt(N): with the budget pinned at N the
/// portfolio loss grows like sqrt(N), and dividing it out is what makes the
/// sample mean converge to the intensive prediction es_in.
pub fn empirical_order_params(lp: &LPSolution, sample: &SampleSet) -> (f64, f64, f64) {
    let n = sample.n_assets as f64;
    let q0: f64 = (0..sample.n_assets)
        .map(|i| {
            let s = sample.sigma(i);
            s * s * lp.weights[i] * lp.weights[i]
        })
        .sum::<f64>()
        / n;
    (q0, lp.zero_count as f64 / n, lp.es_in / sqrt(n))
}

/// Sample mean of one empirical observable against its prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McStat {
    pub predicted: f64,
    pub mean: f64,
    pub std_error: f64,
    pub z_score: f64,
}

impl McStat {
    fn from_samples(predicted: f64, values: &[f64]) -> McStat {
        let k = values.len() as f64;
        let mean = values.iter().sum::<f64>() / k;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0).max(1.0);
        let std_error = sqrt(var / k);
        McStat { predicted, mean, std_error, z_score: (mean - predicted) / std_error }
    }
}

/// Saddle-point predictions versus many finite panels.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub replica: ReplicaSolution,
    pub n_samples: usize,
    pub solved_samples: usize,
    /// Samples whose LP was unbounded: a proximity diagnostic for the
    /// feasibility boundary.
    pub unbounded_samples: usize,
    /// Solved samples whose optimality certificate held at 1e-7.
    pub certified_samples: usize,
    pub q0: McStat,
    pub n0: McStat,
    pub es_in: McStat,
}

/// Drive `n_samples` independent panels of shape (n_assets, horizon)
/// through the LP and compare the empirical order parameters with the
/// saddle point of `model`. Per-sample seeds derive from `seed` alone, so
/// the report does not depend on evaluation order.
pub fn replica_vs_mc(
    model: &MarketModel,
    reg: &Regularizer,
    n_assets: usize,
    horizon: usize,
    n_samples: usize,
    seed: u64,
    cfg: &SolveConfig,
) -> Result<ComparisonReport, SolveError> {
    let ratio = n_assets as f64 / horizon as f64;
    assert!(
        (model.r() - ratio).abs() <= 1e-9 + 0.5 / horizon as f64,
        "panel shape disagrees with the model aspect ratio"
    );
    let replica = solve_saddle(model, reg, None, cfg)?;
    let mut seeder = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..n_samples).map(|_| seeder.next_u64()).collect();
    let mut q0 = Vec::with_capacity(n_samples);
    let mut n0 = Vec::with_capacity(n_samples);
    let mut es = Vec::with_capacity(n_samples);
    let mut unbounded = 0_usize;
    let mut certified = 0_usize;
    for s in seeds {
        let panel = sample_returns(model, n_assets, horizon, s);
        match optimize_es_lp(&panel, model.alpha(), reg) {
            Ok(lp) => {
                if lp.certificate.holds(1e-7) {
                    certified += 1;
                }
                let (q, n, e) = empirical_order_params(&lp, &panel);
                q0.push(q);
                n0.push(n);
                es.push(e);
            }
            Err(LabError::Unbounded) => unbounded += 1,
            Err(other) => panic!("LP failed on a generated sample: {other}"),
        }
    }
    Ok(ComparisonReport {
        n_samples,
        solved_samples: q0.len(),
        unbounded_samples: unbounded,
        certified_samples: certified,
        q0: McStat::from_samples(replica.params.q0, &q0),
        n0: McStat::from_samples(replica.n0, &n0),
        es_in: McStat::from_samples(replica.es_in, &es),
        replica,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::replica_core::SigmaGroup;

    fn unit_model(alpha: f64, r: f64) -> MarketModel {
        MarketModel::unit(alpha, r).unwrap()
    }

    #[test]
    fn group_counts_use_largest_remainder() {
        let half = |sigma| SigmaGroup { sigma, fraction: 0.5 };
        assert_eq!(group_counts(&[half(1.0), half(2.0)], 10), vec![5, 5]);
        let third = |sigma| SigmaGroup { sigma, fraction: 1.0 / 3.0 };
        assert_eq!(group_counts(&[third(1.0), third(2.0), third(3.0)], 5), vec![2, 2, 1]);
        assert_eq!(group_counts(&[third(1.0), third(2.0), third(3.0)], 7), vec![3, 2, 2]);
    }

    #[test]
    fn sampling_is_reproducible_and_assigns_sigmas_in_blocks() {
        let m = MarketModel::new(
            0.9,
            0.5,
            vec![
                SigmaGroup { sigma: 1.0, fraction: 0.5 },
                SigmaGroup { sigma: 2.0, fraction: 0.5 },
            ],
        )
        .unwrap();
        let a = sample_returns(&m, 6, 11, 42);
        let b = sample_returns(&m, 6, 11, 42);
        assert_eq!(a, b);
        let c = sample_returns(&m, 6, 11, 43);
        assert_ne!(a, c);
        assert_eq!(
            (0..6).map(|i| a.sigma(i)).collect::<Vec<_>>(),
            vec![1.0, 1.0, 1.0, 2.0, 2.0, 2.0]
        );
    }

    #[test]
    fn sample_rows_have_the_assigned_variance() {
        let m = MarketModel::new(
            0.9,
            0.5,
            vec![
                SigmaGroup { sigma: 1.0, fraction: 0.5 },
                SigmaGroup { sigma: 2.0, fraction: 0.5 },
            ],
        )
        .unwrap();
        let panel = sample_returns(&m, 2, 1_000_000, 7);
        for i in 0..2 {
            let t = panel.horizon();
            let var: f64 = (0..t).map(|k| panel.ret(i, k) * panel.ret(i, k)).sum::<f64>()
                / t as f64;
            let sigma2 = panel.sigma(i) * panel.sigma(i);
            assert!((var / sigma2 - 1.0).abs() <= 0.01, "row {i}: {var} vs {sigma2}");
        }
    }

    #[test]
    fn single_asset_reproduces_sorted_historical_shortfall() {
        let m = unit_model(0.9, 0.025);
        let panel = sample_returns(&m, 1, 40, 5);
        let lp = optimize_es_lp(&panel, 0.9, &Regularizer::none()).unwrap();
        assert!((lp.weights[0] - 1.0).abs() <= 1e-9);
        assert!(lp.certificate.holds(1e-7));

        // Brute force: the cost is piecewise linear in eps with breakpoints
        // at the scenario losses, so the minimum sits on one of them.
        let losses: Vec<f64> = (0..40).map(|t| -panel.ret(0, t)).collect();
        let cost_at = |eps: f64| {
            40.0 * 0.1 * eps + losses.iter().map(|l| (l - eps).max(0.0)).sum::<f64>()
        };
        let best = losses.iter().map(|l| cost_at(*l)).fold(f64::INFINITY, f64::min);
        assert!((lp.cost - best).abs() <= 1e-9 * best.abs().max(1.0));
        assert!((lp.es_in - best / (40.0 * 0.1)).abs() <= 1e-9);
    }

    fn dominant_panel(reg: &Regularizer) -> Result<LPSolution, LabError> {
        // Asset 0 beats asset 1 in every scenario: a mirage of an arbitrage.
        let m = MarketModel::new(
            0.9,
            2.0 / 3.0,
            vec![SigmaGroup { sigma: 1.0, fraction: 1.0 }],
        )
        .unwrap();
        let rows = vec![vec![0.3, 0.1, 0.2], vec![0.1, -0.1, 0.05]];
        let panel = SampleSet::from_matrix(&rows, &m).unwrap();
        optimize_es_lp(&panel, 0.9, reg)
    }

    #[test]
    fn dominant_asset_unbounded_without_short_ban() {
        assert_eq!(dominant_panel(&Regularizer::none()).unwrap_err(), LabError::Unbounded);
    }

    #[test]
    fn dominant_asset_arrested_by_short_ban() {
        let lp = dominant_panel(&Regularizer::no_short(0.0).unwrap()).unwrap();
        assert!(lp.certificate.holds(1e-7));
        let total: f64 = lp.weights.iter().sum();
        assert!((total - 2.0).abs() <= 1e-6);
        assert!(lp.weights.iter().all(|w| *w >= -1e-9));
        // All mass piles onto the dominant asset.
        assert!((lp.weights[0] - 2.0).abs() <= 1e-6);
        assert_eq!(lp.zero_count, 1);
    }

    #[test]
    fn certificate_and_direct_cost_agree_on_a_real_instance() {
        let m = unit_model(0.95, 0.25);
        let reg = Regularizer::new(0.01, 0.05).unwrap();
        let panel = sample_returns(&m, 20, 80, 11);
        let lp = optimize_es_lp(&panel, 0.95, &reg).unwrap();
        assert!(lp.certificate.holds(1e-7), "certificate {:?}", lp.certificate);
        let direct = evaluate_cost(&panel, 0.95, &reg, &lp.weights, lp.epsilon_star);
        assert!((lp.cost - direct).abs() <= 1e-9 * direct.abs().max(1.0));
        let total: f64 = lp.weights.iter().sum();
        assert!((total - 20.0).abs() <= 1e-6);
    }

    #[test]
    fn rescaled_returns_rescale_the_shortfall_only() {
        let m = unit_model(0.9, 0.2);
        let panel = sample_returns(&m, 12, 60, 3);
        let scaled_rows: Vec<Vec<f64>> = (0..12)
            .map(|i| (0..60).map(|t| 4.0 * panel.ret(i, t)).collect())
            .collect();
        let scaled = SampleSet::from_matrix(&scaled_rows, &m).unwrap();
        let reg = Regularizer::none();
        let a = optimize_es_lp(&panel, 0.9, &reg).unwrap();
        let b = optimize_es_lp(&scaled, 0.9, &reg).unwrap();
        for (wa, wb) in a.weights.iter().zip(&b.weights) {
            assert!((wa - wb).abs() <= 1e-9 * wa.abs().max(1.0));
        }
        assert!((b.epsilon_star - 4.0 * a.epsilon_star).abs() <= 1e-9 * a.epsilon_star.abs());
        assert!((b.es_in - 4.0 * a.es_in).abs() <= 1e-9 * a.es_in.abs());
    }

    #[test]
    fn empirical_params_weigh_volatile_groups() {
        let m = MarketModel::new(
            0.9,
            0.5,
            vec![
                SigmaGroup { sigma: 1.0, fraction: 0.5 },
                SigmaGroup { sigma: 2.0, fraction: 0.5 },
            ],
        )
        .unwrap();
        let panel = sample_returns(&m, 4, 8, 1);
        let lp = LPSolution {
            weights: vec![1.0, 1.0, 1.0, 1.0],
            epsilon_star: 0.0,
            cost: 0.0,
            es_in: 0.0,
            zero_count: 0,
            certificate: OptimalityCertificate {
                primal_residual: 0.0,
                dual_residual: 0.0,
                slackness_residual: 0.0,
            },
        };
        let (q0, n0, _) = empirical_order_params(&lp, &panel);
        // (1 + 1 + 4 + 4) / 4 with unit weights.
        assert!((q0 - 2.5).abs() <= 1e-15);
        assert_eq!(n0, 0.0);
    }

    #[test]
    fn small_panel_aggregate_tracks_the_replica_point() {
        let m = unit_model(0.975, 0.5);
        let reg = Regularizer::no_short(0.0).unwrap();
        let report =
            replica_vs_mc(&m, &reg, 60, 120, 12, 99, &SolveConfig::default()).unwrap();
        assert_eq!(report.solved_samples, 12);
        assert_eq!(report.unbounded_samples, 0);
        assert_eq!(report.certified_samples, 12);
        assert!((report.q0.mean - report.q0.predicted).abs() <= 0.15 * report.q0.predicted);
        assert!((report.n0.mean - report.n0.predicted).abs() <= 0.08);
        // The in-sample shortfall carries a visible finite-size optimism at
        // N = 60; the acceptance gate checks the tight bound at N = 200.
        assert!((report.es_in.mean - report.es_in.predicted).abs()
            <= 0.15 * report.es_in.predicted);
        // Maximal sparsity under the ban stays near or below one half.
        assert!(report.n0.mean <= 0.5 + 2.0 / sqrt(60.0));
    }

    #[test]
    fn far_beyond_the_boundary_most_panels_are_unbounded() {
        let m = unit_model(0.975, 2.0);
        let mut unbounded = 0;
        for s in 0..6 {
            let panel = sample_returns(&m, 40, 20, s);
            if optimize_es_lp(&panel, 0.975, &Regularizer::none())
                == Err(LabError::Unbounded)
            {
                unbounded += 1;
            }
        }
        assert!(unbounded >= 4, "only {unbounded}/6 unbounded");
    }
}
