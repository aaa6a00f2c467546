//! Output plumbing: 17-significant-digit float tokens, the pinned record
//! schemas, and buffered sinks. Every float is printed with 17 significant
//! digits so parsing the output recovers the exact f64.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use shortfall_core::replica_core::{EtaMinus, OrderParameters, ReplicaSolution};

/// Float token with 17 significant digits (exact round-trip). Non-finite
/// values print as `inf`, `-inf`, `NaN`.
pub fn f17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// JSON value token: finite numbers stay numbers, non-finite values are
/// quoted strings (JSON has no inf/nan literals).
pub fn j17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("\"{x}\"")
    }
}

/// Buffered line sink: a file when `path` is given, stdout otherwise.
pub fn sink(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Column order pinned for the solve and sweep tables.
pub const RECORD_HEADER: &str =
    "alpha,r,eta_plus,eta_minus,lambda,epsilon,q0,delta,q0hat,deltahat,n0,r_eff,es_in,out_ratio,physical";

/// One solution record. `eta_minus: None` encodes the short-selling ban
/// and prints as `inf`.
pub struct Record {
    pub alpha: f64,
    pub r: f64,
    pub eta_plus: f64,
    pub eta_minus: Option<f64>,
    pub params: OrderParameters,
    pub n0: f64,
    pub r_eff: f64,
    pub es_in: f64,
    pub out_ratio: f64,
    pub physical: bool,
}

/// `eta_minus` cell under the two regimes.
pub fn eta_minus_opt(reg: &shortfall_core::replica_core::Regularizer) -> Option<f64> {
    match reg.eta_minus() {
        EtaMinus::Slope(v) => Some(v),
        EtaMinus::NoShort => None,
    }
}

impl Record {
    pub fn from_solution(sol: &ReplicaSolution) -> Record {
        Record {
            alpha: sol.model.alpha(),
            r: sol.model.r(),
            eta_plus: sol.regularizer.eta_plus(),
            eta_minus: eta_minus_opt(&sol.regularizer),
            params: sol.params,
            n0: sol.n0,
            r_eff: sol.r_eff,
            es_in: sol.es_in,
            out_ratio: sol.q0_tilde.sqrt(),
            physical: sol.physical,
        }
    }

    pub fn csv(&self) -> String {
        let em = match self.eta_minus {
            Some(v) => f17(v),
            None => "inf".to_string(),
        };
        let p = &self.params;
        format!(
            "{},{},{},{em},{},{},{},{},{},{},{},{},{},{},{}",
            f17(self.alpha),
            f17(self.r),
            f17(self.eta_plus),
            f17(p.lambda),
            f17(p.epsilon),
            f17(p.q0),
            f17(p.delta),
            f17(p.q0hat),
            f17(p.deltahat),
            f17(self.n0),
            f17(self.r_eff),
            f17(self.es_in),
            f17(self.out_ratio),
            self.physical
        )
    }

    pub fn json(&self) -> String {
        let em = match self.eta_minus {
            Some(v) => j17(v),
            None => "\"inf\"".to_string(),
        };
        let p = &self.params;
        format!(
            "{{\"alpha\":{},\"r\":{},\"eta_plus\":{},\"eta_minus\":{em},\"lambda\":{},\
             \"epsilon\":{},\"q0\":{},\"delta\":{},\"q0hat\":{},\"deltahat\":{},\"n0\":{},\
             \"r_eff\":{},\"es_in\":{},\"out_ratio\":{},\"physical\":{}}}",
            j17(self.alpha),
            j17(self.r),
            j17(self.eta_plus),
            j17(p.lambda),
            j17(p.epsilon),
            j17(p.q0),
            j17(p.delta),
            j17(p.q0hat),
            j17(p.deltahat),
            j17(self.n0),
            j17(self.r_eff),
            j17(self.es_in),
            j17(self.out_ratio),
            self.physical
        )
    }
}

/// Column order for the map table: one row per mapping stage.
pub const MAP_HEADER: &str =
    "stage,alpha,r,eta_plus,eta_minus,lambda,epsilon,q0,delta,q0hat,deltahat,residual_norm";

/// One stage of the mapping round trip. The residual norm is evaluated in
/// the system the stage belongs to: the regularized equations at `r` for
/// `original` and `round_trip`, the unregularized equations at `r_eff` for
/// `effective`.
pub struct StageRow {
    pub stage: &'static str,
    pub alpha: f64,
    pub r: f64,
    pub eta_plus: f64,
    pub eta_minus: Option<f64>,
    pub params: OrderParameters,
    pub residual_norm: f64,
}

impl StageRow {
    pub fn csv(&self) -> String {
        let em = match self.eta_minus {
            Some(v) => f17(v),
            None => "inf".to_string(),
        };
        let p = &self.params;
        format!(
            "{},{},{},{},{em},{},{},{},{},{},{},{}",
            self.stage,
            f17(self.alpha),
            f17(self.r),
            f17(self.eta_plus),
            f17(p.lambda),
            f17(p.epsilon),
            f17(p.q0),
            f17(p.delta),
            f17(p.q0hat),
            f17(p.deltahat),
            f17(self.residual_norm)
        )
    }

    pub fn json(&self) -> String {
        let em = match self.eta_minus {
            Some(v) => j17(v),
            None => "\"inf\"".to_string(),
        };
        let p = &self.params;
        format!(
            "{{\"alpha\":{},\"r\":{},\"eta_plus\":{},\"eta_minus\":{em},\"lambda\":{},\
             \"epsilon\":{},\"q0\":{},\"delta\":{},\"q0hat\":{},\"deltahat\":{},\
             \"residual_norm\":{}}}",
            j17(self.alpha),
            j17(self.r),
            j17(self.eta_plus),
            j17(p.lambda),
            j17(p.epsilon),
            j17(p.q0),
            j17(p.delta),
            j17(p.q0hat),
            j17(p.deltahat),
            j17(self.residual_norm)
        )
    }
}
