//! Personalized PageRank machinery: power iteration, degree-normalized
//! PageRank, grouped forward/backward push, Tau-Push, and the GFRA variant.

mod dpr;
mod gfra;
mod oracle;
mod power;
mod push;
mod scope;
mod tau_push;

pub use dpr::{compute_dpr, CachedColumn, DprIndex};
pub use gfra::{gfra, gfra_walk_budget};
pub use oracle::{exact_level_dppr, PprOracle};
pub use power::{ppr_from_distribution, ppr_single_source_pi};
pub use push::{gbp, gfp, BackwardPush, ForwardPush, ResidueState};
pub use scope::Scope;
pub use tau_push::{
    backward_threshold, estimate_dppr, forward_threshold, gfp_only, leafwise_pi, tau_push,
    DpprEstimate, Engine, GateMode, PushStats,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters shared by every PPR computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PprParams {
    /// Restart probability.
    pub alpha: f64,
    /// Relative error bound.
    pub epsilon: f64,
    /// Absolute-error threshold.
    pub delta: f64,
    /// Fanout bound of the hierarchy.
    pub k: usize,
    /// Failure probability for the sampling variant.
    pub p_f: f64,
    /// Max-entry change at which power iteration stops.
    pub pi_tolerance: f64,
}

pub const DEFAULT_ALPHA: f64 = 0.2;
pub const DEFAULT_PI_TOLERANCE: f64 = 1e-9;

impl PprParams {
    /// Defaults: alpha 0.2, epsilon 1 - 1/e, delta 1/(10k), p_f 1/n.
    pub fn defaults(k: usize, n: usize) -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            epsilon: 1.0 - (-1.0f64).exp(),
            delta: 1.0 / (10.0 * k as f64),
            k,
            p_f: 1.0 / n.max(2) as f64,
            pi_tolerance: DEFAULT_PI_TOLERANCE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must be in (0,1), got {}", self.alpha));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon must be in (0,1), got {}", self.epsilon));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad(format!("delta must be positive, got {}", self.delta));
        }
        if self.k < 2 {
            return bad(format!("k must be at least 2, got {}", self.k));
        }
        if !(self.p_f > 0.0 && self.p_f < 1.0) {
            return bad(format!("p_f must be in (0,1), got {}", self.p_f));
        }
        if !(self.pi_tolerance > 0.0) {
            return bad(format!("pi_tolerance must be positive, got {}", self.pi_tolerance));
        }
        Ok(())
    }
}

/// Definition-4 check: absolute error `epsilon * delta` below `delta`,
/// relative error `epsilon` at or above it.
pub fn is_eps_delta_approx(estimate: f64, exact: f64, epsilon: f64, delta: f64) -> bool {
    let err = (estimate - exact).abs();
    if exact < delta {
        err <= epsilon * delta
    } else {
        err <= epsilon * exact
    }
}
