//! Closed-form (alpha, delta) correctness and soundness guarantees.
//!
//! A protocol is `(alpha1, delta1)`-correct when every honest user is ⊥ or
//! off by at least `alpha1` with probability at most `delta1`, and
//! `(alpha2, delta2)`-sound when every malicious user both evades ⊥ and is off
//! by at least `alpha2` with probability at most `delta2`. A *tight* statement
//! is achieved with certainty on some graph; its delta is reported as 0.

use serde::Serialize;
use thiserror::Error;

use crate::protocols::{precondition_ok, tau_threshold, CheckedProtocol, Mode, Protocol};
use crate::randomizers::{rho_from_eps, split_budget};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error("eps must be finite and > 0, got {0}")]
    Epsilon(f64),
    #[error("delta must lie in (0, 1), got {0}")]
    Delta(f64),
    #[error("budget split c must lie in (0, 1), got {0}")]
    Split(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub protocol: Protocol,
    pub mode: Option<Mode>,
    pub alpha1: f64,
    pub delta1: f64,
    pub alpha2: f64,
    pub delta2: f64,
    pub tight: bool,
    pub tau: Option<f64>,
    /// The validity precondition `(4/3) e^eps ln(2/delta) < n` fails; the
    /// numbers are still evaluated but carry no guarantee.
    pub inapplicable: bool,
    pub c: Option<f64>,
}

fn check_eps(eps: f64) -> Result<f64, BoundError> {
    if eps.is_finite() && eps > 0.0 {
        Ok(eps)
    } else {
        Err(BoundError::Epsilon(eps))
    }
}

fn check_delta(delta: f64) -> Result<f64, BoundError> {
    if delta > 0.0 && delta < 1.0 {
        Ok(delta)
    } else {
        Err(BoundError::Delta(delta))
    }
}

// (e^eps + 1) / (e^eps - 1)
fn coth_half(eps: f64) -> f64 {
    1.0 / (eps / 2.0).tanh()
}

// sqrt(e^eps + 1) / (e^eps - 1)
fn root_coef(eps: f64) -> f64 {
    (eps.exp() + 1.0).sqrt() / eps.exp_m1()
}

/// Probability that fewer than `ceil((n-1)(1-rho))` of `n - 1` independent
/// bits survive randomized response, summed exactly in log space.
pub fn naive_soundness_delta(n: usize, rho: f64) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let big_n = n - 1;
    let x = big_n as f64 * (1.0 - rho);
    // values within rounding of an integer are taken as that integer
    let k0 = if (x - x.round()).abs() <= 1e-9 * x.max(1.0) {
        x.round() as usize
    } else {
        x.ceil() as usize
    };
    if rho == 0.0 {
        return 0.0;
    }
    let (ln_r, ln_q) = (rho.ln(), (-rho).ln_1p());
    // ln C(N, k) by the incremental recurrence, kept for k >= k0
    let mut ln_c = 0.0f64;
    let mut terms = Vec::with_capacity(big_n + 1 - k0.min(big_n + 1));
    for k in 0..=big_n {
        if k >= k0 {
            terms.push(ln_c + (big_n - k) as f64 * ln_r + k as f64 * ln_q);
        }
        if k < big_n {
            ln_c += ((big_n - k) as f64).ln() - ((k + 1) as f64).ln();
        }
    }
    let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return 1.0;
    }
    let mass = top.exp() * terms.iter().map(|t| (t - top).exp()).sum::<f64>();
    (1.0 - mass).clamp(0.0, 1.0)
}

/// Naive protocol. Input poisoning: correct with
/// `m + ((e^eps+1)/(e^eps-1)) sqrt(n ln(1/delta))` and sound only at `n - 1`
/// with the binomial tail as failure probability. Response poisoning: the
/// `m` coefficient grows to `e^eps / (e^eps - 1)` and `n - 1` is tight.
pub fn bound_naive(
    mode: Mode,
    n: usize,
    m: usize,
    eps: f64,
    delta: f64,
) -> Result<BoundReport, BoundError> {
    let eps = check_eps(eps)?;
    let delta = check_delta(delta)?;
    let nf = n as f64;
    let m_coef = match mode {
        Mode::Input => 1.0,
        Mode::Response => eps.exp() / eps.exp_m1(),
    };
    let alpha1 = m_coef * m as f64 + coth_half(eps) * (nf * (1.0 / delta).ln()).sqrt();
    let alpha2 = nf - 1.0;
    let (delta2, tight) = match mode {
        Mode::Input => (naive_soundness_delta(n, rho_from_eps(eps).expect("eps > 0")), false),
        Mode::Response => (0.0, true),
    };
    Ok(BoundReport {
        protocol: Protocol::Naive,
        mode: Some(mode),
        alpha1,
        delta1: delta,
        alpha2: alpha2.max(0.0),
        delta2,
        tight,
        tau: None,
        inapplicable: false,
        c: None,
    })
}

/// Check protocol; the same `alpha` bounds correctness and soundness.
///
/// * input: `3m + ((e^eps+1)/(e^eps-1)) sqrt(4m ln(4/delta)) + (sqrt(e^eps+1)/(e^eps-1)) sqrt(12n ln(4/delta))`
/// * response: `((3e^eps+1)/(e^eps-1)) m + (sqrt(e^eps+1)/(e^eps-1)) sqrt(12n ln(2/delta))`
pub fn bound_check(
    mode: Mode,
    n: usize,
    m: usize,
    eps: f64,
    delta: f64,
) -> Result<BoundReport, BoundError> {
    let eps = check_eps(eps)?;
    let delta = check_delta(delta)?;
    let (nf, mf) = (n as f64, m as f64);
    let alpha = match mode {
        Mode::Input => {
            let l = (4.0 / delta).ln();
            3.0 * mf + coth_half(eps) * (4.0 * mf * l).sqrt() + root_coef(eps) * (12.0 * nf * l).sqrt()
        }
        Mode::Response => {
            let l = (2.0 / delta).ln();
            check_response_m_coef(eps) * mf + root_coef(eps) * (12.0 * nf * l).sqrt()
        }
    };
    let rho = rho_from_eps(eps).expect("eps > 0");
    Ok(BoundReport {
        protocol: Protocol::Check,
        mode: Some(mode),
        alpha1: alpha,
        delta1: delta,
        alpha2: alpha,
        delta2: delta,
        tight: false,
        tau: Some(tau_threshold(mode, CheckedProtocol::Check, n, m, rho, delta)),
        inapplicable: !precondition_ok(eps, delta, n),
        c: None,
    })
}

/// `(3e^eps + 1) / (e^eps - 1)`, the `m` coefficient of the check protocol's
/// response-poisoning bound.
pub fn check_response_m_coef(eps: f64) -> f64 {
    (3.0 * eps.exp() + 1.0) / eps.exp_m1()
}

/// Pure Laplace protocol. Correct with `ln(1/delta) / eps` (one-sided tail,
/// constant 1); sound only at `n - 1`, with probability 1/2 under input
/// poisoning and tightly under response poisoning.
pub fn bound_laplace(
    mode: Mode,
    n: usize,
    _m: usize,
    eps: f64,
    delta: f64,
) -> Result<BoundReport, BoundError> {
    let eps = check_eps(eps)?;
    let delta = check_delta(delta)?;
    let (delta2, tight) = match mode {
        Mode::Input => (0.5, false),
        Mode::Response => (0.0, true),
    };
    Ok(BoundReport {
        protocol: Protocol::Laplace,
        mode: Some(mode),
        alpha1: (1.0 / delta).ln() / eps,
        delta1: delta,
        alpha2: (n as f64 - 1.0).max(0.0),
        delta2,
        tight,
        tau: None,
        inapplicable: false,
        c: None,
    })
}

/// Hybrid protocol with `eps` the total budget. Correct with
/// `2 ln(2/delta) / eps` in both modes; sound with
///
/// * input: `6m + 2((e^eps+1)/(e^eps-1)) sqrt(4m ln(8/delta)) + (sqrt(e^eps+1)/(e^eps-1)) sqrt(48n ln(8/delta)) + 2 ln(2/delta)/eps`
/// * response: `((6e^eps+2)/(e^eps-1)) m + (sqrt(e^eps+1)/(e^eps-1)) sqrt(48n ln(4/delta)) + 2 ln(2/delta)/eps`
///
/// The split `c` only selects the reported `tau`.
pub fn bound_hybrid(
    mode: Mode,
    n: usize,
    m: usize,
    eps: f64,
    delta: f64,
    c: f64,
) -> Result<BoundReport, BoundError> {
    let eps = check_eps(eps)?;
    let delta = check_delta(delta)?;
    if !(c > 0.0 && c < 1.0) {
        return Err(BoundError::Split(c));
    }
    let (nf, mf) = (n as f64, m as f64);
    let alpha1 = 2.0 * (2.0 / delta).ln() / eps;
    let alpha2 = match mode {
        Mode::Input => {
            let l = (8.0 / delta).ln();
            6.0 * mf
                + 2.0 * coth_half(eps) * (4.0 * mf * l).sqrt()
                + root_coef(eps) * (48.0 * nf * l).sqrt()
                + alpha1
        }
        Mode::Response => {
            let l = (4.0 / delta).ln();
            (6.0 * eps.exp() + 2.0) / eps.exp_m1() * mf + root_coef(eps) * (48.0 * nf * l).sqrt() + alpha1
        }
    };
    let (eps_rr, _) = split_budget(eps, c).map_err(|_| BoundError::Split(c))?;
    let rho = rho_from_eps(eps_rr).expect("eps > 0");
    Ok(BoundReport {
        protocol: Protocol::Hybrid,
        mode: Some(mode),
        alpha1,
        delta1: delta,
        alpha2,
        delta2: delta,
        tight: false,
        tau: Some(tau_threshold(mode, CheckedProtocol::Hybrid, n, m, rho, delta)),
        inapplicable: !precondition_ok(eps, delta, n),
        c: Some(c),
    })
}

/// Non-private protocol: `m`-tight correct and `min(2m - 1, n - 1)`-tight
/// sound, with `m` capped at `n` and the soundness bound clamped at 0.
pub fn bound_nonprivate(n: usize, m: usize) -> BoundReport {
    let m = m.min(n);
    let alpha2 = (2 * m).saturating_sub(1).min(n.saturating_sub(1));
    BoundReport {
        protocol: Protocol::Nonprivate,
        mode: None,
        alpha1: m as f64,
        delta1: 0.0,
        alpha2: alpha2 as f64,
        delta2: 0.0,
        tight: true,
        tau: None,
        inapplicable: false,
        c: None,
    }
}

/// Dispatches to the protocol's bound; `c` is used by the hybrid protocol only.
pub fn bound_for(
    protocol: Protocol,
    mode: Mode,
    n: usize,
    m: usize,
    eps: f64,
    delta: f64,
    c: f64,
) -> Result<BoundReport, BoundError> {
    match protocol {
        Protocol::Naive => bound_naive(mode, n, m, eps, delta),
        Protocol::Check => bound_check(mode, n, m, eps, delta),
        Protocol::Hybrid => bound_hybrid(mode, n, m, eps, delta, c),
        Protocol::Laplace => bound_laplace(mode, n, m, eps, delta),
        Protocol::Nonprivate => Ok(bound_nonprivate(n, m)),
    }
}
