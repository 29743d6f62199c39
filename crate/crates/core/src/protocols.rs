//! User-side responders and aggregator-side estimators for the degree
//! estimation protocols:
//!
//! * **naive** – every pair is reported once, by its designated reporter, via
//!   randomized response; no checks.
//! * **check** – both endpoints report every pair; a user whose count of
//!   `(0, 1)` cross-reports strays more than `tau` from its honest mean gets ⊥.
//! * **hybrid** – the check protocol's bit rows at budget `c * eps` plus a
//!   Laplace degree at `(1 - c) * eps`; the Laplace degree is released when it
//!   agrees with the de-biased bit estimate.
//! * **nonprivate** – true rows, rejecting users with more than `m`
//!   inconsistent pairs.
//! * **laplace** – every user releases `degree + Lap(1 / eps)`; no checks.

use std::fmt;
use std::ops::Index;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::Graph;
use crate::randomizers::{laplace_noise, rr_bit, rr_row, PrivacyParams, RandomSource};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("flip probability 0.5 (eps = 0) makes the de-biasing denominator vanish")]
    DegenerateRho,
    #[error("bundle carries no bit reports")]
    MissingBits,
    #[error("bundle carries no Laplace degree reports")]
    MissingLaplace,
    #[error("size mismatch: expected {expected} users, got {found}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("reporter assignment needs at least two users, got {0}")]
    TooFewUsers(usize),
    #[error("unknown {what} `{name}`")]
    UnknownName { what: &'static str, name: String },
}

/// The poisoning class an aggregator calibrates its threshold against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Input,
    Response,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Input => "input",
            Mode::Response => "response",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "input" => Ok(Mode::Input),
            "response" => Ok(Mode::Response),
            _ => Err(ProtocolError::UnknownName {
                what: "mode",
                name: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Naive,
    Check,
    Hybrid,
    Nonprivate,
    Laplace,
}

impl Protocol {
    pub const ALL: [Protocol; 5] = [
        Protocol::Naive,
        Protocol::Check,
        Protocol::Hybrid,
        Protocol::Nonprivate,
        Protocol::Laplace,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Protocol::Naive => "naive",
            Protocol::Check => "check",
            Protocol::Hybrid => "hybrid",
            Protocol::Nonprivate => "nonprivate",
            Protocol::Laplace => "laplace",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| ProtocolError::UnknownName {
                what: "protocol",
                name: s.to_string(),
            })
    }
}

/// Protocols that run the `r01` consistency check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckedProtocol {
    Check,
    Hybrid,
}

/// Designates one reporter per unordered pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReporterAssignment {
    n: usize,
    // reports[i * n + j]: user i reports pair {i, j}
    reports: Vec<bool>,
}

impl ReporterAssignment {
    /// Pair `{i, j}` with `i < j` is reported by `i`.
    pub fn default_for(n: usize) -> Result<Self, ProtocolError> {
        if n < 2 {
            return Err(ProtocolError::TooFewUsers(n));
        }
        let mut reports = vec![false; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                reports[i * n + j] = true;
            }
        }
        Ok(Self { n, reports })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Hands pair `{reporter, other}` to `reporter`.
    pub fn assign(&mut self, reporter: usize, other: usize) {
        assert_ne!(reporter, other, "no self pairs");
        self.reports[reporter * self.n + other] = true;
        self.reports[other * self.n + reporter] = false;
    }

    pub fn reports(&self, i: usize, j: usize) -> bool {
        self.reports[i * self.n + j]
    }

    /// `Out_i`: partners of the pairs user `i` reports.
    pub fn out_set(&self, i: usize) -> Vec<usize> {
        (0..self.n).filter(|&j| self.reports(i, j)).collect()
    }

    /// `In_i`: users that report their pair with `i`.
    pub fn in_set(&self, i: usize) -> Vec<usize> {
        (0..self.n).filter(|&j| self.reports(j, i)).collect()
    }
}

pub fn default_assignment(n: usize) -> Result<ReporterAssignment, ProtocolError> {
    ReporterAssignment::default_for(n)
}

/// Square 0/1 matrix of reported bits; row `i` is what user `i` sent.
/// The diagonal is never read.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportMatrix {
    n: usize,
    bits: Vec<u8>,
}

impl ReportMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            bits: vec![0; n * n],
        }
    }

    pub fn from_rows(rows: Vec<Vec<u8>>) -> Result<Self, ProtocolError> {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.into_iter().enumerate() {
            m.set_row(i, &row)?;
        }
        Ok(m)
    }

    /// The graph's true adjacency rows.
    pub fn truthful(g: &Graph) -> Self {
        let n = g.n();
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.row_mut(i).copy_from_slice(g.adjacency_row(i));
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.bits[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, bit: u8) {
        self.bits[i * self.n + j] = bit;
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.bits[i * self.n..(i + 1) * self.n]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [u8] {
        &mut self.bits[i * self.n..(i + 1) * self.n]
    }

    pub fn set_row(&mut self, i: usize, row: &[u8]) -> Result<(), ProtocolError> {
        if row.len() != self.n {
            return Err(ProtocolError::SizeMismatch {
                expected: self.n,
                found: row.len(),
            });
        }
        self.row_mut(i).copy_from_slice(row);
        Ok(())
    }

    fn transposed(&self) -> Self {
        let n = self.n;
        let mut t = Self::zeros(n);
        for i in 0..n {
            for (j, &b) in self.row(i).iter().enumerate() {
                t.bits[j * n + i] = b;
            }
        }
        t
    }
}

/// Everything the aggregator receives in one protocol run.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseBundle {
    pub n: usize,
    pub bits: Option<ReportMatrix>,
    pub lap_degree: Option<Vec<f64>>,
    /// Notes left by attack strategies (e.g. capped sampling fractions).
    pub audit: Vec<String>,
}

impl ResponseBundle {
    pub fn from_bits(bits: ReportMatrix) -> Self {
        Self {
            n: bits.n(),
            bits: Some(bits),
            lap_degree: None,
            audit: Vec::new(),
        }
    }

    pub fn from_laplace(lap_degree: Vec<f64>) -> Self {
        Self {
            n: lap_degree.len(),
            bits: None,
            lap_degree: Some(lap_degree),
            audit: Vec::new(),
        }
    }

    fn bits(&self) -> Result<&ReportMatrix, ProtocolError> {
        self.bits.as_ref().ok_or(ProtocolError::MissingBits)
    }

    fn lap(&self) -> Result<&[f64], ProtocolError> {
        self.lap_degree.as_deref().ok_or(ProtocolError::MissingLaplace)
    }
}

/// Per-user result: `Some(estimate)` or `None` for ⊥.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegreeEstimates(pub Vec<Option<f64>>);

impl DegreeEstimates {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_bottom(&self, i: usize) -> bool {
        self.0[i].is_none()
    }

    pub fn bottom_count(&self) -> usize {
        self.0.iter().filter(|e| e.is_none()).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Option<f64>> {
        self.0.iter()
    }
}

impl Index<usize> for DegreeEstimates {
    type Output = Option<f64>;

    fn index(&self, i: usize) -> &Option<f64> {
        &self.0[i]
    }
}

/// Cross-report counts the checks are computed from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckStats {
    /// Pairs where both endpoints reported 1.
    pub r11: Vec<u32>,
    /// Pairs where user `i` reported 0 and the partner 1.
    pub r01: Vec<u32>,
    /// Pairs where user `i` reported 1 and the partner 0.
    pub r10: Vec<u32>,
    /// De-biased `r11` estimate (check and hybrid only).
    pub rr_estimate: Option<Vec<f64>>,
}

/// Per-user substreams of one trial. The randomized-response and Laplace
/// draws of a user never share a stream, so changing one report cannot
/// shift the other.
#[derive(Debug, Clone)]
pub struct UserStreams {
    pub rr: RandomSource,
    pub lap: RandomSource,
}

impl UserStreams {
    const RR: u64 = 0;
    const LAP: u64 = 1;

    pub fn new(trial: &RandomSource, user: usize) -> Self {
        let user = trial.fork(user as u64);
        Self {
            rr: user.fork(Self::RR),
            lap: user.fork(Self::LAP),
        }
    }
}

fn require_rho(rho: f64) -> Result<f64, ProtocolError> {
    if rho == 0.5 {
        Err(ProtocolError::DegenerateRho)
    } else {
        Ok(1.0 - 2.0 * rho)
    }
}

/// Randomized response over the whole row (self excluded).
pub fn full_respond(row: &[u8], user: usize, rho: f64, rng: &mut RandomSource) -> Vec<u8> {
    rr_row(row, &[user], rho, rng)
}

/// Naive responder: noisy bits for `Out_i`, zeros elsewhere.
///
/// Every non-self position consumes its draw whether or not it is in `Out_i`,
/// so a user's reported bits do not depend on how the other pairs are
/// assigned.
pub fn naive_respond(
    row: &[u8],
    user: usize,
    assignment: &ReporterAssignment,
    rho: f64,
    rng: &mut RandomSource,
) -> Vec<u8> {
    let mut q = full_respond(row, user, rho, rng);
    for (j, bit) in q.iter_mut().enumerate() {
        if !assignment.reports(user, j) {
            *bit = 0;
        }
    }
    q
}

/// Hybrid responder: bits at `rho(c eps)` and `degree + Lap(1 / ((1 - c) eps))`.
pub fn hybrid_respond(
    row: &[u8],
    user: usize,
    params: &PrivacyParams,
    streams: &mut UserStreams,
) -> (Vec<u8>, f64) {
    let bits = full_respond(row, user, params.rho_hybrid(), &mut streams.rr);
    let degree: f64 = row.iter().map(|&b| b as f64).sum();
    let lap = degree + laplace_noise(params.hybrid_lap_scale(), &mut streams.lap);
    (bits, lap)
}

/// Pure Laplace responder: `degree + Lap(1 / eps)`.
pub fn laplace_respond(row: &[u8], params: &PrivacyParams, streams: &mut UserStreams) -> f64 {
    let degree: f64 = row.iter().map(|&b| b as f64).sum();
    degree + laplace_noise(params.lap_scale(), &mut streams.lap)
}

pub fn honest_naive_bundle(
    g: &Graph,
    assignment: &ReporterAssignment,
    rho: f64,
    trial: &RandomSource,
) -> ResponseBundle {
    let mut q = ReportMatrix::zeros(g.n());
    for i in 0..g.n() {
        let mut s = UserStreams::new(trial, i);
        let row = naive_respond(g.adjacency_row(i), i, assignment, rho, &mut s.rr);
        q.row_mut(i).copy_from_slice(&row);
    }
    ResponseBundle::from_bits(q)
}

pub fn honest_check_bundle(g: &Graph, rho: f64, trial: &RandomSource) -> ResponseBundle {
    let mut q = ReportMatrix::zeros(g.n());
    for i in 0..g.n() {
        let mut s = UserStreams::new(trial, i);
        fill_rr_row(q.row_mut(i), g.adjacency_row(i), i, rho, &mut s.rr);
    }
    ResponseBundle::from_bits(q)
}

pub fn honest_hybrid_bundle(
    g: &Graph,
    params: &PrivacyParams,
    trial: &RandomSource,
) -> ResponseBundle {
    let n = g.n();
    let mut q = ReportMatrix::zeros(n);
    let mut lap = Vec::with_capacity(n);
    for i in 0..n {
        let mut s = UserStreams::new(trial, i);
        let (bits, d) = hybrid_respond(g.adjacency_row(i), i, params, &mut s);
        q.row_mut(i).copy_from_slice(&bits);
        lap.push(d);
    }
    let mut bundle = ResponseBundle::from_bits(q);
    bundle.lap_degree = Some(lap);
    bundle
}

pub fn honest_laplace_bundle(
    g: &Graph,
    params: &PrivacyParams,
    trial: &RandomSource,
) -> ResponseBundle {
    let lap = (0..g.n())
        .map(|i| {
            let mut s = UserStreams::new(trial, i);
            laplace_respond(g.adjacency_row(i), params, &mut s)
        })
        .collect();
    ResponseBundle::from_laplace(lap)
}

pub fn honest_nonprivate_bundle(g: &Graph) -> ResponseBundle {
    ResponseBundle::from_bits(ReportMatrix::truthful(g))
}

// Allocation-free variant of `full_respond` for the hot path.
fn fill_rr_row(out: &mut [u8], row: &[u8], user: usize, rho: f64, rng: &mut RandomSource) {
    for (j, (o, &b)) in out.iter_mut().zip(row).enumerate() {
        *o = if j == user { 0 } else { rr_bit(b, rho, rng) };
    }
}

/// `r1_i`: ones reported on pairs incident to `i`, each pair read from its
/// designated reporter.
pub fn naive_counts(
    bundle: &ResponseBundle,
    assignment: &ReporterAssignment,
) -> Result<Vec<u32>, ProtocolError> {
    let q = bundle.bits()?;
    let n = q.n();
    if assignment.n() != n {
        return Err(ProtocolError::SizeMismatch {
            expected: n,
            found: assignment.n(),
        });
    }
    let mut r1 = vec![0u32; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let bit = if assignment.reports(i, j) {
                q.get(i, j)
            } else {
                q.get(j, i)
            } as u32;
            r1[i] += bit;
            r1[j] += bit;
        }
    }
    Ok(r1)
}

/// Naive estimator `(r1 - rho n) / (1 - 2 rho)`. Never ⊥, never clamped.
///
/// The `rho * n` term (rather than `rho * (n - 1)`) leaves a constant offset
/// of `-rho / (1 - 2 rho)` in expectation.
pub fn naive_aggregate(
    bundle: &ResponseBundle,
    assignment: &ReporterAssignment,
    rho: f64,
) -> Result<DegreeEstimates, ProtocolError> {
    let denom = require_rho(rho)?;
    let n = bundle.n as f64;
    let r1 = naive_counts(bundle, assignment)?;
    Ok(DegreeEstimates(
        r1.into_iter()
            .map(|r| Some((r as f64 - rho * n) / denom))
            .collect(),
    ))
}

/// `(r11, r01, r10)` per user over all partners `j != i`.
pub fn consistency_counts(q: &ReportMatrix) -> (Vec<u32>, Vec<u32>, Vec<u32>) {
    let n = q.n();
    let t = q.transposed();
    let mut r11 = Vec::with_capacity(n);
    let mut r01 = Vec::with_capacity(n);
    let mut r10 = Vec::with_capacity(n);
    for i in 0..n {
        let sent = q.row(i);
        let received = t.row(i);
        let mut both = 0u32;
        let mut sent_ones = 0u32;
        let mut received_ones = 0u32;
        for (&a, &b) in sent.iter().zip(received) {
            both += (a & b) as u32;
            sent_ones += a as u32;
            received_ones += b as u32;
        }
        // drop the diagonal
        let (a, b) = (sent[i] as u32, received[i] as u32);
        both -= a & b;
        sent_ones -= a;
        received_ones -= b;
        r11.push(both);
        r01.push(received_ones - both);
        r10.push(sent_ones - both);
    }
    (r11, r01, r10)
}

/// Consistency threshold for the `r01` check.
///
/// | protocol | input | response |
/// |---|---|---|
/// | check  | `m(1-2ρ) + √(m ln 4/δ) + √(3nρ ln 4/δ)` | `m + √(3nρ ln 2/δ)` |
/// | hybrid | `m(1-2ρ) + √(m ln 8/δ) + √(3nρ ln 8/δ)` | `m + √(3nρ ln 4/δ)` |
///
/// For the hybrid protocol `rho` is the bit-report flip probability `rho(c eps)`.
pub fn tau_threshold(
    mode: Mode,
    protocol: CheckedProtocol,
    n: usize,
    m: usize,
    rho: f64,
    delta: f64,
) -> f64 {
    let n = n as f64;
    let m = m as f64;
    match (mode, protocol) {
        (Mode::Input, p) => {
            let l = match p {
                CheckedProtocol::Check => (4.0 / delta).ln(),
                CheckedProtocol::Hybrid => (8.0 / delta).ln(),
            };
            m * (1.0 - 2.0 * rho) + (m * l).sqrt() + (3.0 * n * rho * l).sqrt()
        }
        (Mode::Response, p) => {
            let l = match p {
                CheckedProtocol::Check => (2.0 / delta).ln(),
                CheckedProtocol::Hybrid => (4.0 / delta).ln(),
            };
            m + (3.0 * n * rho * l).sqrt()
        }
    }
}

/// Validity condition of the check and hybrid guarantees:
/// `(4/3) e^eps ln(2/delta) < n`.
pub fn precondition_ok(eps: f64, delta: f64, n: usize) -> bool {
    4.0 / 3.0 * eps.exp() * (2.0 / delta).ln() < n as f64
}

fn passes_r01_check(r01: u32, rho: f64, n: usize, tau: f64) -> bool {
    let expected = rho * (1.0 - rho) * (n as f64 - 1.0);
    (r01 as f64 - expected).abs() <= tau
}

fn rr_estimate(r11: u32, rho: f64, n: usize, denom: f64) -> f64 {
    (r11 as f64 - rho * rho * (n as f64 - 1.0)) / denom
}

/// Check-protocol aggregator: ⊥ when `|r01 - ρ(1-ρ)(n-1)| > tau`, otherwise
/// `(r11 - ρ²(n-1)) / (1 - 2ρ)`.
pub fn check_aggregate(
    bundle: &ResponseBundle,
    rho: f64,
    tau: f64,
) -> Result<(DegreeEstimates, CheckStats), ProtocolError> {
    let denom = require_rho(rho)?;
    let q = bundle.bits()?;
    let n = q.n();
    let (r11, r01, r10) = consistency_counts(q);
    let rr: Vec<f64> = r11.iter().map(|&r| rr_estimate(r, rho, n, denom)).collect();
    let est = (0..n)
        .map(|i| passes_r01_check(r01[i], rho, n, tau).then_some(rr[i]))
        .collect();
    Ok((
        DegreeEstimates(est),
        CheckStats {
            r11,
            r01,
            r10,
            rr_estimate: Some(rr),
        },
    ))
}

/// Slack of the hybrid protocol's second check:
/// `m + 2 tau / (1 - 2ρ) + (2 / eps_lap) ln(2 / delta)`.
pub fn hybrid_slack(m: usize, tau: f64, rho: f64, eps_lap: f64, delta: f64) -> f64 {
    m as f64 + 2.0 * tau / (1.0 - 2.0 * rho) + 2.0 / eps_lap * (2.0 / delta).ln()
}

/// Hybrid aggregator: the check-protocol test on the bits, then
/// `|rr_estimate - lap_degree| <= hybrid_slack`; releases the Laplace degree.
pub fn hybrid_aggregate(
    bundle: &ResponseBundle,
    params: &PrivacyParams,
    tau: f64,
    m: usize,
) -> Result<(DegreeEstimates, CheckStats), ProtocolError> {
    let rho = params.rho_hybrid();
    let denom = require_rho(rho)?;
    let q = bundle.bits()?;
    let lap = bundle.lap()?;
    let n = q.n();
    if lap.len() != n {
        return Err(ProtocolError::SizeMismatch {
            expected: n,
            found: lap.len(),
        });
    }
    let slack = hybrid_slack(m, tau, rho, params.eps_lap(), params.delta());
    let (r11, r01, r10) = consistency_counts(q);
    let rr: Vec<f64> = r11.iter().map(|&r| rr_estimate(r, rho, n, denom)).collect();
    let est = (0..n)
        .map(|i| {
            let ok = passes_r01_check(r01[i], rho, n, tau) && (rr[i] - lap[i]).abs() <= slack;
            ok.then_some(lap[i])
        })
        .collect();
    Ok((
        DegreeEstimates(est),
        CheckStats {
            r11,
            r01,
            r10,
            rr_estimate: Some(rr),
        },
    ))
}

/// Non-private aggregator: ⊥ when `r01 + r10 > m`, otherwise `r11`.
pub fn nonprivate_aggregate(
    bundle: &ResponseBundle,
    m: usize,
) -> Result<(DegreeEstimates, CheckStats), ProtocolError> {
    let q = bundle.bits()?;
    let (r11, r01, r10) = consistency_counts(q);
    let est = (0..q.n())
        .map(|i| ((r01[i] + r10[i]) as usize <= m).then_some(r11[i] as f64))
        .collect();
    Ok((
        DegreeEstimates(est),
        CheckStats {
            r11,
            r01,
            r10,
            rr_estimate: None,
        },
    ))
}

/// Pure Laplace aggregator: releases every report as is.
pub fn laplace_aggregate(bundle: &ResponseBundle) -> Result<DegreeEstimates, ProtocolError> {
    Ok(DegreeEstimates(bundle.lap()?.iter().map(|&d| Some(d)).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{degrees, generate_er};

    fn path3() -> Graph {
        Graph::from_edges(3, [(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn default_assignment_shape() {
        let a = default_assignment(3).unwrap();
        assert_eq!(a.out_set(0), vec![1, 2]);
        assert_eq!(a.out_set(1), vec![2]);
        assert!(a.out_set(2).is_empty());
        let a = default_assignment(2).unwrap();
        assert_eq!(a.out_set(0), vec![1]);
        assert_eq!(a.in_set(1), vec![0]);
        for n in 2..20 {
            let a = default_assignment(n).unwrap();
            let total: usize = (0..n).map(|i| a.out_set(i).len()).sum();
            assert_eq!(total, n * (n - 1) / 2);
            for i in 0..n {
                let mut both = a.out_set(i);
                both.extend(a.in_set(i));
                both.sort_unstable();
                let expected: Vec<usize> = (0..n).filter(|&j| j != i).collect();
                assert_eq!(both, expected);
            }
        }
        assert!(default_assignment(1).is_err());
    }

    #[test]
    fn assign_moves_pair() {
        let mut a = default_assignment(4).unwrap();
        a.assign(3, 0);
        assert!(a.reports(3, 0));
        assert!(!a.reports(0, 3));
        assert_eq!(a.in_set(0), vec![3]);
    }

    #[test]
    fn naive_respond_cases() {
        let a = default_assignment(6).unwrap();
        let row = [0, 1, 0, 1, 1, 0];
        let q = naive_respond(&row, 0, &a, 0.0, &mut RandomSource::new(1));
        assert_eq!(q, vec![0, 1, 0, 1, 1, 0]);
        let q = naive_respond(&[0; 6], 2, &a, 1.0, &mut RandomSource::new(1));
        assert_eq!(q, vec![0, 0, 0, 1, 1, 1]);

        let n = 501;
        let a = default_assignment(n).unwrap();
        let q = naive_respond(&vec![0; n], 0, &a, 0.25, &mut RandomSource::new(2));
        let ones: u32 = q.iter().map(|&b| b as u32).sum();
        let sd = (500.0f64 * 0.25 * 0.75).sqrt();
        assert!((ones as f64 - 125.0).abs() <= 3.0 * sd, "{ones}");
    }

    #[test]
    fn naive_aggregate_exact_at_rho_zero() {
        let g = generate_er(30, 0.3, &mut RandomSource::new(5)).unwrap();
        let a = default_assignment(30).unwrap();
        let b = honest_naive_bundle(&g, &a, 0.0, &RandomSource::new(6));
        let est = naive_aggregate(&b, &a, 0.0).unwrap();
        for (i, d) in degrees(&g).into_iter().enumerate() {
            assert_eq!(est[i], Some(d as f64));
        }
    }

    #[test]
    fn naive_aggregate_arithmetic() {
        // r1 = 7 for user 0 on n = 8: (7 - 0.25 * 8) / 0.5 = 10.
        let n = 8;
        let a = default_assignment(n).unwrap();
        let mut q = ReportMatrix::zeros(n);
        for j in 1..8 {
            q.set(0, j, 1);
        }
        let est = naive_aggregate(&ResponseBundle::from_bits(q), &a, 0.25).unwrap();
        assert_eq!(est[0], Some(10.0));
    }

    #[test]
    fn naive_worst_case_inflation() {
        let n = 6;
        let mut a = default_assignment(n).unwrap();
        for j in 0..n - 1 {
            a.assign(n - 1, j);
        }
        let mut q = ReportMatrix::zeros(n);
        for j in 0..n - 1 {
            q.set(n - 1, j, 1);
        }
        let est = naive_aggregate(&ResponseBundle::from_bits(q), &a, 0.0).unwrap();
        assert_eq!(est[n - 1], Some(5.0));
    }

    #[test]
    fn naive_rejects_half() {
        let a = default_assignment(3).unwrap();
        let b = ResponseBundle::from_bits(ReportMatrix::zeros(3));
        assert_eq!(naive_aggregate(&b, &a, 0.5), Err(ProtocolError::DegenerateRho));
    }

    #[test]
    fn tau_examples() {
        for n in [10, 1000] {
            for delta in [1e-6, 0.3] {
                assert_eq!(
                    tau_threshold(Mode::Response, CheckedProtocol::Check, n, 5, 0.0, delta),
                    5.0
                );
            }
        }
        let delta = 2.0 / 1f64.exp();
        let t = tau_threshold(Mode::Response, CheckedProtocol::Check, 1200, 5, 0.25, delta);
        assert!((t - 35.0).abs() < 1e-9, "{t}");
        let delta = 4.0 / 2f64.exp();
        let t = tau_threshold(Mode::Input, CheckedProtocol::Check, 600, 8, 0.25, delta);
        assert!((t - 38.0).abs() < 1e-9, "{t}");
    }

    #[test]
    fn tau_hybrid_logs() {
        // ln(8/δ) = 1 and ln(4/δ) = 1 for the hybrid quadrants.
        let e = 1f64.exp();
        let t = tau_threshold(Mode::Input, CheckedProtocol::Hybrid, 300, 4, 0.25, 8.0 / e);
        assert!((t - (2.0 + 2.0 + 15.0)).abs() < 1e-9);
        let t = tau_threshold(Mode::Response, CheckedProtocol::Hybrid, 300, 4, 0.25, 4.0 / e);
        assert!((t - (4.0 + 15.0)).abs() < 1e-9);
    }

    #[test]
    fn tau_monotone() {
        for mode in [Mode::Input, Mode::Response] {
            for p in [CheckedProtocol::Check, CheckedProtocol::Hybrid] {
                for &rho in &[0.0, 0.1, 0.3, 0.49] {
                    let mut prev = f64::NEG_INFINITY;
                    for n in (10..2000).step_by(97) {
                        let t = tau_threshold(mode, p, n, 7, rho, 1e-3);
                        assert!(t >= prev);
                        prev = t;
                    }
                    let mut prev = f64::NEG_INFINITY;
                    for m in 0..200 {
                        let t = tau_threshold(mode, p, 500, m, rho, 1e-3);
                        assert!(t >= prev);
                        prev = t;
                    }
                }
            }
        }
    }

    #[test]
    fn precondition_examples() {
        let d = 2.0 / 1f64.exp();
        assert!(precondition_ok(0.0, d, 2));
        assert!(!precondition_ok(3f64.ln(), d, 4));
        assert!(precondition_ok(1.0, 1e-6, 1_000_000));
    }

    #[test]
    fn check_honest_rho_zero() {
        let g = generate_er(40, 0.4, &mut RandomSource::new(8)).unwrap();
        let b = honest_check_bundle(&g, 0.0, &RandomSource::new(3));
        let (est, stats) = check_aggregate(&b, 0.0, 0.0).unwrap();
        for (i, d) in degrees(&g).into_iter().enumerate() {
            assert_eq!(stats.r11[i] as usize, d);
            assert_eq!(stats.r01[i], 0);
            assert_eq!(est[i], Some(d as f64));
        }
    }

    #[test]
    fn check_estimator_arithmetic() {
        // n - 1 = 16; user 0 gets r11 = 12 and r01 = 3.
        let n = 17;
        let mut q = ReportMatrix::zeros(n);
        for j in 1..=12 {
            q.set(0, j, 1);
            q.set(j, 0, 1);
        }
        for j in 13..=15 {
            q.set(j, 0, 1);
        }
        let b = ResponseBundle::from_bits(q);
        let (est, stats) = check_aggregate(&b, 0.25, 100.0).unwrap();
        assert_eq!(stats.r11[0], 12);
        assert_eq!(stats.r01[0], 3);
        assert_eq!(est[0], Some(22.0));
    }

    #[test]
    fn check_boundary() {
        // r01 = ρ(1-ρ)(n-1) + τ + 1 -> ⊥; = ρ(1-ρ)(n-1) + τ -> passes.
        let n = 17; // ρ(1-ρ)(n-1) = 3 at ρ = 0.25
        let tau = 2.0;
        let mut q = ReportMatrix::zeros(n);
        for j in 1..=6 {
            q.set(j, 0, 1);
        }
        let b = ResponseBundle::from_bits(q.clone());
        let (est, stats) = check_aggregate(&b, 0.25, tau).unwrap();
        assert_eq!(stats.r01[0], 6);
        assert!(est.is_bottom(0));
        q.set(6, 0, 0);
        let (est, _) = check_aggregate(&ResponseBundle::from_bits(q), 0.25, tau).unwrap();
        assert!(!est.is_bottom(0));
    }

    #[test]
    fn hybrid_respond_noiseless_and_arithmetic() {
        let g = generate_er(20, 0.5, &mut RandomSource::new(2)).unwrap();
        let p = PrivacyParams::noiseless(0.1, 0.9).unwrap();
        let mut s = UserStreams::new(&RandomSource::new(1), 3);
        let (bits, lap) = hybrid_respond(g.adjacency_row(3), 3, &p, &mut s);
        assert_eq!(bits, g.adjacency_row(3));
        assert_eq!(lap, g.degree(3) as f64);

        // degree 10, eps 1, c 0.9 -> scale 10; u = 0.75 gives 10 ln 2.
        let p = PrivacyParams::new(1.0, 0.1, 0.9).unwrap();
        let noise = crate::randomizers::laplace_inverse_cdf(0.75, p.hybrid_lap_scale());
        assert!((10.0 + noise - 16.931_471_805_599_45).abs() < 1e-9);
    }

    #[test]
    fn hybrid_laplace_mean() {
        let row: Vec<u8> = (0..30).map(|j| (j % 3 == 0) as u8).collect();
        let d = row.iter().map(|&b| b as f64).sum::<f64>();
        let p = PrivacyParams::new(2.0, 0.1, 0.5).unwrap();
        let trial = RandomSource::new(77);
        let trials = 10_000;
        let mean = (0..trials)
            .map(|t| {
                let mut s = UserStreams::new(&trial.fork(t), 1);
                hybrid_respond(&row, 1, &p, &mut s).1
            })
            .sum::<f64>()
            / trials as f64;
        let se = 2f64.sqrt() / (trials as f64).sqrt();
        assert!((mean - d).abs() <= 3.0 * se, "{mean} vs {d}");
    }

    #[test]
    fn hybrid_noiseless_honest() {
        let g = generate_er(25, 0.3, &mut RandomSource::new(12)).unwrap();
        let p = PrivacyParams::noiseless(0.1, 0.9).unwrap();
        let b = honest_hybrid_bundle(&g, &p, &RandomSource::new(4));
        let (est, stats) = hybrid_aggregate(&b, &p, 0.0, 0).unwrap();
        for (i, d) in degrees(&g).into_iter().enumerate() {
            assert_eq!(stats.rr_estimate.as_ref().unwrap()[i], d as f64);
            assert_eq!(est[i], Some(d as f64));
        }
    }

    #[test]
    fn hybrid_slack_value_and_boundary() {
        let delta = 2.0 / 1f64.exp();
        let s = hybrid_slack(5, 35.0, 0.25, 0.1, delta);
        assert!((s - 165.0).abs() < 1e-9, "{s}");

        // noiseless: slack = m + 2τ; push the Laplace report just past it
        let g = Graph::from_edges(4, [(0, 1), (1, 2)]).unwrap();
        let p = PrivacyParams::noiseless(0.1, 0.9).unwrap();
        let mut b = honest_hybrid_bundle(&g, &p, &RandomSource::new(0));
        let slack = hybrid_slack(1, 0.0, 0.0, p.eps_lap(), 0.1);
        assert_eq!(slack, 1.0);
        b.lap_degree.as_mut().unwrap()[1] += slack + 1.0;
        b.lap_degree.as_mut().unwrap()[2] += slack;
        let (est, _) = hybrid_aggregate(&b, &p, 0.0, 1).unwrap();
        assert!(est.is_bottom(1));
        assert_eq!(est[2], Some(1.0 + slack));
    }

    #[test]
    fn hybrid_requires_laplace() {
        let p = PrivacyParams::new(1.0, 0.1, 0.9).unwrap();
        let b = ResponseBundle::from_bits(ReportMatrix::zeros(3));
        assert_eq!(
            hybrid_aggregate(&b, &p, 1.0, 0).unwrap_err(),
            ProtocolError::MissingLaplace
        );
    }

    #[test]
    fn nonprivate_cases() {
        let b = honest_nonprivate_bundle(&path3());
        let (est, stats) = nonprivate_aggregate(&b, 0).unwrap();
        assert_eq!(est.0, vec![Some(1.0), Some(2.0), Some(1.0)]);
        assert!(stats.r01.iter().chain(&stats.r10).all(|&x| x == 0));

        // user 0 denies edge {0, 1}
        let mut b = honest_nonprivate_bundle(&path3());
        b.bits.as_mut().unwrap().set(0, 1, 0);
        let (est, stats) = nonprivate_aggregate(&b, 1).unwrap();
        assert_eq!(stats.r01[0] + stats.r10[0], 1);
        assert_eq!(stats.r01[1] + stats.r10[1], 1);
        assert_eq!(est.0, vec![Some(0.0), Some(1.0), Some(1.0)]);
        let (est, _) = nonprivate_aggregate(&b, 0).unwrap();
        assert!(est.is_bottom(0) && est.is_bottom(1) && !est.is_bottom(2));
    }

    #[test]
    fn laplace_noiseless_exact() {
        let g = path3();
        let p = PrivacyParams::noiseless(0.1, 0.5).unwrap();
        let est = laplace_aggregate(&honest_laplace_bundle(&g, &p, &RandomSource::new(1))).unwrap();
        assert_eq!(est.0, vec![Some(1.0), Some(2.0), Some(1.0)]);
    }

    #[test]
    fn shrinking_tau_never_unblocks() {
        let g = generate_er(60, 0.3, &mut RandomSource::new(1)).unwrap();
        let b = honest_check_bundle(&g, 0.3, &RandomSource::new(2));
        let mut prev: Option<DegreeEstimates> = None;
        for k in (0..40).rev() {
            let (est, _) = check_aggregate(&b, 0.3, k as f64 * 0.5).unwrap();
            if let Some(p) = &prev {
                for i in 0..60 {
                    if p.is_bottom(i) {
                        assert!(est.is_bottom(i));
                    }
                }
            }
            prev = Some(est);
        }
    }
}
