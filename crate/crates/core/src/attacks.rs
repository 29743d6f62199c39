//! Poisoning strategies against the degree estimation protocols.
//!
//! An *input* poisoner replaces its adjacency list with a fabricated one and
//! still runs the honest randomizer on it; a *response* poisoner sends
//! whatever it likes. Two goals are modelled:
//!
//! * **inflation** – a malicious target `t` and its accomplices raise `t`'s
//!   estimate,
//! * **deflation** – the malicious users lower the estimate of an honest
//!   target `t` by denying their edge to it.
//!
//! Every strategy leaves honest users' reports exactly as an honest run with
//! the same trial stream would produce them.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::Graph;
use crate::protocols::{
    full_respond, honest_check_bundle, honest_hybrid_bundle, honest_laplace_bundle,
    honest_naive_bundle, naive_respond, Mode, ReportMatrix, ReporterAssignment, ResponseBundle,
    UserStreams,
};
use crate::randomizers::{laplace_noise, PrivacyParams, RandomSource};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttackError {
    #[error("user {user} out of range for {n} users")]
    User { user: usize, n: usize },
    #[error("inflation target {0} must be malicious")]
    TargetNotMalicious(usize),
    #[error("deflation target {0} must be honest")]
    TargetMalicious(usize),
    #[error("attack kind {0} needs a target")]
    MissingTarget(&'static str),
    #[error("an attack with no malicious users cannot have a target")]
    StrayTarget,
    #[error("attack kind none requires an empty malicious set")]
    NoneWithMalicious,
    #[error("aggressiveness b must be finite and non-negative, got {0}")]
    Aggressiveness(f64),
    #[error("infeasible attack: {0}")]
    Infeasible(String),
    #[error("unknown attack `{0}`")]
    UnknownName(String),
}

/// The two constructions behind the non-private protocol's tight bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Thm6 {
    /// Malicious neighbours of an honest target deny their edges to it.
    Correctness,
    /// A malicious target and its accomplices hide up to `2m - 1` edges.
    Soundness,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AttackKind {
    None,
    Inflation,
    Deflation,
    Thm6(Thm6),
}

impl AttackKind {
    fn target_is_malicious(&self) -> Option<bool> {
        match self {
            AttackKind::None => None,
            AttackKind::Inflation | AttackKind::Thm6(Thm6::Soundness) => Some(true),
            AttackKind::Deflation | AttackKind::Thm6(Thm6::Correctness) => Some(false),
        }
    }
}

/// Attack names accepted on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackName {
    None,
    InflateInput,
    InflateResponse,
    DeflateInput,
    DeflateResponse,
    Thm6Correctness,
    Thm6Soundness,
}

impl AttackName {
    pub const ALL: [AttackName; 7] = [
        AttackName::None,
        AttackName::InflateInput,
        AttackName::InflateResponse,
        AttackName::DeflateInput,
        AttackName::DeflateResponse,
        AttackName::Thm6Correctness,
        AttackName::Thm6Soundness,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AttackName::None => "none",
            AttackName::InflateInput => "inflate-input",
            AttackName::InflateResponse => "inflate-response",
            AttackName::DeflateInput => "deflate-input",
            AttackName::DeflateResponse => "deflate-response",
            AttackName::Thm6Correctness => "thm6-correctness",
            AttackName::Thm6Soundness => "thm6-soundness",
        }
    }

    pub fn kind(&self) -> AttackKind {
        match self {
            AttackName::None => AttackKind::None,
            AttackName::InflateInput | AttackName::InflateResponse => AttackKind::Inflation,
            AttackName::DeflateInput | AttackName::DeflateResponse => AttackKind::Deflation,
            AttackName::Thm6Correctness => AttackKind::Thm6(Thm6::Correctness),
            AttackName::Thm6Soundness => AttackKind::Thm6(Thm6::Soundness),
        }
    }

    /// Poisoning mode fixed by the name, if any.
    pub fn mode(&self) -> Option<Mode> {
        match self {
            AttackName::InflateInput | AttackName::DeflateInput => Some(Mode::Input),
            AttackName::InflateResponse | AttackName::DeflateResponse => Some(Mode::Response),
            _ => None,
        }
    }
}

impl fmt::Display for AttackName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttackName {
    type Err = AttackError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| AttackError::UnknownName(s.to_string()))
    }
}

/// Who attacks, how, and whom.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackSpec {
    n: usize,
    is_malicious: Vec<bool>,
    malicious: Vec<usize>,
    kind: AttackKind,
    mode: Mode,
    target: Option<usize>,
    b: f64,
}

impl AttackSpec {
    pub fn new(
        n: usize,
        malicious: impl IntoIterator<Item = usize>,
        kind: AttackKind,
        mode: Mode,
        target: Option<usize>,
        b: f64,
    ) -> Result<Self, AttackError> {
        let mut is_malicious = vec![false; n];
        for user in malicious {
            if user >= n {
                return Err(AttackError::User { user, n });
            }
            is_malicious[user] = true;
        }
        let members: Vec<usize> = (0..n).filter(|&i| is_malicious[i]).collect();
        if !(b.is_finite() && b >= 0.0) {
            return Err(AttackError::Aggressiveness(b));
        }
        if let Some(t) = target {
            if t >= n {
                return Err(AttackError::User { user: t, n });
            }
        }
        match (kind, kind.target_is_malicious()) {
            (AttackKind::None, _) => {
                if !members.is_empty() {
                    return Err(AttackError::NoneWithMalicious);
                }
                if target.is_some() {
                    return Err(AttackError::StrayTarget);
                }
            }
            // a Thm6 construction with nobody malicious is a no-op
            (AttackKind::Thm6(_), _) if members.is_empty() => {
                if target.is_some() {
                    return Err(AttackError::StrayTarget);
                }
            }
            (_, Some(wants_malicious)) => {
                let t = target.ok_or(AttackError::MissingTarget(kind_label(kind)))?;
                match (wants_malicious, is_malicious[t]) {
                    (true, false) => return Err(AttackError::TargetNotMalicious(t)),
                    (false, true) => return Err(AttackError::TargetMalicious(t)),
                    _ => {}
                }
            }
            (_, None) => unreachable!(),
        }
        Ok(Self {
            n,
            is_malicious,
            malicious: members,
            kind,
            mode,
            target,
            b,
        })
    }

    /// The all-honest spec.
    pub fn none(n: usize, mode: Mode) -> Self {
        Self::new(n, [], AttackKind::None, mode, None, 0.0).expect("valid")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn malicious(&self) -> &[usize] {
        &self.malicious
    }

    pub fn is_malicious(&self, i: usize) -> bool {
        self.is_malicious[i]
    }

    pub fn honest(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(|&i| !self.is_malicious[i])
    }

    pub fn m(&self) -> usize {
        self.malicious.len()
    }

    pub fn kind(&self) -> AttackKind {
        self.kind
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn target(&self) -> Option<usize> {
        self.target
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    fn accomplices(&self) -> impl Iterator<Item = usize> + '_ {
        let t = self.target;
        self.malicious.iter().copied().filter(move |&i| Some(i) != t)
    }
}

fn kind_label(kind: AttackKind) -> &'static str {
    match kind {
        AttackKind::None => "none",
        AttackKind::Inflation => "inflation",
        AttackKind::Deflation => "deflation",
        AttackKind::Thm6(Thm6::Correctness) => "thm6-correctness",
        AttackKind::Thm6(Thm6::Soundness) => "thm6-soundness",
    }
}

/// A poisoned run: what the aggregator receives plus audit material.
#[derive(Debug, Clone)]
pub struct PoisonedBundle {
    pub bundle: ResponseBundle,
    /// Reporter assignment the naive protocol must be aggregated with.
    pub assignment: Option<ReporterAssignment>,
    /// Fabricated adjacency lists of input-mode poisoners, by user. Each
    /// poisoner's reported row is the honest randomizer applied to this list
    /// with that user's own stream.
    pub poisoned_inputs: Vec<(usize, Vec<u8>)>,
    /// Adjacency list an inflating target claims (the basis of its hybrid
    /// Laplace report).
    pub target_claim: Option<Vec<u8>>,
}

impl PoisonedBundle {
    fn plain(bundle: ResponseBundle) -> Self {
        Self {
            bundle,
            assignment: None,
            poisoned_inputs: Vec::new(),
            target_claim: None,
        }
    }
}

/// Attacker-side substream, disjoint from every user stream.
fn attacker_stream(trial: &RandomSource) -> RandomSource {
    trial.fork(u64::MAX)
}

fn with_bit(row: &[u8], j: usize, bit: u8) -> Vec<u8> {
    let mut out = row.to_vec();
    out[j] = bit;
    out
}

/// Attacks on the naive protocol. The reporter assignment is overridden to
/// the attacker's best case: an inflating target reports all of its pairs,
/// and deflating users report every pair they share with the target.
pub fn poisoned_responses_naive(
    spec: &AttackSpec,
    g: &Graph,
    assignment: &ReporterAssignment,
    rho: f64,
    trial: &RandomSource,
) -> PoisonedBundle {
    let n = g.n();
    let mut assignment = assignment.clone();
    match (spec.kind(), spec.target()) {
        (AttackKind::Inflation, Some(t)) => {
            for j in (0..n).filter(|&j| j != t) {
                assignment.assign(t, j);
            }
        }
        (AttackKind::Deflation, Some(t)) => {
            for &j in spec.malicious() {
                assignment.assign(j, t);
            }
        }
        _ => {}
    }
    let mut bundle = honest_naive_bundle(g, &assignment, rho, trial);
    let mut poisoned_inputs = Vec::new();
    let q = bundle.bits.as_mut().expect("bits");
    match (spec.kind(), spec.target()) {
        (AttackKind::Inflation, Some(t)) => {
            let claim: Vec<u8> = (0..n).map(|j| (j != t) as u8).collect();
            let row = match spec.mode() {
                Mode::Response => claim.clone(),
                Mode::Input => {
                    let mut s = UserStreams::new(trial, t);
                    let row = naive_respond(&claim, t, &assignment, rho, &mut s.rr);
                    poisoned_inputs.push((t, claim));
                    row
                }
            };
            q.row_mut(t).copy_from_slice(&row);
        }
        (AttackKind::Deflation, Some(t)) => {
            for &j in spec.malicious() {
                match spec.mode() {
                    Mode::Response => q.set(j, t, 0),
                    Mode::Input => {
                        let claim = with_bit(g.adjacency_row(j), t, 0);
                        let mut s = UserStreams::new(trial, j);
                        let row = naive_respond(&claim, j, &assignment, rho, &mut s.rr);
                        q.row_mut(j).copy_from_slice(&row);
                        poisoned_inputs.push((j, claim));
                    }
                }
            }
        }
        _ => {}
    }
    PoisonedBundle {
        bundle,
        assignment: Some(assignment),
        poisoned_inputs,
        target_claim: None,
    }
}

struct BitPoisoning {
    poisoned_inputs: Vec<(usize, Vec<u8>)>,
    target_claim: Option<Vec<u8>>,
}

// Rewrites the malicious rows of a full bit matrix for the check-style
// protocols (check, hybrid, nonprivate).
fn poison_full_rows(
    spec: &AttackSpec,
    g: &Graph,
    rho: f64,
    trial: &RandomSource,
    q: &mut ReportMatrix,
    audit: &mut Vec<String>,
) -> BitPoisoning {
    let n = g.n();
    let mut poisoned_inputs = Vec::new();
    let mut target_claim = None;
    let Some(t) = spec.target() else {
        return BitPoisoning {
            poisoned_inputs,
            target_claim,
        };
    };
    // Malicious user j sets its bit about t, then either sends the row as is
    // (response) or randomizes its fabricated list (input).
    let mut set_bit_about_target = |j: usize, bit: u8, q: &mut ReportMatrix| match spec.mode() {
        Mode::Response => q.set(j, t, bit),
        Mode::Input => {
            let claim = with_bit(g.adjacency_row(j), t, bit);
            let mut s = UserStreams::new(trial, j);
            q.set_row(j, &full_respond(&claim, j, rho, &mut s.rr))
                .expect("row length");
            poisoned_inputs.push((j, claim));
        }
    };
    match spec.kind() {
        AttackKind::Deflation => {
            for &j in spec.malicious() {
                set_bit_about_target(j, 0, q);
            }
        }
        AttackKind::Inflation => {
            for j in spec.accomplices().collect::<Vec<_>>() {
                set_bit_about_target(j, 1, q);
            }
            let row = g.adjacency_row(t);
            let (h1, h0): (Vec<usize>, Vec<usize>) = spec
                .honest()
                .filter(|&j| j != t)
                .partition(|&j| row[j] == 1);
            let mut attacker = attacker_stream(trial);
            let f0 = sample_fraction(&mut attacker, &h0, spec.b() * rho, "H0", audit);
            let mut claim = vec![0u8; n];
            for j in spec.accomplices().chain(h1.iter().copied()).chain(f0.iter().copied()) {
                claim[j] = 1;
            }
            match spec.mode() {
                Mode::Response => {
                    let f1 = sample_fraction(&mut attacker, &h1, spec.b() * (1.0 - rho), "H1", audit);
                    let mut sent = vec![0u8; n];
                    for j in spec.accomplices().chain(f0).chain(f1) {
                        sent[j] = 1;
                    }
                    q.set_row(t, &sent).expect("row length");
                }
                Mode::Input => {
                    let mut s = UserStreams::new(trial, t);
                    q.set_row(t, &full_respond(&claim, t, rho, &mut s.rr))
                        .expect("row length");
                    poisoned_inputs.push((t, claim.clone()));
                }
            }
            target_claim = Some(claim);
        }
        AttackKind::None | AttackKind::Thm6(_) => {}
    }
    BitPoisoning {
        poisoned_inputs,
        target_claim,
    }
}

/// Uniform sample without replacement of `floor(fraction * |pool|)` members,
/// capped at `|pool|`. Returned in ascending order.
fn sample_fraction(
    rng: &mut RandomSource,
    pool: &[usize],
    fraction: f64,
    name: &str,
    audit: &mut Vec<String>,
) -> Vec<usize> {
    let wanted = (fraction * pool.len() as f64).floor() as usize;
    let size = if wanted > pool.len() {
        audit.push(format!(
            "sample from {name} capped: wanted {wanted}, only {} available",
            pool.len()
        ));
        pool.len()
    } else {
        wanted
    };
    let mut picked: Vec<usize> = sample(rng, pool.len(), size)
        .into_iter()
        .map(|k| pool[k])
        .collect();
    picked.sort_unstable();
    picked
}

/// Attacks on the check protocol (also used for the non-private protocol
/// with `rho = 0`).
///
/// Inflation: accomplices report 1 for the target. The target claims its
/// honest neighbours `H1`, all accomplices, and a `b * rho` fraction of its
/// honest non-neighbours `H0`; in response mode it instead sends 1 for a
/// `b * rho` fraction of `H0`, a `b * (1 - rho)` fraction of `H1` and the
/// accomplices. Deflation: every malicious user reports 0 for the target.
pub fn poisoned_responses_check(
    spec: &AttackSpec,
    g: &Graph,
    rho: f64,
    trial: &RandomSource,
) -> PoisonedBundle {
    let mut bundle = honest_check_bundle(g, rho, trial);
    let mut audit = Vec::new();
    let p = poison_full_rows(spec, g, rho, trial, bundle.bits.as_mut().expect("bits"), &mut audit);
    bundle.audit = audit;
    PoisonedBundle {
        bundle,
        assignment: None,
        poisoned_inputs: p.poisoned_inputs,
        target_claim: p.target_claim,
    }
}

/// Attacks on the hybrid protocol. Bit rows follow the check-protocol
/// strategies at `rho(c eps)`. Every malicious user reports an honest
/// Laplace degree except an inflating target, which reports
/// `|claim| + b * tau`, plus its own Laplace noise in input mode.
pub fn poisoned_responses_hybrid(
    spec: &AttackSpec,
    g: &Graph,
    params: &PrivacyParams,
    tau: f64,
    trial: &RandomSource,
) -> PoisonedBundle {
    let rho = params.rho_hybrid();
    let mut bundle = honest_hybrid_bundle(g, params, trial);
    let mut audit = Vec::new();
    let p = poison_full_rows(spec, g, rho, trial, bundle.bits.as_mut().expect("bits"), &mut audit);
    bundle.audit = audit;
    if let (AttackKind::Inflation, Some(t), Some(claim)) =
        (spec.kind(), spec.target(), p.target_claim.as_ref())
    {
        let claimed: f64 = claim.iter().map(|&b| b as f64).sum();
        let inflated = claimed + spec.b() * tau;
        let report = match spec.mode() {
            Mode::Response => inflated,
            Mode::Input => {
                let mut s = UserStreams::new(trial, t);
                inflated + laplace_noise(params.hybrid_lap_scale(), &mut s.lap)
            }
        };
        bundle.lap_degree.as_mut().expect("laplace")[t] = report;
    }
    PoisonedBundle {
        bundle,
        assignment: None,
        poisoned_inputs: p.poisoned_inputs,
        target_claim: p.target_claim,
    }
}

/// Attacks on the pure Laplace protocol. An inflating target claims degree
/// `n - 1` (randomized in input mode); nobody can touch another user's
/// report, so deflation leaves the bundle honest.
pub fn poisoned_responses_laplace(
    spec: &AttackSpec,
    g: &Graph,
    params: &PrivacyParams,
    trial: &RandomSource,
) -> PoisonedBundle {
    let mut bundle = honest_laplace_bundle(g, params, trial);
    let mut poisoned_inputs = Vec::new();
    if let (AttackKind::Inflation, Some(t)) = (spec.kind(), spec.target()) {
        let n = g.n();
        let claim: Vec<u8> = (0..n).map(|j| (j != t) as u8).collect();
        let full = (n - 1) as f64;
        let report = match spec.mode() {
            Mode::Response => full,
            Mode::Input => {
                let mut s = UserStreams::new(trial, t);
                poisoned_inputs.push((t, claim.clone()));
                full + laplace_noise(params.lap_scale(), &mut s.lap)
            }
        };
        bundle.lap_degree.as_mut().expect("laplace")[t] = report;
        return PoisonedBundle {
            bundle,
            assignment: None,
            poisoned_inputs,
            target_claim: Some(claim),
        };
    }
    PoisonedBundle::plain(bundle)
}

/// The constructions showing the non-private protocol's bounds are tight.
///
/// * correctness: every malicious user is adjacent to the honest target and
///   reports 0 for it, deflating it by `m`;
/// * soundness: the malicious target is adjacent to all `m - 1` accomplices,
///   which report 0 for it; the target reports 0 for them and for `m` random
///   honest neighbours, hiding `2m - 1` edges with only `m` inconsistencies.
pub fn thm6_attacks(
    which: Thm6,
    g: &Graph,
    spec: &AttackSpec,
    rng: &mut RandomSource,
) -> Result<ResponseBundle, AttackError> {
    let mut q = ReportMatrix::truthful(g);
    let Some(t) = spec.target() else {
        return Ok(ResponseBundle::from_bits(q));
    };
    if spec.kind() != AttackKind::Thm6(which) {
        return Err(AttackError::Infeasible(format!(
            "spec kind {} does not match the {which:?} construction",
            kind_label(spec.kind())
        )));
    }
    match which {
        Thm6::Correctness => {
            if let Some(&j) = spec.malicious().iter().find(|&&j| !g.has_edge(j, t)) {
                return Err(AttackError::Infeasible(format!(
                    "malicious user {j} is not adjacent to target {t}"
                )));
            }
            for &j in spec.malicious() {
                q.set(j, t, 0);
            }
        }
        Thm6::Soundness => {
            let m = spec.m();
            if let Some(j) = spec.accomplices().find(|&j| !g.has_edge(j, t)) {
                return Err(AttackError::Infeasible(format!(
                    "accomplice {j} is not adjacent to target {t}"
                )));
            }
            let honest_nbrs: Vec<usize> =
                g.neighbors(t).filter(|&j| !spec.is_malicious(j)).collect();
            if honest_nbrs.len() < m {
                return Err(AttackError::Infeasible(format!(
                    "target {t} has {} honest neighbours, needs {m}",
                    honest_nbrs.len()
                )));
            }
            for j in spec.accomplices() {
                q.set(j, t, 0);
                q.set(t, j, 0);
            }
            for k in sample(rng, honest_nbrs.len(), m) {
                q.set(t, honest_nbrs[k], 0);
            }
        }
    }
    Ok(ResponseBundle::from_bits(q))
}
