//! Seeded Monte-Carlo experiment runner.
//!
//! Randomness forms a fixed tree: the master seed forks a graph stream and a
//! trials stream, each trial forks per-user streams plus selection and
//! attacker streams. Results therefore do not depend on how trials are
//! scheduled across threads.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::attacks::{
    poisoned_responses_check, poisoned_responses_hybrid, poisoned_responses_laplace,
    poisoned_responses_naive, thm6_attacks, AttackError, AttackKind, AttackName, AttackSpec, Thm6,
};
use crate::bounds::{bound_for, bound_nonprivate, BoundReport};
use crate::graph::{degree_percentile, degrees, generate_er, load_edge_list, Graph, GraphError};
use crate::protocols::{
    check_aggregate, default_assignment, hybrid_aggregate, laplace_aggregate, naive_aggregate,
    nonprivate_aggregate, tau_threshold, CheckedProtocol, DegreeEstimates, Mode, Protocol,
    ProtocolError,
};
use crate::randomizers::{ParamError, PrivacyParams, RandomSource};

const GRAPH_STREAM: u64 = 0;
const TRIALS_STREAM: u64 = 1;
// user streams take labels 0..n and the attacker u64::MAX
const SELECT_STREAM: u64 = u64::MAX - 1;

/// Trial count used when none is given.
pub const DEFAULT_TRIALS: usize = 50;
pub const DEFAULT_DELTA: f64 = 1e-6;
pub const DEFAULT_C: f64 = 0.9;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("trial {trial}: {source}")]
    Attack { trial: usize, source: AttackError },
    #[error("trial {trial}: {source}")]
    Protocol { trial: usize, source: ProtocolError },
    #[error("soundness rate is undefined without malicious users")]
    NoMaliciousUsers,
    #[error("writing results: {0}")]
    Write(String),
}

#[derive(Debug, Clone)]
pub enum GraphSource {
    /// Erdős–Rényi graph drawn once per experiment from the master seed.
    Er { n: usize, p: f64 },
    /// Edge list file.
    File(PathBuf),
    /// A graph built by the caller; `label` fills the `p_or_file` column.
    Fixed { graph: Graph, label: String },
}

impl GraphSource {
    fn label(&self) -> String {
        match self {
            GraphSource::Er { p, .. } => fmt_float(*p),
            GraphSource::File(path) => path.display().to_string(),
            GraphSource::Fixed { label, .. } => label.clone(),
        }
    }

    /// Materializes the graph. ER graphs use the master seed's graph stream.
    pub fn build(&self, seed: u64) -> Result<Graph, HarnessError> {
        match self {
            GraphSource::Er { n, p } => {
                let mut rng = RandomSource::new(seed).fork(GRAPH_STREAM);
                Ok(generate_er(*n, *p, &mut rng)?)
            }
            GraphSource::File(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Read {
                    path: path.clone(),
                    source,
                })?;
                Ok(load_edge_list(&text)?.graph)
            }
            GraphSource::Fixed { graph, .. } => Ok(graph.clone()),
        }
    }
}

/// How the attacked user is chosen. Inflation targets are always uniform
/// within the malicious set; the rule applies to honest targets and to the
/// non-private tightness constructions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TargetRule {
    #[default]
    Uniform,
    MaxDegreeHonest,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub graph: GraphSource,
    pub protocol: Protocol,
    pub attack: AttackName,
    /// Poisoning class; also selects the aggregator's threshold.
    pub mode: Mode,
    pub b: f64,
    /// `None` only for the non-private protocol. `+inf` runs noiselessly.
    pub eps: Option<f64>,
    pub delta: f64,
    pub c: f64,
    /// Number of malicious users, and the aggregator's bound on it.
    pub m: usize,
    pub target_rule: TargetRule,
    pub trials: usize,
    pub seed: u64,
}

impl ExperimentConfig {
    /// A config with the usual defaults: no attack, response mode, `b = 1`,
    /// `delta = 1e-6`, `c = 0.9`, 50 trials.
    pub fn new(graph: GraphSource, protocol: Protocol, eps: Option<f64>, seed: u64) -> Self {
        Self {
            graph,
            protocol,
            attack: AttackName::None,
            mode: Mode::Response,
            b: 1.0,
            eps,
            delta: DEFAULT_DELTA,
            c: DEFAULT_C,
            m: 0,
            target_rule: TargetRule::Uniform,
            trials: DEFAULT_TRIALS,
            seed,
        }
    }

    /// Checks every constraint that does not need the graph.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if !(self.c > 0.0 && self.c < 1.0) {
            return bad(format!("c must lie in (0, 1), got {}", self.c));
        }
        if !(self.b.is_finite() && self.b >= 0.0) {
            return bad(format!("b must be finite and non-negative, got {}", self.b));
        }
        match (self.protocol, self.eps) {
            (Protocol::Nonprivate, _) => {}
            (p, None) => return bad(format!("protocol {p} needs eps")),
            (_, Some(e)) if e.is_nan() || e <= 0.0 => {
                return bad(format!("eps must be positive, got {e}"))
            }
            _ => {}
        }
        if matches!(self.attack.kind(), AttackKind::Thm6(_)) && self.protocol != Protocol::Nonprivate
        {
            return bad(format!(
                "attack {} only applies to the nonprivate protocol",
                self.attack
            ));
        }
        if let Some(mode) = self.attack.mode() {
            if mode != self.mode {
                return bad(format!(
                    "attack {} implies mode {mode}, got {}",
                    self.attack, self.mode
                ));
            }
        }
        if let GraphSource::Er { n, p } = self.graph {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("p must lie in [0, 1], got {p}"));
            }
            self.check_m(n)?;
        }
        Ok(())
    }

    fn check_m(&self, n: usize) -> Result<(), HarnessError> {
        if self.m > n {
            return Err(HarnessError::Config(format!(
                "m = {} exceeds n = {n}",
                self.m
            )));
        }
        Ok(())
    }

    fn params(&self) -> Result<Option<PrivacyParams>, HarnessError> {
        match self.eps {
            Some(e) => Ok(Some(PrivacyParams::new(e, self.delta, self.c)?)),
            None => Ok(None),
        }
    }

    fn tau(&self, params: Option<&PrivacyParams>, n: usize) -> Option<f64> {
        let params = params?;
        match self.protocol {
            Protocol::Check => Some(tau_threshold(
                self.mode,
                CheckedProtocol::Check,
                n,
                self.m,
                params.rho(),
                self.delta,
            )),
            Protocol::Hybrid => Some(tau_threshold(
                self.mode,
                CheckedProtocol::Hybrid,
                n,
                self.m,
                params.rho_hybrid(),
                self.delta,
            )),
            _ => None,
        }
    }

    /// Theoretical bounds for this configuration on `n` users; `None` when
    /// they are undefined (e.g. the noiseless `eps = +inf`).
    pub fn bound_report(&self, n: usize) -> Option<BoundReport> {
        match (self.protocol, self.eps) {
            (Protocol::Nonprivate, _) => Some(bound_nonprivate(n, self.m)),
            (p, Some(e)) => bound_for(p, self.mode, n, self.m, e, self.delta, self.c).ok(),
            _ => None,
        }
    }
}

/// Draws the malicious set and the target.
///
/// * none: nobody;
/// * inflation: uniform `M` of size `m >= 1`, target uniform in `M`;
/// * deflation: uniform `M`, target an honest user picked by `rule`;
/// * non-private correctness construction: an honest target with at least
///   `m` neighbours (by `rule`), `M` uniform among its neighbours;
/// * non-private soundness construction: a target with at least `2m - 1`
///   neighbours, accomplices uniform among them.
pub fn select_malicious(
    g: &Graph,
    m: usize,
    kind: AttackKind,
    rule: TargetRule,
    rng: &mut RandomSource,
) -> Result<(Vec<usize>, Option<usize>), AttackError> {
    let n = g.n();
    if m > n {
        return Err(AttackError::Infeasible(format!("m = {m} exceeds n = {n}")));
    }
    let uniform_set = |rng: &mut RandomSource, pool: &[usize], k: usize| {
        let mut s: Vec<usize> = sample(rng, pool.len(), k).into_iter().map(|i| pool[i]).collect();
        s.sort_unstable();
        s
    };
    let pick = |rng: &mut RandomSource, pool: &[usize]| -> Option<usize> {
        match rule {
            _ if pool.is_empty() => None,
            TargetRule::Uniform => Some(pool[rng.gen_range(0..pool.len())]),
            TargetRule::MaxDegreeHonest => pool.iter().copied().max_by_key(|&i| (g.degree(i), std::cmp::Reverse(i))),
        }
    };
    let everyone: Vec<usize> = (0..n).collect();
    match kind {
        AttackKind::None => Ok((Vec::new(), None)),
        AttackKind::Inflation => {
            if m == 0 {
                return Err(AttackError::Infeasible("inflation needs m >= 1".into()));
            }
            let mal = uniform_set(rng, &everyone, m);
            let t = mal[rng.gen_range(0..m)];
            Ok((mal, Some(t)))
        }
        AttackKind::Deflation => {
            if m == 0 {
                return Err(AttackError::Infeasible("deflation needs m >= 1".into()));
            }
            let mal = uniform_set(rng, &everyone, m);
            let honest: Vec<usize> = (0..n).filter(|i| mal.binary_search(i).is_err()).collect();
            let t = pick(rng, &honest)
                .ok_or_else(|| AttackError::Infeasible("deflation needs an honest user".into()))?;
            Ok((mal, Some(t)))
        }
        AttackKind::Thm6(_) if m == 0 => Ok((Vec::new(), None)),
        AttackKind::Thm6(which) => {
            let need = match which {
                Thm6::Correctness => m,
                Thm6::Soundness => 2 * m - 1,
            };
            let candidates: Vec<usize> = (0..n).filter(|&i| g.degree(i) >= need).collect();
            let t = pick(rng, &candidates).ok_or_else(|| {
                AttackError::Infeasible(format!("no user has the {need} neighbours required"))
            })?;
            let nbrs: Vec<usize> = g.neighbors(t).collect();
            let mut mal = match which {
                Thm6::Correctness => uniform_set(rng, &nbrs, m),
                Thm6::Soundness => uniform_set(rng, &nbrs, m - 1),
            };
            if which == Thm6::Soundness {
                mal.push(t);
                mal.sort_unstable();
            }
            Ok((mal, Some(t)))
        }
    }
}

/// Per-trial outcome, one CSV row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRow {
    pub trial: usize,
    pub protocol: Protocol,
    pub attack: AttackName,
    pub mode: Mode,
    pub n: usize,
    pub p_or_file: String,
    pub eps: Option<f64>,
    pub delta: f64,
    pub c: f64,
    pub m: usize,
    pub b: f64,
    pub tau: Option<f64>,
    #[serde(flatten)]
    pub metrics: TrialMetrics,
    pub bound_alpha1: Option<f64>,
    pub bound_alpha2: Option<f64>,
    pub seed: u64,
}

/// Empirical errors of one trial. Maxima range over non-⊥ users only and are
/// `None` when there is no such user.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialMetrics {
    pub honest_max_err: Option<f64>,
    pub honest_bottom: usize,
    pub malicious_max_err: Option<f64>,
    pub malicious_bottom: usize,
    pub target_err: Option<f64>,
    pub target_bottom: Option<bool>,
    pub d95: usize,
    pub d95_minus_d80: usize,
}

impl TrialMetrics {
    pub fn compute(
        estimates: &DegreeEstimates,
        degrees: &[usize],
        malicious: &[bool],
        target: Option<usize>,
        d95: usize,
        d80: usize,
    ) -> Self {
        let err = |i: usize| estimates[i].map(|e| (e - degrees[i] as f64).abs());
        let mut out = Self {
            honest_max_err: None,
            honest_bottom: 0,
            malicious_max_err: None,
            malicious_bottom: 0,
            target_err: target.and_then(err),
            target_bottom: target.map(|t| estimates.is_bottom(t)),
            d95,
            d95_minus_d80: d95 - d80,
        };
        for i in 0..degrees.len() {
            let (max, bottoms) = if malicious[i] {
                (&mut out.malicious_max_err, &mut out.malicious_bottom)
            } else {
                (&mut out.honest_max_err, &mut out.honest_bottom)
            };
            match err(i) {
                Some(e) => *max = Some(max.map_or(e, |cur: f64| cur.max(e))),
                None => *bottoms += 1,
            }
        }
        out
    }
}

/// Everything a trial produced, including per-user outcomes.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub row: TrialRow,
    pub estimates: DegreeEstimates,
    pub malicious: Vec<usize>,
    pub target: Option<usize>,
}

/// Runs one trial on `g`; deterministic in `(config.seed, trial)`.
pub fn run_trial(config: &ExperimentConfig, g: &Graph, trial: usize) -> Result<TrialRecord, HarnessError> {
    let n = g.n();
    config.check_m(n)?;
    let params = config.params()?;
    let tau = config.tau(params.as_ref(), n);
    let stream = RandomSource::new(config.seed).fork(TRIALS_STREAM).fork(trial as u64);
    let attack_err = |source| HarnessError::Attack { trial, source };
    let proto_err = |source| HarnessError::Protocol { trial, source };

    let kind = config.attack.kind();
    let (malicious, target) = select_malicious(
        g,
        config.m,
        kind,
        config.target_rule,
        &mut stream.fork(SELECT_STREAM),
    )
    .map_err(attack_err)?;
    let spec = AttackSpec::new(n, malicious.iter().copied(), kind, config.mode, target, config.b)
        .map_err(attack_err)?;

    let estimates = match (config.protocol, params) {
        (Protocol::Nonprivate, _) => {
            let bundle = match kind {
                AttackKind::Thm6(which) => {
                    thm6_attacks(which, g, &spec, &mut stream.fork(u64::MAX)).map_err(attack_err)?
                }
                _ => poisoned_responses_check(&spec, g, 0.0, &stream).bundle,
            };
            nonprivate_aggregate(&bundle, config.m).map_err(proto_err)?.0
        }
        (Protocol::Naive, Some(p)) => {
            let assignment = default_assignment(n).map_err(proto_err)?;
            let pb = poisoned_responses_naive(&spec, g, &assignment, p.rho(), &stream);
            let assignment = pb.assignment.as_ref().unwrap_or(&assignment);
            naive_aggregate(&pb.bundle, assignment, p.rho()).map_err(proto_err)?
        }
        (Protocol::Check, Some(p)) => {
            let pb = poisoned_responses_check(&spec, g, p.rho(), &stream);
            check_aggregate(&pb.bundle, p.rho(), tau.expect("tau")).map_err(proto_err)?.0
        }
        (Protocol::Hybrid, Some(p)) => {
            let tau = tau.expect("tau");
            let pb = poisoned_responses_hybrid(&spec, g, &p, tau, &stream);
            hybrid_aggregate(&pb.bundle, &p, tau, config.m).map_err(proto_err)?.0
        }
        (Protocol::Laplace, Some(p)) => {
            let pb = poisoned_responses_laplace(&spec, g, &p, &stream);
            laplace_aggregate(&pb.bundle).map_err(proto_err)?
        }
        (p, None) => return Err(HarnessError::Config(format!("protocol {p} needs eps"))),
    };

    let degs = degrees(g);
    let d95 = degree_percentile(&degs, 95.0)?;
    let d80 = degree_percentile(&degs, 80.0)?;
    let mut is_mal = vec![false; n];
    for &j in &malicious {
        is_mal[j] = true;
    }
    let metrics = TrialMetrics::compute(&estimates, &degs, &is_mal, target, d95, d80);
    let bound = config.bound_report(n);
    let row = TrialRow {
        trial,
        protocol: config.protocol,
        attack: config.attack,
        mode: config.mode,
        n,
        p_or_file: config.graph.label(),
        eps: config.eps,
        delta: config.delta,
        c: config.c,
        m: config.m,
        b: config.b,
        tau,
        metrics,
        bound_alpha1: bound.as_ref().map(|b| b.alpha1),
        bound_alpha2: bound.as_ref().map(|b| b.alpha2),
        seed: config.seed,
    };
    Ok(TrialRecord {
        row,
        estimates,
        malicious,
        target,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stat {
    /// Trials in which the metric was defined.
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single trial.
    pub sd: f64,
    pub se: f64,
    pub min: f64,
    pub max: f64,
}

impl Stat {
    /// Order-independent: values are sorted before summation.
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let k = v.len() as f64;
        let mean = (v.iter().sum::<f64>() / k).clamp(v[0], v[v.len() - 1]);
        let sd = if v.len() > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self {
            count: v.len(),
            mean,
            sd,
            se: sd / k.sqrt(),
            min: v[0],
            max: v[v.len() - 1],
        })
    }
}

/// Per-metric statistics over trials; metrics undefined in every trial are
/// omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct Summary {
    pub trials: usize,
    pub metrics: BTreeMap<String, Stat>,
    /// The bound columns come from a report whose precondition fails.
    pub bound_inapplicable: bool,
}

impl Summary {
    pub fn from_rows(rows: &[TrialRow]) -> Self {
        type Getter = fn(&TrialMetrics) -> Option<f64>;
        let columns: [(&str, Getter); 8] = [
            ("honest_max_err", |m| m.honest_max_err),
            ("honest_bottom", |m| Some(m.honest_bottom as f64)),
            ("malicious_max_err", |m| m.malicious_max_err),
            ("malicious_bottom", |m| Some(m.malicious_bottom as f64)),
            ("target_err", |m| m.target_err),
            ("target_bottom", |m| m.target_bottom.map(|b| b as u8 as f64)),
            ("d95", |m| Some(m.d95 as f64)),
            ("d95_minus_d80", |m| Some(m.d95_minus_d80 as f64)),
        ];
        let metrics = columns
            .iter()
            .filter_map(|(name, get)| {
                let values: Vec<f64> = rows.iter().filter_map(|r| get(&r.metrics)).collect();
                Stat::from_values(&values).map(|s| (name.to_string(), s))
            })
            .collect();
        Self {
            trials: rows.len(),
            metrics,
            bound_inapplicable: false,
        }
    }

    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.metrics.get(metric).map(|s| s.mean)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub records: Vec<TrialRecord>,
    pub summary: Summary,
    pub degrees: Vec<usize>,
}

impl ExperimentResult {
    pub fn rows(&self) -> Vec<TrialRow> {
        self.records.iter().map(|r| r.row.clone()).collect()
    }
}

/// Builds the graph and runs every trial, in parallel across trials.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    config.validate()?;
    let g = config.graph.build(config.seed)?;
    config.check_m(g.n())?;
    let records = (0..config.trials)
        .into_par_iter()
        .map(|t| run_trial(config, &g, t))
        .collect::<Result<Vec<_>, _>>()?;
    let rows: Vec<TrialRow> = records.iter().map(|r| r.row.clone()).collect();
    let mut summary = Summary::from_rows(&rows);
    summary.bound_inapplicable = config
        .bound_report(g.n())
        .is_some_and(|b| b.inapplicable);
    Ok(ExperimentResult {
        summary,
        records,
        degrees: degrees(&g),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Guarantee {
    Correctness,
    Soundness,
}

/// Empirical failure probability, maximized over users.
///
/// Correctness counts, per user, the trials in which it was honest and got ⊥
/// or an error of at least `alpha`. Soundness counts the trials in which it
/// was malicious, evaded ⊥ and was off by at least `alpha`.
pub fn failure_rates(
    result: &ExperimentResult,
    alpha: f64,
    which: Guarantee,
) -> Result<f64, HarnessError> {
    let n = result.degrees.len();
    let mut events = vec![0usize; n];
    let mut exposures = vec![0usize; n];
    for rec in &result.records {
        let mut is_mal = vec![false; n];
        for &j in &rec.malicious {
            is_mal[j] = true;
        }
        for i in 0..n {
            let counted = match which {
                Guarantee::Correctness => !is_mal[i],
                Guarantee::Soundness => is_mal[i],
            };
            if !counted {
                continue;
            }
            exposures[i] += 1;
            let err = rec.estimates[i].map(|e| (e - result.degrees[i] as f64).abs());
            let failed = match (which, err) {
                (Guarantee::Correctness, None) => true,
                (Guarantee::Correctness, Some(e)) => e >= alpha,
                (Guarantee::Soundness, None) => false,
                (Guarantee::Soundness, Some(e)) => e >= alpha,
            };
            events[i] += failed as usize;
        }
    }
    if which == Guarantee::Soundness && exposures.iter().all(|&k| k == 0) {
        return Err(HarnessError::NoMaliciousUsers);
    }
    Ok((0..n)
        .filter(|&i| exposures[i] > 0)
        .map(|i| events[i] as f64 / exposures[i] as f64)
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

pub const CSV_COLUMNS: [&str; 23] = [
    "trial",
    "protocol",
    "attack",
    "mode",
    "n",
    "p_or_file",
    "eps",
    "delta",
    "c",
    "m",
    "b",
    "tau",
    "honest_max_err",
    "honest_bottom",
    "malicious_max_err",
    "malicious_bottom",
    "target_err",
    "target_bottom",
    "d95",
    "d95_minus_d80",
    "bound_alpha1",
    "bound_alpha2",
    "seed",
];

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

fn opt_float(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

fn csv_record(r: &TrialRow) -> [String; 23] {
    let m = &r.metrics;
    [
        r.trial.to_string(),
        r.protocol.to_string(),
        r.attack.to_string(),
        r.mode.to_string(),
        r.n.to_string(),
        r.p_or_file.clone(),
        opt_float(r.eps),
        fmt_float(r.delta),
        fmt_float(r.c),
        r.m.to_string(),
        fmt_float(r.b),
        opt_float(r.tau),
        opt_float(m.honest_max_err),
        m.honest_bottom.to_string(),
        opt_float(m.malicious_max_err),
        m.malicious_bottom.to_string(),
        opt_float(m.target_err),
        m.target_bottom.map(|b| (b as u8).to_string()).unwrap_or_default(),
        m.d95.to_string(),
        m.d95_minus_d80.to_string(),
        opt_float(r.bound_alpha1),
        opt_float(r.bound_alpha2),
        r.seed.to_string(),
    ]
}

#[derive(Serialize)]
struct JsonResults<'a> {
    rows: &'a [TrialRow],
    summary: &'a Summary,
}

/// Serializes rows (CSV) or rows plus summary (JSON).
pub fn write_results<W: Write>(
    rows: &[TrialRow],
    summary: &Summary,
    format: OutputFormat,
    out: W,
) -> Result<(), HarnessError> {
    let werr = |e: &dyn std::fmt::Display| HarnessError::Write(e.to_string());
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(CSV_COLUMNS).map_err(|e| werr(&e))?;
            for r in rows {
                w.write_record(csv_record(r)).map_err(|e| werr(&e))?;
            }
            w.flush().map_err(|e| werr(&e))
        }
        OutputFormat::Json => {
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, &JsonResults { rows, summary })
                .map_err(|e| werr(&e))?;
            writeln!(out).map_err(|e| werr(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn er_config(n: usize, p: f64, protocol: Protocol, eps: Option<f64>) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(GraphSource::Er { n, p }, protocol, eps, 11);
        c.trials = 3;
        c
    }

    #[test]
    fn select_none_and_saturation() {
        let g = Graph::empty(10).unwrap();
        let mut rng = RandomSource::new(1);
        assert_eq!(
            select_malicious(&g, 0, AttackKind::None, TargetRule::Uniform, &mut rng).unwrap(),
            (vec![], None)
        );
        let (m, t) =
            select_malicious(&g, 10, AttackKind::Inflation, TargetRule::Uniform, &mut rng).unwrap();
        assert_eq!(m, (0..10).collect::<Vec<_>>());
        assert!(m.contains(&t.unwrap()));
        assert!(select_malicious(&g, 0, AttackKind::Inflation, TargetRule::Uniform, &mut rng).is_err());
        assert!(select_malicious(&g, 10, AttackKind::Deflation, TargetRule::Uniform, &mut rng).is_err());
    }

    #[test]
    fn select_is_deterministic() {
        let g = generate_er(50, 0.2, &mut RandomSource::new(2)).unwrap();
        let a = select_malicious(&g, 7, AttackKind::Deflation, TargetRule::Uniform, &mut RandomSource::new(5));
        let b = select_malicious(&g, 7, AttackKind::Deflation, TargetRule::Uniform, &mut RandomSource::new(5));
        assert_eq!(a.unwrap(), b.unwrap());
    }

    #[test]
    fn select_max_degree_honest() {
        let g = Graph::from_edges(6, [(0, 1), (0, 2), (0, 3), (4, 5)]).unwrap();
        for seed in 0..20 {
            let (m, t) = select_malicious(&g, 1, AttackKind::Deflation, TargetRule::MaxDegreeHonest, &mut RandomSource::new(seed)).unwrap();
            let t = t.unwrap();
            assert!(!m.contains(&t));
            let best = (0..6).filter(|i| !m.contains(i)).map(|i| g.degree(i)).max().unwrap();
            assert_eq!(g.degree(t), best);
        }
    }

    #[test]
    fn thm6_selection_shapes() {
        let g = generate_er(40, 0.3, &mut RandomSource::new(3)).unwrap();
        let mut rng = RandomSource::new(4);
        let (m, t) = select_malicious(&g, 3, AttackKind::Thm6(Thm6::Correctness), TargetRule::Uniform, &mut rng).unwrap();
        let t = t.unwrap();
        assert!(!m.contains(&t) && m.iter().all(|&j| g.has_edge(j, t)));
        let (m, t) = select_malicious(&g, 3, AttackKind::Thm6(Thm6::Soundness), TargetRule::Uniform, &mut rng).unwrap();
        let t = t.unwrap();
        assert!(m.contains(&t) && m.len() == 3);
        assert!(m.iter().filter(|&&j| j != t).all(|&j| g.has_edge(j, t)));
    }

    #[test]
    fn noiseless_check_all_exact() {
        let mut c = er_config(60, 0.3, Protocol::Check, Some(f64::INFINITY));
        c.delta = 0.05;
        let r = run_experiment(&c).unwrap();
        for rec in &r.records {
            assert_eq!(rec.row.metrics.honest_max_err, Some(0.0));
            assert_eq!(rec.row.metrics.honest_bottom, 0);
            assert_eq!(rec.row.metrics.malicious_max_err, None);
        }
    }

    #[test]
    fn config_validation() {
        let mut c = er_config(10, 0.3, Protocol::Check, Some(1.0));
        c.attack = AttackName::Thm6Soundness;
        assert!(c.validate().is_err());
        let mut c = er_config(10, 0.3, Protocol::Check, Some(1.0));
        c.attack = AttackName::InflateInput;
        assert!(c.validate().is_err(), "mode mismatch");
        c.mode = Mode::Input;
        c.m = 11;
        assert!(c.validate().is_err());
        c.m = 2;
        assert!(c.validate().is_ok());
        c.trials = 0;
        assert!(c.validate().is_err());
        assert!(er_config(10, 0.3, Protocol::Laplace, None).validate().is_err());
        assert!(er_config(10, 0.3, Protocol::Nonprivate, None).validate().is_ok());
        assert!(er_config(10, 1.5, Protocol::Nonprivate, None).validate().is_err());
    }

    #[test]
    fn metrics_scan() {
        let est = DegreeEstimates(vec![Some(3.0), None, Some(0.5), Some(7.0), None]);
        let degs = [1, 2, 2, 2, 0];
        let mal = [false, false, false, true, true];
        let m = TrialMetrics::compute(&est, &degs, &mal, Some(3), 2, 1);
        assert_eq!(m.honest_max_err, Some(2.0));
        assert_eq!(m.honest_bottom, 1);
        assert_eq!(m.malicious_max_err, Some(5.0));
        assert_eq!(m.malicious_bottom, 1);
        assert_eq!((m.target_err, m.target_bottom), (Some(5.0), Some(false)));
        assert_eq!(m.d95_minus_d80, 1);
    }

    #[test]
    fn summary_single_trial_and_permutation() {
        let mut c = er_config(40, 0.3, Protocol::Laplace, Some(1.0));
        c.trials = 1;
        let r = run_experiment(&c).unwrap();
        let s = &r.summary;
        assert_eq!(s.mean("honest_max_err"), r.records[0].row.metrics.honest_max_err);
        assert_eq!(s.metrics["honest_max_err"].sd, 0.0);

        c.trials = 9;
        let mut rows = run_experiment(&c).unwrap().rows();
        let before = Summary::from_rows(&rows);
        rows.reverse();
        rows.swap(1, 5);
        assert_eq!(Summary::from_rows(&rows), before);
    }

    #[test]
    fn failure_rate_edges() {
        let mut c = er_config(30, 0.3, Protocol::Nonprivate, None);
        c.trials = 2;
        let r = run_experiment(&c).unwrap();
        assert_eq!(failure_rates(&r, 1.0, Guarantee::Correctness).unwrap(), 0.0);
        assert!(matches!(
            failure_rates(&r, 1.0, Guarantee::Soundness),
            Err(HarnessError::NoMaliciousUsers)
        ));
        let mut all_bottom = r.clone();
        for rec in &mut all_bottom.records {
            rec.estimates = DegreeEstimates(vec![None; 30]);
            rec.malicious = vec![0, 1];
        }
        assert_eq!(failure_rates(&all_bottom, 1e9, Guarantee::Correctness).unwrap(), 1.0);
        assert_eq!(failure_rates(&all_bottom, 0.0, Guarantee::Soundness).unwrap(), 0.0);
    }

    #[test]
    fn csv_shape() {
        let mut buf = Vec::new();
        write_results(&[], &Summary::default(), OutputFormat::Csv, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), CSV_COLUMNS.join(",") + "\n");

        let mut c = er_config(20, 0.3, Protocol::Check, Some(1.0));
        c.trials = 1;
        c.delta = 0.05;
        let r = run_experiment(&c).unwrap();
        let mut buf = Vec::new();
        write_results(&r.rows(), &r.summary, OutputFormat::Csv, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1].split(',').count(), 23);
        assert!(lines[1].starts_with("0,check,none,response,20,2.9999999999999999e-1,1.0000000000000000e0,"));
    }

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 123456.789, f64::MIN_POSITIVE] {
            assert_eq!(fmt_float(x).parse::<f64>().unwrap(), x);
        }
    }
}
