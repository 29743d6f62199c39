//! Local randomizers: bitwise randomized response and the Laplace mechanism,
//! together with the deterministic random source every simulation draws from.
//!
//! Budgets are per-randomizer edge-LDP budgets. A randomizer run with `eps`
//! on every user yields a `2 * eps` guarantee for an edge as a whole, since
//! both endpoints release information about it.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("privacy budget must be non-negative, got {0}")]
    NegativeEpsilon(f64),
    #[error("failure probability delta must lie in (0, 1), got {0}")]
    Delta(f64),
    #[error("budget split c must lie in (0, 1), got {0}")]
    Split(f64),
    #[error("Laplace scale must be positive, got {0}")]
    Scale(f64),
}

/// Flip probability of randomized response at budget `eps`: `1 / (1 + e^eps)`.
pub fn rho_from_eps(eps: f64) -> Result<f64, ParamError> {
    if eps.is_nan() || eps < 0.0 {
        return Err(ParamError::NegativeEpsilon(eps));
    }
    // exp overflows to +inf for large eps, which correctly yields 0.
    Ok(1.0 / (1.0 + eps.exp()))
}

/// Splits `eps` into the randomized-response share `c * eps` and the Laplace
/// share `(1 - c) * eps`.
pub fn split_budget(eps: f64, c: f64) -> Result<(f64, f64), ParamError> {
    if !(c > 0.0 && c < 1.0) {
        return Err(ParamError::Split(c));
    }
    let rr = c * eps;
    Ok((rr, eps - rr))
}

/// Privacy parameters shared by a protocol run.
///
/// `rho` is derived from `eps` at construction and cannot drift from it.
/// An infinite `eps` is the noiseless test mode: `rho == 0` and every Laplace
/// draw is zero. The CLI never constructs it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyParams {
    eps: f64,
    delta: f64,
    c: f64,
    rho: f64,
}

impl PrivacyParams {
    pub fn new(eps: f64, delta: f64, c: f64) -> Result<Self, ParamError> {
        let rho = rho_from_eps(eps)?;
        if !(delta > 0.0 && delta < 1.0) {
            return Err(ParamError::Delta(delta));
        }
        if !(c > 0.0 && c < 1.0) {
            return Err(ParamError::Split(c));
        }
        Ok(Self { eps, delta, c, rho })
    }

    /// Noiseless test mode (infinite budget).
    pub fn noiseless(delta: f64, c: f64) -> Result<Self, ParamError> {
        Self::new(f64::INFINITY, delta, c)
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// Flip probability when the whole budget goes to randomized response.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Randomized-response share `c * eps` of the hybrid split.
    pub fn eps_rr(&self) -> f64 {
        self.c * self.eps
    }

    /// Laplace share `(1 - c) * eps` of the hybrid split.
    pub fn eps_lap(&self) -> f64 {
        (1.0 - self.c) * self.eps
    }

    /// Flip probability of the hybrid protocol's bit reports, `rho(c * eps)`.
    pub fn rho_hybrid(&self) -> f64 {
        1.0 / (1.0 + self.eps_rr().exp())
    }

    /// Scale of the hybrid protocol's Laplace degree noise, `1 / ((1 - c) eps)`.
    pub fn hybrid_lap_scale(&self) -> f64 {
        1.0 / self.eps_lap()
    }

    /// Scale of the pure Laplace protocol's noise, `1 / eps`.
    pub fn lap_scale(&self) -> f64 {
        1.0 / self.eps
    }
}

/// Deterministic pseudo-random stream with labelled, reproducible substreams.
///
/// `fork(label)` depends only on the key this source was created with and on
/// `label`, never on how many values have already been drawn, so a fork tree
/// (master -> trial -> user) reproduces under any execution order.
#[derive(Debug, Clone)]
pub struct RandomSource {
    key: [u8; 32],
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        Self::from_key(ChaCha8Rng::seed_from_u64(seed).get_seed())
    }

    fn from_key(key: [u8; 32]) -> Self {
        Self {
            key,
            rng: ChaCha8Rng::from_seed(key),
        }
    }

    /// Independent substream named by `label`.
    pub fn fork(&self, label: u64) -> Self {
        // Distinct ChaCha streams of one key are independent; the child key is
        // the head of stream `label + 1` (stream 0 is this source's own output).
        let mut derive = ChaCha8Rng::from_seed(self.key);
        derive.set_stream(label.wrapping_add(1));
        let mut child = [0u8; 32];
        derive.fill_bytes(&mut child);
        Self::from_key(child)
    }

    /// Uniform draw in `[0, 1)` with 53 bits of resolution; consumes one `u64`.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in the open interval `(0, 1)`; consumes one `u64`.
    pub fn uniform_open(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for RandomSource {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}

/// Randomized response on one bit: flips `bit` with probability `rho`.
/// Always consumes exactly one draw.
#[inline]
pub fn rr_bit(bit: u8, rho: f64, rng: &mut RandomSource) -> u8 {
    if rng.uniform() < rho {
        1 - bit
    } else {
        bit
    }
}

/// Randomized response on every position of `bits` except those in `skip`.
///
/// Skipped positions come back as 0, consume no draw, and must never be read
/// downstream. Other positions consume one draw each, in index order.
pub fn rr_row(bits: &[u8], skip: &[usize], rho: f64, rng: &mut RandomSource) -> Vec<u8> {
    let mut out = Vec::with_capacity(bits.len());
    for (j, &b) in bits.iter().enumerate() {
        if skip.contains(&j) {
            out.push(0);
        } else {
            out.push(rr_bit(b, rho, rng));
        }
    }
    out
}

/// Inverse Laplace CDF at `u` in `(0, 1)` for scale `b`.
pub fn laplace_inverse_cdf(u: f64, scale: f64) -> f64 {
    let centered = u - 0.5;
    // -b * sgn(u - 1/2) * ln(1 - 2|u - 1/2|); written so u = 1/2 gives +0.
    let magnitude = -scale * (1.0 - 2.0 * centered.abs()).ln();
    if centered < 0.0 {
        -magnitude
    } else {
        magnitude
    }
}

/// One draw from `Lap(scale)` by inverse-CDF transform of one open uniform.
pub fn laplace_sample(scale: f64, rng: &mut RandomSource) -> Result<f64, ParamError> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(ParamError::Scale(scale));
    }
    Ok(laplace_inverse_cdf(rng.uniform_open(), scale))
}

/// Laplace noise that degrades to exactly zero at scale 0 (noiseless mode).
/// Consumes one draw either way so streams stay aligned.
pub(crate) fn laplace_noise(scale: f64, rng: &mut RandomSource) -> f64 {
    let u = rng.uniform_open();
    if scale == 0.0 {
        0.0
    } else {
        laplace_inverse_cdf(u, scale)
    }
}
