//! Counter-addressed Brownian increments.
//!
//! Every increment is a pure function of `(seed, component, mode, time index)`:
//! the ChaCha key comes from the seed, the stream from `(tag, component,
//! mode)` and the word position from the time index, so any window of any
//! path is reproducible without storing the path.

use core::f64::consts::PI;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Stream tag separating Wiener increments from stationary initial draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Tag {
    Increment = 1,
    Init = 2,
    Sample = 3,
}

/// 32-bit words consumed per Gaussian draw (two `u64`).
const WORDS_PER_DRAW: u128 = 4;

/// A fixed noise realisation `ω`, seen through a time offset and a stride.
///
/// `increment(j, i, n)` is the Brownian increment over the step
/// `[n·dt, (n+1)·dt)` of the shifted path. A path with `stride > 1` sums
/// consecutive increments of the underlying base path, which gives a coarser
/// time step driven by the same Brownian motions.
#[derive(Debug, Clone)]
pub struct NoisePath {
    seed: u64,
    base_dt: f64,
    offset: i64,
    stride: u32,
    rng: ChaCha8Rng,
}

impl PartialEq for NoisePath {
    fn eq(&self, other: &Self) -> bool {
        self.seed == other.seed
            && self.base_dt == other.base_dt
            && self.offset == other.offset
            && self.stride == other.stride
    }
}

impl NoisePath {
    pub fn new(seed: u64, dt: f64) -> Self {
        Self {
            seed,
            base_dt: dt,
            offset: 0,
            stride: 1,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Time step of this view of the path.
    pub fn dt(&self) -> f64 {
        self.base_dt * self.stride as f64
    }

    pub fn stride(&self) -> u32 {
        self.stride
    }

    /// The same Brownian motions sampled on a step `factor` times larger.
    pub fn coarsened(&self, factor: u32) -> Self {
        let mut out = self.clone();
        out.stride *= factor.max(1);
        out
    }

    /// `ϑ_s ω` for a shift of `s` steps of this path.
    pub fn shift(&self, s: i64) -> Self {
        let mut out = self.clone();
        out.offset += s * self.stride as i64;
        out
    }

    /// Base-path index of step `n` of this view.
    pub(crate) fn absolute(&self, n: i64) -> i64 {
        self.offset + n * self.stride as i64
    }

    /// Brownian increment `B_{j,i}((n+1)dt) − B_{j,i}(n dt)`, distributed
    /// `N(0, dt)`.
    pub fn increment(&self, component: usize, mode: usize, n: i64) -> f64 {
        let start = self.absolute(n);
        let mut sum = 0.0;
        for r in 0..self.stride as i64 {
            sum += self.standard_normal(Tag::Increment, component, mode, start + r);
        }
        sum * self.base_dt.sqrt()
    }

    /// Standard normal keyed by `(tag, component, mode, index)`.
    pub(crate) fn standard_normal(&self, tag: Tag, component: usize, mode: usize, index: i64) -> f64 {
        let stream = ((tag as u64) << 56) | ((component as u64 & 0xff) << 48) | (mode as u64 & 0xffff_ffff_ffff);
        let mut rng = self.rng.clone();
        rng.set_stream(stream);
        rng.set_word_pos(index as u64 as u128 * WORDS_PER_DRAW);
        let a = rng.next_u64();
        let b = rng.next_u64();
        // Box–Muller on exactly two words keeps draws at disjoint counters.
        let u1 = ((a >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = (b >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    }
}
