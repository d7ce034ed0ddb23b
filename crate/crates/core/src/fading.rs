//! First-order Gauss-Markov channel evolution and seeded random streams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{CVector, C64};
use crate::stats::ChannelStatistics;

/// Deterministic random stream keyed by `(seed, stream_id, lane)`.
///
/// The generator is ChaCha8 keyed by the seed and lane, with the run index as
/// the ChaCha stream, so streams for different runs can be created
/// independently on any thread.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    lane: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self::with_lane(seed, stream_id, 0)
    }

    /// Independent sub-stream for a named purpose within the same run.
    pub fn with_lane(seed: u64, stream_id: u64, lane: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&lane.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            lane,
            rng,
        }
    }

    /// Fresh stream on another lane of the same `(seed, stream_id)`.
    pub fn lane(&self, lane: u64) -> Self {
        Self::with_lane(self.seed, self.stream_id, lane)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn lane_id(&self) -> u64 {
        self.lane
    }

    /// Standard real Gaussian.
    pub fn gaussian(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Circularly symmetric complex Gaussian with unit variance.
    pub fn complex_gaussian(&mut self) -> C64 {
        let re = self.gaussian();
        let im = self.gaussian();
        C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    }

    pub fn complex_gaussian_vec(&mut self, n: usize) -> CVector {
        CVector::from_fn(n, |_, _| self.complex_gaussian())
    }

    /// Uniform draw on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random()
    }

    /// Uniform random bit.
    pub fn bit(&mut self) -> u8 {
        self.rng.random::<bool>() as u8
    }
}

/// Channel realisation `h = vec(H)` together with its temporal coefficient.
#[derive(Clone, Debug)]
pub struct FadingState<'a> {
    pub h: CVector,
    pub a: f64,
    pub stats: &'a ChannelStatistics,
}

/// Draws `h ~ CN(0, R_h)`.
pub fn init_channel<'a>(stats: &'a ChannelStatistics, a: f64, rng: &mut RngStream) -> FadingState<'a> {
    let z = rng.complex_gaussian_vec(stats.dim());
    FadingState {
        h: stats.colour(&z),
        a,
        stats,
    }
}

/// One Gauss-Markov step `h' = a h + √(1-a²) b`, `b ~ CN(0, R_h)`.
pub fn step_symbol<'a>(state: FadingState<'a>, rng: &mut RngStream) -> FadingState<'a> {
    let z = rng.complex_gaussian_vec(state.stats.dim());
    let b = state.stats.colour(&z);
    let a = state.a;
    let innovation = (1.0 - a * a).max(0.0).sqrt();
    FadingState {
        h: state.h.scale(a) + b.scale(innovation),
        a,
        stats: state.stats,
    }
}

/// Slot-to-slot step of the block-fading model. The recursion is the same as
/// [`step_symbol`]; the caller applies it once per slot and holds `h` fixed
/// within the slot.
pub fn step_block<'a>(state: FadingState<'a>, rng: &mut RngStream) -> FadingState<'a> {
    step_symbol(state, rng)
}
