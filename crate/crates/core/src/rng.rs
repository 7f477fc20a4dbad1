//! The randomness contract of the simulator.
//!
//! Every run is driven by a single 64-bit seed. For step `t`, all random
//! choices (edge draw, the two endpoint values, any layer draws) come from a
//! dedicated SplitMix64 stream derived from `(seed, t)`, consumed in a fixed
//! documented order. This makes traces reproducible across platforms and
//! independent of how many draws earlier steps consumed.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// SplitMix64 (Steele, Lea, Flood 2014). Small, fast, and trivially
/// portable; the whole randomness contract of the artifact is expressible in
/// a dozen lines of any language.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    /// Stream for step `t` of a run with the given seed.
    pub fn for_step(seed: u64, t: u64) -> Self {
        SplitMix64 {
            state: mix64(seed ^ 0x6A09_E667_F3BC_C909)
                .wrapping_add(mix64(t).wrapping_mul(GOLDEN_GAMMA)),
        }
    }

    /// Stream used to draw random *initial* configurations for a run,
    /// separate from the per-step schedule streams.
    pub fn for_init(seed: u64) -> Self {
        SplitMix64 {
            state: mix64(seed ^ 0xBB67_AE85_84CA_A73B),
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// 53-bit uniform in [0, 1).
    #[inline]
    pub fn next_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in 0..n via modulo reduction. The bias is below 2^-53 for the
    /// graph sizes this artifact targets and keeps the contract one line.
    #[inline]
    pub fn next_below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        self.next_u64() % n
    }
}

/// Maps a unit draw to a 1-based colour index: `floor(r * palette) + 1`.
#[inline]
pub fn draw_uniform_colour(r: f64, palette_size: usize) -> usize {
    debug_assert!(palette_size >= 1);
    let c = (r * palette_size as f64) as usize + 1;
    c.min(palette_size)
}

/// Maps a unit draw to a single bit: 0 on [0, 1/2), 1 on [1/2, 1).
#[inline]
pub fn draw_bit(r: f64) -> u8 {
    u8::from(r >= 0.5)
}

/// Chooses the interaction initiator from the two endpoint values. Ties
/// (probability ~2^-53) fall to the smaller node id.
#[inline]
pub fn draw_initiator(r_u: f64, r_v: f64, u: u32, v: u32) -> u32 {
    if r_u < r_v {
        u
    } else if r_v < r_u {
        v
    } else {
        u.min(v)
    }
}
