//! Portable seeded PRNG shared by dataset splitting, output sampling and the
//! C test harness prelude.
//!
//! The generator is xorshift64* (Marsaglia shifts 12/25/27, output multiplier
//! `0x2545F4914F6CDD1D`). Seeds pass through one SplitMix64 finalizer so that
//! nearby seeds give unrelated streams; a zero state is replaced with
//! `0x9E3779B97F4A7C15`. The exact same arithmetic is emitted in C by
//! [`C_PRELUDE`], so a harness seeded with `s` sees the numbers that
//! `XorShift64Star::new(s)` produces here.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const OUTPUT_MUL: u64 = 0x2545_F491_4F6C_DD1D;

fn splitmix64(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct XorShift64Star {
    state: u64,
}

impl XorShift64Star {
    pub fn new(seed: u64) -> Self {
        let state = match splitmix64(seed) {
            0 => GOLDEN,
            s => s,
        };
        Self { state }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(OUTPUT_MUL)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[0, bound)` by rejection; `bound` must be nonzero.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "next_below called with zero bound");
        let zone = u64::MAX - (u64::MAX % bound);
        loop {
            let x = self.next_u64();
            if x < zone {
                return x % bound;
            }
        }
    }

    /// In-place Fisher-Yates shuffle (high index first).
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    /// `m` distinct indices from `0..n`, ascending. `m` is clamped to `n`.
    pub fn sample_distinct(&mut self, n: usize, m: usize) -> Vec<usize> {
        let m = m.min(n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..m {
            let j = i + self.next_below((n - i) as u64) as usize;
            pool.swap(i, j);
        }
        let mut picked = pool[..m].to_vec();
        picked.sort_unstable();
        picked
    }
}

/// C definitions mirroring [`XorShift64Star`], plus output helpers used by
/// test harnesses. Prepended to every harness translation unit.
pub const C_PRELUDE: &str = r#"#include <stdint.h>
#include <stdio.h>
#include <stdlib.h>
#include <math.h>

static uint64_t hls_rng_state = 0x9E3779B97F4A7C15ULL;

static void hls_rng_seed(uint64_t seed) {
    uint64_t z = seed + 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    z = z ^ (z >> 31);
    hls_rng_state = z ? z : 0x9E3779B97F4A7C15ULL;
}

static uint64_t hls_rng_u64(void) {
    uint64_t x = hls_rng_state;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    hls_rng_state = x;
    return x * 0x2545F4914F6CDD1DULL;
}

static double hls_rng_f64(void) {
    return (double)(hls_rng_u64() >> 11) * (1.0 / 9007199254740992.0);
}

static int64_t hls_rng_int(int64_t lo, int64_t hi) {
    uint64_t span = (uint64_t)(hi - lo) + 1;
    return lo + (int64_t)(hls_rng_u64() % span);
}

static void hls_print_f64(double v) { printf("%.17g\n", v); }
static void hls_print_i64(long long v) { printf("%lld\n", v); }
"#;
