//! Deterministic random streams and block-parallel Monte Carlo.
//!
//! Every Monte Carlo loop is cut into fixed-size blocks. Block `b` of job
//! `key` draws from its own ChaCha stream, so results do not depend on the
//! number of worker threads or on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Trials per block.
pub const BLOCK: u64 = 4096;

/// Two-sided 99% normal quantile used for Monte Carlo half-widths.
pub const Z99: f64 = 2.575_829_303_548_900_4;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream for `(seed, key, block)`.
pub fn substream(seed: u64, key: u64, block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(key)));
    rng.set_stream(block);
    rng
}

/// Seed for sweep point `index` of a run seeded with `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0x5eed)))
}

/// Runs `trials` trials split into blocks; `f(rng, count)` handles one block.
/// Outputs come back in block order.
pub fn par_blocks<T, F>(seed: u64, key: u64, trials: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, u64) -> T + Sync,
{
    let blocks = trials.div_ceil(BLOCK);
    (0..blocks)
        .into_par_iter()
        .map(|b| {
            let count = BLOCK.min(trials - b * BLOCK);
            f(&mut substream(seed, key, b), count)
        })
        .collect()
}

/// Running sum of a bounded or unbounded per-trial statistic.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MeanAcc {
    pub count: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl MeanAcc {
    pub fn push(&mut self, v: f64) {
        self.count += 1;
        self.sum += v;
        self.sum_sq += v * v;
    }

    pub fn merge(mut self, other: MeanAcc) -> MeanAcc {
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }

    /// 99% normal-approximation half-width of the mean.
    pub fn half_width(&self) -> f64 {
        if self.count < 2 {
            return f64::INFINITY;
        }
        let n = self.count as f64;
        let m = self.mean();
        let var = ((self.sum_sq - n * m * m) / (n - 1.0)).max(0.0);
        Z99 * (var / n).sqrt()
    }
}

/// Estimate with a 99% half-width.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub half_width: f64,
    pub trials: u64,
}

impl From<MeanAcc> for McEstimate {
    fn from(a: MeanAcc) -> Self {
        Self {
            mean: a.mean(),
            half_width: a.half_width(),
            trials: a.count,
        }
    }
}

/// Sums per-block accumulators in block order.
pub fn reduce(parts: Vec<MeanAcc>) -> McEstimate {
    parts
        .into_iter()
        .fold(MeanAcc::default(), MeanAcc::merge)
        .into()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn run() -> McEstimate {
        reduce(par_blocks(7, 3, 10_000, |rng, c| {
            let mut a = MeanAcc::default();
            for _ in 0..c {
                a.push(rng.random::<f64>());
            }
            a
        }))
    }

    #[test]
    fn independent_of_thread_count() {
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(run);
        let four = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(run);
        assert_eq!(one, four);
        assert_eq!(one.trials, 10_000);
        assert!((one.mean - 0.5).abs() < one.half_width);
    }

    #[test]
    fn streams_differ() {
        let a: u64 = substream(1, 0, 0).random();
        let b: u64 = substream(1, 0, 1).random();
        let c: u64 = substream(1, 1, 0).random();
        assert!(a != b && a != c && b != c);
    }
}
