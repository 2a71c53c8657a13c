//! Deterministic random streams.
//!
//! Everything random in the crate goes through [`Xoshiro256StarStar`], seeded
//! from [`SplitMix64`]. Both generators, the bounded-integer reduction and the
//! sampling helpers are spelled out here rather than borrowed from a library,
//! so that task manifests can be reproduced bit-for-bit by any implementation
//! that follows the same recipe:
//!
//! * per-task seed: `mix(master_seed + (index + 1) * GOLDEN)`, i.e. output
//!   `index` of a SplitMix64 stream started at `master_seed`;
//! * stream state: four consecutive SplitMix64 outputs seeded with that value;
//! * `below(n)`: Lemire's multiply-shift with rejection;
//! * `sample(k, n)`: partial Fisher–Yates over `0..n`;
//! * `next_f64`: top 53 bits scaled by 2⁻⁵³.

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix(self.state)
    }
}

/// Seed of the stream owned by task `index`; equals the `index`-th output of
/// `SplitMix64::new(master_seed)` without stepping through the earlier ones.
pub fn derive_seed(master_seed: u64, index: u64) -> u64 {
    mix(master_seed.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN)))
}

#[derive(Clone, Debug)]
pub struct Xoshiro256StarStar {
    s: [u64; 4],
}

impl Xoshiro256StarStar {
    pub fn from_state(s: [u64; 4]) -> Self {
        Self { s }
    }

    pub fn seed_from_u64(seed: u64) -> Self {
        let mut sm = SplitMix64::new(seed);
        let s = [sm.next_u64(), sm.next_u64(), sm.next_u64(), sm.next_u64()];
        Self { s }
    }

    /// Stream for task `index` under `master_seed`.
    pub fn for_task(master_seed: u64, index: u64) -> Self {
        Self::seed_from_u64(derive_seed(master_seed, index))
    }

    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = self.s[1] << 17;

        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];

        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);

        result
    }

    /// Uniform integer in `0..n`. Panics if `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let mut m = u128::from(self.next_u64()) * u128::from(n);
        if (m as u64) < n {
            let threshold = n.wrapping_neg() % n;
            while (m as u64) < threshold {
                m = u128::from(self.next_u64()) * u128::from(n);
            }
        }
        (m >> 64) as usize
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Standard normal via Box–Muller (cosine branch only; one normal per two uniforms).
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// `k` distinct indices from `0..n` in draw order. Panics if `k > n`.
    pub fn sample(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "cannot draw {k} of {n}");
        let mut pool: Vec<usize> = (0..n).collect();
        self.partial_shuffle(&mut pool, k);
        pool.truncate(k);
        pool
    }

    /// Draws `k` items from `items` without replacement, in draw order.
    pub fn choose_multiple<T: Clone>(&mut self, items: &[T], k: usize) -> Vec<T> {
        assert!(k <= items.len(), "cannot draw {k} of {}", items.len());
        let mut pool = items.to_vec();
        self.partial_shuffle(&mut pool, k);
        pool.truncate(k);
        pool
    }

    fn partial_shuffle<T>(&mut self, pool: &mut [T], k: usize) {
        let n = pool.len();
        for i in 0..k {
            let j = i + self.below(n - i);
            pool.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_reference_vector() {
        let mut sm = SplitMix64::new(1_234_567);
        let got: Vec<u64> = (0..5).map(|_| sm.next_u64()).collect();
        assert_eq!(
            got,
            [
                6457827717110365317,
                3203168211198807973,
                9817491932198370423,
                4593380528125082431,
                16408922859458223821
            ]
        );
    }

    #[test]
    fn xoshiro_reference_vector() {
        let mut rng = Xoshiro256StarStar::from_state([1, 2, 3, 4]);
        let got: Vec<u64> = (0..6).map(|_| rng.next_u64()).collect();
        assert_eq!(
            got,
            [
                11520,
                0,
                1509978240,
                1215971899390074240,
                1216172134540287360,
                607988272756665600
            ]
        );
    }

    #[test]
    fn derive_seed_matches_stream() {
        let mut sm = SplitMix64::new(42);
        for i in 0..10 {
            assert_eq!(derive_seed(42, i), sm.next_u64());
        }
    }

    #[test]
    fn below_stays_in_range_and_covers() {
        let mut rng = Xoshiro256StarStar::seed_from_u64(7);
        let mut seen = [0usize; 7];
        for _ in 0..7000 {
            seen[rng.below(7)] += 1;
        }
        assert!(seen.iter().all(|&c| c > 800), "{seen:?}");
    }

    #[test]
    fn sample_is_distinct() {
        let mut rng = Xoshiro256StarStar::seed_from_u64(3);
        let mut s = rng.sample(50, 50);
        s.sort_unstable();
        assert_eq!(s, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn normal_moments() {
        let mut rng = Xoshiro256StarStar::seed_from_u64(11);
        let xs: Vec<f64> = (0..20000).map(|_| rng.normal()).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!(mean.abs() < 0.03);
        assert!((var - 1.0).abs() < 0.05);
    }
}
