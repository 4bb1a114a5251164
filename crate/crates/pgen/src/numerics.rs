//! Minimal deterministic numeric kernel: dense matrices, activations,
//! softmax, categorical sampling, and a pinned pseudo-random generator.
//!
//! Every operation here fixes its summation order, so results are
//! bit-identical across runs on the same platform. No kernel emits
//! NaN or infinity for finite inputs.

use crate::error::{Error, Result};

/// Dense row-major matrix of 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor2 {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from row-major data. Rejects length mismatches and
    /// non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "Tensor2::from_vec",
                format!("{rows}x{cols} needs {} values, got {}", rows * cols, data.len()),
            ));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::shape(
                "Tensor2::from_vec",
                format!("non-finite value at index {bad}"),
            ));
        }
        Ok(Tensor2 { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// Row `r` as a slice.
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Standard matrix product with a fixed summation order
    /// (row-major, ascending inner index).
    pub fn matmul(&self, other: &Tensor2) -> Result<Tensor2> {
        if self.cols != other.rows {
            return Err(Error::shape(
                "matmul",
                format!(
                    "{}x{} cannot multiply {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            ));
        }
        let mut out = Tensor2::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                let brow = &other.data[k * other.cols..(k + 1) * other.cols];
                let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for j in 0..other.cols {
                    orow[j] += a * brow[j];
                }
            }
        }
        Ok(out)
    }

    /// Matrix-vector product `self * x`, ascending inner index.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.cols != x.len() {
            return Err(Error::shape(
                "matvec",
                format!("{}x{} cannot multiply vector of length {}", self.rows, self.cols, x.len()),
            ));
        }
        let mut out = vec![0.0; self.rows];
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            let mut acc = 0.0;
            for k in 0..self.cols {
                acc += row[k] * x[k];
            }
            out[i] = acc;
        }
        Ok(out)
    }
}

/// Logistic sigmoid, overflow-safe on both tails.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn tanh(x: f64) -> f64 {
    x.tanh()
}

pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Applies `f` to every entry in place; shared by the elementwise
/// activation helpers below.
fn map_slice(v: &mut [f64], f: impl Fn(f64) -> f64) {
    for x in v.iter_mut() {
        *x = f(*x);
    }
}

pub fn sigmoid_in_place(v: &mut [f64]) {
    map_slice(v, sigmoid);
}

pub fn tanh_in_place(v: &mut [f64]) {
    map_slice(v, tanh);
}

pub fn relu_in_place(v: &mut [f64]) {
    map_slice(v, relu);
}

/// Softmax with max-subtraction. The result is a probability simplex
/// point: nonnegative and summing to 1 within 1e-12.
///
/// Panics on an empty input; callers guarantee non-emptiness.
pub fn softmax(v: &[f64]) -> Vec<f64> {
    assert!(!v.is_empty(), "softmax of empty vector");
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = v.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for p in out.iter_mut() {
        *p /= sum;
    }
    out
}

/// Index of the largest entry; ties break toward the lowest index so
/// greedy decoding is identical across implementations.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, &x) in v.iter().enumerate() {
        if x > best_val {
            best = i;
            best_val = x;
        }
    }
    best
}

/// Draws an index with probability `p[i]` by inverse CDF over cumulative
/// sums in index order.
pub fn sample_categorical(p: &[f64], rng: &mut Rng) -> Result<usize> {
    if p.is_empty() {
        return Err(Error::InvalidDistribution {
            reason: "empty probability vector".into(),
        });
    }
    let mut sum = 0.0;
    for (i, &x) in p.iter().enumerate() {
        if x < 0.0 || !x.is_finite() {
            return Err(Error::InvalidDistribution {
                reason: format!("entry {i} is {x}"),
            });
        }
        sum += x;
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidDistribution {
            reason: format!("probabilities sum to {sum}, not 1"),
        });
    }
    let u = rng.uniform();
    let mut cum = 0.0;
    let mut last_nonzero = 0;
    for (i, &x) in p.iter().enumerate() {
        if x > 0.0 {
            last_nonzero = i;
        }
        cum += x;
        if u < cum {
            return Ok(i);
        }
    }
    // Rounding can leave the cumulative sum just below u; fall back to the
    // highest-index entry with positive mass.
    Ok(last_nonzero)
}

/// One step of the splitmix64 generator; advances `state` and returns the
/// output. Used for seed expansion and for deriving child seeds.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Derives an independent seed for a named sub-stream, so concurrent
/// consumers never share one generator.
pub fn child_seed(seed: u64, stream: u64) -> u64 {
    let mut s = seed.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E3779B97F4A7C15));
    splitmix64(&mut s)
}

/// xoshiro256** generator, seeded by expanding a 64-bit seed with
/// splitmix64. Same seed, same stream, on every platform.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    seed: u64,
    s: [u64; 4],
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        let s = [
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
        ];
        Rng { seed, s }
    }

    /// Restores a generator from checkpointed state.
    pub fn from_state(seed: u64, s: [u64; 4]) -> Self {
        Rng { seed, s }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn state(&self) -> [u64; 4] {
        self.s
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

    /// Uniform float in [0, 1) from the top 53 bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, n) via multiply-high; used for shuffling.
    pub fn uniform_range(&mut self, n: u64) -> u64 {
        assert!(n > 0, "uniform_range of empty range");
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_hand_case() {
        let a = Tensor2::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor2::from_vec(2, 1, vec![5.0, 6.0]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.data(), &[17.0, 39.0]);
    }

    #[test]
    fn matmul_identity() {
        let mut rng = Rng::new(1);
        let a = Tensor2::from_vec(4, 4, (0..16).map(|_| rng.uniform() - 0.5).collect()).unwrap();
        let mut id = Tensor2::zeros(4, 4);
        for i in 0..4 {
            id.set(i, i, 1.0);
        }
        let c = a.matmul(&id).unwrap();
        assert_eq!(c.data(), a.data());
    }

    #[test]
    fn matmul_matches_naive_oracle_exactly() {
        let mut rng = Rng::new(99);
        let a = Tensor2::from_vec(7, 5, (0..35).map(|_| rng.uniform() * 2.0 - 1.0).collect()).unwrap();
        let b = Tensor2::from_vec(5, 3, (0..15).map(|_| rng.uniform() * 2.0 - 1.0).collect()).unwrap();
        let c = a.matmul(&b).unwrap();
        // Naive triple loop with the same ascending-k order.
        for i in 0..7 {
            for j in 0..3 {
                let mut acc = 0.0;
                for k in 0..5 {
                    acc += a.get(i, k) * b.get(k, j);
                }
                assert_eq!(c.get(i, j), acc, "mismatch at ({i},{j})");
            }
        }
    }

    #[test]
    fn matmul_dimension_mismatch() {
        let a = Tensor2::zeros(2, 3);
        let b = Tensor2::zeros(2, 3);
        assert!(a.matmul(&b).is_err());
    }

    #[test]
    fn matvec_agrees_with_matmul() {
        let mut rng = Rng::new(7);
        let a = Tensor2::from_vec(4, 6, (0..24).map(|_| rng.uniform()).collect()).unwrap();
        let x: Vec<f64> = (0..6).map(|_| rng.uniform()).collect();
        let xm = Tensor2::from_vec(6, 1, x.clone()).unwrap();
        assert_eq!(a.matvec(&x).unwrap(), a.matmul(&xm).unwrap().data());
    }

    #[test]
    fn softmax_uniform() {
        let p = softmax(&[0.0, 0.0]);
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn softmax_simplex_and_shift_invariance() {
        let mut rng = Rng::new(3);
        for _ in 0..50 {
            let v: Vec<f64> = (0..9).map(|_| rng.uniform() * 20.0 - 10.0).collect();
            let p = softmax(&v);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&x| x >= 0.0));
            let c = rng.uniform() * 100.0 - 50.0;
            let shifted: Vec<f64> = v.iter().map(|&x| x + c).collect();
            let q = softmax(&shifted);
            for (a, b) in p.iter().zip(&q) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn softmax_large_logits_stay_finite() {
        let p = softmax(&[1000.0, 0.0]);
        assert!(p.iter().all(|x| x.is_finite()));
        assert!(p[0] >= 1.0 - 1e-12);
    }

    #[test]
    fn activation_reference_points() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(tanh(0.0), 0.0);
        assert_eq!(relu(-3.5), 0.0);
        assert_eq!(relu(2.25), 2.25);
        // Saturation: within 1e-15 of the limits, and finite.
        assert!((sigmoid(40.0) - 1.0).abs() < 1e-15);
        assert!(sigmoid(-40.0).abs() < 1e-15);
        assert!(sigmoid(-1e6).is_finite());
    }

    #[test]
    fn tanh_odd_symmetry() {
        let mut rng = Rng::new(11);
        for _ in 0..100 {
            let x = rng.uniform() * 8.0 - 4.0;
            assert_eq!(tanh(-x), -tanh(x));
        }
    }

    #[test]
    fn sampler_degenerate_distribution() {
        let mut rng = Rng::new(5);
        for _ in 0..20 {
            assert_eq!(sample_categorical(&[1.0, 0.0, 0.0], &mut rng).unwrap(), 0);
        }
    }

    #[test]
    fn sampler_rejects_bad_input() {
        let mut rng = Rng::new(5);
        assert!(sample_categorical(&[0.5, 0.4], &mut rng).is_err());
        assert!(sample_categorical(&[1.5, -0.5], &mut rng).is_err());
        assert!(sample_categorical(&[], &mut rng).is_err());
    }

    #[test]
    fn sampler_is_deterministic() {
        let p = [0.2, 0.3, 0.5];
        let mut a = Rng::new(123);
        let mut b = Rng::new(123);
        for _ in 0..100 {
            assert_eq!(
                sample_categorical(&p, &mut a).unwrap(),
                sample_categorical(&p, &mut b).unwrap()
            );
        }
    }

    #[test]
    fn sampler_monte_carlo_frequencies() {
        let p = [0.2, 0.3, 0.5];
        let mut rng = Rng::new(2024);
        let n = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[sample_categorical(&p, &mut rng).unwrap()] += 1;
        }
        for (i, &c) in counts.iter().enumerate() {
            let freq = c as f64 / n as f64;
            assert!(
                (freq - p[i]).abs() < 0.01,
                "index {i}: frequency {freq} vs probability {}",
                p[i]
            );
        }
    }

    // Known-answer values computed with an independent transcription of the
    // published splitmix64 + xoshiro256** reference code.
    #[test]
    fn rng_known_answer_seed_42() {
        let mut rng = Rng::new(42);
        let expected: [u64; 8] = [
            0x15780b2e0c2ec716,
            0x6104d9866d113a7e,
            0xae17533239e499a1,
            0xecb8ad4703b360a1,
            0xfde6dc7fe2ec5e64,
            0xc50da53101795238,
            0xb82154855a65ddb2,
            0xd99a2743ebe60087,
        ];
        for e in expected {
            assert_eq!(rng.next_u64(), e);
        }
        let mut rng = Rng::new(42);
        let uniforms = [
            0.08386297105988216,
            0.3789802506626686,
            0.6800434110281394,
            0.9246929453253876,
        ];
        for u in uniforms {
            assert_eq!(rng.uniform(), u);
        }
    }

    // Cross-check against a second, externally maintained implementation of
    // the same published algorithm (rand_xoshiro seeds via splitmix64 too).
    #[test]
    fn rng_matches_external_implementation() {
        use rand_core::{RngCore, SeedableRng};
        let mut ours = Rng::new(42);
        let mut theirs = rand_xoshiro::Xoshiro256StarStar::seed_from_u64(42);
        for _ in 0..1000 {
            assert_eq!(ours.next_u64(), theirs.next_u64());
        }
    }

    #[test]
    fn rng_same_seed_same_stream() {
        let mut a = Rng::new(777);
        let mut b = Rng::new(777);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn uniform_is_in_unit_interval() {
        let mut rng = Rng::new(9);
        for _ in 0..10_000 {
            let u = rng.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn state_round_trip_resumes_stream() {
        let mut rng = Rng::new(31);
        for _ in 0..17 {
            rng.next_u64();
        }
        let mut resumed = Rng::from_state(rng.seed(), rng.state());
        for _ in 0..100 {
            assert_eq!(rng.next_u64(), resumed.next_u64());
        }
    }

    #[test]
    fn child_seeds_differ_by_stream() {
        let a = child_seed(42, 0);
        let b = child_seed(42, 1);
        let c = child_seed(43, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, child_seed(42, 0));
    }
}
