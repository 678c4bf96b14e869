//! Time sampling from the symmetric Beta-type density
//! `ϱ(z) = z^{-α}(1-z)^{-α} / B(1-α, 1-α)` and hierarchical random streams.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Sampler for `ξ ~ ϱ` on `(0, 1)` with `α ∈ [1/2, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeSampler {
    alpha: f64,
    beta_norm: f64,
}

impl TimeSampler {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.5..1.0).contains(&alpha) {
            return Err(Error::DomainError {
                value: alpha,
                domain: "alpha in [1/2, 1)",
            });
        }
        let a = 1.0 - alpha;
        let beta_norm = (2.0 * ln_gamma(a) - ln_gamma(2.0 * a)).exp();
        Ok(Self { alpha, beta_norm })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `B(1-α, 1-α)`.
    pub fn beta_norm(&self) -> f64 {
        self.beta_norm
    }

    /// Shape parameter `1 - α` of the underlying symmetric Beta law.
    pub fn shape(&self) -> f64 {
        1.0 - self.alpha
    }

    pub fn density(&self, z: f64) -> Result<f64> {
        if !(z > 0.0 && z < 1.0) {
            return Err(Error::DomainError {
                value: z,
                domain: "(0, 1)",
            });
        }
        Ok(self.density_unchecked(z))
    }

    pub(crate) fn density_unchecked(&self, z: f64) -> f64 {
        // z^{-α}(1-z)^{-α} = (z(1-z))^{-α}; the product form keeps symmetry exact.
        (z * (1.0 - z)).powf(-self.alpha) / self.beta_norm
    }

    /// `∫₀^y ϱ(z) dz`.
    ///
    /// The substitution `z = u^{1/(1-α)}` removes the endpoint singularity,
    /// after which 64-point Gauss–Legendre is accurate to ~1e-13.
    pub fn cdf(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        if y >= 1.0 {
            return 1.0;
        }
        if y > 0.5 {
            return 1.0 - self.cdf(1.0 - y);
        }
        let a = self.shape();
        // ∫₀^y z^{-α}(1-z)^{-α} dz = (1/a) ∫₀^{y^a} (1 - u^{1/a})^{-α} du
        let upper = y.powf(a);
        let integral =
            gauss_legendre_64(0.0, upper, |u| (1.0 - u.powf(1.0 / a)).powf(-self.alpha)) / a;
        integral / self.beta_norm
    }

    /// Draws `ξ ~ ϱ` strictly inside `(0, 1)`.
    ///
    /// Jöhnk's algorithm in log space; valid for any shape below one. A draw
    /// is rejected when `min(ξ, 1 - ξ)` is too small for `1 - ξ` to be
    /// distinguished from one, on either side, so the law stays symmetric.
    pub fn sample_xi<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let inv_a = 1.0 / self.shape();
        loop {
            // 1 - U lies in (0, 1], so the logarithm is finite.
            let lu = (1.0 - rng.random::<f64>()).ln() * inv_a;
            let lv = (1.0 - rng.random::<f64>()).ln() * inv_a;
            let hi = lu.max(lv);
            let log_sum = hi + ((lu - hi).exp() + (lv - hi).exp()).ln();
            if log_sum > 0.0 {
                continue;
            }
            let gap = lv - lu;
            let small = 1.0 / (1.0 + gap.abs().exp());
            if small > 0.0 && 1.0 - small < 1.0 {
                return if gap > 0.0 { small } else { 1.0 - small };
            }
        }
    }

    /// `t + (T - t)·ξ`, strictly inside `(t, T)`.
    pub fn sample_time<R: Rng + ?Sized>(&self, t: f64, horizon: f64, rng: &mut R) -> Result<f64> {
        Ok(self.sample_time_with_xi(t, horizon, rng)?.0)
    }

    /// Like [`sample_time`](Self::sample_time) but also returns the `ξ` it used.
    pub fn sample_time_with_xi<R: Rng + ?Sized>(
        &self,
        t: f64,
        horizon: f64,
        rng: &mut R,
    ) -> Result<(f64, f64)> {
        if !(t < horizon) {
            return Err(Error::DegenerateInterval {
                start: t,
                end: horizon,
            });
        }
        loop {
            let xi = self.sample_xi(rng);
            let r = t + (horizon - t) * xi;
            if r > t && r < horizon {
                return Ok((r, xi));
            }
        }
    }

    /// `1 / ϱ((R - t)/(T - t))`.
    pub fn importance_weight(&self, r: f64, t: f64, horizon: f64) -> Result<f64> {
        if !(t < horizon) {
            return Err(Error::DegenerateInterval {
                start: t,
                end: horizon,
            });
        }
        if !(r > t && r < horizon) {
            return Err(Error::DomainError {
                value: r,
                domain: "(t, T)",
            });
        }
        Ok(1.0 / self.density((r - t) / (horizon - t))?)
    }

    pub(crate) fn weight_at(&self, xi: f64) -> f64 {
        1.0 / self.density_unchecked(xi)
    }
}

impl Default for TimeSampler {
    fn default() -> Self {
        Self::new(0.5).expect("alpha = 1/2 is admissible")
    }
}

fn gauss_legendre_64(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    let (nodes, weights) = RULE.get_or_init(|| gauss_legendre_rule(64));
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    nodes
        .iter()
        .zip(weights)
        .map(|(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` via Newton on `P_n`.
pub fn gauss_legendre_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            // p1 = P_n(x), p0 = P_{n-1}(x)
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Which of the two independent recursive copies a child stream feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

const TAG_CHILD: u64 = 0x01;
const TAG_SAMPLE: u64 = 0x02;
const TAG_RUN: u64 = 0x03;

/// Namespaces keep estimator, oracle and auxiliary randomness disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Namespace {
    Estimator,
    Oracle,
    Auxiliary,
}

impl Namespace {
    fn word(self) -> u64 {
        match self {
            Namespace::Estimator => 0x6573_7469_6d61_746f,
            Namespace::Oracle => 0x6f72_6163_6c65_0000,
            Namespace::Auxiliary => 0x6175_7869_6c69_6172,
        }
    }
}

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Key of an independent random stream, identified by a 64-bit experiment
/// seed and a path of `(level, replicate, sign)` steps from the root.
///
/// The path is folded into a 128-bit digest, so deriving a child is O(1).
/// The digest seeds a ChaCha8 generator, whose output depends only on the
/// key, not on scheduling or call order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    seed: u64,
    lanes: [u64; 2],
    depth: u32,
}

impl StreamKey {
    pub fn root(seed: u64) -> Self {
        Self::in_namespace(seed, Namespace::Estimator)
    }

    pub fn in_namespace(seed: u64, namespace: Namespace) -> Self {
        let mut key = Self {
            seed,
            lanes: [0x243f_6a88_85a3_08d3, 0x1319_8a2e_0370_7344],
            depth: 0,
        };
        key.absorb(seed);
        key.absorb(namespace.word());
        key.depth = 0;
        key
    }

    fn absorb(&mut self, word: u64) {
        self.lanes[0] = mix64(self.lanes[0] ^ word);
        self.lanes[1] = mix64(
            self.lanes[1].wrapping_add(self.lanes[0]).rotate_left(23) ^ 0x9e37_79b9_7f4a_7c15,
        );
        self.depth += 1;
    }

    fn derive(&self, tag: u64, level: i64, replicate: i64, sign: Sign) -> Self {
        let mut k = *self;
        k.absorb(tag);
        k.absorb(level as u64);
        k.absorb(replicate as u64);
        k.absorb(match sign {
            Sign::Plus => 0,
            Sign::Minus => 1,
        });
        k
    }

    /// Key of the recursive copy `U^{(θ, ±l, i)}`.
    pub fn child(&self, level: i64, replicate: u64, sign: Sign) -> Self {
        self.derive(TAG_CHILD, level, replicate as i64, sign)
    }

    /// Key of the sample `(ξ, X, V)^{(θ, l, i)}`; terminal samples use negative `i`.
    pub fn sample(&self, level: i64, replicate: i64) -> Self {
        self.derive(TAG_SAMPLE, level, replicate, Sign::Plus)
    }

    /// Key of the `index`-th independent top-level run.
    pub fn run(&self, index: u64) -> Self {
        self.derive(TAG_RUN, 0, index as i64, Sign::Plus)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// 128-bit identifier of the stream.
    pub fn id(&self) -> u128 {
        ((self.lanes[0] as u128) << 64) | self.lanes[1] as u128
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        seed[..8].copy_from_slice(&self.seed.to_le_bytes());
        seed[8..16].copy_from_slice(&self.lanes[0].to_le_bytes());
        seed[16..24].copy_from_slice(&self.lanes[1].to_le_bytes());
        seed[24..28].copy_from_slice(&self.depth.to_le_bytes());
        ChaCha8Rng::from_seed(seed)
    }
}
