//! Key material: physical-layer key probing, the semantic key stream, the
//! derived encryption keystream and brute-force search-space sizes.
//!
//! All hashing goes through [`KeyedHash`], a 64-bit multiply/xor/rotate
//! sponge. Absorbing is a bijection of the state for a fixed input word, so
//! distinct equal-length inputs always leave distinct states, and squeezing
//! runs the state through a murmur-style finalizer keyed by a block counter.
//! Its outputs are pinned by the golden vectors in `tests/data/`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::bits;
use crate::error::{param_err, Error, Result};
use crate::importance::ImportanceVector;
use crate::ofdm::ChannelRealization;

pub const DEFAULT_L_SKEY: u32 = 64;
pub const DEFAULT_L_PLK: usize = 128;
pub const DEFAULT_L_SCORES: u32 = 16;

const P1: u64 = 0x9e37_79b9_7f4a_7c15;
const P2: u64 = 0xc2b2_ae3d_27d4_eb4f;
const P3: u64 = 0x1656_67b1_9e37_79f9;

/// Domain keys separating the hash's uses.
pub const DOMAIN_SKEY: u64 = 0x534b_4559; // "SKEY"
pub const DOMAIN_WEIGHTS: u64 = 0x5747_4854; // "WGHT"
pub const DOMAIN_KEYSTREAM: u64 = 0x4b53_5452; // "KSTR"
pub const DOMAIN_SEEDS: u64 = 0x5345_4544; // "SEED"

fn fmix64(mut k: u64) -> u64 {
    k ^= k >> 33;
    k = k.wrapping_mul(0xff51_afd7_ed55_8ccd);
    k ^= k >> 33;
    k = k.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    k ^ (k >> 33)
}

/// Lightweight keyed hash with a counter-mode squeeze.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyedHash {
    state: u64,
}

impl KeyedHash {
    pub fn new(key: u64) -> Self {
        Self {
            state: fmix64(key ^ P3),
        }
    }

    pub fn absorb(&mut self, word: u64) -> &mut Self {
        let mut x = (self.state ^ word).wrapping_mul(P1);
        x = x.rotate_left(29).wrapping_mul(P2);
        self.state = x ^ (x >> 32);
        self
    }

    /// Output block number `counter`.
    pub fn squeeze(&self, counter: u64) -> u64 {
        fmix64(self.state ^ fmix64(counter.wrapping_add(P3)))
    }
}

/// The per-map hash: one 64-bit input under a domain tag.
pub fn lightweight_hash(input: u64, tag: u64) -> u64 {
    let mut h = KeyedHash::new(DOMAIN_SKEY);
    h.absorb(input).absorb(tag);
    h.squeeze(0)
}

fn absorb_bits(domain: u64, seed: &[u8]) -> KeyedHash {
    let mut h = KeyedHash::new(domain);
    h.absorb(seed.len() as u64);
    for word in bits::pack_words(seed) {
        h.absorb(word);
    }
    h
}

/// Counter-mode expansion of a bit string to `length` bits. Shorter
/// requests are prefixes of longer ones.
pub fn expand_bits(domain: u64, seed: &[u8], length: usize) -> Vec<u8> {
    let h = absorb_bits(domain, seed);
    let mut out = Vec::with_capacity(length.next_multiple_of(64));
    let mut counter = 0u64;
    while out.len() < length {
        bits::push_uint(&mut out, h.squeeze(counter), 64);
        counter += 1;
    }
    out.truncate(length);
    out
}

/// Independent 64-bit sub-seeds from a master seed, addressed by
/// `(index, purpose)`.
pub fn split_seed(master: u64, index: u64, purpose: u64) -> u64 {
    let mut h = KeyedHash::new(DOMAIN_SEEDS);
    h.absorb(master).absorb(index).absorb(purpose);
    h.squeeze(0)
}

/// Unsigned Q0.32 fixed-point fraction in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Q32(pub u32);

impl Q32 {
    /// Truncating conversion; values at or above one saturate to the largest fraction.
    pub fn from_fraction(x: f64) -> Self {
        if !(x > 0.0) {
            Q32(0)
        } else if x >= 1.0 {
            Q32(u32::MAX)
        } else {
            Q32((x * 4_294_967_296.0) as u32)
        }
    }

    pub fn to_f64(self) -> f64 {
        f64::from(self.0) / 4_294_967_296.0
    }

    /// Product modulo one.
    pub fn mul_mod1(self, other: Q32) -> Q32 {
        Q32(((u64::from(self.0) * u64::from(other.0)) >> 32) as u32)
    }
}

/// `n` weights of `bits_per_weight` bits each, expanded from `seed`.
pub fn weight_stream(seed: &[u8], n: usize, bits_per_weight: u32) -> Result<Vec<Q32>> {
    if seed.is_empty() {
        return Err(param_err!("weight seed must not be empty"));
    }
    if n == 0 {
        return Err(param_err!("weight count must be at least 1"));
    }
    if !(1..=32).contains(&bits_per_weight) {
        return Err(param_err!("bits per weight must be in 1..=32, got {bits_per_weight}"));
    }
    let h = absorb_bits(DOMAIN_WEIGHTS, seed);
    Ok((0..n as u64)
        .map(|i| {
            let code = h.squeeze(i) >> (64 - bits_per_weight);
            Q32((code << (32 - bits_per_weight)) as u32)
        })
        .collect())
}

/// `weight_i × score_i mod 1` for every map, in Q0.32.
pub fn generated_scores(iv: &ImportanceVector, weights: &[Q32]) -> Result<Vec<Q32>> {
    if weights.len() != iv.scores.len() {
        return Err(param_err!(
            "{} weights for {} scores",
            weights.len(),
            iv.scores.len()
        ));
    }
    Ok(weights
        .iter()
        .zip(&iv.scores)
        .map(|(w, &s)| w.mul_mod1(Q32::from_fraction(s)))
        .collect())
}

/// Per-map semantic keys, each `bits_per_key` bits wide.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemanticKeys {
    pub keys: Vec<u64>,
    pub bits_per_key: u32,
}

impl SemanticKeys {
    /// All keys concatenated, most significant bit first.
    pub fn concat_bits(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.keys.len() * self.bits_per_key as usize);
        for &k in &self.keys {
            bits::push_uint(&mut out, k, self.bits_per_key as usize);
        }
        out
    }

    /// Keys of the listed maps, in the listed order.
    pub fn subset(&self, indices: &[usize]) -> SemanticKeys {
        SemanticKeys {
            keys: indices.iter().map(|&i| self.keys[i]).collect(),
            bits_per_key: self.bits_per_key,
        }
    }
}

fn low_bits(value: u64, width: u32) -> u64 {
    if width >= 64 {
        value
    } else {
        value & ((1u64 << width) - 1)
    }
}

/// Semantic key of every map: the keyed hash of its generated score under
/// tag `i`, keeping the low `bits_per_key` bits.
pub fn skey_stream(iv: &ImportanceVector, weights: &[Q32], bits_per_key: u32) -> Result<SemanticKeys> {
    if !(1..=64).contains(&bits_per_key) {
        return Err(param_err!("semantic key length must be in 1..=64, got {bits_per_key}"));
    }
    let generated = generated_scores(iv, weights)?;
    Ok(SemanticKeys {
        keys: generated
            .iter()
            .enumerate()
            .map(|(i, g)| low_bits(lightweight_hash(u64::from(g.0), i as u64), bits_per_key))
            .collect(),
        bits_per_key,
    })
}

/// `a XOR b`, the shorter operand repeated to the longer one's length.
pub fn xor_cycled(a: &[u8], b: &[u8]) -> Vec<u8> {
    let len = a.len().max(b.len());
    (0..len).map(|i| a[i % a.len()] ^ b[i % b.len()]).collect()
}

/// Seed key, then its counter-mode expansion to `length` bits.
pub fn derive_keystream(skeys: &SemanticKeys, plk: &[u8], length: usize) -> Result<Vec<u8>> {
    KeyMaterial::new(plk.to_vec(), skeys.clone())?.keystream(length)
}

/// Everything both legitimate ends share after key agreement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyMaterial {
    pub plk: Vec<u8>,
    pub skeys: SemanticKeys,
    /// `concat(skeys) XOR plk`.
    pub seed_key: Vec<u8>,
}

impl KeyMaterial {
    pub fn new(plk: Vec<u8>, skeys: SemanticKeys) -> Result<Self> {
        let concat = skeys.concat_bits();
        if plk.is_empty() || concat.is_empty() {
            return Err(param_err!("seed key needs a nonempty PLK and at least one semantic key"));
        }
        let seed_key = xor_cycled(&concat, &plk);
        Ok(Self { plk, skeys, seed_key })
    }

    pub fn keystream(&self, length: usize) -> Result<Vec<u8>> {
        if length == 0 {
            return Err(param_err!("keystream length must be at least 1"));
        }
        Ok(expand_bits(DOMAIN_KEYSTREAM, &self.seed_key, length))
    }
}

/// Bits agreed by both ends of a channel probe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlkProbe {
    pub alice: Vec<u8>,
    pub bob: Vec<u8>,
    /// The channel showed no variation to quantize; both keys were padded
    /// with shared pseudo-random bits instead.
    pub static_environment: bool,
}

impl PlkProbe {
    pub fn disagreement(&self) -> f64 {
        bits::hamming(&self.alice, &self.bob) as f64 / self.alice.len() as f64
    }
}

fn quantize_running_median(samples: &[f64]) -> Vec<u8> {
    let mut sorted: Vec<f64> = Vec::with_capacity(samples.len());
    samples
        .iter()
        .map(|&s| {
            let at = sorted.partition_point(|&v| v < s);
            sorted.insert(at, s);
            let n = sorted.len();
            let median = if n % 2 == 1 {
                sorted[n / 2]
            } else {
                0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
            };
            u8::from(s > median)
        })
        .collect()
}

/// Reciprocal channel probing.
///
/// Probe `j` observes subchannel `j mod L` with a shared temporal
/// perturbation of a quarter of the magnitude spread; each end adds its
/// own Gaussian measurement noise of standard deviation `measurement_noise`
/// and quantizes against the running median of its own samples.
pub fn probe_plk(
    channel: &ChannelRealization,
    n_bits: usize,
    measurement_noise: f64,
    seed: u64,
) -> Result<PlkProbe> {
    if n_bits == 0 {
        return Err(param_err!("PLK length must be at least 1"));
    }
    if !(measurement_noise >= 0.0) {
        return Err(param_err!("measurement noise must be nonnegative"));
    }
    let mags: Vec<f64> = channel.freq_response().iter().map(|h| h.norm()).collect();
    let mean = mags.iter().sum::<f64>() / mags.len() as f64;
    let spread = (mags.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / mags.len() as f64).sqrt();

    if spread <= 1e-12 * mean.max(f64::MIN_POSITIVE) {
        let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, 0, 3));
        let pad: Vec<u8> = (0..n_bits).map(|_| rng.random_range(0..2u8)).collect();
        return Ok(PlkProbe {
            alice: pad.clone(),
            bob: pad,
            static_environment: true,
        });
    }

    let mut shared = ChaCha8Rng::seed_from_u64(split_seed(seed, 0, 0));
    let mut alice_rng = ChaCha8Rng::seed_from_u64(split_seed(seed, 0, 1));
    let mut bob_rng = ChaCha8Rng::seed_from_u64(split_seed(seed, 0, 2));
    let mut alice = Vec::with_capacity(n_bits);
    let mut bob = Vec::with_capacity(n_bits);
    for j in 0..n_bits {
        let g: f64 = StandardNormal.sample(&mut shared);
        let truth = mags[j % mags.len()] + 0.25 * spread * g;
        let na: f64 = StandardNormal.sample(&mut alice_rng);
        let nb: f64 = StandardNormal.sample(&mut bob_rng);
        alice.push(truth + measurement_noise * na);
        bob.push(truth + measurement_noise * nb);
    }
    Ok(PlkProbe {
        alice: quantize_running_median(&alice),
        bob: quantize_running_median(&bob),
        static_environment: false,
    })
}

/// Exact size `multiplier · 2^log2` of a brute-force search space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchSpace {
    pub multiplier: u64,
    pub log2: u64,
}

impl SearchSpace {
    /// `self / other`, when it is again of the form `m · 2^k` with integer `m`.
    pub fn ratio(&self, other: &SearchSpace) -> Option<SearchSpace> {
        if other.multiplier == 0 || !self.multiplier.is_multiple_of(other.multiplier) || self.log2 < other.log2 {
            return None;
        }
        Some(SearchSpace {
            multiplier: self.multiplier / other.multiplier,
            log2: self.log2 - other.log2,
        })
    }
}

impl fmt::Display for SearchSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.multiplier == 1 {
            write!(f, "2^{}", self.log2)
        } else {
            write!(f, "{}*2^{}", self.multiplier, self.log2)
        }
    }
}

fn checked_exponent(bits: u64, n: u64) -> Result<u64> {
    if bits == 0 || n == 0 {
        return Err(param_err!("search-space parameters must be at least 1"));
    }
    bits.checked_mul(n)
        .ok_or_else(|| param_err!("search-space exponent {bits}*{n} overflows"))
}

/// `(2^L_scores)^N`.
pub fn search_space_scores(bits_per_weight: u64, n: u64) -> Result<SearchSpace> {
    Ok(SearchSpace {
        multiplier: 1,
        log2: checked_exponent(bits_per_weight, n)?,
    })
}

/// `(2^L_SKey)^N`.
pub fn search_space_skey(bits_per_key: u64, n: u64) -> Result<SearchSpace> {
    search_space_scores(bits_per_key, n)
}

/// `2^L_seedkey`.
pub fn search_space_seed(seed_bits: u64) -> Result<SearchSpace> {
    Ok(SearchSpace {
        multiplier: 1,
        log2: checked_exponent(seed_bits, 1)?,
    })
}

/// `N · 2^(L_seedkey·N)`: every seed key combined with every allocation choice.
pub fn search_space_total(seed_bits: u64, n: u64) -> Result<SearchSpace> {
    Ok(SearchSpace {
        multiplier: n,
        log2: checked_exponent(seed_bits, n)?,
    })
}

/// One line of the hash golden-vector file: `input_hex tag expected_hex`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GoldenVector {
    pub input: u64,
    pub tag: u64,
    pub expected: u64,
}

pub fn parse_golden_vectors(text: &str) -> Result<Vec<GoldenVector>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let bad = || Error::Format(format!("golden vector line {}: {line:?}", n + 1));
        if fields.len() != 3 {
            return Err(bad());
        }
        out.push(GoldenVector {
            input: u64::from_str_radix(fields[0], 16).map_err(|_| bad())?,
            tag: fields[1].parse().map_err(|_| bad())?,
            expected: u64::from_str_radix(fields[2], 16).map_err(|_| bad())?,
        });
    }
    Ok(out)
}

pub fn format_golden_vectors(vectors: &[GoldenVector]) -> String {
    vectors
        .iter()
        .map(|v| format!("{:016x} {} {:016x}\n", v.input, v.tag, v.expected))
        .collect()
}
