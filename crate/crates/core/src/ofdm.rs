//! OFDM baseband: Gray-mapped square QAM, block-pilot framing, the
//! multipath channel with AWGN, per-subcarrier MMSE channel estimation and
//! MMSE equalization.
//!
//! DFTs are unitary (scaled by `1/sqrt(L_fft)` both ways), so white noise of
//! variance `σ²` per time-domain sample appears with the same variance on
//! every resource element and the received grid obeys
//! `Y_rx[j,k] = H[k]·Y[j,k] + V[j,k]` where `H` is the plain DFT of the taps.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rustfft::FftPlanner;

use crate::bits;
use crate::error::{param_err, Error, Result};
use crate::keys::split_seed;

pub const DEFAULT_L_FFT: usize = 64;
pub const DEFAULT_CP_LEN: usize = 16;
pub const DEFAULT_L_TAPS: usize = 8;
pub const DEFAULT_N_PILOTS: usize = 2;
pub const DEFAULT_QAM_ORDER: usize = 16;

/// Grid of frequency-domain symbols: one row per OFDM symbol.
pub type Grid = Vec<Vec<Complex64>>;

/// Square Gray-mapped QAM with unit average energy.
///
/// The first half of each symbol's bits picks the in-phase level, the second
/// half the quadrature level. Per axis, bit pattern `g` (Gray code) selects
/// level index `gray⁻¹(g)` among `-(K-1), …, -1, 1, …, K-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Qam {
    order: usize,
    bits_per_axis: usize,
    scale: f64,
    table: Vec<Complex64>,
}

fn gray_decode(mut g: usize) -> usize {
    let mut b = g;
    while g > 0 {
        g >>= 1;
        b ^= g;
    }
    b
}

impl Qam {
    pub fn new(order: usize) -> Result<Self> {
        let bits_per_axis = match order {
            4 => 1,
            16 => 2,
            64 => 3,
            _ => return Err(param_err!("QAM order must be 4, 16 or 64, got {order}")),
        };
        let scale = (2.0 * (order as f64 - 1.0) / 3.0).sqrt().recip();
        let axis_levels = 1usize << bits_per_axis;
        let level = |g: usize| (2.0 * gray_decode(g) as f64 - (axis_levels as f64 - 1.0)) * scale;
        let table = (0..order)
            .map(|pattern| {
                let i_bits = pattern >> bits_per_axis;
                let q_bits = pattern & (axis_levels - 1);
                Complex64::new(level(i_bits), level(q_bits))
            })
            .collect();
        Ok(Self {
            order,
            bits_per_axis,
            scale,
            table,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        2 * self.bits_per_axis
    }

    /// Constellation point of every bit pattern (pattern read MSB first).
    pub fn table(&self) -> &[Complex64] {
        &self.table
    }

    pub fn point(&self, pattern: usize) -> Complex64 {
        self.table[pattern]
    }

    pub fn modulate(&self, bits: &[u8]) -> Result<Vec<Complex64>> {
        let k = self.bits_per_symbol();
        if !bits.len().is_multiple_of(k) {
            return Err(param_err!("{} bits is not a multiple of {k}", bits.len()));
        }
        Ok(bits
            .chunks(k)
            .map(|c| self.table[bits::read_uint(c) as usize])
            .collect())
    }

    fn decide_axis(&self, x: f64) -> usize {
        let levels = 1usize << self.bits_per_axis;
        let mut best = (f64::INFINITY, usize::MAX);
        for g in 0..levels {
            let level = (2.0 * gray_decode(g) as f64 - (levels as f64 - 1.0)) * self.scale;
            let d = (x - level).abs();
            if d < best.0 || (d == best.0 && g < best.1) {
                best = (d, g);
            }
        }
        best.1
    }

    /// Nearest constellation point's bit pattern; equidistant candidates
    /// resolve to the smallest pattern.
    pub fn decide(&self, symbol: Complex64) -> usize {
        (self.decide_axis(symbol.re) << self.bits_per_axis) | self.decide_axis(symbol.im)
    }

    pub fn demodulate(&self, symbols: &[Complex64]) -> Vec<u8> {
        let k = self.bits_per_symbol();
        let mut out = Vec::with_capacity(symbols.len() * k);
        for &s in symbols {
            bits::push_uint(&mut out, self.decide(s) as u64, k);
        }
        out
    }
}

/// Multipath profile.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpec {
    pub l_taps: usize,
    pub l_fft: usize,
    /// Exponential power-delay-profile decay constant in samples.
    pub decay: f64,
}

impl Default for ChannelSpec {
    fn default() -> Self {
        Self {
            l_taps: DEFAULT_L_TAPS,
            l_fft: DEFAULT_L_FFT,
            decay: 2.0,
        }
    }
}

impl ChannelSpec {
    /// Normalized power of every tap.
    pub fn power_profile(&self) -> Vec<f64> {
        let raw: Vec<f64> = (0..self.l_taps)
            .map(|l| (-(l as f64) / self.decay).exp())
            .collect();
        let total: f64 = raw.iter().sum();
        raw.iter().map(|p| p / total).collect()
    }
}

/// One draw of the multipath channel plus its noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    taps: Vec<Complex64>,
    freq_response: Vec<Complex64>,
    noise_var: f64,
}

/// Plain (unnormalized) `n`-point DFT of `taps`, zero-padded.
pub fn dft_of_taps(taps: &[Complex64], n: usize) -> Vec<Complex64> {
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    buf[..taps.len()].copy_from_slice(taps);
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf
}

impl ChannelRealization {
    pub fn from_taps(taps: Vec<Complex64>, l_fft: usize, noise_var: f64) -> Result<Self> {
        if taps.is_empty() || taps.len() > l_fft {
            return Err(param_err!("need 1..={l_fft} taps, got {}", taps.len()));
        }
        if !(noise_var >= 0.0 && noise_var.is_finite()) {
            return Err(param_err!("noise variance must be finite and nonnegative"));
        }
        let freq_response = dft_of_taps(&taps, l_fft);
        Ok(Self {
            taps,
            freq_response,
            noise_var,
        })
    }

    /// Independent complex Gaussian taps following the spec's power profile.
    pub fn rayleigh(spec: &ChannelSpec, noise_var: f64, seed: u64) -> Result<Self> {
        if spec.l_taps == 0 || spec.l_fft < 2 || !(spec.decay > 0.0) {
            return Err(param_err!("invalid channel profile {spec:?}"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let taps = spec
            .power_profile()
            .iter()
            .map(|p| {
                let s = (p / 2.0).sqrt();
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(s * re, s * im)
            })
            .collect();
        Self::from_taps(taps, spec.l_fft, noise_var)
    }

    pub fn taps(&self) -> &[Complex64] {
        &self.taps
    }

    pub fn freq_response(&self) -> &[Complex64] {
        &self.freq_response
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn l_fft(&self) -> usize {
        self.freq_response.len()
    }
}

/// Noise variance per resource element for unit-energy symbols at `snr_db`.
pub fn snr_db_to_noise_var(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Fixed unit-modulus pilot grid known to both ends.
pub fn pilot_grid(n_pilots: usize, l_fft: usize) -> Grid {
    let phase = |i: usize, k: usize| split_seed(0x5049_4c54, i as u64, k as u64) >> 62;
    let r = std::f64::consts::FRAC_1_SQRT_2;
    (0..n_pilots)
        .map(|i| {
            (0..l_fft)
                .map(|k| match phase(i, k) {
                    0 => Complex64::new(r, r),
                    1 => Complex64::new(-r, r),
                    2 => Complex64::new(-r, -r),
                    _ => Complex64::new(r, -r),
                })
                .collect()
        })
        .collect()
}

/// A block-pilot OFDM frame in the frequency domain.
#[derive(Debug, Clone, PartialEq)]
pub struct OfdmFrame {
    pub pilots: Grid,
    pub data: Grid,
    pub cp_len: usize,
    /// Logical slot `l` is carried on physical subcarrier `subcarrier_perm[l]`.
    pub subcarrier_perm: Vec<usize>,
}

impl OfdmFrame {
    pub fn new(pilots: Grid, data: Grid, cp_len: usize, subcarrier_perm: Vec<usize>) -> Result<Self> {
        let l_fft = pilots.first().map_or(0, Vec::len);
        if pilots.is_empty() || l_fft < 2 {
            return Err(param_err!("frame needs at least one pilot symbol and two subcarriers"));
        }
        if cp_len >= l_fft {
            return Err(param_err!("cyclic prefix {cp_len} must be shorter than {l_fft}"));
        }
        if pilots.iter().chain(&data).any(|row| row.len() != l_fft) {
            return Err(param_err!("every OFDM symbol must have {l_fft} subcarriers"));
        }
        if pilots.iter().flatten().any(|p| (p.norm() - 1.0).abs() > 1e-12) {
            return Err(param_err!("pilot symbols must have unit modulus"));
        }
        if subcarrier_perm.len() != l_fft {
            return Err(param_err!("subcarrier permutation must cover {l_fft} subcarriers"));
        }
        Ok(Self {
            pilots,
            data,
            cp_len,
            subcarrier_perm,
        })
    }

    pub fn l_fft(&self) -> usize {
        self.pilots[0].len()
    }
}

/// Frequency-domain view of a received frame after CP removal and DFT.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedFrame {
    pub pilots: Grid,
    pub data: Grid,
}

/// IDFT, cyclic prefix, tap convolution, AWGN, CP removal and DFT.
pub fn channel_apply(frame: &OfdmFrame, ch: &ChannelRealization, seed: u64) -> Result<ReceivedFrame> {
    let l_fft = frame.l_fft();
    if ch.l_fft() != l_fft {
        return Err(param_err!("channel has {} subcarriers, frame {l_fft}", ch.l_fft()));
    }
    if frame.cp_len + 1 < ch.taps.len() {
        return Err(Error::Config(format!(
            "cyclic prefix {} is shorter than the channel memory {}",
            frame.cp_len,
            ch.taps.len() - 1
        )));
    }
    let mut planner = FftPlanner::<f64>::new();
    let ifft = planner.plan_fft_inverse(l_fft);
    let fft = planner.plan_fft_forward(l_fft);
    let norm = (l_fft as f64).sqrt().recip();
    let sym_len = l_fft + frame.cp_len;
    let n_sym = frame.pilots.len() + frame.data.len();

    let mut tx = Vec::with_capacity(n_sym * sym_len);
    for row in frame.pilots.iter().chain(&frame.data) {
        let mut buf = row.clone();
        ifft.process(&mut buf);
        buf.iter_mut().for_each(|v| *v *= norm);
        tx.extend_from_slice(&buf[l_fft - frame.cp_len..]);
        tx.extend_from_slice(&buf);
    }

    let mut rx = vec![Complex64::new(0.0, 0.0); tx.len()];
    for (n, out) in rx.iter_mut().enumerate() {
        for (l, h) in ch.taps.iter().enumerate().take(n + 1) {
            *out += h * tx[n - l];
        }
    }
    if ch.noise_var > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, (ch.noise_var / 2.0).sqrt()).expect("valid normal");
        for v in rx.iter_mut() {
            *v += Complex64::new(noise.sample(&mut rng), noise.sample(&mut rng));
        }
    }

    let mut grid: Grid = rx
        .chunks(sym_len)
        .map(|s| {
            let mut buf = s[frame.cp_len..].to_vec();
            fft.process(&mut buf);
            buf.iter_mut().for_each(|v| *v *= norm);
            buf
        })
        .collect();
    let data = grid.split_off(frame.pilots.len());
    Ok(ReceivedFrame { pilots: grid, data })
}

fn check_grid_shape(a: &Grid, b: &Grid, what: &str) -> Result<()> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.len() != y.len()) || a.is_empty() {
        return Err(param_err!("{what}: grid shapes differ or are empty"));
    }
    Ok(())
}

/// Per-subcarrier MMSE estimate `Σ_i Y_rx_p[i,k]·conj(Y_p[i,k]) / (N_p + σ²)`.
pub fn mmse_estimate(pilots_rx: &Grid, pilots_tx: &Grid, noise_var: f64) -> Result<Vec<Complex64>> {
    check_grid_shape(pilots_rx, pilots_tx, "mmse_estimate")?;
    let n_p = pilots_tx.len() as f64;
    let l_fft = pilots_tx[0].len();
    Ok((0..l_fft)
        .map(|k| {
            let acc: Complex64 = pilots_rx
                .iter()
                .zip(pilots_tx)
                .map(|(rx, tx)| rx[k] * tx[k].conj())
                .sum();
            acc / (n_p + noise_var)
        })
        .collect())
}

/// MMSE equalization `Y_rx·conj(Ĥ) / (|Ĥ|² + σ²)` of every data symbol.
pub fn mmse_equalize(data_rx: &Grid, h_est: &[Complex64], noise_var: f64) -> Result<Grid> {
    if data_rx.iter().any(|row| row.len() != h_est.len()) {
        return Err(param_err!("channel estimate covers {} subcarriers", h_est.len()));
    }
    Ok(data_rx
        .iter()
        .map(|row| {
            row.iter()
                .zip(h_est)
                .map(|(y, h)| y * h.conj() / (h.norm_sqr() + noise_var))
                .collect()
        })
        .collect())
}

/// Mean squared deviation of the estimate from the true response.
pub fn channel_estimation_loss(h_est: &[Complex64], h_true: &[Complex64]) -> Result<f64> {
    if h_est.len() != h_true.len() || h_est.is_empty() {
        return Err(param_err!("estimate and truth lengths differ"));
    }
    Ok(h_est
        .iter()
        .zip(h_true)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        / h_est.len() as f64)
}
