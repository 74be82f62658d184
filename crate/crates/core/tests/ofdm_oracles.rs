//! Channel, estimation and modulation checked against independent oracles.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use semcast::ofdm::{
    channel_apply, channel_estimation_loss, mmse_estimate, pilot_grid, snr_db_to_noise_var, ChannelRealization,
    ChannelSpec, Grid, OfdmFrame, Qam,
};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn random_grid(rng: &mut impl Rng, rows: usize, l_fft: usize, qam: &Qam) -> Grid {
    (0..rows)
        .map(|_| (0..l_fft).map(|_| qam.point(rng.random_range(0..qam.order()))).collect())
        .collect()
}

/// Plain O(n²) DFT.
fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(t, v)| v * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64))
                .sum()
        })
        .collect()
}

#[test]
fn time_domain_path_matches_frequency_domain_product() {
    let l_fft = 16;
    let taps = vec![c(0.8, 0.0), c(0.0, 0.6)];
    let ch = ChannelRealization::from_taps(taps.clone(), l_fft, 0.0).unwrap();
    let h = naive_dft(&{
        let mut t = taps.clone();
        t.resize(l_fft, c(0.0, 0.0));
        t
    });
    for (a, b) in h.iter().zip(ch.freq_response()) {
        assert!((a - b).norm() < 1e-12);
    }
    let qam = Qam::new(16).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let data = random_grid(&mut rng, 6, l_fft, &qam);
    let frame = OfdmFrame::new(pilot_grid(2, l_fft), data.clone(), 4, (0..l_fft).collect()).unwrap();
    let rx = channel_apply(&frame, &ch, 0).unwrap();
    for (sent, got) in frame.pilots.iter().chain(&data).zip(rx.pilots.iter().chain(&rx.data)) {
        for k in 0..l_fft {
            assert!((got[k] - h[k] * sent[k]).norm() < 1e-9, "subcarrier {k}");
        }
    }
}

#[test]
fn noise_variance_per_resource_element() {
    let l_fft = 64;
    let sigma2 = 0.37;
    let ch = ChannelRealization::from_taps(vec![c(1.0, 0.0)], l_fft, sigma2).unwrap();
    let qam = Qam::new(16).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let rows = 100_000usize.div_ceil(l_fft);
    let data = random_grid(&mut rng, rows, l_fft, &qam);
    let frame = OfdmFrame::new(pilot_grid(1, l_fft), data.clone(), 16, (0..l_fft).collect()).unwrap();
    let rx = channel_apply(&frame, &ch, 99).unwrap();
    let mut sum = 0.0;
    let mut n = 0usize;
    for (sent, got) in data.iter().zip(&rx.data) {
        for (s, g) in sent.iter().zip(got) {
            sum += (g - s).norm_sqr();
            n += 1;
        }
    }
    assert!(n >= 100_000);
    let measured = sum / n as f64;
    assert!((measured / sigma2 - 1.0).abs() < 0.05, "measured {measured}");
}

fn mean_estimation_loss(snr_db: f64, realizations: u64) -> f64 {
    let spec = ChannelSpec::default();
    let nv = snr_db_to_noise_var(snr_db);
    let pilots = pilot_grid(2, spec.l_fft);
    let mut total = 0.0;
    for r in 0..realizations {
        let ch = ChannelRealization::rayleigh(&spec, nv, r).unwrap();
        let frame = OfdmFrame::new(pilots.clone(), vec![], 16, (0..spec.l_fft).collect()).unwrap();
        let rx = channel_apply(&frame, &ch, 1_000_000 + r).unwrap();
        let est = mmse_estimate(&rx.pilots, &pilots, nv).unwrap();
        total += channel_estimation_loss(&est, ch.freq_response()).unwrap();
    }
    total / realizations as f64
}

#[test]
fn estimation_loss_decreases_with_snr() {
    let losses: Vec<f64> = [0.0, 10.0, 20.0, 30.0].iter().map(|&s| mean_estimation_loss(s, 1000)).collect();
    for w in losses.windows(2) {
        assert!(w[1] < w[0], "{losses:?}");
    }
}

#[test]
fn noiseless_single_pilot_recovers_channel() {
    let spec = ChannelSpec::default();
    let pilots = pilot_grid(1, spec.l_fft);
    for seed in 0..20 {
        let ch = ChannelRealization::rayleigh(&spec, 0.0, seed).unwrap();
        let frame = OfdmFrame::new(pilots.clone(), vec![], 16, (0..spec.l_fft).collect()).unwrap();
        let rx = channel_apply(&frame, &ch, seed).unwrap();
        let est = mmse_estimate(&rx.pilots, &pilots, 0.0).unwrap();
        for (a, b) in est.iter().zip(ch.freq_response()) {
            assert!((a - b).norm() < 1e-9);
        }
    }
}

#[test]
fn loss_matches_direct_summation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a: Vec<Complex64> = (0..64).map(|_| c(rng.random(), rng.random())).collect();
    let b: Vec<Complex64> = (0..64).map(|_| c(rng.random(), rng.random())).collect();
    let mut direct = 0.0;
    for k in 0..64 {
        let dr = a[k].re - b[k].re;
        let di = a[k].im - b[k].im;
        direct += dr * dr + di * di;
    }
    direct /= 64.0;
    assert!((channel_estimation_loss(&a, &b).unwrap() - direct).abs() < 1e-12);
}

/// Exact Gray-coded 16-QAM bit error rate on AWGN at symbol SNR `es_n0`.
fn qam16_ber(es_n0: f64) -> f64 {
    let q = |x: f64| 1.0 - Normal::standard().cdf(x);
    let d = (es_n0 / 5.0).sqrt();
    0.75 * q(d) + 0.5 * q(3.0 * d) - 0.25 * q(5.0 * d)
}

fn awgn_ber(snr_db: f64, n_symbols: usize, seed: u64) -> f64 {
    let qam = Qam::new(16).unwrap();
    let l_fft = 64;
    let ch = ChannelRealization::from_taps(vec![c(1.0, 0.0)], l_fft, snr_db_to_noise_var(snr_db)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = random_grid(&mut rng, n_symbols.div_ceil(l_fft), l_fft, &qam);
    let frame = OfdmFrame::new(pilot_grid(1, l_fft), data.clone(), 16, (0..l_fft).collect()).unwrap();
    let rx = channel_apply(&frame, &ch, seed + 1).unwrap();
    let mut errors = 0usize;
    let mut bits = 0usize;
    for (sent, got) in data.iter().zip(&rx.data) {
        let a = qam.demodulate(sent);
        let b = qam.demodulate(got);
        errors += a.iter().zip(&b).filter(|(x, y)| x != y).count();
        bits += a.len();
    }
    errors as f64 / bits as f64
}

#[test]
fn sixteen_qam_at_30_db_is_nearly_error_free() {
    assert!(qam16_ber(1000.0) < 1e-100);
    assert!(awgn_ber(30.0, 100_000, 8) < 1e-4);
}

#[test]
fn awgn_ber_follows_the_waterfall() {
    for snr in [6.0, 10.0, 14.0] {
        let measured = awgn_ber(snr, 100_000, 21);
        let theory = qam16_ber(10f64.powf(snr / 10.0));
        assert!((measured / theory - 1.0).abs() < 0.1, "{snr} dB: {measured} vs {theory}");
    }
}
