//! Trials, sweeps and reports.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::allocator::{self, AllocationMap};
use crate::error::{Error, Result};
use crate::featuremap::{self, FeatureMapSet};
use crate::importance::{self, HeadParams, ImportanceVector};
use crate::keys::{self, KeyedHash, SearchSpace};
use crate::ofdm::{self, ChannelRealization, OfdmFrame, Qam};

use super::link::{self, block_errors, Demodulated};
use super::RunConfig;

/// Header of `ber_sweep.csv`.
pub const BER_HEADER: &str = "snr_db,trials,payload_bits,legit_ber_encrypted,legit_ber_plaintext,eve_ber,mean_l_cha";
/// Header of `latency_sweep.csv`.
pub const LATENCY_HEADER: &str =
    "epsilon,items,mean_lambda,mean_symbols,latency_us,symbol_fraction,accuracy,accuracy_fraction";
/// Header of `constellation.csv`.
pub const CONSTELLATION_HEADER: &str = "snr_db,receiver,i,q,subcarrier,frame,ref_i,ref_q";
/// Header of per-trial record files.
pub const TRIAL_HEADER: &str = "trial,item,snr_db,epsilon,lambda,symbols,latency_us,payload_bits,\
legit_errors,channel_errors,eve_errors,legit_ber,eve_ber,l_cha,correct,agrees,perm_digest,\
channel_seed,noise_seed,eve_seed";
/// Header of `search_space.csv`.
pub const SEARCH_SPACE_HEADER: &str = "quantity,multiplier,log2,value";

/// Purposes for per-trial seed derivation.
mod purpose {
    pub const CHANNEL: u64 = 1;
    pub const PROBE_NOISE: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const EVE_CHANNEL: u64 = 4;
    pub const EVE_NOISE: u64 = 5;
    pub const PLK: u64 = 6;
    pub const FILLER: u64 = 7;
}

/// Dataset, trained head and per-item importance, shared by every trial.
#[derive(Debug, Clone)]
pub struct Session {
    pub cfg: RunConfig,
    pub dataset: Vec<FeatureMapSet>,
    pub head: HeadParams,
    pub importance: Vec<ImportanceVector>,
}

impl Session {
    /// Loads or synthesizes the dataset, loads or trains the head, and
    /// scores every item for the head's predicted class.
    pub fn prepare(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let dataset = load_or_synth(cfg)?;
        let head = match &cfg.head_file {
            Some(path) => HeadParams::load(path)?,
            None => importance::train_head(&dataset, cfg.synth.n_classes, cfg.epochs, cfg.learning_rate, cfg.head_seed)?,
        };
        Self::with_parts(cfg.clone(), dataset, head)
    }

    pub fn with_parts(cfg: RunConfig, dataset: Vec<FeatureMapSet>, head: HeadParams) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::Data("dataset is empty".into()));
        }
        if head.n_maps() != dataset[0].n_maps() {
            return Err(Error::Config(format!(
                "head expects {} maps, dataset has {}",
                head.n_maps(),
                dataset[0].n_maps()
            )));
        }
        let importance = dataset
            .iter()
            .map(|item| importance::importance(&head, item, None))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            cfg,
            dataset,
            head,
            importance,
        })
    }
}

/// The configured dataset file, or the synthetic dataset.
pub fn load_or_synth(cfg: &RunConfig) -> Result<Vec<FeatureMapSet>> {
    match &cfg.dataset_file {
        Some(path) => featuremap::load_dataset(path),
        None => featuremap::synth_dataset(&cfg.synth),
    }
}

/// Measured quantities of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub item: usize,
    pub snr_db: f64,
    pub epsilon: f64,
    pub lambda: usize,
    pub symbols: usize,
    pub latency_us: f64,
    pub payload_bits: usize,
    /// Decrypted payload bits differing from the plaintext.
    pub legit_errors: usize,
    /// Demodulated channel bits differing from the transmitted channel bits.
    pub channel_errors: usize,
    /// Eavesdropper bits differing from the plaintext.
    pub eve_errors: usize,
    /// Mean squared channel-estimation error; 0 when nothing was sent.
    pub l_cha: f64,
    /// Receiver's class equals the item label.
    pub correct: bool,
    /// Receiver's class equals the transmitter's prediction.
    pub agrees: bool,
    pub perm_digest: u64,
    pub channel_seed: u64,
    pub noise_seed: u64,
    pub eve_seed: u64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl TrialRecord {
    pub fn nothing_transmitted(&self) -> bool {
        self.lambda == 0
    }

    pub fn legit_ber(&self) -> f64 {
        ratio(self.legit_errors, self.payload_bits)
    }

    pub fn eve_ber(&self) -> f64 {
        ratio(self.eve_errors, self.payload_bits)
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{:.9},{:.9},{:.9},{},{},{:016x},{},{},{}",
            self.trial,
            self.item,
            self.snr_db,
            self.epsilon,
            self.lambda,
            self.symbols,
            self.latency_us,
            self.payload_bits,
            self.legit_errors,
            self.channel_errors,
            self.eve_errors,
            self.legit_ber(),
            self.eve_ber(),
            self.l_cha,
            u8::from(self.correct),
            u8::from(self.agrees),
            self.perm_digest,
            self.channel_seed,
            self.noise_seed,
            self.eve_seed,
        )
    }
}

/// One equalized point with the point it should have landed on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstellationPoint {
    pub point: Complex64,
    pub reference: Complex64,
    pub subcarrier: usize,
}

/// Constellation dump of one frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConstellationDump {
    pub legit: Vec<ConstellationPoint>,
    pub eve: Vec<ConstellationPoint>,
}

/// Fraction of points within `radius` of their reference.
pub fn fraction_within(points: &[ConstellationPoint], radius: f64) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let hits = points.iter().filter(|p| (p.point - p.reference).norm() <= radius).count();
    hits as f64 / points.len() as f64
}

fn perm_digest(perm: &[usize]) -> u64 {
    let mut h = KeyedHash::new(perm.len() as u64);
    for &p in perm {
        h.absorb(p as u64);
    }
    h.squeeze(0)
}

fn collect_points(demod: &Demodulated, layout: &AllocationMap, refs: &[Vec<Complex64>]) -> Vec<ConstellationPoint> {
    let positions = allocator::block_positions(layout);
    let mut out = Vec::new();
    for ((syms, pos), r) in demod.symbols.iter().zip(&positions).zip(refs) {
        for ((&point, &(_, subcarrier)), &reference) in syms.iter().zip(pos).zip(r) {
            out.push(ConstellationPoint {
                point,
                reference,
                subcarrier,
            });
        }
    }
    out
}

/// Receiver's subchannel ranking from a pilot-only probe frame.
fn csi_feedback(cfg: &RunConfig, ch: &ChannelRealization, seed: u64) -> Result<Vec<usize>> {
    let pilots = ofdm::pilot_grid(cfg.n_pilots, cfg.l_fft);
    let probe = OfdmFrame::new(pilots.clone(), Vec::new(), cfg.cp_len, (0..cfg.l_fft).collect())?;
    let rx = ofdm::channel_apply(&probe, ch, seed)?;
    let h = ofdm::mmse_estimate(&rx.pilots, &pilots, ch.noise_var())?;
    Ok(allocator::rank_subchannels(&h))
}

/// Runs trial `trial` at one operating point. All randomness comes from
/// `(cfg.seed, trial)`, so trials at different SNRs or budgets share
/// channels, keys and noise shapes.
pub fn run_trial(
    session: &Session,
    trial: usize,
    snr_db: f64,
    epsilon: f64,
    want_constellation: bool,
) -> Result<(TrialRecord, Option<ConstellationDump>)> {
    let base = &session.cfg;
    let mut cfg = base.clone();
    cfg.epsilon = epsilon;
    let item_idx = trial % session.dataset.len();
    let item = &session.dataset[item_idx];
    let iv = &session.importance[item_idx];
    let seed = |p| keys::split_seed(cfg.seed, trial as u64, p);
    let (channel_seed, noise_seed, eve_seed) = (seed(purpose::CHANNEL), seed(purpose::NOISE), seed(purpose::EVE_CHANNEL));

    let noise_var = ofdm::snr_db_to_noise_var(snr_db);
    let spec = cfg.channel_spec();
    let ch = ChannelRealization::rayleigh(&spec, noise_var, channel_seed)?;
    let rank = if cfg.adaptive_allocation {
        csi_feedback(&cfg, &ch, seed(purpose::PROBE_NOISE))?
    } else {
        (0..cfg.l_fft).collect()
    };
    let plk = if cfg.encrypt {
        Some(keys::probe_plk(&ch, cfg.l_plk, cfg.plk_noise, seed(purpose::PLK))?)
    } else {
        None
    };

    let tx = link::transmit(
        item,
        iv,
        &cfg,
        plk.as_ref().map(|p| p.alice.as_slice()),
        &rank,
        seed(purpose::FILLER),
    )?;
    let rx = tx
        .frame
        .as_ref()
        .map(|f| ofdm::channel_apply(f, &ch, noise_seed))
        .transpose()?;
    let legit = link::receive_legit(
        rx.as_ref(),
        &tx.side,
        &cfg,
        &session.head,
        plk.as_ref().map(|p| p.bob.as_slice()),
        noise_var,
        item.label(),
    )?;

    let plain: Vec<Vec<u8>> = tx.payloads.iter().map(|p| p.bits.clone()).collect();
    let n = tx.side.payload_bits();
    let sent: Vec<Vec<u8>> = tx.channel_bits.iter().map(|b| b[..n].to_vec()).collect();
    let mut record = TrialRecord {
        trial,
        item: item_idx,
        snr_db,
        epsilon,
        lambda: tx.selection.lambda(),
        symbols: tx.symbols(),
        latency_us: tx.symbols() as f64 * cfg.symbol_duration_us,
        payload_bits: tx.payload_bits(),
        legit_errors: block_errors(&legit.plain_bits, &plain),
        channel_errors: 0,
        eve_errors: 0,
        l_cha: 0.0,
        correct: legit.class == item.label(),
        agrees: legit.class == tx.class,
        perm_digest: tx.side.alloc.as_ref().map_or(0, |a| perm_digest(&a.perm)),
        channel_seed,
        noise_seed,
        eve_seed,
    };
    let (Some(rx), Some(demod), Some(alloc)) = (rx, &legit.demod, &tx.side.alloc) else {
        return Ok((record, want_constellation.then(ConstellationDump::default)));
    };
    record.channel_errors = block_errors(&demod.bits, &sent);
    record.l_cha = ofdm::channel_estimation_loss(&demod.h_est, ch.freq_response())?;

    let rx_eve = if cfg.eve_same_channel {
        rx
    } else {
        let ch_eve = ChannelRealization::rayleigh(&spec, noise_var, eve_seed)?;
        ofdm::channel_apply(tx.frame.as_ref().expect("frame exists"), &ch_eve, seed(purpose::EVE_NOISE))?
    };
    let eve = link::receive_eavesdrop(&rx_eve, &tx.side, &cfg, noise_var)?;
    record.eve_errors = block_errors(&eve.bits, &plain);

    let dump = if want_constellation {
        let qam = Qam::new(cfg.qam_order)?;
        let modulate = |blocks: &[Vec<u8>]| blocks.iter().map(|b| qam.modulate(b)).collect::<Result<Vec<_>>>();
        let sent_points = modulate(&tx.channel_bits)?;
        let plain_points = modulate(&tx.plain_bits(qam.bits_per_symbol()))?;
        let guess = alloc.with_perm((0..alloc.l_fft()).collect())?;
        Some(ConstellationDump {
            legit: collect_points(demod, alloc, &sent_points),
            eve: collect_points(&eve, &guess, &plain_points),
        })
    } else {
        None
    };
    Ok((record, dump))
}

/// Runs trials `0..trials` in parallel, returned in trial order.
pub fn run_trials(session: &Session, trials: usize, snr_db: f64, epsilon: f64) -> Result<Vec<TrialRecord>> {
    (0..trials)
        .into_par_iter()
        .map(|t| run_trial(session, t, snr_db, epsilon, false).map(|r| r.0))
        .collect()
}

/// Aggregates of one SNR point.
#[derive(Debug, Clone, PartialEq)]
pub struct BerPoint {
    pub snr_db: f64,
    pub trials: usize,
    pub payload_bits: usize,
    pub legit_ber_encrypted: f64,
    pub legit_ber_plaintext: f64,
    pub eve_ber: f64,
    pub mean_l_cha: f64,
}

impl BerPoint {
    pub fn from_records(snr_db: f64, records: &[TrialRecord]) -> Self {
        let bits: usize = records.iter().map(|r| r.payload_bits).sum();
        let sum = |f: fn(&TrialRecord) -> usize| records.iter().map(f).sum::<usize>();
        let sent: Vec<&TrialRecord> = records.iter().filter(|r| !r.nothing_transmitted()).collect();
        let mean_l_cha = if sent.is_empty() {
            0.0
        } else {
            sent.iter().map(|r| r.l_cha).sum::<f64>() / sent.len() as f64
        };
        Self {
            snr_db,
            trials: records.len(),
            payload_bits: bits,
            legit_ber_encrypted: ratio(sum(|r| r.legit_errors), bits),
            legit_ber_plaintext: ratio(sum(|r| r.channel_errors), bits),
            eve_ber: ratio(sum(|r| r.eve_errors), bits),
            mean_l_cha,
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.9},{:.9},{:.9},{:.9}",
            self.snr_db,
            self.trials,
            self.payload_bits,
            self.legit_ber_encrypted,
            self.legit_ber_plaintext,
            self.eve_ber,
            self.mean_l_cha
        )
    }
}

/// Output of [`run_ber_sweep`].
#[derive(Debug, Clone, PartialEq)]
pub struct BerSweep {
    pub points: Vec<BerPoint>,
    /// One frame (trial 0) per SNR.
    pub constellations: Vec<(f64, ConstellationDump)>,
    pub records: Vec<TrialRecord>,
}

impl BerSweep {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{BER_HEADER}\n");
        for p in &self.points {
            out.push_str(&p.csv_row());
            out.push('\n');
        }
        out
    }

    pub fn constellation_csv(&self) -> String {
        let mut out = format!("{CONSTELLATION_HEADER}\n");
        for (snr, dump) in &self.constellations {
            for (name, points) in [("legit", &dump.legit), ("eve", &dump.eve)] {
                for p in points.iter() {
                    let _ = writeln!(
                        out,
                        "{snr},{name},{:.9},{:.9},{},0,{:.9},{:.9}",
                        p.point.re, p.point.im, p.subcarrier, p.reference.re, p.reference.im
                    );
                }
            }
        }
        out
    }
}

/// BER of the legitimate receiver (encrypted and channel-bit control) and
/// the eavesdropper at every configured SNR.
pub fn run_ber_sweep(session: &Session) -> Result<BerSweep> {
    let cfg = &session.cfg;
    let mut points = Vec::new();
    let mut constellations = Vec::new();
    let mut all = Vec::new();
    for &snr in &cfg.snr_db {
        let records = run_trials(session, cfg.trials, snr, cfg.epsilon)?;
        let (_, dump) = run_trial(session, 0, snr, cfg.epsilon, true)?;
        points.push(BerPoint::from_records(snr, &records));
        constellations.push((snr, dump.unwrap_or_default()));
        all.extend(records);
    }
    Ok(BerSweep {
        points,
        constellations,
        records: all,
    })
}

/// One budget of the latency sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyPoint {
    pub epsilon: f64,
    pub items: usize,
    pub mean_lambda: f64,
    pub mean_symbols: f64,
    pub latency_us: f64,
    pub symbol_fraction: f64,
    pub accuracy: f64,
    pub accuracy_fraction: f64,
}

impl LatencyPoint {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.6},{:.6},{:.6},{:.9},{:.9},{:.9}",
            self.epsilon,
            self.items,
            self.mean_lambda,
            self.mean_symbols,
            self.latency_us,
            self.symbol_fraction,
            self.accuracy,
            self.accuracy_fraction
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencySweep {
    /// The ε = 0 full-transmission baseline.
    pub baseline: LatencyPoint,
    pub points: Vec<LatencyPoint>,
}

impl LatencySweep {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{LATENCY_HEADER}\n");
        for p in &self.points {
            out.push_str(&p.csv_row());
            out.push('\n');
        }
        out
    }
}

fn latency_point(session: &Session, snr_db: f64, epsilon: f64) -> Result<LatencyPoint> {
    let items = session.dataset.len();
    let cfg = &session.cfg;
    let records = run_trials(session, items, snr_db, epsilon)?;
    let n = items as f64;
    let mean_symbols = records.iter().map(|r| r.symbols).sum::<usize>() as f64 / n;
    Ok(LatencyPoint {
        epsilon,
        items,
        mean_lambda: records.iter().map(|r| r.lambda).sum::<usize>() as f64 / n,
        mean_symbols,
        latency_us: mean_symbols * cfg.symbol_duration_us,
        symbol_fraction: 1.0,
        accuracy: records.iter().filter(|r| r.correct).count() as f64 / n,
        accuracy_fraction: 1.0,
    })
}

/// Transmitted symbols, latency proxy and receiver accuracy for every
/// budget in `cfg.epsilons`, each evaluated once per dataset item at the
/// first configured SNR.
pub fn run_latency_sweep(session: &Session) -> Result<LatencySweep> {
    let cfg = &session.cfg;
    let snr = cfg.snr_db[0];
    let baseline = latency_point(session, snr, 0.0)?;
    let points = cfg
        .epsilons
        .iter()
        .map(|&eps| {
            let mut p = latency_point(session, snr, eps)?;
            p.symbol_fraction = ratio_f(p.mean_symbols, baseline.mean_symbols);
            p.accuracy_fraction = ratio_f(p.accuracy, baseline.accuracy);
            Ok(p)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LatencySweep { baseline, points })
}

fn ratio_f(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// The four brute-force search spaces at the configured key lengths. The
/// seed key is as long as the physical-layer key it is masked with.
pub fn search_space_table(cfg: &RunConfig) -> Result<Vec<(&'static str, SearchSpace)>> {
    let n = cfg.synth.n_maps as u64;
    let seed_bits = cfg.l_plk as u64;
    let scores = keys::search_space_scores(u64::from(cfg.l_scores), n)?;
    let skey = keys::search_space_skey(u64::from(cfg.l_skey), n)?;
    let seed = keys::search_space_seed(seed_bits)?;
    let total = keys::search_space_total(seed_bits, n)?;
    let mut rows = vec![
        ("weights", scores),
        ("semantic_keys", skey),
        ("seed_key", seed),
        ("with_allocation", total),
    ];
    if let Some(r) = total.ratio(&seed) {
        rows.push(("gain_over_seed_key", r));
    }
    Ok(rows)
}

pub fn search_space_csv(rows: &[(&str, SearchSpace)]) -> String {
    let mut out = format!("{SEARCH_SPACE_HEADER}\n");
    for (name, s) in rows {
        let _ = writeln!(out, "{name},{},{},{s}", s.multiplier, s.log2);
    }
    out
}

/// A single transmission at the first configured SNR.
pub fn run_single(session: &Session) -> Result<TrialRecord> {
    let cfg = &session.cfg;
    run_trial(session, 0, cfg.snr_db[0], cfg.epsilon, false).map(|r| r.0)
}

pub fn records_csv(records: &[TrialRecord]) -> String {
    let mut out = format!("{TRIAL_HEADER}\n");
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Writes `contents` to `dir/name`, creating `dir` as needed.
pub fn write_output(dir: &Path, name: &str, contents: &[u8]) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
