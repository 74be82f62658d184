//! One transmission: transmitter chain, legitimate receiver and eavesdropper.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::allocator::{self, AllocationMap};
use crate::bits;
use crate::error::{Error, Result};
use crate::featuremap::{quantize_map, FeatureMapSet, QuantizedPayload};
use crate::importance::{head_forward, HeadParams, ImportanceVector};
use crate::keys::{self, KeyMaterial, SemanticKeys};
use crate::ofdm::{self, Grid, OfdmFrame, Qam, ReceivedFrame};
use crate::selector::{select_maps, Selection};

use super::RunConfig;

/// OFDM symbols per map for a given geometry and modulation.
pub fn symbols_per_map(map_len: usize, bits_per_sample: u32, bits_per_symbol: usize) -> usize {
    (map_len * bits_per_sample as usize).div_ceil(bits_per_symbol)
}

/// Data symbols per frame: the configured value, or the smallest frame
/// that holds every map of an item.
pub fn frame_rows(cfg: &RunConfig, n_maps: usize, per_map: usize) -> Result<usize> {
    if cfg.data_symbols > 0 {
        return Ok(cfg.data_symbols);
    }
    allocator::min_data_symbols(&vec![per_map; n_maps], cfg.l_fft)
}

/// What the transmitter shares with the legitimate receiver out of band:
/// layout, quantization ranges and (when encrypting) the semantic keys.
#[derive(Debug, Clone, PartialEq)]
pub struct SideInfo {
    pub alloc: Option<AllocationMap>,
    /// `(min, max)` per block, in block order.
    pub ranges: Vec<(f64, f64)>,
    pub skeys: Option<SemanticKeys>,
    pub bits_per_sample: u32,
    pub map_height: usize,
    pub map_width: usize,
    pub n_maps: usize,
}

impl SideInfo {
    pub fn map_len(&self) -> usize {
        self.map_height * self.map_width
    }

    /// Payload bits of each block, excluding symbol padding.
    pub fn payload_bits(&self) -> usize {
        self.map_len() * self.bits_per_sample as usize
    }
}

/// Everything the transmitter produced for one item.
#[derive(Debug, Clone)]
pub struct Transmission {
    pub selection: Selection,
    /// Transmitter-side prediction used for the importance scores.
    pub class: usize,
    /// `None` when nothing was selected.
    pub frame: Option<OfdmFrame>,
    pub side: SideInfo,
    /// Quantized plaintext, in block order.
    pub payloads: Vec<QuantizedPayload>,
    /// Channel bits (ciphertext, symbol-padded), in block order.
    pub channel_bits: Vec<Vec<u8>>,
    pub keys: Option<KeyMaterial>,
}

impl Transmission {
    pub fn symbols(&self) -> usize {
        self.side.alloc.as_ref().map_or(0, AllocationMap::payload_symbols)
    }

    pub fn payload_bits(&self) -> usize {
        self.payloads.len() * self.side.payload_bits()
    }

    /// Plaintext bits padded to whole symbols, in block order.
    pub fn plain_bits(&self, bits_per_symbol: usize) -> Vec<Vec<u8>> {
        self.payloads
            .iter()
            .map(|p| padded(&p.bits, bits_per_symbol))
            .collect()
    }
}

fn padded(b: &[u8], bits_per_symbol: usize) -> Vec<u8> {
    let mut out = b.to_vec();
    out.resize(b.len().next_multiple_of(bits_per_symbol), 0);
    out
}

/// XORs consecutive keystream segments into the blocks, in order.
fn apply_keystream(blocks: &mut [Vec<u8>], stream: &[u8]) {
    let mut at = 0;
    for b in blocks {
        let len = b.len();
        bits::xor_in_place(b, &stream[at..at + len]);
        at += len;
    }
}

fn qam(cfg: &RunConfig) -> Result<Qam> {
    Qam::new(cfg.qam_order).map_err(|e| Error::Config(e.to_string()))
}

/// Transmitter chain for one item.
///
/// `plk` is the transmitter's physical-layer key; `None` disables
/// encryption. `csi_rank` is the receiver's subchannel ranking.
pub fn transmit(
    item: &FeatureMapSet,
    iv: &ImportanceVector,
    cfg: &RunConfig,
    plk: Option<&[u8]>,
    csi_rank: &[usize],
    filler_seed: u64,
) -> Result<Transmission> {
    let qam = qam(cfg)?;
    let bps = qam.bits_per_symbol();
    let n_maps = item.n_maps();
    if iv.n_maps() != n_maps {
        return Err(Error::Parameter(format!(
            "importance covers {} maps, item has {n_maps}",
            iv.n_maps()
        )));
    }
    let selection = select_maps(iv, cfg.epsilon)?;
    let per_map = symbols_per_map(item.map_len(), cfg.bits_per_sample, bps);
    let mut side = SideInfo {
        alloc: None,
        ranges: Vec::new(),
        skeys: None,
        bits_per_sample: cfg.bits_per_sample,
        map_height: item.height(),
        map_width: item.width(),
        n_maps,
    };
    if selection.is_empty() {
        return Ok(Transmission {
            selection,
            class: iv.class,
            frame: None,
            side,
            payloads: Vec::new(),
            channel_bits: Vec::new(),
            keys: None,
        });
    }

    let rows = frame_rows(cfg, n_maps, per_map)?;
    let alloc = allocator::allocate(&selection, iv, csi_rank, &vec![per_map; n_maps], rows)?;
    let payloads = alloc
        .blocks
        .iter()
        .map(|b| {
            let mut p = quantize_map(item.map(b.map_index), cfg.bits_per_sample)?;
            p.map_index = b.map_index;
            Ok(p)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut channel_bits: Vec<Vec<u8>> = payloads.iter().map(|p| padded(&p.bits, bps)).collect();
    let keys = match plk {
        Some(plk) => {
            let weights = keys::weight_stream(plk, n_maps, cfg.l_scores)?;
            let all = keys::skey_stream(iv, &weights, cfg.l_skey)?;
            let order: Vec<usize> = alloc.blocks.iter().map(|b| b.map_index).collect();
            let material = KeyMaterial::new(plk.to_vec(), all.subset(&order))?;
            let total: usize = channel_bits.iter().map(Vec::len).sum();
            apply_keystream(&mut channel_bits, &material.keystream(total)?);
            Some(material)
        }
        None => None,
    };

    let symbols = channel_bits
        .iter()
        .map(|b| qam.modulate(b))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(filler_seed);
    let data = allocator::place(&alloc, &symbols, |_, _| qam.point(rng.random_range(0..qam.order())))?;
    let frame = OfdmFrame::new(
        ofdm::pilot_grid(cfg.n_pilots, cfg.l_fft),
        data,
        cfg.cp_len,
        alloc.perm.clone(),
    )?;

    side.ranges = payloads.iter().map(|p| (p.min_val, p.max_val)).collect();
    side.skeys = keys.as_ref().map(|k| k.skeys.clone());
    side.alloc = Some(alloc);
    Ok(Transmission {
        selection,
        class: iv.class,
        frame: Some(frame),
        side,
        payloads,
        channel_bits,
        keys,
    })
}

/// Receiver-side view of a demodulated frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Demodulated {
    pub h_est: Vec<Complex64>,
    pub equalized: Grid,
    /// Equalized payload symbols per block.
    pub symbols: Vec<Vec<Complex64>>,
    /// Hard decisions per block, symbol-padded.
    pub bits: Vec<Vec<u8>>,
}

/// Pilot-based MMSE estimation, equalization, deallocation and hard
/// demodulation with the layout in `alloc`.
pub fn demodulate_frame(
    rx: &ReceivedFrame,
    alloc: &AllocationMap,
    noise_var: f64,
    n_pilots: usize,
    qam: &Qam,
) -> Result<Demodulated> {
    let l_fft = alloc.l_fft();
    let h_est = ofdm::mmse_estimate(&rx.pilots, &ofdm::pilot_grid(n_pilots, l_fft), noise_var)?;
    let equalized = ofdm::mmse_equalize(&rx.data, &h_est, noise_var)?;
    let symbols = allocator::deallocate(&equalized, alloc)?;
    let bits = symbols.iter().map(|s| qam.demodulate(s)).collect();
    Ok(Demodulated {
        h_est,
        equalized,
        symbols,
        bits,
    })
}

/// What the legitimate receiver recovered.
#[derive(Debug, Clone, PartialEq)]
pub struct LegitReception {
    pub demod: Option<Demodulated>,
    /// Decrypted payload bits per block (padding removed).
    pub plain_bits: Vec<Vec<u8>>,
    /// All maps; unsent maps are zero.
    pub maps: Vec<Vec<f64>>,
    pub class: usize,
}

/// Legitimate receiver: estimate, equalize, deallocate with the fed-back
/// layout, demodulate, decrypt with its own PLK and the shared semantic
/// keys, dequantize and classify with the shared head.
pub fn receive_legit(
    rx: Option<&ReceivedFrame>,
    side: &SideInfo,
    cfg: &RunConfig,
    head: &HeadParams,
    plk: Option<&[u8]>,
    noise_var: f64,
    label: usize,
) -> Result<LegitReception> {
    let qam = qam(cfg)?;
    let mut maps = vec![vec![0.0; side.map_len()]; side.n_maps];
    let mut plain_bits = Vec::new();
    let mut demod = None;
    if let (Some(rx), Some(alloc)) = (rx, &side.alloc) {
        let d = demodulate_frame(rx, alloc, noise_var, cfg.n_pilots, &qam)?;
        let mut blocks = d.bits.clone();
        if let (Some(skeys), Some(plk)) = (&side.skeys, plk) {
            let total: usize = blocks.iter().map(Vec::len).sum();
            apply_keystream(&mut blocks, &KeyMaterial::new(plk.to_vec(), skeys.clone())?.keystream(total)?);
        }
        let n = side.payload_bits();
        for ((block, b), &(lo, hi)) in alloc.blocks.iter().zip(&mut blocks).zip(&side.ranges) {
            b.truncate(n);
            maps[block.map_index] = QuantizedPayload::dequantize_bits(b, lo, hi, side.bits_per_sample);
        }
        plain_bits = blocks;
        demod = Some(d);
    }
    let class = classify(head, &maps, side, label)?;
    Ok(LegitReception {
        demod,
        plain_bits,
        maps,
        class,
    })
}

fn classify(head: &HeadParams, maps: &[Vec<f64>], side: &SideInfo, label: usize) -> Result<usize> {
    let set = FeatureMapSet::new(
        side.map_height,
        side.map_width,
        maps.iter().map(|m| m.iter().map(|&v| v as f32).collect()).collect(),
        label,
        "received",
    )?;
    Ok(head_forward(head, &set)?.argmax())
}

/// Eavesdropper: her own estimation and equalization, the public block
/// layout on an identity subcarrier mapping, and no keystream.
pub fn receive_eavesdrop(rx: &ReceivedFrame, side: &SideInfo, cfg: &RunConfig, noise_var: f64) -> Result<Demodulated> {
    let qam = qam(cfg)?;
    let alloc = side
        .alloc
        .as_ref()
        .ok_or_else(|| Error::Parameter("nothing was transmitted".into()))?;
    let guess = alloc.with_perm((0..alloc.l_fft()).collect())?;
    let mut d = demodulate_frame(rx, &guess, noise_var, cfg.n_pilots, &qam)?;
    let n = side.payload_bits();
    d.bits.iter_mut().for_each(|b| b.truncate(n));
    Ok(d)
}

/// Bit errors between two block lists, counted over each reference block.
pub fn block_errors(received: &[Vec<u8>], reference: &[Vec<u8>]) -> usize {
    received
        .iter()
        .zip(reference)
        .map(|(r, t)| bits::hamming(&r[..t.len()], t))
        .sum()
}
