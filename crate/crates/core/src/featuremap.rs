//! Semantic sources: feature-map sets, the synthetic generator, the `SEMF`
//! file format and per-map uniform quantization.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::bits;
use crate::error::{param_err, Error, Result};

/// File magic of a serialized [`FeatureMapSet`].
pub const SEMF_MAGIC: &[u8; 4] = b"SEMF";
pub const SEMF_VERSION: u16 = 1;
const SEMF_HEADER_LEN: usize = 14;

/// Default number of bits per quantized activation.
pub const DEFAULT_BITS_PER_SAMPLE: u32 = 8;

/// Fraction of maps that carry the class signal when `skew = 1`.
pub const INFORMATIVE_FRACTION: f64 = 0.4;

/// The N feature maps extracted from one source item.
///
/// Maps are stored row-major, one `Vec` per map. Equality compares content
/// only; `source_id` records provenance.
#[derive(Debug, Clone)]
pub struct FeatureMapSet {
    height: usize,
    width: usize,
    maps: Vec<Vec<f32>>,
    label: usize,
    pub source_id: String,
}

impl PartialEq for FeatureMapSet {
    fn eq(&self, other: &Self) -> bool {
        self.height == other.height
            && self.width == other.width
            && self.label == other.label
            && self.maps.len() == other.maps.len()
            && self
                .maps
                .iter()
                .zip(&other.maps)
                .all(|(a, b)| a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()))
    }
}

impl FeatureMapSet {
    pub fn new(
        height: usize,
        width: usize,
        maps: Vec<Vec<f32>>,
        label: usize,
        source_id: impl Into<String>,
    ) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(param_err!("map shape must be at least 1x1, got {height}x{width}"));
        }
        if maps.is_empty() {
            return Err(param_err!("a feature-map set needs at least one map"));
        }
        for (i, m) in maps.iter().enumerate() {
            if m.len() != height * width {
                return Err(param_err!(
                    "map {i} has {} activations, expected {}",
                    m.len(),
                    height * width
                ));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("map {i} contains a non-finite activation")));
            }
        }
        Ok(Self {
            height,
            width,
            maps,
            label,
            source_id: source_id.into(),
        })
    }

    pub fn n_maps(&self) -> usize {
        self.maps.len()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Activations per map (H'·W').
    pub fn map_len(&self) -> usize {
        self.height * self.width
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn maps(&self) -> &[Vec<f32>] {
        &self.maps
    }

    pub fn map(&self, i: usize) -> &[f32] {
        &self.maps[i]
    }

    /// Spatial mean of every map.
    pub fn pooled(&self) -> Vec<f64> {
        self.maps.iter().map(|m| spatial_mean(m)).collect()
    }
}

pub(crate) fn spatial_mean(map: &[f32]) -> f64 {
    map.iter().map(|&v| f64::from(v)).sum::<f64>() / map.len() as f64
}

/// Parameters of the synthetic dataset generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_items: usize,
    pub n_maps: usize,
    pub height: usize,
    pub width: usize,
    pub n_classes: usize,
    pub skew: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_items: 200,
            n_maps: 10,
            height: 8,
            width: 8,
            n_classes: 4,
            skew: 1.0,
            seed: 7,
        }
    }
}

/// Number of maps carrying full-strength class signal for `n_maps` maps.
pub fn informative_count(n_maps: usize) -> usize {
    ((INFORMATIVE_FRACTION * n_maps as f64).ceil() as usize).clamp(1, n_maps)
}

/// Generates a labeled dataset whose class signal lives in per-class map
/// energy patterns.
///
/// A seeded permutation picks `ceil(0.4·N)` strong maps; the remaining maps
/// carry the same pattern scaled by `1 - skew`. Within a map the spatial
/// texture is zero-sum, so the pooled value is exactly the planted mean and
/// maps with zero amplitude pool to zero. Informative map `r` (in the
/// permutation order) favours class `r mod C`: its mean is positive for items
/// of that class and negative otherwise.
pub fn synth_dataset(spec: &SynthSpec) -> Result<Vec<FeatureMapSet>> {
    let SynthSpec {
        n_items,
        n_maps,
        height,
        width,
        n_classes,
        skew,
        seed,
    } = *spec;
    if n_items == 0 {
        return Err(param_err!("n_items must be at least 1"));
    }
    if n_classes == 0 {
        return Err(param_err!("n_classes must be at least 1"));
    }
    if height == 0 || width == 0 || n_maps == 0 {
        return Err(param_err!("invalid map shape {n_maps}x{height}x{width}"));
    }
    if n_maps < n_classes {
        return Err(param_err!("n_maps ({n_maps}) must be at least n_classes ({n_classes})"));
    }
    if !(0.0..=1.0).contains(&skew) {
        return Err(param_err!("skew must lie in [0, 1], got {skew}"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n_maps).collect();
    order.shuffle(&mut rng);
    let strong = informative_count(n_maps);
    // amplitude and owning class of every physical map index
    let mut amplitude = vec![0.0f64; n_maps];
    let mut owner = vec![0usize; n_maps];
    for (rank, &idx) in order.iter().enumerate() {
        amplitude[idx] = if rank < strong { 1.0 } else { 1.0 - skew };
        owner[idx] = rank % n_classes;
    }

    let texture = Normal::new(0.0, 0.5).expect("valid normal");
    let jitter = Normal::new(0.0, 0.15).expect("valid normal");
    let cells = height * width;
    let mut items = Vec::with_capacity(n_items);
    for item in 0..n_items {
        let label = rng.random_range(0..n_classes);
        let mut maps = Vec::with_capacity(n_maps);
        for i in 0..n_maps {
            let mean = if amplitude[i] > 0.0 {
                let sign = if owner[i] == label { 1.0 } else { -1.0 };
                amplitude[i] * (sign * rng.random_range(0.75..1.25) + jitter.sample(&mut rng))
            } else {
                0.0
            };
            let mut noise = vec![0.0f64; cells];
            for pair in 0..cells / 2 {
                let v: f64 = texture.sample(&mut rng);
                noise[2 * pair] = v;
                noise[2 * pair + 1] = -v;
            }
            noise.shuffle(&mut rng);
            let map: Vec<f32> = noise.iter().map(|n| (mean + n) as f32).collect();
            maps.push(map);
        }
        items.push(FeatureMapSet::new(
            height,
            width,
            maps,
            label,
            format!("synth:{seed}:{item}"),
        )?);
    }
    Ok(items)
}

/// Writes one `SEMF` record.
pub fn write_feature_maps<W: Write>(out: &mut W, set: &FeatureMapSet) -> std::io::Result<()> {
    let header_field = |v: usize| -> std::io::Result<[u8; 2]> {
        u16::try_from(v)
            .map(u16::to_le_bytes)
            .map_err(|_| std::io::Error::new(std::io::ErrorKind::InvalidInput, "field exceeds u16"))
    };
    out.write_all(SEMF_MAGIC)?;
    out.write_all(&SEMF_VERSION.to_le_bytes())?;
    out.write_all(&header_field(set.n_maps())?)?;
    out.write_all(&header_field(set.height)?)?;
    out.write_all(&header_field(set.width)?)?;
    out.write_all(&header_field(set.label)?)?;
    let mut buf = Vec::with_capacity(set.n_maps() * set.map_len() * 4);
    for map in &set.maps {
        for v in map {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&buf)
}

/// Parses one `SEMF` record from the front of `data`, returning the set and
/// the number of bytes consumed.
pub fn parse_feature_maps(data: &[u8], source_id: &str) -> Result<(FeatureMapSet, usize)> {
    if data.len() < SEMF_HEADER_LEN {
        return Err(Error::Format(format!(
            "truncated header: {} bytes, need {SEMF_HEADER_LEN}",
            data.len()
        )));
    }
    if &data[..4] != SEMF_MAGIC {
        return Err(Error::Format("bad magic, expected \"SEMF\"".into()));
    }
    let field = |at: usize| usize::from(u16::from_le_bytes([data[at], data[at + 1]]));
    let version = field(4);
    if version != usize::from(SEMF_VERSION) {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let (n, h, w, label) = (field(6), field(8), field(10), field(12));
    if n == 0 || h == 0 || w == 0 {
        return Err(Error::Format(format!("invalid dimensions {n}x{h}x{w}")));
    }
    let body = n * h * w * 4;
    let end = SEMF_HEADER_LEN + body;
    if data.len() < end {
        return Err(Error::Format(format!(
            "header declares {n} maps of {h}x{w} ({body} bytes) but only {} bytes follow",
            data.len() - SEMF_HEADER_LEN
        )));
    }
    let values: Vec<f32> = data[SEMF_HEADER_LEN..end]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format("non-finite activation in file".into()));
    }
    let maps = values.chunks(h * w).map(<[f32]>::to_vec).collect();
    let set = FeatureMapSet::new(h, w, maps, label, source_id)
        .map_err(|e| Error::Format(e.to_string()))?;
    Ok((set, end))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut data = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut data))
        .map_err(|e| Error::io(path, e))?;
    Ok(data)
}

/// Loads a file holding exactly one `SEMF` record.
pub fn load_feature_maps(path: &Path) -> Result<FeatureMapSet> {
    let data = read_file(path)?;
    let (set, used) = parse_feature_maps(&data, &path.display().to_string())?;
    if used != data.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after the declared maps",
            data.len() - used
        )));
    }
    Ok(set)
}

pub fn save_feature_maps(path: &Path, set: &FeatureMapSet) -> Result<()> {
    save_dataset(path, std::slice::from_ref(set))
}

/// Loads a dataset file: one or more concatenated `SEMF` records.
pub fn load_dataset(path: &Path) -> Result<Vec<FeatureMapSet>> {
    let data = read_file(path)?;
    let mut items = Vec::new();
    let mut at = 0;
    while at < data.len() {
        let id = format!("{}#{}", path.display(), items.len());
        let (set, used) = parse_feature_maps(&data[at..], &id)?;
        items.push(set);
        at += used;
    }
    if items.is_empty() {
        return Err(Error::Format(format!("{} holds no records", path.display())));
    }
    Ok(items)
}

pub fn save_dataset(path: &Path, items: &[FeatureMapSet]) -> Result<()> {
    let mut buf = Vec::new();
    for item in items {
        write_feature_maps(&mut buf, item).map_err(|e| Error::io(path, e))?;
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// One map quantized to `bits_per_sample` bits per activation.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedPayload {
    pub map_index: usize,
    pub min_val: f64,
    pub max_val: f64,
    pub bits_per_sample: u32,
    /// Codes, most significant bit first, in row-major activation order.
    pub bits: Vec<u8>,
}

impl QuantizedPayload {
    fn levels(&self) -> f64 {
        ((1u64 << self.bits_per_sample) - 1) as f64
    }

    /// Largest per-element reconstruction error the format allows.
    pub fn error_bound(&self) -> f64 {
        (self.max_val - self.min_val) / self.levels()
    }

    pub fn dequantize(&self) -> Vec<f64> {
        Self::dequantize_bits(&self.bits, self.min_val, self.max_val, self.bits_per_sample)
    }

    /// Dequantizes an arbitrary code stream (for example one received over
    /// the channel) with this payload's range header.
    pub fn dequantize_bits(bits: &[u8], min_val: f64, max_val: f64, bits_per_sample: u32) -> Vec<f64> {
        let b = bits_per_sample as usize;
        let levels = ((1u64 << bits_per_sample) - 1) as f64;
        let step = (max_val - min_val) / levels;
        bits.chunks(b)
            .map(|code| {
                let c = bits::read_uint(code);
                if c == 0 {
                    min_val
                } else {
                    min_val + c as f64 * step
                }
            })
            .collect()
    }
}

/// Uniform quantization of one map over its own `[min, max]` range.
pub fn quantize_map(map: &[f32], bits_per_sample: u32) -> Result<QuantizedPayload> {
    if !(1..=16).contains(&bits_per_sample) {
        return Err(param_err!("bits_per_sample must be in 1..=16, got {bits_per_sample}"));
    }
    if map.is_empty() {
        return Err(param_err!("cannot quantize an empty map"));
    }
    if map.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("map contains a non-finite activation".into()));
    }
    let min_val = map.iter().copied().fold(f32::INFINITY, f32::min) as f64;
    let max_val = map.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let levels = ((1u64 << bits_per_sample) - 1) as f64;
    let b = bits_per_sample as usize;
    let mut bits = Vec::with_capacity(map.len() * b);
    for &v in map {
        let code = if max_val > min_val {
            (((f64::from(v) - min_val) / (max_val - min_val)) * levels)
                .round()
                .clamp(0.0, levels) as u64
        } else {
            0
        };
        bits::push_uint(&mut bits, code, b);
    }
    Ok(QuantizedPayload {
        map_index: 0,
        min_val,
        max_val,
        bits_per_sample,
        bits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn smallest_legal_instance() {
        let spec = SynthSpec {
            n_items: 1,
            n_maps: 2,
            height: 1,
            width: 1,
            n_classes: 2,
            skew: 0.0,
            seed: 7,
        };
        let data = synth_dataset(&spec).unwrap();
        assert_eq!(data.len(), 1);
        assert_eq!(data[0].n_maps(), 2);
        assert!(data[0].maps().iter().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn synth_is_deterministic() {
        let spec = SynthSpec { n_items: 5, ..SynthSpec::default() };
        let a = synth_dataset(&spec).unwrap();
        let b = synth_dataset(&spec).unwrap();
        assert_eq!(a, b);
        let c = synth_dataset(&SynthSpec { seed: 8, ..spec }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn synth_rejects_bad_parameters() {
        let base = SynthSpec::default();
        for bad in [
            SynthSpec { n_classes: 0, ..base.clone() },
            SynthSpec { height: 0, ..base.clone() },
            SynthSpec { n_maps: 2, n_classes: 3, ..base.clone() },
            SynthSpec { n_items: 0, ..base.clone() },
            SynthSpec { skew: 1.5, ..base.clone() },
        ] {
            assert!(matches!(synth_dataset(&bad), Err(Error::Parameter(_))), "{bad:?}");
        }
    }

    #[test]
    fn zero_amplitude_maps_pool_to_zero() {
        let data = synth_dataset(&SynthSpec { n_items: 3, ..SynthSpec::default() }).unwrap();
        for item in &data {
            let pooled = item.pooled();
            let silent = pooled.iter().filter(|g| g.abs() < 1e-6).count();
            assert_eq!(silent, 10 - informative_count(10));
        }
    }

    #[test]
    fn constant_map_quantizes_to_zero_codes() {
        let q = quantize_map(&[5.0; 16], 8).unwrap();
        assert_eq!((q.min_val, q.max_val), (5.0, 5.0));
        assert!(q.bits.iter().all(|&b| b == 0));
        assert!(q.dequantize().iter().all(|&v| v == 5.0));
    }

    #[test]
    fn two_level_map() {
        let q = quantize_map(&[0.0, 1.0], 1).unwrap();
        assert_eq!(q.bits, vec![0, 1]);
        assert_eq!(q.dequantize(), vec![0.0, 1.0]);
    }

    #[test]
    fn quantize_rejects_non_finite_and_bad_width() {
        assert!(matches!(quantize_map(&[f32::NAN], 8), Err(Error::Data(_))));
        assert!(matches!(quantize_map(&[1.0], 0), Err(Error::Parameter(_))));
        assert!(matches!(quantize_map(&[1.0], 17), Err(Error::Parameter(_))));
    }

    #[test]
    fn random_8x8_error_within_range_over_255() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let map: Vec<f32> = (0..64).map(|_| rng.random_range(-3.0..3.0)).collect();
        let q = quantize_map(&map, 8).unwrap();
        let bound = (q.max_val - q.min_val) / 255.0;
        for (orig, rec) in map.iter().zip(q.dequantize()) {
            assert!((f64::from(*orig) - rec).abs() <= bound);
        }
    }

    #[test]
    fn file_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.semf");
        let item = synth_dataset(&SynthSpec { n_items: 1, ..SynthSpec::default() })
            .unwrap()
            .remove(0);
        save_feature_maps(&path, &item).unwrap();
        assert_eq!(load_feature_maps(&path).unwrap(), item);

        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..10]).unwrap();
        assert!(matches!(load_feature_maps(&path), Err(Error::Format(_))));

        // header says N=3 but only two maps follow
        let two = FeatureMapSet::new(1, 2, vec![vec![1.0, 2.0], vec![3.0, 4.0]], 0, "x").unwrap();
        let mut buf = Vec::new();
        write_feature_maps(&mut buf, &two).unwrap();
        buf[6] = 3;
        std::fs::write(&path, &buf).unwrap();
        assert!(matches!(load_feature_maps(&path), Err(Error::Format(_))));

        buf[6] = 2;
        buf[SEMF_HEADER_LEN..SEMF_HEADER_LEN + 4].copy_from_slice(&f32::INFINITY.to_le_bytes());
        std::fs::write(&path, &buf).unwrap();
        assert!(matches!(load_feature_maps(&path), Err(Error::Format(_))));
    }

    #[test]
    fn dataset_file_holds_many_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("set.semf");
        let data = synth_dataset(&SynthSpec { n_items: 4, ..SynthSpec::default() }).unwrap();
        save_dataset(&path, &data).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), data);
    }

    proptest! {
        #[test]
        fn quantization_error_bound(
            values in proptest::collection::vec(-1.0e3f32..1.0e3, 1..80),
            b in 1u32..=16,
        ) {
            let q = quantize_map(&values, b).unwrap();
            prop_assert_eq!(q.bits.len(), values.len() * b as usize);
            let bound = q.error_bound();
            for (orig, rec) in values.iter().zip(q.dequantize()) {
                prop_assert!((f64::from(*orig) - rec).abs() <= bound * (1.0 + 1e-9));
            }
        }
    }
}
