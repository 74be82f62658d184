//! Run configuration and its flat `key = value` file format.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::featuremap::{SynthSpec, DEFAULT_BITS_PER_SAMPLE};
use crate::importance::{DEFAULT_EPOCHS, DEFAULT_LEARNING_RATE};
use crate::keys::{DEFAULT_L_PLK, DEFAULT_L_SCORES, DEFAULT_L_SKEY};
use crate::ofdm::{
    ChannelSpec, Qam, DEFAULT_CP_LEN, DEFAULT_L_FFT, DEFAULT_L_TAPS, DEFAULT_N_PILOTS, DEFAULT_QAM_ORDER,
};

/// Everything a run needs. See [`RunConfig::KEYS`] for the file keys.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset_file: Option<PathBuf>,
    pub head_file: Option<PathBuf>,
    pub synth: SynthSpec,
    pub epochs: usize,
    pub learning_rate: f64,
    pub head_seed: u64,
    pub epsilon: f64,
    pub epsilons: Vec<f64>,
    pub snr_db: Vec<f64>,
    pub l_fft: usize,
    pub cp_len: usize,
    pub l_taps: usize,
    pub tap_decay: f64,
    pub n_pilots: usize,
    pub qam_order: usize,
    /// OFDM data symbols per frame; 0 sizes the frame for all maps.
    pub data_symbols: usize,
    pub bits_per_sample: u32,
    pub l_scores: u32,
    pub l_skey: u32,
    pub l_plk: usize,
    pub plk_noise: f64,
    pub trials: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub symbol_duration_us: f64,
    pub encrypt: bool,
    pub adaptive_allocation: bool,
    pub eve_same_channel: bool,
    pub plot: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset_file: None,
            head_file: None,
            synth: SynthSpec::default(),
            epochs: DEFAULT_EPOCHS,
            learning_rate: DEFAULT_LEARNING_RATE,
            head_seed: 7,
            epsilon: 0.01,
            epsilons: vec![0.0, 1e-4, 1e-3, 0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5],
            snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            l_fft: DEFAULT_L_FFT,
            cp_len: DEFAULT_CP_LEN,
            l_taps: DEFAULT_L_TAPS,
            tap_decay: 2.0,
            n_pilots: DEFAULT_N_PILOTS,
            qam_order: DEFAULT_QAM_ORDER,
            data_symbols: 0,
            bits_per_sample: DEFAULT_BITS_PER_SAMPLE,
            l_scores: DEFAULT_L_SCORES,
            l_skey: DEFAULT_L_SKEY,
            l_plk: DEFAULT_L_PLK,
            plk_noise: 0.0,
            trials: 256,
            seed: 2024,
            out_dir: PathBuf::from("out"),
            symbol_duration_us: 1.0,
            encrypt: true,
            adaptive_allocation: true,
            eve_same_channel: false,
            plot: false,
        }
    }
}

fn parse_list(value: &str) -> std::result::Result<Vec<f64>, String> {
    value
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}")))
        .collect()
}

fn parse_bool(value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(format!("{value:?} is not a boolean")),
    }
}

fn num<T: std::str::FromStr>(value: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| format!("{value:?}: {e}"))
}

impl RunConfig {
    /// Recognized configuration keys.
    pub const KEYS: &'static [&'static str] = &[
        "dataset_file",
        "head_file",
        "n_items",
        "n_maps",
        "map_height",
        "map_width",
        "n_classes",
        "skew",
        "dataset_seed",
        "epochs",
        "learning_rate",
        "head_seed",
        "epsilon",
        "epsilons",
        "snr_db",
        "l_fft",
        "cp_len",
        "l_taps",
        "tap_decay",
        "n_pilots",
        "qam_order",
        "data_symbols",
        "bits_per_sample",
        "l_scores",
        "l_skey",
        "l_plk",
        "plk_noise",
        "trials",
        "seed",
        "out_dir",
        "symbol_duration_us",
        "encrypt",
        "adaptive_allocation",
        "eve_same_channel",
        "plot",
    ];

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let res: std::result::Result<(), String> = (|| {
            match key {
                "dataset_file" => self.dataset_file = (!v.is_empty()).then(|| PathBuf::from(v)),
                "head_file" => self.head_file = (!v.is_empty()).then(|| PathBuf::from(v)),
                "n_items" => self.synth.n_items = num(v)?,
                "n_maps" => self.synth.n_maps = num(v)?,
                "map_height" => self.synth.height = num(v)?,
                "map_width" => self.synth.width = num(v)?,
                "n_classes" => self.synth.n_classes = num(v)?,
                "skew" => self.synth.skew = num(v)?,
                "dataset_seed" => self.synth.seed = num(v)?,
                "epochs" => self.epochs = num(v)?,
                "learning_rate" => self.learning_rate = num(v)?,
                "head_seed" => self.head_seed = num(v)?,
                "epsilon" => self.epsilon = num(v)?,
                "epsilons" => self.epsilons = parse_list(v)?,
                "snr_db" => self.snr_db = parse_list(v)?,
                "l_fft" => self.l_fft = num(v)?,
                "cp_len" => self.cp_len = num(v)?,
                "l_taps" => self.l_taps = num(v)?,
                "tap_decay" => self.tap_decay = num(v)?,
                "n_pilots" => self.n_pilots = num(v)?,
                "qam_order" => self.qam_order = num(v)?,
                "data_symbols" => self.data_symbols = num(v)?,
                "bits_per_sample" => self.bits_per_sample = num(v)?,
                "l_scores" => self.l_scores = num(v)?,
                "l_skey" => self.l_skey = num(v)?,
                "l_plk" => self.l_plk = num(v)?,
                "plk_noise" => self.plk_noise = num(v)?,
                "trials" => self.trials = num(v)?,
                "seed" => self.seed = num(v)?,
                "out_dir" => self.out_dir = PathBuf::from(v),
                "symbol_duration_us" => self.symbol_duration_us = num(v)?,
                "encrypt" => self.encrypt = parse_bool(v)?,
                "adaptive_allocation" => self.adaptive_allocation = parse_bool(v)?,
                "eve_same_channel" => self.eve_same_channel = parse_bool(v)?,
                "plot" => self.plot = parse_bool(v)?,
                _ => return Err("unknown key".to_string()),
            }
            Ok(())
        })();
        res.map_err(|e| Error::Config(format!("{key}: {e}")))
    }

    /// Parses a config file body on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            cfg.set(key.trim(), value)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Renders every key, in [`RunConfig::KEYS`] order.
    pub fn to_text(&self) -> String {
        let list = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let values: Vec<String> = vec![
            path(&self.dataset_file),
            path(&self.head_file),
            self.synth.n_items.to_string(),
            self.synth.n_maps.to_string(),
            self.synth.height.to_string(),
            self.synth.width.to_string(),
            self.synth.n_classes.to_string(),
            self.synth.skew.to_string(),
            self.synth.seed.to_string(),
            self.epochs.to_string(),
            self.learning_rate.to_string(),
            self.head_seed.to_string(),
            self.epsilon.to_string(),
            list(&self.epsilons),
            list(&self.snr_db),
            self.l_fft.to_string(),
            self.cp_len.to_string(),
            self.l_taps.to_string(),
            self.tap_decay.to_string(),
            self.n_pilots.to_string(),
            self.qam_order.to_string(),
            self.data_symbols.to_string(),
            self.bits_per_sample.to_string(),
            self.l_scores.to_string(),
            self.l_skey.to_string(),
            self.l_plk.to_string(),
            self.plk_noise.to_string(),
            self.trials.to_string(),
            self.seed.to_string(),
            self.out_dir.display().to_string(),
            self.symbol_duration_us.to_string(),
            self.encrypt.to_string(),
            self.adaptive_allocation.to_string(),
            self.eve_same_channel.to_string(),
            self.plot.to_string(),
        ];
        Self::KEYS
            .iter()
            .zip(values)
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.snr_db.is_empty() || self.snr_db.iter().any(|s| !s.is_finite()) {
            return fail("snr_db must list at least one finite value".into());
        }
        if self.trials == 0 {
            return fail("trials must be at least 1".into());
        }
        if !(self.epsilon >= 0.0) || self.epsilons.iter().any(|e| !(*e >= 0.0)) {
            return fail("epsilon values must be nonnegative".into());
        }
        if self.epsilons.is_empty() || self.epsilons.windows(2).any(|w| w[0] > w[1]) {
            return fail("epsilons must be a nonempty ascending list".into());
        }
        if Qam::new(self.qam_order).is_err() {
            return fail(format!("qam_order {} is not 4, 16 or 64", self.qam_order));
        }
        if self.l_fft < 2 || self.cp_len >= self.l_fft {
            return fail(format!("need l_fft >= 2 and cp_len < l_fft, got {}/{}", self.l_fft, self.cp_len));
        }
        if self.l_taps == 0 || self.l_taps > self.cp_len + 1 {
            return fail(format!(
                "l_taps {} must be in 1..={} so the cyclic prefix covers the channel",
                self.l_taps,
                self.cp_len + 1
            ));
        }
        if !(self.tap_decay > 0.0) {
            return fail("tap_decay must be positive".into());
        }
        if self.n_pilots == 0 {
            return fail("n_pilots must be at least 1".into());
        }
        if !(1..=16).contains(&self.bits_per_sample) {
            return fail("bits_per_sample must be in 1..=16".into());
        }
        if !(1..=32).contains(&self.l_scores) || !(1..=64).contains(&self.l_skey) || self.l_plk == 0 {
            return fail("key lengths out of range (l_scores 1..=32, l_skey 1..=64, l_plk >= 1)".into());
        }
        if !(self.plk_noise >= 0.0) || !(self.symbol_duration_us > 0.0) || !(self.learning_rate > 0.0) {
            return fail("plk_noise, symbol_duration_us and learning_rate must be positive".into());
        }
        Ok(())
    }

    pub fn channel_spec(&self) -> ChannelSpec {
        ChannelSpec {
            l_taps: self.l_taps,
            l_fft: self.l_fft,
            decay: self.tap_decay,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn parses_comments_and_lists() {
        let cfg = RunConfig::parse("# header\nsnr_db = 0, 10 # two points\n\nencrypt = false\nepsilon=0.2\n").unwrap();
        assert_eq!(cfg.snr_db, vec![0.0, 10.0]);
        assert!(!cfg.encrypt);
        assert_eq!(cfg.epsilon, 0.2);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_errors() {
        assert!(matches!(RunConfig::parse("colour = red"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("trials = many"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("trials"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("trials = 0"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("epsilons = 0.1, 0.01"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("cp_len = 4"), Err(Error::Config(_))));
    }
}
