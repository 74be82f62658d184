use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use semcast::featuremap;
use semcast::importance::train_head_with_history;
use semcast::pipeline::{self, RunConfig, Session};
use semcast::{Error, Result};

#[derive(Parser)]
#[command(name = "semcast", version, about = "Semantic-entropy-guided encrypted OFDM transmission simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic feature-map dataset file.
    Synth(Common),
    /// Fit the importance head and save its parameters.
    Train(Common),
    /// One transmission; prints the trial report.
    Run(Common),
    /// BER of the legitimate receiver and the eavesdropper versus SNR.
    BerSweep(Common),
    /// Symbols, latency proxy and accuracy versus the entropy budget.
    LatencySweep(Common),
    /// Brute-force search-space sizes at the configured key lengths.
    SearchSpace(Common),
}

#[derive(Args)]
struct Common {
    /// Config file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// SNR list in dB, comma separated.
    #[arg(long, value_delimiter = ',')]
    snr: Option<Vec<f64>>,
    /// Entropy budget(s), comma separated; a list sets the latency-sweep grid.
    #[arg(long, value_delimiter = ',')]
    epsilon: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Any other config key, as `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects key=value, got {kv:?}")))?;
            cfg.set(k.trim(), v)?;
        }
        if let Some(snr) = &self.snr {
            cfg.snr_db = snr.clone();
        }
        if let Some(eps) = &self.epsilon {
            if let [single] = eps.as_slice() {
                cfg.epsilon = *single;
            }
            cfg.epsilons = eps.clone();
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(trials) = self.trials {
            cfg.trials = trials;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn plot_notice(cfg: &RunConfig) {
    if cfg.plot {
        println!("plot: no plotting backend available; skipped (CSV written)");
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(c) => {
            let cfg = c.config()?;
            let items = featuremap::synth_dataset(&cfg.synth)?;
            std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
            let path = cfg.out_dir.join("dataset.semf");
            featuremap::save_dataset(&path, &items)?;
            println!("wrote {} items to {}", items.len(), path.display());
        }
        Command::Train(c) => {
            let cfg = c.config()?;
            let dataset = pipeline::load_or_synth(&cfg)?;
            let report = train_head_with_history(&dataset, cfg.synth.n_classes, cfg.epochs, cfg.learning_rate, cfg.head_seed)?;
            let mut losses = String::from("epoch,loss\n");
            for (i, l) in report.losses.iter().enumerate() {
                losses.push_str(&format!("{i},{l:.9}\n"));
            }
            pipeline::write_output(&cfg.out_dir, "train_loss.csv", losses.as_bytes())?;
            let path = cfg.out_dir.join("head.semh");
            report.head.save(&path)?;
            println!("training accuracy {:.4}; head saved to {}", report.accuracy, path.display());
        }
        Command::Run(c) => {
            let cfg = c.config()?;
            let session = Session::prepare(&cfg)?;
            let r = pipeline::run_single(&session)?;
            pipeline::write_output(&cfg.out_dir, "run.csv", pipeline::records_csv(std::slice::from_ref(&r)).as_bytes())?;
            if r.nothing_transmitted() {
                println!("nothing transmitted: epsilon {} selects no maps", r.epsilon);
            }
            println!("item            {}", r.item);
            println!("snr_db          {}", r.snr_db);
            println!("epsilon         {}", r.epsilon);
            println!("lambda          {}", r.lambda);
            println!("symbols         {}", r.symbols);
            println!("latency_us      {}", r.latency_us);
            println!("payload_bits    {}", r.payload_bits);
            println!("legit_ber       {:.6}", r.legit_ber());
            println!("eve_ber         {:.6}", r.eve_ber());
            println!("l_cha           {:.6}", r.l_cha);
            println!("correct         {}", r.correct);
            println!("perm_digest     {:016x}", r.perm_digest);
            println!("seeds           channel={} noise={} eve={}", r.channel_seed, r.noise_seed, r.eve_seed);
        }
        Command::BerSweep(c) => {
            let cfg = c.config()?;
            let session = Session::prepare(&cfg)?;
            let sweep = pipeline::run_ber_sweep(&session)?;
            pipeline::write_output(&cfg.out_dir, "ber_sweep.csv", sweep.to_csv().as_bytes())?;
            pipeline::write_output(&cfg.out_dir, "constellation.csv", sweep.constellation_csv().as_bytes())?;
            pipeline::write_output(&cfg.out_dir, "ber_trials.csv", pipeline::records_csv(&sweep.records).as_bytes())?;
            print!("{}", sweep.to_csv());
            plot_notice(&cfg);
        }
        Command::LatencySweep(c) => {
            let cfg = c.config()?;
            let session = Session::prepare(&cfg)?;
            let sweep = pipeline::run_latency_sweep(&session)?;
            pipeline::write_output(&cfg.out_dir, "latency_sweep.csv", sweep.to_csv().as_bytes())?;
            print!("{}", sweep.to_csv());
            plot_notice(&cfg);
        }
        Command::SearchSpace(c) => {
            let cfg = c.config()?;
            let rows = pipeline::search_space_table(&cfg)?;
            let csv = pipeline::search_space_csv(&rows);
            pipeline::write_output(&cfg.out_dir, "search_space.csv", csv.as_bytes())?;
            for (name, s) in &rows {
                println!("{name:<20} {s}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Parameter(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
