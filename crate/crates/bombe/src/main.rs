//! Command-line Monte Carlo harness for the multilevel coset codes and
//! their 16-QAM baselines.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use bombe::sim::{
    build_transceiver_with_sequence, compare_curves, construct_sequence, read_csv, run_sweep,
    write_csv, Metric, Scheme, SimConfig,
};
use bombe::{Error, Result};

#[derive(Parser)]
#[command(name = "bombe", about = "Multilevel coset codes over AWGN: construction, sweeps, comparisons")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the Monte Carlo code construction and write a reliability file.
    Construct {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output reliability-sequence file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate BER/BLER over the configured SNR grid.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output CSV file (CSV goes to stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// dB gain of curve A over curve B at a target error rate.
    Compare {
        /// Sweep CSV of the first scheme.
        #[arg(long)]
        a: PathBuf,
        /// Sweep CSV of the second scheme.
        #[arg(long)]
        b: PathBuf,
        /// Target error rate, e.g. 1e-3.
        #[arg(long)]
        target: f64,
        /// Which column to compare: ber or bler.
        #[arg(long, default_value = "bler")]
        metric: String,
    },
    /// Write the scheme's constellation as CSV.
    DumpConstellation {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Configuration sources, applied in order: defaults, `--config` file,
/// direct flags, then `--set key=value` overrides.
#[derive(Args)]
struct ConfigArgs {
    /// Flat key-value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// bombe-d4, mlc-qam16 or bicm-qam16.
    #[arg(long)]
    scheme: Option<String>,
    /// Coded bits per frame.
    #[arg(long = "n-b")]
    n_b: Option<usize>,
    /// Code rate as a fraction, e.g. 11/16.
    #[arg(long)]
    rate: Option<String>,
    /// SCL list size.
    #[arg(long)]
    list: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "snr-start")]
    snr_start: Option<f64>,
    #[arg(long = "snr-stop")]
    snr_stop: Option<f64>,
    #[arg(long = "snr-step")]
    snr_step: Option<f64>,
    #[arg(long = "min-frame-errors")]
    min_frame_errors: Option<u64>,
    #[arg(long = "max-frames")]
    max_frames: Option<u64>,
    /// Worker threads (0 = library default); never affects results.
    #[arg(long)]
    workers: Option<usize>,
    /// Reliability-sequence file to reuse instead of constructing.
    #[arg(long)]
    seq: Option<PathBuf>,
    /// Genie trials per construction grid point.
    #[arg(long = "construction-trials")]
    construction_trials: Option<u64>,
    #[arg(long = "capacity-samples")]
    capacity_samples: Option<u64>,
    /// Use max-log decoding kernels.
    #[arg(long = "max-log")]
    max_log: bool,
    /// Disable the per-level CRCs.
    #[arg(long = "no-crc")]
    no_crc: bool,
    /// Additional `key=value` overrides.
    #[arg(long = "set")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<SimConfig> {
        let mut cfg = match &self.config {
            Some(path) => SimConfig::load(BufReader::new(File::open(path)?))?,
            None => SimConfig::default(),
        };
        if let Some(v) = &self.scheme {
            cfg.apply("scheme", v)?;
        }
        if let Some(v) = self.n_b {
            cfg.apply("n_b", &v.to_string())?;
        }
        if let Some(v) = &self.rate {
            cfg.apply("rate", v)?;
        }
        if let Some(v) = self.list {
            cfg.list = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.snr_start {
            cfg.snr_start_db = v;
        }
        if let Some(v) = self.snr_stop {
            cfg.snr_stop_db = v;
        }
        if let Some(v) = self.snr_step {
            cfg.snr_step_db = v;
        }
        if let Some(v) = self.min_frame_errors {
            cfg.min_frame_errors = v;
        }
        if let Some(v) = self.max_frames {
            cfg.max_frames = v;
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        if let Some(v) = &self.seq {
            cfg.seq_path = Some(v.display().to_string());
        }
        if let Some(v) = self.construction_trials {
            cfg.construction_trials = v;
        }
        if let Some(v) = self.capacity_samples {
            cfg.capacity_samples = v;
        }
        if self.max_log {
            cfg.max_log = true;
        }
        if self.no_crc {
            cfg.crc = false;
        }
        for kv in &self.set {
            let (key, value) = kv
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("--set expects key=value, got '{kv}'")))?;
            cfg.apply(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Construct { cfg, out } => {
            let cfg = cfg.resolve()?;
            let seq = construct_sequence(&cfg)?;
            // Exercise the full assembly so infeasible rates fail here, not
            // at sweep time.
            build_transceiver_with_sequence(&cfg, &seq)?;
            let mut file = File::create(&out)?;
            writeln!(file, "# config {}", cfg.canonical())?;
            writeln!(file, "# config_hash {}", cfg.hash())?;
            seq.save(&mut file)?;
            println!(
                "wrote {} ({} positions, design sigma {:.6})",
                out.display(),
                seq.position_count(),
                seq.design_sigma
            );
        }
        Cmd::Sweep { cfg, out } => {
            let cfg = cfg.resolve()?;
            let points = run_sweep(&cfg)?;
            for p in &points {
                eprintln!(
                    "snr {:>6.2} dB  frames {:>8}  ber {:.3e}  bler {:.3e}  ({:.1}s)",
                    p.snr_db, p.frames, p.ber, p.bler, p.wall_time_s
                );
            }
            match out {
                Some(path) => {
                    let mut file = File::create(&path)?;
                    write_csv(&points, &cfg.hash(), &mut file)?;
                    println!("wrote {}", path.display());
                }
                None => write_csv(&points, &cfg.hash(), std::io::stdout().lock())?,
            }
        }
        Cmd::Compare {
            a,
            b,
            target,
            metric,
        } => {
            let metric = Metric::parse(&metric)?;
            let rows_a = read_csv(BufReader::new(File::open(&a)?))?;
            let rows_b = read_csv(BufReader::new(File::open(&b)?))?;
            let gain = compare_curves(&rows_a, &rows_b, target, metric)?;
            println!("gain_db = {gain:.4}");
        }
        Cmd::DumpConstellation { cfg, out } => {
            let cfg = cfg.resolve()?;
            let constellation = match cfg.scheme {
                Scheme::BicmQam16 => {
                    return Err(Error::InvalidParameter(
                        "bicm-qam16 has no lattice constellation; use mlc-qam16".into(),
                    ))
                }
                _ => scheme_constellation_for_dump(cfg.scheme)?,
            };
            match out {
                Some(path) => {
                    constellation.dump_csv(File::create(&path)?)?;
                    println!("wrote {}", path.display());
                }
                None => constellation.dump_csv(std::io::stdout().lock())?,
            }
        }
    }
    Ok(())
}

fn scheme_constellation_for_dump(scheme: Scheme) -> Result<bombe::constellation::ShapedConstellation> {
    use bombe::constellation::ShapedConstellation;
    use bombe::lattice::Lattice;
    let lat = match scheme {
        Scheme::BombeD4 => Lattice::d4(),
        Scheme::MlcQam16 => Lattice::integer(2),
        Scheme::BicmQam16 => unreachable!(),
    };
    let dither = ShapedConstellation::default_dither(&lat, 2);
    ShapedConstellation::build(lat, 2, dither)
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
