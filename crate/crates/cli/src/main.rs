use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use irisadv::experiment::commands::{self, CommandError, EXIT_IO};
use irisadv::experiment::ExperimentConfig;

/// Gabor iris codes, a U-Net surrogate and gradient-sign attacks on them.
#[derive(Parser)]
#[command(name = "irisadv", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Experiment settings. Every flag mirrors a config-file key; flags win
/// over the file.
#[derive(Args, Default)]
struct Settings {
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// desk or full.
    #[arg(long)]
    profile: Option<String>,
    #[arg(long)]
    data_dir: Option<String>,
    #[arg(long)]
    bank: Option<String>,
    #[arg(long)]
    checkpoint: Option<String>,
    #[arg(long)]
    out_dir: Option<String>,
    /// Comma list, descending.
    #[arg(long)]
    epsilons: Option<String>,
    /// Comma list, ascending.
    #[arg(long)]
    caps: Option<String>,
    /// Comma list of 1, 2, 3.
    #[arg(long)]
    scenarios: Option<String>,
    /// Comma list of non-targeted, targeted.
    #[arg(long)]
    modes: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    subset_size: Option<String>,
    #[arg(long)]
    identities: Option<String>,
    #[arg(long)]
    samples_per_eye: Option<String>,
    #[arg(long)]
    noise_level: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    max_iterations: Option<String>,
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    mode: Option<String>,
    /// identity:eye:sample, e.g. 15:L:2
    #[arg(long)]
    sample: Option<String>,
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    gallery: Option<String>,
    #[arg(long)]
    subset_seed: Option<String>,
    #[arg(long)]
    verifier_seed: Option<String>,
}

impl Settings {
    fn resolve(&self) -> Result<ExperimentConfig, CommandError> {
        let mut config = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        let flags = [
            ("profile", &self.profile),
            ("data_dir", &self.data_dir),
            ("bank", &self.bank),
            ("checkpoint", &self.checkpoint),
            ("out_dir", &self.out_dir),
            ("epsilons", &self.epsilons),
            ("caps", &self.caps),
            ("scenarios", &self.scenarios),
            ("modes", &self.modes),
            ("trials", &self.trials),
            ("seed", &self.seed),
            ("subset_size", &self.subset_size),
            ("identities", &self.identities),
            ("samples_per_eye", &self.samples_per_eye),
            ("noise_level", &self.noise_level),
            ("epochs", &self.epochs),
            ("epsilon", &self.epsilon),
            ("max_iterations", &self.max_iterations),
            ("scenario", &self.scenario),
            ("mode", &self.mode),
            ("sample", &self.sample),
            ("target", &self.target),
            ("gallery", &self.gallery),
            ("subset_seed", &self.subset_seed),
            ("verifier_seed", &self.verifier_seed),
        ];
        // profile resets subset_size, so it goes first
        for (k, v) in flags.iter() {
            if let Some(v) = v {
                if *k == "profile" {
                    config.set(k, v)?;
                }
            }
        }
        for (k, v) in flags {
            if let Some(v) = v {
                if k != "profile" {
                    config.set(k, v)?;
                }
            }
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate and store a synthetic corpus.
    GenData(Settings),
    /// Train the surrogate on the stored corpus.
    Train(Settings),
    /// Attack one corpus sample.
    Attack(Settings),
    /// Run an ε sweep and write the report CSVs.
    Sweep(Settings),
    /// Encode an iris/mask pair into a code.
    Encode {
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        iris: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        /// Code bits (PBM).
        #[arg(long)]
        out: PathBuf,
        /// Code validity mask (PBM).
        #[arg(long)]
        out_mask: PathBuf,
    },
    /// Encode two samples and match them.
    Match {
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        a_iris: PathBuf,
        #[arg(long)]
        a_mask: PathBuf,
        #[arg(long)]
        b_iris: PathBuf,
        #[arg(long)]
        b_mask: PathBuf,
        /// Compare only a seeded location set of `subset_size` bits.
        #[arg(long)]
        subset_seed: Option<u64>,
        #[arg(long, default_value_t = 256)]
        subset_size: usize,
    },
}

fn run(command: Command) -> Result<i32, CommandError> {
    match command {
        Command::GenData(s) => {
            let summary = commands::gen_data(&s.resolve()?)?;
            println!("{}", summary.stats);
            println!("samples = {}", summary.samples);
            println!("manifest = {}", summary.manifest.display());
            println!("bank = {}", summary.bank.display());
        }
        Command::Train(s) => {
            let summary = commands::train(&s.resolve()?)?;
            for (e, l) in summary.curve.iter().enumerate() {
                println!("epoch {e} loss {l:.6}");
            }
            println!("checkpoint = {}", summary.checkpoint.display());
            println!("loss_csv = {}", summary.loss_csv.display());
            println!("bit_error = {}", summary.bit_error.rate);
        }
        Command::Attack(s) => {
            let summary = commands::attack(&s.resolve()?)?;
            print!("{}", summary.report);
            return Ok(summary.exit_code());
        }
        Command::Sweep(s) => {
            let config = s.resolve()?;
            let report = commands::sweep(&config)?;
            print!("{}", report.table_csv()?);
            print!("{}", report.success_csv()?);
            for p in commands::sweep_paths(&config.out_dir) {
                println!("wrote {}", p.display());
            }
        }
        Command::Encode { bank, iris, mask, out, out_mask } => {
            let code = commands::encode_files(&bank, &iris, &mask, &out, &out_mask)?;
            let (rows, cols) = code.bits.dims();
            println!("code {rows}x{cols}, {} valid bits", code.mask.count_ones());
        }
        Command::Match { bank, a_iris, a_mask, b_iris, b_mask, subset_seed, subset_size } => {
            let decision = commands::match_files(
                &bank,
                (&a_iris, &a_mask),
                (&b_iris, &b_mask),
                subset_seed.map(|s| (s, subset_size)),
            )?;
            println!("hd = {}", decision.hd);
            println!("compared_bits = {}", decision.compared_bits);
            println!("accepted = {}", decision.accepted);
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_IO as u8 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
