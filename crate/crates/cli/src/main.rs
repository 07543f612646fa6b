use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use dyadrep::{run_command, Command, Error, RawConfig};

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Cmd {
    GridStats,
    WaveletCheck,
    DecayAudit,
    Represent,
    Convergence,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::GridStats => Command::GridStats,
            Cmd::WaveletCheck => Command::WaveletCheck,
            Cmd::DecayAudit => Command::DecayAudit,
            Cmd::Represent => Command::Represent,
            Cmd::Convergence => Command::Convergence,
        }
    }
}

/// Dyadic wavelet-shift experiments for Calderón–Zygmund operators.
///
/// Exit codes: 0 ok, 2 configuration error, 3 numerical finding,
/// 4 convergence or resource failure.
#[derive(Parser, Debug)]
#[command(version)]
struct Cli {
    command: Cmd,
    /// TOML config file.
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory (overrides DYADREP_OUT and the config).
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    filter: Option<String>,
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    s: Option<u32>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    r: Option<u32>,
    #[arg(long)]
    n_max: Option<u32>,
    #[arg(long)]
    n_omega: Option<u64>,
    #[arg(long)]
    mc_samples: Option<u64>,
    #[arg(long)]
    allow_unsatisfied: bool,
}

impl Cli {
    fn apply(&self, raw: &mut RawConfig) {
        macro_rules! set {
            ($($f:ident),*) => {$(
                if let Some(v) = &self.$f {
                    raw.$f = Some(v.clone());
                }
            )*};
        }
        set!(seed, filter, kernel, s, eps, theta, r, n_max, n_omega, mc_samples);
        if self.allow_unsatisfied {
            raw.allow_unsatisfied = Some(true);
        }
        if let Some(o) = self.out.clone().or_else(|| std::env::var_os("DYADREP_OUT").map(PathBuf::from)) {
            raw.output = Some(o);
        }
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    let mut raw = RawConfig::from_path(&cli.config)?;
    cli.apply(&mut raw);
    let cfg = raw.resolve()?;
    let report = run_command(&cfg, cli.command.into())?;
    for f in &report.files {
        println!("{}", report.output.join(f).display());
    }
    match report.finding {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dyadrep: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
