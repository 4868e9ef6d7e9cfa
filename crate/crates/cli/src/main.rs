use clap::{Parser, Subcommand};
use previnc::commands::{
    self, AgeRange, CmdError, OutputPaths, RunOptions,
};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "previnc",
    version,
    about = "Estimate age-specific incidence of chronic conditions from age-grouped prevalence data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct CommonArgs {
    /// Initial age a0 with p(a0) = p0 [default: 20]
    #[arg(long)]
    a0: Option<f64>,
    /// Initial prevalence p0 [default: 0]
    #[arg(long)]
    p0: Option<f64>,
    /// Confidence level for intervals [default: 0.95]
    #[arg(long)]
    level: Option<f64>,
    /// Quadrature/solver base step in years [default: 0.1]
    #[arg(long)]
    step: Option<f64>,
    /// Worker threads for per-age interval evaluation [default: 1]
    #[arg(long)]
    threads: Option<usize>,
    /// key = value file supplying any of the options above; explicit
    /// flags win on conflict
    #[arg(long)]
    config: Option<PathBuf>,
}

impl CommonArgs {
    fn resolve(&self) -> Result<RunOptions, CmdError> {
        commands::merge_run_config(
            self.config.as_deref(),
            self.a0,
            self.p0,
            self.level,
            self.step,
            self.threads,
        )
    }
}

#[derive(Subcommand)]
enum Command {
    /// Maximum-likelihood incidence fit assuming equal mortality of
    /// diseased and non-diseased
    Fit {
        /// Current-status CSV (age_lo,age_hi,n,c)
        data: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
        /// Write the fit result JSON here
        #[arg(long)]
        out_json: Option<PathBuf>,
        /// Write the fitted incidence curve (age,incidence,ci_lo,ci_hi)
        #[arg(long)]
        out_curve: Option<PathBuf>,
    },
    /// Maximum-likelihood incidence fit with differential mortality
    /// from a life table
    FitMortality {
        /// Current-status CSV (age_lo,age_hi,n,c)
        data: PathBuf,
        /// Life-table CSV (age_lo,age_hi,general,diseased)
        lifetable: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        out_json: Option<PathBuf>,
        #[arg(long)]
        out_curve: Option<PathBuf>,
    },
    /// Logit-linear regression of group prevalence on age
    Regress {
        /// Current-status CSV (age_lo,age_hi,n,c)
        data: PathBuf,
        /// Write {"beta0":…,"beta1":…} here
        #[arg(long)]
        out_json: Option<PathBuf>,
        /// Write the incidence curve (age,incidence) here
        #[arg(long)]
        out_curve: Option<PathBuf>,
    },
    /// Plug-in incidence from a two-period prevalence surface with
    /// delta-method intervals
    Plugin {
        /// Current-status CSV for the first period (# period=…)
        data_first: PathBuf,
        /// Current-status CSV for the second period (# period=…)
        data_second: PathBuf,
        /// Mortality context CSV (age_lo,age_hi,m,R)
        mortality: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
        /// First age of the output grid [default: 20]
        #[arg(long, default_value_t = 20.0)]
        age_min: f64,
        /// Last age of the output grid [default: 99]
        #[arg(long, default_value_t = 99.0)]
        age_max: f64,
        /// Output grid spacing in years [default: 1]
        #[arg(long, default_value_t = 1.0)]
        age_step: f64,
        /// Period(s) to evaluate (repeatable); default: both input
        /// periods
        #[arg(long = "period")]
        periods: Vec<f64>,
        #[arg(long)]
        out_json: Option<PathBuf>,
        /// Curve output path; with several periods the period is
        /// inserted before the extension
        #[arg(long)]
        out_curve: Option<PathBuf>,
    },
    /// Draw a synthetic current-status table from a scenario file
    Simulate {
        /// Scenario file (key = value)
        scenario: PathBuf,
        /// Sampling seed; wins over the scenario file's `seed`
        #[arg(long)]
        seed: Option<u64>,
        /// key = value config file (may also carry `seed`)
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output CSV path
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert life-table survivor columns to annual mortality rates
    ConvertLifetable {
        /// Life-table CSV (age_lo,age_hi,general,diseased)
        lifetable: PathBuf,
        /// Output CSV path (age_lo,age_hi,m,m1)
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CmdError> {
    match cli.command {
        Command::Fit {
            data,
            common,
            out_json,
            out_curve,
        } => {
            let opts = common.resolve()?;
            commands::cmd_fit(
                &data,
                &opts,
                &OutputPaths {
                    json: out_json,
                    curve: out_curve,
                },
            )
        }
        Command::FitMortality {
            data,
            lifetable,
            common,
            out_json,
            out_curve,
        } => {
            let opts = common.resolve()?;
            commands::cmd_fit_mortality(
                &data,
                &lifetable,
                &opts,
                &OutputPaths {
                    json: out_json,
                    curve: out_curve,
                },
            )
        }
        Command::Regress {
            data,
            out_json,
            out_curve,
        } => commands::cmd_regress(
            &data,
            &OutputPaths {
                json: out_json,
                curve: out_curve,
            },
        ),
        Command::Plugin {
            data_first,
            data_second,
            mortality,
            common,
            age_min,
            age_max,
            age_step,
            periods,
            out_json,
            out_curve,
        } => {
            let opts = common.resolve()?;
            commands::cmd_plugin(
                &data_first,
                &data_second,
                &mortality,
                &opts,
                &AgeRange {
                    min: age_min,
                    max: age_max,
                    step: age_step,
                },
                &periods,
                &OutputPaths {
                    json: out_json,
                    curve: out_curve,
                },
            )
        }
        Command::Simulate {
            scenario,
            seed,
            config,
            out,
        } => {
            let config_seed = commands::seed_from_run_config(config.as_deref())?;
            commands::cmd_simulate(&scenario, seed, config_seed, &out)
        }
        Command::ConvertLifetable { lifetable, out } => {
            commands::cmd_convert_lifetable(&lifetable, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            // usage problems are input errors: exit 1, not clap's 2
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
