use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use meshforge::io::{self, MatrixFile, ProgramFile, ReportFile};
use meshforge::learn::{
    cross_validate, generate_dataset, init_a_priori, init_black_box, learn_model, LearnConfig,
    Provenance,
};
use meshforge::sweep::{self, SweepSettings, INIT_STREAM};
use meshforge::tune::{program_phases, TuneConfig};
use meshforge::{MeshError, Rng};

const SWEEP_HELP: &str = "\
Output schemas (one CSV row per grid point, rows in grid order):
  train-size            n_modes,count,mean_j,pass_fraction,reps
  noise                 alpha,mean_j,pass_fraction,reps
  apriori               n_modes,init_alpha,mean_j,pass_fraction,reps
  fidelity-calibration  alpha,mean_fidelity,std_fidelity,mean_j,samples

Grid flags:
  train-size            --modes, --counts
  noise                 --modes (single value), --count, --alphas
  apriori               --modes, --alphas, --count
  fidelity-calibration  --modes (single value), --alphas, --samples

mean_j is the mean over repetitions of the mean test J; pass_fraction is the
fraction of repetitions whose mean test J is at most --threshold.";

#[derive(Parser)]
#[command(name = "meshforge", version, about = "Learn and program multiport interferometer models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a Haar-random device model.
    SynthDevice {
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        modes: u64,
        /// Number of mixing layers; defaults to the mode count.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        mixers: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample phase settings and the (optionally noisy) unitaries a device
    /// realises for them.
    GenTrain {
        #[arg(long)]
        device: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        count: u64,
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit basis matrices to a training set.
    Learn {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// `blackbox` or `file:PATH` (a model file used as the initial guess).
        #[arg(long, default_value = "blackbox")]
        init: String,
        /// Noise applied to the basis matrices of a `file:` initial guess.
        #[arg(long, default_value_t = 0.0)]
        apriori_alpha: f64,
        /// Defaults to 1000 for up to 5 modes, 3000 otherwise.
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_model: PathBuf,
        /// CSV trace with columns epoch,j_train,j_test.
        #[arg(long)]
        out_trace: PathBuf,
    },
    /// Cross-validate a model; exits 0 on pass, 1 on fail.
    Validate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, default_value_t = 1e-2)]
        threshold: f64,
    },
    /// Find phases that make a model realise a target unitary.
    Program {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
        restarts: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a grid of experiments and write one CSV row per grid point.
    #[command(after_long_help = SWEEP_HELP)]
    Sweep {
        #[arg(long, value_enum)]
        kind: SweepKind,
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        modes: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        counts: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        alphas: Option<Vec<f64>>,
        /// Training-set size for noise and apriori sweeps.
        #[arg(long)]
        count: Option<usize>,
        #[arg(long, default_value_t = 10)]
        reps: usize,
        #[arg(long, default_value_t = 1000)]
        epochs: usize,
        #[arg(long, default_value_t = 100)]
        test_count: usize,
        /// Noise sweep only: draw test sets without noise.
        #[arg(long)]
        clean_test: bool,
        #[arg(long, default_value_t = 1e-2)]
        threshold: f64,
        /// Samples per noise level for fidelity calibration.
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepKind {
    TrainSize,
    Noise,
    Apriori,
    FidelityCalibration,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("MESHFORGE_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| format!("MESHFORGE_THREADS must be a positive integer, got {value:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| e.to_string())
}

fn run(command: Command) -> meshforge::Result<ExitCode> {
    match command {
        Command::SynthDevice {
            modes,
            mixers,
            seed,
            out,
        } => {
            let device = sweep::synth_device(modes as usize, mixers.unwrap_or(modes) as usize, seed)?;
            io::write_model(&out, &device)?;
        }
        Command::GenTrain {
            device,
            count,
            alpha,
            seed,
            out,
        } => {
            let device = io::read_model(&device)?;
            let mut data = generate_dataset(&device, count as usize, alpha, &mut Rng::new(seed))?;
            data.set_provenance(Provenance {
                device_seed: None,
                generation_seed: Some(seed),
                alpha,
            });
            io::write_dataset(&out, &data)?;
        }
        Command::Learn {
            train,
            test,
            init,
            apriori_alpha,
            epochs,
            seed,
            out_model,
            out_trace,
        } => {
            let train = io::read_dataset(&train)?;
            let test = io::read_dataset(&test)?;
            let n = train.n_modes();
            let mixers = train.n_phase_layers() - 1;
            let mut rng = Rng::with_stream(seed, INIT_STREAM);
            let init = match init.as_str() {
                "blackbox" => init_black_box(n, mixers, &mut rng)?,
                other => match other.strip_prefix("file:") {
                    Some(path) => init_a_priori(&io::read_model(Path::new(path))?, apriori_alpha, &mut rng)?,
                    None => {
                        return Err(MeshError::InvalidInput(format!(
                            "--init must be `blackbox` or `file:PATH`, got {other:?}"
                        )))
                    }
                },
            };
            let config = LearnConfig {
                epochs: epochs.unwrap_or_else(|| LearnConfig::default_epochs(n)),
                seed,
                ..LearnConfig::default()
            };
            let (model, trace) = learn_model(&train, &test, &init, &config)?;
            io::write_model(&out_model, &model)?;
            io::write_text(&out_trace, &io::trace_csv(&trace))?;
        }
        Command::Validate {
            model,
            test,
            threshold,
        } => {
            let model = io::read_model(&model)?;
            let test = io::read_dataset(&test)?;
            let report = cross_validate(&model, &test, threshold)?;
            print!("{}", io::to_json(&ReportFile::from(&report)));
            if !report.pass {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Program {
            model,
            target,
            restarts,
            seed,
            out,
        } => {
            let model = io::read_model(&model)?;
            let target = io::read_json::<MatrixFile>(&target)?.to_unitary()?;
            let config = TuneConfig {
                restarts: restarts as usize,
                seed,
                ..TuneConfig::default()
            };
            let result = program_phases(&model, &target, &config)?;
            io::write_text(&out, &io::to_json(&ProgramFile::from(&result)))?;
        }
        Command::Sweep {
            kind,
            modes,
            counts,
            alphas,
            count,
            reps,
            epochs,
            test_count,
            clean_test,
            threshold,
            samples,
            seed,
            out,
        } => {
            let settings = SweepSettings {
                reps,
                epochs,
                test_count,
                noisy_test: !clean_test,
                learn: LearnConfig {
                    cv_threshold: threshold,
                    ..LearnConfig::default()
                },
                seed,
            };
            let single = |modes: Option<Vec<usize>>, default: usize| match modes.as_deref() {
                None => Ok(default),
                Some([n]) => Ok(*n),
                Some(_) => Err(MeshError::InvalidInput("this sweep takes a single --modes value".into())),
            };
            let csv = match kind {
                SweepKind::TrainSize => {
                    let modes = modes.unwrap_or_else(|| vec![3]);
                    let counts = counts.unwrap_or_else(|| vec![2, 3, 4]);
                    sweep::train_size_csv(&sweep::train_size_sweep(&modes, &counts, 0.0, &settings)?)
                }
                SweepKind::Noise => {
                    let n = single(modes, 2)?;
                    let alphas = alphas.unwrap_or_else(|| vec![0.0, 0.025, 0.05, 0.075, 0.1]);
                    sweep::noise_csv(&sweep::noise_sweep(n, count.unwrap_or(5), &alphas, &settings)?)
                }
                SweepKind::Apriori => {
                    let modes = modes.unwrap_or_else(|| vec![4, 6, 8, 10]);
                    let alphas = alphas.unwrap_or_else(|| vec![0.025, 0.05, 0.1, 0.2]);
                    sweep::apriori_csv(&sweep::apriori_sweep(&modes, &alphas, count.unwrap_or(200), &settings)?)
                }
                SweepKind::FidelityCalibration => {
                    let n = single(modes, 2)?;
                    let alphas = alphas.unwrap_or_else(|| vec![0.0, 0.025, 0.05, 0.1]);
                    sweep::calibration_csv(&sweep::fidelity_calibration(n, &alphas, samples, seed)?)
                }
            };
            match out {
                Some(path) => io::write_text(&path, &csv)?,
                None => print!("{csv}"),
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
