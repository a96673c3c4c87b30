//! Command-line entry points: data generation, training, posterior
//! inference, rendering, evaluation and the ablation harnesses.

mod commands;
mod options;
mod run;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use options::*;

#[derive(Parser, Debug)]
#[command(name = "nerfhmc", version, about = "Probabilistic radiance fields sampled with annealed HMC")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic voxel-object dataset.
    MakeData(Cmd<MakeDataOpts>),
    /// Train the generative model and view encoder.
    Train(Cmd<TrainOpts>),
    /// Draw states from the prior and render them.
    SamplePrior(Cmd<SamplePriorOpts>),
    /// Annealed HMC over (z_tilde, delta) given one view.
    InferHmc(Cmd<HmcOpts>),
    /// Mean-field variational inference given one view.
    InferVi(Cmd<ViOpts>),
    /// Annealed HMC over z_tilde only, with delta fixed at zero.
    InferLatentOnly(Cmd<HmcOpts>),
    /// Render archived states from new cameras.
    Render(Cmd<RenderOpts>),
    /// PSNR and per-pixel variance of sample archives.
    Eval(Cmd<EvalOpts>),
    /// HMC acceptance across step sizes for the foam and quadrature renderers.
    AblateRenderer(Cmd<AblateRendererOpts>),
    /// Annealed versus fixed-temperature HMC.
    AblateAnnealing(Cmd<AblateAnnealingOpts>),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = match cli.command {
        Command::MakeData(c) => commands::make_data(c),
        Command::Train(c) => commands::train(c),
        Command::SamplePrior(c) => commands::sample_prior(c),
        Command::InferHmc(c) => commands::infer_hmc(c, true),
        Command::InferVi(c) => commands::infer_vi(c),
        Command::InferLatentOnly(c) => commands::infer_hmc(c, false),
        Command::Render(c) => commands::render(c),
        Command::Eval(c) => commands::eval(c),
        Command::AblateRenderer(c) => commands::ablate_renderer(c),
        Command::AblateAnnealing(c) => commands::ablate_annealing(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
