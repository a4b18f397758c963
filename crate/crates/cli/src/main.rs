//! `mct`: microstructure characterization workflows.

mod commands;
mod plot;
mod run;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{data, features, learn, objects};

#[derive(Debug, Parser)]
#[command(name = "mct", version, about = "Microstructure characterization from CNN features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic polycrystal micrographs with ground-truth grain sizes
    Synth(data::SynthArgs),
    /// Generate two-texture composites with pixel masks
    Textures(data::TexturesArgs),
    /// Generate particle fields with pixel masks
    Particles(data::ParticlesArgs),
    /// Extract and encode CNN features into a feature store
    Featurize(features::FeaturizeArgs),
    /// Nearest neighbors of a stored record
    Search(features::SearchArgs),
    /// k-means over a feature store
    Cluster(features::ClusterArgs),
    /// 2-D t-SNE map of a feature store
    Embed(features::EmbedArgs),
    /// Fit an SVM classifier or a ridge regressor
    Train(learn::TrainArgs),
    /// Fit a per-pixel classifier from masked images
    TrainPixels(learn::TrainPixelsArgs),
    /// Predict segmentation masks
    Segment(learn::SegmentArgs),
    /// Extract object instances from a mask
    Instances(objects::InstancesArgs),
    /// Score predictions against ground truth
    #[command(subcommand)]
    Eval(objects::EvalCommand),
    /// Powder fingerprint from particle patches
    Fingerprint(objects::FingerprintArgs),
}

fn dispatch(c: &Command) -> anyhow::Result<()> {
    match c {
        Command::Synth(a) => data::synth(a),
        Command::Textures(a) => data::textures(a),
        Command::Particles(a) => data::particles(a),
        Command::Featurize(a) => features::featurize(a),
        Command::Search(a) => features::search(a),
        Command::Cluster(a) => features::cluster(a),
        Command::Embed(a) => features::embed(a),
        Command::Train(a) => learn::train(a),
        Command::TrainPixels(a) => learn::train_pixels(a),
        Command::Segment(a) => learn::segment(a),
        Command::Instances(a) => objects::instances(a),
        Command::Eval(c) => objects::eval(c),
        Command::Fingerprint(a) => objects::fingerprint(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(run::exit_code(&e))
        }
    }
}
