use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;
mod error;
mod io;
mod manifest;
mod pipeline;
mod render;

use commands::*;
use error::CliError;
use pipeline::{pipeline_cmd, PipelineArgs};

/// Decision-tree annotation of teacher moves, dataset export and evaluation.
#[derive(Debug, Parser)]
#[command(name = "edutree", version, propagate_version = true)]
struct Cli {
    /// Report format printed on stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Write the run manifest here instead of the default location.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build and validate the annotation decision tree.
    BuildTree(BuildTreeArgs),
    /// Split teacher turns into elementary discourse units.
    Segment(SegmentArgs),
    /// Annotate every teacher EDU by walking the tree with an LLM.
    Annotate(AnnotateArgs),
    /// Score coarse consistency of annotations against the original labels.
    EvaluateAnnotation(EvalAnnotationArgs),
    /// Split dialogs and export intent-conditioned training records.
    MakeDataset(MakeDatasetArgs),
    /// chrF++, sacreBLEU and ROUGE of generated utterances.
    EvaluateGeneration(EvalGenerationArgs),
    /// Fleiss' kappa and majority vote over human ratings.
    Kappa(KappaArgs),
    /// Run every stage from a configuration file.
    Pipeline(PipelineArgs),
}

fn run(cli: &Cli) -> Result<u8, CliError> {
    let mut o = match &cli.command {
        Command::BuildTree(a) => build_tree_cmd(a),
        Command::Segment(a) => segment_cmd(a),
        Command::Annotate(a) => annotate_cmd(a),
        Command::EvaluateAnnotation(a) => evaluate_annotation_cmd(a),
        Command::MakeDataset(a) => make_dataset_cmd(a),
        Command::EvaluateGeneration(a) => evaluate_generation_cmd(a),
        Command::Kappa(a) => kappa_cmd(a),
        Command::Pipeline(a) => pipeline_cmd(a),
    }?;
    o.manifest.finish(o.code);
    if let Some(path) = cli.manifest.as_ref().or(o.default_manifest.as_ref()) {
        o.manifest.write(path)?;
    }
    match cli.format {
        Format::Text => print!("{}", o.text),
        Format::Json => println!(
            "{}",
            serde_json::to_string_pretty(&o.report).expect("report serializes")
        ),
    }
    Ok(o.code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
