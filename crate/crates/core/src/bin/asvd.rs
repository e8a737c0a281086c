use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use asvd::experiment::{cmd_report, cmd_run, cmd_spectrum, cmd_theory, OutputOptions, SpectrumOptions, OUTPUT_ROOT_ENV};
use asvd::spectrum::Keep;

/// Adaptive SVD continual learning: runs, theory checks and spectrum diagnostics.
#[derive(Parser)]
#[command(name = "asvd", version)]
struct Cli {
    /// Parent directory for relative output paths.
    #[arg(long, global = true, env = OUTPUT_ROOT_ENV)]
    output_root: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Output {
    /// Output directory (overrides the config's `output_dir`).
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Allow writing into a non-empty output directory.
    #[arg(long)]
    overwrite: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train every configured trainer/seed/order and write reports.
    Run {
        config: PathBuf,
        #[command(flatten)]
        output: Output,
    },
    /// Check the forgetting bounds on constructed instances.
    Theory {
        config: PathBuf,
        #[command(flatten)]
        output: Output,
    },
    /// Singular-value statistics of a checkpoint, with optional pruning.
    Spectrum {
        checkpoint: PathBuf,
        /// Keep `fraction=F` or `count=K` top singular directions.
        #[arg(long)]
        prune: Option<Keep>,
        /// Comma-separated layers to prune (all by default).
        #[arg(long, value_delimiter = ',')]
        layers: Option<Vec<usize>>,
        /// Task stream JSON used for evaluation and input capture.
        #[arg(long)]
        tasks: Option<PathBuf>,
        /// Classify singular values against the Marchenko–Pastur edge.
        #[arg(long)]
        mp_threshold: bool,
        /// Multiplier on the noise edge.
        #[arg(long, default_value_t = 1.0)]
        mp_scale: f64,
        /// Noise level; estimated from the spectrum when absent.
        #[arg(long)]
        noise_sigma: Option<f64>,
        /// Write per-direction input norms for this layer.
        #[arg(long)]
        directions: Option<usize>,
        #[command(flatten)]
        output: Output,
    },
    /// Merge run summaries into one CSV.
    Report {
        /// Run directories or summary.csv files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long)]
        overwrite: bool,
    },
}

fn options(root: &Option<PathBuf>, output: Output) -> OutputOptions {
    OutputOptions {
        output_dir: output.out,
        output_root: root.clone(),
        overwrite: output.overwrite,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let root = cli.output_root;
    let result = match cli.command {
        Command::Run { config, output } => cmd_run(&config, &options(&root, output)).map(|s| {
            for (job, r) in &s.runs {
                println!("{:<40} AA {:.4}  BWT {:+.4}", job.run_id, r.aa, r.bwt);
            }
            println!("wrote {}", s.output_dir.display());
            true
        }),
        Command::Theory { config, output } => cmd_theory(&config, &options(&root, output)).map(|o| {
            for c in &o.report.checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            println!("wrote {}", o.output_dir.display());
            o.report.passed()
        }),
        Command::Spectrum {
            checkpoint,
            prune,
            layers,
            tasks,
            mp_threshold,
            mp_scale,
            noise_sigma,
            directions,
            output,
        } => {
            let flags = SpectrumOptions {
                prune,
                layers,
                tasks,
                mp_threshold,
                mp_scale,
                noise_sigma,
                directions,
            };
            cmd_spectrum(&checkpoint, &flags, &options(&root, output)).map(|o| {
                println!("{} layers", o.layers);
                for n in o.noise.iter().flatten() {
                    println!(
                        "layer {}: {:.1}% above noise edge {:.4}",
                        n.layer,
                        100.0 * n.fraction_above,
                        n.threshold
                    );
                }
                if let Some(p) = &o.prune {
                    println!("prune: mean metric {:.4} -> {:.4} (delta {:+.4})", p.mean_before, p.mean_after, p.mean_delta);
                }
                println!("wrote {}", o.output_dir.display());
                true
            })
        }
        Command::Report { inputs, out, overwrite } => {
            let out = match &root {
                Some(r) if out.is_relative() => r.join(out),
                _ => out,
            };
            cmd_report(&inputs, &out, overwrite).map(|groups| {
                for g in groups {
                    println!("{:<24} runs {:>3}  AA {:.4}  BWT {:+.4}", g.trainer, g.runs, g.mean_aa, g.mean_bwt);
                }
                println!("wrote {}", out.display());
                true
            })
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
