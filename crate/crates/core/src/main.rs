use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use twostream::cli::{self, EvalPaths};
use twostream::config::RunConfig;
use twostream::synth::{SynthConfig, Variant};
use twostream::{Error, Result};

macro_rules! config_flags {
    ($($key:ident),* $(,)?) => {
        /// Run configuration: a key = value file plus per-key overrides.
        #[derive(Args, Debug, Default)]
        struct ConfigFlags {
            /// key = value config file
            #[arg(long)]
            config: Option<PathBuf>,
            $(
                #[arg(long, value_name = "VALUE")]
                $key: Option<String>,
            )*
        }

        impl ConfigFlags {
            fn overrides(&self) -> Vec<(&'static str, &str)> {
                let mut out = Vec::new();
                $(
                    if let Some(v) = &self.$key {
                        out.push((stringify!($key), v.as_str()));
                    }
                )*
                out
            }
        }
    };
}

config_flags!(
    stream, num_classes, seed, batch, workers, sync_mode, base_lr, lr_step, lr_stop, lr_decay, dropout,
    flow_bound, canvas_w, canvas_h, scale_set, out_size, w_spatial, w_temporal, momentum, weight_decay,
    hidden, augment_flow, score_space, eval_frames, clock,
);

impl ConfigFlags {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        for (key, value) in self.overrides() {
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Parser, Debug)]
#[command(name = "twostream", version, about = "Two-stream video classification toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic moving-bar dataset with rgb and flow manifests
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        classes: usize,
        #[arg(long, default_value_t = 4)]
        videos: usize,
        #[arg(long, default_value_t = 30)]
        frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 32)]
        width: usize,
        #[arg(long, default_value_t = 24)]
        height: usize,
        #[arg(long, default_value_t = 2.0)]
        speed: f64,
        /// standard or complementary
        #[arg(long, default_value = "standard")]
        variant: Variant,
    },
    /// Quantize a real-valued flow tensor to bytes
    FlowEncode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20.0)]
        bound: f64,
    },
    /// Adapt first-layer weights to a new input channel count
    Adapt {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        channels: usize,
    },
    /// Dump sampled crop specs and the cropped tensors
    AugmentPreview {
        #[command(flatten)]
        cfg: ConfigFlags,
        #[arg(long, default_value_t = 8)]
        n: usize,
        /// Canvas-sized C×H×W tensor to crop; a ramp image when absent
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one stream and write per-iteration records and a checkpoint
    Train {
        #[command(flatten)]
        cfg: ConfigFlags,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ten-crop evaluation of a spatial and a temporal checkpoint
    Eval {
        #[command(flatten)]
        cfg: ConfigFlags,
        #[arg(long)]
        rgb_manifest: PathBuf,
        #[arg(long)]
        flow_manifest: PathBuf,
        #[arg(long)]
        spatial: PathBuf,
        #[arg(long)]
        temporal: PathBuf,
        /// Line-delimited report
        #[arg(long)]
        out: PathBuf,
        /// Optional per-video score tensor
        #[arg(long)]
        scores: Option<PathBuf>,
    },
    /// Per-iteration communication volume of the VGG-16 geometry
    CommReport {
        #[command(flatten)]
        cfg: ConfigFlags,
        /// Write the report as JSON instead of a table
        #[arg(long)]
        json: bool,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            out,
            classes,
            videos,
            frames,
            seed,
            width,
            height,
            speed,
            variant,
        } => {
            let cfg = SynthConfig {
                classes,
                videos_per_class: videos,
                frames,
                width,
                height,
                speed,
                variant,
                seed,
            };
            let done = cli::cmd_synth(&cfg, &out)?;
            println!(
                "wrote {} videos: {} {}",
                done.videos,
                done.rgb_manifest.display(),
                done.flow_manifest.display()
            );
        }
        Command::FlowEncode { input, out, bound } => {
            let t = cli::cmd_flow_encode(&input, &out, bound)?;
            println!("encoded {:?} -> {}", t.shape(), out.display());
        }
        Command::Adapt { input, out, channels } => {
            let t = cli::cmd_adapt(&input, &out, channels)?;
            println!("adapted {:?} -> {}", t.shape(), out.display());
        }
        Command::AugmentPreview { cfg, n, image, out } => {
            let cfg = cfg.resolve()?;
            for (i, cs) in cli::cmd_augment_preview(&cfg, n, image.as_deref(), &out)?.iter().enumerate() {
                println!("{i}\t{cs}");
            }
        }
        Command::Train { cfg, manifest, out } => {
            let cfg = cfg.resolve()?;
            let done = cli::cmd_train(&cfg, &manifest, &out)?;
            let last = done.records.last().map_or(f64::NAN, |r| r.loss);
            println!(
                "{} iterations, final loss {last:.6}, checkpoint {}",
                done.records.len(),
                done.checkpoint.display()
            );
        }
        Command::Eval {
            cfg,
            rgb_manifest,
            flow_manifest,
            spatial,
            temporal,
            out,
            scores,
        } => {
            let cfg = cfg.resolve()?;
            let paths = EvalPaths { report: out, scores };
            let report = cli::cmd_eval(&cfg, &rgb_manifest, &flow_manifest, &spatial, &temporal, &paths)?;
            let s = report.summary;
            println!(
                "videos {} spatial {:.4} temporal {:.4} fused {:.4} failures {}",
                s.videos, s.spatial_acc, s.temporal_acc, s.fused_acc, s.failures
            );
        }
        Command::CommReport { cfg, json } => {
            let cfg = cfg.resolve()?;
            let report = cli::cmd_comm_report(&cfg)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report).map_err(|e| Error::Format(e.to_string()))?);
            } else {
                print!("{}", report.to_text());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.category(), e.detail().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
