use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use pamg_cli::config::RunConfig;
use pamg_cli::{
    cmd_ablate, cmd_batch, cmd_boundary, cmd_eval, cmd_grow, cmd_sweep_rs, cmd_sweep_seed, cmd_synth, parse_seed,
    suite_summary, with_preset, CliError, CliResult, GrowArgs, Preset, SweepGrid,
};
use pamg_core::{Connectivity, Variant};
use pamg_service::{AppState, ServiceConfig};

/// Point-to-mask generation for infrared small targets.
///
/// Exit codes: 0 ok, 2 usage or config error, 3 data error, 4 algorithm
/// error (no energy peak). Errors are printed to stderr as JSON.
#[derive(Parser)]
#[command(name = "pamg", version)]
struct Cli {
    /// TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Config override, e.g. `--set pamg.r_s=12` (repeatable, applied in order).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    /// Worker threads (0 = all cores); overrides `jobs`.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConnArg {
    Four,
    Eight,
}

#[derive(Clone, Copy, ValueEnum)]
enum GridArg {
    Rs,
    K,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Grows one mask from a seed point.
    Grow {
        image: PathBuf,
        /// Seed pixel `x,y`.
        #[arg(long, value_parser = parse_seed)]
        seed: [i64; 2],
        /// Support radius R_s (blind mode).
        #[arg(long)]
        rs: Option<f64>,
        /// Target radius for guided mode, R_s = k * radius.
        #[arg(long)]
        radius: Option<f64>,
        /// Guided scale factor (default from config, 5).
        #[arg(long)]
        k: Option<f64>,
        /// full, no_size_prior, no_saliency, no_homogeneity, no_geometric_prior.
        #[arg(long)]
        variant: Option<Variant>,
        #[arg(long, value_enum)]
        connectivity: Option<ConnArg>,
        /// Mask PNG path.
        #[arg(long)]
        out: PathBuf,
        /// RLE JSON path (default: --out with a .json extension).
        #[arg(long)]
        rle: Option<PathBuf>,
        /// Growth trace JSON path.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Pseudo-labels for every target in a JSONL manifest.
    Batch {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Guided mode from each target's GT radius.
        #[arg(long)]
        guided: bool,
    },
    /// mIoU, Pd/Fa and geometry errors of predicted vs GT masks, paired by file name.
    Eval {
        pred_dir: PathBuf,
        gt_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        match_radius: Option<f64>,
    },
    /// Center / random-interior / boundary seed comparison on a synthetic suite.
    SweepSeed {
        #[arg(long)]
        out: PathBuf,
        /// desk, cluttered, boundary or config.
        #[arg(long, default_value = "desk")]
        preset: Preset,
    },
    /// Fixed R_s sweep and guided k sweep.
    SweepRs {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        grid: GridArg,
        #[arg(long, default_value = "desk")]
        preset: Preset,
    },
    /// Energy-term ablation.
    Ablate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "cluttered")]
        preset: Preset,
    },
    /// Bucketed success versus rho = SCR / B, plus the model-level scan.
    Boundary {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "boundary")]
        preset: Preset,
    },
    /// Writes a synthetic suite with GT, truth records and a manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "desk")]
        preset: Preset,
    },
    /// Runs the annotation HTTP service over a dataset directory.
    Serve {
        #[arg(long)]
        root: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
}

fn print_json<T: serde::Serialize>(v: &T) {
    println!("{}", serde_json::to_string(v).expect("serializable"));
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref(), &cli.sets)?;
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
    }
    match cli.command {
        Command::Grow {
            image,
            seed,
            rs,
            radius,
            k,
            variant,
            connectivity,
            out,
            rle,
            trace,
        } => {
            let args = GrowArgs {
                image,
                seed,
                r_s: rs,
                radius,
                k,
                variant,
                connectivity: connectivity.map(|c| match c {
                    ConnArg::Four => Connectivity::Four,
                    ConnArg::Eight => Connectivity::Eight,
                }),
                out,
                rle,
                trace,
            };
            print_json(&cmd_grow(&args, &cfg)?);
        }
        Command::Batch { manifest, out, guided } => {
            let s = cmd_batch(&manifest, &out, guided, &cfg)?;
            eprintln!(
                "{} images, {} targets, {} failures, mIoU {}",
                s.images,
                s.targets,
                s.failures,
                s.miou.map_or("-".into(), |m| format!("{m:.4}"))
            );
        }
        Command::Eval {
            pred_dir,
            gt_dir,
            out,
            match_radius,
        } => {
            if let Some(r) = match_radius {
                cfg.match_radius = r;
            }
            let r = cmd_eval(&pred_dir, &gt_dir, &out, &cfg)?;
            println!("mIoU {:.4}  Pd {:.4}  Fa {:.3e}  targets {}", r.miou, r.pd, r.fa, r.samples.len());
        }
        Command::SweepSeed { out, preset } => {
            let cfg = with_preset(&cfg, preset);
            eprintln!("suite: {}", suite_summary(&cfg.suite));
            let r = cmd_sweep_seed(&out, &cfg)?;
            println!("{:<16} {:>8} {:>10} {:>10} {:>10}", "mode", "mIoU", "area", "centroid", "radius");
            for row in &r.rows {
                let s = &row.summary;
                println!(
                    "{:<16} {:>8.4} {:>10.4} {:>10.4} {:>10.4}",
                    row.mode.name(),
                    s.miou,
                    s.mean_area_ratio.unwrap_or(f64::NAN),
                    s.mean_centroid_error.unwrap_or(f64::NAN),
                    s.mean_radius_error.unwrap_or(f64::NAN)
                );
            }
        }
        Command::SweepRs { out, grid, preset } => {
            let cfg = with_preset(&cfg, preset);
            let grid = match grid {
                GridArg::Rs => SweepGrid::Rs,
                GridArg::K => SweepGrid::K,
                GridArg::Both => SweepGrid::Both,
            };
            for s in cmd_sweep_rs(&out, grid, &cfg)? {
                for row in &s.rows {
                    println!("{}={:<6} mIoU {:.4}", s.parameter, row.value, row.summary.miou);
                }
            }
        }
        Command::Ablate { out, preset } => {
            let cfg = with_preset(&cfg, preset);
            let a = cmd_ablate(&out, &cfg)?;
            for row in &a.rows {
                println!(
                    "{:<20} mIoU {:.4}  area ratio {:.3}",
                    row.variant.name(),
                    row.summary.miou,
                    row.summary.mean_area_ratio.unwrap_or(f64::NAN)
                );
            }
        }
        Command::Boundary { out, preset } => {
            let cfg = with_preset(&cfg, preset);
            let (r, scan) = cmd_boundary(&out, &cfg)?;
            for b in &r.buckets {
                println!(
                    "rho ({}, {}]  n {:<4} success {}  mean IoU {}",
                    b.lo,
                    b.hi,
                    b.count,
                    b.success_rate.map_or("-".into(), |v| format!("{v:.3}")),
                    b.mean_iou.map_or("-".into(), |v| format!("{v:.3}"))
                );
            }
            let bad = scan.iter().filter(|p| !p.result.holds).count();
            println!("model scan: {} points, {bad} violations", scan.len());
        }
        Command::Synth { out, preset } => {
            let cfg = with_preset(&cfg, preset);
            let n = cmd_synth(&out, &cfg)?;
            eprintln!("wrote {n} scenes to {}", out.display());
        }
        Command::Serve { root, addr } => {
            let state = AppState::open(
                &root,
                ServiceConfig {
                    pamg: cfg.pamg,
                    normalization: cfg.normalization,
                },
            )
            .map_err(|m| CliError::Data(pamg_core::api::ErrorBody { v: 1, error: "dataset".into(), message: m }))?;
            let rt = tokio::runtime::Runtime::new().map_err(|e| pamg_core::Error::io(&root, e))?;
            rt.block_on(pamg_service::serve(state, addr))
                .map_err(|e| pamg_core::Error::io(&root, e))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::to_string(&e.body()).expect("serializable"));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
