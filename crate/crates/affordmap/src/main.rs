use std::path::{Path, PathBuf};
use std::process::ExitCode;

use affordmap::basis_io::write_basis;
use affordmap::harness::{emit_report, evaluate, index_dataset, EvalOptions, ReportFormat, Split};
use affordmap::render::{load_rgb, render_overlay, render_signed, save_png};
use affordmap::tensor_io::{read_map, read_sample_bundle, write_map};
use affordmap::{Error, Result};
use affordmap_core::{
    aggregate_layers, cosine_probe, pca_decompose, roi_from_attention, run_pipeline, FusionConfig, Mode,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use image::RgbImage;

/// Training-free affordance maps from exported attention and patch features.
#[derive(Debug, Parser)]
#[command(name = "affordmap", version)]
struct Cli {
    /// Print nothing on stdout.
    #[arg(long, global = true)]
    quiet: bool,
    /// Accepted for scripting symmetry; every command is deterministic.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the pipeline on one bundle directory.
    Fuse {
        bundle: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        fusion: FusionArgs,
        #[arg(long, value_enum, default_value_t = CliMode::Fusion)]
        mode: CliMode,
        /// Overlay opacity.
        #[arg(long, default_value_t = 0.5)]
        alpha: f32,
    },
    /// Evaluate a dataset tree and write reports.
    Eval {
        root: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        fusion: FusionArgs,
        #[arg(long, value_enum, default_value_t = CliMode::Fusion)]
        mode: CliMode,
        /// Worker threads (0 = one per core).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "json,csv")]
        format: Vec<CliFormat>,
        /// Restrict to one split.
        #[arg(long, value_enum)]
        split: Option<CliSplit>,
        /// Skip overlay rendering.
        #[arg(long)]
        no_overlays: bool,
        #[arg(long, default_value_t = 0.5)]
        alpha: f32,
    },
    /// Write the ROI's principal component maps and basis files.
    PcaInspect {
        bundle: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        fusion: FusionArgs,
    },
    /// Cosine similarity of every patch to the patch at (row, col).
    ProbeSim {
        bundle: PathBuf,
        #[arg(long)]
        row: usize,
        #[arg(long)]
        col: usize,
        /// Output `.npy`; a PNG is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Composite a map over an image.
    Overlay {
        #[arg(long)]
        image: PathBuf,
        /// `[H, W]` `.npy` map.
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        alpha: f32,
    },
}

#[derive(Debug, Args)]
struct FusionArgs {
    /// Principal components kept.
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 0.8)]
    fixation_quantile: f64,
    /// Blur sigma in pixels at the working size.
    #[arg(long, default_value_t = 3.0)]
    sigma: f64,
    /// Working resolution the sigma refers to.
    #[arg(long, default_value_t = 224)]
    size: usize,
    #[arg(long, default_value_t = 0.4)]
    roi_threshold: f64,
    #[arg(long, default_value_t = 0.1)]
    roi_margin: f64,
    /// Comma-separated attention layer indices (default: all).
    #[arg(long, value_delimiter = ',')]
    layers: Option<Vec<usize>>,
    /// Only consider positive component signs.
    #[arg(long)]
    no_negated: bool,
}

impl FusionArgs {
    fn config(&self) -> Result<FusionConfig> {
        let cfg = FusionConfig {
            k: self.k,
            fixation_quantile: self.fixation_quantile,
            consider_negated_components: !self.no_negated,
            blur_sigma: self.sigma,
            working_size: self.size,
            roi_threshold: self.roi_threshold,
            roi_margin: self.roi_margin,
            layers: self.layers.clone(),
        };
        cfg.validate().map_err(Error::Config)?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CliMode {
    InteractionOnly,
    Fusion,
}

impl From<CliMode> for Mode {
    fn from(m: CliMode) -> Mode {
        match m {
            CliMode::InteractionOnly => Mode::InteractionOnly,
            CliMode::Fusion => Mode::InteractionXGeometry,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, ValueEnum)]
enum CliFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CliSplit {
    Seen,
    Unseen,
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_owned(), source })
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).map_err(|source| Error::Io { path: path.to_owned(), source })
}

fn check_alpha(alpha: f32) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::Config(affordmap_core::Error::Argument(format!("--alpha must lie in [0, 1], got {alpha}"))))
    }
}

fn cmd_fuse(bundle: &Path, out: &Path, cfg: &FusionConfig, mode: Mode, alpha: f32, quiet: bool) -> Result<()> {
    check_alpha(alpha)?;
    let b = read_sample_bundle(bundle)?;
    let res = run_pipeline(&b.sample, cfg, mode)?;
    create_dir(out)?;
    write_map(&out.join("fused.npy"), &res.affordance_map)?;

    let (component, sign, score) = match res.selection {
        Some(s) => (s.component as i64, s.sign, Some(s.score)),
        None => (-1, 0, None),
    };
    let (h, w) = res.affordance_map.dims();
    let finite = |v: f64| v.is_finite().then_some(v);
    let result = serde_json::json!({
        "mode": mode,
        "verb": b.meta.verb,
        "object": b.meta.object,
        "grid": [h, w],
        "selected_component": component,
        "selected_sign": sign,
        "selection_score": score,
        "component_scores": res.component_scores.iter().map(|&v| finite(v)).collect::<Vec<_>>(),
        "roi": res.roi,
        "config": cfg,
    });
    write_json(&out.join("result.json"), &result)?;

    let canvas = match b.image_path() {
        Some(p) => load_rgb(&p)?,
        None => RgbImage::new(cfg.working_size as u32, cfg.working_size as u32),
    };
    save_png(&out.join("overlay.png"), &render_overlay(&canvas, &res.affordance_map, alpha)?)?;
    if !quiet {
        println!("selected_component={component} sign={sign} grid={h}x{w}");
    }
    Ok(())
}

fn cmd_pca_inspect(bundle: &Path, out: &Path, cfg: &FusionConfig, quiet: bool) -> Result<()> {
    let b = read_sample_bundle(bundle)?;
    let obj = aggregate_layers(&b.sample.object, cfg.layers.as_deref())?;
    let roi = roi_from_attention(&obj, cfg.roi_threshold, cfg.roi_margin)?;
    let basis = pca_decompose(b.features(), roi, cfg.k)?;
    create_dir(out)?;
    for (i, proj) in basis.projections.iter().enumerate() {
        save_png(&out.join(format!("pc{i}.png")), &render_signed(proj))?;
    }
    write_basis(out, &basis)?;
    if !quiet {
        let ev: Vec<String> = basis.explained_var.iter().map(|v| format!("{v:.6}")).collect();
        println!("k={} eigenvalues={}", basis.k, ev.join(","));
    }
    Ok(())
}

fn cmd_probe_sim(bundle: &Path, row: usize, col: usize, out: &Path, quiet: bool) -> Result<()> {
    let b = read_sample_bundle(bundle)?;
    let f = b.features();
    let (h, w) = f.grid();
    if row >= h || col >= w {
        return Err(Error::Config(affordmap_core::Error::Argument(format!(
            "probe ({row}, {col}) outside the {h}x{w} grid"
        ))));
    }
    let sim = cosine_probe(f, f.patch(row, col))?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_map(out, &sim)?;
    save_png(&out.with_extension("png"), &render_signed(&sim))?;
    if !quiet {
        let (lo, hi) = sim.min_max();
        println!("min={lo:.6} max={hi:.6}");
    }
    Ok(())
}

fn cmd_overlay(image: &Path, map: &Path, out: &Path, alpha: f32) -> Result<()> {
    check_alpha(alpha)?;
    let img = load_rgb(image)?;
    let m = read_map(map)?;
    save_png(out, &render_overlay(&img, &m, alpha)?)
}

fn run(cli: Cli) -> Result<()> {
    let quiet = cli.quiet;
    match cli.command {
        Command::Fuse { bundle, out, fusion, mode, alpha } => {
            cmd_fuse(&bundle, &out, &fusion.config()?, mode.into(), alpha, quiet)
        }
        Command::Eval { root, out, fusion, mode, jobs, format, split, no_overlays, alpha } => {
            check_alpha(alpha)?;
            let cfg = fusion.config()?;
            let split = split.map(|s| match s {
                CliSplit::Seen => Split::Seen,
                CliSplit::Unseen => Split::Unseen,
            });
            let index = index_dataset(&root, split)?;
            let opts = EvalOptions { jobs, overlay_dir: (!no_overlays).then(|| out.join("overlays")), alpha };
            let report = evaluate(&index, &cfg, mode.into(), &opts)?;
            let formats: Vec<ReportFormat> = format
                .iter()
                .map(|f| match f {
                    CliFormat::Json => ReportFormat::Json,
                    CliFormat::Csv => ReportFormat::Csv,
                })
                .collect();
            emit_report(&report, &out, &formats)?;
            if !quiet {
                println!("{}", report.summary_line());
            }
            Ok(())
        }
        Command::PcaInspect { bundle, out, fusion } => cmd_pca_inspect(&bundle, &out, &fusion.config()?, quiet),
        Command::ProbeSim { bundle, row, col, out } => cmd_probe_sim(&bundle, row, col, &out, quiet),
        Command::Overlay { image, map, out, alpha } => cmd_overlay(&image, &map, &out, alpha),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("AFFORDMAP_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
