use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use flowsheet_core::config::RunConfig;
use flowsheet_core::evaluation::{
    compare_methods, dice_coefficient, evaluate_method, EvaluationReport, ImagePair, MethodReport,
    SymbolReport, TTestResult, TestOutcome,
};
use flowsheet_core::extraction::{
    annotations_to_masks, extract_all, load_annotations, Corrections, Extraction,
};
use flowsheet_core::formats::{
    load_mask_unpadded, load_raster, load_series, save_mask, save_series, write_atomic,
};
use flowsheet_core::synth::{generate_dataset, DatasetManifest, MANIFEST_FILE};
use flowsheet_core::template::{find_matches, save_pack, tm_extract};
use flowsheet_core::{Symbol, TimeSeries};

/// Digitize hand-drawn vital-sign symbols on surgical flowsheet graphs.
#[derive(Parser, Debug)]
#[command(name = "flowsheet", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    geometry: GeometryOverrides,

    /// Output directory (or file, for `evaluate` and `dice`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Seed for synthetic data.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Log progress to stderr; repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct GeometryOverrides {
    /// Graph raster height.
    #[arg(long = "geometry-height", global = true, value_name = "PX")]
    height: Option<usize>,
    /// Graph raster width.
    #[arg(long = "geometry-width", global = true, value_name = "PX")]
    width: Option<usize>,
    /// Height of the bottom 0-30 row.
    #[arg(long = "geometry-bottom-row", global = true, value_name = "PX")]
    bottom_row: Option<usize>,
    /// Columns between 5-minute gridlines.
    #[arg(long = "geometry-slot-spacing", global = true, value_name = "PX")]
    slot_spacing: Option<f64>,
    /// Number of time slots.
    #[arg(long = "geometry-slot-count", global = true, value_name = "N")]
    slot_count: Option<usize>,
    /// Column of the first time gridline.
    #[arg(long = "geometry-origin-col", global = true, value_name = "PX")]
    origin_col: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert segmentation masks into time series.
    Digitize(DigitizeArgs),
    /// Run the template-matching baseline on graph rasters.
    Match(MatchArgs),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Build ground-truth masks from an annotation file.
    Masks(MasksArgs),
    /// Dice coefficient between two masks.
    Dice(DiceArgs),
    /// Score predicted series against ground truth.
    Evaluate(EvaluateArgs),
    /// Write the configured templates as a template pack.
    Templates,
}

#[derive(Args, Debug)]
struct DigitizeArgs {
    #[arg(long, requires_all = ["dbp", "sbp"], conflicts_with = "dir")]
    hr: Option<PathBuf>,
    #[arg(long)]
    dbp: Option<PathBuf>,
    #[arg(long)]
    sbp: Option<PathBuf>,
    /// Directory of `<stem>_{hr,dbp,sbp}.pgm` masks to process in batch.
    #[arg(long, required_unless_present = "hr")]
    dir: Option<PathBuf>,
    /// Output file stem for single-image mode.
    #[arg(long, default_value = "series")]
    stem: String,
    /// Skip the mask edge corrections.
    #[arg(long)]
    no_correction: bool,
}

#[derive(Args, Debug)]
struct MatchArgs {
    /// Graph raster.
    #[arg(required_unless_present = "dir", conflicts_with = "dir")]
    image: Option<PathBuf>,
    /// Directory of graph rasters (`*.pgm`) to process in batch.
    #[arg(long)]
    dir: Option<PathBuf>,
    /// Template pack directory, overriding the configuration.
    #[arg(long)]
    templates: Option<PathBuf>,
    /// Skip the template bias corrections.
    #[arg(long)]
    no_correction: bool,
    /// Also write the raw matches as `<stem>_matches.json`.
    #[arg(long)]
    save_matches: bool,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Number of images; defaults to the configuration.
    #[arg(long, short)]
    n: Option<usize>,
    /// Regenerate the dataset described by this manifest instead.
    #[arg(long, conflicts_with = "n")]
    from_manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MasksArgs {
    /// Annotation file (JSON Lines).
    annotations: PathBuf,
    /// Output file stem; defaults to the annotation file stem.
    #[arg(long)]
    stem: Option<String>,
}

#[derive(Args, Debug)]
struct DiceArgs {
    a: PathBuf,
    b: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Directory of predicted `<stem>_{hr,dbp,sbp}.csv` series.
    #[arg(long)]
    pred: PathBuf,
    /// Directory of ground-truth series; its stems define the image set.
    #[arg(long)]
    truth: PathBuf,
    /// Second prediction directory to compare against.
    #[arg(long)]
    baseline: Option<PathBuf>,
    #[arg(long, default_value = "candidate")]
    pred_name: String,
    #[arg(long, default_value = "baseline")]
    baseline_name: String,
    #[arg(long, default_value_t = flowsheet_core::evaluation::DEFAULT_ALPHA)]
    alpha: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(match cli.verbose {
            0 => log::LevelFilter::Warn,
            1 => log::LevelFilter::Info,
            _ => log::LevelFilter::Debug,
        })
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let g = &cli.geometry;
    let geom = &mut cfg.geometry;
    if let Some(v) = g.height {
        geom.image_height_px = v;
    }
    if let Some(v) = g.width {
        geom.image_width_px = v;
    }
    if let Some(v) = g.bottom_row {
        geom.bottom_row_px = v;
    }
    if let Some(v) = g.slot_spacing {
        geom.slot_spacing_px = v;
    }
    if let Some(v) = g.slot_count {
        geom.slot_count = v;
    }
    if let Some(v) = g.origin_col {
        geom.time_origin_col = v;
    }
    if cli.jobs.is_some() {
        cfg.jobs = cli.jobs;
    }
    if let Some(seed) = cli.seed {
        cfg.synth.style.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    if let Some(jobs) = cfg.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("configuring worker threads")?;
    }
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Digitize(a) => digitize(&cfg, a, require_out(out)?),
        Command::Match(a) => match_cmd(&cfg, a, require_out(out)?),
        Command::Synth(a) => synth(&cfg, a, require_out(out)?),
        Command::Masks(a) => masks(&cfg, a, require_out(out)?),
        Command::Dice(a) => dice(a, out),
        Command::Evaluate(a) => evaluate(&cfg, a, require_out(out)?),
        Command::Templates => {
            let dir = require_out(out)?;
            let pack = cfg.load_templates()?;
            save_pack(&pack, dir)?;
            println!("wrote {} templates to {}", pack.len(), dir.display());
            Ok(())
        }
    }
}

fn require_out(out: Option<&Path>) -> Result<&Path> {
    out.ok_or_else(|| anyhow!("--out is required for this command"))
}

fn series_path(dir: &Path, stem: &str, symbol: Symbol) -> PathBuf {
    dir.join(format!("{stem}_{}.csv", symbol.short_name()))
}

fn save_triplet(dir: &Path, stem: &str, series: &[TimeSeries]) -> Result<()> {
    for s in series {
        save_series(s, &series_path(dir, stem, s.symbol))?;
    }
    Ok(())
}

fn report_diagnostics(stem: &str, extractions: &[Extraction]) {
    for e in extractions {
        for d in &e.diagnostics {
            eprintln!(
                "{stem}: {}",
                serde_json::to_string(d).expect("diagnostic serializes")
            );
        }
    }
}

/// Sorted stems of files in `dir` whose names end with `suffix`.
fn stems_with_suffix(dir: &Path, suffix: &str) -> Result<Vec<String>> {
    let mut stems = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let name = entry?.file_name();
        if let Some(stem) = name.to_str().and_then(|n| n.strip_suffix(suffix)) {
            if !stem.is_empty() && !stem.starts_with('.') {
                stems.push(stem.to_string());
            }
        }
    }
    stems.sort();
    Ok(stems)
}

fn digitize(cfg: &RunConfig, a: &DigitizeArgs, out: &Path) -> Result<()> {
    let mut ext = cfg.extraction.clone();
    if a.no_correction {
        ext.corrections = Corrections::ZERO;
    }
    let jobs: Vec<(String, [PathBuf; 3])> = match (&a.dir, &a.hr, &a.dbp, &a.sbp) {
        (Some(dir), ..) => {
            let stems = stems_with_suffix(dir, "_hr.pgm")?;
            if stems.is_empty() {
                bail!("no *_hr.pgm masks in {}", dir.display());
            }
            stems
                .into_iter()
                .map(|s| {
                    let p = |sym: Symbol| dir.join(format!("{s}_{}.pgm", sym.short_name()));
                    let paths = Symbol::ALL.map(p);
                    (s, paths)
                })
                .collect()
        }
        (None, Some(hr), Some(dbp), Some(sbp)) => {
            vec![(a.stem.clone(), [hr.clone(), dbp.clone(), sbp.clone()])]
        }
        _ => bail!("give either --dir or all of --hr, --dbp and --sbp"),
    };
    jobs.par_iter()
        .try_for_each(|(stem, [hr, dbp, sbp])| -> Result<()> {
            let [hr, dbp, sbp] = [hr, dbp, sbp].map(|p| load_mask_unpadded(p));
            let extractions = extract_all(&hr?, &dbp?, &sbp?, &cfg.geometry, &ext)
                .with_context(|| format!("digitizing {stem}"))?;
            report_diagnostics(stem, &extractions);
            let series: Vec<TimeSeries> = extractions.into_iter().map(|e| e.series).collect();
            save_triplet(out, stem, &series)
        })?;
    log::info!("digitized {} image(s) into {}", jobs.len(), out.display());
    Ok(())
}

fn file_stem(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .ok_or_else(|| anyhow!("cannot derive a name from {}", path.display()))
}

fn match_cmd(cfg: &RunConfig, a: &MatchArgs, out: &Path) -> Result<()> {
    let templates = match &a.templates {
        Some(dir) => flowsheet_core::template::load_pack(dir)?,
        None => cfg.load_templates()?,
    };
    let corrections = if a.no_correction {
        Corrections::ZERO
    } else {
        cfg.template_corrections
    };
    let images: Vec<PathBuf> = match (&a.dir, &a.image) {
        (Some(dir), _) => {
            let stems = stems_with_suffix(dir, ".pgm")?;
            if stems.is_empty() {
                bail!("no *.pgm rasters in {}", dir.display());
            }
            stems.iter().map(|s| dir.join(format!("{s}.pgm"))).collect()
        }
        (None, Some(img)) => vec![img.clone()],
        (None, None) => bail!("give an image or --dir"),
    };
    let geom = &cfg.geometry;
    images.par_iter().try_for_each(|path| -> Result<()> {
        let stem = file_stem(path)?;
        let img = load_raster(path)?;
        if img.height() != geom.image_height_px || img.width() != geom.image_width_px {
            bail!(
                "{} is {}x{} but the graph geometry is {}x{}",
                path.display(),
                img.height(),
                img.width(),
                geom.image_height_px,
                geom.image_width_px
            );
        }
        let matches = find_matches(&img, &templates)?;
        if a.save_matches {
            let text = serde_json::to_string_pretty(&matches)?;
            write_atomic(&out.join(format!("{stem}_matches.json")), text.as_bytes())?;
        }
        let series: Vec<TimeSeries> = Symbol::ALL
            .into_iter()
            .map(|s| tm_extract(&matches, geom, s, corrections.get(s)))
            .collect();
        save_triplet(out, &stem, &series)
    })?;
    log::info!("matched {} image(s) into {}", images.len(), out.display());
    Ok(())
}

fn synth(cfg: &RunConfig, a: &SynthArgs, out: &Path) -> Result<()> {
    let manifest = match &a.from_manifest {
        Some(path) => {
            let m = DatasetManifest::load(path)?;
            flowsheet_core::synth::write_dataset(&m, out)?;
            m
        }
        None => generate_dataset(
            a.n.unwrap_or(cfg.synth.images),
            &cfg.geometry,
            &cfg.synth.style,
            &cfg.synth.record,
            out,
        )?,
    };
    println!(
        "wrote {} synthetic image(s) and {} to {}",
        manifest.images.len(),
        MANIFEST_FILE,
        out.display()
    );
    Ok(())
}

fn masks(cfg: &RunConfig, a: &MasksArgs, out: &Path) -> Result<()> {
    let anns = load_annotations(&a.annotations)?;
    let (hr, dbp, sbp) = annotations_to_masks(&anns, &cfg.geometry)?;
    let stem = match &a.stem {
        Some(s) => s.clone(),
        None => file_stem(&a.annotations)?,
    };
    for (mask, symbol) in [
        (hr, Symbol::HeartRate),
        (dbp, Symbol::DiastolicBp),
        (sbp, Symbol::SystolicBp),
    ] {
        save_mask(
            &mask,
            &out.join(format!("{stem}_{}.pgm", symbol.short_name())),
        )?;
    }
    println!(
        "wrote 3 masks for {} annotation(s) to {}",
        anns.len(),
        out.display()
    );
    Ok(())
}

fn dice(a: &DiceArgs, out: Option<&Path>) -> Result<()> {
    let score = dice_coefficient(&load_mask_unpadded(&a.a)?, &load_mask_unpadded(&a.b)?)?;
    println!("{score:.6}");
    if let Some(path) = out {
        write_atomic(path, format!("{score}\n").as_bytes())?;
    }
    Ok(())
}

fn load_pairs(
    pred: &Path,
    truth: &Path,
    stems: &[String],
    cfg: &RunConfig,
    symbol: Symbol,
) -> Result<Vec<ImagePair>> {
    stems
        .iter()
        .map(|stem| {
            Ok(ImagePair {
                image: stem.clone(),
                pred: load_series(&series_path(pred, stem, symbol), symbol, &cfg.geometry)?,
                truth: load_series(&series_path(truth, stem, symbol), symbol, &cfg.geometry)?,
            })
        })
        .collect()
}

fn evaluate(cfg: &RunConfig, a: &EvaluateArgs, out: &Path) -> Result<()> {
    let stems = stems_with_suffix(&a.truth, "_hr.csv")?;
    if stems.is_empty() {
        bail!("no *_hr.csv truth series in {}", a.truth.display());
    }
    let symbols = Symbol::ALL
        .into_par_iter()
        .map(|symbol| -> Result<SymbolReport> {
            let candidate = evaluate_method(&load_pairs(&a.pred, &a.truth, &stems, cfg, symbol)?)?;
            let (baseline, comparison) = match &a.baseline {
                Some(dir) => {
                    let b = evaluate_method(&load_pairs(dir, &a.truth, &stems, cfg, symbol)?)?;
                    let c = compare_methods(&candidate, &b, a.alpha)?;
                    (Some(b), Some(c))
                }
                None => (None, None),
            };
            Ok(SymbolReport {
                symbol,
                candidate,
                baseline,
                comparison,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = EvaluationReport {
        candidate: a.pred_name.clone(),
        baseline: a.baseline.as_ref().map(|_| a.baseline_name.clone()),
        alpha: a.alpha,
        images: stems,
        symbols,
    };
    write_atomic(out, report.to_json().as_bytes())?;
    print_summary(&report);
    Ok(())
}

fn fmt_opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.prec$}"))
}

fn print_method(name: &str, m: &MethodReport) {
    let c = &m.counts;
    let d = &m.metrics;
    let tp = &m.true_positive_errors;
    let imp = &m.imputed_errors;
    println!(
        "  {name:<10} tp {:>4} fp {:>4} fn {:>4}  P {:.3} R {:.3} F1 {:.3}{}  tp err {} ± {}  imputed mse {} mae {} r2 {}",
        c.tp,
        c.fp,
        c.fn_,
        d.precision,
        d.recall,
        d.f1,
        if d.degenerate { " (degenerate)" } else { "" },
        fmt_opt(tp.mean_error, 2),
        fmt_opt(tp.std_dev, 2),
        fmt_opt(imp.mse, 2),
        fmt_opt(imp.mae, 2),
        fmt_opt(imp.r_squared, 3),
    );
}

fn fmt_t(t: &TestOutcome<TTestResult>) -> String {
    match t {
        TestOutcome::Computed(r) => format!(
            "d {:.3} t {:.2} p {:.2e}{}",
            r.mean_diff,
            r.t_statistic,
            r.p_value,
            if r.reject { " *" } else { "" }
        ),
        TestOutcome::Degenerate { reason } => format!("undefined ({reason})"),
    }
}

fn print_summary(report: &EvaluationReport) {
    println!("{} image(s)", report.images.len());
    for s in &report.symbols {
        println!("{}", s.symbol);
        print_method(&report.candidate, &s.candidate);
        if let (Some(b), Some(name)) = (&s.baseline, &report.baseline) {
            print_method(name, b);
        }
        if let Some(c) = &s.comparison {
            println!("  precision: {}", fmt_t(&c.precision));
            println!("  recall:    {}", fmt_t(&c.recall));
            println!("  f1:        {}", fmt_t(&c.f1));
            match &c.variance {
                TestOutcome::Computed(f) => println!(
                    "  variance:  F {:.2} ({}, {}) p {:.2e}{}",
                    f.f_statistic,
                    f.df_num,
                    f.df_den,
                    f.p_value,
                    if f.reject { " *" } else { "" }
                ),
                TestOutcome::Degenerate { reason } => println!("  variance:  undefined ({reason})"),
            }
        }
    }
}
