//! The work behind each subcommand. Data goes to stdout or files;
//! progress and diagnostics go to stderr.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use lsom::io::{export_class_map, export_grid_montage, export_pgm, load_dataset, MontageMode};
use lsom::{
    evaluate, load_model, save_model, train_model, EvalReport, GridCoord, LabeledDataset,
    LsomModel, SomGrid,
};

use crate::config::{format_arch, DatasetFiles, RunConfig, SweepConfig};

/// Schema shared by `train` and `sweep` results. A row's `seconds` column is
/// wall-clock training time and is the only field that varies between
/// identically-seeded runs.
pub const RESULTS_HEADER: &str = "iterations,images,arch,train_acc,validate_acc,seconds,status";

/// Dataset directory precedence: command-line flag, config file,
/// `LSOM_DATASET_DIR`, then `data/` under the working directory.
pub fn resolve_dataset_dir(
    flag: Option<&Path>,
    config: Option<&str>,
    env: Option<&str>,
) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| config.map(PathBuf::from))
        .or_else(|| env.map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data"))
}

fn env_dataset_dir() -> Option<String> {
    std::env::var("LSOM_DATASET_DIR").ok()
}

/// The four IDX files, read once; runs cut their subsets from these bytes.
struct RawData {
    train_images: Vec<u8>,
    train_labels: Vec<u8>,
    test_images: Vec<u8>,
    test_labels: Vec<u8>,
}

fn read_raw(dir: &Path, files: &DatasetFiles) -> Result<RawData> {
    let read = |name: &str| {
        let path = dir.join(name);
        fs::read(&path).with_context(|| format!("reading {}", path.display()))
    };
    Ok(RawData {
        train_images: read(&files.train_images)?,
        train_labels: read(&files.train_labels)?,
        test_images: read(&files.test_images)?,
        test_labels: read(&files.test_labels)?,
    })
}

fn subsets(
    raw: &RawData,
    images: usize,
    validate_images: usize,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let train = load_dataset(
        &raw.train_images,
        &raw.train_labels,
        Some(images),
        seed,
        "train",
    )?;
    let validate = load_dataset(
        &raw.test_images,
        &raw.test_labels,
        Some(validate_images),
        seed,
        "validate",
    )?;
    Ok((train, validate))
}

struct RunOutcome {
    row: String,
    model: LsomModel,
    report: EvalReport,
}

fn run_one(cfg: &RunConfig, raw: &RawData) -> Result<RunOutcome> {
    let spec = cfg.to_spec();
    spec.validate()?;
    let (train, validate) = subsets(raw, cfg.images, cfg.validate_images, cfg.seed)?;
    let started = Instant::now();
    let model = train_model(&train, &spec)?;
    let seconds = started.elapsed().as_secs_f64();
    let report = evaluate(&model, &train, &validate)?;
    let row = format!(
        "{},{},{},{:.4},{:.4},{:.3},ok",
        cfg.iterations,
        cfg.images,
        format_arch(&cfg.layers),
        report.train_accuracy,
        report.validate_accuracy,
        seconds,
    );
    Ok(RunOutcome { row, model, report })
}

/// Strip CSV-breaking characters out of an error message.
fn sanitize(msg: &str) -> String {
    msg.chars()
        .map(|c| {
            if matches!(c, ',' | '\n' | '\r') {
                ' '
            } else {
                c
            }
        })
        .collect()
}

fn error_row(cfg: &RunConfig, err: &anyhow::Error) -> String {
    format!(
        "{},{},{},,,,error: {}",
        cfg.iterations,
        cfg.images,
        format_arch(&cfg.layers),
        sanitize(&format!("{err:#}")),
    )
}

fn append_results(path: &Path, row: &str) -> Result<()> {
    let mut text = if path.exists() {
        String::new()
    } else {
        format!("{RESULTS_HEADER}\n")
    };
    text.push_str(row);
    text.push('\n');
    use std::io::Write;
    let mut file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    file.write_all(text.as_bytes())
        .with_context(|| format!("appending to {}", path.display()))?;
    Ok(())
}

fn out_dir_for(flag: Option<PathBuf>, config: Option<&str>) -> PathBuf {
    flag.or_else(|| config.map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

pub struct TrainArgs {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub dataset_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub images: Option<usize>,
    pub iterations: Option<usize>,
}

pub fn cmd_train(args: TrainArgs) -> Result<()> {
    let text = fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let mut cfg =
        RunConfig::parse(&text).with_context(|| format!("parsing {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(images) = args.images {
        cfg.images = images;
    }
    if let Some(iterations) = args.iterations {
        cfg.iterations = iterations;
    }
    let out = out_dir_for(args.out, cfg.out_dir.as_deref());
    let data = resolve_dataset_dir(
        args.dataset_dir.as_deref(),
        cfg.dataset_dir.as_deref(),
        env_dataset_dir().as_deref(),
    );
    let raw = read_raw(&data, &cfg.files)?;
    eprintln!(
        "training {} for {} iterations on {} images (seed {})",
        format_arch(&cfg.layers),
        cfg.iterations,
        cfg.images,
        cfg.seed,
    );
    let outcome = run_one(&cfg, &raw)?;
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let model_path = out.join("model.lsom");
    fs::write(&model_path, save_model(&outcome.model))
        .with_context(|| format!("writing {}", model_path.display()))?;
    append_results(&out.join("results.csv"), &outcome.row)?;
    eprintln!(
        "train {:.4} validate {:.4} sup_scale {} -> {}",
        outcome.report.train_accuracy,
        outcome.report.validate_accuracy,
        outcome.report.sup_scale,
        model_path.display(),
    );
    println!("{}", outcome.row);
    Ok(())
}

pub struct EvalArgs {
    pub model: PathBuf,
    pub dataset_dir: Option<PathBuf>,
    pub images: usize,
    pub validate_images: Option<usize>,
    pub seed: Option<u64>,
}

pub fn cmd_eval(args: EvalArgs) -> Result<()> {
    let model = read_model(&args.model)?;
    // The drawn subsets reproduce the training run's when the seed and counts
    // match; by default reuse the seed stored in the model.
    let seed = args.seed.unwrap_or(model.spec().train[0].seed);
    let data = resolve_dataset_dir(
        args.dataset_dir.as_deref(),
        None,
        env_dataset_dir().as_deref(),
    );
    let raw = read_raw(&data, &DatasetFiles::default())?;
    let (train, validate) = subsets(
        &raw,
        args.images,
        args.validate_images.unwrap_or(args.images),
        seed,
    )?;
    let report = evaluate(&model, &train, &validate)?;
    println!("train_accuracy = {:.4}", report.train_accuracy);
    println!("validate_accuracy = {:.4}", report.validate_accuracy);
    Ok(())
}

pub struct GenerateArgs {
    pub model: PathBuf,
    pub out: PathBuf,
    pub nodes: Vec<String>,
}

pub fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let model = read_model(&args.model)?;
    let side = model.top_side();
    let coords: Vec<GridCoord> = if args.nodes.is_empty() {
        (0..side)
            .flat_map(|row| (0..side).map(move |col| GridCoord::new(row, col)))
            .collect()
    } else {
        args.nodes
            .iter()
            .map(|text| parse_node(text))
            .collect::<Result<_>>()?
    };
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    for &coord in &coords {
        let class = model.class_at(coord).ok_or_else(|| {
            anyhow!(
                "node {},{} outside the {side}x{side} top grid",
                coord.row,
                coord.col
            )
        })?;
        let image = model.generate(coord)?;
        let path = args
            .out
            .join(format!("{}_{}_{}.pgm", coord.row, coord.col, class));
        fs::write(&path, export_pgm(&image)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    fs::write(args.out.join("class_map.csv"), export_class_map(&model))
        .context("writing class_map.csv")?;
    eprintln!(
        "wrote {} generated images and class_map.csv to {}",
        coords.len(),
        args.out.display()
    );
    Ok(())
}

pub struct ExportMapsArgs {
    pub model: PathBuf,
    pub out: PathBuf,
}

pub fn cmd_export_maps(args: ExportMapsArgs) -> Result<()> {
    let model = read_model(&args.model)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let top = model.grids().len() - 1;
    for (i, layer) in model.spec().layers.iter().enumerate() {
        // The top grid also stores supervisory channels; display its feature
        // part only.
        let truncated_top;
        let grid: &SomGrid = if i == top {
            truncated_top = model.grids()[i].truncated(model.top_feature_dim());
            &truncated_top
        } else {
            &model.grids()[i]
        };
        let p = layer.p;
        let d = grid.dim() / (p * p);
        // Layer 0 exemplars are pixel patches; upper ones are patches of
        // grid coordinates from the layer below, shown red/blue and scaled
        // by that grid's coordinate range.
        let (mode, scale_max, name) = if i == 0 {
            (MontageMode::Gray, 1.0, format!("layer{i}.pgm"))
        } else {
            let k_below = model.spec().layers[i - 1].k;
            (
                MontageMode::RedBlue,
                k_below.saturating_sub(1).max(1) as f64,
                format!("layer{i}.ppm"),
            )
        };
        let bytes = export_grid_montage(grid, (p, p, d), mode, scale_max)?;
        let path = args.out.join(&name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        eprintln!("wrote {name}: {0}x{0} nodes of {p}x{p}x{d}", grid.side());
    }
    Ok(())
}

pub struct SweepArgs {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub dataset_dir: Option<PathBuf>,
    pub seed: Option<u64>,
}

pub fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let text = fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let mut cfg =
        SweepConfig::parse(&text).with_context(|| format!("parsing {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out = out_dir_for(args.out, cfg.out_dir.as_deref());
    let data = resolve_dataset_dir(
        args.dataset_dir.as_deref(),
        cfg.dataset_dir.as_deref(),
        env_dataset_dir().as_deref(),
    );
    let raw = read_raw(&data, &cfg.files)?;
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let results = out.join("results.csv");
    let runs = cfg.runs();
    for (i, run) in runs.iter().enumerate() {
        eprintln!(
            "run {}/{}: {} iterations {} images {}",
            i + 1,
            runs.len(),
            run.iterations,
            run.images,
            format_arch(&run.layers),
        );
        // A failed combination becomes an error row; the sweep keeps going.
        let row = match run_one(run, &raw) {
            Ok(outcome) => outcome.row,
            Err(err) => error_row(run, &err),
        };
        append_results(&results, &row)?;
        println!("{row}");
    }
    Ok(())
}

fn read_model(path: &Path) -> Result<LsomModel> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(load_model(&bytes)?)
}

fn parse_node(text: &str) -> Result<GridCoord> {
    let (row, col) = text
        .split_once(',')
        .ok_or_else(|| anyhow!("node must be `row,col`, got `{text}`"))?;
    let parse = |part: &str| {
        part.trim()
            .parse::<usize>()
            .map_err(|err| anyhow!("node coordinate `{part}` in `{text}`: {err}"))
    };
    Ok(GridCoord::new(parse(row)?, parse(col)?))
}
