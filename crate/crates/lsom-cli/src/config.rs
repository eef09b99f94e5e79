//! Flat key-value configuration files.
//!
//! A run config is a list of `key = value` lines (`#` starts a comment):
//!
//! ```text
//! layer = 7 1 50        # p v k, repeated bottom-up
//! layer = 22 1 50
//! iterations = 50000
//! images = 1000
//! validate_images = 1000
//! seed = 3
//! ```
//!
//! A sweep config replaces `layer` with repeated `arch = (p,v,k),(p,v,k)`
//! lines and allows space-separated lists for `iterations` and `images`; the
//! sweep runs their Cartesian product (iterations outermost, then images,
//! then architectures — the row order used by the result tables).

use std::fmt::Display;
use std::str::FromStr;

use anyhow::{anyhow, bail, Result};
use lsom::LayerSpec;

/// IDX file names inside the dataset directory; the defaults are the
/// canonical MNIST names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetFiles {
    pub train_images: String,
    pub train_labels: String,
    pub test_images: String,
    pub test_labels: String,
}

impl Default for DatasetFiles {
    fn default() -> Self {
        DatasetFiles {
            train_images: "train-images-idx3-ubyte".into(),
            train_labels: "train-labels-idx1-ubyte".into(),
            test_images: "t10k-images-idx3-ubyte".into(),
            test_labels: "t10k-labels-idx1-ubyte".into(),
        }
    }
}

/// Everything one training run needs. Training images are drawn (seeded)
/// from the train files, validation images from the test files.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub layers: Vec<LayerSpec>,
    pub input_side: usize,
    pub num_classes: usize,
    pub iterations: usize,
    pub images: usize,
    pub validate_images: usize,
    pub seed: u64,
    pub base_rate: f64,
    /// `None` derives the supervisory scale from the architecture.
    pub sup_scale: Option<f64>,
    pub dataset_dir: Option<String>,
    pub out_dir: Option<String>,
    pub files: DatasetFiles,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut layers = Vec::new();
        let mut iterations = None;
        let mut images = None;
        let mut validate_images = None;
        let mut cfg = RunConfig {
            layers: Vec::new(),
            input_side: 28,
            num_classes: 10,
            iterations: 0,
            images: 0,
            validate_images: 0,
            seed: 1,
            base_rate: 0.9,
            sup_scale: None,
            dataset_dir: None,
            out_dir: None,
            files: DatasetFiles::default(),
        };
        for entry in entries(text)? {
            match entry.key {
                "layer" => layers.push(layer_triple(&entry)?),
                "input_side" => cfg.input_side = num(&entry)?,
                "num_classes" => cfg.num_classes = num(&entry)?,
                "iterations" => iterations = Some(num(&entry)?),
                "images" => images = Some(num(&entry)?),
                "validate_images" => validate_images = Some(num(&entry)?),
                "seed" => cfg.seed = num(&entry)?,
                "base_rate" => cfg.base_rate = num(&entry)?,
                "sup_scale" => cfg.sup_scale = Some(num(&entry)?),
                "dataset_dir" => cfg.dataset_dir = Some(entry.value.to_string()),
                "out_dir" => cfg.out_dir = Some(entry.value.to_string()),
                "train_images" => cfg.files.train_images = entry.value.to_string(),
                "train_labels" => cfg.files.train_labels = entry.value.to_string(),
                "test_images" => cfg.files.test_images = entry.value.to_string(),
                "test_labels" => cfg.files.test_labels = entry.value.to_string(),
                other => bail!("line {}: unknown key `{other}`", entry.no),
            }
        }
        if layers.is_empty() {
            bail!("config needs at least one `layer = p v k` line");
        }
        cfg.layers = layers;
        cfg.iterations = iterations.ok_or_else(|| anyhow!("config needs `iterations = ...`"))?;
        cfg.images = images.ok_or_else(|| anyhow!("config needs `images = ...`"))?;
        cfg.validate_images = validate_images.unwrap_or(cfg.images);
        Ok(cfg)
    }

    /// Architecture plus per-layer training parameters for this run.
    pub fn to_spec(&self) -> lsom::ArchitectureSpec {
        let shared = lsom::TrainParams {
            iterations: self.iterations,
            base_rate: self.base_rate,
            seed: self.seed,
        };
        let mut spec = lsom::ArchitectureSpec::new(
            self.layers.clone(),
            self.input_side,
            self.num_classes,
            shared,
        );
        if let Some(scale) = self.sup_scale {
            spec.sup_scale = scale;
        }
        spec
    }
}

/// A grid of runs: every combination of `iterations` × `images` × `arch`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub iterations: Vec<usize>,
    pub images: Vec<usize>,
    pub archs: Vec<Vec<LayerSpec>>,
    /// `None` validates on as many images as each run trains on.
    pub validate_images: Option<usize>,
    pub input_side: usize,
    pub num_classes: usize,
    pub seed: u64,
    pub base_rate: f64,
    pub sup_scale: Option<f64>,
    pub dataset_dir: Option<String>,
    pub out_dir: Option<String>,
    pub files: DatasetFiles,
}

impl SweepConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = SweepConfig {
            iterations: Vec::new(),
            images: Vec::new(),
            archs: Vec::new(),
            validate_images: None,
            input_side: 28,
            num_classes: 10,
            seed: 1,
            base_rate: 0.9,
            sup_scale: None,
            dataset_dir: None,
            out_dir: None,
            files: DatasetFiles::default(),
        };
        for entry in entries(text)? {
            match entry.key {
                "iterations" => cfg.iterations = num_list(&entry)?,
                "images" => cfg.images = num_list(&entry)?,
                "arch" => cfg.archs.push(
                    parse_arch(entry.value).map_err(|err| anyhow!("line {}: {err}", entry.no))?,
                ),
                "validate_images" => cfg.validate_images = Some(num(&entry)?),
                "input_side" => cfg.input_side = num(&entry)?,
                "num_classes" => cfg.num_classes = num(&entry)?,
                "seed" => cfg.seed = num(&entry)?,
                "base_rate" => cfg.base_rate = num(&entry)?,
                "sup_scale" => cfg.sup_scale = Some(num(&entry)?),
                "dataset_dir" => cfg.dataset_dir = Some(entry.value.to_string()),
                "out_dir" => cfg.out_dir = Some(entry.value.to_string()),
                "train_images" => cfg.files.train_images = entry.value.to_string(),
                "train_labels" => cfg.files.train_labels = entry.value.to_string(),
                "test_images" => cfg.files.test_images = entry.value.to_string(),
                "test_labels" => cfg.files.test_labels = entry.value.to_string(),
                other => bail!("line {}: unknown key `{other}`", entry.no),
            }
        }
        if cfg.iterations.is_empty() || cfg.images.is_empty() || cfg.archs.is_empty() {
            bail!("sweep config needs `iterations`, `images`, and at least one `arch` line");
        }
        Ok(cfg)
    }

    /// Expand into individual runs, iterations-major.
    pub fn runs(&self) -> Vec<RunConfig> {
        let mut out =
            Vec::with_capacity(self.iterations.len() * self.images.len() * self.archs.len());
        for &iterations in &self.iterations {
            for &images in &self.images {
                for arch in &self.archs {
                    out.push(RunConfig {
                        layers: arch.clone(),
                        input_side: self.input_side,
                        num_classes: self.num_classes,
                        iterations,
                        images,
                        validate_images: self.validate_images.unwrap_or(images),
                        seed: self.seed,
                        base_rate: self.base_rate,
                        sup_scale: self.sup_scale,
                        dataset_dir: self.dataset_dir.clone(),
                        out_dir: self.out_dir.clone(),
                        files: self.files.clone(),
                    });
                }
            }
        }
        out
    }
}

struct Entry<'a> {
    no: usize,
    key: &'a str,
    value: &'a str,
}

fn entries(text: &str) -> Result<Vec<Entry<'_>>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let no = i + 1;
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {no}: expected `key = value`, got `{line}`"))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            bail!("line {no}: empty key or value");
        }
        out.push(Entry { no, key, value });
    }
    Ok(out)
}

fn num<T: FromStr>(entry: &Entry) -> Result<T>
where
    T::Err: Display,
{
    entry
        .value
        .parse()
        .map_err(|err| anyhow!("line {}: {} = {}: {err}", entry.no, entry.key, entry.value))
}

fn num_list<T: FromStr>(entry: &Entry) -> Result<Vec<T>>
where
    T::Err: Display,
{
    entry
        .value
        .split_whitespace()
        .map(|v| {
            v.parse()
                .map_err(|err| anyhow!("line {}: {} value `{v}`: {err}", entry.no, entry.key))
        })
        .collect()
}

fn layer_triple(entry: &Entry) -> Result<LayerSpec> {
    let parts: Vec<usize> = num_list(entry)?;
    match parts[..] {
        [p, v, k] => Ok(LayerSpec::new(p, v, k)),
        _ => bail!(
            "line {}: `layer` takes `p v k`, got `{}`",
            entry.no,
            entry.value
        ),
    }
}

/// Parse the compact architecture notation `(p,v,k),(p,v,k),...`.
pub fn parse_arch(text: &str) -> Result<Vec<LayerSpec>> {
    let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let inner = compact
        .strip_prefix('(')
        .and_then(|rest| rest.strip_suffix(')'))
        .ok_or_else(|| anyhow!("architecture must look like (p,v,k),(p,v,k), got `{text}`"))?;
    inner
        .split("),(")
        .map(|triple| {
            let nums: Vec<usize> = triple
                .split(',')
                .map(|n| {
                    n.parse()
                        .map_err(|err| anyhow!("bad layer number `{n}` in `{text}`: {err}"))
                })
                .collect::<Result<_>>()?;
            match nums[..] {
                [p, v, k] => Ok(LayerSpec::new(p, v, k)),
                _ => bail!("each layer needs exactly (p,v,k), got `({triple})`"),
            }
        })
        .collect()
}

/// Render an architecture for a CSV cell: `p:v:k;p:v:k` (comma-free).
pub fn format_arch(layers: &[LayerSpec]) -> String {
    layers
        .iter()
        .map(|l| format!("{}:{}:{}", l.p, l.v, l.k))
        .collect::<Vec<_>>()
        .join(";")
}
