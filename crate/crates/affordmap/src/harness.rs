//! Dataset walking, parallel evaluation and report emission.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use affordmap_core::metrics::{evaluate_maps, MetricTriple};
use affordmap_core::{run_pipeline_observed, upsample_bilinear, FusionConfig, Mode, Stage, StageObserver};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::render::{load_rgb, render_overlay, save_png};
use crate::tensor_io::{find_ground_truth, read_ground_truth, read_sample_bundle, Bundle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Seen,
    Unseen,
}

impl Split {
    pub const ALL: [Split; 2] = [Split::Seen, Split::Unseen];

    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Seen => "seen",
            Split::Unseen => "unseen",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.dir_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SampleKey {
    pub split: Split,
    pub verb: String,
    pub object: String,
    pub image_id: String,
}

impl fmt::Display for SampleKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}/{}", self.split, self.verb, self.object, self.image_id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexedSample {
    pub key: SampleKey,
    pub bundle_dir: PathBuf,
    pub gt_path: PathBuf,
}

/// A sample directory that was left out of the index, and why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexWarning {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetIndex {
    pub root: PathBuf,
    pub samples: Vec<IndexedSample>,
    pub warnings: Vec<IndexWarning>,
}

fn sorted_subdirs(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_dir() {
            out.push((entry.file_name().to_string_lossy().into_owned(), path));
        }
    }
    out.sort();
    Ok(out)
}

/// Walks `root/{seen,unseen}/<verb>/<object>/<image_id>/`, optionally restricted to one split.
///
/// Every listed bundle is fully loaded once so that broken ones are reported here
/// instead of during evaluation.
pub fn index_dataset(root: &Path, split: Option<Split>) -> Result<DatasetIndex> {
    if !root.is_dir() {
        return Err(Error::MissingInput(root.to_owned()));
    }
    let mut samples = Vec::new();
    let mut warnings = Vec::new();
    let mut warn = |path: &Path, reason: String| {
        log::warn!("skipping {}: {reason}", path.display());
        warnings.push(IndexWarning { path: path.to_owned(), reason });
    };
    for s in Split::ALL.into_iter().filter(|s| split.is_none_or(|want| want == *s)) {
        let split_dir = root.join(s.dir_name());
        if !split_dir.is_dir() {
            continue;
        }
        for (verb, verb_dir) in sorted_subdirs(&split_dir)? {
            for (object, object_dir) in sorted_subdirs(&verb_dir)? {
                for (image_id, dir) in sorted_subdirs(&object_dir)? {
                    let Some(gt_path) = find_ground_truth(&dir) else {
                        warn(&dir, "no gt.npy or gt.png".to_owned());
                        continue;
                    };
                    if let Err(e) = read_sample_bundle(&dir) {
                        warn(&dir, e.to_string());
                        continue;
                    }
                    let key = SampleKey { split: s, verb: verb.clone(), object: object.clone(), image_id };
                    samples.push(IndexedSample { key, bundle_dir: dir, gt_path });
                }
            }
        }
    }
    if samples.is_empty() {
        return Err(Error::EmptyDataset(root.to_owned()));
    }
    Ok(DatasetIndex { root: root.to_owned(), samples, warnings })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub split: Split,
    pub verb: String,
    pub object: String,
    pub image_id: String,
    pub metrics: MetricTriple,
    /// `-1` when no component was selected (interaction-only mode).
    pub selected_component: i64,
    pub selected_sign: i8,
    /// Wall time; kept out of the JSON report so that it stays reproducible.
    #[serde(skip, default)]
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleFailure {
    pub key: SampleKey,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub indexed: usize,
    pub evaluated: usize,
    pub failed: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub mode: Mode,
    pub config_echo: FusionConfig,
    pub counts: Counts,
    /// Mean over samples; the figure to compare against published tables.
    pub micro: Option<MetricTriple>,
    /// Mean over (verb, object) pairs of the per-pair means.
    #[serde(rename = "macro")]
    pub macro_mean: Option<MetricTriple>,
    /// Keyed by `verb/object`.
    pub per_pair_macro: BTreeMap<String, MetricTriple>,
    pub per_sample: Vec<EvalRecord>,
    pub failures: Vec<SampleFailure>,
    pub warnings: Vec<IndexWarning>,
    pub stage_calls: BTreeMap<Stage, usize>,
}

impl Report {
    pub fn summary_line(&self) -> String {
        let m = self.micro.unwrap_or(MetricTriple { kld: f64::NAN, sim: f64::NAN, nss: f64::NAN });
        format!("KLD={:.6} SIM={:.6} NSS={:.6} n={}", m.kld, m.sim, m.nss, self.per_sample.len())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    /// Worker threads; `0` lets rayon decide.
    pub jobs: usize,
    /// Directory for per-sample overlay PNGs; `None` disables rendering.
    pub overlay_dir: Option<PathBuf>,
    pub alpha: f32,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { jobs: 0, overlay_dir: None, alpha: 0.5 }
    }
}

#[derive(Default)]
struct StageCounter([usize; 5]);

impl StageObserver for StageCounter {
    fn enter(&mut self, stage: Stage) {
        self.0[stage as usize] += 1;
    }
}

type Outcome = (std::result::Result<EvalRecord, Box<SampleFailure>>, StageCounter);

fn evaluate_one(s: &IndexedSample, cfg: &FusionConfig, mode: Mode, opts: &EvalOptions) -> Outcome {
    let start = Instant::now();
    let mut counter = StageCounter::default();
    let fail = |stage: &str, e: &dyn fmt::Display| {
        Box::new(SampleFailure { key: s.key.clone(), stage: stage.to_owned(), message: e.to_string() })
    };
    let result = (|| {
        let bundle: Bundle = read_sample_bundle(&s.bundle_dir).map_err(|e| fail("load", &e))?;
        let gt = read_ground_truth(&s.gt_path).map_err(|e| fail("load", &e))?;
        let out = run_pipeline_observed(&bundle.sample, cfg, mode, &mut counter)
            .map_err(|e| fail(e.stage.name(), &e.source))?;
        let (gh, gw) = gt.dims();
        let pred = upsample_bilinear(&out.affordance_map, gh, gw).map_err(|e| fail("metrics", &e))?;
        let metrics = evaluate_maps(&pred, &gt).map_err(|e| fail("metrics", &e))?;
        if !metrics.is_finite() {
            return Err(fail("metrics", &"non-finite metric"));
        }
        if let (Some(dir), Some(image)) = (&opts.overlay_dir, bundle.image_path()) {
            let name = format!("{}_{}_{}.png", s.key.verb, s.key.object, s.key.image_id);
            let written = load_rgb(&image)
                .and_then(|img| render_overlay(&img, &out.affordance_map, opts.alpha))
                .and_then(|img| save_png(&dir.join(&name), &img));
            if let Err(e) = written {
                log::warn!("overlay for {}: {e}", s.key);
            }
        }
        let (component, sign) = out.selection.map_or((-1, 0), |sel| (sel.component as i64, sel.sign));
        Ok(EvalRecord {
            split: s.key.split,
            verb: s.key.verb.clone(),
            object: s.key.object.clone(),
            image_id: s.key.image_id.clone(),
            metrics,
            selected_component: component,
            selected_sign: sign,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        })
    })();
    (result, counter)
}

/// Runs every indexed sample and aggregates. Output does not depend on `opts.jobs`.
pub fn evaluate(index: &DatasetIndex, cfg: &FusionConfig, mode: Mode, opts: &EvalOptions) -> Result<Report> {
    cfg.validate().map_err(Error::Config)?;
    if let Some(dir) = &opts.overlay_dir {
        fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.clone(), source })?;
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(opts.jobs).build().expect("thread pool construction");
    let outcomes: Vec<Outcome> =
        pool.install(|| index.samples.par_iter().map(|s| evaluate_one(s, cfg, mode, opts)).collect());

    let mut per_sample = Vec::new();
    let mut failures = Vec::new();
    let mut calls = [0usize; 5];
    for (result, counter) in outcomes {
        calls.iter_mut().zip(counter.0).for_each(|(a, b)| *a += b);
        match result {
            Ok(r) => per_sample.push(r),
            Err(f) => {
                log::warn!("{}: stage {}: {}", f.key, f.stage, f.message);
                failures.push(*f);
            }
        }
    }
    if per_sample.is_empty() && !failures.is_empty() {
        return Err(Error::EvaluationFailed { failed: failures.len() });
    }

    let mut pairs: BTreeMap<String, Vec<MetricTriple>> = BTreeMap::new();
    for r in &per_sample {
        pairs.entry(format!("{}/{}", r.verb, r.object)).or_default().push(r.metrics);
    }
    let per_pair_macro: BTreeMap<String, MetricTriple> =
        pairs.into_iter().filter_map(|(k, v)| MetricTriple::mean(&v).map(|m| (k, m))).collect();
    let counts = Counts {
        indexed: index.samples.len(),
        evaluated: per_sample.len(),
        failed: failures.len(),
        skipped: index.warnings.len(),
    };
    Ok(Report {
        mode,
        config_echo: cfg.clone(),
        counts,
        micro: MetricTriple::mean(per_sample.iter().map(|r| &r.metrics)),
        macro_mean: MetricTriple::mean(per_pair_macro.values()),
        per_pair_macro,
        per_sample,
        failures,
        warnings: index.warnings.clone(),
        stage_calls: Stage::ALL.iter().map(|&s| (s, calls[s as usize])).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReportFormat {
    Json,
    Csv,
}

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const CSV_HEADER: [&str; 8] = ["verb", "object", "image_id", "kld", "sim", "nss", "component", "ms"];

fn round6(v: &mut serde_json::Value) {
    use serde_json::Value;
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap_or_default();
            let r = (x * 1e6).round() / 1e6;
            *v = serde_json::Number::from_f64(r).map_or(Value::Null, Value::Number);
        }
        Value::Array(items) => items.iter_mut().for_each(round6),
        Value::Object(map) => map.values_mut().for_each(round6),
        _ => {}
    }
}

/// JSON text of the report with every float rounded to 6 decimals.
pub fn report_json(report: &Report) -> Result<String> {
    let mut value = serde_json::to_value(report)?;
    round6(&mut value);
    let mut text = serde_json::to_string_pretty(&value)?;
    text.push('\n');
    Ok(text)
}

pub fn write_report_csv<W: std::io::Write>(report: &Report, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in &report.per_sample {
        let m = &r.metrics;
        w.write_record([
            r.verb.clone(),
            r.object.clone(),
            r.image_id.clone(),
            format!("{:.6}", m.kld),
            format!("{:.6}", m.sim),
            format!("{:.6}", m.nss),
            r.selected_component.to_string(),
            format!("{:.6}", r.elapsed_ms),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn emit_report(report: &Report, out_dir: &Path, formats: &[ReportFormat]) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|source| Error::Io { path: out_dir.to_owned(), source })?;
    if formats.contains(&ReportFormat::Json) {
        let path = out_dir.join(REPORT_JSON);
        fs::write(&path, report_json(report)?).map_err(|source| Error::Io { path, source })?;
    }
    if formats.contains(&ReportFormat::Csv) {
        let path = out_dir.join(REPORT_CSV);
        let file = fs::File::create(&path).map_err(|source| Error::Io { path: path.clone(), source })?;
        write_report_csv(report, std::io::BufWriter::new(file))?;
    }
    Ok(())
}
