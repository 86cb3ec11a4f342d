//! Command-line front end. Exit codes: 0 success, 1 internal failure,
//! 2 invalid input.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{Map, Value};
use wakecough_core::embeddings::EmbeddingKind;
use wakecough_core::features::{extract_feature_map, FrameSpec, MfccConfig};
use wakecough_core::ivector::{accumulate_stats, train_tv, utterance_frames, TvConfig, TvModel, UTTERANCE_SEC};
use wakecough_core::linalg::Matrix;
use wakecough_core::pca::fit_pca;
use wakecough_core::ubm::{em_fit, DiagGmm};

use crate::config::{Experiment, RunConfig};
use crate::dataset::{
    build_sc_dataset, generate_synthetic_fixtures, load_entry, FixtureSpec, ScOptions, Variant, MAX_COUGHS, NOISE_LABEL,
};
use crate::error::{invalid, Error, Result};
use crate::formats::{load_gmm, load_tv, save_feature_map, save_gmm, save_tv};
use crate::grid::{resolve_usize, Param};
use crate::manifest::{scan_corpus, Layout, Manifest, COUGH_LABEL};
use crate::pipeline::{run_cougher, run_spotting};
use crate::tables::{
    export_embeddings, import_embeddings, read_ivectors, write_feature_map_csv, write_ivectors, write_projection, write_rows,
    IvectorTable,
};

pub const WORKERS_ENV: &str = "WAKECOUGH_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "wakecough", version, about = "Cough spotting and cougher identification experiments")]
pub struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, env = WORKERS_ENV, default_value_t = 0)]
    pub workers: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a spotting corpus, or the synthetic fixture corpus.
    Build(BuildArgs),
    /// Extract spectral feature maps for every manifest entry.
    Features(FeaturesArgs),
    /// Fit a diagonal GMM background model on MFCC frames.
    UbmTrain(UbmArgs),
    /// Fit a total-variability matrix against a background model.
    TvTrain(TvArgs),
    /// Extract one i-vector per utterance segment.
    Ivector(IvectorArgs),
    /// Validate and normalise an embeddings CSV.
    ImportEmbeddings(ImportArgs),
    /// Cougher or speaker identification over the (N, t) grid.
    RunCougher(RunArgs),
    /// Cough spotting over the (F, S) grid.
    RunSpotting(RunArgs),
    /// Two-component PCA projection of an i-vector CSV.
    Project(ProjectArgs),
    /// Tabulate the JSON reports of a run directory.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// Generate the synthetic fixture corpus instead.
    #[arg(long)]
    pub synthetic: bool,
    /// Fixture spec JSON (defaults apply to missing keys).
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// sc-11, sc-36 or all.
    #[arg(long, default_value = "sc-11")]
    pub variant: String,
    /// Command corpus: a manifest (.jsonl) or a directory of `<label>/*.wav`.
    #[arg(long)]
    pub commands: Option<PathBuf>,
    /// Cough corpus: a manifest or a directory of `<subject>/*.wav`.
    #[arg(long)]
    pub coughs: Option<PathBuf>,
    /// Noise corpus: a manifest or a directory of `<name>/*.wav`. Defaults
    /// to the background-noise class of the command corpus.
    #[arg(long)]
    pub noise: Option<PathBuf>,
    #[arg(long, default_value_t = MAX_COUGHS)]
    pub max_coughs: usize,
    /// Mix noise into cough events only.
    #[arg(long)]
    pub coughs_only: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "1024")]
    pub frame_len: String,
    #[arg(long, default_value = "100")]
    pub frames: String,
    #[arg(long)]
    pub allow_offgrid: bool,
    /// Also write each map as CSV.
    #[arg(long)]
    pub csv: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FrameArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Only entries with this label.
    #[arg(long)]
    pub label: Option<String>,
    /// Cepstral mean subtraction per clip.
    #[arg(long)]
    pub cms: bool,
    /// Utterance length in seconds.
    #[arg(long, default_value_t = UTTERANCE_SEC)]
    pub seg_sec: f64,
}

#[derive(Debug, Args)]
pub struct UbmArgs {
    #[command(flatten)]
    pub frames: FrameArgs,
    #[arg(long, default_value_t = 64)]
    pub components: usize,
    #[arg(long, default_value_t = 20)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TvArgs {
    #[command(flatten)]
    pub frames: FrameArgs,
    #[arg(long)]
    pub ubm: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub rank: usize,
    #[arg(long, default_value_t = 10)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct IvectorArgs {
    #[command(flatten)]
    pub frames: FrameArgs,
    #[arg(long)]
    pub ubm: PathBuf,
    #[arg(long)]
    pub tv: PathBuf,
    /// Scale each i-vector to unit length.
    #[arg(long)]
    pub length_norm: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// xvector, dvector or ivector.
    #[arg(long)]
    pub kind: String,
    /// Audio seconds per subject, to check row counts.
    #[arg(long)]
    pub seconds: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON config; flags override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// cougher-id or speaker-id (run-cougher only).
    #[arg(long)]
    pub experiment: Option<String>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub feature: Option<String>,
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub allow_offgrid: bool,
    /// N grid, e.g. "5 to 51 with step of 5".
    #[arg(long)]
    pub subjects: Option<String>,
    /// t grid, e.g. "2, 5 to 100 with step of 5".
    #[arg(long)]
    pub seconds: Option<String>,
    /// Comma-separated subset of lr, lda, svm, mlp.
    #[arg(long)]
    pub classifiers: Option<String>,
    /// F grid, e.g. "2^k, k=9, … 12".
    #[arg(long)]
    pub frame_len: Option<String>,
    /// S grid, e.g. "10 × k, k=7, 10, 12, 15".
    #[arg(long)]
    pub frames: Option<String>,
    /// Any other config key, as KEY=VALUE (VALUE parsed as JSON when it can be).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Resolve and print the grids without running anything.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Output directory of a run.
    pub dir: PathBuf,
}

/// Parses `args`, runs the command on a pool of the requested size and
/// returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.workers).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return 1;
        }
    };
    match pool.install(|| execute(&cli.command)) {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                2
            } else {
                1
            }
        }
    }
}

/// Runs one command and returns what it prints on success.
pub fn execute(cmd: &Command) -> Result<String> {
    match cmd {
        Command::Build(a) => cmd_build(a),
        Command::Features(a) => cmd_features(a),
        Command::UbmTrain(a) => cmd_ubm_train(a),
        Command::TvTrain(a) => cmd_tv_train(a),
        Command::Ivector(a) => cmd_ivector(a),
        Command::ImportEmbeddings(a) => cmd_import(a),
        Command::RunCougher(a) => {
            let cfg = run_config(a, false)?;
            if a.dry_run {
                return describe_grids(&cfg);
            }
            Ok(run_cougher(&cfg)?.summary_csv)
        }
        Command::RunSpotting(a) => {
            let cfg = run_config(a, true)?;
            if a.dry_run {
                return describe_grids(&cfg);
            }
            Ok(run_spotting(&cfg)?.summary_csv)
        }
        Command::Project(a) => cmd_project(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e))
}

/// Config file, then flags, then `--set` pairs.
pub fn run_config(a: &RunArgs, spotting: bool) -> Result<RunConfig> {
    let mut map = match &a.config {
        Some(p) => match read_json(p)? {
            Value::Object(m) => m,
            _ => return Err(Error::format(p, "config must be a JSON object")),
        },
        None => Map::new(),
    };
    let mut put = |k: &str, v: Value| {
        map.insert(k.to_string(), v);
    };
    let path = |p: &PathBuf| Value::String(p.to_string_lossy().into_owned());
    if spotting {
        if a.experiment.is_some() {
            return Err(invalid("--experiment applies to run-cougher only"));
        }
        put("experiment", "spotting".into());
    } else if let Some(e) = &a.experiment {
        put("experiment", e.as_str().into());
    }
    if let Some(p) = &a.manifest {
        put("manifest", path(p));
    }
    if let Some(p) = &a.embeddings {
        put("embeddings", path(p));
    }
    if let Some(p) = &a.out {
        put("out_dir", path(p));
    }
    for (k, v) in [
        ("feature", &a.feature),
        ("dataset", &a.dataset),
        ("subjects", &a.subjects),
        ("seconds", &a.seconds),
        ("frame_len", &a.frame_len),
        ("frames", &a.frames),
    ] {
        if let Some(v) = v {
            put(k, v.as_str().into());
        }
    }
    if let Some(c) = &a.classifiers {
        put("classifiers", c.split(',').map(|s| Value::String(s.trim().to_string())).collect());
    }
    if let Some(s) = a.seed {
        put("seed", s.into());
    }
    if a.allow_offgrid {
        put("allow_offgrid", true.into());
    }
    let defaults = serde_json::to_value(RunConfig::default()).expect("config serializes");
    for kv in &a.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| invalid(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        let k = k.trim();
        // Grid phrases are strings even when they look like numbers.
        let value = match defaults.get(k) {
            Some(Value::String(_)) => Value::String(v.to_string()),
            _ => serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string())),
        };
        put(k, value);
    }
    let cfg: RunConfig = serde_json::from_value(Value::Object(map)).map_err(|e| invalid(format!("config: {e}")))?;
    match (spotting, cfg.experiment) {
        (true, Experiment::Spotting) | (false, Experiment::CougherId | Experiment::SpeakerId) => {}
        (_, e) => return Err(invalid(format!("experiment {e:?} does not match the command"))),
    }
    cfg.validate()?;
    Ok(cfg)
}

/// The resolved grids of a validated config, one per line.
pub fn describe_grids(cfg: &RunConfig) -> Result<String> {
    let mut s = String::new();
    if cfg.experiment == Experiment::Spotting {
        let specs = cfg.frame_specs()?;
        let mut fs: Vec<usize> = specs.iter().map(|p| p.frame_len).collect();
        let mut ss: Vec<usize> = specs.iter().map(|p| p.num_frames).collect();
        fs.dedup();
        ss.sort_unstable();
        ss.dedup();
        let _ = writeln!(s, "F: {fs:?}");
        let _ = writeln!(s, "S: {ss:?}");
        let _ = writeln!(s, "cnn configs: {}", cfg.cnn_grid()?.len());
    } else {
        let _ = writeln!(s, "N: {:?}", cfg.subject_grid()?);
        let _ = writeln!(s, "t: {:?}", cfg.seconds_grid()?);
        for g in cfg.classifier_grids()? {
            let _ = writeln!(s, "{}: {} points", g.kind.name(), g.points.len());
        }
    }
    Ok(s)
}

fn corpus(path: &Path, layout: Layout) -> Result<Manifest> {
    if path.is_dir() {
        scan_corpus(path, layout)
    } else {
        Manifest::read(path)
    }
}

fn require<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a PathBuf> {
    p.as_ref().ok_or_else(|| invalid(format!("{flag} is required")))
}

fn cmd_build(a: &BuildArgs) -> Result<String> {
    let manifest = if a.synthetic {
        let spec = match &a.spec {
            Some(p) => serde_json::from_value(read_json(p)?).map_err(|e| Error::format(p, e))?,
            None => FixtureSpec::default(),
        };
        generate_synthetic_fixtures(&spec, &a.out)?
    } else {
        let variant = Variant::from_name(&a.variant)
            .ok_or_else(|| invalid(format!("unknown variant {:?} (sc-11, sc-36 or all)", a.variant)))?;
        let commands = corpus(require(&a.commands, "--commands")?, Layout::ClassPerDir)?;
        let coughs = corpus(require(&a.coughs, "--coughs")?, Layout::SubjectPerDir)?;
        let coughs = if coughs.entries.iter().any(|e| e.label == COUGH_LABEL) { coughs.with_label(COUGH_LABEL) } else { coughs };
        let noises = match &a.noise {
            Some(p) => {
                let n = corpus(p, Layout::ClassPerDir)?;
                if n.entries.iter().any(|e| e.label == NOISE_LABEL) { n.with_label(NOISE_LABEL) } else { n }
            }
            None => commands.with_label(NOISE_LABEL),
        };
        let opts = ScOptions { variant, seed: a.seed, max_coughs: a.max_coughs, coughs_only: a.coughs_only };
        let m = build_sc_dataset(&commands, &coughs, &noises, &opts, &a.out)?;
        m.write(&a.out.join("manifest.jsonl"))?;
        m
    };
    Ok(manifest.summary())
}

fn cmd_features(a: &FeaturesArgs) -> Result<String> {
    let fs = resolve_usize(Param::FrameLen, &a.frame_len, a.allow_offgrid)?;
    let ss = resolve_usize(Param::NumFrames, &a.frames, a.allow_offgrid)?;
    let m = Manifest::read(&a.manifest)?;
    let m = m.filter(|e| e.label != NOISE_LABEL);
    let mut index = Vec::new();
    for &f in &fs {
        for &s in &ss {
            let spec = FrameSpec::new(f, s)?;
            let dir = a.out.join(format!("F{f}_S{s}"));
            let files = m
                .entries
                .par_iter()
                .map(|e| {
                    let map = extract_feature_map(&load_entry(&m, e)?, spec)?;
                    let stem = e.id.replace(['/', '\\'], "__");
                    let file = dir.join(format!("{stem}.fmap"));
                    save_feature_map(&file, &map)?;
                    if a.csv {
                        write_feature_map_csv(&dir.join(format!("{stem}.csv")), &map)?;
                    }
                    Ok(vec![e.id.clone(), e.label.clone(), f.to_string(), s.to_string(), file.to_string_lossy().into_owned()])
                })
                .collect::<Result<Vec<_>>>()?;
            index.extend(files);
        }
    }
    let n = index.len();
    write_rows(&a.out.join("features.csv"), &["id", "label", "F", "S", "path"], index)?;
    Ok(format!("{n} feature maps\n"))
}

/// Utterance frames of the selected entries with their ids and subjects.
fn manifest_utterances(a: &FrameArgs) -> Result<(Vec<String>, Vec<String>, Vec<Matrix>)> {
    let m = Manifest::read(&a.manifest)?;
    let m = match &a.label {
        Some(l) => m.with_label(l),
        None => m.filter(|e| e.label != NOISE_LABEL),
    };
    if m.entries.is_empty() {
        return Err(invalid("no manifest entries selected"));
    }
    let cfg = MfccConfig { mean_subtraction: a.cms, ..MfccConfig::default() };
    let per = m
        .entries
        .par_iter()
        .map(|e| Ok(utterance_frames(&load_entry(&m, e)?, &cfg, a.seg_sec)?))
        .collect::<Result<Vec<_>>>()?;
    let (mut ids, mut who, mut frames) = (Vec::new(), Vec::new(), Vec::new());
    for (e, us) in m.entries.iter().zip(per) {
        for (k, u) in us.into_iter().enumerate() {
            ids.push(format!("{}#{k}", e.id));
            who.push(e.subject.clone().unwrap_or_else(|| e.label.clone()));
            frames.push(u);
        }
    }
    Ok((ids, who, frames))
}

fn stack(frames: &[Matrix]) -> Result<Matrix> {
    let d = frames[0].cols();
    let data: Vec<f64> = frames.iter().flat_map(|m| m.as_slice().iter().copied()).collect();
    Ok(Matrix::from_vec(data.len() / d, d, data)?)
}

fn cmd_ubm_train(a: &UbmArgs) -> Result<String> {
    let (_, _, frames) = manifest_utterances(&a.frames)?;
    let fit = em_fit(&stack(&frames)?, a.components, a.iters, a.seed)?;
    save_gmm(&a.out, &fit.gmm)?;
    let mut s = String::from("iteration,mean_log_likelihood\n");
    for (i, ll) in fit.log_likelihoods.iter().enumerate() {
        let _ = writeln!(s, "{i},{ll:.6}");
    }
    Ok(s)
}

fn stats_of(ubm: &DiagGmm, frames: &[Matrix]) -> Result<Vec<wakecough_core::ivector::BaumWelchStats>> {
    Ok(frames.par_iter().map(|f| accumulate_stats(ubm, f)).collect::<wakecough_core::Result<Vec<_>>>()?)
}

fn cmd_tv_train(a: &TvArgs) -> Result<String> {
    let ubm = load_gmm(&a.ubm)?;
    let (_, _, frames) = manifest_utterances(&a.frames)?;
    let stats = stats_of(&ubm, &frames)?;
    let fit = train_tv(&ubm, &stats, &TvConfig { rank: a.rank, iters: a.iters, seed: a.seed, ..TvConfig::default() })?;
    save_tv(&a.out, &fit.model)?;
    let mut s = String::from("iteration,objective\n");
    for (i, v) in fit.objective.iter().enumerate() {
        let _ = writeln!(s, "{i},{v:.6}");
    }
    Ok(s)
}

fn cmd_ivector(a: &IvectorArgs) -> Result<String> {
    let ubm = load_gmm(&a.ubm)?;
    let tv: TvModel = load_tv(&a.tv, &ubm)?;
    let (ids, who, frames) = manifest_utterances(&a.frames)?;
    let ex = tv.extractor();
    let rows = stats_of(&ubm, &frames)?
        .par_iter()
        .map(|s| {
            let mut w = ex.extract(s)?;
            if a.length_norm {
                let n = wakecough_core::linalg::norm(&w);
                if n > 0.0 {
                    w.iter_mut().for_each(|v| *v /= n);
                }
            }
            Ok(w)
        })
        .collect::<Result<Vec<_>>>()?;
    let r = tv.rank();
    let vectors = Matrix::from_vec(rows.len(), r, rows.concat())?;
    let n = ids.len();
    write_ivectors(&a.out, &IvectorTable { utterance_ids: ids, cougher_ids: who, vectors })?;
    Ok(format!("{n} i-vectors of dimension {r}\n"))
}

fn cmd_import(a: &ImportArgs) -> Result<String> {
    let kind = EmbeddingKind::from_name(&a.kind).ok_or_else(|| invalid(format!("unknown embedding kind {:?}", a.kind)))?;
    let set = import_embeddings(&a.input, kind)?;
    let mut s = format!("{} rows, {} subjects, dimension {}\n", set.rows.len(), set.subjects().len(), set.kind.dim());
    if let Some(t) = a.seconds {
        let want = kind.expected_rows(t);
        for (subject, got) in set.count_mismatches(t) {
            log::warn!("{subject}: {got} {} rows, expected {want} for {t} s", kind.name());
            let _ = writeln!(s, "warning: {subject}: {got} rows, expected {want}");
        }
    }
    if let Some(out) = &a.out {
        export_embeddings(out, &set)?;
    }
    Ok(s)
}

fn cmd_project(a: &ProjectArgs) -> Result<String> {
    let table = read_ivectors(&a.input)?;
    if table.vectors.rows() < 3 {
        return Err(invalid(format!("projection needs at least 3 vectors, {} given", table.vectors.rows())));
    }
    let pca = fit_pca(&table.vectors, 2)?;
    let proj = pca.transform(&table.vectors)?;
    write_projection(&a.out, &table.cougher_ids, &proj)?;
    Ok(format!("{} rows projected\n", proj.rows()))
}

fn cmd_report(a: &ReportArgs) -> Result<String> {
    let dir = a.dir.join("reports");
    let rd = std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut files: Vec<PathBuf> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::format(&dir, "no reports"));
    }
    let num = |v: &Value| v.as_f64().map(|x| format!("{x:.6}")).unwrap_or_else(|| "nan".into());
    let mut rows = Vec::new();
    for f in &files {
        let v = read_json(f)?;
        let name = f.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let folds = v["fold_accuracies"].as_array().map_or(0, |a| a.len());
        rows.push(vec![name, num(&v["mean_accuracy"]), num(&v["sigma_acc"]), num(&v["mean_kappa"]), folds.to_string()]);
    }
    let header = ["report", "mean_accuracy", "sigma_acc", "mean_kappa", "folds"];
    let mut s = header.join(",") + "\n";
    for r in &rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    write_rows(&a.dir.join("report_index.csv"), &header, rows)?;
    Ok(s)
}
