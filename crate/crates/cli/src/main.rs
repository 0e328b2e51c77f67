use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use wavesense::constraints::{build_bounds, detect_artifacts, ConstraintSet};
use wavesense::io::{self, Container, Dtype};
use wavesense::metrics::snr_db;
use wavesense::priors::{estimate_hyperparameters, fit_hyperparameters};
use wavesense::solvers::{
    cwt_reconstruct, fb_reconstruct, mean_reference, run_parallel, sense_wls, tikhonov, ConvergenceTrace, SolverConfig,
};
use wavesense::{
    dwt2, simulate, AcquisitionModel, ComplexImage, Error, Hyperparameters, MultiCoilData, NoiseCovariance,
    SensitivityMaps, SimulationConfig, WaveletBasis, WaveletKind,
};

const FORMAT_VERSION: &str = "PSNS1";

#[derive(Parser)]
#[command(name = "wavesense", version, about = "Wavelet-regularized SENSE reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a phantom acquisition from a key=value config file.
    Simulate(SimulateArgs),
    /// Fit prior hyperparameters to the wavelet coefficients of an image.
    Fit(FitArgs),
    /// Reconstruct one or more slices.
    Reconstruct(ReconstructArgs),
    /// SNR of estimates against a reference image.
    Evaluate(EvaluateArgs),
    /// Simulate, run all four methods and tabulate their SNR.
    Compare(CompareArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed in the config file.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long, value_enum, default_value_t = Wavelet::Sym8)]
    wavelet: Wavelet,
    #[arg(long, default_value_t = 3)]
    levels: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Method {
    Sense,
    Tikhonov,
    Wt,
    Cwt,
}

impl Method {
    const ALL: [Method; 4] = [Method::Sense, Method::Tikhonov, Method::Wt, Method::Cwt];

    fn name(self) -> &'static str {
        match self {
            Method::Sense => "sense",
            Method::Tikhonov => "tikhonov",
            Method::Wt => "wt",
            Method::Cwt => "cwt",
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Wavelet {
    Haar,
    Db8,
    Sym8,
}

impl From<Wavelet> for WaveletKind {
    fn from(w: Wavelet) -> Self {
        match w {
            Wavelet::Haar => WaveletKind::Haar,
            Wavelet::Db8 => WaveletKind::Db8,
            Wavelet::Sym8 => WaveletKind::Sym8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum FitFrom {
    Reference,
    Sense,
}

#[derive(Args, Clone)]
struct MethodParams {
    #[arg(long, value_enum, default_value_t = Wavelet::Sym8)]
    wavelet: Wavelet,
    #[arg(long, default_value_t = 3)]
    levels: usize,
    /// Step size; defaults to 1.99/(2θ).
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 2.0)]
    tau: f64,
    #[arg(long, default_value_t = 1e-5)]
    epsilon: f64,
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-5)]
    inner_tol: f64,
    #[arg(long, default_value_t = 50)]
    inner_max: usize,
    /// Tikhonov weight; defaults to 0.
    #[arg(long, default_value_t = 0.0)]
    kappa: f64,
    /// Hyperparameter file for wt/cwt.
    #[arg(long)]
    hyper: Option<PathBuf>,
    /// Fit hyperparameters when no file is given.
    #[arg(long, value_enum, default_value_t = FitFrom::Sense)]
    fit_from: FitFrom,
    /// Constraint set file for cwt; derived from basic SENSE otherwise.
    #[arg(long)]
    constraints: Option<PathBuf>,
    #[arg(long)]
    no_constraints: bool,
    #[arg(long, default_value_t = 1)]
    se_radius: usize,
    #[arg(long, default_value_t = 0.9)]
    quantile: f64,
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long, value_enum)]
    method: Method,
    /// Coil data, one header per slice.
    #[arg(long, required = true, num_args = 1..)]
    data: Vec<PathBuf>,
    /// Sensitivity maps, either one shared file or one per slice.
    #[arg(long, required = true, num_args = 1..)]
    maps: Vec<PathBuf>,
    /// Noise covariance, either one shared file or one per slice.
    #[arg(long, required = true, num_args = 1..)]
    covariance: Vec<PathBuf>,
    /// Reference images for --fit-from reference, one per slice or shared.
    #[arg(long, num_args = 1..)]
    reference: Vec<PathBuf>,
    /// Expected reduction factor; checked against the data.
    #[arg(long)]
    reduction: Option<usize>,
    /// Recorded in the manifest; reconstruction itself is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads for multi-slice runs (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    params: MethodParams,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(required = true)]
    estimates: Vec<PathBuf>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    params: MethodParams,
}

/// Failure classes mapped to process exit codes.
#[derive(Debug)]
enum Failure {
    Config(anyhow::Error),
    Numerical(anyhow::Error),
    Io(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numerical(_) => 3,
            Failure::Io(_) => 4,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Config(e) | Failure::Numerical(e) | Failure::Io(e) => e,
        }
    }
}

fn classify(err: anyhow::Error) -> Failure {
    let kind = err.chain().find_map(|e| e.downcast_ref::<Error>());
    match kind {
        Some(Error::Io { .. } | Error::Format { .. } | Error::ByteCount { .. }) => Failure::Io(err),
        Some(Error::Numerical(_) | Error::Degenerate(_)) => Failure::Numerical(err),
        Some(_) => Failure::Config(err),
        None if err.chain().any(|e| e.is::<std::io::Error>()) => Failure::Io(err),
        None => Failure::Config(err),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Fit(a) => cmd_fit(&a),
        Command::Reconstruct(a) => cmd_reconstruct(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Compare(a) => cmd_compare(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let f = classify(e);
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io { path: path.to_path_buf(), source: e }.into())
}

fn create_dir(path: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e }.into())
}

fn load_config(path: &Path, seed: Option<u64>) -> anyhow::Result<SimulationConfig> {
    let mut cfg = SimulationConfig::from_file(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct SimulationManifest {
    format_version: &'static str,
    tool_version: &'static str,
    seed: u64,
    config_sha256: String,
    config: String,
    reference: String,
    maps: String,
    true_maps: String,
    covariance: String,
    data: String,
}

fn cmd_simulate(a: &SimulateArgs) -> anyhow::Result<()> {
    let cfg = load_config(&a.config, a.seed)?;
    create_dir(&a.out)?;
    let sim = simulate(&cfg)?;
    let canonical = cfg.to_string();
    io::write_image(&a.out.join("reference.hdr"), &sim.reference)?;
    io::write_maps(&a.out.join("maps.hdr"), &sim.maps)?;
    io::write_maps(&a.out.join("true_maps.hdr"), &sim.true_maps)?;
    io::write_covariance(&a.out.join("covariance.hdr"), &sim.covariance)?;
    io::write_coil_data(&a.out.join("data.hdr"), &sim.data)?;
    write_text(&a.out.join("config.txt"), &canonical)?;
    let manifest = SimulationManifest {
        format_version: FORMAT_VERSION,
        tool_version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        config_sha256: sha256_hex(canonical.as_bytes()),
        config: canonical,
        reference: "reference.hdr".into(),
        maps: "maps.hdr".into(),
        true_maps: "true_maps.hdr".into(),
        covariance: "covariance.hdr".into(),
        data: "data.hdr".into(),
    };
    write_text(&a.out.join("manifest.toml"), &toml::to_string(&manifest)?)
}

fn cmd_fit(a: &FitArgs) -> anyhow::Result<()> {
    let image = io::read_image(&a.image)?;
    let h = estimate_hyperparameters(&image, &WaveletBasis::new(a.wavelet.into()), a.levels)?;
    h.write(&a.out)?;
    Ok(())
}

/// Inputs of one slice, loaded from disk.
struct Slice {
    name: String,
    data: MultiCoilData,
    maps: SensitivityMaps,
    covariance: NoiseCovariance,
    reference: Option<ComplexImage>,
}

#[derive(Serialize)]
struct RunManifest {
    format_version: &'static str,
    tool_version: &'static str,
    method: Method,
    slice: String,
    seed: u64,
    reduction: usize,
    coils: usize,
    height: usize,
    width: usize,
    wavelet: String,
    levels: usize,
    theta: f64,
    gamma: Option<f64>,
    lambda: f64,
    tau: f64,
    epsilon: f64,
    max_iter: usize,
    inner_tol: f64,
    inner_max: usize,
    kappa: f64,
    hyperparameters: Option<String>,
    constraints: Option<String>,
    active_pixels: Option<usize>,
    se_radius: usize,
    quantile: f64,
    iterations: Option<usize>,
    criterion: Option<f64>,
    modulus: Option<f64>,
    offset: Option<f64>,
}

struct Outcome {
    image: ComplexImage,
    trace: Option<ConvergenceTrace>,
    manifest: RunManifest,
    hyper: Option<Hyperparameters>,
    constraints: Option<ConstraintSet>,
}

fn pick<'a>(list: &'a [PathBuf], k: usize, what: &str, n: usize) -> anyhow::Result<&'a PathBuf> {
    match list.len() {
        1 => Ok(&list[0]),
        m if m == n => Ok(&list[k]),
        m => bail!(Error::InvalidParameter(format!("{m} {what} files for {n} slices; give one or one per slice"))),
    }
}

fn slice_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "slice".into())
}

fn load_slices(a: &ReconstructArgs) -> anyhow::Result<Vec<Slice>> {
    let n = a.data.len();
    let mut names: Vec<String> = a.data.iter().map(|p| slice_name(p)).collect();
    if names.iter().collect::<std::collections::BTreeSet<_>>().len() != n {
        names = (0..n).map(|k| format!("slice{k:03}")).collect();
    }
    let mut out = Vec::with_capacity(n);
    for (k, path) in a.data.iter().enumerate() {
        let data = io::read_coil_data(path)?;
        if let Some(r) = a.reduction {
            if r != data.reduction() {
                bail!(Error::InvalidParameter(format!(
                    "--reduction {r} but {} was acquired with R = {}",
                    path.display(),
                    data.reduction()
                )));
            }
        }
        let reference = if a.reference.is_empty() {
            None
        } else {
            Some(io::read_image(pick(&a.reference, k, "reference", n)?)?)
        };
        out.push(Slice {
            name: names[k].clone(),
            data,
            maps: io::read_maps(pick(&a.maps, k, "maps", n)?)?,
            covariance: io::read_covariance(pick(&a.covariance, k, "covariance", n)?)?,
            reference,
        });
    }
    Ok(out)
}

fn hyperparameters(
    p: &MethodParams,
    basis: &WaveletBasis,
    sense: &ComplexImage,
    reference: Option<&ComplexImage>,
) -> anyhow::Result<(Hyperparameters, String)> {
    if let Some(path) = &p.hyper {
        return Ok((Hyperparameters::read(path)?, path.display().to_string()));
    }
    match p.fit_from {
        FitFrom::Reference => {
            let r = reference.ok_or_else(|| {
                Error::InvalidParameter("--fit-from reference needs --reference or --hyper".into())
            })?;
            Ok((estimate_hyperparameters(r, basis, p.levels)?, "fitted from reference".into()))
        }
        FitFrom::Sense => Ok((
            fit_hyperparameters(&dwt2(sense, basis, p.levels)?)?,
            "fitted from basic SENSE".into(),
        )),
    }
}

fn constraint_set(p: &MethodParams, sense: &ComplexImage) -> anyhow::Result<(ConstraintSet, String)> {
    let (h, w) = sense.dims();
    if p.no_constraints {
        return Ok((ConstraintSet::unbounded(h, w), "none".into()));
    }
    if let Some(path) = &p.constraints {
        return Ok((ConstraintSet::read(path)?, path.display().to_string()));
    }
    let mask = detect_artifacts(sense, p.se_radius, p.quantile)?;
    Ok((build_bounds(sense, &mask, p.se_radius)?, "derived from basic SENSE".into()))
}

fn run_method(method: Method, slice: &Slice, p: &MethodParams, seed: u64) -> anyhow::Result<Outcome> {
    let model = AcquisitionModel::new(slice.maps.clone(), slice.covariance.clone(), slice.data.reduction())?;
    let (height, width) = model.dims();
    let basis = WaveletBasis::new(p.wavelet.into());
    let theta = model.spectral_bound()?;
    let solver = SolverConfig {
        levels: p.levels,
        gamma: p.gamma,
        lambda: p.lambda,
        epsilon: p.epsilon,
        max_iter: p.max_iter,
        tau: p.tau,
        inner_tol: p.inner_tol,
        inner_max: p.inner_max,
        ..Default::default()
    };
    let mut manifest = RunManifest {
        format_version: FORMAT_VERSION,
        tool_version: env!("CARGO_PKG_VERSION"),
        method,
        slice: slice.name.clone(),
        seed,
        reduction: model.reduction(),
        coils: model.coil_count(),
        height,
        width,
        wavelet: format!("{:?}", p.wavelet).to_lowercase(),
        levels: p.levels,
        theta,
        gamma: None,
        lambda: p.lambda,
        tau: p.tau,
        epsilon: p.epsilon,
        max_iter: p.max_iter,
        inner_tol: p.inner_tol,
        inner_max: p.inner_max,
        kappa: p.kappa,
        hyperparameters: None,
        constraints: None,
        active_pixels: None,
        se_radius: p.se_radius,
        quantile: p.quantile,
        iterations: None,
        criterion: None,
        modulus: None,
        offset: None,
    };
    // resolve the step before any work so Assumption violations surface early
    if matches!(method, Method::Wt | Method::Cwt) {
        manifest.gamma = Some(solver.resolve_gamma(theta)?);
    }
    let sense = sense_wls(&slice.data, &model)?;
    let mut outcome = Outcome { image: sense.clone(), trace: None, manifest, hyper: None, constraints: None };
    match method {
        Method::Sense => {}
        Method::Tikhonov => {
            outcome.image = tikhonov(&slice.data, &model, p.kappa, &mean_reference(&sense))?;
        }
        Method::Wt | Method::Cwt => {
            let (h, source) = hyperparameters(p, &basis, &sense, slice.reference.as_ref())?;
            outcome.manifest.hyperparameters = Some(source);
            let run = if method == Method::Wt {
                fb_reconstruct(&slice.data, &model, &basis, &h, &solver)?
            } else {
                let (set, source) = constraint_set(p, &sense)?;
                outcome.manifest.constraints = Some(source);
                outcome.manifest.active_pixels = Some(set.active_count());
                let run = cwt_reconstruct(&slice.data, &model, &basis, &h, &set, &solver)?;
                outcome.constraints = Some(set);
                run
            };
            outcome.manifest.iterations = Some(run.trace.iterations());
            outcome.manifest.criterion = Some(run.trace.last_criterion());
            outcome.manifest.modulus = Some(run.trace.modulus);
            outcome.manifest.offset = Some(run.trace.offset);
            outcome.image = run.image;
            outcome.trace = Some(run.trace);
            outcome.hyper = Some(h);
        }
    }
    Ok(outcome)
}

fn write_outcome(dir: &Path, slice: &str, method: Method, o: &Outcome) -> anyhow::Result<()> {
    let stem = format!("{slice}.{}", method.name());
    let container = Container::single(o.image.clone())
        .with_meta("method", method.name())
        .with_meta("slice", slice);
    io::write_container(&dir.join(format!("{stem}.hdr")), &container, Dtype::Complex128)?;
    if let Some(t) = &o.trace {
        t.write_csv(&dir.join(format!("{stem}.trace.csv")))?;
    }
    if let Some(h) = &o.hyper {
        h.write(&dir.join(format!("{stem}.hyper.toml")))?;
    }
    if let Some(c) = &o.constraints {
        c.write(&dir.join(format!("{stem}.constraints.hdr")))?;
    }
    write_text(&dir.join(format!("{stem}.manifest.toml")), &toml::to_string(&o.manifest)?)
}

fn cmd_reconstruct(a: &ReconstructArgs) -> anyhow::Result<()> {
    let slices = load_slices(a)?;
    create_dir(&a.out)?;
    let workers = if a.workers == 0 { rayon::current_num_threads() } else { a.workers };
    let outcomes = run_parallel(&slices, workers, |s| {
        run_method(a.method, s, &a.params, a.seed).map_err(|e| match e.downcast::<Error>() {
            Ok(err) => err,
            Err(other) => Error::InvalidParameter(format!("{other:#}")),
        })
    })?;
    for (s, o) in slices.iter().zip(&outcomes) {
        write_outcome(&a.out, &s.name, a.method, o).with_context(|| format!("writing slice {}", s.name))?;
        log::info!("slice {} done with {}", s.name, a.method.name());
    }
    Ok(())
}

fn format_snr(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.6}")
    }
}

fn cmd_evaluate(a: &EvaluateArgs) -> anyhow::Result<()> {
    let reference = io::read_image(&a.reference)?;
    let mut csv = String::from("slice,method,file,snr_db,error\n");
    let mut failures = 0;
    for path in &a.estimates {
        let row = io::read_container(path).map_err(anyhow::Error::from).and_then(|c| {
            let slice = c.meta.get("slice").cloned().unwrap_or_default();
            let method = c.meta.get("method").cloned().unwrap_or_default();
            let [image]: [ComplexImage; 1] = c
                .planes
                .try_into()
                .map_err(|_| anyhow!("{} holds more than one plane", path.display()))?;
            Ok((slice, method, snr_db(&reference, &image)?))
        });
        match row {
            Ok((slice, method, snr)) => {
                let _ = writeln!(csv, "{slice},{method},{},{},", path.display(), format_snr(snr));
            }
            Err(e) => {
                failures += 1;
                log::warn!("{}: {e:#}", path.display());
                let _ = writeln!(csv, ",,{},,{}", path.display(), format!("{e:#}").replace(',', ";"));
            }
        }
    }
    match &a.out {
        Some(p) => write_text(p, &csv)?,
        None => print!("{csv}"),
    }
    if failures > 0 {
        log::warn!("{failures} estimate(s) could not be evaluated");
    }
    Ok(())
}

fn cmd_compare(a: &CompareArgs) -> anyhow::Result<()> {
    let cfg = load_config(&a.config, a.seed)?;
    create_dir(&a.out)?;
    let sim = simulate(&cfg)?;
    let slice = Slice {
        name: "phantom".into(),
        data: sim.data.clone(),
        maps: sim.maps.clone(),
        covariance: sim.covariance.clone(),
        reference: Some(sim.reference.clone()),
    };
    let mut snr = BTreeMap::new();
    for method in Method::ALL {
        let o = run_method(method, &slice, &a.params, cfg.seed)?;
        write_outcome(&a.out, &slice.name, method, &o)?;
        snr.insert(method.name(), snr_db(&sim.reference, &o.image)?);
    }
    io::write_image(&a.out.join("reference.hdr"), &sim.reference)?;
    let mut csv = String::from("slice,sense,tikhonov,wt,cwt\n");
    let cols: Vec<String> = Method::ALL.iter().map(|m| format_snr(snr[m.name()])).collect();
    let _ = writeln!(csv, "{},{}", slice.name, cols.join(","));
    write_text(&a.out.join("snr.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}
