//! Reconstructors: SENSE weighted least squares, Tikhonov, wavelet-regularized
//! forward-backward, and its box-constrained variant with inner
//! Douglas-Rachford iterations.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use num_complex::Complex64;

use crate::acquisition::{AcquisitionModel, DataFidelity};
use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::image::{ComplexImage, MultiCoilData};
use crate::linalg;
use crate::priors::{penalty, prox_penalty, Hyperparameters};
use crate::wavelet::{dwt2, idwt2, WaveletBasis, WaveletCoefficients};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// ρ̂(r) = (SᴴΨ⁻¹S)♯ SᴴΨ⁻¹ d(r), singular values below 1e-10·σ_max dropped.
pub fn sense_wls(d: &MultiCoilData, model: &AcquisitionModel) -> Result<ComplexImage> {
    let rhs = model.normal_rhs(d)?;
    let r = model.reduction();
    let mut out = vec![ZERO; model.positions() * r];
    for p in 0..model.positions() {
        let pinv = linalg::pseudo_inverse(model.gram(p), r, r, 1e-10);
        linalg::matvec(&pinv, r, r, &rhs[p * r..(p + 1) * r], &mut out[p * r..(p + 1) * r]);
    }
    Ok(model.scatter(&out))
}

/// ρ̂(r) = ρ_r(r) + (SᴴΨ⁻¹S + κI)⁻¹ SᴴΨ⁻¹ (d(r) − S ρ_r(r)).
pub fn tikhonov(d: &MultiCoilData, model: &AcquisitionModel, kappa: f64, rho_r: &ComplexImage) -> Result<ComplexImage> {
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(Error::InvalidParameter(format!("kappa must be finite and >= 0, got {kappa}")));
    }
    model.check_image(rho_r)?;
    let rhs = model.normal_rhs(d)?;
    let r = model.reduction();
    let mut out = vec![ZERO; model.positions() * r];
    let mut prior = vec![ZERO; r];
    let mut g_prior = vec![ZERO; r];
    for p in 0..model.positions() {
        let mut a = model.gram(p).to_vec();
        for i in 0..r {
            a[i * r + i] += kappa;
        }
        model.gather(rho_r.data(), p, &mut prior);
        linalg::matvec(model.gram(p), r, r, &prior, &mut g_prior);
        let b: Vec<Complex64> = (0..r).map(|j| rhs[p * r + j] - g_prior[j]).collect();
        let x = well_posed(&a, r).then(|| linalg::hpd_solve(&a, r, &b)).flatten().ok_or_else(|| {
            Error::Numerical(format!(
                "singular system at reduced position ({}, {}); use kappa > 0",
                p / model.dims().1,
                p % model.dims().1
            ))
        })?;
        for j in 0..r {
            out[p * r + j] = prior[j] + x[j];
        }
    }
    Ok(model.scatter(&out))
}

/// Cholesky pivots must not collapse relative to the diagonal scale.
fn well_posed(a: &[Complex64], n: usize) -> bool {
    let scale = (0..n).map(|i| a[i * n + i].re).fold(0.0, f64::max);
    match linalg::cholesky(a, n) {
        Some(l) => (0..n).all(|i| l[i * n + i].re.powi(2) > 1e-12 * scale),
        None => false,
    }
}

/// Constant image at the mean of the pixels whose magnitude reaches 10% of
/// the maximum, a crude object mask of the basic-SENSE image.
pub fn mean_reference(sense: &ComplexImage) -> ComplexImage {
    let mag = sense.magnitude();
    let max = mag.iter().cloned().fold(0.0, f64::max);
    let (sum, count) = sense
        .data()
        .iter()
        .zip(&mag)
        .filter(|(_, &m)| m >= 0.1 * max && m > 0.0)
        .fold((ZERO, 0usize), |(s, c), (z, _)| (s + z, c + 1));
    let mean = if count == 0 { ZERO } else { sum / count as f64 };
    ComplexImage::filled(sense.height(), sense.width(), mean)
}

/// 𝒥_WT(ζ) = 𝒥_L(T*ζ) + 𝒥_P(ζ).
pub fn criterion(
    zeta: &WaveletCoefficients,
    d: &MultiCoilData,
    model: &AcquisitionModel,
    basis: &WaveletBasis,
    h: &Hyperparameters,
) -> Result<f64> {
    let rho = idwt2(zeta, basis)?;
    Ok(DataFidelity::new(model, d)?.value(&rho)? + penalty(zeta, h)?)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Initialization {
    /// dwt2 of the basic-SENSE reconstruction.
    Sense,
    Zero,
    Coefficients(WaveletCoefficients),
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub levels: usize,
    /// Constant step γ; `None` resolves to 1.99/(2θ).
    pub gamma: Option<f64>,
    pub lambda: f64,
    pub epsilon: f64,
    pub max_iter: usize,
    pub tau: f64,
    pub inner_tol: f64,
    pub inner_max: usize,
    pub init: Initialization,
    /// When given, the trace records ‖ζ⁽ⁿ⁾ − reference‖.
    pub reference: Option<WaveletCoefficients>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            levels: 3,
            gamma: None,
            lambda: 1.0,
            epsilon: 1e-5,
            max_iter: 1000,
            tau: 2.0,
            inner_tol: 1e-5,
            inner_max: 50,
            init: Initialization::Sense,
            reference: None,
        }
    }
}

impl SolverConfig {
    /// Default step: 1.99 over the Lipschitz constant 2θ of the data-term gradient.
    pub fn default_gamma(theta: f64) -> f64 {
        1.99 / (2.0 * theta)
    }

    /// Checks 0 < γ < 1/θ and 0 < λ ≤ 1 and returns the step to use.
    pub fn resolve_gamma(&self, theta: f64) -> Result<f64> {
        let gamma = self.gamma.unwrap_or_else(|| Self::default_gamma(theta));
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::Assumption(format!("step size must be positive, got {gamma}")));
        }
        if gamma * theta >= 1.0 {
            return Err(Error::Assumption(format!(
                "step size {gamma} must be below 1/theta = {} (theta = {theta})",
                1.0 / theta
            )));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::Assumption(format!("relaxation must lie in (0, 1], got {}", self.lambda)));
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be >= 1".into()));
        }
        Ok(gamma)
    }

    fn check_inner(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 2.0) {
            return Err(Error::InvalidParameter(format!("tau must lie in (0, 2], got {}", self.tau)));
        }
        if self.inner_max == 0 || !(self.inner_tol >= 0.0) {
            return Err(Error::InvalidParameter("inner loop needs inner_max >= 1 and inner_tol >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRecord {
    pub n: usize,
    pub criterion: f64,
    pub dist_to_ref: Option<f64>,
    pub seconds: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    IterationCap,
}

#[derive(Clone, Debug)]
pub struct ConvergenceTrace {
    pub records: Vec<TraceRecord>,
    pub theta: f64,
    pub gamma: f64,
    pub lambda: f64,
    /// Strong-convexity modulus ϑ₁ of 𝒥_P.
    pub modulus: f64,
    /// Offset ϑ₀ with 𝒥_P ≥ ϑ₁/2‖·‖² − ϑ₀.
    pub offset: f64,
    pub stop: StopReason,
    /// Douglas-Rachford iterations per outer step (constrained solver only).
    pub inner_iterations: Vec<usize>,
}

impl ConvergenceTrace {
    pub fn last_criterion(&self) -> f64 {
        self.records.last().map(|r| r.criterion).unwrap_or(f64::NAN)
    }

    pub fn iterations(&self) -> usize {
        self.records.last().map(|r| r.n).unwrap_or(0)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,J,dist_to_ref,seconds\n");
        for r in &self.records {
            let dist = r.dist_to_ref.map(|d| format!("{d:e}")).unwrap_or_default();
            let _ = writeln!(s, "{},{:e},{},{:e}", r.n, r.criterion, dist, r.seconds);
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }
}

#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub image: ComplexImage,
    pub coefficients: WaveletCoefficients,
    pub trace: ConvergenceTrace,
}

/// Shared setup of the two iterative solvers.
struct Problem<'a> {
    fidelity: DataFidelity<'a>,
    basis: &'a WaveletBasis,
    h: &'a Hyperparameters,
    theta: f64,
    gamma: f64,
}

impl<'a> Problem<'a> {
    fn new(
        d: &'a MultiCoilData,
        model: &'a AcquisitionModel,
        basis: &'a WaveletBasis,
        h: &'a Hyperparameters,
        config: &SolverConfig,
    ) -> Result<Self> {
        if h.levels() != config.levels {
            return Err(Error::InvalidParameter(format!(
                "hyperparameters have {} levels, solver uses {}",
                h.levels(),
                config.levels
            )));
        }
        let theta = model.spectral_bound()?;
        let gamma = config.resolve_gamma(theta)?;
        Ok(Self {
            fidelity: DataFidelity::new(model, d)?,
            basis,
            h,
            theta,
            gamma,
        })
    }

    fn initial(&self, config: &SolverConfig) -> Result<WaveletCoefficients> {
        let (hgt, wid) = self.fidelity.model().dims();
        let zeta = match &config.init {
            Initialization::Sense => {
                let rho = sense_wls(self.fidelity.data(), self.fidelity.model())?;
                dwt2(&rho, self.basis, config.levels)?
            }
            Initialization::Zero => WaveletCoefficients::zeros(hgt, wid, config.levels)?,
            Initialization::Coefficients(z) => {
                if (z.height(), z.width(), z.levels()) != (hgt, wid, config.levels) {
                    return Err(Error::Dimension("initial coefficients do not match the problem".into()));
                }
                z.clone()
            }
        };
        Ok(zeta)
    }

    /// T∇𝒥_L(ρ) for ρ = T*ζ.
    fn gradient_coeffs(&self, rho: &ComplexImage, levels: usize) -> Result<WaveletCoefficients> {
        dwt2(&self.fidelity.gradient(rho)?, self.basis, levels)
    }

    fn value(&self, zeta: &WaveletCoefficients, rho: &ComplexImage) -> Result<f64> {
        let j = self.fidelity.value(rho)? + penalty(zeta, self.h)?;
        if !j.is_finite() {
            return Err(Error::Numerical(format!(
                "criterion became {j}; step size or model is faulty"
            )));
        }
        Ok(j)
    }

    fn trace(&self, config: &SolverConfig) -> ConvergenceTrace {
        let (h, w) = self.fidelity.model().dims();
        let approx_len = (h >> config.levels) * (w >> config.levels);
        ConvergenceTrace {
            records: Vec::new(),
            theta: self.theta,
            gamma: self.gamma,
            lambda: config.lambda,
            modulus: self.h.strong_convexity(),
            offset: self.h.offset(approx_len),
            stop: StopReason::IterationCap,
            inner_iterations: Vec::new(),
        }
    }
}

fn record(
    trace: &mut ConvergenceTrace,
    n: usize,
    criterion: f64,
    zeta: &WaveletCoefficients,
    config: &SolverConfig,
    start: Instant,
) {
    trace.records.push(TraceRecord {
        n,
        criterion,
        dist_to_ref: config.reference.as_ref().map(|r| zeta.distance(r)),
        seconds: start.elapsed().as_secs_f64(),
    });
}

fn converged(prev: f64, cur: f64, epsilon: f64) -> bool {
    (prev - cur).abs() <= epsilon * cur.abs()
}

/// Forward-backward iterations
/// ζ ← ζ + λ(prox_{γ𝒥_P}(ζ − γ·T∇𝒥_L(T*ζ)) − ζ),
/// stopped when consecutive criterion values differ by at most ε·𝒥.
pub fn fb_reconstruct(
    d: &MultiCoilData,
    model: &AcquisitionModel,
    basis: &WaveletBasis,
    h: &Hyperparameters,
    config: &SolverConfig,
) -> Result<Reconstruction> {
    let start = Instant::now();
    let prob = Problem::new(d, model, basis, h, config)?;
    let mut trace = prob.trace(config);
    let gamma = prob.gamma;
    let mut zeta = prob.initial(config)?;
    let mut rho = idwt2(&zeta, basis)?;
    let mut j = prob.value(&zeta, &rho)?;
    record(&mut trace, 1, j, &zeta, config, start);
    for n in 2..=config.max_iter {
        let grad = prob.gradient_coeffs(&rho, config.levels)?;
        let step = prox_penalty(&zeta.axpy(-gamma, &grad), h, gamma)?;
        zeta = zeta.lerp(config.lambda, &step);
        rho = idwt2(&zeta, basis)?;
        let j_new = prob.value(&zeta, &rho)?;
        record(&mut trace, n, j_new, &zeta, config, start);
        let done = converged(j, j_new, config.epsilon);
        j = j_new;
        if done {
            trace.stop = StopReason::Converged;
            break;
        }
    }
    Ok(Reconstruction {
        image: rho,
        coefficients: zeta,
        trace,
    })
}

/// ‖ζ − prox_{γ𝒥_P}(ζ − γ·T∇𝒥_L(T*ζ))‖ / ‖ζ‖, zero at the minimizer.
pub fn fixed_point_residual(
    zeta: &WaveletCoefficients,
    d: &MultiCoilData,
    model: &AcquisitionModel,
    basis: &WaveletBasis,
    h: &Hyperparameters,
    gamma: f64,
) -> Result<f64> {
    let f = DataFidelity::new(model, d)?;
    let grad = dwt2(&f.gradient(&idwt2(zeta, basis)?)?, basis, zeta.levels())?;
    let step = prox_penalty(&zeta.axpy(-gamma, &grad), h, gamma)?;
    Ok(zeta.distance(&step) / zeta.norm().max(f64::MIN_POSITIVE))
}

/// Result of the inner Douglas-Rachford loop.
#[derive(Clone, Debug)]
pub struct DrOutcome {
    pub coefficients: WaveletCoefficients,
    pub iterations: usize,
    pub capped: bool,
}

/// prox of γ𝒥_P + ι_{C*} at `arg` by Douglas-Rachford:
/// η^{m+½} = P_{C*}((η^m + arg)/2),
/// η^{m+1} = η^m + τ(prox_{γ𝒥_P}(2η^{m+½} − η^m) − η^{m+½}),
/// started at η⁰ = arg and returning the last half-step, which lies in C*.
pub fn dr_prox(
    arg: &WaveletCoefficients,
    h: &Hyperparameters,
    gamma: f64,
    set: &ConstraintSet,
    basis: &WaveletBasis,
    config: &SolverConfig,
) -> Result<DrOutcome> {
    config.check_inner()?;
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!("prox step must be positive, got {gamma}")));
    }
    let mut eta = arg.clone();
    let mut half = eta.clone();
    for m in 1..=config.inner_max {
        half = set.project_coeffs(&eta.lerp(0.5, arg), basis)?;
        let reflected = eta.axpy(-1.0, &half).map(|z| -z).axpy(1.0, &half);
        let p = prox_penalty(&reflected, h, gamma)?;
        let next = eta.axpy(config.tau, &p.axpy(-1.0, &half));
        let change = next.distance(&eta);
        let scale = eta.norm();
        eta = next;
        if change <= config.inner_tol * scale || change == 0.0 {
            return Ok(DrOutcome {
                coefficients: half,
                iterations: m,
                capped: false,
            });
        }
    }
    log::warn!(
        "Douglas-Rachford inner loop hit its cap of {} iterations",
        config.inner_max
    );
    Ok(DrOutcome {
        coefficients: half,
        iterations: config.inner_max,
        capped: true,
    })
}

/// Forward-backward outer loop whose backward step is the constrained prox
/// computed by [`dr_prox`]. The returned image is P_C(T*ζ), so it satisfies
/// the box constraints exactly.
pub fn cwt_reconstruct(
    d: &MultiCoilData,
    model: &AcquisitionModel,
    basis: &WaveletBasis,
    h: &Hyperparameters,
    set: &ConstraintSet,
    config: &SolverConfig,
) -> Result<Reconstruction> {
    let start = Instant::now();
    config.check_inner()?;
    if config.tau == 2.0 {
        log::warn!("tau = 2 lies on the boundary of the range covered by the Douglas-Rachford convergence result");
    }
    if set.dims() != model.dims() {
        return Err(Error::Dimension("constraint set does not match the image size".into()));
    }
    let prob = Problem::new(d, model, basis, h, config)?;
    let mut trace = prob.trace(config);
    let gamma = prob.gamma;
    let mut zeta = set.project_coeffs(&prob.initial(config)?, basis)?;
    let mut rho = idwt2(&zeta, basis)?;
    let mut j = prob.value(&zeta, &rho)?;
    record(&mut trace, 1, j, &zeta, config, start);
    for n in 2..=config.max_iter {
        let grad = prob.gradient_coeffs(&rho, config.levels)?;
        let arg = zeta.axpy(-gamma, &grad);
        let inner = dr_prox(&arg, h, gamma, set, basis, config)?;
        trace.inner_iterations.push(inner.iterations);
        zeta = zeta.lerp(config.lambda, &inner.coefficients);
        rho = idwt2(&zeta, basis)?;
        let j_new = prob.value(&zeta, &rho)?;
        record(&mut trace, n, j_new, &zeta, config, start);
        let done = converged(j, j_new, config.epsilon);
        j = j_new;
        if done {
            trace.stop = StopReason::Converged;
            break;
        }
    }
    let image = set.project(&rho)?;
    Ok(Reconstruction {
        image,
        coefficients: zeta,
        trace,
    })
}

/// Runs `job` on every item on a pool of `workers` threads. Each item is
/// processed independently, so results do not depend on the worker count.
pub fn run_parallel<T, R, F>(items: &[T], workers: usize, job: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync,
{
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start worker pool: {e}")))?;
    pool.install(|| items.par_iter().map(&job).collect())
}
