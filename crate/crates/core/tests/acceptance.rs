//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits nonzero if any criterion fails.

use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use wavesense::acquisition::{build_covariance, AcquisitionModel, DataFidelity};
use wavesense::constraints::{build_bounds, detect_artifacts, ConstraintSet};
use wavesense::metrics::{rate_bound, snr_db};
use wavesense::priors::{estimate_hyperparameters, prox_scalar};
use wavesense::simulate::{simulate, NoiseGenerator, SimulationConfig};
use wavesense::solvers::{
    cwt_reconstruct, dr_prox, fb_reconstruct, run_parallel, sense_wls, tikhonov, Initialization, SolverConfig,
};
use wavesense::{
    dwt2, idwt2, ComplexImage, GaussianParams, Hyperparameters, MultiCoilData, SensitivityMaps, Subband, SubbandParams,
    WaveletBasis, WaveletCoefficients, WaveletKind,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn gaussian_image(h: usize, w: usize, rng: &mut impl Rng) -> ComplexImage {
    ComplexImage::from_fn(h, w, |_, _| {
        c(StandardNormal.sample(&mut *rng), StandardNormal.sample(&mut *rng))
    })
}

fn gaussian_coeffs(h: usize, w: usize, levels: usize, rng: &mut impl Rng) -> WaveletCoefficients {
    WaveletCoefficients::from_raw(h, w, levels, gaussian_image(h, w, rng).into_data()).unwrap()
}

const KINDS: [WaveletKind; 3] = [WaveletKind::Haar, WaveletKind::Db8, WaveletKind::Sym8];

fn wavelet_correctness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut recon, mut adjoint, mut parseval) = (0.0f64, 0.0f64, 0.0f64);
    for kind in KINDS {
        let basis = WaveletBasis::new(kind);
        for levels in 1..=3 {
            for _ in 0..100 {
                let x = gaussian_image(64, 64, &mut rng);
                let z = dwt2(&x, &basis, levels).unwrap();
                recon = recon.max(idwt2(&z, &basis).unwrap().max_abs_diff(&x));
                let y = gaussian_coeffs(64, 64, levels, &mut rng);
                let lhs = z.inner(&y);
                let rhs = x.inner(&idwt2(&y, &basis).unwrap());
                adjoint = adjoint.max((lhs - rhs).norm() / (x.norm() * y.norm()));
                parseval = parseval.max((z.norm() / x.norm() - 1.0).abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        recon < 1e-10 && adjoint < 1e-10 && parseval < 1e-10 && secs < 10.0,
        format!("reconstruction {recon:.1e}, adjoint {adjoint:.1e}, Parseval {parseval:.1e}, {secs:.2} s"),
    )
}

/// Minimizer of a convex function on [lo, hi] by golden-section search.
fn golden(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > 1e-12 * (1.0 + lo.abs().max(hi.abs())) {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = f(b);
        }
    }
    0.5 * (lo + hi)
}

fn prox_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let xi = rng.random_range(-10.0..10.0);
        let alpha = rng.random_range(0.0..3.0);
        let beta = rng.random_range(0.0..3.0);
        let mu = rng.random_range(-5.0..5.0);
        let gamma = rng.random_range(0.01..2.0);
        let obj = |x: f64| 0.5 * (x - xi).powi(2) + gamma * (alpha * (x - mu).abs() + 0.5 * beta * (x - mu).powi(2));
        let x = golden(obj, xi.min(mu) - 1.0, xi.max(mu) + 1.0);
        worst = worst.max((prox_scalar(xi, alpha, beta, mu, gamma) - x).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst < 1e-6 && secs < 5.0, format!("max deviation {worst:.1e}, {secs:.2} s"))
}

fn random_model(rng: &mut impl Rng, h: usize, w: usize, coils: usize, r: usize) -> AcquisitionModel {
    let maps = SensitivityMaps::new((0..coils).map(|_| gaussian_image(h, w, rng)).collect()).unwrap();
    let psi = build_covariance(&maps, rng.random_range(0.5..2.0)).unwrap();
    AcquisitionModel::new(maps, psi, r).unwrap()
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let m = random_model(&mut rng, 16, 16, 4, 2);
        let d = MultiCoilData::new(2, 16, (0..4).map(|_| gaussian_image(8, 16, &mut rng)).collect()).unwrap();
        let f = DataFidelity::new(&m, &d).unwrap();
        let rho = gaussian_image(16, 16, &mut rng);
        let v = gaussian_image(16, 16, &mut rng);
        let u = f.gradient(&rho).unwrap();
        let t = 1e-3;
        let plus = f.value(&rho.add(&v.scale(c(t, 0.0)))).unwrap();
        let minus = f.value(&rho.sub(&v.scale(c(t, 0.0)))).unwrap();
        let fd = (plus - minus) / (2.0 * t);
        let analytic = u.inner_re(&v);
        worst = worst.max((fd - analytic).abs() / analytic.abs().max(1e-300));
    }
    outcome(worst < 1e-4, format!("max relative directional error {worst:.1e}"))
}

fn study(cfg: &SimulationConfig) -> (wavesense::Simulation, AcquisitionModel, WaveletBasis, Hyperparameters) {
    let sim = simulate(cfg).unwrap();
    let model = sim.model().unwrap();
    let basis = WaveletBasis::new(WaveletKind::Sym8);
    let h = estimate_hyperparameters(&sim.reference, &basis, cfg.levels).unwrap();
    (sim, model, basis, h)
}

fn solver_equivalences() -> Outcome {
    let (sim, m, basis, h) = study(&SimulationConfig {
        height: 32,
        width: 32,
        coils: 8,
        reduction: 4,
        sigma_n: 8.0,
        levels: 3,
        ..Default::default()
    });
    let sense = sense_wls(&sim.data, &m).unwrap();
    let tik = tikhonov(&sim.data, &m, 0.0, &ComplexImage::zeros(32, 32)).unwrap();
    let diff = tik.max_abs_diff(&sense);

    let cfg = SolverConfig::default();
    let wt = fb_reconstruct(&sim.data, &m, &basis, &h, &cfg).unwrap();
    let cwt = cwt_reconstruct(&sim.data, &m, &basis, &h, &ConstraintSet::unbounded(32, 32), &cfg).unwrap();
    let (jw, jc) = (wt.trace.last_criterion(), cwt.trace.last_criterion());
    let gap = (jw - jc).abs() / jw;

    let clean = simulate(&SimulationConfig { sigma_n: 0.0, ..Default::default() }).unwrap();
    let exact = sense_wls(&clean.data, &clean.model().unwrap()).unwrap();
    let snr = snr_db(&clean.reference, &exact).unwrap();
    outcome(
        diff < 1e-10 && gap < 1e-4 && snr > 80.0,
        format!("tikhonov(0) vs sense {diff:.1e}, cwt vs wt criterion gap {gap:.1e}, noiseless sense {snr:.1} dB"),
    )
}

fn convergence_guarantees() -> Outcome {
    let start = Instant::now();
    let (sim, m, basis, h) = study(&SimulationConfig {
        height: 16,
        width: 16,
        coils: 4,
        reduction: 2,
        coil_scale: 8.0,
        sigma_n: 2.0,
        levels: 2,
        ..Default::default()
    });
    let gamma = 1.0 / (2.0 * m.spectral_bound().unwrap());
    let base = SolverConfig { levels: 2, gamma: Some(gamma), lambda: 1.0, ..Default::default() };
    let reference = fb_reconstruct(
        &sim.data,
        &m,
        &basis,
        &h,
        &SolverConfig { epsilon: 1e-12, max_iter: 200_000, ..base.clone() },
    )
    .unwrap();
    let zhat = reference.coefficients;

    let run = fb_reconstruct(&sim.data, &m, &basis, &h, &SolverConfig { reference: Some(zhat.clone()), epsilon: 0.0, max_iter: 300, ..base.clone() }).unwrap();
    let j: Vec<f64> = run.trace.records.iter().map(|r| r.criterion).collect();
    let monotone = j.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
    let rate = rate_bound(&run.trace, gamma, 1.0, run.trace.modulus).unwrap();

    let tight = SolverConfig { epsilon: 1e-12, max_iter: 200_000, ..base };
    let a = fb_reconstruct(&sim.data, &m, &basis, &h, &SolverConfig { init: Initialization::Sense, ..tight.clone() }).unwrap();
    let b = fb_reconstruct(&sim.data, &m, &basis, &h, &SolverConfig { init: Initialization::Zero, ..tight }).unwrap();
    let spread = a.coefficients.distance(&b.coefficients);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        monotone && rate.pass && spread < 1e-3 && secs < 60.0,
        format!(
            "monotone {monotone} over {} iterations, rate bound {} (margin {:.3}), init spread {spread:.1e}, {secs:.1} s",
            j.len(),
            if rate.pass { "holds" } else { "violated" },
            rate.margin
        ),
    )
}

fn soft(x: f64, alpha: f64, beta: f64, mu: f64, gamma: f64) -> f64 {
    let s = x - mu;
    s.signum() * (s.abs() - gamma * alpha).max(0.0) / (1.0 + gamma * beta) + mu
}

/// prox of γ𝒥_P at `a` written out per coefficient, for the oracle.
fn oracle_prox(a: &WaveletCoefficients, h: &Hyperparameters, gamma: f64) -> WaveletCoefficients {
    let mut out = a.clone();
    for b in a.blocks() {
        for i in b.rows.clone() {
            for k in b.cols.clone() {
                let v = a.get(i, k);
                let z = match b.subband {
                    Subband::Approximation => {
                        let g = h.approximation();
                        c(
                            soft(v.re, 0.0, 1.0 / (g.sigma_re * g.sigma_re), g.mu_re, gamma),
                            soft(v.im, 0.0, 1.0 / (g.sigma_im * g.sigma_im), g.mu_im, gamma),
                        )
                    }
                    Subband::Detail { level, orientation } => {
                        let p = h.detail(level, orientation);
                        c(soft(v.re, p.alpha_re, p.beta_re, 0.0, gamma), soft(v.im, p.alpha_im, p.beta_im, 0.0, gamma))
                    }
                };
                out.set(i, k, z);
            }
        }
    }
    out
}

/// min ½‖ζ − a‖² + γ𝒥_P(ζ) subject to T*ζ ∈ C by FISTA on the dual of the
/// box constraint. The primal objective is 1-strongly convex, so the dual
/// is smooth with a 1-Lipschitz gradient.
fn dual_oracle(a: &WaveletCoefficients, h: &Hyperparameters, gamma: f64, set: &ConstraintSet, basis: &WaveletBasis) -> WaveletCoefficients {
    let levels = a.levels();
    let primal = |y: &ComplexImage| oracle_prox(&a.axpy(-1.0, &dwt2(y, basis, levels).unwrap()), h, gamma);
    let (hh, ww) = set.dims();
    let mut y = ComplexImage::zeros(hh, ww);
    let mut v = y.clone();
    let mut t = 1.0f64;
    for _ in 0..200_000 {
        // gradient step on g*(−Ty), then prox of the box support function
        let x = idwt2(&primal(&v), basis).unwrap();
        let w = v.add(&x);
        let y_next = w.sub(&set.project(&w).unwrap());
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        v = y_next.add(&y_next.sub(&y).scale(c((t - 1.0) / t_next, 0.0)));
        let change = y_next.distance(&y);
        y = y_next;
        t = t_next;
        if change <= 1e-10 * y.norm().max(1.0) {
            break;
        }
    }
    primal(&y)
}

fn dr_inner_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let basis = WaveletBasis::new(WaveletKind::Haar);
    let h = Hyperparameters::uniform(
        1,
        SubbandParams { alpha_re: 0.8, alpha_im: 0.5, beta_re: 0.3, beta_im: 0.6 },
        GaussianParams { mu_re: 1.0, mu_im: -0.5, sigma_re: 1.5, sigma_im: 2.0 },
    )
    .unwrap();
    let centre = gaussian_image(4, 4, &mut rng);
    let half_width: Vec<f64> = (0..16).map(|_| rng.random_range(0.05..0.5)).collect();
    let bounds = |v: Vec<f64>| {
        let lo: Vec<f64> = v.iter().zip(&half_width).map(|(x, w)| x - w).collect();
        let hi: Vec<f64> = v.iter().zip(&half_width).map(|(x, w)| x + w).collect();
        (lo, hi)
    };
    let set = ConstraintSet::new(4, 4, bounds(centre.real_part()), bounds(centre.imag_part()), vec![true; 16]).unwrap();
    let gamma = 0.7;
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let arg = dwt2(&gaussian_image(4, 4, &mut rng).scale(c(3.0, 0.0)), &basis, 1).unwrap();
        let cfg = SolverConfig { levels: 1, inner_tol: 1e-12, inner_max: 5000, ..Default::default() };
        let got = dr_prox(&arg, &h, gamma, &set, &basis, &cfg).unwrap();
        let want = dual_oracle(&arg, &h, gamma, &set, &basis);
        worst = worst.max(got.coefficients.distance(&want) / want.norm().max(1.0));
    }

    // a full constrained run on a single-coil 4×4 instance
    let maps = SensitivityMaps::new(vec![ComplexImage::filled(4, 4, c(1.0, 0.2))]).unwrap();
    let m = AcquisitionModel::new(maps, wavesense::NoiseCovariance::scaled_identity(1, 0.5).unwrap(), 1).unwrap();
    let d = MultiCoilData::new(1, 4, vec![gaussian_image(4, 4, &mut rng).scale(c(2.0, 0.0))]).unwrap();
    let run = cwt_reconstruct(&d, &m, &basis, &h, &set, &SolverConfig { levels: 1, ..Default::default() }).unwrap();
    let violation = set.max_violation(&run.image).unwrap();
    outcome(
        worst < 1e-4 && violation == 0.0,
        format!("dr_prox vs dual oracle {worst:.1e}, final cwt violation {violation:e}"),
    )
}

fn snr_ordering() -> Outcome {
    let start = Instant::now();
    let (sim, m, basis, h) = study(&SimulationConfig {
        height: 64,
        width: 64,
        coils: 8,
        reduction: 4,
        sigma_n: 10.0,
        levels: 3,
        ..Default::default()
    });
    let cfg = SolverConfig::default();
    let sense = sense_wls(&sim.data, &m).unwrap();
    let wt = fb_reconstruct(&sim.data, &m, &basis, &h, &cfg).unwrap();
    let mask = detect_artifacts(&sense, 1, 0.9).unwrap();
    let set = build_bounds(&sense, &mask, 1).unwrap();
    let cwt = cwt_reconstruct(&sim.data, &m, &basis, &h, &set, &cfg).unwrap();
    let snr = |x: &ComplexImage| snr_db(&sim.reference, x).unwrap();
    let (s, w, k) = (snr(&sense), snr(&wt.image), snr(&cwt.image));
    let secs = start.elapsed().as_secs_f64();
    outcome(
        (10.0..=15.0).contains(&s) && w > s && k >= w && k - s >= 0.3 && secs < 300.0,
        format!("sense {s:.3} dB, wt {w:.3} dB, cwt {k:.3} dB, cwt - sense {:+.3} dB, {secs:.1} s", k - s),
    )
}

fn slice_config(seed: u64, size: usize) -> SimulationConfig {
    SimulationConfig { height: size, width: size, coils: 8, reduction: 4, sigma_n: 10.0, seed, levels: 3, ..Default::default() }
}

fn twenty_iterations(cfg: &SimulationConfig) -> wavesense::Result<ComplexImage> {
    let (sim, m, basis, h) = study(cfg);
    let solver = SolverConfig { epsilon: 0.0, max_iter: 21, ..Default::default() };
    Ok(fb_reconstruct(&sim.data, &m, &basis, &h, &solver)?.image)
}

fn performance_envelope() -> Outcome {
    let big = slice_config(1, 256);
    let (sim, m, basis, h) = study(&big);
    let solver = SolverConfig { epsilon: 0.0, max_iter: 21, ..Default::default() };
    let start = Instant::now();
    let run = fb_reconstruct(&sim.data, &m, &basis, &h, &solver).unwrap();
    let single = start.elapsed().as_secs_f64();
    let iterations = run.trace.iterations() - 1;

    let slices: Vec<SimulationConfig> = (0..8).map(|s| slice_config(10 + s, 128)).collect();
    let start = Instant::now();
    let serial = run_parallel(&slices, 1, twenty_iterations).unwrap();
    let t1 = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let parallel = run_parallel(&slices, 8, twenty_iterations).unwrap();
    let t8 = start.elapsed().as_secs_f64();
    let identical = serial.iter().zip(&parallel).all(|(a, b)| a.data() == b.data());
    let speedup = t1 / t8;
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    outcome(
        iterations == 20 && single < 60.0 && speedup >= 3.0 && identical,
        format!(
            "256x256 x {iterations} iterations {single:.1} s; 8 slices: 1 worker {t1:.1} s, 8 workers {t8:.1} s, speedup {speedup:.2}x on {cores} core(s), bit-identical {identical}"
        ),
    )
}

fn noise_model() -> Outcome {
    let sim = SimulationConfig { height: 32, width: 32, coils: 4, reduction: 2, sigma_n: 3.0, ..Default::default() };
    let sim = simulate(&sim).unwrap();
    let psi = &sim.covariance;
    let l = psi.size();
    let gen = NoiseGenerator::new(psi).unwrap();
    let draws = 100_000u64;
    let mut acc = vec![c(0.0, 0.0); l * l];
    for p in 0..draws {
        let n = gen.sample(77, p);
        for i in 0..l {
            for k in 0..l {
                acc[i * l + k] += n[i] * n[k].conj();
            }
        }
    }
    let mut worst = 0.0f64;
    for i in 0..l {
        for k in 0..l {
            let emp = acc[i * l + k] / draws as f64;
            let scale = (psi.get(i, i).re * psi.get(k, k).re).sqrt();
            worst = worst.max((emp - psi.get(i, k)).norm() / scale);
        }
    }
    let s1 = ComplexImage::from_real(1, 2, &[1.0, 0.0]).unwrap();
    let s2 = ComplexImage::from_real(1, 2, &[1.0, 1.0]).unwrap();
    let hand = build_covariance(&SensitivityMaps::new(vec![s1, s2]).unwrap(), 1.0).unwrap();
    let off = hand.get(0, 1);
    let exact = off == c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    outcome(
        worst < 0.03 && exact,
        format!("max entrywise deviation {:.2}% over {draws} draws, hand example {off}", 100.0 * worst),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("wavelet correctness", wavelet_correctness),
        ("prox oracle", prox_oracle),
        ("gradient check", gradient_check),
        ("solver equivalences", solver_equivalences),
        ("convergence guarantees", convergence_guarantees),
        ("Douglas-Rachford inner correctness", dr_inner_correctness),
        ("synthetic SNR ordering", snr_ordering),
        ("performance envelope", performance_envelope),
        ("noise model", noise_model),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!("{} criterion {}: {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
