//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Tolerances and runtime budgets are pinned here.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nsvfp::diagnostics::{conservation_report, energy, fit_decay_rate, hydro_residual, momentum_functional};
use nsvfp::gpc::{triple_products, GpcBasis, Measure};
use nsvfp::harness::{k_sweep_at, HarnessConfig, Preset};
use nsvfp::hermite::basis_values;
use nsvfp::ops::{inner, LadderSuite};
use nsvfp::params::{Model, ModelParams, SpectralGrid};
use nsvfp::solver::Solver;
use nsvfp::state::{make_initial_state, SimState, ZLaw};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn model(params: ModelParams, n_x: usize, n_v: usize) -> Model {
    Model::new(params, SpectralGrid::new(n_x, n_v)).expect("valid model")
}

fn random_coeffs(m: &Model, rng: &mut ChaCha8Rng, clear_top: bool) -> Array2<Complex64> {
    let mut f = Array2::zeros((m.hermite.len(), m.modes.len()));
    for h in 0..m.hermite.len() {
        if clear_top && m.hermite.multi(h).iter().any(|&n| n + 1 == m.grid.n_v) {
            continue;
        }
        for c in 0..m.modes.len() {
            f[[h, c]] = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        }
    }
    f
}

fn max_abs(a: &Array2<Complex64>) -> f64 {
    a.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// `f(v) = Σ_n c_n ψ_n(v)` for a one-dimensional velocity.
fn eval_v(m: &Model, sigma: f64, c: &[f64], v: f64) -> f64 {
    basis_values(&m.hermite, sigma, &[v]).iter().zip(c).map(|(p, a)| p * a).sum()
}

fn c1_operator_algebra() -> Outcome {
    let eps = 0.3;
    let m = model(
        ModelParams {
            dim: 2,
            sizes: vec![1, 2, 3],
            theta_bar: 1.3,
            epsilon: eps,
            ..ModelParams::default()
        },
        8,
        6,
    );
    let suite = LadderSuite::new(&m);
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let (mut adj, mut comm, mut fp) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let f = random_coeffs(&m, &mut rng, false);
        let g = random_coeffs(&m, &mut rng, false);
        let ft = random_coeffs(&m, &mut rng, true);
        for (i, sp) in m.species.iter().enumerate() {
            let s2 = sp.sigma * sp.sigma;
            for j in 0..m.dim() {
                let lhs = inner(&suite.lower(i, &f, j), &g);
                let rhs = inner(&f, &suite.raise(i, &g, j));
                adj = adj.max((lhs - rhs).abs() / lhs.abs().max(1.0));
                // [𝒦_j, (θ̄/i) v·∇] f against 𝒮_j f
                let a = suite.lower(i, &suite.transport(i, &ft), j).mapv(|x| x * s2);
                let b = suite.transport(i, &suite.lower(i, &ft, j)).mapv(|x| x * s2);
                let s = suite.s_op(i, &ft, j);
                comm = comm.max(max_abs(&(a - b - &s)));
            }
            // FP operator -(1/(i^{2/3} ε σ²)) 𝒦*𝒦 against the closed-form spectrum
            let l = suite.number(i, &f).mapv(|x| x * (-1.0 / (sp.cbrt2 * eps * s2)));
            for h in 0..m.hermite.len() {
                let order: usize = m.hermite.multi(h).iter().sum();
                let lam = -(order as f64) / ((sp.size).powf(2.0 / 3.0) * eps);
                for c in 0..m.modes.len() {
                    fp = fp.max((l[[h, c]] - f[[h, c]] * lam).norm());
                }
            }
        }
    }
    // Physical velocity grid: fourth-order finite differences of the reconstructed profile.
    let m1 = model(
        ModelParams {
            dim: 1,
            sizes: vec![1, 2],
            theta_bar: 1.3,
            epsilon: eps,
            ..ModelParams::default()
        },
        4,
        8,
    );
    let suite1 = LadderSuite::new(&m1);
    let mut phys = 0.0f64;
    let h = 2e-3;
    for _ in 0..100 {
        let mut f = Array2::zeros((m1.hermite.len(), m1.modes.len()));
        for n in 0..m1.hermite.len() {
            f[[n, 0]] = Complex64::new(rng.random_range(-1.0..1.0), 0.0);
        }
        for (i, sp) in m1.species.iter().enumerate() {
            let sigma = sp.sigma;
            let col = |a: &Array2<Complex64>| a.column(0).iter().map(|c| c.re).collect::<Vec<f64>>();
            let c = col(&f);
            let kc = col(&suite1.lower(i, &f, 0));
            let nc = col(&suite1.number(i, &f));
            for p in 0..=20 {
                let v = sigma * (-4.0 + 0.4 * p as f64);
                let fv = |x: f64| eval_v(&m1, sigma, &c, x);
                let d1 = (fv(v - 2.0 * h) - 8.0 * fv(v - h) + 8.0 * fv(v + h) - fv(v + 2.0 * h)) / (12.0 * h);
                let d2 = (-fv(v - 2.0 * h) + 16.0 * fv(v - h) - 30.0 * fv(v) + 16.0 * fv(v + h) - fv(v + 2.0 * h))
                    / (12.0 * h * h);
                let s2 = sigma * sigma;
                let k_oracle = s2 * d1 + 0.5 * v * fv(v);
                let n_oracle = -s2 * s2 * d2 + (0.25 * v * v - 0.5 * s2) * fv(v);
                phys = phys.max((k_oracle - eval_v(&m1, sigma, &kc, v)).abs());
                phys = phys.max((n_oracle - eval_v(&m1, sigma, &nc, v)).abs());
            }
        }
    }
    outcome(
        adj <= 1e-10 && comm <= 1e-10 && fp <= 1e-10 && phys <= 1e-8,
        format!("adjoint {adj:.1e}, commutator {comm:.1e}, FP spectrum {fp:.1e} (tol 1e-10); physical grid {phys:.1e} (tol 1e-8)"),
    )
}

fn c2_conservation() -> Outcome {
    let cfg = HarnessConfig::preset_defaults(Preset::Conservation);
    assert_eq!((cfg.dim, cfg.sizes.len(), cfg.epsilon, cfg.t_end), (1, 2, 0.1, 10.0));
    let m = cfg.model(0.1).unwrap();
    let s0 = make_initial_state(&cfg.initial_spec(), &m, 0.0).unwrap();
    let (solver, steps) = Solver::for_horizon(&m, &s0, 10.0, None).unwrap();
    let reference = momentum_functional(&m, &s0);
    // Direct oracle for the momentum: L^d ū + κ Σ_i i σ_i Re ĉ_i(0, e_1).
    let mom = |s: &SimState| -> f64 {
        let vol = m.params.domain_length.powi(m.dim() as i32);
        let mut p = vol * s.u_hat[[0, m.modes.zero_mode()]].re;
        for (sp, f) in m.species.iter().zip(&s.f_hat) {
            p += m.params.kappa * sp.size * sp.sigma * f[[1, m.modes.zero_mode()]].re;
        }
        p
    };
    let p0 = mom(&s0);
    let mass0: Vec<f64> = s0.f_hat.iter().map(|f| f[[0, m.modes.zero_mode()]].re).collect();
    let (mut mass, mut drift, mut ubar) = (0.0f64, 0.0f64, 0.0f64);
    let last = solver
        .run(&s0, steps, 1, &mut |_, s| {
            for (f, m0) in s.f_hat.iter().zip(&mass0) {
                mass = mass.max((f[[0, m.modes.zero_mode()]].re - m0).abs());
            }
            drift = drift.max((mom(s) - p0).abs());
            let r = conservation_report(&m, s, &reference);
            drift = drift.max(r.momentum_drift);
            ubar = ubar.max(r.ubar_residual);
            Ok(())
        })
        .unwrap();
    assert!((last.time - 10.0).abs() < 1e-9);
    outcome(
        mass <= 1e-12 && drift <= 1e-10 && ubar <= 1e-8,
        format!("mass {mass:.1e} (tol 1e-12), momentum drift {drift:.1e} (tol 1e-10), mean velocity identity {ubar:.1e} (tol 1e-8)"),
    )
}

fn c3_relaxation() -> Outcome {
    let mut worst = 0.0f64;
    for eps in [1.0, 0.01] {
        let cfg = HarnessConfig::preset_defaults(Preset::Relaxation);
        let m = cfg.model(eps).unwrap();
        let s0 = make_initial_state(&cfg.initial_spec(), &m, 0.0).unwrap();
        let (solver, steps) = Solver::for_horizon(&m, &s0, cfg.t_end, None).unwrap();
        let z = m.modes.zero_mode();
        solver
            .run(&s0, steps, 1, &mut |_, s| {
                for (i, (f, f0)) in s.f_hat.iter().zip(&s0.f_hat).enumerate() {
                    let size = m.params.sizes[i] as f64;
                    for h in 0..m.hermite.len() {
                        let e0 = f0[[h, z]].norm_sqr();
                        if e0 == 0.0 {
                            continue;
                        }
                        let order: usize = m.hermite.multi(h).iter().sum();
                        let exact = e0 * (-2.0 * order as f64 * s.time / (size.powf(2.0 / 3.0) * eps)).exp();
                        worst = worst.max((f[[h, z]].norm_sqr() - exact).abs() / exact);
                    }
                }
                Ok(())
            })
            .unwrap();
    }
    outcome(worst <= 1e-8, format!("max relative band error {worst:.1e} (tol 1e-8) over eps in {{1, 0.01}}"))
}

struct DecayRun {
    e0: f64,
    max_increase: f64,
    series: Vec<(f64, f64)>,
}

fn decay_runs() -> Vec<(f64, DecayRun)> {
    let cfg = HarnessConfig::preset_defaults(Preset::Decay);
    [1.0, 0.1, 0.01]
        .into_iter()
        .map(|eps| {
            let m = cfg.model(eps).unwrap();
            let s0 = make_initial_state(&cfg.initial_spec(), &m, 0.0).unwrap();
            let (solver, steps) = Solver::for_horizon(&m, &s0, cfg.t_end, None).unwrap();
            let mut prev = f64::INFINITY;
            let mut max_increase = f64::NEG_INFINITY;
            let mut series = Vec::new();
            solver
                .run(&s0, steps, 1, &mut |n, s| {
                    let e = energy(&m, s, 2).total;
                    if n > 0 {
                        max_increase = max_increase.max(e - prev);
                    }
                    prev = e;
                    if n % cfg.stride == 0 || n == steps {
                        series.push((s.time, e));
                    }
                    Ok(())
                })
                .unwrap();
            let e0 = energy(&m, &s0, 2).total;
            (eps, DecayRun { e0, max_increase, series })
        })
        .collect()
}

fn c4_monotone(runs: &[(f64, DecayRun)]) -> Outcome {
    let e0 = runs.iter().map(|(_, r)| r.e0).fold(0.0, f64::max);
    let inc = runs.iter().map(|(_, r)| r.max_increase).fold(f64::NEG_INFINITY, f64::max);
    outcome(
        e0 <= 1e-2 && inc <= 1e-11,
        format!("E_2,0(0) = {e0:.2e} (<= 1e-2), largest per-step increase {inc:.1e} (tol 1e-11) over eps in {{1, 0.1, 0.01}}"),
    )
}

fn c5_decay(runs: &[(f64, DecayRun)]) -> Outcome {
    let fits: Vec<_> = runs.iter().map(|(_, r)| fit_decay_rate(&r.series).unwrap()).collect();
    let lams: Vec<f64> = fits.iter().map(|f| f.lambda_hat).collect();
    let r2 = fits.iter().map(|f| f.r2).fold(1.0, f64::min);
    let hi = lams.iter().copied().fold(f64::MIN, f64::max);
    let lo = lams.iter().copied().fold(f64::MAX, f64::min);
    outcome(
        lo > 0.0 && r2 > 0.99 && hi / lo <= 3.0,
        format!(
            "lambda_hat = {:.4}/{:.4}/{:.4}, min R2 {r2:.6} (> 0.99), spread {:.3} (<= 3)",
            lams[0],
            lams[1],
            lams[2],
            hi / lo
        ),
    )
}

fn gpc_config(t_end: f64, stride: usize, rho: f64) -> HarnessConfig {
    HarnessConfig {
        t_end,
        stride,
        z_law: ZLaw::Exponential,
        z_coupling: rho,
        ..HarnessConfig::preset_defaults(Preset::KSweep)
    }
}

fn c6_weighted_energy() -> Outcome {
    let cfg = gpc_config(5.0, 5, 0.5);
    let mut worst = f64::NEG_INFINITY;
    for eps in [1.0, 0.01] {
        let (runs, err) = k_sweep_at(&cfg, eps, &[3, 5, 7]).unwrap();
        assert!(err.is_none(), "{err:?}");
        for r in &runs {
            worst = worst.max(r.weighted_max_increase);
        }
    }
    outcome(
        worst <= 1e-11,
        format!("largest per-step increase of E^K with q = p_hat + 2.5: {worst:.1e} (tol 1e-11), K in {{3, 5, 7}}, eps in {{1, 0.01}}"),
    )
}

fn c7_spectral_accuracy() -> Outcome {
    let cfg = gpc_config(5.0, 1, 0.5);
    let mut ratios = Vec::new();
    for eps in [1.0, 0.01] {
        let (runs, err) = k_sweep_at(&cfg, eps, &[4, 8]).unwrap();
        assert!(err.is_none(), "{err:?}");
        ratios.push(runs[1].max_error() / runs[0].max_error());
    }
    outcome(
        ratios.iter().all(|r| *r < 1e-2),
        format!("max_t E^e(K=8)/E^e(K=4) = {:.2e} (eps 1), {:.2e} (eps 0.01), tol 1e-2", ratios[0], ratios[1]),
    )
}

fn c8_error_decay() -> Outcome {
    let cfg = gpc_config(10.0, 5, 1.0);
    let (runs, err) = k_sweep_at(&cfg, 1.0, &[6]).unwrap();
    assert!(err.is_none(), "{err:?}");
    let series: Vec<(f64, f64)> = runs[0].times.iter().copied().zip(runs[0].error.iter().copied()).collect();
    let fit = fit_decay_rate(&series).unwrap();
    outcome(
        fit.lambda_hat > 0.0 && fit.r2 > 0.95,
        format!("K=6 error decay rate {:.4} (> 0), R2 {:.6} (> 0.95)", fit.lambda_hat, fit.r2),
    )
}

fn c9_hydro() -> Outcome {
    let cfg = HarnessConfig::preset_defaults(Preset::HydroSweep);
    let res: Vec<f64> = [0.1, 0.05]
        .into_iter()
        .map(|eps| {
            let m = cfg.model(eps).unwrap();
            let s0 = make_initial_state(&cfg.initial_spec(), &m, 0.0).unwrap();
            let (solver, steps) = Solver::for_horizon(&m, &s0, 2.0, None).unwrap();
            let last = solver.run(&s0, steps, steps, &mut |_, _| Ok(())).unwrap();
            assert!((last.time - 2.0).abs() < 1e-9);
            hydro_residual(&m, &last).into_iter().fold(0.0, f64::max)
        })
        .collect();
    let ratio = res[1] / res[0];
    outcome(
        ratio <= 0.6,
        format!("hydro residual {:.3e} (eps 0.1), {:.3e} (eps 0.05), ratio {ratio:.3} (<= 0.6)", res[0], res[1]),
    )
}

/// Composite Simpson rule on `[-1, 1]` against `dz/2`.
fn simpson(g: impl Fn(f64) -> f64, n: usize) -> f64 {
    let h = 2.0 / n as f64;
    let mut acc = g(-1.0) + g(1.0);
    for p in 1..n {
        acc += if p % 2 == 1 { 4.0 } else { 2.0 } * g(-1.0 + p as f64 * h);
    }
    acc * h / 3.0 / 2.0
}

fn c10_gpc() -> Outcome {
    let leg = GpcBasis::new(Measure::Uniform, 9).unwrap();
    let cheb = GpcBasis::new(Measure::Chebyshev, 9).unwrap();
    let ortho = leg.orthonormality_defect().max(cheb.orthonormality_defect());
    let t = triple_products(&leg);
    let k = leg.len();
    let mut symmetric = true;
    let mut unit = 0.0f64;
    for a in 0..k {
        for b in 0..k {
            unit = unit.max((t.get(0, a, b) - if a == b { 1.0 } else { 0.0 }).abs());
            for c in 0..k {
                let v = t.get(a, b, c);
                symmetric &= [t.get(a, c, b), t.get(b, a, c), t.get(b, c, a), t.get(c, a, b), t.get(c, b, a)]
                    .iter()
                    .all(|w| *w == v);
            }
        }
    }
    // Closed-form normalized Legendre functions φ_2 = √3 z, φ_3 = √5 (3z² - 1)/2.
    let oracle = simpson(|z| 3.0 * z * z * 5f64.sqrt() * (3.0 * z * z - 1.0) / 2.0, 2000);
    let s223 = t.get(1, 1, 2);
    let s_err = (s223 - 2.0 / 5f64.sqrt()).abs().max((s223 - oracle).abs());
    let (pl, pc) = (leg.p_hat(), cheb.p_hat());
    outcome(
        ortho <= 1e-10 && symmetric && unit <= 1e-12 && s_err <= 1e-10 && (pl - 0.5).abs() <= 0.1 && pc.abs() <= 0.05,
        format!(
            "orthonormality {ortho:.1e}, permutation symmetry {}, S_1lk defect {unit:.1e}, S_223 error {s_err:.1e}, p_hat Legendre {pl:.3} Chebyshev {pc:.3}",
            if symmetric { "exact" } else { "broken" }
        ),
    )
}

fn main() -> ExitCode {
    let mut all = true;
    let mut record = |n: usize, name: &str, budget: Duration, extra: Duration, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        let took = start.elapsed() + extra;
        let ok = o.passed && took <= budget;
        all &= ok;
        println!(
            "criterion {n:>2} {name:<22} {}  {} [{:.2}s of {}s]",
            if ok { "PASS" } else { "FAIL" },
            o.detail,
            took.as_secs_f64(),
            budget.as_secs()
        );
    };
    let secs = Duration::from_secs;
    record(1, "operator algebra", secs(10), Duration::ZERO, &mut c1_operator_algebra);
    record(2, "conservation", secs(30), Duration::ZERO, &mut c2_conservation);
    record(3, "relaxation oracle", secs(10), Duration::ZERO, &mut c3_relaxation);
    let start = Instant::now();
    let runs = decay_runs();
    let shared = start.elapsed();
    record(4, "energy monotonicity", secs(120), shared, &mut || c4_monotone(&runs));
    record(5, "exponential decay", secs(120), shared, &mut || c5_decay(&runs));
    record(6, "weighted gPC energy", secs(180), Duration::ZERO, &mut c6_weighted_energy);
    record(7, "spectral accuracy", secs(600), Duration::ZERO, &mut c7_spectral_accuracy);
    record(8, "error decay in time", secs(180), Duration::ZERO, &mut c8_error_decay);
    record(9, "hydrodynamic limit", secs(60), Duration::ZERO, &mut c9_hydro);
    record(10, "gPC machinery", secs(5), Duration::ZERO, &mut c10_gpc);
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
