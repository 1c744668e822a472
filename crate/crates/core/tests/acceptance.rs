//! Acceptance suite: one test per criterion, each printing a single
//! PASS/FAIL line. Run with `-- --nocapture` to see the report:
//!
//! ```text
//! cargo test -p singletbb --test acceptance -- --nocapture
//! ```
//!
//! Criterion 8 (paper-scale stretch) is long-running and excluded from the
//! default suite; run it with `-- --ignored`.

use std::path::PathBuf;
use std::time::Instant;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use singletbb::algebra::{self, expm_hermitian, max_norm_diff, HermitianOperator};
use singletbb::bb::{
    precompute_propagators, sequence_unitary, singlet_projector_factor, BBSequence, ChannelPulse,
    Segment, SequenceFitness,
};
use singletbb::config::RunConfig;
use singletbb::ga::{optimize_with_cache, OptimizationProblem};
use singletbb::relax::{
    affine_fixed_point, affine_gain, fit_monoexponential, hbac_simulate, sensitivity_gain,
    spinlock_decay, t1_recovery, FitModel, RelaxationParams,
};
use singletbb::spin::{
    build_collective_operator, build_internal_hamiltonian, build_singlet_projector,
    build_thermal_state, Axis, Coupling, CouplingForm, SpeciesChannel, SpinSite, SpinSystem,
    TWO_PI,
};

fn report(criterion: u32, name: &str, ok: bool, detail: &str) {
    println!(
        "criterion {criterion} ({name}): {} [{detail}]",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {criterion} ({name}) failed: {detail}");
}

fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(name)
}

/// Random 3-spin heteronuclear system with weak couplings only.
fn random_three_spin(rng: &mut ChaCha8Rng) -> SpinSystem {
    let channels = vec![
        SpeciesChannel {
            label: "1H".into(),
            relative_gamma: 3.977,
            rf_amplitude_hz: 150.0 + 200.0 * rng.gen::<f64>(),
        },
        SpeciesChannel {
            label: "13C".into(),
            relative_gamma: 1.0,
            rf_amplitude_hz: 150.0 + 200.0 * rng.gen::<f64>(),
        },
    ];
    let sites = vec![
        SpinSite {
            index: 0,
            channel: 0,
            offset_hz: 400.0 * (rng.gen::<f64>() - 0.5),
        },
        SpinSite {
            index: 1,
            channel: 1,
            offset_hz: 400.0 * (rng.gen::<f64>() - 0.5),
        },
        SpinSite {
            index: 2,
            channel: 1,
            offset_hz: 400.0 * (rng.gen::<f64>() - 0.5),
        },
    ];
    let couplings = vec![
        Coupling {
            site_a: 0,
            site_b: 1,
            j_hz: 20.0 * rng.gen::<f64>(),
            form: CouplingForm::Weak,
        },
        Coupling {
            site_a: 1,
            site_b: 2,
            j_hz: 20.0 * rng.gen::<f64>(),
            form: CouplingForm::Weak,
        },
    ];
    SpinSystem::new(channels, sites, couplings, (1, 2)).unwrap()
}

#[test]
fn criterion_01_z_trick_exactness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC1);
    let mut worst = 0.0_f64;
    for trial in 0..100 {
        let sys = random_three_spin(&mut rng);
        let dt = 0.5e-3;
        let cache = precompute_propagators(&sys, dt).unwrap();
        let seg = Segment::new(vec![
            if rng.gen::<bool>() {
                ChannelPulse::bang(TWO_PI * rng.gen::<f64>())
            } else {
                ChannelPulse::silent()
            },
            ChannelPulse::bang(TWO_PI * rng.gen::<f64>()),
        ]);
        let fast = cache.segment_matrix(&seg).unwrap();

        // Oracle: exponentiate the full phase-shifted Hamiltonian densely.
        let mut h = build_internal_hamiltonian(&sys).unwrap().into_matrix();
        for (k, c) in seg.channels().iter().enumerate() {
            if c.active {
                let omega = TWO_PI * sys.channels()[k].rf_amplitude_hz;
                let label = sys.channels()[k].label.clone();
                let ix = build_collective_operator(&sys, &label, Axis::X).unwrap();
                let iy = build_collective_operator(&sys, &label, Axis::Y).unwrap();
                h += &ix.matrix().mapv(|z| z * omega * c.phase.cos());
                h += &iy.matrix().mapv(|z| z * omega * c.phase.sin());
            }
        }
        let oracle = expm_hermitian(&HermitianOperator::new(h).unwrap(), dt).unwrap();
        let diff = max_norm_diff(&fast, oracle.matrix());
        worst = worst.max(diff);
        assert!(diff < 1e-9, "trial {trial}: diff {diff:.3e}");
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        1,
        "z-trick exactness",
        worst < 1e-9 && elapsed < 10.0,
        &format!("worst diff {worst:.3e}, {elapsed:.2} s"),
    );
}

#[test]
fn criterion_02_unitarity_trace_suite() {
    let start = Instant::now();
    let cfg = RunConfig::load(&config_path("surrogate5.toml")).unwrap();
    let sys = cfg.build_system().unwrap(); // dim 32
    let cache = precompute_propagators(&sys, 0.5e-3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC2);

    let mut worst_unitarity = 0.0_f64;
    for &len in &[1usize, 10, 100, 1000] {
        let segments: Vec<Segment> = (0..len)
            .map(|_| {
                Segment::new(
                    (0..2)
                        .map(|_| {
                            if rng.gen::<f64>() < 0.5 {
                                ChannelPulse::bang(TWO_PI * rng.gen::<f64>())
                            } else {
                                ChannelPulse::silent()
                            }
                        })
                        .collect(),
                )
            })
            .collect();
        let seq = BBSequence::new(0.5e-3, 2, segments).unwrap();
        let u = sequence_unitary(&cache, &seq).unwrap();
        let defect = algebra::unitarity_defect(u.matrix());
        worst_unitarity = worst_unitarity.max(defect);
        assert!(defect < 1e-8, "len {len}: unitarity defect {defect:.3e}");

        // Trace and spectrum drift of a physically scaled thermal state.
        let rho0 = build_thermal_state(&sys, &cfg.polarizations())
            .unwrap()
            .to_full(1e-5)
            .unwrap();
        let evolved = u.matrix().dot(rho0.matrix()).dot(&algebra::adjoint(u.matrix()));
        let tr = algebra::trace(&evolved);
        assert!((tr.re - 1.0).abs() < 1e-10 && tr.im.abs() < 1e-10);
        let s0 = HermitianOperator::new(rho0.matrix().clone())
            .unwrap()
            .eigenvalues()
            .unwrap();
        let s1 = HermitianOperator::new(evolved).unwrap().eigenvalues().unwrap();
        let drift = s0
            .iter()
            .zip(s1.iter())
            .fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()));
        assert!(drift < 1e-10, "len {len}: spectrum drift {drift:.3e}");
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        2,
        "unitarity/trace suite",
        elapsed < 30.0,
        &format!("worst defect {worst_unitarity:.3e}, {elapsed:.2} s"),
    );
}

#[test]
fn criterion_03_thermal_baseline() {
    let mut worst = 0.0_f64;
    for name in ["demo2.toml", "demo3.toml", "surrogate5.toml", "btmsb.toml"] {
        let cfg = RunConfig::load(&config_path(name)).unwrap();
        let sys = cfg.build_system().unwrap();
        if sys.dim() > 64 {
            // Projector overlap in factored form for the large config.
            // Diagonal argument in factored form; no dense cache needed.
            let rho = build_thermal_state(&sys, &cfg.polarizations()).unwrap();
            let factor = singlet_projector_factor(&sys);
            // Q - 1/4 = sum_b dev_bb * P_bb over the factor columns.
            let mut overlap = 0.0;
            for col in factor.columns() {
                for (i, v) in col.iter().enumerate() {
                    overlap += (v.conj() * rho.matrix()[[i, i]] * v).re;
                }
            }
            worst = worst.max(overlap.abs());
            continue;
        }
        let rho = build_thermal_state(&sys, &cfg.polarizations()).unwrap();
        let p = build_singlet_projector(&sys).unwrap();
        let q = 0.25 + algebra::expectation(rho.matrix(), p.matrix()).unwrap();
        worst = worst.max((q - 0.25).abs());
    }
    report(
        3,
        "thermal baseline Q = 0.25",
        worst < 1e-12,
        &format!("worst |Q - 0.25| = {worst:.3e}"),
    );
}

#[test]
fn criterion_04_majorization_ceiling() {
    let cfg = RunConfig::load(&config_path("demo3.toml")).unwrap();
    let sys = cfg.build_system().unwrap();
    let ga = cfg.ga_config(Some(7)).unwrap();
    let template = cfg.template().unwrap();
    let cache = precompute_propagators(&sys, template.dt()).unwrap();
    let problem = OptimizationProblem {
        system: &sys,
        polarizations: cfg.polarizations(),
    };
    let outcome = optimize_with_cache(&problem, &ga, &template, &cache).unwrap();
    let mut ok = true;
    let mut margin = f64::INFINITY;
    for rec in &outcome.history {
        margin = margin.min(outcome.ceiling + 1e-9 - rec.best_q);
        if rec.best_q > outcome.ceiling + 1e-9 || rec.mean_q > outcome.ceiling + 1e-9 {
            ok = false;
        }
    }
    report(
        4,
        "majorization ceiling bounds all fitness",
        ok,
        &format!(
            "ceiling {:.6}, best {:.6}, min margin {margin:.3e}",
            outcome.ceiling, outcome.best_q
        ),
    );
}

#[test]
fn criterion_05_45_degree_nutation() {
    // One spin, one bang at Omega/2pi = 250 Hz for 0.5 ms: 45 degrees.
    let sys = SpinSystem::new(
        vec![SpeciesChannel {
            label: "13C".into(),
            relative_gamma: 1.0,
            rf_amplitude_hz: 250.0,
        }],
        vec![
            SpinSite {
                index: 0,
                channel: 0,
                offset_hz: 0.0,
            },
            SpinSite {
                index: 1,
                channel: 0,
                offset_hz: 0.0,
            },
        ],
        vec![],
        (0, 1),
    )
    .unwrap();
    // Track a single spin: start from |up><up| on spin 0 tensor identity/2.
    let cache = precompute_propagators(&sys, 0.5e-3).unwrap();
    let seg = Segment::new(vec![ChannelPulse::bang(0.0)]);
    let u = cache.segment_matrix(&seg).unwrap();
    let iz0 = singletbb::spin::site_operator(2, 0, Axis::Z);
    let mut rho = algebra::CMatrix::zeros((4, 4));
    // |up> on spin 0, maximally mixed spin 1.
    rho[[0, 0]] = C64::new(0.5, 0.0);
    rho[[1, 1]] = C64::new(0.5, 0.0);
    let before = algebra::expectation(&rho, &iz0).unwrap();
    let evolved = u.dot(&rho).dot(&algebra::adjoint(&u));
    let after = algebra::expectation(&evolved, &iz0).unwrap();
    let target = 0.5 * std::f64::consts::FRAC_PI_4.cos();
    let ok = (before - 0.5).abs() < 1e-12 && (after - target).abs() < 1e-9;
    report(
        5,
        "45-degree nutation per bang",
        ok,
        &format!("<Iz>: {before:.9} -> {after:.9}, target {target:.9}"),
    );
}

#[test]
fn criterion_06_optimizer_regression() {
    // Threshold 2.3 calibrated by an extended-budget run; see
    // docs/calibration.md.
    let start = Instant::now();
    let cfg = RunConfig::load(&config_path("demo3.toml")).unwrap();
    let sys = cfg.build_system().unwrap();
    let ga = cfg.ga_config(Some(42)).unwrap();
    assert_eq!(ga.population_size, 64);
    assert!(ga.generations <= 500);
    let template = cfg.template().unwrap();
    let cache = precompute_propagators(&sys, template.dt()).unwrap();
    let problem = OptimizationProblem {
        system: &sys,
        polarizations: cfg.polarizations(),
    };
    let outcome = optimize_with_cache(&problem, &ga, &template, &cache).unwrap();

    // Elitism makes the per-generation best non-decreasing.
    let monotone = outcome
        .history
        .windows(2)
        .all(|w| w[1].best_q >= w[0].best_q - 1e-12);
    let enhancement = (4.0 * outcome.best_q - 1.0) / 3.0; // eps_C = 1
    let elapsed = start.elapsed().as_secs_f64();
    report(
        6,
        "optimizer regression",
        monotone && enhancement >= 2.3 && elapsed < 300.0,
        &format!(
            "monotone {monotone}, enhancement {enhancement:.4} (threshold 2.3), {elapsed:.1} s"
        ),
    );
}

#[test]
fn criterion_07_eleven_spin_feasibility() {
    let cfg = RunConfig::load(&config_path("btmsb.toml")).unwrap();
    let sys = cfg.build_system().unwrap();
    assert_eq!(sys.dim(), 2048);

    let t0 = Instant::now();
    let cache = precompute_propagators(&sys, cfg.bb.dt_s).unwrap();
    let precompute_s = t0.elapsed().as_secs_f64();

    let rho = build_thermal_state(&sys, &cfg.polarizations()).unwrap();
    let factor = singlet_projector_factor(&sys);
    let evaluator = SequenceFitness::new(&cache, &rho, factor).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC7);
    let segments: Vec<Segment> = (0..592)
        .map(|_| {
            Segment::new(
                (0..2)
                    .map(|_| {
                        if rng.gen::<f64>() < 0.5 {
                            ChannelPulse::bang(TWO_PI * rng.gen::<f64>())
                        } else {
                            ChannelPulse::silent()
                        }
                    })
                    .collect(),
            )
        })
        .collect();
    let seq = BBSequence::new(cfg.bb.dt_s, 2, segments).unwrap();

    let t1 = Instant::now();
    let q = evaluator.evaluate(&seq).unwrap();
    let eval_s = t1.elapsed().as_secs_f64();

    report(
        7,
        "11-spin feasibility budget",
        precompute_s < 600.0 && eval_s < 60.0,
        &format!("precompute {precompute_s:.1} s (< 600), eval {eval_s:.1} s (< 60), Q {q:.4}"),
    );
}

/// Paper-scale stretch: excluded from the default suite (long-running).
/// 5-spin surrogate standing in for the full 11-spin optimization.
#[test]
#[ignore]
fn criterion_08_paper_scale_stretch() {
    let cfg = RunConfig::load(&config_path("surrogate5.toml")).unwrap();
    let sys = cfg.build_system().unwrap();
    let ga = cfg.ga_config(Some(1)).unwrap();
    let template = cfg.template().unwrap();
    let cache = precompute_propagators(&sys, template.dt()).unwrap();
    let problem = OptimizationProblem {
        system: &sys,
        polarizations: cfg.polarizations(),
    };
    let outcome = optimize_with_cache(&problem, &ga, &template, &cache).unwrap();
    let achieved = (4.0 * outcome.best_q - 1.0) / 3.0;
    let ceiling = (4.0 * outcome.ceiling - 1.0) / 3.0;
    let ratio = achieved / ceiling;
    report(
        8,
        "paper-scale stretch (5-spin surrogate)",
        ratio >= 0.85,
        &format!("achieved {achieved:.4}, ceiling {ceiling:.4}, ratio {ratio:.3} (>= 0.85)"),
    );
}

#[test]
fn criterion_09_relaxation_fits() {
    let start = Instant::now();
    let times: Vec<f64> = (0..25).map(|i| i as f64 * 2.5).collect();
    let mut worst_ts = 0.0_f64;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = times
            .iter()
            .map(|t| (-t / 25.9).exp() * (1.0 + 0.01 * (2.0 * rng.gen::<f64>() - 1.0)))
            .collect();
        let fit = fit_monoexponential(&times, &values, FitModel::Decay).unwrap();
        worst_ts = worst_ts.max((fit.time_constant - 25.9).abs() / 25.9);
    }
    let t1_times: Vec<f64> = (0..15).map(|i| i as f64 * 0.8).collect();
    let mut worst_t1 = 0.0_f64;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let values: Vec<f64> = t1_times
            .iter()
            .map(|t| (1.0 - 2.0 * (-t / 3.0).exp()) * (1.0 + 0.01 * (2.0 * rng.gen::<f64>() - 1.0)))
            .collect();
        let fit = fit_monoexponential(&t1_times, &values, FitModel::InversionRecovery).unwrap();
        worst_t1 = worst_t1.max((fit.time_constant - 3.0).abs() / 3.0);
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        9,
        "relaxation fit recovery",
        worst_ts < 0.02 && worst_t1 < 0.02 && elapsed < 10.0,
        &format!(
            "worst T_S error {:.2}%, worst T1 error {:.2}%, {elapsed:.2} s",
            worst_ts * 100.0,
            worst_t1 * 100.0
        ),
    );
}

#[test]
fn criterion_10_sensitivity_accounting() {
    let (per_scan, reduction) = sensitivity_gain(3.0, 2.0).unwrap();
    let ok = (per_scan - 3.0 * 2.0_f64.sqrt()).abs() < 1e-12 && (reduction - 18.0).abs() < 1e-12;
    report(
        10,
        "sensitivity accounting",
        ok,
        &format!("(3, 2) -> ({per_scan:.3}, {reduction:.1})"),
    );
}

#[test]
fn criterion_11_hbac_qualitative() {
    // High T_S/T1 contrast: strict increase to the closed-form fixed point.
    let params = RelaxationParams {
        t1_s: vec![("1H".into(), 3.0)],
        t_singlet_s: 250.0,
        tau_ac_s: 15.0,
        tau_hb_s: 15.0,
    };
    let thermal = vec![("1H".to_string(), 4.0)];
    let (alpha, beta) = (0.5, 0.5);
    let states = hbac_simulate(&params, &thermal, affine_gain("1H".into(), alpha, beta), 80)
        .unwrap();
    let strict_rise = states
        .windows(2)
        .take(10)
        .all(|w| w[1].eps_singlet > w[0].eps_singlet);
    let decay = (-params.tau_hb_s / params.t_singlet_s).exp();
    let anc = t1_recovery(0.0, 4.0, params.tau_hb_s, 3.0);
    let fixed = affine_fixed_point(alpha, beta, anc, decay);
    let fixed_err = (states.last().unwrap().eps_singlet - fixed).abs();

    // Paper constants: T_S = 25.9 s, T1_H = 3 s. The transfer re-prepares the
    // singlet from the recovered ancillas (beta = 0), so iteration 2 adds
    // nothing beyond iteration 1.
    let paper = RelaxationParams {
        t1_s: vec![("1H".into(), 3.0)],
        t_singlet_s: 25.9,
        tau_ac_s: 10.0,
        tau_hb_s: 10.0,
    };
    let paper_states =
        hbac_simulate(&paper, &thermal, affine_gain("1H".into(), 0.75, 0.0), 3).unwrap();
    let gain1 = (paper_states[1].eps_singlet - paper_states[0].eps_singlet).abs();
    let gain2 = (paper_states[2].eps_singlet - paper_states[1].eps_singlet).abs();
    let marginal_ok = gain1 > 0.0 && gain2 / gain1 < 0.05;

    // Sanity: spin-lock decay matches the paper's exponential.
    let decay_ok = (spinlock_decay(1.0, 10.0, 25.9) - 0.680).abs() < 5e-4;

    report(
        11,
        "HBAC qualitative match",
        strict_rise && fixed_err < 1e-9 && marginal_ok && decay_ok,
        &format!(
            "fixed-point err {fixed_err:.2e}, iteration-2/iteration-1 gain {:.4}",
            gain2 / gain1
        ),
    );
}
