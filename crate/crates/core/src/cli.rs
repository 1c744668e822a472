//! Command implementations behind the `singletbb` binary. Each command
//! returns a printable report and writes its data files into an output
//! directory; all data files are deterministic byte-for-byte given the same
//! config and seed (no timestamps in data outputs).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::bb::{
    precompute_propagators, singlet_trajectory, TrajectoryRecord,
};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::ga::{optimize_with_cache, OptimizationOutcome, OptimizationProblem};
use crate::pulse_io::{format_pulse_table, parse_pulse_table};
use crate::relax::{
    affine_gain, bb_transfer_gain, fit_monoexponential, format_xy, hbac_simulate, parse_xy,
    FitModel, FitResult, HBACState,
};
use crate::spin::{
    build_singlet_projector, build_thermal_state, validate_z_commutation, SpinSystem,
};

/// Hilbert-space dimension above which heavy commands refuse to run without
/// `--force`.
pub const DIM_GUARD: usize = 4096;

fn guard_dimension(cfg: &RunConfig, force: bool) -> Result<()> {
    let nspins: usize = cfg.system.sites.iter().map(|s| s.count).sum();
    let dim = 1usize << nspins.min(63);
    if dim > DIM_GUARD && !force {
        return Err(Error::InvalidArgument(format!(
            "Hilbert dimension {dim} exceeds the {DIM_GUARD} guard \
             (estimated cache {} MiB); rerun with --force to proceed",
            cfg.memory_estimate_bytes().unwrap_or(0) / (1 << 20)
        )));
    }
    Ok(())
}

fn ensure_out_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    Ok(())
}

/// Reference polarization for the enhancement denominator: the thermal
/// polarization of the singlet pair's own species.
fn eps_reference(cfg: &RunConfig, sys: &SpinSystem) -> Result<f64> {
    let label = &sys.channels()[sys.pair_channel()].label;
    cfg.polarization.get(label).copied().ok_or_else(|| {
        Error::Config(format!("no [polarization] entry for pair species '{label}'"))
    })
}

fn trajectory_csv(traj: &TrajectoryRecord) -> String {
    let mut out = String::from("time_ms,Q,enhancement\n");
    for ((t, q), e) in traj
        .times
        .iter()
        .zip(traj.q_values.iter())
        .zip(traj.enhancement.iter())
    {
        let _ = writeln!(out, "{:.6},{:.12},{:.12}", t * 1e3, q, e);
    }
    out
}

pub fn cmd_validate(config_path: &Path) -> Result<(String, bool)> {
    let cfg = RunConfig::load(config_path)?;
    let mut report = String::from("schema: ok\n");
    let sys = cfg.build_system()?;
    let _ = writeln!(report, "spins: {}", sys.nspins());
    let _ = writeln!(report, "dimension: {}", sys.dim());
    let _ = writeln!(
        report,
        "cache memory estimate: {:.1} MiB",
        cfg.memory_estimate_bytes()? as f64 / (1u64 << 20) as f64
    );
    let zrep = validate_z_commutation(&sys)?;
    for (label, norm) in &zrep.channel_norms {
        let _ = writeln!(report, "[H0, Iz({label})] max-norm: {norm:.3e}");
    }
    let passed = zrep.passed();
    if passed {
        report.push_str("z-commutation: pass\n");
    } else {
        report.push_str("z-commutation: FAIL\n");
        for c in &zrep.offending_couplings {
            let _ = writeln!(report, "  offending coupling: {c}");
        }
    }
    Ok((report, passed))
}

pub fn cmd_optimize(
    config_path: &Path,
    seed: Option<u64>,
    out: &Path,
    force: bool,
) -> Result<(String, OptimizationOutcome)> {
    let cfg = RunConfig::load(config_path)?;
    guard_dimension(&cfg, force)?;
    ensure_out_dir(out)?;
    let sys = cfg.build_system()?;
    let ga_cfg = cfg.ga_config(seed)?;
    let template = cfg.template()?;
    let cache = precompute_propagators(&sys, template.dt())?;
    let problem = OptimizationProblem {
        system: &sys,
        polarizations: cfg.polarizations(),
    };
    let outcome = optimize_with_cache(&problem, &ga_cfg, &template, &cache)?;

    let labels: Vec<String> = sys.channels().iter().map(|c| c.label.clone()).collect();
    let amps: Vec<f64> = sys.channels().iter().map(|c| c.rf_amplitude_hz).collect();
    fs::write(
        out.join("pulse_table.txt"),
        format_pulse_table(&outcome.best, &labels, &amps)?,
    )?;

    let mut history = String::new();
    for rec in &outcome.history {
        let line = serde_json::json!({
            "generation": rec.generation,
            "best_Q": rec.best_q,
            "mean_Q": rec.mean_q,
            "best_chromosome_id": rec.best_chromosome_id,
        });
        let _ = writeln!(history, "{line}");
    }
    fs::write(out.join("history.jsonl"), history)?;

    let eps_ref = eps_reference(&cfg, &sys)?;
    let rho0 = build_thermal_state(&sys, &cfg.polarizations())?;
    let projector = build_singlet_projector(&sys)?;
    let stride = cfg.output.stride.unwrap_or(1);
    let traj = singlet_trajectory(&cache, &outcome.best, &rho0, &projector, eps_ref, stride)?;
    fs::write(out.join("trajectory.csv"), trajectory_csv(&traj))?;

    let final_enh = *traj.enhancement.last().unwrap();
    let ceiling_enh = (4.0 * outcome.ceiling - 1.0) / 3.0 / eps_ref;
    let mut report = String::new();
    let _ = writeln!(report, "seed: {}", ga_cfg.master_seed);
    let _ = writeln!(report, "generations evaluated: {}", outcome.history.len());
    let _ = writeln!(report, "best Q: {:.9}", outcome.best_q);
    let _ = writeln!(report, "majorization ceiling Q: {:.9}", outcome.ceiling);
    let _ = writeln!(report, "achieved enhancement: {final_enh:.6}");
    let _ = writeln!(report, "ceiling enhancement: {ceiling_enh:.6}");
    let _ = writeln!(report, "artifacts: {}", out.display());
    Ok((report, outcome))
}

pub fn cmd_simulate(
    config_path: &Path,
    pulse_path: &Path,
    stride: usize,
    out: &Path,
    force: bool,
) -> Result<(String, TrajectoryRecord)> {
    let cfg = RunConfig::load(config_path)?;
    guard_dimension(&cfg, force)?;
    ensure_out_dir(out)?;
    let sys = cfg.build_system()?;
    let text = fs::read_to_string(pulse_path)?;
    let parsed = parse_pulse_table(&text)?;

    let labels: Vec<String> = sys.channels().iter().map(|c| c.label.clone()).collect();
    if parsed.channel_labels != labels {
        return Err(Error::PulseTable(format!(
            "channel labels {:?} do not match the config's {labels:?}",
            parsed.channel_labels
        )));
    }
    for (k, (amp, ch)) in parsed
        .amplitudes_hz
        .iter()
        .zip(sys.channels().iter())
        .enumerate()
    {
        if *amp > 0.0 && (amp - ch.rf_amplitude_hz).abs() > 1e-6 {
            return Err(Error::PulseTable(format!(
                "channel {k} ({}) amplitude {amp} Hz does not match the config's {} Hz",
                ch.label, ch.rf_amplitude_hz
            )));
        }
    }
    if (parsed.sequence.dt() - cfg.bb.dt_s).abs() > 1e-12 {
        return Err(Error::PulseTable(format!(
            "segment duration {} s does not match the config's bb.dt_s = {} s",
            parsed.sequence.dt(),
            cfg.bb.dt_s
        )));
    }

    let cache = precompute_propagators(&sys, parsed.sequence.dt())?;
    let rho0 = build_thermal_state(&sys, &cfg.polarizations())?;
    let projector = build_singlet_projector(&sys)?;
    let eps_ref = eps_reference(&cfg, &sys)?;
    let traj = singlet_trajectory(&cache, &parsed.sequence, &rho0, &projector, eps_ref, stride)?;
    fs::write(out.join("trajectory.csv"), trajectory_csv(&traj))?;

    let mut report = String::new();
    let _ = writeln!(report, "segments: {}", parsed.sequence.len());
    let _ = writeln!(
        report,
        "duration: {:.3} ms",
        parsed.sequence.total_duration() * 1e3
    );
    let _ = writeln!(report, "final Q: {:.9}", traj.q_values.last().unwrap());
    let _ = writeln!(
        report,
        "final enhancement: {:.6}",
        traj.enhancement.last().unwrap()
    );
    Ok((report, traj))
}

pub fn cmd_hbac(
    config_path: &Path,
    iterations: usize,
    pulse_path: Option<&Path>,
    out: &Path,
) -> Result<(String, Vec<HBACState>)> {
    let cfg = RunConfig::load(config_path)?;
    ensure_out_dir(out)?;
    let sys = cfg.build_system()?;
    let params = cfg.relaxation_params()?;
    let thermal = cfg.polarizations();

    let states = match pulse_path {
        Some(path) => {
            // Exact transfer gain: re-evaluate the optimized pulse with the
            // current ancilla polarizations.
            let text = fs::read_to_string(path)?;
            let parsed = parse_pulse_table(&text)?;
            let cache = precompute_propagators(&sys, parsed.sequence.dt())?;
            let projector = build_singlet_projector(&sys)?;
            let gain = bb_transfer_gain(&sys, &cache, &parsed.sequence, &projector);
            hbac_simulate(&params, &thermal, gain, iterations)?
        }
        None => {
            // Analytic affine model reading the first non-pair species.
            let pair_label = &sys.channels()[sys.pair_channel()].label;
            let ancilla = sys
                .channels()
                .iter()
                .map(|c| c.label.clone())
                .find(|l| l != pair_label)
                .ok_or_else(|| {
                    Error::Config("no ancilla species distinct from the singlet pair".into())
                })?;
            let alpha = cfg.relaxation.as_ref().and_then(|r| r.transfer_alpha);
            let beta = cfg
                .relaxation
                .as_ref()
                .and_then(|r| r.transfer_beta)
                .unwrap_or(0.0);
            let alpha = alpha.ok_or_else(|| {
                Error::Config(
                    "analytic HBAC needs relaxation.transfer_alpha (or pass --pulse)".into(),
                )
            })?;
            hbac_simulate(&params, &thermal, affine_gain(ancilla, alpha, beta), iterations)?
        }
    };

    let mut csv = String::from("m,eps_singlet");
    for (label, _) in &states[0].eps_ancilla {
        let _ = write!(csv, ",eps_{label}");
    }
    csv.push('\n');
    for s in &states {
        let _ = write!(csv, "{},{:.9}", s.iteration, s.eps_singlet);
        for (_, e) in &s.eps_ancilla {
            let _ = write!(csv, ",{e:.9}");
        }
        csv.push('\n');
    }
    fs::write(out.join("hbac.csv"), &csv)?;

    let mut report = String::new();
    let _ = writeln!(report, "iterations: 0..={iterations}");
    let _ = writeln!(
        report,
        "final eps_singlet: {:.6}",
        states.last().unwrap().eps_singlet
    );
    if states.len() >= 3 {
        let g1 = states[1].eps_singlet - states[0].eps_singlet;
        let g2 = states[2].eps_singlet - states[1].eps_singlet;
        let _ = writeln!(report, "iteration-1 gain: {g1:.6}");
        let _ = writeln!(report, "iteration-2 gain: {g2:.6}");
    }
    Ok((report, states))
}

pub fn cmd_fit(
    data_path: &Path,
    model: FitModel,
    out: &Path,
) -> Result<(String, FitResult)> {
    ensure_out_dir(out)?;
    let text = fs::read_to_string(data_path)?;
    let (times, values) = parse_xy(&text)?;
    let fit = fit_monoexponential(&times, &values, model)?;

    // Plot-ready fitted curve over the data range.
    let t0 = times.iter().cloned().fold(f64::INFINITY, f64::min);
    let t1 = times.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let n = 200;
    let (ts, vs): (Vec<f64>, Vec<f64>) = (0..=n)
        .map(|i| {
            let t = t0 + (t1 - t0) * i as f64 / n as f64;
            let g = match model {
                FitModel::Decay => (-t / fit.time_constant).exp(),
                FitModel::InversionRecovery => 1.0 - 2.0 * (-t / fit.time_constant).exp(),
            };
            (t, fit.amplitude * g)
        })
        .unzip();
    fs::write(out.join("fit_curve.csv"), format_xy(&ts, &vs))?;

    let mut report = String::new();
    let _ = writeln!(report, "amplitude: {:.9}", fit.amplitude);
    let _ = writeln!(report, "time constant: {:.9} s", fit.time_constant);
    let _ = writeln!(report, "residual rms: {:.3e}", fit.residual_rms);
    Ok((report, fit))
}

/// Default output directory is the current directory.
pub fn default_out() -> PathBuf {
    PathBuf::from(".")
}
