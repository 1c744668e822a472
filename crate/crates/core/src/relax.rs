//! Phenomenological relaxation pipeline around the unitary core: spin-lock
//! purification and singlet decay, T1 recovery of ancillas, iterated
//! algorithmic cooling, exponential fitting, and sensitivity accounting.
//!
//! Relaxation acts on scalar order parameters (exponentials with measured
//! time constants), not on superoperators; the unitary engine stays exact.

use crate::algebra::HermitianOperator;
use crate::bb::{BBSequence, PropagatorCache, SequenceFitness};
use crate::error::{Error, Result};
use crate::spin::{build_thermal_state, SpinSystem};

/// Measured time constants driving the pipeline, in seconds.
#[derive(Debug, Clone)]
pub struct RelaxationParams {
    /// T1 per species label (or per site as "site<N>").
    pub t1_s: Vec<(String, f64)>,
    /// Singlet lifetime T_S.
    pub t_singlet_s: f64,
    /// Spin-lock duration after the first (AC) transfer.
    pub tau_ac_s: f64,
    /// Spin-lock duration inside each HBAC iteration.
    pub tau_hb_s: f64,
}

impl RelaxationParams {
    pub fn validate(&self) -> Result<()> {
        if self.t_singlet_s <= 0.0 || self.tau_ac_s < 0.0 || self.tau_hb_s < 0.0 {
            return Err(Error::InvalidArgument(
                "relaxation time constants must be positive".into(),
            ));
        }
        for (label, t1) in &self.t1_s {
            if *t1 <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "T1 for '{label}' must be positive"
                )));
            }
        }
        Ok(())
    }

    pub fn t1_for(&self, label: &str) -> Result<f64> {
        self.t1_s
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, t)| *t)
            .ok_or_else(|| Error::InvalidArgument(format!("no T1 entry for '{label}'")))
    }
}

/// Singlet order after a spin-lock of duration `tau`:
/// `eps(tau) = eps0 * exp(-tau / T_S)`. The short-lived non-singlet component
/// is modeled as fully damped to the maximally mixed state.
pub fn spinlock_decay(eps0: f64, tau: f64, t_singlet: f64) -> f64 {
    assert!(tau >= 0.0 && t_singlet > 0.0);
    eps0 * (-tau / t_singlet).exp()
}

/// Spin-lattice recovery toward the thermal value:
/// `eps_th - (eps_th - eps) * exp(-tau / T1)`.
pub fn t1_recovery(eps_current: f64, eps_thermal: f64, tau: f64, t1: f64) -> f64 {
    assert!(tau >= 0.0 && t1 > 0.0);
    eps_thermal - (eps_thermal - eps_current) * (-tau / t1).exp()
}

/// State of the cooling loop after iteration `m`.
#[derive(Debug, Clone)]
pub struct HBACState {
    pub iteration: usize,
    /// Singlet order after the iteration's spin-lock.
    pub eps_singlet: f64,
    /// Ancilla polarization per species after recovery.
    pub eps_ancilla: Vec<(String, f64)>,
}

/// Iterated algorithmic cooling. Iteration 0 is the plain AC transfer from
/// thermal ancillas followed by the `tau_ac` spin-lock; iterations 1..m apply
/// the transfer again after ancillas recover over `tau_hb`.
///
/// `transfer_gain(ancilla polarizations, current singlet order)` returns the
/// singlet order right after the BB pulse; the transfer consumes the ancilla
/// z-polarization.
pub fn hbac_simulate<F>(
    params: &RelaxationParams,
    thermal: &[(String, f64)],
    mut transfer_gain: F,
    m_max: usize,
) -> Result<Vec<HBACState>>
where
    F: FnMut(&[(String, f64)], f64) -> Result<f64>,
{
    params.validate()?;
    let mut eps_singlet = 0.0;
    let mut ancilla: Vec<(String, f64)> = thermal.to_vec();
    let mut states = Vec::with_capacity(m_max + 1);
    for m in 0..=m_max {
        let tau = if m == 0 { params.tau_ac_s } else { params.tau_hb_s };
        eps_singlet = transfer_gain(&ancilla, eps_singlet)?;
        for (_, e) in ancilla.iter_mut() {
            *e = 0.0;
        }
        eps_singlet = spinlock_decay(eps_singlet, tau, params.t_singlet_s);
        for ((label, e), (_, e_th)) in ancilla.iter_mut().zip(thermal.iter()) {
            let t1 = params.t1_for(label)?;
            *e = t1_recovery(*e, *e_th, tau, t1);
        }
        states.push(HBACState {
            iteration: m,
            eps_singlet,
            eps_ancilla: ancilla.clone(),
        });
    }
    Ok(states)
}

/// Affine transfer model `eps_S' = alpha * eps_anc + beta * eps_S`, reading
/// the ancilla polarization of one species. `beta` is the fraction of
/// existing singlet order that survives the transfer pulse; the default
/// pipeline uses `beta = 0` (the pulse re-prepares the singlet from scratch).
pub fn affine_gain(
    ancilla_species: String,
    alpha: f64,
    beta: f64,
) -> impl FnMut(&[(String, f64)], f64) -> Result<f64> {
    move |anc: &[(String, f64)], eps_s: f64| {
        let e = anc
            .iter()
            .find(|(l, _)| *l == ancilla_species)
            .map(|(_, e)| *e)
            .ok_or_else(|| {
                Error::InvalidArgument(format!("no ancilla entry for '{ancilla_species}'"))
            })?;
        Ok(alpha * e + beta * eps_s)
    }
}

/// Closed-form fixed point of the affine iteration
/// `eps <- (alpha * A + beta * eps) * D` with steady recovered ancilla `A`
/// and per-iteration decay `D = exp(-tau_hb / T_S)`.
pub fn affine_fixed_point(
    alpha: f64,
    beta: f64,
    eps_anc_steady: f64,
    decay: f64,
) -> f64 {
    alpha * eps_anc_steady * decay / (1.0 - beta * decay)
}

/// Transfer gain backed by the exact BB engine: re-evaluates the optimized
/// chromosome's singlet overlap with the current ancilla polarizations scaled
/// into the thermal state. Existing singlet order does not survive the pulse
/// (the unitary is optimized for thermal input).
pub fn bb_transfer_gain<'a>(
    sys: &'a SpinSystem,
    cache: &'a PropagatorCache,
    sequence: &'a BBSequence,
    _projector: &'a HermitianOperator,
) -> impl FnMut(&[(String, f64)], f64) -> Result<f64> + 'a {
    let factor = crate::bb::singlet_projector_factor(sys);
    move |polarizations: &[(String, f64)], _eps_s: f64| {
        let rho = build_thermal_state(sys, polarizations)?;
        let evaluator = SequenceFitness::new(cache, &rho, factor.clone())?;
        let q = evaluator.evaluate(sequence)?;
        // eps_S = (4Q - 1)/3 with Q = 1/4 + overlap.
        Ok((4.0 * q - 1.0) / 3.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitModel {
    /// `A * exp(-t / T)`.
    Decay,
    /// `A * (1 - 2 exp(-t / T))`.
    InversionRecovery,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub amplitude: f64,
    pub time_constant: f64,
    pub residual_rms: f64,
}

/// Least-squares monoexponential fit by variable projection: for a trial time
/// constant the amplitude is solved linearly, and the time constant is found
/// by golden-section search on the projected residual.
pub fn fit_monoexponential(times: &[f64], values: &[f64], model: FitModel) -> Result<FitResult> {
    if times.len() != values.len() {
        return Err(Error::Fit(format!(
            "{} times vs {} values",
            times.len(),
            values.len()
        )));
    }
    if times.len() < 3 {
        return Err(Error::Fit(format!(
            "need at least 3 points, got {}",
            times.len()
        )));
    }
    let mut seen = times.to_vec();
    seen.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if seen.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Fit("duplicate time points".into()));
    }

    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let variance =
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64;
    if variance < 1e-24 * (1.0 + mean * mean) {
        return Err(Error::Fit(
            "constant data: time constant is unidentifiable (infinite)".into(),
        ));
    }

    let shape = |t: f64, tc: f64| -> f64 {
        match model {
            FitModel::Decay => (-t / tc).exp(),
            FitModel::InversionRecovery => 1.0 - 2.0 * (-t / tc).exp(),
        }
    };
    // Amplitude and SSE for a trial time constant.
    let project = |tc: f64| -> (f64, f64) {
        let mut num = 0.0;
        let mut den = 0.0;
        for (&t, &v) in times.iter().zip(values.iter()) {
            let g = shape(t, tc);
            num += v * g;
            den += g * g;
        }
        let a = if den > 0.0 { num / den } else { 0.0 };
        let sse: f64 = times
            .iter()
            .zip(values.iter())
            .map(|(&t, &v)| (v - a * shape(t, tc)).powi(2))
            .sum();
        (a, sse)
    };

    let span = seen[seen.len() - 1] - seen[0];
    let lo = (span / 1e4).max(1e-12);
    let hi = span * 1e3;
    // Golden-section on log(T).
    let (mut a_ln, mut b_ln) = (lo.ln(), hi.ln());
    let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut c = b_ln - phi * (b_ln - a_ln);
    let mut d = a_ln + phi * (b_ln - a_ln);
    let mut fc = project(c.exp()).1;
    let mut fd = project(d.exp()).1;
    for _ in 0..240 {
        if fc < fd {
            b_ln = d;
            d = c;
            fd = fc;
            c = b_ln - phi * (b_ln - a_ln);
            fc = project(c.exp()).1;
        } else {
            a_ln = c;
            c = d;
            fc = fd;
            d = a_ln + phi * (b_ln - a_ln);
            fd = project(d.exp()).1;
        }
    }
    let tc = ((a_ln + b_ln) / 2.0).exp();
    if tc > hi * 0.5 || tc < lo * 2.0 {
        return Err(Error::Fit(format!(
            "time constant {tc:.3e} s ran to the search boundary; data do not \
             determine a monoexponential"
        )));
    }
    let (amplitude, sse) = project(tc);
    Ok(FitResult {
        amplitude,
        time_constant: tc,
        residual_rms: (sse / times.len() as f64).sqrt(),
    })
}

/// Per-scan sensitivity gain and overall experimental time reduction for a
/// signal enhancement combined with a shortened recycle delay.
/// `recycle_ratio` is old delay / new delay.
pub fn sensitivity_gain(enhancement: f64, recycle_ratio: f64) -> Result<(f64, f64)> {
    if enhancement <= 0.0 || recycle_ratio <= 0.0 {
        return Err(Error::InvalidArgument(
            "enhancement and recycle ratio must be positive".into(),
        ));
    }
    let per_scan = enhancement * recycle_ratio.sqrt();
    Ok((per_scan, per_scan * per_scan))
}

/// Two-column delimited text dataset (time_s, value). Lines whose first field
/// does not parse as a number are treated as headers and skipped.
pub fn parse_xy(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|ch: char| ch == ',' || ch.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        if fields.len() < 2 {
            return Err(Error::Fit(format!(
                "line {}: expected two columns",
                lineno + 1
            )));
        }
        match (fields[0].parse::<f64>(), fields[1].parse::<f64>()) {
            (Ok(t), Ok(v)) => {
                times.push(t);
                values.push(v);
            }
            _ if times.is_empty() => continue, // header line
            _ => {
                return Err(Error::Fit(format!(
                    "line {}: non-numeric data '{line}'",
                    lineno + 1
                )))
            }
        }
    }
    Ok((times, values))
}

pub fn format_xy(times: &[f64], values: &[f64]) -> String {
    let mut out = String::from("time_s,value\n");
    for (t, v) in times.iter().zip(values.iter()) {
        out.push_str(&format!("{t:.9},{v:.9}\n"));
    }
    out
}
