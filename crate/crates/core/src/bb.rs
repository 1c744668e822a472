//! Bang-bang sequence engine: one-time propagator precomputation, synthesis of
//! arbitrary-phase bangs by diagonal conjugation, state propagation, and the
//! singlet-order trajectory extraction.
//!
//! A bang with phase `phi` on channel `k` evolves under
//! `H0 + Omega_k (Ix cos phi + Iy sin phi)`, whose propagator equals
//! `Z X_k Z^dag` with `Z = exp(-i phi Iz_k)` diagonal in the Zeeman basis.
//! Only the phase-less `X` operators and the delay propagator are ever
//! exponentiated; everything else is O(d^2) diagonal scaling.

use ndarray::prelude::*;
use num_complex::Complex64 as C64;

use crate::algebra::{
    self, adjoint, expm_hermitian, identity, CMatrix, DiagonalPhaseOperator, HermitianOperator,
    Tolerances, UnitaryPropagator,
};
use crate::error::{Error, Result};
use crate::spin::{
    build_collective_operator, build_internal_hamiltonian, collective_z_diagonal, singlet_ket,
    validate_z_commutation, Axis, DensityMode, DensityState, SpinSystem, TWO_PI,
};

/// Per-channel state of one segment: silent or a full-power bang with a phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelPulse {
    pub active: bool,
    /// Phase in radians, stored normalized to [0, 2pi).
    pub phase: f64,
}

impl ChannelPulse {
    pub fn silent() -> Self {
        Self {
            active: false,
            phase: 0.0,
        }
    }

    pub fn bang(phase: f64) -> Self {
        Self {
            active: true,
            phase: normalize_phase(phase),
        }
    }
}

pub fn normalize_phase(phase: f64) -> f64 {
    let p = phase.rem_euclid(TWO_PI);
    // rem_euclid can return exactly 2pi after rounding.
    if p >= TWO_PI {
        0.0
    } else {
        p
    }
}

/// One time segment of fixed duration across all channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    channels: Vec<ChannelPulse>,
}

impl Segment {
    pub fn new(channels: Vec<ChannelPulse>) -> Self {
        let channels = channels
            .into_iter()
            .map(|c| ChannelPulse {
                active: c.active,
                phase: normalize_phase(c.phase),
            })
            .collect();
        Self { channels }
    }

    pub fn silent(nchannels: usize) -> Self {
        Self {
            channels: vec![ChannelPulse::silent(); nchannels],
        }
    }

    pub fn channels(&self) -> &[ChannelPulse] {
        &self.channels
    }

    pub fn nchannels(&self) -> usize {
        self.channels.len()
    }

    /// Bitmask of active channels.
    pub fn active_mask(&self) -> usize {
        self.channels
            .iter()
            .enumerate()
            .filter(|(_, c)| c.active)
            .fold(0usize, |m, (k, _)| m | (1 << k))
    }
}

/// A bang-bang chromosome: ordered segments of fixed duration `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct BBSequence {
    dt: f64,
    nchannels: usize,
    segments: Vec<Segment>,
}

impl BBSequence {
    pub fn new(dt: f64, nchannels: usize, segments: Vec<Segment>) -> Result<Self> {
        if dt <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "segment duration must be positive, got {dt}"
            )));
        }
        for (i, s) in segments.iter().enumerate() {
            if s.nchannels() != nchannels {
                return Err(Error::InvalidArgument(format!(
                    "segment {i} has {} channels, expected {nchannels}",
                    s.nchannels()
                )));
            }
        }
        Ok(Self {
            dt,
            nchannels,
            segments,
        })
    }

    /// All-silent sequence of `n` segments.
    pub fn silent(dt: f64, nchannels: usize, n: usize) -> Result<Self> {
        Self::new(dt, nchannels, vec![Segment::silent(nchannels); n])
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn nchannels(&self) -> usize {
        self.nchannels
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segments_mut(&mut self) -> &mut [Segment] {
        &mut self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn total_duration(&self) -> f64 {
        self.dt * self.segments.len() as f64
    }

    /// Stable content hash, used for deterministic GA tie-breaking.
    pub fn fingerprint(&self) -> u64 {
        let mut h = crate::spin::Fnv::new();
        h.write_f64(self.dt);
        h.write_u64(self.nchannels as u64);
        for s in &self.segments {
            for c in s.channels() {
                h.write_u64(c.active as u64);
                h.write_f64(c.phase);
            }
        }
        h.finish()
    }
}

#[derive(Debug)]
struct BangEntry {
    /// `exp(-i (H0 + sum_k Omega_k Ix_k) dt)` for this channel subset.
    x: CMatrix,
    /// Its adjoint, kept for the backward fitness path.
    x_adj: CMatrix,
}

/// One-time-exponentiated propagators for a `(system, dt)` pair.
///
/// Immutable and shareable across threads; every optimizer iteration only
/// performs diagonal scalings and matrix products against these entries.
#[derive(Debug)]
pub struct PropagatorCache {
    dt: f64,
    dim: usize,
    nchannels: usize,
    system_fingerprint: u64,
    rf_amplitudes_hz: Vec<f64>,
    u_delay: CMatrix,
    u_delay_adj: CMatrix,
    /// Indexed by channel-subset bitmask; entry 0 is unused (delay).
    bangs: Vec<Option<BangEntry>>,
    /// Collective Iz diagonal per channel, the phase-operator generators.
    z_generators: Vec<Array1<f64>>,
}

impl PropagatorCache {
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nchannels(&self) -> usize {
        self.nchannels
    }

    pub fn system_fingerprint(&self) -> u64 {
        self.system_fingerprint
    }

    pub fn rf_amplitudes_hz(&self) -> &[f64] {
        &self.rf_amplitudes_hz
    }

    pub fn delay_matrix(&self) -> &CMatrix {
        &self.u_delay
    }

    pub fn bang_matrix(&self, mask: usize) -> Option<&CMatrix> {
        self.bangs.get(mask).and_then(|b| b.as_ref()).map(|b| &b.x)
    }

    pub fn z_generator(&self, channel: usize) -> &Array1<f64> {
        &self.z_generators[channel]
    }

    /// Combined diagonal phase operator `prod_{k active} exp(-i phi_k Iz_k)`.
    fn phase_operator(&self, seg: &Segment) -> DiagonalPhaseOperator {
        let mut total = Array1::<f64>::zeros(self.dim);
        for (k, c) in seg.channels().iter().enumerate() {
            if c.active && c.phase != 0.0 {
                total.scaled_add(c.phase, &self.z_generators[k]);
            }
        }
        DiagonalPhaseOperator::from_generator(&total, 1.0)
    }

    fn check_segment(&self, seg: &Segment) -> Result<()> {
        if seg.nchannels() != self.nchannels {
            return Err(Error::DimMismatch {
                left: seg.nchannels(),
                right: self.nchannels,
            });
        }
        Ok(())
    }

    /// Segment propagator as a bare matrix (no unitarity re-validation; the
    /// cached factors are unitary and diagonal scaling preserves that).
    pub fn segment_matrix(&self, seg: &Segment) -> Result<CMatrix> {
        self.check_segment(seg)?;
        let mask = seg.active_mask();
        if mask == 0 {
            return Ok(self.u_delay.clone());
        }
        let x = &self.bangs[mask].as_ref().expect("cache covers all masks").x;
        let z = self.phase_operator(seg);
        Ok(z.conjugate(x))
    }

    /// Apply `U_seg^dag` to the columns of `w` in place:
    /// `w <- Z X^dag Z^dag w` (or `U_delay^dag w` for silent segments).
    fn apply_segment_adjoint(&self, seg: &Segment, w: &mut CMatrix) {
        let mask = seg.active_mask();
        if mask == 0 {
            *w = self.u_delay_adj.dot(w);
            return;
        }
        let entry = self.bangs[mask].as_ref().expect("cache covers all masks");
        let z = self.phase_operator(seg);
        z.scale_rows_adjoint(w);
        *w = entry.x_adj.dot(w);
        z.scale_rows(w);
    }
}

/// Exponentiates the delay and all `2^K - 1` channel-subset bang Hamiltonians
/// once. Refuses systems whose internal Hamiltonian does not commute with the
/// collective z rotations, since the phase trick would then be inexact.
pub fn precompute_propagators(sys: &SpinSystem, dt: f64) -> Result<PropagatorCache> {
    if dt <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "segment duration must be positive, got {dt}"
        )));
    }
    let report = validate_z_commutation(sys)?;
    if !report.passed() {
        return Err(Error::ZCommutation(format!(
            "internal Hamiltonian does not commute with collective z rotations \
             (norms: {:?}); use the weak (secular) coupling form for couplings \
             across species: {}",
            report.channel_norms,
            report.offending_couplings.join("; ")
        )));
    }

    let h0 = build_internal_hamiltonian(sys)?;
    let nch = sys.channels().len();
    let dim = sys.dim();

    let u_delay = expm_hermitian(&h0, dt)?.matrix().clone();
    let u_delay_adj = adjoint(&u_delay);

    // Collective Ix per channel, reused across subsets.
    let mut ix_ops = Vec::with_capacity(nch);
    for ch in sys.channels() {
        ix_ops.push(build_collective_operator(sys, &ch.label, Axis::X)?);
    }

    let nmasks = 1usize << nch;
    let mut bangs: Vec<Option<BangEntry>> = Vec::with_capacity(nmasks);
    bangs.push(None);
    for mask in 1..nmasks {
        let mut h = h0.matrix().clone();
        for (k, ix) in ix_ops.iter().enumerate() {
            if mask & (1 << k) != 0 {
                let omega = TWO_PI * sys.channels()[k].rf_amplitude_hz;
                h += &ix.matrix().mapv(|z| z * omega);
            }
        }
        let hh = HermitianOperator::new(h)?;
        let x = expm_hermitian(&hh, dt)?.matrix().clone();
        let x_adj = adjoint(&x);
        bangs.push(Some(BangEntry { x, x_adj }));
    }

    let z_generators = (0..nch).map(|k| collective_z_diagonal(sys, k)).collect();

    Ok(PropagatorCache {
        dt,
        dim,
        nchannels: nch,
        system_fingerprint: sys.fingerprint(),
        rf_amplitudes_hz: sys.channels().iter().map(|c| c.rf_amplitude_hz).collect(),
        u_delay,
        u_delay_adj,
        bangs,
        z_generators,
    })
}

/// Propagator of one segment, with the unitarity invariant checked.
pub fn segment_unitary(cache: &PropagatorCache, seg: &Segment) -> Result<UnitaryPropagator> {
    let m = cache.segment_matrix(seg)?;
    UnitaryPropagator::new(m, cache.dt())
}

/// Ordered product of segment propagators; segment 0 is applied first
/// (rightmost factor).
pub fn sequence_unitary(cache: &PropagatorCache, seq: &BBSequence) -> Result<UnitaryPropagator> {
    if (seq.dt() - cache.dt()).abs() > f64::EPSILON * seq.dt().abs() {
        return Err(Error::InvalidArgument(format!(
            "sequence dt {} does not match cache dt {}",
            seq.dt(),
            cache.dt()
        )));
    }
    let mut u = identity(cache.dim());
    for seg in seq.segments() {
        let us = cache.segment_matrix(seg)?;
        u = us.dot(&u);
    }
    UnitaryPropagator::with_tolerance(
        u,
        seq.total_duration(),
        Tolerances::default().unitarity_accumulated,
    )
}

/// Expectation-value trajectory of a propagated state.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    /// Sample times in seconds, strictly increasing, starting at 0.
    pub times: Vec<f64>,
    /// Full-mode singlet overlap Q(t).
    pub q_values: Vec<f64>,
    /// Enhancement eps_S(t) / eps_ref.
    pub enhancement: Vec<f64>,
}

/// Propagates `rho` through the sequence, recording `Tr[rho(t) O]` for every
/// observable at t = 0 and after every `stride` segments (plus the final
/// segment). Returns the sample times and one series per observable.
pub fn propagate_state(
    cache: &PropagatorCache,
    seq: &BBSequence,
    rho: &DensityState,
    observables: &[&CMatrix],
    stride: usize,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be >= 1".into()));
    }
    if rho.dim() != cache.dim() {
        return Err(Error::DimMismatch {
            left: rho.dim(),
            right: cache.dim(),
        });
    }
    for o in observables {
        if o.nrows() != cache.dim() {
            return Err(Error::DimMismatch {
                left: o.nrows(),
                right: cache.dim(),
            });
        }
    }
    let mut state = rho.matrix().clone();
    let mut times = vec![0.0];
    let mut series: Vec<Vec<f64>> = observables
        .iter()
        .map(|o| Ok(vec![algebra::expectation(&state, o)?]))
        .collect::<Result<_>>()?;
    for (n, seg) in seq.segments().iter().enumerate() {
        let u = cache.segment_matrix(seg)?;
        state = u.dot(&state).dot(&adjoint(&u));
        let done = n + 1 == seq.len();
        if (n + 1) % stride == 0 || done {
            times.push((n + 1) as f64 * seq.dt());
            for (o, s) in observables.iter().zip(series.iter_mut()) {
                s.push(algebra::expectation(&state, o)?);
            }
        }
    }
    Ok((times, series))
}

/// Convenience wrapper recording the singlet overlap and enhancement.
///
/// Q is reconstructed in full mode: for a deviation-mode input,
/// `Q(t) = 1/4 + Tr[rho_dev(t) P]` (the identity part of the full state
/// contributes `Tr[P]/d = 1/4` exactly). The enhancement is
/// `eps_S(t) / eps_ref = (4/3) Tr[rho_dev(t) P] / eps_ref`, linear in the
/// deviation, so relative polarization units pass straight through.
pub fn singlet_trajectory(
    cache: &PropagatorCache,
    seq: &BBSequence,
    rho: &DensityState,
    projector: &HermitianOperator,
    eps_ref: f64,
    stride: usize,
) -> Result<TrajectoryRecord> {
    let (times, mut series) =
        propagate_state(cache, seq, rho, &[projector.matrix()], stride)?;
    let overlap = series.pop().expect("one observable");
    let (q_values, enhancement): (Vec<f64>, Vec<f64>) = overlap
        .iter()
        .map(|&tr| {
            let q = match rho.mode() {
                DensityMode::Full => tr,
                DensityMode::Deviation => 0.25 + tr,
            };
            let eps_s = (4.0 * q - 1.0) / 3.0;
            (q, eps_s / eps_ref)
        })
        .unzip();
    Ok(TrajectoryRecord {
        times,
        q_values,
        enhancement,
    })
}

/// Low-rank factor `V` of a positive semidefinite observable `P = V V^dag`,
/// via its eigendecomposition. Columns are eigenvectors scaled by sqrt of the
/// (nonnegligible) eigenvalues.
pub fn psd_factor(p: &HermitianOperator) -> Result<CMatrix> {
    let (evals, evecs) = crate::algebra::eigh_hermitian(p.matrix())?;
    let tol = 1e-12 * evals.iter().fold(1.0_f64, |a, &b| a.max(b.abs()));
    if evals.iter().any(|&l| l < -tol.max(1e-12)) {
        return Err(Error::InvalidArgument(
            "observable is not positive semidefinite".into(),
        ));
    }
    let keep: Vec<usize> = (0..evals.len()).filter(|&i| evals[i] > tol).collect();
    let mut v = CMatrix::zeros((p.dim(), keep.len()));
    for (col, &i) in keep.iter().enumerate() {
        let s = evals[i].sqrt();
        for r in 0..p.dim() {
            v[[r, col]] = evecs[[r, i]] * s;
        }
    }
    Ok(v)
}

/// Explicit rank-`2^(N-2)` factor of the embedded singlet projector: one
/// column `|S0>_pair (x) |b>_ancilla` per ancilla basis state.
pub fn singlet_projector_factor(sys: &SpinSystem) -> CMatrix {
    let n = sys.nspins();
    let (a, b) = sys.singlet_pair();
    let dim = sys.dim();
    let ncols = dim >> 2;
    let bit_a = n - 1 - a;
    let bit_b = n - 1 - b;
    let ket = singlet_ket();
    let mut v = CMatrix::zeros((dim, ncols));
    let others: Vec<usize> = (0..n).filter(|&s| s != a && s != b).collect();
    for (col, e) in (0..ncols).enumerate() {
        let mut base = 0usize;
        for (pos, &s) in others.iter().enumerate() {
            let bit = (e >> (others.len() - 1 - pos)) & 1;
            base |= bit << (n - 1 - s);
        }
        for pair_state in 0..4usize {
            let amp = ket[pair_state];
            if amp == C64::new(0.0, 0.0) {
                continue;
            }
            let pa = (pair_state >> 1) & 1;
            let pb = pair_state & 1;
            let idx = base | (pa << bit_a) | (pb << bit_b);
            v[[idx, col]] = amp;
        }
    }
    v
}

/// Fast fitness evaluator for diagonal (thermal) initial deviations.
///
/// Back-propagates the observable factor `V` through the sequence adjoint and
/// contracts against the diagonal deviation:
/// `Tr[U rho U^dag P] = sum_b rho_bb ||row_b(U^dag V)||^2`.
/// Cost per segment is one `(d x d)(d x r)` product instead of two `d^3` ones.
pub struct SequenceFitness<'a> {
    cache: &'a PropagatorCache,
    dev_diagonal: Array1<f64>,
    factor: CMatrix,
}

impl<'a> SequenceFitness<'a> {
    /// `rho` must be a deviation-mode diagonal state (thermal).
    pub fn new(
        cache: &'a PropagatorCache,
        rho: &DensityState,
        factor: CMatrix,
    ) -> Result<Self> {
        if rho.dim() != cache.dim() || factor.nrows() != cache.dim() {
            return Err(Error::DimMismatch {
                left: rho.dim(),
                right: cache.dim(),
            });
        }
        let m = rho.matrix();
        let mut dev_diagonal = Array1::<f64>::zeros(rho.dim());
        for i in 0..rho.dim() {
            for j in 0..rho.dim() {
                if i == j {
                    dev_diagonal[i] = m[[i, i]].re;
                } else if m[[i, j]].norm() > 1e-14 {
                    return Err(Error::InvalidArgument(
                        "fast fitness path requires a diagonal initial deviation".into(),
                    ));
                }
            }
        }
        Ok(Self {
            cache,
            dev_diagonal,
            factor,
        })
    }

    /// Full-mode overlap `Q = 1/4 + Tr[U rho_dev U^dag P]`.
    pub fn evaluate(&self, seq: &BBSequence) -> Result<f64> {
        let mut w = self.factor.clone();
        for seg in seq.segments().iter().rev() {
            self.cache.check_segment(seg)?;
            self.cache.apply_segment_adjoint(seg, &mut w);
        }
        let mut tr = 0.0;
        for (b, row) in w.rows().into_iter().enumerate() {
            let d = self.dev_diagonal[b];
            if d != 0.0 {
                tr += d * row.iter().map(|z| z.norm_sqr()).sum::<f64>();
            }
        }
        Ok(0.25 + tr)
    }
}

/// Converts singlet order into the ideal observable signal amplitude:
/// `-Tr[rho_pair (Iz1 Iy2 - Iy1 Iz2 + Ix1 Ix2)]` with ancillas traced out
/// first. A pure singlet gives 1/4.
pub fn readout_amplitude(rho: &DensityState, sys: &SpinSystem) -> Result<f64> {
    if rho.dim() != sys.dim() {
        return Err(Error::DimMismatch {
            left: rho.dim(),
            right: sys.dim(),
        });
    }
    let (a, b) = sys.singlet_pair();
    // Reduce onto the pair (ordering (a, b)); the traced identity of a
    // deviation state contributes nothing to this traceless observable.
    let spin_positions: Vec<usize> = vec![a, b];
    let reduced = algebra::partial_trace(rho.matrix(), sys.nspins(), &spin_positions)?;
    let obs = pair_readout_observable();
    let val = algebra::expectation(&reduced, &obs)?;
    Ok(-val)
}

/// `Iz (x) Iy - Iy (x) Iz + Ix (x) Ix` on the two-spin pair space.
pub fn pair_readout_observable() -> CMatrix {
    let c = C64::new;
    let ix = array![[c(0.0, 0.0), c(0.5, 0.0)], [c(0.5, 0.0), c(0.0, 0.0)]];
    let iy = array![[c(0.0, 0.0), c(0.0, -0.5)], [c(0.0, 0.5), c(0.0, 0.0)]];
    let iz = array![[c(0.5, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(-0.5, 0.0)]];
    algebra::kron(&iz, &iy) - algebra::kron(&iy, &iz) + algebra::kron(&ix, &ix)
}
