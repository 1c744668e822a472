//! Spin-system model: species channels, chemical-shift offsets, J-couplings,
//! and the builders for the internal Hamiltonian, collective operators, the
//! thermal state, and the embedded singlet projector.

use ndarray::prelude::*;
use num_complex::Complex64 as C64;

use crate::algebra::{self, CMatrix, HermitianOperator};
use crate::error::{Error, Result};

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Hard cap on system size: dim 4096 keeps dense matrices in memory.
pub const MAX_SPINS: usize = 12;

/// One RF channel / nuclear species.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesChannel {
    pub label: String,
    /// Gyromagnetic ratio relative to a reference species (dimensionless).
    pub relative_gamma: f64,
    /// Available nutation frequency Omega_k / 2pi on this channel, in Hz.
    pub rf_amplitude_hz: f64,
}

/// One spin-1/2 site.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinSite {
    pub index: usize,
    /// Index into the channel list.
    pub channel: usize,
    /// Rotating-frame offset from the channel carrier, in Hz.
    pub offset_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingForm {
    /// Secular form 2 pi J Iz Iz.
    Weak,
    /// Full isotropic form 2 pi J (IxIx + IyIy + IzIz).
    Isotropic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pub site_a: usize,
    pub site_b: usize,
    pub j_hz: f64,
    pub form: CouplingForm,
}

#[derive(Debug, Clone)]
pub struct SpinSystem {
    channels: Vec<SpeciesChannel>,
    sites: Vec<SpinSite>,
    couplings: Vec<Coupling>,
    singlet_pair: (usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl SpinSystem {
    pub fn new(
        channels: Vec<SpeciesChannel>,
        sites: Vec<SpinSite>,
        couplings: Vec<Coupling>,
        singlet_pair: (usize, usize),
    ) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::InvalidSystem("no spin sites".into()));
        }
        if sites.len() > MAX_SPINS {
            return Err(Error::InvalidSystem(format!(
                "{} spins exceeds the {MAX_SPINS}-spin dense cap",
                sites.len()
            )));
        }
        for (i, s) in sites.iter().enumerate() {
            if s.index != i {
                return Err(Error::InvalidSystem(format!(
                    "site indices must be contiguous 0..N-1, got {} at position {i}",
                    s.index
                )));
            }
            if s.channel >= channels.len() {
                return Err(Error::InvalidSystem(format!(
                    "site {i} references unknown channel {}",
                    s.channel
                )));
            }
        }
        for ch in &channels {
            if ch.relative_gamma <= 0.0 {
                return Err(Error::InvalidSystem(format!(
                    "channel {} has non-positive relative gamma",
                    ch.label
                )));
            }
            if ch.rf_amplitude_hz < 0.0 {
                return Err(Error::InvalidSystem(format!(
                    "channel {} has negative RF amplitude",
                    ch.label
                )));
            }
        }
        for c in &couplings {
            if c.site_a >= sites.len() || c.site_b >= sites.len() {
                return Err(Error::InvalidSystem(format!(
                    "coupling ({}, {}) out of range",
                    c.site_a, c.site_b
                )));
            }
            if c.site_a == c.site_b {
                return Err(Error::InvalidSystem(format!(
                    "self-coupling on site {}",
                    c.site_a
                )));
            }
        }
        let (pa, pb) = singlet_pair;
        if pa >= sites.len() || pb >= sites.len() || pa == pb {
            return Err(Error::InvalidSystem("invalid singlet pair".into()));
        }
        if sites[pa].channel != sites[pb].channel {
            return Err(Error::InvalidSystem(
                "singlet pair sites must share the same species".into(),
            ));
        }
        Ok(Self {
            channels,
            sites,
            couplings,
            singlet_pair,
        })
    }

    pub fn nspins(&self) -> usize {
        self.sites.len()
    }

    pub fn dim(&self) -> usize {
        1 << self.sites.len()
    }

    pub fn channels(&self) -> &[SpeciesChannel] {
        &self.channels
    }

    pub fn sites(&self) -> &[SpinSite] {
        &self.sites
    }

    pub fn couplings(&self) -> &[Coupling] {
        &self.couplings
    }

    pub fn singlet_pair(&self) -> (usize, usize) {
        self.singlet_pair
    }

    pub fn channel_index(&self, label: &str) -> Result<usize> {
        self.channels
            .iter()
            .position(|c| c.label == label)
            .ok_or_else(|| Error::UnknownSpecies(label.to_string()))
    }

    /// Sites belonging to a channel.
    pub fn channel_sites(&self, channel: usize) -> Vec<usize> {
        self.sites
            .iter()
            .filter(|s| s.channel == channel)
            .map(|s| s.index)
            .collect()
    }

    /// Channel of the singlet pair.
    pub fn pair_channel(&self) -> usize {
        self.sites[self.singlet_pair.0].channel
    }

    /// Stable hash of the system definition, used to key propagator caches.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv::new();
        for ch in &self.channels {
            h.write_str(&ch.label);
            h.write_f64(ch.relative_gamma);
            h.write_f64(ch.rf_amplitude_hz);
        }
        for s in &self.sites {
            h.write_u64(s.channel as u64);
            h.write_f64(s.offset_hz);
        }
        for c in &self.couplings {
            h.write_u64(c.site_a as u64);
            h.write_u64(c.site_b as u64);
            h.write_f64(c.j_hz);
            h.write_u64(matches!(c.form, CouplingForm::Isotropic) as u64);
        }
        h.write_u64(self.singlet_pair.0 as u64);
        h.write_u64(self.singlet_pair.1 as u64);
        h.finish()
    }
}

/// FNV-1a, enough for cache keys and deterministic tie-breaking.
pub(crate) struct Fnv(u64);

impl Fnv {
    pub fn new() -> Self {
        Fnv(0xcbf29ce484222325)
    }
    pub fn write_u64(&mut self, v: u64) {
        for b in v.to_le_bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x100000001b3);
        }
    }
    pub fn write_f64(&mut self, v: f64) {
        self.write_u64(v.to_bits());
    }
    pub fn write_str(&mut self, s: &str) {
        for b in s.as_bytes() {
            self.0 ^= *b as u64;
            self.0 = self.0.wrapping_mul(0x100000001b3);
        }
    }
    pub fn finish(&self) -> u64 {
        self.0
    }
}

fn pauli_half(axis: Axis) -> CMatrix {
    let c = C64::new;
    match axis {
        Axis::X => array![[c(0.0, 0.0), c(0.5, 0.0)], [c(0.5, 0.0), c(0.0, 0.0)]],
        Axis::Y => array![[c(0.0, 0.0), c(0.0, -0.5)], [c(0.0, 0.5), c(0.0, 0.0)]],
        Axis::Z => array![[c(0.5, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(-0.5, 0.0)]],
    }
}

/// Single-site spin operator embedded in the full Hilbert space by tensor
/// products with identities. Spin 0 is the most significant qubit.
pub fn site_operator(nspins: usize, site: usize, axis: Axis) -> CMatrix {
    assert!(site < nspins);
    let op = pauli_half(axis);
    let dim = 1usize << nspins;
    let mut out = CMatrix::zeros((dim, dim));
    let bit = nspins - 1 - site;
    // Entries connect basis states differing only in this spin's bit.
    for r2 in 0..2usize {
        for c2 in 0..2usize {
            let v = op[[r2, c2]];
            if v == C64::new(0.0, 0.0) {
                continue;
            }
            // Iterate over the other bits.
            for rest in 0..(dim >> 1) {
                let low = rest & ((1 << bit) - 1);
                let high = (rest >> bit) << (bit + 1);
                let base = high | low;
                out[[base | (r2 << bit), base | (c2 << bit)]] = v;
            }
        }
    }
    out
}

/// Diagonal of the collective I_z of one channel, as a real vector.
pub fn collective_z_diagonal(sys: &SpinSystem, channel: usize) -> Array1<f64> {
    let n = sys.nspins();
    let dim = sys.dim();
    let sites = sys.channel_sites(channel);
    let mut diag = Array1::<f64>::zeros(dim);
    for b in 0..dim {
        let mut v = 0.0;
        for &s in &sites {
            let bit = (b >> (n - 1 - s)) & 1;
            v += if bit == 0 { 0.5 } else { -0.5 };
        }
        diag[b] = v;
    }
    diag
}

/// Collective spin operator: sum over all sites of the given species.
pub fn build_collective_operator(
    sys: &SpinSystem,
    species: &str,
    axis: Axis,
) -> Result<HermitianOperator> {
    let ch = sys.channel_index(species)?;
    let n = sys.nspins();
    let dim = sys.dim();
    let mut acc = CMatrix::zeros((dim, dim));
    for s in sys.channel_sites(ch) {
        acc += &site_operator(n, s, axis);
    }
    HermitianOperator::new(acc)
}

/// Internal rotating-frame Hamiltonian in rad/s:
/// offsets `2 pi nu_i Iz_i` plus J-coupling terms per the coupling table.
pub fn build_internal_hamiltonian(sys: &SpinSystem) -> Result<HermitianOperator> {
    let n = sys.nspins();
    let dim = sys.dim();
    let mut h = CMatrix::zeros((dim, dim));
    for site in sys.sites() {
        if site.offset_hz != 0.0 {
            let iz = site_operator(n, site.index, Axis::Z);
            h += &iz.mapv(|z| z * TWO_PI * site.offset_hz);
        }
    }
    for c in sys.couplings() {
        if c.j_hz == 0.0 {
            continue;
        }
        let w = TWO_PI * c.j_hz;
        let za = site_operator(n, c.site_a, Axis::Z);
        let zb = site_operator(n, c.site_b, Axis::Z);
        h += &za.dot(&zb).mapv(|z| z * w);
        if c.form == CouplingForm::Isotropic {
            let xa = site_operator(n, c.site_a, Axis::X);
            let xb = site_operator(n, c.site_b, Axis::X);
            let ya = site_operator(n, c.site_a, Axis::Y);
            let yb = site_operator(n, c.site_b, Axis::Y);
            h += &xa.dot(&xb).mapv(|z| z * w);
            h += &ya.dot(&yb).mapv(|z| z * w);
        }
    }
    HermitianOperator::new(h)
}

/// Hermitian density operator, either a full unit-trace state or the traceless
/// deviation part. Polarizations here are relative units (the carbon
/// convention `eps_C = 1` is typical), so deviation entries need not be small.
#[derive(Debug, Clone)]
pub struct DensityState {
    matrix: CMatrix,
    mode: DensityMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityMode {
    Full,
    Deviation,
}

impl DensityState {
    pub fn full(matrix: CMatrix) -> Result<Self> {
        let tr = algebra::trace(&matrix);
        if (tr - C64::new(1.0, 0.0)).norm() >= 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "full-mode state must have unit trace, got {tr}"
            )));
        }
        let h = HermitianOperator::new(matrix)?;
        let min = h
            .eigenvalues()?
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b));
        if min < -1e-10 {
            return Err(Error::InvalidArgument(format!(
                "full-mode state has negative eigenvalue {min:.3e}"
            )));
        }
        Ok(Self {
            matrix: h.into_matrix(),
            mode: DensityMode::Full,
        })
    }

    pub fn deviation(matrix: CMatrix) -> Result<Self> {
        let tr = algebra::trace(&matrix);
        if tr.norm() >= 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "deviation-mode state must be traceless, got trace {tr}"
            )));
        }
        let h = HermitianOperator::new(matrix)?;
        Ok(Self {
            matrix: h.into_matrix(),
            mode: DensityMode::Deviation,
        })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn mode(&self) -> DensityMode {
        self.mode
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Full-mode reconstruction `1/d + scale * deviation`. The caller picks a
    /// scale small enough that the result is positive semidefinite.
    pub fn to_full(&self, scale: f64) -> Result<Self> {
        match self.mode {
            DensityMode::Full => Ok(self.clone()),
            DensityMode::Deviation => {
                let d = self.dim() as f64;
                let m = algebra::identity(self.dim()).mapv(|z| z / d)
                    + self.matrix.mapv(|z| z * scale);
                Self::full(m)
            }
        }
    }

    /// Full-mode matrix without positivity validation; usable with relative
    /// polarization units where `1/d + deviation` is not a physical state but
    /// every trace formula stays linear and exact.
    pub fn full_matrix_unchecked(&self) -> CMatrix {
        match self.mode {
            DensityMode::Full => self.matrix.clone(),
            DensityMode::Deviation => {
                let d = self.dim() as f64;
                algebra::identity(self.dim()).mapv(|z| z / d) + &self.matrix
            }
        }
    }
}

/// Thermal deviation state `sum_k eps_k sum_{j in k} Iz_j` (identity dropped).
pub fn build_thermal_state(
    sys: &SpinSystem,
    polarizations: &[(String, f64)],
) -> Result<DensityState> {
    let mut eps = vec![None; sys.channels().len()];
    for (label, e) in polarizations {
        let ch = sys.channel_index(label)?;
        eps[ch] = Some(*e);
    }
    for (ch, e) in eps.iter().enumerate() {
        if e.is_none() {
            return Err(Error::InvalidArgument(format!(
                "missing polarization entry for species '{}'",
                sys.channels()[ch].label
            )));
        }
    }
    let dim = sys.dim();
    let mut m = CMatrix::zeros((dim, dim));
    for (ch, e) in eps.iter().enumerate() {
        let e = e.unwrap();
        if e == 0.0 {
            continue;
        }
        let diag = collective_z_diagonal(sys, ch);
        for b in 0..dim {
            m[[b, b]] += C64::new(e * diag[b], 0.0);
        }
    }
    DensityState::deviation(m)
}

/// The singlet ket on a two-spin space: `(|ud> - |du>) / sqrt(2)`.
pub fn singlet_ket() -> Array1<C64> {
    let s = 1.0 / 2.0_f64.sqrt();
    array![
        C64::new(0.0, 0.0),
        C64::new(s, 0.0),
        C64::new(-s, 0.0),
        C64::new(0.0, 0.0)
    ]
}

/// Embed a two-site operator onto sites `(a, b)` of an `nspins` system,
/// identity elsewhere. The two-site operator's first factor acts on `a`.
pub fn embed_two_site(op4: &CMatrix, nspins: usize, a: usize, b: usize) -> CMatrix {
    assert_eq!(op4.dim(), (4, 4));
    assert!(a < nspins && b < nspins && a != b);
    let dim = 1usize << nspins;
    let bit_a = nspins - 1 - a;
    let bit_b = nspins - 1 - b;
    let mut out = CMatrix::zeros((dim, dim));
    for r in 0..dim {
        let ra = (r >> bit_a) & 1;
        let rb = (r >> bit_b) & 1;
        let r2 = (ra << 1) | rb;
        let base = r & !(1 << bit_a) & !(1 << bit_b);
        for c2 in 0..4usize {
            let v = op4[[r2, c2]];
            if v == C64::new(0.0, 0.0) {
                continue;
            }
            let ca = (c2 >> 1) & 1;
            let cb = c2 & 1;
            let c_idx = base | (ca << bit_a) | (cb << bit_b);
            out[[r, c_idx]] = v;
        }
    }
    out
}

/// `|S0><S0|` on the singlet pair, tensored with identity on all other spins.
/// Trace is `2^(N-2)`.
pub fn build_singlet_projector(sys: &SpinSystem) -> Result<HermitianOperator> {
    let (a, b) = sys.singlet_pair();
    let ket = singlet_ket();
    let mut proj4 = CMatrix::zeros((4, 4));
    for i in 0..4 {
        for j in 0..4 {
            proj4[[i, j]] = ket[i] * ket[j].conj();
        }
    }
    HermitianOperator::new(embed_two_site(&proj4, sys.nspins(), a, b))
}

/// Outcome of the z-commutation check that underpins the diagonal-phase trick.
#[derive(Debug, Clone)]
pub struct ZCommutationReport {
    /// `(channel label, ||[H0, exp(-i pi/2 Iz_k)]||_max)` per channel.
    pub channel_norms: Vec<(String, f64)>,
    /// Couplings that break the commutation (isotropic across species).
    pub offending_couplings: Vec<String>,
    pub tolerance: f64,
}

impl ZCommutationReport {
    pub fn passed(&self) -> bool {
        self.channel_norms.iter().all(|(_, n)| *n < self.tolerance)
    }
}

/// Checks `[H0, exp(-i phi Iz_k)] = 0` at `phi = pi/2` for every channel.
/// The phase-rotation synthesis of arbitrary bang phases is exact iff this
/// holds; isotropic couplings across species break it.
pub fn validate_z_commutation(sys: &SpinSystem) -> Result<ZCommutationReport> {
    let tolerance = 1e-9;
    let h0 = build_internal_hamiltonian(sys)?;
    let dim = sys.dim();
    let phi = std::f64::consts::FRAC_PI_2;
    let mut channel_norms = Vec::new();
    for (ch, chan) in sys.channels().iter().enumerate() {
        let gen = collective_z_diagonal(sys, ch);
        let z: Array1<C64> = gen.mapv(|d| C64::new(0.0, -phi * d).exp());
        // [H0, Z] with diagonal Z: entry (i,j) is H_ij (z_j - z_i).
        let mut worst = 0.0_f64;
        let hm = h0.matrix();
        for i in 0..dim {
            for j in 0..dim {
                let v = hm[[i, j]] * (z[j] - z[i]);
                worst = worst.max(v.norm());
            }
        }
        channel_norms.push((chan.label.clone(), worst));
    }
    let mut offending_couplings = Vec::new();
    for c in sys.couplings() {
        if c.form == CouplingForm::Isotropic
            && sys.sites()[c.site_a].channel != sys.sites()[c.site_b].channel
            && c.j_hz != 0.0
        {
            offending_couplings.push(format!(
                "isotropic J({}, {}) = {} Hz across species {} / {}",
                c.site_a,
                c.site_b,
                c.j_hz,
                sys.channels()[sys.sites()[c.site_a].channel].label,
                sys.channels()[sys.sites()[c.site_b].channel].label
            ));
        }
    }
    Ok(ZCommutationReport {
        channel_norms,
        offending_couplings,
        tolerance,
    })
}

/// Inverse of `Q = (3 eps_S + 1) / 4`: returns `eps_S = (4q - 1) / 3`.
/// `q` must lie in `[0, 1]` (full-mode overlap of a physical state).
pub fn singlet_order_from_q(q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!(
            "overlap q = {q} outside [0, 1]"
        )));
    }
    Ok((4.0 * q - 1.0) / 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{expectation, max_norm, max_norm_diff, trace};
    use approx::assert_abs_diff_eq;

    pub(crate) fn two_channel(
        offsets_c: (f64, f64),
        j_cc: f64,
        form: CouplingForm,
    ) -> SpinSystem {
        // Site 0: 1H at 0 Hz; sites 1,2: 13C pair.
        SpinSystem::new(
            vec![
                SpeciesChannel {
                    label: "1H".into(),
                    relative_gamma: 3.977,
                    rf_amplitude_hz: 250.0,
                },
                SpeciesChannel {
                    label: "13C".into(),
                    relative_gamma: 1.0,
                    rf_amplitude_hz: 250.0,
                },
            ],
            vec![
                SpinSite {
                    index: 0,
                    channel: 0,
                    offset_hz: 0.0,
                },
                SpinSite {
                    index: 1,
                    channel: 1,
                    offset_hz: offsets_c.0,
                },
                SpinSite {
                    index: 2,
                    channel: 1,
                    offset_hz: offsets_c.1,
                },
            ],
            vec![
                Coupling {
                    site_a: 1,
                    site_b: 2,
                    j_hz: j_cc,
                    form,
                },
                Coupling {
                    site_a: 0,
                    site_b: 1,
                    j_hz: 2.7,
                    form: CouplingForm::Weak,
                },
            ],
            (1, 2),
        )
        .unwrap()
    }

    fn single_spin(label: &str, offset: f64) -> SpinSystem {
        SpinSystem::new(
            vec![SpeciesChannel {
                label: label.into(),
                relative_gamma: 1.0,
                rf_amplitude_hz: 250.0,
            }],
            vec![
                SpinSite {
                    index: 0,
                    channel: 0,
                    offset_hz: offset,
                },
                SpinSite {
                    index: 1,
                    channel: 0,
                    offset_hz: offset,
                },
            ],
            vec![],
            (0, 1),
        )
        .unwrap()
    }

    #[test]
    fn collective_z_single_species() {
        let sys = single_spin("13C", 0.0);
        let op = build_collective_operator(&sys, "13C", Axis::Z).unwrap();
        // Two equivalent spins: diag(1, 0, 0, -1).
        let want = Array1::from(vec![1.0, 0.0, 0.0, -1.0]);
        for (i, w) in want.iter().enumerate() {
            assert_abs_diff_eq!(op.matrix()[[i, i]].re, w, epsilon = 1e-14);
        }
    }

    #[test]
    fn collective_x_spectrum() {
        let sys = single_spin("13C", 0.0);
        let op = build_collective_operator(&sys, "13C", Axis::X).unwrap();
        assert!((trace(op.matrix())).norm() < 1e-14);
        let mut evals = op.eigenvalues().unwrap().to_vec();
        evals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let want = [-1.0, 0.0, 0.0, 1.0];
        for (e, w) in evals.iter().zip(want.iter()) {
            assert_abs_diff_eq!(e, w, epsilon = 1e-12);
        }
    }

    #[test]
    fn collective_operators_commutator() {
        // [Ix, Iy] = i Iz for collective operators of one channel.
        let sys = two_channel((-25.0, 25.0), 12.7, CouplingForm::Weak);
        for label in ["1H", "13C"] {
            let x = build_collective_operator(&sys, label, Axis::X).unwrap();
            let y = build_collective_operator(&sys, label, Axis::Y).unwrap();
            let z = build_collective_operator(&sys, label, Axis::Z).unwrap();
            let comm = x.matrix().dot(y.matrix()) - y.matrix().dot(x.matrix());
            let want = z.matrix().mapv(|v| v * C64::new(0.0, 1.0));
            assert!(max_norm_diff(&comm, &want) < 1e-12);
        }
    }

    #[test]
    fn unknown_species_rejected() {
        let sys = single_spin("13C", 0.0);
        assert!(build_collective_operator(&sys, "19F", Axis::X).is_err());
    }

    #[test]
    fn hamiltonian_single_spin_offset() {
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
                    offset_hz: 100.0,
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
        let h = build_internal_hamiltonian(&sys).unwrap();
        // First spin at 100 Hz: energy contribution 2 pi 100 (+-1/2) on bit 0.
        let w = TWO_PI * 100.0 * 0.5;
        let diag: Vec<f64> = (0..4).map(|i| h.matrix()[[i, i]].re).collect();
        assert_abs_diff_eq!(diag[0], w, epsilon = 1e-9);
        assert_abs_diff_eq!(diag[1], w, epsilon = 1e-9);
        assert_abs_diff_eq!(diag[2], -w, epsilon = 1e-9);
        assert_abs_diff_eq!(diag[3], -w, epsilon = 1e-9);
    }

    #[test]
    fn hamiltonian_two_spin_hand_enumeration() {
        // Offsets +-nu/2, weak J: diagonal entries from the four basis states.
        let nu = 50.0;
        let j = 12.7;
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
                    offset_hz: nu / 2.0,
                },
                SpinSite {
                    index: 1,
                    channel: 0,
                    offset_hz: -nu / 2.0,
                },
            ],
            vec![Coupling {
                site_a: 0,
                site_b: 1,
                j_hz: j,
                form: CouplingForm::Weak,
            }],
            (0, 1),
        )
        .unwrap();
        let h = build_internal_hamiltonian(&sys).unwrap();
        // Hand oracle: basis |s0 s1> with s = +-1/2, E = 2pi(nu/2 s0 - nu/2 s1 + J s0 s1).
        let states = [(0.5, 0.5), (0.5, -0.5), (-0.5, 0.5), (-0.5, -0.5)];
        for (b, (s0, s1)) in states.iter().enumerate() {
            let want = TWO_PI * (nu / 2.0 * s0 - nu / 2.0 * s1 + j * s0 * s1);
            assert_abs_diff_eq!(h.matrix()[[b, b]].re, want, epsilon = 1e-9);
        }
        // Off-diagonals vanish for weak coupling.
        for i in 0..4 {
            for k in 0..4 {
                if i != k {
                    assert!(h.matrix()[[i, k]].norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn hamiltonian_hermitian_traceless() {
        let sys = two_channel((-116.7, 116.7), 12.7, CouplingForm::Isotropic);
        let h = build_internal_hamiltonian(&sys).unwrap();
        assert!(trace(h.matrix()).norm() < 1e-9);
        let x = build_collective_operator(&sys, "13C", Axis::X).unwrap();
        assert!(trace(x.matrix()).norm() < 1e-12);
    }

    #[test]
    fn thermal_state_examples() {
        let sys = two_channel((-25.0, 25.0), 12.7, CouplingForm::Weak);
        let rho = build_thermal_state(&sys, &[("1H".into(), 4.0), ("13C".into(), 1.0)]).unwrap();
        // 4 Iz_H + Iz_C1 + Iz_C2, all diagonal.
        let n = sys.nspins();
        let want = site_operator(n, 0, Axis::Z).mapv(|z| z * 4.0)
            + site_operator(n, 1, Axis::Z)
            + site_operator(n, 2, Axis::Z);
        assert!(max_norm_diff(rho.matrix(), &want) < 1e-14);
        assert_eq!(rho.mode(), DensityMode::Deviation);

        let zero = build_thermal_state(&sys, &[("1H".into(), 0.0), ("13C".into(), 0.0)]).unwrap();
        assert!(max_norm(zero.matrix()) == 0.0);

        assert!(build_thermal_state(&sys, &[("1H".into(), 4.0)]).is_err());
    }

    #[test]
    fn thermal_single_carbon_is_iz() {
        let sys = single_spin("13C", 0.0);
        let rho = build_thermal_state(&sys, &[("13C".into(), 1.0)]).unwrap();
        let want = site_operator(2, 0, Axis::Z) + site_operator(2, 1, Axis::Z);
        assert!(max_norm_diff(rho.matrix(), &want) < 1e-14);
    }

    #[test]
    fn singlet_projector_two_spins() {
        let sys = single_spin("13C", 0.0);
        let p = build_singlet_projector(&sys).unwrap();
        let m = p.matrix();
        assert_abs_diff_eq!(m[[1, 1]].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(m[[2, 2]].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(m[[1, 2]].re, -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(m[[2, 1]].re, -0.5, epsilon = 1e-15);
        assert!((trace(m) - C64::new(1.0, 0.0)).norm() < 1e-14);
        // Idempotent.
        assert!(max_norm_diff(&m.dot(m), m) < 1e-14);
    }

    #[test]
    fn singlet_projector_trace_three_spins() {
        let sys = two_channel((-25.0, 25.0), 12.7, CouplingForm::Weak);
        let p = build_singlet_projector(&sys).unwrap();
        assert!((trace(p.matrix()) - C64::new(2.0, 0.0)).norm() < 1e-13);
        assert!(max_norm_diff(&p.matrix().dot(p.matrix()), p.matrix()) < 1e-13);
    }

    #[test]
    fn thermal_q_is_quarter() {
        // Tr[dev * P] = 0: the singlet carries no z-projection.
        let sys = two_channel((-25.0, 25.0), 12.7, CouplingForm::Isotropic);
        let rho = build_thermal_state(&sys, &[("1H".into(), 4.0), ("13C".into(), 1.0)]).unwrap();
        let p = build_singlet_projector(&sys).unwrap();
        let q_dev = expectation(rho.matrix(), p.matrix()).unwrap();
        assert_abs_diff_eq!(q_dev, 0.0, epsilon = 1e-13);
        let q_full =
            expectation(&rho.full_matrix_unchecked(), p.matrix()).unwrap();
        assert_abs_diff_eq!(q_full, 0.25, epsilon = 1e-13);
    }

    #[test]
    fn z_commutation_weak_passes() {
        let sys = two_channel((-116.7, 116.7), 12.7, CouplingForm::Weak);
        let rep = validate_z_commutation(&sys).unwrap();
        assert!(rep.passed(), "norms: {:?}", rep.channel_norms);
    }

    #[test]
    fn z_commutation_isotropic_intra_species_passes() {
        let sys = two_channel((-116.7, 116.7), 12.7, CouplingForm::Isotropic);
        let rep = validate_z_commutation(&sys).unwrap();
        assert!(rep.passed(), "norms: {:?}", rep.channel_norms);
        assert!(rep.offending_couplings.is_empty());
    }

    #[test]
    fn z_commutation_isotropic_hetero_fails() {
        // Two-spin heteronuclear system with isotropic coupling.
        let sys = SpinSystem::new(
            vec![
                SpeciesChannel {
                    label: "1H".into(),
                    relative_gamma: 3.977,
                    rf_amplitude_hz: 250.0,
                },
                SpeciesChannel {
                    label: "13C".into(),
                    relative_gamma: 1.0,
                    rf_amplitude_hz: 250.0,
                },
            ],
            vec![
                SpinSite {
                    index: 0,
                    channel: 0,
                    offset_hz: 10.0,
                },
                SpinSite {
                    index: 1,
                    channel: 1,
                    offset_hz: -10.0,
                },
                SpinSite {
                    index: 2,
                    channel: 1,
                    offset_hz: 10.0,
                },
            ],
            vec![Coupling {
                site_a: 0,
                site_b: 1,
                j_hz: 5.0,
                form: CouplingForm::Isotropic,
            }],
            (1, 2),
        )
        .unwrap();
        let rep = validate_z_commutation(&sys).unwrap();
        assert!(!rep.passed());
        assert_eq!(rep.offending_couplings.len(), 1);
    }

    #[test]
    fn singlet_order_from_q_values() {
        assert_abs_diff_eq!(singlet_order_from_q(1.0).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(singlet_order_from_q(0.25).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            singlet_order_from_q(0.8125).unwrap(),
            0.75,
            epsilon = 1e-15
        );
        assert!(singlet_order_from_q(1.5).is_err());
        assert!(singlet_order_from_q(-0.1).is_err());
    }

    #[test]
    fn pair_species_mismatch_rejected() {
        let r = SpinSystem::new(
            vec![
                SpeciesChannel {
                    label: "1H".into(),
                    relative_gamma: 3.977,
                    rf_amplitude_hz: 250.0,
                },
                SpeciesChannel {
                    label: "13C".into(),
                    relative_gamma: 1.0,
                    rf_amplitude_hz: 250.0,
                },
            ],
            vec![
                SpinSite {
                    index: 0,
                    channel: 0,
                    offset_hz: 0.0,
                },
                SpinSite {
                    index: 1,
                    channel: 1,
                    offset_hz: 0.0,
                },
            ],
            vec![],
            (0, 1),
        );
        assert!(r.is_err());
    }
}
