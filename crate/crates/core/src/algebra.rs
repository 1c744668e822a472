//! Dense complex-matrix kernel: Hermitian exponentiation, conjugation,
//! expectation values, partial trace, and spectral bounds.
//!
//! Tensor ordering convention: spin index 0 is the most significant qubit in
//! the Zeeman product basis. For basis state `b` of an `n`-spin system, the
//! state of spin `i` is bit `(b >> (n - 1 - i)) & 1` with `0 = up`, `1 = down`.

use ndarray::prelude::*;
use ndarray_linalg::{Eigh, EigValsh, UPLO};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Numerical tolerances, centralized so every check in the crate pulls from
/// one record. Override per run if needed.
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    /// Hermiticity check at operator construction.
    pub hermiticity: f64,
    /// Unitarity check on propagators.
    pub unitarity: f64,
    /// Accumulated unitarity for long segment products.
    pub unitarity_accumulated: f64,
    /// Unit-modulus check for diagonal phase operators.
    pub phase_modulus: f64,
    /// Allowed imaginary residue in traces of Hermitian products.
    pub imag_trace: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            hermiticity: 1e-12,
            unitarity: 1e-10,
            unitarity_accumulated: 1e-8,
            phase_modulus: 1e-12,
            imag_trace: 1e-10,
        }
    }
}

pub type CMatrix = Array2<C64>;

pub fn identity(dim: usize) -> CMatrix {
    Array2::eye(dim).mapv(|x: f64| C64::new(x, 0.0))
}

pub fn adjoint(m: &CMatrix) -> CMatrix {
    m.t().mapv(|z| z.conj())
}

/// Max-norm of a matrix (largest absolute entry).
pub fn max_norm(m: &CMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// Max-norm distance between two matrices.
pub fn max_norm_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).norm()))
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ra, ca) = a.dim();
    let (rb, cb) = b.dim();
    let mut out = CMatrix::zeros((ra * rb, ca * cb));
    for i in 0..ra {
        for j in 0..ca {
            let aij = a[[i, j]];
            if aij == C64::new(0.0, 0.0) {
                continue;
            }
            let mut block = out.slice_mut(s![i * rb..(i + 1) * rb, j * cb..(j + 1) * cb]);
            block.assign(&b.mapv(|z| z * aij));
        }
    }
    out
}

pub fn trace(m: &CMatrix) -> C64 {
    m.diag().sum()
}

fn hermiticity_defect(m: &CMatrix) -> f64 {
    let (r, c) = m.dim();
    assert_eq!(r, c);
    let mut worst = 0.0_f64;
    for i in 0..r {
        for j in i..c {
            worst = worst.max((m[[i, j]] - m[[j, i]].conj()).norm());
        }
    }
    worst
}

/// A Hermitian operator. Hamiltonians carry units of rad/s; observables are
/// dimensionless. Hermiticity is enforced at construction.
#[derive(Debug, Clone)]
pub struct HermitianOperator {
    matrix: CMatrix,
}

impl HermitianOperator {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        Self::with_tolerance(matrix, Tolerances::default().hermiticity)
    }

    pub fn with_tolerance(matrix: CMatrix, tol: f64) -> Result<Self> {
        let norm = hermiticity_defect(&matrix);
        if norm >= tol {
            return Err(Error::NotHermitian { norm, tol });
        }
        Ok(Self { matrix })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    /// Real eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Result<Array1<f64>> {
        self.matrix
            .eigvalsh(UPLO::Lower)
            .map_err(|e| Error::Eigensolver(e.to_string()))
    }
}

/// A unitary propagator `exp(-i H t)` with its evolution duration in seconds.
#[derive(Debug, Clone)]
pub struct UnitaryPropagator {
    matrix: CMatrix,
    duration: f64,
}

impl UnitaryPropagator {
    pub fn new(matrix: CMatrix, duration: f64) -> Result<Self> {
        Self::with_tolerance(matrix, duration, Tolerances::default().unitarity)
    }

    pub fn with_tolerance(matrix: CMatrix, duration: f64, tol: f64) -> Result<Self> {
        let norm = unitarity_defect(&matrix);
        if norm >= tol {
            return Err(Error::NotUnitary { norm, tol });
        }
        Ok(Self { matrix, duration })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn adjoint(&self) -> Self {
        Self {
            matrix: adjoint(&self.matrix),
            duration: self.duration,
        }
    }
}

/// ||U^dag U - 1||_max.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let prod = adjoint(u).dot(u);
    max_norm_diff(&prod, &identity(u.nrows()))
}

/// Diagonal of `exp(-i phi D)` for a real diagonal generator `D`; every entry
/// has unit modulus.
#[derive(Debug, Clone)]
pub struct DiagonalPhaseOperator {
    diagonal: Array1<C64>,
}

impl DiagonalPhaseOperator {
    /// Build from a real diagonal generator: entries `exp(-i phi d_j)`.
    pub fn from_generator(generator: &Array1<f64>, phi: f64) -> Self {
        let diagonal = generator.mapv(|d| (C64::new(0.0, -phi * d)).exp());
        Self { diagonal }
    }

    pub fn new(diagonal: Array1<C64>) -> Result<Self> {
        let tol = Tolerances::default().phase_modulus;
        for z in diagonal.iter() {
            if (z.norm() - 1.0).abs() >= tol {
                return Err(Error::InvalidArgument(format!(
                    "phase entry has modulus {:.12} != 1",
                    z.norm()
                )));
            }
        }
        Ok(Self { diagonal })
    }

    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }

    pub fn diagonal(&self) -> &Array1<C64> {
        &self.diagonal
    }

    /// Z M Z^dag by row/column scaling, O(d^2).
    pub fn conjugate(&self, m: &CMatrix) -> CMatrix {
        let d = self.dim();
        assert_eq!(m.nrows(), d);
        let mut out = m.clone();
        for i in 0..d {
            let zi = self.diagonal[i];
            for j in 0..d {
                out[[i, j]] *= zi * self.diagonal[j].conj();
            }
        }
        out
    }

    /// Z^dag M Z, the inverse conjugation.
    pub fn conjugate_adjoint(&self, m: &CMatrix) -> CMatrix {
        let d = self.dim();
        assert_eq!(m.nrows(), d);
        let mut out = m.clone();
        for i in 0..d {
            let zi = self.diagonal[i].conj();
            for j in 0..d {
                out[[i, j]] *= zi * self.diagonal[j];
            }
        }
        out
    }

    /// Scale rows of `m` by the phase diagonal (computes `Z m`).
    pub fn scale_rows(&self, m: &mut CMatrix) {
        for (i, mut row) in m.rows_mut().into_iter().enumerate() {
            let zi = self.diagonal[i];
            row.mapv_inplace(|z| z * zi);
        }
    }

    /// Scale rows of `m` by the conjugate diagonal (computes `Z^dag m`).
    pub fn scale_rows_adjoint(&self, m: &mut CMatrix) {
        for (i, mut row) in m.rows_mut().into_iter().enumerate() {
            let zi = self.diagonal[i].conj();
            row.mapv_inplace(|z| z * zi);
        }
    }
}

/// `exp(-i H t)` via eigendecomposition of the Hermitian `H` (exact up to
/// eigensolver error, so the result is unitary to machine precision).
/// Eigendecomposition of a Hermitian matrix with the eigenvectors verified
/// against the input. Depending on memory layout, some LAPACK bindings hand
/// back the eigenvectors of the conjugated matrix for complex row-major
/// input (invisible on real-symmetric matrices); this is caught by a
/// residual check on `A V = V diag(lambda)` and corrected.
pub fn eigh_hermitian(m: &CMatrix) -> Result<(Array1<f64>, CMatrix)> {
    let (evals, evecs) = m
        .eigh(UPLO::Lower)
        .map_err(|e| Error::Eigensolver(e.to_string()))?;
    let scale = max_norm(m).max(1.0) * m.nrows() as f64;
    let residual = |v: &CMatrix| -> f64 {
        let av = m.dot(v);
        let mut r = 0.0_f64;
        for (j, lam) in evals.iter().enumerate() {
            for i in 0..m.nrows() {
                r = r.max((av[[i, j]] - v[[i, j]] * lam).norm());
            }
        }
        r
    };
    let tol = 1e-10 * scale;
    if residual(&evecs) < tol {
        return Ok((evals, evecs));
    }
    let conj = evecs.mapv(|z| z.conj());
    if residual(&conj) < tol {
        return Ok((evals, conj));
    }
    Err(Error::Eigensolver(format!(
        "eigendecomposition failed the residual check (tolerance {tol:.3e})"
    )))
}

pub fn expm_hermitian(h: &HermitianOperator, t: f64) -> Result<UnitaryPropagator> {
    if t < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "negative evolution time {t}"
        )));
    }
    let (evals, evecs) = eigh_hermitian(h.matrix())?;
    // U = V diag(e^{-i lambda t}) V^dag
    let phases = evals.mapv(|lam| C64::new(0.0, -lam * t).exp());
    let mut scaled = evecs.clone();
    for (mut col, ph) in scaled.columns_mut().into_iter().zip(phases.iter()) {
        col.mapv_inplace(|z| z * ph);
    }
    let u = scaled.dot(&adjoint(&evecs));
    UnitaryPropagator::new(u, t)
}

/// U A U^dag.
pub fn conjugate(u: &CMatrix, a: &CMatrix) -> Result<CMatrix> {
    if u.nrows() != a.nrows() {
        return Err(Error::DimMismatch {
            left: u.nrows(),
            right: a.nrows(),
        });
    }
    Ok(u.dot(a).dot(&adjoint(u)))
}

/// Tr[rho O] for Hermitian inputs; the imaginary residue of the trace must be
/// below tolerance and is discarded after the check.
pub fn expectation(rho: &CMatrix, obs: &CMatrix) -> Result<f64> {
    expectation_with_tolerance(rho, obs, Tolerances::default().imag_trace)
}

pub fn expectation_with_tolerance(rho: &CMatrix, obs: &CMatrix, tol: f64) -> Result<f64> {
    if rho.nrows() != obs.nrows() {
        return Err(Error::DimMismatch {
            left: rho.nrows(),
            right: obs.nrows(),
        });
    }
    // Tr[rho O] = sum_ij rho_ij O_ji without forming the product.
    let mut tr = C64::new(0.0, 0.0);
    for i in 0..rho.nrows() {
        for j in 0..rho.ncols() {
            tr += rho[[i, j]] * obs[[j, i]];
        }
    }
    if tr.im.abs() >= tol {
        return Err(Error::ImaginaryTrace {
            residue: tr.im.abs(),
            tol,
        });
    }
    Ok(tr.re)
}

/// Reduced density matrix on the kept spins (ordering follows `keep`).
///
/// `nspins` fixes the tensor layout; spin 0 is the most significant qubit.
pub fn partial_trace(rho: &CMatrix, nspins: usize, keep: &[usize]) -> Result<CMatrix> {
    let dim = 1usize << nspins;
    if rho.nrows() != dim {
        return Err(Error::DimMismatch {
            left: rho.nrows(),
            right: dim,
        });
    }
    let mut seen = vec![false; nspins];
    for &k in keep {
        if k >= nspins {
            return Err(Error::InvalidIndex {
                index: k,
                nspins,
            });
        }
        if seen[k] {
            return Err(Error::InvalidArgument(format!(
                "duplicate keep index {k}"
            )));
        }
        seen[k] = true;
    }
    let traced: Vec<usize> = (0..nspins).filter(|s| !seen[*s]).collect();
    let kd = 1usize << keep.len();
    let td = 1usize << traced.len();

    // Bit position of spin i in a full basis index (spin 0 most significant).
    let bitpos = |spin: usize| nspins - 1 - spin;

    let mut out = CMatrix::zeros((kd, kd));
    for r in 0..kd {
        for c in 0..kd {
            let mut base_r = 0usize;
            let mut base_c = 0usize;
            for (pos, &spin) in keep.iter().enumerate() {
                let rb = (r >> (keep.len() - 1 - pos)) & 1;
                let cb = (c >> (keep.len() - 1 - pos)) & 1;
                base_r |= rb << bitpos(spin);
                base_c |= cb << bitpos(spin);
            }
            let mut acc = C64::new(0.0, 0.0);
            for e in 0..td {
                let mut idx_r = base_r;
                let mut idx_c = base_c;
                for (pos, &spin) in traced.iter().enumerate() {
                    let eb = (e >> (traced.len() - 1 - pos)) & 1;
                    idx_r |= eb << bitpos(spin);
                    idx_c |= eb << bitpos(spin);
                }
                acc += rho[[idx_r, idx_c]];
            }
            out[[r, c]] = acc;
        }
    }
    Ok(out)
}

/// Upper bound on `Tr[U rho U^dag P]` over all unitaries `U`: the descending
/// spectra of both operators paired term by term (von Neumann trace
/// inequality). Used as the optimizer's fitness ceiling.
pub fn majorization_bound(rho: &HermitianOperator, p: &HermitianOperator) -> Result<f64> {
    if rho.dim() != p.dim() {
        return Err(Error::DimMismatch {
            left: rho.dim(),
            right: p.dim(),
        });
    }
    let mut er = rho.eigenvalues()?.to_vec();
    let mut ep = p.eigenvalues()?.to_vec();
    er.sort_by(|a, b| b.partial_cmp(a).unwrap());
    ep.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(er.iter().zip(ep.iter()).map(|(a, b)| a * b).sum())
}
