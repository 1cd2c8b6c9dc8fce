//! Operators and states on the transmon ⊗ resonator Hilbert space.
//!
//! Flat indices are transmon-major: `index = transmon_level * n_resonator + photons`.

use alloc::vec::Vec;

use num_complex::Complex64 as C64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, ONE, ZERO};

/// Level counts of the two factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CompositeBasis {
    pub n_transmon: usize,
    pub n_resonator: usize,
}

impl Default for CompositeBasis {
    fn default() -> Self {
        Self { n_transmon: 6, n_resonator: 3 }
    }
}

impl CompositeBasis {
    pub fn new(n_transmon: usize, n_resonator: usize) -> Result<Self> {
        if n_transmon < 1 || n_resonator < 1 {
            return Err(Error::InvalidParameter {
                field: "n_transmon/n_resonator",
                reason: "level counts must be at least 1".into(),
            });
        }
        Ok(Self { n_transmon, n_resonator })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n_transmon * self.n_resonator
    }

    #[inline]
    pub fn index(&self, transmon: usize, photons: usize) -> usize {
        debug_assert!(transmon < self.n_transmon && photons < self.n_resonator);
        transmon * self.n_resonator + photons
    }

    /// Inverse of [`CompositeBasis::index`].
    #[inline]
    pub fn levels(&self, index: usize) -> (usize, usize) {
        (index / self.n_resonator, index % self.n_resonator)
    }

    /// Basis ket |transmon, photons⟩ as a column vector.
    pub fn ket(&self, transmon: usize, photons: usize) -> Vec<C64> {
        let mut v = alloc::vec![ZERO; self.dim()];
        v[self.index(transmon, photons)] = ONE;
        v
    }

    /// Short label such as `g0`, `f1`, `h2`; levels above `h` are numbered `q4`, `q5`, ...
    pub fn label(&self, index: usize) -> alloc::string::String {
        let (q, n) = self.levels(index);
        let name = match q {
            0 => alloc::string::String::from("g"),
            1 => "e".into(),
            2 => "f".into(),
            3 => "h".into(),
            k => alloc::format!("q{k}"),
        };
        alloc::format!("{name}{n}")
    }
}

/// Dense operator tied to a basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    pub basis: CompositeBasis,
    pub matrix: CMatrix,
}

impl Operator {
    pub fn new(basis: CompositeBasis, matrix: CMatrix) -> Result<Self> {
        if matrix.dim() != basis.dim() {
            return Err(Error::DimensionMismatch { expected: basis.dim(), found: matrix.dim() });
        }
        Ok(Self { basis, matrix })
    }

    pub fn identity(basis: CompositeBasis) -> Self {
        Self { basis, matrix: CMatrix::identity(basis.dim()) }
    }

    pub fn dagger(&self) -> Self {
        Self { basis: self.basis, matrix: self.matrix.dagger() }
    }

    pub fn compose(&self, other: &Self) -> Self {
        Self { basis: self.basis, matrix: self.matrix.matmul(&other.matrix) }
    }

    /// Lifts a transmon-only operator to the composite space.
    pub fn from_transmon(basis: CompositeBasis, op: &CMatrix) -> Result<Self> {
        if op.dim() != basis.n_transmon {
            return Err(Error::DimensionMismatch { expected: basis.n_transmon, found: op.dim() });
        }
        Ok(Self { basis, matrix: op.kron(&CMatrix::identity(basis.n_resonator)) })
    }

    /// Lifts a resonator-only operator to the composite space.
    pub fn from_resonator(basis: CompositeBasis, op: &CMatrix) -> Result<Self> {
        if op.dim() != basis.n_resonator {
            return Err(Error::DimensionMismatch { expected: basis.n_resonator, found: op.dim() });
        }
        Ok(Self { basis, matrix: CMatrix::identity(basis.n_transmon).kron(op) })
    }
}

/// Truncated ladder lowering matrix with ⟨k−1|·|k⟩ = √k.
pub fn ladder(n: usize) -> CMatrix {
    let mut m = CMatrix::zeros(n);
    for k in 1..n {
        m[(k - 1, k)] = C64::new((k as f64).sqrt(), 0.0);
    }
    m
}

pub fn resonator_annihilation(basis: CompositeBasis) -> Operator {
    Operator::from_resonator(basis, &ladder(basis.n_resonator)).expect("basis-sized ladder")
}

pub fn transmon_annihilation(basis: CompositeBasis) -> Operator {
    Operator::from_transmon(basis, &ladder(basis.n_transmon)).expect("basis-sized ladder")
}

/// Projector |k⟩⟨k| on the transmon, identity on the resonator.
pub fn transmon_projector(basis: CompositeBasis, level: usize) -> Operator {
    let mut p = CMatrix::zeros(basis.n_transmon);
    p[(level, level)] = ONE;
    Operator::from_transmon(basis, &p).expect("basis-sized projector")
}

/// |to⟩⟨from| on the transmon, identity on the resonator.
pub fn transmon_transition(basis: CompositeBasis, to: usize, from: usize) -> Operator {
    let mut p = CMatrix::zeros(basis.n_transmon);
    p[(to, from)] = ONE;
    Operator::from_transmon(basis, &p).expect("basis-sized transition")
}

/// Density matrix on the composite basis.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub basis: CompositeBasis,
    pub rho: CMatrix,
}

impl State {
    /// Wraps a matrix after checking the density-matrix invariants.
    pub fn new(basis: CompositeBasis, rho: CMatrix) -> Result<Self> {
        if rho.dim() != basis.dim() {
            return Err(Error::DimensionMismatch { expected: basis.dim(), found: rho.dim() });
        }
        let s = Self { basis, rho };
        s.validate()?;
        Ok(s)
    }

    /// Wraps without validation; used on the integration hot path.
    pub fn new_unchecked(basis: CompositeBasis, rho: CMatrix) -> Self {
        Self { basis, rho }
    }

    pub fn pure(basis: CompositeBasis, psi: &[C64]) -> Result<Self> {
        if psi.len() != basis.dim() {
            return Err(Error::DimensionMismatch { expected: basis.dim(), found: psi.len() });
        }
        let norm = linalg::inner(psi, psi).re.sqrt();
        if norm <= 0.0 {
            return Err(Error::InvalidParameter { field: "psi", reason: "zero vector".into() });
        }
        let v: Vec<C64> = psi.iter().map(|x| x / norm).collect();
        Ok(Self { basis, rho: CMatrix::outer(&v, &v) })
    }

    pub fn basis_state(basis: CompositeBasis, transmon: usize, photons: usize) -> Self {
        let v = basis.ket(transmon, photons);
        Self { basis, rho: CMatrix::outer(&v, &v) }
    }

    /// ρ_q ⊗ ρ_r.
    pub fn product(basis: CompositeBasis, rho_q: &CMatrix, rho_r: &CMatrix) -> Result<Self> {
        if rho_q.dim() != basis.n_transmon {
            return Err(Error::DimensionMismatch { expected: basis.n_transmon, found: rho_q.dim() });
        }
        if rho_r.dim() != basis.n_resonator {
            return Err(Error::DimensionMismatch { expected: basis.n_resonator, found: rho_r.dim() });
        }
        Ok(Self { basis, rho: rho_q.kron(rho_r) })
    }

    pub fn validate(&self) -> Result<()> {
        if self.rho.hermiticity_error() > 1e-10 {
            return Err(Error::InvalidParameter { field: "rho", reason: "not Hermitian".into() });
        }
        if (self.rho.trace().re - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidParameter { field: "rho", reason: "trace differs from 1".into() });
        }
        if linalg::min_eigenvalue(&self.rho) < -1e-8 {
            return Err(Error::InvalidParameter { field: "rho", reason: "negative eigenvalue".into() });
        }
        Ok(())
    }

    pub fn trace(&self) -> f64 {
        self.rho.trace().re
    }

    pub fn population(&self, transmon: usize, photons: usize) -> f64 {
        let i = self.basis.index(transmon, photons);
        self.rho[(i, i)].re
    }

    /// Total population of a transmon level, summed over photon number.
    pub fn transmon_population(&self, level: usize) -> f64 {
        (0..self.basis.n_resonator).map(|n| self.population(level, n)).sum()
    }
}

/// Tr(op · ρ).
pub fn embed_and_expect(op: &Operator, state: &State) -> Result<C64> {
    if op.basis != state.basis {
        return Err(Error::DimensionMismatch { expected: state.basis.dim(), found: op.basis.dim() });
    }
    Ok(op.matrix.trace_product(&state.rho))
}

/// Reduced density matrix of the transmon.
pub fn partial_trace_transmon(state: &State) -> CMatrix {
    let b = state.basis;
    let mut out = CMatrix::zeros(b.n_transmon);
    for q1 in 0..b.n_transmon {
        for q2 in 0..b.n_transmon {
            let mut acc = ZERO;
            for n in 0..b.n_resonator {
                acc += state.rho[(b.index(q1, n), b.index(q2, n))];
            }
            out[(q1, q2)] = acc;
        }
    }
    out
}

/// Reduced density matrix of the resonator.
pub fn partial_trace_resonator(state: &State) -> CMatrix {
    let b = state.basis;
    let mut out = CMatrix::zeros(b.n_resonator);
    for n1 in 0..b.n_resonator {
        for n2 in 0..b.n_resonator {
            let mut acc = ZERO;
            for q in 0..b.n_transmon {
                acc += state.rho[(b.index(q, n1), b.index(q, n2))];
            }
            out[(n1, n2)] = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::eigh;
    use alloc::vec;

    fn basis() -> CompositeBasis {
        CompositeBasis::default()
    }

    #[test]
    fn index_map_is_a_bijection() {
        let b = basis();
        let mut seen = vec![false; b.dim()];
        for q in 0..b.n_transmon {
            for n in 0..b.n_resonator {
                let i = b.index(q, n);
                assert!(!seen[i]);
                seen[i] = true;
                assert_eq!(b.levels(i), (q, n));
            }
        }
        assert!(seen.into_iter().all(|s| s));
        assert_eq!(b.dim(), 18);
    }

    #[test]
    fn resonator_ladder_action() {
        let b = basis();
        let a = resonator_annihilation(b);
        let out = a.matrix.apply(&b.ket(0, 1));
        assert!((out[b.index(0, 0)] - ONE).norm() < 1e-15);
        let out = a.matrix.apply(&b.ket(0, 2));
        assert!((out[b.index(0, 1)].re - 2f64.sqrt()).abs() < 1e-15);
        let out = a.matrix.apply(&b.ket(0, 0));
        assert!(out.iter().all(|x| x.norm() == 0.0));
    }

    #[test]
    fn canonical_commutator_below_cutoff() {
        let b = basis();
        let a = resonator_annihilation(b);
        let comm = a.matrix.commutator(&a.matrix.dagger());
        for i in 0..b.dim() {
            for j in 0..b.dim() {
                let (_, ni) = b.levels(i);
                let (_, nj) = b.levels(j);
                if ni == b.n_resonator - 1 || nj == b.n_resonator - 1 {
                    continue;
                }
                let expected = if i == j { ONE } else { ZERO };
                assert!((comm[(i, j)] - expected).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn number_operator_spectra() {
        let b = basis();
        let a = resonator_annihilation(b);
        let n = a.dagger().compose(&a);
        let vals = eigh(&n.matrix).values;
        for (k, v) in vals.iter().enumerate() {
            // each photon number appears once per transmon level
            assert!((v - (k / b.n_transmon) as f64).abs() < 1e-12);
        }
        let bop = transmon_annihilation(b);
        let nq = bop.dagger().compose(&bop);
        let vals = eigh(&nq.matrix).values;
        for (k, v) in vals.iter().enumerate() {
            assert!((v - (k / b.n_resonator) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn transmon_lowering_from_f() {
        let b = basis();
        let bop = transmon_annihilation(b);
        let out = bop.matrix.apply(&b.ket(2, 0));
        assert!((out[b.index(1, 0)].re - 2f64.sqrt()).abs() < 1e-15);
        let out = bop.matrix.apply(&b.ket(0, 1));
        assert!(out.iter().all(|x| x.norm() == 0.0));
    }

    #[test]
    fn expectations() {
        let b = basis();
        let id = Operator::identity(b);
        let s = State::basis_state(b, 0, 1);
        assert!((embed_and_expect(&id, &s).unwrap() - ONE).norm() < 1e-15);
        let a = resonator_annihilation(b);
        let n = a.dagger().compose(&a);
        assert!((embed_and_expect(&n, &s).unwrap() - ONE).norm() < 1e-15);

        let mut psi = vec![ZERO; b.dim()];
        psi[b.index(0, 0)] = ONE;
        psi[b.index(2, 0)] = ONE;
        let s = State::pure(b, &psi).unwrap();
        let bq = transmon_annihilation(b);
        let nq = bq.dagger().compose(&bq);
        assert!((embed_and_expect(&nq, &s).unwrap() - ONE).norm() < 1e-14);
    }

    #[test]
    fn expectation_dimension_mismatch() {
        let s = State::basis_state(basis(), 0, 0);
        let op = Operator::identity(CompositeBasis::new(3, 3).unwrap());
        assert!(matches!(embed_and_expect(&op, &s), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn partial_traces() {
        let b = basis();
        let mixed = State::new(b, CMatrix::identity(b.dim()).scale_real(1.0 / b.dim() as f64)).unwrap();
        let red = partial_trace_transmon(&mixed);
        assert!(red.max_abs_diff(&CMatrix::identity(6).scale_real(1.0 / 6.0)) < 1e-15);

        let mut psi = vec![ZERO; b.dim()];
        psi[b.index(2, 0)] = ONE;
        psi[b.index(0, 1)] = ONE;
        let s = State::pure(b, &psi).unwrap();
        let red = partial_trace_transmon(&s);
        let mut expected = CMatrix::zeros(6);
        expected[(0, 0)] = C64::new(0.5, 0.0);
        expected[(2, 2)] = C64::new(0.5, 0.0);
        assert!(red.max_abs_diff(&expected) < 1e-15);
        assert!((red.trace().re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn state_validation_rejects_bad_trace() {
        let b = CompositeBasis::new(2, 2).unwrap();
        assert!(State::new(b, CMatrix::identity(4)).is_err());
    }
}
