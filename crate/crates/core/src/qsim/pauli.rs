use std::fmt;
use std::ops::Mul;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::QsimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    /// Whether the operator flips the computational-basis bit.
    pub fn flips(self) -> bool {
        matches!(self, Pauli::X | Pauli::Y)
    }

    /// Coefficient picked up by `|b⟩` under this operator (before the flip).
    pub fn diagonal_phase(self, bit_set: bool) -> Complex64 {
        match (self, bit_set) {
            (Pauli::I | Pauli::X, _) => Complex64::new(1.0, 0.0),
            (Pauli::Z, false) => Complex64::new(1.0, 0.0),
            (Pauli::Z, true) => Complex64::new(-1.0, 0.0),
            (Pauli::Y, false) => Complex64::new(0.0, 1.0),
            (Pauli::Y, true) => Complex64::new(0.0, -1.0),
        }
    }

    /// `self · rhs = i^k · P`, returned as `(k mod 4, P)`.
    pub fn compose(self, rhs: Pauli) -> (u8, Pauli) {
        use Pauli::*;
        match (self, rhs) {
            (I, p) | (p, I) => (0, p),
            (a, b) if a == b => (0, I),
            (X, Y) => (1, Z),
            (Y, Z) => (1, X),
            (Z, X) => (1, Y),
            (Y, X) => (3, Z),
            (Z, Y) => (3, X),
            (X, Z) => (3, Y),
            _ => unreachable!(),
        }
    }
}

impl fmt::Display for Pauli {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            Pauli::I => "I",
            Pauli::X => "X",
            Pauli::Y => "Y",
            Pauli::Z => "Z",
        };
        f.write_str(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> i8 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }
}

/// `±` times a product of single-qubit Paulis.
///
/// Factors are listed as `(qubit, Pauli)`. Repeated qubits are allowed and
/// multiplied in order; the result must come out Hermitian (no stray `±i`),
/// otherwise measuring it is rejected.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SignedPauliObservable {
    sign: Sign,
    factors: Vec<(usize, Pauli)>,
}

impl SignedPauliObservable {
    pub fn new(sign: Sign, factors: Vec<(usize, Pauli)>) -> Self {
        SignedPauliObservable { sign, factors }
    }

    /// `sign · first ⊗ second` on qubits `(0, 1)`.
    pub fn pair(sign: Sign, first: Pauli, second: Pauli) -> Self {
        SignedPauliObservable::new(sign, vec![(0, first), (1, second)])
    }

    pub fn sign(&self) -> Sign {
        self.sign
    }

    pub fn factors(&self) -> &[(usize, Pauli)] {
        &self.factors
    }

    /// Relabels qubit `q` as `mapping[q]`.
    pub fn remap(&self, mapping: &[usize]) -> Result<Self, QsimError> {
        let factors = self
            .factors
            .iter()
            .map(|&(q, p)| {
                mapping.get(q).map(|&g| (g, p)).ok_or(QsimError::QubitOutOfRange { qubit: q, n_qubits: mapping.len() })
            })
            .collect::<Result<_, _>>()?;
        Ok(SignedPauliObservable { sign: self.sign, factors })
    }

    /// Collapses repeated qubits and returns `(±1, non-identity letters
    /// sorted by qubit)`.
    pub fn canonical(&self) -> Result<(i8, Vec<(usize, Pauli)>), QsimError> {
        let mut letters: Vec<(usize, Pauli)> = Vec::new();
        let mut phase: u8 = 0;
        for &(q, p) in &self.factors {
            match letters.iter_mut().find(|(lq, _)| *lq == q) {
                Some(slot) => {
                    let (k, prod) = slot.1.compose(p);
                    phase = (phase + k) % 4;
                    slot.1 = prod;
                }
                None => letters.push((q, p)),
            }
        }
        if phase % 2 == 1 {
            return Err(QsimError::NonInvolutory(self.to_string()));
        }
        letters.retain(|(_, p)| *p != Pauli::I);
        letters.sort_by_key(|(q, _)| *q);
        let sign = self.sign.value() * if phase == 2 { -1 } else { 1 };
        Ok((sign, letters))
    }

    /// Dense matrix on an `n_qubits` register, qubit 0 most significant.
    pub fn matrix(&self, n_qubits: usize) -> Result<DenseOperator, QsimError> {
        if let Some(&(q, _)) = self.factors.iter().find(|(q, _)| *q >= n_qubits) {
            return Err(QsimError::QubitOutOfRange { qubit: q, n_qubits });
        }
        let (sign, letters) = self.canonical()?;
        let dim = 1usize << n_qubits;
        let mut op = DenseOperator::zeros(dim);
        for col in 0..dim {
            let mut coeff = Complex64::new(sign as f64, 0.0);
            let mut row = col;
            for &(q, p) in &letters {
                let mask = 1 << (n_qubits - 1 - q);
                coeff *= p.diagonal_phase(col & mask != 0);
                if p.flips() {
                    row ^= mask;
                }
            }
            op.set(row, col, coeff);
        }
        Ok(op)
    }

    /// Whether two observables commute, decided symbolically: they commute
    /// iff they anticommute on an even number of qubits.
    pub fn commutes_with(&self, other: &SignedPauliObservable) -> Result<bool, QsimError> {
        let (_, a) = self.canonical()?;
        let (_, b) = other.canonical()?;
        let clashes = a.iter().filter(|(qa, pa)| b.iter().any(|(qb, pb)| qa == qb && pa != pb)).count();
        Ok(clashes % 2 == 0)
    }
}

impl fmt::Display for SignedPauliObservable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.sign == Sign::Minus {
            f.write_str("-")?;
        }
        for (i, (q, p)) in self.factors.iter().enumerate() {
            if i > 0 {
                f.write_str("·")?;
            }
            write!(f, "{p}{q}")?;
        }
        Ok(())
    }
}

/// Square complex matrix, row-major. Only used for small exact checks.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    dim: usize,
    data: Vec<Complex64>,
}

impl DenseOperator {
    pub fn zeros(dim: usize) -> Self {
        DenseOperator { dim, data: vec![Complex64::new(0.0, 0.0); dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut op = Self::zeros(dim);
        for i in 0..dim {
            op.set(i, i, Complex64::new(1.0, 0.0));
        }
        op
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.dim + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: Complex64) {
        self.data[row * self.dim + col] = value;
    }

    pub fn scaled(&self, factor: f64) -> Self {
        DenseOperator { dim: self.dim, data: self.data.iter().map(|c| c * factor).collect() }
    }

    /// Entry-wise equality. Pauli products only ever hold `0, ±1, ±i`, so
    /// comparison is exact.
    pub fn exactly_equals(&self, other: &DenseOperator) -> bool {
        self.dim == other.dim && self.data == other.data
    }
}

impl Mul for &DenseOperator {
    type Output = DenseOperator;

    fn mul(self, rhs: &DenseOperator) -> DenseOperator {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        let n = self.dim;
        let mut out = DenseOperator::zeros(n);
        for r in 0..n {
            for c in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..n {
                    acc += self.get(r, k) * rhs.get(k, c);
                }
                out.set(r, c, acc);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composition_table() {
        assert_eq!(Pauli::X.compose(Pauli::Y), (1, Pauli::Z));
        assert_eq!(Pauli::X.compose(Pauli::Z), (3, Pauli::Y));
        assert_eq!(Pauli::Y.compose(Pauli::Y), (0, Pauli::I));
    }

    #[test]
    fn repeated_qubit_products() {
        // Z·Z on one qubit is the identity.
        let zz = SignedPauliObservable::new(Sign::Plus, vec![(0, Pauli::Z), (0, Pauli::Z)]);
        assert_eq!(zz.canonical().unwrap(), (1, vec![]));
        // X·Z = −iY is not Hermitian.
        let xz = SignedPauliObservable::new(Sign::Plus, vec![(0, Pauli::X), (0, Pauli::Z)]);
        assert!(matches!(xz.canonical(), Err(QsimError::NonInvolutory(_))));
        // (X·Z on q0)(X·Z on q1) = (−iY)(−iY) = −Y⊗Y.
        let both =
            SignedPauliObservable::new(Sign::Plus, vec![(0, Pauli::X), (0, Pauli::Z), (1, Pauli::X), (1, Pauli::Z)]);
        assert_eq!(both.canonical().unwrap(), (-1, vec![(0, Pauli::Y), (1, Pauli::Y)]));
    }

    #[test]
    fn matrices_square_to_identity() {
        for p in [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z] {
            for q in [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z] {
                let m = SignedPauliObservable::pair(Sign::Minus, p, q).matrix(2).unwrap();
                assert!((&m * &m).exactly_equals(&DenseOperator::identity(4)));
            }
        }
    }

    #[test]
    fn symbolic_commutation_matches_matrices() {
        let letters = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];
        for a in letters {
            for b in letters {
                for c in letters {
                    for d in letters {
                        let o1 = SignedPauliObservable::pair(Sign::Plus, a, b);
                        let o2 = SignedPauliObservable::pair(Sign::Plus, c, d);
                        let m1 = o1.matrix(2).unwrap();
                        let m2 = o2.matrix(2).unwrap();
                        let commute = (&m1 * &m2).exactly_equals(&(&m2 * &m1));
                        assert_eq!(o1.commutes_with(&o2).unwrap(), commute, "{o1} vs {o2}");
                    }
                }
            }
        }
    }

    #[test]
    fn remap_moves_qubits() {
        let o = SignedPauliObservable::pair(Sign::Minus, Pauli::X, Pauli::Z);
        let g = o.remap(&[1, 3]).unwrap();
        assert_eq!(g.factors(), &[(1, Pauli::X), (3, Pauli::Z)]);
        assert!(o.remap(&[0]).is_err());
    }
}
