use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::pauli::SignedPauliObservable;
use super::QsimError;

/// Largest register the simulator accepts.
pub const MAX_QUBITS: usize = 8;

/// Tolerance on `Σ|a|² = 1`.
pub const NORM_TOLERANCE: f64 = 1e-12;

/// Branches with less probability than this are treated as impossible.
const PROBABILITY_FLOOR: f64 = 1e-15;

/// Single-qubit measurement basis.
///
/// Outcome bits: `|0⟩ → 0`, `|1⟩ → 1` in Z and `|+⟩ → 0`, `|−⟩ → 1` in X.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Basis {
    Z,
    X,
}

impl Basis {
    pub const ALL: [Basis; 2] = [Basis::Z, Basis::X];

    pub fn other(self) -> Basis {
        match self {
            Basis::Z => Basis::X,
            Basis::X => Basis::Z,
        }
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Basis::Z => f.write_str("Z"),
            Basis::X => f.write_str("X"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BellState {
    /// (|00⟩ + |11⟩)/√2
    PhiPlus,
    /// (|00⟩ − |11⟩)/√2
    PhiMinus,
    /// (|01⟩ + |10⟩)/√2
    PsiPlus,
    /// (|01⟩ − |10⟩)/√2
    PsiMinus,
}

/// Recipe for a freshly emitted register.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StateSpec {
    Bell(BellState),
    /// `(|b…b⟩ + |b̄…b̄⟩)/√2` written in the eigenbasis of `basis`: the
    /// Z form is the usual `(|0…0⟩ + |1…1⟩)/√2`, the X form is
    /// `(|+…+⟩ + |−…−⟩)/√2`. Every qubit measured in `basis` yields the
    /// same bit.
    Ghz {
        qubits: usize,
        basis: Basis,
    },
    /// Computational-basis product state, qubit 0 first.
    Product(String),
}

impl StateSpec {
    pub fn ghz(qubits: usize) -> Self {
        StateSpec::Ghz { qubits, basis: Basis::Z }
    }
}

impl fmt::Display for StateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateSpec::Bell(BellState::PhiPlus) => f.write_str("phi+"),
            StateSpec::Bell(BellState::PhiMinus) => f.write_str("phi-"),
            StateSpec::Bell(BellState::PsiPlus) => f.write_str("psi+"),
            StateSpec::Bell(BellState::PsiMinus) => f.write_str("psi-"),
            StateSpec::Ghz { qubits, basis } => write!(f, "ghz{qubits}-{basis}"),
            StateSpec::Product(bits) => write!(f, "|{bits}>"),
        }
    }
}

/// Normalized amplitude vector over `n` qubits.
///
/// Qubit 0 is the leftmost symbol of a ket, i.e. the most significant bit
/// of the amplitude index: `|01⟩` is index 1 and `|10⟩` is index 2.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// Builds a state from raw amplitudes. The length must be a power of two
    /// and the vector must already be normalized.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self, QsimError> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(QsimError::BadLength(len));
        }
        let n_qubits = len.trailing_zeros() as usize;
        if n_qubits > MAX_QUBITS {
            return Err(QsimError::TooManyQubits(n_qubits));
        }
        let state = StateVector { n_qubits, amplitudes };
        let drift = state.norm_drift();
        if drift > NORM_TOLERANCE {
            return Err(QsimError::NotNormalized(drift));
        }
        Ok(state)
    }

    /// All qubits in `|0⟩`.
    pub fn zero(n_qubits: usize) -> Result<Self, QsimError> {
        check_width(n_qubits)?;
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(StateVector { n_qubits, amplitudes })
    }

    /// `self ⊗ other`; `other`'s qubits come after `self`'s.
    pub fn tensor(&self, other: &StateVector) -> Result<StateVector, QsimError> {
        let n_qubits = self.n_qubits + other.n_qubits;
        check_width(n_qubits)?;
        let amplitudes = self.amplitudes.iter().flat_map(|a| other.amplitudes.iter().map(move |b| a * b)).collect();
        Ok(StateVector { n_qubits, amplitudes })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `|Σ|a|² − 1|`.
    pub fn norm_drift(&self) -> f64 {
        (self.norm_sqr() - 1.0).abs()
    }

    pub fn is_normalized(&self) -> bool {
        self.norm_drift() <= NORM_TOLERANCE
    }

    fn mask(&self, qubit: usize) -> usize {
        1 << (self.n_qubits - 1 - qubit)
    }

    fn check_qubit(&self, qubit: usize) -> Result<(), QsimError> {
        if qubit >= self.n_qubits {
            return Err(QsimError::QubitOutOfRange { qubit, n_qubits: self.n_qubits });
        }
        Ok(())
    }

    /// Exact Born probability of `outcome` when `qubit` is measured in
    /// `basis`. Does not touch the state.
    pub fn outcome_probability(&self, qubit: usize, basis: Basis, outcome: u8) -> Result<f64, QsimError> {
        self.check_qubit(qubit)?;
        check_bit(outcome)?;
        let mask = self.mask(qubit);
        let p: f64 = match basis {
            Basis::Z => self
                .amplitudes
                .iter()
                .enumerate()
                .filter(|(i, _)| ((i & mask) != 0) == (outcome == 1))
                .map(|(_, a)| a.norm_sqr())
                .sum(),
            Basis::X => {
                let sign = if outcome == 0 { 1.0 } else { -1.0 };
                (0..self.amplitudes.len())
                    .filter(|i| i & mask == 0)
                    .map(|i| (self.amplitudes[i] + self.amplitudes[i | mask] * sign).norm_sqr() / 2.0)
                    .sum()
            }
        };
        Ok(p.clamp(0.0, 1.0))
    }

    /// Post-selects `qubit` on `outcome` in `basis` and renormalizes.
    /// Returns the probability the branch had.
    pub fn project(&mut self, qubit: usize, basis: Basis, outcome: u8) -> Result<f64, QsimError> {
        let p = self.outcome_probability(qubit, basis, outcome)?;
        if p < PROBABILITY_FLOOR {
            return Err(QsimError::ImpossibleOutcome { qubit, basis, outcome });
        }
        let mask = self.mask(qubit);
        let scale = 1.0 / p.sqrt();
        let zero = Complex64::new(0.0, 0.0);
        match basis {
            Basis::Z => {
                for (i, a) in self.amplitudes.iter_mut().enumerate() {
                    if ((i & mask) != 0) == (outcome == 1) {
                        *a *= scale;
                    } else {
                        *a = zero;
                    }
                }
            }
            Basis::X => {
                // Hadamard-rotate the target, keep the chosen half, rotate back.
                let sign = if outcome == 0 { 1.0 } else { -1.0 };
                for i in (0..self.amplitudes.len()).filter(|i| i & mask == 0) {
                    let kept = (self.amplitudes[i] + self.amplitudes[i | mask] * sign) * FRAC_1_SQRT_2;
                    self.amplitudes[i] = kept * FRAC_1_SQRT_2 * scale;
                    self.amplitudes[i | mask] = kept * (FRAC_1_SQRT_2 * sign * scale);
                }
            }
        }
        self.renormalize();
        Ok(p)
    }

    /// Born-rule measurement driven by `randomness` in `[0, 1)`: outcome 0
    /// is chosen iff `randomness < P(0)`. The state collapses in place.
    pub fn measure_qubit(&mut self, qubit: usize, basis: Basis, randomness: f64) -> Result<u8, QsimError> {
        let p0 = self.outcome_probability(qubit, basis, 0)?;
        let mut outcome = if randomness < p0 { 0 } else { 1 };
        let chosen = if outcome == 0 { p0 } else { 1.0 - p0 };
        if chosen < PROBABILITY_FLOOR {
            outcome ^= 1;
        }
        self.project(qubit, basis, outcome)?;
        Ok(outcome)
    }

    /// Applies a signed Pauli string, returning `O|ψ⟩` without modifying
    /// the state. Fails unless the string is Hermitian and involutory.
    pub fn apply_observable(&self, obs: &SignedPauliObservable) -> Result<Vec<Complex64>, QsimError> {
        for &(q, _) in obs.factors() {
            self.check_qubit(q)?;
        }
        let (phase, letters) = obs.canonical()?;
        let mut flip = 0usize;
        let mut phase_masks = Vec::with_capacity(letters.len());
        for (q, p) in letters {
            let m = self.mask(q);
            if p.flips() {
                flip |= m;
            }
            phase_masks.push((m, p));
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.amplitudes.len()];
        for (i, a) in self.amplitudes.iter().enumerate() {
            let mut c = Complex64::new(phase as f64, 0.0);
            for &(m, p) in &phase_masks {
                c *= p.diagonal_phase(i & m != 0);
            }
            out[i ^ flip] += c * a;
        }
        Ok(out)
    }

    /// Projective measurement of a ±1-valued Pauli observable with
    /// `P± = (I ± O)/2`. Eigenvalue `+1` is chosen iff `randomness < P(+1)`.
    pub fn measure_observable(&mut self, obs: &SignedPauliObservable, randomness: f64) -> Result<i8, QsimError> {
        let applied = self.apply_observable(obs)?;
        let plus: Vec<Complex64> = self.amplitudes.iter().zip(&applied).map(|(a, oa)| (a + oa) * 0.5).collect();
        let p_plus: f64 = plus.iter().map(|a| a.norm_sqr()).sum::<f64>().clamp(0.0, 1.0);
        let mut eigenvalue: i8 = if randomness < p_plus { 1 } else { -1 };
        let chosen = if eigenvalue == 1 { p_plus } else { 1.0 - p_plus };
        if chosen < PROBABILITY_FLOOR {
            eigenvalue = -eigenvalue;
        }
        if eigenvalue == 1 {
            self.amplitudes = plus;
        } else {
            for (a, oa) in self.amplitudes.iter_mut().zip(&applied) {
                *a = (*a - oa) * 0.5;
            }
        }
        self.renormalize();
        Ok(eigenvalue)
    }

    /// Probability that `obs` yields `+1`.
    pub fn observable_plus_probability(&self, obs: &SignedPauliObservable) -> Result<f64, QsimError> {
        let applied = self.apply_observable(obs)?;
        let p: f64 = self.amplitudes.iter().zip(&applied).map(|(a, oa)| ((a + oa) * 0.5).norm_sqr()).sum();
        Ok(p.clamp(0.0, 1.0))
    }

    /// Every possible outcome string of measuring `qubits` in order, each in
    /// `basis`, with its probability. Zero-probability branches are left out.
    pub fn branches(&self, qubits: &[usize], basis: Basis) -> Result<Vec<(Vec<u8>, f64)>, QsimError> {
        let Some((&first, rest)) = qubits.split_first() else {
            return Ok(vec![(Vec::new(), 1.0)]);
        };
        let mut out = Vec::new();
        for bit in [0u8, 1] {
            if self.outcome_probability(first, basis, bit)? < PROBABILITY_FLOOR {
                continue;
            }
            let mut collapsed = self.clone();
            let p = collapsed.project(first, basis, bit)?;
            for (mut tail, q) in collapsed.branches(rest, basis)? {
                tail.insert(0, bit);
                out.push((tail, p * q));
            }
        }
        Ok(out)
    }

    fn renormalize(&mut self) {
        let norm = self.norm_sqr().sqrt();
        if norm > 0.0 {
            let inv = 1.0 / norm;
            for a in &mut self.amplitudes {
                *a *= inv;
            }
        }
    }
}

fn check_width(n_qubits: usize) -> Result<(), QsimError> {
    if n_qubits == 0 {
        return Err(QsimError::BadLength(1));
    }
    if n_qubits > MAX_QUBITS {
        return Err(QsimError::TooManyQubits(n_qubits));
    }
    Ok(())
}

fn check_bit(bit: u8) -> Result<(), QsimError> {
    if bit > 1 {
        return Err(QsimError::NotABit(bit));
    }
    Ok(())
}

/// Builds the textbook state for `spec`.
pub fn make_state(spec: &StateSpec) -> Result<StateVector, QsimError> {
    let r = Complex64::new(FRAC_1_SQRT_2, 0.0);
    match spec {
        StateSpec::Bell(bell) => {
            let mut state = StateVector::zero(2)?;
            let a = &mut state.amplitudes;
            a[0] = Complex64::new(0.0, 0.0);
            match bell {
                BellState::PhiPlus => (a[0b00], a[0b11]) = (r, r),
                BellState::PhiMinus => (a[0b00], a[0b11]) = (r, -r),
                BellState::PsiPlus => (a[0b01], a[0b10]) = (r, r),
                BellState::PsiMinus => (a[0b01], a[0b10]) = (r, -r),
            }
            Ok(state)
        }
        StateSpec::Ghz { qubits, basis } => {
            if *qubits < 2 {
                return Err(QsimError::GhzTooNarrow(*qubits));
            }
            check_width(*qubits)?;
            let mut state = StateVector::zero(*qubits)?;
            let last = state.amplitudes.len() - 1;
            match basis {
                Basis::Z => {
                    state.amplitudes[0] = r;
                    state.amplitudes[last] = r;
                }
                Basis::X => {
                    // (|+…+⟩ + |−…−⟩)/√2 puts weight on even-weight indices only.
                    let amp = Complex64::new(std::f64::consts::SQRT_2 * 0.5f64.powf(*qubits as f64 / 2.0), 0.0);
                    for (i, a) in state.amplitudes.iter_mut().enumerate() {
                        *a = if i.count_ones() % 2 == 0 { amp } else { Complex64::new(0.0, 0.0) };
                    }
                }
            }
            Ok(state)
        }
        StateSpec::Product(bits) => {
            let mut index = 0usize;
            for (pos, ch) in bits.chars().enumerate() {
                let bit = match ch {
                    '0' => 0,
                    '1' => 1,
                    other => return Err(QsimError::BadBitstring { pos, found: other }),
                };
                index = (index << 1) | bit;
            }
            let mut state = StateVector::zero(bits.chars().count())?;
            state.amplitudes[0] = Complex64::new(0.0, 0.0);
            state.amplitudes[index] = Complex64::new(1.0, 0.0);
            Ok(state)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn bell_phi_plus_amplitudes() {
        let s = make_state(&StateSpec::Bell(BellState::PhiPlus)).unwrap();
        let re: Vec<f64> = s.amplitudes().iter().map(|a| a.re).collect();
        assert!(approx(re[0], FRAC_1_SQRT_2) && approx(re[3], FRAC_1_SQRT_2));
        assert!(approx(re[1], 0.0) && approx(re[2], 0.0));
    }

    #[test]
    fn product_and_ghz() {
        let s = make_state(&StateSpec::Product("00".into())).unwrap();
        assert_eq!(s.amplitudes()[0], Complex64::new(1.0, 0.0));
        let g = make_state(&StateSpec::ghz(3)).unwrap();
        for (i, a) in g.amplitudes().iter().enumerate() {
            let expect = if i == 0 || i == 7 { FRAC_1_SQRT_2 } else { 0.0 };
            assert!(approx(a.re, expect), "index {i}");
        }
        assert!(matches!(
            make_state(&StateSpec::Product("0a".into())),
            Err(QsimError::BadBitstring { pos: 1, found: 'a' })
        ));
        assert!(matches!(make_state(&StateSpec::ghz(1)), Err(QsimError::GhzTooNarrow(1))));
        assert!(make_state(&StateSpec::ghz(9)).is_err());
    }

    #[test]
    fn ghz_x_form_is_normalized_and_two_qubit_form_is_phi_plus() {
        for n in 2..=MAX_QUBITS {
            let s = make_state(&StateSpec::Ghz { qubits: n, basis: Basis::X }).unwrap();
            assert!(s.is_normalized(), "n={n}");
            for q in 0..n {
                assert!(approx(s.outcome_probability(q, Basis::X, 0).unwrap(), 0.5));
            }
        }
        let x2 = make_state(&StateSpec::Ghz { qubits: 2, basis: Basis::X }).unwrap();
        let phi = make_state(&StateSpec::Bell(BellState::PhiPlus)).unwrap();
        for (a, b) in x2.amplitudes().iter().zip(phi.amplitudes()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn probabilities() {
        let phi = make_state(&StateSpec::Bell(BellState::PhiPlus)).unwrap();
        assert!(approx(phi.outcome_probability(0, Basis::Z, 0).unwrap(), 0.5));
        assert!(approx(phi.outcome_probability(0, Basis::X, 0).unwrap(), 0.5));
        let one = make_state(&StateSpec::Product("11".into())).unwrap();
        assert!(approx(one.outcome_probability(1, Basis::Z, 1).unwrap(), 1.0));
        assert!(matches!(
            phi.outcome_probability(2, Basis::Z, 0),
            Err(QsimError::QubitOutOfRange { qubit: 2, n_qubits: 2 })
        ));
    }

    #[test]
    fn collapse_propagates_to_partner() {
        for basis in Basis::ALL {
            for u in [0.1, 0.9] {
                let mut phi = make_state(&StateSpec::Bell(BellState::PhiPlus)).unwrap();
                let a = phi.measure_qubit(0, basis, u).unwrap();
                assert!(approx(phi.outcome_probability(1, basis, a).unwrap(), 1.0));
                let b = phi.measure_qubit(1, basis, 0.5).unwrap();
                assert_eq!(a, b);
                assert!(phi.is_normalized());
            }
        }
    }

    #[test]
    fn psi_plus_x_basis_outcomes_equal() {
        for u in [0.2, 0.7] {
            let mut psi = make_state(&StateSpec::Bell(BellState::PsiPlus)).unwrap();
            let a = psi.measure_qubit(0, Basis::X, u).unwrap();
            assert!(approx(psi.outcome_probability(1, Basis::X, a).unwrap(), 1.0));
            let mut psi = make_state(&StateSpec::Bell(BellState::PsiPlus)).unwrap();
            let a = psi.measure_qubit(0, Basis::Z, u).unwrap();
            assert!(approx(psi.outcome_probability(1, Basis::Z, 1 - a).unwrap(), 1.0));
        }
    }

    #[test]
    fn impossible_branch_is_rejected() {
        let mut s = make_state(&StateSpec::Product("0".into())).unwrap();
        assert!(s.project(0, Basis::Z, 1).is_err());
        // A randomness value at the top of the range still picks the only live branch.
        assert_eq!(s.measure_qubit(0, Basis::Z, 0.999_999_999).unwrap(), 0);
    }

    #[test]
    fn from_amplitudes_validates() {
        assert!(matches!(
            StateVector::from_amplitudes(vec![Complex64::new(1.0, 0.0); 3]),
            Err(QsimError::BadLength(3))
        ));
        assert!(matches!(
            StateVector::from_amplitudes(vec![Complex64::new(1.0, 0.0); 2]),
            Err(QsimError::NotNormalized(_))
        ));
    }
}
