//! Reference computations for the test suites. Nothing here calls into the
//! simulator's quantum engine: states are built from kets and Kronecker
//! products, measurements are explicit projector sandwiches.
#![allow(dead_code)]

use num_complex::Complex64 as C;

const R: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    pub n: usize,
    pub d: Vec<C>,
}

impl Mat {
    pub fn from_rows(rows: &[&[C]]) -> Mat {
        let n = rows.len();
        Mat { n, d: rows.iter().flat_map(|r| r.iter().copied()).collect() }
    }

    pub fn identity(n: usize) -> Mat {
        let mut d = vec![C::new(0.0, 0.0); n * n];
        for i in 0..n {
            d[i * n + i] = C::new(1.0, 0.0);
        }
        Mat { n, d }
    }

    pub fn at(&self, r: usize, c: usize) -> C {
        self.d[r * self.n + c]
    }

    pub fn scale(&self, k: C) -> Mat {
        Mat { n: self.n, d: self.d.iter().map(|x| x * k).collect() }
    }

    pub fn mul(&self, o: &Mat) -> Mat {
        let n = self.n;
        let mut d = vec![C::new(0.0, 0.0); n * n];
        for r in 0..n {
            for k in 0..n {
                let a = self.at(r, k);
                if a == C::new(0.0, 0.0) {
                    continue;
                }
                for c in 0..n {
                    d[r * n + c] += a * o.at(k, c);
                }
            }
        }
        Mat { n, d }
    }

    pub fn kron(&self, o: &Mat) -> Mat {
        let n = self.n * o.n;
        let mut d = vec![C::new(0.0, 0.0); n * n];
        for r1 in 0..self.n {
            for c1 in 0..self.n {
                for r2 in 0..o.n {
                    for c2 in 0..o.n {
                        d[(r1 * o.n + r2) * n + (c1 * o.n + c2)] = self.at(r1, c1) * o.at(r2, c2);
                    }
                }
            }
        }
        Mat { n, d }
    }

    pub fn apply(&self, v: &[C]) -> Vec<C> {
        (0..self.n).map(|r| (0..self.n).map(|c| self.at(r, c) * v[c]).sum()).collect()
    }

    pub fn max_abs_diff(&self, o: &Mat) -> f64 {
        self.d.iter().zip(&o.d).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }
}

fn c(re: f64) -> C {
    C::new(re, 0.0)
}

pub fn pauli(name: char) -> Mat {
    let (o, l, i) = (c(0.0), c(1.0), C::new(0.0, 1.0));
    match name {
        'I' => Mat::identity(2),
        'X' => Mat::from_rows(&[&[o, l], &[l, o]]),
        'Y' => Mat::from_rows(&[&[o, -i], &[i, o]]),
        'Z' => Mat::from_rows(&[&[l, o], &[o, -l]]),
        'H' => Mat::from_rows(&[&[c(R), c(R)], &[c(R), c(-R)]]),
        _ => panic!("unknown single-qubit operator {name}"),
    }
}

/// `±` times the Kronecker product of the named single-qubit factors,
/// leftmost factor on qubit 0.
pub fn pauli_string(sign: f64, factors: &str) -> Mat {
    let mut m = Mat::identity(1);
    for ch in factors.chars() {
        m = m.kron(&pauli(ch));
    }
    m.scale(c(sign))
}

/// Projector onto outcome `bit` of `basis` ('Z' or 'X') on one qubit.
pub fn projector(basis: char, bit: u8) -> Mat {
    let v: [C; 2] = match (basis, bit) {
        ('Z', 0) => [c(1.0), c(0.0)],
        ('Z', 1) => [c(0.0), c(1.0)],
        ('X', 0) => [c(R), c(R)],
        ('X', 1) => [c(R), c(-R)],
        _ => panic!("bad basis/bit"),
    };
    Mat::from_rows(&[&[v[0] * v[0].conj(), v[0] * v[1].conj()], &[v[1] * v[0].conj(), v[1] * v[1].conj()]])
}

/// Single-qubit operator `op` on `qubit` of an `n`-qubit register.
pub fn embed(op: &Mat, qubit: usize, n: usize) -> Mat {
    let id = Mat::identity(2);
    (0..n).fold(Mat::identity(1), |m, q| m.kron(if q == qubit { op } else { &id }))
}

/// Computational-basis ket from a bitstring, qubit 0 first.
pub fn ket(bits: &str) -> Vec<C> {
    let n = bits.len();
    let idx = usize::from_str_radix(bits, 2).expect("bitstring");
    let mut v = vec![c(0.0); 1 << n];
    v[idx] = c(1.0);
    v
}

pub fn superpose(kets: &[&str]) -> Vec<C> {
    let k = 1.0 / (kets.len() as f64).sqrt();
    let mut v = vec![c(0.0); 1 << kets[0].len()];
    for b in kets {
        for (x, y) in v.iter_mut().zip(ket(b)) {
            *x += y * k;
        }
    }
    v
}

pub fn ghz_z(n: usize) -> Vec<C> {
    superpose(&[&"0".repeat(n), &"1".repeat(n)])
}

/// The GHZ state rotated into the X basis: `H^{⊗n}` applied to `ghz_z`
/// gives `(|+…+⟩ + |−…−⟩)/√2`.
pub fn ghz_x(n: usize) -> Vec<C> {
    let plus: Vec<C> = (0..n).fold(vec![c(1.0)], |acc, _| kron_vec(&acc, &[c(R), c(R)]));
    let minus: Vec<C> = (0..n).fold(vec![c(1.0)], |acc, _| kron_vec(&acc, &[c(R), c(-R)]));
    plus.iter().zip(&minus).map(|(a, b)| (a + b) * c(R)).collect()
}

pub fn kron_vec(a: &[C], b: &[C]) -> Vec<C> {
    a.iter().flat_map(|x| b.iter().map(move |y| x * y)).collect()
}

pub fn norm_sqr(v: &[C]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum()
}

/// Every outcome sequence of measuring `(qubit, basis)` in order, with its
/// probability. Zero-probability branches are dropped.
pub fn branch_tree(state: &[C], steps: &[(usize, char)]) -> Vec<(Vec<u8>, f64)> {
    let n = state.len().trailing_zeros() as usize;
    let mut live = vec![(Vec::new(), state.to_vec())];
    for &(q, basis) in steps {
        let mut next = Vec::new();
        for (bits, psi) in live {
            for bit in 0..2u8 {
                let projected = embed(&projector(basis, bit), q, n).apply(&psi);
                let p = norm_sqr(&projected);
                if p > 1e-15 {
                    let mut b = bits.clone();
                    b.push(bit);
                    next.push((b, projected));
                }
            }
        }
        live = next;
    }
    let total = norm_sqr(state);
    live.into_iter().map(|(b, psi)| (b, norm_sqr(&psi) / total)).collect()
}

/// Binomial(n, p) probability mass at each k, computed by recurrence.
pub fn binomial_pmf(n: u64, p: f64) -> Vec<f64> {
    let mut pmf = vec![0.0; n as usize + 1];
    pmf[0] = (1.0 - p).powi(n as i32);
    for k in 1..=n as usize {
        pmf[k] = pmf[k - 1] * (n as usize - k + 1) as f64 / k as f64 * p / (1.0 - p);
    }
    pmf
}

/// P(X ≥ k) for X ~ Binomial(n, p).
pub fn binomial_upper_tail(n: u64, p: f64, k: u64) -> f64 {
    binomial_pmf(n, p).iter().skip(k as usize).sum()
}

/// Standard error of a rate estimated from `n` trials with true value `p`.
pub fn sigma(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}
