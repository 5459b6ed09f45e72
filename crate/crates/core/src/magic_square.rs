//! Mermin–Peres magic square.
//!
//! Player A is given a row and must answer three ±1 values with product
//! `+1`; player B is given a column and answers three values with product
//! `−1`. They win when both put the same value in the shared tile. No
//! classical strategy wins all nine inputs; two shared `Φ+` pairs and the
//! standard table of two-qubit observables do.

use num_rational::Ratio;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qsim::{
    make_state, BellState, DenseOperator, Pauli, QsimError, ResourceId, ResourcePool, Sign, SignedPauliObservable,
    StateSpec,
};

#[derive(Debug, Error, PartialEq)]
pub enum MagicSquareError {
    #[error(transparent)]
    Qsim(#[from] QsimError),
    #[error("row {row} / column {col} outside the 3×3 board")]
    BadInput { row: usize, col: usize },
}

/// Qubits of the shared four-qubit register held by each player. Pair one
/// is qubits (0, 1), pair two is (2, 3).
pub const PLAYER_A_QUBITS: [usize; 2] = [0, 2];
pub const PLAYER_B_QUBITS: [usize; 2] = [1, 3];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MagicSquareTable {
    cells: [[SignedPauliObservable; 3]; 3],
}

impl MagicSquareTable {
    /// ```text
    ///  I⊗Z   Z⊗I   Z⊗Z
    ///  X⊗I   I⊗X   X⊗X
    /// −X⊗Z  −Z⊗X   Y⊗Y
    /// ```
    pub fn standard() -> Self {
        use Pauli::{I, X, Y, Z};
        let p = |a, b| SignedPauliObservable::pair(Sign::Plus, a, b);
        let m = |a, b| SignedPauliObservable::pair(Sign::Minus, a, b);
        MagicSquareTable {
            cells: [[p(I, Z), p(Z, I), p(Z, Z)], [p(X, I), p(I, X), p(X, X)], [m(X, Z), m(Z, X), p(Y, Y)]],
        }
    }

    pub fn cell(&self, row: usize, col: usize) -> &SignedPauliObservable {
        &self.cells[row][col]
    }

    pub fn row(&self, row: usize) -> [&SignedPauliObservable; 3] {
        [&self.cells[row][0], &self.cells[row][1], &self.cells[row][2]]
    }

    pub fn column(&self, col: usize) -> [&SignedPauliObservable; 3] {
        [&self.cells[0][col], &self.cells[1][col], &self.cells[2][col]]
    }

    fn product(line: [&SignedPauliObservable; 3]) -> Result<DenseOperator, QsimError> {
        let m: Vec<DenseOperator> = line.iter().map(|o| o.matrix(2)).collect::<Result<_, _>>()?;
        Ok(&(&m[0] * &m[1]) * &m[2])
    }

    pub fn row_product(&self, row: usize) -> Result<DenseOperator, QsimError> {
        Self::product(self.row(row))
    }

    pub fn column_product(&self, col: usize) -> Result<DenseOperator, QsimError> {
        Self::product(self.column(col))
    }

    /// Exact matrix check of the table's algebra.
    pub fn algebra(&self) -> Result<TableAlgebra, QsimError> {
        let id = DenseOperator::identity(4);
        let minus_id = id.scaled(-1.0);
        let mut report =
            TableAlgebra { rows_are_identity: true, columns_are_minus_identity: true, lines_commute: true };
        for k in 0..3 {
            report.rows_are_identity &= self.row_product(k)?.exactly_equals(&id);
            report.columns_are_minus_identity &= self.column_product(k)?.exactly_equals(&minus_id);
            for line in [self.row(k), self.column(k)] {
                let m: Vec<DenseOperator> = line.iter().map(|o| o.matrix(2)).collect::<Result<_, _>>()?;
                for i in 0..3 {
                    for j in i + 1..3 {
                        report.lines_commute &= (&m[i] * &m[j]).exactly_equals(&(&m[j] * &m[i]));
                    }
                }
            }
        }
        Ok(report)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableAlgebra {
    pub rows_are_identity: bool,
    pub columns_are_minus_identity: bool,
    pub lines_commute: bool,
}

impl TableAlgebra {
    pub fn holds(&self) -> bool {
        self.rows_are_identity && self.columns_are_minus_identity && self.lines_commute
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameRound {
    pub row: usize,
    pub col: usize,
    pub row_values: [i8; 3],
    pub col_values: [i8; 3],
    pub win: bool,
}

impl GameRound {
    pub fn new(row: usize, col: usize, row_values: [i8; 3], col_values: [i8; 3]) -> Self {
        GameRound { row, col, row_values, col_values, win: row_values[col] == col_values[row] }
    }

    pub fn row_parity(&self) -> i8 {
        self.row_values.iter().product()
    }

    pub fn col_parity(&self) -> i8 {
        self.col_values.iter().product()
    }

    /// Value both players wrote in the shared tile, if they agree.
    pub fn shared_value(&self) -> Option<i8> {
        self.win.then_some(self.row_values[self.col])
    }
}

/// The four sign triples with product `+1` (row answers).
pub const ROW_ANSWERS: [[i8; 3]; 4] = [[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]];
/// The four sign triples with product `−1` (column answers).
pub const COLUMN_ANSWERS: [[i8; 3]; 4] = [[-1, -1, -1], [-1, 1, 1], [1, -1, 1], [1, 1, -1]];

/// Deterministic classical play: a fixed answer for every row and column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassicalStrategy {
    pub rows: [[i8; 3]; 3],
    pub columns: [[i8; 3]; 3],
}

impl ClassicalStrategy {
    pub fn play(&self, row: usize, col: usize) -> GameRound {
        GameRound::new(row, col, self.rows[row], self.columns[col])
    }

    pub fn wins(&self) -> u32 {
        (0..3).flat_map(|r| (0..3).map(move |c| (r, c))).filter(|&(r, c)| self.play(r, c).win).count() as u32
    }
}

fn answer_sets(table: &[[i8; 3]; 4]) -> Vec<[[i8; 3]; 3]> {
    let mut out = Vec::with_capacity(64);
    for a in table {
        for b in table {
            for c in table {
                out.push([*a, *b, *c]);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassicalOptimum {
    pub win_probability: Ratio<u32>,
    pub best: ClassicalStrategy,
    pub strategies_examined: usize,
    /// Wins out of nine for the weakest joint strategy.
    pub fewest_wins: u32,
    /// Joint strategies that win all nine inputs (always zero).
    pub perfect_strategies: usize,
}

/// Exhaustive search over all 64 × 64 deterministic joint strategies with
/// the inputs drawn uniformly.
pub fn classical_optimum() -> ClassicalOptimum {
    let rows = answer_sets(&ROW_ANSWERS);
    let cols = answer_sets(&COLUMN_ANSWERS);
    let mut best: Option<(u32, ClassicalStrategy)> = None;
    let mut fewest = u32::MAX;
    let mut perfect = 0;
    let mut examined = 0;
    for r in &rows {
        for c in &cols {
            let s = ClassicalStrategy { rows: *r, columns: *c };
            let w = s.wins();
            examined += 1;
            fewest = fewest.min(w);
            if w == 9 {
                perfect += 1;
            }
            if best.is_none_or(|(bw, _)| w > bw) {
                best = Some((w, s));
            }
        }
    }
    let (wins, strategy) = best.expect("strategy space is non-empty");
    ClassicalOptimum {
        win_probability: Ratio::new(wins, 9),
        best: strategy,
        strategies_examined: examined,
        fewest_wins: fewest,
        perfect_strategies: perfect,
    }
}

/// One quantum round on a freshly emitted `Φ+ ⊗ Φ+` register. A measures
/// its row's observables on qubits (0, 2), B its column's on (1, 3), each
/// in table order. Returns the register's id alongside the round.
pub fn quantum_round<R: Rng + ?Sized>(
    pool: &mut ResourcePool,
    table: &MagicSquareTable,
    row: usize,
    col: usize,
    rng: &mut R,
) -> Result<(ResourceId, GameRound), MagicSquareError> {
    if row >= 3 || col >= 3 {
        return Err(MagicSquareError::BadInput { row, col });
    }
    let phi = make_state(&StateSpec::Bell(BellState::PhiPlus))?;
    let id = pool.insert(phi.tensor(&phi)?);
    let mut row_values = [0i8; 3];
    for (k, obs) in table.row(row).iter().enumerate() {
        row_values[k] = pool.measure_observable(id, &obs.remap(&PLAYER_A_QUBITS)?, rng)?;
    }
    let mut col_values = [0i8; 3];
    for (k, obs) in table.column(col).iter().enumerate() {
        col_values[k] = pool.measure_observable(id, &obs.remap(&PLAYER_B_QUBITS)?, rng)?;
    }
    pool.release(id);
    Ok((id, GameRound::new(row, col, row_values, col_values)))
}

/// Sensors on a 3×3 board. A's three values reach the sensors of its row,
/// B's reach the sensors of its column; a sensor fires when it receives
/// two equal values. Only the shared tile can ever receive two.
pub fn sensor_board_check(round: &GameRound) -> Vec<(usize, usize)> {
    let mut firing = Vec::new();
    for r in 0..3 {
        for c in 0..3 {
            let from_a = (r == round.row).then(|| round.row_values[c]);
            let from_b = (c == round.col).then(|| round.col_values[r]);
            if let (Some(a), Some(b)) = (from_a, from_b) {
                if a == b {
                    firing.push((r, c));
                }
            }
        }
    }
    firing
}
