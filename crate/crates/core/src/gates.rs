//! Gate unitaries and their Heisenberg superoperators in the Pauli basis.
//!
//! Every sign convention in the crate comes from here. The superoperator of a
//! unitary `U` is the real matrix `S` with `U† P_b U = Σ_a S[a][b] P_a`, read
//! off by dense conjugation and a Hilbert-Schmidt projection. The Pauli
//! engine and the PEPO engine both consume these tables; neither hand-codes a
//! conjugation rule.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4};
use std::fmt;
use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

/// Single-qubit Pauli letter. The discriminant is the operator-basis index
/// used on every PEPO physical leg: `(I, X, Y, Z) = (0, 1, 2, 3)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pauli {
    I = 0,
    X = 1,
    Y = 2,
    Z = 3,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Pauli {
        Self::ALL[i]
    }

    pub fn from_char(c: char) -> Option<Pauli> {
        match c.to_ascii_uppercase() {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }

    pub fn letter(self) -> char {
        ['I', 'X', 'Y', 'Z'][self.index()]
    }

    /// `(x, z)` bits of the symplectic encoding `P ∝ X^x Z^z`.
    pub fn bits(self) -> (bool, bool) {
        match self {
            Pauli::I => (false, false),
            Pauli::X => (true, false),
            Pauli::Y => (true, true),
            Pauli::Z => (false, true),
        }
    }

    pub fn from_bits(x: bool, z: bool) -> Pauli {
        match (x, z) {
            (false, false) => Pauli::I,
            (true, false) => Pauli::X,
            (true, true) => Pauli::Y,
            (false, true) => Pauli::Z,
        }
    }

    /// Expectation in `|0⟩`.
    pub fn zero_state_value(self) -> f64 {
        match self {
            Pauli::I | Pauli::Z => 1.0,
            Pauli::X | Pauli::Y => 0.0,
        }
    }

    pub fn matrix(self) -> Tensor<Complex64> {
        let (o, z, i) = (c(1.0, 0.0), c(0.0, 0.0), c(0.0, 1.0));
        let data = match self {
            Pauli::I => vec![o, z, z, o],
            Pauli::X => vec![z, o, o, z],
            Pauli::Y => vec![z, -i, i, z],
            Pauli::Z => vec![o, z, z, -o],
        };
        Tensor::new(vec![2, 2], data).expect("2x2")
    }
}

impl fmt::Display for Pauli {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Closure vector of the all-zeros product state: `⟨0|P|0⟩` for `P = I, X, Y, Z`.
pub const ZERO_STATE_CLOSURE: [f64; 4] = [1.0, 0.0, 0.0, 1.0];

/// `R_X(θ) = exp(-i θ/2 X)`.
pub fn rx_unitary(theta: f64) -> Tensor<Complex64> {
    let (s, co) = (theta / 2.0).sin_cos();
    Tensor::new(vec![2, 2], vec![c(co, 0.0), c(0.0, -s), c(0.0, -s), c(co, 0.0)]).expect("2x2")
}

/// `R_ZZ = exp(+i π/4 Z⊗Z)`, diagonal in the computational basis.
pub fn rzz_unitary() -> Tensor<Complex64> {
    let plus = Complex64::from_polar(1.0, FRAC_PI_4);
    let minus = Complex64::from_polar(1.0, -FRAC_PI_4);
    let diag = [plus, minus, minus, plus];
    Tensor::from_fn(vec![4, 4], |i| if i[0] == i[1] { diag[i[0]] } else { c(0.0, 0.0) })
}

/// `R_YY`, the two-qubit unitary fixed by `R_X(π/2) R_ZZ = R_YY R_X(π/2)`
/// with `R_X(π/2)` acting on both qubits; equals `exp(+i π/4 Y⊗Y)`.
pub fn ryy_unitary() -> Tensor<Complex64> {
    let rx = rx_unitary(FRAC_PI_2);
    let rx2 = rx.kron(&rx).expect("kron");
    rx2.matmul(&rzz_unitary())
        .and_then(|m| m.matmul(&rx2.adjoint()?))
        .expect("4x4 products")
}

/// Values within this distance of `0` or `±1` are snapped onto them, so that
/// Clifford angles yield exact signed permutations.
pub const SNAP_TOL: f64 = 1e-14;

pub fn snap(x: f64) -> f64 {
    if x.abs() < SNAP_TOL {
        0.0
    } else if (x.abs() - 1.0).abs() < SNAP_TOL {
        x.signum()
    } else {
        x
    }
}

fn pauli_string_matrix(letters: &[Pauli]) -> Tensor<Complex64> {
    letters
        .iter()
        .skip(1)
        .fold(letters[0].matrix(), |acc, p| acc.kron(&p.matrix()).expect("kron"))
}

/// Real superoperator of conjugation by an `n`-qubit unitary in the Pauli
/// basis; the basis index of a string is the base-4 number of its letters,
/// first qubit most significant.
fn heisenberg_superop(u: &Tensor<Complex64>, n: usize) -> Vec<Vec<f64>> {
    let dim = 4usize.pow(n as u32);
    let hs = (1usize << n) as f64;
    let basis: Vec<Tensor<Complex64>> = (0..dim)
        .map(|k| {
            let letters: Vec<Pauli> = (0..n)
                .map(|q| Pauli::from_index((k / 4usize.pow((n - 1 - q) as u32)) % 4))
                .collect();
            pauli_string_matrix(&letters)
        })
        .collect();
    let ud = u.adjoint().expect("square unitary");
    let mut s = vec![vec![0.0; dim]; dim];
    for b in 0..dim {
        let conj = ud.matmul(&basis[b]).and_then(|m| m.matmul(u)).expect("products");
        for a in 0..dim {
            // Tr(P_a · U† P_b U) / 2^n
            let pa = &basis[a];
            let side = 1 << n;
            let mut tr = c(0.0, 0.0);
            for i in 0..side {
                for k in 0..side {
                    tr += pa.get(&[i, k]) * conj.get(&[k, i]);
                }
            }
            let v = tr / hs;
            debug_assert!(v.im.abs() < 1e-12, "Hermitian image must have real coefficients");
            s[a][b] = snap(v.re);
        }
    }
    s
}

/// 4×4 superoperator of conjugation by a single-qubit unitary.
pub fn superop_1q(u: &Tensor<Complex64>) -> [[f64; 4]; 4] {
    let s = heisenberg_superop(u, 1);
    let mut out = [[0.0; 4]; 4];
    for a in 0..4 {
        out[a].copy_from_slice(&s[a]);
    }
    out
}

/// 16×16 superoperator of conjugation by a two-qubit unitary; index
/// `4 * first + second`.
pub fn superop_2q(u: &Tensor<Complex64>) -> [[f64; 16]; 16] {
    let s = heisenberg_superop(u, 2);
    let mut out = [[0.0; 16]; 16];
    for a in 0..16 {
        out[a].copy_from_slice(&s[a]);
    }
    out
}

/// Heisenberg superoperator of `R_X(θ)`.
pub fn rx_superop(theta: f64) -> [[f64; 4]; 4] {
    superop_1q(&rx_unitary(theta))
}

/// Heisenberg superoperator of `R_ZZ`, derived once.
pub fn rzz_superop() -> &'static [[f64; 16]; 16] {
    static TABLE: OnceLock<[[f64; 16]; 16]> = OnceLock::new();
    TABLE.get_or_init(|| superop_2q(&rzz_unitary()))
}

/// Image of one two-site Pauli pair under a Clifford conjugation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CliffordImage {
    pub first: Pauli,
    pub second: Pauli,
    pub sign: f64,
}

/// Signed-permutation form of a Clifford two-qubit superoperator. Returns
/// `None` when some column is not a single `±1`.
pub fn clifford_table(s: &[[f64; 16]; 16]) -> Option<[CliffordImage; 16]> {
    let mut table = [CliffordImage {
        first: Pauli::I,
        second: Pauli::I,
        sign: 1.0,
    }; 16];
    for b in 0..16 {
        let nonzero: Vec<usize> = (0..16).filter(|&a| s[a][b] != 0.0).collect();
        let [a] = nonzero[..] else { return None };
        if s[a][b].abs() != 1.0 {
            return None;
        }
        table[b] = CliffordImage {
            first: Pauli::from_index(a / 4),
            second: Pauli::from_index(a % 4),
            sign: s[a][b],
        };
    }
    Some(table)
}

/// Conjugation rules of `R_ZZ` on every Pauli pair.
pub fn rzz_rules() -> &'static [CliffordImage; 16] {
    static TABLE: OnceLock<[CliffordImage; 16]> = OnceLock::new();
    TABLE.get_or_init(|| clifford_table(rzz_superop()).expect("R_ZZ is Clifford"))
}

/// `1/√2`, exposed for tests of the `R_YY` action.
pub const INV_SQRT_2: f64 = FRAC_1_SQRT_2;

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &Tensor<Complex64>, b: &Tensor<Complex64>) -> bool {
        a.max_abs_diff(b) < 1e-12
    }

    #[test]
    fn rx_zero_is_identity() {
        assert!(close(&rx_unitary(0.0), &Tensor::identity(2)));
    }

    #[test]
    fn rx_conjugation_of_z() {
        let th = 0.37;
        let s = rx_superop(th);
        let z = Pauli::Z.index();
        assert!((s[Pauli::Z.index()][z] - th.cos()).abs() < 1e-15);
        assert!((s[Pauli::Y.index()][z] - th.sin()).abs() < 1e-15);
        assert_eq!(s[Pauli::X.index()][z], 0.0);
        assert_eq!(s[Pauli::I.index()][z], 0.0);
        // X commutes with the generator
        let x = Pauli::X.index();
        assert_eq!(s[x][x], 1.0);
    }

    #[test]
    fn rx_clifford_angle_is_exact() {
        let s = rx_superop(FRAC_PI_2);
        assert_eq!(s[Pauli::Y.index()][Pauli::Z.index()], 1.0);
        assert_eq!(s[Pauli::Z.index()][Pauli::Z.index()], 0.0);
        assert_eq!(s[Pauli::Z.index()][Pauli::Y.index()], -1.0);
    }

    #[test]
    fn rzz_is_a_signed_permutation() {
        let rules = rzz_rules();
        // Z_i commutes with Z_i Z_j
        let zi = rules[4 * Pauli::Z.index()];
        assert_eq!((zi.first, zi.second, zi.sign), (Pauli::Z, Pauli::I, 1.0));
        let id = rules[0];
        assert_eq!((id.first, id.second, id.sign), (Pauli::I, Pauli::I, 1.0));
    }

    #[test]
    fn rzz_moves_x_to_y_z_matching_dense_conjugation() {
        // exp(-iπ/4 ZZ) (X⊗I) exp(+iπ/4 ZZ), computed densely
        let u = rzz_unitary();
        let xi = Pauli::X.matrix().kron(&Pauli::I.matrix()).unwrap();
        let img = u.adjoint().unwrap().matmul(&xi).unwrap().matmul(&u).unwrap();
        let rule = rzz_rules()[4 * Pauli::X.index()];
        let expect = pauli_string_matrix(&[rule.first, rule.second]);
        let mut signed = expect.clone();
        signed.scale(rule.sign);
        assert!(close(&img, &signed));
        assert_eq!((rule.first, rule.second, rule.sign), (Pauli::Y, Pauli::Z, 1.0));
    }

    #[test]
    fn superop_columns_match_dense_conjugation_exhaustively() {
        let th = 1.1;
        let u1 = rx_unitary(th);
        let s1 = rx_superop(th);
        for b in Pauli::ALL {
            let img = u1.adjoint().unwrap().matmul(&b.matrix()).unwrap().matmul(&u1).unwrap();
            let mut sum = Tensor::<Complex64>::zeros(vec![2, 2]);
            for a in Pauli::ALL {
                let mut term = a.matrix();
                term.scale(s1[a.index()][b.index()]);
                for (x, y) in sum.data_mut().iter_mut().zip(term.data()) {
                    *x += *y;
                }
            }
            assert!(close(&img, &sum), "R_X rule for {b}");
        }
        let u2 = rzz_unitary();
        for (k, rule) in rzz_rules().iter().enumerate() {
            let input = pauli_string_matrix(&[Pauli::from_index(k / 4), Pauli::from_index(k % 4)]);
            let img = u2.adjoint().unwrap().matmul(&input).unwrap().matmul(&u2).unwrap();
            let mut expect = pauli_string_matrix(&[rule.first, rule.second]);
            expect.scale(rule.sign);
            assert!(close(&img, &expect), "R_ZZ rule {k}");
        }
    }

    #[test]
    fn ryy_identities() {
        let rx = rx_unitary(FRAC_PI_2);
        let rx2 = rx.kron(&rx).unwrap();
        let lhs = rx2.matmul(&rzz_unitary()).unwrap();
        let rhs = ryy_unitary().matmul(&rx2).unwrap();
        assert!(close(&lhs, &rhs));
        // and the mirrored identity R_X(π/2) R_YY = R_ZZ R_X(π/2)
        let lhs = rx2.matmul(&ryy_unitary()).unwrap();
        let rhs = rzz_unitary().matmul(&rx2).unwrap();
        assert!(close(&lhs, &rhs));
    }
}
