//! Dense statevector simulation, the ground truth for small lattices.
//!
//! Qubit `q` is bit `q` of the amplitude index (little-endian).

use num_complex::Complex64;
use rayon::prelude::*;

use crate::circuit::{CircuitSpec, Layer};
use crate::error::{Error, Result};
use crate::gates::{rx_unitary, ryy_unitary, rzz_unitary};
use crate::lattice::Lattice;
use crate::pauli::PauliSum;
use crate::tensor::Tensor;

/// 2^24 amplitudes, 256 MiB.
pub const DEFAULT_QUBIT_CAP: usize = 24;

const NORM_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GateKind {
    Rzz,
    Rx(f64),
    Ryy,
}

/// Dense unitary: 2×2 for `Rx`, 4×4 (first qubit most significant) otherwise.
pub fn gate_unitary(kind: GateKind) -> Tensor<Complex64> {
    match kind {
        GateKind::Rzz => rzz_unitary(),
        GateKind::Rx(theta) => rx_unitary(theta),
        GateKind::Ryy => ryy_unitary(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// `|0…0⟩` on `n` qubits.
    pub fn zero(n: usize, cap: usize) -> Result<Self> {
        if n > cap {
            return Err(Error::ResourceLimit(format!(
                "{n} qubits exceed the statevector cap of {cap}"
            )));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(StateVector { num_qubits: n, amps })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    /// Σ|a|², compensated so that the norm check measures the state and not
    /// the summation.
    pub fn norm_sq(&self) -> f64 {
        let partial: Vec<(f64, f64)> = self
            .amps
            .par_chunks(1 << 12)
            .map(|c| neumaier(c.iter().map(|a| a.norm_sqr())))
            .collect();
        let (s, comp) = neumaier(partial.iter().flat_map(|&(s, c)| [s, c]));
        s + comp
    }

    /// Applies a 2×2 unitary to qubit `q`.
    pub fn apply_1q(&mut self, q: usize, u: &Tensor<Complex64>) {
        let m = u.data();
        let (u00, u01, u10, u11) = (m[0], m[1], m[2], m[3]);
        let bit = 1 << q;
        self.amps.par_chunks_mut(2 * bit).for_each(|chunk| {
            let (lo, hi) = chunk.split_at_mut(bit);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = u00 * x + u01 * y;
                *b = u10 * x + u11 * y;
            }
        });
    }

    /// Applies a 4×4 unitary to qubits `(a, b)`, `a` the more significant
    /// factor of the matrix.
    pub fn apply_2q(&mut self, a: usize, b: usize, u: &Tensor<Complex64>) {
        let m = u.data();
        let (ba, bb) = (1usize << a, 1usize << b);
        for i in 0..self.amps.len() {
            if i & ba != 0 || i & bb != 0 {
                continue;
            }
            let idx = [i, i | bb, i | ba, i | ba | bb];
            let v = idx.map(|k| self.amps[k]);
            for r in 0..4 {
                self.amps[idx[r]] = (0..4).map(|c| m[4 * r + c] * v[c]).sum();
            }
        }
    }

    /// `R_ZZ` on every edge at once; it is diagonal with phase
    /// `exp(iπ/4 Σ_edges z_a z_b)`, `z = ±1`.
    pub fn apply_rzz_layer(&mut self, edges: &[(usize, usize)]) {
        let phases: Vec<Complex64> = (0..=2 * edges.len())
            .map(|k| Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_4 * (k as f64 - edges.len() as f64)))
            .collect();
        let n_edges = edges.len();
        self.amps.par_iter_mut().enumerate().for_each(|(i, amp)| {
            let unequal = edges
                .iter()
                .filter(|&&(a, b)| ((i >> a) ^ (i >> b)) & 1 == 1)
                .count();
            // Σ z_a z_b = equal - unequal
            *amp *= phases[n_edges + (n_edges - unequal) - unequal];
        });
    }

    pub fn apply_rx_layer(&mut self, theta: f64) {
        let u = rx_unitary(theta);
        for q in 0..self.num_qubits {
            self.apply_1q(q, &u);
        }
    }

    /// `⟨ψ| Σ c P |ψ⟩`; the imaginary residue must vanish.
    pub fn expectation(&self, obs: &PauliSum) -> Result<f64> {
        let mut total = Complex64::new(0.0, 0.0);
        for t in obs.terms() {
            if let Some(m) = t.string.max_site() {
                if m >= self.num_qubits {
                    return Err(Error::Observable(format!(
                        "site {m} outside a {}-qubit state",
                        self.num_qubits
                    )));
                }
            }
            let x = t.string.x_mask() as usize;
            let z = t.string.z_mask() as usize;
            let ny = (x & z).count_ones();
            let phase = [
                Complex64::new(1.0, 0.0),
                Complex64::new(0.0, 1.0),
                Complex64::new(-1.0, 0.0),
                Complex64::new(0.0, -1.0),
            ][(ny % 4) as usize];
            // P|i⟩ = i^{nY} (-1)^{|i ∧ z|} |i ⊕ x⟩
            let v: Complex64 = self
                .amps
                .par_iter()
                .enumerate()
                .map(|(i, &a)| {
                    let s = if (i & z).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                    self.amps[i ^ x].conj() * a * s
                })
                .sum();
            total += v * phase * t.coeff;
        }
        if total.im.abs() > 1e-10 {
            return Err(Error::NonFinite("statevector expectation (complex residue)"));
        }
        Ok(total.re)
    }

    fn check_norm(&self) -> Result<()> {
        if (self.norm_sq() - 1.0).abs() > NORM_TOL {
            return Err(Error::NonFinite("statevector norm drifted"));
        }
        Ok(())
    }
}

/// Compensated sum: `(sum, correction)`.
fn neumaier(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    (sum, comp)
}

/// Evolves `|0…0⟩` through the circuit in gate order and returns `⟨O⟩`.
pub fn statevector_expectation(lattice: &Lattice, circuit: &CircuitSpec, obs: &PauliSum) -> Result<f64> {
    statevector_expectation_capped(lattice, circuit, obs, DEFAULT_QUBIT_CAP)
}

pub fn statevector_expectation_capped(
    lattice: &Lattice,
    circuit: &CircuitSpec,
    obs: &PauliSum,
    qubit_cap: usize,
) -> Result<f64> {
    let mut psi = StateVector::zero(lattice.num_sites(), qubit_cap)?;
    for layer in circuit.schrodinger_layers() {
        match layer {
            Layer::Rx(theta) => psi.apply_rx_layer(theta),
            Layer::Rzz => psi.apply_rzz_layer(lattice.edges()),
        }
        psi.check_norm()?;
    }
    psi.expectation(obs)
}
