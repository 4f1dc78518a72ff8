//! Exact complex-amplitude simulation of an n-qubit register.
//!
//! Basis convention: bit `k` of a basis-state index is the value of qubit
//! `k`, so qubit 0 is the least-significant bit. All unitaries preserve the
//! norm to within [`NORM_TOL`]; measurement and reset renormalize.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::rng::StreamRng;

/// Complex amplitude of one basis state.
pub type Amplitude = Complex64;

/// Largest register the simulator accepts (2^24 amplitudes).
pub const MAX_QUBITS: usize = 24;

/// Tolerance for unitarity checks and norm drift.
pub const NORM_TOL: f64 = 1e-10;

/// Norms below this are treated as a degenerate (unusable) state.
pub const MIN_NORM: f64 = 1e-12;

/// Measurement axis for expectation values and basis changes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum PauliAxis {
    X,
    Y,
    Z,
}

/// Stochastic error channels available to trajectory noise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    /// With probability p insert X, Y, or Z uniformly at random.
    Depolarizing,
    /// With probability p insert X.
    BitFlip,
}

/// A 2x2 or 4x4 unitary in row-major order, validated at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct GateMatrix {
    dim: usize,
    entries: Vec<Amplitude>,
}

impl GateMatrix {
    /// Build a gate from row-major entries, rejecting non-unitary input.
    pub fn new(dim: usize, entries: Vec<Amplitude>) -> Result<Self> {
        if dim != 2 && dim != 4 {
            return Err(Error::BadMatrixDimension(dim));
        }
        if entries.len() != dim * dim {
            return Err(Error::BadMatrixDimension(dim));
        }
        let gate = GateMatrix { dim, entries };
        let dev = gate.unitarity_deviation();
        if !dev.is_finite() || dev > NORM_TOL {
            return Err(Error::NonUnitary(dev));
        }
        Ok(gate)
    }

    /// Max-norm of U†U - I.
    pub fn unitarity_deviation(&self) -> f64 {
        let n = self.dim;
        let mut worst = 0.0f64;
        for r in 0..n {
            for c in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..n {
                    acc += self.entries[k * n + r].conj() * self.entries[k * n + c];
                }
                let expected = if r == c { 1.0 } else { 0.0 };
                worst = worst.max((acc - expected).norm());
            }
        }
        worst
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn entry(&self, row: usize, col: usize) -> Amplitude {
        self.entries[row * self.dim + col]
    }

    pub fn hadamard() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self::from_2x2([
            Complex64::new(h, 0.0),
            Complex64::new(h, 0.0),
            Complex64::new(h, 0.0),
            Complex64::new(-h, 0.0),
        ])
    }

    pub fn pauli_x() -> Self {
        Self::from_2x2([
            Complex64::new(0.0, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
        ])
    }

    pub fn pauli_y() -> Self {
        Self::from_2x2([
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, -1.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(0.0, 0.0),
        ])
    }

    pub fn pauli_z() -> Self {
        Self::from_2x2([
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(-1.0, 0.0),
        ])
    }

    /// S† = diag(1, -i).
    pub fn s_dagger() -> Self {
        Self::from_2x2([
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, -1.0),
        ])
    }

    /// Rz(theta) = diag(e^{-i theta/2}, e^{i theta/2}).
    pub fn rz(theta: f64) -> Self {
        Self::from_2x2([
            Complex64::from_polar(1.0, -theta / 2.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::from_polar(1.0, theta / 2.0),
        ])
    }

    pub fn ry(theta: f64) -> Self {
        let c = (theta / 2.0).cos();
        let s = (theta / 2.0).sin();
        Self::from_2x2([
            Complex64::new(c, 0.0),
            Complex64::new(-s, 0.0),
            Complex64::new(s, 0.0),
            Complex64::new(c, 0.0),
        ])
    }

    /// diag(1, e^{i lambda}).
    pub fn phase(lambda: f64) -> Self {
        Self::from_2x2([
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::from_polar(1.0, lambda),
        ])
    }

    /// Maps |0> to (|0> + e^{i theta} |1>)/sqrt(2): the phase-ancilla
    /// preparation, equal to phase(theta) * H.
    pub fn prep_phase(theta: f64) -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let e = Complex64::from_polar(h, theta);
        Self::from_2x2([Complex64::new(h, 0.0), Complex64::new(h, 0.0), e, -e])
    }

    /// CNOT as a 4x4 matrix in the |control target> basis.
    pub fn cnot() -> Self {
        let o = Complex64::new(0.0, 0.0);
        let l = Complex64::new(1.0, 0.0);
        GateMatrix::new(4, vec![l, o, o, o, o, l, o, o, o, o, o, l, o, o, l, o])
            .expect("cnot is unitary")
    }

    fn from_2x2(entries: [Amplitude; 4]) -> Self {
        GateMatrix::new(2, entries.to_vec()).expect("named gates are unitary")
    }
}

/// Normalized complex amplitudes over the 2^n basis states of n qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amps: Vec<Amplitude>,
}

impl StateVector {
    /// Fresh register in |0...0>.
    pub fn new(num_qubits: usize) -> Result<Self> {
        if num_qubits == 0 || num_qubits > MAX_QUBITS {
            return Err(Error::QubitCountOutOfRange(num_qubits));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << num_qubits];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(StateVector { num_qubits, amps })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Amplitude] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.num_qubits {
            return Err(Error::QubitOutOfRange {
                index: qubit,
                num_qubits: self.num_qubits,
            });
        }
        Ok(())
    }

    fn check_pair(&self, control: usize, target: usize) -> Result<()> {
        self.check_qubit(control)?;
        self.check_qubit(target)?;
        if control == target {
            return Err(Error::QubitClash(control));
        }
        Ok(())
    }

    /// Apply a 2x2 unitary to one qubit.
    pub fn apply_1q(&mut self, gate: &GateMatrix, qubit: usize) -> Result<()> {
        if gate.dim() != 2 {
            return Err(Error::BadMatrixDimension(gate.dim()));
        }
        self.check_qubit(qubit)?;
        let u00 = gate.entry(0, 0);
        let u01 = gate.entry(0, 1);
        let u10 = gate.entry(1, 0);
        let u11 = gate.entry(1, 1);
        let step = 1usize << qubit;
        for block in (0..self.amps.len()).step_by(2 * step) {
            for offset in 0..step {
                let lo = block + offset;
                let hi = lo + step;
                let a = self.amps[lo];
                let b = self.amps[hi];
                self.amps[lo] = u00 * a + u01 * b;
                self.amps[hi] = u10 * a + u11 * b;
            }
        }
        Ok(())
    }

    /// Apply a 4x4 unitary; the local basis index is (bit(q1) << 1) | bit(q0).
    pub fn apply_2q(&mut self, gate: &GateMatrix, q1: usize, q0: usize) -> Result<()> {
        if gate.dim() != 4 {
            return Err(Error::BadMatrixDimension(gate.dim()));
        }
        self.check_pair(q1, q0)?;
        let m1 = 1usize << q1;
        let m0 = 1usize << q0;
        for base in 0..self.amps.len() {
            if base & (m1 | m0) != 0 {
                continue;
            }
            let idx = [base, base | m0, base | m1, base | m1 | m0];
            let old = [
                self.amps[idx[0]],
                self.amps[idx[1]],
                self.amps[idx[2]],
                self.amps[idx[3]],
            ];
            for (row, &i) in idx.iter().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for (col, &v) in old.iter().enumerate() {
                    acc += gate.entry(row, col) * v;
                }
                self.amps[i] = acc;
            }
        }
        Ok(())
    }

    /// Multiply amplitudes with control = target = 1 by e^{i lambda power}.
    pub fn apply_controlled_phase_power(
        &mut self,
        lambda: f64,
        power: u64,
        control: usize,
        target: usize,
    ) -> Result<()> {
        if power == 0 {
            return Err(Error::ZeroPower);
        }
        self.check_pair(control, target)?;
        let mask = (1usize << control) | (1usize << target);
        let factor = Complex64::from_polar(1.0, lambda * power as f64);
        for (i, amp) in self.amps.iter_mut().enumerate() {
            if i & mask == mask {
                *amp *= factor;
            }
        }
        Ok(())
    }

    /// Flip the target bit on components where the control bit is 1.
    pub fn apply_cnot(&mut self, control: usize, target: usize) -> Result<()> {
        self.check_pair(control, target)?;
        let cm = 1usize << control;
        let tm = 1usize << target;
        for i in 0..self.amps.len() {
            if i & cm != 0 && i & tm == 0 {
                self.amps.swap(i, i | tm);
            }
        }
        Ok(())
    }

    /// Exact Born probability of reading 1 on `qubit`.
    pub fn probability_of_one(&self, qubit: usize) -> Result<f64> {
        self.check_qubit(qubit)?;
        let mask = 1usize << qubit;
        Ok(self
            .amps
            .iter()
            .enumerate()
            .filter(|(i, _)| i & mask != 0)
            .map(|(_, a)| a.norm_sqr())
            .sum())
    }

    /// Projective measurement with collapse; returns the sampled bit.
    pub fn measure(&mut self, qubit: usize, rng: &mut StreamRng) -> Result<u8> {
        self.check_qubit(qubit)?;
        let total = self.norm_sqr();
        if total < MIN_NORM {
            return Err(Error::DegenerateNorm(total));
        }
        let p_one = self.probability_of_one(qubit)? / total;
        let outcome = u8::from(rng.next_f64() < p_one);
        self.collapse(qubit, outcome)?;
        Ok(outcome)
    }

    /// Post-select a measurement outcome: collapse onto the branch and
    /// return its Born probability. Errors when the branch has no weight.
    pub fn project(&mut self, qubit: usize, outcome: u8) -> Result<f64> {
        self.check_qubit(qubit)?;
        let p_one = self.probability_of_one(qubit)?;
        let p_branch = if outcome == 1 { p_one } else { 1.0 - p_one };
        self.collapse(qubit, outcome)?;
        Ok(p_branch)
    }

    fn collapse(&mut self, qubit: usize, outcome: u8) -> Result<()> {
        let mask = 1usize << qubit;
        let mut kept = 0.0f64;
        for (i, amp) in self.amps.iter_mut().enumerate() {
            let bit = u8::from(i & mask != 0);
            if bit == outcome {
                kept += amp.norm_sqr();
            } else {
                *amp = Complex64::new(0.0, 0.0);
            }
        }
        if kept < MIN_NORM {
            return Err(Error::DegenerateNorm(kept));
        }
        let scale = 1.0 / kept.sqrt();
        for amp in &mut self.amps {
            *amp *= scale;
        }
        Ok(())
    }

    /// Measure and, if the outcome was 1, flip the qubit back to |0>.
    pub fn reset(&mut self, qubit: usize, rng: &mut StreamRng) -> Result<()> {
        let outcome = self.measure(qubit, rng)?;
        if outcome == 1 {
            self.apply_pauli(qubit, PauliAxis::X)?;
        }
        Ok(())
    }

    /// Exact single-qubit Pauli expectation value, no sampling.
    pub fn expectation(&self, qubit: usize, axis: PauliAxis) -> Result<f64> {
        self.check_qubit(qubit)?;
        let mask = 1usize << qubit;
        let mut acc = 0.0f64;
        match axis {
            PauliAxis::Z => {
                for (i, a) in self.amps.iter().enumerate() {
                    let sign = if i & mask == 0 { 1.0 } else { -1.0 };
                    acc += sign * a.norm_sqr();
                }
            }
            PauliAxis::X => {
                for (i, a) in self.amps.iter().enumerate() {
                    if i & mask == 0 {
                        acc += 2.0 * (a.conj() * self.amps[i | mask]).re;
                    }
                }
            }
            PauliAxis::Y => {
                for (i, a) in self.amps.iter().enumerate() {
                    if i & mask == 0 {
                        acc += 2.0 * (a.conj() * self.amps[i | mask]).im;
                    }
                }
            }
        }
        Ok(acc)
    }

    /// Trajectory noise: with probability `p` insert a Pauli error.
    pub fn apply_noise_event(
        &mut self,
        qubit: usize,
        kind: NoiseKind,
        p: f64,
        rng: &mut StreamRng,
    ) -> Result<()> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::BadProbability(p));
        }
        self.check_qubit(qubit)?;
        if !rng.bernoulli(p) {
            return Ok(());
        }
        let axis = match kind {
            NoiseKind::BitFlip => PauliAxis::X,
            NoiseKind::Depolarizing => [PauliAxis::X, PauliAxis::Y, PauliAxis::Z][rng.index(3)],
        };
        self.apply_pauli(qubit, axis)
    }

    fn apply_pauli(&mut self, qubit: usize, axis: PauliAxis) -> Result<()> {
        let gate = match axis {
            PauliAxis::X => GateMatrix::pauli_x(),
            PauliAxis::Y => GateMatrix::pauli_y(),
            PauliAxis::Z => GateMatrix::pauli_z(),
        };
        self.apply_1q(&gate, qubit)
    }
}
