//! Gate-level intermediate representation.
//!
//! A [`Circuit`] is an ordered list of [`Instruction`]s over `num_qubits`
//! qubits and `num_clbits` classical bits. Instructions may be conditioned
//! on a classical bit; conditions and measurements serialize against each
//! other on the shared bit, both in validation and in depth packing.

mod text;

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::statevector::NoiseKind;

/// Classical condition: execute only when `cbit` holds `value`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Condition {
    pub cbit: usize,
    pub value: u8,
}

/// The instruction alphabet understood by the device model.
#[derive(Clone, Debug, PartialEq)]
pub enum InstructionKind {
    H(usize),
    X(usize),
    SDagger(usize),
    Rz {
        theta: f64,
        qubit: usize,
    },
    Ry {
        theta: f64,
        qubit: usize,
    },
    Cnot {
        control: usize,
        target: usize,
    },
    /// Diagonal phase e^{i lambda power} on components with control = target = 1.
    CPhasePow {
        lambda: f64,
        power: u64,
        control: usize,
        target: usize,
    },
    Measure {
        qubit: usize,
        cbit: usize,
    },
    Reset(usize),
    Noise {
        kind: NoiseKind,
        p: f64,
        qubit: usize,
    },
    /// Prepare (|0> + e^{i theta} |1>)/sqrt(2) on a fresh qubit.
    PrepPhase {
        theta: f64,
        qubit: usize,
    },
}

/// One instruction plus an optional classical condition.
#[derive(Clone, Debug, PartialEq)]
pub struct Instruction {
    pub kind: InstructionKind,
    pub condition: Option<Condition>,
}

impl Instruction {
    pub fn new(kind: InstructionKind) -> Self {
        Instruction {
            kind,
            condition: None,
        }
    }

    pub fn h(qubit: usize) -> Self {
        Self::new(InstructionKind::H(qubit))
    }

    pub fn x(qubit: usize) -> Self {
        Self::new(InstructionKind::X(qubit))
    }

    pub fn s_dagger(qubit: usize) -> Self {
        Self::new(InstructionKind::SDagger(qubit))
    }

    pub fn rz(theta: f64, qubit: usize) -> Self {
        Self::new(InstructionKind::Rz { theta, qubit })
    }

    pub fn ry(theta: f64, qubit: usize) -> Self {
        Self::new(InstructionKind::Ry { theta, qubit })
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        Self::new(InstructionKind::Cnot { control, target })
    }

    pub fn cphase_pow(lambda: f64, power: u64, control: usize, target: usize) -> Self {
        Self::new(InstructionKind::CPhasePow {
            lambda,
            power,
            control,
            target,
        })
    }

    pub fn measure(qubit: usize, cbit: usize) -> Self {
        Self::new(InstructionKind::Measure { qubit, cbit })
    }

    pub fn reset(qubit: usize) -> Self {
        Self::new(InstructionKind::Reset(qubit))
    }

    pub fn noise(kind: NoiseKind, p: f64, qubit: usize) -> Self {
        Self::new(InstructionKind::Noise { kind, p, qubit })
    }

    pub fn prep_phase(theta: f64, qubit: usize) -> Self {
        Self::new(InstructionKind::PrepPhase { theta, qubit })
    }

    /// Condition this instruction on a classical bit value.
    pub fn when(mut self, cbit: usize, value: u8) -> Self {
        self.condition = Some(Condition { cbit, value });
        self
    }

    /// Qubits touched, in role order.
    pub fn qubits(&self) -> Vec<usize> {
        use InstructionKind::*;
        match self.kind {
            H(q) | X(q) | SDagger(q) | Reset(q) => vec![q],
            Rz { qubit, .. } | Ry { qubit, .. } | PrepPhase { qubit, .. } => vec![qubit],
            Noise { qubit, .. } => vec![qubit],
            Measure { qubit, .. } => vec![qubit],
            Cnot { control, target } => vec![control, target],
            CPhasePow {
                control, target, ..
            } => vec![control, target],
        }
    }

    /// Classical bit read by the condition, if any.
    pub fn creg_read(&self) -> Option<usize> {
        self.condition.map(|c| c.cbit)
    }

    /// Classical bit written, if this is a measurement.
    pub fn creg_write(&self) -> Option<usize> {
        match self.kind {
            InstructionKind::Measure { cbit, .. } => Some(cbit),
            _ => None,
        }
    }

    /// True for unitary gate instructions (the ones that attract gate noise).
    pub fn is_gate(&self) -> bool {
        !matches!(
            self.kind,
            InstructionKind::Measure { .. }
                | InstructionKind::Reset(_)
                | InstructionKind::Noise { .. }
        )
    }

    /// True when the instruction acts diagonally on `qubit` in the
    /// computational basis, so it commutes with any other diagonal action
    /// on the same qubit. A CNOT is diagonal on its control.
    pub fn is_diagonal_on(&self, qubit: usize) -> bool {
        use InstructionKind::*;
        match self.kind {
            CPhasePow {
                control, target, ..
            } => qubit == control || qubit == target,
            Rz { qubit: q, .. } => qubit == q,
            SDagger(q) => qubit == q,
            Cnot { control, .. } => qubit == control,
            _ => false,
        }
    }

    fn angle(&self) -> Option<f64> {
        use InstructionKind::*;
        match self.kind {
            Rz { theta, .. } | Ry { theta, .. } | PrepPhase { theta, .. } => Some(theta),
            CPhasePow { lambda, .. } => Some(lambda),
            _ => None,
        }
    }
}

/// A validation finding; an empty list of diagnostics means executable.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    /// Index of the offending instruction.
    pub instruction: usize,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "instruction {}: {}", self.instruction, self.message)
    }
}

/// Exact resource usage of a circuit.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Footprint {
    pub qubits: BTreeSet<usize>,
    pub creg_reads: BTreeSet<usize>,
    pub creg_writes: BTreeSet<usize>,
}

/// An ordered instruction list over a quantum and a classical register.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Circuit {
    pub num_qubits: usize,
    pub num_clbits: usize,
    pub instructions: Vec<Instruction>,
}

impl Circuit {
    pub fn new(num_qubits: usize, num_clbits: usize) -> Self {
        Circuit {
            num_qubits,
            num_clbits,
            instructions: Vec::new(),
        }
    }

    pub fn push(&mut self, instruction: Instruction) -> &mut Self {
        self.instructions.push(instruction);
        self
    }

    pub fn h(&mut self, qubit: usize) -> &mut Self {
        self.push(Instruction::h(qubit))
    }

    pub fn x(&mut self, qubit: usize) -> &mut Self {
        self.push(Instruction::x(qubit))
    }

    pub fn s_dagger(&mut self, qubit: usize) -> &mut Self {
        self.push(Instruction::s_dagger(qubit))
    }

    pub fn rz(&mut self, theta: f64, qubit: usize) -> &mut Self {
        self.push(Instruction::rz(theta, qubit))
    }

    pub fn ry(&mut self, theta: f64, qubit: usize) -> &mut Self {
        self.push(Instruction::ry(theta, qubit))
    }

    pub fn cnot(&mut self, control: usize, target: usize) -> &mut Self {
        self.push(Instruction::cnot(control, target))
    }

    pub fn cphase_pow(
        &mut self,
        lambda: f64,
        power: u64,
        control: usize,
        target: usize,
    ) -> &mut Self {
        self.push(Instruction::cphase_pow(lambda, power, control, target))
    }

    pub fn measure(&mut self, qubit: usize, cbit: usize) -> &mut Self {
        self.push(Instruction::measure(qubit, cbit))
    }

    pub fn reset(&mut self, qubit: usize) -> &mut Self {
        self.push(Instruction::reset(qubit))
    }

    pub fn noise(&mut self, kind: NoiseKind, p: f64, qubit: usize) -> &mut Self {
        self.push(Instruction::noise(kind, p, qubit))
    }

    pub fn prep_phase(&mut self, theta: f64, qubit: usize) -> &mut Self {
        self.push(Instruction::prep_phase(theta, qubit))
    }

    /// Append another circuit's instructions (registers must already cover it).
    pub fn extend(&mut self, other: &Circuit) -> &mut Self {
        self.instructions.extend(other.instructions.iter().cloned());
        self
    }

    /// Number of measurement instructions.
    pub fn num_measurements(&self) -> usize {
        self.instructions
            .iter()
            .filter(|i| matches!(i.kind, InstructionKind::Measure { .. }))
            .count()
    }

    /// Check every invariant; returns all violations found.
    pub fn validate(&self) -> Vec<Diagnostic> {
        self.validate_with_written(&BTreeSet::new())
    }

    /// Validation for fragments executed mid-session: bits in `pre_written`
    /// count as already written by earlier fragments.
    pub fn validate_with_written(&self, pre_written: &BTreeSet<usize>) -> Vec<Diagnostic> {
        let mut diagnostics = Vec::new();
        let mut written = pre_written.clone();
        for (idx, instr) in self.instructions.iter().enumerate() {
            let qubits = instr.qubits();
            for &q in &qubits {
                if q >= self.num_qubits {
                    diagnostics.push(Diagnostic {
                        instruction: idx,
                        message: format!("qubit q{q} out of range"),
                    });
                }
            }
            if qubits.len() == 2 && qubits[0] == qubits[1] {
                diagnostics.push(Diagnostic {
                    instruction: idx,
                    message: format!("duplicate qubit q{} in one instruction", qubits[0]),
                });
            }
            if let Some(cbit) = instr.creg_write() {
                if cbit >= self.num_clbits {
                    diagnostics.push(Diagnostic {
                        instruction: idx,
                        message: format!("creg out of range (c{cbit} of {})", self.num_clbits),
                    });
                }
            }
            if let Some(cond) = instr.condition {
                if cond.cbit >= self.num_clbits {
                    diagnostics.push(Diagnostic {
                        instruction: idx,
                        message: format!(
                            "creg out of range (condition on c{} of {})",
                            cond.cbit, self.num_clbits
                        ),
                    });
                } else if !written.contains(&cond.cbit) {
                    diagnostics.push(Diagnostic {
                        instruction: idx,
                        message: format!("condition reads unwritten bit c{}", cond.cbit),
                    });
                }
                if cond.value > 1 {
                    diagnostics.push(Diagnostic {
                        instruction: idx,
                        message: format!("condition value {} is not a bit", cond.value),
                    });
                }
            }
            if let InstructionKind::Noise { p, .. } = instr.kind {
                if !(0.0..=1.0).contains(&p) {
                    diagnostics.push(Diagnostic {
                        instruction: idx,
                        message: format!("noise probability {p} outside [0, 1]"),
                    });
                }
            }
            if let InstructionKind::CPhasePow { power, .. } = instr.kind {
                if power == 0 {
                    diagnostics.push(Diagnostic {
                        instruction: idx,
                        message: "phase power must be at least 1".into(),
                    });
                }
            }
            if let Some(angle) = instr.angle() {
                if !angle.is_finite() {
                    diagnostics.push(Diagnostic {
                        instruction: idx,
                        message: format!("angle {angle} is not finite"),
                    });
                }
            }
            if let Some(cbit) = instr.creg_write() {
                written.insert(cbit);
            }
        }
        diagnostics
    }

    /// Shorthand turning diagnostics into an error.
    pub fn ensure_valid(&self) -> Result<()> {
        let diagnostics = self.validate();
        if diagnostics.is_empty() {
            Ok(())
        } else {
            let joined = diagnostics
                .iter()
                .map(Diagnostic::to_string)
                .collect::<Vec<_>>()
                .join("; ");
            Err(Error::InvalidCircuit(joined))
        }
    }

    /// Resources an instruction occupies for depth packing: its qubits plus,
    /// for measurements and conditioned instructions, the classical bits.
    fn packing_resources(&self, instr: &Instruction) -> (Vec<usize>, Vec<usize>) {
        let mut cregs = Vec::new();
        if let Some(c) = instr.creg_read() {
            cregs.push(c);
        }
        if let Some(c) = instr.creg_write() {
            cregs.push(c);
        }
        (instr.qubits(), cregs)
    }

    /// Moment index of each instruction under greedy as-soon-as-possible
    /// packing: an instruction lands in the earliest moment where none of
    /// its resources are in use.
    pub fn moment_assignment(&self) -> Vec<usize> {
        let mut qubit_next = vec![0usize; self.num_qubits];
        let mut creg_next = vec![0usize; self.num_clbits];
        let mut moments = Vec::with_capacity(self.instructions.len());
        for instr in &self.instructions {
            let (qubits, cregs) = self.packing_resources(instr);
            let mut moment = 0;
            for &q in &qubits {
                moment = moment.max(qubit_next[q]);
            }
            for &c in &cregs {
                moment = moment.max(creg_next[c]);
            }
            for &q in &qubits {
                qubit_next[q] = moment + 1;
            }
            for &c in &cregs {
                creg_next[c] = moment + 1;
            }
            moments.push(moment);
        }
        moments
    }

    /// Instruction indices grouped by moment.
    pub fn moments(&self) -> Vec<Vec<usize>> {
        let assignment = self.moment_assignment();
        let depth = assignment.iter().map(|m| m + 1).max().unwrap_or(0);
        let mut grouped = vec![Vec::new(); depth];
        for (idx, &m) in assignment.iter().enumerate() {
            grouped[m].push(idx);
        }
        grouped
    }

    /// Number of moments under greedy ASAP packing.
    pub fn depth(&self) -> usize {
        self.moment_assignment()
            .iter()
            .map(|m| m + 1)
            .max()
            .unwrap_or(0)
    }

    /// Exact sets of touched qubits and classical bits.
    pub fn footprint(&self) -> Footprint {
        let mut fp = Footprint::default();
        for instr in &self.instructions {
            fp.qubits.extend(instr.qubits());
            if let Some(c) = instr.creg_read() {
                fp.creg_reads.insert(c);
            }
            if let Some(c) = instr.creg_write() {
                fp.creg_writes.insert(c);
            }
        }
        fp
    }
}

impl fmt::Display for Circuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Inverse quantum Fourier transform on `m` qubits, without swap gates.
///
/// Gate order: for qubit j from m-1 down to 0, the already-processed higher
/// qubits i > j contribute a controlled phase of -pi / 2^(i-j) onto qubit j,
/// followed by H on qubit j. Because the swap network is omitted, the output
/// is bit-reversed relative to the swap-ful transform; apply
/// [`iqft_readout_permutation`] to measured bits in classical post-processing.
pub fn build_iqft(m: usize) -> Result<Circuit> {
    if m == 0 || m > 10 {
        return Err(Error::BadPrecision(m));
    }
    let mut circuit = Circuit::new(m, 0);
    for j in (0..m).rev() {
        for i in (j + 1)..m {
            let lambda = -std::f64::consts::PI / (1u64 << (i - j)) as f64;
            circuit.cphase_pow(lambda, 1, i, j);
        }
        circuit.h(j);
    }
    Ok(circuit)
}

/// The readout relabeling recorded by [`build_iqft`]: measured qubit `j`
/// carries the bit the swap-ful transform would place on qubit `m - 1 - j`.
pub fn iqft_readout_permutation(m: usize) -> Vec<usize> {
    (0..m).map(|j| m - 1 - j).collect()
}
