//! Line-oriented textual circuit format.
//!
//! One instruction per line after a `qubits N clbits M` header, e.g.
//!
//! ```text
//! qubits 2 clbits 1
//! h q0
//! cphasepow lambda=-1.5707963267948966e0 k=1 q1 q0
//! measure q0 -> c0
//! x q1 if c0=1
//! ```
//!
//! Angles are written with 17 significant digits so parsing reproduces the
//! exact f64 bit pattern.

use super::{Circuit, Instruction, InstructionKind};
use crate::error::{Error, Result};
use crate::statevector::NoiseKind;

fn fmt_angle(x: f64) -> String {
    format!("{x:.16e}")
}

impl Circuit {
    /// Render the circuit in the line format; inverse of [`Circuit::parse_text`].
    pub fn to_text(&self) -> String {
        let mut out = format!("qubits {} clbits {}\n", self.num_qubits, self.num_clbits);
        for instr in &self.instructions {
            out.push_str(&render_instruction(instr));
            out.push('\n');
        }
        out
    }

    /// Parse the line format produced by [`Circuit::to_text`].
    pub fn parse_text(text: &str) -> Result<Circuit> {
        let mut circuit: Option<Circuit> = None;
        for (line_idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let lineno = line_idx + 1;
            match &mut circuit {
                None => circuit = Some(parse_header(line, lineno)?),
                Some(c) => {
                    let instr = parse_instruction(line, lineno)?;
                    c.push(instr);
                }
            }
        }
        circuit.ok_or_else(|| Error::Parse {
            line: 0,
            message: "missing `qubits N clbits M` header".into(),
        })
    }
}

fn render_instruction(instr: &Instruction) -> String {
    use InstructionKind::*;
    let mut line = match &instr.kind {
        H(q) => format!("h q{q}"),
        X(q) => format!("x q{q}"),
        SDagger(q) => format!("sdg q{q}"),
        Rz { theta, qubit } => format!("rz theta={} q{qubit}", fmt_angle(*theta)),
        Ry { theta, qubit } => format!("ry theta={} q{qubit}", fmt_angle(*theta)),
        Cnot { control, target } => format!("cnot q{control} q{target}"),
        CPhasePow {
            lambda,
            power,
            control,
            target,
        } => format!(
            "cphasepow lambda={} k={power} q{control} q{target}",
            fmt_angle(*lambda)
        ),
        Measure { qubit, cbit } => format!("measure q{qubit} -> c{cbit}"),
        Reset(q) => format!("reset q{q}"),
        Noise { kind, p, qubit } => {
            let name = match kind {
                NoiseKind::BitFlip => "bitflip",
                NoiseKind::Depolarizing => "depol",
            };
            format!("noise {name} p={} q{qubit}", fmt_angle(*p))
        }
        PrepPhase { theta, qubit } => format!("prepphase theta={} q{qubit}", fmt_angle(*theta)),
    };
    if let Some(cond) = instr.condition {
        line.push_str(&format!(" if c{}={}", cond.cbit, cond.value));
    }
    line
}

fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_header(line: &str, lineno: usize) -> Result<Circuit> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    match tokens.as_slice() {
        ["qubits", q, "clbits", c] => {
            let num_qubits = q
                .parse()
                .map_err(|_| parse_error(lineno, format!("bad qubit count `{q}`")))?;
            let num_clbits = c
                .parse()
                .map_err(|_| parse_error(lineno, format!("bad clbit count `{c}`")))?;
            Ok(Circuit::new(num_qubits, num_clbits))
        }
        _ => Err(parse_error(
            lineno,
            format!("expected `qubits N clbits M`, found `{line}`"),
        )),
    }
}

fn parse_register(token: &str, prefix: char, lineno: usize) -> Result<usize> {
    token
        .strip_prefix(prefix)
        .and_then(|rest| rest.parse().ok())
        .ok_or_else(|| parse_error(lineno, format!("expected {prefix}<index>, found `{token}`")))
}

fn parse_value(token: &str, key: &str, lineno: usize) -> Result<f64> {
    let rest = token
        .strip_prefix(key)
        .and_then(|r| r.strip_prefix('='))
        .ok_or_else(|| parse_error(lineno, format!("expected {key}=<value>, found `{token}`")))?;
    rest.parse()
        .map_err(|_| parse_error(lineno, format!("bad number `{rest}`")))
}

fn parse_instruction(line: &str, lineno: usize) -> Result<Instruction> {
    let mut tokens: Vec<&str> = line.split_whitespace().collect();

    // Peel a trailing `if cN=V` condition.
    let mut condition = None;
    if tokens.len() >= 2 && tokens[tokens.len() - 2] == "if" {
        let spec = tokens[tokens.len() - 1];
        let (reg, value) = spec
            .split_once('=')
            .ok_or_else(|| parse_error(lineno, format!("bad condition `{spec}`")))?;
        let cbit = parse_register(reg, 'c', lineno)?;
        let value: u8 = value
            .parse()
            .map_err(|_| parse_error(lineno, format!("bad condition value `{value}`")))?;
        condition = Some((cbit, value));
        tokens.truncate(tokens.len() - 2);
    }

    let instr = match tokens.as_slice() {
        ["h", q] => Instruction::h(parse_register(q, 'q', lineno)?),
        ["x", q] => Instruction::x(parse_register(q, 'q', lineno)?),
        ["sdg", q] => Instruction::s_dagger(parse_register(q, 'q', lineno)?),
        ["rz", theta, q] => Instruction::rz(
            parse_value(theta, "theta", lineno)?,
            parse_register(q, 'q', lineno)?,
        ),
        ["ry", theta, q] => Instruction::ry(
            parse_value(theta, "theta", lineno)?,
            parse_register(q, 'q', lineno)?,
        ),
        ["cnot", c, t] => Instruction::cnot(
            parse_register(c, 'q', lineno)?,
            parse_register(t, 'q', lineno)?,
        ),
        ["cphasepow", lambda, k, c, t] => {
            let power = k
                .strip_prefix("k=")
                .and_then(|r| r.parse().ok())
                .ok_or_else(|| parse_error(lineno, format!("expected k=<int>, found `{k}`")))?;
            Instruction::cphase_pow(
                parse_value(lambda, "lambda", lineno)?,
                power,
                parse_register(c, 'q', lineno)?,
                parse_register(t, 'q', lineno)?,
            )
        }
        ["measure", q, "->", c] => Instruction::measure(
            parse_register(q, 'q', lineno)?,
            parse_register(c, 'c', lineno)?,
        ),
        ["reset", q] => Instruction::reset(parse_register(q, 'q', lineno)?),
        ["noise", kind, p, q] => {
            let noise_kind = match *kind {
                "bitflip" => NoiseKind::BitFlip,
                "depol" => NoiseKind::Depolarizing,
                other => return Err(parse_error(lineno, format!("unknown noise kind `{other}`"))),
            };
            Instruction::noise(
                noise_kind,
                parse_value(p, "p", lineno)?,
                parse_register(q, 'q', lineno)?,
            )
        }
        ["prepphase", theta, q] => Instruction::prep_phase(
            parse_value(theta, "theta", lineno)?,
            parse_register(q, 'q', lineno)?,
        ),
        _ => return Err(parse_error(lineno, format!("unknown instruction `{line}`"))),
    };

    Ok(match condition {
        Some((cbit, value)) => instr.when(cbit, value),
        None => instr,
    })
}
