//! Exact statevector simulation of compiled block circuits.
//!
//! Qubit `1` is the most significant bit of a basis index, qubit `k` the least
//! significant. Gate conventions:
//!
//! * `Rz(φ) = diag(e^{-iφ/2}, e^{iφ/2})`
//! * `Rx(φ) = cos(φ/2)·I - i·sin(φ/2)·X`
//! * `R(a, b, c) = Rz(c)·Rx(b)·Rz(a)`, i.e. `Rz(a)` acts first
//! * `CRx(c, t; φ)` applies `Rx(φ)` to `t` when `c` is `|1⟩`

use num_complex::Complex64;

use crate::blockgraph::Path;
use crate::datasets::Label;
use crate::error::{Error, Result};
use crate::gateblock::{BlockLibrary, Gate, GateBlock};
use crate::trainer::{loss, loss_weights};

pub type C64 = Complex64;

/// Tolerance on `Σ|amplitude|² = 1`.
pub const NORM_TOLERANCE: f64 = 1e-10;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    qubits: usize,
    amps: Vec<C64>,
}

impl StateVector {
    /// `|0…0⟩`.
    pub fn zero(qubits: usize) -> Self {
        Self::basis(qubits, 0)
    }

    pub fn basis(qubits: usize, index: usize) -> Self {
        let mut amps = vec![ZERO; 1 << qubits];
        amps[index] = ONE;
        StateVector { qubits, amps }
    }

    /// Wraps `amps` after checking length `2^qubits` and unit norm.
    pub fn from_amplitudes(qubits: usize, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != 1 << qubits {
            return Err(Error::DimensionMismatch {
                what: "amplitude count",
                expected: 1 << qubits,
                actual: amps.len(),
            });
        }
        let state = StateVector { qubits, amps };
        let norm = state.norm_sqr();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::Config(format!("state has squared norm {norm}, expected 1")));
        }
        Ok(state)
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }
}

/// A compiled gate with the offset of its first angle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    /// Angles `param..param+3` in `(first Rz, Rx, second Rz)` order.
    Rot { qubit: usize, param: usize },
    Crx {
        control: usize,
        target: usize,
        param: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamCircuit {
    qubits: usize,
    ops: Vec<Op>,
    param_count: usize,
    depth: usize,
    rot_count: usize,
    crx_count: usize,
    blocks: Vec<usize>,
}

impl ParamCircuit {
    /// Lays out `blocks` in order. `indices` records where each block came from.
    pub fn from_blocks(qubits: usize, blocks: &[&GateBlock], indices: Vec<usize>) -> Result<Self> {
        let mut ops = Vec::new();
        let mut param = 0;
        let (mut rot_count, mut crx_count) = (0, 0);
        for block in blocks {
            if block.k() != qubits {
                return Err(Error::DimensionMismatch {
                    what: "block qubit count",
                    expected: qubits,
                    actual: block.k(),
                });
            }
            for gate in block.gates() {
                match gate {
                    Gate::Rot { qubit } => {
                        ops.push(Op::Rot { qubit, param });
                        param += 3;
                        rot_count += 1;
                    }
                    Gate::Crx { control, target } => {
                        ops.push(Op::Crx {
                            control,
                            target,
                            param,
                        });
                        param += 1;
                        crx_count += 1;
                    }
                }
            }
        }
        Ok(ParamCircuit {
            qubits,
            ops,
            param_count: param,
            depth: blocks.len(),
            rot_count,
            crx_count,
            blocks: indices,
        })
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn ops(&self) -> &[Op] {
        &self.ops
    }

    /// `3·#R + #CRx`.
    pub fn param_count(&self) -> usize {
        self.param_count
    }

    /// Number of blocks.
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn rot_count(&self) -> usize {
        self.rot_count
    }

    pub fn crx_count(&self) -> usize {
        self.crx_count
    }

    /// Library indices of the blocks, in circuit order.
    pub fn block_indices(&self) -> &[usize] {
        &self.blocks
    }
}

/// Compiles a graph path into a circuit over `lib`.
pub fn compile_path(path: &Path, lib: &BlockLibrary) -> Result<ParamCircuit> {
    compile_blocks(path.nodes(), lib)
}

/// Compiles any block sequence; no connection rules are checked.
pub fn compile_blocks(indices: &[usize], lib: &BlockLibrary) -> Result<ParamCircuit> {
    let blocks = indices
        .iter()
        .map(|&i| lib.block(i))
        .collect::<Result<Vec<_>>>()?;
    ParamCircuit::from_blocks(lib.k(), &blocks, indices.to_vec())
}

type Mat2 = [[C64; 2]; 2];

fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[ZERO; 2]; 2];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn dagger(a: &Mat2) -> Mat2 {
    [[a[0][0].conj(), a[1][0].conj()], [a[0][1].conj(), a[1][1].conj()]]
}

pub(crate) fn rz(phi: f64) -> Mat2 {
    let (s, c) = (phi / 2.0).sin_cos();
    [[C64::new(c, -s), ZERO], [ZERO, C64::new(c, s)]]
}

pub(crate) fn rx(phi: f64) -> Mat2 {
    let (s, c) = (phi / 2.0).sin_cos();
    [[C64::new(c, 0.0), C64::new(0.0, -s)], [C64::new(0.0, -s), C64::new(c, 0.0)]]
}

/// `Rz(c)·Rx(b)·Rz(a)`.
pub(crate) fn rot(a: f64, b: f64, c: f64) -> Mat2 {
    mat_mul(&rz(c), &mat_mul(&rx(b), &rz(a)))
}

/// `-i/2` times a Pauli, used for derivatives of rotations.
const HALF_MINUS_I_Z: Mat2 = [[C64::new(0.0, -0.5), ZERO], [ZERO, C64::new(0.0, 0.5)]];
const HALF_MINUS_I_X: Mat2 = [[ZERO, C64::new(0.0, -0.5)], [C64::new(0.0, -0.5), ZERO]];

#[inline]
fn stride(qubits: usize, qubit: usize) -> usize {
    1 << (qubits - qubit)
}

fn apply_1q(amps: &mut [C64], qubits: usize, qubit: usize, m: &Mat2) {
    let s = stride(qubits, qubit);
    let [[m00, m01], [m10, m11]] = *m;
    for chunk in amps.chunks_exact_mut(2 * s) {
        let (lo, hi) = chunk.split_at_mut(s);
        for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
            let (x, y) = (*a, *b);
            *a = m00 * x + m01 * y;
            *b = m10 * x + m11 * y;
        }
    }
}

fn apply_controlled(amps: &mut [C64], qubits: usize, control: usize, target: usize, m: &Mat2) {
    let s = stride(qubits, target);
    let cmask = stride(qubits, control);
    let [[m00, m01], [m10, m11]] = *m;
    for (n, chunk) in amps.chunks_exact_mut(2 * s).enumerate() {
        let base = n * 2 * s;
        let (lo, hi) = chunk.split_at_mut(s);
        if cmask > s {
            // control is more significant than target: whole chunk shares its bit
            if base & cmask == 0 {
                continue;
            }
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = m00 * x + m01 * y;
                *b = m10 * x + m11 * y;
            }
        } else {
            for (i, (a, b)) in lo.iter_mut().zip(hi.iter_mut()).enumerate() {
                if i & cmask == 0 {
                    continue;
                }
                let (x, y) = (*a, *b);
                *a = m00 * x + m01 * y;
                *b = m10 * x + m11 * y;
            }
        }
    }
}

/// `C[a][b] = Σ conj(λ[.., a]) · ψ[.., b]` over the pairs the gate acts on.
fn correlation(lambda: &[C64], psi: &[C64], qubits: usize, target: usize, control: Option<usize>) -> Mat2 {
    let s = stride(qubits, target);
    let cmask = control.map(|c| stride(qubits, c));
    let mut c = [[ZERO; 2]; 2];
    for (n, (lchunk, pchunk)) in lambda.chunks_exact(2 * s).zip(psi.chunks_exact(2 * s)).enumerate() {
        let base = n * 2 * s;
        for i in 0..s {
            if let Some(cm) = cmask {
                if (base + i) & cm == 0 {
                    continue;
                }
            }
            let (l0, l1) = (lchunk[i].conj(), lchunk[i + s].conj());
            let (p0, p1) = (pchunk[i], pchunk[i + s]);
            c[0][0] += l0 * p0;
            c[0][1] += l0 * p1;
            c[1][0] += l1 * p0;
            c[1][1] += l1 * p1;
        }
    }
    c
}

/// `2·Re Σ D_ab C_ab`.
fn contract(d: &Mat2, c: &Mat2) -> f64 {
    2.0 * (d[0][0] * c[0][0] + d[0][1] * c[0][1] + d[1][0] * c[1][0] + d[1][1] * c[1][1]).re
}

fn check_dims(circuit: &ParamCircuit, theta: &[f64], state: &StateVector) -> Result<()> {
    if state.qubits != circuit.qubits {
        return Err(Error::DimensionMismatch {
            what: "state qubit count",
            expected: circuit.qubits,
            actual: state.qubits,
        });
    }
    if theta.len() != circuit.param_count {
        return Err(Error::DimensionMismatch {
            what: "angle vector length",
            expected: circuit.param_count,
            actual: theta.len(),
        });
    }
    Ok(())
}

fn apply_op(amps: &mut [C64], qubits: usize, op: &Op, theta: &[f64]) {
    match *op {
        Op::Rot { qubit, param } => {
            let m = rot(theta[param], theta[param + 1], theta[param + 2]);
            apply_1q(amps, qubits, qubit, &m);
        }
        Op::Crx {
            control,
            target,
            param,
        } => apply_controlled(amps, qubits, control, target, &rx(theta[param])),
    }
}

/// Runs `circuit` with angles `theta` on `state`.
pub fn apply_circuit(circuit: &ParamCircuit, theta: &[f64], state: &StateVector) -> Result<StateVector> {
    check_dims(circuit, theta, state)?;
    let mut out = state.clone();
    for op in &circuit.ops {
        apply_op(&mut out.amps, circuit.qubits, op, theta);
    }
    Ok(out)
}

/// Amplitude-encodes `features` on the first `data_qubits` qubits; the remaining
/// qubits (the readout) start in `|0⟩`.
pub fn amplitude_encode(features: &[f64], data_qubits: usize, total_qubits: usize) -> Result<StateVector> {
    if data_qubits > total_qubits {
        return Err(Error::DimensionMismatch {
            what: "data qubits",
            expected: total_qubits,
            actual: data_qubits,
        });
    }
    let capacity = 1usize << data_qubits;
    if features.len() > capacity {
        return Err(Error::Overflow {
            len: features.len(),
            capacity,
        });
    }
    let norm = features.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroVector);
    }
    let shift = total_qubits - data_qubits;
    let mut amps = vec![ZERO; 1 << total_qubits];
    for (i, &x) in features.iter().enumerate() {
        amps[i << shift] = C64::new(x / norm, 0.0);
    }
    Ok(StateVector {
        qubits: total_qubits,
        amps,
    })
}

/// `(P(qubit = 0), P(qubit = 1))`.
pub fn readout_probs(state: &StateVector, qubit: usize) -> Result<(f64, f64)> {
    if qubit == 0 || qubit > state.qubits {
        return Err(Error::IndexOutOfRange {
            index: qubit,
            size: state.qubits,
        });
    }
    Ok(probs(&state.amps, state.qubits, qubit))
}

fn probs(amps: &[C64], qubits: usize, qubit: usize) -> (f64, f64) {
    let s = stride(qubits, qubit);
    let (mut p0, mut p1) = (0.0, 0.0);
    for chunk in amps.chunks_exact(2 * s) {
        p0 += chunk[..s].iter().map(|a| a.norm_sqr()).sum::<f64>();
        p1 += chunk[s..].iter().map(|a| a.norm_sqr()).sum::<f64>();
    }
    (p0, p1)
}

/// Readout-qubit probabilities of `circuit(theta)|input⟩`; the readout is the last qubit.
pub fn forward_probs(circuit: &ParamCircuit, theta: &[f64], input: &StateVector) -> Result<(f64, f64)> {
    let out = apply_circuit(circuit, theta, input)?;
    Ok(probs(&out.amps, out.qubits, out.qubits))
}

/// Per-sample result of a forward + reverse sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleGradient {
    pub loss: f64,
    pub g1: f64,
    pub g2: f64,
    pub grad: Vec<f64>,
}

/// Scratch buffers for [`Workspace::loss_and_gradient`], reusable across samples.
#[derive(Default, Debug)]
pub struct Workspace {
    states: Vec<Vec<C64>>,
    lambda: Vec<C64>,
}

impl Workspace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loss and its exact gradient for one labelled input, by storing every
    /// intermediate state on the way forward and sweeping the adjoint backward.
    pub fn loss_and_gradient(
        &mut self,
        circuit: &ParamCircuit,
        theta: &[f64],
        input: &StateVector,
        label: Label,
    ) -> Result<SampleGradient> {
        check_dims(circuit, theta, input)?;
        let n = circuit.qubits;
        let m = circuit.ops.len();
        let dim = 1usize << n;
        self.states.resize_with(m + 1, Vec::new);
        self.states[0].clear();
        self.states[0].extend_from_slice(&input.amps);
        for (j, op) in circuit.ops.iter().enumerate() {
            let (done, rest) = self.states.split_at_mut(j + 1);
            let next = &mut rest[0];
            next.clear();
            next.extend_from_slice(&done[j]);
            apply_op(next, n, op, theta);
        }
        let out = &self.states[m];
        let (g1, g2) = probs(out, n, n);
        let loss = loss(g1, g2, label);
        let (w1, w2) = loss_weights(g1, g2, label);

        // λ = ∂L/∂ψ*: readout bit 0 weighted by w1, bit 1 by w2.
        self.lambda.clear();
        self.lambda.extend(
            out.iter()
                .enumerate()
                .map(|(i, a)| if i & 1 == 0 { a * w1 } else { a * w2 }),
        );
        debug_assert_eq!(self.lambda.len(), dim);

        let mut grad = vec![0.0; circuit.param_count];
        for (j, op) in circuit.ops.iter().enumerate().rev() {
            let psi = &self.states[j];
            match *op {
                Op::Rot { qubit, param } => {
                    let (a, b, c) = (theta[param], theta[param + 1], theta[param + 2]);
                    let corr = correlation(&self.lambda, psi, n, qubit, None);
                    let (za, xb, zc) = (rz(a), rx(b), rz(c));
                    let u = mat_mul(&zc, &mat_mul(&xb, &za));
                    let da = mat_mul(&u, &HALF_MINUS_I_Z);
                    let db = mat_mul(&zc, &mat_mul(&mat_mul(&xb, &HALF_MINUS_I_X), &za));
                    let dc = mat_mul(&HALF_MINUS_I_Z, &u);
                    grad[param] = contract(&da, &corr);
                    grad[param + 1] = contract(&db, &corr);
                    grad[param + 2] = contract(&dc, &corr);
                    apply_1q(&mut self.lambda, n, qubit, &dagger(&u));
                }
                Op::Crx {
                    control,
                    target,
                    param,
                } => {
                    let u = rx(theta[param]);
                    let corr = correlation(&self.lambda, psi, n, target, Some(control));
                    grad[param] = contract(&mat_mul(&u, &HALF_MINUS_I_X), &corr);
                    apply_controlled(&mut self.lambda, n, control, target, &dagger(&u));
                }
            }
        }
        Ok(SampleGradient { loss, g1, g2, grad })
    }
}

/// Exact gradient of the cross-entropy loss of one sample with respect to `theta`.
pub fn gradient(circuit: &ParamCircuit, theta: &[f64], input: &StateVector, label: Label) -> Result<Vec<f64>> {
    Ok(Workspace::new().loss_and_gradient(circuit, theta, input, label)?.grad)
}
