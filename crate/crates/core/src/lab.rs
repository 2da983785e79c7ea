//! Dense density matrices and channels for small qubit registers.
//!
//! Qubit 0 is the most significant bit of a basis index. Everything here is
//! exact linear algebra on at most [`MAX_QUBITS`] qubits and is meant for
//! verifying channel identities, not for simulation at scale.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_probability, Error, Result};
use crate::lattice::TorusLattice;

pub type C64 = Complex<f64>;
pub type Matrix = DMatrix<C64>;

pub const MAX_QUBITS: usize = 12;

const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;
const TP_TOL: f64 = 1e-10;
const ZERO_EIGENVALUE: f64 = 1e-12;
const PINV_CUTOFF: f64 = 1e-10;
const PRUNE_NORM: f64 = 1e-14;

fn c(re: f64) -> C64 {
    Complex::new(re, 0.0)
}

fn check_cap(qubits: usize) -> Result<()> {
    if qubits > MAX_QUBITS {
        Err(Error::TooManyQubits {
            qubits,
            cap: MAX_QUBITS,
        })
    } else {
        Ok(())
    }
}

fn qubits_of(dim: usize) -> Option<usize> {
    dim.is_power_of_two().then(|| dim.trailing_zeros() as usize)
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
///
/// Uses faer: the nalgebra symmetric eigensolver returns non-finite values
/// on some sparse rank-one inputs that occur here routinely.
pub fn hermitian_eigen(m: &Matrix) -> (Vec<f64>, Matrix) {
    use faer::{c64, Side};
    let n = m.nrows();
    let h = faer::Mat::<c64>::from_fn(n, n, |i, j| {
        let z = 0.5 * (m[(i, j)] + m[(j, i)].conj());
        c64::new(z.re, z.im)
    });
    let eig = h
        .self_adjoint_eigen(Side::Lower)
        .expect("Hermitian eigendecomposition failed");
    let (s, u) = (eig.S(), eig.U());
    let values = (0..n).map(|i| s[i].re).collect();
    let vectors = Matrix::from_fn(n, n, |i, j| {
        let z = u[(i, j)];
        Complex::new(z.re, z.im)
    });
    (values, vectors)
}

fn from_spectrum(values: &[f64], vectors: &Matrix, f: impl Fn(f64) -> f64) -> Matrix {
    let mut scaled = vectors.clone();
    for (j, &v) in values.iter().enumerate() {
        let s = c(f(v));
        scaled.column_mut(j).iter_mut().for_each(|z| *z *= s);
    }
    &scaled * vectors.adjoint()
}

/// Principal square root of a positive semidefinite matrix.
pub fn psd_sqrt(m: &Matrix) -> Matrix {
    let (values, vectors) = hermitian_eigen(m);
    from_spectrum(&values, &vectors, |v| v.max(0.0).sqrt())
}

/// `(m^{-1/2} on its support, kernel basis)` with a relative eigenvalue
/// cutoff.
fn pinv_sqrt(m: &Matrix) -> (Matrix, Vec<DVector<C64>>) {
    let (values, vectors) = hermitian_eigen(m);
    let max = values.iter().cloned().fold(0.0, f64::max);
    let cutoff = PINV_CUTOFF * max;
    let kernel = values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v <= cutoff)
        .map(|(j, _)| vectors.column(j).into_owned())
        .collect();
    let inv = from_spectrum(&values, &vectors, |v| if v > cutoff { 1.0 / v.sqrt() } else { 0.0 });
    (inv, kernel)
}

// new index -> old index for a qubit reordering where new qubit i is old
// qubit order[i].
fn permutation_map(n: usize, order: &[usize]) -> Vec<usize> {
    (0..1usize << n)
        .map(|x| {
            let mut y = 0;
            for (i, &o) in order.iter().enumerate() {
                if x >> (n - 1 - i) & 1 == 1 {
                    y |= 1 << (n - 1 - o);
                }
            }
            y
        })
        .collect()
}

fn permute_matrix(m: &Matrix, map: &[usize]) -> Matrix {
    Matrix::from_fn(m.nrows(), m.ncols(), |a, b| m[(map[a], map[b])])
}

fn check_order(n: usize, order: &[usize]) -> Result<()> {
    let mut seen = vec![false; n];
    for &q in order {
        if q >= n || seen[q] {
            return Err(Error::DimensionMismatch(format!("invalid qubit list {order:?} for {n} qubits")));
        }
        seen[q] = true;
    }
    Ok(())
}

/// A validated density matrix on `n <= 12` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseState {
    qubits: usize,
    rho: Matrix,
}

impl DenseState {
    pub fn new(rho: Matrix) -> Result<Self> {
        if rho.nrows() != rho.ncols() {
            return Err(Error::DimensionMismatch(format!("{}x{} density matrix", rho.nrows(), rho.ncols())));
        }
        let qubits = qubits_of(rho.nrows())
            .ok_or_else(|| Error::DimensionMismatch(format!("dimension {} is not a power of two", rho.nrows())))?;
        check_cap(qubits)?;
        let skew = (&rho - rho.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if skew > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("not Hermitian (deviation {skew:e})")));
        }
        let tr = rho.trace();
        if (tr - c(1.0)).norm() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr}")));
        }
        let (values, _) = hermitian_eigen(&rho);
        if values[0] < -PSD_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {:e}", values[0])));
        }
        let rho = (&rho + rho.adjoint()) * c(0.5);
        Ok(Self { qubits, rho })
    }

    /// Projector onto a normalized state vector.
    pub fn pure(psi: &DVector<C64>) -> Result<Self> {
        let norm = psi.norm();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidState(format!("state vector has norm {norm}")));
        }
        Self::new(psi * psi.adjoint())
    }

    /// Maximally mixed state.
    pub fn maximally_mixed(qubits: usize) -> Result<Self> {
        check_cap(qubits)?;
        let d = 1usize << qubits;
        Self::new(Matrix::identity(d, d) * c(1.0 / d as f64))
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.rho
    }

    /// Reorders qubits so that new qubit `i` is old qubit `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        check_order(self.qubits, order)?;
        if order.len() != self.qubits {
            return Err(Error::DimensionMismatch("permutation must list every qubit".into()));
        }
        let map = permutation_map(self.qubits, order);
        Ok(Self {
            qubits: self.qubits,
            rho: permute_matrix(&self.rho, &map),
        })
    }

    /// Reduced state on `keep`, in the listed order.
    pub fn partial_trace(&self, keep: &[usize]) -> Result<Self> {
        check_order(self.qubits, keep)?;
        let mut order = keep.to_vec();
        order.extend((0..self.qubits).filter(|q| !keep.contains(q)));
        let full = self.permuted(&order)?;
        let dk = 1usize << keep.len();
        let dr = full.dim() / dk;
        let rho = Matrix::from_fn(dk, dk, |a, b| (0..dr).map(|r| full.rho[(a * dr + r, b * dr + r)]).sum());
        Ok(Self { qubits: keep.len(), rho })
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigen(&self.rho).0
    }

    /// Von Neumann entropy in bits.
    pub fn entropy(&self) -> f64 {
        self.eigenvalues()
            .into_iter()
            .filter(|&v| v > ZERO_EIGENVALUE)
            .map(|v| -v * v.log2())
            .sum()
    }
}

/// `F(s, r) = ||sqrt(s) sqrt(r)||_1`.
pub fn fidelity(sigma: &DenseState, rho: &DenseState) -> Result<f64> {
    if sigma.dim() != rho.dim() {
        return Err(Error::DimensionMismatch("fidelity of states of different size".into()));
    }
    // Eigenvalues below the zero threshold are rounding noise; their square
    // roots would otherwise contribute at the 1e-8 level.
    let clip = |v: f64| if v > ZERO_EIGENVALUE { v.sqrt() } else { 0.0 };
    let (values, vectors) = hermitian_eigen(&sigma.rho);
    let s = from_spectrum(&values, &vectors, clip);
    let m = &s * &rho.rho * &s;
    let (values, _) = hermitian_eigen(&m);
    Ok(values.into_iter().map(clip).sum::<f64>().min(1.0))
}

/// Half the trace norm of the difference.
pub fn trace_distance(a: &DenseState, b: &DenseState) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch("trace distance of states of different size".into()));
    }
    let (values, _) = hermitian_eigen(&(&a.rho - &b.rho));
    Ok(0.5 * values.into_iter().map(f64::abs).sum::<f64>())
}

/// `I(A:B) = S(A) + S(B) - S(AB)` in bits, with `B` the complement of `a`.
pub fn mutual_information(state: &DenseState, a: &[usize]) -> Result<f64> {
    check_order(state.qubits, a)?;
    let b: Vec<usize> = (0..state.qubits).filter(|q| !a.contains(q)).collect();
    let s_a = state.partial_trace(a)?.entropy();
    let s_b = state.partial_trace(&b)?.entropy();
    Ok(s_a + s_b - state.entropy())
}

/// A completely positive trace-preserving map in Kraus form.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseChannel {
    input: usize,
    output: usize,
    kraus: Vec<Matrix>,
}

impl DenseChannel {
    pub fn new(input: usize, output: usize, kraus: Vec<Matrix>) -> Result<Self> {
        check_cap(input)?;
        check_cap(output)?;
        let (din, dout) = (1usize << input, 1usize << output);
        if kraus.is_empty() {
            return Err(Error::InvalidChannel("no Kraus operators".into()));
        }
        if let Some(k) = kraus.iter().find(|k| k.nrows() != dout || k.ncols() != din) {
            return Err(Error::DimensionMismatch(format!(
                "Kraus operator is {}x{}, expected {dout}x{din}",
                k.nrows(),
                k.ncols()
            )));
        }
        let ch = Self { input, output, kraus };
        let dev = ch.trace_preservation_error();
        if dev > TP_TOL {
            return Err(Error::InvalidChannel(format!("sum of K^dag K deviates from identity by {dev:e}")));
        }
        Ok(ch)
    }

    pub fn identity(qubits: usize) -> Result<Self> {
        let d = 1usize << qubits.min(MAX_QUBITS + 1);
        Self::new(qubits, qubits, vec![Matrix::identity(d, d)])
    }

    pub fn unitary(u: Matrix) -> Result<Self> {
        let n = qubits_of(u.nrows()).ok_or_else(|| Error::DimensionMismatch("unitary dimension".into()))?;
        Self::new(n, n, vec![u])
    }

    /// `X -> V X V^dag` for an isometry `V`.
    pub fn isometry(v: Matrix) -> Result<Self> {
        let out = qubits_of(v.nrows()).ok_or_else(|| Error::DimensionMismatch("isometry rows".into()))?;
        let inp = qubits_of(v.ncols()).ok_or_else(|| Error::DimensionMismatch("isometry columns".into()))?;
        Self::new(inp, out, vec![v])
    }

    pub fn input_qubits(&self) -> usize {
        self.input
    }

    pub fn output_qubits(&self) -> usize {
        self.output
    }

    pub fn kraus(&self) -> &[Matrix] {
        &self.kraus
    }

    pub fn trace_preservation_error(&self) -> f64 {
        let d = 1usize << self.input;
        let sum = self.kraus.iter().fold(Matrix::zeros(d, d), |acc, k| acc + k.adjoint() * k);
        (sum - Matrix::identity(d, d)).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Action on an arbitrary operator of the input space.
    pub fn apply_to_operator(&self, op: &Matrix) -> Matrix {
        let d = 1usize << self.output;
        self.kraus.iter().fold(Matrix::zeros(d, d), |acc, k| acc + k * op * k.adjoint())
    }

    /// `self` after `first`. Kraus products with negligible norm are dropped.
    pub fn compose(&self, first: &DenseChannel) -> Result<Self> {
        if first.output != self.input {
            return Err(Error::DimensionMismatch(format!(
                "cannot feed {} qubits into a {}-qubit channel",
                first.output, self.input
            )));
        }
        let kraus = self
            .kraus
            .iter()
            .flat_map(|a| first.kraus.iter().map(move |b| a * b))
            .filter(|k| k.norm() >= PRUNE_NORM)
            .collect();
        Self::new(first.input, self.output, kraus)
    }

    /// `self` on the leading qubits and `other` on the trailing ones.
    pub fn tensor(&self, other: &DenseChannel) -> Result<Self> {
        let kraus = self
            .kraus
            .iter()
            .flat_map(|a| other.kraus.iter().map(move |b| a.kronecker(b)))
            .collect();
        Self::new(self.input + other.input, self.output + other.output, kraus)
    }

    /// `self` applied independently to each of `copies` registers.
    pub fn power(&self, copies: usize) -> Result<Self> {
        let mut out = self.clone();
        for _ in 1..copies {
            out = out.tensor(self)?;
        }
        Ok(out)
    }
}

/// Largest Frobenius distance between the outputs of two channels over all
/// matrix units `|i><j|` of the input space.
pub fn superoperator_distance(a: &DenseChannel, b: &DenseChannel) -> Result<f64> {
    if a.input != b.input || a.output != b.output {
        return Err(Error::DimensionMismatch("channels have different shapes".into()));
    }
    let d = 1usize << a.input;
    let mut worst = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            let mut unit = Matrix::zeros(d, d);
            unit[(i, j)] = c(1.0);
            worst = worst.max((a.apply_to_operator(&unit) - b.apply_to_operator(&unit)).norm());
        }
    }
    Ok(worst)
}

/// Applies `ch` to the listed qubits of `state`.
///
/// When the channel keeps the qubit count, outputs replace the targets in
/// place. Otherwise the output block sits where the lowest target was, and
/// the untouched qubits keep their relative order.
pub fn apply_channel(ch: &DenseChannel, state: &DenseState, targets: &[usize]) -> Result<DenseState> {
    check_order(state.qubits, targets)?;
    if targets.len() != ch.input {
        return Err(Error::DimensionMismatch(format!(
            "{}-qubit channel applied to {} targets",
            ch.input,
            targets.len()
        )));
    }
    let n = state.qubits;
    let (k, m) = (ch.input, ch.output);
    let n_out = n - k + m;
    check_cap(n_out)?;

    let rest: Vec<usize> = (0..n).filter(|q| !targets.contains(q)).collect();
    let mut order = targets.to_vec();
    order.extend(&rest);
    let rho = permute_matrix(&state.rho, &permutation_map(n, &order));

    let dr = 1usize << rest.len();
    let (dt, dout) = (1usize << k, 1usize << m);
    let dfull = rho.nrows();
    let mut out = Matrix::zeros(dout * dr, dout * dr);
    for kr in &ch.kraus {
        // (K x I) rho
        let mut left = Matrix::zeros(dout * dr, dfull);
        for o in 0..dout {
            for t in 0..dt {
                let w = kr[(o, t)];
                if w == c(0.0) {
                    continue;
                }
                left.rows_mut(o * dr, dr).zip_apply(&rho.rows(t * dr, dr), |x, y| *x += w * y);
            }
        }
        // ... (K x I)^dag
        for o in 0..dout {
            for t in 0..dt {
                let w = kr[(o, t)].conj();
                if w == c(0.0) {
                    continue;
                }
                out.columns_mut(o * dr, dr).zip_apply(&left.columns(t * dr, dr), |x, y| *x += w * y);
            }
        }
    }

    // Intermediate layout: outputs at 0..m, then `rest`.
    let final_order: Vec<usize> = if m == k {
        let mut slots = vec![0; n];
        for (i, &t) in targets.iter().enumerate() {
            slots[t] = i;
        }
        for (j, &r) in rest.iter().enumerate() {
            slots[r] = m + j;
        }
        slots
    } else {
        let first = targets.iter().min().copied().unwrap_or(0);
        let before = rest.iter().filter(|&&r| r < first).count();
        (0..before).map(|j| m + j).chain(0..m).chain((before..rest.len()).map(|j| m + j)).collect()
    };
    let out = permute_matrix(&out, &permutation_map(n_out, &final_order));
    DenseState::new(out)
}

/// A recovery channel together with whether a pseudo-inverse was needed.
#[derive(Debug, Clone, PartialEq)]
pub struct PetzRecovery {
    pub channel: DenseChannel,
    pub rank_deficient: bool,
}

/// Petz recovery of `ch` acting on qubits `targets` of `state`, built from a
/// Stinespring dilation completed to a unitary.
///
/// Only the reduced state on the targets enters. The map is
/// `D(X) = sigma_A^{1/2} E^dag(sigma_A'^{-1/2} X sigma_A'^{-1/2}) sigma_A^{1/2}`
/// realised through an explicit Kraus list. Directions in the kernel of the
/// channel output are sent to `|0..0>` so that the result is trace preserving.
pub fn petz_recovery(ch: &DenseChannel, state: &DenseState, targets: &[usize]) -> Result<PetzRecovery> {
    if targets.len() != ch.input {
        return Err(Error::DimensionMismatch(format!(
            "{}-qubit channel applied to {} targets",
            ch.input,
            targets.len()
        )));
    }
    let rho_a = state.partial_trace(targets)?.rho;
    let (da, dout) = (1usize << ch.input, 1usize << ch.output);
    let mut de = ch.kraus.len().next_power_of_two();
    while dout * de < da {
        de *= 2;
    }
    let big = dout * de;
    let dr = big / da;

    // Stinespring isometry W = sum_e K_e x |e>, rows indexed (a', e).
    let mut w = Matrix::zeros(big, da);
    for (e, kr) in ch.kraus.iter().enumerate() {
        for o in 0..dout {
            for a in 0..da {
                w[(o * de + e, a)] = kr[(o, a)];
            }
        }
    }
    let sigma_oe = &w * &rho_a * w.adjoint();
    let sigma_o = Matrix::from_fn(dout, dout, |a, b| (0..de).map(|e| sigma_oe[(a * de + e, b * de + e)]).sum());
    let sqrt_oe = psd_sqrt(&sigma_oe);
    let (inv_o, kernel) = pinv_sqrt(&sigma_o);
    let lifted = inv_o.kronecker(&Matrix::identity(de, de));

    // Complete W to a unitary; column (a, 0) is W|a>.
    let (values, vectors) = hermitian_eigen(&(&w * w.adjoint()));
    let complement: Vec<_> = values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v < 0.5)
        .map(|(j, _)| vectors.column(j).into_owned())
        .collect();
    let mut u = Matrix::zeros(big, big);
    let mut spare = complement.into_iter();
    for a in 0..da {
        u.set_column(a * dr, &w.column(a));
        for r in 1..dr {
            let v = spare.next().ok_or_else(|| Error::InvalidChannel("dilation is not an isometry".into()))?;
            u.set_column(a * dr + r, &v);
        }
    }
    let u_dag = u.adjoint();

    let mut kraus = Vec::new();
    for e in 0..de {
        // M_e = sigma_A'E^{1/2} (sigma_A'^{-1/2} x I) (I x |e>)
        let mut embed = Matrix::zeros(big, dout);
        for o in 0..dout {
            embed[(o * de + e, o)] = c(1.0);
        }
        let v = &u_dag * (&sqrt_oe * (&lifted * embed));
        for r in 0..dr {
            let kr = Matrix::from_fn(da, dout, |a, o| v[(a * dr + r, o)]);
            if kr.norm() >= PRUNE_NORM {
                kraus.push(kr);
            }
        }
    }
    let rank_deficient = !kernel.is_empty();
    for v in kernel {
        let mut kr = Matrix::zeros(da, dout);
        kr.row_mut(0).copy_from(&v.adjoint());
        kraus.push(kr);
    }
    Ok(PetzRecovery {
        channel: DenseChannel::new(ch.output, ch.input, kraus)?,
        rank_deficient,
    })
}

/// Outcome of checking how much correlation a channel destroys.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    /// Drop in mutual information between the acted-on part and the rest.
    pub epsilon: f64,
    /// Fidelity of the Petz-recovered state to the original.
    pub fidelity: f64,
    /// `2^{-epsilon / 2}`, reported for reference only.
    pub bound: f64,
    pub rank_deficient: bool,
}

/// Applies `ch` to the qubits `a` of `state`, measures the loss of mutual
/// information with the complement and attempts Petz recovery.
///
/// Returns [`Error::RecoveryFailed`] when no correlation is lost but the
/// recovered state still differs from the input.
pub fn correlation_preserving_test(ch: &DenseChannel, state: &DenseState, a: &[usize]) -> Result<RecoveryReport> {
    check_order(state.qubits, a)?;
    let mut order = a.to_vec();
    order.extend((0..state.qubits).filter(|q| !a.contains(q)));
    let rho = state.permuted(&order)?;
    let k = a.len();
    let m = ch.output;
    let inputs: Vec<usize> = (0..k).collect();
    let outputs: Vec<usize> = (0..m).collect();

    let before = mutual_information(&rho, &inputs)?;
    let mapped = apply_channel(ch, &rho, &inputs)?;
    let after = mutual_information(&mapped, &outputs)?;
    let epsilon = before - after;

    let petz = petz_recovery(ch, &rho, &inputs)?;
    let recovered = apply_channel(&petz.channel, &mapped, &outputs)?;
    let fidelity = fidelity(&rho, &recovered)?;
    if epsilon <= 1e-9 && fidelity < 1.0 - 1e-9 {
        return Err(Error::RecoveryFailed { epsilon, fidelity });
    }
    Ok(RecoveryReport {
        epsilon,
        fidelity,
        bound: (-epsilon / 2.0).exp2(),
        rank_deficient: petz.rank_deficient,
    })
}

// --- Elementary operators ---------------------------------------------------

fn pauli_x() -> Matrix {
    Matrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)])
}

fn pauli_z() -> Matrix {
    Matrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(-1.0)])
}

/// Product of X on `flips` and Z on `phases`, as a dense matrix on `n` qubits.
pub fn pauli_string(n: usize, flips: &[usize], phases: &[usize]) -> Matrix {
    let d = 1usize << n;
    let xmask = flips.iter().fold(0usize, |m, &q| m ^ (1 << (n - 1 - q)));
    let zmask = phases.iter().fold(0usize, |m, &q| m ^ (1 << (n - 1 - q)));
    let mut out = Matrix::zeros(d, d);
    for col in 0..d {
        let sign = if (col & zmask).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        out[(col ^ xmask, col)] = c(sign);
    }
    out
}

/// `rho -> (1-p) rho + p X rho X`.
pub fn x_dephasing(p: f64) -> Result<DenseChannel> {
    check_probability("p", p)?;
    DenseChannel::new(1, 1, vec![Matrix::identity(2, 2) * c((1.0 - p).sqrt()), pauli_x() * c(p.sqrt())])
}

/// `rho -> (1-p) rho + p Z rho Z`.
pub fn z_dephasing(p: f64) -> Result<DenseChannel> {
    check_probability("p", p)?;
    DenseChannel::new(1, 1, vec![Matrix::identity(2, 2) * c((1.0 - p).sqrt()), pauli_z() * c(p.sqrt())])
}

/// Two-qubit `rho -> (1-p) rho + p XX rho XX`.
pub fn xx_dephasing(p: f64) -> Result<DenseChannel> {
    check_probability("p", p)?;
    DenseChannel::new(
        2,
        2,
        vec![Matrix::identity(4, 4) * c((1.0 - p).sqrt()), pauli_string(2, &[0, 1], &[]) * c(p.sqrt())],
    )
}

/// `rho -> tr(rho) |0><0|` on one qubit.
pub fn reset_channel() -> DenseChannel {
    let mut k0 = Matrix::zeros(2, 2);
    k0[(0, 0)] = c(1.0);
    let mut k1 = Matrix::zeros(2, 2);
    k1[(0, 1)] = c(1.0);
    DenseChannel::new(1, 1, vec![k0, k1]).expect("reset is trace preserving")
}

/// Discards `qubits` qubits.
pub fn trace_out(qubits: usize) -> Result<DenseChannel> {
    check_cap(qubits)?;
    let d = 1usize << qubits;
    let kraus = (0..d).map(|i| Matrix::from_fn(1, d, |_, j| c(if i == j { 1.0 } else { 0.0 }))).collect();
    DenseChannel::new(qubits, 0, kraus)
}

/// Isometry `|0> -> |0...0>`, `|1> -> |1...1>` onto `b` qubits.
pub fn repetition_isometry(b: usize) -> Result<DenseChannel> {
    check_cap(b)?;
    let d = 1usize << b;
    let mut v = Matrix::zeros(d, 2);
    v[(0, 0)] = c(1.0);
    v[(d - 1, 1)] = c(1.0);
    DenseChannel::isometry(v)
}

/// Majority vote of `b` qubits onto one, discarding the pattern of
/// disagreements. One Kraus operator per disagreement pattern.
pub fn majority_vote_channel(b: usize) -> Result<DenseChannel> {
    if b < 3 || b % 2 == 0 {
        return Err(Error::InvalidBlock(b));
    }
    if b > 7 {
        return Err(Error::TooManyQubits { qubits: b, cap: 7 });
    }
    let d = 1usize << b;
    let diff = |s: usize| s ^ (s >> 1);
    let low = (1usize << (b - 1)) - 1;
    let mut kraus = vec![Matrix::zeros(2, d); 1 << (b - 1)];
    for s in 0..d {
        let maj = usize::from(s.count_ones() as usize > b / 2);
        kraus[diff(s) & low][(maj, s)] = c(1.0);
    }
    DenseChannel::new(b, 1, kraus)
}

// --- Closed-form states -----------------------------------------------------

/// The states with closed-form dense constructions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StateKind {
    /// GHZ state on `sites` qubits with independent bit flips.
    GhzX { p: f64, sites: usize },
    /// GHZ state on `sites` qubits with independent phase flips.
    GhzZ { p: f64, sites: usize },
    /// Gibbs state of the toric code on the 2x2 torus (8 qubits).
    Thermal { beta: f64 },
    /// Chain of `sites` two-qubit sites, Bell pairs between neighbouring
    /// sites, with pair flips `XX` at rate `p` on every site.
    Spt { p: f64, sites: usize },
}

pub fn build_state(kind: StateKind) -> Result<DenseState> {
    match kind {
        StateKind::GhzX { p, sites } => ghz_x_state(p, sites),
        StateKind::GhzZ { p, sites } => ghz_z_state(p, sites),
        StateKind::Thermal { beta } => thermal_state(beta),
        StateKind::Spt { p, sites } => spt_state(p, sites),
    }
}

fn check_sites(sites: usize) -> Result<()> {
    if sites == 0 {
        return Err(Error::DimensionMismatch("state needs at least one site".into()));
    }
    check_cap(sites)
}

fn ghz_x_state(p: f64, n: usize) -> Result<DenseState> {
    check_probability("p", p)?;
    check_sites(n)?;
    let d = 1usize << n;
    let full = d - 1;
    let mut rho = Matrix::zeros(d, d);
    for s in 0..d {
        let k = s.count_ones() as i32;
        let w = 0.5 * p.powi(k) * (1.0 - p).powi(n as i32 - k);
        for (a, b) in [(s, s), (s, s ^ full), (s ^ full, s), (s ^ full, s ^ full)] {
            rho[(a, b)] += c(w);
        }
    }
    DenseState::new(rho)
}

fn ghz_z_state(p: f64, n: usize) -> Result<DenseState> {
    check_probability("p", p)?;
    check_sites(n)?;
    let d = 1usize << n;
    let off = 0.5 * (1.0 - 2.0 * p).powi(n as i32);
    let mut rho = Matrix::zeros(d, d);
    rho[(0, 0)] = c(0.5);
    rho[(d - 1, d - 1)] = c(0.5);
    rho[(0, d - 1)] = c(off);
    rho[(d - 1, 0)] = c(off);
    DenseState::new(rho)
}

fn spt_state(p: f64, sites: usize) -> Result<DenseState> {
    check_probability("p", p)?;
    if sites < 2 {
        return Err(Error::DimensionMismatch("chain needs at least two sites".into()));
    }
    let n = 2 * sites;
    check_cap(n)?;
    // Site i holds qubits 2i (A) and 2i+1 (B); B of i pairs with A of i+1.
    let d = 1usize << n;
    let bit = |q: usize| 1usize << (n - 1 - q);
    let mut psi = DVector::<C64>::zeros(d);
    for pattern in 0..1usize << sites {
        let mut idx = 0;
        for i in 0..sites {
            if pattern >> i & 1 == 1 {
                idx |= bit(2 * i + 1) | bit((2 * (i + 1)) % n);
            }
        }
        psi[idx] = c(1.0);
    }
    psi /= c(psi.norm());
    let mut state = DenseState::pure(&psi)?;
    let noise = xx_dephasing(p)?;
    for i in 0..sites {
        state = apply_channel(&noise, &state, &[2 * i, 2 * i + 1])?;
    }
    Ok(state)
}

// --- Toric code on the 2x2 torus --------------------------------------------

/// Stabilizers of the 2x2 torus: X on plaquette boundaries and Z on vertex
/// stars, one qubit per edge.
struct SmallTorus {
    lattice: TorusLattice,
    plaquettes: Vec<Matrix>,
    stars: Vec<Matrix>,
}

const TORUS_QUBITS: usize = 8;

impl SmallTorus {
    fn new() -> Self {
        let lattice = TorusLattice::new(2).expect("2x2 torus");
        let plaquettes = (0..4)
            .map(|s| {
                let (r, col) = lattice.coords(s);
                pauli_string(TORUS_QUBITS, &lattice.plaquette_edges(r, col), &[])
            })
            .collect();
        let stars = (0..4)
            .map(|s| {
                let (r, col) = lattice.coords(s);
                pauli_string(TORUS_QUBITS, &[], &lattice.vertex_star(r, col))
            })
            .collect();
        Self {
            lattice,
            plaquettes,
            stars,
        }
    }

    /// Projector onto anyon pattern `m` (bit `s` set means an anyon on
    /// plaquette `s`).
    fn projector(&self, m: usize) -> Matrix {
        let d = 1usize << TORUS_QUBITS;
        let id = Matrix::identity(d, d);
        self.plaquettes.iter().enumerate().fold(id.clone(), |acc, (s, a)| {
            let sign = if m >> s & 1 == 1 { -1.0 } else { 1.0 };
            acc * ((&id + a * c(sign)) * c(0.5))
        })
    }

    /// Z string that moves an anyon from each occupied plaquette of `m`
    /// other than the first onto the first one.
    fn mover(&self, m: usize) -> Matrix {
        let l = &self.lattice;
        let paths: [Vec<usize>; 4] = [
            vec![],
            vec![l.west_edge(0, 1)],
            vec![l.north_edge(1, 0)],
            vec![l.north_edge(1, 1), l.west_edge(0, 1)],
        ];
        let mut edges = Vec::new();
        for (s, path) in paths.iter().enumerate() {
            if m >> s & 1 == 1 {
                for &e in path {
                    if let Some(i) = edges.iter().position(|&x| x == e) {
                        edges.remove(i);
                    } else {
                        edges.push(e);
                    }
                }
            }
        }
        pauli_string(TORUS_QUBITS, &[], &edges)
    }
}

/// Gibbs state of `-sum A - sum B` on the 2x2 torus. `beta` may be infinite.
fn thermal_state(beta: f64) -> Result<DenseState> {
    if beta.is_nan() || beta < 0.0 {
        return Err(Error::OutOfRange {
            name: "beta",
            value: beta,
            expected: "[0, inf]",
        });
    }
    let torus = SmallTorus::new();
    let d = 1usize << TORUS_QUBITS;
    let id = Matrix::identity(d, d);
    let t = c(beta.tanh());
    let unnormalized = torus
        .plaquettes
        .iter()
        .chain(&torus.stars)
        .fold(id.clone(), |acc, g| acc * (&id + g * t));
    let tr = unnormalized.trace();
    DenseState::new(unnormalized / tr)
}

/// The block channel that gathers all anyons of the 2x2 torus onto the
/// first plaquette, and its reversal that redistributes them with the
/// thermal conditional distribution at inverse temperature `beta`.
#[derive(Debug, Clone)]
pub struct ThermalChannels {
    pub gather: DenseChannel,
    pub scatter: DenseChannel,
}

pub fn thermal_tc_channels(beta: f64) -> Result<ThermalChannels> {
    if beta.is_nan() || beta < 0.0 {
        return Err(Error::OutOfRange {
            name: "beta",
            value: beta,
            expected: "[0, inf]",
        });
    }
    let torus = SmallTorus::new();
    let gather: Vec<Matrix> = (0..16).map(|m| torus.mover(m) * torus.projector(m)).collect();

    let p = crate::flow::p_of_beta(beta);
    let weight = |m: usize| {
        let k = (m as u32).count_ones() as i32;
        p.powi(k) * (1.0 - p).powi(4 - k)
    };
    let parity_weight = |x: usize| (0..16).filter(|m: &usize| m.count_ones() as usize % 2 == x).map(weight).sum::<f64>();
    let totals = [parity_weight(0), parity_weight(1)];
    // Sectors other than "first plaquette only" pass through untouched.
    let d = 1usize << TORUS_QUBITS;
    let gathered = torus.projector(0) + torus.projector(1);
    let mut scatter = vec![Matrix::identity(d, d) - &gathered];
    for m in 0..16usize {
        let x = m.count_ones() as usize % 2;
        let prob = weight(m) / totals[x];
        if prob == 0.0 {
            continue;
        }
        scatter.push(torus.mover(m).adjoint() * torus.projector(x) * c(prob.sqrt()));
    }
    Ok(ThermalChannels {
        gather: DenseChannel::new(TORUS_QUBITS, TORUS_QUBITS, gather)?,
        scatter: DenseChannel::new(TORUS_QUBITS, TORUS_QUBITS, scatter)?,
    })
}

/// Projector onto anyon pattern `m` of the 2x2 torus, normalized to a state
/// uniform over everything else.
pub fn thermal_sector_state(m: usize) -> Result<DenseState> {
    if m >= 16 {
        return Err(Error::DimensionMismatch(format!("anyon pattern {m} on four plaquettes")));
    }
    let proj = SmallTorus::new().projector(m);
    let tr = proj.trace();
    if tr.norm() < 0.5 {
        return Err(Error::OddParity);
    }
    DenseState::new(proj / tr)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bell() -> DenseState {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        DenseState::pure(&DVector::from_vec(vec![c(s), c(0.0), c(0.0), c(s)])).unwrap()
    }

    fn basis(n: usize, idx: usize) -> DenseState {
        let mut v = DVector::zeros(1 << n);
        v[idx] = c(1.0);
        DenseState::pure(&v).unwrap()
    }

    #[test]
    fn mutual_information_examples() {
        assert!((mutual_information(&bell(), &[0]).unwrap() - 2.0).abs() < 1e-12);
        assert!(mutual_information(&basis(3, 5), &[0]).unwrap().abs() < 1e-12);
        let classical = ghz_z_state(0.5, 3).unwrap();
        assert!((mutual_information(&classical, &[0]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_invalid_states() {
        let mut m = Matrix::identity(2, 2) * c(0.5);
        m[(0, 1)] = c(0.3);
        assert!(DenseState::new(m).is_err());
        assert!(DenseState::new(Matrix::identity(2, 2)).is_err());
        let neg = Matrix::from_row_slice(2, 2, &[c(1.5), c(0.0), c(0.0), c(-0.5)]);
        assert!(matches!(DenseState::new(neg), Err(Error::InvalidState(_))));
        assert!(DenseState::maximally_mixed(13).is_err());
    }

    #[test]
    fn apply_channel_examples() {
        let s = ghz_x_state(0.2, 3).unwrap();
        let same = apply_channel(&DenseChannel::identity(2).unwrap(), &s, &[2, 0]).unwrap();
        assert!((same.matrix() - s.matrix()).norm() < 1e-14);

        let plus = DenseState::pure(&DVector::from_vec(vec![c(0.6), c(0.8)])).unwrap();
        let reset = apply_channel(&reset_channel(), &plus, &[0]).unwrap();
        assert!((reset.matrix() - basis(1, 0).matrix()).norm() < 1e-14);

        let deph = apply_channel(&x_dephasing(0.3).unwrap(), &basis(1, 0), &[0]).unwrap();
        assert!((deph.matrix()[(0, 0)].re - 0.7).abs() < 1e-15);
        assert!((deph.matrix()[(1, 1)].re - 0.3).abs() < 1e-15);

        assert!(apply_channel(&x_dephasing(0.3).unwrap(), &s, &[0, 1]).is_err());
    }

    #[test]
    fn apply_channel_places_outputs() {
        // Flip qubit 1 of |000>: only that qubit changes.
        let flip = DenseChannel::unitary(pauli_x()).unwrap();
        let out = apply_channel(&flip, &basis(3, 0), &[1]).unwrap();
        assert!((out.matrix() - basis(3, 0b010).matrix()).norm() < 1e-14);

        // Majority of qubits 1..4 of |0 111 1> lands where qubit 1 was.
        let maj = majority_vote_channel(3).unwrap();
        let out = apply_channel(&maj, &basis(5, 0b01111), &[1, 2, 3]).unwrap();
        assert_eq!(out.qubits(), 3);
        assert!((out.matrix() - basis(3, 0b011).matrix()).norm() < 1e-14);

        let out = apply_channel(&maj, &basis(5, 0b10001), &[1, 3, 4]).unwrap();
        assert!((out.matrix() - basis(3, 0b100).matrix()).norm() < 1e-14);
    }

    #[test]
    fn apply_channel_matches_kronecker_embedding() {
        let s = ghz_x_state(0.15, 3).unwrap();
        let ch = x_dephasing(0.25).unwrap().tensor(&z_dephasing(0.1).unwrap()).unwrap();
        let fast = apply_channel(&ch, &s, &[0, 1]).unwrap();
        let full = ch.tensor(&DenseChannel::identity(1).unwrap()).unwrap();
        let slow = full.apply_to_operator(s.matrix());
        assert!((fast.matrix() - slow).norm() < 1e-14);
    }

    #[test]
    fn partial_trace_of_bell_is_mixed() {
        let r = bell().partial_trace(&[1]).unwrap();
        assert!((r.matrix() - Matrix::identity(2, 2) * c(0.5)).norm() < 1e-15);
    }

    #[test]
    fn majority_vote_examples() {
        let maj = majority_vote_channel(3).unwrap();
        assert_eq!(maj.kraus().len(), 4);
        assert_eq!(majority_vote_channel(5).unwrap().kraus().len(), 16);
        for (input, expected) in [(0b000, 0), (0b001, 0), (0b110, 1), (0b111, 1)] {
            let out = apply_channel(&maj, &basis(3, input), &[0, 1, 2]).unwrap();
            assert!((out.matrix() - basis(1, expected).matrix()).norm() < 1e-15);
        }
        assert!(majority_vote_channel(4).is_err());
    }

    #[test]
    fn bit_flip_recursion_as_channel_identity() {
        for b in [3usize, 5] {
            for &p in &[0.1, 0.3, 0.49] {
                let lhs = majority_vote_channel(b)
                    .unwrap()
                    .compose(&x_dephasing(p).unwrap().power(b).unwrap().compose(&repetition_isometry(b).unwrap()).unwrap())
                    .unwrap();
                let rhs = x_dephasing(crate::flow::ghz_x_step(p, b).unwrap()).unwrap();
                assert!(superoperator_distance(&lhs, &rhs).unwrap() <= 1e-10);
            }
        }
    }

    #[test]
    fn ghz_fidelity_formulas_match_dense_overlaps() {
        use crate::flow::{fidelity as closed, FidelityModel};
        for n in 2..=8 {
            for &p in &[0.05, 0.2, 0.4] {
                let pure = ghz_x_state(0.0, n).unwrap();
                let f = fidelity(&pure, &ghz_x_state(p, n).unwrap()).unwrap();
                let formula = closed(FidelityModel::GhzXVsPure { p, size: n }).unwrap();
                assert!((f * f - formula).abs() < 1e-10, "n={n} p={p} {} {formula}", f * f);

                let mixed = ghz_z_state(0.5, n).unwrap();
                let f = fidelity(&mixed, &ghz_z_state(p, n).unwrap()).unwrap();
                let formula = closed(FidelityModel::GhzZVsClassical { p, size: n }).unwrap();
                assert!((f * f - formula).abs() < 1e-10, "n={n} p={p} {} {formula}", f * f);
            }
        }
    }

    #[test]
    fn state_examples() {
        let g = build_state(StateKind::GhzX { p: 0.0, sites: 3 }).unwrap();
        assert!((g.matrix()[(0, 7)].re - 0.5).abs() < 1e-15);
        assert!(g.entropy().abs() < 1e-12);
        let z = build_state(StateKind::GhzZ { p: 0.2, sites: 4 }).unwrap();
        assert!((z.matrix()[(0, 15)].re - 0.6f64.powi(4) / 2.0).abs() < 1e-15);
        let t = build_state(StateKind::Thermal { beta: 0.0 }).unwrap();
        assert!((t.matrix() - Matrix::identity(256, 256) * c(1.0 / 256.0)).norm() < 1e-14);
        assert!(build_state(StateKind::GhzX { p: 0.1, sites: 13 }).is_err());
    }

    #[test]
    fn clean_chain_state_is_pure_and_symmetric() {
        let s = build_state(StateKind::Spt { p: 0.0, sites: 3 }).unwrap();
        assert!(s.entropy().abs() < 1e-10, "{:?}", s.eigenvalues());
        let ux = pauli_string(6, &[0, 1, 2, 3, 4, 5], &[]);
        let uz = pauli_string(6, &[], &[0, 1, 2, 3, 4, 5]);
        for u in [ux, uz] {
            let e = (u * s.matrix()).trace();
            assert!((e.re - 1.0).abs() < 1e-12);
        }
        let noisy = build_state(StateKind::Spt { p: 0.2, sites: 3 }).unwrap();
        assert!(noisy.entropy() > 0.1);
    }

    #[test]
    fn unitary_is_reversible() {
        let h = Matrix::from_row_slice(2, 2, &[c(1.0), c(1.0), c(1.0), c(-1.0)]) * c(std::f64::consts::FRAC_1_SQRT_2);
        let u = DenseChannel::unitary(h.kronecker(&pauli_x())).unwrap();
        let report = correlation_preserving_test(&u, &ghz_x_state(0.2, 3).unwrap(), &[0, 2]).unwrap();
        assert!(report.epsilon.abs() < 1e-9);
        assert!((report.fidelity - 1.0).abs() < 1e-9);
    }

    #[test]
    fn majority_vote_preserves_phase_flip_ghz() {
        let s = ghz_z_state(0.2, 6).unwrap();
        let report = correlation_preserving_test(&majority_vote_channel(3).unwrap(), &s, &[0, 1, 2]).unwrap();
        assert!(report.epsilon.abs() < 1e-9);
        assert!(report.fidelity > 1.0 - 1e-9);
    }

    #[test]
    fn majority_vote_loses_correlation_on_bit_flip_ghz() {
        let s = ghz_x_state(0.2, 6).unwrap();
        let report = correlation_preserving_test(&majority_vote_channel(3).unwrap(), &s, &[0, 1, 2]).unwrap();
        assert!(report.epsilon > 1e-3);
        assert!(report.fidelity < 1.0);
    }

    #[test]
    fn discarding_half_a_bell_pair() {
        let report = correlation_preserving_test(&trace_out(1).unwrap(), &bell(), &[0]).unwrap();
        assert!((report.epsilon - 2.0).abs() < 1e-12);
        assert!(report.fidelity < 1.0 - 1e-3);
        assert!((report.bound - 0.5).abs() < 1e-12);
    }

    #[test]
    fn thermal_gather_fuses_pairs() {
        let ch = thermal_tc_channels(1.0).unwrap();
        assert_eq!(ch.gather.kraus().len(), 16);
        let pair = thermal_sector_state(0b0011).unwrap();
        let out = apply_channel(&ch.gather, &pair, &(0..8).collect::<Vec<_>>()).unwrap();
        let vacuum = thermal_sector_state(0).unwrap();
        assert!(trace_distance(&out, &vacuum).unwrap() < 1e-12);

        let ground = build_state(StateKind::Thermal { beta: f64::INFINITY }).unwrap();
        let out = apply_channel(&ch.gather, &ground, &(0..8).collect::<Vec<_>>()).unwrap();
        assert!(trace_distance(&out, &ground).unwrap() < 1e-12);
    }

    #[test]
    fn thermal_scatter_reverses_gather() {
        let all: Vec<usize> = (0..8).collect();
        for &beta in &[0.3, 1.0] {
            let ch = thermal_tc_channels(beta).unwrap();
            let rho = build_state(StateKind::Thermal { beta }).unwrap();
            let mid = apply_channel(&ch.gather, &rho, &all).unwrap();
            let back = apply_channel(&ch.scatter, &mid, &all).unwrap();
            assert!(trace_distance(&back, &rho).unwrap() <= 1e-9);
        }
    }

    #[test]
    fn petz_of_unitary_is_inverse() {
        let u = DenseChannel::unitary(pauli_string(2, &[0], &[1])).unwrap();
        let s = ghz_x_state(0.1, 2).unwrap();
        let rec = petz_recovery(&u, &s, &[0, 1]).unwrap();
        let there = apply_channel(&u, &s, &[0, 1]).unwrap();
        let back = apply_channel(&rec.channel, &there, &[0, 1]).unwrap();
        assert!(trace_distance(&back, &s).unwrap() < 1e-10);
    }
}
