//! Composite Hilbert spaces, truncated mode operators, states and expectation values.
//!
//! Tensor products follow a fixed convention: the leftmost subsystem of a
//! [`SpaceLayout`] is the slowest-varying index. For a layout
//! `[cavity: Na, matter: Nm, phonon: Nb]` the basis state `|n, m, k⟩` lives at
//! index `(n * Nm + m) * Nb + k`. Every other module relies on this ordering.
//!
//! The two-level matter basis is ordered `(g, e)`, so `σ₋ = [[0, 1], [0, 0]]` and
//! a qubit is indistinguishable from a bosonic mode truncated at two levels.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Numerical tolerances shared by the whole engine.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    /// Max elementwise `|M - M†|` for an operator flagged Hermitian.
    pub hermitian: f64,
    /// Euclidean norm deviation allowed for a pure state.
    pub state_norm: f64,
    /// Max elementwise anti-Hermitian part of a density matrix.
    pub density_hermitian: f64,
    /// Trace deviation allowed for a density matrix.
    pub density_trace: f64,
    /// Most negative eigenvalue tolerated in a density matrix.
    pub density_positivity: f64,
    /// Imaginary part tolerated in the expectation of a Hermitian operator.
    pub real_expectation: f64,
    /// Population allowed in the highest retained Fock level.
    pub cutoff_leak: f64,
}

impl Tolerances {
    pub const DEFAULT: Tolerances = Tolerances {
        hermitian: 1e-12,
        state_norm: 1e-10,
        density_hermitian: 1e-10,
        density_trace: 1e-8,
        density_positivity: 1e-8,
        real_expectation: 1e-10,
        cutoff_leak: 1e-8,
    };
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// Above this total dimension operators are stored in compressed sparse rows.
pub const DENSE_LIMIT: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Cavity,
    Matter,
    Phonon,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Label::Cavity => "cavity",
            Label::Matter => "matter",
            Label::Phonon => "phonon",
        };
        f.write_str(s)
    }
}

/// Ordered list of subsystems and their truncation dimensions.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SpaceLayout {
    subsystems: Vec<(Label, usize)>,
}

impl SpaceLayout {
    pub fn new(subsystems: &[(Label, usize)]) -> Result<Self> {
        if subsystems.is_empty() {
            return Err(Error::invalid("layout needs at least one subsystem"));
        }
        for (i, (label, dim)) in subsystems.iter().enumerate() {
            if *dim < 2 {
                return Err(Error::invalid(format!("subsystem {label} has dimension {dim} < 2")));
            }
            if subsystems[..i].iter().any(|(l, _)| l == label) {
                return Err(Error::invalid(format!("duplicate subsystem label {label}")));
            }
        }
        Ok(Self { subsystems: subsystems.to_vec() })
    }

    pub fn single(label: Label, dim: usize) -> Result<Self> {
        Self::new(&[(label, dim)])
    }

    pub fn subsystems(&self) -> &[(Label, usize)] {
        &self.subsystems
    }

    pub fn total_dim(&self) -> usize {
        self.subsystems.iter().map(|(_, d)| d).product()
    }

    pub fn dim_of(&self, label: Label) -> Option<usize> {
        self.subsystems.iter().find(|(l, _)| *l == label).map(|(_, d)| *d)
    }

    pub fn position(&self, label: Label) -> Option<usize> {
        self.subsystems.iter().position(|(l, _)| *l == label)
    }

    /// Flat basis index of a product state given one occupation per subsystem.
    pub fn index_of(&self, occupations: &[usize]) -> Result<usize> {
        if occupations.len() != self.subsystems.len() {
            return Err(Error::invalid("occupation list does not match the layout"));
        }
        let mut idx = 0;
        for (&n, (label, d)) in occupations.iter().zip(&self.subsystems) {
            if n >= *d {
                return Err(Error::invalid(format!("level {n} outside {label} cutoff {d}")));
            }
            idx = idx * d + n;
        }
        Ok(idx)
    }

    /// Inverse of [`SpaceLayout::index_of`].
    pub fn occupations(&self, mut index: usize) -> Vec<usize> {
        let mut occ = vec![0; self.subsystems.len()];
        for (slot, (_, d)) in occ.iter_mut().zip(&self.subsystems).rev() {
            *slot = index % d;
            index /= d;
        }
        occ
    }
}

impl fmt::Display for SpaceLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.subsystems.iter().map(|(l, d)| format!("{l}:{d}")).collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

#[derive(Clone, Debug)]
enum Storage {
    Dense(DMatrix<C64>),
    Sparse(CsrMatrix<C64>),
}

/// A linear operator on a [`SpaceLayout`].
///
/// Storage is dense up to [`DENSE_LIMIT`] and sparse above; the choice is a
/// function of the dimension only, so two operators on the same layout always
/// share a representation.
#[derive(Clone, Debug)]
pub struct Operator {
    layout: SpaceLayout,
    storage: Storage,
}

fn wants_sparse(dim: usize) -> bool {
    dim > DENSE_LIMIT
}

impl Operator {
    pub fn from_dense(layout: SpaceLayout, matrix: DMatrix<C64>) -> Result<Self> {
        let n = layout.total_dim();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::invalid(format!(
                "matrix is {}x{}, layout {layout} needs {n}x{n}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let storage = if wants_sparse(n) {
            Storage::Sparse(CsrMatrix::from(&matrix))
        } else {
            Storage::Dense(matrix)
        };
        Ok(Self { layout, storage })
    }

    /// Build from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(
        layout: SpaceLayout,
        triplets: impl IntoIterator<Item = (usize, usize, C64)>,
    ) -> Result<Self> {
        let n = layout.total_dim();
        let storage = if wants_sparse(n) {
            let mut coo = CooMatrix::new(n, n);
            for (r, c, v) in triplets {
                if r >= n || c >= n {
                    return Err(Error::invalid("triplet index outside the layout"));
                }
                coo.push(r, c, v);
            }
            Storage::Sparse(CsrMatrix::from(&coo))
        } else {
            let mut m = DMatrix::zeros(n, n);
            for (r, c, v) in triplets {
                if r >= n || c >= n {
                    return Err(Error::invalid("triplet index outside the layout"));
                }
                m[(r, c)] += v;
            }
            Storage::Dense(m)
        };
        Ok(Self { layout, storage })
    }

    pub fn zeros(layout: SpaceLayout) -> Self {
        Self::from_triplets(layout, std::iter::empty()).expect("empty triplets are valid")
    }

    pub fn identity(layout: SpaceLayout) -> Self {
        let n = layout.total_dim();
        Self::from_triplets(layout, (0..n).map(|i| (i, i, C64::new(1.0, 0.0))))
            .expect("diagonal triplets are in range")
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.total_dim()
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.storage, Storage::Sparse(_))
    }

    /// Nonzero entries in row-major order.
    pub fn triplets(&self) -> Vec<(usize, usize, C64)> {
        match &self.storage {
            Storage::Dense(m) => {
                let mut out = Vec::new();
                for r in 0..m.nrows() {
                    for c in 0..m.ncols() {
                        let v = m[(r, c)];
                        if v != C64::new(0.0, 0.0) {
                            out.push((r, c, v));
                        }
                    }
                }
                out
            }
            Storage::Sparse(s) => {
                s.triplet_iter().filter(|(_, _, v)| **v != C64::new(0.0, 0.0)).map(|(r, c, v)| (r, c, *v)).collect()
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        match &self.storage {
            Storage::Dense(m) => m.clone(),
            Storage::Sparse(s) => DMatrix::from(s),
        }
    }

    pub fn to_csr(&self) -> CsrMatrix<C64> {
        match &self.storage {
            Storage::Dense(m) => {
                let n = m.nrows();
                let mut coo = CooMatrix::new(n, n);
                for (r, c, v) in self.triplets() {
                    coo.push(r, c, v);
                }
                CsrMatrix::from(&coo)
            }
            Storage::Sparse(s) => s.clone(),
        }
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        match &self.storage {
            Storage::Dense(m) => m[(row, col)],
            Storage::Sparse(s) => s
                .get_entry(row, col)
                .map(|e| e.into_value())
                .unwrap_or_default(),
        }
    }

    fn check_layout(&self, other: &Operator) -> Result<()> {
        if self.layout != other.layout {
            return Err(Error::invalid(format!(
                "layout mismatch: {} vs {}",
                self.layout, other.layout
            )));
        }
        Ok(())
    }

    pub fn adjoint(&self) -> Operator {
        let storage = match &self.storage {
            Storage::Dense(m) => Storage::Dense(m.adjoint()),
            Storage::Sparse(s) => {
                let mut t = s.transpose();
                t.values_mut().iter_mut().for_each(|v| *v = v.conj());
                Storage::Sparse(t)
            }
        };
        Operator { layout: self.layout.clone(), storage }
    }

    pub fn scale(&self, factor: C64) -> Operator {
        let storage = match &self.storage {
            Storage::Dense(m) => Storage::Dense(m * factor),
            Storage::Sparse(s) => {
                let mut t = s.clone();
                t.values_mut().iter_mut().for_each(|v| *v *= factor);
                Storage::Sparse(t)
            }
        };
        Operator { layout: self.layout.clone(), storage }
    }

    pub fn scale_real(&self, factor: f64) -> Operator {
        self.scale(C64::new(factor, 0.0))
    }

    pub fn add(&self, other: &Operator) -> Result<Operator> {
        self.check_layout(other)?;
        let storage = match (&self.storage, &other.storage) {
            (Storage::Dense(a), Storage::Dense(b)) => Storage::Dense(a + b),
            (Storage::Sparse(a), Storage::Sparse(b)) => Storage::Sparse(a + b),
            _ => unreachable!("storage is a function of the layout"),
        };
        Ok(Operator { layout: self.layout.clone(), storage })
    }

    pub fn sub(&self, other: &Operator) -> Result<Operator> {
        self.add(&other.scale_real(-1.0))
    }

    /// Matrix product `self · other`.
    pub fn mul(&self, other: &Operator) -> Result<Operator> {
        self.check_layout(other)?;
        let storage = match (&self.storage, &other.storage) {
            (Storage::Dense(a), Storage::Dense(b)) => {
                let n = a.nrows();
                let nnz = |m: &DMatrix<C64>| m.iter().filter(|v| **v != C64::new(0.0, 0.0)).count();
                // ladder-operator products are very sparse; skip the O(n³) product
                if n > 64 && nnz(a) + nnz(b) < n * n / 16 {
                    Storage::Dense(DMatrix::from(&(&self.to_csr() * &other.to_csr())))
                } else {
                    Storage::Dense(a * b)
                }
            }
            (Storage::Sparse(a), Storage::Sparse(b)) => Storage::Sparse(a * b),
            _ => unreachable!("storage is a function of the layout"),
        };
        Ok(Operator { layout: self.layout.clone(), storage })
    }

    pub fn commutator(&self, other: &Operator) -> Result<Operator> {
        self.mul(other)?.sub(&other.mul(self)?)
    }

    pub fn apply(&self, v: &DVector<C64>) -> Result<DVector<C64>> {
        if v.len() != self.dim() {
            return Err(Error::invalid("vector length does not match operator dimension"));
        }
        Ok(match &self.storage {
            Storage::Dense(m) => m * v,
            Storage::Sparse(s) => {
                let (offsets, cols, vals) = s.csr_data();
                DVector::from_iterator(
                    s.nrows(),
                    (0..s.nrows()).map(|r| {
                        (offsets[r]..offsets[r + 1]).map(|k| vals[k] * v[cols[k]]).sum::<C64>()
                    }),
                )
            }
        })
    }

    pub fn trace(&self) -> C64 {
        match &self.storage {
            Storage::Dense(m) => m.trace(),
            Storage::Sparse(s) => s.diagonal_as_csr().values().iter().sum(),
        }
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        match &self.storage {
            Storage::Dense(m) => m.iter().map(|v| v.norm()).fold(0.0, f64::max),
            Storage::Sparse(s) => s.values().iter().map(|v| v.norm()).fold(0.0, f64::max),
        }
    }

    /// Max elementwise `|M - M†|`.
    pub fn hermiticity_error(&self) -> f64 {
        self.sub(&self.adjoint()).map(|d| d.max_abs()).unwrap_or(f64::INFINITY)
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermiticity_error() <= Tolerances::DEFAULT.hermitian
    }

    /// Fails unless the operator is Hermitian to [`Tolerances::hermitian`].
    pub fn assert_hermitian(self) -> Result<Self> {
        let err = self.hermiticity_error();
        if err > Tolerances::DEFAULT.hermitian {
            return Err(Error::invalid(format!("operator not Hermitian: max|M-M†| = {err:e}")));
        }
        Ok(self)
    }

    /// Spectrum of a Hermitian operator, ascending, with eigenvectors as columns.
    pub fn eigh(&self) -> Result<(Vec<f64>, DMatrix<C64>)> {
        eigh_sorted(self.to_dense())
    }
}

/// Dense Hermitian eigendecomposition sorted by ascending eigenvalue.
/// Real symmetric input takes a real-arithmetic path.
pub fn eigh_sorted(matrix: DMatrix<C64>) -> Result<(Vec<f64>, DMatrix<C64>)> {
    let n = matrix.nrows();
    let fail = || Error::Convergence("Hermitian eigensolver did not converge".into());
    // unit scale with subnormals flushed; the QL sweeps produce NaN on subnormal input
    if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    let scale = matrix.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok((vec![0.0; n], DMatrix::identity(n, n)));
    }
    let matrix = matrix.map(|z| {
        let z = z / scale;
        C64::new(if z.re.is_normal() { z.re } else { 0.0 }, if z.im.is_normal() { z.im } else { 0.0 })
    });
    let (raw_values, raw_vectors): (Vec<f64>, DMatrix<C64>) = if matrix.iter().all(|z| z.im == 0.0) {
        let eig = nalgebra::SymmetricEigen::try_new(matrix.map(|z| z.re), 1e-15, 10_000).ok_or_else(fail)?;
        (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors.map(|x| C64::new(x, 0.0)))
    } else {
        hermitian_eigen(matrix)?
    };
    if raw_values.iter().any(|v| !v.is_finite()) {
        return Err(fail());
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| raw_values[a].total_cmp(&raw_values[b]));
    let values = order.iter().map(|&i| raw_values[i] * scale).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &raw_vectors.column(src));
    }
    Ok((values, vectors))
}

/// Euclidean norm without underflow in the squares.
fn scaled_norm(x: &DMatrix<C64>) -> f64 {
    let m = x.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if m == 0.0 {
        return 0.0;
    }
    m * x.iter().map(|z| (z / m).norm_sqr()).sum::<f64>().sqrt()
}

/// Householder reduction to a real tridiagonal matrix followed by QL.
///
/// nalgebra's complex path divides by the phase of a zero pivot and returns NaN
/// whenever a subcolumn starts with an exact zero, which is common in Fock-space
/// matrices.
fn hermitian_eigen(mut a: DMatrix<C64>) -> Result<(Vec<f64>, DMatrix<C64>)> {
    let n = a.nrows();
    let one = C64::new(1.0, 0.0);
    let mut q = DMatrix::<C64>::identity(n, n);
    for k in 0..n.saturating_sub(2) {
        let x = a.view((k + 1, k), (n - k - 1, 1)).into_owned();
        let alpha = scaled_norm(&x);
        if alpha == 0.0 {
            continue;
        }
        let x0 = x[0];
        let phase = if x0.norm() > 0.0 { x0 / x0.norm() } else { one };
        let mut v = x;
        v[0] += phase * alpha;
        let vn = scaled_norm(&v);
        // real divisor: complex division squares the denominator and underflows
        v.iter_mut().for_each(|z| *z /= vn);
        // H = 1 - 2vv†; H A H = A - v w† - w v† with w = p - (v†p) v, p = 2Av
        let mut sub = a.view((k + 1, k + 1), (n - k - 1, n - k - 1)).into_owned();
        let p = &sub * &v * C64::new(2.0, 0.0);
        let c = v.dotc(&p).re;
        let w = &p - &v * C64::new(c, 0.0);
        sub -= &v * w.adjoint() + &w * v.adjoint();
        a.view_mut((k + 1, k + 1), (n - k - 1, n - k - 1)).copy_from(&sub);
        let e = -phase * alpha;
        for i in k + 1..n {
            a[(i, k)] = if i == k + 1 { e } else { C64::new(0.0, 0.0) };
            a[(k, i)] = a[(i, k)].conj();
        }
        let mut cols = q.view_mut((0, k + 1), (n, n - k - 1));
        let qv = &cols * &v * C64::new(2.0, 0.0);
        cols -= qv * v.adjoint();
    }
    // rotate the complex off-diagonal onto the positive reals
    let diag: Vec<f64> = (0..n).map(|i| a[(i, i)].re).collect();
    let mut off = vec![0.0; n.saturating_sub(1)];
    let mut d = vec![one; n];
    for i in 0..n.saturating_sub(1) {
        let e = a[(i + 1, i)];
        off[i] = e.norm();
        d[i + 1] = if off[i] > 0.0 { d[i] * e / off[i] } else { d[i] };
    }
    for (j, dj) in d.iter().enumerate() {
        let col = q.column(j) * *dj;
        q.set_column(j, &col);
    }
    let (values, z) = crate::krylov::tridiagonal_ql(&diag, &off, true)?;
    Ok((values, q * z.map(|x| C64::new(x, 0.0))))
}

/// Truncated bosonic annihilation operator, `⟨n-1|a|n⟩ = √n`.
pub fn destroy(cutoff: usize) -> Result<Operator> {
    destroy_on(Label::Cavity, cutoff)
}

/// Like [`destroy`] but on a single-subsystem layout with the given label.
pub fn destroy_on(label: Label, cutoff: usize) -> Result<Operator> {
    if cutoff < 2 {
        return Err(Error::invalid(format!("cutoff {cutoff} < 2")));
    }
    let layout = SpaceLayout::single(label, cutoff)?;
    Operator::from_triplets(
        layout,
        (1..cutoff).map(|n| (n - 1, n, C64::new((n as f64).sqrt(), 0.0))),
    )
}

/// `σ₋` in the `(g, e)` basis: `[[0, 1], [0, 0]]`.
pub fn pauli_lowering() -> Operator {
    let layout = SpaceLayout::single(Label::Matter, 2).expect("dimension 2 is valid");
    Operator::from_triplets(layout, [(0, 1, C64::new(1.0, 0.0))]).expect("entry in range")
}

/// Kronecker embedding `I ⊗ … ⊗ op ⊗ … ⊗ I` of a single-subsystem operator.
pub fn embed(op: &Operator, layout: &SpaceLayout, target: Label) -> Result<Operator> {
    let pos = layout
        .position(target)
        .ok_or_else(|| Error::invalid(format!("layout {layout} has no subsystem {target}")))?;
    let target_dim = layout.subsystems()[pos].1;
    if op.dim() != target_dim {
        return Err(Error::invalid(format!(
            "operator dimension {} does not match {target} dimension {target_dim}",
            op.dim()
        )));
    }
    let left: usize = layout.subsystems()[..pos].iter().map(|(_, d)| d).product();
    let right: usize = layout.subsystems()[pos + 1..].iter().map(|(_, d)| d).product();
    let local = op.triplets();
    let mut triplets = Vec::with_capacity(local.len() * left * right);
    for l in 0..left {
        for &(r, c, v) in &local {
            for k in 0..right {
                let row = (l * target_dim + r) * right + k;
                let col = (l * target_dim + c) * right + k;
                triplets.push((row, col, v));
            }
        }
    }
    Operator::from_triplets(layout.clone(), triplets)
}

/// Kronecker product of two operators; the result's layout concatenates both.
pub fn kron(a: &Operator, b: &Operator) -> Result<Operator> {
    let mut subs = a.layout().subsystems().to_vec();
    subs.extend_from_slice(b.layout().subsystems());
    let layout = SpaceLayout::new(&subs)?;
    let nb = b.dim();
    let tb = b.triplets();
    let mut triplets = Vec::new();
    for (ra, ca, va) in a.triplets() {
        for &(rb, cb, vb) in &tb {
            triplets.push((ra * nb + rb, ca * nb + cb, va * vb));
        }
    }
    Operator::from_triplets(layout, triplets)
}

/// Normalized state vector on a layout.
#[derive(Clone, Debug)]
pub struct PureState {
    layout: SpaceLayout,
    amplitudes: DVector<C64>,
}

impl PureState {
    pub fn new(layout: SpaceLayout, amplitudes: DVector<C64>) -> Result<Self> {
        if amplitudes.len() != layout.total_dim() {
            return Err(Error::invalid("amplitude count does not match the layout"));
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > Tolerances::DEFAULT.state_norm {
            return Err(Error::invalid(format!("state norm {norm} is not 1")));
        }
        Ok(Self { layout, amplitudes })
    }

    pub fn normalized(layout: SpaceLayout, amplitudes: DVector<C64>) -> Result<Self> {
        let norm = amplitudes.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::invalid("cannot normalize a zero or non-finite vector"));
        }
        Self::new(layout, amplitudes / C64::new(norm, 0.0))
    }

    /// Product Fock state, one occupation per subsystem in layout order.
    pub fn fock(layout: SpaceLayout, occupations: &[usize]) -> Result<Self> {
        let idx = layout.index_of(occupations)?;
        let mut amps = DVector::zeros(layout.total_dim());
        amps[idx] = C64::new(1.0, 0.0);
        Self::new(layout, amps)
    }

    /// `|ψ⟩ ⊗ |φ⟩`.
    pub fn tensor(&self, other: &PureState) -> Result<Self> {
        let mut subs = self.layout.subsystems().to_vec();
        subs.extend_from_slice(other.layout.subsystems());
        let layout = SpaceLayout::new(&subs)?;
        let n = other.amplitudes.len();
        let amps = DVector::from_fn(self.amplitudes.len() * n, |i, _| {
            self.amplitudes[i / n] * other.amplitudes[i % n]
        });
        Self::normalized(layout, amps)
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> DVector<C64> {
        self.amplitudes
    }

    pub fn overlap(&self, other: &PureState) -> Result<C64> {
        if self.layout != other.layout {
            return Err(Error::invalid("overlap between states on different layouts"));
        }
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    pub fn with_phase(&self, phase: f64) -> PureState {
        PureState {
            layout: self.layout.clone(),
            amplitudes: &self.amplitudes * C64::from_polar(1.0, phase),
        }
    }
}

/// Hermitian, unit-trace, positive semidefinite matrix on a layout.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    layout: SpaceLayout,
    matrix: DMatrix<C64>,
}

impl DensityMatrix {
    pub fn new(layout: SpaceLayout, matrix: DMatrix<C64>) -> Result<Self> {
        let n = layout.total_dim();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::invalid("density matrix shape does not match the layout"));
        }
        let tol = Tolerances::DEFAULT;
        let herm = (&matrix - matrix.adjoint()).iter().map(|v| v.norm()).fold(0.0, f64::max);
        if herm > tol.density_hermitian {
            return Err(Error::invalid(format!("density matrix not Hermitian ({herm:e})")));
        }
        let tr = matrix.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > tol.density_trace {
            return Err(Error::invalid(format!("density matrix trace {tr} is not 1")));
        }
        let hermitized = (&matrix + matrix.adjoint()) * C64::new(0.5, 0.0);
        let (vals, _) = eigh_sorted(hermitized)?;
        if vals[0] < -tol.density_positivity {
            return Err(Error::invalid(format!("density matrix eigenvalue {} < 0", vals[0])));
        }
        Ok(Self { layout, matrix })
    }

    /// Skips positivity and trace validation; callers vouch for the input.
    pub(crate) fn from_raw(layout: SpaceLayout, matrix: DMatrix<C64>) -> Self {
        Self { layout, matrix }
    }

    pub fn from_pure(state: &PureState) -> Self {
        let v = state.amplitudes();
        Self { layout: state.layout().clone(), matrix: v * v.adjoint() }
    }

    /// Thermal state `ρ ∝ Σ (n̄/(1+n̄))^n |n⟩⟨n|` of a single mode, renormalized on the cutoff.
    pub fn thermal(layout: SpaceLayout, n_mean: f64) -> Result<Self> {
        if layout.subsystems().len() != 1 {
            return Err(Error::invalid("thermal state needs a single-mode layout"));
        }
        if !(n_mean >= 0.0) {
            return Err(Error::invalid(format!("thermal occupation {n_mean} < 0")));
        }
        let n = layout.total_dim();
        let ratio = n_mean / (1.0 + n_mean);
        let mut weights: Vec<f64> = (0..n).map(|k| ratio.powi(k as i32)).collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        let matrix = DMatrix::from_fn(n, n, |r, c| {
            if r == c { C64::new(weights[r], 0.0) } else { C64::new(0.0, 0.0) }
        });
        Ok(Self { layout, matrix })
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let hermitized = (&self.matrix + self.matrix.adjoint()) * C64::new(0.5, 0.0);
        Ok(eigh_sorted(hermitized)?.0[0])
    }

    /// Diagonal entries (Fock populations for a single mode).
    pub fn populations(&self) -> Vec<f64> {
        (0..self.matrix.nrows()).map(|i| self.matrix[(i, i)].re).collect()
    }
}

/// Anything an operator can be averaged over.
pub trait QuantumState {
    fn layout(&self) -> &SpaceLayout;
    fn expect_unchecked(&self, op: &Operator) -> C64;
}

impl QuantumState for PureState {
    fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    fn expect_unchecked(&self, op: &Operator) -> C64 {
        let ov = op.apply(&self.amplitudes).expect("dimensions checked by caller");
        self.amplitudes.dotc(&ov)
    }
}

impl QuantumState for DensityMatrix {
    fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    fn expect_unchecked(&self, op: &Operator) -> C64 {
        // Tr[Oρ] = Σ_ij O_ij ρ_ji
        op.triplets().into_iter().map(|(i, j, o)| o * self.matrix[(j, i)]).sum()
    }
}

/// `⟨ψ|O|ψ⟩` or `Tr[Oρ]`.
pub fn expectation<S: QuantumState + ?Sized>(op: &Operator, state: &S) -> Result<C64> {
    if op.layout() != state.layout() {
        return Err(Error::invalid(format!(
            "operator layout {} differs from state layout {}",
            op.layout(),
            state.layout()
        )));
    }
    Ok(state.expect_unchecked(op))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }


    #[test]
    fn complex_hermitian_eigen_survives_zero_pivots() {
        // tridiagonal-like pattern: every subcolumn below the first starts with a zero
        let n = 9;
        let mut m = DMatrix::<C64>::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(i as f64 * 0.3 - 1.0, 0.0);
            if i + 2 < n {
                m[(i + 2, i)] = C64::new(0.5, 0.2 * i as f64);
                m[(i, i + 2)] = m[(i + 2, i)].conj();
            }
        }
        m[(n - 1, 0)] = C64::new(1e-310, 1e-3);
        m[(0, n - 1)] = m[(n - 1, 0)].conj();
        let (vals, vecs) = eigh_sorted(m.clone()).unwrap();
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        let lambda = DMatrix::from_diagonal(&DVector::from_iterator(n, vals.iter().map(|v| C64::new(*v, 0.0))));
        assert!((&m * &vecs - &vecs * lambda).norm() < 1e-12);
        assert!((vecs.adjoint() * &vecs - DMatrix::<C64>::identity(n, n)).norm() < 1e-12);
    }
    #[test]
    fn destroy_lowest_truncation() {
        let a = destroy(2).unwrap();
        let m = a.to_dense();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(0.0), c(0.0)]));
    }

    #[test]
    fn destroy_sqrt_rule() {
        let a = destroy(3).unwrap();
        assert_abs_diff_eq!(a.entry(1, 2).re, 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn destroy_rejects_small_cutoff() {
        assert!(matches!(destroy(1), Err(Error::InvalidArgument(_))));
        assert!(matches!(destroy(0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn truncated_commutator_artifact() {
        let a = destroy(10).unwrap();
        let comm = a.commutator(&a.adjoint()).unwrap().to_dense();
        for i in 0..10 {
            for j in 0..10 {
                let expected = if i != j {
                    0.0
                } else if i == 9 {
                    -9.0
                } else {
                    1.0
                };
                assert_abs_diff_eq!(comm[(i, j)].re, expected, epsilon = 1e-12);
                assert_abs_diff_eq!(comm[(i, j)].im, 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn pauli_lowering_properties() {
        let sm = pauli_lowering();
        assert_eq!(sm.entry(0, 1), c(1.0));
        let proj = sm.adjoint().mul(&sm).unwrap();
        let (vals, _) = proj.eigh().unwrap();
        assert_abs_diff_eq!(vals[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(vals[1], 1.0, epsilon = 1e-15);
        // excited-state projector in (g, e) ordering
        assert_eq!(proj.entry(1, 1), c(1.0));
        assert_eq!(sm.mul(&sm).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn embed_cavity_is_a_kron_identity() {
        let layout = SpaceLayout::new(&[(Label::Cavity, 2), (Label::Phonon, 2)]).unwrap();
        let a = embed(&destroy(2).unwrap(), &layout, Label::Cavity).unwrap();
        let m = a.to_dense();
        // a ⊗ I: |1,k⟩ -> |0,k⟩, indices 2 -> 0, 3 -> 1
        assert_eq!(m[(0, 2)], c(1.0));
        assert_eq!(m[(1, 3)], c(1.0));
        assert_eq!(a.triplets().len(), 2);
    }

    #[test]
    fn embedded_disjoint_operators_commute() {
        let layout = SpaceLayout::new(&[(Label::Cavity, 3), (Label::Phonon, 4)]).unwrap();
        let a = embed(&destroy(3).unwrap(), &layout, Label::Cavity).unwrap();
        let b = embed(&destroy_on(Label::Phonon, 4).unwrap(), &layout, Label::Phonon).unwrap();
        assert_eq!(a.commutator(&b).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn embedded_number_trace() {
        let layout = SpaceLayout::new(&[(Label::Cavity, 3), (Label::Matter, 2)]).unwrap();
        let a = destroy(3).unwrap();
        let n = a.adjoint().mul(&a).unwrap();
        let big = embed(&n, &layout, Label::Cavity).unwrap();
        assert_abs_diff_eq!(big.trace().re, 6.0, epsilon = 1e-14);
    }

    #[test]
    fn embed_errors() {
        let layout = SpaceLayout::new(&[(Label::Cavity, 3), (Label::Matter, 2)]).unwrap();
        assert!(embed(&destroy(2).unwrap(), &layout, Label::Cavity).is_err());
        assert!(embed(&destroy(2).unwrap(), &layout, Label::Phonon).is_err());
    }

    #[test]
    fn layout_validation() {
        assert!(SpaceLayout::new(&[(Label::Cavity, 3), (Label::Cavity, 2)]).is_err());
        assert!(SpaceLayout::new(&[(Label::Cavity, 1)]).is_err());
        let l = SpaceLayout::new(&[(Label::Cavity, 3), (Label::Matter, 2), (Label::Phonon, 5)]).unwrap();
        assert_eq!(l.total_dim(), 30);
        let idx = l.index_of(&[2, 1, 3]).unwrap();
        assert_eq!(idx, (2 * 2 + 1) * 5 + 3);
        assert_eq!(l.occupations(idx), vec![2, 1, 3]);
    }

    #[test]
    fn expectation_examples() {
        let layout = SpaceLayout::single(Label::Cavity, 6).unwrap();
        let a = destroy(6).unwrap();
        let n = a.adjoint().mul(&a).unwrap();
        let vac = PureState::fock(layout.clone(), &[0]).unwrap();
        assert_abs_diff_eq!(expectation(&n, &vac).unwrap().re, 0.0);
        let three = PureState::fock(layout.clone(), &[3]).unwrap();
        assert_abs_diff_eq!(expectation(&n, &three).unwrap().re, 3.0, epsilon = 1e-14);
        let mut amps = DVector::zeros(6);
        amps[0] = c(1.0);
        amps[1] = c(1.0);
        let sup = PureState::normalized(layout.clone(), amps).unwrap();
        let x = a.add(&a.adjoint()).unwrap();
        assert_abs_diff_eq!(expectation(&x, &sup).unwrap().re, 1.0, epsilon = 1e-14);
        let rho = DensityMatrix::from_pure(&sup);
        assert_abs_diff_eq!(expectation(&x, &rho).unwrap().re, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn expectation_layout_mismatch() {
        let a = destroy(4).unwrap();
        let state = PureState::fock(SpaceLayout::single(Label::Cavity, 5).unwrap(), &[1]).unwrap();
        assert!(expectation(&a, &state).is_err());
    }

    #[test]
    fn density_matrix_validation() {
        let layout = SpaceLayout::single(Label::Phonon, 2).unwrap();
        let bad_trace = DMatrix::from_diagonal(&DVector::from_vec(vec![c(0.7), c(0.7)]));
        assert!(DensityMatrix::new(layout.clone(), bad_trace).is_err());
        let negative = DMatrix::from_diagonal(&DVector::from_vec(vec![c(1.1), c(-0.1)]));
        assert!(DensityMatrix::new(layout.clone(), negative).is_err());
        let th = DensityMatrix::thermal(SpaceLayout::single(Label::Phonon, 80).unwrap(), 1.5).unwrap();
        let b = destroy_on(Label::Phonon, 80).unwrap();
        let n = expectation(&b.adjoint().mul(&b).unwrap(), &th).unwrap();
        assert_abs_diff_eq!(n.re, 1.5, epsilon = 1e-9);
    }

    #[test]
    fn sparse_storage_above_limit() {
        let layout = SpaceLayout::new(&[(Label::Cavity, 80), (Label::Phonon, 60)]).unwrap();
        assert!(layout.total_dim() > DENSE_LIMIT);
        let a = embed(&destroy(80).unwrap(), &layout, Label::Cavity).unwrap();
        assert!(a.is_sparse());
        let b = embed(&destroy_on(Label::Phonon, 60).unwrap(), &layout, Label::Phonon).unwrap();
        assert_eq!(a.commutator(&b).unwrap().max_abs(), 0.0);
        let n = a.adjoint().mul(&a).unwrap();
        // Σ_n n over 80 levels, times 60 phonon copies
        assert_abs_diff_eq!(n.trace().re, 60.0 * (79.0 * 80.0 / 2.0), epsilon = 1e-6);
        let state = PureState::fock(layout, &[5, 7]).unwrap();
        assert_abs_diff_eq!(expectation(&n, &state).unwrap().re, 5.0, epsilon = 1e-12);
    }
}
