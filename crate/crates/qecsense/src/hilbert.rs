//! Hilbert-space plumbing: tensor-product layouts, normalized state vectors,
//! dense operators with cached eigendecompositions, embeddings of local
//! operators, exact piecewise-constant evolution and projective measurement.
//!
//! Conventions used throughout the crate:
//!
//! * Within every factor, basis index 0 is the *lower* level and the last
//!   index is the *upper* level. For a qubit this means index 0 = |0⟩ = |↓⟩
//!   and index 1 = |1⟩ = |↑⟩; `sigma_z` is `diag(-1, +1)` and `sigma_minus`
//!   maps index 1 to index 0.
//! * Composite basis indices are mixed-radix with the *first* factor most
//!   significant: for factors of dimensions (d0, d1, ...), basis state
//!   (i0, i1, ...) lives at flat index `i0*d1*d2*... + i1*d2*... + ...`.

use std::fmt;
use std::sync::{Arc, OnceLock};

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64;
use rand::Rng;

use crate::error::{QecError, Result};

pub type C64 = Complex64;

const HERMITICITY_TOL: f64 = 1e-10;
const UNITARITY_TOL: f64 = 1e-10;
/// Relative gap below which two eigenvalues are treated as degenerate when
/// building measurement projectors.
const EIGENVALUE_CLUSTER_TOL: f64 = 1e-8;

/// One tensor factor of the composite space.
#[derive(Clone, Debug, PartialEq)]
pub struct Factor {
    pub name: String,
    pub dim: usize,
    /// Human-readable level names, length `dim`, index 0 = lower level.
    pub level_names: Vec<String>,
}

impl Factor {
    pub fn new(name: &str, level_names: &[&str]) -> Self {
        Factor {
            name: name.to_string(),
            dim: level_names.len(),
            level_names: level_names.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Two-level factor with conventional |0⟩ / |1⟩ labels.
    pub fn qubit(name: &str) -> Self {
        Factor::new(name, &["0", "1"])
    }

    /// Two-level factor with custom lower/upper labels (e.g. "↓"/"↑").
    pub fn two_level(name: &str, lower: &str, upper: &str) -> Self {
        Factor::new(name, &[lower, upper])
    }

    /// Truncated bosonic mode with `levels` Fock states |0⟩..|levels-1⟩.
    pub fn boson(name: &str, levels: usize) -> Self {
        let names: Vec<String> = (0..levels).map(|n| n.to_string()).collect();
        Factor {
            name: name.to_string(),
            dim: levels,
            level_names: names,
        }
    }
}

/// Ordered tensor product of named factors.
#[derive(Debug)]
pub struct HilbertLayout {
    factors: Vec<Factor>,
    strides: Vec<usize>,
    dim: usize,
}

impl PartialEq for HilbertLayout {
    fn eq(&self, other: &Self) -> bool {
        self.factors == other.factors
    }
}

impl HilbertLayout {
    pub fn new(factors: Vec<Factor>) -> Result<Arc<Self>> {
        if factors.is_empty() {
            return Err(QecError::LayoutMismatch("layout needs at least one factor".into()));
        }
        let mut dim: usize = 1;
        for f in &factors {
            if f.dim < 2 {
                return Err(QecError::LayoutMismatch(format!(
                    "factor '{}' must have at least 2 levels",
                    f.name
                )));
            }
            dim = dim.checked_mul(f.dim).ok_or_else(|| {
                QecError::LayoutMismatch("composite dimension overflow".into())
            })?;
        }
        if dim > 1 << 16 {
            return Err(QecError::LayoutMismatch(format!(
                "composite dimension {dim} exceeds supported limit"
            )));
        }
        // First factor most significant.
        let mut strides = vec![1usize; factors.len()];
        for i in (0..factors.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * factors[i + 1].dim;
        }
        Ok(Arc::new(HilbertLayout { factors, strides, dim }))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn factor(&self, idx: usize) -> &Factor {
        &self.factors[idx]
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn factor_index(&self, name: &str) -> Option<usize> {
        self.factors.iter().position(|f| f.name == name)
    }

    /// Flat index of the basis state with the given per-factor levels.
    pub fn flat_index(&self, levels: &[usize]) -> Result<usize> {
        if levels.len() != self.factors.len() {
            return Err(QecError::LayoutMismatch(format!(
                "expected {} factor indices, got {}",
                self.factors.len(),
                levels.len()
            )));
        }
        let mut idx = 0usize;
        for (k, (&lvl, f)) in levels.iter().zip(&self.factors).enumerate() {
            if lvl >= f.dim {
                return Err(QecError::LayoutMismatch(format!(
                    "level {lvl} out of range for factor '{}' (dim {})",
                    f.name, f.dim
                )));
            }
            idx += lvl * self.strides[k];
        }
        Ok(idx)
    }

    /// Per-factor levels of the given flat basis index.
    pub fn unpack_index(&self, mut idx: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.factors.len());
        for k in 0..self.factors.len() {
            out.push(idx / self.strides[k]);
            idx %= self.strides[k];
        }
        out
    }
}

/// Pure state vector on a shared layout.
#[derive(Clone)]
pub struct QuantumState {
    pub layout: Arc<HilbertLayout>,
    pub data: Array1<C64>,
}

impl fmt::Debug for QuantumState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "QuantumState(dim {})", self.layout.dim())
    }
}

impl QuantumState {
    pub fn from_vec(layout: &Arc<HilbertLayout>, data: Vec<C64>) -> Result<Self> {
        if data.len() != layout.dim() {
            return Err(QecError::DimensionMismatch {
                expected: layout.dim(),
                got: data.len(),
            });
        }
        Ok(QuantumState {
            layout: layout.clone(),
            data: Array1::from_vec(data),
        })
    }

    /// Computational basis state |i0, i1, ...⟩.
    pub fn basis(layout: &Arc<HilbertLayout>, levels: &[usize]) -> Result<Self> {
        let idx = layout.flat_index(levels)?;
        let mut data = Array1::zeros(layout.dim());
        data[idx] = C64::new(1.0, 0.0);
        Ok(QuantumState {
            layout: layout.clone(),
            data,
        })
    }

    /// Superposition Σ c_k |levels_k⟩ from (amplitude, levels) pairs.
    /// Amplitudes are used verbatim; call `normalized()` if needed.
    pub fn superposition(
        layout: &Arc<HilbertLayout>,
        terms: &[(C64, &[usize])],
    ) -> Result<Self> {
        let mut data = Array1::zeros(layout.dim());
        for (amp, levels) in terms {
            let idx = layout.flat_index(levels)?;
            data[idx] += *amp;
        }
        Ok(QuantumState {
            layout: layout.clone(),
            data,
        })
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n < 1e-300 {
            return Err(QecError::NumericalFault("cannot normalize zero state".into()));
        }
        let mut s = self.clone();
        s.data.mapv_inplace(|c| c / n);
        Ok(s)
    }

    pub fn normalize_in_place(&mut self) -> Result<()> {
        let n = self.norm();
        if n < 1e-300 {
            return Err(QecError::NumericalFault("cannot normalize zero state".into()));
        }
        self.data.mapv_inplace(|c| c / n);
        Ok(())
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &QuantumState) -> C64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn scaled(&self, factor: C64) -> Self {
        let mut s = self.clone();
        s.data.mapv_inplace(|c| c * factor);
        s
    }

    pub fn add(&self, other: &QuantumState) -> Self {
        let mut s = self.clone();
        s.data += &other.data;
        s
    }
}

/// |⟨a|b⟩|² for normalized states.
pub fn fidelity(a: &QuantumState, b: &QuantumState) -> f64 {
    a.inner(b).norm_sqr()
}

/// Eigendecomposition of a hermitian operator, with eigenvalues clustered
/// into degenerate groups for projective measurement.
pub struct EigDecomp {
    pub values: Array1<f64>,
    /// Columns are eigenvectors satisfying `H v_k = values[k] v_k`.
    pub vectors: Array2<C64>,
    /// (representative eigenvalue, column indices) per degenerate cluster,
    /// sorted by eigenvalue.
    pub clusters: Vec<(f64, Vec<usize>)>,
}

/// Dense operator on a shared layout. `hermitian` is verified at
/// construction for the paths that promise it; the eigendecomposition is
/// computed lazily and cached.
pub struct Operator {
    pub layout: Arc<HilbertLayout>,
    pub mat: Array2<C64>,
    hermitian: bool,
    eig: OnceLock<Arc<EigDecomp>>,
}

impl Clone for Operator {
    fn clone(&self) -> Self {
        let eig = OnceLock::new();
        if let Some(e) = self.eig.get() {
            let _ = eig.set(e.clone());
        }
        Operator {
            layout: self.layout.clone(),
            mat: self.mat.clone(),
            hermitian: self.hermitian,
            eig,
        }
    }
}

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Operator(dim {}, hermitian: {})", self.layout.dim(), self.hermitian)
    }
}

fn max_abs_diff(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

impl Operator {
    /// General (not necessarily hermitian) operator from a dense matrix.
    pub fn from_matrix(layout: &Arc<HilbertLayout>, mat: Array2<C64>) -> Result<Self> {
        if mat.nrows() != layout.dim() || mat.ncols() != layout.dim() {
            return Err(QecError::DimensionMismatch {
                expected: layout.dim(),
                got: mat.nrows(),
            });
        }
        let herm = max_abs_diff(&mat, &conj_transpose(&mat)) < HERMITICITY_TOL;
        Ok(Operator {
            layout: layout.clone(),
            mat,
            hermitian: herm,
            eig: OnceLock::new(),
        })
    }

    /// Hermitian operator; errors if the matrix is not hermitian.
    pub fn hermitian_from_matrix(layout: &Arc<HilbertLayout>, mat: Array2<C64>) -> Result<Self> {
        let dev = max_abs_diff(&mat, &conj_transpose(&mat));
        if dev > HERMITICITY_TOL {
            return Err(QecError::NotHermitian { deviation: dev });
        }
        let mut op = Operator::from_matrix(layout, mat)?;
        op.hermitian = true;
        Ok(op)
    }

    pub fn identity(layout: &Arc<HilbertLayout>) -> Self {
        Operator {
            layout: layout.clone(),
            mat: Array2::eye(layout.dim()),
            hermitian: true,
            eig: OnceLock::new(),
        }
    }

    pub fn zeros(layout: &Arc<HilbertLayout>) -> Self {
        Operator {
            layout: layout.clone(),
            mat: Array2::zeros((layout.dim(), layout.dim())),
            hermitian: true,
            eig: OnceLock::new(),
        }
    }

    /// |a⟩⟨b| built from two states.
    pub fn outer(a: &QuantumState, b: &QuantumState) -> Self {
        let d = a.layout.dim();
        let mut mat = Array2::zeros((d, d));
        for i in 0..d {
            if a.data[i] == C64::new(0.0, 0.0) {
                continue;
            }
            for j in 0..d {
                mat[[i, j]] = a.data[i] * b.data[j].conj();
            }
        }
        Operator {
            layout: a.layout.clone(),
            mat,
            hermitian: false,
            eig: OnceLock::new(),
        }
    }

    /// Orthogonal projector onto the span of the given states (assumed
    /// orthonormal).
    pub fn projector(states: &[&QuantumState]) -> Result<Self> {
        let layout = states
            .first()
            .ok_or_else(|| QecError::LayoutMismatch("projector needs at least one state".into()))?
            .layout
            .clone();
        let d = layout.dim();
        let mut mat: Array2<C64> = Array2::zeros((d, d));
        for s in states {
            for i in 0..d {
                if s.data[i] == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..d {
                    mat[[i, j]] += s.data[i] * s.data[j].conj();
                }
            }
        }
        let mut op = Operator::from_matrix(&layout, mat)?;
        op.hermitian = true;
        Ok(op)
    }

    /// Embed a local operator acting on the listed factors (in the listed
    /// order) into the full space, tensored with identity elsewhere.
    pub fn embed(
        layout: &Arc<HilbertLayout>,
        local: &Array2<C64>,
        factor_indices: &[usize],
    ) -> Result<Self> {
        let mut loc_dim = 1usize;
        for &fi in factor_indices {
            if fi >= layout.n_factors() {
                return Err(QecError::LayoutMismatch(format!(
                    "factor index {fi} out of range"
                )));
            }
            loc_dim *= layout.factor(fi).dim;
        }
        for (a, &fa) in factor_indices.iter().enumerate() {
            for &fb in factor_indices.iter().skip(a + 1) {
                if fa == fb {
                    return Err(QecError::LayoutMismatch(format!(
                        "factor index {fa} listed twice"
                    )));
                }
            }
        }
        if local.nrows() != loc_dim || local.ncols() != loc_dim {
            return Err(QecError::DimensionMismatch {
                expected: loc_dim,
                got: local.nrows(),
            });
        }
        let d = layout.dim();
        let n = layout.n_factors();
        let mut mat: Array2<C64> = Array2::zeros((d, d));

        // Local strides inside the local operator's own index space.
        let mut loc_strides = vec![1usize; factor_indices.len()];
        for i in (0..factor_indices.len().saturating_sub(1)).rev() {
            loc_strides[i] = loc_strides[i + 1] * layout.factor(factor_indices[i + 1]).dim;
        }

        let rest: Vec<usize> = (0..n).filter(|k| !factor_indices.contains(k)).collect();
        let rest_dim: usize = rest.iter().map(|&k| layout.factor(k).dim).product();

        let mut rest_levels = vec![0usize; rest.len()];
        for _ in 0..rest_dim.max(1) {
            // Base flat index contribution of the untouched factors.
            let mut base = 0usize;
            for (r, &fk) in rest.iter().enumerate() {
                base += rest_levels[r] * layout.strides[fk];
            }
            for li in 0..loc_dim {
                for lj in 0..loc_dim {
                    let v = local[[li, lj]];
                    if v == C64::new(0.0, 0.0) {
                        continue;
                    }
                    let mut gi = base;
                    let mut gj = base;
                    let mut ri = li;
                    let mut rj = lj;
                    for (k, &fk) in factor_indices.iter().enumerate() {
                        gi += (ri / loc_strides[k]) * layout.strides[fk];
                        gj += (rj / loc_strides[k]) * layout.strides[fk];
                        ri %= loc_strides[k];
                        rj %= loc_strides[k];
                    }
                    mat[[gi, gj]] = v;
                }
            }
            // Advance mixed-radix counter over the untouched factors.
            let mut carry = true;
            for r in (0..rest.len()).rev() {
                if !carry {
                    break;
                }
                rest_levels[r] += 1;
                if rest_levels[r] == layout.factor(rest[r]).dim {
                    rest_levels[r] = 0;
                } else {
                    carry = false;
                }
            }
            if rest.is_empty() {
                break;
            }
        }
        Operator::from_matrix(layout, mat)
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    /// Max column-sum norm deviation of U†U from the identity.
    pub fn unitarity_deviation(&self) -> f64 {
        let prod = conj_transpose(&self.mat).dot(&self.mat);
        let eye: Array2<C64> = Array2::eye(self.layout.dim());
        max_abs_diff(&prod, &eye)
    }

    pub fn assert_unitary(&self) -> Result<()> {
        let dev = self.unitarity_deviation();
        if dev > UNITARITY_TOL {
            return Err(QecError::NotUnitary { deviation: dev });
        }
        Ok(())
    }

    pub fn adjoint(&self) -> Operator {
        Operator {
            layout: self.layout.clone(),
            mat: conj_transpose(&self.mat),
            hermitian: self.hermitian,
            eig: OnceLock::new(),
        }
    }

    pub fn matmul(&self, other: &Operator) -> Operator {
        Operator {
            layout: self.layout.clone(),
            mat: self.mat.dot(&other.mat),
            hermitian: false,
            eig: OnceLock::new(),
        }
    }

    pub fn add(&self, other: &Operator) -> Operator {
        Operator {
            layout: self.layout.clone(),
            mat: &self.mat + &other.mat,
            hermitian: self.hermitian && other.hermitian,
            eig: OnceLock::new(),
        }
    }

    pub fn scaled(&self, factor: C64) -> Operator {
        let mut mat = self.mat.clone();
        mat.mapv_inplace(|c| c * factor);
        let herm = self.hermitian && factor.im == 0.0;
        Operator {
            layout: self.layout.clone(),
            mat,
            hermitian: herm,
            eig: OnceLock::new(),
        }
    }

    pub fn apply(&self, state: &QuantumState) -> QuantumState {
        QuantumState {
            layout: state.layout.clone(),
            data: self.mat.dot(&state.data),
        }
    }

    /// ⟨ψ|A|ψ⟩ (real part; imaginary part is zero for hermitian A).
    pub fn expectation(&self, state: &QuantumState) -> f64 {
        let applied = self.mat.dot(&state.data);
        state
            .data
            .iter()
            .zip(applied.iter())
            .map(|(a, b)| (a.conj() * b).re)
            .sum()
    }

    /// Spectral 2-norm (largest |eigenvalue|) — hermitian operators only.
    pub fn spectral_norm(&self) -> Result<f64> {
        let e = self.eig()?;
        Ok(e.values.iter().fold(0.0f64, |m, &v| m.max(v.abs())))
    }

    /// Cached eigendecomposition. Only valid for hermitian operators.
    ///
    /// The LAPACK binding in use returns eigenvector columns whose complex
    /// conjugates are the true eigenvectors for row-major input; we detect
    /// the convention from the residual ‖H·V − V·Λ‖ and correct it, so the
    /// cached columns always satisfy `H v_k = λ_k v_k`.
    pub fn eig(&self) -> Result<Arc<EigDecomp>> {
        if !self.hermitian {
            return Err(QecError::NotHermitian { deviation: f64::NAN });
        }
        if let Some(e) = self.eig.get() {
            return Ok(e.clone());
        }
        let (vals, vecs) = self
            .mat
            .eigh(UPLO::Lower)
            .map_err(|e| QecError::Backend(format!("eigh failed: {e}")))?;

        let resid = |v: &Array2<C64>| -> f64 {
            let hv = self.mat.dot(v);
            let mut max = 0.0f64;
            for k in 0..v.ncols() {
                for i in 0..v.nrows() {
                    let r = hv[[i, k]] - v[[i, k]] * C64::new(vals[k], 0.0);
                    max = max.max(r.norm());
                }
            }
            max
        };
        let conj_vecs = vecs.mapv(|c| c.conj());
        let vectors = if resid(&vecs) <= resid(&conj_vecs) {
            vecs
        } else {
            conj_vecs
        };

        // Cluster (nearly) degenerate eigenvalues for projective measurement.
        let scale = vals.iter().fold(1.0f64, |m, &v| m.max(v.abs()));
        let mut clusters: Vec<(f64, Vec<usize>)> = Vec::new();
        for (k, &v) in vals.iter().enumerate() {
            match clusters.last_mut() {
                Some((rep, idxs)) if (v - *rep).abs() <= EIGENVALUE_CLUSTER_TOL * scale => {
                    idxs.push(k)
                }
                _ => clusters.push((v, vec![k])),
            }
        }

        let decomp = Arc::new(EigDecomp {
            values: vals,
            vectors,
            clusters,
        });
        let _ = self.eig.set(decomp.clone());
        Ok(self.eig.get().unwrap().clone())
    }

    /// Dense unitary exp(-i H t) from the cached eigendecomposition.
    pub fn propagator(&self, t: f64) -> Result<Array2<C64>> {
        let e = self.eig()?;
        let d = self.layout.dim();
        let phases: Vec<C64> = e
            .values
            .iter()
            .map(|&v| C64::from_polar(1.0, -v * t))
            .collect();
        // U = V e^{-iΛt} V†
        let mut scaled = e.vectors.clone();
        for k in 0..d {
            for i in 0..d {
                scaled[[i, k]] *= phases[k];
            }
        }
        Ok(scaled.dot(&conj_transpose(&e.vectors)))
    }
}

pub fn conj_transpose(m: &Array2<C64>) -> Array2<C64> {
    m.t().mapv(|c| c.conj())
}

/// Evolve |ψ⟩ under a constant hermitian generator for `duration`:
/// ψ ← exp(-i H duration) ψ, via exact diagonalization.
pub fn evolve_piecewise_constant(
    state: &QuantumState,
    hamiltonian: &Operator,
    duration: f64,
) -> Result<QuantumState> {
    let e = hamiltonian.eig()?;
    let d = state.layout.dim();
    // coeffs in eigenbasis
    let mut out = Array1::<C64>::zeros(d);
    for k in 0..d {
        let mut c = C64::new(0.0, 0.0);
        for i in 0..d {
            c += e.vectors[[i, k]].conj() * state.data[i];
        }
        c *= C64::from_polar(1.0, -e.values[k] * duration);
        for i in 0..d {
            out[i] += e.vectors[[i, k]] * c;
        }
    }
    Ok(QuantumState {
        layout: state.layout.clone(),
        data: out,
    })
}

/// Outcome of a projective measurement.
pub struct MeasurementOutcome {
    /// Representative eigenvalue of the observed cluster.
    pub eigenvalue: f64,
    /// Index of the cluster in the observable's sorted cluster list.
    pub cluster_index: usize,
    pub probability: f64,
    pub post_state: QuantumState,
}

/// Projectively measure a hermitian observable: sample an eigenvalue cluster
/// with the Born rule using one uniform draw from `rng`, collapse and
/// renormalize.
pub fn measure_projective<R: Rng + ?Sized>(
    state: &QuantumState,
    observable: &Operator,
    rng: &mut R,
) -> Result<MeasurementOutcome> {
    let e = observable.eig()?;
    let d = state.layout.dim();
    // Amplitudes in the eigenbasis.
    let mut amps = vec![C64::new(0.0, 0.0); d];
    for (k, amp) in amps.iter_mut().enumerate() {
        let mut c = C64::new(0.0, 0.0);
        for i in 0..d {
            c += e.vectors[[i, k]].conj() * state.data[i];
        }
        *amp = c;
    }
    let probs: Vec<f64> = e
        .clusters
        .iter()
        .map(|(_, idxs)| idxs.iter().map(|&k| amps[k].norm_sqr()).sum::<f64>())
        .collect();
    let total: f64 = probs.iter().sum();
    if !(total.is_finite()) || total < 1e-12 {
        return Err(QecError::NumericalFault(
            "measurement on (near-)zero state".into(),
        ));
    }
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut chosen = e.clusters.len() - 1;
    for (ci, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            chosen = ci;
            break;
        }
    }
    let (rep, idxs) = &e.clusters[chosen];
    let mut out = Array1::<C64>::zeros(d);
    for &k in idxs {
        if amps[k] == C64::new(0.0, 0.0) {
            continue;
        }
        for i in 0..d {
            out[i] += e.vectors[[i, k]] * amps[k];
        }
    }
    let mut post = QuantumState {
        layout: state.layout.clone(),
        data: out,
    };
    post.normalize_in_place()?;
    Ok(MeasurementOutcome {
        eigenvalue: *rep,
        cluster_index: chosen,
        probability: probs[chosen] / total,
        post_state: post,
    })
}

/// Build the unique unitary that maps each `(input, output)` pair and acts as
/// a Gram–Schmidt completion on the orthogonal complement: the remaining
/// computational basis directions are orthonormalized against the inputs and
/// mapped, in order, onto the analogously completed output directions.
///
/// Inputs must be mutually orthonormal, as must outputs (tolerance 1e-8).
pub fn unitary_from_pairs(
    layout: &Arc<HilbertLayout>,
    pairs: &[(QuantumState, QuantumState)],
) -> Result<Operator> {
    let d = layout.dim();
    if pairs.len() > d {
        return Err(QecError::LayoutMismatch("more pairs than dimensions".into()));
    }
    let check_orthonormal = |states: &[&QuantumState], what: &str| -> Result<()> {
        for (i, a) in states.iter().enumerate() {
            for (j, b) in states.iter().enumerate() {
                let ip = a.inner(b);
                let target = if i == j { 1.0 } else { 0.0 };
                if (ip.norm() - target).abs() > 1e-8 {
                    return Err(QecError::ProtocolInvalid(format!(
                        "{what} states of unitary completion are not orthonormal \
                         (⟨{i}|{j}⟩ = {ip})"
                    )));
                }
            }
        }
        Ok(())
    };
    let ins: Vec<&QuantumState> = pairs.iter().map(|(a, _)| a).collect();
    let outs: Vec<&QuantumState> = pairs.iter().map(|(_, b)| b).collect();
    check_orthonormal(&ins, "input")?;
    check_orthonormal(&outs, "output")?;

    let complete = |seed: Vec<Array1<C64>>| -> Vec<Array1<C64>> {
        let mut basis = seed;
        for j in 0..d {
            let mut v = Array1::<C64>::zeros(d);
            v[j] = C64::new(1.0, 0.0);
            for b in &basis {
                let ip: C64 = b.iter().zip(v.iter()).map(|(x, y)| x.conj() * y).sum();
                for i in 0..d {
                    let correction = b[i] * ip;
                    v[i] -= correction;
                }
            }
            let n = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            if n > 1e-8 {
                v.mapv_inplace(|c| c / n);
                basis.push(v);
            }
            if basis.len() == d {
                break;
            }
        }
        basis
    };

    let in_basis = complete(ins.iter().map(|s| s.data.clone()).collect());
    let out_basis = complete(outs.iter().map(|s| s.data.clone()).collect());
    if in_basis.len() != d || out_basis.len() != d {
        return Err(QecError::NumericalFault(
            "unitary completion failed to span the space".into(),
        ));
    }
    // U = Σ_k |out_k⟩⟨in_k|
    let mut mat: Array2<C64> = Array2::zeros((d, d));
    for k in 0..d {
        for i in 0..d {
            if out_basis[k][i] == C64::new(0.0, 0.0) {
                continue;
            }
            for j in 0..d {
                mat[[i, j]] += out_basis[k][i] * in_basis[k][j].conj();
            }
        }
    }
    let op = Operator::from_matrix(layout, mat)?;
    op.assert_unitary()?;
    Ok(op)
}

// ---------------------------------------------------------------------------
// Standard local matrices (2x2 unless noted). Basis index 0 = lower level.
// ---------------------------------------------------------------------------

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// σ_x = [[0,1],[1,0]].
pub fn sigma_x() -> Array2<C64> {
    ndarray::array![[c(0., 0.), c(1., 0.)], [c(1., 0.), c(0., 0.)]]
}

/// σ_y = [[0,-i],[i,0]].
pub fn sigma_y() -> Array2<C64> {
    ndarray::array![[c(0., 0.), c(0., -1.)], [c(0., 1.), c(0., 0.)]]
}

/// σ_z = diag(-1, +1): lower level ↦ -1, upper level ↦ +1.
pub fn sigma_z() -> Array2<C64> {
    ndarray::array![[c(-1., 0.), c(0., 0.)], [c(0., 0.), c(1., 0.)]]
}

/// Lowering operator σ₋ = |0⟩⟨1|.
pub fn sigma_minus() -> Array2<C64> {
    ndarray::array![[c(0., 0.), c(1., 0.)], [c(0., 0.), c(0., 0.)]]
}

/// Raising operator σ₊ = |1⟩⟨0|.
pub fn sigma_plus() -> Array2<C64> {
    ndarray::array![[c(0., 0.), c(0., 0.)], [c(1., 0.), c(0., 0.)]]
}

/// |level⟩⟨level| on a d-level factor.
pub fn level_projector(dim: usize, level: usize) -> Array2<C64> {
    let mut m = Array2::zeros((dim, dim));
    m[[level, level]] = c(1., 0.);
    m
}

/// |a⟩⟨b| on a d-level factor.
pub fn level_transition(dim: usize, a: usize, b: usize) -> Array2<C64> {
    let mut m = Array2::zeros((dim, dim));
    m[[a, b]] = c(1., 0.);
    m
}

/// Number operator diag(0..dim-1).
pub fn number_op(dim: usize) -> Array2<C64> {
    let mut m = Array2::zeros((dim, dim));
    for n in 0..dim {
        m[[n, n]] = c(n as f64, 0.);
    }
    m
}

/// Truncated annihilation operator a|n⟩ = √n |n-1⟩.
pub fn annihilation(dim: usize) -> Array2<C64> {
    let mut m = Array2::zeros((dim, dim));
    for n in 1..dim {
        m[[n - 1, n]] = c((n as f64).sqrt(), 0.);
    }
    m
}
