use super::DenseMatrix;
use crate::{Error, Result};

/// Eigenvalues at or above this (negative) level are treated as round-off and
/// clamped to zero before taking square roots.
pub const NEG_EIG_TOL: f64 = -1e-9;

const SYMMETRY_TOL: f64 = 1e-9;
const CONVERGENCE_RATIO: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Eigendecomposition of a symmetric matrix, `a = V diag(values) Vᵀ`.
#[derive(Debug, Clone)]
pub struct SymEig {
    /// Eigenvalues in descending order.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns, matching `values`.
    pub vectors: DenseMatrix,
}

impl SymEig {
    pub fn reconstruct(&self) -> DenseMatrix {
        self.reconstruct_with(|v| v)
    }

    /// `V diag(f(λ)) Vᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        let n = self.values.len();
        let mut out = DenseMatrix::zeros(n, n);
        for (k, &lambda) in self.values.iter().enumerate() {
            let w = f(lambda);
            if w == 0.0 {
                continue;
            }
            for i in 0..n {
                let vi = self.vectors[(i, k)] * w;
                for j in 0..n {
                    out[(i, j)] += vi * self.vectors[(j, k)];
                }
            }
        }
        out
    }
}

fn off_diagonal_norm(a: &DenseMatrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

fn diagonal_norm(a: &DenseMatrix) -> f64 {
    (0..a.rows()).map(|i| a[(i, i)] * a[(i, i)]).sum::<f64>().sqrt()
}

/// Cyclic Jacobi eigensolver for symmetric matrices.
pub fn sym_eig(a: &DenseMatrix) -> Result<SymEig> {
    if !a.is_square() {
        return Err(Error::Shape(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let asym = a.asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(Error::Shape(format!(
            "matrix is not symmetric (max |a_ij - a_ji| = {asym:e})"
        )));
    }
    let n = a.rows();
    let mut m = a.clone();
    m.symmetrize();
    let mut v = DenseMatrix::identity(n);

    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&m) <= CONVERGENCE_RATIO * diagonal_norm(&m) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut m, &mut v, p, q, c, s);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..n {
            vectors[(r, dst)] = v[(r, src)];
        }
    }
    Ok(SymEig { values, vectors })
}

/// Applies the rotation zeroing m[p][q]: m ← JᵀmJ, v ← vJ.
fn rotate(m: &mut DenseMatrix, v: &mut DenseMatrix, p: usize, q: usize, c: f64, s: f64) {
    let n = m.rows();
    for k in 0..n {
        let mkp = m[(k, p)];
        let mkq = m[(k, q)];
        m[(k, p)] = c * mkp - s * mkq;
        m[(k, q)] = s * mkp + c * mkq;
    }
    for k in 0..n {
        let mpk = m[(p, k)];
        let mqk = m[(q, k)];
        m[(p, k)] = c * mpk - s * mqk;
        m[(q, k)] = s * mpk + c * mqk;
    }
    m[(p, q)] = 0.0;
    m[(q, p)] = 0.0;
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

fn clamped_sqrt(lambda: f64) -> Result<f64> {
    if lambda < NEG_EIG_TOL {
        return Err(Error::Domain(format!(
            "matrix is not positive semi-definite (eigenvalue {lambda:e})"
        )));
    }
    Ok(lambda.max(0.0).sqrt())
}

/// Principal square root of a symmetric positive semi-definite matrix.
pub fn psd_sqrt(a: &DenseMatrix) -> Result<DenseMatrix> {
    let eig = sym_eig(a)?;
    for &l in &eig.values {
        clamped_sqrt(l)?;
    }
    Ok(eig.reconstruct_with(|l| l.max(0.0).sqrt()))
}

/// `Tr((s1 s2)^{1/2})`, evaluated as `Tr((s1^{1/2} s2 s1^{1/2})^{1/2})`.
pub fn trace_sqrt_product(s1: &DenseMatrix, s2: &DenseMatrix) -> Result<f64> {
    if s1.rows() != s2.rows() || s1.cols() != s2.cols() {
        return Err(Error::Shape(format!(
            "covariances differ in shape: {}x{} vs {}x{}",
            s1.rows(),
            s1.cols(),
            s2.rows(),
            s2.cols()
        )));
    }
    let root = psd_sqrt(s1)?;
    // s2 is validated separately; the sandwich alone could hide a bad s2
    // behind a singular s1.
    for &l in &sym_eig(s2)?.values {
        clamped_sqrt(l)?;
    }
    let mut inner = root.matmul(s2)?.matmul(&root)?;
    inner.symmetrize();
    sym_eig(&inner)?
        .values
        .into_iter()
        .map(clamped_sqrt)
        .sum()
}
