use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::sparse::{CsrMatrix, ProfileCholesky};

/// Systems up to this many degrees of freedom are solved densely under `Auto`.
pub const DENSE_DOF_LIMIT: usize = 600;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenStrategy {
    #[default]
    Auto,
    Dense,
    /// Shift-inverted block Krylov subspace with Rayleigh-Ritz extraction.
    Krylov,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub n_modes: usize,
    pub strategy: EigenStrategy,
    /// Relative residual tolerance for the iterative solver.
    pub tolerance: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { n_modes: 32, strategy: EigenStrategy::Auto, tolerance: 1e-10 }
    }
}

/// Ascending eigenvalues with M-orthonormal eigenvectors (one `Vec` per mode).
pub(crate) struct Eigenpairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

/// Full spectrum of K x = lambda M x through the Cholesky reduction
/// `L^-1 K L^-T y = lambda y`, `x = L^-T y`. Vectors are the columns of the result.
pub fn dense_generalized_eigen(k: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let chol = Cholesky::new(m.clone())
        .ok_or_else(|| Error::IllConditioned("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let linv_k = l
        .solve_lower_triangular(k)
        .ok_or_else(|| Error::IllConditioned("singular Cholesky factor".into()))?;
    let mut c = l
        .solve_lower_triangular(&linv_k.transpose())
        .ok_or_else(|| Error::IllConditioned("singular Cholesky factor".into()))?;
    let ct = c.transpose();
    c = (c + ct) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let n = order.len();
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut y = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        y.set_column(dst, &eig.eigenvectors.column(src));
    }
    let x = l
        .transpose()
        .solve_upper_triangular(&y)
        .ok_or_else(|| Error::IllConditioned("singular Cholesky factor".into()))?;
    Ok((values, x))
}

pub(crate) fn dense_smallest(k: &CsrMatrix, m: &CsrMatrix, want: usize) -> Result<Eigenpairs> {
    let (values, x) = dense_generalized_eigen(&k.to_dense(), &m.to_dense())?;
    let want = want.min(values.len());
    Ok(Eigenpairs {
        values: values[..want].to_vec(),
        vectors: (0..want).map(|j| x.column(j).iter().copied().collect()).collect(),
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

struct KrylovBasis<'a> {
    k: &'a CsrMatrix,
    m: &'a CsrMatrix,
    q: Vec<Vec<f64>>,
    mq: Vec<Vec<f64>>,
    kq: Vec<Vec<f64>>,
}

impl KrylovBasis<'_> {
    /// M-orthogonalizes `w` against the basis (two Gram-Schmidt passes) and appends it
    /// unless it is numerically dependent.
    fn push(&mut self, mut w: Vec<f64>) -> bool {
        let mw0 = self.m.apply(&w);
        let norm0 = dot(&w, &mw0).max(0.0).sqrt();
        if norm0 == 0.0 {
            return false;
        }
        for _ in 0..2 {
            for (qi, mqi) in self.q.iter().zip(&self.mq) {
                let c = dot(mqi, &w);
                axpy(&mut w, -c, qi);
            }
        }
        let mw = self.m.apply(&w);
        let nrm = dot(&w, &mw).max(0.0).sqrt();
        if nrm < 1e-10 * norm0 {
            return false;
        }
        let inv = 1.0 / nrm;
        w.iter_mut().for_each(|v| *v *= inv);
        let mw: Vec<f64> = mw.iter().map(|v| v * inv).collect();
        self.kq.push(self.k.apply(&w));
        self.q.push(w);
        self.mq.push(mw);
        true
    }

    /// Rayleigh-Ritz on span(Q); returns the `want` smallest pairs and the worst
    /// relative residual.
    fn ritz(&self, want: usize) -> (Eigenpairs, f64) {
        let m = self.q.len();
        let n = self.k.dim();
        let mut t = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let v = dot(&self.q[i], &self.kq[j]);
                t[(i, j)] = v;
                t[(j, i)] = v;
            }
        }
        let eig = SymmetricEigen::new(t);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let want = want.min(m);
        let scale = eig.eigenvalues[order[want - 1]].abs().max(f64::MIN_POSITIVE);
        let mut values = Vec::with_capacity(want);
        let mut vectors = Vec::with_capacity(want);
        let mut worst: f64 = 0.0;
        for &idx in &order[..want] {
            let theta = eig.eigenvalues[idx];
            let y = eig.eigenvectors.column(idx);
            let mut x = vec![0.0; n];
            let mut kx = vec![0.0; n];
            let mut mx = vec![0.0; n];
            for j in 0..m {
                axpy(&mut x, y[j], &self.q[j]);
                axpy(&mut kx, y[j], &self.kq[j]);
                axpy(&mut mx, y[j], &self.mq[j]);
            }
            let r: Vec<f64> = kx.iter().zip(&mx).map(|(a, b)| a - theta * b).collect();
            worst = worst.max(norm(&r) / (scale * norm(&mx)).max(f64::MIN_POSITIVE));
            values.push(theta);
            vectors.push(x);
        }
        (Eigenpairs { values, vectors }, worst)
    }
}

/// Smallest `want` eigenpairs of K x = lambda M x for large sparse systems.
///
/// Builds an M-orthonormal block Krylov basis of `(K + sM)^-1 M` from a random start
/// block and extracts Ritz pairs against K directly. Block size 4 keeps repeated
/// eigenvalues (up to multiplicity 4) from being missed.
pub(crate) fn krylov_smallest(k: &CsrMatrix, m: &CsrMatrix, want: usize, tolerance: f64) -> Result<Eigenpairs> {
    let n = k.dim();
    if want >= n {
        return dense_smallest(k, m, want);
    }
    const BLOCK: usize = 4;
    let shift = k.trace() / m.trace() * (want as f64 / n as f64) * 0.1;
    let op = ProfileCholesky::factor(&k.linear_combination(1.0, m, shift))?;
    let max_basis = n.min((8 * want).max(want + 200));
    let mut basis = KrylovBasis { k, m, q: Vec::new(), mq: Vec::new(), kq: Vec::new() };

    let mut rng = rng_from_seed(0x6B72_796C_6F76);
    let mut block: Vec<Vec<f64>> = (0..BLOCK)
        .map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let mut check_at = (2 * want + 2 * BLOCK).min(max_basis);
    let mut last = (Eigenpairs { values: vec![], vectors: vec![] }, f64::INFINITY);
    loop {
        let before = basis.q.len();
        for w in block.drain(..) {
            if basis.q.len() >= max_basis {
                break;
            }
            basis.push(w);
        }
        let grown = basis.q.len() > before;
        let exhausted = !grown || basis.q.len() >= max_basis;
        if basis.q.len() >= want && (basis.q.len() >= check_at || exhausted) {
            last = basis.ritz(want);
            if last.1 <= tolerance {
                return Ok(last.0);
            }
            check_at = basis.q.len() + 2 * BLOCK;
        }
        if exhausted {
            return Err(Error::Solver {
                residual: last.1,
                detail: format!("Krylov basis of size {} did not resolve {want} modes", basis.q.len()),
            });
        }
        block = basis.q[before..].iter().map(|q| op.solve(&m.apply(q))).collect();
    }
}
