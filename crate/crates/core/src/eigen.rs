//! Cyclic Jacobi eigenvalue solver for small dense symmetric matrices.
//!
//! Kernel matrices in this crate are at most a few dozen rows wide, so the
//! quadratic-convergence Jacobi sweep is both fast enough and very accurate
//! (it recovers small eigenvalues to high relative precision).

/// Dense row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Builds a matrix from rows. Returns `None` when the rows are ragged or not square.
    pub fn from_rows(rows: &[Vec<f64>]) -> Option<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return None;
        }
        Some(Self {
            n,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n.max(1)).map(|c| c.to_vec()).collect()
    }

    fn off_diagonal_norm(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j {
                    let v = self.get(i, j);
                    s += v * v;
                }
            }
        }
        s.sqrt()
    }
}

/// Stopping rule for the Jacobi sweeps.
#[derive(Debug, Clone, Copy)]
pub struct JacobiConfig {
    /// Stop once the off-diagonal norm falls below `rel_tol` times the Frobenius norm.
    pub rel_tol: f64,
    pub max_sweeps: usize,
}

impl Default for JacobiConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            max_sweeps: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Eigen {
    /// Eigenvalues sorted descending.
    pub values: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
///
/// Only the upper triangle is trusted; the input is symmetrized before rotating.
pub fn symmetric_eigenvalues(matrix: &SquareMatrix, config: JacobiConfig) -> Eigen {
    let n = matrix.dim();
    let mut a = SquareMatrix::from_fn(n, |i, j| {
        if i <= j {
            matrix.get(i, j)
        } else {
            matrix.get(j, i)
        }
    });
    let threshold = config.rel_tol * a.frobenius_norm();

    let mut sweeps = 0;
    let mut converged = a.off_diagonal_norm() <= threshold;
    while !converged && sweeps < config.max_sweeps {
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut a, p, q);
            }
        }
        sweeps += 1;
        converged = a.off_diagonal_norm() <= threshold;
    }

    let mut values: Vec<f64> = (0..n).map(|i| a.get(i, i)).collect();
    values.sort_by(|x, y| y.total_cmp(x));
    Eigen {
        values,
        sweeps,
        converged,
    }
}

// Annihilates a[p][q] with a single Givens rotation applied on both sides.
fn rotate(a: &mut SquareMatrix, p: usize, q: usize) {
    let apq = a.get(p, q);
    if apq == 0.0 {
        return;
    }
    let app = a.get(p, p);
    let aqq = a.get(q, q);
    let theta = (aqq - app) / (2.0 * apq);
    let t = if theta.abs() > 1e150 {
        0.5 / theta
    } else {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    let n = a.dim();
    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = a.get(k, p);
        let akq = a.get(k, q);
        let new_kp = c * akp - s * akq;
        let new_kq = s * akp + c * akq;
        a.set(k, p, new_kp);
        a.set(p, k, new_kp);
        a.set(k, q, new_kq);
        a.set(q, k, new_kq);
    }
    a.set(p, p, app - t * apq);
    a.set(q, q, aqq + t * apq);
    a.set(p, q, 0.0);
    a.set(q, p, 0.0);
}
