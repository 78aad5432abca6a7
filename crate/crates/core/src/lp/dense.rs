//! Small dense LU factorization with partial pivoting.

/// `P·A = L·U` for a square row-major matrix.
#[derive(Debug, Clone)]
pub(crate) struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    /// Factors `a` (row-major, `n×n`). Returns `None` if a pivot falls below
    /// `rel_tol` times the largest entry.
    pub(crate) fn factor(n: usize, mut a: Vec<f64>, rel_tol: f64) -> Option<Self> {
        debug_assert_eq!(a.len(), n * n);
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if n > 0 && scale == 0.0 {
            return None;
        }
        let tol = rel_tol * scale;
        let mut perm: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let (piv, pmax) = (col..n)
                .map(|r| (r, a[r * n + col].abs()))
                .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pmax <= tol {
                return None;
            }
            if piv != col {
                for c in 0..n {
                    a.swap(piv * n + c, col * n + c);
                }
                perm.swap(piv, col);
            }
            let p = a[col * n + col];
            for r in col + 1..n {
                let f = a[r * n + col] / p;
                if f == 0.0 {
                    continue;
                }
                a[r * n + col] = f;
                for c in col + 1..n {
                    a[r * n + c] -= f * a[col * n + c];
                }
            }
        }
        Some(Self { n, lu: a, perm })
    }

    /// Solves `A x = b`.
    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 0..n {
            let mut s = x[r];
            for c in 0..r {
                s -= self.lu[r * n + c] * x[c];
            }
            x[r] = s;
        }
        for r in (0..n).rev() {
            let mut s = x[r];
            for c in r + 1..n {
                s -= self.lu[r * n + c] * x[c];
            }
            x[r] = s / self.lu[r * n + r];
        }
        x
    }

    /// Solves `Aᵀ y = c`.
    pub(crate) fn solve_transpose(&self, c: &[f64]) -> Vec<f64> {
        let n = self.n;
        // Uᵀ w = c
        let mut w = c.to_vec();
        for r in 0..n {
            let mut s = w[r];
            for k in 0..r {
                s -= self.lu[k * n + r] * w[k];
            }
            w[r] = s / self.lu[r * n + r];
        }
        // Lᵀ v = w
        for r in (0..n).rev() {
            let mut s = w[r];
            for k in r + 1..n {
                s -= self.lu[k * n + r] * w[k];
            }
            w[r] = s;
        }
        let mut y = vec![0.0; n];
        for (i, &p) in self.perm.iter().enumerate() {
            y[p] = w[i];
        }
        y
    }
}
