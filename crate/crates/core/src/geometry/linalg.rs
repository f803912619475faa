use nalgebra::{DMatrix, DVector};

/// Thin SVD `A = U diag(s) V^T` of an m x k matrix, singular values sorted
/// descending. When m < k the trailing k - m values are zero.
///
/// One-sided Jacobi rotations on the columns of `A`. The routine in nalgebra
/// 0.35 returns wrong factors for some tall matrices with two nearly equal
/// singular values, and every estimator here feeds it exactly that shape.
#[derive(Debug, Clone)]
pub(crate) struct ThinSvd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v: DMatrix<f64>,
}

const MAX_SWEEPS: usize = 60;

impl ThinSvd {
    pub fn new(a: &DMatrix<f64>) -> Self {
        let (m, k) = a.shape();
        let mut w = DMatrix::from_fn(m.max(k), k, |r, c| if r < m { a[(r, c)] } else { 0.0 });
        let mut v = DMatrix::<f64>::identity(k, k);
        for _ in 0..MAX_SWEEPS {
            let mut rotated = false;
            for p in 0..k {
                for q in p + 1..k {
                    let alpha = w.column(p).norm_squared();
                    let beta = w.column(q).norm_squared();
                    let gamma = w.column(p).dot(&w.column(q));
                    if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                        continue;
                    }
                    rotated = true;
                    let zeta = (beta - alpha) / (2.0 * gamma);
                    let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = c * t;
                    rotate(&mut w, p, q, c, s);
                    rotate(&mut v, p, q, c, s);
                }
            }
            if !rotated {
                break;
            }
        }
        let norms: Vec<f64> = (0..k).map(|j| w.column(j).norm()).collect();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
        let s = DVector::from_fn(k, |r, _| norms[order[r]]);
        let v = DMatrix::from_fn(k, k, |r, c| v[(r, order[c])]);
        let u = DMatrix::from_fn(m, k, |r, c| {
            let sigma = norms[order[c]];
            if sigma > 0.0 {
                w[(r, order[c])] / sigma
            } else {
                0.0
            }
        });
        Self { u, s, v }
    }

    /// Least-squares solution of `A X = B`. Callers reject rank-deficient
    /// systems before solving; exact zeros are skipped.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut utb = self.u.transpose() * b;
        for (r, sigma) in self.s.iter().enumerate() {
            let inv = if *sigma > 0.0 { 1.0 / sigma } else { 0.0 };
            utb.row_mut(r).scale_mut(inv);
        }
        &self.v * utb
    }
}

fn rotate(m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for r in 0..m.nrows() {
        let (a, b) = (m[(r, p)], m[(r, q)]);
        m[(r, p)] = c * a - s * b;
        m[(r, q)] = s * a + c * b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, Vector3};

    #[test]
    fn close_singular_values_recompose() {
        // Orthonormal columns from a rotation, scaled to nearly equal norms.
        let q = Rotation3::from_euler_angles(0.3, -0.7, 1.1).into_inner();
        let basis = DMatrix::from_fn(64, 3, |r, c| {
            let x = r as f64 / 63.0;
            [1.0, x, x * x][c]
        });
        let qr = basis.qr();
        let u = qr.q();
        let s = Vector3::new(261.88, 261.86, 40.0);
        let vt = DMatrix::from_fn(3, 3, |r, c| q[(c, r)]);
        let a = &u * DMatrix::from_diagonal(&DVector::from_column_slice(s.as_slice())) * vt;
        let svd = ThinSvd::new(&a);
        let back = &svd.u * DMatrix::from_diagonal(&svd.s) * svd.v.transpose();
        assert!((back - &a).abs().max() <= 1e-10);
        for (got, want) in svd.s.iter().zip(s.iter()) {
            assert!((got - want).abs() <= 1e-10, "{got} vs {want}");
        }
        let utu = svd.u.transpose() * &svd.u;
        assert!((utu - DMatrix::<f64>::identity(3, 3)).abs().max() <= 1e-12);
    }

    #[test]
    fn least_squares_matches_normal_equations() {
        let a = DMatrix::from_fn(10, 3, |r, c| ((r * 7 + c * 3) % 11) as f64 - 5.0 + 0.1 * c as f64);
        let b = DMatrix::from_fn(10, 2, |r, c| (r as f64).sin() + c as f64);
        let x = ThinSvd::new(&a).solve(&b);
        let ne = (a.transpose() * &a).try_inverse().unwrap() * a.transpose() * &b;
        assert!((x - ne).abs().max() <= 1e-10);
    }

    #[test]
    fn rank_deficient_has_zero_tail() {
        let a = DMatrix::from_fn(6, 3, |r, c| (r + 1) as f64 * [1.0, 2.0, 3.0][c]);
        let svd = ThinSvd::new(&a);
        assert!(svd.s[1] <= 1e-12 * svd.s[0]);
        assert!(svd.s[2] <= 1e-12 * svd.s[0]);
    }
}
