//! Cyclic Jacobi eigen-solver for small dense real symmetric matrices.

use nalgebra::{DMatrix, DVector};

/// Eigen-decomposition of a symmetric matrix. Eigenvalues are returned in ascending
/// order with the matching eigenvectors as columns.
pub fn jacobi_eigh(matrix: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = matrix.nrows();
    assert_eq!(n, matrix.ncols(), "matrix must be square");
    let mut a = matrix.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);

    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|p| (p + 1..n).map(move |q| (p, q)))
            .map(|(p, q)| a[(p, q)] * a[(p, q)])
            .sum();
        if off.sqrt() <= 1e-17 * scale * n as f64 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut a, &mut v, p, q, c, s);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| a[(i, i)]));
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &v.column(i));
    }
    (values, vectors)
}

fn rotate(a: &mut DMatrix<f64>, v: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    let n = a.nrows();
    let app = a[(p, p)];
    let aqq = a[(q, q)];
    let apq = a[(p, q)];
    for k in 0..n {
        if k != p && k != q {
            let akp = a[(k, p)];
            let akq = a[(k, q)];
            let new_kp = c * akp - s * akq;
            let new_kq = s * akp + c * akq;
            a[(k, p)] = new_kp;
            a[(p, k)] = new_kp;
            a[(k, q)] = new_kq;
            a[(q, k)] = new_kq;
        }
    }
    a[(p, p)] = c * c * app - 2.0 * s * c * apq + s * s * aqq;
    a[(q, q)] = s * s * app + 2.0 * s * c * apq + c * c * aqq;
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn check(m: &DMatrix<f64>) {
        let (w, v) = jacobi_eigh(m);
        let n = m.nrows();
        let orth = v.transpose() * &v - DMatrix::identity(n, n);
        assert!(orth.amax() < 1e-12);
        let recon = &v * DMatrix::from_diagonal(&w) * v.transpose();
        let scale = m.amax().max(1.0);
        assert!((recon - m).amax() < 1e-12 * scale);
        for i in 1..n {
            assert!(w[i - 1] <= w[i]);
        }
    }

    #[test]
    fn two_by_two_closed_form() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let (w, _) = jacobi_eigh(&m);
        assert!((w[0] - 1.0).abs() < 1e-15 && (w[1] - 3.0).abs() < 1e-15);
        check(&m);
    }

    #[test]
    fn diagonal_and_degenerate() {
        check(&DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, -1.0, 3.0])));
        check(&DMatrix::from_element(4, 4, 1.0));
    }

    proptest! {
        #[test]
        fn random_symmetric(vals in proptest::collection::vec(-1e3f64..1e3, 36)) {
            let a = DMatrix::from_row_slice(6, 6, &vals);
            let m = (&a + a.transpose()) * 0.5;
            check(&m);
        }
    }
}
