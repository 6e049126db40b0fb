//! Angular-momentum matrices in the |m_I, m_J⟩ product basis.
//!
//! Single-spin bases run from m = +s down to m = −s. Product index is
//! `i_I · (2J+1) + i_J`.

use nalgebra::DMatrix;

/// `S_z` and `S_+` for a spin with `2s = two_s`.
pub fn spin_matrices(two_s: u32) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = two_s as usize + 1;
    let s = two_s as f64 / 2.0;
    let mut sz = DMatrix::zeros(n, n);
    let mut sp = DMatrix::zeros(n, n);
    for i in 0..n {
        let m = s - i as f64;
        sz[(i, i)] = m;
        if i > 0 {
            // ⟨m+1|S+|m⟩, row i−1 holds m+1
            sp[(i - 1, i)] = (s * (s + 1.0) - m * (m + 1.0)).sqrt();
        }
    }
    (sz, sp)
}

/// Operators of the coupled nuclear/electronic system.
#[derive(Debug, Clone)]
pub struct ProductOperators {
    pub iz: DMatrix<f64>,
    pub ip: DMatrix<f64>,
    pub jz: DMatrix<f64>,
    pub jp: DMatrix<f64>,
    /// 2·m_F of each basis state.
    pub two_mf: Vec<i32>,
}

impl ProductOperators {
    pub fn new(two_i: u32, two_j: u32) -> Self {
        let (iz1, ip1) = spin_matrices(two_i);
        let (jz1, jp1) = spin_matrices(two_j);
        let id_i = DMatrix::<f64>::identity(iz1.nrows(), iz1.nrows());
        let id_j = DMatrix::<f64>::identity(jz1.nrows(), jz1.nrows());
        let mut two_mf = Vec::with_capacity(iz1.nrows() * jz1.nrows());
        for a in 0..iz1.nrows() {
            for b in 0..jz1.nrows() {
                two_mf.push(two_i as i32 - 2 * a as i32 + two_j as i32 - 2 * b as i32);
            }
        }
        ProductOperators {
            iz: iz1.kronecker(&id_j),
            ip: ip1.kronecker(&id_j),
            jz: id_i.kronecker(&jz1),
            jp: id_i.kronecker(&jp1),
            two_mf,
        }
    }

    pub fn dim(&self) -> usize {
        self.two_mf.len()
    }

    /// I·J = I_z J_z + (I_+ J_− + I_− J_+)/2.
    pub fn i_dot_j(&self) -> DMatrix<f64> {
        let im = self.ip.transpose();
        let jm = self.jp.transpose();
        &self.iz * &self.jz + (&self.ip * &jm + &im * &self.jp) * 0.5
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn commutator_and_casimir() {
        for two_s in 1..6u32 {
            let (sz, sp) = spin_matrices(two_s);
            let sm = sp.transpose();
            // [S+, S−] = 2 S_z
            let c = &sp * &sm - &sm * &sp;
            assert!((c - &sz * 2.0).amax() < 1e-12);
            let s = two_s as f64 / 2.0;
            let s2 = &sz * &sz + (&sp * &sm + &sm * &sp) * 0.5;
            let n = sz.nrows();
            assert!((s2 - DMatrix::identity(n, n) * (s * (s + 1.0))).amax() < 1e-12);
        }
    }

    #[test]
    fn product_basis_projections() {
        let ops = ProductOperators::new(5, 1);
        assert_eq!(ops.dim(), 12);
        assert_eq!(ops.two_mf[0], 6);
        assert_eq!(ops.two_mf[11], -6);
        let fz = &ops.iz + &ops.jz;
        for (k, &m) in ops.two_mf.iter().enumerate() {
            assert_eq!(fz[(k, k)] * 2.0, m as f64);
        }
    }
}
