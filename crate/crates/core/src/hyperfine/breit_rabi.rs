use super::{HyperfineError, HyperfineSystem};

/// Manifold `F = I ± 1/2` of a J = 1/2 ground state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Plus,
    Minus,
}

/// Closed-form Breit–Rabi energy (Hz) of the level with `2 m_F = two_mf` on `branch`.
pub fn breit_rabi_oracle(
    sys: &HyperfineSystem,
    b: f64,
    two_mf: i32,
    branch: Branch,
) -> Result<f64, HyperfineError> {
    if sys.two_j() != 1 {
        return Err(HyperfineError::NotApplicable(format!(
            "closed form needs J = 1/2, system has J = {}",
            sys.electronic_spin()
        )));
    }
    let i = sys.nuclear_spin();
    let two_i = sys.two_i() as i32;
    if two_mf.abs() > two_i + 1 || (two_mf - two_i - 1) % 2 != 0 {
        return Err(HyperfineError::NotApplicable(format!(
            "m_F = {two_mf}/2 does not exist for I = {i}"
        )));
    }
    let a = sys.hyperfine_constant;
    let mu = sys.bohr_magneton;
    let (gj, gi) = (sys.electronic_g, sys.nuclear_g);
    let m = two_mf as f64 / 2.0;

    if two_mf.abs() == two_i + 1 {
        if branch == Branch::Minus {
            return Err(HyperfineError::NotApplicable(format!(
                "stretch state m_F = {m} exists only for F = I + 1/2"
            )));
        }
        // product state |m_I = ±I, m_J = ±1/2⟩
        return Ok(0.5 * a * i + m.signum() * mu * b * (0.5 * gj + gi * i));
    }

    let de = a * (i + 0.5);
    let x = (gj - gi) * mu * b / de;
    let root = (1.0 + 4.0 * m * x / (2.0 * i + 1.0) + x * x).sqrt();
    let sign = match branch {
        Branch::Plus => 1.0,
        Branch::Minus => -1.0,
    };
    Ok(-de / (2.0 * (2.0 * i + 1.0)) + gi * mu * m * b + sign * 0.5 * de * root)
}
