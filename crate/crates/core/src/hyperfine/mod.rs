//! Ground-state hyperfine Zeeman structure of a single ion.
//!
//! `H = A I·J + µB B (gJ J_z + gI I_z)` in frequency units, with `gI` expressed in
//! Bohr magnetons. Levels are solved per m_F block and tagged with adiabatic
//! `|F, m_F⟩` labels that are continued from zero field.

mod breit_rabi;
pub mod jacobi;
pub mod spin;
mod transitions;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

pub use breit_rabi::{breit_rabi_oracle, Branch};
pub use transitions::{
    curvature, detuning_curve, field_sensitivity, field_sensitivity_numeric, find_clock_field,
    find_clock_field_in, quadratic_coefficient, transition_frequency, DetuningPoint,
    TransitionLabels, TransitionSpec, TransitionTag,
};

use jacobi::jacobi_eigh;
use spin::ProductOperators;

/// CODATA Bohr magneton in Hz/T.
pub const BOHR_MAGNETON_HZ_PER_T: f64 = 13.996_245_042e9;
/// Electron-to-proton mass ratio, converting nuclear to Bohr magnetons.
pub const NUCLEAR_TO_BOHR: f64 = 1.0 / 1_836.152_673_43;

/// Default label-tracking step (T).
pub const LABEL_STEP: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HyperfineError {
    #[error("invalid hyperfine system: {0}")]
    InvalidSystem(String),
    #[error("field must be finite and non-negative, got {0} T")]
    InvalidField(f64),
    #[error("adiabatic labels are ambiguous at {field} T in the m_F = {two_mf}/2 block")]
    DegenerateLabeling { field: f64, two_mf: i32 },
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("no sign change of the field sensitivity in [{lo}, {hi}] T")]
    NoRootInBracket { lo: f64, hi: f64 },
    #[error("no level labelled {0}")]
    UnknownLabel(StateLabel),
    #[error("malformed state label '{0}'")]
    MalformedLabel(String),
    #[error("transition {upper} - {lower} has non-positive frequency {frequency} Hz")]
    NonPositiveFrequency {
        lower: StateLabel,
        upper: StateLabel,
        frequency: f64,
    },
}

/// Units in which the nuclear g-factor is quoted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NuclearGConvention {
    BohrMagneton,
    NuclearMagneton,
}

/// Ion ground-state parameters. All frequencies in Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperfineSystem {
    two_i: u32,
    two_j: u32,
    pub hyperfine_constant: f64,
    pub electronic_g: f64,
    /// In Bohr magnetons, entering as `+gI µB B I_z`.
    pub nuclear_g: f64,
    pub bohr_magneton: f64,
}

impl HyperfineSystem {
    /// `nuclear_spin` and `electronic_spin` must be non-negative multiples of 1/2.
    pub fn new(
        nuclear_spin: f64,
        electronic_spin: f64,
        hyperfine_constant: f64,
        electronic_g: f64,
        nuclear_g: f64,
        convention: NuclearGConvention,
        bohr_magneton: f64,
    ) -> Result<Self, HyperfineError> {
        let two_i = doubled_spin(nuclear_spin, "nuclear spin")?;
        let two_j = doubled_spin(electronic_spin, "electronic spin")?;
        if two_j == 0 {
            return Err(HyperfineError::InvalidSystem(
                "electronic spin must be at least 1/2".into(),
            ));
        }
        if !(bohr_magneton > 0.0 && bohr_magneton.is_finite()) {
            return Err(HyperfineError::InvalidSystem(format!(
                "Bohr magneton must be positive, got {bohr_magneton}"
            )));
        }
        for (name, v) in [
            ("hyperfine constant", hyperfine_constant),
            ("electronic g", electronic_g),
            ("nuclear g", nuclear_g),
        ] {
            if !v.is_finite() {
                return Err(HyperfineError::InvalidSystem(format!("{name} is not finite")));
            }
        }
        let nuclear_g = match convention {
            NuclearGConvention::BohrMagneton => nuclear_g,
            NuclearGConvention::NuclearMagneton => nuclear_g * NUCLEAR_TO_BOHR,
        };
        Ok(HyperfineSystem {
            two_i,
            two_j,
            hyperfine_constant,
            electronic_g,
            nuclear_g,
            bohr_magneton,
        })
    }

    /// ²⁵Mg⁺ ground state with literature constants.
    pub fn magnesium_25() -> Self {
        HyperfineSystem::new(
            2.5,
            0.5,
            -596.254_376e6,
            2.002_263,
            1.862_001e-4,
            NuclearGConvention::BohrMagneton,
            BOHR_MAGNETON_HZ_PER_T,
        )
        .expect("literature constants are valid")
    }

    pub fn nuclear_spin(&self) -> f64 {
        self.two_i as f64 / 2.0
    }

    pub fn electronic_spin(&self) -> f64 {
        self.two_j as f64 / 2.0
    }

    pub fn two_i(&self) -> u32 {
        self.two_i
    }

    pub fn two_j(&self) -> u32 {
        self.two_j
    }

    pub fn dim(&self) -> usize {
        (self.two_i as usize + 1) * (self.two_j as usize + 1)
    }

    pub fn operators(&self) -> ProductOperators {
        ProductOperators::new(self.two_i, self.two_j)
    }

    /// Zero-field energy of manifold F (Hz).
    pub fn zero_field_energy(&self, two_f: i32) -> f64 {
        let f = two_f as f64 / 2.0;
        let i = self.nuclear_spin();
        let j = self.electronic_spin();
        0.5 * self.hyperfine_constant * (f * (f + 1.0) - i * (i + 1.0) - j * (j + 1.0))
    }

    /// Longitudinal magnetic-moment operator `µB (gJ J_z + gI I_z)` (Hz/T) and its
    /// raising part `µB (gJ J_+ + gI I_+)`.
    pub fn moment_operators(&self, ops: &ProductOperators) -> (DMatrix<f64>, DMatrix<f64>) {
        let mz = (&ops.jz * self.electronic_g + &ops.iz * self.nuclear_g) * self.bohr_magneton;
        let mp = (&ops.jp * self.electronic_g + &ops.ip * self.nuclear_g) * self.bohr_magneton;
        (mz, mp)
    }
}

fn doubled_spin(s: f64, what: &str) -> Result<u32, HyperfineError> {
    let two = 2.0 * s;
    if !(two >= 0.0) || (two - two.round()).abs() > 1e-12 || two > 64.0 {
        return Err(HyperfineError::InvalidSystem(format!(
            "{what} must be a non-negative multiple of 1/2, got {s}"
        )));
    }
    Ok(two.round() as u32)
}

/// Adiabatic `|F, m_F⟩` tag, stored as doubled quantum numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateLabel {
    pub two_f: i32,
    pub two_mf: i32,
}

impl StateLabel {
    /// Label for integer `F` and `m_F`.
    pub const fn new(f: i32, mf: i32) -> Self {
        StateLabel {
            two_f: 2 * f,
            two_mf: 2 * mf,
        }
    }

    pub fn f(&self) -> f64 {
        self.two_f as f64 / 2.0
    }

    pub fn mf(&self) -> f64 {
        self.two_mf as f64 / 2.0
    }
}

fn fmt_half(two: i32) -> String {
    if two % 2 == 0 {
        (two / 2).to_string()
    } else {
        format!("{two}/2")
    }
}

impl fmt::Display for StateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|{},{}⟩", fmt_half(self.two_f), fmt_half(self.two_mf))
    }
}

impl Serialize for StateLabel {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

fn parse_half(text: &str) -> Option<i32> {
    let text = text.trim();
    match text.split_once('/') {
        Some((num, "2")) => {
            let n: i32 = num.trim().parse().ok()?;
            (n % 2 != 0).then_some(n)
        }
        Some(_) => None,
        None => text.parse::<i32>().ok().map(|n| 2 * n),
    }
}

impl FromStr for StateLabel {
    type Err = HyperfineError;

    /// Accepts `3,1`, `|3,-1>`, `|3,-1⟩` or `5/2,-3/2`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || HyperfineError::MalformedLabel(s.to_string());
        let inner = s
            .trim()
            .trim_start_matches('|')
            .trim_end_matches('>')
            .trim_end_matches('⟩');
        let (f, m) = inner.split_once(',').ok_or_else(bad)?;
        let label = StateLabel {
            two_f: parse_half(f).ok_or_else(bad)?,
            two_mf: parse_half(m).ok_or_else(bad)?,
        };
        if label.two_f < 0 || label.two_mf.abs() > label.two_f || (label.two_f - label.two_mf) % 2 != 0
        {
            return Err(bad());
        }
        Ok(label)
    }
}

/// Levels of one m_F block.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub two_mf: i32,
    /// Product-basis indices belonging to this block.
    pub basis: Vec<usize>,
    /// Level indices, ascending in energy.
    pub levels: Vec<usize>,
}

/// Diagonalised Hamiltonian at one field.
#[derive(Debug, Clone)]
pub struct Eigensystem {
    pub field_strength: f64,
    /// Level energies (Hz); grouped by block with m_F descending, ascending within a block.
    pub energies: Vec<f64>,
    /// Columns are level eigenvectors in the product basis.
    pub eigenvectors: DMatrix<f64>,
    pub labels: Vec<StateLabel>,
    pub blocks: Vec<Block>,
    label_map: HashMap<StateLabel, usize>,
}

impl Eigensystem {
    pub fn index(&self, label: StateLabel) -> Result<usize, HyperfineError> {
        self.label_map
            .get(&label)
            .copied()
            .ok_or(HyperfineError::UnknownLabel(label))
    }

    pub fn energy(&self, label: StateLabel) -> Result<f64, HyperfineError> {
        Ok(self.energies[self.index(label)?])
    }

    pub fn vector(&self, label: StateLabel) -> Result<nalgebra::DVector<f64>, HyperfineError> {
        Ok(self.eigenvectors.column(self.index(label)?).into_owned())
    }

    /// ⟨a|O|b⟩ for a product-basis operator.
    pub fn matrix_element(&self, op: &DMatrix<f64>, a: usize, b: usize) -> f64 {
        let va = self.eigenvectors.column(a);
        let vb = self.eigenvectors.column(b);
        va.dot(&(op * vb))
    }
}

/// Hamiltonian matrix (Hz) in the |m_I, m_J⟩ basis at field `b` along z.
pub fn build_hamiltonian(sys: &HyperfineSystem, b: f64) -> DMatrix<f64> {
    let ops = sys.operators();
    hamiltonian_from(sys, &ops, b)
}

fn hamiltonian_from(sys: &HyperfineSystem, ops: &ProductOperators, b: f64) -> DMatrix<f64> {
    let (mz, _) = sys.moment_operators(ops);
    ops.i_dot_j() * sys.hyperfine_constant + mz * b
}

fn block_structure(ops: &ProductOperators) -> Vec<(i32, Vec<usize>)> {
    let mut keys: Vec<i32> = ops.two_mf.clone();
    keys.sort_unstable_by(|a, b| b.cmp(a));
    keys.dedup();
    keys.into_iter()
        .map(|m| {
            let idx = (0..ops.dim()).filter(|&k| ops.two_mf[k] == m).collect();
            (m, idx)
        })
        .collect()
}

fn diagonalise_block(h: &DMatrix<f64>, basis: &[usize]) -> (Vec<f64>, DMatrix<f64>) {
    let n = basis.len();
    let sub = DMatrix::from_fn(n, n, |r, c| h[(basis[r], basis[c])]);
    let (w, v) = jacobi_eigh(&sub);
    (w.iter().copied().collect(), v)
}

/// F values allowed in a block, ordered by zero-field energy.
fn zero_field_order(sys: &HyperfineSystem, two_mf: i32) -> Result<Vec<i32>, HyperfineError> {
    let lo = (sys.two_i as i32 - sys.two_j as i32).abs();
    let hi = (sys.two_i + sys.two_j) as i32;
    let mut fs: Vec<i32> = (lo..=hi).step_by(2).filter(|f| *f >= two_mf.abs()).collect();
    fs.sort_by(|a, b| {
        sys.zero_field_energy(*a)
            .total_cmp(&sys.zero_field_energy(*b))
    });
    for w in fs.windows(2) {
        let gap = (sys.zero_field_energy(w[1]) - sys.zero_field_energy(w[0])).abs();
        if gap <= 1e-12 * sys.hyperfine_constant.abs().max(1.0) {
            return Err(HyperfineError::DegenerateLabeling { field: 0.0, two_mf });
        }
    }
    Ok(fs)
}

/// Solves the level structure at `b` with labels continued from zero field in steps
/// of [`LABEL_STEP`].
pub fn eigensystem(sys: &HyperfineSystem, b: f64) -> Result<Eigensystem, HyperfineError> {
    eigensystem_with_step(sys, b, LABEL_STEP)
}

/// As [`eigensystem`] with an explicit label-tracking step (T).
pub fn eigensystem_with_step(
    sys: &HyperfineSystem,
    b: f64,
    step: f64,
) -> Result<Eigensystem, HyperfineError> {
    if !(b >= 0.0 && b.is_finite()) {
        return Err(HyperfineError::InvalidField(b));
    }
    if !(step > 0.0) {
        return Err(HyperfineError::InvalidField(step));
    }
    let ops = sys.operators();
    let dim = ops.dim();
    let blocks = block_structure(&ops);
    let n_steps = (b / step).ceil().max(0.0) as usize;

    let mut energies = vec![0.0; dim];
    let mut eigenvectors = DMatrix::zeros(dim, dim);
    let mut labels = Vec::with_capacity(dim);
    let mut out_blocks = Vec::with_capacity(blocks.len());
    let h0 = hamiltonian_from(sys, &ops, 0.0);
    let (mz, _) = sys.moment_operators(&ops);

    let mut level = 0;
    for (two_mf, basis) in &blocks {
        let f_order = zero_field_order(sys, *two_mf)?;
        // slot k of the zero-field solution carries f_order[k]
        let (mut values, mut tracked) = diagonalise_block(&h0, basis);
        let mut slot_of_column: Vec<usize> = (0..basis.len()).collect();
        for k in 1..=n_steps {
            let bk = b * k as f64 / n_steps as f64;
            let (w, mut v) = diagonalise_block(&(&h0 + &mz * bk), basis);
            let continues = match_columns(&tracked, &v).ok_or(
                HyperfineError::DegenerateLabeling {
                    field: bk,
                    two_mf: *two_mf,
                },
            )?;
            for (c, &p) in continues.iter().enumerate() {
                if tracked.column(p).dot(&v.column(c)) < 0.0 {
                    v.column_mut(c).neg_mut();
                }
            }
            slot_of_column = continues.iter().map(|&p| slot_of_column[p]).collect();
            tracked = v;
            values = w;
        }
        let vectors = tracked;
        let mut level_ids = Vec::with_capacity(basis.len());
        for c in 0..basis.len() {
            energies[level] = values[c];
            for (r, &row) in basis.iter().enumerate() {
                eigenvectors[(row, level)] = vectors[(r, c)];
            }
            labels.push(StateLabel {
                two_f: f_order[slot_of_column[c]],
                two_mf: *two_mf,
            });
            level_ids.push(level);
            level += 1;
        }
        out_blocks.push(Block {
            two_mf: *two_mf,
            basis: basis.clone(),
            levels: level_ids,
        });
    }

    let label_map = labels.iter().enumerate().map(|(i, l)| (*l, i)).collect();
    Ok(Eigensystem {
        field_strength: b,
        energies,
        eigenvectors,
        labels,
        blocks: out_blocks,
        label_map,
    })
}

/// For each new column, the previous column it continues. `None` if the overlap
/// assignment is not a clear permutation.
fn match_columns(prev: &DMatrix<f64>, next: &DMatrix<f64>) -> Option<Vec<usize>> {
    let n = prev.ncols();
    let mut used = vec![false; n];
    let mut out = Vec::with_capacity(n);
    for c in 0..n {
        let mut overlaps: Vec<(usize, f64)> = (0..n)
            .map(|p| (p, prev.column(p).dot(&next.column(c)).powi(2)))
            .collect();
        overlaps.sort_by(|a, b| b.1.total_cmp(&a.1));
        let (best, w) = overlaps[0];
        let second = overlaps.get(1).map_or(0.0, |o| o.1);
        if used[best] || w <= 0.5 || w - second < 1e-3 {
            return None;
        }
        used[best] = true;
        out.push(best);
    }
    Some(out)
}

#[cfg(test)]
mod tests;
