//! Cascaded down-conversion in a truncated four-mode Fock space.
//!
//! Mode 0 is the photon that pumps the second crystal, mode 1 its partner
//! from the first crystal, modes 2 and 3 the secondary pair. The first
//! stage is driven by a classical pump amplitude, the second by the
//! single photon in mode 0.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

pub const DEFAULT_N_MAX: u8 = 3;
/// Coupling above which first-order results are flagged as unreliable.
pub const PERTURBATIVE_LIMIT: f64 = 0.1;

const SERIES_TOLERANCE: f64 = 1e-12;
const SERIES_MAX_TERMS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct FockBasisState(pub [u8; 4]);

impl FockBasisState {
    pub const VACUUM: FockBasisState = FockBasisState([0, 0, 0, 0]);
    pub const PAIR: FockBasisState = FockBasisState([1, 1, 0, 0]);
    pub const TRIPLET: FockBasisState = FockBasisState([0, 1, 1, 1]);

    pub fn occupations(&self) -> [u8; 4] {
        self.0
    }

    fn index(&self, n_max: u8) -> usize {
        let base = usize::from(n_max) + 1;
        self.0.iter().rev().fold(0, |acc, &n| acc * base + usize::from(n))
    }

    fn from_index(mut idx: usize, n_max: u8) -> Self {
        let base = usize::from(n_max) + 1;
        let mut occ = [0u8; 4];
        for slot in occ.iter_mut() {
            *slot = (idx % base) as u8;
            idx /= base;
        }
        FockBasisState(occ)
    }
}

impl fmt::Display for FockBasisState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d] = self.0;
        write!(f, "|{a},{b},{c},{d}>")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CascadeParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub alpha: Complex64,
}

impl CascadeParams {
    pub fn new(lambda1: f64, lambda2: f64, alpha: Complex64) -> Result<Self> {
        let p = CascadeParams {
            lambda1,
            lambda2,
            alpha,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::param(name, format!("coupling must be finite and >= 0, got {v}")));
            }
        }
        if !self.alpha.re.is_finite() || !self.alpha.im.is_finite() {
            return Err(Error::param("alpha", "pump amplitude must be finite"));
        }
        Ok(())
    }

    /// Human-readable warnings when either effective coupling leaves the perturbative regime.
    pub fn perturbative_warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let g1 = self.lambda1 * self.alpha.norm();
        if g1 > PERTURBATIVE_LIMIT {
            out.push(format!("lambda1*|alpha| = {g1} exceeds {PERTURBATIVE_LIMIT}"));
        }
        if self.lambda2 > PERTURBATIVE_LIMIT {
            out.push(format!("lambda2 = {} exceeds {PERTURBATIVE_LIMIT}", self.lambda2));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StateKind {
    /// First-order expansion; normalization deliberately dropped.
    Perturbative,
    /// Full evolution; `leakage` is the population sitting on the truncation edge.
    Exact {
        leakage: f64,
    },
    Normalized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    amplitudes: BTreeMap<FockBasisState, Complex64>,
    truncation: u8,
    kind: StateKind,
}

impl QuantumState {
    pub fn amplitude(&self, basis: FockBasisState) -> Complex64 {
        self.amplitudes.get(&basis).copied().unwrap_or_default()
    }

    pub fn amplitudes(&self) -> impl Iterator<Item = (&FockBasisState, &Complex64)> {
        self.amplitudes.iter()
    }

    pub fn truncation(&self) -> u8 {
        self.truncation
    }

    pub fn kind(&self) -> StateKind {
        self.kind
    }

    pub fn is_normalized(&self) -> bool {
        !matches!(self.kind, StateKind::Perturbative)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.values().map(|a| a.norm_sqr()).sum()
    }

    /// Truncation leakage for exact states, 0 otherwise.
    pub fn leakage(&self) -> f64 {
        match self.kind {
            StateKind::Exact { leakage } => leakage,
            _ => 0.0,
        }
    }

    pub fn normalize(&self) -> Result<QuantumState> {
        let n = self.norm_sqr().sqrt();
        if n == 0.0 {
            return Err(Error::Domain("cannot normalize the zero state".into()));
        }
        Ok(QuantumState {
            amplitudes: self.amplitudes.iter().map(|(k, v)| (*k, v / n)).collect(),
            truncation: self.truncation,
            kind: StateKind::Normalized,
        })
    }
}

/// First-order expansion of `exp(-iH2) exp(-iH1)` on the vacuum.
pub fn apply_first_order_cascade(params: &CascadeParams) -> Result<QuantumState> {
    params.validate()?;
    let i = Complex64::i();
    let mut amplitudes = BTreeMap::new();
    amplitudes.insert(FockBasisState::VACUUM, Complex64::new(1.0, 0.0));
    let pair = -i * params.lambda1 * params.alpha;
    let triplet = -(params.lambda1 * params.lambda2) * params.alpha;
    if pair != Complex64::default() {
        amplitudes.insert(FockBasisState::PAIR, pair);
    }
    if triplet != Complex64::default() {
        amplitudes.insert(FockBasisState::TRIPLET, triplet);
    }
    Ok(QuantumState {
        amplitudes,
        truncation: DEFAULT_N_MAX,
        kind: StateKind::Perturbative,
    })
}

/// |lambda1 * lambda2 * alpha|^2, linear in pump intensity |alpha|^2.
pub fn triplet_probability(params: &CascadeParams) -> Result<f64> {
    params.validate()?;
    Ok((params.lambda1 * params.lambda2).powi(2) * params.alpha.norm_sqr())
}

/// Sparse Hermitian operator as (row, col, value) triplets.
struct SparseOp {
    entries: Vec<(usize, usize, Complex64)>,
}

impl SparseOp {
    fn apply(&self, v: &[Complex64], out: &mut [Complex64]) {
        out.iter_mut().for_each(|x| *x = Complex64::default());
        for &(r, c, val) in &self.entries {
            out[r] += val * v[c];
        }
    }

    /// Max absolute column sum, an upper bound on the operator 2-norm for Hermitian ops.
    fn norm_bound(&self, dim: usize) -> f64 {
        let mut cols = vec![0.0; dim];
        for &(_, c, val) in &self.entries {
            cols[c] += val.norm();
        }
        cols.into_iter().fold(0.0, f64::max)
    }
}

fn sqrt_u(x: u32) -> f64 {
    f64::from(x).sqrt()
}

fn primary_hamiltonian(params: &CascadeParams, n_max: u8) -> SparseOp {
    let dim = (usize::from(n_max) + 1).pow(4);
    let mut entries = Vec::new();
    for idx in 0..dim {
        let s = FockBasisState::from_index(idx, n_max);
        let [n0, n1, _, _] = s.0.map(u32::from);
        let top = u32::from(n_max);
        // a0+ a1+
        if n0 < top && n1 < top {
            let t = FockBasisState([s.0[0] + 1, s.0[1] + 1, s.0[2], s.0[3]]);
            let c = params.lambda1 * params.alpha * sqrt_u((n0 + 1) * (n1 + 1));
            entries.push((t.index(n_max), idx, c));
        }
        // a0 a1
        if n0 > 0 && n1 > 0 {
            let t = FockBasisState([s.0[0] - 1, s.0[1] - 1, s.0[2], s.0[3]]);
            let c = params.lambda1 * params.alpha.conj() * sqrt_u(n0 * n1);
            entries.push((t.index(n_max), idx, c));
        }
    }
    SparseOp { entries }
}

fn secondary_hamiltonian(params: &CascadeParams, n_max: u8) -> SparseOp {
    let dim = (usize::from(n_max) + 1).pow(4);
    let top = u32::from(n_max);
    let mut entries = Vec::new();
    for idx in 0..dim {
        let s = FockBasisState::from_index(idx, n_max);
        let [n0, _, n2, n3] = s.0.map(u32::from);
        // a0 a2+ a3+
        if n0 > 0 && n2 < top && n3 < top {
            let t = FockBasisState([s.0[0] - 1, s.0[1], s.0[2] + 1, s.0[3] + 1]);
            let c = params.lambda2 * sqrt_u(n0 * (n2 + 1) * (n3 + 1));
            entries.push((t.index(n_max), idx, Complex64::new(c, 0.0)));
        }
        // a0+ a2 a3
        if n0 < top && n2 > 0 && n3 > 0 {
            let t = FockBasisState([s.0[0] + 1, s.0[1], s.0[2] - 1, s.0[3] - 1]);
            let c = params.lambda2 * sqrt_u((n0 + 1) * n2 * n3);
            entries.push((t.index(n_max), idx, Complex64::new(c, 0.0)));
        }
    }
    SparseOp { entries }
}

/// `psi <- exp(-i H) psi` by a scaled Taylor series.
fn apply_exponential(h: &SparseOp, psi: &mut Vec<Complex64>) -> Result<()> {
    let dim = psi.len();
    let bound = h.norm_bound(dim);
    let steps = (bound / 0.5).ceil().max(1.0) as usize;
    let scale = Complex64::new(0.0, -1.0 / steps as f64);
    let mut term = vec![Complex64::default(); dim];
    let mut next = vec![Complex64::default(); dim];
    for _ in 0..steps {
        let mut acc = psi.clone();
        term.copy_from_slice(psi);
        let mut converged = false;
        for k in 1..=SERIES_MAX_TERMS {
            h.apply(&term, &mut next);
            let factor = scale / k as f64;
            for (t, n) in term.iter_mut().zip(&next) {
                *t = n * factor;
            }
            let sup = term.iter().map(|t| t.norm()).fold(0.0, f64::max);
            for (a, t) in acc.iter_mut().zip(&term) {
                *a += t;
            }
            if sup < SERIES_TOLERANCE {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Convergence(format!(
                "exponential series exceeded {SERIES_MAX_TERMS} terms"
            )));
        }
        *psi = acc;
    }
    Ok(())
}

/// Unapproximated `exp(-iH2) exp(-iH1)|0,0,0,0>` with at most `n_max` photons per mode.
pub fn evolve_exact(params: &CascadeParams, n_max: u8) -> Result<QuantumState> {
    params.validate()?;
    if n_max < 2 {
        return Err(Error::param("n_max", "truncation must be at least 2"));
    }
    let dim = (usize::from(n_max) + 1).pow(4);
    let mut psi = vec![Complex64::default(); dim];
    psi[FockBasisState::VACUUM.index(n_max)] = Complex64::new(1.0, 0.0);

    apply_exponential(&primary_hamiltonian(params, n_max), &mut psi)?;
    apply_exponential(&secondary_hamiltonian(params, n_max), &mut psi)?;

    let mut amplitudes = BTreeMap::new();
    let mut leakage = 0.0;
    for (idx, amp) in psi.into_iter().enumerate() {
        if amp == Complex64::default() {
            continue;
        }
        let s = FockBasisState::from_index(idx, n_max);
        if s.0.contains(&n_max) {
            leakage += amp.norm_sqr();
        }
        amplitudes.insert(s, amp);
    }
    Ok(QuantumState {
        amplitudes,
        truncation: n_max,
        kind: StateKind::Exact { leakage },
    })
}
