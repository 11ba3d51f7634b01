//! Deformed Toda lattice models and their canonical Hamiltonian dynamics.
//!
//! A model is a chain of `N` sites with bond potentials that are finite sums
//! of decaying exponentials, `U(d) = Σ_n β_n e^{-k_n d}` evaluated at the bond
//! argument `d = q_i − q_{i+1}`. The kink chain is the special case with
//! `k_n = (n+1)/2` and `β_n` fixed by the quartic-theory tail; in `kink_mode`
//! the physical separation convention is `q_i − q_{i+1} > 0` (kinks ordered
//! right to left).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phi4;

/// One exponential interaction term `β e^{-k d}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionTerm {
    pub beta: f64,
    pub k: f64,
}

/// A finite list of exponential interaction terms defining a bond potential.
///
/// Canonical form: decay rates strictly positive and strictly increasing,
/// duplicate rates merged by summing couplings, every coupling nonzero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionSpec {
    terms: Vec<InteractionTerm>,
}

impl InteractionSpec {
    /// Builds a canonical spec from `(β, k)` pairs.
    pub fn new(pairs: &[(f64, f64)]) -> Result<Self> {
        let mut terms: Vec<InteractionTerm> = pairs
            .iter()
            .map(|&(beta, k)| InteractionTerm { beta, k })
            .collect();
        terms.sort_by(|a, b| a.k.total_cmp(&b.k));
        let mut merged: Vec<InteractionTerm> = Vec::with_capacity(terms.len());
        for t in terms {
            match merged.last_mut() {
                Some(last) if last.k == t.k => last.beta += t.beta,
                _ => merged.push(t),
            }
        }
        merged.retain(|t| t.beta != 0.0);
        let spec = Self { terms: merged };
        if let Some(v) = spec.violation() {
            return Err(Error::InvalidModel(v.to_string()));
        }
        Ok(spec)
    }

    /// Single-term spec `β e^{-k d}`.
    pub fn single(beta: f64, k: f64) -> Result<Self> {
        Self::new(&[(beta, k)])
    }

    /// Uncanonicalized, unchecked construction: only for building candidates
    /// to run through [`LatticeModel::violations`].
    pub fn from_raw(pairs: &[(f64, f64)]) -> Self {
        Self {
            terms: pairs
                .iter()
                .map(|&(beta, k)| InteractionTerm { beta, k })
                .collect(),
        }
    }

    pub fn terms(&self) -> &[InteractionTerm] {
        &self.terms
    }

    /// The slowest-decaying (smallest rate) term.
    pub fn leading(&self) -> InteractionTerm {
        self.terms[0]
    }

    /// Truncation to the leading term; the integrable comparator.
    pub fn truncate_leading(&self) -> Self {
        Self {
            terms: vec![self.terms[0]],
        }
    }

    /// Bond energy `U(d) = Σ β_n e^{-k_n d}`.
    pub fn energy(&self, d: f64) -> f64 {
        self.terms.iter().map(|t| t.beta * (-t.k * d).exp()).sum()
    }

    /// `-dU/dd = Σ k_n β_n e^{-k_n d}`; the magnitude of the bond force.
    pub fn gradient_coefficient(&self, d: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| t.k * t.beta * (-t.k * d).exp())
            .sum()
    }

    fn violation(&self) -> Option<Violation> {
        if self.terms.is_empty() {
            return Some(Violation::EmptyInteraction);
        }
        for t in &self.terms {
            if !(t.k > 0.0) || !t.k.is_finite() {
                return Some(Violation::NonPositiveRate { k: t.k });
            }
            if t.beta == 0.0 || !t.beta.is_finite() {
                return Some(Violation::ZeroCoupling { k: t.k });
            }
        }
        if self.terms.windows(2).any(|w| !(w[0].k < w[1].k)) {
            return Some(Violation::UnorderedRates);
        }
        None
    }
}

/// Kink-chain interaction truncated after `n_max` tail orders:
/// terms `(β_n, (n+1)/2)` for `n = 1..n_max`.
pub fn kink_interaction_spec(n_max: u64) -> Result<InteractionSpec> {
    if n_max < 1 {
        return Err(Error::OutOfRange("n_max must be ≥ 1".into()));
    }
    let mut pairs = Vec::with_capacity(n_max as usize);
    for n in 1..=n_max {
        let (_, beta) = phi4::interaction_coefficients(n)?;
        pairs.push((beta, (n as f64 + 1.0) / 2.0));
    }
    InteractionSpec::new(&pairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Open,
    Periodic,
}

/// A deformed Toda chain: site count, boundary, and bond interactions.
///
/// `per_bond`, when present, overrides `interaction` bond-wise (the
/// inhomogeneous case) and must have one spec per bond.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeModel {
    pub sites: usize,
    pub boundary: Boundary,
    pub interaction: InteractionSpec,
    pub per_bond: Option<Vec<InteractionSpec>>,
    pub kink_mode: bool,
}

/// A violated model invariant, reported as a diagnostic rather than an error.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    TooFewSites { sites: usize },
    EmptyInteraction,
    NonPositiveRate { k: f64 },
    ZeroCoupling { k: f64 },
    UnorderedRates,
    PerBondLengthMismatch { expected: usize, got: usize },
    OddPeriodicKink { sites: usize },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::TooFewSites { sites } => {
                write!(f, "lattice needs at least 2 sites, got {sites}")
            }
            Violation::EmptyInteraction => write!(f, "interaction needs at least one term"),
            Violation::NonPositiveRate { k } => {
                write!(f, "decay rate must be positive, got {k}")
            }
            Violation::ZeroCoupling { k } => {
                write!(f, "coupling must be nonzero and finite (rate {k})")
            }
            Violation::UnorderedRates => {
                write!(f, "decay rates must be strictly increasing")
            }
            Violation::PerBondLengthMismatch { expected, got } => {
                write!(f, "per-bond list must have {expected} specs, got {got}")
            }
            Violation::OddPeriodicKink { sites } => {
                write!(f, "periodic kink lattice requires even N, got {sites}")
            }
        }
    }
}

impl LatticeModel {
    /// Validating constructor for a homogeneous model.
    pub fn new(sites: usize, boundary: Boundary, interaction: InteractionSpec) -> Result<Self> {
        Self::with_options(sites, boundary, interaction, None, false)
    }

    pub fn with_options(
        sites: usize,
        boundary: Boundary,
        interaction: InteractionSpec,
        per_bond: Option<Vec<InteractionSpec>>,
        kink_mode: bool,
    ) -> Result<Self> {
        let model = Self {
            sites,
            boundary,
            interaction,
            per_bond,
            kink_mode,
        };
        let violations = model.violations();
        if violations.is_empty() {
            Ok(model)
        } else {
            Err(Error::InvalidModel(
                violations
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join("; "),
            ))
        }
    }

    /// Kink chain with the tail interaction truncated after `n_max` orders.
    pub fn kink(sites: usize, boundary: Boundary, n_max: u64) -> Result<Self> {
        Self::with_options(sites, boundary, kink_interaction_spec(n_max)?, None, true)
    }

    /// All violated invariants; an empty list means the model is usable.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.sites < 2 {
            out.push(Violation::TooFewSites { sites: self.sites });
        }
        if let Some(v) = self.interaction.violation() {
            out.push(v);
        }
        if let Some(per_bond) = &self.per_bond {
            let expected = self.bond_count();
            if per_bond.len() != expected {
                out.push(Violation::PerBondLengthMismatch {
                    expected,
                    got: per_bond.len(),
                });
            }
            for spec in per_bond {
                if let Some(v) = spec.violation() {
                    out.push(v);
                }
            }
        }
        if self.kink_mode && self.boundary == Boundary::Periodic && self.sites % 2 != 0 {
            out.push(Violation::OddPeriodicKink { sites: self.sites });
        }
        out
    }

    /// Number of bonds: `N−1` open, `N` periodic (bond `N−1` wraps).
    pub fn bond_count(&self) -> usize {
        match self.boundary {
            Boundary::Open => self.sites.saturating_sub(1),
            Boundary::Periodic => self.sites,
        }
    }

    /// The interaction acting on bond `i` (sites `i` and `i+1 mod N`).
    pub fn bond_spec(&self, bond: usize) -> &InteractionSpec {
        match &self.per_bond {
            Some(per_bond) => &per_bond[bond],
            None => &self.interaction,
        }
    }

    /// Bond argument `d_i = q_i − q_{i+1}` with the periodic wrap `q_N = q_0`.
    pub fn separation(&self, state: &PhaseState, bond: usize) -> f64 {
        let n = self.sites;
        state.q[bond] - state.q[(bond + 1) % n]
    }

    pub(crate) fn check_state(&self, state: &PhaseState) -> Result<()> {
        if state.q.len() != self.sites {
            return Err(Error::DimensionMismatch {
                what: "positions",
                expected: self.sites,
                got: state.q.len(),
            });
        }
        if state.p.len() != self.sites {
            return Err(Error::DimensionMismatch {
                what: "momenta",
                expected: self.sites,
                got: state.p.len(),
            });
        }
        Ok(())
    }
}

/// Canonical positions and momenta of all sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl PhaseState {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if q.len() != p.len() {
            return Err(Error::DimensionMismatch {
                what: "phase state",
                expected: q.len(),
                got: p.len(),
            });
        }
        Ok(Self { q, p })
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }
}

/// Total energy `Σ p_i²/2 + Σ_bonds U_b(q_i − q_{i+1})`.
pub fn hamiltonian(model: &LatticeModel, state: &PhaseState) -> Result<f64> {
    model.check_state(state)?;
    let kinetic: f64 = state.p.iter().map(|p| 0.5 * p * p).sum();
    let mut potential = 0.0;
    for bond in 0..model.bond_count() {
        potential += model.bond_spec(bond).energy(model.separation(state, bond));
    }
    Ok(kinetic + potential)
}

/// Canonical flow `q̇_i = p_i`, `ṗ_i = −∂H/∂q_i`:
///
/// ```text
/// ṗ_i = Σ_n k_n β_n [e^{-k_n(q_i − q_{i+1})} − e^{-k_n(q_{i-1} − q_i)}],
/// ```
///
/// with missing neighbors contributing zero (open) or wrapping (periodic).
pub fn equations_of_motion(
    model: &LatticeModel,
    state: &PhaseState,
) -> Result<(Vec<f64>, Vec<f64>)> {
    model.check_state(state)?;
    let qdot = state.p.clone();
    Ok((qdot, momentum_derivative(model, state)))
}

/// The `ṗ` half of the flow; positions enter only through bond separations.
pub(crate) fn momentum_derivative(model: &LatticeModel, state: &PhaseState) -> Vec<f64> {
    let n = model.sites;
    // g[b] = Σ k β e^{-k d_b} on bond b
    let g: Vec<f64> = (0..model.bond_count())
        .map(|b| model.bond_spec(b).gradient_coefficient(model.separation(state, b)))
        .collect();
    let mut pdot = vec![0.0; n];
    for (b, gb) in g.iter().enumerate() {
        pdot[b] += gb;
        pdot[(b + 1) % n] -= gb;
    }
    pdot
}
