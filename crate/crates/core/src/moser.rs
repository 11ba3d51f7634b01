//! Two-site analysis: spectral variables `(λ_i, r_i)` of the 2×2 Jacobi
//! matrix, the resolvent continued fraction, and a flow probe for the extra
//! (third) constant of motion.
//!
//! The eigenvalues `λ₁ ≤ λ₂` persist along the canonical flow for *any*
//! deformed two-site chain (the two-site Lax pair is exact). The norming
//! constants obey a fixed-rate law only for single-exponential bonds:
//! with `ρ = c₁/a₁` constant, `r₁/r₂ = (r₁(0)/r₂(0)) e^{-ρ Δλ t}` exactly
//! (`Δλ = λ₂ − λ₁`; rate `Δλ/2` for the leading-order chain). Deformed bonds
//! make `ρ` state-dependent and the law breaks while the spectrum stays put.
//! [`moser_flow_probe`] measures both effects.

use serde::{Deserialize, Serialize};

use crate::dynamics::{self, Scheme};
use crate::error::{Error, Result};
use crate::flaschka::{to_flaschka, FlaschkaState};
use crate::lattice::{LatticeModel, PhaseState};

/// Eigenvalues and normalized norming constants of the 2×2 `L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoserVars {
    /// Smaller eigenvalue.
    pub lambda1: f64,
    /// Larger eigenvalue.
    pub lambda2: f64,
    /// Weight of `λ₁` in the spectral measure, normalized to `r₁²+r₂² = 1`.
    pub r1: f64,
    pub r2: f64,
}

impl MoserVars {
    /// Degenerate data (`λ₁ = λ₂` or a vanishing weight) maps back to a
    /// decoupled chain with `w₁ = 0`.
    pub fn is_degenerate(&self) -> bool {
        self.lambda1 == self.lambda2 || self.r1 == 0.0 || self.r2 == 0.0
    }
}

fn check_two_site(fs: &FlaschkaState) -> Result<()> {
    if fs.sites() != 2 || fs.bonds() != 1 {
        return Err(Error::DimensionMismatch {
            what: "two-site state",
            expected: 2,
            got: fs.sites(),
        });
    }
    Ok(())
}

/// Spectral map of a two-site open chain with `w₁ > 0`:
/// `λ_{1,2} = (b₁+b₂)/2 ∓ √((b₁−b₂)²/4 + w₁)`, weights solved from the
/// `b₁` relation under the unit normalization.
pub fn to_moser(fs: &FlaschkaState) -> Result<MoserVars> {
    check_two_site(fs)?;
    let w = fs.w[0];
    if !(w > 0.0) {
        return Err(Error::NonPositiveBond { bond: 0, w });
    }
    let (b1, b2) = (fs.b[0], fs.b[1]);
    let mean = 0.5 * (b1 + b2);
    let half_gap = 0.5 * (b1 - b2);
    let disc = (half_gap * half_gap + w).sqrt();
    // b₁ = r₁²λ₂ + r₂²λ₁ with r₁²+r₂² = 1 solves to r₁² = (b₁−λ₁)/(λ₂−λ₁);
    // the differences are formed cancellation-free so that near-decoupled
    // chains keep full relative accuracy in the small weight.
    let b1_minus_l1 = if half_gap >= 0.0 {
        half_gap + disc
    } else {
        w / (disc - half_gap)
    };
    let l2_minus_b1 = if half_gap <= 0.0 {
        disc - half_gap
    } else {
        w / (disc + half_gap)
    };
    Ok(MoserVars {
        lambda1: mean - disc,
        lambda2: mean + disc,
        r1: (b1_minus_l1 / (2.0 * disc)).sqrt(),
        r2: (l2_minus_b1 / (2.0 * disc)).sqrt(),
    })
}

/// Inverse spectral map:
///
/// ```text
/// a₁² = r₁²r₂²(λ₂−λ₁)² / (r₁²+r₂²)²,
/// b₁  = (r₁²λ₂ + r₂²λ₁) / (r₁²+r₂²),   b₂ = (r₁²λ₁ + r₂²λ₂) / (r₁²+r₂²).
/// ```
///
/// The formulas are ratios, so any common rescaling of the weights is
/// immaterial. Degenerate inputs produce the decoupled `w₁ = 0` chain
/// (detectable via [`MoserVars::is_degenerate`]). The ratio sequence of the
/// returned state is not recoverable from spectral data; it is set to the
/// leading-order value `−1/2`.
pub fn from_moser(mv: &MoserVars) -> Result<FlaschkaState> {
    if mv.lambda1 > mv.lambda2 {
        return Err(Error::OutOfRange("eigenvalues must be ordered λ₁ ≤ λ₂".into()));
    }
    if mv.r1 < 0.0 || mv.r2 < 0.0 || (mv.r1 == 0.0 && mv.r2 == 0.0) {
        return Err(Error::OutOfRange("weights must be nonnegative, not both zero".into()));
    }
    let (s1, s2) = (mv.r1 * mv.r1, mv.r2 * mv.r2);
    let total = s1 + s2;
    let gap = mv.lambda2 - mv.lambda1;
    let w = s1 * s2 * gap * gap / (total * total);
    Ok(FlaschkaState {
        w: vec![w],
        b: vec![
            (s1 * mv.lambda2 + s2 * mv.lambda1) / total,
            (s1 * mv.lambda1 + s2 * mv.lambda2) / total,
        ],
        rho: vec![-0.5],
    })
}

/// Resolvent continued fraction `f(λ) = 1/(λ − b₂ − w₁/(λ − b₁))`; equals the
/// partial-fraction form `Σ r_i²/(λ − λ_i)` with unit-normalized weights.
pub fn resolvent(fs: &FlaschkaState, lambda: f64) -> Result<f64> {
    check_two_site(fs)?;
    let inner = lambda - fs.b[0];
    if inner.abs() < 1e-12 {
        return Err(Error::PoleProximity { denom: inner.abs() });
    }
    let denom = lambda - fs.b[1] - fs.w[0] / inner;
    if denom.abs() < 1e-12 {
        return Err(Error::PoleProximity { denom: denom.abs() });
    }
    Ok(1.0 / denom)
}

/// One sample of the probe time series.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MoserSample {
    pub t: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Measured weight ratio `r₁/r₂`.
    pub ratio: f64,
    /// Fixed-rate reference `ratio(0) · e^{-ρ(0) Δλ(0) t}`.
    pub ratio_reference: f64,
}

/// Probe report: eigenvalue persistence and the norming-constant ratio law.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MoserProbeReport {
    pub lambda0: (f64, f64),
    /// `max_t |λ_i(t) − λ_i(0)|` over both eigenvalues.
    pub max_lambda_drift: f64,
    /// `max_t |ln(ratio / ratio_reference)|`: the integrated rate-law
    /// violation, scale-free under the exponential growth of the ratio.
    pub max_ratio_deviation: f64,
    pub samples: Vec<MoserSample>,
}

/// Integrates the canonical flow of a two-site chain and maps every step
/// through the spectral variables.
///
/// For single-exponential bonds both the eigenvalues and the fixed-rate
/// ratio law hold to integrator tolerance; deformed bonds keep the
/// eigenvalues (the two-site pair is exact) but generically break the ratio
/// law — the reported deviation is the measurement.
pub fn moser_flow_probe(
    model: &LatticeModel,
    state0: &PhaseState,
    dt: f64,
    steps: usize,
) -> Result<MoserProbeReport> {
    if model.sites != 2 {
        return Err(Error::DimensionMismatch {
            what: "two-site model",
            expected: 2,
            got: model.sites,
        });
    }
    let fs0 = to_flaschka(model, state0)?;
    let mv0 = to_moser(&fs0)?;
    let gap0 = mv0.lambda2 - mv0.lambda1;
    if gap0 < 1e-10 {
        return Err(Error::SpectrumCollision {
            time: 0.0,
            gap: gap0,
        });
    }
    // d/dt ln(r₁/r₂) = −ρ Δλ, exact while ρ is constant
    let rate = -fs0.rho[0] * gap0;
    let ratio0 = mv0.r1 / mv0.r2;

    let keep_every = (steps / 2000).max(1);
    let mut report = MoserProbeReport {
        lambda0: (mv0.lambda1, mv0.lambda2),
        max_lambda_drift: 0.0,
        max_ratio_deviation: 0.0,
        samples: Vec::with_capacity(steps / keep_every + 2),
    };
    let mut state = state0.clone();
    for i in 0..=steps {
        let t = i as f64 * dt;
        let fs = to_flaschka(model, &state)?;
        let mv = to_moser(&fs)?;
        let gap = mv.lambda2 - mv.lambda1;
        if gap < 1e-10 {
            return Err(Error::SpectrumCollision { time: t, gap });
        }
        let ratio = mv.r1 / mv.r2;
        let reference = ratio0 * (rate * t).exp();
        let drift = (mv.lambda1 - mv0.lambda1)
            .abs()
            .max((mv.lambda2 - mv0.lambda2).abs());
        report.max_lambda_drift = report.max_lambda_drift.max(drift);
        if ratio > 0.0 && reference > 0.0 {
            report.max_ratio_deviation =
                report.max_ratio_deviation.max((ratio / reference).ln().abs());
        } else {
            return Err(Error::SpectrumCollision { time: t, gap });
        }
        if i % keep_every == 0 || i == steps {
            report.samples.push(MoserSample {
                t,
                lambda1: mv.lambda1,
                lambda2: mv.lambda2,
                ratio,
                ratio_reference: reference,
            });
        }
        if i < steps {
            state = dynamics::step_yoshida4(model, &state, dt)?;
            if !state.q.iter().chain(&state.p).all(|x| x.is_finite()) {
                return Err(Error::BlowUp {
                    step: i + 1,
                    detail: "probe trajectory diverged".into(),
                });
            }
        }
    }
    let _ = Scheme::Yoshida4; // probe scheme, fixed
    Ok(report)
}
