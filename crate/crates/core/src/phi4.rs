//! Field-theory layer: kink profile, vacuum fluctuation expansion, and the
//! closed-form coefficients of the kink–antikink force and potential series.
//!
//! The force and potential are series of decaying exponentials,
//!
//! ```text
//! F(R) = Σ_{n≥1} α_n e^{-(n+1)R/2},   U(R) = Σ_{n≥1} β_n e^{-(n+1)R/2},
//! ```
//!
//! with `α_n = -(-1)^n (n + 2n³)/3` and `β_n = (-1)^n 2(n + 2n³)/(3(n+1))`,
//! valid in the normalization `coupling = 1`, `vacuum = 1/(2√2)` where the
//! fluctuation mass is 1. The identity `α_n = -(n+1) β_n / 2` holds exactly
//! in rational arithmetic, so that `F = dU/dR` term by term.

use crate::error::{Error, Result};

/// Constants of the quartic double-well theory `V(φ) = λ(φ² − v²)²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phi4Params {
    coupling: f64,
    vacuum: f64,
}

impl Phi4Params {
    pub fn new(coupling: f64, vacuum: f64) -> Result<Self> {
        if !(coupling > 0.0) || !coupling.is_finite() {
            return Err(Error::OutOfRange(format!(
                "coupling must be positive and finite, got {coupling}"
            )));
        }
        if !(vacuum > 0.0) || !vacuum.is_finite() {
            return Err(Error::OutOfRange(format!(
                "vacuum must be positive and finite, got {vacuum}"
            )));
        }
        Ok(Self { coupling, vacuum })
    }

    /// The normalization in which the fluctuation mass is exactly 1:
    /// `coupling = 1`, `vacuum = 1/(2√2)`.
    pub fn normalized() -> Self {
        Self {
            coupling: 1.0,
            vacuum: 0.5 / std::f64::consts::SQRT_2,
        }
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn vacuum(&self) -> f64 {
        self.vacuum
    }

    /// Fluctuation mass `m = 2 √(2λ) v`; `m²` equals the second vacuum
    /// derivative of the potential.
    pub fn mass(&self) -> f64 {
        2.0 * (2.0 * self.coupling).sqrt() * self.vacuum
    }
}

/// Kink profile `v tanh(√(2λ) v (x − x0))`.
///
/// The antikink is obtained by negating `x − x0`.
pub fn kink_profile(params: &Phi4Params, x0: f64, x: f64) -> f64 {
    let v = params.vacuum;
    v * ((2.0 * params.coupling).sqrt() * v * (x - x0)).tanh()
}

/// n-th derivative of `V(φ) = λ(φ² − v²)²` at `φ = v`, for `0 ≤ n ≤ 4`.
///
/// The quartic potential has no derivatives beyond order four. Closed forms:
/// `V₀ = V₁ = 0`, `V₂ = 8λv²`, `V₃ = 24λv`, `V₄ = 24λ`.
pub fn vacuum_derivative(params: &Phi4Params, n: u32) -> Result<f64> {
    let (lambda, v) = (params.coupling, params.vacuum);
    match n {
        0 | 1 => Ok(0.0),
        2 => Ok(8.0 * lambda * v * v),
        3 => Ok(24.0 * lambda * v),
        4 => Ok(24.0 * lambda),
        _ => Err(Error::OutOfRange(format!(
            "vacuum derivative order must be 0..=4, got {n}"
        ))),
    }
}

/// Coefficients of the fluctuation expansion `χ(u) = Σ_k a_k e^{-k m u}`.
///
/// `coefficients[k-1]` stores `a_k`; `a_1` is the free leading coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct ChiExpansion {
    coefficients: Vec<f64>,
}

impl ChiExpansion {
    /// 1-based access to `a_k`.
    pub fn a(&self, k: usize) -> f64 {
        self.coefficients[k - 1]
    }

    pub fn order(&self) -> usize {
        self.coefficients.len()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Partial sum `Σ_{k≤K} a_k e^{-k m d}` at distance `d` from the center.
    pub fn partial_sum(&self, mass: f64, d: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .map(|(i, a)| a * (-((i + 1) as f64) * mass * d).exp())
            .sum()
    }
}

/// Solves the fluctuation equation `χ'' − m²χ = (V₃/2)χ² + (V₄/6)χ³` order by
/// order in `e^{-m u}`. Matching the coefficient of `e^{-k m u}` gives, for
/// k ≥ 2,
///
/// ```text
/// m²(k² − 1) a_k = (V₃/2) Σ_{i+j=k} a_i a_j + (V₄/6) Σ_{i+j+l=k} a_i a_j a_l,
/// ```
///
/// with all indices ≥ 1. The k = 2, 3 cases reduce to
/// `a₂ = a₁² V₃/(6m²)` and `a₃ = a₁³ (V₃²/(48m⁴) + V₄/(48m²))`.
pub fn chi_coefficients(params: &Phi4Params, a1: f64, order: usize) -> Result<ChiExpansion> {
    if order < 1 {
        return Err(Error::OutOfRange("expansion order must be ≥ 1".into()));
    }
    let m2 = params.mass() * params.mass();
    let v3 = vacuum_derivative(params, 3)?;
    let v4 = vacuum_derivative(params, 4)?;

    let mut a = Vec::with_capacity(order);
    a.push(a1);
    for k in 2..=order {
        let mut quad = 0.0;
        for i in 1..k {
            quad += a[i - 1] * a[k - i - 1];
        }
        let mut cubic = 0.0;
        for i in 1..k {
            for j in 1..k - i {
                let l = k - i - j;
                cubic += a[i - 1] * a[j - 1] * a[l - 1];
            }
        }
        let rhs = 0.5 * v3 * quad + v4 / 6.0 * cubic;
        let kf = k as f64;
        a.push(rhs / (m2 * (kf * kf - 1.0)));
    }
    Ok(ChiExpansion { coefficients: a })
}

fn weight(n: u64) -> i128 {
    let n = n as i128;
    n + 2 * n * n * n
}

/// `α_n` as an exact integer; `n + 2n³` is always divisible by 3.
pub fn alpha_exact(n: u64) -> Result<i128> {
    if n < 1 {
        return Err(Error::OutOfRange("series index must be ≥ 1".into()));
    }
    let sign = if n % 2 == 0 { -1 } else { 1 };
    Ok(sign * weight(n) / 3)
}

/// `β_n` as an exact reduced fraction (numerator, denominator > 0).
pub fn beta_exact(n: u64) -> Result<(i128, i128)> {
    if n < 1 {
        return Err(Error::OutOfRange("series index must be ≥ 1".into()));
    }
    let sign: i128 = if n % 2 == 0 { 1 } else { -1 };
    let mut num = sign * 2 * weight(n);
    let mut den = 3 * (n as i128 + 1);
    let g = gcd(num.unsigned_abs(), den.unsigned_abs()) as i128;
    num /= g;
    den /= g;
    Ok((num, den))
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Exact rational check of `α_n + (n+1) β_n / 2 = 0`.
pub fn coefficient_identity_holds(n: u64) -> Result<bool> {
    let alpha = alpha_exact(n)?;
    let (bn, bd) = beta_exact(n)?;
    // α + (n+1)β/2 = 0  ⇔  2 bd α + (n+1) bn = 0
    Ok(2 * bd * alpha + (n as i128 + 1) * bn == 0)
}

/// Force and potential coefficients `(α_n, β_n)` of the interaction series.
pub fn interaction_coefficients(n: u64) -> Result<(f64, f64)> {
    let alpha = alpha_exact(n)? as f64;
    let (bn, bd) = beta_exact(n)?;
    Ok((alpha, bn as f64 / bd as f64))
}

/// Partial sums of the force and potential series at separation `R > 0`,
/// in the normalized theory (the force prefactor `8m²v²` equals 1).
///
/// The series converge for any `R > 0`, but the expansion is physically
/// meaningful only at large separation.
pub fn force_and_potential(r: f64, terms: u64) -> Result<(f64, f64)> {
    if !(r > 0.0) {
        return Err(Error::OutOfRange(format!(
            "separation must be positive, got {r}"
        )));
    }
    if terms < 1 {
        return Err(Error::OutOfRange("series must keep at least one term".into()));
    }
    let mut force = 0.0;
    let mut potential = 0.0;
    for n in 1..=terms {
        let (alpha, beta) = interaction_coefficients(n)?;
        let decay = (-(n as f64 + 1.0) * 0.5 * r).exp();
        force += alpha * decay;
        potential += beta * decay;
    }
    Ok((force, potential))
}

/// Magnitude of the last kept term of the force series at separation `R`.
///
/// `|α_terms| ≥ |β_terms|`, so this bounds the potential truncation as well;
/// callers can grow `terms` until this falls below their target tolerance.
pub fn truncation_scale(r: f64, terms: u64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::OutOfRange(format!(
            "separation must be positive, got {r}"
        )));
    }
    let (alpha, _) = interaction_coefficients(terms)?;
    Ok(alpha.abs() * (-(terms as f64 + 1.0) * 0.5 * r).exp())
}
