//! Flaschka variables, Lax pairs, trace invariants, and the residuals that
//! quantify broken integrability.
//!
//! The bond variable is stored as the signed square `w_i = a_i²` (kink-chain
//! potentials change sign, making `a_i` imaginary), together with `b_i = p_i`
//! and the ratio `ρ_i = c_i/a_i`. Every exposed scalar is a function of
//! `(w, b, ρ)` alone and therefore real; complex `a_i` are materialized only
//! inside [`LaxMatrices`].

use std::collections::BTreeMap;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{self, Boundary, LatticeModel, PhaseState};

/// Highest trace power exposed by [`trace_invariant`].
pub const MAX_TRACE_POWER: usize = 8;

/// Flaschka variables of a lattice state.
///
/// `w` and `rho` have one entry per bond (`N−1` open, `N` periodic);
/// `b` has one entry per site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlaschkaState {
    /// Signed squared off-diagonal variables `w_i = a_i²` (bond energies).
    pub w: Vec<f64>,
    /// Diagonal variables `b_i = p_i`.
    pub b: Vec<f64>,
    /// Ratios `ρ_i = c_i/a_i` fixed by the bond potential shape.
    pub rho: Vec<f64>,
}

impl FlaschkaState {
    pub fn sites(&self) -> usize {
        self.b.len()
    }

    pub fn bonds(&self) -> usize {
        self.w.len()
    }
}

/// Principal square root of a signed real: `i √|w|` for negative `w`.
pub(crate) fn principal_sqrt(w: f64) -> Complex64 {
    Complex64::from(w).sqrt()
}

/// Ratios `ρ_i = c_i / a_i = −(Σ_n k_n β_n e^{-k_n d_i}) / (2 w_i)`.
///
/// This is the unique choice `c_i = ∂a_i/∂q_i` for which the Lax evolution
/// `ȧ_i = c_i (b_i − b_{i+1})` agrees with the Hamiltonian flow. For a
/// single-term bond with rate `k` the ratio is the constant `−k/2`.
pub fn c_ratios(model: &LatticeModel, state: &PhaseState) -> Result<Vec<f64>> {
    model.check_state(state)?;
    let mut rho = Vec::with_capacity(model.bond_count());
    for bond in 0..model.bond_count() {
        let d = model.separation(state, bond);
        let spec = model.bond_spec(bond);
        let w = spec.energy(d);
        if w == 0.0 {
            return Err(Error::SingularBond { bond });
        }
        rho.push(spec.gradient_coefficient(d) / (-2.0 * w));
    }
    Ok(rho)
}

/// Flaschka transformation: `w_i = Σ β_n e^{-k_n d_i}`, `b_i = p_i`, plus the
/// c-ratio sequence.
pub fn to_flaschka(model: &LatticeModel, state: &PhaseState) -> Result<FlaschkaState> {
    let rho = c_ratios(model, state)?;
    let w = (0..model.bond_count())
        .map(|b| model.bond_spec(b).energy(model.separation(state, b)))
        .collect();
    Ok(FlaschkaState {
        w,
        b: state.p.clone(),
        rho,
    })
}

/// The Lax pair `(L, M)` of a lattice state.
///
/// Open `L` is symmetric tridiagonal with `L_{i,i+1} = a_i = √w_i`
/// (principal root); open `M` is skew with `M_{i,i+1} = −c_i`. Periodic
/// matrices add the corner entries `λ^{∓1} a_N` and `±λ^{∓1} c_N`.
#[derive(Debug, Clone)]
pub struct LaxMatrices {
    pub l: Array2<Complex64>,
    pub m: Array2<Complex64>,
    pub lambda: Option<f64>,
}

fn check_lambda(model: &LatticeModel, lambda: Option<f64>) -> Result<Option<f64>> {
    match (model.boundary, lambda) {
        (Boundary::Open, None) => Ok(None),
        (Boundary::Open, Some(_)) => Err(Error::UnexpectedLambda),
        (Boundary::Periodic, None) => Err(Error::MissingLambda),
        (Boundary::Periodic, Some(l)) if l == 0.0 || !l.is_finite() => Err(Error::ZeroLambda),
        (Boundary::Periodic, Some(l)) => Ok(Some(l)),
    }
}

pub fn lax_matrices(
    model: &LatticeModel,
    state: &PhaseState,
    lambda: Option<f64>,
) -> Result<LaxMatrices> {
    let lambda = check_lambda(model, lambda)?;
    let fs = to_flaschka(model, state)?;
    let n = model.sites;
    let mut l = Array2::<Complex64>::zeros((n, n));
    let mut m = Array2::<Complex64>::zeros((n, n));
    for i in 0..n {
        l[(i, i)] = Complex64::from(fs.b[i]);
    }
    for bond in 0..n - 1 {
        let a = principal_sqrt(fs.w[bond]);
        let c = fs.rho[bond] * a;
        l[(bond, bond + 1)] = a;
        l[(bond + 1, bond)] = a;
        m[(bond, bond + 1)] = -c;
        m[(bond + 1, bond)] = c;
    }
    if let Some(lam) = lambda {
        let a = principal_sqrt(fs.w[n - 1]);
        let c = fs.rho[n - 1] * a;
        l[(0, n - 1)] += a / lam;
        l[(n - 1, 0)] += a * lam;
        m[(0, n - 1)] += c / lam;
        m[(n - 1, 0)] -= c * lam;
    }
    Ok(LaxMatrices { l, m, lambda })
}

/// Lax defect `Δ = L̇ − [M, L]`, with `L̇` assembled from the Hamiltonian
/// flow: `ḃ_i` from the equations of motion and `ȧ_i = c_i (b_i − b_{i+1})`.
///
/// For open models `Δ` vanishes except at positions `(i, i+2)` and `(i+2, i)`
/// where `Δ_{i,i+2} = −(a_i c_{i+1} − a_{i+1} c_i)`; periodic models carry
/// λ-dependent combinations of the same bond residuals at wrap positions.
pub fn lax_residual(
    model: &LatticeModel,
    state: &PhaseState,
    lambda: Option<f64>,
) -> Result<Array2<Complex64>> {
    let lax = lax_matrices(model, state, lambda)?;
    let fs = to_flaschka(model, state)?;
    let pdot = lattice::momentum_derivative(model, state);
    let n = model.sites;

    let mut ldot = Array2::<Complex64>::zeros((n, n));
    for i in 0..n {
        ldot[(i, i)] = Complex64::from(pdot[i]);
    }
    for bond in 0..n - 1 {
        let c = fs.rho[bond] * principal_sqrt(fs.w[bond]);
        let adot = c * (fs.b[bond] - fs.b[bond + 1]);
        ldot[(bond, bond + 1)] = adot;
        ldot[(bond + 1, bond)] = adot;
    }
    if let Some(lam) = lax.lambda {
        let c = fs.rho[n - 1] * principal_sqrt(fs.w[n - 1]);
        let adot = c * (fs.b[n - 1] - fs.b[0]);
        ldot[(0, n - 1)] += adot / lam;
        ldot[(n - 1, 0)] += adot * lam;
    }

    let commutator = lax.m.dot(&lax.l) - lax.l.dot(&lax.m);
    Ok(ldot - commutator)
}

/// Sign-carrying squared constraint residuals
/// `s_i = w_i w_{i+1} (ρ_{i+1} − ρ_i)² = (a_i c_{i+1} − a_{i+1} c_i)²`,
/// one per adjacent bond pair. Real even when some `w < 0`.
pub fn constraint_residuals(model: &LatticeModel, state: &PhaseState) -> Result<Vec<f64>> {
    let fs = to_flaschka(model, state)?;
    Ok(constraint_residuals_from(&fs, model.boundary))
}

pub(crate) fn constraint_residuals_from(fs: &FlaschkaState, boundary: Boundary) -> Vec<f64> {
    let bonds = fs.bonds();
    let pairs = match boundary {
        Boundary::Open => bonds.saturating_sub(1),
        Boundary::Periodic => bonds,
    };
    (0..pairs)
        .map(|i| {
            let j = (i + 1) % bonds;
            let dr = fs.rho[j] - fs.rho[i];
            fs.w[i] * fs.w[j] * dr * dr
        })
        .collect()
}

/// The real band matrix similar to `L` whose entries are polynomial in
/// `(w, b)`: diagonal `b_i`, superdiagonal `w_i`, subdiagonal 1. Periodic
/// corners become `λ^{-1} A` and `λ w_N / A` with `A = Π a_i`, so paired
/// corner traversals contribute `w_N` and only ring-winding walks keep
/// odd powers of `A`.
fn w_form_matrix(
    fs: &FlaschkaState,
    boundary: Boundary,
    lambda: Option<f64>,
) -> Result<Array2<Complex64>> {
    let n = fs.sites();
    let expected_bonds = match boundary {
        Boundary::Open => n - 1,
        Boundary::Periodic => n,
    };
    if fs.bonds() != expected_bonds {
        return Err(Error::DimensionMismatch {
            what: "bond variables",
            expected: expected_bonds,
            got: fs.bonds(),
        });
    }
    let mut t = Array2::<Complex64>::zeros((n, n));
    for i in 0..n {
        t[(i, i)] = Complex64::from(fs.b[i]);
    }
    for bond in 0..n - 1 {
        t[(bond, bond + 1)] += Complex64::from(fs.w[bond]);
        t[(bond + 1, bond)] += Complex64::from(1.0);
    }
    if boundary == Boundary::Periodic {
        let lam = lambda.ok_or(Error::MissingLambda)?;
        if lam == 0.0 || !lam.is_finite() {
            return Err(Error::ZeroLambda);
        }
        if let Some(bond) = fs.w.iter().position(|&w| w == 0.0) {
            return Err(Error::SingularBond { bond });
        }
        let a_product: Complex64 = fs.w.iter().map(|&w| principal_sqrt(w)).product();
        t[(0, n - 1)] += a_product / lam;
        t[(n - 1, 0)] += Complex64::from(fs.w[n - 1]) * lam / a_product;
    }
    Ok(t)
}

fn matrix_power(m: &Array2<Complex64>, k: usize) -> Array2<Complex64> {
    let mut out = Array2::<Complex64>::eye(m.nrows());
    for _ in 0..k {
        out = out.dot(m);
    }
    out
}

fn check_trace_power(k: usize) -> Result<()> {
    if k < 1 || k > MAX_TRACE_POWER {
        return Err(Error::OutOfRange(format!(
            "trace power must be in 1..={MAX_TRACE_POWER}, got {k}"
        )));
    }
    Ok(())
}

/// Trace invariant `H_k = Tr L^k / k`, computed on the band structure so that
/// only integer powers of `w_i` appear; the value is real for signed `w`.
///
/// Periodic traces with `k ≥ N` include the ring-winding walks with their
/// `λ^{±1}` factors exactly as the matrix power dictates; when an odd number
/// of bonds is negative those walks are imaginary and the real part is
/// reported.
pub fn trace_invariant(
    fs: &FlaschkaState,
    k: usize,
    boundary: Boundary,
    lambda: Option<f64>,
) -> Result<f64> {
    check_trace_power(k)?;
    if boundary == Boundary::Open && lambda.is_some() {
        return Err(Error::UnexpectedLambda);
    }
    let t = w_form_matrix(fs, boundary, lambda)?;
    let p = matrix_power(&t, k);
    let trace: Complex64 = (0..t.nrows()).map(|i| p[(i, i)]).sum();
    Ok(trace.re / k as f64)
}

/// Gradient of `H_k` with respect to the Flaschka variables `(w, b)`.
pub(crate) struct TraceGradient {
    pub dw: Vec<f64>,
    pub db: Vec<f64>,
}

pub(crate) fn trace_invariant_gradient(
    fs: &FlaschkaState,
    k: usize,
    boundary: Boundary,
    lambda: Option<f64>,
) -> Result<TraceGradient> {
    check_trace_power(k)?;
    let n = fs.sites();
    let t = w_form_matrix(fs, boundary, lambda)?;
    // ∂(Tr T^k)/∂T_{uv} = k (T^{k-1})_{vu}, so ∂H_k/∂T_{uv} = (T^{k-1})_{vu}.
    let p = matrix_power(&t, k - 1);
    let db = (0..n).map(|i| p[(i, i)].re).collect();
    let mut dw = vec![0.0; fs.bonds()];
    for (bond, slot) in dw.iter_mut().enumerate().take(n - 1) {
        *slot = p[(bond + 1, bond)].re;
    }
    if boundary == Boundary::Periodic {
        let corner_up = t[(0, n - 1)]
            - if n == 2 {
                Complex64::from(fs.w[0])
            } else {
                Complex64::from(0.0)
            };
        let corner_down = t[(n - 1, 0)]
            - if n == 2 {
                Complex64::from(1.0)
            } else {
                Complex64::from(0.0)
            };
        for (j, slot) in dw.iter_mut().enumerate() {
            let up = corner_up / (2.0 * fs.w[j]);
            let down = corner_down
                * (if j == n - 1 { 1.0 / fs.w[n - 1] } else { 0.0 } - 0.5 / fs.w[j]);
            *slot += (p[(n - 1, 0)] * up + p[(0, n - 1)] * down).re;
        }
    }
    Ok(TraceGradient { dw, db })
}

fn require_positive_w(fs: &FlaschkaState) -> Result<()> {
    for (bond, &w) in fs.w.iter().enumerate() {
        if !(w > 0.0) {
            return Err(Error::NonPositiveBond { bond, w });
        }
    }
    Ok(())
}

/// The pentadiagonal skew matrix generating the third-invariant flow, with
/// `ζ_i = c_i (b_i + b_{i+1})` on the first off-diagonals and
/// `η_i = c_i a_{i+1}` on the second. Open boundary, positive `w` only
/// (the entries are linear in `a` and `c`, so signed bonds would leak
/// complex values).
pub fn m3_matrix(fs: &FlaschkaState) -> Result<Array2<f64>> {
    require_positive_w(fs)?;
    let n = fs.sites();
    if fs.bonds() != n - 1 {
        return Err(Error::DimensionMismatch {
            what: "bond variables",
            expected: n - 1,
            got: fs.bonds(),
        });
    }
    let a: Vec<f64> = fs.w.iter().map(|w| w.sqrt()).collect();
    let c: Vec<f64> = a.iter().zip(&fs.rho).map(|(a, r)| a * r).collect();
    let mut m3 = Array2::<f64>::zeros((n, n));
    for i in 0..n - 1 {
        let zeta = c[i] * (fs.b[i] + fs.b[i + 1]);
        m3[(i, i + 1)] = zeta;
        m3[(i + 1, i)] = -zeta;
    }
    for i in 0..n.saturating_sub(2) {
        let eta = c[i] * a[i + 1];
        m3[(i, i + 2)] = eta;
        m3[(i + 2, i)] = -eta;
    }
    Ok(m3)
}

/// Right-hand side of the third-invariant flow in `(a, b)` variables:
///
/// ```text
/// ȧ_i = −a_{i-1} c_{i-1} a_i + c_i (a_{i+1}² − b_i² + b_{i+1}²)
/// ḃ_i = −2 a_{i-1} c_{i-1} (b_{i-1} + b_i) + 2 a_i c_i (b_i + b_{i+1})
/// ```
///
/// with `a_0 = a_N = c_N = b_0 = b_{N+1} = 0` at the boundaries.
pub fn h3_flow_rhs(a: &[f64], b: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = b.len();
    let av = |i: isize| -> f64 {
        if i < 0 || i as usize >= a.len() {
            0.0
        } else {
            a[i as usize]
        }
    };
    let cv = |i: isize| -> f64 {
        if i < 0 || i as usize >= c.len() {
            0.0
        } else {
            c[i as usize]
        }
    };
    let bv = |i: isize| -> f64 {
        if i < 0 || i as usize >= n {
            0.0
        } else {
            b[i as usize]
        }
    };
    let mut adot = Vec::with_capacity(a.len());
    for i in 0..a.len() as isize {
        adot.push(
            -av(i - 1) * cv(i - 1) * av(i)
                + cv(i) * (av(i + 1) * av(i + 1) - bv(i) * bv(i) + bv(i + 1) * bv(i + 1)),
        );
    }
    let mut bdot = Vec::with_capacity(n);
    for i in 0..n as isize {
        bdot.push(
            -2.0 * av(i - 1) * cv(i - 1) * (bv(i - 1) + bv(i))
                + 2.0 * av(i) * cv(i) * (bv(i) + bv(i + 1)),
        );
    }
    (adot, bdot)
}

/// Out-of-pattern entries of `[M₃, L]` minus the in-pattern flow right-hand
/// side: the residuals that obstruct a third-invariant Lax representation.
///
/// The commutator is symmetric, so only upper-triangle positions with
/// `j − i ≥ 2` are returned. For `N = 4` the three entries reduce to
/// `(b₂+b₃)(a₂c₁ − a₁c₂)`, `a₃(a₂c₁ − a₁c₂)`, `(b₃+b₄)(a₃c₂ − a₂c₃)` in
/// 1-based labels; proportional bonds (`c_i ∝ a_i`) annihilate all of them.
pub fn m3_residual(fs: &FlaschkaState) -> Result<BTreeMap<(usize, usize), f64>> {
    let m3 = m3_matrix(fs)?;
    let n = fs.sites();
    let a: Vec<f64> = fs.w.iter().map(|w| w.sqrt()).collect();

    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        l[(i, i)] = fs.b[i];
    }
    for bond in 0..n - 1 {
        l[(bond, bond + 1)] = a[bond];
        l[(bond + 1, bond)] = a[bond];
    }
    let commutator = m3.dot(&l) - l.dot(&m3);

    let mut out = BTreeMap::new();
    for i in 0..n {
        for j in i + 2..n {
            out.insert((i, j), commutator[(i, j)]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{kink_interaction_spec, InteractionSpec};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn toda(n: usize, boundary: Boundary) -> LatticeModel {
        LatticeModel::new(n, boundary, InteractionSpec::single(1.0, 1.0).unwrap()).unwrap()
    }

    fn inhomogeneous_n3() -> LatticeModel {
        LatticeModel::with_options(
            3,
            Boundary::Open,
            InteractionSpec::single(1.0, 1.0).unwrap(),
            Some(vec![
                InteractionSpec::single(1.0, 1.0).unwrap(),
                InteractionSpec::single(1.0, 2.0).unwrap(),
            ]),
            false,
        )
        .unwrap()
    }

    #[test]
    fn to_flaschka_unit_bond() {
        let model = toda(2, Boundary::Open);
        let state = PhaseState::new(vec![0.0, 0.0], vec![3.0, -3.0]).unwrap();
        let fs = to_flaschka(&model, &state).unwrap();
        assert_eq!(fs.w, vec![1.0]);
        assert_eq!(fs.b, vec![3.0, -3.0]);
        assert_eq!(fs.rho, vec![-0.5]);
    }

    #[test]
    fn to_flaschka_kink_two_terms() {
        let model = LatticeModel::kink(3, Boundary::Open, 2).unwrap();
        let state = PhaseState::new(vec![2.0, 0.0, -2.0], vec![0.0; 3]).unwrap();
        let fs = to_flaschka(&model, &state).unwrap();
        let expected = -(-2.0f64).exp() + 4.0 * (-3.0f64).exp();
        assert_relative_eq!(fs.w[0], expected, max_relative = 1e-14);
        assert_relative_eq!(fs.w[1], expected, max_relative = 1e-14);
    }

    #[test]
    fn to_flaschka_periodic_uniform() {
        let model = toda(3, Boundary::Periodic);
        let state = PhaseState::new(vec![0.0; 3], vec![0.0; 3]).unwrap();
        let fs = to_flaschka(&model, &state).unwrap();
        assert_eq!(fs.w, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn c_ratios_pure_and_inhomogeneous() {
        let model = toda(4, Boundary::Open);
        let state = PhaseState::new(vec![1.0, 0.4, -0.3, -1.2], vec![0.0; 4]).unwrap();
        assert_eq!(c_ratios(&model, &state).unwrap(), vec![-0.5; 3]);

        let model = inhomogeneous_n3();
        let state = PhaseState::new(vec![0.0; 3], vec![0.0; 3]).unwrap();
        assert_eq!(c_ratios(&model, &state).unwrap(), vec![-0.5, -1.0]);
    }

    #[test]
    fn c_ratios_match_derivative_of_bond_root() {
        // Independent oracle: ρ = (∂√U/∂q_i) / √U by centered differences,
        // at a positive-w kink state.
        let model = LatticeModel::kink(3, Boundary::Open, 2).unwrap();
        let state = PhaseState::new(vec![2.0, 0.0, -2.0], vec![0.0; 3]).unwrap();
        let rho = c_ratios(&model, &state).unwrap();
        let h = 1e-6;
        for bond in 0..2 {
            let spec = model.bond_spec(bond);
            let d = model.separation(&state, bond);
            let a = |d: f64| spec.energy(d).sqrt();
            let c = (a(d + h) - a(d - h)) / (2.0 * h);
            assert_relative_eq!(rho[bond], c / a(d), max_relative = 1e-8);
        }
    }

    #[test]
    fn c_ratios_singular_bond_rejected() {
        // β-cancellation can zero a bond: β e^{-d} - β e^{-2d} at d = 0.
        let spec = InteractionSpec::new(&[(1.0, 1.0), (-1.0, 2.0)]).unwrap();
        let model = LatticeModel::new(2, Boundary::Open, spec).unwrap();
        let state = PhaseState::new(vec![0.0, 0.0], vec![0.0, 0.0]).unwrap();
        assert!(matches!(
            c_ratios(&model, &state),
            Err(Error::SingularBond { bond: 0 })
        ));
    }

    #[test]
    fn lax_matrices_smallest_case() {
        let model = toda(2, Boundary::Open);
        let state = PhaseState::new(vec![0.0, 0.0], vec![0.0, 0.0]).unwrap();
        let lax = lax_matrices(&model, &state, None).unwrap();
        assert_eq!(lax.l[(0, 1)], Complex64::from(1.0));
        assert_eq!(lax.l[(1, 0)], Complex64::from(1.0));
        assert_eq!(lax.l[(0, 0)], Complex64::from(0.0));
        // c₁ = ρ₁ a₁ = -1/2
        assert_eq!(lax.m[(0, 1)], Complex64::from(0.5));
        assert_eq!(lax.m[(1, 0)], Complex64::from(-0.5));
    }

    #[test]
    fn lax_matrices_periodic_corners_and_negative_bond() {
        let model = toda(3, Boundary::Periodic);
        let state = PhaseState::new(vec![0.0; 3], vec![0.0; 3]).unwrap();
        let lax = lax_matrices(&model, &state, Some(1.0)).unwrap();
        assert_eq!(lax.l[(0, 2)], Complex64::from(1.0));
        assert_eq!(lax.l[(2, 0)], Complex64::from(1.0));

        // principal root of a negative bond: w = -1/4 ⇒ a = i/2
        let spec = InteractionSpec::single(-0.25, 1.0).unwrap();
        let model = LatticeModel::new(2, Boundary::Open, spec).unwrap();
        let state = PhaseState::new(vec![0.0, 0.0], vec![0.0, 0.0]).unwrap();
        let lax = lax_matrices(&model, &state, None).unwrap();
        assert_abs_diff_eq!(lax.l[(0, 1)].re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(lax.l[(0, 1)].im, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn lax_matrices_lambda_policy() {
        let open = toda(3, Boundary::Open);
        let per = toda(3, Boundary::Periodic);
        let state = PhaseState::new(vec![0.5, 0.0, -0.5], vec![0.0; 3]).unwrap();
        assert!(matches!(
            lax_matrices(&open, &state, Some(1.0)),
            Err(Error::UnexpectedLambda)
        ));
        assert!(matches!(
            lax_matrices(&per, &state, None),
            Err(Error::MissingLambda)
        ));
        assert!(matches!(
            lax_matrices(&per, &state, Some(0.0)),
            Err(Error::ZeroLambda)
        ));
    }

    fn max_abs(delta: &Array2<Complex64>) -> f64 {
        delta.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn lax_residual_vanishes_for_toda() {
        for n in [3, 4, 5] {
            let model = toda(n, Boundary::Open);
            let q: Vec<f64> = (0..n).map(|i| 1.3 * (n - i) as f64 + 0.1 * i as f64).collect();
            let p: Vec<f64> = (0..n).map(|i| 0.3 - 0.17 * i as f64).collect();
            let state = PhaseState::new(q, p).unwrap();
            let delta = lax_residual(&model, &state, None).unwrap();
            assert!(max_abs(&delta) < 1e-12, "N={n}: {}", max_abs(&delta));
        }
        // periodic Toda is integrable at every spectral parameter
        for lambda in [-2.0, -1.0, 0.5, 1.0, 2.0] {
            let model = toda(4, Boundary::Periodic);
            let state = PhaseState::new(
                vec![0.7, 0.1, -0.4, -0.9],
                vec![0.2, -0.1, 0.3, -0.4],
            )
            .unwrap();
            let delta = lax_residual(&model, &state, Some(lambda)).unwrap();
            assert!(max_abs(&delta) < 1e-12, "λ={lambda}: {}", max_abs(&delta));
        }
    }

    #[test]
    fn lax_residual_inhomogeneous_closed_form() {
        // Δ₁₃ = -½ a₁a₂ (k₁-k₂) = +1/2 for rates (1,2) at the origin.
        let model = inhomogeneous_n3();
        let state = PhaseState::new(vec![0.0; 3], vec![0.4, -0.2, 0.1]).unwrap();
        let delta = lax_residual(&model, &state, None).unwrap();
        assert_abs_diff_eq!(delta[(0, 2)].re, 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(delta[(0, 2)].im, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(delta[(2, 0)].re, 0.5, epsilon = 1e-14);
        // everything within distance 1 of the diagonal cancels identically
        for i in 0..3usize {
            for j in 0..3usize {
                if i.abs_diff(j) <= 1 {
                    assert!(delta[(i, j)].norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn lax_residual_two_sites_always_vanishes() {
        let spec = kink_interaction_spec(3).unwrap();
        let model = LatticeModel::new(2, Boundary::Open, spec.clone()).unwrap();
        let state = PhaseState::new(vec![1.7, 0.0], vec![0.5, -0.2]).unwrap();
        let delta = lax_residual(&model, &state, None).unwrap();
        assert!(max_abs(&delta) < 1e-13);

        // The periodic two-site chain carries its defect on the diagonal:
        // Δ₀₀ = -Δ₁₁ = -(λ+λ⁻¹) a₀a₁ (ρ₁-ρ₀). It vanishes for every λ on
        // ρ-symmetric states and for single-term bonds, but for a deformed
        // chain on an asymmetric state no real λ closes the pair.
        let model =
            LatticeModel::with_options(2, Boundary::Periodic, spec.clone(), None, false).unwrap();
        let fs = to_flaschka(&model, &state).unwrap();
        let cross = principal_sqrt(fs.w[0]) * principal_sqrt(fs.w[1]) * (fs.rho[1] - fs.rho[0]);
        for lambda in [1.0, -1.0, 2.0] {
            let delta = lax_residual(&model, &state, Some(lambda)).unwrap();
            let expected = -(lambda + 1.0 / lambda) * cross;
            assert!((delta[(0, 0)] - expected).norm() < 1e-12, "λ={lambda}");
            assert!((delta[(1, 1)] + expected).norm() < 1e-12, "λ={lambda}");
            assert!(delta[(0, 1)].norm() < 1e-12 && delta[(1, 0)].norm() < 1e-12);
        }
        // symmetric state: both bonds identical, defect gone at every λ
        let symmetric = PhaseState::new(vec![0.4, 0.4], vec![0.5, -0.2]).unwrap();
        let delta = lax_residual(&model, &symmetric, Some(1.7)).unwrap();
        assert!(max_abs(&delta) < 1e-13);
        // pure Toda stays exact for every λ
        let toda2 =
            LatticeModel::new(2, Boundary::Periodic, InteractionSpec::single(1.0, 1.0).unwrap())
                .unwrap();
        let delta = lax_residual(&toda2, &state, Some(1.7)).unwrap();
        assert!(max_abs(&delta) < 1e-13);
    }

    #[test]
    fn constraint_residuals_values() {
        // identical bonds ⇒ identical ρ and w ⇒ zero residual
        let model = LatticeModel::kink(4, Boundary::Open, 3).unwrap();
        let state = PhaseState::new(vec![4.5, 1.5, -1.5, -4.5], vec![0.0; 4]).unwrap();
        let s = constraint_residuals(&model, &state).unwrap();
        assert_eq!(s.len(), 2);
        assert!(s.iter().all(|x| x.abs() < 1e-28));

        // rates (1,2) at the origin: s₁ = 1·1·(−1+½)² = 1/4
        let model = inhomogeneous_n3();
        let state = PhaseState::new(vec![0.0; 3], vec![0.0; 3]).unwrap();
        let s = constraint_residuals(&model, &state).unwrap();
        assert_abs_diff_eq!(s[0], 0.25, epsilon = 1e-15);

        // unequal separations of a multi-term bond break the constraint
        let model = LatticeModel::kink(3, Boundary::Open, 2).unwrap();
        let state = PhaseState::new(vec![3.0, 0.0, -4.0], vec![0.0; 3]).unwrap();
        let s = constraint_residuals(&model, &state).unwrap();
        assert!(s[0].abs() > 1e-6);
    }

    #[test]
    fn residual_squares_match_constraint_squares() {
        // Δ_{i,i+2}² = s_i for real and signed bonds alike.
        let model = LatticeModel::kink(3, Boundary::Open, 3).unwrap();
        let state = PhaseState::new(vec![3.0, 0.0, -4.0], vec![0.2, 0.0, -0.1]).unwrap();
        let delta = lax_residual(&model, &state, None).unwrap();
        let s = constraint_residuals(&model, &state).unwrap();
        let d2 = delta[(0, 2)] * delta[(0, 2)];
        assert_relative_eq!(d2.re, s[0], max_relative = 1e-10);
        assert_abs_diff_eq!(d2.im, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn trace_invariants_closed_forms() {
        let fs = FlaschkaState {
            w: vec![0.3, 0.5],
            b: vec![0.1, -0.2, 0.1],
            rho: vec![-0.5, -0.5],
        };
        // H₁ = Σ b
        assert_abs_diff_eq!(
            trace_invariant(&fs, 1, Boundary::Open, None).unwrap(),
            0.0,
            epsilon = 1e-16
        );
        // H₂ = ½Σb² + Σw = 0.03 + 0.8
        assert_relative_eq!(
            trace_invariant(&fs, 2, Boundary::Open, None).unwrap(),
            0.83,
            max_relative = 1e-14
        );
        // H₃ = ⅓Σb³ + w₁(b₁+b₂) + w₂(b₂+b₃)
        assert_relative_eq!(
            trace_invariant(&fs, 3, Boundary::Open, None).unwrap(),
            -0.082,
            max_relative = 1e-13
        );
    }

    #[test]
    fn trace_matches_complex_lax_trace() {
        // Independent route: powers of the materialized complex L.
        let model = LatticeModel::kink(4, Boundary::Open, 3).unwrap();
        let state =
            PhaseState::new(vec![5.1, 1.6, -1.4, -4.9], vec![0.4, -0.1, 0.2, -0.3]).unwrap();
        let fs = to_flaschka(&model, &state).unwrap();
        let lax = lax_matrices(&model, &state, None).unwrap();
        for k in 1..=6 {
            let mut p = Array2::<Complex64>::eye(4);
            for _ in 0..k {
                p = p.dot(&lax.l);
            }
            let tr: Complex64 = (0..4).map(|i| p[(i, i)]).sum();
            let h = trace_invariant(&fs, k, Boundary::Open, None).unwrap();
            assert_relative_eq!(h, tr.re / k as f64, max_relative = 1e-11);
            assert_abs_diff_eq!(tr.im, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn trace_periodic_matches_complex_lax_trace() {
        let model = toda(3, Boundary::Periodic);
        let state = PhaseState::new(vec![0.6, -0.1, -0.5], vec![0.3, 0.0, -0.2]).unwrap();
        let fs = to_flaschka(&model, &state).unwrap();
        for lambda in [0.7, -1.3, 1.0] {
            let lax = lax_matrices(&model, &state, Some(lambda)).unwrap();
            for k in 1..=5 {
                let mut p = Array2::<Complex64>::eye(3);
                for _ in 0..k {
                    p = p.dot(&lax.l);
                }
                let tr: Complex64 = (0..3).map(|i| p[(i, i)]).sum();
                let h = trace_invariant(&fs, k, Boundary::Periodic, Some(lambda)).unwrap();
                assert_relative_eq!(h, tr.re / k as f64, max_relative = 1e-11);
            }
        }
    }

    #[test]
    fn trace_ignores_root_sign_conventions() {
        // Flipping the sign of any single a_i is a similarity of the open L;
        // the band-structure trace never sees the choice.
        let fs = FlaschkaState {
            w: vec![0.4, -0.7, 1.2],
            b: vec![0.3, -0.2, 0.5, 0.1],
            rho: vec![-0.5, -0.6, -0.7],
        };
        for flip in 0..3 {
            let mut l = Array2::<Complex64>::zeros((4, 4));
            for i in 0..4 {
                l[(i, i)] = Complex64::from(fs.b[i]);
            }
            for bond in 0..3 {
                let mut a = principal_sqrt(fs.w[bond]);
                if bond == flip {
                    a = -a;
                }
                l[(bond, bond + 1)] = a;
                l[(bond + 1, bond)] = a;
            }
            for k in [2usize, 3, 4, 5] {
                let mut p = Array2::<Complex64>::eye(4);
                for _ in 0..k {
                    p = p.dot(&l);
                }
                let tr: Complex64 = (0..4).map(|i| p[(i, i)]).sum();
                let h = trace_invariant(&fs, k, Boundary::Open, None).unwrap();
                assert_relative_eq!(h, tr.re / k as f64, max_relative = 1e-11);
            }
        }
    }

    #[test]
    fn trace_power_out_of_range() {
        let fs = FlaschkaState {
            w: vec![1.0],
            b: vec![0.0, 0.0],
            rho: vec![-0.5],
        };
        assert!(trace_invariant(&fs, 0, Boundary::Open, None).is_err());
        assert!(trace_invariant(&fs, MAX_TRACE_POWER + 1, Boundary::Open, None).is_err());
    }

    #[test]
    fn m3_matrix_components() {
        // w = (1,1), b = 0, ρ = -½ ⇒ ζ = 0, η₁ = -½
        let fs = FlaschkaState {
            w: vec![1.0, 1.0],
            b: vec![0.0; 3],
            rho: vec![-0.5, -0.5],
        };
        let m3 = m3_matrix(&fs).unwrap();
        assert_eq!(m3[(0, 1)], 0.0);
        assert_eq!(m3[(1, 2)], 0.0);
        assert_eq!(m3[(0, 2)], -0.5);
        assert_eq!(m3[(2, 0)], 0.5);

        // N=2: a single ζ entry pair, no second diagonal
        let fs = FlaschkaState {
            w: vec![0.8],
            b: vec![0.4, -0.1],
            rho: vec![-0.5],
        };
        let m3 = m3_matrix(&fs).unwrap();
        let zeta = -0.5 * 0.8f64.sqrt() * 0.3;
        assert_relative_eq!(m3[(0, 1)], zeta, max_relative = 1e-15);
        assert_relative_eq!(m3[(1, 0)], -zeta, max_relative = 1e-15);

        // negative bonds rejected for this operation
        let fs = FlaschkaState {
            w: vec![-0.5, 1.0],
            b: vec![0.0; 3],
            rho: vec![-0.5, -0.5],
        };
        assert!(matches!(m3_matrix(&fs), Err(Error::NonPositiveBond { bond: 0, .. })));
    }

    #[test]
    fn m3_entries_match_component_formulas() {
        // independent re-evaluation at a random positive-w state
        let fs = FlaschkaState {
            w: vec![0.9, 1.4, 0.6],
            b: vec![0.2, -0.3, 0.15, 0.4],
            rho: vec![-0.5; 3],
        };
        let m3 = m3_matrix(&fs).unwrap();
        let a: Vec<f64> = fs.w.iter().map(|w| w.sqrt()).collect();
        let c: Vec<f64> = a.iter().map(|a| -0.5 * a).collect();
        for i in 0..3 {
            assert_relative_eq!(
                m3[(i, i + 1)],
                c[i] * (fs.b[i] + fs.b[i + 1]),
                max_relative = 1e-14
            );
        }
        for i in 0..2 {
            assert_relative_eq!(m3[(i, i + 2)], c[i] * a[i + 1], max_relative = 1e-14);
        }
    }

    #[test]
    fn m3_residual_proportional_bonds_vanish() {
        let fs = FlaschkaState {
            w: vec![0.9, 1.4, 0.6, 1.1],
            b: vec![0.2, -0.3, 0.15, 0.4, -0.25],
            rho: vec![-0.5; 4],
        };
        let residual = m3_residual(&fs).unwrap();
        for (pos, value) in residual {
            assert!(value.abs() < 1e-12, "{pos:?}: {value}");
        }
    }

    #[test]
    fn m3_residual_closed_forms_n4() {
        // bond rates (1,1,2): ρ = (-½,-½,-1)
        let fs = FlaschkaState {
            w: vec![0.9, 1.2, 0.7],
            b: vec![0.3, -0.2, 0.4, 0.1],
            rho: vec![-0.5, -0.5, -1.0],
        };
        let residual = m3_residual(&fs).unwrap();
        let a: Vec<f64> = fs.w.iter().map(|w| w.sqrt()).collect();
        let c: Vec<f64> = a.iter().zip(&fs.rho).map(|(a, r)| a * r).collect();
        // equal leading ratios kill the (1,3) entry
        assert_abs_diff_eq!(residual[&(0, 2)], 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(residual[&(0, 3)], 0.0, epsilon = 1e-13);
        // (2,4) entry survives: (b₃+b₄)(a₃c₂ − a₂c₃)
        let expected = (fs.b[2] + fs.b[3]) * (a[2] * c[1] - a[1] * c[2]);
        assert_relative_eq!(residual[&(1, 3)], expected, max_relative = 1e-12);
        assert!(expected.abs() > 1e-3);

        // fully inhomogeneous rates: all three closed forms nonzero
        let fs = FlaschkaState {
            w: vec![0.9, 1.2, 0.7],
            b: vec![0.3, -0.2, 0.4, 0.1],
            rho: vec![-0.5, -1.0, -1.5],
        };
        let residual = m3_residual(&fs).unwrap();
        let a: Vec<f64> = fs.w.iter().map(|w| w.sqrt()).collect();
        let c: Vec<f64> = a.iter().zip(&fs.rho).map(|(a, r)| a * r).collect();
        let r13 = (fs.b[1] + fs.b[2]) * (a[1] * c[0] - a[0] * c[1]);
        let r14 = a[2] * (a[1] * c[0] - a[0] * c[1]);
        let r24 = (fs.b[2] + fs.b[3]) * (a[2] * c[1] - a[1] * c[2]);
        assert_relative_eq!(residual[&(0, 2)], r13, max_relative = 1e-12);
        assert_relative_eq!(residual[&(0, 3)], r14, max_relative = 1e-12);
        assert_relative_eq!(residual[&(1, 3)], r24, max_relative = 1e-12);
    }

    #[test]
    fn lax_flow_diagonal_matches_canonical_momenta() {
        // ḃ from the Lax bookkeeping (2ρw differences) equals ṗ of the flow.
        let model = LatticeModel::kink(4, Boundary::Open, 3).unwrap();
        let state =
            PhaseState::new(vec![4.8, 1.7, -1.2, -4.6], vec![0.3, -0.2, 0.1, 0.0]).unwrap();
        let fs = to_flaschka(&model, &state).unwrap();
        let (_, pdot) = lattice::equations_of_motion(&model, &state).unwrap();
        let ca = |i: usize| 2.0 * fs.rho[i] * fs.w[i]; // 2 c_i a_i, real
        assert_relative_eq!(pdot[0], -ca(0), max_relative = 1e-12);
        assert_relative_eq!(pdot[1], ca(0) - ca(1), max_relative = 1e-12);
        assert_relative_eq!(pdot[2], ca(1) - ca(2), max_relative = 1e-12);
        assert_relative_eq!(pdot[3], ca(2), max_relative = 1e-12);
    }
}
