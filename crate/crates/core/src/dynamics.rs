//! Time integration of the canonical flow and of the third-invariant flow,
//! plus Poisson brackets of the trace invariants with analytic gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flaschka::{self, FlaschkaState};
use crate::lattice::{self, Boundary, InteractionSpec, LatticeModel, PhaseState};

/// Any coordinate or momentum beyond this magnitude aborts a run; deformed
/// potentials with sign changes can eject particles.
pub const BLOWUP_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Verlet,
    Yoshida4,
    Rk4,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scheme::Verlet => write!(f, "verlet"),
            Scheme::Yoshida4 => write!(f, "yoshida4"),
            Scheme::Rk4 => write!(f, "rk4"),
        }
    }
}

/// Sampled states of one integration run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<PhaseState>,
    pub step: f64,
    pub scheme: Scheme,
}

impl Trajectory {
    pub fn samples(&self) -> usize {
        self.times.len()
    }

    /// Sampling interval `dt × sample_every`.
    pub fn sample_dt(&self) -> f64 {
        if self.times.len() > 1 {
            self.times[1] - self.times[0]
        } else {
            self.step
        }
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::OutOfRange(format!("dt must be positive, got {dt}")));
    }
    Ok(())
}

/// One Störmer–Verlet (kick–drift–kick) step; exactly symplectic for the
/// separable Hamiltonian and time-reversible.
pub fn step_verlet(model: &LatticeModel, state: &PhaseState, dt: f64) -> Result<PhaseState> {
    check_dt(dt)?;
    model.check_state(state)?;
    Ok(verlet_unchecked(model, state, dt))
}

fn verlet_unchecked(model: &LatticeModel, state: &PhaseState, dt: f64) -> PhaseState {
    let half = 0.5 * dt;
    let force = lattice::momentum_derivative(model, state);
    let p_half: Vec<f64> = state
        .p
        .iter()
        .zip(&force)
        .map(|(p, f)| p + half * f)
        .collect();
    let q_new: Vec<f64> = state
        .q
        .iter()
        .zip(&p_half)
        .map(|(q, p)| q + dt * p)
        .collect();
    let mid = PhaseState {
        q: q_new,
        p: p_half,
    };
    let force = lattice::momentum_derivative(model, &mid);
    let p_new: Vec<f64> = mid
        .p
        .iter()
        .zip(&force)
        .map(|(p, f)| p + half * f)
        .collect();
    PhaseState { q: mid.q, p: p_new }
}

/// Fourth-order composition of Verlet with the standard coefficients
/// `w₁ = 1/(2 − 2^{1/3})`, `w₀ = 1 − 2w₁`; symplectic.
pub fn step_yoshida4(model: &LatticeModel, state: &PhaseState, dt: f64) -> Result<PhaseState> {
    check_dt(dt)?;
    model.check_state(state)?;
    let w1 = 1.0 / (2.0 - 2f64.powf(1.0 / 3.0));
    let w0 = 1.0 - 2.0 * w1;
    let s = verlet_unchecked(model, state, w1 * dt);
    let s = verlet_unchecked(model, &s, w0 * dt);
    Ok(verlet_unchecked(model, &s, w1 * dt))
}

/// Classical Runge–Kutta step of the canonical equations; a non-symplectic
/// reference.
pub fn step_rk4(model: &LatticeModel, state: &PhaseState, dt: f64) -> Result<PhaseState> {
    check_dt(dt)?;
    model.check_state(state)?;
    let n = state.len();
    let deriv = |s: &PhaseState| -> (Vec<f64>, Vec<f64>) {
        (s.p.clone(), lattice::momentum_derivative(model, s))
    };
    let shift = |s: &PhaseState, kq: &[f64], kp: &[f64], h: f64| PhaseState {
        q: (0..n).map(|i| s.q[i] + h * kq[i]).collect(),
        p: (0..n).map(|i| s.p[i] + h * kp[i]).collect(),
    };
    let (k1q, k1p) = deriv(state);
    let (k2q, k2p) = deriv(&shift(state, &k1q, &k1p, 0.5 * dt));
    let (k3q, k3p) = deriv(&shift(state, &k2q, &k2p, 0.5 * dt));
    let (k4q, k4p) = deriv(&shift(state, &k3q, &k3p, dt));
    let sixth = dt / 6.0;
    Ok(PhaseState {
        q: (0..n)
            .map(|i| state.q[i] + sixth * (k1q[i] + 2.0 * k2q[i] + 2.0 * k3q[i] + k4q[i]))
            .collect(),
        p: (0..n)
            .map(|i| state.p[i] + sixth * (k1p[i] + 2.0 * k2p[i] + 2.0 * k3p[i] + k4p[i]))
            .collect(),
    })
}

fn step(model: &LatticeModel, state: &PhaseState, dt: f64, scheme: Scheme) -> PhaseState {
    match scheme {
        Scheme::Verlet => verlet_unchecked(model, state, dt),
        Scheme::Yoshida4 => step_yoshida4(model, state, dt).expect("inputs already validated"),
        Scheme::Rk4 => step_rk4(model, state, dt).expect("inputs already validated"),
    }
}

fn state_ok(state: &PhaseState) -> bool {
    state
        .q
        .iter()
        .chain(&state.p)
        .all(|x| x.is_finite() && x.abs() <= BLOWUP_LIMIT)
}

/// Iterates the chosen stepper for `steps` steps, recording every
/// `sample_every`-th state (and the initial one). Deterministic for fixed
/// inputs; non-finite or runaway values abort with the offending step index.
pub fn integrate(
    model: &LatticeModel,
    state0: &PhaseState,
    dt: f64,
    steps: usize,
    sample_every: usize,
    scheme: Scheme,
) -> Result<Trajectory> {
    check_dt(dt)?;
    model.check_state(state0)?;
    if steps < 1 {
        return Err(Error::OutOfRange("steps must be ≥ 1".into()));
    }
    if sample_every < 1 {
        return Err(Error::OutOfRange("sample_every must be ≥ 1".into()));
    }
    if !state_ok(state0) {
        return Err(Error::BlowUp {
            step: 0,
            detail: "initial state is non-finite or out of bounds".into(),
        });
    }
    let mut times = vec![0.0];
    let mut states = vec![state0.clone()];
    let mut current = state0.clone();
    for i in 1..=steps {
        current = step(model, &current, dt, scheme);
        if !state_ok(&current) {
            return Err(Error::BlowUp {
                step: i,
                detail: format!("state left the admissible region (|q|,|p| ≤ {BLOWUP_LIMIT:e})"),
            });
        }
        if i % sample_every == 0 {
            times.push(i as f64 * dt);
            states.push(current.clone());
        }
    }
    Ok(Trajectory {
        times,
        states,
        step: dt,
        scheme,
    })
}

/// Recovers the bond separation from a bond energy `w = U(d)`.
///
/// Closed form for single-term bonds; for multi-term bonds with all-positive
/// couplings `U` is strictly decreasing and the root is bracketed and
/// bisected. Mixed-sign couplings have no monotone inverse and are rejected.
fn invert_bond_energy(spec: &InteractionSpec, w: f64, bond: usize) -> Result<f64> {
    if !(w > 0.0) {
        return Err(Error::NonPositiveBond { bond, w });
    }
    let terms = spec.terms();
    if terms.len() == 1 {
        let t = terms[0];
        if t.beta <= 0.0 {
            return Err(Error::NonPositiveBond { bond, w: t.beta });
        }
        return Ok((t.beta / w).ln() / t.k);
    }
    if terms.iter().any(|t| t.beta <= 0.0) {
        return Err(Error::UnsupportedSpec(
            "bond-energy inversion requires positive couplings".into(),
        ));
    }
    let mut lo = 0.0;
    let mut width = 1.0;
    while spec.energy(lo) < w {
        lo -= width;
        width *= 2.0;
    }
    let mut hi = 0.0;
    width = 1.0;
    while spec.energy(hi) > w {
        hi += width;
        width *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if spec.energy(mid) > w {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * (1.0 + hi.abs()) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn h3_state_vectors(fs: &FlaschkaState) -> Result<(Vec<f64>, Vec<f64>)> {
    for (bond, &w) in fs.w.iter().enumerate() {
        if !(w > 0.0) {
            return Err(Error::NonPositiveBond { bond, w });
        }
    }
    Ok((fs.w.iter().map(|w| w.sqrt()).collect(), fs.b.clone()))
}

fn rk4_ab<F>(a: &[f64], b: &[f64], dt: f64, rhs: F) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: Fn(&[f64], &[f64]) -> Result<(Vec<f64>, Vec<f64>)>,
{
    let shift = |x: &[f64], k: &[f64], h: f64| -> Vec<f64> {
        x.iter().zip(k).map(|(x, k)| x + h * k).collect()
    };
    let (k1a, k1b) = rhs(a, b)?;
    let (k2a, k2b) = rhs(&shift(a, &k1a, 0.5 * dt), &shift(b, &k1b, 0.5 * dt))?;
    let (k3a, k3b) = rhs(&shift(a, &k2a, 0.5 * dt), &shift(b, &k2b, 0.5 * dt))?;
    let (k4a, k4b) = rhs(&shift(a, &k3a, dt), &shift(b, &k3b, dt))?;
    let sixth = dt / 6.0;
    let combine = |x: &[f64], k1: &[f64], k2: &[f64], k3: &[f64], k4: &[f64]| -> Vec<f64> {
        (0..x.len())
            .map(|i| x[i] + sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect()
    };
    Ok((
        combine(a, &k1a, &k2a, &k3a, &k4a),
        combine(b, &k1b, &k2b, &k3b, &k4b),
    ))
}

/// One Runge–Kutta step of the third-invariant flow in `(a, b)` variables,
/// with `c_i` re-evaluated at every substage from the bond potential shape.
///
/// Open boundary, positive bonds only.
pub fn h3_flow_step(model: &LatticeModel, fs: &FlaschkaState, dt: f64) -> Result<FlaschkaState> {
    check_dt(dt)?;
    if model.boundary != Boundary::Open {
        return Err(Error::UnsupportedSpec(
            "the third-invariant flow is implemented for open chains".into(),
        ));
    }
    if fs.bonds() != model.bond_count() || fs.sites() != model.sites {
        return Err(Error::DimensionMismatch {
            what: "flaschka state",
            expected: model.sites,
            got: fs.sites(),
        });
    }
    let (a0, b0) = h3_state_vectors(fs)?;
    let c_of = |a: &[f64]| -> Result<Vec<f64>> {
        a.iter()
            .enumerate()
            .map(|(bond, &ai)| {
                let spec = model.bond_spec(bond);
                let d = invert_bond_energy(spec, ai * ai, bond)?;
                let rho = spec.gradient_coefficient(d) / (-2.0 * ai * ai);
                Ok(rho * ai)
            })
            .collect()
    };
    let rhs = |a: &[f64], b: &[f64]| -> Result<(Vec<f64>, Vec<f64>)> {
        let c = c_of(a)?;
        Ok(flaschka::h3_flow_rhs(a, b, &c))
    };
    let (a1, b1) = rk4_ab(&a0, &b0, dt, rhs)?;
    let rho = a1
        .iter()
        .enumerate()
        .map(|(bond, &ai)| {
            let spec = model.bond_spec(bond);
            let d = invert_bond_energy(spec, ai * ai, bond)?;
            Ok(spec.gradient_coefficient(d) / (-2.0 * ai * ai))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(FlaschkaState {
        w: a1.iter().map(|a| a * a).collect(),
        b: b1,
        rho,
    })
}

/// Frozen-coefficient variant: `c` is held at its initial value, for quick
/// residual demonstrations. Output is labeled by the caller.
pub fn h3_flow_step_frozen(fs: &FlaschkaState, c: &[f64], dt: f64) -> Result<FlaschkaState> {
    check_dt(dt)?;
    if c.len() != fs.bonds() {
        return Err(Error::DimensionMismatch {
            what: "frozen coefficients",
            expected: fs.bonds(),
            got: c.len(),
        });
    }
    let (a0, b0) = h3_state_vectors(fs)?;
    let rhs =
        |a: &[f64], b: &[f64]| -> Result<(Vec<f64>, Vec<f64>)> { Ok(flaschka::h3_flow_rhs(a, b, c)) };
    let (a1, b1) = rk4_ab(&a0, &b0, dt, rhs)?;
    let rho = a1.iter().zip(c).map(|(a, c)| c / a).collect();
    Ok(FlaschkaState {
        w: a1.iter().map(|a| a * a).collect(),
        b: b1,
        rho,
    })
}

/// Analytic phase-space gradient of the invariant `H_k`, obtained by the
/// chain rule through `(w_i(q), b_i(p))`; real for signed bonds.
pub fn invariant_gradients(
    model: &LatticeModel,
    state: &PhaseState,
    k: usize,
    lambda: Option<f64>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let fs = flaschka::to_flaschka(model, state)?;
    let grad = flaschka::trace_invariant_gradient(&fs, k, model.boundary, lambda)?;
    let n = model.sites;
    let mut dq = vec![0.0; n];
    for bond in 0..model.bond_count() {
        // ∂w_b/∂q_b = -G_b, ∂w_b/∂q_{b+1} = +G_b
        let g = model
            .bond_spec(bond)
            .gradient_coefficient(model.separation(state, bond));
        dq[bond] += grad.dw[bond] * (-g);
        dq[(bond + 1) % n] += grad.dw[bond] * g;
    }
    Ok((dq, grad.db))
}

/// Poisson bracket `{H_{k1}, H_{k2}}` of two trace invariants, oriented so
/// that `{H, F}` is the time derivative of `F` along the `H`-flow:
///
/// ```text
/// {F, G} = Σ_i (∂F/∂p_i ∂G/∂q_i − ∂F/∂q_i ∂G/∂p_i).
/// ```
///
/// With this orientation the leading-order inhomogeneous chain gives
/// `{H₂, H₃} = (k₂ − k₁) a₁² a₂²`.
pub fn poisson_bracket(
    model: &LatticeModel,
    k1: usize,
    k2: usize,
    state: &PhaseState,
    lambda: Option<f64>,
) -> Result<f64> {
    let (f_dq, f_dp) = invariant_gradients(model, state, k1, lambda)?;
    let (g_dq, g_dp) = invariant_gradients(model, state, k2, lambda)?;
    Ok((0..model.sites)
        .map(|i| f_dp[i] * g_dq[i] - f_dq[i] * g_dp[i])
        .sum())
}

/// Analytic total derivative `d/dt H_k` along the canonical flow.
pub fn invariant_time_derivative(
    model: &LatticeModel,
    state: &PhaseState,
    k: usize,
    lambda: Option<f64>,
) -> Result<f64> {
    let (dq, dp) = invariant_gradients(model, state, k, lambda)?;
    let (qdot, pdot) = lattice::equations_of_motion(model, state)?;
    Ok((0..model.sites)
        .map(|i| dq[i] * qdot[i] + dp[i] * pdot[i])
        .sum())
}
