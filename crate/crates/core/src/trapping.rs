//! The trapped set: for conserved (ξ_t, ξ_φ) the function
//!
//! ```text
//! F(r) = ((r² + a²) ξ_t + a ξ_φ)² / μ(r)
//! ```
//!
//! has exactly one critical point r_trap in (r_e, r_c), a nondegenerate
//! minimum; Γ is {r = r_trap, ξ_r = 0} inside the characteristic set.

use nalgebra::SMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{KdsError, Result};
use crate::numeric::bisect;
use crate::radial::Spacetime;
use crate::symbols::wave_symbol_grad;

/// X(r) = (r² + a²) ξ_t + a ξ_φ.
pub fn x_of(st: &Spacetime, xi_t: f64, xi_phi: f64, r: f64) -> f64 {
    let a = st.params.spin;
    (r * r + a * a) * xi_t + a * xi_phi
}

/// X μ' - 4 r ξ_t μ, whose product with -X/μ² is F'.
pub fn trap_aux(st: &Spacetime, xi_t: f64, xi_phi: f64, r: f64) -> f64 {
    let p = &st.params;
    x_of(st, xi_t, xi_phi, r) * p.mu_prime(r) - 4.0 * r * xi_t * p.mu(r)
}

fn trap_aux_prime(st: &Spacetime, xi_t: f64, xi_phi: f64, r: f64) -> f64 {
    let p = &st.params;
    let x = x_of(st, xi_t, xi_phi, r);
    2.0 * r * xi_t * p.mu_prime(r) + x * p.mu_second(r) - 4.0 * xi_t * p.mu(r) - 4.0 * r * xi_t * p.mu_prime(r)
}

/// F and its first two derivatives in closed form.
pub fn f_eval(st: &Spacetime, xi_t: f64, xi_phi: f64, r: f64, order: u8) -> Result<f64> {
    let p = &st.params;
    let mu = p.mu(r);
    if mu == 0.0 {
        return Err(KdsError::DomainError(format!("F is singular where μ vanishes (r = {r})")));
    }
    let x = x_of(st, xi_t, xi_phi, r);
    let t = trap_aux(st, xi_t, xi_phi, r);
    match order {
        0 => Ok(x * x / mu),
        1 => Ok(-x * t / (mu * mu)),
        2 => {
            let dx = 2.0 * r * xi_t;
            let dt = trap_aux_prime(st, xi_t, xi_phi, r);
            Ok(-(dx * t + x * dt) / (mu * mu) + 2.0 * x * t * p.mu_prime(r) / (mu * mu * mu))
        }
        _ => Err(KdsError::DomainError(format!("F derivative of order {order} not provided"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrapCase {
    Interior,
    ZeroXiT,
    EndpointDegenerate,
}

impl TrapCase {
    pub fn as_str(self) -> &'static str {
        match self {
            TrapCase::Interior => "interior",
            TrapCase::ZeroXiT => "zero_xi_t",
            TrapCase::EndpointDegenerate => "endpoint_degenerate",
        }
    }
}

/// One fiber of the trapped set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrappedOrbit {
    pub xi_t: f64,
    pub xi_phi: f64,
    pub case: TrapCase,
    pub r_trap: f64,
    pub f_trap: f64,
    pub f_pp: f64,
    /// |μ² F'(r_trap)| over its monomial scale.
    pub scaled_f_prime: f64,
    /// √(2 μ b² F''), the normal rate times ρ².
    pub rate_numerator: f64,
}

impl TrappedOrbit {
    /// Normal expansion rate √(2μ b² F'')/ρ² at latitude θ.
    pub fn normal_rate(&self, st: &Spacetime, theta: f64) -> f64 {
        self.rate_numerator / st.params.rho2(self.r_trap, theta)
    }

    pub fn has_trapped_radius(&self) -> bool {
        self.case != TrapCase::EndpointDegenerate
    }
}

/// Locates r_trap by bisecting μ²F' = -X · trap_aux, a polynomial, on
/// (r_e, r_c). At r_e it equals -X² μ'(r_e) < 0 and at r_c it is -X² μ'(r_c) > 0.
pub fn trapped_radius(st: &Spacetime, xi_t: f64, xi_phi: f64, root_tol: f64) -> Result<TrappedOrbit> {
    if xi_t == 0.0 && xi_phi == 0.0 {
        return Err(KdsError::InvalidParams("(xi_t, xi_phi) must not both vanish".into()));
    }
    if !(xi_t.is_finite() && xi_phi.is_finite()) {
        return Err(KdsError::InvalidParams("non-finite covector".into()));
    }
    let h = &st.horizons;
    let a = st.params.spin;
    if xi_t == 0.0 {
        return Ok(orbit_at(st, xi_t, xi_phi, h.r0, TrapCase::ZeroXiT));
    }
    let rz2 = -a * xi_phi / xi_t - a * a;
    if rz2 >= 0.0 {
        let rz = rz2.sqrt();
        for rh in [h.r_e, h.r_c] {
            if (rz - rh).abs() <= root_tol * rh {
                let mut o = orbit_at(st, xi_t, xi_phi, rh, TrapCase::EndpointDegenerate);
                o.r_trap = f64::NAN;
                o.f_trap = f64::NAN;
                o.f_pp = f64::NAN;
                o.rate_numerator = f64::NAN;
                return Ok(o);
            }
        }
    }
    let g = |r: f64| -x_of(st, xi_t, xi_phi, r) * trap_aux(st, xi_t, xi_phi, r);
    let r = bisect(g, h.r_e, h.r_c, 0.0);
    Ok(orbit_at(st, xi_t, xi_phi, r, TrapCase::Interior))
}

fn orbit_at(st: &Spacetime, xi_t: f64, xi_phi: f64, r: f64, case: TrapCase) -> TrappedOrbit {
    let p = &st.params;
    let mu = p.mu(r);
    let x = x_of(st, xi_t, xi_phi, r);
    let g = -x * trap_aux(st, xi_t, xi_phi, r);
    let a2 = p.spin * p.spin;
    let x_scale = (r * r + a2) * xi_t.abs() + p.spin.abs() * xi_phi.abs();
    let dmu_scale = 4.0 * p.lambda / 3.0 * r.abs().powi(3) + 2.0 * p.one_minus_gamma().abs() * r.abs() + 2.0 * p.mass;
    let g_scale = x_scale * (x_scale * dmu_scale + 4.0 * r.abs() * xi_t.abs() * p.mu_scale(r));
    let f_pp = f_eval(st, xi_t, xi_phi, r, 2).unwrap_or(f64::NAN);
    let b2 = p.b() * p.b();
    TrappedOrbit {
        xi_t,
        xi_phi,
        case,
        r_trap: r,
        f_trap: x * x / mu,
        f_pp,
        scaled_f_prime: if g_scale > 0.0 { g.abs() / g_scale } else { 0.0 },
        rate_numerator: (2.0 * mu * b2 * f_pp).sqrt(),
    }
}

/// The linearized flow (1/ρ²)[[0, 2μ], [b²F'', 0]] transverse to Γ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Linearization {
    pub matrix: [[f64; 2]; 2],
    pub trace: f64,
    pub det: f64,
    pub eigenvalues: [f64; 2],
}

pub fn linearization(st: &Spacetime, orbit: &TrappedOrbit, theta: f64) -> Result<Linearization> {
    if !orbit.has_trapped_radius() {
        return Err(KdsError::DomainError("orbit has no trapped radius".into()));
    }
    let p = &st.params;
    let rho2 = p.rho2(orbit.r_trap, theta);
    let mu = p.mu(orbit.r_trap);
    let b2 = p.b() * p.b();
    let m = [[0.0, 2.0 * mu / rho2], [b2 * orbit.f_pp / rho2, 0.0]];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let ev = (-det).sqrt();
    Ok(Linearization {
        matrix: m,
        trace: m[0][0] + m[1][1],
        det,
        eigenvalues: [ev, -ev],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Stable,
    Unstable,
}

/// ξ_r on the stable or unstable manifold: ±sgn(r - r_trap) b √((F - F_trap)/μ).
pub fn manifold_xi_r(st: &Spacetime, orbit: &TrappedOrbit, r: f64, branch: Branch) -> Result<f64> {
    let h = &st.horizons;
    if !(r > h.r_e && r < h.r_c) {
        return Err(KdsError::DomainError(format!("r = {r} outside (r_e, r_c)")));
    }
    let f = f_eval(st, orbit.xi_t, orbit.xi_phi, r, 0)?;
    let diff = f - orbit.f_trap;
    let tol = 1e-12 * orbit.f_trap.abs().max(f.abs()).max(f64::MIN_POSITIVE);
    if diff < -tol {
        return Err(KdsError::DomainError(format!("F(r) < F_trap by {:e}", -diff)));
    }
    let mag = st.params.b() * (diff.max(0.0) / st.params.mu(r)).sqrt();
    let sign = (r - orbit.r_trap).signum() * if branch == Branch::Unstable { 1.0 } else { -1.0 };
    Ok(if r == orbit.r_trap { 0.0 } else { sign * mag })
}

/// ROT covector (ξ_τ, ξ_r, ξ_ψ, ξ_θ) at (r, θ) with the given BL constants,
/// ξ_θ ≥ 0 chosen to make the wave symbol vanish. `None` when no real
/// solution exists.
pub fn characteristic_covector(st: &Spacetime, xi_t: f64, xi_phi: f64, r: f64, theta: f64, xi_r: f64) -> Option<[f64; 4]> {
    let k = st.rotation_rate();
    let xi = [xi_t + k * xi_phi, xi_r, xi_phi, 0.0];
    let q0 = wave_symbol_grad(st, r, theta, &xi).value;
    let c = st.params.c_theta(theta);
    let s = -q0 / c;
    if s < 0.0 {
        return None;
    }
    Some([xi[0], xi_r, xi_phi, s.sqrt()])
}

/// Rank data of (d(r - r_trap), dξ_r, dq) at sampled points of Γ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaRankReport {
    pub n_points: usize,
    /// Largest |∂q/∂r| relative to the gradient norm.
    pub max_dq_dr: f64,
    /// Smallest third singular value of the normalized 3×8 gradient matrix.
    pub min_singular: f64,
    pub pass: bool,
}

pub fn gamma_rank_check(st: &Spacetime, orbit: &TrappedOrbit, thetas: &[f64]) -> Result<GammaRankReport> {
    if !orbit.has_trapped_radius() {
        return Err(KdsError::DomainError("orbit has no trapped radius".into()));
    }
    let mut n = 0;
    let mut max_dq_dr: f64 = 0.0;
    let mut min_sv = f64::INFINITY;
    for &th in thetas {
        let Some(xi) = characteristic_covector(st, orbit.xi_t, orbit.xi_phi, orbit.r_trap, th, 0.0) else {
            continue;
        };
        let g = wave_symbol_grad(st, orbit.r_trap, th, &xi);
        let dq = [g.dx[0], g.dx[1], g.dx[2], g.dx[3], g.dxi[0], g.dxi[1], g.dxi[2], g.dxi[3]];
        let norm = dq.iter().map(|v| v * v).sum::<f64>().sqrt();
        max_dq_dr = max_dq_dr.max(g.dx[1].abs() / norm);
        let mut m = SMatrix::<f64, 3, 8>::zeros();
        m[(0, 1)] = 1.0;
        m[(1, 5)] = 1.0;
        for j in 0..8 {
            m[(2, j)] = dq[j] / norm;
        }
        let sv = m.singular_values();
        min_sv = min_sv.min(sv.min());
        n += 1;
    }
    Ok(GammaRankReport {
        n_points: n,
        max_dq_dr,
        min_singular: min_sv,
        pass: n > 0 && max_dq_dr <= 1e-9 && min_sv > 1e-8,
    })
}

/// Membership test for Γ at a ROT state (τ, r, ψ, θ | ξ_τ, ξ_r, ξ_ψ, ξ_θ).
pub fn on_gamma(st: &Spacetime, orbit: &TrappedOrbit, state: &[f64; 8], tol: f64) -> bool {
    let xi = [state[4], state[5], state[6], state[7]];
    let n = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
    let q = wave_symbol_grad(st, state[1], state[3], &xi).value;
    (state[1] - orbit.r_trap).abs() <= tol * orbit.r_trap && state[5].abs() <= tol * n && q.abs() <= tol * n * n
}

/// One row of a trapping scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub xi_t: f64,
    pub xi_phi: f64,
    pub case: TrapCase,
    pub r_trap: f64,
    pub f_pp: f64,
    pub rate_equator: f64,
}

pub fn scan_row(st: &Spacetime, xi_t: f64, xi_phi: f64, root_tol: f64) -> Result<ScanRow> {
    let o = trapped_radius(st, xi_t, xi_phi, root_tol)?;
    Ok(ScanRow {
        xi_t,
        xi_phi,
        case: o.case,
        r_trap: o.r_trap,
        f_pp: o.f_pp,
        rate_equator: o.normal_rate(st, std::f64::consts::FRAC_PI_2),
    })
}

/// (cos θ_j, sin θ_j) on the unit circle, skipping the origin by construction.
pub fn unit_circle(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|j| {
            let t = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
            let (s, c) = t.sin_cos();
            // exact zeros on the axes
            let snap = |v: f64| if v.abs() < 1e-15 { 0.0 } else { v };
            (snap(c), snap(s))
        })
        .collect()
}
