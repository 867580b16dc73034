//! Metric and dual metric in the four charts, the principal symbols of the
//! wave and mode operators with their gradients, and the S± splitting of
//! the characteristic set.
//!
//! All dual metrics share one shape. Writing X = x·ξ and Y = y·ξ,
//!
//! ```text
//! ρ² G(ξ, ξ) = μ ξ_r² - 2 b f X ξ_r + c ξ_θ² + (b²/(c sin²θ)) Y² - b² Q X²
//! ```
//!
//! with f = 0, Q = 1/μ in BL/ROT and f the extension function,
//! Q = (1 - f²)/μ in STAR/STARROT. In the non-rotating charts
//! x = (r² + a², 0, a, 0) and y = (a sin²θ, 0, 1, 0); the rotating charts
//! replace the angular entries by a(r₀² - r²)/(r₀² + a²) and
//! (r₀² + a² cos²θ)/(r₀² + a²).

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use crate::charts::{Chart, ChartPoint, Covector, ExtensionProfile};
use crate::config::Tolerances;
use crate::error::{KdsError, Result};
use crate::radial::Spacetime;

/// θ-dependent building blocks.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Angular {
    pub c: f64,
    pub dc: f64,
    pub sin: f64,
    pub cos: f64,
    /// c sin²θ and its θ-derivative.
    pub cs2: f64,
    pub dcs2: f64,
    /// (r₀² + a² cos²θ)/(r₀² + a²) and its θ-derivative.
    pub n: f64,
    pub dn: f64,
}

impl Angular {
    pub fn new(st: &Spacetime, theta: f64) -> Self {
        let p = &st.params;
        let a2 = p.spin * p.spin;
        let r02 = st.horizons.r0 * st.horizons.r0;
        let (sin, cos) = theta.sin_cos();
        let c = p.c_theta(theta);
        let dc = p.c_theta_prime(theta);
        let cs2 = c * sin * sin;
        let dcs2 = dc * sin * sin + 2.0 * c * sin * cos;
        Self {
            c,
            dc,
            sin,
            cos,
            cs2,
            dcs2,
            n: (r02 + a2 * cos * cos) / (r02 + a2),
            dn: -2.0 * a2 * cos * sin / (r02 + a2),
        }
    }

    /// N²/(c sin²θ), the ψ-weight of the Carter constant divided by b².
    pub fn p(&self) -> f64 {
        self.n * self.n / self.cs2
    }

    pub fn dp(&self) -> f64 {
        2.0 * self.n * self.dn / self.cs2 - self.n * self.n * self.dcs2 / (self.cs2 * self.cs2)
    }
}

/// (r₀² - r²)/(r₀² + a²).
pub(crate) fn kappa_psi(st: &Spacetime, r: f64) -> f64 {
    let r0 = st.horizons.r0;
    (r0 * r0 - r * r) / (r0 * r0 + st.params.spin.powi(2))
}

pub(crate) fn kappa_psi_prime(st: &Spacetime, r: f64) -> f64 {
    let r0 = st.horizons.r0;
    -2.0 * r / (r0 * r0 + st.params.spin.powi(2))
}

/// Linear forms x, y with X = x·ξ, Y = y·ξ in the given chart.
fn frame_forms(st: &Spacetime, chart: Chart, r: f64, ang: &Angular) -> ([f64; 4], [f64; 4]) {
    let a = st.params.spin;
    let s2 = ang.sin * ang.sin;
    if chart.is_rotating() {
        ([r * r + a * a, 0.0, a * kappa_psi(st, r), 0.0], [a * s2, 0.0, ang.n, 0.0])
    } else {
        ([r * r + a * a, 0.0, a, 0.0], [a * s2, 0.0, 1.0, 0.0])
    }
}

fn dot(u: &[f64; 4], v: &[f64; 4]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Components of g and of the dual metric G at a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricEval {
    pub chart: Chart,
    pub g: [[f64; 4]; 4],
    pub dual: [[f64; 4]; 4],
    pub rho2: f64,
}

impl MetricEval {
    pub fn g_matrix(&self) -> Matrix4<f64> {
        Matrix4::from_fn(|i, j| self.g[i][j])
    }

    pub fn dual_matrix(&self) -> Matrix4<f64> {
        Matrix4::from_fn(|i, j| self.dual[i][j])
    }

    /// G(ξ, ξ).
    pub fn dual_norm(&self, xi: &[f64; 4]) -> f64 {
        let mut s = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                s += self.dual[i][j] * xi[i] * xi[j];
            }
        }
        s
    }

    /// Number of negative and positive eigenvalues of g.
    pub fn signature(&self) -> (usize, usize) {
        let eig = self.g_matrix().symmetric_eigen();
        let neg = eig.eigenvalues.iter().filter(|v| **v < 0.0).count();
        let pos = eig.eigenvalues.iter().filter(|v| **v > 0.0).count();
        (neg, pos)
    }
}

/// Coefficients (f, Q) of the dual metric shape; Q = 1/μ or (1 - f²)/μ.
fn star_terms(profile: &ExtensionProfile, chart: Chart, r: f64) -> (f64, f64) {
    if chart.is_star() {
        (profile.f(r), profile.one_minus_f2_over_mu(r))
    } else {
        (0.0, 1.0 / profile.spacetime.params.mu(r))
    }
}

pub fn metric_components(profile: &ExtensionProfile, point: &ChartPoint) -> Result<MetricEval> {
    crate::charts::ChartMaps::new(profile).check_domain(point)?;
    let st = &profile.spacetime;
    let p = &st.params;
    let (r, theta) = (point.r(), point.theta());
    let a = p.spin;
    let b = p.b();
    let ang = Angular::new(st, theta);
    let rho2 = p.rho2(r, theta);
    let mu = p.mu(r);
    let s2 = ang.sin * ang.sin;
    let (f, q) = star_terms(profile, point.chart, r);

    // g in the non-rotating chart, coordinates (time, r, angle, θ)
    let tform = [1.0, 0.0, -a * s2, 0.0];
    let zform = [a, 0.0, -(r * r + a * a), 0.0];
    let mut g = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            g[i][j] = -mu / (b * b * rho2) * tform[i] * tform[j] + ang.cs2 / (b * b * rho2) * zform[i] * zform[j];
        }
    }
    // dt - a sin²θ dφ picks up (b f ρ²/μ) dr in the star charts
    for i in 0..4 {
        g[i][1] += -f / b * tform[i];
        g[1][i] += -f / b * tform[i];
    }
    g[1][1] = rho2 * q;
    g[3][3] = rho2 / ang.c;
    if point.chart.is_rotating() {
        let k = st.rotation_rate();
        let mut jac = Matrix4::<f64>::identity();
        jac[(2, 0)] = k;
        let gm = Matrix4::from_fn(|i, j| g[i][j]);
        let gr = jac.transpose() * gm * jac;
        for i in 0..4 {
            for j in 0..4 {
                g[i][j] = gr[(i, j)];
            }
        }
    }

    let (x, y) = frame_forms(st, point.chart, r, &ang);
    let er = [0.0, 1.0, 0.0, 0.0];
    let eth = [0.0, 0.0, 0.0, 1.0];
    let mut dual = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            dual[i][j] = (mu * er[i] * er[j] - b * f * (x[i] * er[j] + er[i] * x[j])
                + ang.c * eth[i] * eth[j]
                + b * b / ang.cs2 * y[i] * y[j]
                - b * b * q * x[i] * x[j])
                / rho2;
        }
    }
    Ok(MetricEval {
        chart: point.chart,
        g,
        dual,
        rho2,
    })
}

/// ρ² G(ξ, ξ) in any chart from the shared shape, without building matrices.
pub fn conformal_dual_norm(profile: &ExtensionProfile, chart: Chart, r: f64, theta: f64, xi: &[f64; 4]) -> f64 {
    let st = &profile.spacetime;
    let p = &st.params;
    let b = p.b();
    let ang = Angular::new(st, theta);
    let (x, y) = frame_forms(st, chart, r, &ang);
    let (f, q) = star_terms(profile, chart, r);
    let xx = dot(&x, xi);
    let yy = dot(&y, xi);
    p.mu(r) * xi[1] * xi[1] - 2.0 * b * f * xx * xi[1] + ang.c * xi[3] * xi[3] + b * b / ang.cs2 * yy * yy
        - b * b * q * xx * xx
}

/// Gradient of a symbol in the layout (time, r, angle, θ | ξ_time, ξ_r, ξ_angle, ξ_θ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymbolGrad {
    pub value: f64,
    pub dx: [f64; 4],
    pub dxi: [f64; 4],
}

/// Wave symbol q = ρ² G(ξ, ξ) in ROT variables, written with the co-rotating
/// shift k = a/(r₀² + a²) made explicit:
///
/// ```text
/// X = (r² + a²)(ξ_τ - k ξ_ψ) + a ξ_ψ,   Y = a sin²θ (ξ_τ - k ξ_ψ) + ξ_ψ
/// ```
pub fn wave_symbol_q(st: &Spacetime, r: f64, theta: f64, xi: &[f64; 4]) -> f64 {
    let p = &st.params;
    let a = p.spin;
    let b = p.b();
    let k = st.rotation_rate();
    let s = theta.sin();
    let ct = p.c_theta(theta);
    let xt = xi[0] - k * xi[2];
    let x = (r * r + a * a) * xt + a * xi[2];
    let y = a * s * s * xt + xi[2];
    let mu = p.mu(r);
    mu * xi[1] * xi[1] + ct * xi[3] * xi[3] + b * b / (ct * s * s) * y * y - b * b / mu * x * x
}

/// Wave symbol in ROT with its full gradient.
pub fn wave_symbol_grad(st: &Spacetime, r: f64, theta: f64, xi: &[f64; 4]) -> SymbolGrad {
    let p = &st.params;
    let a = p.spin;
    let b2 = p.b() * p.b();
    let ang = Angular::new(st, theta);
    let kp = kappa_psi(st, r);
    let dkp = kappa_psi_prime(st, r);
    let s2 = ang.sin * ang.sin;
    let [xt, xr, xp, xth] = *xi;
    let x = (r * r + a * a) * xt + a * kp * xp;
    let y = a * s2 * xt + ang.n * xp;
    let mu = p.mu(r);
    let dmu = p.mu_prime(r);
    let value = mu * xr * xr + ang.c * xth * xth + b2 / ang.cs2 * y * y - b2 / mu * x * x;
    let x_r = 2.0 * r * xt + a * dkp * xp;
    let y_th = 2.0 * a * ang.sin * ang.cos * xt + ang.dn * xp;
    let dr = dmu * xr * xr - b2 * (2.0 * x * x_r / mu - x * x * dmu / (mu * mu));
    let dth = ang.dc * xth * xth + b2 * (2.0 * y * y_th / ang.cs2 - y * y * ang.dcs2 / (ang.cs2 * ang.cs2));
    let dxt = 2.0 * b2 / ang.cs2 * y * a * s2 - 2.0 * b2 / mu * x * (r * r + a * a);
    let dxp = 2.0 * b2 / ang.cs2 * y * ang.n - 2.0 * b2 / mu * x * a * kp;
    SymbolGrad {
        value,
        dx: [0.0, dr, 0.0, dth],
        dxi: [dxt, 2.0 * mu * xr, dxp, 2.0 * ang.c * xth],
    }
}

/// Coefficient of ξ_ψ² in the ROT mode symbol.
pub fn mode_psi_coefficient(st: &Spacetime, r: f64, theta: f64) -> f64 {
    let p = &st.params;
    let a2 = p.spin * p.spin;
    let b2 = p.b() * p.b();
    let r0 = st.horizons.r0;
    let d = r0 * r0 + a2;
    let (s, c) = theta.sin_cos();
    let ct = p.c_theta(theta);
    b2 / (d * d) * ((r0 * r0 + a2 * c * c).powi(2) / (ct * s * s) - a2 * (r0 * r0 - r * r).powi(2) / p.mu(r))
}

/// Principal symbol of the mode operator, covector (ξ_r, ξ_ψ, ξ_θ).
pub fn mode_symbol_q(profile: &ExtensionProfile, r: f64, theta: f64, xi: &[f64; 3], chart: Chart) -> Result<f64> {
    match chart {
        Chart::Rot => Ok(mode_rot_grad(&profile.spacetime, r, theta, xi).value),
        Chart::StarRot => Ok(mode_starrot_grad(profile, r, theta, xi).value),
        other => Err(KdsError::ChartDomainError(format!(
            "mode symbol is defined in the rotating charts, not {other}"
        ))),
    }
}

/// ROT mode symbol μξ_r² + cξ_θ² + C_ψ ξ_ψ² and its gradient.
pub fn mode_rot_grad(st: &Spacetime, r: f64, theta: f64, xi: &[f64; 3]) -> SymbolGrad {
    let p = &st.params;
    let a2 = p.spin * p.spin;
    let b2 = p.b() * p.b();
    let ang = Angular::new(st, theta);
    let kp = kappa_psi(st, r);
    let dkp = kappa_psi_prime(st, r);
    let mu = p.mu(r);
    let dmu = p.mu_prime(r);
    let [xr, xp, xth] = *xi;
    let cpsi = b2 * ang.p() - b2 * a2 * kp * kp / mu;
    let dcpsi_r = -b2 * a2 * (2.0 * kp * dkp / mu - kp * kp * dmu / (mu * mu));
    SymbolGrad {
        value: mu * xr * xr + ang.c * xth * xth + cpsi * xp * xp,
        dx: [0.0, dmu * xr * xr + dcpsi_r * xp * xp, 0.0, ang.dc * xth * xth + b2 * ang.dp() * xp * xp],
        dxi: [0.0, 2.0 * mu * xr, 2.0 * cpsi * xp, 2.0 * ang.c * xth],
    }
}

/// STARROT mode symbol
/// μξ_r² - 2abfκ_ψ ξ_ψ ξ_r + cξ_θ² + b²(P - a²Aκ_ψ²) ξ_ψ² and its gradient.
pub fn mode_starrot_grad(profile: &ExtensionProfile, r: f64, theta: f64, xi: &[f64; 3]) -> SymbolGrad {
    let st = &profile.spacetime;
    let p = &st.params;
    let a = p.spin;
    let a2 = a * a;
    let b = p.b();
    let b2 = b * b;
    let ang = Angular::new(st, theta);
    let kp = kappa_psi(st, r);
    let dkp = kappa_psi_prime(st, r);
    let mu = p.mu(r);
    let dmu = p.mu_prime(r);
    let f = profile.f(r);
    let df = profile.f_prime(r);
    let aa = profile.one_minus_f2_over_mu(r);
    let daa = profile.one_minus_f2_over_mu_prime(r);
    let [xr, xp, xth] = *xi;
    let cross = 2.0 * a * b * f * kp;
    let cpsi = b2 * ang.p() - b2 * a2 * aa * kp * kp;
    let dcross = 2.0 * a * b * (df * kp + f * dkp);
    let dcpsi_r = -b2 * a2 * (daa * kp * kp + 2.0 * aa * kp * dkp);
    SymbolGrad {
        value: mu * xr * xr - cross * xp * xr + ang.c * xth * xth + cpsi * xp * xp,
        dx: [
            0.0,
            dmu * xr * xr - dcross * xp * xr + dcpsi_r * xp * xp,
            0.0,
            ang.dc * xth * xth + b2 * ang.dp() * xp * xp,
        ],
        dxi: [0.0, 2.0 * mu * xr - cross * xp, -cross * xr + 2.0 * cpsi * xp, 2.0 * ang.c * xth],
    }
}

/// Lower bounds of the three diagonal coefficients of the mode symbol at r₀.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DefinitenessReport {
    pub mu_r0: f64,
    pub min_c: f64,
    pub min_psi_coefficient: f64,
    pub min_coefficient: f64,
    /// a²(r₀² - r²)²/μ at r = r₀; zero.
    pub radial_probe: f64,
    pub pass: bool,
}

pub fn r0_definiteness_check(st: &Spacetime, n_theta: usize) -> DefinitenessReport {
    let r0 = st.horizons.r0;
    let tmin = Tolerances::default().pole_margin;
    let n = n_theta.max(2);
    let mut min_c = f64::INFINITY;
    let mut min_psi = f64::INFINITY;
    for j in 0..n {
        let th = tmin + (std::f64::consts::PI - 2.0 * tmin) * j as f64 / (n - 1) as f64;
        min_c = min_c.min(st.params.c_theta(th));
        min_psi = min_psi.min(mode_psi_coefficient(st, r0, th));
    }
    let mu_r0 = st.params.mu(r0);
    let kp = kappa_psi(st, r0);
    let min_coefficient = mu_r0.min(min_c).min(min_psi);
    DefinitenessReport {
        mu_r0,
        min_c,
        min_psi_coefficient: min_psi,
        min_coefficient,
        radial_probe: st.params.spin.powi(2) * kp * kp / mu_r0,
        pass: min_coefficient > 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SClass {
    Plus,
    Minus,
}

/// ρ² G*(dτ*, ξ) for ξ in STARROT components.
pub fn time_pairing(profile: &ExtensionProfile, r: f64, theta: f64, xi: &[f64; 4]) -> f64 {
    let st = &profile.spacetime;
    let p = &st.params;
    let b = p.b();
    let a2 = p.spin * p.spin;
    let ang = Angular::new(st, theta);
    let (x, y) = frame_forms(st, Chart::StarRot, r, &ang);
    let xx = dot(&x, xi);
    let yy = dot(&y, xi);
    let f = profile.f(r);
    let q = profile.one_minus_f2_over_mu(r);
    let s2 = ang.sin * ang.sin;
    -b * f * (r * r + a2) * xi[1] + b * b / ang.cs2 * p.spin * s2 * yy - b * b * q * (r * r + a2) * xx
}

/// Sign of G*(dτ*, ξ) on the characteristic set.
pub fn classify_s_pm(profile: &ExtensionProfile, point: &ChartPoint, xi: &Covector, char_tol: f64) -> Result<SClass> {
    if point.chart != Chart::StarRot || xi.chart != Chart::StarRot {
        return Err(KdsError::ChartDomainError("S± classification expects STARROT data".into()));
    }
    crate::charts::ChartMaps::new(profile).check_domain(point)?;
    let (r, th) = (point.r(), point.theta());
    let n2 = xi.xi.iter().map(|v| v * v).sum::<f64>();
    let q = conformal_dual_norm(profile, Chart::StarRot, r, th, &xi.xi);
    let tol = char_tol * n2;
    if q.abs() > tol {
        return Err(KdsError::NotCharacteristic { value: q.abs(), tolerance: tol });
    }
    let pairing = time_pairing(profile, r, th, &xi.xi);
    if pairing.abs() <= char_tol * n2.sqrt() {
        return Err(KdsError::DegenerateClassification { pairing });
    }
    Ok(if pairing > 0.0 { SClass::Plus } else { SClass::Minus })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charts::{build_extension, default_delta, ChartMaps};
    use approx::assert_relative_eq;

    fn setup(l: f64, m: f64, a: f64) -> ExtensionProfile {
        let st = Spacetime::from_triple(l, m, a).unwrap();
        build_extension(&st, default_delta(&st)).unwrap()
    }

    #[test]
    fn schwarzschild_de_sitter_metric_is_diagonal() {
        let prof = setup(0.06, 1.0, 0.0);
        let pt = ChartPoint::new(Chart::Bl, [0.0, 3.0, 0.0, 1.2]);
        let m = metric_components(&prof, &pt).unwrap();
        let mu = 1.38;
        assert_relative_eq!(m.g[0][0], -mu / 9.0, max_relative = 1e-13);
        assert_relative_eq!(m.g[1][1], 9.0 / mu, max_relative = 1e-13);
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!(m.g[i][j].abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn metric_inverts_dual_in_every_chart() {
        let prof = setup(0.02, 1.0, 0.9);
        let h = prof.spacetime.horizons;
        for chart in Chart::ALL {
            let rs: Vec<f64> = if chart.is_star() {
                vec![h.r_e, h.r_c, h.r_e - 0.5 * prof.delta, 2.2]
            } else {
                vec![1.9, 2.2, h.r0, 7.5]
            };
            for r in rs {
                for th in [0.3, 1.0, 1.4, 2.6] {
                    let m = metric_components(&prof, &ChartPoint::new(chart, [0.0, r, 0.0, th])).unwrap();
                    let prod = m.g_matrix() * m.dual_matrix();
                    let err = (prod - Matrix4::identity()).abs().max();
                    assert!(err < 1e-12, "{chart} r={r} θ={th}: {err:e}");
                    assert_eq!(m.signature(), (1, 3));
                    assert!(m.g_matrix().determinant() < 0.0);
                }
            }
        }
    }

    #[test]
    fn star_metric_finite_at_event_horizon() {
        let prof = setup(0.02, 1.0, 0.9);
        let r = prof.spacetime.horizons.r_e;
        let m = metric_components(&prof, &ChartPoint::new(Chart::Star, [0.0, r, 0.0, 1.0])).unwrap();
        assert!(m.g.iter().flatten().all(|v| v.is_finite()));
        assert!(m.g_matrix().determinant() < 0.0);
    }

    #[test]
    fn wave_symbol_matches_dual_metric() {
        let prof = setup(0.02, 1.0, 0.9);
        let st = prof.spacetime;
        let xi = [0.7, -0.4, 1.3, 0.25];
        for (r, th) in [(2.0, 0.7), (3.3, 1.57), (6.0, 2.2)] {
            let m = metric_components(&prof, &ChartPoint::new(Chart::Rot, [0.0, r, 0.0, th])).unwrap();
            let q = wave_symbol_q(&st, r, th, &xi);
            assert_relative_eq!(q, m.rho2 * m.dual_norm(&xi), max_relative = 1e-12);
            assert_relative_eq!(wave_symbol_grad(&st, r, th, &xi).value, q, max_relative = 1e-12);
        }
    }

    #[test]
    fn wave_symbol_null_example() {
        let st = Spacetime::from_triple(0.06, 1.0, 0.0).unwrap();
        let xth = 9.0 / 1.38f64.sqrt();
        let q = wave_symbol_q(&st, 3.0, std::f64::consts::FRAC_PI_2, &[1.0, 0.0, 0.0, xth]);
        assert!(q.abs() < 1e-12);
        assert!((xth - 7.6615).abs() < 1e-3);
        assert_eq!(wave_symbol_q(&st, 3.0, 1.0, &[0.0; 4]), 0.0);
    }

    fn fd_check(f: impl Fn(&[f64; 8]) -> f64, z: [f64; 8], grad: [f64; 8]) {
        for i in 0..8 {
            let h = 1e-5 * z[i].abs().max(1.0);
            let mut zp = z;
            let mut zm = z;
            zp[i] += h;
            zm[i] -= h;
            let d1 = (f(&zp) - f(&zm)) / (2.0 * h);
            zp[i] = z[i] + h / 2.0;
            zm[i] = z[i] - h / 2.0;
            let d2 = (f(&zp) - f(&zm)) / h;
            let rich = (4.0 * d2 - d1) / 3.0;
            assert!((rich - grad[i]).abs() <= 1e-7 * grad[i].abs().max(1.0), "component {i}: {rich} vs {}", grad[i]);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let prof = setup(0.02, 1.0, 0.9);
        let st = prof.spacetime;
        let z = [0.0, 2.4, 0.0, 1.1, -0.6, 0.8, 1.4, -0.3];
        let g = wave_symbol_grad(&st, z[1], z[3], &[z[4], z[5], z[6], z[7]]);
        fd_check(
            |w| wave_symbol_grad(&st, w[1], w[3], &[w[4], w[5], w[6], w[7]]).value,
            z,
            [g.dx[0], g.dx[1], g.dx[2], g.dx[3], g.dxi[0], g.dxi[1], g.dxi[2], g.dxi[3]],
        );
        let g = mode_rot_grad(&st, z[1], z[3], &[z[5], z[6], z[7]]);
        fd_check(
            |w| mode_rot_grad(&st, w[1], w[3], &[w[5], w[6], w[7]]).value,
            z,
            [0.0, g.dx[1], 0.0, g.dx[3], 0.0, g.dxi[1], g.dxi[2], g.dxi[3]],
        );
        let r = st.horizons.r_e;
        let z2 = [0.0, r, 0.0, 1.1, 0.0, 0.8, 1.4, -0.3];
        let g = mode_starrot_grad(&prof, r, z2[3], &[z2[5], z2[6], z2[7]]);
        fd_check(
            |w| mode_starrot_grad(&prof, w[1], w[3], &[w[5], w[6], w[7]]).value,
            z2,
            [0.0, g.dx[1], 0.0, g.dx[3], 0.0, g.dxi[1], g.dxi[2], g.dxi[3]],
        );
    }

    #[test]
    fn mode_symbol_charts_agree() {
        let prof = setup(0.02, 1.0, 0.9);
        let maps = ChartMaps::new(&prof);
        for (r, th) in [(1.9, 0.8), (3.0, 1.4), (7.0, 2.0)] {
            let xi = [0.0, 0.45, -1.1, 0.6];
            let pt = ChartPoint::new(Chart::Rot, [0.0, r, 0.0, th]);
            let q_rot = mode_symbol_q(&prof, r, th, &[xi[1], xi[2], xi[3]], Chart::Rot).unwrap();
            let eta = maps.covector(&pt, &Covector::new(Chart::Rot, xi), Chart::StarRot).unwrap();
            assert!(eta.xi[0].abs() < 1e-15);
            let q_star = mode_symbol_q(&prof, r, th, &[eta.xi[1], eta.xi[2], eta.xi[3]], Chart::StarRot).unwrap();
            assert_relative_eq!(q_rot, q_star, max_relative = 1e-12, epsilon = 1e-12);
            assert_relative_eq!(mode_psi_coefficient(&prof.spacetime, r, th) * 1.21 + 0.36 * prof.spacetime.params.c_theta(th) + prof.spacetime.params.mu(r) * 0.2025, q_rot, max_relative = 1e-12);
        }
        assert!(mode_symbol_q(&prof, 3.0, 1.0, &[1.0, 0.0, 0.0], Chart::Bl).is_err());
    }

    #[test]
    fn mode_symbol_without_angular_momentum() {
        let prof = setup(0.02, 1.0, 0.9);
        let p = prof.spacetime.params;
        for chart in [Chart::Rot, Chart::StarRot] {
            let q = mode_symbol_q(&prof, 3.0, 1.0, &[0.5, 0.0, 2.0], chart).unwrap();
            assert_relative_eq!(q, p.mu(3.0) * 0.25 + p.c_theta(1.0) * 4.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn definiteness_at_r0() {
        for (l, m, a) in [(0.06, 1.0, 0.0), (0.02, 1.0, 0.9)] {
            let st = Spacetime::from_triple(l, m, a).unwrap();
            let rep = r0_definiteness_check(&st, 257);
            assert!(rep.pass, "{rep:?}");
            assert_eq!(rep.radial_probe, 0.0);
        }
    }

    #[test]
    fn conormal_at_event_horizon_is_plus() {
        let prof = setup(0.02, 1.0, 0.9);
        let r = prof.spacetime.horizons.r_e;
        let pt = ChartPoint::new(Chart::StarRot, [0.0, r, 0.0, 1.0]);
        let xi = Covector::new(Chart::StarRot, [0.0, 1.0, 0.0, 0.0]);
        let tol = Tolerances::default().char_tol;
        assert_eq!(classify_s_pm(&prof, &pt, &xi, tol).unwrap(), SClass::Plus);
        let neg = Covector::new(Chart::StarRot, [0.0, -1.0, 0.0, 0.0]);
        assert_eq!(classify_s_pm(&prof, &pt, &neg, tol).unwrap(), SClass::Minus);
        let b = prof.spacetime.params.b();
        assert_relative_eq!(time_pairing(&prof, r, 1.0, &xi.xi), b * (r * r + 0.81), max_relative = 1e-12);
        let off = Covector::new(Chart::StarRot, [0.0, 1.0, 0.0, 1.0]);
        assert!(matches!(classify_s_pm(&prof, &pt, &off, tol), Err(KdsError::NotCharacteristic { .. })));
    }

    #[test]
    fn pairing_matches_dual_matrix() {
        let prof = setup(0.02, 1.0, 0.9);
        let xi = [0.3, -0.2, 0.9, 0.4];
        let (r, th) = (2.5, 1.2);
        let m = metric_components(&prof, &ChartPoint::new(Chart::StarRot, [0.0, r, 0.0, th])).unwrap();
        let pairing: f64 = (0..4).map(|j| m.dual[0][j] * xi[j]).sum::<f64>() * m.rho2;
        assert_relative_eq!(time_pairing(&prof, r, th, &xi), pairing, max_relative = 1e-12);
        assert_relative_eq!(
            conformal_dual_norm(&prof, Chart::StarRot, r, th, &xi),
            m.rho2 * m.dual_norm(&xi),
            max_relative = 1e-12
        );
    }
}
