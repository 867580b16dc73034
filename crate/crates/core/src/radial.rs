//! Horizon radii, the critical radius r₀, surface-gravity weights, the
//! admissible Λ-interval, and the quartic `h` whose negativity on the
//! domain of outer communication drives the trapping analysis.

use serde::{Deserialize, Serialize};

use crate::config::Tolerances;
use crate::error::{KdsError, Result};
use crate::numeric::{bisect, golden_max};
use crate::params::{discriminant, SpacetimeParams};

/// The four roots of μ, the maximum point r₀ of μ between the outer two,
/// and the weights β_e, β_c, β.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonData {
    pub r_minus: f64,
    pub r_cauchy: f64,
    pub r_e: f64,
    pub r_c: f64,
    pub r0: f64,
    pub beta_e: f64,
    pub beta_c: f64,
    pub beta: f64,
}

impl HorizonData {
    pub fn roots(&self) -> [f64; 4] {
        [self.r_minus, self.r_cauchy, self.r_e, self.r_c]
    }

    /// |μ(rᵢ)| / max(1, rᵢ⁴Λ) for each stored root.
    pub fn scaled_residuals(&self, p: &SpacetimeParams) -> [f64; 4] {
        self.roots()
            .map(|r| p.mu(r).abs() / (r.powi(4) * p.lambda).max(1.0))
    }

    /// Violated invariants, empty when all hold.
    pub fn invariant_violations(&self, p: &SpacetimeParams, residual_tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        let [a, b, c, d] = self.roots();
        if !(a < b && b < c && c < d) {
            out.push(format!("roots not strictly ordered: {a} {b} {c} {d}"));
        }
        for (i, res) in self.scaled_residuals(p).iter().enumerate() {
            if *res > residual_tol {
                out.push(format!("root {i} residual {res:e}"));
            }
        }
        if !(self.r_e < self.r0 && self.r0 < self.r_c) {
            out.push(format!("r0 = {} not inside (r_e, r_c)", self.r0));
        }
        if p.mu_second(self.r0) >= 0.0 {
            out.push("r0 is not a maximum of μ".into());
        }
        if p.mu_prime(self.r_e) <= 0.0 || p.mu_prime(self.r_c) >= 0.0 {
            out.push("wrong sign of μ' at a horizon".into());
        }
        for i in 1..64 {
            let r = self.r_e + (self.r_c - self.r_e) * i as f64 / 64.0;
            if p.mu(r) <= 0.0 {
                out.push(format!("μ({r}) <= 0 between the horizons"));
                break;
            }
        }
        if !(self.beta_e > 0.0 && self.beta_c > 0.0) || self.beta != self.beta_e.max(self.beta_c) {
            out.push("β weights invalid".into());
        }
        out
    }
}

/// Validated parameters bundled with their horizon data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spacetime {
    pub params: SpacetimeParams,
    pub horizons: HorizonData,
}

impl Spacetime {
    pub fn new(params: SpacetimeParams) -> Result<Self> {
        let horizons = horizon_data(&params)?;
        Ok(Self { params, horizons })
    }

    pub fn from_triple(lambda: f64, mass: f64, spin: f64) -> Result<Self> {
        Self::new(SpacetimeParams::validated(lambda, mass, spin)?)
    }

    /// Angular speed a/(r₀² + a²) of the co-rotating frame.
    pub fn rotation_rate(&self) -> f64 {
        let a = self.params.spin;
        a / (self.horizons.r0 * self.horizons.r0 + a * a)
    }

    /// μ(r) / ((r - r_e)(r_c - r)) = (Λ/3)(r - r₋)(r - r_C), positive for r > r_C.
    pub fn mu_reduced(&self, r: f64) -> f64 {
        let h = &self.horizons;
        self.params.lambda / 3.0 * (r - h.r_minus) * (r - h.r_cauchy)
    }

    pub fn mu_reduced_prime(&self, r: f64) -> f64 {
        let h = &self.horizons;
        self.params.lambda / 3.0 * (2.0 * r - h.r_minus - h.r_cauchy)
    }
}

fn newton_polish<F: Fn(f64) -> f64, D: Fn(f64) -> f64>(f: F, df: D, r: f64, lo: f64, hi: f64) -> f64 {
    let fr = f(r);
    let d = df(r);
    if d == 0.0 || fr == 0.0 {
        return r;
    }
    let cand = r - fr / d;
    if cand >= lo && cand <= hi && f(cand).abs() <= fr.abs() {
        cand
    } else {
        r
    }
}

/// Isolates the four roots of μ between its critical points.
///
/// μ'' has the closed-form zeros ±s, s = √((1-γ)/(2Λ)), which separate the
/// three zeros c₁ < c₂ < c₃ of μ'; those in turn separate the four zeros of μ.
/// The outermost brackets are grown from R = 2√(3/Λ) by doubling.
pub fn horizon_data(p: &SpacetimeParams) -> Result<HorizonData> {
    p.require_subextremal()?;
    horizon_data_with(p, &Tolerances::default())
}

pub fn horizon_data_with(p: &SpacetimeParams, tol: &Tolerances) -> Result<HorizonData> {
    p.require_subextremal()?;
    let rt = tol.root_tol;
    let s = (p.one_minus_gamma() / (2.0 * p.lambda)).sqrt();
    let fail = |msg: &str| KdsError::RootIsolationFailure(msg.to_string());
    if !(p.mu_prime(-s) < 0.0 && p.mu_prime(s) > 0.0) {
        return Err(fail("μ' does not have three real zeros"));
    }
    let mut big = 2.0 * (3.0 / p.lambda).sqrt();
    let mut grown = 0;
    while !(p.mu(-big) < 0.0 && p.mu(big) < 0.0 && p.mu_prime(-big) > 0.0 && p.mu_prime(big) < 0.0) {
        big *= 2.0;
        grown += 1;
        if grown > 60 {
            return Err(fail("could not bound the roots"));
        }
    }
    let dmu = |r: f64| p.mu_prime(r);
    let ddmu = |r: f64| p.mu_second(r);
    let crit = |lo: f64, hi: f64| {
        let c = bisect(dmu, lo, hi, rt);
        newton_polish(dmu, ddmu, c, lo, hi)
    };
    let c1 = crit(-big, -s);
    let c2 = crit(-s, s);
    let c3 = crit(s, big);
    if !(p.mu(c1) > 0.0 && p.mu(c2) < 0.0 && p.mu(c3) > 0.0) {
        return Err(fail("critical values of μ do not alternate in sign"));
    }
    let mu = |r: f64| p.mu(r);
    let root = |lo: f64, hi: f64| {
        let r = bisect(mu, lo, hi, rt);
        newton_polish(mu, dmu, r, lo, hi)
    };
    let r_minus = root(-big, c1);
    let r_cauchy = root(c1, c2);
    let r_e = root(c2, c3);
    let r_c = root(c3, big);
    let b = p.b();
    let a2 = p.spin * p.spin;
    let beta_e = 2.0 * b * (r_e * r_e + a2) / p.mu_prime(r_e);
    let beta_c = -2.0 * b * (r_c * r_c + a2) / p.mu_prime(r_c);
    Ok(HorizonData {
        r_minus,
        r_cauchy,
        r_e,
        r_c,
        r0: c3,
        beta_e,
        beta_c,
        beta: beta_e.max(beta_c),
    })
}

/// Interval (Λ₀, Λ₁) of cosmological constants giving a subextremal
/// spacetime for fixed (a, m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaInterval {
    pub lambda0: f64,
    pub lambda1: f64,
    pub empty: bool,
}

impl LambdaInterval {
    pub fn bounds(&self, spin: f64, mass: f64) -> Result<(f64, f64)> {
        if self.empty {
            Err(KdsError::EmptyInterval { spin, mass })
        } else {
            Ok((self.lambda0, self.lambda1))
        }
    }

    pub fn contains(&self, lambda: f64) -> bool {
        !self.empty && lambda > self.lambda0 && lambda < self.lambda1
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lambda0 + self.lambda1)
    }
}

const LAMBDA_SCAN_NODES: usize = 512;

/// Locates the admissible Λ-interval by a log-spaced scan of the
/// discriminant over (0, 3/a²) followed by bisection of each sign change.
/// For a = 0 the upper scan limit is 1/m², where the discriminant is -8.
pub fn lambda_interval(spin: f64, mass: f64) -> Result<LambdaInterval> {
    if !(mass > 0.0) || !spin.is_finite() {
        return Err(KdsError::InvalidParams(format!("mass must be > 0, got {mass}")));
    }
    let d = |l: f64| discriminant(l, mass, spin);
    let upper = if spin == 0.0 {
        1.0 / (mass * mass)
    } else {
        3.0 / (spin * spin) * (1.0 - 1e-12)
    };
    let lower = upper * 1e-12;
    let nodes: Vec<f64> = (0..LAMBDA_SCAN_NODES)
        .map(|i| {
            let t = i as f64 / (LAMBDA_SCAN_NODES - 1) as f64;
            lower * (upper / lower).powf(t)
        })
        .collect();
    let vals: Vec<f64> = nodes.iter().map(|&l| d(l)).collect();
    let positive: Vec<usize> = (0..nodes.len()).filter(|&i| vals[i] > 0.0).collect();

    let (first, last) = match (positive.first(), positive.last()) {
        (Some(&f), Some(&l)) => (f, l),
        _ => {
            // the interval may be narrower than the grid spacing
            let best = (0..nodes.len())
                .max_by(|&i, &j| vals[i].total_cmp(&vals[j]))
                .unwrap_or(0);
            let lo = nodes[best.saturating_sub(1)];
            let hi = nodes[(best + 1).min(nodes.len() - 1)];
            let (arg, max) = golden_max(d, lo, hi, 200);
            if max <= 0.0 {
                return Ok(LambdaInterval {
                    lambda0: f64::NAN,
                    lambda1: f64::NAN,
                    empty: true,
                });
            }
            let l0 = bisect(d, lo, arg, 0.0);
            let l1 = bisect(d, arg, hi, 0.0);
            return Ok(LambdaInterval {
                lambda0: l0,
                lambda1: l1,
                empty: false,
            });
        }
    };

    let lambda0 = if first == 0 {
        // discriminant at Λ = 0 is 1 - a²/m²
        if d(0.0) > 0.0 {
            0.0
        } else {
            bisect(d, 0.0, nodes[0], 0.0)
        }
    } else {
        bisect(d, nodes[first - 1], nodes[first], 0.0)
    };
    let lambda1 = if last + 1 < nodes.len() {
        bisect(d, nodes[last], nodes[last + 1], 0.0)
    } else {
        upper
    };
    Ok(LambdaInterval {
        lambda0,
        lambda1,
        empty: false,
    })
}

/// The four algebraically equivalent forms of `h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HForm {
    /// 2μ (rμ' - 4μ)' - μ'(rμ' - 4μ)
    Defining,
    /// -(rμ' - 4μ)²/r - 4μ(3m - 4a²/r)
    Squared,
    /// 4Λm r⁴ - 4b² r³ + 12m(1-γ) r² - 12m² r + 4ma²
    Quartic,
    /// (4Λr⁴/3)(3m - 4a²/r) - 4(1-γ)²(r - m/(1-γ))³ + 4m³(a²/m² - 1/(1-γ))
    Centered,
}

impl HForm {
    pub const ALL: [HForm; 4] = [HForm::Defining, HForm::Squared, HForm::Quartic, HForm::Centered];
}

pub fn h_eval(p: &SpacetimeParams, r: f64, form: HForm) -> Result<f64> {
    let m = p.mass;
    let a2 = p.spin * p.spin;
    let omg = p.one_minus_gamma();
    match form {
        HForm::Defining => {
            let mu = p.mu(r);
            let dmu = p.mu_prime(r);
            let g = r * dmu - 4.0 * mu;
            let dg = r * p.mu_second(r) - 3.0 * dmu;
            Ok(2.0 * mu * dg - dmu * g)
        }
        HForm::Squared => {
            if r == 0.0 {
                return Err(KdsError::DomainError("squared form of h is undefined at r = 0".into()));
            }
            let mu = p.mu(r);
            let g = r * p.mu_prime(r) - 4.0 * mu;
            Ok(-g * g / r - 4.0 * mu * (3.0 * m - 4.0 * a2 / r))
        }
        HForm::Quartic => Ok(h_derivative(p, r, 0)),
        HForm::Centered => {
            if r == 0.0 {
                return Err(KdsError::DomainError("centered form of h is undefined at r = 0".into()));
            }
            let shifted = r - m / omg;
            Ok(4.0 * p.lambda * r.powi(4) / 3.0 * (3.0 * m - 4.0 * a2 / r)
                - 4.0 * omg * omg * shifted.powi(3)
                + 4.0 * m.powi(3) * (a2 / (m * m) - 1.0 / omg))
        }
    }
}

/// Derivatives of `h` from its quartic form; `order` up to 4.
pub fn h_derivative(p: &SpacetimeParams, r: f64, order: u8) -> f64 {
    let (c4, c3, c2, c1, c0) = h_coefficients(p);
    match order {
        0 => (((c4 * r + c3) * r + c2) * r + c1) * r + c0,
        1 => ((4.0 * c4 * r + 3.0 * c3) * r + 2.0 * c2) * r + c1,
        2 => (12.0 * c4 * r + 6.0 * c3) * r + 2.0 * c2,
        3 => 24.0 * c4 * r + 6.0 * c3,
        4 => 24.0 * c4,
        _ => 0.0,
    }
}

fn h_coefficients(p: &SpacetimeParams) -> (f64, f64, f64, f64, f64) {
    let m = p.mass;
    let b = p.b();
    (
        4.0 * p.lambda * m,
        -4.0 * b * b,
        12.0 * m * p.one_minus_gamma(),
        -12.0 * m * m,
        4.0 * m * p.spin * p.spin,
    )
}

/// Sum of absolute monomial values of h^{(order)} at `r`.
pub fn h_derivative_scale(p: &SpacetimeParams, r: f64, order: u8) -> f64 {
    let (c4, c3, c2, c1, c0) = h_coefficients(p);
    let (c4, c3, c2, c1, c0) = (c4.abs(), c3.abs(), c2.abs(), c1.abs(), c0.abs());
    let r = r.abs();
    match order {
        0 => c4 * r.powi(4) + c3 * r.powi(3) + c2 * r * r + c1 * r + c0,
        1 => 4.0 * c4 * r.powi(3) + 3.0 * c3 * r * r + 2.0 * c2 * r + c1,
        2 => 12.0 * c4 * r * r + 6.0 * c3 * r + 2.0 * c2,
        3 => 24.0 * c4 * r + 6.0 * c3,
        _ => 24.0 * c4,
    }
}

/// Magnitude scale for comparing the four forms of h at `r` (r ≠ 0): the
/// largest sum of absolute intermediate terms among the forms.
pub fn h_form_scale(p: &SpacetimeParams, r: f64) -> f64 {
    let m = p.mass;
    let a2 = p.spin * p.spin;
    let mu_s = p.mu_scale(r);
    let dmu_s = 4.0 * p.lambda / 3.0 * r.abs().powi(3) + 2.0 * p.one_minus_gamma().abs() * r.abs() + 2.0 * m;
    let ddmu_s = 4.0 * p.lambda * r * r + 2.0 * p.one_minus_gamma().abs();
    let g_s = r.abs() * dmu_s + 4.0 * mu_s;
    let quartic = h_derivative_scale(p, r, 0);
    let defining = 2.0 * mu_s * (r.abs() * ddmu_s + 3.0 * dmu_s) + dmu_s * g_s;
    let squared = g_s * g_s / r.abs() + 4.0 * mu_s * (3.0 * m + 4.0 * a2 / r.abs());
    let omg = p.one_minus_gamma();
    let centered = 4.0 * p.lambda * r.powi(4) / 3.0 * (3.0 * m + 4.0 * a2 / r.abs())
        + 4.0 * omg * omg * (r.abs() + m / omg).powi(3)
        + 4.0 * m.powi(3) * (a2 / (m * m) + 1.0 / omg);
    quartic.max(defining).max(squared).max(centered)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HNegativityReport {
    pub n_grid: usize,
    pub max_h: f64,
    pub argmax_r: f64,
    pub h_at_r_e: f64,
    pub h_at_r_c: f64,
    pub violation: bool,
}

/// Samples h on a uniform grid of (r_e, r_c), pulled in from the endpoints
/// by a few ulps.
pub fn verify_h_negative(st: &Spacetime, n_grid: usize) -> HNegativityReport {
    let p = &st.params;
    let h = &st.horizons;
    let lo = h.r_e + 4.0 * f64::EPSILON * h.r_e.abs().max(1.0);
    let hi = h.r_c - 4.0 * f64::EPSILON * h.r_c.abs();
    let n = n_grid.max(2);
    let mut max_h = f64::NEG_INFINITY;
    let mut argmax_r = lo;
    for i in 0..n {
        let r = lo + (hi - lo) * i as f64 / (n - 1) as f64;
        let v = h_derivative(p, r, 0);
        if v > max_h {
            max_h = v;
            argmax_r = r;
        }
    }
    HNegativityReport {
        n_grid: n,
        max_h,
        argmax_r,
        h_at_r_e: h_derivative(p, h.r_e, 0),
        h_at_r_c: h_derivative(p, h.r_c, 0),
        violation: max_h >= 0.0,
    }
}

/// Taylor data of h at the lower extremal endpoint Λ₀, where r_C and r_e merge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtremalReport {
    pub spin: f64,
    pub mass: f64,
    pub lambda0: f64,
    pub gamma: f64,
    pub alpha: f64,
    /// Closed-form smaller root of rμ' - 4μ at Λ₀.
    pub r_e: f64,
    pub mu_at_r_e: f64,
    pub mu_prime_at_r_e: f64,
    pub h: [f64; 4],
    pub h_scale: [f64; 4],
    /// -96 Λ₀ m r_e √(1 - 8/(9α)).
    pub h3_bound: f64,
    /// (bound - h‴(r_e)) / 24.
    pub slack: f64,
    /// (1 + γ)² - 16γ.
    pub slack_identity: f64,
    pub vanishing_ok: bool,
    pub bound_ok: bool,
    pub slack_ok: bool,
}

impl ExtremalReport {
    pub fn pass(&self) -> bool {
        self.vanishing_ok && self.bound_ok && self.slack_ok
    }
}

pub fn extremal_boundary_check(spin: f64, mass: f64) -> Result<ExtremalReport> {
    let interval = lambda_interval(spin, mass)?;
    let (lambda0, _) = interval.bounds(spin, mass)?;
    if lambda0 <= 0.0 {
        return Err(KdsError::NoExtremalLowerEndpoint { spin, mass });
    }
    let p = SpacetimeParams::new(lambda0, mass, spin)?;
    let gamma = p.gamma();
    let omg = p.one_minus_gamma();
    let a2 = spin * spin;
    let alpha = mass * mass / (a2 * omg);
    let root_term = (9.0 - 8.0 * a2 / (mass * mass) * omg).max(0.0).sqrt();
    let r_e = 3.0 * mass / (2.0 * omg) - mass / (2.0 * omg) * root_term;
    let h: [f64; 4] = [0, 1, 2, 3].map(|k| h_derivative(&p, r_e, k));
    let h_scale: [f64; 4] = [0, 1, 2, 3].map(|k| h_derivative_scale(&p, r_e, k));
    let s = (1.0 - 8.0 / (9.0 * alpha)).max(0.0).sqrt();
    let h3_bound = -96.0 * lambda0 * mass * r_e * s;
    let slack = (h3_bound - h[3]) / 24.0;
    let slack_identity = (1.0 + gamma).powi(2) - 16.0 * gamma;
    let tol = 1e-8;
    let vanishing_ok = (0..3).all(|k| h[k].abs() <= tol * h_scale[k]);
    let bound_ok = h[3] <= h3_bound + tol * h_scale[3];
    let slack_ok = (slack - slack_identity).abs() <= 1e-10 * slack_identity.abs().max(1.0) && slack_identity >= 0.0;
    Ok(ExtremalReport {
        spin,
        mass,
        lambda0,
        gamma,
        alpha,
        r_e,
        mu_at_r_e: p.mu(r_e),
        mu_prime_at_r_e: p.mu_prime(r_e),
        h,
        h_scale,
        h3_bound,
        slack,
        slack_identity,
        vanishing_ok,
        bound_ok,
        slack_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Independent oracle: plain bisection on a fine uniform grid.
    fn grid_roots(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> Vec<f64> {
        let mut out = Vec::new();
        let step = (hi - lo) / n as f64;
        let mut x0 = lo;
        let mut f0 = f(x0);
        for i in 1..=n {
            let x1 = lo + step * i as f64;
            let f1 = f(x1);
            if f0 == 0.0 {
                out.push(x0);
            } else if f0 * f1 < 0.0 {
                let (mut a, mut b) = (x0, x1);
                for _ in 0..200 {
                    let m = 0.5 * (a + b);
                    if f(m) * f(a) <= 0.0 {
                        b = m;
                    } else {
                        a = m;
                    }
                }
                out.push(0.5 * (a + b));
            }
            x0 = x1;
            f0 = f1;
        }
        out
    }

    #[test]
    fn schwarzschild_de_sitter_horizons() {
        // a = 0: μ = r(r - Λr³/3 - 2m); the nonzero roots solve r³ - 50r + 100 = 0
        let p = SpacetimeParams::validated(0.06, 1.0, 0.0).unwrap();
        let h = horizon_data(&p).unwrap();
        let cubic = grid_roots(|r| r * r * r - 50.0 * r + 100.0, -10.0, 10.0, 2000);
        assert_eq!(cubic.len(), 3);
        assert_relative_eq!(h.r_minus, cubic[0], max_relative = 1e-12);
        assert!(h.r_cauchy.abs() < 1e-14);
        assert_relative_eq!(h.r_e, cubic[1], max_relative = 1e-12);
        assert_relative_eq!(h.r_c, cubic[2], max_relative = 1e-12);
        assert!((h.r_e - 2.2183).abs() < 1e-4);
        assert!((h.r_c - 5.695).abs() < 1e-3);
        assert!((h.r_minus + 7.914).abs() < 1e-3);
        // μ' = 0 reduces to r³ - 25r + 25 = 0 on (r_e, r_c)
        let crit = grid_roots(|r| r * r * r - 25.0 * r + 25.0, h.r_e, h.r_c, 2000);
        assert_eq!(crit.len(), 1);
        assert_relative_eq!(h.r0, crit[0], max_relative = 1e-12);
        assert!((h.r0 - 4.395).abs() < 1e-3);
        let beta_e = 2.0 * h.r_e * h.r_e / p.mu_prime(h.r_e);
        assert_relative_eq!(h.beta_e, beta_e, max_relative = 1e-14);
        assert!((h.beta_e - 6.30).abs() < 0.01);
        assert!(h.invariant_violations(&p, 1e-12).is_empty());
    }

    #[test]
    fn high_spin_horizons_match_grid_oracle() {
        let p = SpacetimeParams::validated(0.02, 1.0, 0.9).unwrap();
        let h = horizon_data(&p).unwrap();
        let oracle = grid_roots(|r| p.mu(r), -30.0, 30.0, 60_000);
        assert_eq!(oracle.len(), 4);
        for (x, y) in h.roots().iter().zip(&oracle) {
            assert_relative_eq!(*x, *y, max_relative = 1e-12);
        }
        assert!(p.mu(h.r_e).abs() <= 1e-12);
        assert!(h.invariant_violations(&p, 1e-12).is_empty());
    }

    #[test]
    fn horizons_reject_non_subextremal() {
        let p = SpacetimeParams::new(0.5, 1.0, 0.0).unwrap();
        assert!(matches!(horizon_data(&p), Err(KdsError::NotSubextremal { .. })));
    }

    #[test]
    fn lambda_interval_without_spin() {
        let iv = lambda_interval(0.0, 1.0).unwrap();
        assert_eq!(iv.lambda0, 0.0);
        assert_relative_eq!(iv.lambda1, 1.0 / 9.0, max_relative = 1e-13);
        let iv2 = lambda_interval(0.0, 2.0).unwrap();
        assert_relative_eq!(iv2.lambda1, 1.0 / 36.0, max_relative = 1e-13);
    }

    #[test]
    fn lambda_interval_super_spin_has_positive_lower_end() {
        for a in [1.01, 1.05] {
            let iv = lambda_interval(a, 1.0).unwrap();
            assert!(!iv.empty);
            assert!(iv.lambda0 > 0.0);
            assert!(discriminant(iv.lambda0, 1.0, a).abs() < 1e-12);
            assert!(discriminant(iv.lambda1, 1.0, a).abs() < 1e-12);
            assert!(discriminant(iv.midpoint(), 1.0, a) > 0.0);
        }
    }

    #[test]
    fn lambda_interval_contains_reference_point() {
        let iv = lambda_interval(0.9, 1.0).unwrap();
        assert!(iv.contains(0.02));
        assert_eq!(iv.lambda0, 0.0);
    }

    #[test]
    fn lambda_interval_empty_beyond_maximal_ratio() {
        let iv = lambda_interval(1.2, 1.0).unwrap();
        assert!(iv.empty);
        assert!(matches!(iv.bounds(1.2, 1.0), Err(KdsError::EmptyInterval { .. })));
        assert!(matches!(extremal_boundary_check(1.2, 1.0), Err(KdsError::EmptyInterval { .. })));
    }

    #[test]
    fn h_quartic_reference_value() {
        let p = SpacetimeParams::new(0.02, 1.0, 0.9).unwrap();
        let g = 0.02 * 0.81 / 3.0;
        let b = 1.0 + g;
        let expected = 4.0 * 0.02 * 81.0 - 4.0 * b * b * 27.0 + 12.0 * (1.0 - g) * 9.0 - 36.0 + 4.0 * 0.81;
        let v = h_eval(&p, 3.0, HForm::Quartic).unwrap();
        assert_relative_eq!(v, expected, max_relative = 1e-14);
        assert!((v + 28.03).abs() < 0.01);
    }

    #[test]
    fn h_quartic_without_spin() {
        let p = SpacetimeParams::new(0.05, 1.3, 0.0).unwrap();
        for r in [0.4f64, 2.0, 5.0] {
            let m = 1.3;
            let expected = 4.0 * 0.05 * m * r.powi(4) - 4.0 * r.powi(3) + 12.0 * m * r * r - 12.0 * m * m * r;
            assert_relative_eq!(h_eval(&p, r, HForm::Quartic).unwrap(), expected, max_relative = 1e-13);
        }
    }

    #[test]
    fn h_forms_agree() {
        let p = SpacetimeParams::new(0.02, 1.0, 0.9).unwrap();
        for r in [-4.0, 0.3, 1.7, 3.0, 9.0] {
            let q = h_eval(&p, r, HForm::Quartic).unwrap();
            let s = h_form_scale(&p, r);
            for form in HForm::ALL {
                let v = h_eval(&p, r, form).unwrap();
                assert!((v - q).abs() <= 1e-12 * s, "{form:?} at {r}: {v} vs {q}");
            }
        }
        assert!(h_eval(&p, 0.0, HForm::Squared).is_err());
        assert!(h_eval(&p, 0.0, HForm::Centered).is_err());
        assert!(h_eval(&p, 0.0, HForm::Defining).is_ok());
    }

    #[test]
    fn h_negative_examples() {
        for (l, m, a) in [(0.06, 1.0, 0.0), (0.02, 1.0, 0.9)] {
            let st = Spacetime::from_triple(l, m, a).unwrap();
            let rep = verify_h_negative(&st, 1024);
            assert!(!rep.violation, "{rep:?}");
            assert!(rep.max_h < 0.0);
            // at a horizon h = -r μ'(r)², strictly negative
            let he = -st.horizons.r_e * st.params.mu_prime(st.horizons.r_e).powi(2);
            assert_relative_eq!(rep.h_at_r_e, he, max_relative = 1e-9);
            assert!(rep.h_at_r_c < 0.0);
        }
    }

    #[test]
    fn extremal_boundary_examples() {
        let rep = extremal_boundary_check(1.05, 1.0).unwrap();
        assert!(rep.pass(), "{rep:?}");
        assert!(rep.slack_identity > 0.0);
        // μ has a double root at the closed-form radius
        assert!(rep.mu_at_r_e.abs() < 1e-9);
        assert!(rep.mu_prime_at_r_e.abs() < 1e-7);
        assert!(rep.alpha >= 8.0 / 9.0 && rep.alpha <= 1.0);
        // below |a| = m the lower end is Λ = 0
        assert!(matches!(
            extremal_boundary_check(0.9, 1.0),
            Err(KdsError::NoExtremalLowerEndpoint { .. })
        ));
    }

    #[test]
    fn slack_identity_at_zero_gamma() {
        let gamma = 0.0f64;
        assert_eq!((1.0 + gamma).powi(2) - 16.0 * gamma, 1.0);
    }
}
