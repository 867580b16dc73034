//! The extension function f, the slab (r_e - δ, r_c + δ), and coordinate
//! changes among the four charts
//!
//! ```text
//! BL       (t,  r, φ,  θ)
//! ROT      (τ,  r, ψ,  θ)     τ = t,     ψ = φ - k t
//! STAR     (t*, r, φ*, θ)     t* = t - Φ(r),  φ* = φ - Ψ(r)
//! STARROT  (τ*, r, ψ*, θ)     τ* = t*,   ψ* = φ* - k t*
//! ```
//!
//! with k = a/(r₀² + a²), Φ' = b(r² + a²) f/μ and Ψ' = b a f/μ.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::Tolerances;
use crate::error::{KdsError, Result};
use crate::numeric::{gauss_legendre, integrate_gl, Chebyshev};
use crate::radial::Spacetime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Chart {
    Bl,
    Rot,
    Star,
    StarRot,
}

impl Chart {
    pub const ALL: [Chart; 4] = [Chart::Bl, Chart::Rot, Chart::Star, Chart::StarRot];

    pub fn is_star(self) -> bool {
        matches!(self, Chart::Star | Chart::StarRot)
    }

    pub fn is_rotating(self) -> bool {
        matches!(self, Chart::Rot | Chart::StarRot)
    }

    pub fn coordinate_names(self) -> [&'static str; 4] {
        match self {
            Chart::Bl => ["t", "r", "phi", "theta"],
            Chart::Rot => ["tau", "r", "psi", "theta"],
            Chart::Star => ["t_star", "r", "phi_star", "theta"],
            Chart::StarRot => ["tau_star", "r", "psi_star", "theta"],
        }
    }
}

impl fmt::Display for Chart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Chart::Bl => "bl",
            Chart::Rot => "rot",
            Chart::Star => "star",
            Chart::StarRot => "starrot",
        };
        f.write_str(s)
    }
}

impl FromStr for Chart {
    type Err = KdsError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bl" => Ok(Chart::Bl),
            "rot" => Ok(Chart::Rot),
            "star" => Ok(Chart::Star),
            "starrot" | "star_rot" => Ok(Chart::StarRot),
            other => Err(KdsError::Parse(format!("unknown chart '{other}'"))),
        }
    }
}

/// A point (time, r, angle, θ) in one of the charts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint {
    pub chart: Chart,
    pub coords: [f64; 4],
}

impl ChartPoint {
    pub fn new(chart: Chart, coords: [f64; 4]) -> Self {
        Self { chart, coords }
    }

    pub fn r(&self) -> f64 {
        self.coords[1]
    }

    pub fn theta(&self) -> f64 {
        self.coords[3]
    }
}

/// Covector components (ξ_time, ξ_r, ξ_angle, ξ_θ) in a chart's cobasis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Covector {
    pub chart: Chart,
    pub xi: [f64; 4],
}

impl Covector {
    pub fn new(chart: Chart, xi: [f64; 4]) -> Self {
        Self { chart, xi }
    }

    pub fn norm(&self) -> f64 {
        self.xi.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// How the correction f₁ in f = f₀ + μ f₁ was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandChoice {
    Constant,
    Polynomial,
    Supplied,
}

/// f = f₀ + μ f₁ on the slab, with f₀ the affine function through
/// (r_e, -1) and (r_c, 1), plus primitives Φ and Ψ anchored at r₀.
#[derive(Debug, Clone, Serialize)]
pub struct ExtensionProfile {
    pub spacetime: Spacetime,
    pub delta: f64,
    pub base: &'static str,
    pub choice: BandChoice,
    pub f1: Chebyshev,
    /// Minimum of W - f² over the interior verification grid.
    pub band_margin: f64,
    /// Minimum of A(r)(r² + a²)² - a² over the slab grid, A = (1 - f²)/μ.
    pub spacelike_margin: f64,
    phi_residues: [f64; 4],
    psi_residues: [f64; 4],
    #[serde(skip)]
    rule: (Vec<f64>, Vec<f64>),
}

impl ExtensionProfile {
    /// Wraps a given correction f₁ without checking any invariant.
    pub fn with_correction(st: &Spacetime, delta: f64, f1: Chebyshev, choice: BandChoice) -> Self {
        let h = &st.horizons;
        let p = &st.params;
        let a = p.spin;
        let b = p.b();
        let l = h.r_c - h.r_e;
        let f0 = |r: f64| (2.0 * r - h.r_e - h.r_c) / l;
        let roots = h.roots();
        let phi_residues = roots.map(|ri| b * (ri * ri + a * a) * f0(ri) / p.mu_prime(ri));
        let psi_residues = roots.map(|ri| b * a * f0(ri) / p.mu_prime(ri));
        let n = f1.degree() / 2 + 4;
        let mut prof = Self {
            spacetime: *st,
            delta,
            base: "affine",
            choice,
            f1,
            band_margin: f64::NAN,
            spacelike_margin: f64::NAN,
            phi_residues,
            psi_residues,
            rule: gauss_legendre(n),
        };
        let (band, space) = prof.margins(4096);
        prof.band_margin = band;
        prof.spacelike_margin = space;
        prof
    }

    pub fn slab(&self) -> (f64, f64) {
        (self.spacetime.horizons.r_e - self.delta, self.spacetime.horizons.r_c + self.delta)
    }

    pub fn in_slab(&self, r: f64) -> bool {
        let (lo, hi) = self.slab();
        r >= lo && r <= hi
    }

    pub fn f0(&self, r: f64) -> f64 {
        let h = &self.spacetime.horizons;
        (2.0 * r - h.r_e - h.r_c) / (h.r_c - h.r_e)
    }

    pub fn f(&self, r: f64) -> f64 {
        self.f0(r) + self.spacetime.params.mu(r) * self.f1.eval(r)
    }

    pub fn f_prime(&self, r: f64) -> f64 {
        let h = &self.spacetime.horizons;
        let p = &self.spacetime.params;
        2.0 / (h.r_c - h.r_e) + p.mu_prime(r) * self.f1.eval(r) + p.mu(r) * self.f1.derivative(r)
    }

    /// (1 - f²)/μ in the factored form u v / κ, regular across both horizons.
    pub fn one_minus_f2_over_mu(&self, r: f64) -> f64 {
        let (u, v, k) = self.factors(r);
        u * v / k
    }

    /// d/dr of (1 - f²)/μ.
    pub fn one_minus_f2_over_mu_prime(&self, r: f64) -> f64 {
        let h = &self.spacetime.horizons;
        let (u, v, k) = self.factors(r);
        let dk = self.spacetime.mu_reduced_prime(r);
        let g = self.f1.eval(r);
        let dg = self.f1.derivative(r);
        let du = dk * (h.r_c - r) * g - k * g + k * (h.r_c - r) * dg;
        let dv = -dk * (r - h.r_e) * g - k * g - k * (r - h.r_e) * dg;
        (du * v + u * dv) / k - u * v * dk / (k * k)
    }

    // 1 + f = (r - r_e) u,  1 - f = (r_c - r) v,  μ = κ (r - r_e)(r_c - r)
    fn factors(&self, r: f64) -> (f64, f64, f64) {
        let h = &self.spacetime.horizons;
        let l = h.r_c - h.r_e;
        let k = self.spacetime.mu_reduced(r);
        let g = self.f1.eval(r);
        let u = 2.0 / l + g * k * (h.r_c - r);
        let v = 2.0 / l - g * k * (r - h.r_e);
        (u, v, k)
    }

    /// Φ(r), with Φ(r₀) = 0; defined off the horizons.
    pub fn phi(&self, r: f64) -> f64 {
        let a2 = self.spacetime.params.spin.powi(2);
        let b = self.spacetime.params.b();
        self.log_part(&self.phi_residues, r)
            + b * self.poly_integral(|s| (s * s + a2) * self.f1.eval(s), r)
    }

    /// Ψ(r), with Ψ(r₀) = 0; defined off the horizons.
    pub fn psi(&self, r: f64) -> f64 {
        let a = self.spacetime.params.spin;
        let b = self.spacetime.params.b();
        self.log_part(&self.psi_residues, r) + b * a * self.poly_integral(|s| self.f1.eval(s), r)
    }

    pub fn phi_prime(&self, r: f64) -> f64 {
        let p = &self.spacetime.params;
        p.b() * (r * r + p.spin * p.spin) * self.f(r) / p.mu(r)
    }

    pub fn psi_prime(&self, r: f64) -> f64 {
        let p = &self.spacetime.params;
        p.b() * p.spin * self.f(r) / p.mu(r)
    }

    fn log_part(&self, residues: &[f64; 4], r: f64) -> f64 {
        let r0 = self.spacetime.horizons.r0;
        self.spacetime
            .horizons
            .roots()
            .iter()
            .zip(residues)
            .map(|(ri, ci)| ci * ((r - ri).abs() / (r0 - ri).abs()).ln())
            .sum()
    }

    fn poly_integral<F: Fn(f64) -> f64>(&self, f: F, r: f64) -> f64 {
        integrate_gl(f, self.spacetime.horizons.r0, r, &self.rule)
    }

    /// W(r) = 1 - a²μ/(r² + a²)².
    pub fn w(&self, r: f64) -> f64 {
        let p = &self.spacetime.params;
        let a2 = p.spin * p.spin;
        1.0 - a2 * p.mu(r) / (r * r + a2).powi(2)
    }

    /// A(r)(r² + a²)² - a²; positive iff dt* is timelike at θ = π/2, the
    /// worst latitude.
    pub fn spacelike_margin_at(&self, r: f64) -> f64 {
        let a2 = self.spacetime.params.spin.powi(2);
        self.one_minus_f2_over_mu(r) * (r * r + a2).powi(2) - a2
    }

    fn margins(&self, n: usize) -> (f64, f64) {
        let h = &self.spacetime.horizons;
        let (lo, hi) = self.slab();
        let mut band = f64::INFINITY;
        let mut space = f64::INFINITY;
        for r in verification_grid(lo, hi, h.r_e, h.r_c, n) {
            space = space.min(self.spacelike_margin_at(r));
            if r > h.r_e && r < h.r_c {
                band = band.min(self.w(r) - self.f(r).powi(2));
            }
        }
        (band, space)
    }

    /// All invariants of an accepted profile.
    pub fn is_valid(&self) -> bool {
        let p = &self.spacetime.params;
        let h = &self.spacetime.horizons;
        let (lo, hi) = self.slab();
        (self.f(h.r_e) + 1.0).abs() <= 1e-12
            && (self.f(h.r_c) - 1.0).abs() <= 1e-12
            && self.band_margin > 0.0
            && self.spacelike_margin > 0.0
            && lo > h.r_cauchy
            && p.mu(lo) < 0.0
            && p.mu(hi) < 0.0
    }
}

fn verification_grid(lo: f64, hi: f64, r_e: f64, r_c: f64, n: usize) -> Vec<f64> {
    let mut g: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    g.push(r_e);
    g.push(r_c);
    g
}

/// The pair (f₋, f₊) bounding admissible f₁ inside the horizons, in the
/// cancellation-free form
///
/// ```text
/// f₋ = -2/(L κ (r_c - r)) + a²/((r² + a²)²(1 + √W))
/// f₊ =  2/(L κ (r - r_e)) - a²/((r² + a²)²(1 + √W))
/// ```
///
/// with L = r_c - r_e. At r_e, f₊ is +∞ and f₋ is its finite one-sided
/// limit; symmetrically at r_c.
pub fn band_functions(st: &Spacetime, r: f64) -> (f64, f64) {
    let p = &st.params;
    let h = &st.horizons;
    let a2 = p.spin * p.spin;
    let l = h.r_c - h.r_e;
    let k = st.mu_reduced(r);
    let w = 1.0 - a2 * p.mu(r) / (r * r + a2).powi(2);
    let corr = a2 / ((r * r + a2).powi(2) * (1.0 + w.max(0.0).sqrt()));
    let minus = if r >= h.r_c { f64::NEG_INFINITY } else { -2.0 / (l * k * (h.r_c - r)) + corr };
    let plus = if r <= h.r_e { f64::INFINITY } else { 2.0 / (l * k * (r - h.r_e)) - corr };
    (minus, plus)
}

/// f₁ = -a² f₀/((r² + a²)²(1 + √W)), which makes f = f₀√W and satisfies
/// the band strictly on the whole slab.
fn band_target(st: &Spacetime, r: f64) -> f64 {
    let p = &st.params;
    let h = &st.horizons;
    let a2 = p.spin * p.spin;
    let f0 = (2.0 * r - h.r_e - h.r_c) / (h.r_c - h.r_e);
    let w = 1.0 - a2 * p.mu(r) / (r * r + a2).powi(2);
    -a2 * f0 / ((r * r + a2).powi(2) * (1.0 + w.max(0.0).sqrt()))
}

const FIT_DEGREES: [usize; 5] = [2, 4, 8, 12, 16];

/// Default requested slab margin: a tenth of the distance between the horizons.
pub fn default_delta(st: &Spacetime) -> f64 {
    0.1 * (st.horizons.r_c - st.horizons.r_e)
}

pub fn build_extension(st: &Spacetime, delta_request: f64) -> Result<ExtensionProfile> {
    build_extension_with(st, delta_request, &Tolerances::default())
}

/// Searches for f₁: first a constant inside the band, then Chebyshev fits
/// of increasing degree to [`band_target`]; halves δ when both fail.
pub fn build_extension_with(st: &Spacetime, delta_request: f64, tol: &Tolerances) -> Result<ExtensionProfile> {
    if !(delta_request > 0.0) || !delta_request.is_finite() {
        return Err(KdsError::InvalidParams(format!("delta must be > 0, got {delta_request}")));
    }
    let p = &st.params;
    let h = &st.horizons;
    let n = tol.profile_grid.max(16);
    let mut delta = delta_request;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..40 {
        let lo = h.r_e - delta;
        let hi = h.r_c + delta;
        if lo <= h.r_cauchy || p.mu(lo) >= 0.0 || p.mu(hi) >= 0.0 {
            delta *= 0.5;
            continue;
        }
        // constant candidates from the interior band
        let mut fmax_minus = f64::NEG_INFINITY;
        let mut fmin_plus = f64::INFINITY;
        for i in 0..=n {
            let r = h.r_e + (h.r_c - h.r_e) * i as f64 / n as f64;
            let (fm, fp) = band_functions(st, r);
            fmax_minus = fmax_minus.max(fm);
            fmin_plus = fmin_plus.min(fp);
        }
        let eta = 1e-9 * (1.0 + fmax_minus.abs() + fmin_plus.abs());
        if fmax_minus + eta < fmin_plus - eta {
            let c = if fmax_minus + eta < 0.0 && 0.0 < fmin_plus - eta {
                0.0
            } else {
                0.5 * (fmax_minus + fmin_plus)
            };
            let prof = ExtensionProfile::with_correction(st, delta, Chebyshev::constant(lo, hi, c), BandChoice::Constant);
            if prof.is_valid() {
                return Ok(prof);
            }
            worst = worst.max(prof.spacelike_margin.min(prof.band_margin));
        }
        let xs: Vec<f64> = (0..4 * n).map(|i| lo + (hi - lo) * i as f64 / (4 * n - 1) as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&r| band_target(st, r)).collect();
        for deg in FIT_DEGREES {
            let Some(cheb) = Chebyshev::fit(lo, hi, &xs, &ys, deg) else {
                continue;
            };
            let prof = ExtensionProfile::with_correction(st, delta, cheb, BandChoice::Polynomial);
            if prof.is_valid() {
                return Ok(prof);
            }
            worst = worst.max(prof.spacelike_margin.min(prof.band_margin));
        }
        delta *= 0.5;
    }
    Err(KdsError::BandFitFailure {
        max_degree: FIT_DEGREES[FIT_DEGREES.len() - 1],
        worst_margin: worst,
    })
}

/// Chart changes for points and covectors.
#[derive(Debug, Clone)]
pub struct ChartMaps<'a> {
    pub profile: &'a ExtensionProfile,
    pub pole_margin: f64,
}

impl<'a> ChartMaps<'a> {
    pub fn new(profile: &'a ExtensionProfile) -> Self {
        Self {
            profile,
            pole_margin: Tolerances::default().pole_margin,
        }
    }

    fn k(&self) -> f64 {
        self.profile.spacetime.rotation_rate()
    }

    /// Checks that `point` lies in its chart's domain.
    pub fn check_domain(&self, point: &ChartPoint) -> Result<()> {
        let th = point.theta();
        if !(th > self.pole_margin && th < std::f64::consts::PI - self.pole_margin) {
            return Err(KdsError::ChartDomainError(format!("theta = {th} too close to a pole")));
        }
        let r = point.r();
        let h = &self.profile.spacetime.horizons;
        if point.chart.is_star() {
            if !self.profile.in_slab(r) {
                return Err(KdsError::ChartDomainError(format!("r = {r} outside the slab")));
            }
        } else if !(r > h.r_e && r < h.r_c) {
            return Err(KdsError::ChartDomainError(format!(
                "r = {r} outside ({}, {}) in chart {}",
                h.r_e, h.r_c, point.chart
            )));
        }
        Ok(())
    }

    pub fn point(&self, point: &ChartPoint, to: Chart) -> Result<ChartPoint> {
        self.check_domain(point)?;
        let mut cur = *point;
        for step in route(point.chart, to) {
            cur = self.point_step(&cur, step)?;
        }
        Ok(cur)
    }

    /// Transforms the covector `xi` based at `point` (both in the same chart).
    pub fn covector(&self, point: &ChartPoint, xi: &Covector, to: Chart) -> Result<Covector> {
        if point.chart != xi.chart {
            return Err(KdsError::ChartDomainError(format!(
                "covector chart {} differs from base point chart {}",
                xi.chart, point.chart
            )));
        }
        self.check_domain(point)?;
        let r = point.r();
        let mut cur = *xi;
        for step in route(xi.chart, to) {
            if step.0.is_star() != step.1.is_star() && !self.interior(r) {
                return Err(KdsError::ChartDomainError(format!("r = {r} on or beyond a horizon")));
            }
            cur = self.covector_step(r, &cur, step);
        }
        Ok(cur)
    }

    fn interior(&self, r: f64) -> bool {
        let h = &self.profile.spacetime.horizons;
        r > h.r_e && r < h.r_c
    }

    fn point_step(&self, p: &ChartPoint, (from, to): (Chart, Chart)) -> Result<ChartPoint> {
        let [t, r, ang, th] = p.coords;
        let k = self.k();
        let coords = match (from, to) {
            (Chart::Bl, Chart::Rot) | (Chart::Star, Chart::StarRot) => [t, r, ang - k * t, th],
            (Chart::Rot, Chart::Bl) | (Chart::StarRot, Chart::Star) => [t, r, ang + k * t, th],
            (Chart::Bl, Chart::Star) | (Chart::Star, Chart::Bl) => {
                if !self.interior(r) {
                    return Err(KdsError::ChartDomainError(format!("r = {r} on or beyond a horizon")));
                }
                let s = if from == Chart::Bl { -1.0 } else { 1.0 };
                [t + s * self.profile.phi(r), r, ang + s * self.profile.psi(r), th]
            }
            _ => unreachable!("route produces only graph edges"),
        };
        Ok(ChartPoint::new(to, coords))
    }

    fn covector_step(&self, r: f64, xi: &Covector, (from, to): (Chart, Chart)) -> Covector {
        let [xt, xr, xa, xth] = xi.xi;
        let k = self.k();
        let out = match (from, to) {
            (Chart::Bl, Chart::Rot) | (Chart::Star, Chart::StarRot) => [xt + k * xa, xr, xa, xth],
            (Chart::Rot, Chart::Bl) | (Chart::StarRot, Chart::Star) => [xt - k * xa, xr, xa, xth],
            (Chart::Bl, Chart::Star) => {
                [xt, xr + self.profile.phi_prime(r) * xt + self.profile.psi_prime(r) * xa, xa, xth]
            }
            (Chart::Star, Chart::Bl) => {
                [xt, xr - self.profile.phi_prime(r) * xt - self.profile.psi_prime(r) * xa, xa, xth]
            }
            _ => unreachable!("route produces only graph edges"),
        };
        Covector::new(to, out)
    }
}

/// Path in the chart graph Rot - Bl - Star - StarRot.
fn route(from: Chart, to: Chart) -> Vec<(Chart, Chart)> {
    let idx = |c: Chart| match c {
        Chart::Rot => 0i32,
        Chart::Bl => 1,
        Chart::Star => 2,
        Chart::StarRot => 3,
    };
    let line = [Chart::Rot, Chart::Bl, Chart::Star, Chart::StarRot];
    let (i, j) = (idx(from), idx(to));
    let step = (j - i).signum();
    let mut out = Vec::new();
    let mut cur = i;
    while cur != j {
        out.push((line[cur as usize], line[(cur + step) as usize]));
        cur += step;
    }
    out
}

/// Worst values of G*(dt*, dt*) over an (r, θ) grid of the slab.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceReport {
    pub n_grid: usize,
    /// Largest value of ρ² G*(dt*, dt*); must be negative.
    pub worst_dual_norm: f64,
    pub witness_r: f64,
    pub witness_theta: f64,
    pub mu_at_inner_end: f64,
    pub mu_at_outer_end: f64,
    pub pass: bool,
}

pub fn spacelike_slice_check(profile: &ExtensionProfile, n_grid: usize) -> SliceReport {
    let st = &profile.spacetime;
    let p = &st.params;
    let h = &st.horizons;
    let a2 = p.spin * p.spin;
    let b2 = p.b() * p.b();
    let (lo, hi) = profile.slab();
    let n_theta = 33;
    let theta_min = Tolerances::default().pole_margin;
    let mut worst = f64::NEG_INFINITY;
    let mut witness = (f64::NAN, f64::NAN);
    for r in verification_grid(lo, hi, h.r_e, h.r_c, n_grid.max(2)) {
        let am = profile.one_minus_f2_over_mu(r) * (r * r + a2).powi(2);
        for j in 0..n_theta {
            let th = theta_min + (std::f64::consts::PI - 2.0 * theta_min) * j as f64 / (n_theta - 1) as f64;
            let s2 = th.sin().powi(2);
            let v = b2 * (a2 * s2 / p.c_theta(th) - am);
            if v > worst {
                worst = v;
                witness = (r, th);
            }
        }
    }
    let mu_lo = p.mu(lo);
    let mu_hi = p.mu(hi);
    SliceReport {
        n_grid,
        worst_dual_norm: worst,
        witness_r: witness.0,
        witness_theta: witness.1,
        mu_at_inner_end: mu_lo,
        mu_at_outer_end: mu_hi,
        pass: worst < 0.0 && mu_lo < 0.0 && mu_hi < 0.0,
    }
}
