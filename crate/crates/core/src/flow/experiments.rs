//! Numerical experiments on the bicharacteristic flows: non-trapping of the
//! mode flow, the horizon radial sets, normally hyperbolic trapping of the
//! wave flow and conservation budgets.

use std::f64::consts::PI;

use rand::Rng;
use serde::Serialize;

use super::{mode_state, FlowKind, FlowSystem, Trajectory};
use crate::charts::{ChartPoint, Covector, ExtensionProfile, Chart};
use crate::error::{KdsError, Result};
use crate::integrate::{Event, IntegratorOptions, State, Termination};
use crate::par::{map_indexed, Exec};
use crate::sampling::{stream_rng, ModeCharSampler, WaveCharSampler};
use crate::symbols::{classify_s_pm, kappa_psi, time_pairing, wave_symbol_grad, SClass};
use crate::trapping::{characteristic_covector, f_eval, linearization, manifold_xi_r, Branch, TrappedOrbit};

const TAG_MODE_INIT: u64 = 1;
const TAG_MODE_ESCAPE: u64 = 2;
const TAG_CROSS_INNER: u64 = 3;
const TAG_CROSS_OUTER: u64 = 4;
const TAG_CROSS_FORMULA: u64 = 5;
const TAG_WAVE_ESCAPE: u64 = 6;
const TAG_WAVE_PERTURB: u64 = 7;
const TAG_CONS_WAVE: u64 = 8;
const TAG_CONS_MODE: u64 = 9;

/// Points used to select an escape constant.
pub const ESCAPE_SAMPLE: usize = 10_000;
/// Largest escape constant tried (2⁴⁰).
pub const ESCAPE_C_MAX: f64 = 1_099_511_627_776.0;
/// Pole margin for sampled latitudes.
pub const THETA_MIN: f64 = 0.1;

pub(crate) fn stream(seed: u64, tag: u64, index: u64) -> rand_chacha::ChaCha8Rng {
    stream_rng(seed, (tag << 40) | index)
}

fn region_events(lo: f64, hi: f64) -> [Event; 2] {
    [Event::terminal("inner", 1, lo), Event::terminal("outer", 1, hi)]
}

/// Drift budget for a run of affine length `len`: 1e-8 per 100 units.
pub fn drift_budget(len: f64) -> f64 {
    1e-8 * (len.abs() / 100.0).max(1.0)
}

/// Outcome of the doubling search for an escape constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EscapeSelection {
    pub c: f64,
    pub doublings: u32,
    pub n_points: usize,
    /// Smallest normalized margin (in [-1, 1]) at the accepted C.
    pub worst_margin: f64,
    pub ok: bool,
}

/// Smallest normalized margin over `points`; `margin(C, p)` returns
/// (value, absolute scale).
fn worst_margin<P, F: Fn(f64, &P) -> (f64, f64)>(c: f64, points: &[P], margin: &F) -> f64 {
    points
        .iter()
        .map(|p| {
            let (v, s) = margin(c, p);
            if s > 0.0 {
                v / s
            } else {
                -1.0
            }
        })
        .fold(f64::INFINITY, f64::min)
}

fn select_escape_constant<P, F: Fn(f64, &P) -> (f64, f64)>(points: &[P], margin: F) -> EscapeSelection {
    let mut c = 1.0;
    let mut doublings = 0;
    loop {
        let w = worst_margin(c, points, &margin);
        if w > 0.0 || c >= ESCAPE_C_MAX {
            return EscapeSelection {
                c,
                doublings,
                n_points: points.len(),
                worst_margin: w,
                ok: w > 0.0,
            };
        }
        c *= 2.0;
        doublings += 1;
    }
}

/// (d, H_q r, H_q² r) for a ROT state with d = r - center, using
/// H_q r = 2μξ_r and H_q² r = 2μ' (H_q r) ξ_r + 2μ H_q ξ_r.
fn radial_jet(sys: &FlowSystem, y: &State, center: f64) -> Option<(f64, f64, f64)> {
    let d = sys.rhs(y)?;
    let p = &sys.profile.spacetime.params;
    let (r, xr) = (y[1], y[5]);
    let h2 = 2.0 * p.mu_prime(r) * d[1] * xr + 2.0 * p.mu(r) * d[5];
    Some((r - center, d[1], h2))
}

/// Mode escape function E = exp(C d²) H_q r, d = r - r₀: the sign of
/// d·(2C d (H_q r)² + H_q² r) must be positive.
fn mode_margin(c: f64, j: &(f64, f64, f64)) -> (f64, f64) {
    let (d, hr, h2) = *j;
    (d * (2.0 * c * d * hr * hr + h2), d.abs() * (2.0 * c * d.abs() * hr * hr + h2.abs()))
}

/// Wave escape function E = exp(C d²) H_q d², d = r - r_trap:
/// H_q E ≥ 0 iff 4C d² (H_q r)² + 2(H_q r)² + 2d H_q² r ≥ 0.
fn wave_margin(c: f64, j: &(f64, f64, f64)) -> (f64, f64) {
    let (d, hr, h2) = *j;
    let a = 4.0 * c * d * d * hr * hr + 2.0 * hr * hr;
    (a + 2.0 * d * h2, a + 2.0 * (d * h2).abs())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeNoTrappingReport {
    pub lambda: f64,
    pub mass: f64,
    pub spin: f64,
    pub epsilon: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub span: f64,
    pub exited_future: usize,
    pub exited_past: usize,
    pub longest_exit: f64,
    pub escape: EscapeSelection,
    pub trajectory_points: usize,
    pub trajectory_worst_margin: f64,
    pub max_q_drift: f64,
    pub max_k_drift: f64,
    pub drift_ok: bool,
    pub pass: bool,
}

/// Integrates sampled ROT mode bicharacteristics in both directions and
/// checks that each leaves (r_e + ε, r_c - ε); selects an escape constant
/// for E = exp(C(r - r₀)²) H_q r.
pub fn mode_no_trapping_experiment(
    profile: &ExtensionProfile,
    epsilon: f64,
    n_samples: usize,
    seed: u64,
    exec: Exec,
) -> Result<ModeNoTrappingReport> {
    let st = &profile.spacetime;
    let h = &st.horizons;
    if !(epsilon > 0.0 && 2.0 * epsilon < h.r_c - h.r_e) {
        return Err(KdsError::InvalidParams(format!("epsilon {epsilon} out of range")));
    }
    let (lo, hi) = (h.r_e + epsilon, h.r_c - epsilon);
    let sampler = ModeCharSampler::new(st, lo, hi, THETA_MIN)?;
    let sys = FlowSystem::new(FlowKind::ModeRot, profile);
    let span = 1e4;
    let opts = IntegratorOptions::with_tol(1e-10);
    let events = region_events(lo, hi);

    let escape_pts: Vec<(f64, f64, f64)> = map_indexed(exec, ESCAPE_SAMPLE, |j| {
        let y = sampler.sample(&mut stream(seed, TAG_MODE_ESCAPE, j as u64))?;
        radial_jet(&sys, &y, h.r0).ok_or_else(|| KdsError::DomainError("escape sample outside domain".into()))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let escape = select_escape_constant(&escape_pts, mode_margin);

    struct Run {
        exits: [bool; 2],
        longest: f64,
        jets: Vec<(f64, f64, f64)>,
        q_drift: f64,
        k_drift: f64,
        drift_ok: bool,
    }
    let runs: Vec<Result<Run>> = map_indexed(exec, n_samples, |i| {
        let y0 = sampler.sample(&mut stream(seed, TAG_MODE_INIT, i as u64))?;
        let mut run = Run {
            exits: [false; 2],
            longest: 0.0,
            jets: Vec::new(),
            q_drift: 0.0,
            k_drift: 0.0,
            drift_ok: true,
        };
        for (k, dir) in [1.0, -1.0].into_iter().enumerate() {
            let t = sys.run(&y0, dir * span, &opts, &events)?;
            run.exits[k] = t.termination == Termination::Event;
            run.longest = run.longest.max(t.s_end.abs());
            run.q_drift = run.q_drift.max(t.q_drift);
            run.k_drift = run.k_drift.max(t.k_drift);
            run.drift_ok &= t.q_drift <= drift_budget(t.s_end) && t.k_drift <= drift_budget(t.s_end);
            run.jets.extend(t.samples.iter().filter_map(|(_, y)| radial_jet(&sys, y, h.r0)));
        }
        Ok(run)
    });
    let runs: Vec<Run> = runs.into_iter().collect::<Result<_>>()?;
    let jets: Vec<(f64, f64, f64)> = runs.iter().flat_map(|r| r.jets.iter().copied()).collect();
    let traj_margin = worst_margin(escape.c, &jets, &mode_margin);
    let exited_future = runs.iter().filter(|r| r.exits[0]).count();
    let exited_past = runs.iter().filter(|r| r.exits[1]).count();
    let drift_ok = runs.iter().all(|r| r.drift_ok);
    Ok(ModeNoTrappingReport {
        lambda: st.params.lambda,
        mass: st.params.mass,
        spin: st.params.spin,
        epsilon,
        n_samples,
        seed,
        span,
        exited_future,
        exited_past,
        longest_exit: runs.iter().map(|r| r.longest).fold(0.0, f64::max),
        escape,
        trajectory_points: jets.len(),
        trajectory_worst_margin: traj_margin,
        max_q_drift: runs.iter().map(|r| r.q_drift).fold(0.0, f64::max),
        max_k_drift: runs.iter().map(|r| r.k_drift).fold(0.0, f64::max),
        drift_ok,
        pass: exited_future == n_samples && exited_past == n_samples && escape.ok && traj_margin > 0.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonCrossingReport {
    pub lambda: f64,
    pub mass: f64,
    pub spin: f64,
    pub seed: u64,
    pub delta: f64,
    /// Largest relative mismatch of H_q r at r_e and r_c against the closed form.
    pub closed_form_error: f64,
    pub beta1: f64,
    /// Largest relative componentwise mismatch of ξ_r⁻¹ H_q on N*{r = r_e}.
    pub conormal_error: f64,
    /// Relative error of ξ_r along N*{r = r_e} against ξ_r' = -μ'(r_e) ξ_r².
    pub fiber_growth_error: f64,
    pub n_samples: usize,
    pub inner_reached: usize,
    pub outer_reached: usize,
    pub class_flips: usize,
    pub longest_run: f64,
    pub max_q_drift: f64,
    pub max_k_drift: f64,
    pub drift_ok: bool,
    pub pass: bool,
}

/// Closed form of H_q r on a horizon in STARROT: -2ab f(r_h) κ_ψ(r_h) ξ_ψ.
pub fn horizon_hq_r(profile: &ExtensionProfile, r_h: f64, xi_psi: f64) -> f64 {
    let st = &profile.spacetime;
    let p = &st.params;
    -2.0 * p.spin * p.b() * profile.f(r_h) * kappa_psi(st, r_h) * xi_psi
}

/// Smallest transverse share |(ξ_ψ, ξ_θ)|/|ξ| of an S₊ sample.
pub const S_PLUS_TRANSVERSE: f64 = 0.05;

/// Random normalized S₊ characteristic STARROT mode state with r in `r_range`.
pub fn s_plus_sample<R: Rng>(profile: &ExtensionProfile, rng: &mut R, r_range: (f64, f64)) -> Result<State> {
    let st = &profile.spacetime;
    let sys = FlowSystem::new(FlowKind::ModeStarRot, profile);
    for _ in 0..10_000 {
        let r = rng.gen_range(r_range.0..r_range.1);
        let th = rng.gen_range(THETA_MIN..PI - THETA_MIN);
        let ang = rng.gen_range(0.0..2.0 * PI);
        let (xp, xth) = (ang.cos(), ang.sin().abs());
        // q = μ ξ_r² + B1 ξ_r + q0 with B1 = ∂q/∂ξ_r at ξ_r = 0
        let y0 = mode_state(r, 0.0, th, [0.0, xp, xth]);
        let g0 = sys.gradient(&y0)?;
        let q0 = g0.value;
        let b1 = g0.dxi[1];
        let mu = st.params.mu(r);
        let disc = b1 * b1 - 4.0 * mu * q0;
        if disc < 0.0 {
            continue;
        }
        let qq = -0.5 * (b1 + b1.signum() * disc.sqrt());
        let mut roots = Vec::new();
        if mu != 0.0 && qq != 0.0 {
            roots.push(qq / mu);
        }
        if qq != 0.0 {
            roots.push(q0 / qq);
        }
        for xr in roots {
            let mut y = mode_state(r, 0.0, th, [xr, xp, xth]);
            let n = (xr * xr + xp * xp + xth * xth).sqrt();
            // near the conormal of the horizon the flow is nearly stationary
            if (xp * xp + xth * xth).sqrt() < S_PLUS_TRANSVERSE * n {
                continue;
            }
            for v in &mut y[5..] {
                *v /= n;
            }
            let pt = ChartPoint::new(Chart::StarRot, [0.0, y[1], 0.0, y[3]]);
            let cov = Covector::new(Chart::StarRot, [0.0, y[5], y[6], y[7]]);
            if let Ok(SClass::Plus) = classify_s_pm(profile, &pt, &cov, 1e-10) {
                return Ok(y);
            }
        }
    }
    Err(KdsError::SampleConstructionFailure("no S+ covector found near the horizon".into()))
}

/// Radial-point checks at the horizons for the STARROT mode flow.
pub fn horizon_crossing_check(profile: &ExtensionProfile, n_samples: usize, seed: u64, exec: Exec) -> Result<HorizonCrossingReport> {
    let st = &profile.spacetime;
    let p = &st.params;
    let h = &st.horizons;
    let sys = FlowSystem::new(FlowKind::ModeStarRot, profile);
    let delta = profile.delta;
    let width = h.r_c - h.r_e;

    // closed form of H_q r on both horizons
    let mut closed_form_error: f64 = 0.0;
    let mut rng = stream(seed, TAG_CROSS_FORMULA, 0);
    for _ in 0..64 {
        for r_h in [h.r_e, h.r_c] {
            let th = rng.gen_range(THETA_MIN..PI - THETA_MIN);
            let xi = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let y = mode_state(r_h, 0.0, th, xi);
            let d = sys.ham_rhs(&y)?;
            let closed = horizon_hq_r(profile, r_h, xi[1]);
            let scale = closed.abs() + 2.0 * p.mu_scale(r_h) * xi[0].abs() + 1e-300;
            closed_form_error = closed_form_error.max((d[1] - closed).abs() / scale);
        }
    }

    // conormal restriction on N*{r = r_e}
    let beta1 = 2.0 * p.mu_prime(h.r_e);
    let mut conormal_error: f64 = 0.0;
    for (j, xr) in [-2.0, -0.5, 0.5, 3.0].into_iter().enumerate() {
        let th = 0.4 + 0.6 * j as f64;
        let y = mode_state(h.r_e, 0.0, th, [xr, 0.0, 0.0]);
        let d = sys.ham_rhs(&y)?;
        let expect_psi = 2.0 * p.spin * p.b() * kappa_psi(st, h.r_e);
        let expect_xr = -p.mu_prime(h.r_e) * xr;
        let scale = expect_psi.abs() + expect_xr.abs();
        let got = [d[1] / xr, d[2] / xr, d[3] / xr, d[5] / xr, d[7] / xr];
        let want = [0.0, expect_psi, 0.0, expect_xr, 0.0];
        for k in 0..5 {
            conormal_error = conormal_error.max((got[k] - want[k]).abs() / scale);
        }
    }

    // fiber growth along the conormal: ξ_r(s) = ξ₀ / (1 + μ'(r_e) ξ₀ s)
    let fiber_growth_error = {
        let x0 = -1.0;
        let s_end = 0.9 / p.mu_prime(h.r_e);
        let y = mode_state(h.r_e, 0.0, 1.0, [x0, 0.0, 0.0]);
        let t = sys.run_with(&y, s_end, &IntegratorOptions::with_tol(1e-12), &[], false)?;
        let exact = x0 / (1.0 + p.mu_prime(h.r_e) * x0 * s_end);
        (t.y_end[5] - exact).abs() / exact.abs()
    };

    let events = region_events(h.r_e - delta, h.r_c + delta);
    let opts = IntegratorOptions::with_tol(1e-10);
    let band = 0.02 * width;
    struct Run {
        reached: bool,
        flips: usize,
        len: f64,
        q_drift: f64,
        k_drift: f64,
        drift_ok: bool,
    }
    let one = |tag: u64, i: usize, range: (f64, f64), target: &str| -> Result<Run> {
        let y0 = s_plus_sample(profile, &mut stream(seed, tag, i as u64), range)?;
        let t = sys.run(&y0, 1e4, &opts, &events)?;
        Ok(Run {
            reached: t.exited_via() == Some(target),
            flips: class_flips(profile, &t),
            len: t.s_end.abs(),
            q_drift: t.q_drift,
            k_drift: t.k_drift,
            drift_ok: t.q_drift <= drift_budget(t.s_end) && t.k_drift <= drift_budget(t.s_end),
        })
    };
    let inner: Vec<Run> = map_indexed(exec, n_samples, |i| one(TAG_CROSS_INNER, i, (h.r_e, h.r_e + band), "inner"))
        .into_iter()
        .collect::<Result<_>>()?;
    let outer: Vec<Run> = map_indexed(exec, n_samples, |i| one(TAG_CROSS_OUTER, i, (h.r_c - band, h.r_c), "outer"))
        .into_iter()
        .collect::<Result<_>>()?;
    let all = inner.iter().chain(outer.iter());
    let inner_reached = inner.iter().filter(|r| r.reached).count();
    let outer_reached = outer.iter().filter(|r| r.reached).count();
    let class_flips_total: usize = all.clone().map(|r| r.flips).sum();
    let drift_ok = all.clone().all(|r| r.drift_ok);
    let pass = closed_form_error <= 1e-9
        && beta1 > 0.0
        && conormal_error <= 1e-9
        && fiber_growth_error <= 1e-7
        && inner_reached == n_samples
        && outer_reached == n_samples
        && class_flips_total == 0;
    Ok(HorizonCrossingReport {
        lambda: p.lambda,
        mass: p.mass,
        spin: p.spin,
        seed,
        delta,
        closed_form_error,
        beta1,
        conormal_error,
        fiber_growth_error,
        n_samples,
        inner_reached,
        outer_reached,
        class_flips: class_flips_total,
        longest_run: all.clone().map(|r| r.len).fold(0.0, f64::max),
        max_q_drift: all.clone().map(|r| r.q_drift).fold(0.0, f64::max),
        max_k_drift: all.map(|r| r.k_drift).fold(0.0, f64::max),
        drift_ok,
        pass,
    })
}

/// Sign changes of the dτ* pairing along a STARROT mode trajectory.
pub fn class_flips(profile: &ExtensionProfile, t: &Trajectory) -> usize {
    let mut flips = 0;
    let mut prev: Option<bool> = None;
    for (_, y) in &t.samples {
        let xi = [0.0, y[5], y[6], y[7]];
        let pr = time_pairing(profile, y[1], y[3], &xi);
        let n = (y[5] * y[5] + y[6] * y[6] + y[7] * y[7]).sqrt();
        if pr.abs() <= 1e-12 * n {
            continue;
        }
        let s = pr > 0.0;
        if let Some(ps) = prev {
            if ps != s {
                flips += 1;
            }
        }
        prev = Some(s);
    }
    flips
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WaveTrappingConfig {
    /// Radial displacement of perturbed data, relative to r_c - r_e.
    pub perturbation: f64,
    /// Requested affine length of the on-Γ run; capped by [`shadowing_time`].
    pub span: f64,
    /// Cap on the affine length of runs expected to leave the region.
    pub exit_span: f64,
    pub n_perturbed: usize,
    pub n_escape_samples: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for WaveTrappingConfig {
    fn default() -> Self {
        Self {
            perturbation: 1e-3,
            span: 100.0,
            exit_span: 1e5,
            n_perturbed: 4,
            n_escape_samples: ESCAPE_SAMPLE,
            tol: 1e-10,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub rate: f64,
    pub r_squared: f64,
    pub points: usize,
    pub window: (f64, f64),
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaveTrappingReport {
    pub xi_t: f64,
    pub xi_phi: f64,
    pub theta0: f64,
    pub r_trap: f64,
    /// √(2μ b² F''), the normal rate in the q-parametrization.
    pub q_rate: f64,
    pub on_gamma_deviation: f64,
    pub on_gamma_span: f64,
    pub unstable: Option<RateFit>,
    pub stable: Option<RateFit>,
    pub unstable_backward: Option<RateFit>,
    pub manifold_residual: f64,
    pub jacobian_error: f64,
    pub escape: EscapeSelection,
    pub escape_trajectory_margin: f64,
    pub escape_monotone: bool,
    pub perturbed_exited: usize,
    pub n_perturbed: usize,
    pub max_q_drift: f64,
    pub max_k_drift: f64,
    pub drift_ok: bool,
    pub pass: bool,
}

/// ROT wave state at (r, θ) on the orbit's (ξ_t, ξ_φ) with ξ_θ from the symbol.
pub fn wave_state(profile: &ExtensionProfile, orbit: &TrappedOrbit, r: f64, theta: f64, xi_r: f64) -> Option<State> {
    let xi = characteristic_covector(&profile.spacetime, orbit.xi_t, orbit.xi_phi, r, theta, xi_r)?;
    Some([0.0, r, 0.0, theta, xi[0], xi[1], xi[2], xi[3]])
}

/// Affine time over which an initial radial error of one rounding unit in
/// r_trap stays below 10·tol under growth cosh(λs), λ the q-rate.
pub fn shadowing_time(orbit: &TrappedOrbit, tol: f64) -> f64 {
    let d0 = 2.0 * f64::EPSILON * orbit.r_trap.abs();
    ((10.0 * tol / d0).max(1.0)).acosh() / orbit.rate_numerator
}

/// Latitudes in (θ_min, π - θ_min) where the orbit has characteristic data at r_trap.
pub fn admissible_latitudes(profile: &ExtensionProfile, orbit: &TrappedOrbit, n: usize) -> Vec<f64> {
    (0..n)
        .map(|j| THETA_MIN + (PI - 2.0 * THETA_MIN) * (j as f64 + 0.5) / n as f64)
        .filter(|&th| wave_state(profile, orbit, orbit.r_trap, th, 0.0).is_some())
        .collect()
}

/// Least-squares slope of ln|d| against s over the widest sub-window of
/// [lo, hi] (in |d|) with R² > 0.999.
fn fit_rate(samples: &[(f64, f64)], lo: f64, hi: f64, expected: f64) -> Option<RateFit> {
    let mut best: Option<RateFit> = None;
    for shrink in 0..12 {
        let (wl, wh) = ((lo * 2f64.powi(shrink / 2)), hi / 2f64.powi((shrink + 1) / 2));
        if wl >= wh {
            break;
        }
        let pts: Vec<(f64, f64)> = samples
            .iter()
            .filter(|(_, d)| d.abs() >= wl && d.abs() <= wh)
            .map(|&(s, d)| (s, d.abs().ln()))
            .collect();
        if pts.len() < 5 {
            continue;
        }
        let n = pts.len() as f64;
        let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
        if sxx <= 0.0 || syy <= 0.0 {
            continue;
        }
        let slope = sxy / sxx;
        let r2 = sxy * sxy / (sxx * syy);
        let fit = RateFit {
            rate: slope,
            r_squared: r2,
            points: pts.len(),
            window: (wl, wh),
            rel_error: (slope.abs() - expected).abs() / expected,
        };
        if r2 > 0.999 {
            return Some(fit);
        }
        if best.as_ref().is_none_or(|b| r2 > b.r_squared) {
            best = Some(fit);
        }
    }
    best
}

/// Finite-difference Jacobian of (H_p r, H_p ξ_r), p = q/ρ², in (r, ξ_r) at
/// the Γ point over latitude θ, compared with the closed-form linearization.
pub fn gamma_jacobian_error(profile: &ExtensionProfile, orbit: &TrappedOrbit, theta: f64) -> Result<f64> {
    let st = &profile.spacetime;
    let y0 = wave_state(profile, orbit, orbit.r_trap, theta, 0.0)
        .ok_or_else(|| KdsError::DomainError("no characteristic data at this latitude".into()))?;
    let field = |y: &State| -> [f64; 2] {
        let g = wave_symbol_grad(st, y[1], y[3], &[y[4], y[5], y[6], y[7]]);
        let rho2 = st.params.rho2(y[1], y[3]);
        [g.dxi[1] / rho2, (-g.dx[1] + g.value * 2.0 * y[1] / rho2) / rho2]
    };
    let lin = linearization(st, orbit, theta)?;
    let xi_scale = y0[4..].iter().map(|v| v.abs()).fold(0.0, f64::max);
    let steps = [1e-4 * orbit.r_trap, 1e-4 * xi_scale];
    let mut jac = [[0.0; 2]; 2];
    for (col, idx) in [1usize, 5].into_iter().enumerate() {
        let diff = |e: f64| {
            let (mut yp, mut ym) = (y0, y0);
            yp[idx] += e;
            ym[idx] -= e;
            let (fp, fm) = (field(&yp), field(&ym));
            [(fp[0] - fm[0]) / (2.0 * e), (fp[1] - fm[1]) / (2.0 * e)]
        };
        let (d1, d2) = (diff(steps[col]), diff(0.5 * steps[col]));
        for row in 0..2 {
            jac[row][col] = (4.0 * d2[row] - d1[row]) / 3.0;
        }
    }
    let norm = lin.matrix.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
    let mut err: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            err = err.max((jac[i][j] - lin.matrix[i][j]).abs() / norm);
        }
    }
    Ok(err)
}

/// Dynamics near Γ for one trapped orbit and latitude θ0.
pub fn wave_trapping_experiment(
    profile: &ExtensionProfile,
    orbit: &TrappedOrbit,
    theta0: f64,
    cfg: &WaveTrappingConfig,
) -> Result<WaveTrappingReport> {
    if !orbit.has_trapped_radius() {
        return Err(KdsError::DomainError("orbit has no trapped radius".into()));
    }
    let st = &profile.spacetime;
    let p = &st.params;
    let h = &st.horizons;
    let width = h.r_c - h.r_e;
    let rt = orbit.r_trap;
    // the exit region must contain r_trap, which can sit close to a horizon
    let eps = (0.05 * width).min(0.5 * (rt - h.r_e)).min(0.5 * (h.r_c - rt));
    let (lo, hi) = (h.r_e + eps, h.r_c - eps);
    let sys = FlowSystem::new(FlowKind::WaveRot, profile);
    let opts = IntegratorOptions::with_tol(cfg.tol);
    let q_rate = orbit.rate_numerator;
    let no_data = || KdsError::DomainError(format!("no characteristic data at θ = {theta0}"));
    let mut drifts: Vec<(f64, f64, f64)> = Vec::new();
    let mut off_gamma: Vec<Trajectory> = Vec::new();

    // (i) on Γ, over the time before rounding in r_trap can leave the tube
    let on_gamma_span = cfg.span.min(shadowing_time(orbit, cfg.tol));
    let y_gamma = wave_state(profile, orbit, rt, theta0, 0.0).ok_or_else(no_data)?;
    let t = sys.run(&y_gamma, on_gamma_span, &opts, &region_events(lo, hi))?;
    let on_gamma_deviation = t.samples.iter().map(|(_, y)| (y[1] - rt).abs()).fold(0.0, f64::max);
    drifts.push((t.q_drift, t.k_drift, t.s_end));

    // (ii) unstable branch, forward
    let d0 = 1e-7 * width;
    let window_hi = (0.01 * width).min(0.4 * eps);
    let y_u = {
        let r = rt + d0;
        let xr = manifold_xi_r(st, orbit, r, Branch::Unstable)?;
        wave_state(profile, orbit, r, theta0, xr).ok_or_else(no_data)?
    };
    let stop = [Event::terminal("lower", 1, rt - 2.0 * window_hi), Event::terminal("upper", 1, rt + 2.0 * window_hi)];
    let tu = sys.run(&y_u, cfg.exit_span, &opts, &stop)?;
    let series = |t: &Trajectory| t.samples.iter().map(|(s, y)| (*s, y[1] - rt)).collect::<Vec<_>>();
    let unstable = fit_rate(&series(&tu), 10.0 * d0, window_hi, q_rate);
    let f_scale = p.b() * p.b() * orbit.f_trap.abs();
    let manifold_residual = tu
        .samples
        .iter()
        .filter(|(_, y)| (y[1] - rt).abs() <= window_hi)
        .map(|(_, y)| {
            let f = f_eval(st, orbit.xi_t, orbit.xi_phi, y[1], 0).unwrap_or(f64::NAN);
            (p.mu(y[1]) * y[5] * y[5] - p.b() * p.b() * (f - orbit.f_trap)).abs() / f_scale
        })
        .fold(0.0, f64::max);
    drifts.push((tu.q_drift, tu.k_drift, tu.s_end));

    // (iii) stable branch forward, and the unstable branch backward
    let d_start = 0.5 * window_hi;
    let mut converge = |branch: Branch, dir: f64| -> Result<(Option<RateFit>, Trajectory)> {
        let r = rt - d_start;
        let xr = manifold_xi_r(st, orbit, r, branch)?;
        let y = wave_state(profile, orbit, r, theta0, xr).ok_or_else(no_data)?;
        let ev = [Event::terminal("close", 1, rt - 1e-6 * width)];
        let t = sys.run(&y, dir * cfg.exit_span, &opts, &ev)?;
        let fit = fit_rate(&series(&t), 1e-5 * width, d_start, q_rate);
        drifts.push((t.q_drift, t.k_drift, t.s_end));
        Ok((fit, t))
    };
    let (stable, ts) = converge(Branch::Stable, 1.0)?;
    let (unstable_backward, tb) = converge(Branch::Unstable, -1.0)?;

    // (v) perturbed data leave the region
    let mut perturbed_exited = 0;
    for i in 0..cfg.n_perturbed {
        let mut rng = stream(cfg.seed, TAG_WAVE_PERTURB, i as u64);
        let side = if i % 2 == 0 { 1.0 } else { -1.0 };
        let r = rt + side * cfg.perturbation * width * rng.gen_range(0.5..1.5);
        let mag = manifold_xi_r(st, orbit, r, Branch::Unstable)?.abs();
        let xr = mag * rng.gen_range(-0.9..0.9);
        let Some(y) = wave_state(profile, orbit, r, theta0, xr) else { continue };
        let t = sys.run(&y, cfg.exit_span, &opts, &region_events(lo, hi))?;
        if t.termination == Termination::Event {
            perturbed_exited += 1;
        }
        drifts.push((t.q_drift, t.k_drift, t.s_end));
        off_gamma.push(t);
    }
    off_gamma.push(tu);
    off_gamma.push(ts);
    off_gamma.push(tb);

    // (iv) escape function
    let sampler = WaveCharSampler::new(st, Some((orbit.xi_t, orbit.xi_phi)), lo, hi, THETA_MIN);
    let mut pts = Vec::with_capacity(cfg.n_escape_samples);
    for j in 0..cfg.n_escape_samples {
        let y = sampler.sample(&mut stream(cfg.seed, TAG_WAVE_ESCAPE, j as u64))?;
        if let Some(jet) = radial_jet(&sys, &y, rt) {
            pts.push(jet);
        }
    }
    let escape = select_escape_constant(&pts, wave_margin);
    let mut traj_margin = f64::INFINITY;
    let mut monotone = true;
    for t in &off_gamma {
        let jets: Vec<(f64, f64, f64)> = t.samples.iter().filter_map(|(_, y)| radial_jet(&sys, y, rt)).collect();
        let off: Vec<(f64, f64, f64)> = jets.iter().copied().filter(|j| j.0 != 0.0 || j.1 != 0.0).collect();
        traj_margin = traj_margin.min(worst_margin(escape.c, &off, &wave_margin));
        // E scaled by exp(-C d_max²) to stay finite
        let dmax2 = jets.iter().map(|j| j.0 * j.0).fold(0.0, f64::max);
        let e: Vec<f64> = jets.iter().map(|j| (escape.c * (j.0 * j.0 - dmax2)).exp() * 2.0 * j.0 * j.1).collect();
        let e_scale = e.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let dir = t.s_end.signum();
        monotone &= e.windows(2).all(|w| dir * (w[1] - w[0]) >= -1e-8 * e_scale);
    }

    let jacobian_error = gamma_jacobian_error(profile, orbit, theta0)?;
    let max_q_drift = drifts.iter().map(|d| d.0).fold(0.0, f64::max);
    let max_k_drift = drifts.iter().map(|d| d.1).fold(0.0, f64::max);
    let drift_ok = drifts.iter().all(|d| d.0 <= drift_budget(d.2) && d.1 <= drift_budget(d.2));
    let fit_ok = |f: &Option<RateFit>| f.as_ref().is_some_and(|f| f.r_squared > 0.999 && f.rel_error <= 0.05);
    let pass = on_gamma_deviation <= 10.0 * cfg.tol
        && fit_ok(&unstable)
        && fit_ok(&stable)
        && fit_ok(&unstable_backward)
        && escape.ok
        && traj_margin > 0.0
        && monotone
        && perturbed_exited == cfg.n_perturbed
        && jacobian_error <= 1e-6;
    Ok(WaveTrappingReport {
        xi_t: orbit.xi_t,
        xi_phi: orbit.xi_phi,
        theta0,
        r_trap: rt,
        q_rate,
        on_gamma_deviation,
        on_gamma_span,
        unstable,
        stable,
        unstable_backward,
        manifold_residual,
        jacobian_error,
        escape,
        escape_trajectory_margin: traj_margin,
        escape_monotone: monotone,
        perturbed_exited,
        n_perturbed: cfg.n_perturbed,
        max_q_drift,
        max_k_drift,
        drift_ok,
        pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConservationReport {
    pub n_wave: usize,
    pub n_mode: usize,
    pub span: f64,
    pub tol: f64,
    pub max_q_drift: f64,
    pub max_k_drift: f64,
    pub pass: bool,
}

/// Random characteristic wave and mode data integrated over `span` (or until
/// they leave the region), tracking q and K drift.
pub fn conservation_runs(profile: &ExtensionProfile, n: usize, seed: u64, span: f64, tol: f64, exec: Exec) -> Result<ConservationReport> {
    let st = &profile.spacetime;
    let h = &st.horizons;
    let eps = 0.05 * (h.r_c - h.r_e);
    let (lo, hi) = (h.r_e + eps, h.r_c - eps);
    let events = region_events(lo, hi);
    let opts = IntegratorOptions::with_tol(tol);
    let wave = WaveCharSampler::new(st, None, lo, hi, THETA_MIN);
    let wave_sys = FlowSystem::new(FlowKind::WaveRot, profile);
    let mut drifts: Vec<(f64, f64)> = map_indexed(exec, n, |i| -> Result<(f64, f64)> {
        let y = wave.sample(&mut stream(seed, TAG_CONS_WAVE, i as u64))?;
        let t = wave_sys.run_with(&y, span, &opts, &events, false)?;
        Ok((t.q_drift, t.k_drift))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let n_wave = drifts.len();
    let mut n_mode = 0;
    if let Ok(mode) = ModeCharSampler::new(st, lo, hi, THETA_MIN) {
        let mode_sys = FlowSystem::new(FlowKind::ModeRot, profile);
        let md: Vec<(f64, f64)> = map_indexed(exec, n, |i| -> Result<(f64, f64)> {
            let y = mode.sample(&mut stream(seed, TAG_CONS_MODE, i as u64))?;
            let t = mode_sys.run_with(&y, span, &opts, &events, false)?;
            Ok((t.q_drift, t.k_drift))
        })
        .into_iter()
        .collect::<Result<_>>()?;
        n_mode = md.len();
        drifts.extend(md);
    }
    let max_q_drift = drifts.iter().map(|d| d.0).fold(0.0, f64::max);
    let max_k_drift = drifts.iter().map(|d| d.1).fold(0.0, f64::max);
    Ok(ConservationReport {
        n_wave,
        n_mode,
        span,
        tol,
        max_q_drift,
        max_k_drift,
        pass: max_q_drift <= drift_budget(span) && max_k_drift <= drift_budget(span),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charts::{build_extension, default_delta};
    use crate::radial::Spacetime;
    use crate::trapping::trapped_radius;

    fn profile(l: f64, m: f64, a: f64) -> ExtensionProfile {
        let st = Spacetime::from_triple(l, m, a).unwrap();
        build_extension(&st, default_delta(&st)).unwrap()
    }

    #[test]
    fn escape_constant_doubles_until_positive() {
        // needs 2C d (hr)² > -h2 with d = 1, hr = 1, h2 = -5
        let sel = select_escape_constant(&[(1.0, 1.0, -5.0)], mode_margin);
        assert!(sel.ok);
        assert_eq!(sel.c, 4.0);
    }

    #[test]
    fn mode_no_trapping_high_spin() {
        let pr = profile(0.02, 1.0, 0.9);
        let h = &pr.spacetime.horizons;
        let rep = mode_no_trapping_experiment(&pr, 0.05 * (h.r_c - h.r_e), 30, 1, Exec::Parallel).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert!(rep.drift_ok, "{rep:?}");
    }

    #[test]
    fn horizon_crossing_high_spin() {
        let pr = profile(0.02, 1.0, 0.9);
        let rep = horizon_crossing_check(&pr, 8, 1, Exec::Parallel).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn nonrotating_horizon_has_no_transversal_term() {
        let pr = profile(0.06, 1.0, 0.0);
        let h = &pr.spacetime.horizons;
        assert_eq!(horizon_hq_r(&pr, h.r_e, 0.7), 0.0);
        let sys = FlowSystem::new(FlowKind::ModeStarRot, &pr);
        let span = 0.5 / pr.spacetime.params.mu_prime(h.r_e);
        let t = sys
            .run(&mode_state(h.r_e, 0.0, 1.0, [-1.0, 0.5, 0.0]), span, &IntegratorOptions::with_tol(1e-12), &[])
            .unwrap();
        assert!(t.samples.iter().all(|(_, y)| (y[1] - h.r_e).abs() < 1e-12));
    }

    #[test]
    fn photon_sphere_dynamics() {
        let pr = profile(0.06, 1.0, 0.0);
        let o = trapped_radius(&pr.spacetime, 1.0, 0.5, 1e-14).unwrap();
        let th = admissible_latitudes(&pr, &o, 9)[4];
        let rep = wave_trapping_experiment(&pr, &o, th, &WaveTrappingConfig::default()).unwrap();
        assert!(rep.pass, "{rep:#?}");
    }

    #[test]
    fn high_spin_orbit_dynamics() {
        let pr = profile(0.02, 1.0, 0.9);
        let o = trapped_radius(&pr.spacetime, -0.8, 0.6, 1e-14).unwrap();
        let lats = admissible_latitudes(&pr, &o, 16);
        let rep = wave_trapping_experiment(&pr, &o, lats[lats.len() / 2], &WaveTrappingConfig::default()).unwrap();
        assert!(rep.pass, "{rep:#?}");
    }

    #[test]
    fn conservation_budget() {
        let pr = profile(0.02, 1.0, 0.9);
        let rep = conservation_runs(&pr, 10, 3, 100.0, 1e-10, Exec::Parallel).unwrap();
        assert!(rep.pass, "{rep:?}");
    }
}
