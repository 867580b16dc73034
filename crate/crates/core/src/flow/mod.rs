//! Bicharacteristic flows of the mode symbol (rotating charts) and of the
//! full wave symbol (ROT chart).
//!
//! States use one layout for every kind:
//! `[time, r, angle, θ, ξ_time, ξ_r, ξ_angle, ξ_θ]`. Mode flows keep the
//! time slots at zero. ξ_angle and ξ_time have identically vanishing
//! derivatives, so they are carried exactly.

pub mod experiments;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::charts::{Chart, ExtensionProfile};
use crate::error::{KdsError, Result};
use crate::integrate::{integrate, Event, EventHit, IntegratorOptions, State, Termination};
use crate::symbols::{kappa_psi, mode_rot_grad, mode_starrot_grad, wave_symbol_grad, Angular, SymbolGrad};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowKind {
    ModeRot,
    ModeStarRot,
    WaveRot,
}

impl FlowKind {
    pub fn chart(self) -> Chart {
        match self {
            FlowKind::ModeStarRot => Chart::StarRot,
            _ => Chart::Rot,
        }
    }

    pub fn is_mode(self) -> bool {
        self != FlowKind::WaveRot
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FlowKind::ModeRot => "mode_rot",
            FlowKind::ModeStarRot => "mode_starrot",
            FlowKind::WaveRot => "wave_rot",
        }
    }
}

impl std::str::FromStr for FlowKind {
    type Err = KdsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mode_rot" | "mode-rot" => Ok(FlowKind::ModeRot),
            "mode_starrot" | "mode-starrot" => Ok(FlowKind::ModeStarRot),
            "wave_rot" | "wave-rot" | "wave" => Ok(FlowKind::WaveRot),
            other => Err(KdsError::Parse(format!("unknown flow kind '{other}'"))),
        }
    }
}

/// Hamiltonian system of one symbol on a fixed spacetime and extension.
#[derive(Debug, Clone, Copy)]
pub struct FlowSystem<'a> {
    pub kind: FlowKind,
    pub profile: &'a ExtensionProfile,
}

impl<'a> FlowSystem<'a> {
    pub fn new(kind: FlowKind, profile: &'a ExtensionProfile) -> Self {
        Self { kind, profile }
    }

    /// Radial range on which the symbol is evaluated.
    pub fn radial_domain(&self) -> (f64, f64) {
        let h = &self.profile.spacetime.horizons;
        match self.kind {
            FlowKind::ModeStarRot => {
                let (lo, hi) = self.profile.slab();
                let d = self.profile.delta;
                ((lo - d).max(h.r_cauchy), hi + d)
            }
            _ => (h.r_e, h.r_c),
        }
    }

    pub fn in_domain(&self, y: &State) -> bool {
        let (lo, hi) = self.radial_domain();
        let r = y[1];
        let s = y[3].sin();
        r > lo && r < hi && s > 1e-9 && y.iter().all(|v| v.is_finite())
    }

    fn grad_unchecked(&self, y: &State) -> SymbolGrad {
        let st = &self.profile.spacetime;
        match self.kind {
            FlowKind::ModeRot => mode_rot_grad(st, y[1], y[3], &[y[5], y[6], y[7]]),
            FlowKind::ModeStarRot => mode_starrot_grad(self.profile, y[1], y[3], &[y[5], y[6], y[7]]),
            FlowKind::WaveRot => wave_symbol_grad(st, y[1], y[3], &[y[4], y[5], y[6], y[7]]),
        }
    }

    pub fn gradient(&self, y: &State) -> Result<SymbolGrad> {
        if !self.in_domain(y) {
            return Err(KdsError::ChartDomainError(format!(
                "{} state at r = {}, θ = {} is outside the flow domain",
                self.kind.as_str(),
                y[1],
                y[3]
            )));
        }
        Ok(self.grad_unchecked(y))
    }

    /// H_q at `y`, or `None` outside the domain.
    pub fn rhs(&self, y: &State) -> Option<State> {
        if !self.in_domain(y) {
            return None;
        }
        let g = self.grad_unchecked(y);
        let mut d = [0.0; 8];
        for i in 0..4 {
            d[i] = g.dxi[i];
            d[4 + i] = -g.dx[i];
        }
        if self.kind.is_mode() {
            d[0] = 0.0;
        }
        d[4] = 0.0;
        d[6] = 0.0;
        Some(d)
    }

    pub fn ham_rhs(&self, y: &State) -> Result<State> {
        self.gradient(y)?;
        Ok(self.rhs(y).expect("domain checked"))
    }

    pub fn q(&self, y: &State) -> f64 {
        self.grad_unchecked(y).value
    }

    /// Reference scale for relative drift of q: the absolute values of its
    /// terms plus the sensitivities |r ∂_r q| and |θ ∂_θ q|. The latter keep
    /// the scale honest near radial sets, where every term vanishes.
    pub fn q_scale(&self, y: &State) -> f64 {
        let g = self.grad_unchecked(y);
        self.term_scale(y) + (y[1] * g.dx[1]).abs() + (y[3] * g.dx[3]).abs()
    }

    /// Sum of the absolute values of the terms of q.
    pub fn term_scale(&self, y: &State) -> f64 {
        let st = &self.profile.spacetime;
        let p = &st.params;
        let b2 = p.b() * p.b();
        let a = p.spin;
        let (r, th) = (y[1], y[3]);
        let ang = Angular::new(st, th);
        let mu = p.mu(r);
        let kp = kappa_psi(st, r);
        let (xr, xp, xth) = (y[5], y[6], y[7]);
        let base = mu.abs() * xr * xr + ang.c * xth * xth;
        match self.kind {
            FlowKind::ModeRot => base + b2 * (ang.p() + a * a * kp * kp / mu.abs()) * xp * xp,
            FlowKind::ModeStarRot => {
                let f = self.profile.f(r);
                let aa = self.profile.one_minus_f2_over_mu(r);
                base + (2.0 * a * p.b() * f * kp * xp * xr).abs() + b2 * (ang.p() + a * a * (aa * kp * kp).abs()) * xp * xp
            }
            FlowKind::WaveRot => {
                let xt = y[4];
                let x = (r * r + a * a) * xt + a * kp * xp;
                let yy = a * ang.sin * ang.sin * xt + ang.n * xp;
                base + b2 * yy * yy / ang.cs2 + b2 * x * x / mu.abs()
            }
        }
    }

    /// Carter-type constant of the flow.
    pub fn carter(&self, y: &State) -> f64 {
        carter_const(self.kind, self.profile, y)
    }

    pub fn run(&self, y0: &State, span: f64, opts: &IntegratorOptions, events: &[Event]) -> Result<Trajectory> {
        self.run_with(y0, span, opts, events, true)
    }

    /// Integrates over `span` (negative for the past). With `keep_samples`
    /// off only the conserved-quantity extremes are retained.
    pub fn run_with(&self, y0: &State, span: f64, opts: &IntegratorOptions, events: &[Event], keep_samples: bool) -> Result<Trajectory> {
        self.gradient(y0)?;
        let q0 = self.q(y0);
        let k0 = self.carter(y0);
        let k_ref = k0.abs().max(1e-6 * self.q_scale(y0));
        let mut tr = Trajectory {
            kind: self.kind,
            samples: Vec::new(),
            q_log: Vec::new(),
            k_log: Vec::new(),
            events: Vec::new(),
            termination: Termination::EndOfSpan,
            s_end: 0.0,
            y_end: *y0,
            q0,
            k0,
            q_drift: 0.0,
            k_drift: 0.0,
        };
        let sol = integrate(
            |y| self.rhs(y),
            *y0,
            0.0,
            span,
            opts,
            events,
            |s, y| {
                let q = self.q(y);
                let k = self.carter(y);
                let q_ref = self.q_scale(y).max(f64::MIN_POSITIVE);
                tr.q_drift = tr.q_drift.max((q - q0).abs() / q_ref);
                tr.k_drift = tr.k_drift.max((k - k0).abs() / k_ref);
                if keep_samples {
                    tr.samples.push((s, *y));
                    tr.q_log.push(q);
                    tr.k_log.push(k);
                }
            },
        )?;
        tr.events = sol.events;
        tr.termination = sol.termination;
        tr.s_end = sol.s_end;
        tr.y_end = sol.y_end;
        Ok(tr)
    }
}

/// Mode flows: c ξ_θ² + b² N²/(c sin²θ) ξ_ψ². Wave flow: the θ-group
/// c ξ_θ² + b²/(c sin²θ) (a sin²θ ξ_τ + N ξ_ψ)².
pub fn carter_const(kind: FlowKind, profile: &ExtensionProfile, y: &State) -> f64 {
    let st = &profile.spacetime;
    let p = &st.params;
    let b2 = p.b() * p.b();
    let ang = Angular::new(st, y[3]);
    let base = ang.c * y[7] * y[7];
    match kind {
        FlowKind::WaveRot => {
            let yy = p.spin * ang.sin * ang.sin * y[4] + ang.n * y[6];
            base + b2 / ang.cs2 * yy * yy
        }
        _ => base + b2 * ang.p() * y[6] * y[6],
    }
}

/// Builds a mode state from (r, ψ, θ) and (ξ_r, ξ_ψ, ξ_θ).
pub fn mode_state(r: f64, psi: f64, theta: f64, xi: [f64; 3]) -> State {
    [0.0, r, psi, theta, 0.0, xi[0], xi[1], xi[2]]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub kind: FlowKind,
    pub samples: Vec<(f64, State)>,
    pub q_log: Vec<f64>,
    pub k_log: Vec<f64>,
    pub events: Vec<EventHit>,
    pub termination: Termination,
    pub s_end: f64,
    pub y_end: State,
    pub q0: f64,
    pub k0: f64,
    /// max |q - q₀| relative to the term scale of q at the same state.
    pub q_drift: f64,
    /// max |K - K₀| / |K₀|, with |K₀| floored at 1e-6 of the q term scale.
    pub k_drift: f64,
}

impl Trajectory {
    pub fn exited_via(&self) -> Option<&str> {
        match self.termination {
            Termination::Event => self.events.last().map(|e| e.name.as_str()),
            Termination::EndOfSpan => None,
        }
    }

    /// Comma-separated export with header and `#` event lines.
    pub fn to_csv(&self) -> String {
        let chart = self.kind.chart();
        let names = chart.coordinate_names();
        let mut out = String::from("s");
        for n in names {
            let _ = write!(out, ",{n}");
        }
        let cov: Vec<usize> = if self.kind.is_mode() { vec![5, 6, 7] } else { vec![4, 5, 6, 7] };
        for &i in &cov {
            let _ = write!(out, ",xi_{}", names[i - 4]);
        }
        out.push_str(",q,K\n");
        for (j, (s, y)) in self.samples.iter().enumerate() {
            let _ = write!(out, "{s:.17e}");
            for v in &y[..4] {
                let _ = write!(out, ",{v:.17e}");
            }
            for &i in &cov {
                let _ = write!(out, ",{:.17e}", y[i]);
            }
            let _ = writeln!(out, ",{:.17e},{:.17e}", self.q_log[j], self.k_log[j]);
        }
        for e in &self.events {
            let _ = writeln!(out, "# event {} at s = {:.17e}, r = {:.17e}", e.name, e.s, e.state[1]);
        }
        let _ = writeln!(
            out,
            "# termination {}",
            match self.termination {
                Termination::Event => "event",
                Termination::EndOfSpan => "end_of_span",
            }
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charts::build_extension;
    use crate::radial::Spacetime;
    use crate::trapping::{characteristic_covector, trapped_radius};

    fn profile(l: f64, m: f64, a: f64) -> ExtensionProfile {
        let st = Spacetime::from_triple(l, m, a).unwrap();
        let d = crate::charts::default_delta(&st);
        build_extension(&st, d).unwrap()
    }

    fn fd_check(sys: &FlowSystem, y: &State) -> f64 {
        let d = sys.rhs(y).unwrap();
        let mut worst: f64 = 0.0;
        let scale = sys.q_scale(y).max(1e-300);
        for i in [1usize, 3, 4, 5, 6, 7] {
            if sys.kind.is_mode() && i == 4 {
                continue;
            }
            let h = 1e-4 * y[i].abs().max(1e-2);
            let qd = |e: f64| {
                let mut z = *y;
                z[i] += e;
                sys.q(&z)
            };
            let d1 = (qd(h) - qd(-h)) / (2.0 * h);
            let d2 = (qd(h / 2.0) - qd(-h / 2.0)) / h;
            let deriv = (4.0 * d2 - d1) / 3.0;
            let got = if i < 4 { -d[4 + i] } else { d[i - 4] };
            worst = worst.max((got - deriv).abs() / (scale / y[i].abs().max(1e-2)));
        }
        worst
    }

    #[test]
    fn rhs_matches_symbol_differences() {
        let pr = profile(0.02, 1.0, 0.9);
        let h = &pr.spacetime.horizons;
        for kind in [FlowKind::ModeRot, FlowKind::ModeStarRot, FlowKind::WaveRot] {
            let sys = FlowSystem::new(kind, &pr);
            for (j, r) in [h.r_e + 0.3, h.r0, 0.5 * (h.r0 + h.r_c)].into_iter().enumerate() {
                let y = [0.0, r, 0.1, 0.7 + 0.3 * j as f64, 0.4, -0.3, 0.8, 0.5];
                let y = if kind.is_mode() { mode_state(y[1], y[2], y[3], [y[5], y[6], y[7]]) } else { y };
                assert!(fd_check(&sys, &y) < 1e-7, "{kind:?} at r = {r}");
            }
        }
    }

    #[test]
    fn zero_covector_is_stationary() {
        let pr = profile(0.02, 1.0, 0.9);
        let sys = FlowSystem::new(FlowKind::WaveRot, &pr);
        let y = [0.0, pr.spacetime.horizons.r0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        let t = sys.run(&y, 100.0, &IntegratorOptions::default(), &[]).unwrap();
        assert_eq!(t.y_end, y);
    }

    #[test]
    fn on_gamma_field_vanishes_radially() {
        let pr = profile(0.02, 1.0, 0.9);
        let st = &pr.spacetime;
        let o = trapped_radius(st, -1.0, 0.5, 1e-14).unwrap();
        let xi = characteristic_covector(st, o.xi_t, o.xi_phi, o.r_trap, 1.5, 0.0).unwrap();
        let y = [0.0, o.r_trap, 0.0, 1.5, xi[0], xi[1], xi[2], xi[3]];
        let d = FlowSystem::new(FlowKind::WaveRot, &pr).ham_rhs(&y).unwrap();
        assert_eq!(d[1], 0.0);
        let scale = FlowSystem::new(FlowKind::WaveRot, &pr).q_scale(&y) / o.r_trap;
        assert!(d[5].abs() < 1e-12 * scale);
    }

    #[test]
    fn carter_trivial_values() {
        let pr = profile(0.02, 1.0, 0.9);
        let y = mode_state(3.0, 0.0, 1.0, [0.7, 0.0, 0.0]);
        assert_eq!(carter_const(FlowKind::ModeRot, &pr, &y), 0.0);
        let pr0 = profile(0.06, 1.0, 0.0);
        let y = [0.0, 3.0, 0.0, std::f64::consts::FRAC_PI_2, 0.3, 0.1, 0.8, 0.6];
        let k = carter_const(FlowKind::WaveRot, &pr0, &y);
        assert!((k - (0.36 + 0.64)).abs() < 1e-14);
    }

    #[test]
    fn wave_run_conserves_q_and_k() {
        let pr = profile(0.02, 1.0, 0.9);
        let st = &pr.spacetime;
        let o = trapped_radius(st, -1.0, 0.3, 1e-14).unwrap();
        let r = o.r_trap + 0.2;
        let xi = characteristic_covector(st, o.xi_t, o.xi_phi, r, 1.4, 0.05).unwrap();
        let y = [0.0, r, 0.0, 1.4, xi[0], xi[1], xi[2], xi[3]];
        let h = &st.horizons;
        let eps = 0.05 * (h.r_c - h.r_e);
        let ev = [Event::terminal("inner", 1, h.r_e + eps), Event::terminal("outer", 1, h.r_c - eps)];
        let sys = FlowSystem::new(FlowKind::WaveRot, &pr);
        let t = sys.run(&y, 100.0, &IntegratorOptions::with_tol(1e-10), &ev).unwrap();
        assert!(t.q_drift < 1e-8 && t.k_drift < 1e-8, "{} {}", t.q_drift, t.k_drift);
        let csv = t.to_csv();
        assert!(csv.starts_with("s,tau,r,psi,theta,xi_tau,xi_r,xi_psi,xi_theta,q,K\n"));
    }

    #[test]
    fn domain_is_enforced() {
        let pr = profile(0.02, 1.0, 0.9);
        let sys = FlowSystem::new(FlowKind::ModeRot, &pr);
        let y = mode_state(pr.spacetime.horizons.r_e - 0.01, 0.0, 1.0, [1.0, 0.0, 0.0]);
        assert!(matches!(sys.ham_rhs(&y), Err(KdsError::ChartDomainError(_))));
        let star = FlowSystem::new(FlowKind::ModeStarRot, &pr);
        assert!(star.ham_rhs(&y).is_ok());
    }
}
