//! Seeded sampling of parameter triples and characteristic covectors.
//!
//! Every sample index owns its own ChaCha stream, so results do not depend
//! on how work is split across threads.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{KdsError, Result};
use crate::integrate::State;
use crate::radial::{lambda_interval, Spacetime};
use crate::symbols::mode_psi_coefficient;
use crate::trapping::{characteristic_covector, f_eval};

/// Independent generator for sample `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws a subextremal triple with m ∈ [0.5, 2], a/m ∈ [ratio_lo, ratio_hi]
/// and Λ strictly inside the admissible interval.
pub fn random_subextremal<R: Rng>(rng: &mut R, ratio_lo: f64, ratio_hi: f64) -> Result<Spacetime> {
    for _ in 0..10_000 {
        let m = rng.gen_range(0.5..2.0);
        let ratio = if ratio_hi > ratio_lo { rng.gen_range(ratio_lo..ratio_hi) } else { ratio_lo };
        let a = ratio * m;
        let iv = lambda_interval(a, m)?;
        if iv.empty {
            continue;
        }
        let u = rng.gen_range(0.05..0.95);
        let lambda = iv.lambda0 + u * (iv.lambda1 - iv.lambda0);
        if lambda <= 0.0 {
            continue;
        }
        if let Ok(st) = Spacetime::from_triple(lambda, m, a) {
            return Ok(st);
        }
    }
    Err(KdsError::SampleConstructionFailure(format!(
        "no subextremal triple found for a/m in [{ratio_lo}, {ratio_hi}]"
    )))
}

fn normalize(y: &mut State) {
    let n = y[4..].iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > 0.0 {
        for v in &mut y[4..] {
            *v /= n;
        }
    }
}

/// Uniform sampler for the ROT mode characteristic set over
/// (r_lo, r_hi) × (θ_min, π - θ_min). The set lies where the ξ_ψ²
/// coefficient is negative; a grid scan records the cells that touch it.
#[derive(Debug, Clone)]
pub struct ModeCharSampler {
    pub spacetime: Spacetime,
    pub r_range: (f64, f64),
    pub theta_range: (f64, f64),
    cells: Vec<(f64, f64, f64, f64)>,
}

impl ModeCharSampler {
    pub fn new(st: &Spacetime, r_lo: f64, r_hi: f64, theta_min: f64) -> Result<Self> {
        const NR: usize = 400;
        const NT: usize = 200;
        let (t_lo, t_hi) = (theta_min, PI - theta_min);
        let rs: Vec<f64> = (0..=NR).map(|i| r_lo + (r_hi - r_lo) * i as f64 / NR as f64).collect();
        let ts: Vec<f64> = (0..=NT).map(|j| t_lo + (t_hi - t_lo) * j as f64 / NT as f64).collect();
        let neg: Vec<Vec<bool>> = rs
            .iter()
            .map(|&r| ts.iter().map(|&t| mode_psi_coefficient(st, r, t) < 0.0).collect())
            .collect();
        let mut cells = Vec::new();
        for i in 0..NR {
            for j in 0..NT {
                // include neighbours so thin sets between nodes are not lost
                let i0 = i.saturating_sub(1);
                let j0 = j.saturating_sub(1);
                let hit = (i0..=(i + 2).min(NR)).any(|ii| (j0..=(j + 2).min(NT)).any(|jj| neg[ii][jj]));
                if hit {
                    cells.push((rs[i], rs[i + 1], ts[j], ts[j + 1]));
                }
            }
        }
        if cells.is_empty() {
            return Err(KdsError::SampleConstructionFailure(
                "mode characteristic set is empty on the sampling region".into(),
            ));
        }
        Ok(Self {
            spacetime: *st,
            r_range: (r_lo, r_hi),
            theta_range: (t_lo, t_hi),
            cells,
        })
    }

    /// Fraction of the grid cells that touch the characteristic set.
    pub fn coverage(&self) -> usize {
        self.cells.len()
    }

    /// Draws (r, θ) uniformly on the set, ξ_ψ = ±1, ξ_r uniform in the
    /// admissible range and ξ_θ ≥ 0 from the symbol, then normalizes.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<State> {
        let st = &self.spacetime;
        for _ in 0..100_000 {
            let (r0, r1, t0, t1) = self.cells[rng.gen_range(0..self.cells.len())];
            let r = rng.gen_range(r0..r1);
            let th = rng.gen_range(t0..t1);
            let cpsi = mode_psi_coefficient(st, r, th);
            if !(cpsi < 0.0) {
                continue;
            }
            let mu = st.params.mu(r);
            let xp: f64 = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            let bound = (-cpsi / mu).sqrt();
            let xr = rng.gen_range(-bound..bound);
            let c = st.params.c_theta(th);
            let xth2 = (-cpsi - mu * xr * xr) / c;
            if !(xth2 >= 0.0) {
                continue;
            }
            let mut y = [0.0, r, 0.0, th, 0.0, xr, xp, xth2.sqrt()];
            normalize(&mut y);
            return Ok(y);
        }
        Err(KdsError::SampleConstructionFailure("mode characteristic rejection sampling exhausted".into()))
    }
}

/// Sampler for wave characteristic states in ROT with fixed BL constants
/// (ξ_t, ξ_φ), or random ones when `constants` is `None`.
#[derive(Debug, Clone)]
pub struct WaveCharSampler {
    pub spacetime: Spacetime,
    pub constants: Option<(f64, f64)>,
    pub r_range: (f64, f64),
    pub theta_range: (f64, f64),
}

impl WaveCharSampler {
    pub fn new(st: &Spacetime, constants: Option<(f64, f64)>, r_lo: f64, r_hi: f64, theta_min: f64) -> Self {
        Self {
            spacetime: *st,
            constants,
            r_range: (r_lo, r_hi),
            theta_range: (theta_min, PI - theta_min),
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<State> {
        let st = &self.spacetime;
        for _ in 0..100_000 {
            let (xt, xp) = match self.constants {
                Some(c) => c,
                None => {
                    let ang = rng.gen_range(0.0..2.0 * PI);
                    (ang.cos(), ang.sin())
                }
            };
            let r = rng.gen_range(self.r_range.0..self.r_range.1);
            let th = rng.gen_range(self.theta_range.0..self.theta_range.1);
            let f = f_eval(st, xt, xp, r, 0)?;
            let b = st.params.b();
            let bound = b * (f / st.params.mu(r)).sqrt();
            if !(bound > 0.0) {
                continue;
            }
            let xr = rng.gen_range(-bound..bound);
            if let Some(xi) = characteristic_covector(st, xt, xp, r, th, xr) {
                let mut y = [0.0, r, 0.0, th, xi[0], xi[1], xi[2], xi[3]];
                if self.constants.is_none() {
                    normalize(&mut y);
                }
                return Ok(y);
            }
        }
        Err(KdsError::SampleConstructionFailure("wave characteristic rejection sampling exhausted".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbols::{mode_rot_grad, wave_symbol_grad};

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: f64 = stream_rng(1, 3).gen();
        let b: f64 = stream_rng(1, 3).gen();
        let c: f64 = stream_rng(1, 4).gen();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn random_triples_are_subextremal() {
        let mut rng = stream_rng(7, 0);
        for _ in 0..20 {
            let st = random_subextremal(&mut rng, 0.87, 1.05).unwrap();
            assert!(st.params.is_subextremal());
            assert!(st.params.spin / st.params.mass > 0.86);
        }
    }

    #[test]
    fn mode_samples_are_characteristic() {
        let st = Spacetime::from_triple(0.02, 1.0, 0.9).unwrap();
        let h = &st.horizons;
        let eps = 0.05 * (h.r_c - h.r_e);
        let s = ModeCharSampler::new(&st, h.r_e + eps, h.r_c - eps, 0.1).unwrap();
        let mut rng = stream_rng(1, 0);
        for _ in 0..200 {
            let y = s.sample(&mut rng).unwrap();
            let q = mode_rot_grad(&st, y[1], y[3], &[y[5], y[6], y[7]]).value;
            assert!(q.abs() < 1e-12, "{q}");
            assert!(y[1] > h.r_e + eps && y[1] < h.r_c - eps);
        }
    }

    #[test]
    fn mode_set_is_empty_without_rotation() {
        let st = Spacetime::from_triple(0.06, 1.0, 0.0).unwrap();
        let h = &st.horizons;
        assert!(ModeCharSampler::new(&st, h.r_e + 0.1, h.r_c - 0.1, 0.1).is_err());
    }

    #[test]
    fn wave_samples_are_characteristic() {
        let st = Spacetime::from_triple(0.02, 1.0, 0.9).unwrap();
        let h = &st.horizons;
        let s = WaveCharSampler::new(&st, None, h.r_e + 0.2, h.r_c - 0.2, 0.1);
        let mut rng = stream_rng(2, 0);
        for _ in 0..200 {
            let y = s.sample(&mut rng).unwrap();
            let q = wave_symbol_grad(&st, y[1], y[3], &[y[4], y[5], y[6], y[7]]).value;
            assert!(q.abs() < 1e-10, "{q}");
        }
    }
}
