//! Dormand–Prince 5(4) with PI step-size control, continuous (dense)
//! output and threshold events located by bisection on the interpolant.

use crate::error::{KdsError, Result};

pub type State = [f64; 8];

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl IntegratorOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol,
            ..Self::default()
        }
    }
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-10,
            h_init: 1e-3,
            h_min: 1e-14,
            max_steps: 2_000_000,
        }
    }
}

/// Crossing of `y[component] = threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub name: String,
    pub component: usize,
    pub threshold: f64,
    pub terminal: bool,
}

impl Event {
    pub fn terminal(name: &str, component: usize, threshold: f64) -> Self {
        Self {
            name: name.to_string(),
            component,
            threshold,
            terminal: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventHit {
    pub name: String,
    pub s: f64,
    pub state: State,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    EndOfSpan,
    Event,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub s_end: f64,
    pub y_end: State,
    pub steps: usize,
    pub rejected: usize,
    pub events: Vec<EventHit>,
    pub termination: Termination,
}

/// Continuous extension of one accepted step.
struct Dense {
    s0: f64,
    h: f64,
    r: [State; 5],
}

impl Dense {
    fn eval(&self, s: f64) -> State {
        let th = (s - self.s0) / self.h;
        let th1 = 1.0 - th;
        let mut out = [0.0; 8];
        for i in 0..8 {
            out[i] = self.r[0][i]
                + th * (self.r[1][i] + th1 * (self.r[2][i] + th * (self.r[3][i] + th1 * self.r[4][i])));
        }
        out
    }
}

fn axpy(y: &State, h: f64, terms: &[(f64, &State)]) -> State {
    let mut out = *y;
    for i in 0..8 {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] += h * acc;
    }
    out
}

/// Integrates dy/ds = rhs(y) from `s0` to `s1` (either direction). `rhs`
/// returns `None` outside its domain, which rejects the step. `observer`
/// sees every accepted step, including the initial state.
pub fn integrate<F, O>(
    rhs: F,
    y0: State,
    s0: f64,
    s1: f64,
    opts: &IntegratorOptions,
    events: &[Event],
    mut observer: O,
) -> Result<Solution>
where
    F: Fn(&State) -> Option<State>,
    O: FnMut(f64, &State),
{
    let dir = if s1 >= s0 { 1.0 } else { -1.0 };
    let mut s = s0;
    let mut y = y0;
    observer(s, &y);
    let mut hits = Vec::new();
    if s1 == s0 {
        return Ok(Solution {
            s_end: s,
            y_end: y,
            steps: 0,
            rejected: 0,
            events: hits,
            termination: Termination::EndOfSpan,
        });
    }
    let Some(mut k1) = rhs(&y) else {
        return Err(KdsError::StepFailure { s, h: 0.0, last_state: y });
    };
    let mut h = dir * opts.h_init.min((s1 - s0).abs());
    let mut facold: f64 = 1e-4;
    let beta: f64 = 0.04;
    let expo1 = 0.2 - beta * 0.75;
    let safe = 0.9;
    let (facc1, facc2): (f64, f64) = (1.0 / 0.2, 1.0 / 10.0);
    let mut steps = 0;
    let mut rejected = 0;
    let mut last_rejected = false;

    while (s1 - s) * dir > 0.0 {
        if steps + rejected >= opts.max_steps {
            return Err(KdsError::StepFailure { s, h, last_state: y });
        }
        if (s + h - s1) * dir > 0.0 {
            h = s1 - s;
        }
        if h.abs() < opts.h_min {
            return Err(KdsError::StepFailure { s, h, last_state: y });
        }
        let stages = (|| {
            let k2 = rhs(&axpy(&y, h, &[(A21, &k1)]))?;
            let k3 = rhs(&axpy(&y, h, &[(A31, &k1), (A32, &k2)]))?;
            let k4 = rhs(&axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]))?;
            let k5 = rhs(&axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]))?;
            let k6 = rhs(&axpy(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]))?;
            let y1 = axpy(&y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
            let k7 = rhs(&y1)?;
            Some((k2, k3, k4, k5, k6, k7, y1))
        })();
        let Some((_k2, k3, k4, k5, k6, k7, y1)) = stages else {
            h *= 0.25;
            rejected += 1;
            last_rejected = true;
            continue;
        };
        let mut err = 0.0;
        for i in 0..8 {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = opts.atol + opts.rtol * y[i].abs().max(y1[i].abs());
            err += (e / sc) * (e / sc);
        }
        let err = (err / 8.0).sqrt();
        if !err.is_finite() {
            h *= 0.25;
            rejected += 1;
            last_rejected = true;
            continue;
        }
        let fac11 = err.powf(expo1);
        if err <= 1.0 {
            let mut fac = fac11 / facold.powf(beta);
            fac = facc2.max(facc1.min(fac / safe));
            let mut hnew = h / fac;
            if last_rejected && hnew.abs() > h.abs() {
                hnew = h;
            }
            facold = err.max(1e-4);
            steps += 1;

            let mut r = [[0.0; 8]; 5];
            for i in 0..8 {
                let ydiff = y1[i] - y[i];
                let bspl = h * k1[i] - ydiff;
                r[0][i] = y[i];
                r[1][i] = ydiff;
                r[2][i] = bspl;
                r[3][i] = ydiff - h * k7[i] - bspl;
                r[4][i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            let dense = Dense { s0: s, h, r };
            let s_new = s + h;
            if let Some(hit) = first_event(&dense, &y, &y1, s, s_new, events) {
                let terminal = events.iter().any(|e| e.terminal && e.name == hit.name);
                if terminal {
                    observer(hit.s, &hit.state);
                    let (se, ye) = (hit.s, hit.state);
                    hits.push(hit);
                    return Ok(Solution {
                        s_end: se,
                        y_end: ye,
                        steps,
                        rejected,
                        events: hits,
                        termination: Termination::Event,
                    });
                }
                hits.push(hit);
            }
            s = s_new;
            y = y1;
            k1 = k7;
            observer(s, &y);
            h = hnew;
            last_rejected = false;
        } else {
            h /= facc1.min(fac11 / safe);
            rejected += 1;
            last_rejected = true;
        }
    }
    Ok(Solution {
        s_end: s,
        y_end: y,
        steps,
        rejected,
        events: hits,
        termination: Termination::EndOfSpan,
    })
}

/// Earliest threshold crossing inside the step, located to 1e-10 in s.
fn first_event(dense: &Dense, y0: &State, y1: &State, s0: f64, s1: f64, events: &[Event]) -> Option<EventHit> {
    let mut best: Option<EventHit> = None;
    for ev in events {
        let g0 = y0[ev.component] - ev.threshold;
        let g1 = y1[ev.component] - ev.threshold;
        if g0 == 0.0 || (g0 > 0.0) == (g1 > 0.0) && g1 != 0.0 {
            continue;
        }
        let g = |s: f64| dense.eval(s)[ev.component] - ev.threshold;
        let (mut lo, mut hi) = (s0, s1);
        for _ in 0..200 {
            if (hi - lo).abs() <= 1e-12 * lo.abs().max(1.0) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if (g(mid) > 0.0) == (g0 > 0.0) && g(mid) != 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let s_hit = hi;
        let closer = match &best {
            None => true,
            Some(b) => (s_hit - s0).abs() < (b.s - s0).abs(),
        };
        if closer {
            best = Some(EventHit {
                name: ev.name.clone(),
                s: s_hit,
                state: dense.eval(s_hit),
            });
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn oscillator(y: &State) -> Option<State> {
        let mut d = [0.0; 8];
        d[0] = y[1];
        d[1] = -y[0];
        Some(d)
    }

    #[test]
    fn harmonic_oscillator_accuracy() {
        let mut y0 = [0.0; 8];
        y0[0] = 1.0;
        let sol = integrate(oscillator, y0, 0.0, 20.0, &IntegratorOptions::with_tol(1e-11), &[], |_, _| {}).unwrap();
        assert!((sol.y_end[0] - 20f64.cos()).abs() < 1e-8);
        assert!((sol.y_end[1] + 20f64.sin()).abs() < 1e-8);
        assert_eq!(sol.termination, Termination::EndOfSpan);
    }

    #[test]
    fn backward_integration_returns() {
        let mut y0 = [0.0; 8];
        y0[0] = 0.3;
        y0[1] = -0.8;
        let opts = IntegratorOptions::with_tol(1e-12);
        let fwd = integrate(oscillator, y0, 0.0, 7.0, &opts, &[], |_, _| {}).unwrap();
        let back = integrate(oscillator, fwd.y_end, 7.0, 0.0, &opts, &[], |_, _| {}).unwrap();
        for i in 0..2 {
            assert!((back.y_end[i] - y0[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn event_located_on_dense_output() {
        let mut y0 = [0.0; 8];
        y0[0] = 1.0;
        let ev = [Event::terminal("zero", 0, 0.0)];
        let sol = integrate(oscillator, y0, 0.0, 10.0, &IntegratorOptions::with_tol(1e-12), &ev, |_, _| {}).unwrap();
        assert_eq!(sol.termination, Termination::Event);
        assert_relative_eq!(sol.s_end, std::f64::consts::FRAC_PI_2, epsilon = 1e-10);
        assert!(sol.y_end[0].abs() < 1e-10);
    }

    #[test]
    fn zero_field_is_stationary() {
        let y0 = [1.0, 2.0, 3.0, 0.5, 0.0, 0.0, 0.0, 0.0];
        let sol = integrate(|_| Some([0.0; 8]), y0, 0.0, 100.0, &IntegratorOptions::default(), &[], |_, _| {}).unwrap();
        assert_eq!(sol.y_end, y0);
    }

    #[test]
    fn domain_exit_becomes_step_failure() {
        // dy/ds = 1/(1 - y) blows up at y = 1
        let f = |y: &State| {
            if y[0] >= 1.0 {
                None
            } else {
                let mut d = [0.0; 8];
                d[0] = 1.0 / (1.0 - y[0]);
                Some(d)
            }
        };
        let res = integrate(f, [0.0; 8], 0.0, 10.0, &IntegratorOptions::default(), &[], |_, _| {});
        assert!(matches!(res, Err(KdsError::StepFailure { .. })));
    }

    #[test]
    fn dense_output_is_fifth_order_accurate() {
        let mut y0 = [0.0; 8];
        y0[0] = 1.0;
        let mut samples = Vec::new();
        let opts = IntegratorOptions::with_tol(1e-12);
        // integrate with a far threshold to exercise interpolation at many points
        let ev = [Event::terminal("x", 0, -0.999)];
        let sol = integrate(oscillator, y0, 0.0, 10.0, &opts, &ev, |s, y| samples.push((s, y[0]))).unwrap();
        assert!((sol.y_end[0] + 0.999).abs() < 1e-10);
        assert_relative_eq!(sol.s_end, (-0.999f64).acos(), epsilon = 1e-9);
        assert!(samples.len() > 3);
    }
}
