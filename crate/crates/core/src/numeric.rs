//! Small one-dimensional numerical helpers: bracketed bisection, golden
//! section search, Gauss–Legendre rules and Chebyshev series.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Bisection on a sign-changing bracket. Stops when the bracket is below
/// `rel_tol` relative to its magnitude, when the midpoint is no longer
/// representable between the ends, or when `f` hits an exact zero.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, rel_tol: f64) -> f64 {
    let mut flo = f(lo);
    if flo == 0.0 {
        return lo;
    }
    if f(hi) == 0.0 {
        return hi;
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo.min(hi) || mid >= lo.max(hi) {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
        if (hi - lo).abs() <= rel_tol * lo.abs().max(hi.abs()) && lo.signum() == hi.signum() {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Golden-section search for a maximum of a unimodal `f` on `[lo, hi]`.
pub fn golden_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, iters: usize) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 > f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Gauss–Legendre nodes and weights on [-1, 1]; exact for polynomials of
/// degree up to `2n - 1`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// ∫_lo^hi f with an n-point Gauss–Legendre rule.
pub fn integrate_gl<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    rule.0
        .iter()
        .zip(&rule.1)
        .map(|(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

/// Chebyshev series on an interval, with its derivative series cached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chebyshev {
    pub lo: f64,
    pub hi: f64,
    pub coeffs: Vec<f64>,
    #[serde(skip)]
    dcoeffs: Vec<f64>,
}

impl Chebyshev {
    pub fn new(lo: f64, hi: f64, coeffs: Vec<f64>) -> Self {
        let dcoeffs = derivative_coeffs(&coeffs, hi - lo);
        Self { lo, hi, coeffs, dcoeffs }
    }

    pub fn constant(lo: f64, hi: f64, value: f64) -> Self {
        Self::new(lo, hi, vec![value])
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    fn to_unit(&self, r: f64) -> f64 {
        (2.0 * r - self.lo - self.hi) / (self.hi - self.lo)
    }

    pub fn eval(&self, r: f64) -> f64 {
        clenshaw(&self.coeffs, self.to_unit(r))
    }

    pub fn derivative(&self, r: f64) -> f64 {
        if self.dcoeffs.is_empty() {
            // deserialized instance, derivative series not cached
            return clenshaw(&derivative_coeffs(&self.coeffs, self.hi - self.lo), self.to_unit(r));
        }
        clenshaw(&self.dcoeffs, self.to_unit(r))
    }

    /// Least-squares fit of the given degree to samples.
    pub fn fit(lo: f64, hi: f64, xs: &[f64], ys: &[f64], degree: usize) -> Option<Self> {
        let n = xs.len();
        let cols = degree + 1;
        let mut a = DMatrix::<f64>::zeros(n, cols);
        for (i, &x) in xs.iter().enumerate() {
            let t = (2.0 * x - lo - hi) / (hi - lo);
            let mut t0 = 1.0;
            let mut t1 = t;
            for j in 0..cols {
                let v = match j {
                    0 => 1.0,
                    1 => t,
                    _ => {
                        let t2 = 2.0 * t * t1 - t0;
                        t0 = t1;
                        t1 = t2;
                        t2
                    }
                };
                a[(i, j)] = v;
            }
        }
        let b = DVector::from_column_slice(ys);
        let svd = a.svd(true, true);
        let sol = svd.solve(&b, 1e-14).ok()?;
        Some(Self::new(lo, hi, sol.iter().copied().collect()))
    }
}

fn clenshaw(c: &[f64], t: f64) -> f64 {
    if c.is_empty() {
        return 0.0;
    }
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for &ck in c.iter().skip(1).rev() {
        let b0 = 2.0 * t * b1 - b2 + ck;
        b2 = b1;
        b1 = b0;
    }
    t * b1 - b2 + c[0]
}

/// Coefficients of d/dr of a Chebyshev series on an interval of length `width`.
fn derivative_coeffs(c: &[f64], width: f64) -> Vec<f64> {
    let n = c.len();
    if n <= 1 {
        return vec![0.0];
    }
    let mut d = vec![0.0; n + 1];
    for k in (1..n).rev() {
        d[k - 1] = d[k + 1] + 2.0 * k as f64 * c[k];
    }
    d[0] *= 0.5;
    d.truncate(n - 1);
    let scale = 2.0 / width;
    d.iter_mut().for_each(|x| *x *= scale);
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn bisect_finds_sqrt2() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-15);
        assert_relative_eq!(r, 2f64.sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn bisect_handles_root_at_zero() {
        let r = bisect(|x| x * (x - 5.0), -1.0, 1.0, 1e-15);
        assert!(r.abs() < 1e-100);
    }

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let rule = gauss_legendre(6);
        let v = integrate_gl(|x| x.powi(11) + 3.0 * x.powi(10) - x * x, -0.5, 2.0, &rule);
        let anti = |x: f64| x.powi(12) / 12.0 + 3.0 * x.powi(11) / 11.0 - x.powi(3) / 3.0;
        assert_relative_eq!(v, anti(2.0) - anti(-0.5), max_relative = 1e-13);
    }

    #[test]
    fn chebyshev_fit_and_derivative() {
        let xs: Vec<f64> = (0..200).map(|i| 1.0 + 3.0 * i as f64 / 199.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (0.7 * x).sin()).collect();
        let c = Chebyshev::fit(1.0, 4.0, &xs, &ys, 16).unwrap();
        for x in [1.0, 2.2, 3.9] {
            assert!((c.eval(x) - (0.7 * x).sin()).abs() < 1e-12);
            assert!((c.derivative(x) - 0.7 * (0.7 * x).cos()).abs() < 1e-10);
        }
        let k = Chebyshev::constant(0.0, 1.0, 2.5);
        assert_eq!(k.eval(0.3), 2.5);
        assert_eq!(k.derivative(0.3), 0.0);
    }

    #[test]
    fn golden_section_maximum() {
        let (x, fx) = golden_max(|x| -(x - 0.3) * (x - 0.3) + 1.0, -1.0, 2.0, 100);
        assert!((x - 0.3).abs() < 1e-7);
        assert!((fx - 1.0).abs() < 1e-12);
    }
}
