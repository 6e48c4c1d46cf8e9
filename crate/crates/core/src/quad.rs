//! Quadrature, cubic splines, bracketing root finding and Richardson extrapolation.

use crate::scalar::Real;

/// Interpolating cubic spline on uniform nodes `x_i = i h` of the unit torus
/// (`h = 1/n`, periodic) or the unit interval (`h = 1/(n-1)`, natural ends).
#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline<T> {
    periodic: bool,
    h: T,
    values: Vec<T>,
    second: Vec<T>,
}

/// Thomas algorithm for `sub x_{i-1} + diag x_i + sup x_{i+1} = rhs` with constant bands.
fn thomas<T: Real>(sub: T, diag: T, sup: T, rhs: &[T]) -> Vec<T> {
    let n = rhs.len();
    let mut c = vec![T::zero(); n];
    let mut d = vec![T::zero(); n];
    c[0] = sup / diag;
    d[0] = rhs[0] / diag;
    for i in 1..n {
        let m = diag - sub * c[i - 1];
        c[i] = sup / m;
        d[i] = (rhs[i] - sub * d[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        d[i] = d[i] - c[i] * d[i + 1];
    }
    d
}

impl<T: Real> CubicSpline<T> {
    pub fn periodic(values: Vec<T>) -> Self {
        let n = values.len();
        assert!(n >= 3, "periodic spline needs at least 3 nodes");
        let h = T::one() / T::of(n as f64);
        let six_h2 = T::of(6.0) / (h * h);
        let rhs: Vec<T> = (0..n)
            .map(|i| six_h2 * (values[(i + 1) % n] - T::of(2.0) * values[i] + values[(i + n - 1) % n]))
            .collect();
        // cyclic system [1 4 1] by Sherman-Morrison with u = (g, 0.., 1), v = (1, 0.., 1/g)
        let g = -T::of(4.0);
        let one = T::one();
        let mut diag = vec![T::of(4.0); n];
        diag[0] -= g;
        diag[n - 1] -= one / g;
        let solve = |b: &[T]| -> Vec<T> {
            let mut c = vec![T::zero(); n];
            let mut d = vec![T::zero(); n];
            c[0] = one / diag[0];
            d[0] = b[0] / diag[0];
            for i in 1..n {
                let m = diag[i] - c[i - 1];
                c[i] = one / m;
                d[i] = (b[i] - d[i - 1]) / m;
            }
            for i in (0..n - 1).rev() {
                d[i] = d[i] - c[i] * d[i + 1];
            }
            d
        };
        let x = solve(&rhs);
        let mut u = vec![T::zero(); n];
        u[0] = g;
        u[n - 1] = one;
        let zz = solve(&u);
        let factor = (x[0] + x[n - 1] / g) / (one + zz[0] + zz[n - 1] / g);
        let second = x.iter().zip(&zz).map(|(&a, &b)| a - factor * b).collect();
        Self {
            periodic: true,
            h,
            values,
            second,
        }
    }

    pub fn natural(values: Vec<T>) -> Self {
        let n = values.len();
        assert!(n >= 3, "natural spline needs at least 3 nodes");
        let h = T::one() / T::of((n - 1) as f64);
        let six_h2 = T::of(6.0) / (h * h);
        let rhs: Vec<T> = (1..n - 1)
            .map(|i| six_h2 * (values[i + 1] - T::of(2.0) * values[i] + values[i - 1]))
            .collect();
        let inner = thomas(T::one(), T::of(4.0), T::one(), &rhs);
        let mut second = vec![T::zero(); n];
        second[1..n - 1].copy_from_slice(&inner);
        Self {
            periodic: false,
            h,
            values,
            second,
        }
    }

    fn locate(&self, x: T) -> (usize, usize, T) {
        let n = self.values.len();
        if self.periodic {
            let x = x - x.floor();
            let i = ((x / self.h).floor().to_usize().unwrap_or(0)).min(n - 1);
            (i, (i + 1) % n, x - T::of(i as f64) * self.h)
        } else {
            let x = x.max(T::zero()).min(T::one());
            let i = ((x / self.h).floor().to_usize().unwrap_or(0)).min(n - 2);
            (i, i + 1, x - T::of(i as f64) * self.h)
        }
    }

    pub fn eval(&self, x: T) -> T {
        let (i, j, t) = self.locate(x);
        let h = self.h;
        let b = t / h;
        let a = T::one() - b;
        a * self.values[i]
            + b * self.values[j]
            + ((a * a * a - a) * self.second[i] + (b * b * b - b) * self.second[j]) * h * h / T::of(6.0)
    }

    pub fn derivative(&self, x: T) -> T {
        let (i, j, t) = self.locate(x);
        let h = self.h;
        let b = t / h;
        let a = T::one() - b;
        let three = T::of(3.0);
        (self.values[j] - self.values[i]) / h
            + ((T::one() - three * a * a) * self.second[i] + (three * b * b - T::one()) * self.second[j]) * h
                / T::of(6.0)
    }
}

/// Trapezoid rule for samples `f(x_0..x_{n-1})` at spacing `h`; a periodic sample
/// omits the duplicated endpoint.
pub fn trapezoid<T: Real>(samples: &[T], h: T, periodic: bool) -> T {
    let n = samples.len();
    if n == 0 {
        return T::zero();
    }
    let interior: T = samples.iter().copied().sum();
    if periodic {
        interior * h
    } else {
        (interior - (samples[0] + samples[n - 1]) / T::of(2.0)) * h
    }
}

/// Running trapezoid integral, starting at zero.
pub fn cumulative_trapezoid<T: Real>(samples: &[T], h: T) -> Vec<T> {
    let mut out = Vec::with_capacity(samples.len());
    let mut acc = T::zero();
    out.push(acc);
    for w in samples.windows(2) {
        acc += (w[0] + w[1]) * h / T::of(2.0);
        out.push(acc);
    }
    out
}

/// Composite midpoint rule with `pieces` subintervals on `[a, b]`.
pub fn midpoint<T: Real>(f: impl Fn(T) -> T, a: T, b: T, pieces: usize) -> T {
    let h = (b - a) / T::of(pieces as f64);
    (0..pieces)
        .map(|i| f(a + (T::of(i as f64) + T::of(0.5)) * h))
        .sum::<T>()
        * h
}

/// Vertex of the parabola through `(-h, left), (0, centre), (h, right)`: returns the
/// offset of the extremum and its value, or `(0, centre)` when the data is not concave.
pub fn parabolic_peak<T: Real>(left: T, centre: T, right: T, h: T) -> (T, T) {
    let curvature = left - T::of(2.0) * centre + right;
    if !(curvature < T::zero()) {
        return (T::zero(), centre);
    }
    let slope = (right - left) / T::of(2.0);
    let offset = -slope / curvature;
    let offset = offset.max(-T::one()).min(T::one());
    (
        offset * h,
        centre + slope * offset + curvature * offset * offset / T::of(2.0),
    )
}

/// Root of an increasing function `f` on `[lo, hi]` with `f(lo) <= 0 <= f(hi)`.
pub fn bisect<T: Real>(f: impl Fn(T) -> T, mut lo: T, mut hi: T, xtol: T) -> T {
    for _ in 0..400 {
        let mid = (lo + hi) / T::of(2.0);
        if hi - lo <= xtol || mid <= lo || mid >= hi {
            break;
        }
        if f(mid) <= T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo + hi) / T::of(2.0)
}

/// Limit estimate from the model `k(eps) = k0 + alpha eps^p` through three points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrapolation {
    pub limit: f64,
    pub order: f64,
}

/// Admissible orders. Smooth coefficients give corrections in integer powers of
/// `eps` starting at the first, so a fitted order below one is pre-asymptotic.
pub const ORDER_RANGE: (f64, f64) = (1.0, 2.0);

/// Fits the model to `(eps_i, k_i)`, `eps` strictly decreasing; the order is found by
/// matching the ratio of successive differences and clamped to [`ORDER_RANGE`].
pub fn richardson(eps: [f64; 3], k: [f64; 3]) -> Extrapolation {
    let (d1, d2) = (k[0] - k[1], k[1] - k[2]);
    if d2 == 0.0 {
        return Extrapolation {
            limit: k[2],
            order: f64::NAN,
        };
    }
    let ratio = d1 / d2;
    let model = |p: f64| (eps[0].powf(p) - eps[1].powf(p)) / (eps[1].powf(p) - eps[2].powf(p));
    let (lo, hi) = ORDER_RANGE;
    // model(p) increases with p
    let order = if !ratio.is_finite() || ratio <= model(lo) {
        lo
    } else if ratio >= model(hi) {
        hi
    } else {
        bisect(|p| model(p) - ratio, lo, hi, 1e-14)
    };
    let alpha = d2 / (eps[1].powf(order) - eps[2].powf(order));
    Extrapolation {
        limit: k[2] - alpha * eps[2].powf(order),
        order,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn periodic_spline_interpolates_and_converges() {
        let f = |x: f64| (2.0 * PI * x).cos() + 0.3 * (4.0 * PI * x).sin();
        let mut errors = Vec::new();
        for n in [16, 32, 64] {
            let s = CubicSpline::periodic((0..n).map(|i| f(i as f64 / n as f64)).collect());
            for i in 0..n {
                assert!((s.eval(i as f64 / n as f64) - f(i as f64 / n as f64)).abs() < 1e-12);
            }
            let err = (0..1000)
                .map(|i| {
                    let x = (i as f64 + 0.5) / 1000.0;
                    (s.eval(x) - f(x)).abs()
                })
                .fold(0.0, f64::max);
            errors.push(err);
            assert!((s.eval(1.25) - s.eval(0.25)).abs() < 1e-14);
        }
        assert!(
            errors[0] / errors[1] > 12.0 && errors[1] / errors[2] > 12.0,
            "{errors:?}"
        );
    }

    #[test]
    fn natural_spline_reproduces_lines() {
        let s = CubicSpline::natural((0..9).map(|i| 2.0 - 3.0 * i as f64 / 8.0).collect());
        for x in [0.0, 0.13, 0.5, 0.77, 1.0] {
            assert!((s.eval(x) - (2.0 - 3.0 * x)).abs() < 1e-13);
            assert!((s.derivative(x) + 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn spline_derivative_matches_finite_difference() {
        let s = CubicSpline::periodic((0..32).map(|i| (2.0 * PI * i as f64 / 32.0).sin()).collect());
        for x in [0.1, 0.33, 0.9] {
            let fd = (s.eval(x + 1e-6) - s.eval(x - 1e-6)) / 2e-6;
            assert!((s.derivative(x) - fd).abs() < 1e-6);
        }
    }

    #[test]
    fn trapezoid_rules() {
        let n = 8;
        let samples: Vec<f64> = (0..n).map(|i| (2.0 * PI * i as f64 / n as f64).cos().powi(2)).collect();
        assert!((trapezoid(&samples, 1.0 / n as f64, true) - 0.5).abs() < 1e-14);
        let line: Vec<f64> = (0..5).map(|i| i as f64 * 0.25).collect();
        assert!((trapezoid(&line, 0.25, false) - 0.5).abs() < 1e-15);
        let cum = cumulative_trapezoid(&line, 0.25);
        assert_eq!(cum.len(), 5);
        assert!((cum[4] - 0.5).abs() < 1e-15);
        assert!((midpoint(|x: f64| x * x, 0.0, 1.0, 1000) - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn parabola_vertex() {
        let g = |x: f64| 2.0 - 3.0 * (x - 0.04) * (x - 0.04);
        let (off, val) = parabolic_peak(g(-0.1), g(0.0), g(0.1), 0.1);
        assert!((off - 0.04).abs() < 1e-14 && (val - 2.0).abs() < 1e-14);
        assert_eq!(parabolic_peak(1.0, 0.0, 1.0, 0.1), (0.0, 0.0));
    }

    #[test]
    fn bisection() {
        let r = bisect(|x: f64| x * x - 2.0, 0.0, 2.0, 1e-15);
        assert!((r - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn richardson_recovers_model() {
        for p in [1.0, 1.3, 1.5, 2.0] {
            let eps = [0.2, 0.1, 0.05];
            let k = eps.map(|e: f64| 1.5 - 0.8 * e.powf(p));
            let ex = richardson(eps, k);
            assert!((ex.order - p).abs() < 1e-9);
            assert!((ex.limit - 1.5).abs() < 1e-12);
        }
        let flat = richardson([0.4, 0.2, 0.1], [2.0, 2.0, 2.0]);
        assert_eq!(flat.limit, 2.0);
        let clamped = richardson([0.4, 0.2, 0.1], [0.0, 1.0, 1.01]);
        assert_eq!(clamped.order, 2.0);
        let slow = richardson([0.2, 0.1, 0.05], [0.277, 0.585, 0.787]);
        assert_eq!(slow.order, 1.0);
        assert!((slow.limit - 0.989).abs() < 1e-12);
    }
}
