//! Shared numerical routines: bracketed bisection and adaptive Simpson
//! quadrature with explicit breakpoint splitting.
//!
//! Bisection is used everywhere a monotone function has to be inverted; it is
//! derivative-free and converges unconditionally on a sign-changing bracket.

/// Root of `f` on `[lo, hi]` by bisection, to absolute x-tolerance `x_tol`.
///
/// Requires a sign change over the bracket; returns `None` otherwise.
/// If an endpoint is already an exact zero it is returned directly.
pub fn bisect<F>(f: F, mut lo: f64, mut hi: f64, x_tol: f64) -> Option<f64>
where
    F: Fn(f64) -> f64,
{
    debug_assert!(lo <= hi);
    let flo = f(lo);
    if flo == 0.0 {
        return Some(lo);
    }
    let fhi = f(hi);
    if fhi == 0.0 {
        return Some(hi);
    }
    if flo.signum() == fhi.signum() || flo.is_nan() || fhi.is_nan() {
        return None;
    }
    let neg_low = flo < 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= x_tol || mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Some(mid);
        }
        if (fm < 0.0) == neg_low {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` with absolute tolerance
/// `tol`. The integrand must be finite on the closed interval.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, tol: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    if b <= a {
        return 0.0;
    }
    let m = 0.5 * (a + b);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(&f, a, b, fa, fm, fb, whole, tol, 48)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64
where
    F: Fn(f64) -> f64,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    // An absolute tolerance below one ulp of the local integral is not
    // representable; floor it at machine precision of the running value.
    let floor = (left.abs() + right.abs()) * 4.0 * f64::EPSILON;
    if depth == 0 || delta.abs() <= 15.0 * tol.max(floor) {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Integrate `f` over `[a, b]`, splitting at the given breakpoints so that
/// each subinterval is smooth. Breakpoints outside `(a, b)` are ignored.
pub fn integrate_with_breakpoints<F>(f: F, a: f64, b: f64, breaks: &[f64], tol: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    if b <= a {
        return 0.0;
    }
    let mut cuts: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|&x| x > a && x < b)
        .collect();
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup();
    let mut total = 0.0;
    let mut left = a;
    let n = cuts.len() + 1;
    let piece_tol = tol / n as f64;
    for cut in cuts {
        total += adaptive_simpson(&f, left, cut, piece_tol);
        left = cut;
    }
    total + adaptive_simpson(&f, left, b, piece_tol)
}

/// Maximize a unimodal function on `[lo, hi]` by golden-section search.
/// Returns the located maximizer and its value.
pub fn golden_section_max<F>(f: F, lo: f64, hi: f64, x_tol: f64) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut a = lo;
    let mut b = hi;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if b - a <= x_tol {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Central finite difference of `f` at `x` with step `eps`.
pub fn central_diff<F>(f: F, x: f64, eps: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    (f(x + eps) - f(x - eps)) / (2.0 * eps)
}

/// One-sided second-order difference, stepping into the domain from `x`.
/// `dir` is +1.0 at a left endpoint and -1.0 at a right endpoint.
pub fn one_sided_diff<F>(f: F, x: f64, eps: f64, dir: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    let h = eps * dir;
    (-3.0 * f(x) + 4.0 * f(x + h) - f(x + 2.0 * h)) / (2.0 * h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_finds_sqrt2() {
        let root = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-12).unwrap();
        assert!((root - 2.0_f64.sqrt()).abs() < 1e-11);
    }

    #[test]
    fn bisect_decreasing_function() {
        let root = bisect(|x| 1.0 - x * x, 0.5, 3.0, 1e-12).unwrap();
        assert!((root - 1.0).abs() < 1e-11);
    }

    #[test]
    fn bisect_requires_sign_change() {
        assert!(bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-12).is_none());
    }

    #[test]
    fn simpson_matches_closed_forms() {
        let i = adaptive_simpson(|x| x.sin(), 0.0, std::f64::consts::PI, 1e-12);
        assert!((i - 2.0).abs() < 1e-10);
        let i = adaptive_simpson(|x| x * x * x, 0.0, 1.0, 1e-12);
        assert!((i - 0.25).abs() < 1e-12);
        let i = adaptive_simpson(|x| (-x).exp(), 0.0, 1.0, 1e-12);
        assert!((i - (1.0 - (-1.0_f64).exp())).abs() < 1e-11);
    }

    #[test]
    fn breakpoint_splitting_handles_kinks() {
        // |x - 0.3| has a kink; exact integral over [0,1] is 0.29.
        let f = |x: f64| (x - 0.3).abs();
        let i = integrate_with_breakpoints(f, 0.0, 1.0, &[0.3], 1e-12);
        assert!((i - 0.29).abs() < 1e-11, "got {i}");
    }

    #[test]
    fn empty_interval_is_zero() {
        assert_eq!(adaptive_simpson(|x| x, 1.0, 1.0, 1e-10), 0.0);
        assert_eq!(integrate_with_breakpoints(|x| x, 2.0, 1.0, &[], 1e-10), 0.0);
    }

    #[test]
    fn golden_section_finds_parabola_peak() {
        let (x, fx) = golden_section_max(|x| -(x - 0.3) * (x - 0.3), 0.0, 1.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-8);
        assert!(fx.abs() < 1e-15);
        // maximum at the boundary
        let (x, _) = golden_section_max(|x| -x, 0.0, 1.0, 1e-10);
        assert!(x < 1e-8);
    }

    #[test]
    fn finite_differences() {
        let d = central_diff(|x| x * x, 1.5, 1e-6);
        assert!((d - 3.0).abs() < 1e-8);
        let d = one_sided_diff(|x| x * x, 0.0, 1e-5, 1.0);
        assert!(d.abs() < 1e-8);
        let d = one_sided_diff(|x| x * x, 1.0, 1e-5, -1.0);
        assert!((d - 2.0).abs() < 1e-8);
    }
}
