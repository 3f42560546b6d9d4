/// Cap on bisection steps; `[0, 1]` is exhausted in f64 well before this.
const MAX_BISECTIONS: usize = 200;

/// Minimizes a convex differentiable function on `[0, 1]` given its
/// derivative, by bisection on the sign of the derivative.
///
/// Stops when the bracket is at most `tol` wide, when
/// `|g'(mid)| <= tol * |g'(0)|`, or when the bracket can no longer be split.
/// Returns `0` or `1` when the derivative has no sign change.
pub fn line_search(derivative: impl Fn(f64) -> f64, tol: f64) -> f64 {
    let d0 = derivative(0.0);
    if !(d0 < 0.0) {
        return 0.0;
    }
    if !(derivative(1.0) > 0.0) {
        return 1.0;
    }
    let scale = d0.abs();
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid <= lo || mid >= hi {
            break;
        }
        let g = derivative(mid);
        if g.abs() <= tol * scale {
            return mid;
        }
        if g > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}
