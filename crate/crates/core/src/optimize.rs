//! Small derivative-free minimizers used by the geometric measures.

use crate::real::Real;

/// Golden-section search for a minimum of a unimodal `f` on `[a, b]`.
/// Returns `(argmin, min)`.
pub fn golden_section<T: Real>(mut f: impl FnMut(T) -> T, mut a: T, mut b: T, tol: T) -> (T, T) {
    let inv_phi = T::c(0.618_033_988_749_894_8);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    if f1 < f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Compass (coordinate) search in the plane: tries `±step` along each axis,
/// moves on improvement, halves the step otherwise, stops once the step drops
/// below `min_step`. Returns `(argmin, min)`.
pub fn coordinate_search<T: Real>(mut f: impl FnMut([T; 2]) -> T, start: [T; 2], step: T, min_step: T) -> ([T; 2], T) {
    let mut x = start;
    let mut fx = f(x);
    let mut step = step;
    let half = T::c(0.5);
    let mut evaluations = 0usize;
    while step >= min_step && evaluations < 100_000 {
        let mut improved = false;
        for axis in 0..2 {
            for sign in [T::one(), -T::one()] {
                let mut y = x;
                y[axis] += sign * step;
                let fy = f(y);
                evaluations += 1;
                if fy < fx {
                    x = y;
                    fx = fy;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step *= half;
        }
    }
    (x, fx)
}
