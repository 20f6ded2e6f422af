use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootOptions {
    /// Stop once `|f(x)| <= tol`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for RootOptions {
    fn default() -> Self {
        RootOptions {
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootResult {
    pub root: f64,
    pub residual: f64,
    pub iterations: usize,
    /// `|residual| <= tol`. False when the bracket shrank to adjacent floats
    /// without reaching the tolerance.
    pub converged: bool,
    pub bracket: Bracket,
}

/// Secant iteration kept inside a sign-change bracket.
///
/// The secant step through the two most recent iterates is accepted only if it
/// lands strictly inside the current bracket and the bracket has at least
/// halved over the last two steps; otherwise the midpoint is used. `f(lo)` and
/// `f(hi)` must have opposite signs (or one of them be zero).
pub fn safeguarded_secant<F>(mut f: F, lo: f64, hi: f64, opts: &RootOptions) -> Result<RootResult>
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let (mut fa, mut fb) = (f(a), f(b));
    if fa.is_nan() || fb.is_nan() {
        return Err(Error::InvalidArgument("function is NaN at the bracket ends".into()));
    }
    let done = |x: f64, fx: f64, it: usize, a: f64, b: f64| RootResult {
        root: x,
        residual: fx,
        iterations: it,
        converged: fx.abs() <= opts.tol,
        bracket: Bracket { lo: a, hi: b },
    };
    if fa.abs() <= opts.tol {
        return Ok(done(a, fa, 0, a, b));
    }
    if fb.abs() <= opts.tol {
        return Ok(done(b, fb, 0, a, b));
    }
    if fa.signum() == fb.signum() {
        return Err(Error::InvalidArgument(format!(
            "no sign change on [{a}, {b}]: f = {fa}, {fb}"
        )));
    }

    // Two most recent iterates for the secant.
    let (mut x0, mut f0, mut x1, mut f1) = (a, fa, b, fb);
    let mut width_two_back = f64::INFINITY;
    let mut width_one_back = b - a;

    for it in 1..=opts.max_iter {
        let secant = x1 - f1 * (x1 - x0) / (f1 - f0);
        let shrinking = (b - a) <= 0.5 * width_two_back;
        let x = if secant.is_finite() && secant > a && secant < b && shrinking {
            secant
        } else {
            a + 0.5 * (b - a)
        };
        if x <= a || x >= b {
            // Bracket collapsed to neighbouring floats.
            let (xr, fr) = if fa.abs() <= fb.abs() { (a, fa) } else { (b, fb) };
            return Ok(done(xr, fr, it, a, b));
        }
        let fx = f(x);
        if fx.abs() <= opts.tol {
            return Ok(done(x, fx, it, a, b));
        }
        if fx.signum() == fa.signum() {
            a = x;
            fa = fx;
        } else {
            b = x;
            fb = fx;
        }
        x0 = x1;
        f0 = f1;
        x1 = x;
        f1 = fx;
        width_two_back = width_one_back;
        width_one_back = b - a;
    }
    Err(Error::Convergence {
        iterations: opts.max_iter,
        message: format!("root not found; last bracket [{a}, {b}]"),
    })
}
