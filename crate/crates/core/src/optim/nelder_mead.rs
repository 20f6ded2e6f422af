/// Settings for [`minimize`]. Defaults use the standard reflection, expansion,
/// contraction and shrink coefficients `(1, 2, 1/2, 1/2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    /// Edge length of the initial axis-aligned simplex.
    pub initial_step: f64,
    /// Converged when every vertex is within `x_tol` (max-norm) of the best...
    pub x_tol: f64,
    /// ...and every vertex value is within `f_tol` of the best value.
    pub f_tol: f64,
    pub max_iter: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            initial_step: 0.5,
            x_tol: 1e-6,
            f_tol: 1e-9,
            max_iter: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Max-norm distance from the best vertex to the farthest one at exit.
    pub simplex_size: f64,
}

/// Minimizes `f` from `start` with the Nelder–Mead simplex method.
pub fn minimize<F>(mut f: F, start: &[f64], opts: &NelderMeadOptions) -> NelderMeadResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = start.len();
    assert!(n > 0, "cannot minimize over zero dimensions");
    let mut evaluations = 0usize;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(start.to_vec());
    for k in 0..n {
        let mut v = start.to_vec();
        v[k] += opts.initial_step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v)).collect();

    let mut iterations = 0;
    let mut converged = false;
    loop {
        // Stable sort keeps ties in insertion order, which keeps runs reproducible.
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let size = simplex_size(&simplex);
        let spread = values[n] - values[0];
        if size <= opts.x_tol && spread <= opts.f_tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n)
            .map(|d| simplex[..n].iter().map(|v| v[d]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(opts.reflection);
        let fr = eval(&xr);
        if fr < values[0] {
            let xe = along(opts.reflection * opts.expansion);
            let fe = eval(&xe);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
            continue;
        }
        if fr < values[n] {
            let xc = along(opts.reflection * opts.contraction);
            let fc = eval(&xc);
            if fc <= fr {
                simplex[n] = xc;
                values[n] = fc;
                continue;
            }
        } else {
            let xcc = along(-opts.contraction);
            let fcc = eval(&xcc);
            if fcc < values[n] {
                simplex[n] = xcc;
                values[n] = fcc;
                continue;
            }
        }
        let best = simplex[0].clone();
        for k in 1..=n {
            let v: Vec<f64> = best
                .iter()
                .zip(&simplex[k])
                .map(|(b, x)| b + opts.shrink * (x - b))
                .collect();
            values[k] = eval(&v);
            simplex[k] = v;
        }
    }

    NelderMeadResult {
        x: simplex[0].clone(),
        value: values[0],
        iterations,
        evaluations,
        converged,
        simplex_size: simplex_size(&simplex),
    }
}

fn simplex_size(simplex: &[Vec<f64>]) -> f64 {
    let best = &simplex[0];
    simplex[1..]
        .iter()
        .flat_map(|v| v.iter().zip(best).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        let r = minimize(
            |x| (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 0.5).powi(2),
            &[0.0, 0.0],
            &NelderMeadOptions::default(),
        );
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-5);
        assert!((r.x[1] + 0.5).abs() < 1e-5);
        assert!(r.simplex_size <= 1e-6);
    }

    #[test]
    fn rosenbrock() {
        let opts = NelderMeadOptions {
            x_tol: 1e-10,
            f_tol: 1e-14,
            max_iter: 5000,
            ..Default::default()
        };
        let r = minimize(
            |x| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2),
            &[-1.2, 1.0],
            &opts,
        );
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn one_dimensional_and_flat() {
        let r = minimize(|x| (x[0] - 2.0).abs(), &[0.0], &NelderMeadOptions::default());
        assert!(r.converged && (r.x[0] - 2.0).abs() < 1e-6);
        // A constant objective still terminates by shrinking.
        let r = minimize(|_| 7.0, &[0.3], &NelderMeadOptions::default());
        assert!(r.converged);
        assert_eq!(r.value, 7.0);
    }

    #[test]
    fn iteration_cap() {
        let opts = NelderMeadOptions {
            max_iter: 3,
            ..Default::default()
        };
        let r = minimize(|x| x[0] * x[0], &[10.0], &opts);
        assert!(!r.converged);
        assert_eq!(r.iterations, 3);
    }
}
