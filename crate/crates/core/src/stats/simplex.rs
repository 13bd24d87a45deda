//! Derivative-free Nelder–Mead minimization.

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    pub max_iterations: usize,
    /// Stop when the spread of objective values across the simplex falls
    /// below `f_tolerance · (|f_best| + f_tolerance)`.
    pub f_tolerance: f64,
    /// ... and every vertex is within this (relative) distance of the best.
    pub x_tolerance: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            max_iterations: 5000,
            f_tolerance: 1e-12,
            x_tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Minimizes `f` from `start`, with the initial simplex spanned by `start`
/// plus `steps[i]` along each coordinate. Standard coefficients:
/// reflection 1, expansion 2, contraction ½, shrink ½.
pub fn nelder_mead<F>(mut f: F, start: &[f64], steps: &[f64], opts: SimplexOptions) -> SimplexResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = start.len();
    assert_eq!(steps.len(), n, "one step per coordinate");
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

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((start.to_vec(), eval(start)));
    for i in 0..n {
        let mut x = start.to_vec();
        x[i] += steps[i];
        let fx = eval(&x);
        simplex.push((x, fx));
    }

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iterations {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let f_best = simplex[0].1;
        let f_worst = simplex[n].1;
        let spread = f_worst - f_best;
        let x_spread = simplex[1..]
            .iter()
            .flat_map(|(x, _)| {
                x.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
            })
            .fold(0.0f64, f64::max);
        if f_best.is_finite()
            && spread <= opts.f_tolerance * (f_best.abs() + opts.f_tolerance)
            && x_spread <= opts.x_tolerance
        {
            converged = true;
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let reflected = along(1.0);
        let f_r = eval(&reflected);
        if f_r < simplex[0].1 {
            let expanded = along(2.0);
            let f_e = eval(&expanded);
            simplex[n] = if f_e < f_r { (expanded, f_e) } else { (reflected, f_r) };
            continue;
        }
        if f_r < simplex[n - 1].1 {
            simplex[n] = (reflected, f_r);
            continue;
        }
        let (contracted, f_c) = if f_r < simplex[n].1 {
            let c = along(0.5);
            let fc = eval(&c);
            (c, fc)
        } else {
            let c = along(-0.5);
            let fc = eval(&c);
            (c, fc)
        };
        if f_c < simplex[n].1.min(f_r) {
            simplex[n] = (contracted, f_c);
            continue;
        }
        let best = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let shrunk: Vec<f64> = best
                .iter()
                .zip(&vertex.0)
                .map(|(b, v)| b + 0.5 * (v - b))
                .collect();
            let fs = eval(&shrunk);
            *vertex = (shrunk, fs);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, f) = simplex.swap_remove(0);
    SimplexResult {
        x,
        f,
        iterations,
        evaluations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let r = nelder_mead(
            |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            &[-1.2, 1.0],
            &[0.1, 0.1],
            SimplexOptions::default(),
        );
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-5, "{:?}", r.x);
    }

    #[test]
    fn quadratic_bowl_3d() {
        let r = nelder_mead(
            |x| (x[0] - 3.0).powi(2) + 2.0 * (x[1] + 1.0).powi(2) + 0.5 * (x[2] - 10.0).powi(2),
            &[0.0, 0.0, 0.0],
            &[1.0, 1.0, 1.0],
            SimplexOptions::default(),
        );
        for (got, want) in r.x.iter().zip([3.0, -1.0, 10.0]) {
            assert!((got - want).abs() < 1e-5, "{:?}", r.x);
        }
    }

    #[test]
    fn never_worse_than_start() {
        let f = |x: &[f64]| (x[0].sin() * 3.0 + x[1].cos()).abs() + 0.01 * x[0] * x[0];
        let start = [2.0, 1.0];
        let r = nelder_mead(f, &start, &[0.5, 0.5], SimplexOptions::default());
        assert!(r.f <= f(&start));
    }
}
