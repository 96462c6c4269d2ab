//! Derivative-free simplex minimizer for small fixed-dimension problems.

/// Stopping rules and the starting simplex size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    /// Stop once every vertex lies within this distance (max-norm) of the best.
    pub diameter_tol: f64,
    /// Stop once the best value falls below this.
    pub value_tol: f64,
    pub max_iterations: usize,
    /// Offset of the initial vertices from the starting point.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            diameter_tol: 1e-8,
            value_tol: 1e-12,
            max_iterations: 2000,
            initial_step: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadResult<const N: usize> {
    pub point: [f64; N],
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn diameter<const N: usize>(simplex: &[[f64; N]], best: usize) -> f64 {
    simplex
        .iter()
        .flat_map(|v| v.iter().zip(&simplex[best]).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max)
}

fn affine<const N: usize>(a: &[f64; N], b: &[f64; N], t: f64) -> [f64; N] {
    // a + t (b - a)
    let mut out = [0.0; N];
    for k in 0..N {
        out[k] = a[k] + t * (b[k] - a[k]);
    }
    out
}

/// Minimizes `f` from `start` with the standard reflection (1), expansion
/// (2), contraction (1/2) and shrink (1/2) coefficients.
pub fn minimize<const N: usize, F>(mut f: F, start: [f64; N], opts: &NelderMeadOptions) -> NelderMeadResult<N>
where
    F: FnMut(&[f64; N]) -> f64,
{
    let eval = |f: &mut F, x: &[f64; N]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<[f64; N]> = Vec::with_capacity(N + 1);
    simplex.push(start);
    for k in 0..N {
        let mut v = start;
        v[k] += opts.initial_step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| eval(&mut f, x)).collect();
    let mut order: Vec<usize> = (0..=N).collect();

    for it in 0..opts.max_iterations {
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let (best, worst, second) = (order[0], order[N], order[N - 1]);
        if values[best] < opts.value_tol || diameter(&simplex, best) < opts.diameter_tol {
            return NelderMeadResult {
                point: simplex[best],
                value: values[best],
                iterations: it,
                converged: true,
            };
        }
        let mut centroid = [0.0; N];
        for &i in &order[..N] {
            for k in 0..N {
                centroid[k] += simplex[i][k] / N as f64;
            }
        }
        let reflected = affine(&centroid, &simplex[worst], -1.0);
        let fr = eval(&mut f, &reflected);
        if fr < values[best] {
            let expanded = affine(&centroid, &simplex[worst], -2.0);
            let fe = eval(&mut f, &expanded);
            if fe < fr {
                simplex[worst] = expanded;
                values[worst] = fe;
            } else {
                simplex[worst] = reflected;
                values[worst] = fr;
            }
            continue;
        }
        if fr < values[second] {
            simplex[worst] = reflected;
            values[worst] = fr;
            continue;
        }
        let (contracted, fc) = if fr < values[worst] {
            let c = affine(&centroid, &reflected, 0.5);
            let v = eval(&mut f, &c);
            (c, v)
        } else {
            let c = affine(&centroid, &simplex[worst], 0.5);
            let v = eval(&mut f, &c);
            (c, v)
        };
        if fc < values[worst].min(fr) {
            simplex[worst] = contracted;
            values[worst] = fc;
            continue;
        }
        let anchor = simplex[best];
        for i in 0..=N {
            if i != best {
                simplex[i] = affine(&anchor, &simplex[i], 0.5);
                values[i] = eval(&mut f, &simplex[i]);
            }
        }
    }
    let best = (0..=N).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
    NelderMeadResult {
        point: simplex[best],
        value: values[best],
        iterations: opts.max_iterations,
        converged: values[best] < opts.value_tol || diameter(&simplex, best) < opts.diameter_tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        let r = minimize(
            |x: &[f64; 3]| (x[0] - 1.0).powi(2) + 2.0 * (x[1] + 0.5).powi(2) + (x[2] - 3.0).powi(2),
            [0.0; 3],
            &NelderMeadOptions::default(),
        );
        assert!(r.converged);
        assert!((r.point[0] - 1.0).abs() < 1e-5);
        assert!((r.point[1] + 0.5).abs() < 1e-5);
        assert!((r.point[2] - 3.0).abs() < 1e-5);
    }

    #[test]
    fn rosenbrock() {
        let opts = NelderMeadOptions {
            value_tol: 1e-20,
            diameter_tol: 1e-12,
            max_iterations: 10_000,
            ..Default::default()
        };
        let r = minimize(
            |x: &[f64; 2]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2),
            [-1.2, 1.0],
            &opts,
        );
        assert!((r.point[0] - 1.0).abs() < 1e-6 && (r.point[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn iteration_cap_is_reported() {
        let opts = NelderMeadOptions { max_iterations: 3, value_tol: 0.0, ..Default::default() };
        let r = minimize(|x: &[f64; 2]| x[0].abs() + x[1].abs() + 1.0, [5.0, 5.0], &opts);
        assert!(!r.converged);
        assert_eq!(r.iterations, 3);
    }

    #[test]
    fn nan_is_treated_as_worse() {
        let r = minimize(
            |x: &[f64; 1]| if x[0] < 0.0 { f64::NAN } else { (x[0] - 0.5).powi(2) },
            [0.1],
            &NelderMeadOptions::default(),
        );
        assert!((r.point[0] - 0.5).abs() < 1e-5);
    }
}
