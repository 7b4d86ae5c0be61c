//! Nelder-Mead simplex downhill minimizer.

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexOptions {
    /// Initial simplex offsets, one per parameter.
    pub steps: Vec<f64>,
    /// Convergence threshold on the spread of vertex values.
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    /// `false` when `max_iter` was reached before the spread fell below `tol`.
    pub converged: bool,
    /// Best vertex value at the start of every iteration.
    pub best_history: Vec<f64>,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

/// Minimizes `objective` from `x0`.
///
/// Panics if `steps` does not match `x0` or contains a non-positive entry,
/// or if `tol` is not positive.
pub fn nelder_mead<F>(mut objective: F, x0: &[f64], opts: &SimplexOptions) -> SimplexResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    assert_eq!(opts.steps.len(), n, "one step per parameter");
    assert!(
        opts.steps.iter().all(|&s| s > 0.0),
        "steps must be positive"
    );
    assert!(opts.tol > 0.0, "tolerance must be positive");

    let mut evaluations = 0usize;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        let v = objective(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += opts.steps[i];
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v)).collect();
    let mut best_history = Vec::new();
    let mut iterations = 0usize;
    let mut converged = false;

    loop {
        // stable sort keeps the earlier vertex first on ties
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        best_history.push(values[0]);

        if values[n] - values[0] < opts.tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for v in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / n as f64;
            }
        }
        let along = |t: f64, from: &[f64]| -> Vec<f64> {
            centroid
                .iter()
                .zip(from)
                .map(|(c, x)| c + t * (x - c))
                .collect()
        };

        let worst = simplex[n].clone();
        let reflected = along(-REFLECT, &worst);
        let f_r = eval(&reflected);

        if f_r < values[0] {
            let expanded = along(-REFLECT * EXPAND, &worst);
            let f_e = eval(&expanded);
            if f_e < f_r {
                simplex[n] = expanded;
                values[n] = f_e;
            } else {
                simplex[n] = reflected;
                values[n] = f_r;
            }
            continue;
        }
        if f_r < values[n - 1] {
            simplex[n] = reflected;
            values[n] = f_r;
            continue;
        }
        let (candidate, f_c) = if f_r < values[n] {
            let c = along(-REFLECT * CONTRACT, &worst);
            let f = eval(&c);
            (c, f)
        } else {
            let c = along(CONTRACT, &worst);
            let f = eval(&c);
            (c, f)
        };
        if f_c < values[n].min(f_r) {
            simplex[n] = candidate;
            values[n] = f_c;
            continue;
        }
        let best = simplex[0].clone();
        for i in 1..=n {
            for (x, b) in simplex[i].iter_mut().zip(&best) {
                *x = b + SHRINK * (*x - b);
            }
            values[i] = eval(&simplex[i]);
        }
    }

    SimplexResult {
        x: simplex[0].clone(),
        value: values[0],
        iterations,
        evaluations,
        converged,
        best_history,
    }
}
