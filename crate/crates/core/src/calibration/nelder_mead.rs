use serde::Serialize;

/// Outcome of one simplex search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Best value after each iteration, starting with the initial simplex.
    pub trajectory: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    /// Stop when every vertex is within this ∞-norm distance of the best.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial edge length as a fraction of each box side.
    pub initial_step: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            tol: 1e-6,
            max_iter: 500,
            initial_step: 0.1,
        }
    }
}

fn clip(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, (lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(*lo, *hi);
    }
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Nelder–Mead minimization inside a box; every trial point is clipped to the
/// box before evaluation. NaN objective values count as +∞.
pub fn nelder_mead<F>(
    mut f: F,
    x0: &[f64],
    bounds: &[(f64, f64)],
    opts: &SimplexOptions,
) -> SimplexResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut evaluations = 0;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        sanitize(f(x))
    };
    let mut start = x0.to_vec();
    clip(&mut start, bounds);
    if n == 0 {
        let value = eval(&start);
        return SimplexResult {
            x: start,
            value,
            iterations: 0,
            evaluations: 1,
            converged: true,
            trajectory: vec![value],
        };
    }

    let mut simplex: Vec<Vec<f64>> = vec![start.clone()];
    for i in 0..n {
        let (lo, hi) = bounds[i];
        let mut step = opts.initial_step * (hi - lo);
        if step == 0.0 {
            step = opts.initial_step * start[i].abs().max(1.0);
        }
        let mut v = start.clone();
        v[i] = if start[i] + step <= hi { start[i] + step } else { start[i] - step };
        clip(&mut v, bounds);
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v)).collect();

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut trajectory = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    loop {
        // stable ordering: value, then insertion order
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        trajectory.push(values[0]);

        let diameter = simplex[1..]
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&simplex[0])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if diameter < opts.tol && values[0].is_finite() {
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
        let toward = |coef: f64, from: &[f64]| -> Vec<f64> {
            let mut p: Vec<f64> = centroid
                .iter()
                .zip(from)
                .map(|(c, w)| c + coef * (c - w))
                .collect();
            clip(&mut p, bounds);
            p
        };
        let worst = simplex[n].clone();
        let reflected = toward(alpha, &worst);
        let f_r = eval(&reflected);
        if f_r < values[0] {
            let expanded = toward(gamma, &worst);
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
        // outside contraction c + ρ(c − w) when the reflection helped, inside otherwise
        let contracted = if f_r < values[n] {
            toward(rho, &worst)
        } else {
            toward(-rho, &worst)
        };
        let f_c = eval(&contracted);
        if f_c < values[n].min(f_r) {
            simplex[n] = contracted;
            values[n] = f_c;
            continue;
        }
        // shrink toward the best vertex
        let best = simplex[0].clone();
        for i in 1..=n {
            let mut v: Vec<f64> = best
                .iter()
                .zip(&simplex[i])
                .map(|(b, x)| b + sigma * (x - b))
                .collect();
            clip(&mut v, bounds);
            values[i] = eval(&v);
            simplex[i] = v;
        }
    }
    SimplexResult {
        x: simplex[0].clone(),
        value: values[0],
        iterations,
        evaluations,
        converged,
        trajectory,
    }
}
