//! Derivative-free simplex (Nelder-Mead) minimization.
//!
//! Both vertex fitting and the extrinsic solvers minimize piecewise-linear
//! or piecewise-smooth costs, so the shared optimizer makes no gradient
//! assumptions. Fully deterministic: ties are broken by vertex index.

/// Options for the simplex minimizer.
#[derive(Debug, Clone)]
pub struct SimplexOptions {
    /// Iteration cap per run.
    pub max_iterations: usize,
    /// Converged when the simplex diameter drops below this.
    pub x_tolerance: f64,
    /// Converged when the best-to-worst value spread drops below this.
    pub f_tolerance: f64,
    /// Per-dimension offsets used to build the initial simplex.
    pub initial_step: Vec<f64>,
}

impl SimplexOptions {
    pub fn new(max_iterations: usize, x_tolerance: f64, f_tolerance: f64, initial_step: Vec<f64>) -> Self {
        Self {
            max_iterations,
            x_tolerance,
            f_tolerance,
            initial_step,
        }
    }
}

/// Outcome of a simplex run.
#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

// Standard Nelder-Mead coefficients.
const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

/// Minimizes `f` from `x0` with the Nelder-Mead simplex method.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], opts: &SimplexOptions) -> SimplexResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    assert!(n > 0, "empty parameter vector");
    assert_eq!(opts.initial_step.len(), n, "initial_step length mismatch");

    let mut evaluations = 0usize;
    let mut eval = |x: &[f64], count: &mut usize| {
        *count += 1;
        f(x)
    };

    // Initial simplex: x0 plus one perturbed vertex per dimension.
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += opts.initial_step[i];
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex
        .iter()
        .map(|v| eval(v, &mut evaluations))
        .collect();

    let mut iterations = 0usize;
    let mut converged = false;

    while iterations < opts.max_iterations {
        iterations += 1;

        // Order vertices best-to-worst, tie-broken by index for determinism.
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| {
            values[a]
                .partial_cmp(&values[b])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let simplex_sorted: Vec<Vec<f64>> = order.iter().map(|&i| simplex[i].clone()).collect();
        let values_sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
        simplex = simplex_sorted;
        values = values_sorted;

        let spread = values[n] - values[0];
        let diameter = simplex[1..]
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&simplex[0])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0_f64, f64::max);
        if spread < opts.f_tolerance || diameter < opts.x_tolerance {
            converged = true;
            break;
        }

        // Centroid of all but the worst vertex.
        let mut centroid = vec![0.0; n];
        for v in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x;
            }
        }
        for c in centroid.iter_mut() {
            *c /= n as f64;
        }

        let worst = simplex[n].clone();
        let lerp = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> {
            a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
        };

        // Reflection.
        let reflected = lerp(&centroid, &worst, -REFLECT);
        let f_reflected = eval(&reflected, &mut evaluations);

        if f_reflected < values[0] {
            // Expansion.
            let expanded = lerp(&centroid, &worst, -EXPAND);
            let f_expanded = eval(&expanded, &mut evaluations);
            if f_expanded < f_reflected {
                simplex[n] = expanded;
                values[n] = f_expanded;
            } else {
                simplex[n] = reflected;
                values[n] = f_reflected;
            }
        } else if f_reflected < values[n - 1] {
            simplex[n] = reflected;
            values[n] = f_reflected;
        } else {
            // Contraction, outside or inside of the worst vertex.
            let (candidate, f_candidate) = if f_reflected < values[n] {
                let outside = lerp(&centroid, &reflected, CONTRACT);
                let f_outside = eval(&outside, &mut evaluations);
                (outside, f_outside)
            } else {
                let inside = lerp(&centroid, &worst, CONTRACT);
                let f_inside = eval(&inside, &mut evaluations);
                (inside, f_inside)
            };
            if f_candidate < values[n].min(f_reflected) {
                simplex[n] = candidate;
                values[n] = f_candidate;
            } else {
                // Shrink everything toward the best vertex.
                let best = simplex[0].clone();
                for i in 1..=n {
                    simplex[i] = lerp(&best, &simplex[i], SHRINK);
                    values[i] = eval(&simplex[i], &mut evaluations);
                }
            }
        }
    }

    let (best_idx, _) = values
        .iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| {
            a.partial_cmp(b)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(i.cmp(j))
        })
        .expect("nonempty simplex");
    SimplexResult {
        x: simplex[best_idx].clone(),
        value: values[best_idx],
        iterations,
        evaluations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn options(n: usize) -> SimplexOptions {
        SimplexOptions::new(2000, 1e-10, 1e-14, vec![0.1; n])
    }

    #[test]
    fn minimizes_quadratic_bowl() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(2) + (x[1] + 1.0).powi(2);
        let r = nelder_mead(f, &[0.0, 0.0], &options(2));
        assert!(r.converged);
        assert!((r.x[0] - 3.0).abs() < 1e-6);
        assert!((r.x[1] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn minimizes_nonsmooth_l1_cone() {
        let f = |x: &[f64]| (x[0] - 1.0).abs() + (x[1] - 2.0).abs() + (x[2] + 0.5).abs();
        let r = nelder_mead(f, &[4.0, -3.0, 2.0], &options(3));
        assert!(r.value < 1e-5, "value {}", r.value);
    }

    #[test]
    fn rosenbrock_descends() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = nelder_mead(f, &[-1.2, 1.0], &options(2));
        assert!(r.value < 1e-6, "value {}", r.value);
    }

    #[test]
    fn flat_plateau_terminates_at_start() {
        // All-equal costs converge immediately without wandering.
        let f = |_: &[f64]| 1.0;
        let r = nelder_mead(f, &[5.0, -5.0], &options(2));
        assert!(r.converged);
        assert_eq!(r.x, vec![5.0, -5.0]);
        assert_eq!(r.iterations, 1);
    }

    #[test]
    fn deterministic_across_runs() {
        let f = |x: &[f64]| x[0].abs().sqrt() + (x[1] - 0.3).powi(2);
        let a = nelder_mead(f, &[1.0, 1.0], &options(2));
        let b = nelder_mead(f, &[1.0, 1.0], &options(2));
        assert_eq!(a.x, b.x);
        assert_eq!(a.evaluations, b.evaluations);
    }

    #[test]
    fn respects_iteration_cap() {
        let f = |x: &[f64]| x[0].powi(2);
        let opts = SimplexOptions::new(3, 1e-300, 1e-300, vec![0.1]);
        let r = nelder_mead(f, &[10.0], &opts);
        assert!(!r.converged);
        assert_eq!(r.iterations, 3);
    }
}
