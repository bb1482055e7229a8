//! Monotone accelerated proximal gradient (FISTA with a descent safeguard).
//!
//! Minimizes `g(x) + h(x)` where `g` is smooth and `h` has a cheap proximal
//! operator. The step is governed by a diagonal metric `d` (initially a
//! Lipschitz estimate per coordinate) that doubles whenever the sufficient
//! decrease test fails. An iterate is only accepted if it does not increase
//! the objective; otherwise the momentum is reset, so accepted objective values
//! form a non-increasing sequence.

/// Smooth part of the objective.
pub(crate) trait Smooth {
    fn dim(&self) -> usize;
    /// Returns `g(x)` and writes `grad g(x)` into `grad`.
    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
    fn value(&self, x: &[f64]) -> f64;
}

/// Non-smooth part. `prox(z, step)` must return
/// `argmin_x step * h(x) + 0.5 ||x - z||^2`.
pub(crate) trait Prox {
    fn prox(&self, z: &mut [f64], step: f64);
    fn value(&self, x: &[f64]) -> f64;
}

/// `h = 0`.
pub(crate) struct NoProx;

impl Prox for NoProx {
    fn prox(&self, _z: &mut [f64], _step: f64) {}
    fn value(&self, _x: &[f64]) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Settings {
    pub max_iter: usize,
    /// Stop when an accepted step decreases the objective by less than this
    /// fraction (0 disables).
    pub rel_tol: f64,
    /// Stop when the gradient mapping is smaller than this (0 disables).
    pub grad_tol: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct Outcome {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Runs the method from `x0`. With a non-trivial prox the metric must be
/// uniform (all entries of `metric` equal), since `prox` takes a scalar step.
pub(crate) fn minimize<S: Smooth, P: Prox>(
    smooth: &S,
    prox: &P,
    x0: Vec<f64>,
    mut metric: Vec<f64>,
    settings: Settings,
) -> Outcome {
    let dim = smooth.dim();
    debug_assert_eq!(x0.len(), dim);
    debug_assert_eq!(metric.len(), dim);

    let mut x = x0;
    let mut fx = smooth.value(&x) + prox.value(&x);
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut grad = vec![0.0; dim];
    let mut z = vec![0.0; dim];
    let mut x_prev = x.clone();

    let mut converged = false;
    let mut iterations = 0;
    while iterations < settings.max_iter {
        iterations += 1;
        let gy = smooth.value_grad(&y, &mut grad);

        // backtracking on the diagonal metric
        let mut gz;
        loop {
            for i in 0..dim {
                z[i] = y[i] - grad[i] / metric[i];
            }
            prox.prox(&mut z, 1.0 / metric[0]);
            gz = smooth.value(&z);
            let mut model = gy;
            for i in 0..dim {
                let d = z[i] - y[i];
                model += grad[i] * d + 0.5 * metric[i] * d * d;
            }
            if gz.is_finite() && gz <= model + 1e-12 * gy.abs().max(1e-300) {
                break;
            }
            for m in metric.iter_mut() {
                *m *= 2.0;
            }
            if !metric[0].is_finite() {
                return Outcome {
                    x,
                    objective: fx,
                    iterations,
                    converged: false,
                };
            }
        }
        let fz = gz + prox.value(&z);

        // size of the gradient mapping at y
        let mapping: f64 = (0..dim)
            .map(|i| (metric[i] * (y[i] - z[i])).powi(2))
            .sum::<f64>()
            .sqrt();

        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        if fz <= fx {
            let decrease = fx - fz;
            x_prev.copy_from_slice(&x);
            x.copy_from_slice(&z);
            fx = fz;
            // y = x + ((t - 1) / t_next) (x - x_prev)
            let beta = (t - 1.0) / t_next;
            for i in 0..dim {
                y[i] = x[i] + beta * (x[i] - x_prev[i]);
            }
            t = t_next;
            if decrease <= settings.rel_tol * fx.abs().max(1e-300)
                || mapping < settings.grad_tol
            {
                converged = true;
                break;
            }
        } else if t == 1.0 {
            // a plain prox-gradient step from x failed to decrease: x is a
            // fixed point up to round-off
            converged = true;
            break;
        } else {
            // rejected: restart momentum from the current iterate
            y.copy_from_slice(&x);
            t = 1.0;
        }
    }
    Outcome {
        x,
        objective: fx,
        iterations,
        converged,
    }
}

/// Largest eigenvalue of a PSD operator by a fixed number of power steps.
/// The estimate approaches the true value from below.
pub(crate) fn power_estimate(dim: usize, steps: usize, apply: impl Fn(&[f64], &mut [f64])) -> f64 {
    if dim == 0 {
        return 0.0;
    }
    // deterministic start with no special structure
    let mut v: Vec<f64> = (0..dim)
        .map(|i| 1.0 + ((i as f64 + 1.0) * 0.618_033_988_749_895).fract())
        .collect();
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    v.iter_mut().for_each(|a| *a /= norm);
    let mut av = vec![0.0; dim];
    let mut lambda = 0.0;
    for _ in 0..steps {
        av.iter_mut().for_each(|a| *a = 0.0);
        apply(&v, &mut av);
        lambda = v.iter().zip(&av).map(|(a, b)| a * b).sum::<f64>();
        let norm = av.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            break;
        }
        for (a, b) in v.iter_mut().zip(&av) {
            *a = b / norm;
        }
    }
    lambda.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 0.5 * sum a_i (x_i - c_i)^2
    struct Quad {
        a: Vec<f64>,
        c: Vec<f64>,
    }

    impl Smooth for Quad {
        fn dim(&self) -> usize {
            self.a.len()
        }
        fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
            for i in 0..x.len() {
                grad[i] = self.a[i] * (x[i] - self.c[i]);
            }
            self.value(x)
        }
        fn value(&self, x: &[f64]) -> f64 {
            (0..x.len())
                .map(|i| 0.5 * self.a[i] * (x[i] - self.c[i]).powi(2))
                .sum()
        }
    }

    struct NonNegative;
    impl Prox for NonNegative {
        fn prox(&self, z: &mut [f64], _step: f64) {
            z.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        fn value(&self, _x: &[f64]) -> f64 {
            0.0
        }
    }

    #[test]
    fn unconstrained_quadratic() {
        let q = Quad {
            a: vec![1.0, 10.0, 100.0],
            c: vec![1.0, -2.0, 3.0],
        };
        let s = Settings {
            max_iter: 5000,
            rel_tol: 0.0,
            grad_tol: 1e-10,
        };
        // deliberately small metric: backtracking has to grow it
        let out = minimize(&q, &NoProx, vec![0.0; 3], vec![1.0; 3], s);
        assert!(out.converged);
        for (x, c) in out.x.iter().zip(&q.c) {
            assert!((x - c).abs() < 1e-9);
        }
    }

    #[test]
    fn projected_quadratic() {
        let q = Quad {
            a: vec![1.0, 2.0],
            c: vec![-1.0, 2.0],
        };
        let s = Settings {
            max_iter: 1000,
            rel_tol: 0.0,
            grad_tol: 1e-12,
        };
        let out = minimize(&q, &NonNegative, vec![5.0, 5.0], vec![2.0; 2], s);
        assert!(out.x[0].abs() < 1e-12);
        assert!((out.x[1] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn power_estimate_diagonal() {
        let d = [1.0, 4.0, 9.0];
        let l = power_estimate(3, 200, |v, out| {
            for i in 0..3 {
                out[i] = d[i] * v[i];
            }
        });
        assert!((l - 9.0).abs() < 1e-8);
    }
}
