//! Small smooth minimizers: BFGS for unconstrained problems and a spectral
//! projected gradient method for boxes.

use serde::Serialize;

#[derive(Debug, Clone, Copy)]
pub struct OptimOptions {
    /// Stop once the (projected) gradient's max-norm drops below this.
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Objective values below this are treated as divergence to `-inf`.
    pub floor: f64,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-10,
            max_iter: 100_000,
            floor: -1e9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    /// No further decrease is representable; the iterate is as good as
    /// double precision allows.
    Stalled,
    MaxIterations,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub status: Status,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn axpy(x: &[f64], a: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(x, d)| x + a * d).collect()
}

/// Minimize a smooth convex `f` from `x0`. `f(x, grad)` returns the value and
/// writes the gradient.
///
/// Started from the identity, every iterate stays in `x0 + span(gradients)`,
/// so flat directions of the objective are left at their starting value.
pub fn bfgs<F>(mut f: F, x0: &[f64], opts: OptimOptions) -> OptimResult
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut h = identity(n);
    let mut g_new = vec![0.0; n];
    let mut iterations = 0;
    let mut status = Status::MaxIterations;
    while iterations < opts.max_iter {
        if fx < opts.floor {
            status = Status::Unbounded;
            break;
        }
        if norm_inf(&g) <= opts.grad_tol {
            status = Status::Converged;
            break;
        }
        iterations += 1;
        let mut d: Vec<f64> = (0..n).map(|i| -dot(&h[i], &g)).collect();
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            h = identity(n);
            d = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        // Armijo backtracking, then doubling while the decrease continues so
        // that divergent directions reach the floor quickly
        let mut step = 1.0;
        let mut trial = axpy(&x, step, &d);
        let mut f_trial = f(&trial, &mut g_new);
        while !(f_trial <= fx + 1e-4 * step * slope) && step > 1e-20 {
            step *= 0.5;
            trial = axpy(&x, step, &d);
            f_trial = f(&trial, &mut g_new);
        }
        if !(f_trial <= fx + 1e-4 * step * slope) {
            status = Status::Stalled;
            break;
        }
        if step == 1.0 {
            let mut g_big = vec![0.0; n];
            while step < 1e12 {
                let big = axpy(&x, 2.0 * step, &d);
                let f_big = f(&big, &mut g_big);
                if f_big < f_trial + 1e-4 * step * slope {
                    step *= 2.0;
                    trial = big;
                    f_trial = f_big;
                    g_new.copy_from_slice(&g_big);
                } else {
                    break;
                }
            }
        }
        let s: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        let progressed = f_trial < fx;
        x = trial;
        fx = f_trial;
        g.copy_from_slice(&g_new);
        if sy > 1e-300 {
            bfgs_update(&mut h, &s, &y, sy);
        }
        if !progressed && norm_inf(&s) <= 1e-15 * (1.0 + norm_inf(&x)) {
            status = Status::Stalled;
            break;
        }
    }
    OptimResult {
        grad_norm: norm_inf(&g),
        x,
        value: fx,
        iterations,
        status,
    }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// Inverse-Hessian update `H <- (I - rho s y') H (I - rho y s') + rho s s'`.
fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i], y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

/// Minimize a smooth convex `f` over the box `[lower, upper]` (bounds may be
/// infinite) by spectral projected gradient with a non-monotone Armijo rule.
pub fn spg<F>(mut f: F, x0: &[f64], lower: &[f64], upper: &[f64], opts: OptimOptions) -> OptimResult
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let project = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .enumerate()
            .map(|(i, &x)| x.clamp(lower[i], upper[i]))
            .collect()
    };
    let pg_norm = |x: &[f64], g: &[f64]| -> f64 {
        let p = project(&axpy(x, -1.0, g));
        p.iter().zip(x).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    };
    let mut x = project(x0);
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut recent = vec![fx];
    let mut alpha = 1.0;
    let mut g_new = vec![0.0; n];
    let mut iterations = 0;
    let mut status = Status::MaxIterations;
    while iterations < opts.max_iter {
        if fx < opts.floor {
            status = Status::Unbounded;
            break;
        }
        if pg_norm(&x, &g) <= opts.grad_tol {
            status = Status::Converged;
            break;
        }
        iterations += 1;
        let target = project(&axpy(&x, -alpha, &g));
        let d: Vec<f64> = target.iter().zip(&x).map(|(a, b)| a - b).collect();
        let slope = dot(&g, &d);
        let reference = recent.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut lambda = 1.0;
        let mut trial = axpy(&x, lambda, &d);
        let mut f_trial = f(&trial, &mut g_new);
        while !(f_trial <= reference + 1e-4 * lambda * slope) && lambda > 1e-20 {
            lambda *= 0.5;
            trial = axpy(&x, lambda, &d);
            f_trial = f(&trial, &mut g_new);
        }
        if !(f_trial <= reference + 1e-4 * lambda * slope) {
            status = Status::Stalled;
            break;
        }
        let s: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        alpha = if sy > 0.0 { (dot(&s, &s) / sy).clamp(1e-10, 1e10) } else { 1e10 };
        if norm_inf(&s) <= 1e-15 * (1.0 + norm_inf(&x)) && f_trial >= fx {
            status = Status::Stalled;
            break;
        }
        x = trial;
        fx = f_trial;
        g.copy_from_slice(&g_new);
        recent.push(fx);
        if recent.len() > 10 {
            recent.remove(0);
        }
    }
    OptimResult {
        grad_norm: pg_norm(&x, &g),
        x,
        value: fx,
        iterations,
        status,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log_sum_exp(x: &[f64], g: &mut [f64]) -> f64 {
        // f(a, b) = log(e^{a} + e^{-a} + e^{b - 1} + e^{1 - b}) has its minimum at (0, 1)
        let terms = [x[0].exp(), (-x[0]).exp(), (x[1] - 1.0).exp(), (1.0 - x[1]).exp()];
        let total: f64 = terms.iter().sum();
        g[0] = (terms[0] - terms[1]) / total;
        g[1] = (terms[2] - terms[3]) / total;
        total.ln()
    }

    #[test]
    fn bfgs_finds_smooth_minimum() {
        let r = bfgs(log_sum_exp, &[3.0, -2.0], OptimOptions::default());
        assert!(matches!(r.status, Status::Converged | Status::Stalled));
        assert!(r.x[0].abs() < 1e-8 && (r.x[1] - 1.0).abs() < 1e-8);
        assert!((r.value - 4f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn bfgs_reports_divergence() {
        let r = bfgs(
            |x, g| {
                g[0] = -1.0;
                -x[0]
            },
            &[0.0],
            OptimOptions::default(),
        );
        assert_eq!(r.status, Status::Unbounded);
        assert!(r.iterations < 100);
    }

    #[test]
    fn spg_respects_box() {
        let r = spg(log_sum_exp, &[0.5, 0.0], &[0.2, -1.0], &[1.0, 0.5], OptimOptions::default());
        assert!((r.x[0] - 0.2).abs() < 1e-12 && (r.x[1] - 0.5).abs() < 1e-12);
        assert_eq!(r.status, Status::Converged);
    }

    #[test]
    fn flat_directions_are_untouched() {
        // depends on x[0] - x[1] only
        let r = bfgs(
            |x, g| {
                let d = x[0] - x[1] - 1.0;
                g[0] = d;
                g[1] = -d;
                0.5 * d * d
            },
            &[0.0, 0.0],
            OptimOptions::default(),
        );
        assert!((r.x[0] - 0.5).abs() < 1e-12 && (r.x[1] + 0.5).abs() < 1e-12);
    }
}
