//! Root finding for square nonlinear systems on the open unit box.
//!
//! Newton iteration uses a forward-difference Jacobian and step halving. When
//! the Jacobian is singular or halving fails to reduce the residual, the
//! solver continues with the fixed-point map `f <- f - r(f)`. Every iterate
//! is clamped to `[clamp, 1 - clamp]`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Newton,
    FixedPoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: Method,
    /// Convergence threshold on the residual's infinity norm.
    pub tol: f64,
    pub max_iter: usize,
    pub jacobian_step: f64,
    /// Step-halving retries per Newton iteration.
    pub damping: usize,
    pub clamp: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            method: Method::Newton,
            tol: 1e-8,
            max_iter: 200,
            jacobian_step: 1e-6,
            damping: 20,
            clamp: 1e-12,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::InvalidParameter("tol must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
        }
        if !(self.jacobian_step > 0.0 && self.jacobian_step < 0.5) {
            return Err(Error::InvalidParameter("jacobian_step must lie in (0, 0.5)".into()));
        }
        if !(self.clamp >= 0.0 && self.clamp < 0.5) {
            return Err(Error::InvalidParameter("clamp must lie in [0, 0.5)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    /// Method in use when the solver stopped.
    pub method: Method,
    /// Why Newton handed over to the fixed-point map, if it did.
    pub fallback: Option<String>,
}

fn norm_inf<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` for a (numerically) singular matrix.
pub fn solve_linear<T: Real>(mut a: Vec<Vec<T>>, mut b: Vec<T>) -> Option<Vec<T>> {
    let n = b.len();
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(T::zero(), |m, x| m.max(x.abs()));
    if scale == T::zero() || !scale.is_finite() {
        return None;
    }
    let eps = T::epsilon() * scale * T::from_usize(n.max(1)).unwrap();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if a[pivot][col].abs() <= eps {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == T::zero() {
                continue;
            }
            let (upper, lower) = a.split_at_mut(row);
            for (dst, &src) in lower[0][col..].iter_mut().zip(&upper[col][col..]) {
                *dst = *dst - factor * src;
            }
            b[row] = b[row] - factor * b[col];
        }
    }
    let mut x = vec![T::zero(); n];
    for row in (0..n).rev() {
        let s = (row + 1..n).fold(b[row], |s, k| s - a[row][k] * x[k]);
        x[row] = s / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Forward-difference Jacobian (backward near the upper bound), as rows.
fn jacobian<T: Real, F>(residual: &F, f: &[T], r: &[T], step: T, upper: T) -> Vec<Vec<T>>
where
    F: Fn(&[T]) -> Vec<T> + Sync,
{
    let m = f.len();
    let column = |j: usize| {
        let h = if f[j] + step > upper { -step } else { step };
        let mut probe = f.to_vec();
        probe[j] = probe[j] + h;
        let rp = residual(&probe);
        rp.iter().zip(r).map(|(&a, &b)| (a - b) / h).collect::<Vec<T>>()
    };
    let columns: Vec<Vec<T>> = if m >= 8 {
        (0..m).into_par_iter().map(column).collect()
    } else {
        (0..m).map(column).collect()
    };
    (0..m)
        .map(|i| (0..m).map(|j| columns[j][i]).collect())
        .collect()
}

/// Finds `f` with `|residual(f)|_inf <= tol`. Non-convergence is reported in
/// the diagnostics rather than as an error.
pub fn solve<T: Real, F>(residual: F, initial: &[T], config: &SolverConfig) -> Result<(Vec<T>, Diagnostics)>
where
    F: Fn(&[T]) -> Vec<T> + Sync,
{
    config.validate()?;
    if initial.is_empty() {
        return Err(Error::InvalidParameter("system has no unknowns".into()));
    }
    let lo = T::from_f64(config.clamp).unwrap();
    let hi = T::one() - lo;
    let tol = T::from_f64(config.tol).unwrap();
    let step = T::from_f64(config.jacobian_step).unwrap();
    let clamp = |v: T| if v.is_nan() { lo } else { v.max(lo).min(hi) };

    let mut f: Vec<T> = initial.iter().map(|&v| clamp(v)).collect();
    let mut r = residual(&f);
    let mut norm = norm_inf(&r);
    let mut method = config.method;
    let mut fallback = None;
    let mut iterations = 0;

    while iterations < config.max_iter && (norm > tol || norm.is_nan()) {
        iterations += 1;
        if method == Method::Newton {
            let jac = jacobian(&residual, &f, &r, step, hi);
            let neg: Vec<T> = r.iter().map(|&v| -v).collect();
            match solve_linear(jac, neg) {
                None => {
                    method = Method::FixedPoint;
                    fallback = Some(format!("singular Jacobian at iteration {iterations}"));
                }
                Some(delta) => {
                    let mut lambda = T::one();
                    let mut accepted = false;
                    for _ in 0..=config.damping {
                        let cand: Vec<T> = f
                            .iter()
                            .zip(&delta)
                            .map(|(&a, &d)| clamp(a + lambda * d))
                            .collect();
                        let rc = residual(&cand);
                        let nc = norm_inf(&rc);
                        if nc < norm {
                            f = cand;
                            r = rc;
                            norm = nc;
                            accepted = true;
                            break;
                        }
                        lambda = lambda / (T::one() + T::one());
                    }
                    if accepted {
                        continue;
                    }
                    method = Method::FixedPoint;
                    fallback = Some(format!("step halving exhausted at iteration {iterations}"));
                }
            }
        }
        f = f.iter().zip(&r).map(|(&a, &b)| clamp(a - b)).collect();
        r = residual(&f);
        norm = norm_inf(&r);
    }
    let converged = norm <= tol;
    Ok((
        f,
        Diagnostics {
            iterations,
            residual: norm.to_f64().unwrap_or(f64::NAN),
            converged,
            method,
            fallback,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_solve() {
        let a = vec![vec![2.0f64, 1.0], vec![1.0, 3.0]];
        let x = solve_linear(a, vec![3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-12 && (x[1] - 1.4).abs() < 1e-12);
        assert!(solve_linear(vec![vec![1.0, 2.0], vec![2.0, 4.0]], vec![1.0, 2.0]).is_none());
        assert!(solve_linear(vec![vec![0.0]], vec![1.0]).is_none());
    }

    #[test]
    fn newton_on_coupled_quadratics() {
        // roots at (0.3, 0.6)
        let res = |f: &[f64]| vec![f[0] * f[0] - 0.09, f[1] - 2.0 * f[0]];
        let (f, d) = solve(res, &[0.5, 0.5], &SolverConfig::default()).unwrap();
        assert!(d.converged && d.fallback.is_none());
        assert!((f[0] - 0.3).abs() < 1e-9 && (f[1] - 0.6).abs() < 1e-9);
    }

    #[test]
    fn fixed_point_contraction() {
        let res = |f: &[f64]| vec![f[0] - (0.5 * f[0] + 0.1)];
        let cfg = SolverConfig {
            method: Method::FixedPoint,
            ..SolverConfig::default()
        };
        let (f, d) = solve(res, &[0.9], &cfg).unwrap();
        assert!(d.converged);
        assert_eq!(d.method, Method::FixedPoint);
        assert!((f[0] - 0.2).abs() < 1e-7);
    }

    #[test]
    fn singular_jacobian_falls_back() {
        // residual independent of f: Jacobian is zero
        let res = |_: &[f64]| vec![0.25];
        let cfg = SolverConfig {
            max_iter: 5,
            ..SolverConfig::default()
        };
        let (_, d) = solve(res, &[0.5], &cfg).unwrap();
        assert!(!d.converged);
        assert_eq!(d.method, Method::FixedPoint);
        assert!(d.fallback.unwrap().contains("singular"));
        assert_eq!(d.iterations, 5);
    }

    #[test]
    fn iterates_stay_clamped() {
        let res = |f: &[f64]| vec![f[0] + 1.0];
        let (f, _) = solve(res, &[0.5], &SolverConfig::default()).unwrap();
        assert_eq!(f[0], 1e-12);
    }

    #[test]
    fn rejects_bad_config() {
        let res = |f: &[f64]| f.to_vec();
        let cfg = SolverConfig {
            tol: 0.0,
            ..SolverConfig::default()
        };
        assert!(solve(res, &[0.5], &cfg).is_err());
        assert!(solve(res, &[], &SolverConfig::default()).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let res = |f: &[f32]| vec![f[0] - 0.25];
        let cfg = SolverConfig {
            tol: 1e-6,
            jacobian_step: 1e-3,
            clamp: 1e-6,
            ..SolverConfig::default()
        };
        let (f, d) = solve(res, &[0.5f32], &cfg).unwrap();
        assert!(d.converged);
        assert!((f[0] - 0.25).abs() < 1e-5);
    }
}
