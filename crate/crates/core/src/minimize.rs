//! Nonsmooth convex minimization of a norm over the affine hyperplane `dq(b) = 1`.
//!
//! Descent directions are the min-norm element of sampled subgradients (gradient
//! sampling); each step is a golden-section line search.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{QprocError, Result};

const GOLDEN: f64 = 0.618_033_988_749_894_9;
const MAX_ITER: usize = 20_000;
pub(crate) const STALL_WINDOW: usize = 50;
pub(crate) const STALL_IMPROVEMENT: f64 = 1e-10;

pub(crate) struct Objective<'a> {
    pub value: &'a (dyn Fn(&[f64]) -> f64 + Sync),
    pub subgradient: &'a (dyn Fn(&[f64]) -> Vec<f64> + Sync),
}

/// Orthonormal affine chart `b = origin + basis·t` of `{b : dq·b = 1}`.
pub(crate) struct Hyperplane {
    pub origin: DVector<f64>,
    pub basis: DMatrix<f64>,
}

impl Hyperplane {
    pub fn new(dq: &[f64]) -> Self {
        let n = dq.len();
        let q = DVector::from_column_slice(dq);
        let qq = q.norm_squared();
        let origin = q.unscale(qq);
        let mut frame: Vec<DVector<f64>> = vec![q.unscale(qq.sqrt())];
        for j in 0..n {
            if frame.len() == n {
                break;
            }
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            for f in &frame {
                let c = f.dot(&e);
                e -= f * c;
            }
            // second pass for round-off
            for f in &frame {
                let c = f.dot(&e);
                e -= f * c;
            }
            let nrm = e.norm();
            if nrm > 1e-8 {
                frame.push(e.unscale(nrm));
            }
        }
        let cols: Vec<DVector<f64>> = frame.into_iter().skip(1).collect();
        let basis = if cols.is_empty() {
            DMatrix::zeros(n, 0)
        } else {
            DMatrix::from_columns(&cols)
        };
        Self { origin, basis }
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn point(&self, t: &DVector<f64>) -> DVector<f64> {
        &self.origin + &self.basis * t
    }

    pub fn chart(&self, b: &DVector<f64>) -> DVector<f64> {
        self.basis.transpose() * (b - &self.origin)
    }
}

const POLISH_STEPS: usize = 20;

/// Newton steps on the chart, for a minimizer at which the norm is differentiable.
/// Finishes the convergence that sampled-subgradient descent leaves at ~1e-8.
pub(crate) fn polish(
    plane: &Hyperplane,
    objective: &Objective<'_>,
    b: &DVector<f64>,
    v: f64,
) -> (DVector<f64>, f64) {
    let dim = plane.dim();
    if dim == 0 {
        return (b.clone(), v);
    }
    let grad = |t: &DVector<f64>| {
        plane.basis.transpose()
            * DVector::from_vec((objective.subgradient)(plane.point(t).as_slice()))
    };
    let h = 1e-6 * plane.origin.norm().max(1e-300);
    let mut t = plane.chart(b);
    let mut g = grad(&t);
    let mut best = (b.clone(), v);
    for _ in 0..POLISH_STEPS {
        if g.norm() < 1e-15 {
            break;
        }
        let mut hess = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            let mut e = DVector::zeros(dim);
            e[i] = h;
            hess.set_column(i, &((grad(&(&t + &e)) - grad(&(&t - &e))) / (2.0 * h)));
        }
        let hess = (&hess + hess.transpose()) * 0.5;
        let Some(chol) = hess.cholesky() else { break };
        let next_t = &t - chol.solve(&g);
        let next = plane.point(&next_t);
        let nv = (objective.value)(next.as_slice());
        let ng = grad(&next_t);
        if !(nv <= best.1 * (1.0 + 4.0 * f64::EPSILON)) || ng.norm() >= g.norm() {
            break;
        }
        t = next_t;
        g = ng;
        best = (next, nv);
    }
    best
}

/// Minimum-norm point of the convex hull of `points` (Wolfe's algorithm).
pub(crate) fn min_norm_point(points: &[DVector<f64>]) -> DVector<f64> {
    let scale = points.iter().fold(0.0f64, |m, p| m.max(p.norm_squared()));
    let tol = 1e-14 * scale.max(1e-300);
    let start = (0..points.len())
        .min_by(|&a, &b| points[a].norm_squared().total_cmp(&points[b].norm_squared()))
        .unwrap();
    let mut active = vec![start];
    let mut lambda = vec![1.0];
    let combine = |active: &[usize], lambda: &[f64]| {
        let mut x = DVector::zeros(points[0].len());
        for (&i, &l) in active.iter().zip(lambda) {
            x += &points[i] * l;
        }
        x
    };
    for _ in 0..200 {
        let x = combine(&active, &lambda);
        let xx = x.norm_squared();
        let (j, best) = (0..points.len())
            .map(|i| (i, x.dot(&points[i])))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if best >= xx - tol || active.contains(&j) {
            return x;
        }
        active.push(j);
        lambda.push(0.0);
        loop {
            let alpha = affine_minimizer(points, &active);
            if alpha.iter().all(|&a| a > 1e-14) {
                lambda = alpha;
                break;
            }
            let mut theta = 1.0f64;
            for (l, a) in lambda.iter().zip(&alpha) {
                if *a <= 1e-14 && l - a > 0.0 {
                    theta = theta.min(l / (l - a));
                }
            }
            for (l, a) in lambda.iter_mut().zip(&alpha) {
                *l = (1.0 - theta) * *l + theta * a;
            }
            let mut k = 0;
            while k < active.len() {
                if lambda[k] <= 1e-14 {
                    active.remove(k);
                    lambda.remove(k);
                } else {
                    k += 1;
                }
            }
            if active.is_empty() {
                active.push(start);
                lambda = vec![1.0];
                break;
            }
            let total: f64 = lambda.iter().sum();
            for l in lambda.iter_mut() {
                *l /= total;
            }
        }
    }
    combine(&active, &lambda)
}

/// Weights minimizing `|Σ α_i P_i|` subject to `Σ α_i = 1`.
fn affine_minimizer(points: &[DVector<f64>], active: &[usize]) -> Vec<f64> {
    let k = active.len();
    let mut kkt = DMatrix::zeros(k + 1, k + 1);
    let mut rhs = DVector::zeros(k + 1);
    for a in 0..k {
        for b in 0..k {
            kkt[(a, b)] = points[active[a]].dot(&points[active[b]]);
        }
        kkt[(a, k)] = 1.0;
        kkt[(k, a)] = 1.0;
    }
    rhs[k] = 1.0;
    let sol = kkt
        .clone()
        .lu()
        .solve(&rhs)
        .filter(|s| s.iter().all(|x| x.is_finite()))
        .unwrap_or_else(|| {
            kkt.svd(true, true)
                .solve(&rhs, 1e-14)
                .unwrap_or_else(|_| DVector::from_element(k + 1, 1.0 / k as f64))
        });
    sol.rows(0, k).iter().copied().collect()
}

/// Golden-section minimum of a unimodal `phi` on `[lo, hi]`.
pub(crate) fn golden_section(phi: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let mut x1 = hi - GOLDEN * (hi - lo);
    let mut x2 = lo + GOLDEN * (hi - lo);
    let mut f1 = phi(x1);
    let mut f2 = phi(x2);
    for _ in 0..200 {
        if (hi - lo) <= 1e-15 * (1.0 + lo.abs() + hi.abs()) {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - GOLDEN * (hi - lo);
            f1 = phi(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + GOLDEN * (hi - lo);
            f2 = phi(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

fn unit_ball_sample(rng: &mut ChaCha8Rng, dim: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n <= 1.0 && n > 0.0 {
            return v;
        }
    }
}

/// Minimizes the objective over the hyperplane from one start; returns `(b, value)`.
pub(crate) fn descend(
    plane: &Hyperplane,
    objective: &Objective<'_>,
    start: &DVector<f64>,
    seed: u64,
) -> Result<(DVector<f64>, f64)> {
    let dim = plane.dim();
    let phi_t = |t: &DVector<f64>| (objective.value)(plane.point(t).as_slice());
    let mut t = plane.chart(start);
    let mut value = phi_t(&t);
    if dim == 0 {
        return Ok((plane.point(&t), value));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let length = plane.origin.norm().max(1e-300);
    let mut eps = 0.1 * length;
    let eps_min = 1e-13 * length;
    let grad_t = |t: &DVector<f64>| {
        let g = DVector::from_vec((objective.subgradient)(plane.point(t).as_slice()));
        plane.basis.transpose() * g
    };
    let mut history = vec![value];
    for iter in 0..MAX_ITER {
        if eps < eps_min {
            return Ok((plane.point(&t), value));
        }
        if iter >= STALL_WINDOW && history[iter - STALL_WINDOW] - value < STALL_IMPROVEMENT {
            return Ok((plane.point(&t), value));
        }
        let mut samples = vec![grad_t(&t)];
        for _ in 0..(2 * dim + 1) {
            let u = unit_ball_sample(&mut rng, dim);
            samples.push(grad_t(&(&t + u * eps)));
        }
        let d = min_norm_point(&samples);
        let gscale = samples.iter().fold(0.0f64, |m, g| m.max(g.norm()));
        let dn = d.norm();
        if dn <= 1e-12 * gscale.max(1e-300) {
            eps *= 0.1;
            history.push(value);
            continue;
        }
        let dir = -d.unscale(dn);
        let phi = |a: f64| phi_t(&(&t + &dir * a));
        let mut a = eps;
        let mut fa = phi(a);
        if !(fa < value) {
            eps *= 0.1;
            history.push(value);
            continue;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let f2 = phi(2.0 * a);
            if f2 >= fa {
                break;
            }
            lo = a;
            a *= 2.0;
            fa = f2;
        }
        let (a_best, f_best) = golden_section(&phi, lo, 2.0 * a);
        let (step, f_new) = if f_best <= fa { (a_best, f_best) } else { (a, fa) };
        if f_new < value {
            t += &dir * step;
            value = f_new;
        } else {
            eps *= 0.1;
        }
        history.push(value);
    }
    Err(QprocError::Numerical {
        message: format!("no convergence after {MAX_ITER} iterations"),
        best: plane.point(&t).iter().copied().collect(),
    })
}
