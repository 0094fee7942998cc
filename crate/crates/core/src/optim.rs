//! Smooth minimisation under linear inequality constraints C x >= b.
//!
//! Objectives return `None` outside their domain; line searches treat such
//! points as infeasible and shorten the step.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub(crate) type Objective<'a> = dyn Fn(&[f64]) -> Option<(f64, Vec<f64>)> + Sync + 'a;

#[derive(Debug, Clone)]
pub(crate) struct MinState {
    pub x: Vec<f64>,
    pub f: f64,
    pub g: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(x: &[f64], t: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + t * b).collect()
}

/// Weak Wolfe bracketing search (Lewis and Overton), robust to infeasible
/// trial points.
fn line_search(
    obj: &Objective,
    x: &[f64],
    f0: f64,
    g0d: f64,
    d: &[f64],
    t0: f64,
) -> Option<(f64, Vec<f64>, f64, Vec<f64>)> {
    const C1: f64 = 1e-4;
    const C2: f64 = 0.9;
    let (mut lo, mut hi) = (0.0, f64::INFINITY);
    let mut t = t0;
    let mut best: Option<(f64, Vec<f64>, f64, Vec<f64>)> = None;
    for _ in 0..60 {
        let xt = axpy(x, t, d);
        match obj(&xt) {
            Some((ft, gt)) if ft.is_finite() && ft <= f0 + C1 * t * g0d => {
                let curv = dot(&gt, d);
                let better = best.as_ref().map_or(true, |b| ft < b.2);
                if curv < C2 * g0d {
                    if better {
                        best = Some((t, xt, ft, gt));
                    }
                    lo = t;
                    t = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * t };
                } else {
                    return Some((t, xt, ft, gt));
                }
            }
            _ => {
                hi = t;
                t = 0.5 * (lo + hi);
            }
        }
        if hi.is_finite() && (hi - lo) < 1e-16 * (1.0 + hi) {
            break;
        }
    }
    best
}

/// BFGS with a dense inverse-Hessian approximation.
pub(crate) fn bfgs(obj: &Objective, x0: &[f64], max_iter: usize, gtol: f64) -> Option<MinState> {
    let n = x0.len();
    let (mut f, mut g) = obj(x0)?;
    if !f.is_finite() {
        return None;
    }
    let mut x = x0.to_vec();
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut first = true;
    let mut stall = 0;
    let mut done = 0;
    for it in 0..max_iter {
        done = it + 1;
        if norm_inf(&g) <= gtol {
            return Some(MinState {
                x,
                f,
                g,
                iterations: it,
                converged: true,
            });
        }
        let gv = DVector::from_column_slice(&g);
        let mut d: Vec<f64> = (-(&h * &gv)).iter().copied().collect();
        let mut g0d = dot(&g, &d);
        if !(g0d < 0.0) {
            h = DMatrix::identity(n, n);
            d = g.iter().map(|v| -v).collect();
            g0d = dot(&g, &d);
        }
        let t0 = if first {
            (1.0 / norm_inf(&d).max(1e-12)).min(1.0)
        } else {
            1.0
        };
        let Some((t, xn, fnew, gn)) = line_search(obj, &x, f, g0d, &d, t0) else {
            if first {
                break;
            }
            // restart from steepest descent once before giving up
            h = DMatrix::identity(n, n);
            first = true;
            stall += 1;
            if stall > 2 {
                break;
            }
            continue;
        };
        let s: Vec<f64> = d.iter().map(|v| t * v).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if first {
                let scale = sy / dot(&y, &y);
                h = DMatrix::identity(n, n) * scale;
            }
            let sv = DVector::from_column_slice(&s);
            let yv = DVector::from_column_slice(&y);
            let rho = 1.0 / sy;
            let hy = &h * &yv;
            let yhy = yv.dot(&hy);
            // H+ = H - rho (s hy' + hy s') + (rho^2 yhy + rho) s s'
            h -= (&sv * hy.transpose() + &hy * sv.transpose()) * rho;
            h += (&sv * sv.transpose()) * (rho * rho * yhy + rho);
        }
        first = false;
        let df = f - fnew;
        x = xn;
        f = fnew;
        g = gn;
        if df.abs() <= 1e-15 * (1.0 + f.abs()) && norm_inf(&s) <= 1e-14 * (1.0 + norm_inf(&x)) {
            stall += 1;
            if stall > 3 {
                break;
            }
        } else {
            stall = 0;
        }
    }
    let converged = norm_inf(&g) <= gtol;
    Some(MinState {
        x,
        f,
        g,
        iterations: done,
        converged,
    })
}

fn slack(c: &DMatrix<f64>, b: &[f64], x: &[f64]) -> Vec<f64> {
    (0..c.nrows())
        .map(|j| (0..c.ncols()).map(|k| c[(j, k)] * x[k]).sum::<f64>() - b[j])
        .collect()
}

const HANDOFF_TOL: f64 = 1e-4;
const HANDOFF_VIOL: f64 = 1e-7;

/// Augmented Lagrangian (Powell-Hestenes-Rockafellar) outer loop with BFGS
/// inner solves, run until the point is close enough for [`polish`].
pub(crate) fn augmented_lagrangian(
    obj: &Objective,
    c: &DMatrix<f64>,
    b: &[f64],
    x0: &[f64],
    max_iter: usize,
    gtol: f64,
) -> Option<MinState> {
    let m = c.nrows();
    if m == 0 {
        return bfgs(obj, x0, max_iter, gtol);
    }
    let mut lambda = vec![0.0; m];
    let mut rho = 10.0;
    let mut x = x0.to_vec();
    let mut prev_viol = f64::INFINITY;
    let mut total = 0;
    let mut last: Option<MinState> = None;
    for outer in 0..30 {
        // loose inner solves; the Newton polish sharpens the result
        let inner_tol = gtol.max(HANDOFF_TOL).max(10f64.powi(-(outer as i32) - 1));
        let lam = lambda.clone();
        let r = rho;
        let penalised = |v: &[f64]| -> Option<(f64, Vec<f64>)> {
            let (mut f, mut g) = obj(v)?;
            let s = slack(c, b, v);
            for j in 0..m {
                if s[j] < lam[j] / r {
                    f += -lam[j] * s[j] + 0.5 * r * s[j] * s[j];
                    let coef = -lam[j] + r * s[j];
                    for k in 0..v.len() {
                        g[k] += coef * c[(j, k)];
                    }
                } else {
                    f -= lam[j] * lam[j] / (2.0 * r);
                }
            }
            Some((f, g))
        };
        let inner = bfgs(&penalised, &x, max_iter, inner_tol)?;
        total += inner.iterations;
        x = inner.x.clone();
        let s = slack(c, b, &x);
        let viol = s.iter().fold(0.0f64, |v, sj| v.max(-sj));
        for j in 0..m {
            lambda[j] = (lambda[j] - rho * s[j]).max(0.0);
        }
        let inner_ok = inner.converged && inner_tol <= gtol.max(HANDOFF_TOL);
        last = Some(inner);
        if viol <= HANDOFF_VIOL && inner_ok {
            break;
        }
        if viol > 0.25 * prev_viol {
            rho *= 10.0;
        }
        prev_viol = viol;
        if rho > 1e12 {
            break;
        }
    }
    let (f, g) = obj(&x)?;
    let inner_ok = last.is_some_and(|l| l.converged);
    Some(MinState {
        converged: inner_ok,
        x,
        f,
        g,
        iterations: total,
    })
}

/// Orthonormal basis of {d : A d = 0}.
pub(crate) fn null_space(a: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    if a.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    let ata = a.transpose() * a;
    let eig = SymmetricEigen::new(ata);
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-10 * max.max(1.0);
    let cols: Vec<usize> = (0..n).filter(|&k| eig.eigenvalues[k].abs() <= tol).collect();
    let mut z = DMatrix::zeros(n, cols.len());
    for (j, &k) in cols.iter().enumerate() {
        z.set_column(j, &eig.eigenvectors.column(k));
    }
    z
}

/// Reduced Hessian Z' H Z by central differences of the gradient along the
/// columns of Z.
pub(crate) fn reduced_hessian(obj: &Objective, x: &[f64], g: &[f64], z: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let k = z.ncols();
    let n = x.len();
    let step0 = 1e-5 * (1.0 + norm_inf(x));
    let mut hz = DMatrix::zeros(n, k);
    for j in 0..k {
        let dir: Vec<f64> = z.column(j).iter().copied().collect();
        let mut h = step0;
        let mut col = None;
        for _ in 0..6 {
            let plus = obj(&axpy(x, h, &dir)).map(|r| r.1);
            let minus = obj(&axpy(x, -h, &dir)).map(|r| r.1);
            col = match (plus, minus) {
                (Some(p), Some(m)) => Some(p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<_>>()),
                (Some(p), None) => Some(p.iter().zip(g).map(|(a, b)| (a - b) / h).collect()),
                (None, Some(m)) => Some(g.iter().zip(&m).map(|(a, b)| (a - b) / h).collect()),
                (None, None) => None,
            };
            if col.is_some() {
                break;
            }
            h *= 0.1;
        }
        let col = col?;
        for i in 0..n {
            hz[(i, j)] = col[i];
        }
    }
    let r = z.transpose() * hz;
    Some((&r + r.transpose()) * 0.5)
}

#[derive(Debug, Clone)]
pub(crate) struct Polished {
    pub state: MinState,
    pub active: Vec<usize>,
    pub z: DMatrix<f64>,
    pub hessian: Option<DMatrix<f64>>,
}

fn project_active(c: &DMatrix<f64>, b: &[f64], active: &[usize], x: &mut [f64]) {
    if active.is_empty() {
        return;
    }
    let n = x.len();
    let a = DMatrix::from_fn(active.len(), n, |i, k| c[(active[i], k)]);
    let s = slack(c, b, x);
    let r = DVector::from_iterator(active.len(), active.iter().map(|&j| s[j]));
    let aat = &a * a.transpose();
    if let Some(ch) = aat.cholesky() {
        let corr = a.transpose() * ch.solve(&r);
        for k in 0..n {
            x[k] -= corr[k];
        }
    }
}

/// Active-set Newton refinement on the null space of the active
/// constraints. Optionally returns the reduced Hessian at the final point.
pub(crate) fn polish(
    obj: &Objective,
    c: &DMatrix<f64>,
    b: &[f64],
    start: MinState,
    gtol: f64,
    with_hessian: bool,
) -> Polished {
    const ACTIVE_TOL: f64 = 1e-7;
    let n = start.x.len();
    let mut state = start;
    let s = slack(c, b, &state.x);
    let mut active: Vec<usize> = (0..c.nrows()).filter(|&j| s[j] <= ACTIVE_TOL).collect();
    let mut x = state.x.clone();
    project_active(c, b, &active, &mut x);
    if let Some((f, g)) = obj(&x) {
        if f.is_finite() {
            state.x = x;
            state.f = f;
            state.g = g;
        }
    }
    let mut hessian: Option<(Vec<f64>, DMatrix<f64>)> = None;
    let mut converged = false;
    for _ in 0..25 {
        let a = DMatrix::from_fn(active.len(), n, |i, k| c[(active[i], k)]);
        let z = null_space(&a, n);
        let gv = DVector::from_column_slice(&state.g);
        let gr = z.transpose() * &gv;
        if norm_inf(gr.as_slice()) <= gtol {
            // release a constraint whose multiplier has the wrong sign
            if !active.is_empty() {
                let aat = &a * a.transpose();
                if let Some(ch) = aat.clone().cholesky() {
                    let lam = ch.solve(&(&a * &gv));
                    let (k, v) = lam
                        .iter()
                        .enumerate()
                        .fold((0, f64::INFINITY), |m, (k, v)| if *v < m.1 { (k, *v) } else { m });
                    if v < -gtol.max(1e-8) {
                        active.remove(k);
                        continue;
                    }
                }
            }
            converged = true;
            break;
        }
        let Some(hr) = reduced_hessian(obj, &state.x, &state.g, &z) else {
            break;
        };
        hessian = Some((state.x.clone(), hr.clone()));
        let k = z.ncols();
        let mut mu = 0.0;
        let dr = loop {
            let m = &hr + DMatrix::identity(k, k) * mu;
            if let Some(ch) = m.cholesky() {
                break Some(ch.solve(&(-&gr)));
            }
            mu = if mu == 0.0 {
                1e-6 * hr.diagonal().amax().max(1.0)
            } else {
                mu * 10.0
            };
            if mu > 1e12 {
                break None;
            }
        };
        let Some(dr) = dr else { break };
        let d: Vec<f64> = (&z * dr).iter().copied().collect();
        let sl = slack(c, b, &state.x);
        let mut tmax = 1.0;
        let mut blocking = None;
        for j in 0..c.nrows() {
            if active.contains(&j) {
                continue;
            }
            let cd: f64 = (0..n).map(|k| c[(j, k)] * d[k]).sum();
            if cd < 0.0 {
                let t = sl[j].max(0.0) / -cd;
                if t < tmax {
                    tmax = t;
                    blocking = Some(j);
                }
            }
        }
        let g0d = dot(&state.g, &d);
        let mut t = tmax;
        let mut accepted = None;
        for _ in 0..40 {
            let xt = axpy(&state.x, t, &d);
            if let Some((ft, gt)) = obj(&xt) {
                if ft.is_finite() && ft <= state.f + 1e-4 * t * g0d.min(0.0) + 1e-12 * state.f.abs() {
                    accepted = Some((xt, ft, gt));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((xt, ft, gt)) = accepted else { break };
        let moved = norm_inf(&d) * t;
        state.x = xt;
        state.f = ft;
        state.g = gt;
        state.iterations += 1;
        if t == tmax && tmax < 1.0 {
            if let Some(j) = blocking {
                active.push(j);
                active.sort_unstable();
            }
        }
        if moved <= 1e-15 * (1.0 + norm_inf(&state.x)) {
            break;
        }
    }
    let a = DMatrix::from_fn(active.len(), n, |i, k| c[(active[i], k)]);
    let z = null_space(&a, n);
    let gr = z.transpose() * DVector::from_column_slice(&state.g);
    state.converged = converged || norm_inf(gr.as_slice()) <= gtol;
    let hessian = if with_hessian {
        match hessian {
            Some((hx, h)) if hx == state.x && h.nrows() == z.ncols() => Some(h),
            _ => reduced_hessian(obj, &state.x, &state.g, &z),
        }
    } else {
        None
    };
    Polished {
        state,
        active,
        z,
        hessian,
    }
}
