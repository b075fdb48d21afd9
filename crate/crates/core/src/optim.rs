//! Derivative-free 1D/3D minimizers and an L-BFGS driver whose line search
//! refuses steps that leave the finite-energy region.

use crate::tensor::Vec3;

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for a unimodal `f` on `[lo, hi]`, stopping when the
/// bracket is below `rel_tol · (1 + |t|)`. Non-finite values count as `+∞`.
/// Finishes with one parabolic step through the final triple, kept only if it
/// lowers the value.
pub fn golden_section<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, rel_tol: f64) -> (f64, f64) {
    let mut g = |t: f64| {
        let v = f(t);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = g(c);
    let mut fd = g(d);
    for _ in 0..200 {
        if (b - a).abs() <= rel_tol * (1.0 + c.abs()) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = g(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = g(d);
        }
    }
    let (mut best, mut fbest) = if fc <= fd { (c, fc) } else { (d, fd) };
    // parabolic polish through (c, d) and their midpoint
    let m = 0.5 * (c + d);
    let fm = g(m);
    if fm < fbest {
        best = m;
        fbest = fm;
    }
    let (x0, x1, x2) = (c, m, d);
    let (f0, f1, f2) = (fc, fm, fd);
    if f0.is_finite() && f1.is_finite() && f2.is_finite() {
        let denom = (x1 - x0) * (f1 - f2) - (x1 - x2) * (f1 - f0);
        if denom.abs() > 0.0 {
            let num = (x1 - x0).powi(2) * (f1 - f2) - (x1 - x2).powi(2) * (f1 - f0);
            let step = x1 - 0.5 * num / denom;
            if step.is_finite() && step >= lo && step <= hi {
                let fs = g(step);
                if fs < fbest {
                    best = step;
                    fbest = fs;
                }
            }
        }
    }
    let fa = g(lo);
    let fb = g(hi);
    if fa < fbest {
        return (lo, fa);
    }
    if fb < fbest {
        return (hi, fb);
    }
    (best, fbest)
}

/// Nelder–Mead on `ℝ³`; `+∞` values are simply worse than any finite value.
pub fn nelder_mead3<F: FnMut(&Vec3) -> f64>(
    mut f: F,
    start: Vec3,
    initial_step: f64,
    max_iter: usize,
    tol: f64,
) -> (Vec3, f64) {
    let mut g = |x: &Vec3| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<(Vec3, f64)> = Vec::with_capacity(4);
    simplex.push((start, g(&start)));
    for k in 0..3 {
        let mut p = start;
        p[k] += initial_step;
        simplex.push((p, g(&p)));
    }
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[3].1);
        if worst.is_finite() && (worst - best).abs() <= tol * (1.0 + best.abs()) {
            let spread = (1..4)
                .map(|i| (simplex[i].0 - simplex[0].0).norm())
                .fold(0.0, f64::max);
            if spread <= tol.sqrt() {
                break;
            }
        }
        let centroid = (simplex[0].0 + simplex[1].0 + simplex[2].0) * (1.0 / 3.0);
        let xw = simplex[3].0;
        let xr = centroid + (centroid - xw);
        let fr = g(&xr);
        if fr < simplex[0].1 {
            let xe = centroid + (centroid - xw) * 2.0;
            let fe = g(&xe);
            simplex[3] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[2].1 {
            simplex[3] = (xr, fr);
        } else {
            let xc = if fr < simplex[3].1 {
                centroid + (xr - centroid) * 0.5
            } else {
                centroid + (xw - centroid) * 0.5
            };
            let fc = g(&xc);
            if fc < simplex[3].1.min(fr) {
                simplex[3] = (xc, fc);
            } else {
                let x0 = simplex[0].0;
                for s in simplex.iter_mut().skip(1) {
                    let x = x0 + (s.0 - x0) * 0.5;
                    *s = (x, g(&x));
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex[0]
}

/// A smooth objective on `ℝⁿ` whose value may be `+∞` outside an open
/// feasible set.
pub trait Objective {
    /// Value and gradient; `None` when the point is infeasible.
    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> Option<f64>;

    /// Extra acceptance test for a trial point, e.g. that no determinant
    /// changed sign relative to `from`.
    fn admissible(&self, _from: &[f64], _to: &[f64]) -> bool {
        true
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LbfgsParams {
    pub max_iter: usize,
    pub memory: usize,
    pub grad_tol: f64,
    pub rel_f_tol: f64,
}

impl Default for LbfgsParams {
    fn default() -> Self {
        LbfgsParams {
            max_iter: 500,
            memory: 8,
            grad_tol: 1e-8,
            rel_f_tol: 1e-13,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    /// Objective after each accepted step, starting with the initial value.
    pub history: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// L-BFGS with Armijo backtracking. Trial points that are infeasible or fail
/// [`Objective::admissible`] shrink the step; the accepted value sequence is
/// nonincreasing. Returns `None` if the start is infeasible.
pub fn lbfgs<O: Objective>(obj: &O, x0: &[f64], params: &LbfgsParams) -> Option<LbfgsOutcome> {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut f = obj.value_grad(&x, &mut g)?;
    let mut history = vec![f];
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut iterations = 0;
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut dir = vec![0.0; n];
    while iterations < params.max_iter {
        let gnorm = dot(&g, &g).sqrt();
        if gnorm <= params.grad_tol * (1.0 + f.abs()) {
            break;
        }
        // two-loop recursion
        dir.copy_from_slice(&g);
        let m = s_hist.len();
        let mut alpha = vec![0.0; m];
        for i in (0..m).rev() {
            let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
            alpha[i] = rho * dot(&s_hist[i], &dir);
            for (d, y) in dir.iter_mut().zip(&y_hist[i]) {
                *d -= alpha[i] * y;
            }
        }
        let gamma = if m > 0 {
            dot(&s_hist[m - 1], &y_hist[m - 1]) / dot(&y_hist[m - 1], &y_hist[m - 1])
        } else {
            1.0 / gnorm.max(1.0)
        };
        for d in dir.iter_mut() {
            *d *= gamma;
        }
        for i in 0..m {
            let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
            let beta = rho * dot(&y_hist[i], &dir);
            for (d, s) in dir.iter_mut().zip(&s_hist[i]) {
                *d += (alpha[i] - beta) * s;
            }
        }
        for d in dir.iter_mut() {
            *d = -*d;
        }
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            // not a descent direction: reset to steepest descent
            s_hist.clear();
            y_hist.clear();
            for (d, gi) in dir.iter_mut().zip(&g) {
                *d = -gi / gnorm.max(1.0);
            }
            slope = dot(&g, &dir);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            for i in 0..n {
                x_new[i] = x[i] + step * dir[i];
            }
            if obj.admissible(&x, &x_new) {
                if let Some(fv) = obj.value_grad(&x_new, &mut g_new) {
                    if fv <= f + 1e-4 * step * slope {
                        accepted = Some(fv);
                        break;
                    }
                }
            }
            step *= 0.5;
        }
        let Some(f_new) = accepted else { break };
        iterations += 1;
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        if dot(&s, &y) > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if s_hist.len() == params.memory {
                s_hist.remove(0);
                y_hist.remove(0);
            }
            s_hist.push(s);
            y_hist.push(y);
        }
        let decrease = f - f_new;
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        f = f_new;
        history.push(f);
        if decrease.abs() <= params.rel_f_tol * (1.0 + f.abs()) {
            break;
        }
    }
    let grad_norm = dot(&g, &g).sqrt();
    Some(LbfgsOutcome {
        x,
        value: f,
        iterations,
        grad_norm,
        history,
    })
}
