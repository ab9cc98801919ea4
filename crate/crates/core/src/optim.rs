//! Derivative-free minimizers: Nelder-Mead simplex search, a finite-difference
//! Newton polish and 1-D helpers.

/// Outcome of a minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Largest coordinate distance from the best vertex at termination.
    pub diameter: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMead {
    pub max_iter: usize,
    /// Convergence threshold on the simplex diameter.
    pub xtol: f64,
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self {
            max_iter: 2000,
            xtol: 1e-8,
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
        }
    }
}

impl NelderMead {
    pub fn with_xtol(mut self, xtol: f64) -> Self {
        self.xtol = xtol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    /// Minimize `f` from `x0`, building the initial simplex with per-coordinate `steps`.
    /// Non-finite objective values are treated as `+inf`.
    pub fn minimize<F>(&self, mut f: F, x0: &[f64], steps: &[f64]) -> Minimum
    where
        F: FnMut(&[f64]) -> f64,
    {
        let n = x0.len();
        assert_eq!(n, steps.len(), "one step per coordinate");
        let mut evals = 0usize;
        let mut eval = |x: &[f64]| {
            evals += 1;
            let v = f(x);
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
            v[i] += steps[i];
            simplex.push(v);
        }
        let mut fvals: Vec<f64> = simplex.iter().map(|v| eval(v)).collect();

        let mut iterations = 0;
        let mut converged = false;
        let mut diameter = f64::INFINITY;
        while iterations < self.max_iter {
            let mut order: Vec<usize> = (0..=n).collect();
            order.sort_by(|&a, &b| fvals[a].total_cmp(&fvals[b]));
            simplex = order.iter().map(|&i| simplex[i].clone()).collect();
            fvals = order.iter().map(|&i| fvals[i]).collect();

            diameter = simplex[1..]
                .iter()
                .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            if diameter < self.xtol {
                converged = true;
                break;
            }
            iterations += 1;

            let mut centroid = vec![0.0; n];
            for v in &simplex[..n] {
                for (c, x) in centroid.iter_mut().zip(v) {
                    *c += x / n as f64;
                }
            }
            let toward = |coef: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&simplex[n])
                    .map(|(c, w)| c + coef * (c - w))
                    .collect()
            };

            let xr = toward(self.reflection);
            let fr = eval(&xr);
            if fr < fvals[0] {
                let xe = toward(self.reflection * self.expansion);
                let fe = eval(&xe);
                if fe < fr {
                    simplex[n] = xe;
                    fvals[n] = fe;
                } else {
                    simplex[n] = xr;
                    fvals[n] = fr;
                }
                continue;
            }
            if fr < fvals[n - 1] {
                simplex[n] = xr;
                fvals[n] = fr;
                continue;
            }
            let (xc, fc) = if fr < fvals[n] {
                let xc = toward(self.reflection * self.contraction);
                let fc = eval(&xc);
                (xc, fc)
            } else {
                let xc = toward(-self.contraction);
                let fc = eval(&xc);
                (xc, fc)
            };
            if fc < fvals[n].min(fr) {
                simplex[n] = xc;
                fvals[n] = fc;
                continue;
            }
            let best = simplex[0].clone();
            for i in 1..=n {
                for (x, b) in simplex[i].iter_mut().zip(&best) {
                    *x = b + self.shrink * (*x - b);
                }
                fvals[i] = eval(&simplex[i]);
            }
        }

        let best = (0..=n).min_by(|&a, &b| fvals[a].total_cmp(&fvals[b])).unwrap_or(0);
        Minimum {
            x: simplex[best].clone(),
            fx: fvals[best],
            iterations,
            evaluations: evals,
            converged,
            diameter,
        }
    }
}

/// Newton iterations on central-difference derivatives with fixed step `h`,
/// started close to a minimum of a smooth `f`.
///
/// The fixed point is set by the difference quotients, not by the path taken
/// to reach it, so two nearby starting points end at the same answer up to
/// evaluation noise. `None` if the Hessian is not positive definite, a step
/// exceeds `max_step` or the iteration does not settle.
pub fn newton_polish<F>(mut f: F, x0: &[f64], h: f64, max_step: f64) -> Option<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    use nalgebra::{DMatrix, DVector};
    let d = x0.len();
    let mut x = x0.to_vec();
    let mut probe = x.clone();
    let mut at = |x: &[f64], probe: &mut Vec<f64>, moves: &[(usize, f64)]| {
        probe.copy_from_slice(x);
        for &(i, dx) in moves {
            probe[i] += dx;
        }
        f(probe)
    };
    for _ in 0..10 {
        let f0 = at(&x, &mut probe, &[]);
        let mut g = DVector::zeros(d);
        let mut hess = DMatrix::zeros(d, d);
        for i in 0..d {
            let (fp, fm) = (at(&x, &mut probe, &[(i, h)]), at(&x, &mut probe, &[(i, -h)]));
            g[i] = (fp - fm) / (2.0 * h);
            hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
            for j in 0..i {
                let fpp = at(&x, &mut probe, &[(i, h), (j, h)]);
                let fpm = at(&x, &mut probe, &[(i, h), (j, -h)]);
                let fmp = at(&x, &mut probe, &[(i, -h), (j, h)]);
                let fmm = at(&x, &mut probe, &[(i, -h), (j, -h)]);
                let v = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
                hess[(i, j)] = v;
                hess[(j, i)] = v;
            }
        }
        if !(g.iter().chain(hess.iter()).all(|v| v.is_finite())) {
            return None;
        }
        let step = hess.cholesky()?.solve(&(-g));
        let size = step.amax();
        if !(size <= max_step) {
            return None;
        }
        for (xi, si) in x.iter_mut().zip(step.iter()) {
            *xi += si;
        }
        // convergence is quadratic, so the point after a tiny step is exact
        // to evaluation noise
        if size < 1e-8 {
            return Some(x);
        }
    }
    None
}

/// Golden-section search for a minimum of a unimodal `f` on `[lo, hi]`.
/// Returns `(x, f(x))`.
pub fn golden_section<F>(mut f: F, mut lo: f64, mut hi: f64, xtol: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while (hi - lo).abs() > xtol {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - INV_PHI * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + INV_PHI * (hi - lo);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Bisection for a sign change of `f` on `[lo, hi]`; `None` if the endpoints share a sign.
pub fn bisect<F>(mut f: F, mut lo: f64, mut hi: f64, xtol: f64) -> Option<f64>
where
    F: FnMut(f64) -> f64,
{
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if flo.signum() == fhi.signum() || flo.is_nan() || fhi.is_nan() {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= xtol {
            return Some(mid);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Some(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn nelder_mead_rosenbrock() {
        let nm = NelderMead::default().with_xtol(1e-10).with_max_iter(5000);
        for start in [[-1.2, 1.0], [2.0, -2.0], [0.0, 0.0]] {
            let m = nm.minimize(rosenbrock, &start, &[0.5, 0.5]);
            assert!(m.converged, "{m:?}");
            assert_abs_diff_eq!(m.x[0], 1.0, epsilon = 1e-7);
            assert_abs_diff_eq!(m.x[1], 1.0, epsilon = 1e-7);
        }
    }

    #[test]
    fn nelder_mead_quadratic_4d() {
        let target = [0.3, -2.0, 5.0, 1e-3];
        let f = |x: &[f64]| x.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let m = NelderMead::default().minimize(f, &[0.0; 4], &[1.0; 4]);
        assert!(m.converged);
        for (x, t) in m.x.iter().zip(&target) {
            assert_abs_diff_eq!(x, t, epsilon = 1e-7);
        }
    }

    #[test]
    fn nelder_mead_reports_non_convergence() {
        let m = NelderMead::default().with_max_iter(5).minimize(rosenbrock, &[-1.2, 1.0], &[0.5, 0.5]);
        assert!(!m.converged);
        assert_eq!(m.iterations, 5);
    }

    #[test]
    fn nan_is_treated_as_infeasible() {
        let f = |x: &[f64]| if x[0] < 0.0 { f64::NAN } else { (x[0] - 1.0).powi(2) };
        let m = NelderMead::default().minimize(f, &[0.5], &[1.0]);
        assert_abs_diff_eq!(m.x[0], 1.0, epsilon = 1e-7);
    }

    #[test]
    fn newton_polish_is_path_independent() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 0.5).powi(2) + x[0] * x[1] + 0.1 * x[0].powi(4);
        let a = newton_polish(f, &[0.9, -0.4], 1e-3, 0.5).unwrap();
        let b = newton_polish(f, &[1.05, -0.55], 1e-3, 0.5).unwrap();
        assert_abs_diff_eq!(a[0], b[0], epsilon = 1e-13);
        assert_abs_diff_eq!(a[1], b[1], epsilon = 1e-13);
        // stationary: a smaller probe step barely moves it
        let c = newton_polish(f, &a, 1e-5, 0.5).unwrap();
        assert_abs_diff_eq!(a[0], c[0], epsilon = 1e-6);
        assert!(newton_polish(|x: &[f64]| -x[0] * x[0], &[0.1], 1e-3, 1.0).is_none());
    }

    #[test]
    fn golden_and_bisect() {
        let (x, fx) = golden_section(|x| (x - 0.7).powi(2) + 1.0, -3.0, 4.0, 1e-10);
        assert_abs_diff_eq!(x, 0.7, epsilon = 1e-7);
        assert_abs_diff_eq!(fx, 1.0, epsilon = 1e-15);
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14).unwrap();
        assert_abs_diff_eq!(r, 2f64.sqrt(), epsilon = 1e-13);
        assert!(bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-10).is_none());
    }
}
