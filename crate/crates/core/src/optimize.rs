//! Derivative-free minimization (Nelder-Mead with standard coefficients).

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Stop once the simplex values agree to this relative spread.
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            max_evals: 2000,
            rel_tol: 1e-8,
            abs_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Minimizes `f` from `start` with an axis-aligned initial simplex of edge
/// lengths `steps`.
pub fn nelder_mead<F>(f: F, start: &[f64], steps: &[f64], opts: &NelderMeadOptions) -> Minimum
where
    F: Fn(&[f64]) -> f64,
{
    let n = start.len();
    assert_eq!(steps.len(), n, "one step per coordinate");
    let counter = std::cell::Cell::new(0usize);
    let eval = |x: &[f64]| {
        counter.set(counter.get() + 1);
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    if n == 0 {
        let value = eval(start);
        return Minimum {
            x: vec![],
            value,
            evals: 1,
            converged: true,
        };
    }

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((start.to_vec(), eval(start)));
    for k in 0..n {
        let mut x = start.to_vec();
        x[k] += if steps[k] != 0.0 { steps[k] } else { 1e-3 };
        let v = eval(&x);
        simplex.push((x, v));
    }

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut converged = false;
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        if (worst - best).abs() <= opts.rel_tol * best.abs() + opts.abs_tol {
            converged = true;
            break;
        }
        if counter.get() >= opts.max_evals {
            break;
        }
        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / n as f64;
            }
        }
        let along = |t: f64, worst: &[f64]| -> Vec<f64> {
            centroid
                .iter()
                .zip(worst)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let xr = along(alpha, &simplex[n].0);
        let fr = eval(&xr);
        if fr < simplex[0].1 {
            let xe = along(gamma, &simplex[n].0);
            let fe = eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < simplex[n].1 {
            let xc = along(alpha * rho, &simplex[n].0);
            let fc = eval(&xc);
            (xc, fc)
        } else {
            let xc = along(-rho, &simplex[n].0);
            let fc = eval(&xc);
            (xc, fc)
        };
        if fc < simplex[n].1.min(fr) {
            simplex[n] = (xc, fc);
            continue;
        }
        let x0 = simplex[0].0.clone();
        for entry in simplex.iter_mut().skip(1) {
            let x: Vec<f64> = x0
                .iter()
                .zip(&entry.0)
                .map(|(a, b)| a + sigma * (b - a))
                .collect();
            let v = eval(&x);
            *entry = (x, v);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    Minimum {
        x,
        value,
        evals: counter.get(),
        converged,
    }
}

/// Minimizes a convex function of one variable: expands a bracket from
/// `x0` in steps that double from `step`, then golden-section search down to
/// width `tol`.
pub fn minimize_convex_1d<F>(f: F, x0: f64, step: f64, tol: f64) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    let step = if step > 0.0 { step } else { 1.0 };
    let f0 = f(x0);
    let (fl, fr) = (f(x0 - step), f(x0 + step));
    let (mut a, mut b);
    if fl >= f0 && fr >= f0 {
        a = x0 - step;
        b = x0 + step;
    } else {
        let dir = if fr < fl { 1.0 } else { -1.0 };
        let (mut prev, mut cur, mut fcur) = (x0, x0 + dir * step, fr.min(fl));
        let mut h = step;
        loop {
            h *= 2.0;
            let next = cur + dir * h;
            let fnext = f(next);
            if fnext >= fcur || h > 1e12 * step {
                a = prev.min(next);
                b = prev.max(next);
                break;
            }
            prev = cur;
            cur = next;
            fcur = fnext;
        }
    }
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 10.0 * (x[1] + 2.0).powi(2) + 3.0;
        let m = nelder_mead(f, &[0.0, 0.0], &[0.5, 0.5], &NelderMeadOptions::default());
        assert!(m.converged);
        assert!((m.value - 3.0).abs() < 1e-7);
        assert!((m.x[0] - 1.0).abs() < 1e-3 && (m.x[1] + 2.0).abs() < 1e-3);
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let opts = NelderMeadOptions {
            max_evals: 5000,
            rel_tol: 0.0,
            abs_tol: 1e-14,
        };
        let m = nelder_mead(f, &[-1.2, 1.0], &[0.1, 0.1], &opts);
        assert!(m.value < 1e-8, "{}", m.value);
    }

    #[test]
    fn nonsmooth_max() {
        let f = |x: &[f64]| (x[0] - 0.3).abs().max((x[1] + 0.1).abs()) + 0.25;
        let m = nelder_mead(f, &[1.0, 1.0], &[0.2, 0.2], &NelderMeadOptions::default());
        assert!((m.value - 0.25).abs() < 1e-6);
    }

    #[test]
    fn respects_budget() {
        let f = |x: &[f64]| x[0].sin() + x[1].cos() * 1e-3 * x[0];
        let opts = NelderMeadOptions {
            max_evals: 25,
            rel_tol: 0.0,
            abs_tol: 0.0,
        };
        let m = nelder_mead(f, &[0.0, 0.0], &[1.0, 1.0], &opts);
        assert!(m.evals <= 25 + 3);
        assert!(!m.converged);
    }

    #[test]
    fn convex_1d() {
        let (x, v) = minimize_convex_1d(|x| (x - 7.25).abs() + 0.5, 0.0, 0.01, 1e-12);
        assert!((x - 7.25).abs() < 1e-9 && (v - 0.5).abs() < 1e-9);
        let (x, _) = minimize_convex_1d(|x| (x + 3.0).powi(2), 1.0, 0.5, 1e-10);
        assert!((x + 3.0).abs() < 1e-5);
        let (x, _) = minimize_convex_1d(|x| x * x, 0.0, 1.0, 1e-12);
        assert!(x.abs() < 1e-6);
    }
}
