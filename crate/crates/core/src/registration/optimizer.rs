//! Box-bounded Nelder-Mead simplex minimiser.
//!
//! Uses the dimension-adaptive coefficients of Gao & Han (2012), which keep
//! the method effective at the 12 dimensions of an affine model. Candidate
//! points are projected onto the bounds before evaluation.

#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn unbounded(n: usize) -> Self {
        Bounds {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    fn project(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }
}

#[derive(Debug, Clone)]
pub struct NelderMeadOptions {
    pub max_iters: usize,
    /// Stop when `|f_worst - f_best| <= tol * max(|f_best|, 1e-12)`.
    pub rel_tol: f64,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// best value after each iteration
    pub trajectory: Vec<f64>,
}

pub fn nelder_mead<F>(mut f: F, x0: &[f64], steps: &[f64], bounds: &Bounds, opts: &NelderMeadOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    assert_eq!(steps.len(), n);
    let nf = n as f64;
    let alpha = 1.0;
    let gamma = 1.0 + 2.0 / nf;
    let rho = 0.75 - 0.5 / nf;
    let sigma = 1.0 - 1.0 / nf;

    let mut evaluations = 0;
    let mut eval = |x: &mut Vec<f64>, evaluations: &mut usize| -> f64 {
        bounds.project(x);
        *evaluations += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let mut start = x0.to_vec();
    let f0 = eval(&mut start, &mut evaluations);
    simplex.push((start.clone(), f0));
    for i in 0..n {
        let mut v = start.clone();
        v[i] += steps[i];
        // step inward if the bound swallowed the move
        if (v[i] - start[i]).abs() < 1e-15 || v[i] > bounds.upper[i] {
            v[i] = start[i] - steps[i];
        }
        let fv = eval(&mut v, &mut evaluations);
        simplex.push((v, fv));
    }

    let mut trajectory = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let order = |s: &mut Vec<(Vec<f64>, f64)>| s.sort_by(|a, b| a.1.total_cmp(&b.1));

    while iterations < opts.max_iters {
        order(&mut simplex);
        let best = simplex[0].1;
        let worst = simplex[n].1;
        if (worst - best).abs() <= opts.rel_tol * best.abs().max(1e-12) {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for i in 0..n {
                centroid[i] += x[i] / nf;
            }
        }
        let along = |t: f64, simplex: &Vec<(Vec<f64>, f64)>| -> Vec<f64> {
            (0..n).map(|i| centroid[i] + t * (simplex[n].0[i] - centroid[i])).collect()
        };

        let mut xr = along(-alpha, &simplex);
        let fr = eval(&mut xr, &mut evaluations);
        if fr < simplex[0].1 {
            let mut xe = along(-alpha * gamma, &simplex);
            let fe = eval(&mut xe, &mut evaluations);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let outside = fr < simplex[n].1;
            let mut xc = if outside { along(-alpha * rho, &simplex) } else { along(rho, &simplex) };
            let fc = eval(&mut xc, &mut evaluations);
            let accept = if outside { fc <= fr } else { fc < simplex[n].1 };
            if accept {
                simplex[n] = (xc, fc);
            } else {
                let x_best = simplex[0].0.clone();
                for (x, fx) in simplex.iter_mut().skip(1) {
                    let mut s: Vec<f64> = (0..n).map(|i| x_best[i] + sigma * (x[i] - x_best[i])).collect();
                    *fx = eval(&mut s, &mut evaluations);
                    *x = s;
                }
            }
        }
        let best_now = simplex.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
        trajectory.push(best_now);
    }
    order(&mut simplex);
    let (x, value) = simplex.swap_remove(0);
    Minimum {
        x,
        value,
        iterations,
        evaluations,
        converged,
        trajectory,
    }
}
