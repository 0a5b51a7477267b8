//! Box-constrained derivative-free maximization.

use crate::sde::ParamBox;

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    /// Stop once the simplex diameter, relative to the box width, falls below this.
    pub xtol: f64,
    pub max_evals: usize,
    /// Initial simplex edge as a fraction of the box width.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { xtol: 1e-7, max_evals: 4000, initial_step: 0.05 }
    }
}

#[derive(Debug, Clone)]
pub struct Maximum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Nelder–Mead on `-f` with dimension-adaptive coefficients; trial points are
/// projected onto the box. `f` returns `None` where it cannot be evaluated.
pub fn nelder_mead_max<F>(f: &F, start: &[f64], bx: &ParamBox, opts: &NelderMeadOptions) -> Option<Maximum>
where
    F: Fn(&[f64]) -> Option<f64>,
{
    let d = start.len();
    let evals = std::cell::Cell::new(0usize);
    let eval = |x: &[f64]| {
        evals.set(evals.get() + 1);
        f(x).filter(|v| v.is_finite()).map(|v| -v).unwrap_or(f64::INFINITY)
    };
    let dn = d as f64;
    let (alpha, gamma, rho, shrink) = (1.0, 1.0 + 2.0 / dn, 0.75 - 1.0 / (2.0 * dn), 1.0 - 1.0 / dn);
    let shrink = if d == 1 { 0.5 } else { shrink };
    let project = |x: &mut Vec<f64>| bx.clamp(x);

    let mut x0 = start.to_vec();
    project(&mut x0);
    let mut simplex = vec![x0.clone()];
    for j in 0..d {
        let mut x = x0.clone();
        let step = opts.initial_step * bx.width(j);
        x[j] = if x[j] + step <= bx.upper[j] { x[j] + step } else { x[j] - step };
        simplex.push(x);
    }
    let mut fv: Vec<f64> = simplex.iter().map(|x| eval(x)).collect();
    if fv.iter().all(|v| v.is_infinite()) {
        return None;
    }
    let mut converged = false;
    while evals.get() < opts.max_evals {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| fv[a].total_cmp(&fv[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        fv = order.iter().map(|&i| fv[i]).collect();

        let diam = (1..=d)
            .map(|i| (0..d).map(|j| (simplex[i][j] - simplex[0][j]).abs() / bx.width(j)).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if diam < opts.xtol {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..d).map(|j| simplex[..d].iter().map(|x| x[j]).sum::<f64>() / dn).collect();
        let along = |t: f64| -> Vec<f64> {
            let mut x: Vec<f64> = (0..d).map(|j| centroid[j] + t * (simplex[d][j] - centroid[j])).collect();
            project(&mut x);
            x
        };
        let xr = along(-alpha);
        let fr = eval(&xr);
        if fr < fv[0] {
            let xe = along(-gamma);
            let fe = eval(&xe);
            if fe < fr {
                simplex[d] = xe;
                fv[d] = fe;
            } else {
                simplex[d] = xr;
                fv[d] = fr;
            }
            continue;
        }
        if fr < fv[d - 1] {
            simplex[d] = xr;
            fv[d] = fr;
            continue;
        }
        let (xc, fc) = if fr < fv[d] {
            let xc = along(-rho);
            let fc = eval(&xc);
            (xc, fc)
        } else {
            let xc = along(rho);
            let fc = eval(&xc);
            (xc, fc)
        };
        if fc < fv[d].min(fr) {
            simplex[d] = xc;
            fv[d] = fc;
            continue;
        }
        for i in 1..=d {
            let mut x: Vec<f64> = (0..d).map(|j| simplex[0][j] + shrink * (simplex[i][j] - simplex[0][j])).collect();
            project(&mut x);
            fv[i] = eval(&x);
            simplex[i] = x;
        }
    }
    let best = (0..=d).min_by(|&a, &b| fv[a].total_cmp(&fv[b])).unwrap();
    if fv[best].is_infinite() {
        return None;
    }
    Some(Maximum { x: simplex[best].clone(), value: -fv[best], evals: evals.get(), converged })
}

/// Projected coordinate pattern search from `start`, halving the step from
/// `initial_step·width` until it falls below `min_step·width`.
pub fn pattern_search_max<F>(f: &F, start: Maximum, bx: &ParamBox, initial_step: f64, min_step: f64) -> Maximum
where
    F: Fn(&[f64]) -> Option<f64>,
{
    let Maximum { mut x, mut value, mut evals, converged } = start;
    let d = x.len();
    let mut step = initial_step;
    while step >= min_step {
        let mut improved = false;
        for j in 0..d {
            for sign in [1.0, -1.0] {
                let mut y = x.clone();
                y[j] += sign * step * bx.width(j);
                bx.clamp(&mut y);
                if y[j] == x[j] {
                    continue;
                }
                evals += 1;
                if let Some(v) = f(&y).filter(|v| v.is_finite()) {
                    if v > value {
                        x = y;
                        value = v;
                        improved = true;
                        break;
                    }
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Maximum { x, value, evals, converged }
}
