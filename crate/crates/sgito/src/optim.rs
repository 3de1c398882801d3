//! Box-constrained minimization: Nelder-Mead simplex and BFGS with
//! backtracking, both run in an unconstrained logit reparameterization of
//! the box so neither method needs specialized constraint handling.

use crate::error::{Error, Result};

/// Componentwise logistic map between the open box (lower, upper) and ℝⁿ.
#[derive(Debug, Clone)]
pub struct BoxMap {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxMap {
    pub fn new(lower: &[f64], upper: &[f64]) -> Result<Self> {
        if lower.len() != upper.len() || lower.iter().zip(upper).any(|(l, u)| !(l < u)) {
            return Err(Error::Invalid("box bounds must satisfy lower < upper".into()));
        }
        Ok(Self {
            lower: lower.to_vec(),
            upper: upper.to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Internal coordinate u ↦ box coordinate x.
    pub fn to_external(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(ui, (l, h))| l + (h - l) * sigmoid(*ui))
            .collect()
    }

    /// Box coordinate x ↦ internal coordinate (clamped strictly inside).
    pub fn to_internal(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(xi, (l, h))| {
                let f = ((xi - l) / (h - l)).clamp(1e-12, 1.0 - 1e-12);
                (f / (1.0 - f)).ln()
            })
            .collect()
    }

    /// dx/du diagonal at internal coordinate u.
    pub fn jacobian_diag(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(ui, (l, h))| {
                let s = sigmoid(*ui);
                (h - l) * s * (1.0 - s)
            })
            .collect()
    }
}

fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MinOptions {
    pub max_iters: usize,
    /// Relative objective-change tolerance.
    pub tol_obj: f64,
    /// Relative parameter-change tolerance.
    pub tol_param: f64,
    /// Initial simplex step (Nelder-Mead) in internal coordinates.
    pub init_step: f64,
}

impl Default for MinOptions {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            tol_obj: 1e-9,
            tol_param: 1e-7,
            init_step: 0.25,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MinResult {
    pub x: Vec<f64>,
    pub fmin: f64,
    pub iters: usize,
    pub converged: bool,
    /// Best objective value after each iteration (non-increasing).
    pub history: Vec<f64>,
}

/// Nelder-Mead simplex with standard coefficients (reflect 1, expand 2,
/// contract 1/2, shrink 1/2).
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], opts: &MinOptions) -> MinResult {
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += opts.init_step;
        simplex.push(v);
    }
    let mut fvals: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    let mut history = Vec::new();
    let mut converged = false;
    let mut iters = 0;

    for it in 0..opts.max_iters {
        iters = it + 1;
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| fvals[a].partial_cmp(&fvals[b]).unwrap_or(std::cmp::Ordering::Equal));
        let best = order[0];
        let worst = order[n];
        let second_worst = order[n - 1];
        history.push(fvals[best]);

        let f_spread = (fvals[worst] - fvals[best]).abs();
        let x_spread = (0..n)
            .map(|k| {
                let (mut lo, mut hi) = (f64::MAX, f64::MIN);
                for v in &simplex {
                    lo = lo.min(v[k]);
                    hi = hi.max(v[k]);
                }
                hi - lo
            })
            .fold(0.0f64, f64::max);
        if f_spread <= opts.tol_obj * (1.0 + fvals[best].abs())
            && x_spread <= opts.tol_param * (1.0 + simplex[best].iter().fold(0.0f64, |a, v| a.max(v.abs())))
        {
            converged = true;
            break;
        }

        // centroid of all but the worst
        let mut centroid = vec![0.0; n];
        for (idx, v) in simplex.iter().enumerate() {
            if idx == worst {
                continue;
            }
            for k in 0..n {
                centroid[k] += v[k] / n as f64;
            }
        }
        let reflect: Vec<f64> = (0..n)
            .map(|k| centroid[k] + (centroid[k] - simplex[worst][k]))
            .collect();
        let f_r = f(&reflect);

        if f_r < fvals[best] {
            let expand: Vec<f64> = (0..n)
                .map(|k| centroid[k] + 2.0 * (centroid[k] - simplex[worst][k]))
                .collect();
            let f_e = f(&expand);
            if f_e < f_r {
                simplex[worst] = expand;
                fvals[worst] = f_e;
            } else {
                simplex[worst] = reflect;
                fvals[worst] = f_r;
            }
        } else if f_r < fvals[second_worst] {
            simplex[worst] = reflect;
            fvals[worst] = f_r;
        } else {
            // contraction (outside if the reflection improved on the worst)
            let towards: &[f64] = if f_r < fvals[worst] { &reflect } else { &simplex[worst] };
            let contract: Vec<f64> = (0..n)
                .map(|k| centroid[k] + 0.5 * (towards[k] - centroid[k]))
                .collect();
            let f_c = f(&contract);
            if f_c < fvals[worst].min(f_r) {
                simplex[worst] = contract;
                fvals[worst] = f_c;
            } else {
                // shrink toward the best vertex
                let best_v = simplex[best].clone();
                for (idx, v) in simplex.iter_mut().enumerate() {
                    if idx == best {
                        continue;
                    }
                    for k in 0..n {
                        v[k] = best_v[k] + 0.5 * (v[k] - best_v[k]);
                    }
                    fvals[idx] = f(v);
                }
            }
        }
    }

    let (mut bi, mut bf) = (0, fvals[0]);
    for (i, &v) in fvals.iter().enumerate() {
        if v < bf {
            bi = i;
            bf = v;
        }
    }
    MinResult {
        x: simplex[bi].clone(),
        fmin: bf,
        iters,
        converged,
        history,
    }
}

/// BFGS with Armijo backtracking. The callback returns the objective and,
/// when a gradient slot is supplied, fills it in place.
pub fn bfgs<F: FnMut(&[f64], Option<&mut [f64]>) -> f64>(
    mut fg: F,
    x0: &[f64],
    opts: &MinOptions,
) -> MinResult {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut fx = fg(&x, Some(&mut g));
    let mut hinv: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut history = vec![fx];
    let mut converged = false;
    let mut iters = 0;

    for it in 0..opts.max_iters {
        iters = it + 1;
        // direction d = -Hinv g
        let mut d = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                d[i] -= hinv[i][j] * g[j];
            }
        }
        let slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        if slope >= 0.0 {
            // reset to steepest descent
            for i in 0..n {
                for j in 0..n {
                    hinv[i][j] = if i == j { 1.0 } else { 0.0 };
                }
                d[i] = -g[i];
            }
        }
        let slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        let mut step = 1.0;
        let mut x_new = x.clone();
        let mut f_new = fx;
        let mut ok = false;
        for _ in 0..40 {
            for i in 0..n {
                x_new[i] = x[i] + step * d[i];
            }
            f_new = fg(&x_new, None);
            if f_new <= fx + 1e-4 * step * slope {
                ok = true;
                break;
            }
            step *= 0.5;
        }
        if !ok {
            converged = true; // no descent possible at line-search resolution
            break;
        }
        let mut g_new = vec![0.0; n];
        let _ = fg(&x_new, Some(&mut g_new));
        let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
        let yv: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
        let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
        let f_change = (fx - f_new).abs();
        let x_change = s.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        x = x_new;
        fx = f_new;
        g = g_new;
        history.push(fx);
        if sy > 1e-12 {
            // BFGS inverse update
            let rho = 1.0 / sy;
            let mut hy = vec![0.0; n];
            for i in 0..n {
                for j in 0..n {
                    hy[i] += hinv[i][j] * yv[j];
                }
            }
            let yhy: f64 = yv.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..n {
                for j in 0..n {
                    hinv[i][j] += (1.0 + rho * yhy) * rho * s[i] * s[j]
                        - rho * (s[i] * hy[j] + hy[i] * s[j]);
                }
            }
        }
        if f_change <= opts.tol_obj * (1.0 + fx.abs())
            && x_change <= opts.tol_param * (1.0 + x.iter().fold(0.0f64, |a, v| a.max(v.abs())))
        {
            converged = true;
            break;
        }
    }
    MinResult {
        x,
        fmin: fx,
        iters,
        converged,
        history,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn quadratic(x: &[f64]) -> f64 {
        (x[0] - 1.5).powi(2) + 4.0 * (x[1] + 0.5).powi(2)
    }

    #[test]
    fn nelder_mead_minimizes_quadratic() {
        let r = nelder_mead(quadratic, &[0.0, 0.0], &MinOptions::default());
        assert!(r.converged);
        assert!((r.x[0] - 1.5).abs() < 1e-5);
        assert!((r.x[1] + 0.5).abs() < 1e-5);
    }

    #[test]
    fn nelder_mead_history_is_monotone() {
        let r = nelder_mead(
            |x| (x[0] * x[0] - 2.0).powi(2) + (x[0] - x[1]).powi(2),
            &[3.0, -3.0],
            &MinOptions::default(),
        );
        for w in r.history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "best objective increased: {w:?}");
        }
    }

    #[test]
    fn bfgs_minimizes_rosenbrock() {
        let rosen = |x: &[f64], g: Option<&mut [f64]>| {
            let (a, b) = (1.0, 100.0);
            let f = (a - x[0]).powi(2) + b * (x[1] - x[0] * x[0]).powi(2);
            if let Some(g) = g {
                g[0] = -2.0 * (a - x[0]) - 4.0 * b * x[0] * (x[1] - x[0] * x[0]);
                g[1] = 2.0 * b * (x[1] - x[0] * x[0]);
            }
            f
        };
        let r = bfgs(
            rosen,
            &[-1.2, 1.0],
            &MinOptions {
                max_iters: 5000,
                ..Default::default()
            },
        );
        assert!((r.x[0] - 1.0).abs() < 1e-4, "{:?}", r.x);
        assert!((r.x[1] - 1.0).abs() < 1e-4);
    }

    proptest! {
        #[test]
        fn box_map_roundtrip(x0 in 0.01f64..0.99, x1 in 0.01f64..4.9) {
            let map = BoxMap::new(&[1e-6, 1e-6], &[1.0, 5.0]).unwrap();
            let x = vec![x0, x1];
            let back = map.to_external(&map.to_internal(&x));
            prop_assert!((back[0] - x0).abs() < 1e-9);
            prop_assert!((back[1] - x1).abs() < 1e-9);
        }
    }
}
