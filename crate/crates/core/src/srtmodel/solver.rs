//! L-BFGS for the squared ε-insensitive SVR objective, run in the span of a
//! few basis vectors.
//!
//! The minimizer from a start `w₀` lies in `span{x̃₁ … x̃ₙ, w₀}`. Iterates are
//! kept as coefficients over that basis, and all geometry goes through the
//! basis Gram matrix. This is ordinary full-space L-BFGS, just without ever
//! forming a 3240-long vector. Along a search direction the objective is
//! piecewise quadratic, so the line search is exact.

use super::SvrHyper;
use crate::{Error, Result};

/// Basis geometry. The first `n` basis vectors are the training rows.
pub(crate) struct Basis<'a> {
    /// `p × p` Gram matrix of the basis, row-major.
    pub gram: &'a [f64],
    /// `n × p` inner products of each training row with each basis vector.
    pub rows: &'a [f64],
    pub p: usize,
    pub n: usize,
}

pub(crate) struct Fit {
    pub coef: Vec<f64>,
    pub bias: f64,
}

const MEMORY: usize = 20;

struct State<'a> {
    basis: &'a Basis<'a>,
    y: &'a [f64],
    c: f64,
    eps: f64,
}

impl State<'_> {
    fn predictions(&self, coef: &[f64], bias: f64) -> Vec<f64> {
        let p = self.basis.p;
        (0..self.basis.n)
            .map(|i| bias + self.basis.rows[i * p..(i + 1) * p].iter().zip(coef).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }

    fn gram_dot(&self, u: &[f64], v: &[f64]) -> f64 {
        let p = self.basis.p;
        let mut s = 0.0;
        for i in 0..p {
            if u[i] == 0.0 {
                continue;
            }
            s += u[i] * self.basis.gram[i * p..(i + 1) * p].iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        }
        s
    }

    fn excess(&self, r: f64) -> f64 {
        r.signum() * (r.abs() - self.eps).max(0.0)
    }

    /// Loss and gradient (as basis coefficients plus the bias component).
    fn eval(&self, coef: &[f64], bias: f64) -> (f64, Vec<f64>, f64) {
        let pred = self.predictions(coef, bias);
        let mut data = 0.0;
        let mut g = coef.to_vec();
        let mut gb = 0.0;
        for (i, (&y, &f)) in self.y.iter().zip(&pred).enumerate() {
            let s = self.excess(y - f);
            data += s * s;
            g[i] -= 2.0 * self.c * s;
            gb -= 2.0 * self.c * s;
        }
        (0.5 * self.gram_dot(coef, coef) + self.c * data, g, gb)
    }

    fn norm(&self, g: &[f64], gb: f64) -> f64 {
        (self.gram_dot(g, g) + gb * gb).max(0.0).sqrt()
    }

    /// Exact minimizer along `(d, db)` from `(coef, bias)`.
    fn line_search(&self, coef: &[f64], bias: f64, d: &[f64], db: f64) -> Option<f64> {
        let r: Vec<f64> = self
            .y
            .iter()
            .zip(self.predictions(coef, bias))
            .map(|(y, f)| y - f)
            .collect();
        let q: Vec<f64> = self
            .predictions(d, db)
            .into_iter()
            .collect();
        let wd = self.gram_dot(coef, d);
        let dd = self.gram_dot(d, d);
        let slope = |t: f64| {
            let data: f64 = r.iter().zip(&q).map(|(ri, qi)| qi * self.excess(ri - t * qi)).sum();
            wd + t * dd - 2.0 * self.c * data
        };
        let f0 = slope(0.0);
        if !(f0 < 0.0) {
            return None;
        }
        let mut breaks: Vec<f64> = r
            .iter()
            .zip(&q)
            .filter(|(_, qi)| **qi != 0.0)
            .flat_map(|(ri, qi)| [(ri - self.eps) / qi, (ri + self.eps) / qi])
            .filter(|t| *t > 0.0 && t.is_finite())
            .collect();
        breaks.sort_by(f64::total_cmp);
        let (mut ta, mut fa) = (0.0, f0);
        for tb in breaks {
            if tb <= ta {
                continue;
            }
            let fb = slope(tb);
            if fb >= 0.0 {
                return Some(ta + (-fa) * (tb - ta) / (fb - fa));
            }
            ta = tb;
            fa = fb;
        }
        let rise = slope(ta + 1.0) - fa;
        (rise > 0.0).then(|| ta - fa / rise)
    }
}

pub(crate) fn minimize(
    basis: &Basis<'_>,
    y: &[f64],
    hyper: &SvrHyper,
    mut coef: Vec<f64>,
    mut bias: f64,
) -> Result<Fit> {
    let st = State {
        basis,
        y,
        c: hyper.c_reg,
        eps: hyper.epsilon,
    };
    let (_, mut g, mut gb) = st.eval(&coef, bias);
    let g0 = st.norm(&g, gb);
    let target = hyper.tol * g0.max(1.0);
    let mut hist: Vec<(Vec<f64>, f64, Vec<f64>, f64, f64)> = Vec::new();
    let mut gn = g0;
    for _ in 0..hyper.max_iter {
        if gn <= target {
            return Ok(Fit { coef, bias });
        }
        // two-loop recursion in the basis geometry
        let mut qv = g.clone();
        let mut qb = gb;
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, sb, yv, yb, rho) in hist.iter().rev() {
            let a = rho * (st.gram_dot(s, &qv) + sb * qb);
            qv.iter_mut().zip(yv).for_each(|(q, y)| *q -= a * y);
            qb -= a * yb;
            alphas.push(a);
        }
        let gamma = hist
            .last()
            .map(|(s, sb, yv, yb, _)| (st.gram_dot(s, yv) + sb * yb) / (st.gram_dot(yv, yv) + yb * yb))
            .unwrap_or(1.0 / gn);
        qv.iter_mut().for_each(|q| *q *= gamma);
        qb *= gamma;
        for ((s, sb, yv, yb, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * (st.gram_dot(yv, &qv) + yb * qb);
            qv.iter_mut().zip(s).for_each(|(q, s)| *q += (a - b) * s);
            qb += (a - b) * sb;
        }
        let mut d: Vec<f64> = qv.iter().map(|v| -v).collect();
        let mut db = -qb;
        let step = match st.line_search(&coef, bias, &d, db) {
            Some(t) => t,
            None => {
                // not a descent direction; restart from steepest descent
                hist.clear();
                d = g.iter().map(|v| -v).collect();
                db = -gb;
                st.line_search(&coef, bias, &d, db)
                    .ok_or_else(|| Error::numerical(format!("SVR line search failed at gradient norm {gn:e}")))?
            }
        };
        let new_coef: Vec<f64> = coef.iter().zip(&d).map(|(c, d)| c + step * d).collect();
        let new_bias = bias + step * db;
        let (_, ng, ngb) = st.eval(&new_coef, new_bias);
        let s: Vec<f64> = d.iter().map(|v| step * v).collect();
        let sb = step * db;
        let yv: Vec<f64> = ng.iter().zip(&g).map(|(a, b)| a - b).collect();
        let yb = ngb - gb;
        let sy = st.gram_dot(&s, &yv) + sb * yb;
        if sy > 1e-300 {
            if hist.len() == MEMORY {
                hist.remove(0);
            }
            hist.push((s, sb, yv, yb, 1.0 / sy));
        }
        coef = new_coef;
        bias = new_bias;
        g = ng;
        gb = ngb;
        gn = st.norm(&g, gb);
    }
    if gn <= target {
        return Ok(Fit { coef, bias });
    }
    Err(Error::numerical(format!(
        "SVR did not converge in {} iterations (gradient norm {gn:e}, target {target:e})",
        hyper.max_iter
    )))
}
