//! Numerical membership diagnostics for the quasi-polynomial classes
//! `S(m, r)`: symbols with `∂^α f = O((1+|z|)^{m₁ − r₁|α|} ℏ^{m₂ − r₂|α|})`.

use crate::error::{OmegaError, Result};
use crate::linalg::CMatrix;
use crate::phase_grid::Symbol;
use crate::scalar::{re, Real};

#[derive(Clone, Debug, PartialEq)]
pub struct OrderDiagnostics {
    pub m1: f64,
    pub m2: f64,
    pub r1: f64,
    pub r2: f64,
    /// RMS residual of the log-linear fit.
    pub residual: f64,
    /// Set when the residual exceeds [`FIT_RESIDUAL_LIMIT`].
    pub inconclusive: bool,
}

impl OrderDiagnostics {
    /// `r₁ ≥ 0` and `r₂ < 1/2`, with `slack` allowed on each bound.
    pub fn admissible(&self, slack: f64) -> bool {
        self.r1 >= -slack && self.r2 < 0.5 + slack
    }
}

pub const FIT_RESIDUAL_LIMIT: f64 = 0.5;
/// Highest derivative order used in the fit.
pub const MAX_ORDER: usize = 3;

const STENCIL: [f64; 7] = [-1.0 / 60.0, 3.0 / 20.0, -3.0 / 4.0, 0.0, 3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0];

/// Sixth-order central difference along one storage axis. The outer three
/// layers are left as NaN.
fn difference(vals: &[f64], shape: &[usize], axis: usize, h: f64) -> Vec<f64> {
    let n = shape[axis];
    let stride: usize = shape[axis + 1..].iter().product();
    let mut out = vec![f64::NAN; vals.len()];
    for (idx, slot) in out.iter_mut().enumerate() {
        let i = (idx / stride) % n;
        if i < 3 || i + 3 >= n {
            continue;
        }
        let mut acc = 0.0;
        for (k, w) in STENCIL.iter().enumerate() {
            if *w != 0.0 {
                acc += w * vals[idx + k * stride - 3 * stride];
            }
        }
        *slot = acc / h;
    }
    out
}

fn multi_indices(dims: usize, max: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![0; dims]];
    let mut frontier = out.clone();
    for _ in 0..max {
        let mut next = Vec::new();
        for a in &frontier {
            for k in 0..dims {
                // Non-decreasing last-touched axis keeps each multi-index unique.
                if a[k + 1..].iter().any(|&x| x > 0) {
                    continue;
                }
                let mut b = a.clone();
                b[k] += 1;
                next.push(b);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Fit `(m₁, m₂, r₁, r₂)` from a family of symbols sampled at ≥ 4 values of ℏ.
///
/// For each symbol and each multi-index `|α| ≤ 3`, `max |∂^α f|` is taken
/// over shells of radius `R` (evenly spaced over the central 60% of the
/// window); the logs are fitted to
/// `c_α + (m₁ − r₁|α|) log(1+R) + (m₂ − r₂|α|) log ℏ`.
/// Derivatives that vanish identically are left out of the fit.
pub fn estimate_order<T: Real>(family: &[Symbol<T>]) -> Result<OrderDiagnostics> {
    let mut hbars: Vec<f64> = family.iter().map(|f| f.hbar().to_f64_lossy()).collect();
    hbars.sort_by(|a, b| a.partial_cmp(b).expect("finite ℏ"));
    hbars.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
    if hbars.len() < 4 {
        return Err(OmegaError::InvalidArgument(format!(
            "order estimation needs at least 4 values of ℏ, got {}",
            hbars.len()
        )));
    }
    let d = family[0].grid().dim();
    let alphas = multi_indices(2 * d, MAX_ORDER);

    // (alpha index, log(1+R), log ℏ, log M)
    let mut samples: Vec<(usize, f64, f64, f64)> = Vec::new();
    for f in family {
        let g = f.grid();
        let shape = g.shape();
        let steps: Vec<f64> = (0..2 * d)
            .map(|a| if a < d { g.dq() } else { g.dp() }.to_f64_lossy())
            .collect();
        let lh = f.hbar().to_f64_lossy().ln();
        let radius: Vec<f64> = (0..g.len())
            .map(|i| g.point(i).norm_sqr().to_f64_lossy().sqrt())
            .collect();
        let l_min = g.l_q().min(g.l_p()).to_f64_lossy();
        let r_max = 0.6 * l_min;
        let width = steps.iter().cloned().fold(0.0, f64::max);
        let shells: Vec<f64> = (0..7).map(|s| r_max * s as f64 / 6.0).collect();
        let re_part: Vec<f64> = f.values().iter().map(|v| v.re.to_f64_lossy()).collect();
        let im_part: Vec<f64> = f.values().iter().map(|v| v.im.to_f64_lossy()).collect();
        for (ai, alpha) in alphas.iter().enumerate() {
            let (mut dr, mut di) = (re_part.clone(), im_part.clone());
            for (axis, &k) in alpha.iter().enumerate() {
                for _ in 0..k {
                    dr = difference(&dr, &shape, axis, steps[axis]);
                    di = difference(&di, &shape, axis, steps[axis]);
                }
            }
            for &r in &shells {
                let mut m = 0.0f64;
                let mut any = false;
                for i in 0..g.len() {
                    if (radius[i] - r).abs() <= width && dr[i].is_finite() {
                        m = m.max(dr[i].hypot(di[i]));
                        any = true;
                    }
                }
                if any {
                    samples.push((ai, (1.0 + r).ln(), lh, m));
                }
            }
        }
    }
    // Discard vanishing derivatives (round-off level relative to the largest sample).
    let peak = samples.iter().map(|s| s.3).fold(0.0, f64::max);
    samples.retain(|s| s.3 > 1e-9 * peak && s.3 > 0.0);
    let mut used: Vec<usize> = samples.iter().map(|s| s.0).collect();
    used.sort_unstable();
    used.dedup();
    let orders: Vec<usize> = {
        let mut o: Vec<usize> = used.iter().map(|&a| alphas[a].iter().sum()).collect();
        o.sort_unstable();
        o.dedup();
        o
    };
    let fit_r = orders.len() > 1;
    let n_alpha = used.len();
    let n_par = n_alpha + if fit_r { 4 } else { 2 };
    let rows: Vec<(Vec<f64>, f64)> = samples
        .iter()
        .map(|&(ai, lr, lh, m)| {
            let k = alphas[ai].iter().sum::<usize>() as f64;
            let mut x = vec![0.0; n_par];
            x[used.iter().position(|&u| u == ai).expect("present")] = 1.0;
            x[n_alpha] = lr;
            x[n_alpha + 1] = lh;
            if fit_r {
                x[n_alpha + 2] = -k * lr;
                x[n_alpha + 3] = -k * lh;
            }
            (x, m.ln())
        })
        .collect();
    if rows.len() < n_par {
        return Err(OmegaError::InvalidArgument("too few usable samples for the order fit".into()));
    }
    let mut ata = CMatrix::<f64>::zeros(n_par, n_par);
    let mut atb = vec![re(0.0); n_par];
    for (x, y) in &rows {
        for i in 0..n_par {
            atb[i] += re(x[i] * y);
            for j in 0..n_par {
                ata[(i, j)] += re(x[i] * x[j]);
            }
        }
    }
    let sol = ata.solve(&atb).ok_or_else(|| OmegaError::InvalidArgument("order fit is degenerate".into()))?;
    let beta: Vec<f64> = sol.iter().map(|v| v.re).collect();
    let rss: f64 = rows
        .iter()
        .map(|(x, y)| {
            let pred: f64 = x.iter().zip(&beta).map(|(a, b)| a * b).sum();
            (pred - y).powi(2)
        })
        .sum();
    let residual = (rss / rows.len() as f64).sqrt();
    let (r1, r2) = if fit_r {
        (beta[n_alpha + 2], beta[n_alpha + 3])
    } else {
        (0.0, 0.0)
    };
    Ok(OrderDiagnostics {
        m1: beta[n_alpha],
        m2: beta[n_alpha + 1],
        r1,
        r2,
        residual,
        inconclusive: residual > FIT_RESIDUAL_LIMIT,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multi_indices_are_unique() {
        let a = multi_indices(2, 3);
        assert_eq!(a.len(), 10); // 1 + 2 + 3 + 4
        let mut s = a.clone();
        s.sort();
        s.dedup();
        assert_eq!(s.len(), a.len());
    }
}
