//! Sparse convex QP solver.
//!
//! Operator-splitting (ADMM) method for
//!
//! ```text
//!   minimize   ½ xᵀPx + qᵀx
//!   subject to l ≤ Ax ≤ u
//! ```
//!
//! with over-relaxation, Ruiz equilibration, adaptive step size and primal /
//! dual infeasibility certificates. The linear system solved each iteration
//! is the quasi-definite KKT matrix `[[P+σI, Aᵀ],[A, −ρ⁻¹]]`, factored once
//! per ρ update by sparse LDLᵀ under an AMD ordering.

use crate::sparse::{amd_order, ldl_factor, CscMatrix, LdlFactor, Triplets};
use serde::Serialize;

pub const INF: f64 = 1e30;

/// Data of a QP in solver form.
#[derive(Debug, Clone)]
pub struct QpData {
    pub p: CscMatrix, // full symmetric Hessian
    pub q: Vec<f64>,
    pub a: CscMatrix,
    pub l: Vec<f64>,
    pub u: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct QpSettings {
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub tol_primal: f64,
    pub tol_dual: f64,
    pub eps_rel: f64,
    pub eps_infeas: f64,
    pub max_iter: usize,
    pub check_interval: usize,
    pub scaling_iters: usize,
    pub adaptive_rho: bool,
}

impl Default for QpSettings {
    fn default() -> Self {
        QpSettings {
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            tol_primal: 1e-6,
            tol_dual: 1e-6,
            eps_rel: 1e-9,
            eps_infeas: 1e-8,
            max_iter: 20_000,
            check_interval: 25,
            scaling_iters: 10,
            adaptive_rho: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum QpStatus {
    Optimal,
    MaxIter,
    PrimalInfeasible,
    DualInfeasible,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub status: QpStatus,
    pub primal_res: f64,
    pub dual_res: f64,
    pub iterations: usize,
}

struct Kkt {
    factor: LdlFactor,
    n: usize,
    m: usize,
}

fn build_kkt(p: &CscMatrix, a: &CscMatrix, sigma: f64, rho_inv: &[f64], perm: Option<Vec<usize>>) -> Kkt {
    let n = p.ncols;
    let m = a.nrows;
    let mut t = Triplets::new(n + m, n + m);
    let p_up = p.upper_triangle();
    let mut has_diag = vec![false; n];
    for c in 0..n {
        for ptr in p_up.colptr[c]..p_up.colptr[c + 1] {
            let r = p_up.rowind[ptr];
            if r == c {
                has_diag[c] = true;
                t.push(r, c, p_up.values[ptr] + sigma);
            } else {
                t.push(r, c, p_up.values[ptr]);
            }
        }
    }
    for c in 0..n {
        if !has_diag[c] {
            t.push(c, c, sigma);
        }
    }
    let at = a.transpose();
    for i in 0..m {
        // column n+i of the KKT: rows are variables in row i of A
        for ptr in at.colptr[i]..at.colptr[i + 1] {
            t.push(at.rowind[ptr], n + i, at.values[ptr]);
        }
        t.push(n + i, n + i, -rho_inv[i]);
    }
    let upper = t.to_csc();
    let perm = perm.unwrap_or_else(|| amd_order(&upper));
    let factor = ldl_factor(&upper, Some(perm)).expect("quasi-definite KKT must factor");
    Kkt { factor, n, m }
}

impl Kkt {
    /// Solve [[P+σI, Aᵀ],[A, −ρ⁻¹]]·[x; ν] = [b1; b2].
    fn solve(&self, b1: &[f64], b2: &[f64], x: &mut Vec<f64>, nu: &mut Vec<f64>) {
        let mut rhs = Vec::with_capacity(self.n + self.m);
        rhs.extend_from_slice(b1);
        rhs.extend_from_slice(b2);
        self.factor.solve(&mut rhs);
        x.clear();
        x.extend_from_slice(&rhs[..self.n]);
        nu.clear();
        nu.extend_from_slice(&rhs[self.n..]);
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, &b| a.max(b.abs()))
}

struct Scaling {
    d: Vec<f64>, // variable scaling
    e: Vec<f64>, // constraint scaling
    c: f64,      // cost scaling
}

/// Modified Ruiz equilibration; scales P, q, A, l, u in place.
fn equilibrate(data: &mut QpData, iters: usize) -> Scaling {
    let n = data.p.ncols;
    let m = data.a.nrows;
    let mut d = vec![1.0; n];
    let mut e = vec![1.0; m];
    for _ in 0..iters {
        let pn = data.p.col_inf_norms();
        let an_col = data.a.col_inf_norms();
        let an_row = data.a.row_inf_norms();
        let mut dd = vec![1.0; n];
        for j in 0..n {
            let norm = pn[j].max(an_col[j]);
            if norm > 1e-12 {
                dd[j] = 1.0 / norm.sqrt();
            }
        }
        let mut de = vec![1.0; m];
        for i in 0..m {
            if an_row[i] > 1e-12 {
                de[i] = 1.0 / an_row[i].sqrt();
            }
        }
        data.p.scale(&dd, &dd);
        data.a.scale(&de, &dd);
        for j in 0..n {
            data.q[j] *= dd[j];
            d[j] *= dd[j];
        }
        for i in 0..m {
            if data.l[i] > -INF {
                data.l[i] *= de[i];
            }
            if data.u[i] < INF {
                data.u[i] *= de[i];
            }
            e[i] *= de[i];
        }
    }
    // cost scaling
    let pn = data.p.col_inf_norms();
    let mean_p = if n > 0 { pn.iter().sum::<f64>() / n as f64 } else { 0.0 };
    let c_denom = mean_p.max(inf_norm(&data.q));
    let c = if c_denom > 1e-12 { 1.0 / c_denom } else { 1.0 };
    for v in data.p.values.iter_mut() {
        *v *= c;
    }
    for v in data.q.iter_mut() {
        *v *= c;
    }
    Scaling { d, e, c }
}

/// Solve a QP in `l ≤ Ax ≤ u` form.
pub fn solve(data: &QpData, settings: &QpSettings) -> QpSolution {
    solve_with_guess(data, settings, None)
}

pub fn solve_with_guess(data: &QpData, settings: &QpSettings, x0: Option<&[f64]>) -> QpSolution {
    let n = data.p.ncols;
    let m = data.a.nrows;
    assert_eq!(data.q.len(), n);
    assert_eq!(data.a.ncols, n);
    assert_eq!(data.l.len(), m);
    assert_eq!(data.u.len(), m);
    debug_assert!(data.l.iter().zip(&data.u).all(|(l, u)| l <= u), "inconsistent bounds");

    let mut scaled = data.clone();
    let scaling = equilibrate(&mut scaled, settings.scaling_iters);

    let eq_row = |i: usize| scaled.l[i] > -INF && scaled.u[i] < INF && scaled.u[i] - scaled.l[i] < 1e-14;
    let rho_for = |base: f64, i: usize| if eq_row(i) { base * 1e3 } else { base };

    let mut rho_base = settings.rho;
    let mut rho: Vec<f64> = (0..m).map(|i| rho_for(rho_base, i)).collect();
    let mut rho_inv: Vec<f64> = rho.iter().map(|r| 1.0 / r).collect();
    let mut kkt = build_kkt(&scaled.p, &scaled.a, settings.sigma, &rho_inv, None);

    let mut x = vec![0.0; n];
    if let Some(g) = x0 {
        for j in 0..n {
            x[j] = g[j] / scaling.d[j];
        }
    }
    let mut z = vec![0.0; m];
    scaled.a.matvec(&x, &mut z);
    for i in 0..m {
        z[i] = z[i].clamp(scaled.l[i], scaled.u[i]);
    }
    let mut y = vec![0.0; m];

    let mut xt = Vec::with_capacity(n);
    let mut nu = Vec::with_capacity(m);
    let mut b1 = vec![0.0; n];
    let mut b2 = vec![0.0; m];
    let mut ax = vec![0.0; m];
    let mut px = vec![0.0; n];
    let mut aty = vec![0.0; n];
    let mut x_prev = vec![0.0; n];
    let mut y_prev = vec![0.0; m];

    let mut status = QpStatus::MaxIter;
    let mut primal_res = f64::INFINITY;
    let mut dual_res = f64::INFINITY;
    let mut iterations = settings.max_iter;

    for iter in 0..settings.max_iter {
        x_prev.copy_from_slice(&x);
        y_prev.copy_from_slice(&y);

        for j in 0..n {
            b1[j] = settings.sigma * x[j] - scaled.q[j];
        }
        for i in 0..m {
            b2[i] = z[i] - rho_inv[i] * y[i];
        }
        kkt.solve(&b1, &b2, &mut xt, &mut nu);
        // z̃ = z + ρ⁻¹(ν − y)
        // x⁺ = α x̃ + (1−α) x ; ẑ = α z̃ + (1−α) z
        for j in 0..n {
            x[j] = settings.alpha * xt[j] + (1.0 - settings.alpha) * x[j];
        }
        for i in 0..m {
            let zt = z[i] + rho_inv[i] * (nu[i] - y[i]);
            let zh = settings.alpha * zt + (1.0 - settings.alpha) * z[i];
            let znew = (zh + rho_inv[i] * y[i]).clamp(scaled.l[i], scaled.u[i]);
            y[i] += rho[i] * (zh - znew);
            z[i] = znew;
        }

        let check = (iter + 1) % settings.check_interval == 0 || iter + 1 == settings.max_iter;
        if !check {
            continue;
        }

        // unscaled residuals
        scaled.a.matvec(&x, &mut ax);
        scaled.p.matvec(&x, &mut px);
        scaled.a.matvec_t(&y, &mut aty);
        let mut rp = 0.0f64;
        let mut ax_n = 0.0f64;
        let mut z_n = 0.0f64;
        for i in 0..m {
            let ei = 1.0 / scaling.e[i];
            rp = rp.max(((ax[i] - z[i]) * ei).abs());
            ax_n = ax_n.max((ax[i] * ei).abs());
            z_n = z_n.max((z[i] * ei).abs());
        }
        let mut rd = 0.0f64;
        let mut px_n = 0.0f64;
        let mut aty_n = 0.0f64;
        let mut q_n = 0.0f64;
        let cinv = 1.0 / scaling.c;
        for j in 0..n {
            let dj = 1.0 / scaling.d[j];
            rd = rd.max(((px[j] + scaled.q[j] + aty[j]) * dj * cinv).abs());
            px_n = px_n.max((px[j] * dj * cinv).abs());
            aty_n = aty_n.max((aty[j] * dj * cinv).abs());
            q_n = q_n.max((scaled.q[j] * dj * cinv).abs());
        }
        primal_res = rp;
        dual_res = rd;
        let eps_p = settings.tol_primal + settings.eps_rel * ax_n.max(z_n);
        let eps_d = settings.tol_dual + settings.eps_rel * px_n.max(aty_n).max(q_n);
        if rp <= eps_p && rd <= eps_d {
            status = QpStatus::Optimal;
            iterations = iter + 1;
            break;
        }

        // infeasibility certificates on the iterate differences
        let mut dy = vec![0.0; m];
        let mut dy_norm = 0.0f64;
        for i in 0..m {
            dy[i] = y[i] - y_prev[i];
            dy_norm = dy_norm.max((dy[i] * scaling.e[i] * cinv).abs());
        }
        if dy_norm > 1e-14 {
            let mut at_dy = vec![0.0; n];
            scaled.a.matvec_t(&dy, &mut at_dy);
            let at_ok = (0..n)
                .all(|j| (at_dy[j] / scaling.d[j] * cinv).abs() <= settings.eps_infeas * dy_norm);
            if at_ok {
                let mut support = 0.0;
                let mut unbounded = false;
                for i in 0..m {
                    let dyi = dy[i] * scaling.e[i] * cinv;
                    if dyi > 0.0 {
                        if data.u[i] >= INF {
                            unbounded = true;
                            break;
                        }
                        support += data.u[i] * dyi;
                    } else if dyi < 0.0 {
                        if data.l[i] <= -INF {
                            unbounded = true;
                            break;
                        }
                        support += data.l[i] * dyi;
                    }
                }
                if !unbounded && support <= -settings.eps_infeas * dy_norm {
                    status = QpStatus::PrimalInfeasible;
                    iterations = iter + 1;
                    break;
                }
            }
        }
        let mut dx = vec![0.0; n];
        let mut dx_norm = 0.0f64;
        for j in 0..n {
            dx[j] = x[j] - x_prev[j];
            dx_norm = dx_norm.max((dx[j] * scaling.d[j]).abs());
        }
        if dx_norm > 1e-14 {
            let mut pdx = vec![0.0; n];
            scaled.p.matvec(&dx, &mut pdx);
            let p_ok = (0..n)
                .all(|j| (pdx[j] / scaling.d[j] * cinv).abs() <= settings.eps_infeas * dx_norm);
            let q_dx: f64 = (0..n).map(|j| scaled.q[j] * dx[j]).sum::<f64>() * cinv;
            if p_ok && q_dx < -settings.eps_infeas * dx_norm {
                let mut adx = vec![0.0; m];
                scaled.a.matvec(&dx, &mut adx);
                let cone_ok = (0..m).all(|i| {
                    let v = adx[i] / scaling.e[i];
                    if data.u[i] >= INF && data.l[i] <= -INF {
                        true
                    } else if data.u[i] >= INF {
                        v >= -settings.eps_infeas * dx_norm
                    } else if data.l[i] <= -INF {
                        v <= settings.eps_infeas * dx_norm
                    } else {
                        v.abs() <= settings.eps_infeas * dx_norm
                    }
                });
                if cone_ok {
                    status = QpStatus::DualInfeasible;
                    iterations = iter + 1;
                    break;
                }
            }
        }

        // adaptive ρ
        if settings.adaptive_rho {
            let rp_rel = rp / ax_n.max(z_n).max(1e-12);
            let rd_rel = rd / px_n.max(aty_n).max(q_n).max(1e-12);
            let ratio = (rp_rel / rd_rel.max(1e-16)).sqrt();
            if ratio > 5.0 || ratio < 0.2 {
                rho_base = (rho_base * ratio).clamp(1e-6, 1e6);
                for i in 0..m {
                    rho[i] = rho_for(rho_base, i);
                    rho_inv[i] = 1.0 / rho[i];
                }
                kkt = build_kkt(&scaled.p, &scaled.a, settings.sigma, &rho_inv, None);
            }
        }
    }

    // unscale
    let mut x_out = vec![0.0; n];
    for j in 0..n {
        x_out[j] = x[j] * scaling.d[j];
    }
    let mut y_out = vec![0.0; m];
    for i in 0..m {
        y_out[i] = y[i] * scaling.e[i] / scaling.c;
    }
    QpSolution { x: x_out, y: y_out, status, primal_res, dual_res, iterations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn diag(vals: &[f64]) -> CscMatrix {
        let mut t = Triplets::new(vals.len(), vals.len());
        for (i, &v) in vals.iter().enumerate() {
            t.push(i, i, v);
        }
        t.to_csc()
    }

    #[test]
    fn scalar_bound() {
        // min ½x² s.t. x ≥ 1 → x = 1
        let data = QpData {
            p: diag(&[1.0]),
            q: vec![0.0],
            a: CscMatrix::identity(1),
            l: vec![1.0],
            u: vec![INF],
        };
        let sol = solve(&data, &QpSettings::default());
        assert_eq!(sol.status, QpStatus::Optimal);
        assert_abs_diff_eq!(sol.x[0], 1.0, epsilon = 1e-5);
    }

    #[test]
    fn unconstrained_quadratic() {
        // min ½‖x‖² + qᵀx → x = −q
        let q = vec![1.5, -2.0, 0.25];
        let data = QpData {
            p: diag(&[1.0, 1.0, 1.0]),
            q: q.clone(),
            a: CscMatrix::zeros(0, 3),
            l: vec![],
            u: vec![],
        };
        let sol = solve(&data, &QpSettings::default());
        assert_eq!(sol.status, QpStatus::Optimal);
        for j in 0..3 {
            assert_abs_diff_eq!(sol.x[j], -q[j], epsilon = 1e-5);
        }
    }

    #[test]
    fn infeasible_box() {
        // x ≤ -1 and x ≥ 1 simultaneously
        let mut t = Triplets::new(2, 1);
        t.push(0, 0, 1.0);
        t.push(1, 0, 1.0);
        let data = QpData {
            p: diag(&[1.0]),
            q: vec![0.0],
            a: t.to_csc(),
            l: vec![1.0, -INF],
            u: vec![INF, -1.0],
        };
        let sol = solve(&data, &QpSettings::default());
        assert_eq!(sol.status, QpStatus::PrimalInfeasible);
    }

    #[test]
    fn dual_infeasible_unbounded() {
        // min -x, x ≥ 0 free above → unbounded
        let data = QpData {
            p: CscMatrix::zeros(1, 1),
            q: vec![-1.0],
            a: CscMatrix::identity(1),
            l: vec![0.0],
            u: vec![INF],
        };
        let sol = solve(&data, &QpSettings::default());
        assert_eq!(sol.status, QpStatus::DualInfeasible);
    }

    #[test]
    fn equality_and_inequality_mix() {
        // min ½(x₁²+x₂²) s.t. x₁+x₂ = 1, x₁ ≥ 0.8 → x = (0.8, 0.2)
        let mut t = Triplets::new(2, 2);
        t.push(0, 0, 1.0);
        t.push(0, 1, 1.0);
        t.push(1, 0, 1.0);
        let data = QpData {
            p: diag(&[1.0, 1.0]),
            q: vec![0.0, 0.0],
            a: t.to_csc(),
            l: vec![1.0, 0.8],
            u: vec![1.0, INF],
        };
        let sol = solve(&data, &QpSettings::default());
        assert_eq!(sol.status, QpStatus::Optimal);
        assert_abs_diff_eq!(sol.x[0], 0.8, epsilon = 1e-5);
        assert_abs_diff_eq!(sol.x[1], 0.2, epsilon = 1e-5);
    }

    #[test]
    fn deterministic_repeat() {
        let mut t = Triplets::new(3, 2);
        t.push(0, 0, 1.0);
        t.push(0, 1, 1.0);
        t.push(1, 0, 1.0);
        t.push(2, 1, 1.0);
        let data = QpData {
            p: diag(&[4.0, 2.0]),
            q: vec![1.0, 1.0],
            a: t.to_csc(),
            l: vec![1.0, 0.0, 0.0],
            u: vec![1.0, 0.7, 0.7],
        };
        let a = solve(&data, &QpSettings::default());
        let b = solve(&data, &QpSettings::default());
        assert_eq!(a.x, b.x);
        assert_eq!(a.iterations, b.iterations);
    }
}
