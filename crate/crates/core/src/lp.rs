//! Dense/block-structured interior-point LP solver.
//!
//! Problems are stated as `min c'x  s.t.  A x >= b, E x = f` with free
//! variables. The normal-equation matrix `A' W A` of the primal-dual Newton
//! system is assembled blockwise: the caller may declare disjoint variable
//! *groups* such that every inequality row touches at most one group plus
//! the shared *border* variables. The factorization then reduces to small
//! per-group Cholesky factors and one dense Schur complement on the border,
//! which keeps the gain-training programs (tens of thousands of rows)
//! solvable in seconds. With no groups declared everything lands in the
//! border and the solver degenerates to a plain dense method.
//!
//! Mehrotra predictor-corrector steps, deterministic: no pivoting choices,
//! no randomness.

use nalgebra::{Cholesky, DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("bad problem structure: {0}")]
    Structure(String),
    #[error("no convergence after {iters} iterations (primal {rel_p:.2e}, dual {rel_d:.2e}, gap {gap:.2e})")]
    NoConvergence { iters: usize, rel_p: f64, rel_d: f64, gap: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// One sparse inequality/equality row.
#[derive(Debug, Clone, Default)]
pub struct SparseRow {
    pub cols: Vec<u32>,
    pub vals: Vec<f64>,
}

impl SparseRow {
    pub fn new(cols: Vec<u32>, vals: Vec<f64>) -> Self {
        debug_assert_eq!(cols.len(), vals.len());
        Self { cols, vals }
    }

    fn dot(&self, x: &[f64]) -> f64 {
        self.cols.iter().zip(&self.vals).map(|(&c, &v)| v * x[c as usize]).sum()
    }
}

/// `min c'x  s.t.  rows: A x >= rhs,  eq_rows: E x = eq_rhs`.
#[derive(Debug, Clone, Default)]
pub struct LpProblem {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub rows: Vec<SparseRow>,
    pub rhs: Vec<f64>,
    pub eq_rows: Vec<SparseRow>,
    pub eq_rhs: Vec<f64>,
    /// Disjoint variable groups for the block factorization. Variables not
    /// listed form the border. Equality rows must touch only border vars.
    pub groups: Vec<Vec<u32>>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct IpmOptions {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for IpmOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iters: 200 }
    }
}

const BORDER: u32 = u32::MAX;

/// Row split into group-local and border-local index space.
struct RowPlan {
    group: usize, // group index or usize::MAX when purely border
    glocal: Vec<u32>,
    gvals: Vec<f64>,
    blocal: Vec<u32>,
    bvals: Vec<f64>,
}

struct Structure {
    // var -> (group id | BORDER, local index)
    var_group: Vec<u32>,
    var_local: Vec<u32>,
    groups: Vec<Vec<u32>>,
    group_sizes: Vec<usize>,
    border_vars: Vec<u32>,
    plans: Vec<RowPlan>,
    // per group: sorted border-local columns its rows touch
    group_border: Vec<Vec<u32>>,
    // per group: map border-local -> compact index within group_border
    group_border_pos: Vec<std::collections::HashMap<u32, u32>>,
}

fn analyze(p: &LpProblem) -> Result<Structure, LpError> {
    let n = p.num_vars;
    let mut var_group = vec![BORDER; n];
    let mut var_local = vec![0u32; n];
    let mut group_sizes = Vec::with_capacity(p.groups.len());
    for (gi, g) in p.groups.iter().enumerate() {
        for (li, &v) in g.iter().enumerate() {
            let v = v as usize;
            if v >= n {
                return Err(LpError::Structure(format!("group var {v} out of range")));
            }
            if var_group[v] != BORDER {
                return Err(LpError::Structure(format!("variable {v} in two groups")));
            }
            var_group[v] = gi as u32;
            var_local[v] = li as u32;
        }
        group_sizes.push(g.len());
    }
    let mut border_vars = Vec::new();
    for v in 0..n {
        if var_group[v] == BORDER {
            var_local[v] = border_vars.len() as u32;
            border_vars.push(v as u32);
        }
    }
    let mut plans = Vec::with_capacity(p.rows.len());
    let mut group_border_sets: Vec<std::collections::BTreeSet<u32>> =
        vec![std::collections::BTreeSet::new(); p.groups.len()];
    for (ri, row) in p.rows.iter().enumerate() {
        let mut group = usize::MAX;
        let mut glocal = Vec::new();
        let mut gvals = Vec::new();
        let mut blocal = Vec::new();
        let mut bvals = Vec::new();
        for (&c, &v) in row.cols.iter().zip(&row.vals) {
            let c = c as usize;
            if c >= n {
                return Err(LpError::Structure(format!("row {ri} references var {c}")));
            }
            if var_group[c] == BORDER {
                blocal.push(var_local[c]);
                bvals.push(v);
            } else {
                let g = var_group[c] as usize;
                if group == usize::MAX {
                    group = g;
                } else if group != g {
                    return Err(LpError::Structure(format!(
                        "row {ri} touches two groups ({group} and {g})"
                    )));
                }
                glocal.push(var_local[c]);
                gvals.push(v);
            }
        }
        if group != usize::MAX {
            for &b in &blocal {
                group_border_sets[group].insert(b);
            }
        }
        plans.push(RowPlan { group, glocal, gvals, blocal, bvals });
    }
    for (ri, row) in p.eq_rows.iter().enumerate() {
        for &c in &row.cols {
            if var_group[c as usize] != BORDER {
                return Err(LpError::Structure(format!(
                    "equality row {ri} touches grouped variable {c}"
                )));
            }
        }
    }
    let group_border: Vec<Vec<u32>> =
        group_border_sets.into_iter().map(|s| s.into_iter().collect()).collect();
    let group_border_pos = group_border
        .iter()
        .map(|cols| {
            cols.iter().enumerate().map(|(i, &c)| (c, i as u32)).collect()
        })
        .collect();
    Ok(Structure {
        var_group,
        var_local,
        groups: p.groups.clone(),
        group_sizes,
        border_vars,
        plans,
        group_border,
        group_border_pos,
    })
}

/// Factorization of `M = A' W A + delta I` in group/border block form.
struct Factors {
    group_chol: Vec<Cholesky<f64, nalgebra::Dyn>>,
    /// `X_g = M_g^{-1} R_g` with columns over the group's border support.
    group_x: Vec<DMatrix<f64>>,
    group_r: Vec<DMatrix<f64>>,
    schur: Cholesky<f64, nalgebra::Dyn>,
    nb: usize,
}

fn factorize(
    st: &Structure,
    weights: &[f64],
    delta: f64,
) -> Result<Factors, LpError> {
    let ng = st.group_sizes.len();
    let nb = st.border_vars.len();
    let mut gmats: Vec<DMatrix<f64>> =
        st.group_sizes.iter().map(|&s| DMatrix::zeros(s, s)).collect();
    let mut rmats: Vec<DMatrix<f64>> = st
        .group_sizes
        .iter()
        .zip(&st.group_border)
        .map(|(&s, cols)| DMatrix::zeros(s, cols.len()))
        .collect();
    let mut bmat = DMatrix::zeros(nb, nb);
    for (plan, &w) in st.plans.iter().zip(weights) {
        if plan.group != usize::MAX {
            let g = plan.group;
            let gm = &mut gmats[g];
            for (i, &gi) in plan.glocal.iter().enumerate() {
                let wi = w * plan.gvals[i];
                for (j, &gj) in plan.glocal.iter().enumerate() {
                    gm[(gi as usize, gj as usize)] += wi * plan.gvals[j];
                }
            }
            let rm = &mut rmats[g];
            let pos = &st.group_border_pos[g];
            for (i, &gi) in plan.glocal.iter().enumerate() {
                let wi = w * plan.gvals[i];
                for (j, &bj) in plan.blocal.iter().enumerate() {
                    let bj_c = pos[&bj] as usize;
                    rm[(gi as usize, bj_c)] += wi * plan.bvals[j];
                }
            }
        }
        for (i, &bi) in plan.blocal.iter().enumerate() {
            let wi = w * plan.bvals[i];
            for (j, &bj) in plan.blocal.iter().enumerate() {
                bmat[(bi as usize, bj as usize)] += wi * plan.bvals[j];
            }
        }
    }
    for g in gmats.iter_mut() {
        for i in 0..g.nrows() {
            g[(i, i)] += delta;
        }
    }
    for i in 0..nb {
        bmat[(i, i)] += delta;
    }
    let mut group_chol = Vec::with_capacity(ng);
    let mut group_x = Vec::with_capacity(ng);
    for (g, (gm, rm)) in gmats.into_iter().zip(&rmats).enumerate() {
        let chol = gm
            .cholesky()
            .ok_or_else(|| LpError::Numerical(format!("group {g} block not positive definite")))?;
        let x = chol.solve(rm);
        // Schur update: S -= R' X over the group's border support
        let update = rm.transpose() * &x;
        let cols = &st.group_border[g];
        for (i, &bi) in cols.iter().enumerate() {
            for (j, &bj) in cols.iter().enumerate() {
                bmat[(bi as usize, bj as usize)] -= update[(i, j)];
            }
        }
        group_chol.push(chol);
        group_x.push(x);
    }
    let schur = bmat
        .cholesky()
        .ok_or_else(|| LpError::Numerical("border Schur complement not positive definite".into()))?;
    Ok(Factors { group_chol, group_x, group_r: rmats, schur, nb })
}

impl Factors {
    /// Applies `M^{-1}` to a full-length vector in original variable order.
    fn solve(&self, st: &Structure, r: &[f64]) -> Vec<f64> {
        let nb = self.nb;
        // gather
        let mut rg: Vec<DVector<f64>> =
            st.group_sizes.iter().map(|&s| DVector::zeros(s)).collect();
        let mut rb = DVector::zeros(nb);
        for (v, &val) in r.iter().enumerate() {
            let g = st.var_group[v];
            if g == BORDER {
                rb[st.var_local[v] as usize] = val;
            } else {
                rg[g as usize][st.var_local[v] as usize] = val;
            }
        }
        // border rhs: rb - sum_g R_g' M_g^{-1} r_g
        let mut tb = rb.clone();
        let mut minv_rg = Vec::with_capacity(rg.len());
        for (g, rgv) in rg.iter().enumerate() {
            let sol = self.group_chol[g].solve(rgv);
            let contrib = self.group_r[g].transpose() * &sol;
            for (i, &bi) in st.group_border[g].iter().enumerate() {
                tb[bi as usize] -= contrib[i];
            }
            minv_rg.push(sol);
        }
        let zb = self.schur.solve(&tb);
        // back-substitute per group: zg = M_g^{-1} rg - X_g zb|cols
        let mut out = vec![0.0; r.len()];
        for (g, sol) in minv_rg.iter().enumerate() {
            let cols = &st.group_border[g];
            let mut zb_local = DVector::zeros(cols.len());
            for (i, &bi) in cols.iter().enumerate() {
                zb_local[i] = zb[bi as usize];
            }
            let zg = sol - &self.group_x[g] * zb_local;
            for (&li, &v) in zg.iter().zip(&st.groups[g]) {
                out[v as usize] = li;
            }
        }
        for (li, &v) in st.border_vars.iter().enumerate() {
            out[v as usize] = zb[li];
        }
        out
    }
}

/// Solves the LP; deterministic for fixed input.
pub fn solve(p: &LpProblem, opts: &IpmOptions) -> Result<LpSolution, LpError> {
    let n = p.num_vars;
    let m = p.rows.len();
    let me = p.eq_rows.len();
    if m == 0 {
        return Err(LpError::Structure("no inequality rows".into()));
    }
    if p.objective.len() != n || p.rhs.len() != m || p.eq_rhs.len() != me {
        return Err(LpError::Structure("dimension mismatch in problem arrays".into()));
    }
    let st = analyze(p)?;

    let mut x = vec![0.0; n];
    let mut s: Vec<f64> = p.rhs.iter().map(|&b| (b.abs()).max(1.0)).collect();
    let mut lam = vec![1.0; m];
    let mut y = vec![0.0; me];

    let bnorm = p.rhs.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1.0);
    let cnorm = p.objective.iter().fold(0.0f64, |a, &c| a.max(c.abs())).max(1.0);
    let anorm = p
        .rows
        .iter()
        .flat_map(|r| r.vals.iter())
        .fold(0.0f64, |a, &v| a.max(v.abs()))
        .max(1.0);
    // static regularization; independent of the barrier weights so late
    // iterations are not corrupted
    let delta_base = 1e-12 * anorm * anorm;

    let at_vec = |v: &[f64]| -> Vec<f64> {
        // A' v
        let mut out = vec![0.0; n];
        for (row, &vi) in p.rows.iter().zip(v) {
            if vi != 0.0 {
                for (&c, &a) in row.cols.iter().zip(&row.vals) {
                    out[c as usize] += a * vi;
                }
            }
        }
        out
    };
    let et_vec = |v: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (row, &vi) in p.eq_rows.iter().zip(v) {
            if vi != 0.0 {
                for (&c, &a) in row.cols.iter().zip(&row.vals) {
                    out[c as usize] += a * vi;
                }
            }
        }
        out
    };

    let mut iterations = 0;
    let mut last = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    for iter in 0..opts.max_iters {
        iterations = iter;
        // residuals
        let ax: Vec<f64> = p.rows.iter().map(|r| r.dot(&x)).collect();
        let ex: Vec<f64> = p.eq_rows.iter().map(|r| r.dot(&x)).collect();
        let rp: Vec<f64> = (0..m).map(|i| ax[i] - s[i] - p.rhs[i]).collect();
        let re: Vec<f64> = (0..me).map(|i| ex[i] - p.eq_rhs[i]).collect();
        let atl = at_vec(&lam);
        let ety = et_vec(&y);
        let rd: Vec<f64> =
            (0..n).map(|j| p.objective[j] - atl[j] - ety[j]).collect();
        let gap: f64 = s.iter().zip(&lam).map(|(&a, &b)| a * b).sum::<f64>() / m as f64;
        let obj: f64 = p.objective.iter().zip(&x).map(|(&c, &v)| c * v).sum();
        let xnorm = x.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        let lnorm = lam.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        let rel_p = rp.iter().fold(0.0f64, |a, &v| a.max(v.abs())).max(
            re.iter().fold(0.0f64, |a, &v| a.max(v.abs())),
        ) / (bnorm + anorm * xnorm);
        let rel_d =
            rd.iter().fold(0.0f64, |a, &v| a.max(v.abs())) / (cnorm + anorm * lnorm);
        let rel_gap = gap / (1.0 + obj.abs());
        let done = (rel_p <= opts.tol && rel_d <= opts.tol && rel_gap <= opts.tol)
            // complementarity crushed and KKT nearly tight: accept
            || (rel_gap <= opts.tol * 1e-2 && rel_p <= opts.tol * 100.0 && rel_d <= opts.tol * 100.0);
        // stalled: no residual is improving any more
        let stalled = iter > 20
            && rel_p >= last.0 * 0.999
            && rel_d >= last.1 * 0.999
            && rel_gap >= last.2 * 0.999;
        if done || (stalled && rel_p <= 1e-7 && rel_d <= 1e-7 && rel_gap <= 1e-8) {
            return Ok(LpSolution {
                x,
                objective: obj,
                iterations: iter,
                primal_residual: rel_p,
                dual_residual: rel_d,
                gap,
            });
        }
        if stalled {
            return Err(LpError::NoConvergence { iters: iter, rel_p, rel_d, gap: rel_gap });
        }
        last = (rel_p, rel_d, rel_gap);

        // factorization with clamped W = lambda / s
        let weights: Vec<f64> =
            (0..m).map(|i| (lam[i].max(1e-300) / s[i].max(1e-300)).clamp(1e-30, 1e30)).collect();
        let mut delta = delta_base;
        let factors = loop {
            match factorize(&st, &weights, delta) {
                Ok(f) => break f,
                Err(_) if delta < 1e-2 * anorm * anorm => delta *= 100.0,
                Err(e) => return Err(e),
            }
        };
        // equality Schur pieces
        let minv_et: Vec<Vec<f64>> = p
            .eq_rows
            .iter()
            .map(|row| {
                let mut dense = vec![0.0; n];
                for (&c, &v) in row.cols.iter().zip(&row.vals) {
                    dense[c as usize] = v;
                }
                factors.solve(&st, &dense)
            })
            .collect();
        let tmat = if me > 0 {
            let mut t = DMatrix::zeros(me, me);
            for i in 0..me {
                for j in 0..me {
                    t[(i, j)] = p.eq_rows[i].dot(&minv_et[j]);
                }
            }
            Some(t.lu())
        } else {
            None
        };

        // shared solve for the reduced system given complementarity rhs rc
        let newton = |rc: &[f64], factors: &Factors| -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
            // r1 = A' S^{-1} rc - A' W rp - rd
            let sinv_rc: Vec<f64> = (0..m).map(|i| rc[i] / s[i]).collect();
            let w_rp: Vec<f64> = (0..m).map(|i| weights[i] * rp[i]).collect();
            let a_part = at_vec(&sinv_rc);
            let a_part2 = at_vec(&w_rp);
            let r1: Vec<f64> = (0..n).map(|j| a_part[j] - a_part2[j] - rd[j]).collect();
            let minv_r1 = factors.solve(&st, &r1);
            let dy: Vec<f64> = if me > 0 {
                let mut rhs = DVector::zeros(me);
                for i in 0..me {
                    rhs[i] = -re[i] - p.eq_rows[i].dot(&minv_r1);
                }
                let sol = tmat.as_ref().unwrap().solve(&rhs).expect("equality Schur solve");
                sol.iter().copied().collect()
            } else {
                Vec::new()
            };
            // dx = M^{-1}(r1 + E' dy)
            let dx = if me > 0 {
                let mut corr = vec![0.0; n];
                for (i, mv) in minv_et.iter().enumerate() {
                    for (j, out) in corr.iter_mut().enumerate() {
                        *out += mv[j] * dy[i];
                    }
                }
                (0..n).map(|j| minv_r1[j] + corr[j]).collect::<Vec<f64>>()
            } else {
                minv_r1
            };
            let ds: Vec<f64> =
                (0..m).map(|i| p.rows[i].dot(&dx) + rp[i]).collect();
            let dl: Vec<f64> = (0..m).map(|i| sinv_rc[i] - weights[i] * ds[i]).collect();
            (dx, ds, dl, dy)
        };

        // predictor
        let rc_aff: Vec<f64> = (0..m).map(|i| -s[i] * lam[i]).collect();
        let (_dx_a, ds_a, dl_a, _) = newton(&rc_aff, &factors);
        let step = |v: &[f64], dv: &[f64]| -> f64 {
            let mut a = 1.0f64;
            for (&vi, &di) in v.iter().zip(dv) {
                if di < 0.0 {
                    a = a.min(-vi / di);
                }
            }
            a
        };
        let ap_a = step(&s, &ds_a);
        let ad_a = step(&lam, &dl_a);
        let mu_aff: f64 = (0..m)
            .map(|i| (s[i] + ap_a * ds_a[i]) * (lam[i] + ad_a * dl_a[i]))
            .sum::<f64>()
            / m as f64;
        let sigma = (mu_aff / gap).powi(3).clamp(0.0, 1.0);

        // corrector
        let rc: Vec<f64> =
            (0..m).map(|i| sigma * gap - s[i] * lam[i] - ds_a[i] * dl_a[i]).collect();
        let (dx, ds, dl, dy) = newton(&rc, &factors);
        let eta = 0.9995;
        let ap = (eta * step(&s, &ds)).min(1.0);
        let ad = (eta * step(&lam, &dl)).min(1.0);
        for j in 0..n {
            x[j] += ap * dx[j];
        }
        for i in 0..m {
            s[i] += ap * ds[i];
            lam[i] += ad * dl[i];
        }
        for i in 0..me {
            y[i] += ad * dy[i];
        }
    }
    let obj: f64 = p.objective.iter().zip(&x).map(|(&c, &v)| c * v).sum();
    let gap: f64 = s.iter().zip(&lam).map(|(&a, &b)| a * b).sum::<f64>() / m as f64;
    Err(LpError::NoConvergence {
        iters: iterations + 1,
        rel_p: last.0,
        rel_d: last.1,
        gap: gap / (1.0 + obj.abs()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;

    fn row(cols: &[u32], vals: &[f64]) -> SparseRow {
        SparseRow::new(cols.to_vec(), vals.to_vec())
    }

    #[test]
    fn one_dimensional_bound() {
        // min x s.t. x >= 1
        let p = LpProblem {
            num_vars: 1,
            objective: vec![1.0],
            rows: vec![row(&[0], &[1.0])],
            rhs: vec![1.0],
            ..Default::default()
        };
        let sol = solve(&p, &IpmOptions::default()).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-8);
        assert!((sol.objective - 1.0).abs() < 1e-8);
    }

    #[test]
    fn equality_simplex_weights() {
        // min max-like epigraph: min y s.t. y >= 1*c1, y >= 3*c2, c1+c2=1, c>=0
        // optimum equalizes: c = (0.75, 0.25), y = 0.75
        let p = LpProblem {
            num_vars: 3, // y, c1, c2
            objective: vec![1.0, 0.0, 0.0],
            rows: vec![
                row(&[0, 1], &[1.0, -1.0]),
                row(&[0, 2], &[1.0, -3.0]),
                row(&[1], &[1.0]),
                row(&[2], &[1.0]),
            ],
            rhs: vec![0.0, 0.0, 0.0, 0.0],
            eq_rows: vec![row(&[1, 2], &[1.0, 1.0])],
            eq_rhs: vec![1.0],
            groups: vec![],
        };
        let sol = solve(&p, &IpmOptions::default()).unwrap();
        assert!((sol.x[1] - 0.75).abs() < 1e-8, "c1 = {}", sol.x[1]);
        assert!((sol.x[2] - 0.25).abs() < 1e-8, "c2 = {}", sol.x[2]);
        assert!((sol.objective - 0.75).abs() < 1e-8);
    }

    /// Brute-force vertex enumeration for small dense LPs with inequality
    /// rows only: tries every n-subset of rows as an active set.
    fn vertex_oracle(p: &LpProblem) -> Option<f64> {
        let n = p.num_vars;
        let m = p.rows.len();
        let dense: Vec<Vec<f64>> = p
            .rows
            .iter()
            .map(|r| {
                let mut d = vec![0.0; n];
                for (&c, &v) in r.cols.iter().zip(&r.vals) {
                    d[c as usize] = v;
                }
                d
            })
            .collect();
        let mut best: Option<f64> = None;
        let mut combo = vec![0usize; n];
        fn rec(
            start: usize,
            k: usize,
            combo: &mut Vec<usize>,
            n: usize,
            m: usize,
            dense: &[Vec<f64>],
            p: &LpProblem,
            best: &mut Option<f64>,
        ) {
            if k == n {
                let mut a = nalgebra::DMatrix::zeros(n, n);
                let mut b = nalgebra::DVector::zeros(n);
                for (i, &ri) in combo.iter().enumerate() {
                    for j in 0..n {
                        a[(i, j)] = dense[ri][j];
                    }
                    b[i] = p.rhs[ri];
                }
                if let Some(x) = a.lu().solve(&b) {
                    let feasible = (0..m).all(|ri| {
                        let lhs: f64 =
                            (0..n).map(|j| dense[ri][j] * x[j]).sum();
                        lhs >= p.rhs[ri] - 1e-7
                    });
                    if feasible {
                        let obj: f64 =
                            (0..n).map(|j| p.objective[j] * x[j]).sum();
                        *best = Some(best.map_or(obj, |b: f64| b.min(obj)));
                    }
                }
                return;
            }
            for i in start..m {
                combo[k] = i;
                rec(i + 1, k + 1, combo, n, m, dense, p, best);
            }
        }
        rec(0, 0, &mut combo, n, m, &dense, p, &mut best);
        best
    }

    #[test]
    fn matches_vertex_enumeration_on_random_lps() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1234);
        let mut solved = 0;
        for _ in 0..40 {
            let n = rng.random_range(2..=3);
            let extra = rng.random_range(2..=5usize);
            let mut rows = Vec::new();
            let mut rhs = Vec::new();
            // box -10 <= x <= 10 keeps the problem bounded and feasible
            for j in 0..n {
                rows.push(row(&[j as u32], &[1.0]));
                rhs.push(-10.0);
                rows.push(row(&[j as u32], &[-1.0]));
                rhs.push(-10.0);
            }
            for _ in 0..extra {
                let cols: Vec<u32> = (0..n as u32).collect();
                let vals: Vec<f64> =
                    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                rows.push(row(&cols, &vals));
                rhs.push(rng.random_range(-2.0..0.5));
            }
            let objective: Vec<f64> =
                (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let p = LpProblem {
                num_vars: n,
                objective,
                rows,
                rhs,
                ..Default::default()
            };
            let oracle = vertex_oracle(&p);
            let sol = solve(&p, &IpmOptions::default());
            match (oracle, sol) {
                (Some(v), Ok(s)) => {
                    assert!(
                        (v - s.objective).abs() <= 1e-6 * (1.0 + v.abs()),
                        "oracle {v}, ipm {}",
                        s.objective
                    );
                    solved += 1;
                }
                (None, _) => {} // infeasible instance; skip
                (Some(v), Err(e)) => panic!("oracle found {v} but solver failed: {e}"),
            }
        }
        assert!(solved >= 20, "only {solved} solvable instances exercised");
    }

    #[test]
    fn grouped_solve_matches_ungrouped() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        // two groups of 3 vars + 2 border vars; rows touch one group + border
        let n = 8;
        let groups = vec![vec![0u32, 1, 2], vec![3, 4, 5]];
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for j in 0..n {
            rows.push(row(&[j as u32], &[1.0]));
            rhs.push(-5.0);
            rows.push(row(&[j as u32], &[-1.0]));
            rhs.push(-5.0);
        }
        for g in 0..2u32 {
            for _ in 0..6 {
                let cols = vec![3 * g, 3 * g + 1, 3 * g + 2, 6, 7];
                let vals: Vec<f64> =
                    (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
                rows.push(row(&cols, &vals));
                rhs.push(rng.random_range(-2.0..0.0));
            }
        }
        let objective: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let grouped = LpProblem {
            num_vars: n,
            objective: objective.clone(),
            rows: rows.clone(),
            rhs: rhs.clone(),
            groups,
            ..Default::default()
        };
        let plain = LpProblem {
            num_vars: n,
            objective,
            rows,
            rhs,
            ..Default::default()
        };
        let a = solve(&grouped, &IpmOptions::default()).unwrap();
        let b = solve(&plain, &IpmOptions::default()).unwrap();
        assert!((a.objective - b.objective).abs() < 1e-7);
        for j in 0..n {
            assert!((a.x[j] - b.x[j]).abs() < 1e-5, "var {j}: {} vs {}", a.x[j], b.x[j]);
        }
    }

    #[test]
    fn row_spanning_two_groups_rejected() {
        let p = LpProblem {
            num_vars: 2,
            objective: vec![1.0, 1.0],
            rows: vec![row(&[0, 1], &[1.0, 1.0])],
            rhs: vec![1.0],
            groups: vec![vec![0], vec![1]],
            ..Default::default()
        };
        assert!(matches!(solve(&p, &IpmOptions::default()), Err(LpError::Structure(_))));
    }

    #[test]
    fn deterministic_repeat() {
        let p = LpProblem {
            num_vars: 2,
            objective: vec![1.0, 2.0],
            rows: vec![
                row(&[0, 1], &[1.0, 1.0]),
                row(&[0], &[1.0]),
                row(&[1], &[1.0]),
            ],
            rhs: vec![1.0, 0.0, 0.0],
            ..Default::default()
        };
        let a = solve(&p, &IpmOptions::default()).unwrap();
        let b = solve(&p, &IpmOptions::default()).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.objective, b.objective);
    }
}
