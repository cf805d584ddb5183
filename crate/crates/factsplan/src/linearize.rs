//! Construction of the convex QP solved at every outer iteration: linearized
//! balance equalities and line-limit inequalities per scenario, capacity
//! coupling rows tying per-scenario device settings to the shared installed
//! capacities, box bounds (operating limits intersected with trust regions),
//! and the investment + operational-cost objective.
//!
//! All per-scenario variables are deviations from the linearization point;
//! the capacity variables are absolute and nonnegative, so their l1
//! investment cost reduces to a plain weighted sum.

use crate::acpf::{self, AcJacobian, Mismatch, SystemState};
use crate::grid::Network;
use crate::qp::{QpData, INF};
use crate::scenarios::Scenario;
use crate::sparse::{CscMatrix, Triplets};
use serde::Serialize;
use std::fmt;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("scenario {scenario} state is not power-flow feasible (residual {residual:.3e})")]
    NotPfFeasible { scenario: usize, residual: f64 },
    #[error(transparent)]
    Pf(#[from] acpf::PfError),
}

/// Which power-flow start each scenario gets before the first iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum InitMethod {
    /// economic dispatch with thermal limits ignored
    OpfNoThermal,
    /// proportional generator response around a feasibility-restoring scale
    Proportional,
}

/// Planner configuration. Costs: `c_sc` is $ per pu of installed series
/// capacity (per-unit reactance on the system base), `c_svc` is $ per MVAr
/// of installed shunt capacity.
#[derive(Debug, Clone)]
pub struct PlanConfig {
    pub c_sc: f64,
    pub c_svc: f64,
    pub n_years: f64,
    /// soft reactive-dispatch band per QP step, pu
    pub eps_q: f64,
    /// trust region on voltage deviations, pu
    pub trust_v: f64,
    /// trust region on angle deviations, radians
    pub trust_theta: f64,
    /// trust region on series-setting deviations, fraction of |x0|
    pub trust_dx: f64,
    /// hard cap on |dx| as a fraction of |x0| (keeps branches non-degenerate)
    pub sc_max_frac: f64,
    /// prune SVCs below this capacity (MVAr)
    pub sparsity_threshold_svc: f64,
    /// prune SCs below this fraction of |x0|
    pub sparsity_threshold_sc: f64,
    pub tol_outer: f64,
    pub tol_feas: f64,
    pub max_outer_iter: usize,
    /// SC candidate branches (external from/to pairs); None = all in service
    pub candidate_sc_branches: Option<Vec<(i64, i64)>>,
    /// SVC candidate buses (external ids); None = all non-generator buses
    pub candidate_svc_buses: Option<Vec<i64>>,
    pub init_method: InitMethod,
    pub pf: acpf::PfConfig,
    pub qp: crate::qp::QpSettings,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig {
            c_sc: 1.0e6,
            c_svc: 50_000.0,
            n_years: 1.0,
            eps_q: 0.1,
            trust_v: 0.05,
            trust_theta: 0.1,
            trust_dx: 0.2,
            sc_max_frac: 0.8,
            sparsity_threshold_svc: 0.05,
            sparsity_threshold_sc: 0.005,
            tol_outer: 1e-4,
            tol_feas: 1e-4,
            max_outer_iter: 50,
            candidate_sc_branches: None,
            candidate_svc_buses: None,
            init_method: InitMethod::OpfNoThermal,
            pf: acpf::PfConfig::default(),
            qp: crate::qp::QpSettings::default(),
        }
    }
}

/// Resolved candidate sets in dense indices.
#[derive(Debug, Clone, Default)]
pub struct CandidateSets {
    pub sc: Vec<usize>,
    pub svc: Vec<usize>,
}

impl CandidateSets {
    pub fn resolve(net: &Network, cfg: &PlanConfig) -> CandidateSets {
        let sc = match &cfg.candidate_sc_branches {
            Some(pairs) => (0..net.n_branch())
                .filter(|&l| {
                    let br = net.branch(l);
                    pairs.iter().any(|&(f, t)| {
                        (br.from == f && br.to == t) || (br.from == t && br.to == f)
                    })
                })
                .collect(),
            None => (0..net.n_branch()).collect(),
        };
        let svc = match &cfg.candidate_svc_buses {
            Some(ids) => (0..net.n_bus())
                .filter(|&i| ids.contains(&net.bus(i).id))
                .collect(),
            None => (0..net.n_bus()).filter(|&i| !net.is_gen_bus(i)).collect(),
        };
        CandidateSets { sc, svc }
    }

    pub fn none() -> CandidateSets {
        CandidateSets::default()
    }
}

/// Column map of the joint QP: per-scenario deviation blocks
/// `[δv | δθ | δp | δq | δdx | δdq]` followed by the shared capacity block
/// `[Δx̄ | ΔQ̄]`.
#[derive(Debug, Clone)]
pub struct VarMap {
    pub n_scen: usize,
    pub n_bus: usize,
    pub n_gen: usize,
    pub sc_cand: Vec<usize>,
    pub svc_cand: Vec<usize>,
    per_scen: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum VarRef {
    V { scen: usize, bus: usize },
    Theta { scen: usize, bus: usize },
    PGen { scen: usize, gen: usize },
    QGen { scen: usize, gen: usize },
    Dx { scen: usize, branch: usize },
    Dq { scen: usize, bus: usize },
    ScCap { branch: usize },
    SvcCap { bus: usize },
}

impl VarMap {
    pub fn new(net: &Network, n_scen: usize, cand: &CandidateSets) -> VarMap {
        VarMap {
            n_scen,
            n_bus: net.n_bus(),
            n_gen: net.n_gen(),
            sc_cand: cand.sc.clone(),
            svc_cand: cand.svc.clone(),
            per_scen: 2 * net.n_bus() + 2 * net.n_gen() + cand.sc.len() + cand.svc.len(),
        }
    }

    pub fn v(&self, a: usize, i: usize) -> usize {
        a * self.per_scen + i
    }
    pub fn theta(&self, a: usize, i: usize) -> usize {
        a * self.per_scen + self.n_bus + i
    }
    pub fn p_gen(&self, a: usize, g: usize) -> usize {
        a * self.per_scen + 2 * self.n_bus + g
    }
    pub fn q_gen(&self, a: usize, g: usize) -> usize {
        a * self.per_scen + 2 * self.n_bus + self.n_gen + g
    }
    /// k-th SC candidate of scenario a
    pub fn dx(&self, a: usize, k: usize) -> usize {
        a * self.per_scen + 2 * self.n_bus + 2 * self.n_gen + k
    }
    /// k-th SVC candidate of scenario a
    pub fn dq(&self, a: usize, k: usize) -> usize {
        a * self.per_scen + 2 * self.n_bus + 2 * self.n_gen + self.sc_cand.len() + k
    }
    pub fn sc_cap(&self, k: usize) -> usize {
        self.n_scen * self.per_scen + k
    }
    pub fn svc_cap(&self, k: usize) -> usize {
        self.n_scen * self.per_scen + self.sc_cand.len() + k
    }
    pub fn total(&self) -> usize {
        self.n_scen * self.per_scen + self.sc_cand.len() + self.svc_cand.len()
    }

    pub fn decode(&self, col: usize) -> VarRef {
        let shared0 = self.n_scen * self.per_scen;
        if col >= shared0 {
            let k = col - shared0;
            if k < self.sc_cand.len() {
                return VarRef::ScCap { branch: self.sc_cand[k] };
            }
            return VarRef::SvcCap { bus: self.svc_cand[k - self.sc_cand.len()] };
        }
        let scen = col / self.per_scen;
        let off = col % self.per_scen;
        let nb = self.n_bus;
        let ng = self.n_gen;
        if off < nb {
            VarRef::V { scen, bus: off }
        } else if off < 2 * nb {
            VarRef::Theta { scen, bus: off - nb }
        } else if off < 2 * nb + ng {
            VarRef::PGen { scen, gen: off - 2 * nb }
        } else if off < 2 * nb + 2 * ng {
            VarRef::QGen { scen, gen: off - 2 * nb - ng }
        } else if off < 2 * nb + 2 * ng + self.sc_cand.len() {
            VarRef::Dx { scen, branch: self.sc_cand[off - 2 * nb - 2 * ng] }
        } else {
            VarRef::Dq {
                scen,
                bus: self.svc_cand[off - 2 * nb - 2 * ng - self.sc_cand.len()],
            }
        }
    }
}

/// Identifies a QP constraint row for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RowLabel {
    BalanceP { scen: usize, bus: usize },
    BalanceQ { scen: usize, bus: usize },
    LineLimit { scen: usize, branch: usize, from_end: bool },
    CoupleScUpper { scen: usize, branch: usize },
    CoupleScLower { scen: usize, branch: usize },
    CoupleSvcUpper { scen: usize, bus: usize },
    CoupleSvcLower { scen: usize, bus: usize },
}

impl fmt::Display for RowLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowLabel::BalanceP { scen, bus } => write!(f, "P-balance s{scen} bus#{bus}"),
            RowLabel::BalanceQ { scen, bus } => write!(f, "Q-balance s{scen} bus#{bus}"),
            RowLabel::LineLimit { scen, branch, from_end } => {
                write!(f, "line-limit s{scen} branch#{branch} {}", if *from_end { "from" } else { "to" })
            }
            RowLabel::CoupleScUpper { scen, branch } => write!(f, "sc-capacity+ s{scen} branch#{branch}"),
            RowLabel::CoupleScLower { scen, branch } => write!(f, "sc-capacity- s{scen} branch#{branch}"),
            RowLabel::CoupleSvcUpper { scen, bus } => write!(f, "svc-capacity+ s{scen} bus#{bus}"),
            RowLabel::CoupleSvcLower { scen, bus } => write!(f, "svc-capacity- s{scen} bus#{bus}"),
        }
    }
}

/// Sparse convex QP over all scenarios plus shared investment variables.
pub struct QpProblem {
    pub hessian: CscMatrix,
    pub linear_cost: Vec<f64>,
    /// constant part of the objective at zero deviation (operational cost
    /// of the linearization points)
    pub objective_constant: f64,
    pub eq_matrix: CscMatrix,
    pub eq_rhs: Vec<f64>,
    pub eq_labels: Vec<RowLabel>,
    pub ineq_matrix: CscMatrix,
    pub ineq_lower: Vec<f64>,
    pub ineq_upper: Vec<f64>,
    pub ineq_labels: Vec<RowLabel>,
    pub var_lower: Vec<f64>,
    pub var_upper: Vec<f64>,
    pub var_map: VarMap,
}

impl QpProblem {
    /// Stack equalities, inequalities and (finite) box bounds into the
    /// solver's `l ≤ Ax ≤ u` form. Returns the data and the row offset of
    /// the inequality block.
    pub fn to_qp_data(&self) -> (QpData, usize) {
        let n = self.var_map.total();
        let me = self.eq_rhs.len();
        let mi = self.ineq_lower.len();
        let mut t = Triplets::new(me + mi + n, n);
        let mut l = Vec::with_capacity(me + mi + n);
        let mut u = Vec::with_capacity(me + mi + n);
        for c in 0..n {
            for p in self.eq_matrix.colptr[c]..self.eq_matrix.colptr[c + 1] {
                t.push(self.eq_matrix.rowind[p], c, self.eq_matrix.values[p]);
            }
            for p in self.ineq_matrix.colptr[c]..self.ineq_matrix.colptr[c + 1] {
                t.push(me + self.ineq_matrix.rowind[p], c, self.ineq_matrix.values[p]);
            }
        }
        l.extend_from_slice(&self.eq_rhs);
        u.extend_from_slice(&self.eq_rhs);
        l.extend_from_slice(&self.ineq_lower);
        u.extend_from_slice(&self.ineq_upper);
        for c in 0..n {
            t.push(me + mi + c, c, 1.0);
            l.push(self.var_lower[c]);
            u.push(self.var_upper[c]);
        }
        (
            QpData { p: self.hessian.clone(), q: self.linear_cost.clone(), a: t.to_csc(), l, u },
            me,
        )
    }

    /// Objective value (constant + linear + quadratic) at a primal point.
    pub fn objective_at(&self, x: &[f64]) -> f64 {
        let mut px = vec![0.0; x.len()];
        self.hessian.matvec(x, &mut px);
        let quad: f64 = 0.5 * x.iter().zip(&px).map(|(a, b)| a * b).sum::<f64>();
        let lin: f64 = self.linear_cost.iter().zip(x).map(|(a, b)| a * b).sum();
        self.objective_constant + quad + lin
    }

    /// Plain-text sparse triplet dump (objective then constraint blocks),
    /// for cross-checks with external solvers.
    pub fn dump_triplets<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "# qp n={} eq={} ineq={}", self.var_map.total(), self.eq_rhs.len(), self.ineq_lower.len())?;
        let dump = |w: &mut W, name: &str, m: &CscMatrix| -> std::io::Result<()> {
            writeln!(w, "# {name} {}x{} nnz={}", m.nrows, m.ncols, m.nnz())?;
            for c in 0..m.ncols {
                for p in m.colptr[c]..m.colptr[c + 1] {
                    writeln!(w, "{name} {} {} {:.17e}", m.rowind[p], c, m.values[p])?;
                }
            }
            Ok(())
        };
        dump(w, "P", &self.hessian)?;
        for (j, v) in self.linear_cost.iter().enumerate() {
            writeln!(w, "q {j} {v:.17e}")?;
        }
        dump(w, "A_eq", &self.eq_matrix)?;
        for (i, v) in self.eq_rhs.iter().enumerate() {
            writeln!(w, "b_eq {i} {v:.17e}")?;
        }
        dump(w, "A_ineq", &self.ineq_matrix)?;
        for i in 0..self.ineq_lower.len() {
            writeln!(w, "ineq_bounds {i} {:.17e} {:.17e}", self.ineq_lower[i], self.ineq_upper[i])?;
        }
        for j in 0..self.var_lower.len() {
            writeln!(w, "var_bounds {j} {:.17e} {:.17e}", self.var_lower[j], self.var_upper[j])?;
        }
        Ok(())
    }
}

/// Linearized line-limit rows for one scenario, in the canonical
/// per-scenario column layout: one row per line end with a finite rating,
/// `∇F·δy ≤ s̄² − F_pre`.
pub fn linearize_line_limits(
    net: &Network,
    s_pre: &[f64],
    jac: &AcJacobian,
) -> (Triplets, Vec<f64>, Vec<(usize, bool)>) {
    let nl = net.n_branch();
    let flow_t = jac.flow_sq.transpose(); // rows of flow_sq as columns
    let mut rows = Triplets::new(2 * nl, jac.layout.total());
    let mut upper = Vec::new();
    let mut which = Vec::new();
    let mut out_row = 0usize;
    for end in 0..2 * nl {
        let l = end % nl;
        let rate = net.pu.s_rate[l];
        if rate <= 0.0 {
            continue;
        }
        for p in flow_t.colptr[end]..flow_t.colptr[end + 1] {
            rows.push(out_row, flow_t.rowind[p], flow_t.values[p]);
        }
        upper.push(rate * rate - s_pre[end]);
        which.push((l, end < nl));
        out_row += 1;
    }
    let mut rows = rows;
    rows.nrows = out_row;
    (rows, upper, which)
}

/// Linearized balance rows for one scenario: `J·δy = −residual` for every
/// bus's P and Q equation.
pub fn linearize_balances(
    net: &Network,
    jac: &AcJacobian,
    mis: &Mismatch,
) -> (Triplets, Vec<f64>) {
    let nb = net.n_bus();
    let mis_t = jac.mismatch.transpose();
    let mut rows = Triplets::new(2 * nb, jac.layout.total());
    for r in 0..2 * nb {
        for p in mis_t.colptr[r]..mis_t.colptr[r + 1] {
            rows.push(r, mis_t.rowind[p], mis_t.values[p]);
        }
    }
    let mut rhs = Vec::with_capacity(2 * nb);
    for i in 0..nb {
        rhs.push(-mis.p[i]);
    }
    for i in 0..nb {
        rhs.push(-mis.q[i]);
    }
    (rows, rhs)
}

/// Options controlling which rows/columns the assembled QP contains.
#[derive(Debug, Clone)]
pub struct AssembleOptions {
    pub candidates: CandidateSets,
    /// include linearized line-limit rows
    pub thermal_limits: bool,
    /// objective weight per scenario (defaults to n_years·T_a)
    pub weights: Option<Vec<f64>>,
    /// trust-region shrink factor applied to this assembly
    pub trust_scale: f64,
}

impl AssembleOptions {
    pub fn planning(net: &Network, cfg: &PlanConfig) -> AssembleOptions {
        AssembleOptions {
            candidates: CandidateSets::resolve(net, cfg),
            thermal_limits: true,
            weights: None,
            trust_scale: 1.0,
        }
    }
}

/// Previously installed capacities, used as a warm start for the capacity
/// columns (`Δx̄` per dense branch, `ΔQ̄` per dense bus).
#[derive(Debug, Clone, Default)]
pub struct PrevPlan {
    pub sc_capacity: Vec<f64>,
    pub svc_capacity: Vec<f64>,
}

/// Assemble the joint QP around PF-feasible states, one per scenario.
pub fn assemble_qp(
    net: &Network,
    scenarios: &[Scenario],
    states: &[SystemState],
    plan_prev: &PrevPlan,
    cfg: &PlanConfig,
    opts: &AssembleOptions,
) -> Result<QpProblem, LinError> {
    if scenarios.len() != states.len() {
        return Err(LinError::Dimension(format!(
            "{} scenarios vs {} states",
            scenarios.len(),
            states.len()
        )));
    }
    let n_scen = scenarios.len();
    let vm = VarMap::new(net, n_scen, &opts.candidates);
    let n = vm.total();
    let nb = net.n_bus();
    let ng = net.n_gen();
    let base = net.base_mva;

    let mut hess = Triplets::new(n, n);
    let mut q = vec![0.0; n];
    let mut constant = 0.0;
    let mut eq = Triplets::new(2 * nb * n_scen, n);
    let mut eq_rhs = Vec::with_capacity(2 * nb * n_scen);
    let mut eq_labels = Vec::with_capacity(2 * nb * n_scen);
    let mut ineq = Triplets::new(0, n); // rows counted as we go
    let mut ineq_lower = Vec::new();
    let mut ineq_upper = Vec::new();
    let mut ineq_labels = Vec::new();
    let mut lo = vec![-INF; n];
    let mut hi = vec![INF; n];
    let mut ineq_row = 0usize;

    // map a canonical per-scenario column to the global var map, dropping
    // dx/dq columns of non-candidate elements
    let mut sc_pos = vec![usize::MAX; net.n_branch()];
    for (k, &l) in vm.sc_cand.iter().enumerate() {
        sc_pos[l] = k;
    }
    let mut svc_pos = vec![usize::MAX; nb];
    for (k, &i) in vm.svc_cand.iter().enumerate() {
        svc_pos[i] = k;
    }
    let map_col = |a: usize, col: usize| -> Option<usize> {
        if col < nb {
            Some(vm.v(a, col))
        } else if col < 2 * nb {
            Some(vm.theta(a, col - nb))
        } else if col < 2 * nb + ng {
            Some(vm.p_gen(a, col - 2 * nb))
        } else if col < 2 * nb + 2 * ng {
            Some(vm.q_gen(a, col - 2 * nb - ng))
        } else if col < 2 * nb + 2 * ng + net.n_branch() {
            let l = col - 2 * nb - 2 * ng;
            (sc_pos[l] != usize::MAX).then(|| vm.dx(a, sc_pos[l]))
        } else {
            let i = col - 2 * nb - 2 * ng - net.n_branch();
            (svc_pos[i] != usize::MAX).then(|| vm.dq(a, svc_pos[i]))
        }
    };

    let trust_v = cfg.trust_v * opts.trust_scale;
    let trust_th = cfg.trust_theta * opts.trust_scale;
    let trust_dx_frac = cfg.trust_dx * opts.trust_scale;

    for (a, (scn, state)) in scenarios.iter().zip(states).enumerate() {
        let loads = scn.loads();
        let mis = acpf::mismatch(net, state, &loads)?;
        let residual = mis.inf_norm();
        if residual > 1e-5 {
            return Err(LinError::NotPfFeasible { scenario: a, residual });
        }
        let jac = acpf::jacobian(net, state)?;
        let s_pre = acpf::apparent_sq(net, state)?;

        // balances
        let (bal, bal_rhs) = linearize_balances(net, &jac, &mis);
        let (rows, cols, vals) = bal.parts();
        for idx in 0..vals.len() {
            if let Some(c) = map_col(a, cols[idx]) {
                eq.push(eq_rhs.len() + rows[idx], c, vals[idx]);
            }
        }
        for i in 0..nb {
            eq_labels.push(RowLabel::BalanceP { scen: a, bus: i });
        }
        for i in 0..nb {
            eq_labels.push(RowLabel::BalanceQ { scen: a, bus: i });
        }
        eq_rhs.extend_from_slice(&bal_rhs);

        // line limits
        if opts.thermal_limits {
            let (lim, lim_up, which) = linearize_line_limits(net, &s_pre, &jac);
            let (rows, cols, vals) = lim.parts();
            for idx in 0..vals.len() {
                if let Some(c) = map_col(a, cols[idx]) {
                    ineq.push_unchecked(ineq_row + rows[idx], c, vals[idx]);
                }
            }
            for (r, &(l, from_end)) in which.iter().enumerate() {
                ineq_lower.push(-INF);
                ineq_upper.push(lim_up[r]);
                ineq_labels.push(RowLabel::LineLimit { scen: a, branch: l, from_end });
            }
            ineq_row += which.len();
        }

        // capacity coupling: −Δx̄ ≤ dx_pre + δdx ≤ Δx̄ and likewise for dq
        for (k, &l) in vm.sc_cand.iter().enumerate() {
            let pre = state.dx[l];
            ineq.push_unchecked(ineq_row, vm.dx(a, k), 1.0);
            ineq.push_unchecked(ineq_row, vm.sc_cap(k), -1.0);
            ineq_lower.push(-INF);
            ineq_upper.push(-pre);
            ineq_labels.push(RowLabel::CoupleScUpper { scen: a, branch: l });
            ineq_row += 1;
            ineq.push_unchecked(ineq_row, vm.dx(a, k), -1.0);
            ineq.push_unchecked(ineq_row, vm.sc_cap(k), -1.0);
            ineq_lower.push(-INF);
            ineq_upper.push(pre);
            ineq_labels.push(RowLabel::CoupleScLower { scen: a, branch: l });
            ineq_row += 1;
        }
        for (k, &i) in vm.svc_cand.iter().enumerate() {
            let pre = state.dq[i];
            ineq.push_unchecked(ineq_row, vm.dq(a, k), 1.0);
            ineq.push_unchecked(ineq_row, vm.svc_cap(k), -1.0);
            ineq_lower.push(-INF);
            ineq_upper.push(-pre);
            ineq_labels.push(RowLabel::CoupleSvcUpper { scen: a, bus: i });
            ineq_row += 1;
            ineq.push_unchecked(ineq_row, vm.dq(a, k), -1.0);
            ineq.push_unchecked(ineq_row, vm.svc_cap(k), -1.0);
            ineq_lower.push(-INF);
            ineq_upper.push(pre);
            ineq_labels.push(RowLabel::CoupleSvcLower { scen: a, bus: i });
            ineq_row += 1;
        }

        // box bounds: operating limits intersected with trust regions
        for i in 0..nb {
            let c = vm.v(a, i);
            let mut l = (net.pu.v_min[i] - state.v[i]).max(-trust_v);
            let u = (net.pu.v_max[i] - state.v[i]).min(trust_v);
            // a violated bound beyond the trust radius forces a full-step
            // repair toward feasibility
            l = l.min(u);
            lo[c] = l;
            hi[c] = u;
        }
        for i in 0..nb {
            let c = vm.theta(a, i);
            if i == net.slack() {
                lo[c] = 0.0;
                hi[c] = 0.0;
            } else {
                lo[c] = -trust_th;
                hi[c] = trust_th;
            }
        }
        for g in 0..ng {
            let c = vm.p_gen(a, g);
            let mut l = net.pu.p_min[g] - state.p_gen[g];
            let u = net.pu.p_max[g] - state.p_gen[g];
            l = l.min(u);
            lo[c] = l;
            hi[c] = u;
            // soft reactive redispatch band, Q limits hard
            let cq = vm.q_gen(a, g);
            let mut lq = (net.pu.q_min[g] - state.q_gen[g]).max(-cfg.eps_q);
            let uq = (net.pu.q_max[g] - state.q_gen[g]).min(cfg.eps_q);
            lq = lq.min(uq);
            lo[cq] = lq;
            hi[cq] = uq;
        }
        for (k, &l) in vm.sc_cand.iter().enumerate() {
            let c = vm.dx(a, k);
            let x0 = net.pu.x0[l].abs();
            let cap = cfg.sc_max_frac * x0;
            let trust = trust_dx_frac * x0;
            let mut low = (-cap - state.dx[l]).max(-trust);
            let up = (cap - state.dx[l]).min(trust);
            low = low.min(up);
            lo[c] = low;
            hi[c] = up;
        }
        for (k, &i) in vm.svc_cand.iter().enumerate() {
            let c = vm.dq(a, k);
            let _ = (c, i);
            // dq bounded only through the capacity coupling rows
        }

        // operational cost: exact quadratic of the generator polynomials
        let w = match &opts.weights {
            Some(ws) => ws[a],
            None => cfg.n_years * scn.hours_per_year,
        };
        for g in 0..ng {
            let cost = &net.gen(g).cost;
            let p0 = state.p_gen[g];
            constant += w * cost.eval_pu(p0, base);
            if w > 0.0 {
                let c = vm.p_gen(a, g);
                hess.push(c, c, 2.0 * w * cost.c2 * base * base);
                q[c] = w * (2.0 * cost.c2 * base * base * p0 + cost.c1 * base);
            }
        }
    }

    // investment columns: nonnegative capacities, l1 = plain sum
    for (k, &l) in vm.sc_cand.iter().enumerate() {
        let c = vm.sc_cap(k);
        lo[c] = 0.0;
        hi[c] = cfg.sc_max_frac * net.pu.x0[l].abs();
        q[c] = cfg.c_sc;
    }
    for (k, _) in vm.svc_cand.iter().enumerate() {
        let c = vm.svc_cap(k);
        lo[c] = 0.0;
        hi[c] = INF;
        q[c] = cfg.c_svc * base;
    }
    let _ = plan_prev;

    let mut ineq = ineq;
    ineq.nrows = ineq_row;
    Ok(QpProblem {
        hessian: hess.to_csc(),
        linear_cost: q,
        objective_constant: constant,
        eq_matrix: {
            let mut e = eq;
            e.nrows = eq_rhs.len();
            e.to_csc()
        },
        eq_rhs,
        eq_labels,
        ineq_matrix: ineq.to_csc(),
        ineq_lower,
        ineq_upper,
        ineq_labels,
        var_lower: lo,
        var_upper: hi,
        var_map: vm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acpf::{solve_pf, DispatchSpec, Loads, PfConfig, SystemState};
    use crate::grid::parse_case;
    use approx::assert_abs_diff_eq;

    const CASE30: &str = include_str!("../cases/case30.m");

    fn pf_state(net: &Network, scn: &Scenario) -> SystemState {
        let cfg = PfConfig::default();
        solve_pf(net, &SystemState::flat(net), &scn.loads(), &DispatchSpec::from_network(net), &cfg)
            .unwrap()
            .state
    }

    #[test]
    fn zero_deviation_satisfies_constraints() {
        let net = parse_case(CASE30).unwrap();
        let scn = Scenario::base_case(&net);
        let states = vec![pf_state(&net, &scn)];
        let cfg = PlanConfig::default();
        let opts = AssembleOptions::planning(&net, &cfg);
        let qp =
            assemble_qp(&net, &[scn], &states, &PrevPlan::default(), &cfg, &opts).unwrap();
        // equalities: rhs = −residual ≈ 0
        for r in &qp.eq_rhs {
            assert!(r.abs() < 1e-7, "eq rhs {r}");
        }
        // a line row permits a zero step exactly when the nonlinear limit
        // held at the linearization point (violated rows are what the QP
        // step must repair)
        let s_pre = acpf::apparent_sq(&net, &states[0]).unwrap();
        let nl = net.n_branch();
        for (i, u) in qp.ineq_upper.iter().enumerate() {
            if let RowLabel::LineLimit { branch, from_end, .. } = qp.ineq_labels[i] {
                let end = if from_end { branch } else { nl + branch };
                let margin = net.pu.s_rate[branch].powi(2) - s_pre[end];
                assert_eq!(*u > 0.0, margin > 0.0, "row {i}");
                assert_abs_diff_eq!(*u, margin, epsilon = 1e-12);
            }
        }
        // boxes contain zero
        for c in 0..qp.var_map.total() {
            assert!(qp.var_lower[c] <= 1e-12 && qp.var_upper[c] >= -1e-12,
                "box at {c}: [{}, {}]", qp.var_lower[c], qp.var_upper[c]);
        }
    }

    #[test]
    fn objective_at_zero_matches_linearization_point() {
        let net = parse_case(CASE30).unwrap();
        let scn = Scenario::base_case(&net);
        let state = pf_state(&net, &scn);
        let cfg = PlanConfig { n_years: 3.0, ..Default::default() };
        let opts = AssembleOptions::planning(&net, &cfg);
        let qp = assemble_qp(&net, &[scn.clone()], &[state.clone()], &PrevPlan::default(), &cfg, &opts)
            .unwrap();
        let zero = vec![0.0; qp.var_map.total()];
        let direct: f64 = (0..net.n_gen())
            .map(|g| net.gen(g).cost.eval_pu(state.p_gen[g], net.base_mva))
            .sum::<f64>()
            * cfg.n_years
            * scn.hours_per_year;
        let got = qp.objective_at(&zero);
        assert!((got - direct).abs() / direct.abs() < 1e-9, "{got} vs {direct}");
        // capacities set to some plan value add the l1 investment term
        let mut x = zero.clone();
        let k = 0;
        x[qp.var_map.sc_cap(k)] = 0.01;
        x[qp.var_map.svc_cap(0)] = 0.02;
        let with_caps = qp.objective_at(&x);
        let invest = cfg.c_sc * 0.01 + cfg.c_svc * net.base_mva * 0.02;
        assert!((with_caps - direct - invest).abs() / invest < 1e-9);
    }

    #[test]
    fn balance_rows_match_jacobian() {
        let net = parse_case(CASE30).unwrap();
        let scn = Scenario::base_case(&net);
        let state = pf_state(&net, &scn);
        let jac = acpf::jacobian(&net, &state).unwrap();
        let mis = acpf::mismatch(&net, &state, &scn.loads()).unwrap();
        let (rows, rhs) = linearize_balances(&net, &jac, &mis);
        assert_eq!(rhs.len(), 2 * net.n_bus());
        let m = rows.to_csc();
        // row coefficients equal the jacobian rows
        assert_eq!(m.nnz(), jac.mismatch.nnz());
        let a = m.transpose();
        let b = jac.mismatch.transpose();
        assert_eq!(a.rowind, b.rowind);
        for (x, y) in a.values.iter().zip(&b.values) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-15);
        }
    }

    #[test]
    fn dq_probe_changes_q_row_linearly() {
        // moving δdq_i by h changes the Q-row residual at bus i by −h
        let net = parse_case(CASE30).unwrap();
        let scn = Scenario::base_case(&net);
        let state = pf_state(&net, &scn);
        let cfg = PlanConfig::default();
        let opts = AssembleOptions::planning(&net, &cfg);
        let qp = assemble_qp(&net, &[scn], &[state], &PrevPlan::default(), &cfg, &opts).unwrap();
        let vm = &qp.var_map;
        let k = 0;
        let bus = vm.svc_cand[k];
        let col = vm.dq(0, k);
        let h = 0.01;
        // find the coefficient of the Q-balance row at `bus` in this column
        let row = net.n_bus() + bus; // Q rows follow P rows
        let mut coeff = 0.0;
        for p in qp.eq_matrix.colptr[col]..qp.eq_matrix.colptr[col + 1] {
            if qp.eq_matrix.rowind[p] == row {
                coeff = qp.eq_matrix.values[p];
            }
        }
        assert_abs_diff_eq!(coeff * h, -h, epsilon = 1e-15);
    }

    #[test]
    fn line_rows_only_for_rated_lines() {
        let mut doc: serde_json::Value =
            serde_json::from_str(&crate::grid::serialize_case(&parse_case(CASE30).unwrap()))
                .unwrap();
        // un-rate one line
        doc["branch"][0][5] = serde_json::json!(0.0);
        let net = parse_case(&doc.to_string()).unwrap();
        let scn = Scenario::base_case(&net);
        let state = pf_state(&net, &scn);
        let jac = acpf::jacobian(&net, &state).unwrap();
        let s_pre = acpf::apparent_sq(&net, &state).unwrap();
        let (_, upper, which) = linearize_line_limits(&net, &s_pre, &jac);
        let rated = (0..net.n_branch()).filter(|&l| net.pu.s_rate[l] > 0.0).count();
        assert_eq!(which.len(), 2 * rated);
        assert_eq!(upper.len(), 2 * rated);
        assert_eq!(rated, net.n_branch() - 1);
    }

    #[test]
    fn n_years_zero_kills_hessian() {
        let net = parse_case(CASE30).unwrap();
        let scn = Scenario::base_case(&net);
        let state = pf_state(&net, &scn);
        let cfg = PlanConfig { n_years: 0.0, ..Default::default() };
        let opts = AssembleOptions::planning(&net, &cfg);
        let qp = assemble_qp(&net, &[scn], &[state], &PrevPlan::default(), &cfg, &opts).unwrap();
        assert_eq!(qp.hessian.nnz(), 0);
        assert_eq!(qp.objective_constant, 0.0);
        // only investment terms remain in the linear cost
        for c in 0..qp.var_map.total() {
            match qp.var_map.decode(c) {
                VarRef::ScCap { .. } | VarRef::SvcCap { .. } => assert!(qp.linear_cost[c] > 0.0),
                _ => assert_eq!(qp.linear_cost[c], 0.0),
            }
        }
    }

    #[test]
    fn capacity_coupling_holds_at_any_feasible_point() {
        let net = parse_case(CASE30).unwrap();
        let scn = Scenario::base_case(&net);
        let state = pf_state(&net, &scn);
        let cfg = PlanConfig::default();
        let opts = AssembleOptions::planning(&net, &cfg);
        let qp = assemble_qp(&net, &[scn], &[state.clone()], &PrevPlan::default(), &cfg, &opts)
            .unwrap();
        let (data, _) = qp.to_qp_data();
        // a point with |dx| > Δx̄ violates some coupling row
        let vm = &qp.var_map;
        let mut x = vec![0.0; vm.total()];
        x[vm.dx(0, 3)] = 0.05;
        x[vm.sc_cap(3)] = 0.01;
        let mut ax = vec![0.0; data.l.len()];
        data.a.matvec(&x, &mut ax);
        let violated = (0..ax.len()).any(|i| ax[i] > data.u[i] + 1e-12);
        assert!(violated);
        // raising the capacity above the setting clears the coupling rows
        x[vm.sc_cap(3)] = 0.06;
        data.a.matvec(&x, &mut ax);
        for (i, lbl) in qp.ineq_labels.iter().enumerate() {
            if matches!(lbl, RowLabel::CoupleScUpper { .. } | RowLabel::CoupleScLower { .. }) {
                let r = qp.eq_rhs.len() + i;
                assert!(ax[r] <= data.u[r] + 1e-12, "{lbl} violated");
            }
        }
    }

    #[test]
    fn dump_is_parseable_text() {
        let net = parse_case(CASE30).unwrap();
        let scn = Scenario::base_case(&net);
        let state = pf_state(&net, &scn);
        let cfg = PlanConfig::default();
        let opts = AssembleOptions::planning(&net, &cfg);
        let qp = assemble_qp(&net, &[scn], &[state], &PrevPlan::default(), &cfg, &opts).unwrap();
        let mut buf = Vec::new();
        qp.dump_triplets(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().count() > 100);
        assert!(text.contains("A_eq"));
    }
}
