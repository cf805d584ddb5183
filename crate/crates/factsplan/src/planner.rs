//! Planning orchestration: iterate {linearize → joint QP → per-scenario
//! AC-PF re-projection} to convergence, then prune marginal devices and
//! re-verify every scenario.
//!
//! The same loop, with investment columns removed and optionally without
//! thermal rows, doubles as the ACOPF engine used by the initializer.

use crate::acpf::{self, DispatchSpec, PfError, SystemState};
use crate::grid::Network;
use crate::linearize::{
    assemble_qp, AssembleOptions, CandidateSets, LinError, PlanConfig, PrevPlan,
};
use crate::qp::{self, QpStatus};
use crate::scenarios::Scenario;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("QP infeasible at outer iteration {iter}; most active rows: {rows:?}")]
    QpInfeasible { iter: usize, rows: Vec<String> },
    #[error("QP solver stopped with {status:?} at outer iteration {iter} (primal {primal:.1e}, dual {dual:.1e})")]
    QpNotSolved { iter: usize, status: QpStatus, primal: f64, dual: f64 },
    #[error("power flow diverged in scenario {scenario} after trust-region retries")]
    PfDiverged {
        scenario: usize,
        #[source]
        source: PfError,
    },
    #[error("insufficient generation capacity: ACOPF infeasible even at load scale {0}")]
    InsufficientCapacity(f64),
    #[error(transparent)]
    Lin(#[from] LinError),
    #[error(transparent)]
    Pf(#[from] PfError),
}

// ---------------------------------------------------------------------------
// feasibility bookkeeping
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    VoltageHigh,
    VoltageLow,
    GenPHigh,
    GenPLow,
    GenQHigh,
    GenQLow,
    LineFlow,
}

/// One violated operating limit. `element` is a dense bus / generator /
/// line-end index (line ends: `0..n_branch` from, `n_branch..2·n_branch`
/// to). Magnitudes are per-unit overshoots.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub element: usize,
    pub magnitude: f64,
}

/// All operating-limit violations of a state: voltage boxes, generator
/// boxes, line apparent-power limits. Empty list ⇔ feasible.
pub fn check_feasibility(net: &Network, state: &SystemState) -> Vec<Violation> {
    let mut out = Vec::new();
    let eps = 1e-12;
    for i in 0..net.n_bus() {
        if state.v[i] > net.pu.v_max[i] + eps {
            out.push(Violation {
                kind: ViolationKind::VoltageHigh,
                element: i,
                magnitude: state.v[i] - net.pu.v_max[i],
            });
        } else if state.v[i] < net.pu.v_min[i] - eps {
            out.push(Violation {
                kind: ViolationKind::VoltageLow,
                element: i,
                magnitude: net.pu.v_min[i] - state.v[i],
            });
        }
    }
    for g in 0..net.n_gen() {
        if state.p_gen[g] > net.pu.p_max[g] + eps {
            out.push(Violation {
                kind: ViolationKind::GenPHigh,
                element: g,
                magnitude: state.p_gen[g] - net.pu.p_max[g],
            });
        } else if state.p_gen[g] < net.pu.p_min[g] - eps {
            out.push(Violation {
                kind: ViolationKind::GenPLow,
                element: g,
                magnitude: net.pu.p_min[g] - state.p_gen[g],
            });
        }
        if state.q_gen[g] > net.pu.q_max[g] + eps {
            out.push(Violation {
                kind: ViolationKind::GenQHigh,
                element: g,
                magnitude: state.q_gen[g] - net.pu.q_max[g],
            });
        } else if state.q_gen[g] < net.pu.q_min[g] - eps {
            out.push(Violation {
                kind: ViolationKind::GenQLow,
                element: g,
                magnitude: net.pu.q_min[g] - state.q_gen[g],
            });
        }
    }
    if let Ok(sq) = acpf::apparent_sq(net, state) {
        let nl = net.n_branch();
        for end in 0..2 * nl {
            let rate = net.pu.s_rate[end % nl];
            if rate <= 0.0 {
                continue;
            }
            let s = sq[end].sqrt();
            if s > rate + eps {
                out.push(Violation { kind: ViolationKind::LineFlow, element: end, magnitude: s - rate });
            }
        }
    }
    out
}

fn max_violation(violations: &[Violation], thermal: bool) -> f64 {
    violations
        .iter()
        .filter(|v| thermal || v.kind != ViolationKind::LineFlow)
        .map(|v| v.magnitude)
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// objective evaluation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CostBreakdown {
    /// $ spent on installed capacities
    pub investment: f64,
    /// probability-weighted generation cost, $/h
    pub expected_hourly: f64,
    /// investment + n_years of operation, $
    pub horizon_total: f64,
}

/// Cost breakdown for given capacities and per-scenario dispatches.
pub fn evaluate_objective(
    net: &Network,
    sc_capacity: &[f64],
    svc_capacity: &[f64],
    states: &[SystemState],
    scenarios: &[Scenario],
    cfg: &PlanConfig,
) -> CostBreakdown {
    let investment = cfg.c_sc * sc_capacity.iter().sum::<f64>()
        + cfg.c_svc * net.base_mva * svc_capacity.iter().sum::<f64>();
    let mut expected_hourly = 0.0;
    for (scn, state) in scenarios.iter().zip(states) {
        let hourly: f64 =
            (0..net.n_gen()).map(|g| net.gen(g).cost.eval_pu(state.p_gen[g], net.base_mva)).sum();
        expected_hourly += scn.hours_per_year / 8760.0 * hourly;
    }
    CostBreakdown {
        investment,
        expected_hourly,
        horizon_total: investment + cfg.n_years * 8760.0 * expected_hourly,
    }
}

// ---------------------------------------------------------------------------
// the sequential linearize–QP–PF loop
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub objective: f64,
    pub investment: f64,
    pub expected_hourly: f64,
    pub max_violation: f64,
    pub qp_status: String,
    pub qp_iterations: usize,
    pub pf_iterations: usize,
    pub step_norm: f64,
}

pub(crate) struct LoopOptions {
    pub thermal: bool,
    /// per-scenario objective weights; None = n_years·T_a from the config
    pub weights: Option<Vec<f64>>,
    pub candidates: CandidateSets,
}

pub(crate) struct LoopResult {
    pub states: Vec<SystemState>,
    pub sc_capacity: Vec<f64>,
    pub svc_capacity: Vec<f64>,
    pub trace: Vec<IterRecord>,
    pub converged: bool,
}

pub(crate) fn sqp_loop(
    net: &Network,
    scenarios: &[Scenario],
    states0: Vec<SystemState>,
    cfg: &PlanConfig,
    opts: &LoopOptions,
) -> Result<LoopResult, PlanError> {
    let mut states = states0;
    let mut sc_cap = vec![0.0; net.n_branch()];
    let mut svc_cap = vec![0.0; net.n_bus()];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut best: Option<(f64, Vec<SystemState>, Vec<f64>, Vec<f64>)> = None;
    let mut prev_obj = f64::INFINITY;

    let weights = opts.weights.clone();
    let loads: Vec<acpf::Loads> = scenarios.iter().map(|s| s.loads()).collect();

    for iter in 0..cfg.max_outer_iter {
        let mut trust_scale = 1.0;
        let mut attempt = 0usize;
        let (new_states, caps, qp_status, qp_iters, pf_iters, step_norm) = loop {
            let asm = AssembleOptions {
                candidates: opts.candidates.clone(),
                thermal_limits: opts.thermal,
                weights: weights.clone(),
                trust_scale,
            };
            let prev = PrevPlan { sc_capacity: sc_cap.clone(), svc_capacity: svc_cap.clone() };
            let problem = assemble_qp(net, scenarios, &states, &prev, cfg, &asm)?;
            let (data, eq_rows) = problem.to_qp_data();
            let settings = cfg.qp.clone();
            let sol = qp::solve(&data, &settings);
            match sol.status {
                QpStatus::Optimal => {}
                QpStatus::MaxIter if sol.primal_res < 1e-4 && sol.dual_res < 1e-2 => {
                    // accept a slightly loose step; the PF projection and
                    // the next linearization absorb the slack
                }
                QpStatus::PrimalInfeasible => {
                    let rows = infeasible_rows(&problem, &sol, eq_rows);
                    return Err(PlanError::QpInfeasible { iter, rows });
                }
                status => {
                    return Err(PlanError::QpNotSolved {
                        iter,
                        status,
                        primal: sol.primal_res,
                        dual: sol.dual_res,
                    })
                }
            }

            // apply deviations and re-project every scenario onto AC-PF
            let vm = &problem.var_map;
            let mut step_norm = 0.0f64;
            let mut proposals: Vec<SystemState> = Vec::with_capacity(states.len());
            for (a, state) in states.iter().enumerate() {
                let mut s = state.clone();
                for i in 0..net.n_bus() {
                    s.v[i] += sol.x[vm.v(a, i)];
                    s.theta[i] += sol.x[vm.theta(a, i)];
                    step_norm = step_norm.max(sol.x[vm.v(a, i)].abs());
                }
                for g in 0..net.n_gen() {
                    s.p_gen[g] += sol.x[vm.p_gen(a, g)];
                    s.q_gen[g] += sol.x[vm.q_gen(a, g)];
                }
                for (k, &l) in vm.sc_cand.iter().enumerate() {
                    s.dx[l] += sol.x[vm.dx(a, k)];
                }
                for (k, &i) in vm.svc_cand.iter().enumerate() {
                    s.dq[i] += sol.x[vm.dq(a, k)];
                }
                proposals.push(s);
            }
            let pf_results: Vec<Result<acpf::PfSolution, PfError>> = proposals
                .par_iter()
                .zip(loads.par_iter())
                .map(|(s, ld)| acpf::solve_pf(net, s, ld, &DispatchSpec::all_gens_pv(net), &cfg.pf))
                .collect();
            let first_err = pf_results.iter().position(|r| r.is_err());
            match pf_results.into_iter().collect::<Result<Vec<_>, _>>() {
                Ok(sols) => {
                    let mut caps_sc = vec![0.0; net.n_branch()];
                    for (k, &l) in vm.sc_cand.iter().enumerate() {
                        caps_sc[l] = sol.x[vm.sc_cap(k)].max(0.0);
                    }
                    let mut caps_svc = vec![0.0; net.n_bus()];
                    for (k, &i) in vm.svc_cand.iter().enumerate() {
                        caps_svc[i] = sol.x[vm.svc_cap(k)].max(0.0);
                    }
                    let pf_iters: usize = sols.iter().map(|s| s.iterations).sum();
                    let new_states: Vec<SystemState> = sols.into_iter().map(|s| s.state).collect();
                    // keep capacities consistent with the projected settings
                    for st in &new_states {
                        for l in 0..net.n_branch() {
                            caps_sc[l] = caps_sc[l].max(st.dx[l].abs());
                        }
                        for i in 0..net.n_bus() {
                            caps_svc[i] = caps_svc[i].max(st.dq[i].abs());
                        }
                    }
                    break (
                        new_states,
                        (caps_sc, caps_svc),
                        format!("{:?}", sol.status),
                        sol.iterations,
                        pf_iters,
                        step_norm,
                    );
                }
                Err(e) => {
                    attempt += 1;
                    if attempt > 3 {
                        let scenario = first_err.unwrap_or(0);
                        return Err(PlanError::PfDiverged { scenario, source: e });
                    }
                    trust_scale *= 0.5;
                }
            }
        };

        states = new_states;
        (sc_cap, svc_cap) = caps;

        // evaluate progress on the projected states
        let per_scen: Vec<Vec<Violation>> =
            states.iter().map(|s| check_feasibility(net, s)).collect();
        let max_viol =
            per_scen.iter().map(|v| max_violation(v, opts.thermal)).fold(0.0, f64::max);
        let cost = match &weights {
            Some(ws) => {
                let invest = cfg.c_sc * sc_cap.iter().sum::<f64>()
                    + cfg.c_svc * net.base_mva * svc_cap.iter().sum::<f64>();
                let op: f64 = scenarios
                    .iter()
                    .zip(&states)
                    .zip(ws)
                    .map(|((_, st), w)| {
                        w * (0..net.n_gen())
                            .map(|g| net.gen(g).cost.eval_pu(st.p_gen[g], net.base_mva))
                            .sum::<f64>()
                    })
                    .sum();
                CostBreakdown {
                    investment: invest,
                    expected_hourly: op / 8760.0,
                    horizon_total: invest + op,
                }
            }
            None => evaluate_objective(net, &sc_cap, &svc_cap, &states, scenarios, cfg),
        };
        let objective = cost.horizon_total;
        trace.push(IterRecord {
            iter,
            objective,
            investment: cost.investment,
            expected_hourly: cost.expected_hourly,
            max_violation: max_viol,
            qp_status,
            qp_iterations: qp_iters,
            pf_iterations: pf_iters,
            step_norm,
        });

        if max_viol < cfg.tol_feas {
            match &best {
                Some((obj, ..)) if *obj <= objective => {}
                _ => best = Some((objective, states.clone(), sc_cap.clone(), svc_cap.clone())),
            }
        }
        let rel_change = (objective - prev_obj).abs() / objective.abs().max(1.0);
        if max_viol < cfg.tol_feas && rel_change < cfg.tol_outer {
            converged = true;
            break;
        }
        prev_obj = objective;
    }

    if !converged {
        if let Some((_, st, sc, svc)) = best {
            return Ok(LoopResult {
                states: st,
                sc_capacity: sc,
                svc_capacity: svc,
                trace,
                converged: false,
            });
        }
    }
    Ok(LoopResult { states, sc_capacity: sc_cap, svc_capacity: svc_cap, trace, converged })
}

/// Rows with the largest infeasibility-certificate weight.
fn infeasible_rows(
    problem: &crate::linearize::QpProblem,
    sol: &qp::QpSolution,
    eq_rows: usize,
) -> Vec<String> {
    let mut weighted: Vec<(f64, usize)> =
        sol.y.iter().enumerate().map(|(i, &v)| (v.abs(), i)).collect();
    weighted.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    weighted
        .iter()
        .take(5)
        .filter(|(w, _)| *w > 0.0)
        .map(|&(_, i)| {
            if i < eq_rows {
                problem.eq_labels[i].to_string()
            } else if i < eq_rows + problem.ineq_labels.len() {
                problem.ineq_labels[i - eq_rows].to_string()
            } else {
                format!("bound {:?}", problem.var_map.decode(i - eq_rows - problem.ineq_labels.len()))
            }
        })
        .collect()
}

/// Single-scenario ACOPF via the same loop, with investment pinned to zero.
/// `thermal = false` drops the line-limit rows (initializer procedure 1).
pub(crate) fn solve_acopf(
    net: &Network,
    scenario: &Scenario,
    start: SystemState,
    cfg: &PlanConfig,
    thermal: bool,
) -> Result<(SystemState, bool), PlanError> {
    let opts = LoopOptions {
        thermal,
        weights: Some(vec![8760.0]),
        candidates: CandidateSets::none(),
    };
    let mut inner = cfg.clone();
    inner.max_outer_iter = cfg.max_outer_iter.max(30);
    let res = sqp_loop(net, std::slice::from_ref(scenario), vec![start], &inner, &opts)?;
    let state = res.states.into_iter().next().expect("one scenario in, one state out");
    Ok((state, res.converged))
}

// ---------------------------------------------------------------------------
// the investment plan
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeviceCount {
    pub svc: usize,
    pub sc: usize,
}

/// Final installed capacities and per-scenario device settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InvestmentPlan {
    /// Δx̄ per dense branch, pu
    pub sc_capacity: Vec<f64>,
    /// ΔQ̄ per dense bus, pu
    pub svc_capacity: Vec<f64>,
    /// per-scenario series settings dx, pu per dense branch
    pub dx: Vec<Vec<f64>>,
    /// per-scenario shunt settings dq, pu per dense bus
    pub dq: Vec<Vec<f64>>,
    pub investment_cost: f64,
    pub expected_operational_cost: f64,
    pub total_cost: f64,
    pub device_count: DeviceCount,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanStatus {
    Converged,
    NotConverged,
}

#[derive(Debug, Clone, Serialize)]
pub struct PlanOutcome {
    pub plan: InvestmentPlan,
    pub status: PlanStatus,
    pub trace: Vec<IterRecord>,
    #[serde(skip)]
    pub states: Vec<SystemState>,
    pub violations_before: Vec<Vec<Violation>>,
    pub violations_after: Vec<Vec<Violation>>,
    /// dense branches with a line-limit violation at initialization
    pub initially_overloaded: Vec<usize>,
}

/// Run the full heuristic: initialize each scenario, iterate the
/// linearize–QP–PF loop, prune marginal devices, and re-verify.
pub fn plan(
    net: &Network,
    scenarios: &[Scenario],
    cfg: &PlanConfig,
) -> Result<PlanOutcome, PlanError> {
    let states0: Vec<SystemState> = scenarios
        .par_iter()
        .map(|s| crate::initializer::initialize(net, s, cfg))
        .collect::<Result<_, _>>()?;

    let violations_before: Vec<Vec<Violation>> =
        states0.iter().map(|s| check_feasibility(net, s)).collect();
    let initially_overloaded: Vec<usize> = {
        let mut set: Vec<usize> = violations_before
            .iter()
            .flatten()
            .filter(|v| v.kind == ViolationKind::LineFlow)
            .map(|v| v.element % net.n_branch())
            .collect();
        set.sort_unstable();
        set.dedup();
        set
    };

    let opts = LoopOptions {
        thermal: true,
        weights: None,
        candidates: CandidateSets::resolve(net, cfg),
    };
    let res = sqp_loop(net, scenarios, states0, cfg, &opts)?;

    // sparsity pruning, then a verification PF per scenario; devices whose
    // removal breaks feasibility are restored
    let (states, sc_cap, svc_cap, pruned_ok) =
        prune_and_verify(net, scenarios, res.states, res.sc_capacity, res.svc_capacity, cfg)?;

    let violations_after: Vec<Vec<Violation>> =
        states.iter().map(|s| check_feasibility(net, s)).collect();
    let max_after = violations_after.iter().map(|v| max_violation(v, true)).fold(0.0, f64::max);

    let cost = evaluate_objective(net, &sc_cap, &svc_cap, &states, scenarios, cfg);
    let device_count = DeviceCount {
        svc: svc_cap.iter().filter(|&&c| c > 0.0).count(),
        sc: sc_cap.iter().filter(|&&c| c > 0.0).count(),
    };
    let plan = InvestmentPlan {
        sc_capacity: sc_cap,
        svc_capacity: svc_cap,
        dx: states.iter().map(|s| s.dx.clone()).collect(),
        dq: states.iter().map(|s| s.dq.clone()).collect(),
        investment_cost: cost.investment,
        expected_operational_cost: cost.expected_hourly,
        total_cost: cost.horizon_total,
        device_count,
    };
    let status = if res.converged && pruned_ok && max_after < cfg.tol_feas {
        PlanStatus::Converged
    } else {
        PlanStatus::NotConverged
    };
    Ok(PlanOutcome {
        plan,
        status,
        trace: res.trace,
        states,
        violations_before,
        violations_after,
        initially_overloaded,
    })
}

#[allow(clippy::type_complexity)]
fn prune_and_verify(
    net: &Network,
    scenarios: &[Scenario],
    states: Vec<SystemState>,
    sc_cap: Vec<f64>,
    svc_cap: Vec<f64>,
    cfg: &PlanConfig,
) -> Result<(Vec<SystemState>, Vec<f64>, Vec<f64>, bool), PlanError> {
    let svc_thresh = cfg.sparsity_threshold_svc / net.base_mva;
    let mut keep_sc: Vec<bool> = (0..net.n_branch())
        .map(|l| sc_cap[l] >= cfg.sparsity_threshold_sc * net.pu.x0[l].abs() && sc_cap[l] > 0.0)
        .collect();
    let mut keep_svc: Vec<bool> = (0..net.n_bus()).map(|i| svc_cap[i] >= svc_thresh).collect();

    let apply = |keep_sc: &[bool], keep_svc: &[bool]| -> Result<(Vec<SystemState>, f64), PlanError> {
        let pruned: Vec<Result<acpf::PfSolution, PfError>> = states
            .par_iter()
            .zip(scenarios.par_iter())
            .map(|(st, scn)| {
                let mut s = st.clone();
                for l in 0..net.n_branch() {
                    if !keep_sc[l] {
                        s.dx[l] = 0.0;
                    }
                }
                for i in 0..net.n_bus() {
                    if !keep_svc[i] {
                        s.dq[i] = 0.0;
                    }
                }
                acpf::solve_pf(net, &s, &scn.loads(), &DispatchSpec::all_gens_pv(net), &cfg.pf)
            })
            .collect();
        let sols = pruned
            .into_iter()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| PlanError::PfDiverged { scenario: 0, source: e })?;
        let new_states: Vec<SystemState> = sols.into_iter().map(|s| s.state).collect();
        let worst = new_states
            .iter()
            .map(|s| max_violation(&check_feasibility(net, s), true))
            .fold(0.0, f64::max);
        Ok((new_states, worst))
    };

    let (pruned_states, worst) = apply(&keep_sc, &keep_svc)?;
    if worst < cfg.tol_feas {
        let sc = (0..net.n_branch()).map(|l| if keep_sc[l] { sc_cap[l] } else { 0.0 }).collect();
        let svc = (0..net.n_bus()).map(|i| if keep_svc[i] { svc_cap[i] } else { 0.0 }).collect();
        return Ok((pruned_states, sc, svc, true));
    }
    // pruning broke feasibility: restore every pruned device with nonzero
    // capacity and settle for the unpruned plan
    for l in 0..net.n_branch() {
        keep_sc[l] = sc_cap[l] > 0.0;
    }
    for i in 0..net.n_bus() {
        keep_svc[i] = svc_cap[i] > 0.0;
    }
    let (restored_states, worst) = apply(&keep_sc, &keep_svc)?;
    Ok((restored_states, sc_cap, svc_cap, worst < cfg.tol_feas))
}

// ---------------------------------------------------------------------------
// report and graph output
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvcEntry {
    pub bus: i64,
    pub capacity_mvar: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScEntry {
    pub from: i64,
    pub to: i64,
    pub capacity_pu: f64,
    pub capacity_pct_x0: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SettingEntry {
    pub element: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSettings {
    pub dx: Vec<SettingEntry>,
    pub dq: Vec<SettingEntry>,
}

/// The versioned JSON plan report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub schema: u32,
    pub status: PlanStatus,
    pub svc: Vec<SvcEntry>,
    pub sc: Vec<ScEntry>,
    pub investment_cost: f64,
    pub expected_operational_cost: f64,
    pub total_cost: f64,
    pub device_count: DeviceCount,
    pub settings: Vec<ScenarioSettings>,
    pub violations_before: Vec<Vec<Violation>>,
    pub violations_after: Vec<Vec<Violation>>,
    pub trace: Vec<IterRecord>,
}

pub fn build_report(net: &Network, outcome: &PlanOutcome) -> Report {
    let plan = &outcome.plan;
    let svc = (0..net.n_bus())
        .filter(|&i| plan.svc_capacity[i] > 0.0)
        .map(|i| SvcEntry {
            bus: net.bus(i).id,
            capacity_mvar: plan.svc_capacity[i] * net.base_mva,
        })
        .collect();
    let sc = (0..net.n_branch())
        .filter(|&l| plan.sc_capacity[l] > 0.0)
        .map(|l| ScEntry {
            from: net.branch(l).from,
            to: net.branch(l).to,
            capacity_pu: plan.sc_capacity[l],
            capacity_pct_x0: 100.0 * plan.sc_capacity[l] / net.pu.x0[l].abs(),
        })
        .collect();
    let settings = plan
        .dx
        .iter()
        .zip(&plan.dq)
        .map(|(dx, dq)| ScenarioSettings {
            dx: dx
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(element, &value)| SettingEntry { element, value })
                .collect(),
            dq: dq
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(element, &value)| SettingEntry { element, value })
                .collect(),
        })
        .collect();
    Report {
        schema: 1,
        status: outcome.status,
        svc,
        sc,
        investment_cost: plan.investment_cost,
        expected_operational_cost: plan.expected_operational_cost,
        total_cost: plan.total_cost,
        device_count: plan.device_count.clone(),
        settings,
        violations_before: outcome.violations_before.clone(),
        violations_after: outcome.violations_after.clone(),
        trace: outcome.trace.clone(),
    }
}

/// Graphviz export: buses as nodes (SVC installations annotated with
/// `svc_mvar`), branches as edges (`sc_pct` for installed SCs,
/// `overloaded` for lines violated at initialization).
pub fn to_dot(net: &Network, outcome: &PlanOutcome) -> String {
    let plan = &outcome.plan;
    let mut s = String::from("graph grid {\n  node [shape=circle];\n");
    for i in 0..net.n_bus() {
        let bus = net.bus(i);
        let mut attrs = Vec::new();
        if net.is_gen_bus(i) {
            attrs.push("shape=square".to_string());
        }
        if net.pu.p_load[i] > 0.0 {
            attrs.push("style=filled".to_string());
            attrs.push("fillcolor=yellow".to_string());
        }
        if plan.svc_capacity[i] > 0.0 {
            attrs.push(format!("svc_mvar=\"{:.3}\"", plan.svc_capacity[i] * net.base_mva));
            attrs.push("color=green".to_string());
            attrs.push("penwidth=3".to_string());
        }
        s.push_str(&format!("  b{} [label=\"{}\"{}{}];\n",
            bus.id,
            bus.id,
            if attrs.is_empty() { "" } else { ", " },
            attrs.join(", ")
        ));
    }
    for l in 0..net.n_branch() {
        let br = net.branch(l);
        let mut attrs = Vec::new();
        if plan.sc_capacity[l] > 0.0 {
            attrs.push(format!(
                "sc_pct=\"{:.2}\"",
                100.0 * plan.sc_capacity[l] / net.pu.x0[l].abs()
            ));
            attrs.push("color=blue".into());
            attrs.push("style=dashed".into());
        }
        if outcome.initially_overloaded.contains(&l) {
            attrs.push("overloaded=true".into());
            attrs.push("penwidth=2".into());
        }
        s.push_str(&format!(
            "  b{} -- b{}{};\n",
            br.from,
            br.to,
            if attrs.is_empty() { String::new() } else { format!(" [{}]", attrs.join(", ")) }
        ));
    }
    s.push_str("}\n");
    s
}
