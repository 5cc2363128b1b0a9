//! End-to-end planner checks on the mosaic benchmark family, cross-checked
//! against the brute-force assignment oracle.

use std::collections::BTreeSet;

use tandem_core::domain::{generate_mosaic, mosaic_preset, GenerationConfig, ProblemSpec};
use tandem_core::model::{CostVector, WorkerId};
use tandem_core::oracle;
use tandem_core::planner::{
    self, detect_flaws, estimate_fd, refine, Budget, Compiled, FlawKind, Plan, PlanMode,
    PlanOutcome,
};

fn mosaic4_midpoint() -> ProblemSpec {
    let spec = mosaic_preset(4).unwrap();
    let config = tandem_core::domain::preset_config(4, true);
    generate_mosaic(&spec, &config, 0).unwrap().problem
}

fn solve(problem: &ProblemSpec, mode: PlanMode) -> Plan {
    match planner::synthesize_plan(problem, mode, Budget::default()).unwrap() {
        PlanOutcome::Solved(plan) => plan,
        other => panic!("expected a solution, got {other:?}"),
    }
}

#[test]
fn mosaic4_flexible_solution_is_flaw_free_and_valid() {
    let problem = mosaic4_midpoint();
    let plan = solve(&problem, PlanMode::Flexible);
    planner::validate_solution(&plan, &problem).unwrap();
    // every task assigned exactly once
    assert_eq!(plan.assignment.len(), 4);
    assert_eq!(plan.assignment["PickPlace_A2"], WorkerId::Robot);
    assert_eq!(plan.assignment["PickPlace_B1"], WorkerId::Human);
}

#[test]
fn mosaic4_solution_cost_is_oracle_pareto_optimal() {
    let problem = mosaic4_midpoint();
    let plan = solve(&problem, PlanMode::Flexible);

    // Score the planner's solution in the oracle's own model: assignment
    // plus the realized overlap windows of the earliest schedule.
    let scored = score_in_oracle_model(&plan, &problem);
    let pareto = oracle::oracle_pareto(&problem.tasks, &problem.synergy, 4).unwrap();
    assert!(!pareto.is_empty());
    for (_, c) in &pareto {
        assert!(
            !(c.f_d < scored.f_d && c.f_s < scored.f_s),
            "oracle member ({}, {}) dominates the planner solution ({}, {})",
            c.f_d,
            c.f_s,
            scored.f_d,
            scored.f_s
        );
    }
    let selection = oracle::pareto_selection(&pareto).unwrap();
    assert!(
        (scored.f_d - selection.1.f_d).abs() <= 1e-9,
        "planner {} vs oracle selection {}",
        scored.f_d,
        selection.1.f_d
    );
}

/// Eq-style scoring of a plan: duration = sum of assigned midpoint
/// durations; synergy = coefficients of pairs that actually overlap in the
/// earliest schedule.
fn score_in_oracle_model(plan: &Plan, problem: &ProblemSpec) -> CostVector {
    let mut f_d = 0.0;
    for (task, worker) in &plan.assignment {
        let def = problem.task(task).unwrap();
        f_d += def.duration_for(*worker).unwrap().midpoint();
    }
    let mut f_s = 0.0;
    for r in plan.worker_tokens(WorkerId::Robot) {
        for h in plan.worker_tokens(WorkerId::Human) {
            let overlap = r.dispatch < h.completion - 1e-9 && h.dispatch < r.completion - 1e-9;
            if overlap {
                match problem.synergy.lookup(&r.value, &h.value).unwrap() {
                    tandem_core::model::Synergy::Coefficient(s) => f_s += s,
                    tandem_core::model::Synergy::Incompatible => f_s = f64::INFINITY,
                }
            }
        }
    }
    CostVector::new(f_d, f_s)
}

#[test]
fn planner_and_oracle_agree_across_modes() {
    // Rigid mode on midpoint durations plans the same assignment space;
    // its solution must also be oracle-consistent.
    let problem = mosaic4_midpoint();
    let plan = solve(&problem, PlanMode::Rigid);
    planner::validate_solution(&plan, &problem).unwrap();
    let scored = score_in_oracle_model(&plan, &problem);
    let pareto = oracle::oracle_pareto(&problem.tasks, &problem.synergy, 4).unwrap();
    for (_, c) in &pareto {
        assert!(!(c.f_d < scored.f_d && c.f_s < scored.f_s));
    }
}

#[test]
fn refine_branches_once_per_capable_worker() {
    let problem = mosaic4_midpoint();
    let compiled = Compiled::new(&problem).unwrap();
    let root = planner::initialize(&compiled, PlanMode::Flexible).unwrap();
    let flaws = planner::choose_flaws(detect_flaws(&root, &compiled), &compiled);
    // Planning flaws come first; find one for a blue task and the orange.
    let find = |task: &str| {
        flaws
            .iter()
            .find(|f| match &f.kind {
                FlawKind::Planning {
                    rule, requirement, ..
                } => problem.rules[*rule].requirements[*requirement].value == task,
                _ => false,
            })
            .cloned()
            .unwrap_or_else(|| panic!("no planning flaw for {task}"))
    };
    let blue = find("PickPlace_A1");
    let children = refine(&root, &compiled, &blue, PlanMode::Flexible).unwrap();
    assert_eq!(children.len(), 2, "blue task branches over both workers");

    let orange = find("PickPlace_A2");
    let children = refine(&root, &compiled, &orange, PlanMode::Flexible).unwrap();
    assert_eq!(children.len(), 1, "orange task is robot-only");

    let white = find("PickPlace_B1");
    let children = refine(&root, &compiled, &white, PlanMode::Flexible).unwrap();
    assert_eq!(children.len(), 1, "white task is human-only");
}

#[test]
fn detected_flaws_match_an_independent_rescan() {
    let problem = mosaic4_midpoint();
    let compiled = Compiled::new(&problem).unwrap();
    let root = planner::initialize(&compiled, PlanMode::Flexible).unwrap();
    let flaws = detect_flaws(&root, &compiled);

    // Independent re-scan: every (production token, requirement) pair is
    // unsupported at the root, and every same-timeline token pair with
    // nothing ordering it may overlap.
    let production_tokens = 2; // DoRow_1, DoRow_2
    let expected_planning: usize = problem.rules.iter().map(|r| r.requirements.len()).sum();
    let planning = flaws
        .iter()
        .filter(|f| matches!(f.kind, FlawKind::Planning { .. }))
        .count();
    let scheduling = flaws
        .iter()
        .filter(|f| matches!(f.kind, FlawKind::Scheduling { .. }))
        .count();
    assert_eq!(planning, expected_planning);
    assert_eq!(scheduling, production_tokens * (production_tokens - 1) / 2);
}

#[test]
fn root_duration_estimate_matches_the_exhaustive_bound() {
    let problem = mosaic4_midpoint();
    let compiled = Compiled::new(&problem).unwrap();
    let root = planner::initialize(&compiled, PlanMode::Flexible).unwrap();
    let fd = estimate_fd(&root, &compiled).unwrap();
    // Independent bound: the worst completion over workers if every task
    // capable for that worker were given to it at worst-case duration.
    let mut bound = 0.0f64;
    for w in [WorkerId::Human, WorkerId::Robot] {
        let total: f64 = problem
            .tasks
            .iter()
            .filter(|t| t.allowed_workers.contains(&w))
            .map(|t| t.duration_for(w).unwrap().max())
            .sum();
        bound = bound.max(total);
    }
    assert!((fd - bound).abs() <= 1e-9, "fd {fd} vs bound {bound}");
}

#[test]
fn solution_fd_equals_earliest_schedule_makespan() {
    let problem = mosaic4_midpoint();
    let plan = solve(&problem, PlanMode::Flexible);
    assert!(
        (plan.cost.f_d - plan.makespan()).abs() <= 1e-9,
        "fd {} vs makespan {}",
        plan.cost.f_d,
        plan.makespan()
    );
}

#[test]
fn nine_cube_flexible_solves_and_validates() {
    let spec = mosaic_preset(9).unwrap();
    let generated = generate_mosaic(&spec, &GenerationConfig::default(), 7).unwrap();
    let plan = solve(&generated.problem, PlanMode::Flexible);
    planner::validate_solution(&plan, &generated.problem).unwrap();
    assert_eq!(plan.assignment.len(), 9);
    // All nine tasks land on exactly one worker timeline token.
    let placed: usize = [WorkerId::Human, WorkerId::Robot]
        .iter()
        .map(|w| plan.worker_tokens(*w).count())
        .sum();
    assert_eq!(placed, 9);
}

#[test]
fn synthesis_is_deterministic() {
    let problem = mosaic4_midpoint();
    let a = solve(&problem, PlanMode::Flexible);
    let b = solve(&problem, PlanMode::Flexible);
    assert_eq!(a, b);
}

#[test]
fn zero_budget_times_out() {
    let problem = mosaic4_midpoint();
    let mut expired = || true;
    let budget = Budget {
        max_expansions: None,
        should_stop: Some(&mut expired),
    };
    match planner::synthesize_plan(&problem, PlanMode::Flexible, budget).unwrap() {
        PlanOutcome::Timeout(stats) => assert_eq!(stats.expansions, 0),
        other => panic!("expected timeout, got {other:?}"),
    }
}

#[test]
fn impossible_horizon_is_infeasible() {
    let mut problem = mosaic4_midpoint();
    problem.horizon = 1.0;
    for sv in &mut problem.state_variables {
        for d in sv.durations.values_mut() {
            if d.max() > 1.0 && sv.id != "process" {
                // keep worker durations as-is: they exceed the horizon
            }
        }
        if sv.id == "process" {
            for v in sv.values.clone() {
                sv.durations
                    .insert(v, tandem_core::model::DurationInterval::new(0.0, 1.0).unwrap());
            }
        }
    }
    match planner::synthesize_plan(&problem, PlanMode::Flexible, Budget::default()) {
        Ok(PlanOutcome::Infeasible(_)) => {}
        Err(planner::PlanError::InconsistentPlan) => {}
        other => panic!("expected infeasibility, got {other:?}"),
    }
}

#[test]
fn task_without_placable_worker_is_infeasible() {
    // Hand-built inconsistency: the human state variable does not declare
    // the white task, so no resolver can support it.
    let mut problem = mosaic4_midpoint();
    for sv in &mut problem.state_variables {
        if sv.id == "human" {
            sv.values.retain(|v| v != "PickPlace_B1");
            sv.transitions.remove("PickPlace_B1");
            for succ in sv.transitions.values_mut() {
                succ.remove("PickPlace_B1");
            }
            sv.durations.remove("PickPlace_B1");
            sv.controllability.remove("PickPlace_B1");
        }
    }
    match planner::synthesize_plan(&problem, PlanMode::Flexible, Budget::default()).unwrap() {
        PlanOutcome::Infeasible(_) => {}
        other => panic!("expected infeasible, got {other:?}"),
    }
}

#[test]
fn every_solution_leaves_zero_flaws() {
    let spec = mosaic_preset(9).unwrap();
    let generated = generate_mosaic(&spec, &GenerationConfig::default(), 3).unwrap();
    let problem = &generated.problem;
    let plan = solve(problem, PlanMode::Flexible);
    // Reconstruct a partial plan equivalent of the solution is internal;
    // instead, replay the public closure property: the validity checker
    // passes and all rule requirements are supported.
    planner::validate_solution(&plan, problem).unwrap();
    // Worker timelines execute exclusively (no overlap) per the checker;
    // additionally the production timeline must cover all rows.
    let process = plan.timeline("process").unwrap();
    let values: BTreeSet<&str> = process.tokens.iter().map(|t| t.value.as_str()).collect();
    assert_eq!(values.len(), 3);
}
