//! Timeline-based plan synthesis.
//!
//! The search refines partial plans: detect flaws (missing rule support or
//! possibly-overlapping tokens), rank them by the state-variable hierarchy
//! induced by the rules, branch over the resolvers of the best flaw, and
//! pick the next partial plan from a Pareto fringe ordered by synergy cost
//! first, duration cost second. A plan is a solution when it has no flaws.
//!
//! Cost estimates combine a cost term over placed tokens with a heuristic
//! term over projections (hypothetical completions of a timeline). The
//! projection used is the single worst-case bag: every still-unassigned
//! task the timeline's worker could take, at its scheduled duration. That
//! makes the duration estimate an upper bound that tightens as assignment
//! decisions are made.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::rc::Rc;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::domain::ProblemSpec;
use crate::model::{
    ControllabilityTag, CostVector, DurationInterval, StateVariable, TaskDef,
    TemporalRelation, Token, WorkerId,
};
use crate::temporal::{PointId, Stn, StnConstraint, TIME_EPS};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("plan temporal network is inconsistent")]
    InconsistentPlan,
    #[error("fringe is empty")]
    EmptyFringe,
    #[error("solution failed validity check: {0}")]
    InvalidSolution(String),
    #[error("problem is malformed: {0}")]
    BadProblem(String),
}

/// Planner mode. `Rigid` collapses the duration interval of every
/// uncontrollable / partially controllable value to its midpoint before
/// planning, reproducing planners without temporal flexibility; container
/// (controllable) values keep their flexible spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanMode {
    Flexible,
    Rigid,
}

/// A flaw: something that keeps a partial plan from being a solution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FlawKind {
    /// A trigger token lacks support for one rule requirement.
    Planning {
        trigger: u32,
        rule: usize,
        requirement: usize,
    },
    /// Two tokens of one timeline may overlap in time.
    Scheduling { first: u32, second: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Flaw {
    pub kind: FlawKind,
    pub state_variable: String,
}

/// A resolver: the smallest refinement step applied to a partial plan.
#[derive(Debug, Clone, PartialEq)]
pub enum Resolver {
    /// Add a supporting token on `state_variable` and bind the assignment.
    AddToken {
        state_variable: String,
        value: String,
        worker: Option<WorkerId>,
        trigger: u32,
        rule: usize,
        requirement: usize,
        relation: TemporalRelation,
    },
    /// Support the requirement with an already-placed token.
    LinkSupport {
        existing: u32,
        trigger: u32,
        rule: usize,
        requirement: usize,
        relation: TemporalRelation,
    },
    /// Order two possibly-overlapping tokens of one timeline.
    OrderTokens { first: u32, second: u32 },
}

#[derive(Debug, Clone, PartialEq)]
struct TokenRec {
    id: u32,
    sv: String,
    value: String,
    tag: ControllabilityTag,
    duration: DurationInterval,
    task_idx: Option<u32>,
}

/// A materialized partial plan: timelines, temporal network, assignment,
/// and resolved support links. Snapshots are cloned when the search
/// branches, so siblings never share mutable state.
#[derive(Debug, Clone)]
pub struct PartialPlan {
    tokens: Vec<TokenRec>,
    timelines: BTreeMap<String, Vec<u32>>,
    stn: Stn,
    assignment: BTreeMap<String, WorkerId>,
    support: BTreeSet<(u32, usize, usize)>,
}

impl PartialPlan {
    pub fn assignment(&self) -> &BTreeMap<String, WorkerId> {
        &self.assignment
    }

    pub fn stn(&self) -> &Stn {
        &self.stn
    }

    fn token_points(&self, id: u32) -> (PointId, PointId) {
        self.stn.token_points(id).expect("token registered in stn")
    }

    fn may_overlap(&self, a: u32, b: u32) -> bool {
        let (sa, ea) = self.token_points(a);
        let (sb, eb) = self.token_points(b);
        !self.stn.entails_before(ea, sb) && !self.stn.entails_before(eb, sa)
    }

    /// Tightest feasible duration of a placed token after propagation.
    fn realized_duration(&self, id: u32) -> f64 {
        let (s, e) = self.token_points(id);
        self.stn.min_distance(s, e)
    }
}

/// Problem view precompiled for the search loop: hierarchy ranks, rule
/// triggers, task indices, and a dense synergy table.
pub struct Compiled<'p> {
    problem: &'p ProblemSpec,
    production_sv: String,
    sv_rank: BTreeMap<String, u8>,
    rules_by_trigger: BTreeMap<(String, String), Vec<usize>>,
    task_idx: BTreeMap<String, u32>,
    /// `synergy_dense[r * n + h]`: None = incompatible.
    synergy_dense: Vec<Option<f64>>,
    worst_row: Vec<Option<f64>>,
    scheduled_duration: BTreeMap<(String, String), f64>,
}

impl<'p> Compiled<'p> {
    pub fn new(problem: &'p ProblemSpec) -> Result<Self, PlanError> {
        let production_sv = problem
            .production_sv()
            .ok_or_else(|| PlanError::BadProblem("no production state variable".to_string()))?
            .id
            .clone();

        // Hierarchy: state variables appearing in rule triggers outrank
        // those appearing only in rule bodies, which outrank the rest.
        let mut trigger_svs = BTreeSet::new();
        let mut body_svs = BTreeSet::new();
        let mut rules_by_trigger: BTreeMap<(String, String), Vec<usize>> = BTreeMap::new();
        for (idx, rule) in problem.rules.iter().enumerate() {
            trigger_svs.insert(rule.trigger.0.clone());
            rules_by_trigger
                .entry(rule.trigger.clone())
                .or_default()
                .push(idx);
            for req in &rule.requirements {
                match &req.state_variable {
                    Some(sv) => {
                        body_svs.insert(sv.clone());
                    }
                    None => {
                        if let Some(task) = problem.task(&req.value) {
                            for w in &task.allowed_workers {
                                if let Some(sv) = problem.worker_sv(*w) {
                                    body_svs.insert(sv.id.clone());
                                }
                            }
                        }
                    }
                }
            }
        }
        let mut sv_rank = BTreeMap::new();
        for sv in &problem.state_variables {
            let rank = if trigger_svs.contains(&sv.id) {
                0
            } else if body_svs.contains(&sv.id) {
                1
            } else {
                2
            };
            sv_rank.insert(sv.id.clone(), rank);
        }

        let task_idx: BTreeMap<String, u32> = problem
            .tasks
            .iter()
            .enumerate()
            .map(|(i, t)| (t.id.clone(), i as u32))
            .collect();
        let n = problem.tasks.len();
        let mut synergy_dense = vec![None; n * n];
        for (r, h, s) in problem.synergy.coefficients() {
            if r == h {
                continue;
            }
            if let (Some(&ri), Some(&hi)) = (task_idx.get(r), task_idx.get(h)) {
                synergy_dense[ri as usize * n + hi as usize] = Some(s);
            }
        }
        let worst_row: Vec<Option<f64>> = (0..n)
            .map(|ri| {
                synergy_dense[ri * n..(ri + 1) * n]
                    .iter()
                    .flatten()
                    .copied()
                    .fold(None, |acc: Option<f64>, s| {
                        Some(acc.map(|a| a.max(s)).unwrap_or(s))
                    })
            })
            .collect();

        // Scheduled duration of (sv, value): the duration a token realizes
        // under worst-case bounding (upper bound for uc/pc, lower for c).
        let mut scheduled_duration = BTreeMap::new();
        for sv in &problem.state_variables {
            for v in &sv.values {
                let d = sv.durations[v];
                let tag = sv.controllability[v];
                let scheduled = match tag {
                    ControllabilityTag::Controllable => d.min(),
                    _ => d.max(),
                };
                scheduled_duration.insert((sv.id.clone(), v.clone()), scheduled);
            }
        }

        Ok(Self {
            problem,
            production_sv,
            sv_rank,
            rules_by_trigger,
            task_idx,
            synergy_dense,
            worst_row,
            scheduled_duration,
        })
    }

    pub fn problem(&self) -> &ProblemSpec {
        self.problem
    }

    fn synergy_of(&self, r: u32, h: u32) -> Option<f64> {
        let n = self.problem.tasks.len();
        self.synergy_dense[r as usize * n + h as usize]
    }

    fn sv(&self, id: &str) -> &StateVariable {
        self.problem
            .state_variable(id)
            .expect("compiled against the same problem")
    }

    fn task(&self, id: &str) -> Option<&TaskDef> {
        self.problem.task(id)
    }
}

/// The initial partial plan: one goal token per production value, nothing
/// scheduled or assigned yet.
pub fn initialize(compiled: &Compiled<'_>, mode: PlanMode) -> Result<PartialPlan, PlanError> {
    let mut plan = PartialPlan {
        tokens: Vec::new(),
        timelines: compiled
            .problem
            .state_variables
            .iter()
            .map(|sv| (sv.id.clone(), Vec::new()))
            .collect(),
        stn: Stn::new(compiled.problem.horizon),
        assignment: BTreeMap::new(),
        support: BTreeSet::new(),
    };
    let production = compiled.sv(&compiled.production_sv).clone();
    for value in &production.values {
        add_token(&mut plan, compiled, &production.id, value, None, mode)?;
    }
    if !plan.stn.is_consistent() {
        return Err(PlanError::InconsistentPlan);
    }
    Ok(plan)
}

fn effective_duration(
    sv: &StateVariable,
    value: &str,
    mode: PlanMode,
) -> (DurationInterval, ControllabilityTag) {
    let d = sv.durations[value];
    let tag = sv.controllability[value];
    match (mode, tag) {
        (PlanMode::Rigid, ControllabilityTag::Uncontrollable)
        | (PlanMode::Rigid, ControllabilityTag::PartiallyControllable) => (d.collapsed(), tag),
        _ => (d, tag),
    }
}

fn add_token(
    plan: &mut PartialPlan,
    compiled: &Compiled<'_>,
    sv_id: &str,
    value: &str,
    worker: Option<WorkerId>,
    mode: PlanMode,
) -> Result<u32, PlanError> {
    let sv = compiled.sv(sv_id);
    let (duration, tag) = effective_duration(sv, value, mode);
    let id = plan.tokens.len() as u32;
    let token = Token {
        id,
        state_variable: sv_id.to_string(),
        value: value.to_string(),
        end_interval: (0.0, compiled.problem.horizon),
        duration_interval: duration,
        tag,
    };
    plan.stn
        .add_token(&token)
        .map_err(|e| PlanError::BadProblem(e.to_string()))?;
    plan.tokens.push(TokenRec {
        id,
        sv: sv_id.to_string(),
        value: value.to_string(),
        tag,
        duration,
        task_idx: compiled.task_idx.get(value).copied(),
    });
    plan.timelines
        .get_mut(sv_id)
        .expect("timeline exists for every state variable")
        .push(id);
    if let Some(w) = worker {
        plan.assignment.insert(value.to_string(), w);
    }
    Ok(id)
}

fn post_relation(
    plan: &mut PartialPlan,
    trigger: u32,
    supporter: u32,
    relation: TemporalRelation,
) {
    let (ts, te) = plan.token_points(trigger);
    let (ys, ye) = plan.token_points(supporter);
    let posts: &[StnConstraint] = match relation {
        TemporalRelation::Contains => &[
            StnConstraint {
                from: ts,
                to: ys,
                lower: 0.0,
                upper: f64::INFINITY,
            },
            StnConstraint {
                from: ye,
                to: te,
                lower: 0.0,
                upper: f64::INFINITY,
            },
        ],
        TemporalRelation::Before => &[StnConstraint {
            from: ye,
            to: ts,
            lower: 0.0,
            upper: f64::INFINITY,
        }],
        TemporalRelation::Meets => &[StnConstraint {
            from: ye,
            to: ts,
            lower: 0.0,
            upper: 0.0,
        }],
    };
    for c in posts {
        plan.stn.add_constraint(*c).expect("points exist");
    }
}

/// Apply one resolver to a cloned plan; `None` when the result is
/// temporally inconsistent.
pub fn apply_resolver(
    plan: &PartialPlan,
    compiled: &Compiled<'_>,
    resolver: &Resolver,
    mode: PlanMode,
) -> Result<Option<PartialPlan>, PlanError> {
    let mut child = plan.clone();
    match resolver {
        Resolver::AddToken {
            state_variable,
            value,
            worker,
            trigger,
            rule,
            requirement,
            relation,
        } => {
            let id = add_token(&mut child, compiled, state_variable, value, *worker, mode)?;
            post_relation(&mut child, *trigger, id, *relation);
            child.support.insert((*trigger, *rule, *requirement));
        }
        Resolver::LinkSupport {
            existing,
            trigger,
            rule,
            requirement,
            relation,
        } => {
            post_relation(&mut child, *trigger, *existing, *relation);
            child.support.insert((*trigger, *rule, *requirement));
        }
        Resolver::OrderTokens { first, second } => {
            let (_, e1) = child.token_points(*first);
            let (s2, _) = child.token_points(*second);
            child
                .stn
                .add_constraint(StnConstraint {
                    from: e1,
                    to: s2,
                    lower: 0.0,
                    upper: f64::INFINITY,
                })
                .expect("points exist");
        }
    }
    if child.stn.is_consistent() {
        Ok(Some(child))
    } else {
        Ok(None)
    }
}

/// Every flaw of the plan: unsupported rule requirements (planning flaws)
/// and same-timeline token pairs whose windows permit overlap (scheduling
/// flaws). Deterministic order: state-variable order, then token ids.
pub fn detect_flaws(plan: &PartialPlan, compiled: &Compiled<'_>) -> Vec<Flaw> {
    let mut flaws = Vec::new();
    for token in &plan.tokens {
        let key = (token.sv.clone(), token.value.clone());
        if let Some(rule_ids) = compiled.rules_by_trigger.get(&key) {
            for &rule in rule_ids {
                let reqs = &compiled.problem.rules[rule].requirements;
                for req_idx in 0..reqs.len() {
                    if !plan.support.contains(&(token.id, rule, req_idx)) {
                        flaws.push(Flaw {
                            kind: FlawKind::Planning {
                                trigger: token.id,
                                rule,
                                requirement: req_idx,
                            },
                            state_variable: token.sv.clone(),
                        });
                    }
                }
            }
        }
    }
    for (sv, ids) in &plan.timelines {
        for (i, &a) in ids.iter().enumerate() {
            for &b in &ids[i + 1..] {
                if plan.may_overlap(a, b) {
                    flaws.push(Flaw {
                        kind: FlawKind::Scheduling {
                            first: a.min(b),
                            second: a.max(b),
                        },
                        state_variable: sv.clone(),
                    });
                }
            }
        }
    }
    flaws
}

fn flaw_sort_key(flaw: &Flaw, compiled: &Compiled<'_>) -> (u8, u8, u32, usize, usize) {
    let rank = compiled.sv_rank.get(&flaw.state_variable).copied().unwrap_or(2);
    match &flaw.kind {
        FlawKind::Planning {
            trigger,
            rule,
            requirement,
        } => (rank, 0, *trigger, *rule, *requirement),
        FlawKind::Scheduling { first, second } => (rank, 1, *first, *second as usize, 0),
    }
}

/// Rank flaws by the rule-induced hierarchy: trigger state variables
/// first, planning before scheduling on ties, then token ids.
pub fn choose_flaws(mut flaws: Vec<Flaw>, compiled: &Compiled<'_>) -> Vec<Flaw> {
    flaws.sort_by_key(|f| flaw_sort_key(f, compiled));
    flaws
}

/// Children of a plan for one flaw: one per applicable resolver, dropping
/// temporally inconsistent results. An already-assigned task is never
/// re-added; its existing token is linked as support instead.
pub fn refine(
    plan: &PartialPlan,
    compiled: &Compiled<'_>,
    flaw: &Flaw,
    mode: PlanMode,
) -> Result<Vec<(Resolver, PartialPlan)>, PlanError> {
    let mut out = Vec::new();
    let mut resolvers: Vec<Resolver> = Vec::new();
    match &flaw.kind {
        FlawKind::Planning {
            trigger,
            rule,
            requirement,
        } => {
            let req = &compiled.problem.rules[*rule].requirements[*requirement];
            let allowed_sv = |sv: &str| match &req.state_variable {
                Some(pinned) => pinned == sv,
                None => true,
            };
            let existing: Vec<u32> = plan
                .tokens
                .iter()
                .filter(|t| t.value == req.value && allowed_sv(&t.sv) && t.id != *trigger)
                .map(|t| t.id)
                .collect();
            if !existing.is_empty() {
                for id in existing {
                    resolvers.push(Resolver::LinkSupport {
                        existing: id,
                        trigger: *trigger,
                        rule: *rule,
                        requirement: *requirement,
                        relation: req.relation,
                    });
                }
            } else {
                match &req.state_variable {
                    Some(pinned) => {
                        let sv = compiled.sv(pinned);
                        if sv.declares(&req.value) {
                            let worker = WorkerId::ALL
                                .into_iter()
                                .find(|w| compiled.problem.worker_sv(*w).map(|s| s.id.as_str()) == Some(pinned.as_str()));
                            resolvers.push(Resolver::AddToken {
                                state_variable: pinned.clone(),
                                value: req.value.clone(),
                                worker,
                                trigger: *trigger,
                                rule: *rule,
                                requirement: *requirement,
                                relation: req.relation,
                            });
                        }
                    }
                    None => {
                        if let Some(task) = compiled.task(&req.value) {
                            if !plan.assignment.contains_key(&task.id) {
                                for w in WorkerId::ALL {
                                    if !task.allowed_workers.contains(&w) {
                                        continue;
                                    }
                                    let sv = match compiled.problem.worker_sv(w) {
                                        Some(sv) if sv.declares(&task.id) => sv,
                                        _ => continue,
                                    };
                                    resolvers.push(Resolver::AddToken {
                                        state_variable: sv.id.clone(),
                                        value: task.id.clone(),
                                        worker: Some(w),
                                        trigger: *trigger,
                                        rule: *rule,
                                        requirement: *requirement,
                                        relation: req.relation,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        FlawKind::Scheduling { first, second } => {
            resolvers.push(Resolver::OrderTokens {
                first: *first,
                second: *second,
            });
            resolvers.push(Resolver::OrderTokens {
                first: *second,
                second: *first,
            });
        }
    }
    for r in resolvers {
        if let Some(child) = apply_resolver(plan, compiled, &r, mode)? {
            out.push((r, child));
        }
    }
    Ok(out)
}

/// Duration objective: per timeline, the placed tokens' realized durations
/// plus the projected duration of the worst-case completion bag; the
/// estimate is the maximum over timelines.
pub fn estimate_fd(plan: &PartialPlan, compiled: &Compiled<'_>) -> Result<f64, PlanError> {
    if !plan.stn.clone().is_consistent() {
        return Err(PlanError::InconsistentPlan);
    }
    let mut worst: f64 = 0.0;
    for (sv_id, ids) in &plan.timelines {
        let placed: f64 = ids.iter().map(|&id| plan.realized_duration(id)).sum();
        let placed_values: BTreeSet<&str> = ids
            .iter()
            .map(|&id| plan.tokens[id as usize].value.as_str())
            .collect();
        let worker = WorkerId::ALL
            .into_iter()
            .find(|w| compiled.problem.worker_sv(*w).map(|s| &s.id) == Some(sv_id));
        let projected: f64 = match worker {
            Some(w) => compiled
                .problem
                .tasks
                .iter()
                .filter(|t| {
                    t.allowed_workers.contains(&w) && !plan.assignment.contains_key(&t.id)
                })
                .map(|t| {
                    compiled
                        .scheduled_duration
                        .get(&(sv_id.clone(), t.id.clone()))
                        .copied()
                        .unwrap_or(0.0)
                })
                .sum(),
            None => compiled
                .sv(sv_id)
                .values
                .iter()
                .filter(|v| !placed_values.contains(v.as_str()))
                .map(|v| compiled.scheduled_duration[&(sv_id.clone(), v.clone())])
                .sum(),
        };
        worst = worst.max(placed + projected);
    }
    Ok(worst)
}

/// Synergy objective: the coefficients of every robot/human token pair
/// whose windows still permit temporal overlap (incompatible pairs push
/// the estimate to infinity), plus the worst-row coefficients of the
/// unassigned robot-capable tasks as the projection term.
pub fn estimate_fs(plan: &PartialPlan, compiled: &Compiled<'_>) -> Result<f64, PlanError> {
    if !plan.stn.clone().is_consistent() {
        return Err(PlanError::InconsistentPlan);
    }
    let robot_ids = plan
        .timelines
        .get(crate::domain::ROBOT_SV)
        .map(|v| v.as_slice())
        .unwrap_or(&[]);
    let human_ids = plan
        .timelines
        .get(crate::domain::HUMAN_SV)
        .map(|v| v.as_slice())
        .unwrap_or(&[]);
    let mut cost = 0.0f64;
    for &r in robot_ids {
        let ri = match plan.tokens[r as usize].task_idx {
            Some(i) => i,
            None => continue,
        };
        for &h in human_ids {
            let hi = match plan.tokens[h as usize].task_idx {
                Some(i) => i,
                None => continue,
            };
            if plan.may_overlap(r, h) {
                match compiled.synergy_of(ri, hi) {
                    Some(s) => cost += s,
                    None => return Ok(f64::INFINITY),
                }
            }
        }
    }
    let heuristic: f64 = compiled
        .problem
        .tasks
        .iter()
        .enumerate()
        .filter(|(_, t)| {
            t.allowed_workers.contains(&WorkerId::Robot) && !plan.assignment.contains_key(&t.id)
        })
        .filter_map(|(i, _)| compiled.worst_row[i])
        .sum();
    Ok(cost + heuristic)
}

pub fn estimate_cost(plan: &PartialPlan, compiled: &Compiled<'_>) -> Result<CostVector, PlanError> {
    Ok(CostVector::new(
        estimate_fd(plan, compiled)?,
        estimate_fs(plan, compiled)?,
    ))
}

/// Admissible makespan bound used to order the fringe on duration ties.
///
/// The worst-case-bag estimate of [`estimate_fd`] is an upper bound: it
/// charges dual-capable tasks to both workers at once, so best-first
/// extraction on it walks into one-sided assignments. Ordering instead
/// uses a lower bound on any completion's makespan: the production span,
/// each worker's placed load plus its forced-only future work, and the
/// two-worker fair share of all remaining work. The first flaw-free plan
/// extracted under a lower bound is duration-optimal within its synergy
/// class.
pub fn guide_fd(plan: &PartialPlan, compiled: &Compiled<'_>) -> f64 {
    let mut production_span = 0.0;
    let mut placed: BTreeMap<WorkerId, f64> = BTreeMap::new();
    for (sv_id, ids) in &plan.timelines {
        let total: f64 = ids.iter().map(|&id| plan.realized_duration(id)).sum();
        if *sv_id == compiled.production_sv {
            production_span = total;
        } else if let Some(w) = WorkerId::ALL
            .into_iter()
            .find(|w| compiled.problem.worker_sv(*w).map(|s| &s.id) == Some(sv_id))
        {
            placed.insert(w, total);
        }
    }
    let mut forced: BTreeMap<WorkerId, f64> = BTreeMap::new();
    let mut shareable = 0.0;
    for task in &compiled.problem.tasks {
        if plan.assignment.contains_key(&task.id) {
            continue;
        }
        let mut cheapest = f64::INFINITY;
        let mut only: Option<WorkerId> = None;
        let mut capable = 0;
        for w in WorkerId::ALL {
            if !task.allowed_workers.contains(&w) {
                continue;
            }
            let sv = match compiled.problem.worker_sv(w) {
                Some(sv) => sv,
                None => continue,
            };
            if let Some(d) = compiled.scheduled_duration.get(&(sv.id.clone(), task.id.clone())) {
                capable += 1;
                only = Some(w);
                cheapest = cheapest.min(*d);
            }
        }
        if capable == 1 {
            *forced.entry(only.expect("capable == 1")).or_insert(0.0) += cheapest;
        } else if capable > 1 {
            shareable += cheapest;
        }
    }
    let mut bound = production_span;
    let mut load_sum = 0.0;
    for w in WorkerId::ALL {
        let load = placed.get(&w).copied().unwrap_or(0.0)
            + forced.get(&w).copied().unwrap_or(0.0);
        bound = bound.max(load);
        load_sum += load;
    }
    bound.max((load_sum + shareable) / WorkerId::ALL.len() as f64)
}

/// Strict Pareto dominance: better on every objective.
pub fn dominates(a: &CostVector, b: &CostVector) -> bool {
    a.f_d < b.f_d && a.f_s < b.f_s
}

/// Literal fringe selection: restrict to the Pareto set, then minimum
/// synergy cost, duration cost as tie-break, most recent insertion last.
/// Returns the index of the chosen element.
pub fn choose_plan_index(costs: &[CostVector]) -> Result<usize, PlanError> {
    if costs.is_empty() {
        return Err(PlanError::EmptyFringe);
    }
    let pareto: Vec<usize> = (0..costs.len())
        .filter(|&i| !costs.iter().any(|o| dominates(o, &costs[i])))
        .collect();
    let best = pareto
        .into_iter()
        .min_by(|&a, &b| {
            costs[a]
                .f_s
                .total_cmp(&costs[b].f_s)
                .then(costs[a].f_d.total_cmp(&costs[b].f_d))
                .then(b.cmp(&a))
        })
        .expect("pareto set of a non-empty fringe is non-empty");
    Ok(best)
}

#[derive(Debug, Clone)]
struct SearchNode {
    id: u64,
    parent: Option<Rc<SearchNode>>,
    resolver: Option<Resolver>,
    cost: CostVector,
    guide: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct FringeKey {
    f_s: f64,
    guide: f64,
    f_d: f64,
    id: u64,
}

impl Eq for FringeKey {}

impl Ord for FringeKey {
    fn cmp(&self, other: &Self) -> core::cmp::Ordering {
        self.f_s
            .total_cmp(&other.f_s)
            .then(self.guide.total_cmp(&other.guide))
            .then(self.f_d.total_cmp(&other.f_d))
            // Most recent first on exact cost ties: depth-first descent.
            .then(other.id.cmp(&self.id))
    }
}

impl PartialOrd for FringeKey {
    fn partial_cmp(&self, other: &Self) -> Option<core::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Unexplored partial plans, ordered so the head is the plan the literal
/// Pareto selection would pick (nothing can dominate a minimum-f_s point).
struct Fringe {
    keys: BTreeSet<FringeKey>,
    nodes: BTreeMap<u64, Rc<SearchNode>>,
    cap: usize,
    evicted: u64,
}

impl Fringe {
    fn new(cap: usize) -> Self {
        Self {
            keys: BTreeSet::new(),
            nodes: BTreeMap::new(),
            cap,
            evicted: 0,
        }
    }

    fn len(&self) -> usize {
        self.keys.len()
    }

    fn push(&mut self, node: Rc<SearchNode>) {
        self.keys.insert(FringeKey {
            f_s: node.cost.f_s,
            guide: node.guide,
            f_d: node.cost.f_d,
            id: node.id,
        });
        self.nodes.insert(node.id, node);
        if self.keys.len() > self.cap {
            // Worst-duration eviction keeps the cheap end of the frontier.
            let worst = *self
                .keys
                .iter()
                .max_by(|a, b| {
                    a.f_d
                        .total_cmp(&b.f_d)
                        .then(a.f_s.total_cmp(&b.f_s))
                        .then(a.id.cmp(&b.id))
                })
                .expect("fringe over capacity is non-empty");
            self.keys.remove(&worst);
            self.nodes.remove(&worst.id);
            self.evicted += 1;
        }
    }

    fn pop(&mut self) -> Option<Rc<SearchNode>> {
        let key = *self.keys.iter().next()?;
        self.keys.remove(&key);
        self.nodes.remove(&key.id)
    }
}

/// Pareto archive over the costs of already-expanded plans. Children
/// dominated by an expanded plan are pruned at insertion.
#[derive(Default)]
struct DominanceArchive {
    front: Vec<CostVector>,
}

impl DominanceArchive {
    fn dominated(&self, c: &CostVector) -> bool {
        self.front.iter().any(|f| dominates(f, c))
    }

    fn add(&mut self, c: CostVector) {
        if self.dominated(&c) {
            return;
        }
        self.front.retain(|f| !dominates(&c, f));
        self.front.push(c);
    }
}

/// Search statistics; also returned on timeout and failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SearchStats {
    pub expansions: u64,
    pub generated: u64,
    pub pruned: u64,
    pub evicted: u64,
    pub fringe_peak: u64,
}

/// Search limits. The stop callback is polled once per expansion, so an
/// exhausted wall-clock budget surfaces as `Timeout`.
#[derive(Default)]
pub struct Budget<'a> {
    pub max_expansions: Option<u64>,
    pub should_stop: Option<&'a mut dyn FnMut() -> bool>,
}

pub const DEFAULT_FRINGE_CAP: usize = 10_000;

/// One scheduled token of the emitted plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanToken {
    pub id: u32,
    pub value: String,
    pub worker: Option<WorkerId>,
    pub start_window: (f64, f64),
    pub end_window: (f64, f64),
    pub duration: (f64, f64),
    /// Earliest-schedule start and end.
    pub dispatch: f64,
    pub completion: f64,
    /// Worker tokens that must end before this token starts.
    pub predecessors: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanTimeline {
    pub state_variable: String,
    pub tokens: Vec<PlanToken>,
}

/// A flaw-free plan: flexible timelines with their earliest schedule, the
/// task assignment, the final cost vector, and search statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub mode: PlanMode,
    pub horizon: f64,
    pub cost: CostVector,
    pub assignment: BTreeMap<String, WorkerId>,
    pub timelines: Vec<PlanTimeline>,
    pub stats: SearchStats,
}

impl Plan {
    pub fn timeline(&self, sv: &str) -> Option<&PlanTimeline> {
        self.timelines.iter().find(|t| t.state_variable == sv)
    }

    pub fn worker_tokens(&self, worker: WorkerId) -> impl Iterator<Item = &PlanToken> {
        self.timelines
            .iter()
            .flat_map(|t| t.tokens.iter())
            .filter(move |t| t.worker == Some(worker))
    }

    /// Earliest-schedule makespan over the worker timelines.
    pub fn makespan(&self) -> f64 {
        self.timelines
            .iter()
            .flat_map(|t| t.tokens.iter())
            .map(|t| t.completion)
            .fold(0.0, f64::max)
    }
}

/// Outcome of plan synthesis.
#[derive(Debug, Clone, PartialEq)]
pub enum PlanOutcome {
    Solved(Plan),
    Timeout(SearchStats),
    Infeasible(SearchStats),
}

struct PlanCache {
    plans: BTreeMap<u64, Rc<PartialPlan>>,
    order: VecDeque<u64>,
    cap: usize,
}

impl PlanCache {
    fn new(cap: usize) -> Self {
        Self {
            plans: BTreeMap::new(),
            order: VecDeque::new(),
            cap,
        }
    }

    fn get(&self, id: u64) -> Option<Rc<PartialPlan>> {
        self.plans.get(&id).cloned()
    }

    fn put(&mut self, id: u64, plan: Rc<PartialPlan>) {
        if self.plans.insert(id, plan).is_none() {
            self.order.push_back(id);
            if self.order.len() > self.cap {
                if let Some(old) = self.order.pop_front() {
                    self.plans.remove(&old);
                }
            }
        }
    }
}

fn materialize(
    node: &Rc<SearchNode>,
    base: &Rc<PartialPlan>,
    compiled: &Compiled<'_>,
    mode: PlanMode,
    cache: &mut PlanCache,
) -> Result<Rc<PartialPlan>, PlanError> {
    if let Some(hit) = cache.get(node.id) {
        return Ok(hit);
    }
    // Collect the resolver chain down from the nearest cached ancestor.
    let mut chain: Vec<Rc<SearchNode>> = Vec::new();
    let mut cur = node.clone();
    let mut start: Rc<PartialPlan> = base.clone();
    loop {
        if let Some(hit) = cache.get(cur.id) {
            start = hit;
            break;
        }
        chain.push(cur.clone());
        match &cur.parent {
            Some(p) => cur = p.clone(),
            None => break,
        }
    }
    let mut plan = (*start).clone();
    for step in chain.iter().rev() {
        if let Some(resolver) = &step.resolver {
            plan = apply_resolver(&plan, compiled, resolver, mode)?
                .ok_or(PlanError::InconsistentPlan)?;
        }
    }
    let rc = Rc::new(plan);
    cache.put(node.id, rc.clone());
    Ok(rc)
}

/// Validity check of an emitted plan: every task assigned and placed
/// exactly once, per-timeline executions exclusive in the earliest
/// schedule, transitions respected, and every rule requirement supported
/// in its stated relation.
pub fn validate_solution(plan: &Plan, problem: &ProblemSpec) -> Result<(), String> {
    let mut placed: BTreeMap<&str, u32> = BTreeMap::new();
    for timeline in &plan.timelines {
        for token in &timeline.tokens {
            if problem.task(&token.value).is_some() {
                *placed.entry(token.value.as_str()).or_insert(0) += 1;
                let assigned = plan.assignment.get(&token.value).copied();
                if assigned != token.worker {
                    return Err(format!(
                        "token `{}` on {:?} disagrees with the assignment map",
                        token.value, token.worker
                    ));
                }
            }
            if token.dispatch < -TIME_EPS || token.completion > plan.horizon + TIME_EPS {
                return Err(format!("token `{}` leaves the horizon", token.value));
            }
        }
    }
    for task in &problem.tasks {
        match placed.get(task.id.as_str()) {
            Some(1) => {}
            n => {
                return Err(format!(
                    "task `{}` placed {} times",
                    task.id,
                    n.copied().unwrap_or(0)
                ))
            }
        }
        let worker = plan
            .assignment
            .get(&task.id)
            .ok_or_else(|| format!("task `{}` not assigned", task.id))?;
        if !task.allowed_workers.contains(worker) {
            return Err(format!("task `{}` assigned to incapable {worker}", task.id));
        }
    }
    for timeline in &plan.timelines {
        let sv = problem
            .state_variable(&timeline.state_variable)
            .ok_or_else(|| format!("unknown state variable `{}`", timeline.state_variable))?;
        let mut ordered: Vec<&PlanToken> = timeline.tokens.iter().collect();
        ordered.sort_by(|a, b| a.dispatch.total_cmp(&b.dispatch).then(a.id.cmp(&b.id)));
        for pair in ordered.windows(2) {
            if pair[0].completion > pair[1].dispatch + TIME_EPS {
                return Err(format!(
                    "tokens `{}` and `{}` overlap on `{}`",
                    pair[0].value, pair[1].value, timeline.state_variable
                ));
            }
            if !sv.allows_transition(&pair[0].value, &pair[1].value) {
                return Err(format!(
                    "transition `{}` -> `{}` not allowed on `{}`",
                    pair[0].value, pair[1].value, timeline.state_variable
                ));
            }
        }
    }
    // Rule support replay on the earliest schedule.
    let all_tokens: Vec<&PlanToken> = plan
        .timelines
        .iter()
        .flat_map(|t| t.tokens.iter())
        .collect();
    let sv_of = |id: u32| -> &str {
        plan.timelines
            .iter()
            .find(|t| t.tokens.iter().any(|tok| tok.id == id))
            .map(|t| t.state_variable.as_str())
            .unwrap_or("")
    };
    for rule in &problem.rules {
        for trigger in all_tokens
            .iter()
            .filter(|t| sv_of(t.id) == rule.trigger.0 && t.value == rule.trigger.1)
        {
            for req in &rule.requirements {
                let supported = all_tokens.iter().any(|y| {
                    y.value == req.value
                        && req
                            .state_variable
                            .as_ref()
                            .map(|sv| sv_of(y.id) == sv.as_str())
                            .unwrap_or(true)
                        && match req.relation {
                            TemporalRelation::Contains => {
                                trigger.dispatch <= y.dispatch + TIME_EPS
                                    && y.completion <= trigger.completion + TIME_EPS
                            }
                            TemporalRelation::Before => y.completion <= trigger.dispatch + TIME_EPS,
                            TemporalRelation::Meets => {
                                (y.completion - trigger.dispatch).abs() <= TIME_EPS
                            }
                        }
                });
                if !supported {
                    return Err(format!(
                        "trigger `{}` lacks `{}` support",
                        trigger.value, req.value
                    ));
                }
            }
        }
    }
    Ok(())
}

fn extract_plan(
    plan: &PartialPlan,
    compiled: &Compiled<'_>,
    mode: PlanMode,
    stats: SearchStats,
) -> Result<Plan, PlanError> {
    let mut stn = plan.stn.clone();
    let schedule = stn
        .earliest_schedule()
        .map_err(|_| PlanError::InconsistentPlan)?;
    let worker_token_ids: BTreeSet<u32> = plan
        .tokens
        .iter()
        .filter(|t| t.task_idx.is_some())
        .map(|t| t.id)
        .collect();

    let mut timelines = Vec::new();
    for sv in &compiled.problem.state_variables {
        let ids = match plan.timelines.get(&sv.id) {
            Some(ids) => ids,
            None => continue,
        };
        let worker = WorkerId::ALL
            .into_iter()
            .find(|w| compiled.problem.worker_sv(*w).map(|s| &s.id) == Some(&sv.id));
        let mut tokens = Vec::new();
        for &id in ids {
            let rec = &plan.tokens[id as usize];
            let (s, e) = plan.token_points(id);
            let predecessors: Vec<u32> = worker_token_ids
                .iter()
                .copied()
                .filter(|&q| q != id)
                .filter(|&q| {
                    let (_, qe) = plan.token_points(q);
                    stn.entails_before(qe, s)
                })
                .collect();
            tokens.push(PlanToken {
                id,
                value: rec.value.clone(),
                worker,
                start_window: stn.window(s),
                end_window: stn.window(e),
                duration: match rec.tag {
                    ControllabilityTag::Controllable => (rec.duration.min(), rec.duration.max()),
                    _ => (rec.duration.max(), rec.duration.max()),
                },
                dispatch: schedule[&s],
                completion: schedule[&e],
                predecessors,
            });
        }
        tokens.sort_by(|a, b| a.dispatch.total_cmp(&b.dispatch).then(a.id.cmp(&b.id)));
        timelines.push(PlanTimeline {
            state_variable: sv.id.clone(),
            tokens,
        });
    }

    let out = Plan {
        mode,
        horizon: compiled.problem.horizon,
        cost: estimate_cost(plan, compiled)?,
        assignment: plan.assignment.clone(),
        timelines,
        stats,
    };
    validate_solution(&out, compiled.problem).map_err(PlanError::InvalidSolution)?;
    Ok(out)
}

/// Synthesize a plan: initialize, then loop flaw detection, flaw choice,
/// refinement, and fringe selection until a flaw-free plan is extracted.
/// Deterministic for a fixed problem and mode.
pub fn synthesize_plan(
    problem: &ProblemSpec,
    mode: PlanMode,
    budget: Budget<'_>,
) -> Result<PlanOutcome, PlanError> {
    synthesize_with_cap(problem, mode, budget, DEFAULT_FRINGE_CAP)
}

pub fn synthesize_with_cap(
    problem: &ProblemSpec,
    mode: PlanMode,
    mut budget: Budget<'_>,
    fringe_cap: usize,
) -> Result<PlanOutcome, PlanError> {
    let compiled = Compiled::new(problem)?;
    let base = Rc::new(initialize(&compiled, mode)?);
    let root_cost = estimate_cost(&base, &compiled)?;
    let root_guide = guide_fd(&base, &compiled);
    let mut next_id: u64 = 0;
    let root = Rc::new(SearchNode {
        id: next_id,
        parent: None,
        resolver: None,
        cost: root_cost,
        guide: root_guide,
    });
    let mut fringe = Fringe::new(fringe_cap);
    fringe.push(root);
    let mut cache = PlanCache::new(8);
    cache.put(0, base.clone());
    let mut archive = DominanceArchive::default();
    let mut stats = SearchStats {
        generated: 1,
        fringe_peak: 1,
        ..SearchStats::default()
    };

    loop {
        let stop = budget
            .should_stop
            .as_mut()
            .map(|f| f())
            .unwrap_or(false)
            || budget
                .max_expansions
                .map(|m| stats.expansions >= m)
                .unwrap_or(false);
        if stop {
            stats.evicted = fringe.evicted;
            return Ok(PlanOutcome::Timeout(stats));
        }
        let node = match fringe.pop() {
            Some(n) => n,
            None => {
                stats.evicted = fringe.evicted;
                return Ok(PlanOutcome::Infeasible(stats));
            }
        };
        let plan = materialize(&node, &base, &compiled, mode, &mut cache)?;
        stats.expansions += 1;

        let flaws = detect_flaws(&plan, &compiled);
        if flaws.is_empty() {
            stats.evicted = fringe.evicted;
            stats.fringe_peak = stats.fringe_peak.max(fringe.len() as u64);
            let out = extract_plan(&plan, &compiled, mode, stats)?;
            return Ok(PlanOutcome::Solved(out));
        }
        let ranked = choose_flaws(flaws, &compiled);
        let flaw = &ranked[0];
        let children = refine(&plan, &compiled, flaw, mode)?;
        archive.add(node.cost);
        for (resolver, child_plan) in children {
            let cost = estimate_cost(&child_plan, &compiled)?;
            stats.generated += 1;
            if archive.dominated(&cost) {
                stats.pruned += 1;
                continue;
            }
            let guide = guide_fd(&child_plan, &compiled);
            next_id += 1;
            let child = Rc::new(SearchNode {
                id: next_id,
                parent: Some(node.clone()),
                resolver: Some(resolver),
                cost,
                guide,
            });
            cache.put(next_id, Rc::new(child_plan));
            fringe.push(child);
        }
        stats.fringe_peak = stats.fringe_peak.max(fringe.len() as u64);
    }
}
