//! Brute-force reference implementations used by tests and the acceptance
//! suite: exhaustive enumeration of assignment matrices with their duration
//! and synergy costs, the exact Pareto set, and independent shortest-path
//! references for the motion layer.
//!
//! Everything here is deliberately simple and kept independent of the
//! implementation paths it cross-checks (plain BFS instead of the motion
//! planner's Dijkstra, explicit window variables instead of timelines).

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::model::{CostVector, Synergy, SynergyMatrix, TaskDef, WorkerId};
use crate::motion::{Cell, Workspace};

/// Explicit task id used for idle window slots, so the one-task-per-window
/// equality holds verbatim. Idle has zero duration and zero synergy.
pub const IDLE: &str = "<idle>";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("instance too large for exhaustive enumeration ({0} tasks)")]
    TooLarge(usize),
    #[error("incompatible pair `{0}` / `{1}` scheduled in one window")]
    IncompatiblePairScheduled(String, String),
    #[error("task `{0}` misses a duration for {1}")]
    MissingDuration(String, WorkerId),
}

/// One feasible assignment: per window, exactly one robot task (or idle)
/// and one human task (or idle); across windows, each real task appears
/// exactly once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignmentMatrix {
    /// Window slots `(robot task, human task)`, idle marked with [`IDLE`].
    pub windows: Vec<(String, String)>,
}

impl AssignmentMatrix {
    pub fn b_robot(&self, task: &str, window: usize) -> u8 {
        u8::from(self.windows.get(window).map(|w| w.0.as_str()) == Some(task))
    }

    pub fn b_human(&self, task: &str, window: usize) -> u8 {
        u8::from(self.windows.get(window).map(|w| w.1.as_str()) == Some(task))
    }

    /// Worker of each real task.
    pub fn assignment(&self) -> BTreeMap<&str, WorkerId> {
        let mut out = BTreeMap::new();
        for (r, h) in &self.windows {
            if r != IDLE {
                out.insert(r.as_str(), WorkerId::Robot);
            }
            if h != IDLE {
                out.insert(h.as_str(), WorkerId::Human);
            }
        }
        out
    }

    /// Row-sum check: each real task appears in exactly one window slot.
    pub fn assigned_once(&self, tasks: &[TaskDef]) -> bool {
        let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
        for (r, h) in &self.windows {
            for t in [r, h] {
                if t != IDLE {
                    *seen.entry(t.as_str()).or_insert(0) += 1;
                }
            }
        }
        tasks.iter().all(|t| seen.get(t.id.as_str()) == Some(&1))
            && seen.len() == tasks.len()
    }
}

const MAX_ORACLE_TASKS: usize = 10;

/// Enumerate every assignment matrix satisfying the window equalities, the
/// once-per-task constraint, and the capability function, using at most
/// `max_windows` windows. Canonical form: windows are sorted, so matrices
/// that differ only by window permutation or idle padding appear once.
pub fn enumerate_assignments(
    tasks: &[TaskDef],
    max_windows: usize,
) -> Result<Vec<AssignmentMatrix>, OracleError> {
    if tasks.len() > MAX_ORACLE_TASKS {
        return Err(OracleError::TooLarge(tasks.len()));
    }
    let mut out = Vec::new();
    // Choose each task's worker, then every pairing of robot-assigned and
    // human-assigned tasks into shared windows.
    let n = tasks.len();
    let mut choice: Vec<WorkerId> = Vec::with_capacity(n);
    enumerate_workers(tasks, 0, &mut choice, &mut |workers| {
        let robot: Vec<&str> = tasks
            .iter()
            .zip(workers)
            .filter(|(_, w)| **w == WorkerId::Robot)
            .map(|(t, _)| t.id.as_str())
            .collect();
        let human: Vec<&str> = tasks
            .iter()
            .zip(workers)
            .filter(|(_, w)| **w == WorkerId::Human)
            .map(|(t, _)| t.id.as_str())
            .collect();
        // Pair k robot tasks with k human tasks; the rest run solo.
        let mut pairing: Vec<Option<usize>> = vec![None; robot.len()];
        enumerate_pairings(&mut pairing, 0, human.len(), &mut |pairing| {
            let paired_humans: BTreeSet<usize> = pairing.iter().flatten().copied().collect();
            let mut windows: Vec<(String, String)> = Vec::new();
            for (ri, h) in pairing.iter().enumerate() {
                let human_task = match h {
                    Some(hi) => human[*hi],
                    None => IDLE,
                };
                windows.push((robot[ri].to_string(), human_task.to_string()));
            }
            for (hi, h) in human.iter().enumerate() {
                if !paired_humans.contains(&hi) {
                    windows.push((IDLE.to_string(), h.to_string()));
                }
            }
            windows.sort();
            if windows.len() <= max_windows {
                out.push(AssignmentMatrix { windows });
            }
        });
    });
    out.sort_by(|a, b| a.windows.cmp(&b.windows));
    out.dedup();
    Ok(out)
}

fn enumerate_workers(
    tasks: &[TaskDef],
    i: usize,
    choice: &mut Vec<WorkerId>,
    f: &mut impl FnMut(&[WorkerId]),
) {
    if i == tasks.len() {
        f(choice);
        return;
    }
    for w in WorkerId::ALL {
        if tasks[i].allowed_workers.contains(&w) {
            choice.push(w);
            enumerate_workers(tasks, i + 1, choice, f);
            choice.pop();
        }
    }
}

/// Partial injective matchings robot-index -> human-index.
fn enumerate_pairings(
    pairing: &mut Vec<Option<usize>>,
    i: usize,
    humans: usize,
    f: &mut impl FnMut(&Vec<Option<usize>>),
) {
    if i == pairing.len() {
        f(pairing);
        return;
    }
    pairing[i] = None;
    enumerate_pairings(pairing, i + 1, humans, f);
    for h in 0..humans {
        if pairing[..i].iter().flatten().all(|used| *used != h) {
            pairing[i] = Some(h);
            enumerate_pairings(pairing, i + 1, humans, f);
            pairing[i] = None;
        }
    }
}

/// Duration and synergy cost of a matrix: the duration cost sums each
/// assigned task's expected (midpoint) duration; the synergy cost sums the
/// coefficient of every robot/human pair sharing a window.
pub fn oracle_costs(
    m: &AssignmentMatrix,
    tasks: &[TaskDef],
    synergy: &SynergyMatrix,
) -> Result<CostVector, OracleError> {
    let by_id: BTreeMap<&str, &TaskDef> = tasks.iter().map(|t| (t.id.as_str(), t)).collect();
    let mut f_d = 0.0;
    let mut f_s = 0.0;
    for (r, h) in &m.windows {
        if r != IDLE {
            let task = by_id[r.as_str()];
            let d = task
                .duration_for(WorkerId::Robot)
                .ok_or_else(|| OracleError::MissingDuration(r.clone(), WorkerId::Robot))?;
            f_d += d.midpoint();
        }
        if h != IDLE {
            let task = by_id[h.as_str()];
            let d = task
                .duration_for(WorkerId::Human)
                .ok_or_else(|| OracleError::MissingDuration(h.clone(), WorkerId::Human))?;
            f_d += d.midpoint();
        }
        if r != IDLE && h != IDLE {
            match synergy.lookup(r, h).ok() {
                Some(Synergy::Coefficient(s)) => f_s += s,
                Some(Synergy::Incompatible) | None => {
                    return Err(OracleError::IncompatiblePairScheduled(r.clone(), h.clone()))
                }
            }
        }
    }
    Ok(CostVector::new(f_d, f_s))
}

/// Strict Pareto dominance on both objectives.
fn dominates(a: &CostVector, b: &CostVector) -> bool {
    a.f_d < b.f_d && a.f_s < b.f_s
}

/// The exact Pareto set over every feasible matrix. Matrices whose window
/// sharing hits an incompatible pair are skipped (infeasible schedules).
pub fn oracle_pareto(
    tasks: &[TaskDef],
    synergy: &SynergyMatrix,
    max_windows: usize,
) -> Result<Vec<(AssignmentMatrix, CostVector)>, OracleError> {
    let all = enumerate_assignments(tasks, max_windows)?;
    let mut scored: Vec<(AssignmentMatrix, CostVector)> = Vec::new();
    for m in all {
        if let Ok(c) = oracle_costs(&m, tasks, synergy) {
            scored.push((m, c));
        }
    }
    let pareto: Vec<(AssignmentMatrix, CostVector)> = scored
        .iter()
        .filter(|(_, c)| !scored.iter().any(|(_, o)| dominates(o, c)))
        .cloned()
        .collect();
    Ok(pareto)
}

/// Selection rule over a Pareto set: minimum synergy cost first, duration
/// cost as tie-break, then enumeration order.
pub fn pareto_selection<'a>(
    pareto: &'a [(AssignmentMatrix, CostVector)],
) -> Option<&'a (AssignmentMatrix, CostVector)> {
    pareto.iter().min_by(|(_, a), (_, b)| {
        a.f_s
            .total_cmp(&b.f_s)
            .then(a.f_d.total_cmp(&b.f_d))
    })
}

/// Independent single-goal shortest path: plain BFS over the unit-cost
/// grid. Reference for the motion planner's Dijkstra.
pub fn bfs_shortest_path(ws: &Workspace, start: Cell, goal: Cell) -> Option<u32> {
    if !ws.free(start) || !ws.free(goal) {
        return None;
    }
    if start == goal {
        return Some(0);
    }
    let mut dist: BTreeMap<Cell, u32> = BTreeMap::new();
    dist.insert(start, 0);
    let mut queue = VecDeque::new();
    queue.push_back(start);
    while let Some(c) = queue.pop_front() {
        let d = dist[&c];
        for n in c.neighbors4() {
            if ws.free(n) && !dist.contains_key(&n) {
                if n == goal {
                    return Some(d + 1);
                }
                dist.insert(n, d + 1);
                queue.push_back(n);
            }
        }
    }
    None
}

/// Exact multi-goal reference: minimum over per-goal BFS distances.
pub fn min_over_goals(ws: &Workspace, start: Cell, goals: &[Cell]) -> Option<u32> {
    goals
        .iter()
        .filter_map(|g| bfs_shortest_path(ws, start, *g))
        .min()
}

/// Exact cost of an action through a layered goal graph: dynamic program
/// over layers with all pairwise BFS distances. Lower-bounds the greedy
/// layer-by-layer refinement on every instance.
pub fn layered_exact_cost(ws: &Workspace, layers: &[Vec<Cell>]) -> Option<u32> {
    let mut costs: Vec<(Cell, u32)> = layers.first()?.iter().map(|c| (*c, 0)).collect();
    for layer in &layers[1..] {
        let mut next: Vec<(Cell, u32)> = Vec::new();
        for target in layer {
            let mut best: Option<u32> = None;
            for (from, acc) in &costs {
                if let Some(d) = bfs_shortest_path(ws, *from, *target) {
                    let total = acc + d;
                    if best.map(|b| total < b).unwrap_or(true) {
                        best = Some(total);
                    }
                }
            }
            if let Some(b) = best {
                next.push((*target, b));
            }
        }
        if next.is_empty() {
            return None;
        }
        costs = next;
    }
    costs.iter().map(|(_, c)| *c).min()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DurationInterval;
    use alloc::collections::BTreeSet;

    fn task(id: &str, workers: &[WorkerId], d: f64) -> TaskDef {
        TaskDef {
            id: id.to_string(),
            production_target: "p".to_string(),
            allowed_workers: workers.iter().copied().collect(),
            per_worker_duration: workers
                .iter()
                .map(|w| (*w, DurationInterval::new(d, d).unwrap()))
                .collect(),
            action_template_ref: workers
                .contains(&WorkerId::Robot)
                .then(|| "pick_and_place".to_string()),
            goal_labels: BTreeSet::new(),
        }
    }

    fn zero_synergy(tasks: &[TaskDef]) -> SynergyMatrix {
        let r: BTreeSet<String> = tasks
            .iter()
            .filter(|t| t.allowed_workers.contains(&WorkerId::Robot))
            .map(|t| t.id.clone())
            .collect();
        let h: BTreeSet<String> = tasks
            .iter()
            .filter(|t| t.allowed_workers.contains(&WorkerId::Human))
            .map(|t| t.id.clone())
            .collect();
        let mut m = SynergyMatrix::new(r.clone(), h.clone());
        for a in &r {
            for b in &h {
                if a != b {
                    m.set(a, b, 0.0);
                }
            }
        }
        m
    }

    #[test]
    fn two_dual_tasks_two_windows_no_idle_gives_the_swap_pair() {
        let both = [WorkerId::Human, WorkerId::Robot];
        let tasks = [task("t1", &both, 1.0), task("t2", &both, 1.0)];
        let all = enumerate_assignments(&tasks, 2).unwrap();
        let no_idle: Vec<_> = all
            .iter()
            .filter(|m| m.windows.iter().all(|(r, h)| r != IDLE && h != IDLE))
            .collect();
        assert_eq!(no_idle.len(), 2);
        for m in &no_idle {
            assert!(m.assigned_once(&tasks));
        }
    }

    #[test]
    fn robot_only_task_never_lands_on_the_human_slot() {
        let tasks = [
            task("t1", &[WorkerId::Robot], 1.0),
            task("t2", &[WorkerId::Human, WorkerId::Robot], 1.0),
        ];
        for m in enumerate_assignments(&tasks, 4).unwrap() {
            for w in 0..m.windows.len() {
                assert_eq!(m.b_human("t1", w), 0);
            }
            assert!(m.assigned_once(&tasks));
        }
    }

    #[test]
    fn all_matrices_satisfy_once_per_task() {
        let both = [WorkerId::Human, WorkerId::Robot];
        let tasks = [
            task("a", &[WorkerId::Robot], 2.0),
            task("b", &[WorkerId::Human], 3.0),
            task("c", &both, 4.0),
            task("d", &both, 5.0),
        ];
        let all = enumerate_assignments(&tasks, 4).unwrap();
        assert!(!all.is_empty());
        for m in &all {
            assert!(m.assigned_once(&tasks));
        }
    }

    #[test]
    fn enumeration_guard_rejects_large_instances() {
        let both = [WorkerId::Human, WorkerId::Robot];
        let tasks: Vec<TaskDef> = (0..11)
            .map(|i| task(&alloc::format!("t{i}"), &both, 1.0))
            .collect();
        assert_eq!(
            enumerate_assignments(&tasks, 11).unwrap_err(),
            OracleError::TooLarge(11)
        );
    }

    #[test]
    fn costs_substitute_directly() {
        let tasks = [
            task("t1", &[WorkerId::Robot], 4.0),
            task("t2", &[WorkerId::Human], 3.0),
        ];
        let mut synergy = zero_synergy(&tasks);
        synergy.set("t1", "t2", 2.0);
        let shared = AssignmentMatrix {
            windows: vec![("t1".to_string(), "t2".to_string())],
        };
        assert_eq!(
            oracle_costs(&shared, &tasks, &synergy).unwrap(),
            CostVector::new(7.0, 2.0)
        );
        let solo = AssignmentMatrix {
            windows: vec![
                ("t1".to_string(), IDLE.to_string()),
                (IDLE.to_string(), "t2".to_string()),
            ],
        };
        assert_eq!(
            oracle_costs(&solo, &tasks, &synergy).unwrap(),
            CostVector::new(7.0, 0.0)
        );
    }

    #[test]
    fn all_idle_windows_cost_nothing() {
        let m = AssignmentMatrix {
            windows: vec![(IDLE.to_string(), IDLE.to_string())],
        };
        let c = oracle_costs(&m, &[], &SynergyMatrix::default()).unwrap();
        assert_eq!(c, CostVector::new(0.0, 0.0));
    }

    #[test]
    fn idle_padding_leaves_costs_unchanged() {
        let tasks = [
            task("t1", &[WorkerId::Robot], 4.0),
            task("t2", &[WorkerId::Human], 3.0),
        ];
        let synergy = zero_synergy(&tasks);
        let m = AssignmentMatrix {
            windows: vec![("t1".to_string(), "t2".to_string())],
        };
        let mut padded = m.clone();
        padded.windows.push((IDLE.to_string(), IDLE.to_string()));
        padded.windows.push((IDLE.to_string(), IDLE.to_string()));
        assert_eq!(
            oracle_costs(&m, &tasks, &synergy).unwrap(),
            oracle_costs(&padded, &tasks, &synergy).unwrap()
        );
    }

    #[test]
    fn incompatible_pair_in_one_window_is_rejected() {
        let tasks = [
            task("t1", &[WorkerId::Robot], 4.0),
            task("t2", &[WorkerId::Human], 3.0),
        ];
        let r: BTreeSet<String> = ["t1".to_string()].into_iter().collect();
        let h: BTreeSet<String> = ["t2".to_string()].into_iter().collect();
        let synergy = SynergyMatrix::new(r, h); // no entries: all incompatible
        let m = AssignmentMatrix {
            windows: vec![("t1".to_string(), "t2".to_string())],
        };
        assert!(matches!(
            oracle_costs(&m, &tasks, &synergy),
            Err(OracleError::IncompatiblePairScheduled(_, _))
        ));
    }

    #[test]
    fn single_task_single_worker_pareto_is_one_point() {
        let tasks = [task("t1", &[WorkerId::Robot], 4.0)];
        let synergy = zero_synergy(&tasks);
        let pareto = oracle_pareto(&tasks, &synergy, 1).unwrap();
        let costs: BTreeSet<_> = pareto
            .iter()
            .map(|(_, c)| (c.f_d.to_bits(), c.f_s.to_bits()))
            .collect();
        assert_eq!(costs.len(), 1);
        assert_eq!(pareto[0].1, CostVector::new(4.0, 0.0));
    }

    #[test]
    fn strongly_negative_synergy_pairing_reaches_the_pareto_set() {
        let both = [WorkerId::Human, WorkerId::Robot];
        let tasks = [task("t1", &both, 4.0), task("t2", &both, 4.0)];
        let mut synergy = zero_synergy(&tasks);
        synergy.set("t1", "t2", -3.0);
        synergy.set("t2", "t1", -3.0);
        let pareto = oracle_pareto(&tasks, &synergy, 2).unwrap();
        assert!(pareto.iter().any(|(m, c)| {
            c.f_s == -3.0
                && m.windows
                    .iter()
                    .any(|(r, h)| r != IDLE && h != IDLE)
        }));
        // Pareto members are mutually non-dominated.
        for (_, a) in &pareto {
            for (_, b) in &pareto {
                assert!(!dominates(a, b));
            }
        }
        // And they dominate-or-tie everything outside the set.
        let all = enumerate_assignments(&tasks, 2).unwrap();
        for m in &all {
            let c = match oracle_costs(&m, &tasks, &synergy) {
                Ok(c) => c,
                Err(_) => continue,
            };
            let in_pareto = pareto.iter().any(|(_, p)| p == &c);
            if !in_pareto {
                assert!(pareto.iter().any(|(_, p)| dominates(p, &c)));
            }
        }
    }

    #[test]
    fn selection_prioritizes_synergy_then_duration() {
        let pareto = vec![
            (
                AssignmentMatrix { windows: vec![] },
                CostVector::new(5.0, 3.0),
            ),
            (
                AssignmentMatrix { windows: vec![] },
                CostVector::new(7.0, 1.0),
            ),
        ];
        assert_eq!(pareto_selection(&pareto).unwrap().1, CostVector::new(7.0, 1.0));
    }

    #[test]
    fn bfs_matches_manhattan_on_open_grid() {
        let ws = Workspace {
            width: 10,
            height: 10,
            obstacles: BTreeSet::new(),
            locations: BTreeMap::new(),
            safety_radius: 0.0,
            robot_speed: 1.0,
            slowdown_factor: 1.0,
        };
        assert_eq!(bfs_shortest_path(&ws, Cell(0, 0), Cell(3, 4)), Some(7));
        assert_eq!(min_over_goals(&ws, Cell(0, 0), &[Cell(0, 3), Cell(5, 0)]), Some(3));
    }
}
