//! Desk-scale geometric layer: a grid workspace, resolution of task labels
//! into configuration sets, layered goal graphs for pick-and-place actions,
//! multi-goal motion planning (exact and sampling), and the greedy
//! layer-by-layer refinement of a task into motion plans.
//!
//! The configuration space is a 4-connected grid cell plus a gripper state;
//! motion cost is path length in cells and duration is `cost / robot_speed`.

use alloc::collections::{BTreeMap, BTreeSet, BinaryHeap};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::TaskDef;

/// A grid cell, serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell(pub i32, pub i32);

impl Cell {
    pub fn x(&self) -> i32 {
        self.0
    }

    pub fn y(&self) -> i32 {
        self.1
    }

    pub fn manhattan(&self, other: Cell) -> u32 {
        self.0.abs_diff(other.0) + self.1.abs_diff(other.1)
    }

    /// Squared Euclidean distance; enough for closest-goal comparisons.
    pub fn sq_dist(&self, other: Cell) -> i64 {
        let dx = (self.0 - other.0) as i64;
        let dy = (self.1 - other.1) as i64;
        dx * dx + dy * dy
    }

    /// 4-neighborhood in deterministic order.
    pub fn neighbors4(&self) -> [Cell; 4] {
        [
            Cell(self.0 + 1, self.1),
            Cell(self.0 - 1, self.1),
            Cell(self.0, self.1 + 1),
            Cell(self.0, self.1 - 1),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gripper {
    Open,
    Closed,
}

/// A robot configuration: where the end effector is and the gripper state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Configuration {
    pub cell: Cell,
    pub gripper: Gripper,
}

impl Configuration {
    pub fn at(cell: Cell) -> Self {
        Self {
            cell,
            gripper: Gripper::Open,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MotionError {
    #[error("label `{0}` does not resolve in the scene")]
    UnresolvedLabel(String),
    #[error("no free approach cell around target of `{0}`")]
    NoFreeApproach(String),
    #[error("no path to any goal")]
    NoPath,
    #[error("motion refinement failed at layer {0}")]
    MotionFailure(usize),
    #[error("start configuration is blocked or out of bounds")]
    BadStart,
    #[error("goal set is empty")]
    NoGoals,
    #[error("workspace invariant violated: {0}")]
    BadWorkspace(String),
}

/// The static grid workspace: bounds, obstacles, named locations, and the
/// safety/speed parameters the simulator uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub width: i32,
    pub height: i32,
    pub obstacles: BTreeSet<Cell>,
    /// Label to the cells it resolves to (a label may name many equivalent
    /// placements, e.g. one cell per available cube of a color).
    pub locations: BTreeMap<String, Vec<Cell>>,
    pub safety_radius: f64,
    pub robot_speed: f64,
    pub slowdown_factor: f64,
}

impl Workspace {
    pub fn in_bounds(&self, c: Cell) -> bool {
        c.0 >= 0 && c.1 >= 0 && c.0 < self.width && c.1 < self.height
    }

    pub fn free(&self, c: Cell) -> bool {
        self.in_bounds(c) && !self.obstacles.contains(&c)
    }

    pub fn validate(&self) -> Result<(), MotionError> {
        if self.width <= 0 || self.height <= 0 {
            return Err(MotionError::BadWorkspace(String::from("empty grid")));
        }
        if !(self.robot_speed > 0.0) {
            return Err(MotionError::BadWorkspace(String::from(
                "robot_speed must be positive",
            )));
        }
        if !(self.slowdown_factor > 0.0 && self.slowdown_factor <= 1.0) {
            return Err(MotionError::BadWorkspace(String::from(
                "slowdown_factor must be in (0, 1]",
            )));
        }
        if self.safety_radius < 0.0 {
            return Err(MotionError::BadWorkspace(String::from(
                "safety_radius must be non-negative",
            )));
        }
        for (label, cells) in &self.locations {
            for c in cells {
                if !self.free(*c) {
                    return Err(MotionError::BadWorkspace(alloc::format!(
                        "location `{label}` cell ({}, {}) is blocked or out of bounds",
                        c.0,
                        c.1
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn resolve(&self, label: &str) -> Option<&[Cell]> {
        self.locations.get(label).map(|v| v.as_slice())
    }
}

/// Mutable view of the world used while planning and executing: which
/// consumable objects are still available, plus the robot's configuration.
#[derive(Debug, Clone)]
pub struct Scene<'w> {
    pub workspace: &'w Workspace,
    /// Remaining cells per consumable label (cube pools).
    pub available: BTreeMap<String, Vec<Cell>>,
    pub robot_config: Configuration,
}

impl<'w> Scene<'w> {
    /// Fresh scene: every `*_cube` label is a consumable pool, the robot
    /// sits at `robot_home` (or the origin cell when absent).
    pub fn initial(workspace: &'w Workspace) -> Self {
        let mut available = BTreeMap::new();
        for (label, cells) in &workspace.locations {
            if label.ends_with("_cube") {
                available.insert(label.clone(), cells.clone());
            }
        }
        let home = workspace
            .resolve("robot_home")
            .and_then(|cells| cells.first().copied())
            .unwrap_or(Cell(0, 0));
        Self {
            workspace,
            available,
            robot_config: Configuration::at(home),
        }
    }

    pub fn remaining(&self, label: &str) -> &[Cell] {
        self.available.get(label).map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// Remove one consumed object; returns false when it was not present.
    pub fn consume(&mut self, label: &str, cell: Cell) -> bool {
        if let Some(cells) = self.available.get_mut(label) {
            if let Some(pos) = cells.iter().position(|c| *c == cell) {
                cells.remove(pos);
                return true;
            }
        }
        false
    }
}

/// Builtin action templates, referenced by name from task definitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionTemplate {
    /// Move to a pre-picking pose, open the gripper, move to the picking
    /// pose, close it, retreat, approach the placing pose, place, open.
    PickAndPlace,
}

impl ActionTemplate {
    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "pick_and_place" => Some(ActionTemplate::PickAndPlace),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ActionTemplate::PickAndPlace => "pick_and_place",
        }
    }
}

/// One movement layer of a goal graph: the configuration set that completes
/// the movement, an optional gripper operation once reached, and whether
/// reaching it consumes the chosen object.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalLayer {
    pub name: &'static str,
    pub goals: Vec<Configuration>,
    pub gripper_after: Option<Gripper>,
    pub consumes: bool,
}

/// Layered goal graph of an action: `layers[0]` is the singleton start; the
/// edges between consecutive layers are implicit (weighted by motion cost).
#[derive(Debug, Clone, PartialEq)]
pub struct GoalGraph {
    pub layers: Vec<GoalLayer>,
    /// Label of the consumable pool the pick layers draw from.
    pub pick_label: String,
}

fn free_neighbors(ws: &Workspace, targets: &[Cell], gripper: Gripper) -> Vec<Configuration> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for t in targets {
        for n in t.neighbors4() {
            if ws.free(n) && seen.insert(n) {
                out.push(Configuration { cell: n, gripper });
            }
        }
    }
    out
}

/// Build the layered goal graph of a task's action in the current scene.
///
/// Pick layers hold one configuration set per still-available object of the
/// task's consumable label; place layers hold the slot's cells; pre/post
/// poses are the free 4-neighbors of each target cell.
pub fn get_goals_from_scene(
    template: ActionTemplate,
    scene: &Scene<'_>,
    task: &TaskDef,
) -> Result<GoalGraph, MotionError> {
    match template {
        ActionTemplate::PickAndPlace => {
            let ws = scene.workspace;
            // The consumable label resolves in the scene pools; the slot
            // label resolves among the static workspace locations.
            let mut pick_label = None;
            let mut place_label = None;
            for label in &task.goal_labels {
                if scene.available.contains_key(label.as_str()) {
                    pick_label = Some(label.clone());
                } else if ws.resolve(label).is_some() {
                    place_label = Some(label.clone());
                } else {
                    return Err(MotionError::UnresolvedLabel(label.clone()));
                }
            }
            let pick_label = pick_label
                .ok_or_else(|| MotionError::UnresolvedLabel(String::from("<pick target>")))?;
            let place_label = place_label
                .ok_or_else(|| MotionError::UnresolvedLabel(String::from("<place target>")))?;

            let cubes = scene.remaining(&pick_label).to_vec();
            if cubes.is_empty() {
                return Err(MotionError::UnresolvedLabel(pick_label));
            }
            let slot = ws.resolve(&place_label).expect("checked above").to_vec();

            let pre_pick = free_neighbors(ws, &cubes, Gripper::Open);
            if pre_pick.is_empty() {
                return Err(MotionError::NoFreeApproach(pick_label));
            }
            let pick: Vec<Configuration> = cubes
                .iter()
                .map(|c| Configuration {
                    cell: *c,
                    gripper: Gripper::Open,
                })
                .collect();
            let post_grasp = free_neighbors(ws, &cubes, Gripper::Closed);
            let pre_place = free_neighbors(ws, &slot, Gripper::Closed);
            if pre_place.is_empty() {
                return Err(MotionError::NoFreeApproach(place_label));
            }
            let place: Vec<Configuration> = slot
                .iter()
                .map(|c| Configuration {
                    cell: *c,
                    gripper: Gripper::Closed,
                })
                .collect();

            Ok(GoalGraph {
                layers: vec![
                    GoalLayer {
                        name: "start",
                        goals: vec![scene.robot_config],
                        gripper_after: None,
                        consumes: false,
                    },
                    GoalLayer {
                        name: "pre_pick",
                        goals: pre_pick,
                        gripper_after: Some(Gripper::Open),
                        consumes: false,
                    },
                    GoalLayer {
                        name: "pick",
                        goals: pick,
                        gripper_after: Some(Gripper::Closed),
                        consumes: true,
                    },
                    GoalLayer {
                        name: "post_grasp",
                        goals: post_grasp,
                        gripper_after: None,
                        consumes: false,
                    },
                    GoalLayer {
                        name: "pre_place",
                        goals: pre_place,
                        gripper_after: None,
                        consumes: false,
                    },
                    GoalLayer {
                        name: "place",
                        goals: place,
                        gripper_after: Some(Gripper::Open),
                        consumes: false,
                    },
                ],
                pick_label,
            })
        }
    }
}

/// How a motion query is answered.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlanningMode {
    /// Minimum-cost path to any goal via a multi-source reversed Dijkstra.
    Exact,
    /// Anytime randomized tree biased toward the goal set; returns the best
    /// path found within the iteration budget.
    Sampling { seed: u64, iterations: u32 },
}

/// A planned motion: unit-step waypoints (consecutive cells are
/// 4-neighbors), total cost in cells, gripper operations by waypoint index,
/// and the search effort spent (heap pops or samples drawn).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionPlan {
    pub waypoints: Vec<Cell>,
    pub cost: u32,
    pub gripper_ops: Vec<(usize, Gripper)>,
    pub effort: u64,
}

impl MotionPlan {
    pub fn endpoint(&self) -> Cell {
        *self
            .waypoints
            .last()
            .expect("plans have at least one waypoint")
    }
}

/// Minimum-cost path from `start` to any goal.
pub fn multi_goal_plan(
    ws: &Workspace,
    start: Configuration,
    goals: &[Configuration],
    mode: PlanningMode,
) -> Result<MotionPlan, MotionError> {
    if goals.is_empty() {
        return Err(MotionError::NoGoals);
    }
    if !ws.free(start.cell) {
        return Err(MotionError::BadStart);
    }
    match mode {
        PlanningMode::Exact => exact_multi_goal(ws, start.cell, goals),
        PlanningMode::Sampling { seed, iterations } => {
            sampling_multi_goal(ws, start.cell, goals, seed, iterations)
        }
    }
}

/// Reversed multi-source Dijkstra: all goals start at distance 0, expansion
/// stops once the start cell is settled. Tie-breaking is lexicographic on
/// (cost, goal index, cell order) so results are reproducible.
fn exact_multi_goal(
    ws: &Workspace,
    start: Cell,
    goals: &[Configuration],
) -> Result<MotionPlan, MotionError> {
    #[derive(PartialEq, Eq)]
    struct Entry {
        cost: u32,
        goal_idx: u32,
        cell: Cell,
    }
    impl Ord for Entry {
        fn cmp(&self, other: &Self) -> core::cmp::Ordering {
            // BinaryHeap is a max-heap; reverse for min extraction.
            (other.cost, other.goal_idx, other.cell).cmp(&(self.cost, self.goal_idx, self.cell))
        }
    }
    impl PartialOrd for Entry {
        fn partial_cmp(&self, other: &Self) -> Option<core::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }

    let mut heap: BinaryHeap<Entry> = BinaryHeap::new();
    // cell -> (cost, goal_idx, next cell toward the goal)
    let mut best: BTreeMap<Cell, (u32, u32, Option<Cell>)> = BTreeMap::new();
    let mut pops: u64 = 0;

    for (idx, g) in goals.iter().enumerate() {
        if !ws.free(g.cell) {
            continue;
        }
        match best.get(&g.cell) {
            Some(&(c, gi, _)) if (c, gi) <= (0, idx as u32) => {}
            _ => {
                best.insert(g.cell, (0, idx as u32, None));
                heap.push(Entry {
                    cost: 0,
                    goal_idx: idx as u32,
                    cell: g.cell,
                });
            }
        }
    }

    while let Some(Entry {
        cost,
        goal_idx,
        cell,
    }) = heap.pop()
    {
        pops += 1;
        match best.get(&cell) {
            Some(&(c, gi, _)) if (c, gi) == (cost, goal_idx) => {}
            _ => continue,
        }
        if cell == start {
            // Reconstruct start -> goal by following next pointers.
            let mut waypoints = vec![start];
            let mut cur = start;
            while let Some(&(_, _, Some(next))) = best.get(&cur) {
                waypoints.push(next);
                cur = next;
            }
            return Ok(MotionPlan {
                waypoints,
                cost,
                gripper_ops: Vec::new(),
                effort: pops,
            });
        }
        for n in cell.neighbors4() {
            if !ws.free(n) {
                continue;
            }
            let cand = (cost + 1, goal_idx);
            let improves = match best.get(&n) {
                Some(&(c, gi, _)) => cand < (c, gi),
                None => true,
            };
            if improves {
                best.insert(n, (cand.0, cand.1, Some(cell)));
                heap.push(Entry {
                    cost: cand.0,
                    goal_idx: cand.1,
                    cell: n,
                });
            }
        }
    }
    Err(MotionError::NoPath)
}

/// Rectilinear two-segment path between cells, if collision-free. Tries
/// x-first then y-first; returns the unit-step cells after `a`.
fn l_path(ws: &Workspace, a: Cell, b: Cell) -> Option<Vec<Cell>> {
    'variant: for x_first in [true, false] {
        let mut cells = Vec::new();
        let mut cur = a;
        let order: [bool; 2] = if x_first { [true, false] } else { [false, true] };
        for do_x in order {
            loop {
                let step = if do_x {
                    match b.0.cmp(&cur.0) {
                        core::cmp::Ordering::Equal => break,
                        core::cmp::Ordering::Greater => Cell(cur.0 + 1, cur.1),
                        core::cmp::Ordering::Less => Cell(cur.0 - 1, cur.1),
                    }
                } else {
                    match b.1.cmp(&cur.1) {
                        core::cmp::Ordering::Equal => break,
                        core::cmp::Ordering::Greater => Cell(cur.0, cur.1 + 1),
                        core::cmp::Ordering::Less => Cell(cur.0, cur.1 - 1),
                    }
                };
                if !ws.free(step) {
                    continue 'variant;
                }
                cells.push(step);
                cur = step;
            }
        }
        return Some(cells);
    }
    None
}

/// Goal-biased randomized tree over the grid with choose-parent/rewire over
/// rectilinear segments, followed by shortcut smoothing. Anytime within the
/// iteration budget; deterministic for a fixed seed.
fn sampling_multi_goal(
    ws: &Workspace,
    start: Cell,
    goals: &[Configuration],
    seed: u64,
    iterations: u32,
) -> Result<MotionPlan, MotionError> {
    const GOAL_BIAS: f64 = 0.25;
    const NEIGHBOR_RADIUS: u32 = 6;

    let goal_cells: Vec<Cell> = {
        let mut seen = BTreeSet::new();
        goals
            .iter()
            .map(|g| g.cell)
            .filter(|c| ws.free(*c) && seen.insert(*c))
            .collect()
    };
    if goal_cells.is_empty() {
        return Err(MotionError::NoPath);
    }

    struct Node {
        cell: Cell,
        parent: usize,
        cost: u32,
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = vec![Node {
        cell: start,
        parent: usize::MAX,
        cost: 0,
    }];
    let mut by_cell: BTreeMap<Cell, usize> = BTreeMap::new();
    by_cell.insert(start, 0);
    let mut best: Option<(u32, usize, Cell)> = None;

    // Direct connection attempt; covers open workspaces immediately.
    for &g in &goal_cells {
        if let Some(seg) = l_path(ws, start, g) {
            let cost = seg.len() as u32;
            if best.map(|(c, _, _)| cost < c).unwrap_or(true) {
                best = Some((cost, 0, g));
            }
        }
    }

    for _ in 0..iterations {
        let sample = if rng.gen_bool(GOAL_BIAS) {
            *goal_cells
                .choose(&mut rng)
                .expect("goal set checked non-empty")
        } else {
            Cell(rng.gen_range(0..ws.width), rng.gen_range(0..ws.height))
        };
        if !ws.free(sample) {
            continue;
        }
        // Nearest tree node by manhattan distance (ties: lowest index).
        let mut nearest = 0usize;
        let mut nearest_d = u32::MAX;
        for (i, n) in nodes.iter().enumerate() {
            let d = n.cell.manhattan(sample);
            if d < nearest_d {
                nearest_d = d;
                nearest = i;
            }
        }
        if nearest_d == 0 {
            continue;
        }
        let seg = match l_path(ws, nodes[nearest].cell, sample) {
            Some(s) => s,
            None => continue,
        };
        let new_cell = sample;
        let base_cost = nodes[nearest].cost + seg.len() as u32;
        if by_cell
            .get(&new_cell)
            .is_some_and(|&i| nodes[i].cost <= base_cost)
        {
            continue;
        }
        // Choose-parent among near nodes, then insert.
        let mut parent = nearest;
        let mut cost = base_cost;
        for (i, n) in nodes.iter().enumerate() {
            let d = n.cell.manhattan(new_cell);
            if d == 0 || d > NEIGHBOR_RADIUS {
                continue;
            }
            if n.cost + d < cost && l_path(ws, n.cell, new_cell).is_some() {
                parent = i;
                cost = n.cost + d;
            }
        }
        let new_idx = nodes.len();
        nodes.push(Node {
            cell: new_cell,
            parent,
            cost,
        });
        by_cell.insert(new_cell, new_idx);
        // Rewire near nodes through the new one.
        for i in 0..new_idx {
            let d = nodes[i].cell.manhattan(new_cell);
            if d == 0 || d > NEIGHBOR_RADIUS {
                continue;
            }
            if cost + d < nodes[i].cost && l_path(ws, new_cell, nodes[i].cell).is_some() {
                nodes[i].parent = new_idx;
                nodes[i].cost = cost + d;
            }
        }
        // Try to finish from the new node.
        for &g in &goal_cells {
            if let Some(seg) = l_path(ws, new_cell, g) {
                let total = cost + seg.len() as u32;
                if best.map(|(c, _, _)| total < c).unwrap_or(true) {
                    best = Some((total, new_idx, g));
                }
            }
        }
    }

    let (_, node_idx, goal) = best.ok_or(MotionError::NoPath)?;
    // Chain of tree cells start -> ... -> node -> goal.
    let mut chain = vec![goal];
    let mut i = node_idx;
    loop {
        chain.push(nodes[i].cell);
        if nodes[i].parent == usize::MAX {
            break;
        }
        i = nodes[i].parent;
    }
    chain.reverse();
    chain.dedup();
    smooth_chain(ws, &mut chain);
    let mut waypoints = vec![chain[0]];
    for w in chain.windows(2) {
        let seg = l_path(ws, w[0], w[1]).expect("smoothed chain segments stay valid");
        waypoints.extend(seg);
    }
    let cost = (waypoints.len() - 1) as u32;
    Ok(MotionPlan {
        waypoints,
        cost,
        gripper_ops: Vec::new(),
        effort: iterations as u64,
    })
}

/// Greedy shortcut pass: replace chain detours with direct rectilinear
/// segments wherever collision-free and strictly shorter.
fn smooth_chain(ws: &Workspace, chain: &mut Vec<Cell>) {
    for _ in 0..3 {
        let mut changed = false;
        let mut i = 0;
        while i + 2 < chain.len() {
            let mut j = chain.len() - 1;
            while j > i + 1 {
                let direct = chain[i].manhattan(chain[j]);
                let via: u32 = chain[i..=j].windows(2).map(|w| w[0].manhattan(w[1])).sum();
                if direct < via && l_path(ws, chain[i], chain[j]).is_some() {
                    chain.drain(i + 1..j);
                    changed = true;
                    break;
                }
                j -= 1;
            }
            i += 1;
        }
        if !changed {
            break;
        }
    }
}

/// Result of refining one task into motion plans.
#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub legs: Vec<MotionPlan>,
    pub total_cost: u32,
    pub final_config: Configuration,
    /// Object cell chosen by the consuming layer, when the template has one.
    pub picked: Option<(String, Cell)>,
}

/// Refine a task into a sequence of motion plans, layer by layer: solve a
/// multi-goal query from the current configuration to each layer in turn,
/// accumulate cost, and move the current configuration to the reached goal.
/// Stops at the first unreachable layer.
pub fn refine_task_to_motion(
    scene: &Scene<'_>,
    template: ActionTemplate,
    task: &TaskDef,
    q_current: Configuration,
    mode: PlanningMode,
) -> Result<Refinement, MotionError> {
    let graph = get_goals_from_scene(template, scene, task)?;
    let mut legs = Vec::new();
    let mut total_cost = 0u32;
    let mut q = q_current;
    let mut picked = None;
    for (layer_idx, layer) in graph.layers.iter().enumerate().skip(1) {
        let leg_mode = match mode {
            // Decorrelate successive sampling queries deterministically.
            PlanningMode::Sampling { seed, iterations } => PlanningMode::Sampling {
                seed: seed.wrapping_add(layer_idx as u64),
                iterations,
            },
            PlanningMode::Exact => PlanningMode::Exact,
        };
        let mut plan = match multi_goal_plan(scene.workspace, q, &layer.goals, leg_mode) {
            Ok(p) => p,
            Err(MotionError::NoPath) | Err(MotionError::NoGoals) => {
                return Err(MotionError::MotionFailure(layer_idx))
            }
            Err(e) => return Err(e),
        };
        let end = plan.endpoint();
        let mut gripper = q.gripper;
        if let Some(op) = layer.gripper_after {
            plan.gripper_ops.push((plan.waypoints.len() - 1, op));
            gripper = op;
        }
        if layer.consumes {
            picked = Some((graph.pick_label.clone(), end));
        }
        total_cost += plan.cost;
        legs.push(plan);
        q = Configuration { cell: end, gripper };
    }
    Ok(Refinement {
        legs,
        total_cost,
        final_config: q,
        picked,
    })
}

/// Index of the goal closest to `from` by straight-line distance (the
/// single-goal baseline's selection rule). Ties break on goal order.
pub fn closest_goal_by_euclid(from: Cell, goals: &[Configuration]) -> Option<usize> {
    goals
        .iter()
        .enumerate()
        .min_by_key(|(i, g)| (from.sq_dist(g.cell), *i))
        .map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn open_grid(w: i32, h: i32) -> Workspace {
        Workspace {
            width: w,
            height: h,
            obstacles: BTreeSet::new(),
            locations: BTreeMap::new(),
            safety_radius: 0.0,
            robot_speed: 1.0,
            slowdown_factor: 1.0,
        }
    }

    #[test]
    fn exact_reaches_nearest_goal_on_open_grid() {
        let ws = open_grid(10, 10);
        let plan = multi_goal_plan(
            &ws,
            Configuration::at(Cell(0, 0)),
            &[Configuration::at(Cell(0, 3)), Configuration::at(Cell(5, 0))],
            PlanningMode::Exact,
        )
        .unwrap();
        assert_eq!(plan.cost, 3);
        assert_eq!(plan.endpoint(), Cell(0, 3));
        assert_eq!(plan.waypoints.len(), 4);
    }

    #[test]
    fn goal_equal_to_start_costs_zero() {
        let ws = open_grid(4, 4);
        let plan = multi_goal_plan(
            &ws,
            Configuration::at(Cell(2, 2)),
            &[Configuration::at(Cell(2, 2))],
            PlanningMode::Exact,
        )
        .unwrap();
        assert_eq!(plan.cost, 0);
        assert_eq!(plan.waypoints, alloc::vec![Cell(2, 2)]);
    }

    #[test]
    fn walled_goal_reports_no_path() {
        let mut ws = open_grid(7, 7);
        for c in Cell(3, 3).neighbors4() {
            ws.obstacles.insert(c);
        }
        let err = multi_goal_plan(
            &ws,
            Configuration::at(Cell(0, 0)),
            &[Configuration::at(Cell(3, 3))],
            PlanningMode::Exact,
        )
        .unwrap_err();
        assert_eq!(err, MotionError::NoPath);
    }

    #[test]
    fn waypoints_are_unit_steps_and_avoid_obstacles() {
        let mut ws = open_grid(12, 12);
        for y in 0..10 {
            ws.obstacles.insert(Cell(5, y));
        }
        let plan = multi_goal_plan(
            &ws,
            Configuration::at(Cell(0, 0)),
            &[Configuration::at(Cell(10, 0))],
            PlanningMode::Exact,
        )
        .unwrap();
        for w in plan.waypoints.windows(2) {
            assert_eq!(w[0].manhattan(w[1]), 1);
            assert!(ws.free(w[1]));
        }
        assert_eq!(plan.cost as usize, plan.waypoints.len() - 1);
    }

    #[test]
    fn sampling_matches_exact_on_open_grid() {
        let ws = open_grid(20, 20);
        let goals = [Configuration::at(Cell(17, 3)), Configuration::at(Cell(3, 17))];
        let exact =
            multi_goal_plan(&ws, Configuration::at(Cell(0, 0)), &goals, PlanningMode::Exact)
                .unwrap();
        let sampled = multi_goal_plan(
            &ws,
            Configuration::at(Cell(0, 0)),
            &goals,
            PlanningMode::Sampling {
                seed: 11,
                iterations: 500,
            },
        )
        .unwrap();
        assert_eq!(sampled.cost, exact.cost);
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let mut ws = open_grid(25, 25);
        for y in 2..23 {
            ws.obstacles.insert(Cell(12, y));
        }
        let goals = [Configuration::at(Cell(22, 22))];
        let a = multi_goal_plan(
            &ws,
            Configuration::at(Cell(1, 1)),
            &goals,
            PlanningMode::Sampling {
                seed: 5,
                iterations: 800,
            },
        )
        .unwrap();
        let b = multi_goal_plan(
            &ws,
            Configuration::at(Cell(1, 1)),
            &goals,
            PlanningMode::Sampling {
                seed: 5,
                iterations: 800,
            },
        )
        .unwrap();
        assert_eq!(a, b);
    }

    fn cube_task() -> TaskDef {
        use crate::model::{DurationInterval, WorkerId};
        TaskDef {
            id: "PickPlace_A1".to_string(),
            production_target: "DoRow_1".to_string(),
            allowed_workers: [WorkerId::Robot].into_iter().collect(),
            per_worker_duration: [(WorkerId::Robot, DurationInterval::new(1.0, 2.0).unwrap())]
                .into_iter()
                .collect(),
            action_template_ref: Some("pick_and_place".to_string()),
            goal_labels: ["blue_cube".to_string(), "slot_A1".to_string()]
                .into_iter()
                .collect(),
        }
    }

    fn workspace_with_cube_and_slot() -> Workspace {
        let mut ws = open_grid(10, 10);
        ws.locations
            .insert("blue_cube".to_string(), alloc::vec![Cell(2, 2)]);
        ws.locations
            .insert("slot_A1".to_string(), alloc::vec![Cell(5, 5)]);
        ws.locations
            .insert("robot_home".to_string(), alloc::vec![Cell(0, 0)]);
        ws
    }

    #[test]
    fn single_cube_pre_pick_layer_has_four_approaches() {
        let ws = workspace_with_cube_and_slot();
        let scene = Scene::initial(&ws);
        let graph =
            get_goals_from_scene(ActionTemplate::PickAndPlace, &scene, &cube_task()).unwrap();
        assert_eq!(graph.layers[1].name, "pre_pick");
        assert_eq!(graph.layers[1].goals.len(), 4);
        assert_eq!(graph.layers[0].goals.len(), 1);
    }

    #[test]
    fn pre_pick_layer_counts_free_neighbors_over_all_cubes() {
        let mut ws = workspace_with_cube_and_slot();
        ws.locations.insert(
            "blue_cube".to_string(),
            alloc::vec![Cell(2, 2), Cell(7, 7), Cell(2, 3)],
        );
        let scene = Scene::initial(&ws);
        let graph =
            get_goals_from_scene(ActionTemplate::PickAndPlace, &scene, &cube_task()).unwrap();
        let mut expected = BTreeSet::new();
        for cube in [Cell(2, 2), Cell(7, 7), Cell(2, 3)] {
            for n in cube.neighbors4() {
                if ws.free(n) {
                    expected.insert(n);
                }
            }
        }
        assert_eq!(graph.layers[1].goals.len(), expected.len());
    }

    #[test]
    fn unknown_label_is_unresolved() {
        let ws = workspace_with_cube_and_slot();
        let scene = Scene::initial(&ws);
        let mut task = cube_task();
        task.goal_labels.insert("green_cube".to_string());
        let err = get_goals_from_scene(ActionTemplate::PickAndPlace, &scene, &task).unwrap_err();
        assert_eq!(err, MotionError::UnresolvedLabel("green_cube".to_string()));
    }

    #[test]
    fn refinement_produces_pick_and_place_legs() {
        let ws = workspace_with_cube_and_slot();
        let scene = Scene::initial(&ws);
        let r = refine_task_to_motion(
            &scene,
            ActionTemplate::PickAndPlace,
            &cube_task(),
            scene.robot_config,
            PlanningMode::Exact,
        )
        .unwrap();
        assert_eq!(r.legs.len(), 5);
        assert_eq!(r.total_cost, r.legs.iter().map(|l| l.cost).sum::<u32>());
        assert_eq!(r.picked, Some(("blue_cube".to_string(), Cell(2, 2))));
        assert_eq!(r.final_config.cell, Cell(5, 5));
        assert_eq!(r.final_config.gripper, Gripper::Open);
    }

    #[test]
    fn walled_cube_fails_with_no_free_approach() {
        let mut ws = workspace_with_cube_and_slot();
        for c in Cell(2, 2).neighbors4() {
            ws.obstacles.insert(c);
        }
        let scene = Scene::initial(&ws);
        let err = refine_task_to_motion(
            &scene,
            ActionTemplate::PickAndPlace,
            &cube_task(),
            scene.robot_config,
            PlanningMode::Exact,
        )
        .unwrap_err();
        assert_eq!(err, MotionError::NoFreeApproach("blue_cube".to_string()));
    }

    #[test]
    fn unreachable_cube_fails_at_layer_one() {
        let mut ws = workspace_with_cube_and_slot();
        // Box the cube in at distance 2: approach cells exist but are cut off.
        for d in -2i32..=2 {
            ws.obstacles.insert(Cell(2 + d, 4));
            ws.obstacles.insert(Cell(2 + d, 0));
            ws.obstacles.insert(Cell(0, 2 + d));
            ws.obstacles.insert(Cell(4, 2 + d));
        }
        let mut scene = Scene::initial(&ws);
        scene.robot_config = Configuration::at(Cell(8, 8));
        let err = refine_task_to_motion(
            &scene,
            ActionTemplate::PickAndPlace,
            &cube_task(),
            scene.robot_config,
            PlanningMode::Exact,
        )
        .unwrap_err();
        assert_eq!(err, MotionError::MotionFailure(1));
    }

    #[test]
    fn closest_goal_prefers_straight_line_metric() {
        // (3,3) is closer by euclid while (5,0) is closer by manhattan.
        let goals = [Configuration::at(Cell(3, 3)), Configuration::at(Cell(5, 0))];
        assert_eq!(closest_goal_by_euclid(Cell(0, 0), &goals), Some(0));
        assert!(Cell(0, 0).manhattan(Cell(3, 3)) > Cell(0, 0).manhattan(Cell(5, 0)));
    }
}
