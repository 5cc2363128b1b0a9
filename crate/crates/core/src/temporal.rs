//! Simple temporal network (STN) underlying the flexible timelines.
//!
//! Time points are token starts/ends plus a unique origin fixed at 0.
//! Binary constraints bound the difference of two points; propagation is
//! all-pairs tightening over the distance matrix (Floyd–Warshall on build,
//! single-edge incremental relaxation afterwards). Inconsistency is a
//! return value, not an error, and comes with a negative-cycle witness.
//!
//! Uncertainty handling is deliberately conservative: durations of
//! uncontrollable and partially controllable tokens are pinned to their
//! upper bound, so any schedule consistent here stays executable under any
//! realized duration below that bound. Full dynamic-controllability
//! checking is out of scope.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::model::{ControllabilityTag, Token};

/// Absolute tolerance for consistency comparisons.
pub const TIME_EPS: f64 = 1e-9;

/// Identifier of an STN time point (index into the network).
pub type PointId = usize;

/// What a time point stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointKind {
    Origin,
    TokenStart(u32),
    TokenEnd(u32),
}

/// `lower <= to - from <= upper`. Infinite bounds mean "unconstrained on
/// that side".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StnConstraint {
    pub from: PointId,
    pub to: PointId,
    pub lower: f64,
    pub upper: f64,
}

/// Errors for operations with preconditions; inconsistency is not one.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StnError {
    #[error("token {0} already has time points")]
    DuplicateToken(u32),
    #[error("network not propagated (or inconsistent)")]
    NotPropagated,
    #[error("invalid constraint bounds")]
    BadConstraint,
    #[error("unknown point")]
    UnknownPoint,
}

/// Result of [`Stn::propagate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Propagation {
    /// Tightest feasible `[lo, hi]` window per time point.
    Consistent(BTreeMap<PointId, (f64, f64)>),
    /// A witness negative cycle (point sequence, first == last).
    Inconsistent(Vec<PointId>),
}

impl Propagation {
    pub fn is_consistent(&self) -> bool {
        matches!(self, Propagation::Consistent(_))
    }
}

#[derive(Debug, Clone)]
pub struct Stn {
    kinds: Vec<PointKind>,
    /// Flattened `n x n` shortest-path matrix; `dist[u*n+v]` bounds `v - u`.
    dist: Vec<f64>,
    constraints: Vec<StnConstraint>,
    token_points: BTreeMap<u32, (PointId, PointId)>,
    horizon: f64,
    dirty: bool,
    consistent: bool,
}

#[inline]
fn sum3(a: f64, b: f64, c: f64) -> f64 {
    if a == f64::INFINITY || b == f64::INFINITY || c == f64::INFINITY {
        f64::INFINITY
    } else {
        a + b + c
    }
}

impl Stn {
    pub fn new(horizon: f64) -> Self {
        Self {
            kinds: vec![PointKind::Origin],
            dist: vec![0.0],
            constraints: Vec::new(),
            token_points: BTreeMap::new(),
            horizon,
            dirty: false,
            consistent: true,
        }
    }

    pub const ORIGIN: PointId = 0;

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.len() == 1
    }

    pub fn kind(&self, p: PointId) -> Option<PointKind> {
        self.kinds.get(p).copied()
    }

    pub fn constraints(&self) -> &[StnConstraint] {
        &self.constraints
    }

    /// Start/end points of a token, if present.
    pub fn token_points(&self, token: u32) -> Option<(PointId, PointId)> {
        self.token_points.get(&token).copied()
    }

    fn n(&self) -> usize {
        self.kinds.len()
    }

    #[inline]
    fn d(&self, u: PointId, v: PointId) -> f64 {
        self.dist[u * self.n() + v]
    }

    fn add_point(&mut self, kind: PointKind) -> PointId {
        let old_n = self.n();
        let new_n = old_n + 1;
        let mut nd = vec![f64::INFINITY; new_n * new_n];
        for u in 0..old_n {
            nd[u * new_n..u * new_n + old_n].copy_from_slice(&self.dist[u * old_n..(u + 1) * old_n]);
        }
        nd[old_n * new_n + old_n] = 0.0;
        self.dist = nd;
        self.kinds.push(kind);
        old_n
    }

    /// Record `lower <= to - from <= upper` and relax the matrix through the
    /// new edges. Cheap (`O(n^2)`) while the network stays consistent.
    pub fn add_constraint(&mut self, c: StnConstraint) -> Result<(), StnError> {
        if c.from >= self.n() || c.to >= self.n() {
            return Err(StnError::UnknownPoint);
        }
        if !(c.lower <= c.upper) {
            return Err(StnError::BadConstraint);
        }
        self.constraints.push(c);
        if c.upper < f64::INFINITY {
            self.relax_edge(c.from, c.to, c.upper);
        }
        if c.lower > f64::NEG_INFINITY {
            self.relax_edge(c.to, c.from, -c.lower);
        }
        Ok(())
    }

    fn relax_edge(&mut self, u: PointId, v: PointId, w: f64) {
        if !self.consistent {
            return;
        }
        let n = self.n();
        if sum3(0.0, w, 0.0) >= self.d(u, v) {
            return;
        }
        // dist[i][j] <- min(dist[i][j], dist[i][u] + w + dist[v][j])
        for i in 0..n {
            let iu = self.dist[i * n + u];
            if iu == f64::INFINITY {
                continue;
            }
            for j in 0..n {
                let vj = self.dist[v * n + j];
                let cand = sum3(iu, w, vj);
                if cand < self.dist[i * n + j] {
                    self.dist[i * n + j] = cand;
                }
            }
        }
        for p in 0..n {
            if self.dist[p * n + p] < -TIME_EPS {
                self.consistent = false;
                return;
            }
        }
    }

    /// Insert the start/end points of `token` with its duration constraint
    /// and the `[0, horizon]` window from the origin. Durations of
    /// `Uncontrollable` / `PartiallyControllable` tokens are pinned to their
    /// upper bound (worst-case bounding).
    pub fn add_token(&mut self, token: &Token) -> Result<(PointId, PointId), StnError> {
        if self.token_points.contains_key(&token.id) {
            return Err(StnError::DuplicateToken(token.id));
        }
        let start = self.add_point(PointKind::TokenStart(token.id));
        let end = self.add_point(PointKind::TokenEnd(token.id));
        self.token_points.insert(token.id, (start, end));

        let (d_lo, d_hi) = match token.tag {
            ControllabilityTag::Controllable => {
                (token.duration_interval.min(), token.duration_interval.max())
            }
            _ => (token.duration_interval.max(), token.duration_interval.max()),
        };
        self.add_constraint(StnConstraint {
            from: start,
            to: end,
            lower: d_lo,
            upper: d_hi,
        })?;
        self.add_constraint(StnConstraint {
            from: Self::ORIGIN,
            to: start,
            lower: 0.0,
            upper: self.horizon,
        })?;
        let e_lo = token.end_interval.0.max(0.0);
        let e_hi = token.end_interval.1.min(self.horizon);
        self.add_constraint(StnConstraint {
            from: Self::ORIGIN,
            to: end,
            lower: e_lo,
            upper: e_hi,
        })?;
        Ok((start, end))
    }

    /// All-pairs tightening from scratch. Idempotent: already-tight
    /// matrices come out unchanged.
    pub fn propagate(&mut self) -> Propagation {
        if self.dirty {
            self.rebuild();
        }
        if !self.consistent {
            return Propagation::Inconsistent(self.negative_cycle());
        }
        let mut map = BTreeMap::new();
        for p in 0..self.n() {
            map.insert(p, self.window(p));
        }
        Propagation::Consistent(map)
    }

    fn rebuild(&mut self) {
        let n = self.n();
        self.dist = vec![f64::INFINITY; n * n];
        for p in 0..n {
            self.dist[p * n + p] = 0.0;
        }
        self.consistent = true;
        for c in self.constraints.clone() {
            if c.upper < f64::INFINITY {
                let slot = &mut self.dist[c.from * n + c.to];
                *slot = slot.min(c.upper);
            }
            if c.lower > f64::NEG_INFINITY {
                let slot = &mut self.dist[c.to * n + c.from];
                *slot = slot.min(-c.lower);
            }
        }
        for k in 0..n {
            for i in 0..n {
                let ik = self.dist[i * n + k];
                if ik == f64::INFINITY {
                    continue;
                }
                for j in 0..n {
                    let cand = sum3(ik, self.dist[k * n + j], 0.0);
                    if cand < self.dist[i * n + j] {
                        self.dist[i * n + j] = cand;
                    }
                }
            }
        }
        for p in 0..n {
            if self.dist[p * n + p] < -TIME_EPS {
                self.consistent = false;
            }
        }
        self.dirty = false;
    }

    /// Bellman-Ford over the stored constraints to extract a witness cycle.
    fn negative_cycle(&self) -> Vec<PointId> {
        let n = self.n();
        let mut edges: Vec<(PointId, PointId, f64)> = Vec::new();
        for c in &self.constraints {
            if c.upper < f64::INFINITY {
                edges.push((c.from, c.to, c.upper));
            }
            if c.lower > f64::NEG_INFINITY {
                edges.push((c.to, c.from, -c.lower));
            }
        }
        let mut dist = vec![0.0f64; n];
        let mut parent = vec![usize::MAX; n];
        let mut touched = 0usize;
        for _ in 0..n {
            touched = usize::MAX;
            for &(u, v, w) in &edges {
                if dist[u] + w < dist[v] - TIME_EPS {
                    dist[v] = dist[u] + w;
                    parent[v] = u;
                    touched = v;
                }
            }
            if touched == usize::MAX {
                break;
            }
        }
        if touched == usize::MAX {
            return Vec::new();
        }
        // Walk back n steps to land inside the cycle, then trace it.
        let mut v = touched;
        for _ in 0..n {
            v = parent[v];
        }
        let mut cycle = vec![v];
        let mut u = parent[v];
        while u != v {
            cycle.push(u);
            u = parent[u];
        }
        cycle.push(v);
        cycle.reverse();
        cycle
    }

    pub fn is_consistent(&mut self) -> bool {
        if self.dirty {
            self.rebuild();
        }
        self.consistent
    }

    /// Tightest `[lo, hi]` window of a point (propagated network only).
    pub fn window(&self, p: PointId) -> (f64, f64) {
        (-self.d(p, Self::ORIGIN), self.d(Self::ORIGIN, p))
    }

    pub fn lower(&self, p: PointId) -> f64 {
        -self.d(p, Self::ORIGIN)
    }

    pub fn upper(&self, p: PointId) -> f64 {
        self.d(Self::ORIGIN, p)
    }

    /// Tightest lower bound on `b - a` entailed by the network.
    pub fn min_distance(&self, a: PointId, b: PointId) -> f64 {
        -self.d(b, a)
    }

    /// Whether `a <= b` holds in every consistent schedule.
    pub fn entails_before(&self, a: PointId, b: PointId) -> bool {
        self.d(b, a) <= TIME_EPS
    }

    /// Earliest schedule: every point at its lower bound. A classical STN
    /// property guarantees the result satisfies every stored constraint.
    pub fn earliest_schedule(&mut self) -> Result<BTreeMap<PointId, f64>, StnError> {
        if self.dirty {
            self.rebuild();
        }
        if !self.consistent {
            return Err(StnError::NotPropagated);
        }
        let mut out = BTreeMap::new();
        for p in 0..self.n() {
            out.insert(p, self.lower(p));
        }
        Ok(out)
    }
}
