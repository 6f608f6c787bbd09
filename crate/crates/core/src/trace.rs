//! Straight-line flow across charts and first-hit times for obstacles at cone points.
//!
//! The flow is traced chord by chord: inside a chart the trajectory is a
//! straight segment ending on an edge, and crossing the edge applies the
//! gluing translation. A chord that ends within the corner tolerance of a
//! vertex is a singular impact; those initial conditions form a null set and
//! callers discard or resample them.

use thiserror::Error;

use crate::geom::Vec2;
use crate::surface::{CornerRef, EdgeRef, Polygon, TranslationSurface};
use crate::Scalar;

/// A point of the unit tangent bundle: position in a chart plus a direction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitTangentState<T> {
    pub chart: usize,
    pub point: Vec2<T>,
    pub theta: T,
}

impl<T: Scalar> UnitTangentState<T> {
    pub fn new(chart: usize, point: Vec2<T>, theta: T) -> Self {
        Self {
            chart,
            point,
            theta,
        }
    }
}

/// Outcome of a free path computation. Times are in surface length units at unit speed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HitResult<T> {
    Hit(T),
    /// No obstacle met before the cap, which is carried along.
    Censored(T),
    /// The trajectory ran into a cone point before meeting an obstacle.
    SingularImpact,
}

impl<T: Scalar> HitResult<T> {
    /// Hitting time, `+∞` for censored trajectories and `None` for singular ones.
    pub fn time_or_inf(&self) -> Option<T> {
        match *self {
            HitResult::Hit(t) => Some(t),
            HitResult::Censored(_) => Some(T::infinity()),
            HitResult::SingularImpact => None,
        }
    }

    pub fn hit_time(&self) -> Option<T> {
        match *self {
            HitResult::Hit(t) => Some(t),
            _ => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error("trajectory hit a cone point at time {time}")]
    SingularImpact { time: f64 },
    #[error("invalid obstacle radius {epsilon}: {reason}")]
    InvalidEpsilon { epsilon: f64, reason: String },
    #[error("invalid state: {0}")]
    InvalidState(String),
}

/// Straight piece of trajectory inside one chart.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Chord<T> {
    pub chart: usize,
    pub from: Vec2<T>,
    pub to: Vec2<T>,
    pub length: T,
}

/// Where a chord starts relative to its chart boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Origin {
    Interior,
    /// On edge `i`, entering the chart.
    Edge(usize),
    /// At vertex `i`, heading into that corner's sector.
    Vertex(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum ChordEnd<T> {
    Exit { t: T, edge: usize, s: T },
    Corner { t: T, vertex: usize },
}

impl<T: Scalar> ChordEnd<T> {
    #[inline]
    pub(crate) fn t(&self) -> T {
        match *self {
            ChordEnd::Exit { t, .. } | ChordEnd::Corner { t, .. } => t,
        }
    }

    #[inline]
    pub(crate) fn is_corner(&self) -> bool {
        matches!(self, ChordEnd::Corner { .. })
    }
}

/// First boundary event of the ray `o + t·d` (`|d| = 1`) inside `poly`.
pub(crate) fn chord_end<T: Scalar>(
    poly: &Polygon<T>,
    o: Vec2<T>,
    d: Vec2<T>,
    origin: Origin,
) -> ChordEnd<T> {
    let n = poly.len();
    let tol = T::corner_tol();
    let mut best: Option<(T, usize, T, T)> = None;
    for j in 0..n {
        match origin {
            Origin::Edge(k) if k == j => continue,
            Origin::Vertex(v) if j == v || j == (v + n - 1) % n => continue,
            _ => {}
        }
        let (a, b) = poly.edge(j);
        let e = b - a;
        let denom = d.cross(e);
        // only edges the ray leaves through
        if !(denom > T::zero()) {
            continue;
        }
        let ao = a - o;
        let t = ao.cross(e) / denom;
        let s = ao.cross(d) / denom;
        let len = e.norm();
        let slack = tol / len;
        if t < -tol || s < -slack || s > T::one() + slack {
            continue;
        }
        if best.is_none_or(|(bt, ..)| t < bt) {
            best = Some((t.max(T::zero()), j, s.max(T::zero()).min(T::one()), len));
        }
    }
    let Some((t_exit, edge, s, len)) = best else {
        // numerically lost (ray grazing a vertex of a non-convex chart); treat as singular
        return ChordEnd::Corner {
            t: T::zero(),
            vertex: 0,
        };
    };
    if s * len < tol {
        return ChordEnd::Corner {
            t: t_exit,
            vertex: edge,
        };
    }
    if (T::one() - s) * len < tol {
        return ChordEnd::Corner {
            t: t_exit,
            vertex: (edge + 1) % n,
        };
    }
    // vertices grazed strictly inside the chord
    let mut graze: Option<(T, usize)> = None;
    for k in 0..n {
        if origin == Origin::Vertex(k) {
            continue;
        }
        let w = poly.vertex(k) - o;
        let tk = w.dot(d);
        if tk <= tol || tk >= t_exit - tol {
            continue;
        }
        if d.cross(w).abs() < tol && graze.is_none_or(|(g, _)| tk < g) {
            graze = Some((tk, k));
        }
    }
    if let Some((t, vertex)) = graze {
        return ChordEnd::Corner { t, vertex };
    }
    ChordEnd::Exit { t: t_exit, edge, s }
}

/// Classifies a point of a chart as interior, on an edge, or at a vertex.
pub(crate) fn locate<T: Scalar>(poly: &Polygon<T>, p: Vec2<T>) -> Origin {
    let tol = T::corner_tol();
    for k in 0..poly.len() {
        if (poly.vertex(k) - p).norm() < tol {
            return Origin::Vertex(k);
        }
    }
    for j in 0..poly.len() {
        let (a, b) = poly.edge(j);
        let e = b - a;
        let len = e.norm();
        let dist = e.cross(p - a).abs() / len;
        let s = (p - a).dot(e) / (len * len);
        if dist < tol && s > T::zero() && s < T::one() {
            return Origin::Edge(j);
        }
    }
    Origin::Interior
}

/// If the planar direction `dir` leaves the cone point through the sector of
/// `corner`, returns it (snapped onto the outgoing edge when within tolerance).
///
/// Sectors are half-open, `[outgoing edge, incoming edge reversed)`, so every
/// direction at a cone point of angle 2π(α+1) is claimed by exactly α+1 corners.
pub(crate) fn sector_direction<T: Scalar>(
    surface: &TranslationSurface<T>,
    corner: CornerRef,
    dir: Vec2<T>,
) -> Option<Vec2<T>> {
    let poly = surface.polygon(corner.polygon);
    let out = poly.edge_vector(corner.vertex);
    let interior = poly.interior_angle(corner.vertex);
    let delta = T::rel_tol();
    let mut rel = out.angle_to(dir);
    if rel < -delta {
        rel = rel + T::TAU();
    }
    if rel >= interior - delta {
        return None;
    }
    if rel.abs() <= delta {
        Some(out.normalized())
    } else {
        Some(dir)
    }
}

/// Cursor following a straight trajectory across charts.
pub(crate) struct Walker<'s, T> {
    surface: &'s TranslationSurface<T>,
    pub chart: usize,
    pub pos: Vec2<T>,
    pub dir: Vec2<T>,
    origin: Origin,
    pub elapsed: T,
    zero_steps: u32,
}

impl<'s, T: Scalar> Walker<'s, T> {
    pub(crate) fn new(
        surface: &'s TranslationSurface<T>,
        chart: usize,
        pos: Vec2<T>,
        dir: Vec2<T>,
        origin: Origin,
    ) -> Self {
        let mut w = Self {
            surface,
            chart,
            pos,
            dir,
            origin,
            elapsed: T::zero(),
            zero_steps: 0,
        };
        // a start on an edge the ray leaves through belongs to the glued chart
        if let Origin::Edge(j) = origin {
            let poly = surface.polygon(chart);
            let e = poly.edge_vector(j);
            if dir.cross(e) > T::zero() {
                let (a, _) = poly.edge(j);
                let s = (pos - a).dot(e) / e.norm_sq();
                w.jump(j, s.max(T::zero()).min(T::one()));
            }
        }
        w
    }

    /// Walker for a user-supplied state, classifying its position.
    pub(crate) fn from_state(
        surface: &'s TranslationSurface<T>,
        state: &UnitTangentState<T>,
    ) -> Result<Self, TraceError> {
        if state.chart >= surface.polygons().len() {
            return Err(TraceError::InvalidState(format!(
                "chart {} does not exist",
                state.chart
            )));
        }
        if !state.point.x.is_finite() || !state.point.y.is_finite() || !state.theta.is_finite() {
            return Err(TraceError::InvalidState("non-finite state".into()));
        }
        let poly = surface.polygon(state.chart);
        let origin = locate(poly, state.point);
        if let Origin::Vertex(_) = origin {
            return Err(TraceError::SingularImpact { time: 0.0 });
        }
        Ok(Self::new(
            surface,
            state.chart,
            state.point,
            Vec2::from_angle(state.theta),
            origin,
        ))
    }

    #[inline]
    pub(crate) fn polygon(&self) -> &'s Polygon<T> {
        self.surface.polygon(self.chart)
    }

    #[inline]
    pub(crate) fn chord(&self) -> ChordEnd<T> {
        chord_end(self.polygon(), self.pos, self.dir, self.origin)
    }

    fn jump(&mut self, edge: usize, s: T) {
        let (f, p) = self.surface.glued_point(EdgeRef::new(self.chart, edge), s);
        self.chart = f.polygon;
        self.pos = p;
        self.origin = Origin::Edge(f.edge);
    }

    /// Moves to the end of an `Exit` chord and into the glued chart.
    /// Returns `false` for corners or when the walk stalls on zero-length chords.
    pub(crate) fn cross(&mut self, end: &ChordEnd<T>) -> bool {
        match *end {
            ChordEnd::Exit { t, edge, s } => {
                if t <= T::corner_tol() {
                    self.zero_steps += 1;
                    if self.zero_steps > 8 {
                        return false;
                    }
                } else {
                    self.zero_steps = 0;
                }
                self.elapsed = self.elapsed + t;
                self.jump(edge, s);
                true
            }
            ChordEnd::Corner { .. } => false,
        }
    }

    pub(crate) fn state(&self, theta: T) -> UnitTangentState<T> {
        UnitTangentState::new(self.chart, self.pos, theta)
    }
}

/// Follows the state to the edge its ray leaves through and re-enters the glued chart.
pub fn step_across_edge<T: Scalar>(
    surface: &TranslationSurface<T>,
    state: &UnitTangentState<T>,
) -> Result<(UnitTangentState<T>, Chord<T>), TraceError> {
    let mut w = Walker::from_state(surface, state)?;
    let (chart, from) = (w.chart, w.pos);
    let end = w.chord();
    let t = end.t();
    if !w.cross(&end) {
        return Err(TraceError::SingularImpact {
            time: (w.elapsed + t).as_f64(),
        });
    }
    let chord = Chord {
        chart,
        from,
        to: from + w.dir.scale(t),
        length: w.elapsed,
    };
    Ok((w.state(state.theta), chord))
}

/// `φ^t(state)`: the state reached after flowing for time `t ≥ 0`.
pub fn flow<T: Scalar>(
    surface: &TranslationSurface<T>,
    state: &UnitTangentState<T>,
    t: T,
) -> Result<UnitTangentState<T>, TraceError> {
    let mut w = Walker::from_state(surface, state)?;
    loop {
        let end = w.chord();
        let remaining = t - w.elapsed;
        if end.t() >= remaining {
            let p = w.pos + w.dir.scale(remaining);
            return Ok(UnitTangentState::new(w.chart, p, state.theta));
        }
        if !w.cross(&end) {
            return Err(TraceError::SingularImpact {
                time: (w.elapsed + end.t()).as_f64(),
            });
        }
    }
}

fn check_positive_epsilon<T: Scalar>(epsilon: T) -> Result<(), TraceError> {
    if !(epsilon > T::zero()) || !epsilon.is_finite() {
        return Err(TraceError::InvalidEpsilon {
            epsilon: epsilon.as_f64(),
            reason: "must be positive and finite".into(),
        });
    }
    Ok(())
}

/// Closed ε-discs around every cone point, validated against the saddle
/// connection length so that discs are disjoint.
#[derive(Clone, Copy, Debug)]
pub struct CircularObstacles<'s, T> {
    surface: &'s TranslationSurface<T>,
    epsilon: T,
}

impl<'s, T: Scalar> CircularObstacles<'s, T> {
    /// Requires `epsilon < shortest_singularity_separation / 2`.
    pub fn new(surface: &'s TranslationSurface<T>, epsilon: T) -> Result<Self, TraceError> {
        check_positive_epsilon(epsilon)?;
        if let Ok(sep) = surface.shortest_singularity_separation(T::lit(2.0) * epsilon) {
            return Err(TraceError::InvalidEpsilon {
                epsilon: epsilon.as_f64(),
                reason: format!(
                    "must be below half the shortest saddle connection ({})",
                    sep.as_f64() / 2.0
                ),
            });
        }
        Ok(Self { surface, epsilon })
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    /// `τ_ε`: first time the trajectory is in the closed ε-neighbourhood of a cone point.
    ///
    /// Each chart is tested against discs at its own vertices only; the disc
    /// around a cone point is the union of its corner sectors.
    pub fn free_path(
        &self,
        state: &UnitTangentState<T>,
        t_max: T,
    ) -> Result<HitResult<T>, TraceError> {
        let mut w = match Walker::from_state(self.surface, state) {
            Ok(w) => w,
            // a start at a cone point lies in every obstacle
            Err(TraceError::SingularImpact { .. }) => return Ok(HitResult::Hit(T::zero())),
            Err(e) => return Err(e),
        };
        loop {
            let end = w.chord();
            let t_lim = end.t();
            let hit = w
                .polygon()
                .vertices()
                .iter()
                .filter_map(|&c| circle_entry(w.pos, w.dir, c, self.epsilon, t_lim))
                .fold(None, |acc: Option<T>, t| Some(acc.map_or(t, |a| a.min(t))));
            if let Some(t) = hit {
                let total = w.elapsed + t;
                return Ok(if total > t_max {
                    HitResult::Censored(t_max)
                } else {
                    HitResult::Hit(total)
                });
            }
            if w.elapsed + t_lim >= t_max {
                return Ok(HitResult::Censored(t_max));
            }
            if !w.cross(&end) {
                return Ok(HitResult::SingularImpact);
            }
        }
    }
}

/// Smallest `t ∈ [0, t_lim]` with `|o + t·d − c| ≤ ε`.
#[inline]
fn circle_entry<T: Scalar>(o: Vec2<T>, d: Vec2<T>, c: Vec2<T>, eps: T, t_lim: T) -> Option<T> {
    let tol = T::corner_tol();
    let w = o - c;
    let b = w.dot(d);
    let cc = w.norm_sq() - eps * eps;
    if cc <= T::lit(2.0) * eps * tol {
        return Some(T::zero());
    }
    if b >= T::zero() {
        return None;
    }
    let disc = b * b - cc;
    if disc < T::zero() {
        return None;
    }
    // cancellation-free smaller root
    let t = cc / (-b + disc.sqrt());
    (t <= t_lim + tol).then_some(t)
}

/// Piece of a perpendicular obstacle inside one chart.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Piece<T> {
    pub chart: usize,
    pub a: Vec2<T>,
    pub b: Vec2<T>,
    /// Index of the prong this piece belongs to.
    pub prong: usize,
    /// Distance from the cone point to `a` along the prong.
    pub u0: T,
}

/// Straight segment leaving a cone point, split into chart pieces.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Prong<T> {
    pub class: usize,
    pub corner: CornerRef,
    pub dir: Vec2<T>,
    pub pieces: Vec<Piece<T>>,
}

/// Traces every prong of length `length` leaving each cone point in each of
/// the planar directions `dirs`. Fails if a prong meets a cone point.
pub(crate) fn trace_prongs<T: Scalar>(
    surface: &TranslationSurface<T>,
    dirs: &[Vec2<T>],
    length: T,
) -> Result<Vec<Prong<T>>, TraceError> {
    let mut prongs = Vec::new();
    for (class, cp) in surface.cone_classes().iter().enumerate() {
        for &dir in dirs {
            for &corner in &cp.members {
                let Some(d) = sector_direction(surface, corner, dir) else {
                    continue;
                };
                let id = prongs.len();
                let start = surface.polygon(corner.polygon).vertex(corner.vertex);
                let mut w = Walker::new(
                    surface,
                    corner.polygon,
                    start,
                    d,
                    Origin::Vertex(corner.vertex),
                );
                let mut pieces = Vec::new();
                loop {
                    let end = w.chord();
                    let remaining = length - w.elapsed;
                    if end.t() > remaining {
                        pieces.push(Piece {
                            chart: w.chart,
                            a: w.pos,
                            b: w.pos + d.scale(remaining),
                            prong: id,
                            u0: w.elapsed,
                        });
                        break;
                    }
                    pieces.push(Piece {
                        chart: w.chart,
                        a: w.pos,
                        b: w.pos + d.scale(end.t()),
                        prong: id,
                        u0: w.elapsed,
                    });
                    if !w.cross(&end) {
                        return Err(TraceError::InvalidEpsilon {
                            epsilon: length.as_f64(),
                            reason: format!(
                                "perpendicular obstacle from cone point {class} meets a cone point at distance {}",
                                (w.elapsed + end.t()).as_f64()
                            ),
                        });
                    }
                }
                pieces.retain(|p| (p.b - p.a).norm() > T::zero());
                prongs.push(Prong {
                    class,
                    corner,
                    dir: d,
                    pieces,
                });
            }
        }
    }
    Ok(prongs)
}

/// Ray–segment intersection: time `t ∈ [t_lo, t_hi]` at which `o + t·d` meets `[a, b]`.
#[inline]
pub(crate) fn segment_hit<T: Scalar>(
    o: Vec2<T>,
    d: Vec2<T>,
    a: Vec2<T>,
    b: Vec2<T>,
    t_lo: T,
    t_hi: T,
) -> Option<(T, T)> {
    let tol = T::corner_tol();
    let e = b - a;
    let denom = d.cross(e);
    if denom.abs() <= tol * e.norm() {
        return None;
    }
    let ao = a - o;
    let t = ao.cross(e) / denom;
    let s = ao.cross(d) / denom;
    let slack = tol / e.norm();
    if s < -slack || s > T::one() + slack || t < t_lo || t > t_hi + tol {
        return None;
    }
    Some((t.max(T::zero()), s.max(T::zero()).min(T::one())))
}

/// Perpendicular obstacles for flow direction `theta`: every segment of length
/// ε leaving a cone point perpendicular to `theta`, on every sheet of the cone.
#[derive(Clone, Debug)]
pub struct SegmentObstacles<'s, T> {
    surface: &'s TranslationSurface<T>,
    epsilon: T,
    theta: T,
    dir: Vec2<T>,
    by_chart: Vec<Vec<Piece<T>>>,
}

impl<'s, T: Scalar> SegmentObstacles<'s, T> {
    /// Materializes the obstacles chart by chart. Fails if an obstacle runs into a cone point.
    pub fn new(
        surface: &'s TranslationSurface<T>,
        epsilon: T,
        theta: T,
    ) -> Result<Self, TraceError> {
        check_positive_epsilon(epsilon)?;
        let dir = Vec2::from_angle(theta);
        let perp = Vec2::new(-dir.y, dir.x);
        let prongs = trace_prongs(surface, &[perp, -perp], epsilon)?;
        let mut by_chart = vec![Vec::new(); surface.polygons().len()];
        for piece in prongs.into_iter().flat_map(|p| p.pieces.into_iter()) {
            by_chart[piece.chart].push(piece);
        }
        Ok(Self {
            surface,
            epsilon,
            theta,
            dir,
            by_chart,
        })
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn theta(&self) -> T {
        self.theta
    }

    /// Total materialized obstacle length, `2ε·κ` when nothing overlaps.
    pub fn total_length(&self) -> T {
        self.by_chart
            .iter()
            .flatten()
            .fold(T::zero(), |acc, p| acc + (p.b - p.a).norm())
    }

    /// `τ̃_ε` for a state whose direction is this obstacle set's `theta`.
    pub fn free_path(
        &self,
        state: &UnitTangentState<T>,
        t_max: T,
    ) -> Result<HitResult<T>, TraceError> {
        let dir_ok = (Vec2::from_angle(state.theta) - self.dir).norm() <= T::rel_tol();
        if !dir_ok {
            return Err(TraceError::InvalidState(format!(
                "state direction {} differs from obstacle direction {}",
                state.theta, self.theta
            )));
        }
        let mut w = match Walker::from_state(self.surface, state) {
            Ok(w) => w,
            Err(TraceError::SingularImpact { .. }) => return Ok(HitResult::Hit(T::zero())),
            Err(e) => return Err(e),
        };
        let tol = T::corner_tol();
        loop {
            let end = w.chord();
            let t_lim = end.t();
            let hit = self.by_chart[w.chart]
                .iter()
                .filter_map(|p| segment_hit(w.pos, w.dir, p.a, p.b, -tol, t_lim).map(|(t, _)| t))
                .fold(None, |acc: Option<T>, t| Some(acc.map_or(t, |a| a.min(t))));
            if let Some(t) = hit {
                let total = w.elapsed + t;
                return Ok(if total > t_max {
                    HitResult::Censored(t_max)
                } else {
                    HitResult::Hit(total)
                });
            }
            if w.elapsed + t_lim >= t_max {
                return Ok(HitResult::Censored(t_max));
            }
            if !w.cross(&end) {
                return Ok(HitResult::SingularImpact);
            }
        }
    }
}

/// `τ_ε` with circular obstacles; validates `epsilon` on every call.
pub fn free_path_circular<T: Scalar>(
    surface: &TranslationSurface<T>,
    epsilon: T,
    state: &UnitTangentState<T>,
    t_max: T,
) -> Result<HitResult<T>, TraceError> {
    CircularObstacles::new(surface, epsilon)?.free_path(state, t_max)
}

/// `τ̃_ε` with perpendicular segment obstacles for the state's direction.
pub fn free_path_segment<T: Scalar>(
    surface: &TranslationSurface<T>,
    epsilon: T,
    state: &UnitTangentState<T>,
    t_max: T,
) -> Result<HitResult<T>, TraceError> {
    SegmentObstacles::new(surface, epsilon, state.theta)?.free_path(state, t_max)
}
