//! Translation surfaces presented as polygons with edge gluings.
//!
//! A surface is built once from raw polygon and gluing data, validated, and
//! rescaled to unit area. After that it is immutable; the SL(2,R) action
//! produces a new surface with the same combinatorics.

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

use crate::geom::{Mat2, Vec2};
use crate::trace::{sector_direction, Origin, Walker};
use crate::Scalar;

/// Reference to edge `edge` of polygon `polygon`; edge `i` runs from vertex `i` to vertex `i + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeRef {
    pub polygon: usize,
    pub edge: usize,
}

impl EdgeRef {
    pub const fn new(polygon: usize, edge: usize) -> Self {
        Self { polygon, edge }
    }
}

impl fmt::Display for EdgeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[polygon {}, edge {}]", self.polygon, self.edge)
    }
}

/// Reference to vertex `vertex` of polygon `polygon`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CornerRef {
    pub polygon: usize,
    pub vertex: usize,
}

impl CornerRef {
    pub const fn new(polygon: usize, vertex: usize) -> Self {
        Self { polygon, vertex }
    }
}

/// Identification of two polygon edges by a translation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EdgeGluing {
    pub side_a: EdgeRef,
    pub side_b: EdgeRef,
}

impl EdgeGluing {
    pub const fn new(side_a: EdgeRef, side_b: EdgeRef) -> Self {
        Self { side_a, side_b }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurfaceError {
    #[error("polygon {polygon}: {reason}")]
    InvalidPolygon { polygon: usize, reason: String },
    #[error("gluing refers to nonexistent edge {0}")]
    NoSuchEdge(EdgeRef),
    #[error("edge {0} is glued to itself")]
    SelfGluedEdge(EdgeRef),
    #[error("edge {0} appears in more than one gluing")]
    EdgeGluedTwice(EdgeRef),
    #[error("edge {0} is not glued to any edge")]
    UnpairedEdge(EdgeRef),
    #[error("edges {a} and {b} are not parallel with opposite orientation")]
    NonParallelEdges { a: EdgeRef, b: EdgeRef },
    #[error("edges {a} and {b} differ in length ({len_a} vs {len_b})")]
    LengthMismatch {
        a: EdgeRef,
        b: EdgeRef,
        len_a: f64,
        len_b: f64,
    },
    #[error("cone point class {class} has total angle {angle} rad, not a positive multiple of 2π")]
    AngleNotMultipleOf2Pi { class: usize, angle: f64 },
    #[error("matrix has determinant {det}, expected 1")]
    DegenerateMatrix { det: f64 },
    #[error("no saddle connection of length at most {bound} found; raise the bound")]
    NotFoundWithinBound { bound: f64 },
}

/// Simple counterclockwise polygon.
#[derive(Clone, Debug, PartialEq)]
pub struct Polygon<T> {
    vertices: Vec<Vec2<T>>,
}

impl<T: Scalar> Polygon<T> {
    /// Validates orientation, vertex count and simplicity.
    pub fn new(vertices: Vec<Vec2<T>>) -> Result<Self, String> {
        if vertices.len() < 3 {
            return Err(format!("needs at least 3 vertices, got {}", vertices.len()));
        }
        if vertices
            .iter()
            .any(|v| !v.x.is_finite() || !v.y.is_finite())
        {
            return Err("non-finite vertex coordinate".into());
        }
        let poly = Self { vertices };
        if !(poly.signed_area() > T::zero()) {
            return Err("signed area is not positive (vertices must be counterclockwise)".into());
        }
        let n = poly.len();
        for i in 0..n {
            if poly.edge_vector(i).norm() <= T::corner_tol() {
                return Err(format!("edge {i} has zero length"));
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                let (a0, a1) = poly.edge(i);
                let (b0, b1) = poly.edge(j);
                if segments_touch(a0, a1, b0, b1) {
                    return Err(format!(
                        "edges {i} and {j} intersect; polygon is not simple"
                    ));
                }
            }
        }
        for i in 0..n {
            let ang = poly.interior_angle(i);
            if ang <= T::angle_tol() || ang >= T::TAU() - T::angle_tol() {
                return Err(format!("degenerate interior angle at vertex {i}"));
            }
        }
        Ok(poly)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    #[inline]
    pub fn vertices(&self) -> &[Vec2<T>] {
        &self.vertices
    }

    #[inline]
    pub fn vertex(&self, i: usize) -> Vec2<T> {
        self.vertices[i % self.vertices.len()]
    }

    /// Endpoints of edge `i`.
    #[inline]
    pub fn edge(&self, i: usize) -> (Vec2<T>, Vec2<T>) {
        let n = self.vertices.len();
        (self.vertices[i % n], self.vertices[(i + 1) % n])
    }

    #[inline]
    pub fn edge_vector(&self, i: usize) -> Vec2<T> {
        let (a, b) = self.edge(i);
        b - a
    }

    /// Shoelace area, positive for counterclockwise vertex order.
    pub fn signed_area(&self) -> T {
        let n = self.vertices.len();
        let twice = (0..n).fold(T::zero(), |acc, i| {
            acc + self.vertices[i].cross(self.vertices[(i + 1) % n])
        });
        twice / T::lit(2.0)
    }

    /// Interior angle at vertex `i`, in `(0, 2π)`.
    pub fn interior_angle(&self, i: usize) -> T {
        let n = self.vertices.len();
        let cur = self.vertices[i];
        let out = self.vertices[(i + 1) % n] - cur;
        let back = self.vertices[(i + n - 1) % n] - cur;
        let mut ang = out.angle_to(back);
        if ang <= T::zero() {
            ang = ang + T::TAU();
        }
        ang
    }

    /// Ear-clipping triangulation; triangles are counterclockwise vertex index triples.
    pub fn triangulate(&self) -> Vec<[usize; 3]> {
        let v = &self.vertices;
        let mut idx: Vec<usize> = (0..v.len()).collect();
        let mut tris = Vec::with_capacity(v.len().saturating_sub(2));
        let scale = self.signed_area().abs();
        let flat = scale * T::lit(1e-12);
        while idx.len() > 3 {
            let m = idx.len();
            let mut clipped = false;
            for k in 0..m {
                let (i0, i1, i2) = (idx[(k + m - 1) % m], idx[k], idx[(k + 1) % m]);
                let (a, b, c) = (v[i0], v[i1], v[i2]);
                if (b - a).cross(c - b) <= flat {
                    continue;
                }
                let blocked = idx
                    .iter()
                    .filter(|&&j| j != i0 && j != i1 && j != i2)
                    .any(|&j| point_in_closed_triangle(v[j], a, b, c));
                if blocked {
                    continue;
                }
                tris.push([i0, i1, i2]);
                idx.remove(k);
                clipped = true;
                break;
            }
            if !clipped {
                // only flat (collinear) corners remain clip-blocked; dropping one loses no area
                let m = idx.len();
                match (0..m).find(|&k| {
                    let (a, b, c) = (v[idx[(k + m - 1) % m]], v[idx[k]], v[idx[(k + 1) % m]]);
                    (b - a).cross(c - b).abs() <= flat
                }) {
                    Some(k) => {
                        idx.remove(k);
                    }
                    None => break,
                }
            }
        }
        if idx.len() == 3 {
            let (a, b, c) = (v[idx[0]], v[idx[1]], v[idx[2]]);
            if (b - a).cross(c - a) > flat {
                tris.push([idx[0], idx[1], idx[2]]);
            }
        }
        tris
    }

    fn mapped(&self, g: &Mat2<T>) -> Self {
        Self {
            vertices: self.vertices.iter().map(|&p| g.apply(p)).collect(),
        }
    }
}

fn point_in_closed_triangle<T: Scalar>(p: Vec2<T>, a: Vec2<T>, b: Vec2<T>, c: Vec2<T>) -> bool {
    let d1 = (b - a).cross(p - a);
    let d2 = (c - b).cross(p - b);
    let d3 = (a - c).cross(p - c);
    d1 >= T::zero() && d2 >= T::zero() && d3 >= T::zero()
}

fn segments_touch<T: Scalar>(a0: Vec2<T>, a1: Vec2<T>, b0: Vec2<T>, b1: Vec2<T>) -> bool {
    let orient = |p: Vec2<T>, q: Vec2<T>, r: Vec2<T>| (q - p).cross(r - p);
    let on_segment = |p: Vec2<T>, q: Vec2<T>, r: Vec2<T>| {
        r.x >= p.x.min(q.x) && r.x <= p.x.max(q.x) && r.y >= p.y.min(q.y) && r.y <= p.y.max(q.y)
    };
    let z = T::zero();
    let (d1, d2) = (orient(b0, b1, a0), orient(b0, b1, a1));
    let (d3, d4) = (orient(a0, a1, b0), orient(a0, a1, b1));
    if ((d1 > z && d2 < z) || (d1 < z && d2 > z)) && ((d3 > z && d4 < z) || (d3 < z && d4 > z)) {
        return true;
    }
    (d1 == z && on_segment(b0, b1, a0))
        || (d2 == z && on_segment(b0, b1, a1))
        || (d3 == z && on_segment(a0, a1, b0))
        || (d4 == z && on_segment(a0, a1, b1))
}

/// Equivalence class of polygon corners that glue to one point of the surface.
#[derive(Clone, Debug, PartialEq)]
pub struct ConePointClass<T> {
    pub members: Vec<CornerRef>,
    pub total_angle: T,
    /// `total_angle = 2π(alpha + 1)`; zero for marked points.
    pub alpha: u32,
}

/// Cone angle exponents of a surface and `kappa = Σ (alpha_i + 1)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StratumInfo {
    /// Sorted descending.
    pub alphas: Vec<u32>,
    pub kappa: u32,
}

impl fmt::Display for StratumInfo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "H(")?;
        for (i, a) in self.alphas.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

/// A validated, unit-area translation surface.
#[derive(Clone, Debug)]
pub struct TranslationSurface<T> {
    polygons: Vec<Polygon<T>>,
    gluings: Vec<EdgeGluing>,
    partners: Vec<Vec<EdgeRef>>,
    corner_class: Vec<Vec<usize>>,
    cone_classes: Vec<ConePointClass<T>>,
    stratum: StratumInfo,
    total_area: T,
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

impl<T: Scalar> TranslationSurface<T> {
    /// Validates polygons and gluings, derives cone point classes, and
    /// rescales uniformly to unit area.
    pub fn build(
        polygons: Vec<Vec<Vec2<T>>>,
        gluings: Vec<EdgeGluing>,
    ) -> Result<Self, SurfaceError> {
        let polygons = polygons
            .into_iter()
            .enumerate()
            .map(|(i, vs)| {
                Polygon::new(vs)
                    .map_err(|reason| SurfaceError::InvalidPolygon { polygon: i, reason })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if polygons.is_empty() {
            return Err(SurfaceError::InvalidPolygon {
                polygon: 0,
                reason: "surface has no polygons".into(),
            });
        }

        let partners = pair_edges(&polygons, &gluings)?;
        for g in &gluings {
            check_gluing_geometry(&polygons, g)?;
        }
        let partners = require_all_paired(partners)?;

        let area = polygons
            .iter()
            .fold(T::zero(), |acc, p| acc + p.signed_area());
        let k = T::one() / area.sqrt();
        let polygons: Vec<_> = polygons
            .iter()
            .map(|p| p.mapped(&Mat2::new(k, T::zero(), T::zero(), k)))
            .collect();

        let (corner_class, cone_classes) = derive_cone_classes(&polygons, &gluings)?;
        let stratum = stratum_of(&cone_classes);
        let total_area = polygons
            .iter()
            .fold(T::zero(), |acc, p| acc + p.signed_area());
        Ok(Self {
            polygons,
            gluings,
            partners,
            corner_class,
            cone_classes,
            stratum,
            total_area,
        })
    }

    /// Raw polygon and gluing data, suitable for [`TranslationSurface::build`].
    pub fn to_raw(&self) -> (Vec<Vec<Vec2<T>>>, Vec<EdgeGluing>) {
        (
            self.polygons.iter().map(|p| p.vertices.clone()).collect(),
            self.gluings.clone(),
        )
    }

    #[inline]
    pub fn polygons(&self) -> &[Polygon<T>] {
        &self.polygons
    }

    #[inline]
    pub fn polygon(&self, i: usize) -> &Polygon<T> {
        &self.polygons[i]
    }

    #[inline]
    pub fn gluings(&self) -> &[EdgeGluing] {
        &self.gluings
    }

    /// The edge glued to `e`.
    #[inline]
    pub fn partner(&self, e: EdgeRef) -> EdgeRef {
        self.partners[e.polygon][e.edge]
    }

    #[inline]
    pub fn cone_classes(&self) -> &[ConePointClass<T>] {
        &self.cone_classes
    }

    #[inline]
    pub fn class_of(&self, c: CornerRef) -> usize {
        self.corner_class[c.polygon][c.vertex]
    }

    #[inline]
    pub fn stratum(&self) -> &StratumInfo {
        &self.stratum
    }

    #[inline]
    pub fn total_area(&self) -> T {
        self.total_area
    }

    /// Sum of the interior angles at the corners of class `class`.
    pub fn cone_angle(&self, class: usize) -> T {
        self.cone_classes[class]
            .members
            .iter()
            .fold(T::zero(), |acc, c| {
                acc + self.polygons[c.polygon].interior_angle(c.vertex)
            })
    }

    /// Point of the partner edge identified with parameter `s ∈ [0, 1]` along `e`.
    ///
    /// Gluings reverse orientation: the start of `e` is the end of its partner.
    #[inline]
    pub fn glued_point(&self, e: EdgeRef, s: T) -> (EdgeRef, Vec2<T>) {
        let f = self.partner(e);
        let (b0, b1) = self.polygons[f.polygon].edge(f.edge);
        (f, b1.lerp(b0, s))
    }

    /// Image of the surface under `g ∈ SL(2,R)`. Charts map vertexwise; the
    /// gluing table and cone point classes carry over unchanged.
    pub fn apply_matrix(&self, g: &Mat2<T>) -> Result<Self, SurfaceError> {
        if !g.is_special_linear() {
            return Err(SurfaceError::DegenerateMatrix {
                det: g.det().as_f64(),
            });
        }
        let polygons: Vec<_> = self.polygons.iter().map(|p| p.mapped(g)).collect();
        let total_area = polygons
            .iter()
            .fold(T::zero(), |acc, p| acc + p.signed_area());
        let mut out = Self {
            polygons,
            gluings: self.gluings.clone(),
            partners: self.partners.clone(),
            corner_class: self.corner_class.clone(),
            cone_classes: self.cone_classes.clone(),
            stratum: self.stratum.clone(),
            total_area,
        };
        for i in 0..out.cone_classes.len() {
            out.cone_classes[i].total_angle = out.cone_angle(i);
        }
        Ok(out)
    }

    /// Length of the shortest saddle connection (including loops from a cone
    /// point to itself), searched among unfolded vertex images within `length_bound`.
    ///
    /// Candidates come from a breadth-first unfolding of charts around each
    /// corner; each candidate direction is then traced on the surface, so only
    /// genuine geodesic segments are reported.
    pub fn shortest_singularity_separation(&self, length_bound: T) -> Result<T, SurfaceError> {
        let not_found = SurfaceError::NotFoundWithinBound {
            bound: length_bound.as_f64(),
        };
        if !(length_bound > T::zero()) {
            return Err(not_found);
        }
        let tol = T::corner_tol();
        let mut best: Option<T> = None;
        for (p, poly) in self.polygons.iter().enumerate() {
            for v in 0..poly.len() {
                let source = poly.vertex(v);
                let corner = CornerRef::new(p, v);
                let mut candidates = self.unfolded_vertex_images(p, source, length_bound);
                candidates.retain(|w| {
                    let l = (*w - source).norm();
                    l > tol && l <= length_bound + tol
                });
                candidates.sort_by(|a, b| {
                    (*a - source)
                        .norm_sq()
                        .partial_cmp(&(*b - source).norm_sq())
                        .unwrap()
                });
                for w in candidates {
                    let len = (w - source).norm();
                    if best.is_some_and(|b| len > b + tol) {
                        break;
                    }
                    let Some(dir) =
                        sector_direction(self, corner, (w - source).scale(T::one() / len))
                    else {
                        continue;
                    };
                    if let Some(hit) = first_vertex_along(self, corner, dir, length_bound + tol) {
                        if best.is_none_or(|b| hit < b) {
                            best = Some(hit);
                        }
                    }
                }
            }
        }
        best.ok_or(not_found)
    }

    /// Vertex positions of charts developed into the plane of chart `start`,
    /// restricted to charts coming within `radius` of `center`.
    fn unfolded_vertex_images(&self, start: usize, center: Vec2<T>, radius: T) -> Vec<Vec2<T>> {
        const MAX_PLACEMENTS: usize = 200_000;
        let quantum = T::lit(1e-9);
        let key = |chart: usize, o: Vec2<T>| {
            (
                chart,
                (o.x / quantum).round().to_i64().unwrap_or(i64::MAX),
                (o.y / quantum).round().to_i64().unwrap_or(i64::MAX),
            )
        };
        let mut seen = HashSet::new();
        let mut queue = std::collections::VecDeque::new();
        let mut images = Vec::new();
        seen.insert(key(start, Vec2::zero()));
        queue.push_back((start, Vec2::<T>::zero()));
        while let Some((chart, offset)) = queue.pop_front() {
            let poly = &self.polygons[chart];
            images.extend(poly.vertices.iter().map(|&v| v + offset));
            if seen.len() > MAX_PLACEMENTS {
                continue;
            }
            for e in 0..poly.len() {
                let here = EdgeRef::new(chart, e);
                let there = self.partner(here);
                // x (chart) ↦ x + shift (partner chart)
                let shift = self.polygons[there.polygon].vertex(there.edge + 1) - poly.vertex(e);
                let next = offset - shift;
                let target = &self.polygons[there.polygon];
                if polygon_distance(target, center - next) > radius {
                    continue;
                }
                if seen.insert(key(there.polygon, next)) {
                    queue.push_back((there.polygon, next));
                }
            }
        }
        images
    }
}

/// Distance from `p` to the closed polygon region.
fn polygon_distance<T: Scalar>(poly: &Polygon<T>, p: Vec2<T>) -> T {
    let n = poly.len();
    let mut inside = false;
    let mut best = T::infinity();
    for i in 0..n {
        let (a, b) = poly.edge(i);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x {
                inside = !inside;
            }
        }
        let e = b - a;
        let s = ((p - a).dot(e) / e.norm_sq()).max(T::zero()).min(T::one());
        best = best.min((a + e.scale(s) - p).norm());
    }
    if inside {
        T::zero()
    } else {
        best
    }
}

/// Distance travelled from `corner` in direction `dir` before meeting a vertex.
fn first_vertex_along<T: Scalar>(
    surface: &TranslationSurface<T>,
    corner: CornerRef,
    dir: Vec2<T>,
    max_len: T,
) -> Option<T> {
    let start = surface.polygon(corner.polygon).vertex(corner.vertex);
    let mut w = Walker::new(
        surface,
        corner.polygon,
        start,
        dir,
        Origin::Vertex(corner.vertex),
    );
    loop {
        let end = w.chord();
        if w.elapsed + end.t() > max_len {
            return None;
        }
        if end.is_corner() {
            return Some(w.elapsed + end.t());
        }
        if !w.cross(&end) {
            return None;
        }
    }
}

type PartnerTable = Vec<Vec<Option<EdgeRef>>>;

fn pair_edges<T: Scalar>(
    polygons: &[Polygon<T>],
    gluings: &[EdgeGluing],
) -> Result<PartnerTable, SurfaceError> {
    let mut partners: Vec<Vec<Option<EdgeRef>>> =
        polygons.iter().map(|p| vec![None; p.len()]).collect();
    for g in gluings {
        for e in [g.side_a, g.side_b] {
            if e.polygon >= polygons.len() || e.edge >= polygons[e.polygon].len() {
                return Err(SurfaceError::NoSuchEdge(e));
            }
        }
        if g.side_a == g.side_b {
            return Err(SurfaceError::SelfGluedEdge(g.side_a));
        }
        for (e, f) in [(g.side_a, g.side_b), (g.side_b, g.side_a)] {
            let slot = &mut partners[e.polygon][e.edge];
            if slot.is_some() {
                return Err(SurfaceError::EdgeGluedTwice(e));
            }
            *slot = Some(f);
        }
    }
    Ok(partners)
}

fn require_all_paired(partners: PartnerTable) -> Result<Vec<Vec<EdgeRef>>, SurfaceError> {
    partners
        .into_iter()
        .enumerate()
        .map(|(p, row)| {
            row.into_iter()
                .enumerate()
                .map(|(e, f)| f.ok_or(SurfaceError::UnpairedEdge(EdgeRef::new(p, e))))
                .collect()
        })
        .collect()
}

fn check_gluing_geometry<T: Scalar>(
    polygons: &[Polygon<T>],
    g: &EdgeGluing,
) -> Result<(), SurfaceError> {
    let ea = polygons[g.side_a.polygon].edge_vector(g.side_a.edge);
    let eb = polygons[g.side_b.polygon].edge_vector(g.side_b.edge);
    let (la, lb) = (ea.norm(), eb.norm());
    let tol = T::rel_tol();
    // opposite outward normals on counterclockwise polygons means antiparallel edge vectors
    if ea.cross(eb).abs() > tol * la * lb || ea.dot(eb) >= T::zero() {
        return Err(SurfaceError::NonParallelEdges {
            a: g.side_a,
            b: g.side_b,
        });
    }
    if (la - lb).abs() > tol * la.max(lb) {
        return Err(SurfaceError::LengthMismatch {
            a: g.side_a,
            b: g.side_b,
            len_a: la.as_f64(),
            len_b: lb.as_f64(),
        });
    }
    Ok(())
}

type ClassTables<T> = (Vec<Vec<usize>>, Vec<ConePointClass<T>>);

fn derive_cone_classes<T: Scalar>(
    polygons: &[Polygon<T>],
    gluings: &[EdgeGluing],
) -> Result<ClassTables<T>, SurfaceError> {
    let mut offsets = Vec::with_capacity(polygons.len());
    let mut total = 0;
    for p in polygons {
        offsets.push(total);
        total += p.len();
    }
    let id = |p: usize, v: usize| offsets[p] + v % polygons[p].len();
    let mut uf = UnionFind((0..total).collect());
    for g in gluings {
        let (a, b) = (g.side_a, g.side_b);
        uf.union(id(a.polygon, a.edge), id(b.polygon, b.edge + 1));
        uf.union(id(a.polygon, a.edge + 1), id(b.polygon, b.edge));
    }

    let mut root_to_class = std::collections::HashMap::new();
    let mut classes: Vec<Vec<CornerRef>> = Vec::new();
    let mut corner_class: Vec<Vec<usize>> = polygons.iter().map(|p| vec![0; p.len()]).collect();
    for (p, poly) in polygons.iter().enumerate() {
        for v in 0..poly.len() {
            let r = uf.find(id(p, v));
            let c = *root_to_class.entry(r).or_insert_with(|| {
                classes.push(Vec::new());
                classes.len() - 1
            });
            classes[c].push(CornerRef::new(p, v));
            corner_class[p][v] = c;
        }
    }

    let two_pi = T::TAU();
    let cone_classes = classes
        .into_iter()
        .enumerate()
        .map(|(i, members)| {
            let angle = members.iter().fold(T::zero(), |acc, c| {
                acc + polygons[c.polygon].interior_angle(c.vertex)
            });
            let k = (angle / two_pi).round();
            if k < T::one() || (angle - k * two_pi).abs() > T::angle_tol() {
                return Err(SurfaceError::AngleNotMultipleOf2Pi {
                    class: i,
                    angle: angle.as_f64(),
                });
            }
            Ok(ConePointClass {
                members,
                total_angle: angle,
                alpha: k.to_u32().unwrap() - 1,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((corner_class, cone_classes))
}

fn stratum_of<T>(classes: &[ConePointClass<T>]) -> StratumInfo {
    let mut alphas: Vec<u32> = classes.iter().map(|c| c.alpha).collect();
    alphas.sort_unstable_by(|a, b| b.cmp(a));
    let kappa = alphas.iter().map(|a| a + 1).sum();
    StratumInfo { alphas, kappa }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{PI, TAU};

    fn v(x: f64, y: f64) -> Vec2<f64> {
        Vec2::new(x, y)
    }

    fn square_raw() -> (Vec<Vec<Vec2<f64>>>, Vec<EdgeGluing>) {
        (
            vec![vec![v(0., 0.), v(1., 0.), v(1., 1.), v(0., 1.)]],
            vec![
                EdgeGluing::new(EdgeRef::new(0, 0), EdgeRef::new(0, 2)),
                EdgeGluing::new(EdgeRef::new(0, 1), EdgeRef::new(0, 3)),
            ],
        )
    }

    #[test]
    fn square_torus_has_one_marked_point() {
        let (p, g) = square_raw();
        let s = TranslationSurface::build(p, g).unwrap();
        assert_eq!(s.cone_classes().len(), 1);
        assert_eq!(s.cone_classes()[0].alpha, 0);
        assert_abs_diff_eq!(s.cone_angle(0), TAU, epsilon = 1e-12);
        assert_eq!(s.stratum().kappa, 1);
        assert_eq!(s.stratum().alphas, vec![0]);
    }

    #[test]
    fn l_shape_is_one_cone_point_of_angle_six_pi() {
        let s = builtins::l_surface(1.0, 1.0).unwrap();
        assert_eq!(s.cone_classes().len(), 1);
        assert_eq!(s.cone_classes()[0].members.len(), 8);
        assert_abs_diff_eq!(s.cone_angle(0), 3.0 * TAU, epsilon = 1e-9);
        assert_eq!(s.stratum().alphas, vec![2]);
        assert_eq!(s.stratum().kappa, 3);
        // integer L has area 3, so coordinates shrink by 1/√3
        assert_abs_diff_eq!(s.polygon(0).vertex(2).x, 2.0 / 3f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(s.total_area(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn regular_octagon_angle() {
        let s = builtins::regular_octagon::<f64>();
        assert_eq!(s.cone_classes().len(), 1);
        assert_abs_diff_eq!(s.cone_angle(0), 6.0 * PI, epsilon = 1e-9);
        assert_eq!(s.stratum().kappa, 3);
    }

    #[test]
    fn rejects_non_parallel_gluing() {
        let (p, _) = square_raw();
        let g = vec![
            EdgeGluing::new(EdgeRef::new(0, 0), EdgeRef::new(0, 1)),
            EdgeGluing::new(EdgeRef::new(0, 2), EdgeRef::new(0, 3)),
        ];
        assert_eq!(
            TranslationSurface::build(p, g).unwrap_err(),
            SurfaceError::NonParallelEdges {
                a: EdgeRef::new(0, 0),
                b: EdgeRef::new(0, 1)
            }
        );
    }

    #[test]
    fn rejects_same_direction_gluing() {
        // a parallelogram's bottom and top edges run in opposite directions; a
        // rectangle split in two has left-left edges pointing the same way
        let p = vec![
            vec![v(0., 0.), v(1., 0.), v(1., 1.), v(0., 1.)],
            vec![v(2., 0.), v(3., 0.), v(3., 1.), v(2., 1.)],
        ];
        let g = vec![
            EdgeGluing::new(EdgeRef::new(0, 0), EdgeRef::new(1, 0)),
            EdgeGluing::new(EdgeRef::new(0, 2), EdgeRef::new(1, 2)),
            EdgeGluing::new(EdgeRef::new(0, 1), EdgeRef::new(0, 3)),
            EdgeGluing::new(EdgeRef::new(1, 1), EdgeRef::new(1, 3)),
        ];
        assert!(matches!(
            TranslationSurface::build(p, g),
            Err(SurfaceError::NonParallelEdges { .. })
        ));
    }

    #[test]
    fn rejects_length_mismatch() {
        let p = vec![vec![v(0., 0.), v(2., 0.), v(2., 1.), v(1., 1.), v(0., 1.)]];
        let g = vec![
            EdgeGluing::new(EdgeRef::new(0, 0), EdgeRef::new(0, 2)),
            EdgeGluing::new(EdgeRef::new(0, 1), EdgeRef::new(0, 4)),
        ];
        let err = TranslationSurface::build(p, g).unwrap_err();
        assert!(matches!(err, SurfaceError::LengthMismatch { a, .. } if a == EdgeRef::new(0, 0)));
    }

    #[test]
    fn rejects_unpaired_and_self_glued_edges() {
        let (p, mut g) = square_raw();
        g.pop();
        assert_eq!(
            TranslationSurface::build(p.clone(), g.clone()).unwrap_err(),
            SurfaceError::UnpairedEdge(EdgeRef::new(0, 1))
        );
        g.push(EdgeGluing::new(EdgeRef::new(0, 1), EdgeRef::new(0, 1)));
        assert_eq!(
            TranslationSurface::build(p, g).unwrap_err(),
            SurfaceError::SelfGluedEdge(EdgeRef::new(0, 1))
        );
    }

    #[test]
    fn two_triangle_torus() {
        let p = vec![
            vec![v(0., 0.), v(1., 0.), v(0., 1.)],
            vec![v(1., 0.), v(1., 1.), v(0., 1.)],
        ];
        let g = vec![
            EdgeGluing::new(EdgeRef::new(0, 1), EdgeRef::new(1, 2)),
            EdgeGluing::new(EdgeRef::new(0, 0), EdgeRef::new(1, 1)),
            EdgeGluing::new(EdgeRef::new(0, 2), EdgeRef::new(1, 0)),
        ];
        let s = TranslationSurface::build(p, g).unwrap();
        assert_eq!(s.cone_classes().len(), 1);
        assert_eq!(s.stratum().kappa, 1);
        assert_abs_diff_eq!(s.cone_angle(0), TAU, epsilon = 1e-12);
    }

    #[test]
    fn angle_check_reports_the_class() {
        let poly = Polygon::new(vec![v(0., 0.), v(1., 0.), v(1., 1.), v(0., 1.)]).unwrap();
        // bottom glued to top only: corners pair up into classes of angle π
        let polys = vec![poly];
        let g = vec![EdgeGluing::new(EdgeRef::new(0, 0), EdgeRef::new(0, 2))];
        let err = derive_cone_classes(&polys, &g).unwrap_err();
        assert!(
            matches!(err, SurfaceError::AngleNotMultipleOf2Pi { class: 0, angle } if (angle - PI).abs() < 1e-12)
        );
    }

    #[test]
    fn rejects_clockwise_polygon() {
        let p = vec![vec![v(0., 0.), v(0., 1.), v(1., 1.), v(1., 0.)]];
        let err = TranslationSurface::build(p, vec![]).unwrap_err();
        assert!(matches!(
            err,
            SurfaceError::InvalidPolygon { polygon: 0, .. }
        ));
    }

    #[test]
    fn rejects_self_intersecting_polygon() {
        let bow = vec![v(0., 0.), v(2., 0.), v(2., 2.), v(1., -1.), v(0., 2.)];
        assert!(Polygon::new(bow).is_err());
    }

    #[test]
    fn build_is_idempotent() {
        for s in [
            builtins::l_surface(1.0, 1.0).unwrap(),
            builtins::regular_octagon(),
            builtins::torus_from_basis(v(2., 0.), v(0.3, 0.5)).unwrap(),
        ] {
            let (p, g) = s.to_raw();
            let again = TranslationSurface::build(p, g).unwrap();
            let members = |x: &TranslationSurface<f64>| {
                x.cone_classes()
                    .iter()
                    .map(|c| (c.members.clone(), c.alpha))
                    .collect::<Vec<_>>()
            };
            assert_eq!(members(&s), members(&again));
            assert_eq!(s.stratum(), again.stratum());
        }
    }

    #[test]
    fn identity_matrix_keeps_coordinates() {
        let s = builtins::l_surface(1.0, 1.0).unwrap();
        let t = s.apply_matrix(&Mat2::identity()).unwrap();
        assert_eq!(s.polygon(0).vertices(), t.polygon(0).vertices());
    }

    #[test]
    fn diagonal_flow_stretches_square_into_rectangle() {
        let s = builtins::square_torus::<f64>();
        let t = s.apply_matrix(&Mat2::diagonal_flow(2f64.ln())).unwrap();
        let p = t.polygon(0);
        assert_abs_diff_eq!(p.vertex(2).x, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.vertex(2).y, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(t.total_area(), 1.0, epsilon = 1e-12);
        assert_eq!(t.stratum(), s.stratum());
    }

    #[test]
    fn rotation_preserves_stratum() {
        let s = builtins::square_torus::<f64>();
        let t = s.apply_matrix(&Mat2::rotation(PI / 2.0)).unwrap();
        assert_eq!(t.stratum().kappa, 1);
        assert_abs_diff_eq!(t.polygon(0).vertex(1).y, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t.cone_angle(0), TAU, epsilon = 1e-12);
    }

    #[test]
    fn apply_matrix_rejects_non_unimodular() {
        let s = builtins::square_torus::<f64>();
        assert!(matches!(
            s.apply_matrix(&Mat2::new(2.0, 0.0, 0.0, 1.0)),
            Err(SurfaceError::DegenerateMatrix { .. })
        ));
    }

    #[test]
    fn separation_of_square_torus() {
        let s = builtins::square_torus::<f64>();
        assert_abs_diff_eq!(
            s.shortest_singularity_separation(2.0).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert!(matches!(
            s.shortest_singularity_separation(0.1),
            Err(SurfaceError::NotFoundWithinBound { .. })
        ));
    }

    #[test]
    fn separation_of_unit_l_surface() {
        let s = builtins::l_surface(1.0, 1.0).unwrap();
        assert_abs_diff_eq!(
            s.shortest_singularity_separation(2.0).unwrap(),
            1.0 / 3f64.sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn separation_of_sheared_torus_matches_lattice() {
        // lattice spanned by (2,0),(0.3,0.5): shortest vector (0.3,0.5)
        let s = builtins::torus_from_basis(v(2., 0.), v(0.3, 0.5)).unwrap();
        assert_abs_diff_eq!(
            s.shortest_singularity_separation(3.0).unwrap(),
            (0.09f64 + 0.25).sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn triangulation_covers_area() {
        for s in [
            builtins::l_surface(1.0, 2.5).unwrap(),
            builtins::regular_octagon(),
        ] {
            for poly in s.polygons() {
                let tris = poly.triangulate();
                assert!(tris.len() >= poly.len() - 2 - count_flat(poly));
                let a: f64 = tris
                    .iter()
                    .map(|t| {
                        let (p, q, r) = (poly.vertex(t[0]), poly.vertex(t[1]), poly.vertex(t[2]));
                        let a = (q - p).cross(r - p) / 2.0;
                        assert!(a > 0.0);
                        a
                    })
                    .sum();
                assert_abs_diff_eq!(a, poly.signed_area(), epsilon = 1e-12);
            }
        }
    }

    fn count_flat(poly: &Polygon<f64>) -> usize {
        (0..poly.len())
            .filter(|&i| (poly.interior_angle(i) - PI).abs() < 1e-9)
            .count()
    }
}
