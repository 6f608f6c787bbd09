//! Zippered rectangles over horizontal transversals at the cone points.
//!
//! Each cone point of angle 2π(α+1) carries α+1 horizontal transversals of
//! total length 2ε, one per pair of opposite horizontal prongs. Flowing
//! straight down from the transversal union, the first-return time is
//! piecewise constant; its breakpoints are where upward separatrices and
//! upward orbits of transversal endpoints first land. Each maximal interval
//! of constant return time is the base of a rectangle whose height is that
//! return time, and the rectangles tile the surface.

use thiserror::Error;

use crate::geom::Vec2;
use crate::surface::TranslationSurface;
use crate::trace::{
    locate, sector_direction, segment_hit, trace_prongs, ChordEnd, Origin, Piece, Prong,
    TraceError, Walker,
};
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ZipperedError {
    #[error("incomplete decomposition (covered area {covered_area}): {reason}; perturb direction or surface")]
    IncompleteDecomposition { covered_area: f64, reason: String },
    #[error("transversals overlap (covered area {covered_area} exceeds the surface area); use a smaller epsilon")]
    OverlappingTransversals { covered_area: f64 },
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// Horizontal segment centred at a cone point, coordinates in `[-ε, ε]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transversal<T> {
    pub class: usize,
    pub half_length: T,
}

/// Rectangle standing on `base` (an interval of transversal coordinates).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rectangle<T> {
    pub transversal: usize,
    pub base: (T, T),
    pub width: T,
    pub height: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ZipperedDecomposition<T> {
    pub epsilon: T,
    pub transversals: Vec<Transversal<T>>,
    pub rectangles: Vec<Rectangle<T>>,
    /// `Σ width · height`.
    pub covered_area: T,
    /// Number of distinct breakpoints found across all transversals, endpoints included.
    pub subdivision_points: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct ZipperedConfig<T> {
    /// Half-length of each transversal; 1/2 gives unit-length transversals.
    pub epsilon: T,
    /// Orbits longer than this abort the computation.
    pub height_bound: T,
}

impl<T: Scalar> Default for ZipperedConfig<T> {
    fn default() -> Self {
        Self {
            epsilon: T::lit(0.5),
            height_bound: T::lit(1e3),
        }
    }
}

enum Landing<T> {
    Transversal { time: T, transversal: usize, x: T },
    ConePoint { time: T },
}

enum Lost {
    TooLong,
    Stalled,
}

struct Layout<T> {
    prongs: Vec<Prong<T>>,
    /// prong index → (transversal, +1 for rightward / −1 for leftward)
    slot: Vec<(usize, T)>,
    by_chart: Vec<Vec<Piece<T>>>,
    min_return: T,
}

impl<T: Scalar> Layout<T> {
    fn new(
        surface: &TranslationSurface<T>,
        epsilon: T,
    ) -> Result<(Self, Vec<Transversal<T>>), TraceError> {
        let right = Vec2::new(T::one(), T::zero());
        let left = Vec2::new(-T::one(), T::zero());
        let prongs = trace_prongs(surface, &[right, left], epsilon)?;
        let mut slot = vec![(0, T::zero()); prongs.len()];
        let mut transversals = Vec::new();
        for class in 0..surface.cone_classes().len() {
            let of_class: Vec<usize> = (0..prongs.len())
                .filter(|&i| prongs[i].class == class)
                .collect();
            let rights: Vec<usize> = of_class
                .iter()
                .copied()
                .filter(|&i| prongs[i].dir.x > T::zero())
                .collect();
            let lefts: Vec<usize> = of_class
                .iter()
                .copied()
                .filter(|&i| prongs[i].dir.x < T::zero())
                .collect();
            debug_assert_eq!(rights.len(), lefts.len());
            for (r, l) in rights.into_iter().zip(lefts) {
                slot[r] = (transversals.len(), T::one());
                slot[l] = (transversals.len(), -T::one());
                transversals.push(Transversal {
                    class,
                    half_length: epsilon,
                });
            }
        }
        let mut by_chart = vec![Vec::new(); surface.polygons().len()];
        for p in prongs.iter().flat_map(|p| p.pieces.iter()) {
            by_chart[p.chart].push(*p);
        }
        let layout = Self {
            prongs,
            slot,
            by_chart,
            min_return: T::corner_tol() * T::lit(100.0),
        };
        Ok((layout, transversals))
    }

    fn coordinate(&self, piece: &Piece<T>, at: Vec2<T>) -> (usize, T) {
        let (tr, sign) = self.slot[piece.prong];
        (tr, sign * (piece.u0 + (at - piece.a).norm()))
    }

    /// Chart, point and origin of transversal coordinate `x`.
    fn position(&self, transversal: usize, x: T) -> Option<(usize, Vec2<T>)> {
        let sign = if x >= T::zero() { T::one() } else { -T::one() };
        let u = x.abs();
        let prong = (0..self.prongs.len()).find(|&i| self.slot[i] == (transversal, sign))?;
        let pr = &self.prongs[prong];
        let piece = pr
            .pieces
            .iter()
            .rev()
            .find(|p| p.u0 <= u)
            .or_else(|| pr.pieces.first())?;
        Some((piece.chart, piece.a + pr.dir.scale(u - piece.u0)))
    }

    /// First landing on the transversal union (after `min_return`) of the straight ray.
    fn first_landing(&self, mut w: Walker<'_, T>, bound: T) -> Result<Landing<T>, Lost> {
        let tol = T::corner_tol();
        loop {
            let end = w.chord();
            let t_lim = end.t();
            let mut best: Option<(T, Piece<T>)> = None;
            for p in &self.by_chart[w.chart] {
                if let Some((t, _)) = segment_hit(w.pos, w.dir, p.a, p.b, -tol, t_lim) {
                    if w.elapsed + t > self.min_return && best.is_none_or(|(bt, _)| t < bt) {
                        best = Some((t, *p));
                    }
                }
            }
            if let Some((t, piece)) = best {
                let at = w.pos + w.dir.scale(t);
                let (transversal, x) = self.coordinate(&piece, at);
                let half = prong_length(&self.prongs[piece.prong]);
                return Ok(Landing::Transversal {
                    time: w.elapsed + t,
                    transversal,
                    x: x.max(-half).min(half),
                });
            }
            if w.elapsed + t_lim > bound {
                return Err(Lost::TooLong);
            }
            if let ChordEnd::Corner { t, .. } = end {
                return Ok(Landing::ConePoint {
                    time: w.elapsed + t,
                });
            }
            if !w.cross(&end) {
                return Err(Lost::Stalled);
            }
        }
    }
}

fn prong_length<T: Scalar>(prong: &Prong<T>) -> T {
    prong
        .pieces
        .last()
        .map(|p| p.u0 + (p.b - p.a).norm())
        .unwrap_or_else(T::zero)
}

/// Decomposition over unit-length transversals (ε = 1/2) with height bound 10³.
pub fn compute_decomposition<T: Scalar>(
    surface: &TranslationSurface<T>,
) -> Result<ZipperedDecomposition<T>, ZipperedError> {
    compute_decomposition_with(surface, &ZipperedConfig::default())
}

pub fn compute_decomposition_with<T: Scalar>(
    surface: &TranslationSurface<T>,
    config: &ZipperedConfig<T>,
) -> Result<ZipperedDecomposition<T>, ZipperedError> {
    let eps = config.epsilon;
    let bound = config.height_bound;
    let (layout, transversals) = Layout::new(surface, eps)?;
    let incomplete = |reason: String| ZipperedError::IncompleteDecomposition {
        covered_area: f64::NAN,
        reason,
    };

    let mut breaks: Vec<Vec<T>> = transversals
        .iter()
        .map(|_| vec![-eps, T::zero(), eps])
        .collect();
    let up = Vec2::new(T::zero(), T::one());
    let down = Vec2::new(T::zero(), -T::one());

    // upward separatrices: every upward direction at every cone point
    for cp in surface.cone_classes() {
        for &corner in &cp.members {
            let Some(d) = sector_direction(surface, corner, up) else {
                continue;
            };
            let start = surface.polygon(corner.polygon).vertex(corner.vertex);
            let w = Walker::new(
                surface,
                corner.polygon,
                start,
                d,
                Origin::Vertex(corner.vertex),
            );
            add_landing(
                &mut breaks,
                layout.first_landing(w, bound),
                "upward separatrix",
                bound,
            )?;
        }
    }
    // upward orbits of the far transversal endpoints
    for (tr, _) in transversals.iter().enumerate() {
        for x in [-eps, eps] {
            let (chart, p) = layout
                .position(tr, x)
                .ok_or_else(|| incomplete("transversal endpoint not materialized".into()))?;
            let origin = locate(surface.polygon(chart), p);
            if let Origin::Vertex(_) = origin {
                return Err(incomplete(
                    "transversal endpoint lies on a cone point".into(),
                ));
            }
            let w = Walker::new(surface, chart, p, up, origin);
            add_landing(
                &mut breaks,
                layout.first_landing(w, bound),
                "endpoint orbit",
                bound,
            )?;
        }
    }

    let merge_tol = T::corner_tol() * T::lit(10.0);
    let mut subdivision_points = 0;
    let mut rectangles = Vec::new();
    for (tr, pts) in breaks.iter_mut().enumerate() {
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pts.dedup_by(|a, b| (*a - *b).abs() <= merge_tol);
        subdivision_points += pts.len();
        let mut row: Vec<Rectangle<T>> = Vec::new();
        for pair in pts.windows(2) {
            let (x0, x1) = (pair[0], pair[1]);
            let width = x1 - x0;
            if width <= T::zero() {
                continue;
            }
            let xm = (x0 + x1) / T::lit(2.0);
            let (chart, p) = layout
                .position(tr, xm)
                .ok_or_else(|| incomplete("transversal point not materialized".into()))?;
            let origin = locate(surface.polygon(chart), p);
            let w = Walker::new(surface, chart, p, down, origin);
            let height = match layout.first_landing(w, bound) {
                Ok(Landing::Transversal { time, .. }) => time,
                Ok(Landing::ConePoint { time }) => {
                    return Err(incomplete(format!(
                        "return orbit from transversal {tr} at {} meets a cone point at time {}",
                        xm.as_f64(),
                        time.as_f64()
                    )))
                }
                Err(Lost::TooLong) => {
                    return Err(incomplete(format!(
                        "return time from transversal {tr} at {} exceeds height bound {}",
                        xm.as_f64(),
                        bound.as_f64()
                    )))
                }
                Err(Lost::Stalled) => {
                    return Err(incomplete(
                        "return orbit stalled on a chart boundary".into(),
                    ))
                }
            };
            match row.last_mut() {
                Some(last) if same_height(last.height, height) => {
                    last.base.1 = x1;
                    last.width = last.width + width;
                }
                _ => row.push(Rectangle {
                    transversal: tr,
                    base: (x0, x1),
                    width,
                    height,
                }),
            }
        }
        rectangles.extend(row);
    }

    let covered_area = rectangles
        .iter()
        .fold(T::zero(), |acc, r| acc + r.width * r.height);
    let area = surface.total_area();
    let slack = T::lit(1e-6) * area;
    if covered_area < area - slack {
        return Err(ZipperedError::IncompleteDecomposition {
            covered_area: covered_area.as_f64(),
            reason: "rectangles do not fill the surface".into(),
        });
    }
    if covered_area > area + slack {
        return Err(ZipperedError::OverlappingTransversals {
            covered_area: covered_area.as_f64(),
        });
    }
    Ok(ZipperedDecomposition {
        epsilon: eps,
        transversals,
        rectangles,
        covered_area,
        subdivision_points,
    })
}

fn add_landing<T: Scalar>(
    breaks: &mut [Vec<T>],
    landing: Result<Landing<T>, Lost>,
    what: &str,
    bound: T,
) -> Result<(), ZipperedError> {
    let reason = match landing {
        Ok(Landing::Transversal { transversal, x, .. }) => {
            breaks[transversal].push(x);
            return Ok(());
        }
        // cone points sit at transversal centres, which are breakpoints already
        Ok(Landing::ConePoint { .. }) => return Ok(()),
        Err(Lost::TooLong) => format!("{what} exceeded height bound {}", bound.as_f64()),
        Err(Lost::Stalled) => format!("{what} stalled on a chart boundary"),
    };
    Err(ZipperedError::IncompleteDecomposition {
        covered_area: f64::NAN,
        reason,
    })
}

#[inline]
fn same_height<T: Scalar>(a: T, b: T) -> bool {
    (a - b).abs() <= T::lit(1e-9) * T::one().max(a.abs())
}

impl<T: Scalar> ZipperedDecomposition<T> {
    /// Exact area of `{p : τ̃(p) > t}` for the straight-down flow:
    /// `Σ width · max(height − t, 0)`.
    pub fn exact_distribution(&self, t: T) -> T {
        self.rectangles.iter().fold(T::zero(), |acc, r| {
            acc + r.width * (r.height - t).max(T::zero())
        })
    }

    /// Distinct heights (merged within 1e-9) with their total widths, ascending.
    pub fn heights_histogram(&self) -> Vec<(T, T)> {
        let mut pairs: Vec<(T, T)> = self
            .rectangles
            .iter()
            .map(|r| (r.height, r.width))
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut out: Vec<(T, T)> = Vec::new();
        for (h, w) in pairs {
            match out.last_mut() {
                Some(last) if (h - last.0).abs() <= T::lit(1e-9) => last.1 = last.1 + w,
                _ => out.push((h, w)),
            }
        }
        out
    }

    pub fn max_height(&self) -> T {
        self.rectangles
            .iter()
            .fold(T::zero(), |acc, r| acc.max(r.height))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins::{l_surface, regular_octagon, sheared, square_torus, torus_from_basis};

    /// Downward first return on the torus with basis (len, 0), (a, h): the
    /// horizontal circle rotates by `a` per lap of height `h`.
    fn rotation_oracle(len: f64, a: f64, h: f64, samples: usize) -> Vec<f64> {
        let wrap = |x: f64| x - len * (x / len).round();
        (0..samples)
            .map(|i| {
                let x0 = -0.5 + (i as f64 + 0.5) / samples as f64;
                let mut x = x0;
                let mut k = 0;
                loop {
                    k += 1;
                    x = wrap(x + a);
                    if x.abs() <= 0.5 {
                        return k as f64 * h;
                    }
                }
            })
            .collect()
    }

    fn torus(len: f64, a: f64) -> TranslationSurface<f64> {
        torus_from_basis(Vec2::new(len, 0.0), Vec2::new(a, 1.0 / len)).unwrap()
    }

    #[test]
    fn square_torus_is_one_square() {
        let d = compute_decomposition(&square_torus::<f64>()).unwrap();
        assert_eq!(d.rectangles.len(), 1);
        let r = d.rectangles[0];
        assert_eq!((r.width, r.height), (1.0, 1.0));
        assert_eq!(d.heights_histogram().len(), 1);
    }

    #[test]
    fn torus_matches_rotation_oracle() {
        for &(len, a) in &[(2.0, 0.3), (3.0, 0.7), (1.6, 0.45), (2.5, 1.1)] {
            let d = compute_decomposition(&torus(len, a)).unwrap();
            assert!((d.covered_area - 1.0).abs() < 1e-9);
            let hist = d.heights_histogram();
            assert!(hist.len() <= 3, "more than three return times: {hist:?}");
            let n = 100_000;
            let oracle = rotation_oracle(len, a, 1.0 / len, n);
            for &(h, w) in &hist {
                let share =
                    oracle.iter().filter(|&&o| (o - h).abs() < 1e-9).count() as f64 / n as f64;
                assert!(
                    (share - w).abs() < 1e-4,
                    "len {len} a {a}: height {h} width {w} oracle {share}"
                );
            }
            for t in [0.0, 0.3, 0.9, 2.0] {
                let exact = d.exact_distribution(t);
                let grid = oracle.iter().map(|&h| (h - t).max(0.0)).sum::<f64>() / n as f64;
                assert!((exact - grid).abs() < 1e-3, "t {t}: {exact} vs {grid}");
            }
        }
    }

    #[test]
    fn tori_give_at_most_three_heights() {
        for i in 1..40 {
            let a = 0.0371 * i as f64;
            let d = compute_decomposition(&torus(2.0, a)).unwrap();
            assert!(d.heights_histogram().len() <= 3);
        }
    }

    #[test]
    fn rectangles_fill_higher_genus_surfaces() {
        let turn = |s: TranslationSurface<f64>, a: f64| {
            s.apply_matrix(&crate::geom::Mat2::rotation(a)).unwrap()
        };
        let cases = [
            turn(l_surface(1.0, 1.0).unwrap(), 0.4),
            sheared(&turn(l_surface(1.0, 1.0).unwrap(), 0.4), 0.3819660112501051),
            turn(l_surface(0.7, 1.3).unwrap(), 1.1),
            turn(regular_octagon(), 0.3),
        ];
        for s in &cases {
            let d = compute_decomposition(s).unwrap();
            let total: f64 = d.rectangles.iter().map(|r| r.width * r.height).sum();
            assert!((total - 1.0).abs() < 1e-6, "covered {total}");
            assert!((d.exact_distribution(0.0) - 1.0).abs() < 1e-6);
            assert_eq!(d.transversals.len(), s.stratum().kappa as usize);
            let widths: f64 = d.rectangles.iter().map(|r| r.width).sum();
            assert!((widths - s.stratum().kappa as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn exact_distribution_of_a_single_square() {
        let d = compute_decomposition(&square_torus::<f64>()).unwrap();
        assert_eq!(d.exact_distribution(0.0), 1.0);
        assert!((d.exact_distribution(0.25) - 0.75).abs() < 1e-15);
        assert_eq!(d.exact_distribution(1.5), 0.0);
    }

    #[test]
    fn small_height_bound_is_incomplete() {
        let cfg = ZipperedConfig {
            epsilon: 0.5,
            height_bound: 0.6,
        };
        let err = compute_decomposition_with(&torus(2.0, 0.3), &cfg).unwrap_err();
        assert!(
            matches!(err, ZipperedError::IncompleteDecomposition { .. }),
            "{err}"
        );
    }

    #[test]
    fn short_circles_overlap() {
        let err = compute_decomposition(&torus(0.8, 0.1)).unwrap_err();
        assert!(
            matches!(err, ZipperedError::OverlappingTransversals { .. }),
            "{err}"
        );
    }

    #[test]
    fn shorter_transversals_leave_no_gaps() {
        let s = sheared(&l_surface::<f64>(1.0, 1.0).unwrap(), 0.3819660112501051);
        assert!(matches!(
            compute_decomposition(&s),
            Err(ZipperedError::OverlappingTransversals { .. })
        ));
        let cfg = ZipperedConfig {
            epsilon: 0.2,
            height_bound: 1e4,
        };
        let d = compute_decomposition_with(&s, &cfg).unwrap();
        assert!((d.covered_area - 1.0).abs() < 1e-6);
        for r in &d.rectangles {
            assert!(r.base.0 >= -0.2 - 1e-12 && r.base.1 <= 0.2 + 1e-12 && r.width > 0.0);
        }
    }

    #[test]
    fn single_precision() {
        let d = compute_decomposition(&square_torus::<f32>()).unwrap();
        assert!((d.covered_area - 1.0f32).abs() < 1e-5);
    }
}
