//! Ready-made surfaces. Every constructor returns a validated unit-area surface.

use crate::geom::{Mat2, Vec2};
use crate::surface::{EdgeGluing, EdgeRef, SurfaceError, TranslationSurface};
use crate::Scalar;

fn glue(pairs: &[(usize, usize)]) -> Vec<EdgeGluing> {
    pairs
        .iter()
        .map(|&(a, b)| EdgeGluing::new(EdgeRef::new(0, a), EdgeRef::new(0, b)))
        .collect()
}

/// Unit square with opposite sides identified.
pub fn square_torus<T: Scalar>() -> TranslationSurface<T> {
    torus_from_basis(
        Vec2::new(T::one(), T::zero()),
        Vec2::new(T::zero(), T::one()),
    )
    .expect("unit square is a valid torus")
}

/// Parallelogram spanned by `u` and `v` (counterclockwise) with opposite sides identified.
pub fn torus_from_basis<T: Scalar>(
    u: Vec2<T>,
    v: Vec2<T>,
) -> Result<TranslationSurface<T>, SurfaceError> {
    let o = Vec2::zero();
    TranslationSurface::build(vec![vec![o, u, u + v, v]], glue(&[(0, 2), (1, 3)]))
}

/// The golden shear torus: the unit square sheared by `[[1, γ], [0, 1]]`, `γ = (√5 − 1)/2`.
pub fn golden_shear_torus<T: Scalar>() -> TranslationSurface<T> {
    let gamma = (T::lit(5.0).sqrt() - T::one()) / T::lit(2.0);
    torus_from_basis(Vec2::new(T::one(), T::zero()), Vec2::new(gamma, T::one()))
        .expect("sheared square is a valid torus")
}

/// L-shaped surface: a unit square with an `a × 1` arm to the right and a
/// `1 × b` arm on top. `l_surface(1, 1)` is the three-square L in H(2).
///
/// The corners where the arms meet the square are kept as flat vertices so
/// that every gluing pairs whole edges.
pub fn l_surface<T: Scalar>(a: T, b: T) -> Result<TranslationSurface<T>, SurfaceError> {
    let z = T::zero();
    let one = T::one();
    let p = |x, y| Vec2::new(x, y);
    let vertices = vec![
        p(z, z),
        p(one, z),
        p(one + a, z),
        p(one + a, one),
        p(one, one),
        p(one, one + b),
        p(z, one + b),
        p(z, one),
    ];
    // bottom/top of the square column, bottom/top of the arm, sides of each row
    TranslationSurface::build(vec![vertices], glue(&[(0, 5), (1, 3), (2, 7), (4, 6)]))
}

/// Regular octagon with opposite sides identified; one cone point of angle 6π.
pub fn regular_octagon<T: Scalar>() -> TranslationSurface<T> {
    let step = T::FRAC_PI_4();
    let vertices = (0..8)
        .map(|k| Vec2::from_angle(step * T::lit(k as f64) + step / T::lit(2.0)))
        .collect();
    TranslationSurface::build(vec![vertices], glue(&[(0, 4), (1, 5), (2, 6), (3, 7)]))
        .expect("regular octagon is a valid surface")
}

/// Looks up a builtin by name with positional parameters.
pub fn by_name<T: Scalar>(name: &str, params: &[T]) -> Result<TranslationSurface<T>, String> {
    let want = |n: usize| {
        if params.len() == n {
            Ok(())
        } else {
            Err(format!(
                "builtin `{name}` takes {n} parameters, got {}",
                params.len()
            ))
        }
    };
    match name {
        "square_torus" => want(0).map(|_| square_torus()),
        "golden_shear_torus" => want(0).map(|_| golden_shear_torus()),
        "regular_octagon" => want(0).map(|_| regular_octagon()),
        "torus_from_basis" => {
            want(4)?;
            torus_from_basis(Vec2::new(params[0], params[1]), Vec2::new(params[2], params[3]))
                .map_err(|e| e.to_string())
        }
        "l_surface" => {
            want(2)?;
            l_surface(params[0], params[1]).map_err(|e| e.to_string())
        }
        other => Err(format!(
            "unknown builtin `{other}` (expected square_torus, torus_from_basis, golden_shear_torus, l_surface, regular_octagon)"
        )),
    }
}

/// Applies a shear `[[1, s], [0, 1]]`; convenient for making vertical flow generic.
pub fn sheared<T: Scalar>(surface: &TranslationSurface<T>, s: T) -> TranslationSurface<T> {
    surface
        .apply_matrix(&Mat2::horizontal_shear(s))
        .expect("shears are unimodular")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn all_builtins_have_unit_area() {
        let surfaces: Vec<TranslationSurface<f64>> = vec![
            square_torus(),
            golden_shear_torus(),
            regular_octagon(),
            l_surface(1.0, 1.0).unwrap(),
            l_surface(0.7, 2.3).unwrap(),
            torus_from_basis(Vec2::new(2.0, 0.0), Vec2::new(0.3, 0.5)).unwrap(),
        ];
        for s in surfaces {
            assert_abs_diff_eq!(s.total_area(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn gauss_bonnet_on_builtins() {
        let surfaces: Vec<TranslationSurface<f64>> = vec![
            square_torus(),
            regular_octagon(),
            l_surface(1.0, 1.0).unwrap(),
            l_surface(3.0, 0.5).unwrap(),
        ];
        for s in surfaces {
            let angles: f64 = (0..s.cone_classes().len()).map(|i| s.cone_angle(i)).sum();
            assert_abs_diff_eq!(
                angles,
                std::f64::consts::TAU * s.stratum().kappa as f64,
                epsilon = 1e-9
            );
            let sum: u32 = s.stratum().alphas.iter().sum();
            assert_eq!(sum % 2, 0);
        }
    }

    #[test]
    fn torus_basis_must_be_counterclockwise() {
        assert!(torus_from_basis(Vec2::new(0.0, 1.0), Vec2::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn lookup_by_name() {
        assert!(by_name::<f64>("square_torus", &[]).is_ok());
        assert!(by_name::<f64>("l_surface", &[1.0]).is_err());
        assert!(by_name::<f64>("klein_bottle", &[]).is_err());
        let s = by_name::<f64>("torus_from_basis", &[2.0, 0.0, 0.3, 0.5]).unwrap();
        assert_eq!(s.stratum().kappa, 1);
    }

    #[test]
    fn single_precision_square_torus() {
        let s = square_torus::<f32>();
        assert_eq!(s.stratum().kappa, 1);
        assert!((s.total_area() - 1.0).abs() < 1e-6);
    }
}
