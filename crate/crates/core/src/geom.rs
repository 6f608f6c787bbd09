//! Planar vectors and 2×2 matrices.

use std::ops::{Add, Mul, Neg, Sub};

use crate::Scalar;

/// Point or vector in the plane.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vec2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Vec2<T> {
    #[inline]
    pub const fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero())
    }

    /// Unit vector pointing in direction `theta` (radians, counterclockwise from +x).
    #[inline]
    pub fn from_angle(theta: T) -> Self {
        let (s, c) = theta.sin_cos();
        Self::new(c, s)
    }

    #[inline]
    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product; positive when `o` is counterclockwise of `self`.
    #[inline]
    pub fn cross(self, o: Self) -> T {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm_sq(self) -> T {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> T {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn scale(self, k: T) -> Self {
        Self::new(self.x * k, self.y * k)
    }

    #[inline]
    pub fn normalized(self) -> Self {
        self.scale(T::one() / self.norm())
    }

    #[inline]
    pub fn angle(self) -> T {
        self.y.atan2(self.x)
    }

    /// Counterclockwise angle from `self` to `o`, in `(-π, π]`.
    #[inline]
    pub fn angle_to(self, o: Self) -> T {
        self.cross(o).atan2(self.dot(o))
    }

    #[inline]
    pub fn lerp(self, o: Self, s: T) -> Self {
        self + (o - self).scale(s)
    }

    pub fn cast<U: Scalar>(self) -> Vec2<U> {
        Vec2::new(U::lit(self.x.as_f64()), U::lit(self.y.as_f64()))
    }
}

impl<T: Scalar> Add for Vec2<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }
}

impl<T: Scalar> Sub for Vec2<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }
}

impl<T: Scalar> Neg for Vec2<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

impl<T: Scalar> From<[T; 2]> for Vec2<T> {
    fn from([x, y]: [T; 2]) -> Self {
        Self::new(x, y)
    }
}

/// Real 2×2 matrix `[[a, b], [c, d]]` acting on column vectors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2<T> {
    pub a: T,
    pub b: T,
    pub c: T,
    pub d: T,
}

impl<T: Scalar> Mat2<T> {
    #[inline]
    pub const fn new(a: T, b: T, c: T, d: T) -> Self {
        Self { a, b, c, d }
    }

    pub fn identity() -> Self {
        Self::new(T::one(), T::zero(), T::zero(), T::one())
    }

    /// Counterclockwise rotation by `theta`.
    pub fn rotation(theta: T) -> Self {
        let (s, c) = theta.sin_cos();
        Self::new(c, -s, s, c)
    }

    /// Geodesic flow element `diag(e^t, e^-t)`.
    pub fn diagonal_flow(t: T) -> Self {
        Self::new(t.exp(), T::zero(), T::zero(), (-t).exp())
    }

    /// Shear `[[1, s], [0, 1]]`.
    pub fn horizontal_shear(s: T) -> Self {
        Self::new(T::one(), s, T::zero(), T::one())
    }

    #[inline]
    pub fn det(&self) -> T {
        self.a * self.d - self.b * self.c
    }

    #[inline]
    pub fn apply(&self, v: Vec2<T>) -> Vec2<T> {
        Vec2::new(self.a * v.x + self.b * v.y, self.c * v.x + self.d * v.y)
    }

    pub fn is_special_linear(&self) -> bool {
        (self.det() - T::one()).abs() <= T::det_tol()
    }
}

impl<T: Scalar> Mul for Mat2<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self::new(
            self.a * o.a + self.b * o.c,
            self.a * o.b + self.b * o.d,
            self.c * o.a + self.d * o.c,
            self.c * o.b + self.d * o.d,
        )
    }
}

impl<T: Scalar> Mul<Vec2<T>> for Mat2<T> {
    type Output = Vec2<T>;
    fn mul(self, v: Vec2<T>) -> Vec2<T> {
        self.apply(v)
    }
}

/// `a_{log(1/(2ε))} · r_{-π/2-θ}`: turns the direction `theta` into straight
/// down and rescales so obstacles of half-length `epsilon` become half-length 1/2.
pub fn renormalization_matrix<T: Scalar>(epsilon: T, theta: T) -> Mat2<T> {
    let two = T::lit(2.0);
    let t = (T::one() / (two * epsilon)).ln();
    Mat2::diagonal_flow(t) * Mat2::rotation(-T::FRAC_PI_2() - theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn close(m: Mat2<f64>, n: Mat2<f64>, tol: f64) -> bool {
        (m.a - n.a).abs() <= tol
            && (m.b - n.b).abs() <= tol
            && (m.c - n.c).abs() <= tol
            && (m.d - n.d).abs() <= tol
    }

    #[test]
    fn renormalization_at_half_vertical_is_identity() {
        let g = renormalization_matrix(0.5, -FRAC_PI_2);
        assert!(close(g, Mat2::identity(), 1e-15));
    }

    #[test]
    fn renormalization_at_quarter_vertical_is_diag_two_half() {
        let g = renormalization_matrix(0.25, -FRAC_PI_2);
        assert!(close(g, Mat2::new(2.0, 0.0, 0.0, 0.5), 1e-15));
    }

    #[test]
    fn renormalization_at_half_horizontal_is_quarter_turn_clockwise() {
        let g = renormalization_matrix(0.5, 0.0);
        assert!(close(g, Mat2::rotation(-FRAC_PI_2), 1e-15));
        // maps the flow direction θ=0 to straight down
        let v = g.apply(Vec2::new(1.0, 0.0));
        assert_abs_diff_eq!(v.x, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v.y, -1.0, epsilon = 1e-15);
    }

    #[test]
    fn renormalization_sends_theta_to_straight_down() {
        for k in 0..16 {
            let theta = k as f64 * PI / 8.0;
            let eps = 0.05;
            let v = renormalization_matrix(eps, theta).apply(Vec2::from_angle(theta));
            assert_abs_diff_eq!(v.x, 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(v.y, -2.0 * eps, epsilon = 1e-12);
        }
    }

    #[test]
    fn group_elements_have_unit_determinant() {
        assert!(Mat2::rotation(0.7f64).is_special_linear());
        assert!(Mat2::diagonal_flow(2.3f64).is_special_linear());
        assert!(renormalization_matrix(0.01f64, 1.1).is_special_linear());
        assert!(!Mat2::new(2.0f64, 0.0, 0.0, 2.0).is_special_linear());
    }

    #[test]
    fn angle_to_is_signed() {
        let e = Vec2::new(1.0, 0.0);
        assert_abs_diff_eq!(e.angle_to(Vec2::new(0.0, 1.0)), FRAC_PI_2);
        assert_abs_diff_eq!(e.angle_to(Vec2::new(0.0, -1.0)), -FRAC_PI_2);
    }
}
