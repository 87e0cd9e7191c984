//! Poincaré-ball primitives (curvature −1).
//!
//! Everything here works on plain coordinate slices so the trainer can run
//! over a flat embedding buffer without copying rows. [`PoincarePoint`] is the
//! owned, validated form for callers that want the ball invariant checked.

use std::ops::Deref;

use crate::error::{Error, Result};

/// Default ball margin: points are kept at Euclidean norm ≤ 1 − `DEFAULT_EPS`.
pub const DEFAULT_EPS: f64 = 1e-5;

/// Below this value of `γ − 1` two points are treated as coincident by
/// [`distance_gradient`].
const COINCIDENT_TOL: f64 = 1e-12;

/// A point strictly inside the unit ball, dimension ≥ 2.
#[derive(Debug, Clone, PartialEq)]
pub struct PoincarePoint(Vec<f64>);

impl PoincarePoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::invalid(format!(
                "Poincaré points need at least 2 coordinates, got {}",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("non-finite coordinate"));
        }
        let n2 = norm_sq(&coords);
        if n2 >= 1.0 {
            return Err(Error::invalid(format!(
                "point has Euclidean norm {} outside the open unit ball",
                n2.sqrt()
            )));
        }
        Ok(Self(coords))
    }

    pub fn origin(dim: usize) -> Self {
        Self(vec![0.0; dim.max(2)])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for PoincarePoint {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for PoincarePoint {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[inline]
pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

#[inline]
pub fn norm_sq(u: &[f64]) -> f64 {
    dot(u, u)
}

#[inline]
fn diff_norm_sq(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn check_dims(u: &[f64], v: &[f64]) -> Result<()> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    Ok(())
}

/// Poincaré distance with a dimension check.
pub fn poincare_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    check_dims(u, v)?;
    Ok(distance(u, v))
}

/// Poincaré distance `arcosh(1 + 2‖u−v‖² / ((1−‖u‖²)(1−‖v‖²)))`.
///
/// Evaluated through the identity `arcosh(1 + 2x) = 2·asinh(√x)`, which
/// needs no clamping and keeps full precision for nearby points. The result
/// is exactly symmetric in its arguments.
#[inline]
pub fn distance(u: &[f64], v: &[f64]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    let alpha = 1.0 - norm_sq(u);
    let beta = 1.0 - norm_sq(v);
    let x = diff_norm_sq(u, v) / (alpha * beta);
    2.0 * x.max(0.0).sqrt().asinh()
}

/// Distance from the origin, `2·artanh‖u‖`.
#[inline]
pub fn hyperbolic_norm(u: &[f64]) -> f64 {
    2.0 * norm_sq(u).sqrt().atanh()
}

/// Scale `u` in place so its Euclidean norm is at most `1 − eps`.
#[inline]
pub fn project_in_place(u: &mut [f64], eps: f64) {
    let max = 1.0 - eps;
    let n = norm_sq(u).sqrt();
    if n > max {
        let s = max / n;
        u.iter_mut().for_each(|c| *c *= s);
    }
}

/// Returns `u` unchanged when `‖u‖ ≤ 1 − eps`, otherwise rescaled onto that sphere.
pub fn project_to_ball(u: &[f64], eps: f64) -> Vec<f64> {
    let mut out = u.to_vec();
    project_in_place(&mut out, eps);
    out
}

/// Radially rescale `u` in place so its hyperbolic norm is multiplied by `k`.
///
/// The Euclidean norm `a` maps to `tanh(k·artanh(a))`; for `k = 2` this is
/// `2a / (1 + a²)`.
pub fn dilate_in_place(u: &mut [f64], k: f64, eps: f64) {
    let a = norm_sq(u).sqrt();
    if a == 0.0 || k == 1.0 {
        return;
    }
    let target = (k * a.atanh()).tanh();
    let s = target / a;
    u.iter_mut().for_each(|c| *c *= s);
    project_in_place(u, eps);
}

/// k-dilation of a single point. `k` must be positive.
pub fn dilate(u: &[f64], k: f64, eps: f64) -> Result<Vec<f64>> {
    if !k.is_finite() || k <= 0.0 {
        return Err(Error::invalid(format!("dilation factor must be > 0, got {k}")));
    }
    let mut out = u.to_vec();
    dilate_in_place(&mut out, k, eps);
    Ok(out)
}

/// Adds `scale · ∂d/∂u` into `grad_u` and `scale · ∂d/∂v` into `grad_v`.
///
/// Contributes nothing when the points coincide (γ − 1 < 1e−12).
#[inline]
pub fn accumulate_distance_gradient(
    u: &[f64],
    v: &[f64],
    scale: f64,
    grad_u: &mut [f64],
    grad_v: &mut [f64],
) {
    let uu = norm_sq(u);
    let vv = norm_sq(v);
    let uv = dot(u, v);
    let alpha = 1.0 - uu;
    let beta = 1.0 - vv;
    let delta = 2.0 * diff_norm_sq(u, v) / (alpha * beta);
    if delta < COINCIDENT_TOL {
        return;
    }
    // γ² − 1 = δ(δ + 2) with δ = γ − 1, avoiding cancellation near γ = 1.
    let root = (delta * (delta + 2.0)).sqrt();

    let cu = 4.0 / (beta * root);
    let cu_self = cu * (vv - 2.0 * uv + 1.0) / (alpha * alpha);
    let cu_other = cu / alpha;

    let cv = 4.0 / (alpha * root);
    let cv_self = cv * (uu - 2.0 * uv + 1.0) / (beta * beta);
    let cv_other = cv / beta;

    for i in 0..u.len() {
        grad_u[i] += scale * (cu_self * u[i] - cu_other * v[i]);
        grad_v[i] += scale * (cv_self * v[i] - cv_other * u[i]);
    }
}

/// Euclidean partial derivatives `(∂d/∂u, ∂d/∂v)` of the Poincaré distance.
pub fn distance_gradient(u: &[f64], v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dims(u, v)?;
    let mut gu = vec![0.0; u.len()];
    let mut gv = vec![0.0; v.len()];
    accumulate_distance_gradient(u, v, 1.0, &mut gu, &mut gv);
    Ok((gu, gv))
}

/// Inverse metric factor `(1 − ‖θ‖²)² / 4`.
#[inline]
pub fn riemannian_factor(theta: &[f64]) -> f64 {
    let a = 1.0 - norm_sq(theta);
    a * a / 4.0
}

/// Converts a Euclidean gradient at `theta` into the Riemannian one.
pub fn riemannian_rescale(theta: &[f64], euclid_grad: &[f64]) -> Result<Vec<f64>> {
    check_dims(theta, euclid_grad)?;
    let f = riemannian_factor(theta);
    Ok(euclid_grad.iter().map(|g| f * g).collect())
}

/// Inversion in a sphere orthogonal to the unit sphere; restricted to the
/// ball it is a hyperbolic isometry.
#[derive(Debug, Clone, PartialEq)]
pub enum Inversion {
    Identity,
    Sphere { center: Vec<f64>, radius_sq: f64 },
}

impl Inversion {
    /// The inversion that sends `a` to the origin: center `a/‖a‖²`,
    /// squared radius `1/‖a‖² − 1`.
    pub fn to_origin(a: &[f64]) -> Self {
        let n2 = norm_sq(a);
        if n2 == 0.0 {
            return Inversion::Identity;
        }
        Inversion::Sphere {
            center: a.iter().map(|c| c / n2).collect(),
            radius_sq: 1.0 / n2 - 1.0,
        }
    }

    /// `f(x) = C + ρ²(x − C)/‖x − C‖²`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Inversion::Identity => Ok(x.to_vec()),
            Inversion::Sphere { center, radius_sq } => {
                check_dims(center, x)?;
                let d2 = diff_norm_sq(x, center);
                if d2 == 0.0 {
                    return Err(Error::invalid("point coincides with the inversion center"));
                }
                let s = radius_sq / d2;
                Ok(center
                    .iter()
                    .zip(x)
                    .map(|(c, xi)| c + s * (xi - c))
                    .collect())
            }
        }
    }
}

/// See [`Inversion::to_origin`].
pub fn inversion_to_origin(a: &[f64]) -> Inversion {
    Inversion::to_origin(a)
}

/// See [`Inversion::apply`].
pub fn apply_inversion(p: &Inversion, x: &[f64]) -> Result<Vec<f64>> {
    p.apply(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const LN3: f64 = 1.098_612_288_668_109_8;

    /// Central differences of `distance` with respect to every coordinate of u then v.
    fn fd_gradient(u: &[f64], v: &[f64], h: f64) -> (Vec<f64>, Vec<f64>) {
        let partial = |which: usize, i: usize| {
            let (mut up, mut vp) = (u.to_vec(), v.to_vec());
            let (mut um, mut vm) = (u.to_vec(), v.to_vec());
            if which == 0 {
                up[i] += h;
                um[i] -= h;
            } else {
                vp[i] += h;
                vm[i] -= h;
            }
            (distance(&up, &vp) - distance(&um, &vm)) / (2.0 * h)
        };
        (
            (0..u.len()).map(|i| partial(0, i)).collect(),
            (0..v.len()).map(|i| partial(1, i)).collect(),
        )
    }

    fn ball_point(dim: usize, max_norm: f64) -> impl Strategy<Value = Vec<f64>> {
        (
            proptest::collection::vec(-1.0f64..1.0, dim),
            0.0f64..max_norm,
        )
            .prop_filter("non-zero direction", |(d, _)| norm_sq(d) > 1e-6)
            .prop_map(|(d, r)| {
                let n = norm_sq(&d).sqrt();
                d.into_iter().map(|c| c / n * r).collect()
            })
    }

    fn pair(max_norm: f64) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        prop_oneof![Just(2usize), Just(5usize), Just(10usize)]
            .prop_flat_map(move |d| (ball_point(d, max_norm), ball_point(d, max_norm)))
    }

    #[test]
    fn distance_examples() {
        assert_eq!(distance(&[0.3, 0.0], &[0.3, 0.0]), 0.0);
        assert!((distance(&[0.0, 0.0], &[0.5, 0.0]) - LN3).abs() < 1e-12);
        assert!((distance(&[0.5, 0.0], &[-0.5, 0.0]) - 2.0 * LN3).abs() < 1e-12);
    }

    #[test]
    fn distance_rejects_mismatched_dims() {
        assert!(matches!(
            poincare_distance(&[0.1, 0.0], &[0.1, 0.0, 0.0]),
            Err(Error::DimensionMismatch { left: 2, right: 3 })
        ));
    }

    #[test]
    fn hyperbolic_norm_examples() {
        assert_eq!(hyperbolic_norm(&[0.0, 0.0]), 0.0);
        assert!((hyperbolic_norm(&[0.3, 0.4]) - LN3).abs() < 1e-12);
        assert!((hyperbolic_norm(&[0.0, 0.8]) - 9f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn dilate_examples() {
        let u = [0.3, -0.4];
        assert_eq!(dilate(&u, 1.0, DEFAULT_EPS).unwrap(), u.to_vec());
        let twice = dilate(&u, 2.0, DEFAULT_EPS).unwrap();
        assert!((norm_sq(&twice).sqrt() - 0.8).abs() < 1e-12);
        // closed form 2A / (1 + ‖A‖²)
        for (a, b) in twice.iter().zip(u) {
            assert!((a - 2.0 * b / 1.25).abs() < 1e-12);
        }
        assert_eq!(dilate(&[0.0, 0.0], 3.7, DEFAULT_EPS).unwrap(), vec![0.0, 0.0]);
        assert!(dilate(&u, 0.0, DEFAULT_EPS).is_err());
        assert!(dilate(&u, -1.0, DEFAULT_EPS).is_err());
    }

    #[test]
    fn gradient_guard_and_origin_case() {
        let (gu, gv) = distance_gradient(&[0.2, 0.1], &[0.2, 0.1]).unwrap();
        assert_eq!(gu, vec![0.0, 0.0]);
        assert_eq!(gv, vec![0.0, 0.0]);

        let u = [0.0, 0.0];
        let v = [0.5, 0.0];
        let (fd_u, _) = fd_gradient(&u, &v, 1e-6);
        let (gu, _) = distance_gradient(&u, &v).unwrap();
        // frozen oracle value: −2 (d = 2 artanh|(t − ½)/(1 − t/2)| differentiated at t = 0)
        assert!((fd_u[0] + 2.0).abs() < 1e-6);
        assert!((gu[0] - fd_u[0]).abs() < 1e-6);
        assert!(gu[1].abs() < 1e-12);
    }

    #[test]
    fn riemannian_rescale_examples() {
        let g = [1.0, -2.0, 0.5];
        assert_eq!(riemannian_rescale(&[0.0; 3], &g).unwrap(), vec![0.25, -0.5, 0.125]);
        let near = [0.999_999_9, 0.0, 0.0];
        assert!(riemannian_rescale(&near, &g).unwrap().iter().all(|c| c.abs() < 1e-12));
        assert_eq!(riemannian_rescale(&[0.3, 0.1, 0.0], &[0.0; 3]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_to_ball(&[0.2, 0.1], 1e-5), vec![0.2, 0.1]);
        let p = project_to_ball(&[1.2 * 0.6, 1.2 * 0.8], 1e-5);
        assert!((norm_sq(&p).sqrt() - 0.99999).abs() < 1e-15);
        assert!((p[0] / p[1] - 0.75).abs() < 1e-12);
        assert_eq!(project_to_ball(&[0.0, 0.0], 1e-5), vec![0.0, 0.0]);
    }

    #[test]
    fn inversion_examples() {
        assert_eq!(Inversion::to_origin(&[0.0, 0.0]), Inversion::Identity);
        assert_eq!(Inversion::Identity.apply(&[0.1, 0.2]).unwrap(), vec![0.1, 0.2]);
        let inv = Inversion::to_origin(&[0.5, 0.0]);
        match &inv {
            Inversion::Sphere { center, radius_sq } => {
                assert!((center[0] - 2.0).abs() < 1e-15 && center[1] == 0.0);
                assert!((radius_sq - 3.0).abs() < 1e-15);
                // orthogonal to the unit sphere: ρ² = ‖C‖² − 1
                assert!((radius_sq - (norm_sq(center) - 1.0)).abs() < 1e-12);
            }
            Inversion::Identity => panic!("expected a sphere inversion"),
        }
        let image = inv.apply(&[0.5, 0.0]).unwrap();
        assert!(norm_sq(&image).sqrt() < 1e-12);
    }

    #[test]
    fn poincare_point_validation() {
        assert!(PoincarePoint::new(vec![0.5]).is_err());
        assert!(PoincarePoint::new(vec![0.8, 0.6]).is_err());
        assert!(PoincarePoint::new(vec![f64::NAN, 0.0]).is_err());
        let p = PoincarePoint::new(vec![0.1, 0.2]).unwrap();
        assert_eq!(p.dim(), 2);
        assert_eq!(hyperbolic_norm(&p), hyperbolic_norm(&[0.1, 0.2]));
    }

    proptest! {
        #[test]
        fn distance_is_symmetric_and_nonnegative((u, v) in pair(0.999)) {
            let d = distance(&u, &v);
            prop_assert!(d >= 0.0);
            prop_assert_eq!(d, distance(&v, &u));
        }

        #[test]
        fn triangle_inequality((u, v) in pair(0.99), t in 0.0f64..1.0) {
            let w: Vec<f64> = u.iter().zip(&v).map(|(a, b)| 0.5 * (t * a - b)).collect();
            prop_assert!(distance(&u, &v) <= distance(&u, &w) + distance(&w, &v) + 1e-9);
        }

        #[test]
        fn norm_matches_origin_distance(u in ball_point(3, 0.9999)) {
            let o = [0.0; 3];
            prop_assert!((hyperbolic_norm(&u) - distance(&o, &u)).abs() < 1e-12);
        }

        #[test]
        fn dilation_is_multiplicative(u in ball_point(4, 0.9), k1 in 0.2f64..2.0, k2 in 0.2f64..2.0) {
            let once = dilate(&u, k1, 1e-12).unwrap();
            prop_assert!((hyperbolic_norm(&once) - k1 * hyperbolic_norm(&u)).abs() < 1e-9);
            let composed = dilate(&once, k2, 1e-12).unwrap();
            let direct = dilate(&u, k1 * k2, 1e-12).unwrap();
            for (a, b) in composed.iter().zip(&direct) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn gradient_matches_finite_differences((u, v) in pair(0.95)) {
            prop_assume!(distance(&u, &v) > 1e-3);
            let (gu, gv) = distance_gradient(&u, &v).unwrap();
            let (fu, fv) = fd_gradient(&u, &v, 1e-6);
            let scale = fu.iter().chain(&fv).fold(0.0f64, |m, x| m.max(x.abs())).max(1e-8);
            for (a, b) in gu.iter().chain(&gv).zip(fu.iter().chain(&fv)) {
                prop_assert!((a - b).abs() / scale < 1e-5, "analytic {} vs fd {}", a, b);
            }
        }

        #[test]
        fn inversion_is_an_isometric_involution(a in ball_point(5, 0.95), x in ball_point(5, 0.95), y in ball_point(5, 0.95)) {
            let inv = Inversion::to_origin(&a);
            let fx = inv.apply(&x).unwrap();
            let fy = inv.apply(&y).unwrap();
            prop_assert!(norm_sq(&fx) < 1.0);
            prop_assert!((distance(&fx, &fy) - distance(&x, &y)).abs() < 1e-9);
            let back = inv.apply(&fx).unwrap();
            for (p, q) in back.iter().zip(&x) {
                prop_assert!((p - q).abs() < 1e-9);
            }
        }

        #[test]
        fn projection_bounds_norm(u in proptest::collection::vec(-3.0f64..3.0, 2..6)) {
            let p = project_to_ball(&u, 1e-5);
            prop_assert!(norm_sq(&p).sqrt() <= 1.0 - 1e-5 + 1e-15);
        }
    }
}
