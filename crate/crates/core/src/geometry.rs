//! Poincaré ball kernel: distances, radial coordinate, origin exp/log maps,
//! and a boundary-safe projection.
//!
//! The ball of curvature `-c` (`c > 0`) is the set `{ x : c·||x||^2 < 1 }`.
//! All operations are pure functions over immutable values and are safe to
//! call concurrently. Computation is in `f64`; `arcosh` is evaluated as
//! `ln(z + sqrt(z^2 - 1))` with `z` clamped to `>= 1` so that rounding just
//! below 1 cannot produce NaN.

use crate::error::{EngineError, Result};

/// Default guard width that keeps points strictly off the ball boundary.
pub const BALL_EPS: f64 = 1e-5;

/// Curvature magnitude `c`; the ball has constant curvature `-c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Curvature(f64);

impl Curvature {
    pub fn new(c: f64) -> Result<Self> {
        if !c.is_finite() || c <= 0.0 {
            return Err(EngineError::InvalidParameter(format!(
                "curvature must be a finite positive real, got {c}"
            )));
        }
        Ok(Curvature(c))
    }

    pub fn get(self) -> f64 {
        self.0
    }

    pub fn sqrt(self) -> f64 {
        self.0.sqrt()
    }
}

/// A point strictly inside the Poincaré ball of its curvature.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperbolicPoint {
    coords: Vec<f64>,
    curvature: Curvature,
}

impl HyperbolicPoint {
    /// Wraps coordinates that must already lie strictly inside the ball.
    /// Use [`clamp_into_ball`] for arbitrary input.
    pub fn new(coords: Vec<f64>, curvature: Curvature) -> Result<Self> {
        let p = HyperbolicPoint { coords, curvature };
        p.check_interior()?;
        Ok(p)
    }

    pub fn origin(dim: usize, curvature: Curvature) -> Self {
        HyperbolicPoint {
            coords: vec![0.0; dim],
            curvature,
        }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn curvature(&self) -> Curvature {
        self.curvature
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.coords)
    }

    fn check_interior(&self) -> Result<()> {
        let c_norm_sq = self.curvature.get() * dot(&self.coords, &self.coords);
        if !c_norm_sq.is_finite() || c_norm_sq >= 1.0 {
            return Err(EngineError::BoundaryPoint { c_norm_sq });
        }
        Ok(())
    }
}

/// Element of the tangent space at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub coords: Vec<f64>,
}

impl TangentVector {
    pub fn new(coords: Vec<f64>) -> Self {
        TangentVector { coords }
    }

    pub fn norm(&self) -> f64 {
        norm(&self.coords)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `arcosh(z)` as `ln(z + sqrt(z^2 - 1))`, absorbing `z = 1 - O(eps)` rounding.
fn acosh_stable(z: f64) -> f64 {
    let z = z.max(1.0);
    (z + (z * z - 1.0).sqrt()).ln()
}

fn check_same_space(u: &HyperbolicPoint, v: &HyperbolicPoint) -> Result<()> {
    if u.dim() != v.dim() {
        return Err(EngineError::DimensionMismatch {
            expected: u.dim(),
            got: v.dim(),
        });
    }
    if u.curvature() != v.curvature() {
        return Err(EngineError::CurvatureMismatch {
            a: u.curvature().get(),
            b: v.curvature().get(),
        });
    }
    Ok(())
}

/// Conformal factor `λ_x = 2 / (1 - c·||x||^2)`; always `>= 2` on the interior.
pub fn conformal_factor(x: &HyperbolicPoint) -> Result<f64> {
    x.check_interior()?;
    let c = x.curvature().get();
    Ok(2.0 / (1.0 - c * dot(x.coords(), x.coords())))
}

/// Geodesic distance
/// `d(u,v) = (1/sqrt(c)) · arcosh(1 + 2c||u-v||^2 / ((1-c||u||^2)(1-c||v||^2)))`.
pub fn geodesic_distance(u: &HyperbolicPoint, v: &HyperbolicPoint) -> Result<f64> {
    check_same_space(u, v)?;
    u.check_interior()?;
    v.check_interior()?;
    Ok(geodesic_distance_raw(
        u.coords(),
        v.coords(),
        u.curvature().get(),
    ))
}

/// Distance on raw coordinates; callers guarantee both points are interior
/// points of the same ball.
pub(crate) fn geodesic_distance_raw(u: &[f64], v: &[f64], c: f64) -> f64 {
    let diff_sq: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
    let pu = 1.0 - c * dot(u, u);
    let pv = 1.0 - c * dot(v, v);
    let z = 1.0 + 2.0 * c * diff_sq / (pu * pv);
    acosh_stable(z) / c.sqrt()
}

/// Radial distance from the origin,
/// `(1/sqrt(c)) · arcosh(1 + 2c||x||^2 / (1 - c||x||^2))`.
pub fn radial_distance(x: &HyperbolicPoint) -> Result<f64> {
    x.check_interior()?;
    let c = x.curvature().get();
    let n_sq = dot(x.coords(), x.coords());
    let z = 1.0 + 2.0 * c * n_sq / (1.0 - c * n_sq);
    Ok(acosh_stable(z) / c.sqrt())
}

/// Exponential map at the origin: `tanh(sqrt(c)||v||) · v / (sqrt(c)||v||)`.
/// Total on finite input; the zero vector maps to the origin (the limit).
pub fn exp_map_origin(v: &TangentVector, curvature: Curvature) -> HyperbolicPoint {
    let coords = exp_map_origin_raw(&v.coords, curvature.get());
    HyperbolicPoint {
        coords,
        curvature,
    }
}

pub(crate) fn exp_map_origin_raw(v: &[f64], c: f64) -> Vec<f64> {
    let n = norm(v);
    if n == 0.0 {
        return vec![0.0; v.len()];
    }
    let a = c.sqrt() * n;
    let scale = a.tanh() / a;
    v.iter().map(|x| x * scale).collect()
}

/// Logarithmic map at the origin: `(1/sqrt(c)) · artanh(sqrt(c)||u||) · u/||u||`.
/// The origin maps to the zero vector (the limit).
pub fn log_map_origin(u: &HyperbolicPoint) -> Result<TangentVector> {
    u.check_interior()?;
    let n = u.norm();
    if n == 0.0 {
        return Ok(TangentVector::new(vec![0.0; u.dim()]));
    }
    let sc = u.curvature().sqrt();
    let scale = (sc * n).atanh() / (sc * n);
    Ok(TangentVector::new(
        u.coords().iter().map(|x| x * scale).collect(),
    ))
}

/// Boundary-safe projection: rescales any finite vector so that
/// `sqrt(c)·||x|| <= 1 - eps`; interior vectors pass through unchanged.
pub fn clamp_into_ball(coords: Vec<f64>, curvature: Curvature, eps: f64) -> HyperbolicPoint {
    let coords = clamp_into_ball_raw(coords, curvature.get(), eps);
    HyperbolicPoint {
        coords,
        curvature,
    }
}

pub(crate) fn clamp_into_ball_raw(mut coords: Vec<f64>, c: f64, eps: f64) -> Vec<f64> {
    let n = norm(&coords);
    let max_norm = (1.0 - eps) / c.sqrt();
    if n > max_norm {
        let scale = max_norm / n;
        for x in &mut coords {
            *x *= scale;
        }
    }
    coords
}
