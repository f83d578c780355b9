//! Radial profiles and the divergence-free rotation fields built on them.
//!
//! All three families share the shape `u(x) = A · m · g(|x − c| / L) · (x − c)^⊥`
//! with `A = ε^{−α}`:
//!
//! | family            | profile `g`                                  | `L`  |
//! |-------------------|----------------------------------------------|------|
//! | stretch `u^s`     | `3τ′/4` on `s ≤ 1/2`, `τ′(1 − s²)` on `(1/2, 1)` | `ε`  |
//! | ball rotation     | 1 on `s ≤ 1 − ε^β`, cubic ramp to 0 at `s = 1` | `rε` |
//! | annulus rotation  | 1 on `1/2 + ε^β ≤ s ≤ 1 − ε^β`, ramps to 0 at `1/2` and `1` | `ε` |
//!
//! Gradients are analytic: for `u = w(r) (x − c)^⊥`,
//! `|∇u|² = (w + r w′)² + w²` and `|u|² = w² r²`.

use alloc::vec::Vec;
use core::f64::consts::TAU;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::params::Params;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    StretchF,
    BallG,
    AnnulusG,
}

/// Cubic smoothstep clamped to `[0, 1]`.
#[inline]
fn smoothstep(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        t * t * (3.0 - 2.0 * t)
    }
}

#[inline]
fn smoothstep_slope(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        6.0 * t * (1.0 - t)
    }
}

/// `smoothstep(t + d) − smoothstep(t)` without cancellation when both lie on the ramp.
#[inline]
fn smoothstep_increment(t: f64, d: f64) -> f64 {
    let t2 = t + d;
    if t > 0.0 && t < 1.0 && t2 > 0.0 && t2 < 1.0 {
        d * (6.0 * t + 3.0 * d - 6.0 * t * t - 6.0 * t * d - 2.0 * d * d)
    } else {
        smoothstep(t2) - smoothstep(t)
    }
}

/// Scalar function of the normalized radius `s = |x − c| / L`, supported in `s < 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub kind: ProfileKind,
    /// Value on the plateau: `3τ′/4` for the stretch profile, 1 otherwise.
    pub plateau_value: f64,
    /// Normalized support radius; always 1, the length lives in the field's scale.
    pub support_radius: f64,
    /// Normalized ramp width: `ε^β` for the ball and annulus profiles,
    /// `1/2` for the linear-in-`s²` segment of the stretch profile.
    pub ramp_width: f64,
    /// Inner edge: `1/2` for the annulus support and for the stretch plateau, 0 for balls.
    pub inner_cut: f64,
}

impl RadialProfile {
    pub fn stretch(tau_prime: f64) -> Self {
        RadialProfile {
            kind: ProfileKind::StretchF,
            plateau_value: 0.75 * tau_prime,
            support_radius: 1.0,
            ramp_width: 0.5,
            inner_cut: 0.5,
        }
    }

    pub fn ball(ramp: f64) -> Self {
        RadialProfile {
            kind: ProfileKind::BallG,
            plateau_value: 1.0,
            support_radius: 1.0,
            ramp_width: ramp,
            inner_cut: 0.0,
        }
    }

    pub fn annulus(ramp: f64) -> Self {
        RadialProfile {
            kind: ProfileKind::AnnulusG,
            plateau_value: 1.0,
            support_radius: 1.0,
            ramp_width: ramp,
            inner_cut: 0.5,
        }
    }

    #[inline]
    fn tau_prime(&self) -> f64 {
        self.plateau_value / 0.75
    }

    /// Profile value. Kinks take the value from the left (smaller `s`).
    #[inline]
    pub fn value(&self, s: f64) -> f64 {
        match self.kind {
            ProfileKind::StretchF => {
                if s <= 0.5 {
                    self.plateau_value
                } else if s < 1.0 {
                    self.tau_prime() * (1.0 - s * s)
                } else {
                    0.0
                }
            }
            ProfileKind::BallG => {
                if s < 1.0 {
                    smoothstep((1.0 - s) / self.ramp_width)
                } else {
                    0.0
                }
            }
            ProfileKind::AnnulusG => {
                if s > 0.5 && s < 1.0 {
                    let w = self.ramp_width;
                    smoothstep((s - 0.5) / w) * smoothstep((1.0 - s) / w)
                } else {
                    0.0
                }
            }
        }
    }

    /// Derivative in `s`, left limit at kinks.
    #[inline]
    pub fn slope(&self, s: f64) -> f64 {
        match self.kind {
            ProfileKind::StretchF => {
                if s > 0.5 && s <= 1.0 {
                    -2.0 * self.tau_prime() * s
                } else {
                    0.0
                }
            }
            ProfileKind::BallG => {
                if s <= 1.0 {
                    -smoothstep_slope((1.0 - s) / self.ramp_width) / self.ramp_width
                } else {
                    0.0
                }
            }
            ProfileKind::AnnulusG => {
                if s > 0.5 && s <= 1.0 {
                    let w = self.ramp_width;
                    let (a, b) = ((s - 0.5) / w, (1.0 - s) / w);
                    (smoothstep_slope(a) * smoothstep(b) - smoothstep(a) * smoothstep_slope(b)) / w
                } else {
                    0.0
                }
            }
        }
    }

    /// `value(s + ds) − value(s)`, accurate when `ds` is tiny and both
    /// arguments fall on the same polynomial piece.
    pub fn increment(&self, s: f64, ds: f64) -> f64 {
        let s2 = s + ds;
        match self.kind {
            ProfileKind::StretchF => {
                if s > 0.5 && s < 1.0 && s2 > 0.5 && s2 < 1.0 {
                    -self.tau_prime() * ds * (s + s2)
                } else {
                    self.value(s2) - self.value(s)
                }
            }
            ProfileKind::BallG => {
                if s < 1.0 && s2 < 1.0 {
                    let w = self.ramp_width;
                    smoothstep_increment((1.0 - s) / w, -ds / w)
                } else {
                    self.value(s2) - self.value(s)
                }
            }
            ProfileKind::AnnulusG => {
                if s > 0.5 && s < 1.0 && s2 > 0.5 && s2 < 1.0 {
                    let w = self.ramp_width;
                    let (a, b) = ((s - 0.5) / w, (1.0 - s) / w);
                    let da = smoothstep_increment(a, ds / w);
                    let db = smoothstep_increment(b, -ds / w);
                    da * smoothstep(b - ds / w) + smoothstep(a) * db
                } else {
                    self.value(s2) - self.value(s)
                }
            }
        }
    }

    /// Points of `[0, 1]` where the profile or one of its first two derivatives jumps,
    /// in increasing order, including both ends of the support.
    pub fn knots(&self) -> Vec<f64> {
        let mut k = Vec::with_capacity(6);
        match self.kind {
            ProfileKind::StretchF => k.extend_from_slice(&[0.0, 0.5, 1.0]),
            ProfileKind::BallG => {
                k.push(0.0);
                if self.ramp_width < 1.0 {
                    k.push(1.0 - self.ramp_width);
                }
                k.push(1.0);
            }
            ProfileKind::AnnulusG => {
                let w = self.ramp_width;
                k.push(0.0);
                k.push(0.5);
                for v in [0.5 + w, 1.0 - w] {
                    if v > 0.5 && v < 1.0 {
                        k.push(v);
                    }
                }
                k.push(1.0);
            }
        }
        k.sort_by(|a, b| a.partial_cmp(b).unwrap());
        k.dedup();
        k
    }

    /// True when `s` lies on the rigid-rotation part of the profile
    /// (plateau, or `s ≤ 1/2` for the stretch profile).
    pub fn is_rigid(&self, s: f64) -> bool {
        let w = self.ramp_width;
        match self.kind {
            ProfileKind::StretchF => s <= 0.5 || s >= 1.0,
            ProfileKind::BallG => s <= 1.0 - w || s >= 1.0,
            ProfileKind::AnnulusG => s <= 0.5 || s >= 1.0 || (s >= 0.5 + w && s <= 1.0 - w),
        }
    }
}

/// `amplitude · multiplier · profile(|x − center| / scale) · (x − center)^⊥`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationField {
    pub center: Vec2,
    pub amplitude: f64,
    pub profile: RadialProfile,
    pub scale: f64,
    pub multiplier: f64,
}

impl RotationField {
    /// `σ u^s_{a,ε}`.
    pub fn stretch(params: &Params, center: Vec2, sigma: f64) -> Self {
        RotationField {
            center,
            amplitude: params.amplitude(),
            profile: RadialProfile::stretch(params.tau_prime),
            scale: params.eps,
            multiplier: sigma,
        }
    }

    /// `λ R_{z,ε,r}`.
    pub fn ball(params: &Params, center: Vec2, radius_fraction: f64, lambda: f64) -> Self {
        RotationField {
            center,
            amplitude: params.amplitude(),
            profile: RadialProfile::ball(params.ramp()),
            scale: radius_fraction * params.eps,
            multiplier: lambda,
        }
    }

    /// `θ R^{ann}_{a,ε,1}`.
    pub fn annulus(params: &Params, center: Vec2, theta: f64) -> Self {
        RotationField {
            center,
            amplitude: params.amplitude(),
            profile: RadialProfile::annulus(params.ramp()),
            scale: params.eps,
            multiplier: theta,
        }
    }

    pub fn zero() -> Self {
        RotationField {
            center: Vec2::ZERO,
            amplitude: 0.0,
            profile: RadialProfile::ball(0.5),
            scale: 1.0,
            multiplier: 0.0,
        }
    }

    #[inline]
    pub fn support_radius(&self) -> f64 {
        self.profile.support_radius * self.scale
    }

    /// Angular speed at distance `r` from the center.
    #[inline]
    pub fn angular_speed(&self, r: f64) -> f64 {
        self.amplitude * self.multiplier * self.profile.value(r / self.scale)
    }

    /// `d/dr` of the angular speed.
    #[inline]
    pub fn angular_speed_slope(&self, r: f64) -> f64 {
        self.amplitude * self.multiplier * self.profile.slope(r / self.scale) / self.scale
    }

    #[inline]
    pub fn evaluate(&self, x: Vec2) -> Vec2 {
        let d = x - self.center;
        d.perp() * self.angular_speed(d.norm())
    }
}

/// Velocity of a possibly time-dependent field.
pub trait VelocityField {
    fn velocity(&self, t: f64, x: Vec2) -> Vec2;

    /// Times in `(t0, t1)` where the field may jump; constant in time between them.
    fn breakpoints(&self, _t0: f64, _t1: f64) -> Vec<f64> {
        Vec::new()
    }
}

impl VelocityField for RotationField {
    fn velocity(&self, _t: f64, x: Vec2) -> Vec2 {
        self.evaluate(x)
    }
}

pub fn evaluate_field(field: &RotationField, x: Vec2) -> Vec2 {
    field.evaluate(x)
}

/// Central-difference divergence at `x` with step `h`.
pub fn divergence_residual<F: VelocityField + ?Sized>(field: &F, t: f64, x: Vec2, h: f64) -> f64 {
    let ex = Vec2::new(h, 0.0);
    let ey = Vec2::new(0.0, h);
    let dux = field.velocity(t, x + ex).x - field.velocity(t, x - ex).x;
    let duy = field.velocity(t, x + ey).y - field.velocity(t, x - ey).y;
    (dux + duy) / (2.0 * h)
}

/// `‖·‖²_{L²_t H¹_x}` and `‖·‖_{L^∞}` of a field over a time window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub h1_squared: f64,
    pub linf: f64,
    /// Radial cells across the unit normalized support.
    pub quadrature_cells: usize,
}

impl NormReport {
    pub const ZERO: NormReport = NormReport { h1_squared: 0.0, linf: 0.0, quadrature_cells: 0 };

    /// Accumulate a field active for `duration`, disjoint in space or time from the others.
    pub fn accumulate(&mut self, duration: f64, spatial: &NormReport) {
        self.h1_squared += duration * spatial.h1_squared;
        self.linf = self.linf.max(spatial.linf);
        self.quadrature_cells = self.quadrature_cells.max(spatial.quadrature_cells);
    }
}

const GAUSS_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GAUSS_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189,
    0.478_628_670_499_366,
    0.568_888_888_888_889,
    0.478_628_670_499_366,
    0.236_926_885_056_189,
];

/// Spatial `∫ |u|² + |∇u|²` and `sup |u|` on a polar grid.
///
/// `resolution` uniform radial cells cover the normalized support; the
/// profile knots are inserted as extra cell edges so every cell sees a
/// polynomial integrand. The angular integral is exact because the
/// integrand is radial.
pub fn spatial_norms(field: &RotationField, resolution: usize) -> Result<NormReport> {
    if field.amplitude == 0.0 || field.multiplier == 0.0 {
        return Ok(NormReport { quadrature_cells: resolution, ..NormReport::ZERO });
    }
    let profile = &field.profile;
    let cells_per_ramp = profile.ramp_width * resolution as f64;
    if cells_per_ramp < 8.0 {
        return Err(Error::ResolutionTooCoarse { cells_per_ramp });
    }
    let mut edges: Vec<f64> = (0..=resolution).map(|i| i as f64 / resolution as f64).collect();
    edges.extend(profile.knots());
    edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
    edges.dedup_by(|a, b| (*a - *b).abs() < 1e-14);

    let len = field.scale;
    let mut h1 = 0.0;
    let mut linf: f64 = 0.0;
    let mut visit = |s: f64| -> f64 {
        let r = s * len;
        let w = field.angular_speed(r);
        let dw = field.angular_speed_slope(r);
        linf = linf.max((w * r).abs());
        let grad = (w + r * dw).powi(2) + w * w;
        r * (w * w * r * r + grad)
    };
    for pair in edges.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut cell = 0.0;
        for (node, weight) in GAUSS_NODES.iter().zip(GAUSS_WEIGHTS.iter()) {
            cell += weight * visit(mid + half * node);
        }
        h1 += cell * half * len;
        visit(b);
    }
    Ok(NormReport { h1_squared: TAU * h1, linf, quadrature_cells: resolution })
}

/// Norms of a time-independent field active on `[t0, t1]`.
pub fn compute_norms(field: &RotationField, t0: f64, t1: f64, resolution: usize) -> Result<NormReport> {
    if !(t1 > t0) {
        return Err(Error::DomainError(alloc::format!("need t1 > t0, got [{t0}, {t1}]")));
    }
    let spatial = spatial_norms(field, resolution)?;
    let mut out = NormReport { quadrature_cells: resolution, ..NormReport::ZERO };
    out.accumulate(t1 - t0, &spatial);
    Ok(out)
}

/// Serializable description of one elementary field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub kind: ProfileKind,
    pub center: Vec2,
    pub eps: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Stretch amplitude; only read for `stretch_f`.
    #[serde(default)]
    pub tau_prime: f64,
    /// Ball radius as a fraction of `ε`; only read for `ball_g`.
    #[serde(default = "one")]
    pub radius_fraction: f64,
    pub multiplier: f64,
}

fn one() -> f64 {
    1.0
}

impl FieldSpec {
    pub fn to_field(&self) -> RotationField {
        let amplitude = self.eps.powf(-self.alpha);
        let ramp = self.eps.powf(self.beta);
        let (profile, scale) = match self.kind {
            ProfileKind::StretchF => (RadialProfile::stretch(self.tau_prime), self.eps),
            ProfileKind::BallG => (RadialProfile::ball(ramp), self.radius_fraction * self.eps),
            ProfileKind::AnnulusG => (RadialProfile::annulus(ramp), self.eps),
        };
        RotationField { center: self.center, amplitude, profile, scale, multiplier: self.multiplier }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit_stretch(tau_prime: f64) -> RotationField {
        FieldSpec {
            kind: ProfileKind::StretchF,
            center: Vec2::ZERO,
            eps: 1.0,
            alpha: 0.0,
            beta: 0.5,
            tau_prime,
            radius_fraction: 1.0,
            multiplier: 1.0,
        }
        .to_field()
    }

    fn params() -> Params {
        Params::builder().time_horizon(40.0).build().unwrap()
    }

    #[test]
    fn stretch_plateau_value_at_half_radius() {
        let tp = 0.2;
        let u = unit_stretch(tp).evaluate(Vec2::new(0.5, 0.0));
        assert_eq!(u.x, 0.0);
        assert_relative_eq!(u.y, 3.0 * tp / 8.0, epsilon = 1e-16);
    }

    #[test]
    fn center_is_fixed_and_support_is_compact() {
        let p = params();
        let a = Vec2::new(0.25, -0.125);
        let fields = [
            RotationField::stretch(&p, a, 1.0),
            RotationField::ball(&p, a, 0.07, 2.0),
            RotationField::annulus(&p, a, 5.0),
        ];
        for f in fields {
            assert_eq!(f.evaluate(a), Vec2::ZERO);
            let far = a + Vec2::new(2.0 * f.support_radius(), 0.0);
            assert_eq!(f.evaluate(far), Vec2::ZERO);
            let edge = a + Vec2::new(0.0, f.support_radius() * (1.0 + 1e-12));
            assert_eq!(f.evaluate(edge), Vec2::ZERO);
        }
    }

    #[test]
    fn profiles_hit_their_plateaus() {
        let w = 0.1;
        let ball = RadialProfile::ball(w);
        assert_eq!(ball.value(0.0), 1.0);
        assert_eq!(ball.value(0.9), 1.0);
        assert!(ball.value(0.95) < 1.0 && ball.value(0.95) > 0.0);
        let ann = RadialProfile::annulus(w);
        assert_eq!(ann.value(0.4), 0.0);
        assert_eq!(ann.value(0.75), 1.0);
        assert!(ann.value(0.55) > 0.0 && ann.value(0.55) < 1.0);
        let st = RadialProfile::stretch(0.2);
        assert_relative_eq!(st.value(0.25), 0.15, epsilon = 1e-16);
        assert_relative_eq!(st.value(0.75), 0.2 * (1.0 - 0.5625), epsilon = 1e-16);
    }

    #[test]
    fn overlapping_annulus_ramps_stay_below_one() {
        let ann = RadialProfile::annulus(0.354);
        let peak = (0..1000).map(|i| ann.value(0.5 + 0.5 * i as f64 / 1000.0)).fold(0.0, f64::max);
        assert!(peak < 1.0 && peak > 0.5);
    }

    #[test]
    fn slope_matches_finite_differences() {
        for prof in [RadialProfile::stretch(0.2), RadialProfile::ball(0.2), RadialProfile::annulus(0.15)] {
            for i in 1..200 {
                let s = i as f64 / 200.0 + 1.3e-3;
                if prof.knots().iter().any(|k| (k - s).abs() < 1e-3) {
                    continue;
                }
                let h = 1e-6;
                let fd = (prof.value(s + h) - prof.value(s - h)) / (2.0 * h);
                assert!((fd - prof.slope(s)).abs() < 1e-5, "{:?} s={s}", prof.kind);
            }
        }
    }

    #[test]
    fn zero_field_has_zero_norms_and_divergence() {
        let z = RotationField::zero();
        let r = compute_norms(&z, 0.0, 1.0, 64).unwrap();
        assert_eq!(r.h1_squared, 0.0);
        assert_eq!(r.linf, 0.0);
        assert_eq!(divergence_residual(&z, 0.0, Vec2::new(0.1, 0.2), 1e-4), 0.0);
    }

    #[test]
    fn stretch_divergence_is_rounding_only() {
        let p = params();
        let f = RotationField::stretch(&p, Vec2::ZERO, 1.0);
        let x = Vec2::new(0.6 * p.eps, 0.3 * p.eps);
        let res = divergence_residual(&f, 0.0, x, 1e-4 * p.eps);
        let sup = compute_norms(&f, 0.0, 1.0, 64).unwrap().linf;
        assert!(res.abs() < 1e-6 * sup / p.eps, "{res}");
    }

    #[test]
    fn ramp_divergence_converges_quadratically() {
        let p = params();
        let f = RotationField::ball(&p, Vec2::ZERO, 0.08, 1.0);
        let x = Vec2::from_angle(0.4) * (f.scale * (1.0 - 0.5 * p.ramp()));
        let h0 = 1e-3 * f.scale;
        let e1 = divergence_residual(&f, 0.0, x, h0).abs();
        let e2 = divergence_residual(&f, 0.0, x, h0 / 2.0).abs();
        let order = (e1 / e2).log2();
        assert!((order - 2.0).abs() < 0.2, "order {order}");
    }

    #[test]
    fn resolution_must_cover_ramps() {
        let p = params();
        let f = RotationField::ball(&p, Vec2::ZERO, 0.05, 1.0);
        let err = compute_norms(&f, 0.0, 1.0, 16).unwrap_err();
        assert!(matches!(err, Error::ResolutionTooCoarse { .. }));
    }

    #[test]
    fn stretch_norm_matches_closed_form() {
        // A = 1, ε = 1, τ′ = t: the gradient integrand is polynomial; integrate by hand.
        // s ≤ 1/2: w = 3t/4, w′ = 0 → 2π ∫ r (2w² + w² r²) dr
        // 1/2 < s < 1: w = t(1 − r²), r w′ = −2 t r²
        let t = 0.2f64;
        let w0 = 0.75 * t;
        let inner = TAU * (2.0 * w0 * w0 * 0.125 + w0 * w0 / 64.0);
        let outer_integrand = |r: f64| {
            let w = t * (1.0 - r * r);
            let g = (w - 2.0 * t * r * r).powi(2) + w * w;
            r * (w * w * r * r + g)
        };
        let n = 200_000;
        let h = 0.5 / n as f64;
        let outer: f64 = (0..n).map(|i| outer_integrand(0.5 + (i as f64 + 0.5) * h) * h).sum();
        let expect = inner + TAU * outer;
        let got = compute_norms(&unit_stretch(t), 0.0, 1.0, 32).unwrap().h1_squared;
        assert_relative_eq!(got, expect, max_relative = 1e-9);
    }

    #[test]
    fn refinement_does_not_move_h1() {
        let p = params();
        let f = RotationField::annulus(&p, Vec2::ZERO, 1.0);
        let a = compute_norms(&f, 0.0, 1.0, 64).unwrap().h1_squared;
        let b = compute_norms(&f, 0.0, 1.0, 128).unwrap().h1_squared;
        assert_relative_eq!(a, b, max_relative = 1e-10);
    }

    #[test]
    fn stretch_sup_norm_bounded() {
        let p = params();
        let f = RotationField::stretch(&p, Vec2::ZERO, -1.0);
        let r = compute_norms(&f, 0.0, 1.0, 256).unwrap();
        assert!(r.linf <= p.eps.powf(1.0 - p.alpha) * p.tau_prime);
        assert!(r.linf <= p.eps.powf(1.0 - p.alpha));
    }

    #[test]
    fn field_spec_round_trips_through_json_shape() {
        let spec = FieldSpec {
            kind: ProfileKind::BallG,
            center: Vec2::new(1.0, 2.0),
            eps: 0.25,
            alpha: 0.25,
            beta: 0.5,
            tau_prime: 0.0,
            radius_fraction: 0.1,
            multiplier: 3.0,
        };
        let f = spec.to_field();
        assert_relative_eq!(f.scale, 0.025);
        assert_relative_eq!(f.amplitude, 0.25f64.powf(-0.25));
    }

    proptest! {
        #[test]
        fn fields_are_azimuthal(x in -0.1f64..0.1, y in -0.1f64..0.1, m in -7.0f64..7.0) {
            let p = params();
            let c = Vec2::new(0.01, -0.02);
            for f in [
                RotationField::stretch(&p, c, m),
                RotationField::ball(&p, c, 0.9, m),
                RotationField::annulus(&p, c, m),
            ] {
                let d = Vec2::new(x, y) - c;
                let u = f.evaluate(Vec2::new(x, y));
                prop_assert!(u.dot(d).abs() <= 4.0 * f64::EPSILON * u.norm() * d.norm());
            }
        }

        #[test]
        fn increment_agrees_with_difference(s in 0.0f64..1.1, ds in -1e-3f64..1e-3) {
            for prof in [RadialProfile::stretch(0.2), RadialProfile::ball(0.3), RadialProfile::annulus(0.2)] {
                let direct = prof.value(s + ds) - prof.value(s);
                prop_assert!((prof.increment(s, ds) - direct).abs() < 1e-12);
            }
        }
    }
}
