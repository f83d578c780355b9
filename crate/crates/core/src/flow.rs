//! Exact flows of rotation fields, pair tracking, and the one-step moment bound.
//!
//! Every elementary field rotates each circle about its center by an angle
//! that depends only on the radius, so its flow over a duration `D` is
//! `x ↦ c + R(D · ω(|x − c|)) (x − c)` with `ω` the angular speed.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::TAU;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{RotationField, VelocityField};
use crate::geometry::Vec2;

/// Rotation angle a field produces at distance `r` from its center after `duration`.
#[inline]
pub fn step_angle(field: &RotationField, duration: f64, r: f64) -> f64 {
    duration * field.angular_speed(r)
}

/// Flow of `field` over `duration`, applied to `x`.
#[inline]
pub fn exact_step(field: &RotationField, duration: f64, x: Vec2) -> Vec2 {
    let d = x - field.center;
    let theta = step_angle(field, duration, d.norm());
    if theta == 0.0 {
        return x;
    }
    field.center + d.rotate(theta)
}

/// One field acting for a duration; a summand of a [`RadialRotationMap`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleTerm {
    pub field: RotationField,
    pub duration: f64,
}

/// Element of the class of maps rotating each circle about `center` by `θ(r)`,
/// with `θ(r) = Σ duration · angular_speed(r)` over the terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialRotationMap {
    pub center: Vec2,
    pub terms: Vec<AngleTerm>,
}

impl RadialRotationMap {
    pub fn identity(center: Vec2) -> Self {
        RadialRotationMap { center, terms: Vec::new() }
    }

    /// Flow of `field` over `duration`.
    pub fn from_field(field: RotationField, duration: f64) -> Self {
        RadialRotationMap { center: field.center, terms: vec![AngleTerm { field, duration }] }
    }

    pub fn angle(&self, r: f64) -> f64 {
        self.terms.iter().map(|t| step_angle(&t.field, t.duration, r)).sum()
    }

    pub fn apply(&self, x: Vec2) -> Vec2 {
        let d = x - self.center;
        let theta = self.angle(d.norm());
        if theta == 0.0 {
            return x;
        }
        self.center + d.rotate(theta)
    }

    /// The same map with every multiplier negated.
    pub fn inverse(&self) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let mut field = t.field;
                field.multiplier = -field.multiplier;
                AngleTerm { field, duration: t.duration }
            })
            .collect();
        RadialRotationMap { center: self.center, terms }
    }
}

/// A finite composition of radial rotation maps, stored in application order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum FlowMap {
    Radial(RadialRotationMap),
    Sequence(Vec<RadialRotationMap>),
}

impl FlowMap {
    pub fn apply(&self, x: Vec2) -> Vec2 {
        match self {
            FlowMap::Radial(m) => m.apply(x),
            FlowMap::Sequence(ms) => ms.iter().fold(x, |p, m| m.apply(p)),
        }
    }

    pub fn inverse(&self) -> FlowMap {
        match self {
            FlowMap::Radial(m) => FlowMap::Radial(m.inverse()),
            FlowMap::Sequence(ms) => FlowMap::Sequence(ms.iter().rev().map(|m| m.inverse()).collect()),
        }
    }

    fn into_parts(self) -> Vec<RadialRotationMap> {
        match self {
            FlowMap::Radial(m) => vec![m],
            FlowMap::Sequence(ms) => ms,
        }
    }
}

impl From<RadialRotationMap> for FlowMap {
    fn from(m: RadialRotationMap) -> Self {
        FlowMap::Radial(m)
    }
}

/// `f ∘ g`: apply `g` first, then `f`. Maps sharing a center merge into one
/// radial map whose angle is the sum of the two.
pub fn compose_maps(f: FlowMap, g: FlowMap) -> FlowMap {
    if let (FlowMap::Radial(fr), FlowMap::Radial(gr)) = (&f, &g) {
        if fr.center == gr.center {
            let mut terms = gr.terms.clone();
            terms.extend_from_slice(&fr.terms);
            return FlowMap::Radial(RadialRotationMap { center: fr.center, terms });
        }
    }
    let mut parts = g.into_parts();
    parts.extend(f.into_parts());
    FlowMap::Sequence(parts)
}

/// Classical RK4 for `∂_t X = u(t, X)` from `t0` to `t1`.
///
/// The fields handled here are constant in time between the breakpoints the
/// field reports, so the interval is split there and each piece is integrated
/// with the field frozen at the piece's midpoint time. Steps are at most `dt`.
pub fn ode_oracle<F: VelocityField + ?Sized>(field: &F, t0: f64, t1: f64, x: Vec2, dt: f64) -> Vec2 {
    let mut cuts = field.breakpoints(t0, t1);
    cuts.retain(|&t| t > t0 && t < t1);
    cuts.insert(0, t0);
    cuts.push(t1);
    let mut p = x;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let steps = ((b - a) / dt - 1e-9).ceil().max(1.0) as usize;
        let h = (b - a) / steps as f64;
        let tm = 0.5 * (a + b);
        let u = |q: Vec2| field.velocity(tm, q);
        for _ in 0..steps {
            let k1 = u(p);
            let k2 = u(p + k1 * (0.5 * h));
            let k3 = u(p + k2 * (0.5 * h));
            let k4 = u(p + k3 * h);
            p += (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
        }
    }
    p
}

/// Separation of a pair, either as a vector or, once it is too small to
/// track reliably, as a unit direction plus `ln |δ|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Offset {
    Finite(Vec2),
    Tangent { dir: Vec2, log_norm: f64 },
}

/// A point `base = x` and the offset `δ = y − x` of its partner.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairTangent {
    pub base: Vec2,
    pub offset: Offset,
    /// Below this `|δ|` the pair switches to tangent mode.
    pub tangent_below: f64,
}

impl PairTangent {
    /// Pair `(x, y)`, in tangent mode already if `|y − x| < tangent_below`.
    pub fn new(x: Vec2, delta: Vec2, tangent_below: f64) -> Self {
        let mut p = PairTangent { base: x, offset: Offset::Finite(delta), tangent_below };
        p.settle();
        p
    }

    /// Pair given by a direction and `ln |δ|`, whatever its size.
    pub fn from_log(x: Vec2, dir: Vec2, log_norm: f64, tangent_below: f64) -> Self {
        let mut p = PairTangent {
            base: x,
            offset: Offset::Tangent { dir: dir.normalized(), log_norm },
            tangent_below,
        };
        p.settle();
        p
    }

    pub fn log_norm(&self) -> f64 {
        match self.offset {
            Offset::Finite(d) => d.norm().ln(),
            Offset::Tangent { log_norm, .. } => log_norm,
        }
    }

    pub fn direction(&self) -> Vec2 {
        match self.offset {
            Offset::Finite(d) => d.normalized(),
            Offset::Tangent { dir, .. } => dir,
        }
    }

    /// `|δ|^γ`, computed in log space.
    pub fn moment(&self, gamma: f64) -> f64 {
        (gamma * self.log_norm()).exp()
    }

    /// Partner position. In tangent mode the partner is taken to coincide with `base`.
    pub fn partner(&self) -> Vec2 {
        match self.offset {
            Offset::Finite(d) => self.base + d,
            Offset::Tangent { .. } => self.base,
        }
    }

    pub fn is_tangent(&self) -> bool {
        matches!(self.offset, Offset::Tangent { .. })
    }

    fn settle(&mut self) {
        match self.offset {
            Offset::Finite(d) => {
                let n = d.norm();
                if n > 0.0 && n < self.tangent_below {
                    self.offset = Offset::Tangent { dir: d / n, log_norm: n.ln() };
                }
            }
            Offset::Tangent { dir, log_norm } => {
                // hysteresis: leave tangent mode only well above the threshold
                if log_norm > (1e3 * self.tangent_below).ln() {
                    self.offset = Offset::Finite(dir * log_norm.exp());
                }
            }
        }
    }

    /// Advance both points by the flow of the fields acting on them.
    ///
    /// `fx` and `fy` are the fields whose support contains `x` and `y` (or `None`),
    /// both active for `duration`. When both points feel the same field the
    /// offset is updated through the angle increment, so a shared rigid
    /// rotation maps `δ` to `R(θ)δ` and preserves `|δ|` up to rounding.
    pub fn step(&mut self, fx: Option<&RotationField>, fy: Option<&RotationField>, duration: f64) {
        match self.offset {
            Offset::Finite(delta) => {
                let x = self.base;
                let y = x + delta;
                let new_delta = match (fx, fy) {
                    (None, None) => delta,
                    (Some(f), Some(g)) if f == g => shared_field_offset(f, duration, x, delta),
                    _ => {
                        let dx = fx.map_or(Vec2::ZERO, |f| displacement(f, duration, x));
                        let dy = fy.map_or(Vec2::ZERO, |f| displacement(f, duration, y));
                        delta + (dy - dx)
                    }
                };
                self.base = fx.map_or(x, |f| exact_step(f, duration, x));
                self.offset = Offset::Finite(new_delta);
            }
            Offset::Tangent { dir, log_norm } => {
                if let Some(f) = fx {
                    let d = self.base - f.center;
                    let r = d.norm();
                    let theta = step_angle(f, duration, r);
                    let slope = duration * f.angular_speed_slope(r);
                    let v = if slope == 0.0 || r == 0.0 {
                        dir
                    } else {
                        dir + d.perp() * (slope * dir.dot(d) / r)
                    };
                    let n = v.norm();
                    self.offset = Offset::Tangent {
                        dir: (v / n).rotate(theta),
                        log_norm: if slope == 0.0 { log_norm } else { log_norm + n.ln() },
                    };
                    self.base = if theta == 0.0 { self.base } else { f.center + d.rotate(theta) };
                }
            }
        }
        self.settle();
    }
}

/// `exact_step(x) − x`, without cancellation for small angles.
#[inline]
fn displacement(f: &RotationField, duration: f64, x: Vec2) -> Vec2 {
    let d = x - f.center;
    let theta = step_angle(f, duration, d.norm());
    rotation_minus_identity(theta, d)
}

/// `(R(θ) − I) v` computed as `−2 sin²(θ/2) v + sin θ v^⊥`.
#[inline]
fn rotation_minus_identity(theta: f64, v: Vec2) -> Vec2 {
    if theta == 0.0 {
        return Vec2::ZERO;
    }
    let s = (0.5 * theta).sin();
    v * (-2.0 * s * s) + v.perp() * theta.sin()
}

/// New offset when `x` and `x + δ` are moved by the same field.
fn shared_field_offset(f: &RotationField, duration: f64, x: Vec2, delta: Vec2) -> Vec2 {
    let dx = x - f.center;
    let rx = dx.norm();
    let dy = dx + delta;
    let ry = dy.norm();
    let theta_x = step_angle(f, duration, rx);
    // |y − c|² − |x − c|² = δ·(2(x − c) + δ), then divide by rx + ry
    let dr = if rx + ry > 0.0 { delta.dot(dx * 2.0 + delta) / (rx + ry) } else { 0.0 };
    let dtheta = duration * f.amplitude * f.multiplier * f.profile.increment(rx / f.scale, dr / f.scale);
    let inner = if dtheta == 0.0 { delta } else { delta + rotation_minus_identity(dtheta, dy) };
    if theta_x == 0.0 {
        inner
    } else {
        inner.rotate(theta_x)
    }
}

/// Expected factor `E_σ |δ'|^γ / |δ|^γ` of one stretch step at leading order:
/// `(1/2) Σ_σ (1 + 4τ′²ρ⁴ω₁² + 4στ′ρ²ω₁ω₂)^{γ/2}`.
pub fn pair_moment_factor(rho: f64, omega: Vec2, gamma: f64, tau_prime: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::DomainError(alloc::format!("rho must lie in [0, 1], got {rho}")));
    }
    let (w1, w2) = (omega.x, omega.y);
    let r2 = rho * rho;
    let gain = 4.0 * tau_prime * tau_prime * r2 * r2 * w1 * w1;
    let cross = 4.0 * tau_prime * r2 * w1 * w2;
    let term = |s: f64| (1.0 + gain + s * cross).powf(0.5 * gamma);
    Ok(0.5 * (term(1.0) + term(-1.0)))
}

/// Right-hand side of the one-step bound: `1 + 2γτ′²ρ⁴ω₁²(1 − 2lω₂²)`.
pub fn moment_bound(rho: f64, omega: Vec2, gamma: f64, tau_prime: f64, ell: f64) -> f64 {
    let r2 = rho * rho;
    1.0 + 2.0 * gamma * tau_prime * tau_prime * r2 * r2 * omega.x * omega.x * (1.0 - 2.0 * ell * omega.y * omega.y)
}

/// Average of `ω₁²(1 − 2lω₂²)` over the unit circle: `1/2 − l/4`.
pub fn circle_average_gain(ell: f64) -> f64 {
    0.5 - 0.25 * ell
}

/// Midpoint-rule version of [`circle_average_gain`] with `nodes` angles.
pub fn circle_average_quadrature(ell: f64, nodes: usize) -> f64 {
    let h = TAU / nodes as f64;
    let sum: f64 = (0..nodes)
        .map(|k| {
            let (s, c) = ((k as f64 + 0.5) * h).sin_cos();
            c * c * (1.0 - 2.0 * ell * s * s)
        })
        .sum();
    sum / nodes as f64
}

/// The `(ρ, ω)` grid used to calibrate `l`: `n_rho` radii evenly spaced on
/// `[1/2, 1]` and `n_angle` angles at cell midpoints.
pub fn moment_grid(n_rho: usize, n_angle: usize) -> impl Iterator<Item = (f64, Vec2)> {
    (0..n_rho).flat_map(move |i| {
        let rho = if n_rho == 1 { 1.0 } else { 0.5 + 0.5 * i as f64 / (n_rho - 1) as f64 };
        (0..n_angle).map(move |k| (rho, Vec2::from_angle(TAU * (k as f64 + 0.5) / n_angle as f64)))
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllCalibration {
    pub ell: f64,
    /// Grid points where no `l < 1` satisfies the bound.
    pub violations: usize,
    /// Largest shortfall `bound − factor` among the violations.
    pub worst_deficit: f64,
    pub grid_points: usize,
}

pub const CALIBRATION_GRID: (usize, usize) = (100, 100);

/// Smallest `l` making the one-step bound hold at every grid point where some
/// `l < 1` can; points where none can are counted as violations.
pub fn calibrate_ell(gamma: f64, tau_prime: f64) -> Result<EllCalibration> {
    calibrate_ell_on(gamma, tau_prime, CALIBRATION_GRID.0, CALIBRATION_GRID.1)
}

pub fn calibrate_ell_on(gamma: f64, tau_prime: f64, n_rho: usize, n_angle: usize) -> Result<EllCalibration> {
    if !(gamma > 0.0) || !(tau_prime >= 0.0) {
        return Err(Error::InvalidParams(alloc::format!(
            "calibration needs gamma > 0 and tau' >= 0, got {gamma}, {tau_prime}"
        )));
    }
    let mut needed: f64 = 0.0;
    let mut unfixable = Vec::new();
    for (rho, omega) in moment_grid(n_rho, n_angle) {
        let factor = pair_moment_factor(rho, omega, gamma, tau_prime)?;
        let base = 2.0 * gamma * tau_prime * tau_prime * rho.powi(4) * omega.x * omega.x;
        if base == 0.0 {
            continue;
        }
        // factor − 1 ≥ base (1 − 2 l ω₂²)  ⇔  l ≥ (1 − (factor − 1)/base) / (2ω₂²)
        let shortfall = 1.0 - (factor - 1.0) / base;
        if shortfall <= 0.0 {
            continue;
        }
        let w2sq = omega.y * omega.y;
        let l = if w2sq > 0.0 { shortfall / (2.0 * w2sq) } else { f64::INFINITY };
        if l < 1.0 {
            needed = needed.max(l);
        } else {
            unfixable.push((rho, omega, factor));
        }
    }
    let ell = needed.max(1e-3).min(1.0 - 1e-9);
    let mut violations = 0;
    let mut worst_deficit: f64 = 0.0;
    for (rho, omega, factor) in unfixable {
        let deficit = moment_bound(rho, omega, gamma, tau_prime, ell) - factor;
        if deficit > 0.0 {
            violations += 1;
            worst_deficit = worst_deficit.max(deficit);
        }
    }
    Ok(EllCalibration { ell, violations, worst_deficit, grid_points: n_rho * n_angle })
}

/// Per-block growth factor guaranteed by the worst radius `ρ = 1/2` and the
/// probability-1/2 event that both points sit in the stretching annulus:
/// `1 + 2γτ′²(1/2)⁴ · (1/2 − l/4) · 1/2`.
pub fn growth_lower_bound(gamma: f64, tau_prime: f64, ell: f64) -> f64 {
    1.0 + 2.0 * gamma * tau_prime * tau_prime * 0.0625 * circle_average_gain(ell) * 0.5
}

/// Almost-sure per-step Lipschitz bound of the stretch map, `(1 + τ′)²`.
pub fn stretch_lipschitz(tau_prime: f64) -> f64 {
    (1.0 + tau_prime) * (1.0 + tau_prime)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{ProfileKind, FieldSpec};
    use crate::params::Params;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params() -> Params {
        Params::builder().time_horizon(40.0).build().unwrap()
    }

    #[test]
    fn inner_disk_turns_by_tau() {
        let p = params();
        let a = Vec2::new(0.2, 0.1);
        let f = RotationField::stretch(&p, a, 1.0);
        let x = a + Vec2::new(0.3 * p.eps, 0.0);
        let y = exact_step(&f, p.step_duration(), x);
        assert_relative_eq!((y - a).angle(), p.tau, epsilon = 1e-14);
    }

    #[test]
    fn ball_interior_turns_by_lambda() {
        let p = params();
        let z = Vec2::new(-0.3, 0.4);
        let f = RotationField::ball(&p, z, 0.09, 2.5);
        let x = z + Vec2::from_angle(1.0) * (0.05 * p.eps);
        let y = exact_step(&f, p.step_duration(), x);
        let turn = ((y - z).angle() - (x - z).angle()).rem_euclid(TAU);
        assert_relative_eq!(turn, 2.5, epsilon = 1e-13);
    }

    #[test]
    fn outside_support_is_fixed() {
        let p = params();
        let f = RotationField::annulus(&p, Vec2::ZERO, 3.0);
        let x = Vec2::new(p.eps, 0.0);
        assert_eq!(exact_step(&f, 7.0, x), x);
        let x = Vec2::new(0.0, 1.5 * p.eps);
        assert_eq!(exact_step(&f, 7.0, x), x);
    }

    #[test]
    fn same_center_maps_merge() {
        let p = params();
        let f1 = RotationField::stretch(&p, Vec2::ZERO, 1.0);
        let f2 = RotationField::annulus(&p, Vec2::ZERO, -2.0);
        let g = RadialRotationMap::from_field(f1, 0.5);
        let f = RadialRotationMap::from_field(f2, 0.3);
        let c = compose_maps(f.clone().into(), g.clone().into());
        let FlowMap::Radial(m) = &c else { panic!("expected merged map") };
        let r = 0.7 * p.eps;
        assert_relative_eq!(m.angle(r), f.angle(r) + g.angle(r), epsilon = 1e-15);
    }

    #[test]
    fn different_centers_compose_sequentially() {
        let p = params();
        let f = RadialRotationMap::from_field(RotationField::ball(&p, Vec2::new(0.01, 0.0), 1.0, 1.0), 0.5);
        let g = RadialRotationMap::from_field(RotationField::stretch(&p, Vec2::ZERO, -1.0), 0.5);
        let c = compose_maps(f.clone().into(), g.clone().into());
        for i in 0..50 {
            let x = Vec2::from_angle(i as f64) * (0.02 * i as f64 / 50.0);
            assert_eq!(c.apply(x), f.apply(g.apply(x)));
        }
    }

    #[test]
    fn composition_with_inverse_is_identity() {
        let p = params();
        let m: FlowMap = compose_maps(
            RadialRotationMap::from_field(RotationField::ball(&p, Vec2::new(0.01, 0.0), 1.0, 4.0), 1.0).into(),
            RadialRotationMap::from_field(RotationField::stretch(&p, Vec2::ZERO, 1.0), 1.0).into(),
        );
        let inv = m.inverse();
        for i in 0..500 {
            let x = Vec2::from_angle(0.37 * i as f64) * (0.04 * (i as f64 / 500.0));
            let back = inv.apply(m.apply(x));
            assert!((back - x).norm() <= 1e-12);
        }
    }

    #[test]
    fn rk4_matches_exact_stretch() {
        let p = params().at_scale(0.25, None).unwrap();
        let f = RotationField::stretch(&p, Vec2::ZERO, 1.0);
        let d = p.step_duration();
        let x = Vec2::new(0.15, 0.1);
        let a = exact_step(&f, d, x);
        let b = ode_oracle(&f, 0.0, d, x, d / 1000.0);
        assert!((a - b).norm() < 1e-8);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let p = params().at_scale(0.25, None).unwrap();
        let f = RotationField::ball(&p, Vec2::ZERO, 1.0, 6.0);
        let d = p.step_duration();
        let x = Vec2::new(0.2, 0.05);
        let exact = exact_step(&f, d, x);
        let e1 = (ode_oracle(&f, 0.0, d, x, d / 20.0) - exact).norm();
        let e2 = (ode_oracle(&f, 0.0, d, x, d / 40.0) - exact).norm();
        let ratio = e1 / e2;
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn zero_field_oracle_is_identity() {
        let x = Vec2::new(0.3, -0.2);
        assert_eq!(ode_oracle(&RotationField::zero(), 0.0, 1.0, x, 0.01), x);
    }

    #[test]
    fn shared_rigid_rotation_keeps_separation() {
        let p = params();
        let z = Vec2::new(0.0, 0.6 * p.eps);
        let f = RotationField::ball(&p, z, 0.09, 4.0);
        let x = z + Vec2::new(0.01 * p.eps, 0.0);
        let delta = Vec2::new(3e-7, -2e-7);
        let mut pair = PairTangent::new(x, delta, 1e-14);
        pair.step(Some(&f), Some(&f), p.step_duration());
        let Offset::Finite(d) = pair.offset else { panic!() };
        assert!((d.norm() - delta.norm()).abs() <= 4.0 * f64::EPSILON * delta.norm());
    }

    #[test]
    fn finite_offset_matches_direct_difference() {
        let p = params();
        let f = RotationField::stretch(&p, Vec2::ZERO, 1.0);
        let x = Vec2::new(0.7 * p.eps, 0.1 * p.eps);
        let delta = Vec2::new(1e-4, 2e-4) * p.eps;
        let mut pair = PairTangent::new(x, delta, 0.0);
        pair.step(Some(&f), Some(&f), p.step_duration());
        let direct = exact_step(&f, p.step_duration(), x + delta) - exact_step(&f, p.step_duration(), x);
        let Offset::Finite(d) = pair.offset else { panic!() };
        assert!((d - direct).norm() < 1e-10 * delta.norm());
    }

    #[test]
    fn tangent_mode_matches_small_finite_offsets() {
        let p = params();
        let f = RotationField::stretch(&p, Vec2::ZERO, -1.0);
        let x = Vec2::new(0.6 * p.eps, -0.3 * p.eps);
        let dir = Vec2::from_angle(0.8);
        let mut fin = PairTangent::new(x, dir * 1e-9, 0.0);
        let mut tan = PairTangent::from_log(x, dir, -400.0, 1e-12);
        assert!(tan.is_tangent());
        for _ in 0..3 {
            fin.step(Some(&f), Some(&f), p.step_duration());
            tan.step(Some(&f), Some(&f), p.step_duration());
        }
        let growth_fin = fin.log_norm() - (1e-9f64).ln();
        let growth_tan = tan.log_norm() + 400.0;
        assert!((growth_fin - growth_tan).abs() < 1e-6);
        assert!((fin.direction() - tan.direction()).norm() < 1e-6);
    }

    #[test]
    fn circle_average_closed_form() {
        assert_eq!(circle_average_gain(0.0), 0.5);
        assert_relative_eq!(circle_average_quadrature(1.0, 1_000_000), 0.25, epsilon = 1e-9);
        assert_relative_eq!(circle_average_quadrature(0.5, 1_000_000), 0.375, epsilon = 1e-9);
    }

    #[test]
    fn moment_factor_trivial_cases() {
        let one = pair_moment_factor(0.8, Vec2::new(0.0, 1.0), 0.5, 0.2).unwrap();
        assert_eq!(one, 1.0);
        let none = pair_moment_factor(0.8, Vec2::new(0.6, 0.8), 0.5, 0.0).unwrap();
        assert_eq!(none, 1.0);
        assert!(pair_moment_factor(1.2, Vec2::new(1.0, 0.0), 0.5, 0.1).is_err());
    }

    #[test]
    fn calibrated_ell_near_leading_order() {
        let c = calibrate_ell(0.5, 0.1).unwrap();
        // leading order gives l ≈ 1 − γ/2
        assert!(c.ell > 0.7 && c.ell < 1.0, "{c:?}");
    }

    #[test]
    fn averaged_gain_beats_circle_bound() {
        let (gamma, tp) = (0.5, 0.1);
        let ell = calibrate_ell(gamma, tp).unwrap().ell;
        for rho in [0.5, 0.75, 1.0] {
            let n = 4000;
            let mean: f64 = (0..n)
                .map(|k| pair_moment_factor(rho, Vec2::from_angle(TAU * (k as f64 + 0.5) / n as f64), gamma, tp).unwrap())
                .sum::<f64>()
                / n as f64;
            let bound = 2.0 * gamma * tp * tp * rho.powi(4) * circle_average_gain(ell);
            assert!(mean - 1.0 >= bound, "rho {rho}: {} < {bound}", mean - 1.0);
        }
    }

    #[test]
    fn stretch_lipschitz_bound_holds() {
        let p = params();
        let f = RotationField::stretch(&p, Vec2::ZERO, 1.0);
        let c = stretch_lipschitz(p.tau_prime);
        for i in 0..2000 {
            let x = Vec2::from_angle(0.1 * i as f64) * (p.eps * (i as f64 / 2000.0) * 1.1);
            let d = Vec2::from_angle(0.37 * i as f64) * (1e-6 * p.eps);
            let mut pair = PairTangent::new(x, d, 0.0);
            pair.step(Some(&f), Some(&f), p.step_duration());
            assert!(pair.log_norm().exp() <= c * d.norm());
        }
    }

    #[test]
    fn field_spec_flows_like_params_field() {
        let spec = FieldSpec {
            kind: ProfileKind::StretchF,
            center: Vec2::ZERO,
            eps: 0.25,
            alpha: 0.25,
            beta: 0.5,
            tau_prime: 0.2,
            radius_fraction: 1.0,
            multiplier: 1.0,
        };
        let f = spec.to_field();
        let x = Vec2::new(0.05, 0.0);
        let y = exact_step(&f, 0.25f64.powf(0.25), x);
        assert_relative_eq!(y.angle(), 0.15, epsilon = 1e-14);
    }

    proptest! {
        #[test]
        fn radius_is_preserved(x in -0.05f64..0.05, y in -0.05f64..0.05, m in -7.0f64..7.0) {
            let p = params();
            let c = Vec2::new(0.001, 0.002);
            for f in [
                RotationField::stretch(&p, c, m),
                RotationField::ball(&p, c, 1.0, m),
                RotationField::annulus(&p, c, m),
            ] {
                let q = Vec2::new(x, y);
                let r0 = (q - c).norm();
                let r1 = (exact_step(&f, p.step_duration(), q) - c).norm();
                prop_assert!((r1 - r0).abs() <= 4.0 * f64::EPSILON * r0.max(f64::MIN_POSITIVE));
            }
        }

        #[test]
        fn negated_multiplier_inverts(x in -0.05f64..0.05, y in -0.05f64..0.05, m in -7.0f64..7.0) {
            let p = params();
            let f = RotationField::annulus(&p, Vec2::ZERO, m);
            let map = RadialRotationMap::from_field(f, p.step_duration());
            let q = Vec2::new(x, y);
            prop_assert!((map.inverse().apply(map.apply(q)) - q).norm() <= 1e-15);
        }
    }
}
