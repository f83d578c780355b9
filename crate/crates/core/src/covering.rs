//! Disjoint ball families covering the reference annulus, and the regions
//! (bad, invariant, good) they induce.
//!
//! Balls sit on the points of a hexagonal lattice drawn in log-polar
//! coordinates `(ln r, φ)`. The lattice is sheared so that one of its vectors
//! lies along the angle axis with length `2π/m`, which makes every ring of
//! balls invariant under rotation by `τ = 2π/m`. Consecutive rings are offset
//! by an irrational-looking fraction of the spacing, so the balls of many
//! rings jointly shadow every circle. Because the log-polar chart is
//! conformal, a ball's radius may grow with its distance to the anchor.
//! Everything is computed in units of `ε` about the anchor and only scaled at the end.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::{Euclid, Float};
use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::params::Params;
use crate::rng::{unit_f64, CounterRng, Domain};

/// Fraction of each ball that must lie in the annulus `{1/2 < |x| < 1}`.
pub const MIN_AREA_FRACTION: f64 = 0.25;

/// The ball family `B(z_i, r_i ε)` for a given anchor and scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoveringSpec {
    pub anchor: Vec2,
    pub eps: f64,
    pub eta: f64,
    pub tau: f64,
    /// `(z_i − a)/ε`; independent of `ε`.
    pub normalized_centers: Vec<Vec2>,
    /// `r_i`; ball `i` has radius `r_i ε`.
    pub radii: Vec<f64>,
    /// Order `p² + pq + q²` of the lattice actually used (0 for hand-built specs).
    pub lattice_order: u32,
}

impl CoveringSpec {
    /// Spec from normalized data, without any checks.
    pub fn from_normalized(
        anchor: Vec2,
        eps: f64,
        eta: f64,
        tau: f64,
        normalized_centers: Vec<Vec2>,
        radii: Vec<f64>,
    ) -> Self {
        CoveringSpec { anchor, eps, eta, tau, normalized_centers, radii, lattice_order: 0 }
    }

    pub fn count(&self) -> usize {
        self.radii.len()
    }

    pub fn center(&self, i: usize) -> Vec2 {
        self.anchor + self.normalized_centers[i] * self.eps
    }

    pub fn centers(&self) -> Vec<Vec2> {
        (0..self.count()).map(|i| self.center(i)).collect()
    }

    pub fn max_radius(&self) -> f64 {
        self.radii.iter().copied().fold(0.0, f64::max)
    }

    /// The same family about another anchor and scale.
    pub fn rescaled(&self, anchor: Vec2, eps: f64) -> Self {
        CoveringSpec { anchor, eps, ..self.clone() }
    }
}

/// Lattice parameters in log-polar coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
struct ShearedLattice {
    order: u32,
    /// Half the nearest-neighbour distance.
    kappa: f64,
    /// Angular offset between consecutive rows.
    shift: f64,
    /// Log-radius spacing between consecutive rows.
    row_gap: f64,
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Smallest admissible order `≥ min_order` with its `(p, q)`.
fn lattice_order(min_order: u32, max_order: u32, kappa_of: impl Fn(u32) -> f64, kappa_cap: f64) -> Option<(u32, u32, u32)> {
    let mut best: Option<(u32, u32, u32)> = None;
    let pmax = (max_order as f64).sqrt() as u32 + 1;
    for p in 1..=pmax {
        for q in 0..=pmax {
            let n = p * p + p * q + q * q;
            if n < min_order || n > max_order || gcd(p, q) != 1 || kappa_of(n) > kappa_cap {
                continue;
            }
            if best.is_none_or(|(b, _, _)| n < b) {
                best = Some((n, p, q));
            }
        }
    }
    best
}

impl ShearedLattice {
    fn new(period: f64, min_order: u32, kappa_cap: f64) -> Result<Self> {
        let kappa_of = |n: u32| period / (2.0 * (n as f64).sqrt());
        let (order, p, q) = lattice_order(min_order, 10_000, kappa_of, kappa_cap).ok_or_else(|| {
            Error::InfeasibleCovering(alloc::format!(
                "no lattice of order <= 10000 gives ball radii below eta/2 (period {period})"
            ))
        })?;
        let kappa = kappa_of(order);
        let e1 = Vec2::new(2.0 * kappa, 0.0);
        let e2 = Vec2::new(kappa, 3.0.sqrt() * kappa);
        let w = e1 * p as f64 + e2 * q as f64;
        // (s, t) with p t − q s = 1 completes w to a lattice basis
        let (mut s, mut t) = (0i64, 0i64);
        'outer: for ss in -(order as i64)..=(order as i64) {
            for tt in -(order as i64)..=(order as i64) {
                if p as i64 * tt - q as i64 * ss == 1 {
                    (s, t) = (ss, tt);
                    break 'outer;
                }
            }
        }
        let w2 = e1 * s as f64 + e2 * t as f64;
        let len = w.norm();
        Ok(ShearedLattice { order, kappa, shift: w.dot(w2) / len, row_gap: w.cross(w2) / len })
    }
}

/// Area of `B(c, s) ∩ B(0, big)` with `|c| = d`.
fn lens_area(d: f64, s: f64, big: f64) -> f64 {
    if d >= s + big {
        return 0.0;
    }
    if d <= (big - s).abs() {
        let m = s.min(big);
        return PI * m * m;
    }
    let a1 = ((d * d + s * s - big * big) / (2.0 * d * s)).clamp(-1.0, 1.0).acos();
    let a2 = ((d * d + big * big - s * s) / (2.0 * d * big)).clamp(-1.0, 1.0).acos();
    let k = ((-d + s + big) * (d + s - big) * (d - s + big) * (d + s + big)).max(0.0);
    s * s * a1 + big * big * a2 - 0.5 * k.sqrt()
}

/// Fraction of `B(c, s)` inside the annulus `{1/2 < |x| < 1}`.
pub fn annulus_fraction(center: Vec2, s: f64) -> f64 {
    let d = center.norm();
    (lens_area(d, s, 1.0) - lens_area(d, s, 0.5)) / (PI * s * s)
}

/// Ball family for `params` about `anchor`.
pub fn make_covering(params: &Params, anchor: Vec2) -> Result<CoveringSpec> {
    let m = params.rotations_per_turn as usize;
    let period = TAU / m as f64;
    let cap = 0.5 * params.eta;
    // radii come out near κ·R; the 1.15 leaves room for R up to 1 + κ
    let lattice = ShearedLattice::new(period, params.lattice_order, cap / 1.15)?;
    let lo = 0.5f64.ln() - lattice.kappa;
    let hi = lattice.kappa;
    let j0 = (lo / lattice.row_gap).floor() as i64;
    let j1 = (hi / lattice.row_gap).ceil() as i64;

    let mut centers = Vec::new();
    for j in j0..=j1 {
        let radius = (j as f64 * lattice.row_gap).exp();
        let phase = Euclid::rem_euclid(&(j as f64 * lattice.shift), &period);
        for i in 0..m {
            centers.push(Vec2::from_angle(i as f64 * period + phase) * radius);
        }
    }
    let index = BallIndex::new(&centers, &vec![2.0 * lattice.kappa * 1.1; centers.len()]);
    let norms: Vec<f64> = centers.iter().map(|c| c.norm()).collect();
    let mut radii = vec![f64::INFINITY; centers.len()];
    for i in 0..centers.len() {
        for j in index.near(centers[i], 4.0 * lattice.kappa * 1.1) {
            if j == i {
                continue;
            }
            let d = (centers[i] - centers[j]).norm();
            radii[i] = radii[i].min(d * norms[i] / (norms[i] + norms[j]));
        }
    }
    let mut keep_c = Vec::new();
    let mut keep_r = Vec::new();
    for (c, r) in centers.into_iter().zip(radii) {
        if !r.is_finite() {
            return Err(Error::InfeasibleCovering("isolated lattice point".into()));
        }
        let r = (r * (1.0 - 1e-9)).min(cap);
        if annulus_fraction(c, r) >= MIN_AREA_FRACTION {
            keep_c.push(c);
            keep_r.push(r);
        }
    }
    if keep_c.is_empty() {
        return Err(Error::InfeasibleCovering("no ball meets the annulus".into()));
    }
    Ok(CoveringSpec {
        anchor,
        eps: params.eps,
        eta: params.eta,
        tau: params.tau,
        normalized_centers: keep_c,
        radii: keep_r,
        lattice_order: lattice.order,
    })
}

/// Uniform grid over normalized coordinates for ball lookup.
#[derive(Clone, Debug, PartialEq)]
pub struct BallIndex {
    origin: Vec2,
    cell: f64,
    nx: usize,
    ny: usize,
    starts: Vec<u32>,
    items: Vec<u32>,
}

impl BallIndex {
    pub fn new(centers: &[Vec2], radii: &[f64]) -> Self {
        let rmax = radii.iter().copied().fold(0.0, f64::max).max(1e-6);
        let (mut lo, mut hi) = (Vec2::new(f64::MAX, f64::MAX), Vec2::new(f64::MIN, f64::MIN));
        for (c, r) in centers.iter().zip(radii) {
            lo = Vec2::new(lo.x.min(c.x - r), lo.y.min(c.y - r));
            hi = Vec2::new(hi.x.max(c.x + r), hi.y.max(c.y + r));
        }
        if centers.is_empty() {
            lo = Vec2::ZERO;
            hi = Vec2::new(1.0, 1.0);
        }
        let cell = 2.0 * rmax;
        let nx = (((hi.x - lo.x) / cell).ceil() as usize).max(1);
        let ny = (((hi.y - lo.y) / cell).ceil() as usize).max(1);
        let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); nx * ny];
        for (i, (c, r)) in centers.iter().zip(radii).enumerate() {
            let (x0, y0) = Self::cell_of(lo, cell, nx, ny, *c - Vec2::new(*r, *r));
            let (x1, y1) = Self::cell_of(lo, cell, nx, ny, *c + Vec2::new(*r, *r));
            for cy in y0..=y1 {
                for cx in x0..=x1 {
                    buckets[cy * nx + cx].push(i as u32);
                }
            }
        }
        let mut starts = Vec::with_capacity(nx * ny + 1);
        let mut items = Vec::new();
        for b in buckets {
            starts.push(items.len() as u32);
            items.extend(b);
        }
        starts.push(items.len() as u32);
        BallIndex { origin: lo, cell, nx, ny, starts, items }
    }

    fn cell_of(origin: Vec2, cell: f64, nx: usize, ny: usize, p: Vec2) -> (usize, usize) {
        let cx = ((p.x - origin.x) / cell).floor().max(0.0) as usize;
        let cy = ((p.y - origin.y) / cell).floor().max(0.0) as usize;
        (cx.min(nx - 1), cy.min(ny - 1))
    }

    /// Balls whose bounding box covers the cell of `p`.
    pub fn candidates(&self, p: Vec2) -> &[u32] {
        let rel = p - self.origin;
        if rel.x < 0.0 || rel.y < 0.0 {
            return &[];
        }
        let (cx, cy) = ((rel.x / self.cell) as usize, (rel.y / self.cell) as usize);
        if cx >= self.nx || cy >= self.ny {
            return &[];
        }
        let k = cy * self.nx + cx;
        &self.items[self.starts[k] as usize..self.starts[k + 1] as usize]
    }

    /// Indices of balls registered in any cell within `reach` of `p`, ascending, without duplicates.
    pub fn near(&self, p: Vec2, reach: f64) -> Vec<usize> {
        let (x0, y0) = Self::cell_of(self.origin, self.cell, self.nx, self.ny, p - Vec2::new(reach, reach));
        let (x1, y1) = Self::cell_of(self.origin, self.cell, self.nx, self.ny, p + Vec2::new(reach, reach));
        let mut out = Vec::new();
        for cy in y0..=y1 {
            for cx in x0..=x1 {
                let k = cy * self.nx + cx;
                out.extend(self.items[self.starts[k] as usize..self.starts[k + 1] as usize].iter().map(|&i| i as usize));
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Worst-case margin of one covering property; negative means violated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyMargin {
    pub margin: f64,
    /// Where the worst case occurred: a ball index or a normalized radius.
    pub worst_at: f64,
}

/// Margins of properties i–iv, in units of `ε` where lengths are involved.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoveringReport {
    /// `min |z_i − z_j|/ε − r_i − r_j`.
    pub disjoint: PropertyMargin,
    /// Distance of the balls to the edges of `{1/2 − η < |x| < 1 + η}`.
    pub band: PropertyMargin,
    /// `min_i` fraction of ball `i` in the annulus, minus 1/4.
    pub area_fraction: PropertyMargin,
    /// `η − max_R` uncovered length / `R` for the shrunk balls.
    pub arc_coverage: PropertyMargin,
    /// Symmetry tolerance minus the worst center mismatch after rotating by `τ`.
    pub symmetry: PropertyMargin,
    /// Largest uncovered fraction of a circle, `length / (2πR)`.
    pub worst_uncovered_fraction: f64,
    pub radii_sampled: usize,
}

impl CoveringReport {
    pub fn margins(&self) -> [(&'static str, PropertyMargin); 5] {
        [
            ("disjoint", self.disjoint),
            ("band", self.band),
            ("area_fraction", self.area_fraction),
            ("arc_coverage", self.arc_coverage),
            ("symmetry", self.symmetry),
        ]
    }

    pub fn violations(&self) -> usize {
        self.margins().iter().filter(|(_, m)| m.margin < 0.0).count()
    }
}

/// Tolerance for matching rotated centers in the symmetry check.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Uncovered length of the circle `|x| = radius` outside the balls `B(c_i, s_i)`.
pub fn uncovered_length(centers: &[Vec2], radii: &[f64], radius: f64) -> f64 {
    let mut arcs: Vec<(f64, f64)> = Vec::new();
    for (c, &s) in centers.iter().zip(radii) {
        let d = c.norm();
        if s >= radius + d {
            return 0.0;
        }
        if (radius - d).abs() >= s || d == 0.0 {
            continue;
        }
        let half = ((radius * radius + d * d - s * s) / (2.0 * radius * d)).clamp(-1.0, 1.0).acos();
        let mid = c.angle();
        let start = Euclid::rem_euclid(&(mid - half), &TAU);
        let end = start + 2.0 * half;
        if end > TAU {
            arcs.push((start, TAU));
            arcs.push((0.0, end - TAU));
        } else {
            arcs.push((start, end));
        }
    }
    arcs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut covered = 0.0;
    let mut cur: Option<(f64, f64)> = None;
    for (a, b) in arcs {
        match cur {
            Some((ca, cb)) if a <= cb => cur = Some((ca, cb.max(b))),
            Some((ca, cb)) => {
                covered += cb - ca;
                cur = Some((a, b));
            }
            None => cur = Some((a, b)),
        }
    }
    if let Some((ca, cb)) = cur {
        covered += cb - ca;
    }
    radius * (TAU - covered).max(0.0)
}

/// Margins of properties i–iv. Arc coverage is exact on each of `radii`
/// circles evenly spaced strictly inside `(1/2, 1)`.
pub fn validate_covering(spec: &CoveringSpec, radii: usize, ramp: f64) -> CoveringReport {
    let c = &spec.normalized_centers;
    let r = &spec.radii;
    let index = BallIndex::new(c, r);
    let rmax = spec.max_radius();

    let mut disjoint = PropertyMargin { margin: f64::INFINITY, worst_at: -1.0 };
    for i in 0..c.len() {
        for j in index.near(c[i], 2.0 * rmax) {
            if j <= i {
                continue;
            }
            let gap = (c[i] - c[j]).norm() - r[i] - r[j];
            if gap < disjoint.margin {
                disjoint = PropertyMargin { margin: gap, worst_at: i as f64 };
            }
        }
    }

    let mut band = PropertyMargin { margin: f64::INFINITY, worst_at: -1.0 };
    let mut area_fraction = PropertyMargin { margin: f64::INFINITY, worst_at: -1.0 };
    for i in 0..c.len() {
        let d = c[i].norm();
        let m = (d - r[i] - (0.5 - spec.eta)).min(1.0 + spec.eta - d - r[i]);
        if m < band.margin {
            band = PropertyMargin { margin: m, worst_at: i as f64 };
        }
        let f = annulus_fraction(c[i], r[i]) - MIN_AREA_FRACTION;
        if f < area_fraction.margin {
            area_fraction = PropertyMargin { margin: f, worst_at: i as f64 };
        }
    }

    let shrunk: Vec<f64> = r.iter().map(|s| s * (1.0 - ramp)).collect();
    let mut worst = 0.0f64;
    let mut worst_at = 0.5;
    for k in 0..radii {
        let radius = 0.5 + 0.5 * (k as f64 + 0.5) / radii as f64;
        let frac = uncovered_length(c, &shrunk, radius) / radius;
        if frac > worst {
            worst = frac;
            worst_at = radius;
        }
    }
    let arc_coverage = PropertyMargin { margin: spec.eta - worst, worst_at };

    let mut mismatch = 0.0f64;
    let mut mismatch_at = -1.0;
    for i in 0..c.len() {
        if c[i].norm() - r[i] >= 0.5 {
            continue;
        }
        let target = c[i].rotate(spec.tau);
        let best = index
            .near(target, rmax)
            .into_iter()
            .map(|j| (c[j] - target).norm() + (r[j] - r[i]).abs())
            .fold(f64::INFINITY, f64::min);
        if best > mismatch {
            mismatch = best;
            mismatch_at = i as f64;
        }
    }
    let symmetry = PropertyMargin { margin: SYMMETRY_TOL - mismatch, worst_at: mismatch_at };

    CoveringReport {
        disjoint,
        band,
        area_fraction,
        arc_coverage,
        symmetry,
        worst_uncovered_fraction: worst / TAU,
        radii_sampled: radii,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Good,
    Bad,
    InvariantOnly,
    Outside,
}

/// Bad set `A`, invariant set `O` and good set `Ω = B(a, ε) ∩ O \ A` of a covering.
///
/// `A` is the union of the outer ramp `ε(1 − ε^β) < |x − a| < ε`, the inner
/// ramp `ε/2 < |x − a| < ε(1/2 + ε^β)` of the annulus profile, and the ramp
/// of every ball. `O` is the closed annulus together with all balls.
#[derive(Clone, Debug)]
pub struct RegionSet {
    pub spec: CoveringSpec,
    pub ramp: f64,
    index: BallIndex,
}

impl RegionSet {
    pub fn new(spec: CoveringSpec, ramp: f64) -> Self {
        let index = BallIndex::new(&spec.normalized_centers, &spec.radii);
        RegionSet { spec, ramp, index }
    }

    pub fn from_params(params: &Params, spec: CoveringSpec) -> Self {
        RegionSet::new(spec, params.ramp())
    }

    /// Normalized coordinates `(x − a)/ε`.
    #[inline]
    pub fn normalize(&self, x: Vec2) -> Vec2 {
        (x - self.spec.anchor) / self.spec.eps
    }

    /// Ball containing the normalized point `p` (open ball), if any.
    #[inline]
    pub fn ball_at(&self, p: Vec2) -> Option<usize> {
        self.index.candidates(p).iter().map(|&i| i as usize).find(|&i| {
            let s = self.spec.radii[i];
            (p - self.spec.normalized_centers[i]).norm_sq() < s * s
        })
    }

    /// True when the normalized point lies in a ramp annulus.
    pub fn in_bad_normalized(&self, p: Vec2) -> bool {
        let w = self.ramp;
        let r = p.norm();
        if (r > 1.0 - w && r < 1.0) || (r > 0.5 && r < 0.5 + w) {
            return true;
        }
        if let Some(i) = self.ball_at(p) {
            let s = self.spec.radii[i];
            let d = (p - self.spec.normalized_centers[i]).norm();
            return d > s * (1.0 - w);
        }
        false
    }

    pub fn in_bad(&self, x: Vec2) -> bool {
        self.in_bad_normalized(self.normalize(x))
    }

    pub fn in_invariant_normalized(&self, p: Vec2) -> bool {
        let r = p.norm();
        (0.5..=1.0).contains(&r) || self.ball_at(p).is_some()
    }

    pub fn classify_normalized(&self, p: Vec2) -> Region {
        if self.in_bad_normalized(p) {
            Region::Bad
        } else if self.in_invariant_normalized(p) {
            if p.norm() < 1.0 {
                Region::Good
            } else {
                Region::InvariantOnly
            }
        } else {
            Region::Outside
        }
    }

    pub fn classify(&self, x: Vec2) -> Region {
        self.classify_normalized(self.normalize(x))
    }

    /// Analytic area of the bad set divided by `|B(a, ε)|`.
    ///
    /// The annulus ramps are disjoint from ball ramps only up to overlaps, so
    /// this is an upper bound: outer and inner ramp areas plus every ball ramp.
    pub fn bad_fraction_bound(&self) -> f64 {
        let w = self.ramp;
        let outer = 1.0 - (1.0 - w) * (1.0 - w);
        let inner = ((0.5 + w).min(1.0).powi(2) - 0.25).max(0.0);
        let balls: f64 = self.spec.radii.iter().map(|s| s * s * (1.0 - (1.0 - w) * (1.0 - w))).sum();
        outer + inner + balls
    }
}

/// Hit-or-miss estimate of `|Ω| / |B(a, ε)|`: returns `(hits, samples)`.
pub fn good_area_hits(regions: &RegionSet, samples: u64, seed: u64) -> (u64, u64) {
    let mut rng = CounterRng::new(seed).stream(Domain::Area, 0);
    let mut hits = 0;
    for _ in 0..samples {
        let p = sample_unit_disk(&mut || unit_f64(rng.next_u64()));
        if regions.classify_normalized(p) == Region::Good {
            hits += 1;
        }
    }
    (hits, samples)
}

/// Uniform point of the unit disk from two uniforms.
pub fn sample_unit_disk(u: &mut impl FnMut() -> f64) -> Vec2 {
    let r = u().sqrt();
    Vec2::from_angle(TAU * u()) * r
}
