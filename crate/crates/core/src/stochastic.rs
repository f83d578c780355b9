//! Random realizations of the scheduled field and the pair-separation chain.
//!
//! Block `n` of the schedule occupies `[t_{3n}, t_{3n+3})` with `t_k = k ε^α`:
//!
//! * `[t_{3n}, t_{3n+1})`: annulus rotation `θ_n R^ann`,
//! * `[t_{3n+1}, t_{3n+2})`: ball rotations `Σ_i λ_{i,n} R_{z_i}`,
//! * `[t_{3n+2}, t_{3n+3})`: stretch `σ_n u^s`.
//!
//! Draws are addressed by `(seed, n, i)` and generated on demand, so a member
//! of an ensemble only pays for the balls its pair actually visits.

use alloc::vec::Vec;
use core::f64::consts::TAU;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::covering::{sample_unit_disk, Region, RegionSet};
use crate::error::Result;
use crate::fields::{spatial_norms, NormReport, RotationField, VelocityField};
use crate::flow::{exact_step, growth_lower_bound, PairTangent};
use crate::geometry::Vec2;
use crate::params::Params;
use crate::rng::{next_unit, CounterRng, Domain};
use crate::stats::{fit_line, wilson, Interval, MeanAcc, RatioAcc};

/// The random draws `σ_n`, `θ_n`, `λ_{i,n}` of one realization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RealizationSeed {
    pub master_seed: u64,
}

impl RealizationSeed {
    pub fn new(master_seed: u64) -> Self {
        RealizationSeed { master_seed }
    }

    fn rng(&self) -> CounterRng {
        CounterRng::new(self.master_seed)
    }

    /// `±1` with probability 1/2 each.
    pub fn sigma(&self, n: usize) -> f64 {
        if self.rng().word(Domain::Sigma, n as u64, 0) >> 63 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Uniform on `[0, 2π)`.
    pub fn theta(&self, n: usize) -> f64 {
        TAU * self.rng().uniform(Domain::Theta, n as u64, 0)
    }

    /// Uniform on `[0, 2π)`, independent across `(i, n)`.
    pub fn lambda(&self, i: usize, n: usize) -> f64 {
        TAU * self.rng().uniform(Domain::Lambda, n as u64, i as u64)
    }
}

/// Switches for ablation runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Controls {
    /// Annulus and ball rotations; off means `θ = λ = 0`.
    pub mixing: bool,
    /// The stretching step; off means `τ′ = 0`.
    pub stretch: bool,
}

impl Default for Controls {
    fn default() -> Self {
        Controls { mixing: true, stretch: true }
    }
}

/// Which elementary field acts during sub-interval `k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Annulus,
    Balls,
    Stretch,
}

impl Phase {
    pub fn of(k: usize) -> Phase {
        match k % 3 {
            0 => Phase::Annulus,
            1 => Phase::Balls,
            _ => Phase::Stretch,
        }
    }
}

/// The time-dependent field of one realization over `[0, t_{3N})`.
#[derive(Clone, Copy, Debug)]
pub struct ScheduledField<'a> {
    pub params: &'a Params,
    pub regions: &'a RegionSet,
    pub seed: RealizationSeed,
    pub controls: Controls,
}

/// One realization of the schedule for `master_seed`.
pub fn draw_realization<'a>(
    master_seed: u64,
    params: &'a Params,
    regions: &'a RegionSet,
) -> (RealizationSeed, ScheduledField<'a>) {
    let seed = RealizationSeed::new(master_seed);
    (seed, ScheduledField { params, regions, seed, controls: Controls::default() })
}

impl<'a> ScheduledField<'a> {
    pub fn with_controls(mut self, controls: Controls) -> Self {
        self.controls = controls;
        self
    }

    #[inline]
    pub fn anchor(&self) -> Vec2 {
        self.regions.spec.anchor
    }

    pub fn sub_steps(&self) -> usize {
        3 * self.params.n_blocks
    }

    pub fn annulus_field(&self, n: usize) -> RotationField {
        let theta = if self.controls.mixing { self.seed.theta(n) } else { 0.0 };
        RotationField::annulus(self.params, self.anchor(), theta)
    }

    pub fn ball_field(&self, n: usize, i: usize) -> RotationField {
        let lambda = if self.controls.mixing { self.seed.lambda(i, n) } else { 0.0 };
        let spec = &self.regions.spec;
        RotationField::ball(self.params, spec.center(i), spec.radii[i], lambda)
    }

    pub fn stretch_field(&self, n: usize) -> RotationField {
        let sigma = if self.controls.stretch { self.seed.sigma(n) } else { 0.0 };
        RotationField::stretch(self.params, self.anchor(), sigma)
    }

    /// The field whose support may contain `x` during sub-interval `k`.
    pub fn field_at(&self, k: usize, x: Vec2) -> Option<RotationField> {
        if k >= self.sub_steps() {
            return None;
        }
        let n = k / 3;
        let p = self.regions.normalize(x);
        match Phase::of(k) {
            Phase::Annulus => (p.norm_sq() < 1.0).then(|| self.annulus_field(n)),
            Phase::Balls => self.regions.ball_at(p).map(|i| self.ball_field(n, i)),
            Phase::Stretch => (p.norm_sq() < 1.0).then(|| self.stretch_field(n)),
        }
    }

    /// Position after sub-interval `k`, starting at its beginning.
    pub fn flow_sub_step(&self, k: usize, x: Vec2) -> Vec2 {
        match self.field_at(k, x) {
            Some(f) => exact_step(&f, self.params.step_duration(), x),
            None => x,
        }
    }

    /// Inverse of [`flow_sub_step`](Self::flow_sub_step).
    pub fn flow_sub_step_back(&self, k: usize, x: Vec2) -> Vec2 {
        // each sub-step map preserves its field's support, so the field found
        // at the image is the one that moved the point
        match self.field_at(k, x) {
            Some(mut f) => {
                f.multiplier = -f.multiplier;
                exact_step(&f, self.params.step_duration(), x)
            }
            None => x,
        }
    }

    /// `X(t, s, x)` for `s ≤ t`, both anywhere in `[0, ∞)`.
    pub fn flow(&self, s: f64, t: f64, x: Vec2) -> Vec2 {
        let d = self.params.step_duration();
        let mut p = x;
        let mut k = (s / d).floor() as usize;
        let mut now = s;
        while now < t && k < self.sub_steps() {
            let end = ((k + 1) as f64 * d).min(t);
            if let Some(f) = self.field_at(k, p) {
                p = exact_step(&f, end - now, p);
            }
            now = end;
            k += 1;
        }
        p
    }

    /// `X(s, t, x)` for `s ≤ t`: the backward flow.
    pub fn flow_back(&self, s: f64, t: f64, x: Vec2) -> Vec2 {
        let d = self.params.step_duration();
        let total = self.sub_steps();
        let mut p = x;
        let mut now = t.min(total as f64 * d);
        while now > s {
            let mut k = ((now / d).ceil() as usize).saturating_sub(1);
            while k > 0 && k as f64 * d >= now {
                k -= 1;
            }
            let start = (k as f64 * d).max(s);
            if let Some(mut f) = self.field_at(k, p) {
                f.multiplier = -f.multiplier;
                p = exact_step(&f, now - start, p);
            }
            now = start;
        }
        p
    }

    /// `‖u‖²_{L²_t H¹_x}` over `[t0, t1]` and `‖u‖_∞`.
    pub fn norms(&self, t0: f64, t1: f64, resolution: usize) -> Result<NormReport> {
        let d = self.params.step_duration();
        let mut out = NormReport { quadrature_cells: resolution, ..NormReport::ZERO };
        for k in 0..self.sub_steps() {
            let (a, b) = (k as f64 * d, (k + 1) as f64 * d);
            let overlap = b.min(t1) - a.max(t0);
            if overlap <= 0.0 {
                continue;
            }
            let n = k / 3;
            match Phase::of(k) {
                Phase::Annulus => out.accumulate(overlap, &spatial_norms(&self.annulus_field(n), resolution)?),
                Phase::Stretch => out.accumulate(overlap, &spatial_norms(&self.stretch_field(n), resolution)?),
                Phase::Balls => {
                    for i in 0..self.regions.spec.count() {
                        out.accumulate(overlap, &spatial_norms(&self.ball_field(n, i), resolution)?);
                    }
                }
            }
        }
        Ok(out)
    }
}

impl VelocityField for ScheduledField<'_> {
    fn velocity(&self, t: f64, x: Vec2) -> Vec2 {
        if t < 0.0 {
            return Vec2::ZERO;
        }
        let k = (t / self.params.step_duration()).floor() as usize;
        self.field_at(k, x).map_or(Vec2::ZERO, |f| f.evaluate(x))
    }

    fn breakpoints(&self, t0: f64, t1: f64) -> Vec<f64> {
        let d = self.params.step_duration();
        (0..=self.sub_steps()).map(|k| k as f64 * d).filter(|&t| t > t0 && t < t1).collect()
    }
}

/// State of the pair chain at a block boundary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairChainState {
    pub pair: PairTangent,
    /// Index of the current time `t_k`.
    pub k: usize,
    /// Both points avoided the bad set at every check so far.
    pub all_good: bool,
    /// `|δ|` exceeded `ε^{1+β}` at some block boundary.
    pub budget_exceeded: bool,
}

impl PairChainState {
    pub fn new(x: Vec2, y: Vec2, params: &Params) -> Self {
        PairChainState {
            pair: PairTangent::new(x, y - x, tangent_threshold(params)),
            k: 0,
            all_good: true,
            budget_exceeded: false,
        }
    }

    pub fn x(&self) -> Vec2 {
        self.pair.base
    }

    pub fn y(&self) -> Vec2 {
        self.pair.partner()
    }

    /// `|x_k − a| / ε`.
    pub fn rho(&self, anchor: Vec2, eps: f64) -> f64 {
        (self.x() - anchor).norm() / eps
    }

    /// `(δ̂ · ê_r, δ̂ · ê_r^⊥)` with `ê_r` the radial direction of `x_k`.
    pub fn omega(&self, anchor: Vec2) -> Vec2 {
        let er = (self.x() - anchor).normalized();
        let d = self.pair.direction();
        Vec2::new(d.dot(er), d.dot(er.perp()))
    }
}

/// Separations below `10⁻¹² ε` are tracked in tangent mode.
pub fn tangent_threshold(params: &Params) -> f64 {
    1e-12 * params.eps
}

/// What happened to a pair during one block.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub n: usize,
    /// Both points outside `A` at `t_{3n}` and at `t_{3n+1}`.
    pub good: bool,
    /// Both points sat in the same ball during the ball rotations.
    pub common_ball: bool,
    /// Both points in the closed annulus `ε/2 ≤ |x − a| ≤ ε` at `t_{3n+2}`.
    pub in_annulus: bool,
    /// `|δ_{3n}| ≤ ε^{1+β}`.
    pub within_budget: bool,
    pub log_sep_start: f64,
    pub log_sep_mixed: f64,
    pub log_sep_end: f64,
    pub rho_start: f64,
    pub rho_mixed: f64,
    pub omega_mixed: Vec2,
}

fn step_pair(pair: &mut PairTangent, schedule: &ScheduledField<'_>, k: usize) {
    let fx = schedule.field_at(k, pair.base);
    let fy = if pair.is_tangent() { fx } else { schedule.field_at(k, pair.partner()) };
    pair.step(fx.as_ref(), fy.as_ref(), schedule.params.step_duration());
}

fn both_outside_bad(pair: &PairTangent, regions: &RegionSet) -> bool {
    !regions.in_bad(pair.base) && (pair.is_tangent() || !regions.in_bad(pair.partner()))
}

/// Advance the chain through block `n`: annulus, balls, stretch.
pub fn step_block(state: PairChainState, schedule: &ScheduledField<'_>, n: usize) -> (PairChainState, BlockRecord) {
    let p = schedule.params;
    let a = schedule.anchor();
    let regions = schedule.regions;
    let mut s = state;
    debug_assert_eq!(s.k, 3 * n);
    let within_budget = s.pair.log_norm() <= p.separation_cap().ln();
    let log_sep_start = s.pair.log_norm();
    let rho_start = s.rho(a, p.eps);
    let mut good = both_outside_bad(&s.pair, regions);

    step_pair(&mut s.pair, schedule, 3 * n);
    good &= both_outside_bad(&s.pair, regions);
    let bx = regions.ball_at(regions.normalize(s.x()));
    let common_ball = bx.is_some() && (s.pair.is_tangent() || bx == regions.ball_at(regions.normalize(s.y())));

    step_pair(&mut s.pair, schedule, 3 * n + 1);
    let log_sep_mixed = s.pair.log_norm();
    let rho_mixed = s.rho(a, p.eps);
    let omega_mixed = s.omega(a);
    let in_ann = |q: Vec2| (0.5..=1.0).contains(&((q - a).norm() / p.eps));
    let in_annulus = in_ann(s.x()) && in_ann(s.y());

    step_pair(&mut s.pair, schedule, 3 * n + 2);
    s.k = 3 * n + 3;
    s.all_good &= good;
    s.budget_exceeded |= !within_budget;
    let rec = BlockRecord {
        n,
        good,
        common_ball,
        in_annulus,
        within_budget,
        log_sep_start,
        log_sep_mixed,
        log_sep_end: s.pair.log_norm(),
        rho_start,
        rho_mixed,
        omega_mixed,
    };
    (s, rec)
}

/// Block-by-block history of one pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub log_sep_initial: f64,
    pub blocks: Vec<BlockRecord>,
    pub final_state: PairChainState,
}

impl ChainRecord {
    pub fn any_bad(&self) -> bool {
        self.blocks.iter().any(|b| !b.good)
    }

    pub fn budget_exceeded(&self) -> bool {
        self.final_state.budget_exceeded
    }

    pub fn final_log_sep(&self) -> f64 {
        self.final_state.pair.log_norm()
    }
}

/// Run the pair `(x, y)` through every block of the schedule.
pub fn run_chain(x: Vec2, y: Vec2, schedule: &ScheduledField<'_>) -> ChainRecord {
    run_chain_from(PairChainState::new(x, y, schedule.params), schedule)
}

pub fn run_chain_from(start: PairChainState, schedule: &ScheduledField<'_>) -> ChainRecord {
    let mut s = start;
    let log_sep_initial = s.pair.log_norm();
    let mut blocks = Vec::with_capacity(schedule.params.n_blocks);
    for n in 0..schedule.params.n_blocks {
        let (next, rec) = step_block(s, schedule, n);
        s = next;
        blocks.push(rec);
    }
    ChainRecord { log_sep_initial, blocks, final_state: s }
}

/// How the initial offset `y − x` is oriented.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StartOrientation {
    #[default]
    Uniform,
    /// Along `x − a`.
    Radial,
}

/// How ensemble members start.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StartPlan {
    /// Initial `|x − y|` as a multiple of `δ_ε`.
    pub separation_factor: f64,
    pub orientation: StartOrientation,
    /// Fresh field realization per member; otherwise one shared realization.
    pub independent_fields: bool,
}

impl Default for StartPlan {
    fn default() -> Self {
        StartPlan { separation_factor: 1.0, orientation: StartOrientation::Uniform, independent_fields: true }
    }
}

/// Uniform point of `B(a, ε)` classified good, together with a good partner.
pub fn sample_good_pair(params: &Params, regions: &RegionSet, rng: &mut ChaCha8Rng, plan: &StartPlan) -> (Vec2, Vec2) {
    let a = regions.spec.anchor;
    let sep = plan.separation_factor * params.delta_eps;
    for _ in 0..1_000_000 {
        let p = sample_unit_disk(&mut || next_unit(rng));
        if regions.classify_normalized(p) != Region::Good {
            continue;
        }
        let x = a + p * params.eps;
        let dir = match plan.orientation {
            StartOrientation::Uniform => Vec2::from_angle(TAU * next_unit(rng)),
            StartOrientation::Radial => p.normalized(),
        };
        let y = x + dir * sep;
        if regions.classify(y) == Region::Good {
            return (x, y);
        }
    }
    panic!("good region is empty");
}

/// Realization and start of ensemble member `j`.
pub fn member_setup(j: u64, master_seed: u64, params: &Params, regions: &RegionSet, plan: &StartPlan) -> (RealizationSeed, Vec2, Vec2) {
    let root = CounterRng::new(master_seed);
    let seed = if plan.independent_fields {
        RealizationSeed::new(root.word(Domain::Member, j, 0))
    } else {
        RealizationSeed::new(root.word(Domain::Member, u64::MAX >> 8, 0))
    };
    let mut rng = root.stream(Domain::Start, j);
    let (x, y) = sample_good_pair(params, regions, &mut rng, plan);
    (seed, x, y)
}

/// Full chain of ensemble member `j`.
pub fn growth_member(
    j: u64,
    master_seed: u64,
    params: &Params,
    regions: &RegionSet,
    controls: Controls,
    plan: &StartPlan,
) -> ChainRecord {
    let (seed, x, y) = member_setup(j, master_seed, params, regions, plan);
    let schedule = ScheduledField { params, regions, seed, controls };
    run_chain(x, y, &schedule)
}

/// Whether member `j`, started from a pair in `B(a, ε)` outside `A` (no other
/// conditioning), meets `A` at any check `t_{3n}`, `t_{3n+1}` or at `t_{3N}`.
pub fn bad_hit_member(j: u64, master_seed: u64, params: &Params, regions: &RegionSet, controls: Controls) -> bool {
    let root = CounterRng::new(master_seed);
    let seed = RealizationSeed::new(root.word(Domain::Member, j, 0));
    let mut rng = root.stream(Domain::Start, j);
    let a = regions.spec.anchor;
    let (x, y) = loop {
        let x = a + sample_unit_disk(&mut || next_unit(&mut rng)) * params.eps;
        let y = x + Vec2::from_angle(TAU * next_unit(&mut rng)) * params.delta_eps;
        if !regions.in_bad(x) && !regions.in_bad(y) {
            break (x, y);
        }
    };
    let schedule = ScheduledField { params, regions, seed, controls };
    let rec = run_chain(x, y, &schedule);
    let end = &rec.final_state;
    rec.any_bad() || !both_outside_bad(&end.pair, regions)
}

/// Mergeable sums behind a [`GrowthReport`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GrowthAccumulator {
    pub gamma: f64,
    pub members: u64,
    /// `|δ_{3n}|^γ / |δ_0|^γ` over members good through block `n − 1`.
    pub moment_good: Vec<MeanAcc>,
    /// The same without conditioning.
    pub moment_all: Vec<MeanAcc>,
    /// Per-member sums of `|δ_{3n+3}|^γ/|δ_{3n}|^γ` and counts over good, in-budget blocks.
    pub block_ratio: RatioAcc,
    /// Same, with the mixing phase folded in: ratio measured from `t_{3n+2}`.
    pub stretch_ratio: RatioAcc,
    pub any_bad: u64,
    pub budget_exceeded: u64,
}

impl GrowthAccumulator {
    pub fn new(gamma: f64, n_blocks: usize) -> Self {
        GrowthAccumulator {
            gamma,
            members: 0,
            moment_good: alloc::vec![MeanAcc::default(); n_blocks + 1],
            moment_all: alloc::vec![MeanAcc::default(); n_blocks + 1],
            ..Default::default()
        }
    }

    pub fn push(&mut self, rec: &ChainRecord) {
        let g = self.gamma;
        self.members += 1;
        let l0 = rec.log_sep_initial;
        self.moment_good[0].push(1.0);
        self.moment_all[0].push(1.0);
        let mut alive = true;
        let (mut a, mut b) = (0.0, 0.0);
        let (mut sa, mut sb) = (0.0, 0.0);
        for blk in &rec.blocks {
            alive &= blk.good;
            let m = (g * (blk.log_sep_end - l0)).exp();
            self.moment_all[blk.n + 1].push(m);
            if alive {
                self.moment_good[blk.n + 1].push(m);
            }
            if blk.good && blk.within_budget {
                a += (g * (blk.log_sep_end - blk.log_sep_start)).exp();
                b += 1.0;
                sa += (g * (blk.log_sep_end - blk.log_sep_mixed)).exp();
                sb += 1.0;
            }
        }
        self.block_ratio.push(a, b);
        self.stretch_ratio.push(sa, sb);
        self.any_bad += rec.any_bad() as u64;
        self.budget_exceeded += rec.budget_exceeded() as u64;
    }

    pub fn merge(&mut self, o: &GrowthAccumulator) {
        self.members += o.members;
        for (x, y) in self.moment_good.iter_mut().zip(&o.moment_good) {
            x.merge(y);
        }
        for (x, y) in self.moment_all.iter_mut().zip(&o.moment_all) {
            x.merge(y);
        }
        self.block_ratio.merge(&o.block_ratio);
        self.stretch_ratio.merge(&o.stretch_ratio);
        self.any_bad += o.any_bad;
        self.budget_exceeded += o.budget_exceeded;
    }

    pub fn finish(&self, params: &Params, z: f64) -> GrowthReport {
        let rows: Vec<GrowthRow> = (0..self.moment_good.len())
            .map(|n| {
                let mg = &self.moment_good[n];
                let ci = mg.interval(z);
                GrowthRow {
                    block: n,
                    mean_moment: ci.estimate,
                    ci_low: ci.low,
                    ci_high: ci.high,
                    good_fraction: mg.n as f64 / self.members as f64,
                    mean_moment_all: self.moment_all[n].mean(),
                    all_half_width: z * self.moment_all[n].std_error(),
                }
            })
            .collect();
        let xs: Vec<f64> = rows.iter().map(|r| r.block as f64).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.mean_moment.ln()).collect();
        let fitted_rate = if rows.len() >= 2 { fit_line(&xs, &ys).slope.exp() } else { f64::NAN };
        GrowthReport {
            rows,
            block_ratio: self.block_ratio.interval(z),
            stretch_ratio: self.stretch_ratio.interval(z),
            fitted_rate,
            lower_bound: growth_lower_bound(params.gamma, params.tau_prime, params.ell),
            members: self.members,
            bad_hit: wilson(self.any_bad, self.members, z),
            budget_exceeded: self.budget_exceeded,
            z,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthRow {
    pub block: usize,
    /// `E[|δ_{3n}|^γ]/|δ_0|^γ` conditioned on all-good through block `n − 1`.
    pub mean_moment: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Fraction of members good through block `n − 1`.
    pub good_fraction: f64,
    pub mean_moment_all: f64,
    pub all_half_width: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub rows: Vec<GrowthRow>,
    /// Pooled `E[|δ_{3n+3}|^γ / |δ_{3n}|^γ]` over good, in-budget blocks.
    pub block_ratio: Interval,
    /// Same ratio measured from `t_{3n+2}` (after mixing) to `t_{3n+3}`.
    pub stretch_ratio: Interval,
    /// `exp` of the least-squares slope of `ln E|δ_{3n}|^γ` against `n`.
    pub fitted_rate: f64,
    /// Theoretical per-block bound `1 + c_γ`.
    pub lower_bound: f64,
    pub members: u64,
    /// Fraction of members that met the bad set at some check.
    pub bad_hit: Interval,
    pub budget_exceeded: u64,
    pub z: f64,
}

impl GrowthReport {
    /// True if no later block falls below an earlier one by more than their CIs allow.
    pub fn nondecreasing_within_ci(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].ci_high >= w[0].ci_low)
    }
}

/// Members per accumulation chunk; results depend on this, not on thread count.
pub const CHUNK: u64 = 1024;

/// Accumulate members `[start, end)` in order.
pub fn growth_chunk(
    start: u64,
    end: u64,
    master_seed: u64,
    params: &Params,
    regions: &RegionSet,
    controls: Controls,
    plan: &StartPlan,
) -> GrowthAccumulator {
    let mut acc = GrowthAccumulator::new(params.gamma, params.n_blocks);
    for j in start..end {
        acc.push(&growth_member(j, master_seed, params, regions, controls, plan));
    }
    acc
}

/// Sequential Monte Carlo estimate of the moment growth.
pub fn estimate_growth(
    ensemble: u64,
    params: &Params,
    regions: &RegionSet,
    master_seed: u64,
    controls: Controls,
    plan: &StartPlan,
    z: f64,
) -> GrowthReport {
    let mut total = GrowthAccumulator::new(params.gamma, params.n_blocks);
    let mut start = 0;
    while start < ensemble {
        let end = (start + CHUNK).min(ensemble);
        total.merge(&growth_chunk(start, end, master_seed, params, regions, controls, plan));
        start = end;
    }
    total.finish(params, z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covering::make_covering;
    use crate::flow::{ode_oracle, Offset};
    use crate::stats::{ks_uniform, KS_C01};

    fn setup(eps: f64, blocks: usize) -> (Params, RegionSet) {
        let p = Params::builder().eps(eps).n_blocks(blocks).time_horizon(100.0).build().unwrap();
        let cov = make_covering(&p, Vec2::new(0.5, 0.5)).unwrap();
        let r = RegionSet::from_params(&p, cov);
        (p, r)
    }

    #[test]
    fn draws_are_deterministic() {
        let (p, r) = setup(1.0 / 16.0, 3);
        let (s1, _) = draw_realization(9, &p, &r);
        let (s2, _) = draw_realization(9, &p, &r);
        for n in 0..50 {
            assert_eq!(s1.sigma(n), s2.sigma(n));
            assert_eq!(s1.theta(n).to_bits(), s2.theta(n).to_bits());
            assert_eq!(s1.lambda(17, n).to_bits(), s2.lambda(17, n).to_bits());
        }
    }

    #[test]
    fn sign_is_fair() {
        let s = RealizationSeed::new(5);
        let mean: f64 = (0..10_000).map(|n| s.sigma(n)).sum::<f64>() / 1e4;
        assert!(mean.abs() < 0.03);
    }

    #[test]
    fn lambdas_are_uniform() {
        let s = RealizationSeed::new(11);
        let mut v: Vec<f64> = (0..100_000).map(|j| s.lambda(j % 1000, j / 1000) / TAU).collect();
        let d = ks_uniform(&mut v);
        assert!(d < KS_C01 / (1e5f64).sqrt(), "{d}");
    }

    #[test]
    fn identical_points_stay_together() {
        let (p, r) = setup(1.0 / 16.0, 4);
        let (_, sched) = draw_realization(1, &p, &r);
        let x = r.spec.anchor + Vec2::new(0.7 * p.eps, 0.0);
        let rec = run_chain(x, x, &sched);
        assert_eq!(rec.final_state.pair.offset, Offset::Finite(Vec2::ZERO));
    }

    #[test]
    fn still_pairs_never_hit_the_bad_set() {
        let (p, r) = setup(1.0 / 16.0, 2);
        let off = Controls { mixing: false, stretch: false };
        assert!((0..200).all(|j| !bad_hit_member(j, 3, &p, &r, off)));
        assert!((0..2000).any(|j| bad_hit_member(j, 3, &p, &r, Controls::default())));
    }

    #[test]
    fn no_fields_means_no_motion() {
        let (p, r) = setup(1.0 / 16.0, 2);
        let (_, sched) = draw_realization(1, &p, &r);
        let sched = sched.with_controls(Controls { mixing: false, stretch: false });
        let x = r.spec.anchor + Vec2::new(0.3 * p.eps, 0.6 * p.eps);
        let y = x + Vec2::new(1e-7, 0.0);
        let s0 = PairChainState::new(x, y, &p);
        let (s1, _) = step_block(s0, &sched, 0);
        assert_eq!(s1.pair.base, s0.pair.base);
        assert_eq!(s1.pair.offset, s0.pair.offset);
    }

    #[test]
    fn exact_schedule_matches_rk4() {
        let (p, r) = setup(1.0 / 4.0, 1);
        let (_, sched) = draw_realization(3, &p, &r);
        let x = r.spec.anchor + Vec2::new(0.71 * p.eps, 0.2 * p.eps);
        let t1 = p.final_time();
        let exact = sched.flow(0.0, t1, x);
        let rk = ode_oracle(&sched, 0.0, t1, x, p.step_duration() / 2000.0);
        assert!((exact - rk).norm() < 1e-8, "{}", (exact - rk).norm());
    }

    #[test]
    fn flow_back_inverts_flow() {
        let (p, r) = setup(1.0 / 16.0, 3);
        let (_, sched) = draw_realization(8, &p, &r);
        for i in 0..200 {
            let x = r.spec.anchor + Vec2::from_angle(i as f64) * (p.eps * 1.2 * (i as f64 / 200.0));
            let t = p.final_time() * 0.83;
            let back = sched.flow_back(0.0, t, sched.flow(0.0, t, x));
            assert!((back - x).norm() < 1e-9, "{i} {x:?} {back:?}");
        }
    }

    #[test]
    fn radius_moves_at_most_eta_per_good_block() {
        let (p, r) = setup(1.0 / 32.0, 3);
        for j in 0..300 {
            let rec = growth_member(j, 4, &p, &r, Controls::default(), &StartPlan::default());
            for b in rec.blocks.iter().filter(|b| b.good) {
                assert!((b.rho_mixed - b.rho_start).abs() <= p.eta + 1e-12);
            }
        }
    }

    #[test]
    fn common_ball_mixing_is_isometric() {
        let (p, r) = setup(1.0 / 32.0, 2);
        // at this scale ε^{1+β} exceeds the ball radii, so start far below the budget
        let plan = StartPlan { separation_factor: 1e-3, ..StartPlan::default() };
        let mut checked = 0;
        for j in 0..500 {
            let rec = growth_member(j, 6, &p, &r, Controls::default(), &plan);
            for b in rec.blocks.iter().filter(|b| b.good && b.common_ball && b.within_budget) {
                let rel = (b.log_sep_mixed - b.log_sep_start).abs();
                assert!(rel <= 8.0 * f64::EPSILON, "{rel}");
                checked += 1;
            }
        }
        assert!(checked > 100, "{checked}");
    }

    #[test]
    fn chunked_estimate_is_reproducible() {
        let (p, r) = setup(1.0 / 32.0, 2);
        let a = estimate_growth(300, &p, &r, 1, Controls::default(), &StartPlan::default(), 1.96);
        let b = estimate_growth(300, &p, &r, 1, Controls::default(), &StartPlan::default(), 1.96);
        assert_eq!(a, b);
    }

    #[test]
    fn schedule_norms_add_up() {
        let (p, r) = setup(1.0 / 8.0, 1);
        let (_, sched) = draw_realization(2, &p, &r);
        let all = sched.norms(0.0, p.final_time(), 128).unwrap();
        let d = p.step_duration();
        let parts: f64 = (0..3).map(|k| sched.norms(k as f64 * d, (k + 1) as f64 * d, 128).unwrap().h1_squared).sum();
        assert!((all.h1_squared - parts).abs() <= 1e-12 * all.h1_squared);
    }
}
