//! The seven experiments. Each returns its CSV rows, a short text summary and
//! a JSON object of headline metrics for the manifest.

use std::fmt::Write as _;

use irregflow_core::analysis::{
    self, assemble_multiscale, candidate_seed, disk_moment, eval_functional, functional_chunk, h1_budget,
    select_realization, ConeBump, FunctionalAcc, FunctionalReport, MultiscaleSpec, ProbePlan,
};
use irregflow_core::covering::{good_area_hits, make_covering, validate_covering, RegionSet};
use irregflow_core::fields::{spatial_norms, RotationField};
use irregflow_core::flow::{
    calibrate_ell, circle_average_gain, circle_average_quadrature, moment_bound, moment_grid, pair_moment_factor,
};
use irregflow_core::rng::{CounterRng, Domain};
use irregflow_core::stats::{fit_line, wilson, MeanAcc};
use irregflow_core::stochastic::{
    growth_chunk, growth_member, Controls, GrowthAccumulator, GrowthReport, RealizationSeed, ScheduledField, CHUNK,
};
use irregflow_core::{Params, Vec2};
use serde::Serialize;
use serde_json::json;

use crate::config::{Experiment, ExperimentConfig};
use crate::output::csv_bytes;
use crate::parallel::{chunked_reduce, ordered_map};
use crate::RunError;

pub struct Outcome {
    pub csv: Vec<u8>,
    pub summary: String,
    pub metrics: serde_json::Value,
    /// Additional files, by name.
    pub extra: Vec<(String, Vec<u8>)>,
}

pub fn run_experiment(exp: Experiment, cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let base = cfg.base_params()?;
    match exp {
        Experiment::Norms => norms(cfg, &base),
        Experiment::Covering => covering(cfg, &base),
        Experiment::StretchMoment => stretch_moment(cfg, &base),
        Experiment::ChainGrowth => chain_growth(cfg, &base),
        Experiment::Select => select(cfg, &base),
        Experiment::Blowup => blowup(cfg, &base),
        Experiment::Transport => transport(cfg, &base),
    }
}

fn dyadic(i: u32) -> f64 {
    0.5f64.powi(i as i32)
}

fn require(ok: bool, msg: impl Into<String>) -> Result<(), RunError> {
    if ok {
        Ok(())
    } else {
        Err(RunError::Plan(msg.into()))
    }
}

#[derive(Serialize)]
struct NormRow {
    family: &'static str,
    level: u32,
    eps: f64,
    h1_squared: f64,
    linf: f64,
    quadrature_cells: usize,
}

fn norms(cfg: &ExperimentConfig, base: &Params) -> Result<Outcome, RunError> {
    let plan = &cfg.norms;
    require(plan.levels.len() >= 2, "norms needs at least two levels")?;
    let mut rows = Vec::new();
    for &i in &plan.levels {
        let p = base.at_scale(dyadic(i), None)?;
        let fams = [
            ("stretch", RotationField::stretch(&p, Vec2::ZERO, 1.0)),
            ("ball", RotationField::ball(&p, Vec2::ZERO, plan.ball_radius, 1.0)),
            ("annulus", RotationField::annulus(&p, Vec2::ZERO, 1.0)),
        ];
        for (family, f) in fams {
            let n = spatial_norms(&f, plan.resolution)?;
            rows.push(NormRow { family, level: i, eps: p.eps, h1_squared: n.h1_squared, linf: n.linf, quadrature_cells: n.quadrature_cells });
        }
    }
    let slope = |fam: &str, linf: bool| {
        let (xs, ys): (Vec<f64>, Vec<f64>) = rows
            .iter()
            .filter(|r| r.family == fam)
            .map(|r| (r.eps.ln(), if linf { r.linf } else { r.h1_squared }.ln()))
            .unzip();
        fit_line(&xs, &ys).slope
    };
    let (a, b) = (base.alpha, base.beta);
    let metrics = json!({
        "h1_slope": {"stretch": slope("stretch", false), "ball": slope("ball", false), "annulus": slope("annulus", false)},
        "linf_slope": {"stretch": slope("stretch", true), "ball": slope("ball", true), "annulus": slope("annulus", true)},
        "expected_h1_slope": {"stretch": 2.0 - 2.0 * a, "ball": 2.0 - 2.0 * a - b, "annulus": 2.0 - 2.0 * a - b},
    });
    let mut s = String::new();
    writeln!(s, "H1 and sup norms of single fields over eps = 2^-i, i in {:?}", plan.levels).unwrap();
    for fam in ["stretch", "ball", "annulus"] {
        writeln!(s, "{fam:8} H1^2 slope {:.4}  sup slope {:.4}", slope(fam, false), slope(fam, true)).unwrap();
    }
    writeln!(s, "expected H1^2 slopes: stretch {:.4}, ball/annulus {:.4}", 2.0 - 2.0 * a, 2.0 - 2.0 * a - b).unwrap();
    Ok(Outcome { csv: csv_bytes(&rows)?, summary: s, metrics, extra: vec![] })
}

#[derive(Serialize)]
struct CoveringRow {
    level: u32,
    eps: f64,
    balls: usize,
    max_radius: f64,
    disjoint_margin: f64,
    band_margin: f64,
    area_fraction_margin: f64,
    arc_coverage_margin: f64,
    symmetry_margin: f64,
    worst_uncovered_fraction: f64,
    good_fraction: f64,
    good_low: f64,
    good_high: f64,
}

fn covering(cfg: &ExperimentConfig, base: &Params) -> Result<Outcome, RunError> {
    let plan = &cfg.covering;
    let root = CounterRng::new(cfg.seed);
    let rows: Vec<CoveringRow> = ordered_map(&plan.levels, |&i| -> Result<CoveringRow, RunError> {
        let p = base.at_scale(dyadic(i), None)?;
        let spec = make_covering(&p, Vec2::ZERO)?;
        let rep = validate_covering(&spec, plan.radii, p.ramp());
        let balls = spec.count();
        let max_radius = spec.max_radius();
        let regions = RegionSet::from_params(&p, spec);
        let (hits, n) = good_area_hits(&regions, plan.area_samples, root.word(Domain::Area, i as u64, 0));
        let ci = wilson(hits, n, plan.z);
        Ok(CoveringRow {
            level: i,
            eps: p.eps,
            balls,
            max_radius,
            disjoint_margin: rep.disjoint.margin,
            band_margin: rep.band.margin,
            area_fraction_margin: rep.area_fraction.margin,
            arc_coverage_margin: rep.arc_coverage.margin,
            symmetry_margin: rep.symmetry.margin,
            worst_uncovered_fraction: rep.worst_uncovered_fraction,
            good_fraction: ci.estimate,
            good_low: ci.low,
            good_high: ci.high,
        })
    })
    .into_iter()
    .collect::<Result<_, _>>()?;
    let mut s = String::new();
    writeln!(s, "covering margins (negative = violated), eta = {}, 2pi/tau = {}", base.eta, base.rotations_per_turn).unwrap();
    for r in &rows {
        writeln!(
            s,
            "eps 2^-{}: {} balls, disjoint {:.3e}, band {:.3e}, area {:.3e}, arcs {:.3e}, symmetry {:.3e}, good fraction {:.4} [{:.4}, {:.4}]",
            r.level, r.balls, r.disjoint_margin, r.band_margin, r.area_fraction_margin, r.arc_coverage_margin,
            r.symmetry_margin, r.good_fraction, r.good_low, r.good_high
        )
        .unwrap();
    }
    let metrics = json!({
        "levels": rows.iter().map(|r| json!({
            "level": r.level,
            "margins": [r.disjoint_margin, r.band_margin, r.area_fraction_margin, r.arc_coverage_margin, r.symmetry_margin],
            "good_low": r.good_low,
            "good_high": r.good_high,
        })).collect::<Vec<_>>(),
    });
    Ok(Outcome { csv: csv_bytes(&rows)?, summary: s, metrics, extra: vec![] })
}

#[derive(Serialize)]
struct MomentRow {
    rho: f64,
    omega_x: f64,
    omega_y: f64,
    factor: f64,
    bound: f64,
    margin: f64,
}

fn stretch_moment(cfg: &ExperimentConfig, base: &Params) -> Result<Outcome, RunError> {
    let plan = &cfg.stretch_moment;
    let tp = plan.tau_prime.unwrap_or(base.tau_prime);
    let g = base.gamma;
    let cal = calibrate_ell(g, tp)?;
    let rows: Vec<MomentRow> = moment_grid(plan.n_rho, plan.n_angle)
        .map(|(rho, w)| {
            let factor = pair_moment_factor(rho, w, g, tp)?;
            let bound = moment_bound(rho, w, g, tp, cal.ell);
            Ok(MomentRow { rho, omega_x: w.x, omega_y: w.y, factor, bound, margin: factor - bound })
        })
        .collect::<Result<_, irregflow_core::Error>>()?;
    let worst = rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    let below = rows.iter().filter(|r| r.margin < 0.0).count();
    let circle: Vec<_> = plan
        .circle_ells
        .iter()
        .map(|&l| json!({"ell": l, "closed_form": circle_average_gain(l), "quadrature": circle_average_quadrature(l, plan.circle_nodes)}))
        .collect();
    let mut s = String::new();
    writeln!(s, "one-step moment factor vs bound, gamma = {g}, tau' = {tp}, calibrated l = {:.6}", cal.ell).unwrap();
    writeln!(s, "grid {}x{}: worst margin {:.3e}, {} points below the bound", plan.n_rho, plan.n_angle, worst, below).unwrap();
    for c in &circle {
        writeln!(s, "circle average l = {}: closed form {:.8}, quadrature {:.8}", c["ell"], c["closed_form"], c["quadrature"]).unwrap();
    }
    let metrics = json!({"ell": cal.ell, "worst_margin": worst, "points_below": below, "grid_points": rows.len(), "circle_average": circle});
    Ok(Outcome { csv: csv_bytes(&rows)?, summary: s, metrics, extra: vec![] })
}

/// Parallel [`irregflow_core::stochastic::estimate_growth`] with the same chunking.
pub fn growth_parallel(
    ensemble: u64,
    params: &Params,
    regions: &RegionSet,
    master_seed: u64,
    controls: Controls,
    plan: &irregflow_core::stochastic::StartPlan,
    z: f64,
) -> GrowthReport {
    let acc = chunked_reduce(
        ensemble,
        CHUNK,
        GrowthAccumulator::new(params.gamma, params.n_blocks),
        |a, b| growth_chunk(a, b, master_seed, params, regions, controls, plan),
        |t, c| t.merge(c),
    );
    acc.finish(params, z)
}

#[derive(Serialize)]
struct TrajectoryRow {
    member: u64,
    block: usize,
    good: bool,
    common_ball: bool,
    in_annulus: bool,
    within_budget: bool,
    log_sep_start: f64,
    log_sep_mixed: f64,
    log_sep_end: f64,
    rho_start: f64,
    rho_mixed: f64,
    omega_x: f64,
    omega_y: f64,
}

fn chain_growth(cfg: &ExperimentConfig, base: &Params) -> Result<Outcome, RunError> {
    let plan = &cfg.chain_growth;
    require(plan.ensemble > 0, "chain_growth.ensemble must be positive")?;
    let regions = RegionSet::from_params(base, make_covering(base, Vec2::ZERO)?);
    let controls = Controls { mixing: plan.mixing, stretch: plan.stretch };
    let rep = growth_parallel(plan.ensemble, base, &regions, cfg.seed, controls, &plan.start, plan.z);
    let mut extra = vec![];
    if plan.trajectories > 0 {
        let members: Vec<u64> = (0..plan.trajectories).collect();
        let recs = ordered_map(&members, |&j| growth_member(j, cfg.seed, base, &regions, controls, &plan.start));
        let rows: Vec<TrajectoryRow> = recs
            .iter()
            .zip(&members)
            .flat_map(|(rec, &j)| {
                rec.blocks.iter().map(move |b| TrajectoryRow {
                    member: j,
                    block: b.n,
                    good: b.good,
                    common_ball: b.common_ball,
                    in_annulus: b.in_annulus,
                    within_budget: b.within_budget,
                    log_sep_start: b.log_sep_start,
                    log_sep_mixed: b.log_sep_mixed,
                    log_sep_end: b.log_sep_end,
                    rho_start: b.rho_start,
                    rho_mixed: b.rho_mixed,
                    omega_x: b.omega_mixed.x,
                    omega_y: b.omega_mixed.y,
                })
            })
            .collect();
        extra.push(("trajectories.csv".to_string(), csv_bytes(&rows)?));
    }
    let mut s = String::new();
    writeln!(s, "pair growth, eps = {}, N = {}, delta_eps = {:.4e}, members = {}", base.eps, base.n_blocks, base.delta_eps, rep.members).unwrap();
    writeln!(s, "controls: mixing {}, stretch {}", controls.mixing, controls.stretch).unwrap();
    for r in &rep.rows {
        writeln!(s, "block {:3}: E|d|^g/|d0|^g = {:.6} [{:.6}, {:.6}], good fraction {:.4}, unconditioned {:.6}", r.block, r.mean_moment, r.ci_low, r.ci_high, r.good_fraction, r.mean_moment_all).unwrap();
    }
    writeln!(s, "per-block ratio {:.6} [{:.6}, {:.6}], stretch-step ratio {:.6} [{:.6}, {:.6}]", rep.block_ratio.estimate, rep.block_ratio.low, rep.block_ratio.high, rep.stretch_ratio.estimate, rep.stretch_ratio.low, rep.stretch_ratio.high).unwrap();
    writeln!(s, "fitted rate {:.6}, lower bound 1 + c_gamma = {:.6}", rep.fitted_rate, rep.lower_bound).unwrap();
    writeln!(s, "bad-set hit fraction {:.4} [{:.4}, {:.4}], budget exceeded {}", rep.bad_hit.estimate, rep.bad_hit.low, rep.bad_hit.high, rep.budget_exceeded).unwrap();
    writeln!(s, "nondecreasing within CI: {}", rep.nondecreasing_within_ci()).unwrap();
    let metrics = json!({
        "block_ratio": rep.block_ratio,
        "stretch_ratio": rep.stretch_ratio,
        "fitted_rate": rep.fitted_rate,
        "lower_bound": rep.lower_bound,
        "bad_hit": rep.bad_hit,
        "budget_exceeded": rep.budget_exceeded,
        "nondecreasing_within_ci": rep.nondecreasing_within_ci(),
        "members": rep.members,
    });
    Ok(Outcome { csv: csv_bytes(&rep.rows)?, summary: s, metrics, extra })
}

/// Probe key shared by every candidate of a run.
fn probe_seed(master: u64) -> u64 {
    CounterRng::new(master).word(Domain::Probe, u64::MAX >> 8, 0)
}

/// Master seed of level `i`.
fn level_master(master: u64, i: u32) -> u64 {
    CounterRng::new(master).word(Domain::Candidate, (1 << 32) | i as u64, 0)
}

#[derive(Serialize)]
struct CandidateRow {
    candidate: usize,
    seed: u64,
    gamma_moment: f64,
    chosen: bool,
}

fn select(cfg: &ExperimentConfig, base: &Params) -> Result<Outcome, RunError> {
    let plan = &cfg.select;
    require(plan.candidates >= 1, "select.candidates must be at least 1")?;
    let regions = RegionSet::from_params(base, make_covering(base, Vec2::ZERO)?);
    let probe = ProbePlan { samples: plan.samples, h: base.delta_eps, seed: probe_seed(cfg.seed) };
    let idx: Vec<usize> = (0..plan.candidates).collect();
    let values = ordered_map(&idx, |&c| {
        let sched = ScheduledField { params: base, regions: &regions, seed: candidate_seed(cfg.seed, c), controls: Controls::default() };
        eval_functional(&sched, &probe, plan.z).gamma_moment.estimate
    });
    let seeds = idx.iter().map(|&c| candidate_seed(cfg.seed, c)).collect();
    let sel = analysis::select_from_scores(seeds, values);
    let check = {
        let sched = ScheduledField { params: base, regions: &regions, seed: sel.chosen_seed, controls: Controls::default() };
        eval_functional(&sched, &probe, plan.z)
    };
    let rows: Vec<CandidateRow> = sel
        .values
        .iter()
        .enumerate()
        .map(|(c, &v)| CandidateRow { candidate: c, seed: sel.seeds[c].master_seed, gamma_moment: v, chosen: c == sel.chosen })
        .collect();
    let mut s = String::new();
    writeln!(s, "realization selection at eps = {}, h = delta_eps = {:.4e}, {} probes each", base.eps, base.delta_eps, plan.samples).unwrap();
    writeln!(s, "chosen candidate {} (seed {}): {:.6}; candidate mean {:.6}", sel.chosen, sel.chosen_seed.master_seed, sel.chosen_value, sel.mean()).unwrap();
    writeln!(s, "re-evaluation of the chosen seed: {:.6} [{:.6}, {:.6}]", check.gamma_moment.estimate, check.gamma_moment.low, check.gamma_moment.high).unwrap();
    writeln!(s, "no-motion reference 2/(2+gamma) = {:.6}", disk_moment(base.gamma)).unwrap();
    let metrics = json!({"chosen": sel.chosen, "chosen_seed": sel.chosen_seed.master_seed, "chosen_value": sel.chosen_value, "mean": sel.mean(), "recheck": check.gamma_moment});
    Ok(Outcome { csv: csv_bytes(&rows)?, summary: s, metrics, extra: vec![] })
}

/// Seeds for each level: the best of `candidates` or the first candidate.
fn level_seeds(cfg: &ExperimentConfig, base: &Params, levels: &[u32], candidates: usize, samples: u64) -> Result<Vec<RealizationSeed>, RunError> {
    let cov = make_covering(base, Vec2::ZERO)?;
    levels
        .iter()
        .map(|&i| {
            let m = level_master(cfg.seed, i);
            if candidates <= 1 {
                return Ok(candidate_seed(m, 0));
            }
            let p = base.at_scale(dyadic(i), None)?;
            let regions = RegionSet::from_params(&p, cov.rescaled(Vec2::ZERO, p.eps));
            let probe = ProbePlan { samples, h: p.delta_eps, seed: probe_seed(m) };
            Ok(select_realization(candidates, &p, &regions, &probe, m).chosen_seed)
        })
        .collect()
}

fn build_spec(cfg: &ExperimentConfig, base: &Params, levels: &[u32], candidates: usize, samples: u64) -> Result<MultiscaleSpec, RunError> {
    let seeds = level_seeds(cfg, base, levels, candidates, samples)?;
    let cov = make_covering(base, Vec2::ZERO)?;
    Ok(assemble_multiscale(levels, base, &cov, &seeds, None)?)
}

fn functional_parallel(sched: &ScheduledField<'_>, plan: &ProbePlan, z: f64) -> FunctionalReport {
    let acc = chunked_reduce(plan.samples, analysis::CHUNK, FunctionalAcc::default(), |a, b| functional_chunk(a, b, sched, plan), |t, c| t.merge(c));
    FunctionalReport::from_acc(&acc, plan.h, sched.params.eps, z)
}

#[derive(Serialize)]
struct CurveRow {
    level: u32,
    eps: f64,
    n_blocks: usize,
    h: f64,
    gamma_moment: f64,
    ci_low: f64,
    ci_high: f64,
    log_moment: f64,
    log_low: f64,
    log_high: f64,
    area_weighted: f64,
    samples: u64,
}

impl CurveRow {
    fn new(level: u32, n_blocks: usize, r: &FunctionalReport, eps: f64) -> Self {
        CurveRow {
            level,
            eps,
            n_blocks,
            h: r.h,
            gamma_moment: r.gamma_moment.estimate,
            ci_low: r.gamma_moment.low,
            ci_high: r.gamma_moment.high,
            log_moment: r.log_moment.estimate,
            log_low: r.log_moment.low,
            log_high: r.log_moment.high,
            area_weighted: r.area_weighted,
            samples: r.samples,
        }
    }
}

/// True if each CI lies strictly above the previous one.
fn strictly_separated(rows: &[CurveRow]) -> bool {
    rows.windows(2).all(|w| w[1].ci_low > w[0].ci_high)
}

fn curve_summary(s: &mut String, rows: &[CurveRow]) {
    for r in rows {
        writeln!(s, "level {} (eps {}, N = {}): h = {:.4e}, gamma moment {:.6} [{:.6}, {:.6}], log moment {:.6}", r.level, r.eps, r.n_blocks, r.h, r.gamma_moment, r.ci_low, r.ci_high, r.log_moment).unwrap();
    }
    writeln!(s, "strictly increasing with separated CIs: {}", strictly_separated(rows)).unwrap();
}

fn blowup(cfg: &ExperimentConfig, base: &Params) -> Result<Outcome, RunError> {
    let plan = &cfg.blowup;
    let spec = build_spec(cfg, base, &plan.levels, plan.candidates, plan.selection_samples)?;
    let mut rows = Vec::new();
    for l in &spec.levels {
        let probe = ProbePlan { samples: plan.samples, h: l.params.delta_eps, seed: probe_seed(level_master(cfg.seed, l.index)) };
        let r = functional_parallel(&l.schedule(), &probe, plan.z);
        rows.push(CurveRow::new(l.index, l.params.n_blocks, &r, l.params.eps));
    }
    // no-motion control on the first level
    let first = &spec.levels[0];
    let still = first.schedule().with_controls(Controls { mixing: false, stretch: false });
    let probe = ProbePlan { samples: plan.samples, h: first.params.delta_eps, seed: probe_seed(cfg.seed) };
    let control = functional_parallel(&still, &probe, plan.z);
    let mut s = String::new();
    writeln!(s, "blow-up sequence at h = delta_eps_i").unwrap();
    curve_summary(&mut s, &rows);
    writeln!(s, "no-motion control: {:.6} [{:.6}, {:.6}], exact 2/(2+gamma) = {:.6}", control.gamma_moment.estimate, control.gamma_moment.low, control.gamma_moment.high, disk_moment(base.gamma)).unwrap();
    writeln!(s, "H1 budget sum over levels: {:.6}", h1_budget(&plan.levels, base.alpha, base.beta)).unwrap();
    let metrics = json!({
        "levels": spec.summaries(),
        "strictly_separated": strictly_separated(&rows),
        "control": control.gamma_moment,
        "control_exact": disk_moment(base.gamma),
    });
    Ok(Outcome { csv: csv_bytes(&rows)?, summary: s, metrics, extra: vec![] })
}

fn transport(cfg: &ExperimentConfig, base: &Params) -> Result<Outcome, RunError> {
    let plan = &cfg.transport;
    let spec = build_spec(cfg, base, &plan.levels, 1, 0)?;
    let rho0 = ConeBump::spanning(&spec);
    let t = base.time_horizon;
    let mut rows = Vec::new();
    let mut balance = Vec::new();
    for (k, l) in spec.levels.iter().enumerate() {
        let probe = ProbePlan { samples: plan.samples, h: l.params.delta_eps, seed: probe_seed(level_master(cfg.seed, l.index)) };
        let sched = l.schedule();
        let acc = chunked_reduce(plan.samples, analysis::CHUNK, FunctionalAcc::default(), |a, b| analysis::density_chunk(a, b, &sched, &rho0, &probe), |t, c| t.merge(c));
        rows.push(CurveRow::new(l.index, l.params.n_blocks, &FunctionalReport::from_acc(&acc, probe.h, l.params.eps, plan.z), l.params.eps));
        let key = CounterRng::new(cfg.seed).word(Domain::Area, l.index as u64, 1);
        let m = chunked_reduce(plan.l2_samples, analysis::CHUNK, MeanAcc::default(), |a, b| {
            let mut m = MeanAcc::default();
            for j in a..b {
                m.push(analysis::l2_balance_sample(j, &spec, k, &rho0, t, key));
            }
            m
        }, |t, c| t.merge(c));
        balance.push((l.index, m.interval(plan.z)));
    }
    let half = rho0.radius;
    let key = CounterRng::new(cfg.seed).word(Domain::Area, u64::MAX >> 8, 2);
    let whole = chunked_reduce(plan.l2_samples, analysis::CHUNK, MeanAcc::default(), |a, b| {
        let mut m = MeanAcc::default();
        for j in a..b {
            m.push(analysis::l2_sample(j, &spec, &rho0, rho0.center, half, t, key));
        }
        m
    }, |t, c| t.merge(c));
    let whole = whole.interval(plan.z);
    let exact = rho0.l2_squared();
    let mut s = String::new();
    writeln!(s, "transported cone bump (center {:?}, radius {:.4}), t = {t}", rho0.center, rho0.radius).unwrap();
    writeln!(s, "L2^2 at t: {:.6} [{:.6}, {:.6}], exact at t = 0: {:.6}", whole.estimate, whole.low, whole.high, exact).unwrap();
    for (i, b) in &balance {
        writeln!(s, "level {i}: support integral of rho(t)^2 - rho0^2 = {:.3e} [{:.3e}, {:.3e}]", b.estimate, b.low, b.high).unwrap();
    }
    writeln!(s, "density functional at h = delta_eps_i").unwrap();
    curve_summary(&mut s, &rows);
    let metrics = json!({
        "l2_whole": whole,
        "l2_exact": exact,
        "l2_balance": balance.iter().map(|(i, b)| json!({"level": i, "interval": b})).collect::<Vec<_>>(),
        "strictly_separated": strictly_separated(&rows),
    });
    Ok(Outcome { csv: csv_bytes(&rows)?, summary: s, metrics, extra: vec![] })
}
