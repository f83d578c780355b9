//! Construction parameters shared by every module.

use alloc::format;
use core::f64::consts::TAU;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow;

/// How the initial pair-separation budget `δ_ε` is derived.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SeparationBudget {
    /// `δ_ε = ε^{1+β} · C^{−N}`.
    #[default]
    Strict,
    /// `δ_ε = ε · C^{−N}`, the weaker requirement that drops the `ε^β` factor.
    Relaxed,
}

/// Validated parameter set. Build one with [`ParamsBuilder`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Number of inner-disk rotations per full turn, `2π/τ`.
    pub rotations_per_turn: u32,
    /// Inner-disk rotation angle of one stretch step.
    pub tau: f64,
    /// Stretch amplitude, `4τ/3`.
    pub tau_prime: f64,
    pub eta: f64,
    pub ell: f64,
    pub c_gamma: f64,
    pub eps: f64,
    pub n_blocks: usize,
    /// Per-block Lipschitz bound of the stretch map, `(1 + τ′)²`.
    pub lip_const: f64,
    pub delta_eps: f64,
    /// Final time the schedule must fit in: `3 N ε^α ≤ time_horizon`.
    pub time_horizon: f64,
    pub budget: SeparationBudget,
    /// Order `p² + pq + q²` of the lattice used by the ring covering.
    pub lattice_order: u32,
    pub cap_stretch: bool,
}

impl Params {
    pub fn builder() -> ParamsBuilder {
        ParamsBuilder::default()
    }

    /// Relative ramp width `ε^β` of the ball and annulus profiles.
    #[inline]
    pub fn ramp(&self) -> f64 {
        self.eps.powf(self.beta)
    }

    /// Length of one schedule sub-interval, `ε^α`.
    #[inline]
    pub fn step_duration(&self) -> f64 {
        self.eps.powf(self.alpha)
    }

    /// Field amplitude `ε^{−α}`.
    #[inline]
    pub fn amplitude(&self) -> f64 {
        self.eps.powf(-self.alpha)
    }

    /// Largest separation for which mixing acts as an isometry, `ε^{1+β}`.
    #[inline]
    pub fn separation_cap(&self) -> f64 {
        self.eps.powf(1.0 + self.beta)
    }

    /// `t_k = k ε^α`.
    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step_duration()
    }

    pub fn final_time(&self) -> f64 {
        self.time(3 * self.n_blocks)
    }

    /// Same parameters at another scale, with the block count re-derived
    /// unless `n_blocks` is given.
    pub fn at_scale(&self, eps: f64, n_blocks: Option<usize>) -> Result<Params> {
        ParamsBuilder::from(self).eps(eps).maybe_n_blocks(n_blocks).ell(self.ell).build()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidParams(msg));
        if !(self.alpha > 0.0 && self.alpha < self.beta && self.beta < 1.0) {
            return bad(format!("need 0 < alpha < beta < 1, got alpha={} beta={}", self.alpha, self.beta));
        }
        if 2.0 - 2.0 * self.alpha - self.beta <= 0.0 {
            return bad(format!("need 2 - 2 alpha - beta > 0, got {}", 2.0 - 2.0 * self.alpha - self.beta));
        }
        if !(self.gamma > 0.0) {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        if self.rotations_per_turn == 0 {
            return bad("rotations_per_turn (2 pi / tau) must be a positive integer".into());
        }
        let tau = TAU / self.rotations_per_turn as f64;
        if (self.tau - tau).abs() > 1e-12 * tau {
            return bad(format!("tau={} is not 2 pi / {}", self.tau, self.rotations_per_turn));
        }
        if (self.tau - 0.75 * self.tau_prime).abs() > 1e-12 * self.tau {
            return bad(format!("need tau = 3 tau'/4, got tau={} tau'={}", self.tau, self.tau_prime));
        }
        if self.cap_stretch && self.tau_prime > 0.25 {
            return bad(format!(
                "tau' = {} exceeds 1/4 (raise rotations_per_turn to at least 34 or disable cap_stretch)",
                self.tau_prime
            ));
        }
        if !(self.eta > 0.0 && self.eta < 0.5) {
            return bad(format!("need 0 < eta < 1/2, got {}", self.eta));
        }
        if !(self.ell > 0.0 && self.ell < 1.0) {
            return bad(format!("need 0 < l < 1, got {}", self.ell));
        }
        if !(self.c_gamma > 0.0) {
            return bad(format!("c_gamma must be positive, got {}", self.c_gamma));
        }
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return bad(format!("need 0 < eps <= 1, got {}", self.eps));
        }
        if self.n_blocks == 0 {
            return bad(format!(
                "n_blocks is zero: 3 eps^alpha = {} exceeds time_horizon = {}; raise time_horizon or set n_blocks",
                3.0 * self.step_duration(),
                self.time_horizon
            ));
        }
        if self.final_time() > self.time_horizon * (1.0 + 1e-12) {
            return bad(format!(
                "3 N eps^alpha = {} exceeds time_horizon = {}",
                self.final_time(),
                self.time_horizon
            ));
        }
        let lip = (1.0 + self.tau_prime).powi(2);
        if (self.lip_const - lip).abs() > 1e-12 * lip {
            return bad(format!("lip_const must be (1 + tau')^2 = {lip}, got {}", self.lip_const));
        }
        let delta = budget(self.budget, self.eps, self.beta, self.lip_const, self.n_blocks);
        if (self.delta_eps - delta).abs() > 1e-9 * delta {
            return bad(format!("delta_eps must be {delta}, got {}", self.delta_eps));
        }
        if !(3..=10_000).contains(&self.lattice_order) {
            return bad(format!("lattice_order must lie in 3..=10000, got {}", self.lattice_order));
        }
        Ok(())
    }
}

fn budget(kind: SeparationBudget, eps: f64, beta: f64, lip: f64, n: usize) -> f64 {
    let decay = lip.powf(-(n as f64));
    match kind {
        SeparationBudget::Strict => eps.powf(1.0 + beta) * decay,
        SeparationBudget::Relaxed => eps * decay,
    }
}

/// Builder with the defaults `α = 1/4`, `β = 1/2`, `γ = 1/2`, `2π/τ = 34`
/// (so `τ′ ≤ 1/4`), `η = 0.2`, `ε = 2^{-5}` and `N = ⌊T / (3ε^α)⌋`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsBuilder {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub rotations_per_turn: u32,
    pub eta: f64,
    pub ell: Option<f64>,
    pub c_gamma: Option<f64>,
    pub eps: f64,
    pub n_blocks: Option<usize>,
    pub time_horizon: f64,
    pub budget: SeparationBudget,
    pub lattice_order: u32,
    pub cap_stretch: bool,
}

impl Default for ParamsBuilder {
    fn default() -> Self {
        ParamsBuilder {
            alpha: 0.25,
            beta: 0.5,
            gamma: 0.5,
            rotations_per_turn: 34,
            eta: 0.2,
            ell: None,
            c_gamma: None,
            eps: 1.0 / 32.0,
            n_blocks: None,
            time_horizon: 1.0,
            budget: SeparationBudget::Strict,
            lattice_order: 13,
            cap_stretch: true,
        }
    }
}

impl From<&Params> for ParamsBuilder {
    fn from(p: &Params) -> Self {
        ParamsBuilder {
            alpha: p.alpha,
            beta: p.beta,
            gamma: p.gamma,
            rotations_per_turn: p.rotations_per_turn,
            eta: p.eta,
            ell: Some(p.ell),
            c_gamma: Some(p.c_gamma),
            eps: p.eps,
            n_blocks: Some(p.n_blocks),
            time_horizon: p.time_horizon,
            budget: p.budget,
            lattice_order: p.lattice_order,
            cap_stretch: p.cap_stretch,
        }
    }
}

macro_rules! setter {
    ($name:ident, $ty:ty) => {
        pub fn $name(mut self, v: $ty) -> Self {
            self.$name = v;
            self
        }
    };
}

impl ParamsBuilder {
    setter!(alpha, f64);
    setter!(beta, f64);
    setter!(gamma, f64);
    setter!(rotations_per_turn, u32);
    setter!(eta, f64);
    setter!(eps, f64);
    setter!(time_horizon, f64);
    setter!(budget, SeparationBudget);
    setter!(lattice_order, u32);
    setter!(cap_stretch, bool);

    pub fn ell(mut self, l: f64) -> Self {
        self.ell = Some(l);
        self
    }

    pub fn c_gamma(mut self, c: f64) -> Self {
        self.c_gamma = Some(c);
        self
    }

    pub fn n_blocks(mut self, n: usize) -> Self {
        self.n_blocks = Some(n);
        self
    }

    fn maybe_n_blocks(mut self, n: Option<usize>) -> Self {
        self.n_blocks = n;
        self
    }

    pub fn build(&self) -> Result<Params> {
        if self.rotations_per_turn == 0 {
            return Err(Error::InvalidParams("rotations_per_turn must be positive".into()));
        }
        if !(self.eps > 0.0) || !(self.alpha > 0.0) {
            return Err(Error::InvalidParams(format!(
                "eps and alpha must be positive, got eps={} alpha={}",
                self.eps, self.alpha
            )));
        }
        let tau = TAU / self.rotations_per_turn as f64;
        let tau_prime = 4.0 * tau / 3.0;
        let ell = match self.ell {
            Some(l) => l,
            None => flow::calibrate_ell(self.gamma, tau_prime)?.ell,
        };
        let c_gamma = self
            .c_gamma
            .unwrap_or_else(|| flow::growth_lower_bound(self.gamma, tau_prime, ell) - 1.0);
        let n_blocks = self
            .n_blocks
            .unwrap_or_else(|| (self.time_horizon / (3.0 * self.eps.powf(self.alpha)) + 1e-12).floor() as usize);
        let lip_const = (1.0 + tau_prime).powi(2);
        let p = Params {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            rotations_per_turn: self.rotations_per_turn,
            tau,
            tau_prime,
            eta: self.eta,
            ell,
            c_gamma,
            eps: self.eps,
            n_blocks,
            lip_const,
            delta_eps: budget(self.budget, self.eps, self.beta, lip_const, n_blocks),
            time_horizon: self.time_horizon,
            budget: self.budget,
            lattice_order: self.lattice_order,
            cap_stretch: self.cap_stretch,
        };
        p.validate()?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk() -> ParamsBuilder {
        Params::builder().time_horizon(40.0)
    }

    #[test]
    fn defaults_satisfy_invariants() {
        let p = desk().build().unwrap();
        assert_eq!(p.alpha, 0.25);
        assert_eq!(p.beta, 0.5);
        assert!((p.tau - 0.75 * p.tau_prime).abs() < 1e-15);
        assert!(p.tau_prime <= 0.25);
        assert!(p.ell > 0.0 && p.ell < 1.0);
        let expect = p.eps.powf(1.5) * p.lip_const.powf(-(p.n_blocks as f64));
        assert!((p.delta_eps - expect).abs() <= 1e-15 * expect);
        assert!(3.0 * p.n_blocks as f64 * p.eps.powf(p.alpha) <= p.time_horizon);
    }

    #[test]
    fn unit_horizon_at_desk_scale_has_no_blocks() {
        // ε = 2^-5 gives 3 ε^α ≈ 1.26 > 1
        let err = Params::builder().build().unwrap_err();
        assert!(matches!(err, Error::InvalidParams(ref m) if m.contains("n_blocks is zero")));
    }

    #[test]
    fn rejects_alpha_not_below_beta() {
        let err = desk().alpha(0.6).build().unwrap_err();
        assert!(matches!(err, Error::InvalidParams(ref m) if m.contains("alpha < beta")));
    }

    #[test]
    fn rejects_non_integrable_exponents() {
        let err = desk().alpha(0.6).beta(0.9).build().unwrap_err();
        assert!(matches!(err, Error::InvalidParams(ref m) if m.contains("2 - 2 alpha - beta")));
    }

    #[test]
    fn stretch_cap_is_enforced_by_default() {
        assert!(desk().rotations_per_turn(16).build().is_err());
        let p = desk().rotations_per_turn(16).cap_stretch(false).build().unwrap();
        assert!((p.tau - TAU / 16.0).abs() < 1e-15);
    }

    #[test]
    fn explicit_blocks_must_fit_horizon() {
        assert!(Params::builder().n_blocks(4).build().is_err());
        let p = Params::builder().n_blocks(4).time_horizon(20.0).build().unwrap();
        assert_eq!(p.n_blocks, 4);
    }

    #[test]
    fn relaxed_budget_drops_eps_beta() {
        let s = desk().build().unwrap();
        let r = desk().budget(SeparationBudget::Relaxed).build().unwrap();
        assert!((r.delta_eps / s.delta_eps - s.eps.powf(-s.beta)).abs() < 1e-9);
    }

    #[test]
    fn rescaling_keeps_shape_parameters() {
        let p = desk().build().unwrap();
        let q = p.at_scale(1.0 / 64.0, None).unwrap();
        assert_eq!(q.ell, p.ell);
        assert_eq!(q.rotations_per_turn, p.rotations_per_turn);
        assert!(q.n_blocks >= p.n_blocks);
    }
}
