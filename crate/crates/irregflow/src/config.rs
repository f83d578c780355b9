//! The JSON experiment configuration.
//!
//! Every section has defaults, so `{}` is a complete config. Unknown keys
//! are rejected at every level.

use std::path::{Path, PathBuf};

use irregflow_core::stochastic::StartPlan;
use irregflow_core::stats::Z95;
use irregflow_core::{Params, ParamsBuilder};
use serde::{Deserialize, Serialize};

use crate::RunError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Norms,
    Covering,
    StretchMoment,
    ChainGrowth,
    Select,
    Blowup,
    Transport,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Norms => "norms",
            Experiment::Covering => "covering",
            Experiment::StretchMoment => "stretch-moment",
            Experiment::ChainGrowth => "chain-growth",
            Experiment::Select => "select",
            Experiment::Blowup => "blowup",
            Experiment::Transport => "transport",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Optional; must agree with the command line when given.
    pub experiment: Option<Experiment>,
    /// Missing keys fall back to [`default_params`], not to the library builder.
    #[serde(deserialize_with = "params_over_defaults")]
    pub params: ParamsBuilder,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub norms: NormsPlan,
    pub covering: CoveringPlan,
    pub stretch_moment: StretchMomentPlan,
    pub chain_growth: GrowthPlan,
    pub select: SelectPlan,
    pub blowup: BlowupPlan,
    pub transport: TransportPlan,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: None,
            params: default_params(),
            seed: 1,
            output: None,
            norms: NormsPlan::default(),
            covering: CoveringPlan::default(),
            stretch_moment: StretchMomentPlan::default(),
            chain_growth: GrowthPlan::default(),
            select: SelectPlan::default(),
            blowup: BlowupPlan::default(),
            transport: TransportPlan::default(),
        }
    }
}

/// Library defaults with a time horizon long enough for 10 blocks at `ε = 2^{-5}`.
pub fn default_params() -> ParamsBuilder {
    ParamsBuilder::default().time_horizon(13.0)
}

fn params_over_defaults<'de, D: serde::Deserializer<'de>>(d: D) -> Result<ParamsBuilder, D::Error> {
    use serde::de::Error;
    let given = serde_json::Value::deserialize(d)?;
    let serde_json::Value::Object(given) = given else {
        return Err(D::Error::custom("params must be an object"));
    };
    let mut merged = serde_json::to_value(default_params()).map_err(D::Error::custom)?;
    let obj = merged.as_object_mut().expect("builder serializes to an object");
    for (k, v) in given {
        obj.insert(k, v);
    }
    serde_json::from_value(merged).map_err(D::Error::custom)
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, RunError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::Io { path: path.to_path_buf(), source: e })?;
        Self::from_json(&text)
    }

    /// Base parameters, validated.
    pub fn base_params(&self) -> Result<Params, RunError> {
        Ok(self.params.build()?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormsPlan {
    /// Scales `ε = 2^{-i}`.
    pub levels: Vec<u32>,
    /// Quadrature cells per unit of normalized radius.
    pub resolution: usize,
    /// Ball radius in units of `ε`.
    pub ball_radius: f64,
}

impl Default for NormsPlan {
    fn default() -> Self {
        NormsPlan { levels: vec![2, 3, 4, 5, 6], resolution: 256, ball_radius: 0.1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoveringPlan {
    pub levels: Vec<u32>,
    /// Circles checked for arc coverage.
    pub radii: usize,
    /// Hit-or-miss samples for the good-region fraction.
    pub area_samples: u64,
    pub z: f64,
}

impl Default for CoveringPlan {
    fn default() -> Self {
        CoveringPlan { levels: vec![3, 4, 5, 6], radii: 2000, area_samples: 1_000_000, z: Z95 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StretchMomentPlan {
    pub n_rho: usize,
    pub n_angle: usize,
    /// Overrides the `τ′` implied by the parameters.
    pub tau_prime: Option<f64>,
    pub circle_ells: Vec<f64>,
    pub circle_nodes: usize,
}

impl Default for StretchMomentPlan {
    fn default() -> Self {
        StretchMomentPlan { n_rho: 100, n_angle: 100, tau_prime: None, circle_ells: vec![0.0, 0.25, 0.5, 0.9], circle_nodes: 4096 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrowthPlan {
    pub ensemble: u64,
    pub z: f64,
    pub start: StartPlan,
    pub mixing: bool,
    pub stretch: bool,
    /// Members whose per-block records go to `trajectories.csv`; 0 disables the dump.
    pub trajectories: u64,
}

impl Default for GrowthPlan {
    fn default() -> Self {
        GrowthPlan { ensemble: 100_000, z: Z95, start: StartPlan::default(), mixing: true, stretch: true, trajectories: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectPlan {
    pub candidates: usize,
    /// Probes per candidate at `h = δ_ε`.
    pub samples: u64,
    pub z: f64,
}

impl Default for SelectPlan {
    fn default() -> Self {
        SelectPlan { candidates: 16, samples: 4096, z: Z95 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlowupPlan {
    pub levels: Vec<u32>,
    pub samples: u64,
    /// Candidates scored per level; 1 takes the first candidate seed.
    pub candidates: usize,
    pub selection_samples: u64,
    pub z: f64,
}

impl Default for BlowupPlan {
    fn default() -> Self {
        BlowupPlan { levels: vec![2, 3, 4, 5], samples: 20_000, candidates: 1, selection_samples: 2048, z: Z95 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportPlan {
    pub levels: Vec<u32>,
    pub samples: u64,
    /// Samples per level support for the L² balance.
    pub l2_samples: u64,
    pub z: f64,
}

impl Default for TransportPlan {
    fn default() -> Self {
        TransportPlan { levels: vec![2, 3, 4, 5], samples: 20_000, l2_samples: 100_000, z: Z95 }
    }
}
