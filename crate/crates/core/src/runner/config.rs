//! Run configuration: a TOML file whose keys are all optional, validated in
//! full before any computation starts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coset::SiteSet;
use crate::entropy::DEFAULT_SITE_QUERY_CAP;
use crate::group::GroupContext;
use crate::lift::{FiniteIndexSubgroup, DEFAULT_TAU_CAP};
use crate::measure::{Budget, FiniteMeasure};
use crate::percolation::{IrsSpec, PercolationParams};
use crate::presets::measure_preset;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// `lamplighter:L=…,d=…` or `free:rank=…`.
    pub group: String,
    /// A preset name understood by [`measure_preset`].
    pub measure: String,
    /// Horizon for realize, lift-check and abramov diagnostics.
    pub n: usize,
    /// Largest horizon for entropy-series and coset-check.
    pub n_max: usize,
    /// Site set for entropy-series; the plain walk when absent.
    pub sites: Option<String>,
    /// IRS for lift-check.
    pub irs: Option<String>,
    pub p_grid: Vec<f64>,
    pub m_grid: Vec<u32>,
    pub k_samples: usize,
    pub site_query_cap: u64,
    pub percolation_dims: Vec<usize>,
    pub percolation_samples: u64,
    pub mixed_samples: u64,
    pub window_radius: u64,
    pub subgroup: Option<String>,
    pub hitting_samples: usize,
    pub tau_cap: usize,
    /// Horizon of the soft hitting-measure entropy diagnostic; 0 disables it.
    pub abramov_n: usize,
    pub abramov_samples: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            group: "lamplighter:L=2,d=3".into(),
            measure: "sws".into(),
            n: 2,
            n_max: 6,
            sites: None,
            irs: None,
            p_grid: vec![0.25, 0.5, 0.75],
            m_grid: vec![1, 2, 4, 8],
            k_samples: 200,
            site_query_cap: DEFAULT_SITE_QUERY_CAP,
            percolation_dims: vec![1, 3],
            percolation_samples: 100_000,
            mixed_samples: 1000,
            window_radius: 2,
            subgroup: None,
            hitting_samples: 100_000,
            tau_cap: DEFAULT_TAU_CAP,
            abramov_n: 0,
            abramov_samples: 100_000,
            seed: 0,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        Self::from_toml(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// Checks every field and builds the objects the commands need.
    pub fn resolve(&self) -> Result<Resolved, String> {
        let ctx: GroupContext = self.group.parse().map_err(|e| format!("group: {e}"))?;
        let mu = measure_preset(&self.measure, &ctx).map_err(|e| format!("measure: {e}"))?;
        let dim = match &ctx {
            GroupContext::Lamplighter(l) => l.dim(),
            GroupContext::Free(_) => 3,
        };
        let sites = self
            .sites
            .as_deref()
            .map(|s| match IrsSpec::parse(&format!("pointmass:{s}"), dim) {
                Ok(IrsSpec::PointMass(set)) => Ok(set),
                _ => Err(format!("sites: cannot parse `{s}`")),
            })
            .transpose()?;
        let irs = self
            .irs
            .as_deref()
            .map(|s| IrsSpec::parse(s, dim).map_err(|e| format!("irs: {e}")))
            .transpose()?;
        let subgroup_name = self.subgroup.clone().unwrap_or_else(|| {
            match ctx {
                GroupContext::Lamplighter(_) => "even-first-coord",
                GroupContext::Free(_) => "whole",
            }
            .to_string()
        });
        let subgroup = FiniteIndexSubgroup::preset(&subgroup_name, &ctx)
            .map_err(|e| format!("subgroup: {e}"))?;
        if self.p_grid.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err("p_grid: every p must lie in [0, 1]".into());
        }
        if self.m_grid.contains(&0) {
            return Err("m_grid: every m must be at least 1".into());
        }
        for &p in self.p_grid.iter().filter(|&&p| p > 0.0 && p < 1.0) {
            for &m in &self.m_grid {
                PercolationParams::new(p, m, dim).map_err(|e| format!("p_grid × m_grid: {e}"))?;
            }
        }
        if self.percolation_dims.contains(&0) {
            return Err("percolation_dims: dimensions must be at least 1".into());
        }
        let positive = [
            ("n", self.n as u64),
            ("k_samples", self.k_samples as u64),
            ("percolation_samples", self.percolation_samples),
            ("mixed_samples", self.mixed_samples),
            ("hitting_samples", self.hitting_samples as u64),
            ("tau_cap", self.tau_cap as u64),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(format!("{name} must be positive"));
        }
        if self.k_samples < 2 {
            return Err("k_samples must be at least 2".into());
        }
        if self.hitting_samples < 2 {
            return Err("hitting_samples must be at least 2".into());
        }
        if self.abramov_n > 0 && self.abramov_samples < 10_000 {
            return Err("abramov_samples must be at least 10000".into());
        }
        let budget = Budget::from_env()?;
        Ok(Resolved {
            ctx,
            mu,
            dim,
            sites,
            irs,
            subgroup,
            budget,
        })
    }
}

/// Validated objects derived from a [`RunConfig`].
#[derive(Clone, Debug)]
pub struct Resolved {
    pub ctx: GroupContext,
    pub mu: FiniteMeasure,
    /// Dimension of the lamplighter in which site sets live.
    pub dim: usize,
    pub sites: Option<SiteSet>,
    pub irs: Option<IrsSpec>,
    pub subgroup: FiniteIndexSubgroup,
    pub budget: Budget,
}
