//! Run configuration: a single TOML file with `[system]`, `[polarization]`,
//! `[bb]`, `[ga]`, `[relaxation]`, and `[output]` sections. Unknown keys are
//! rejected so typos fail loudly instead of silently taking defaults.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::bb::BBSequence;
use crate::error::{Error, Result};
use crate::ga::GAConfig;
use crate::relax::RelaxationParams;
use crate::spin::{Coupling, CouplingForm, SpeciesChannel, SpinSite, SpinSystem};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSection,
    /// Relative polarization per species label (e.g. carbons 1, protons ~4).
    pub polarization: BTreeMap<String, f64>,
    pub bb: BBSection,
    #[serde(default)]
    pub ga: GASection,
    pub relaxation: Option<RelaxationSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub name: Option<String>,
    pub channels: Vec<ChannelEntry>,
    pub sites: Vec<SiteEntry>,
    #[serde(default)]
    pub couplings: Vec<CouplingEntry>,
    /// Site indices (after `count` expansion) of the singlet pair.
    pub singlet_pair: [usize; 2],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelEntry {
    pub label: String,
    pub relative_gamma: f64,
    pub rf_amplitude_hz: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteEntry {
    /// Channel label this site belongs to.
    pub channel: String,
    #[serde(default)]
    pub offset_hz: f64,
    /// Number of identical sites this entry expands to.
    #[serde(default = "one")]
    pub count: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingEntry {
    pub site_a: usize,
    pub site_b: usize,
    pub j_hz: f64,
    pub form: CouplingFormEntry,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CouplingFormEntry {
    Weak,
    Isotropic,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BBSection {
    /// Segment duration in seconds.
    pub dt_s: f64,
    pub n_segments: usize,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct GASection {
    pub population_size: Option<usize>,
    pub generations: Option<usize>,
    pub tournament_size: Option<usize>,
    pub crossover_rate: Option<f64>,
    pub mutation_rate: Option<f64>,
    pub phase_resolution_deg: Option<f64>,
    pub elitism_count: Option<usize>,
    pub seed: Option<u64>,
    pub target_q: Option<f64>,
    pub stall_generations: Option<usize>,
    pub stall_epsilon: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelaxationSection {
    /// T1 in seconds per species label.
    pub t1_s: BTreeMap<String, f64>,
    pub t_singlet_s: f64,
    pub tau_ac_s: f64,
    pub tau_hb_s: f64,
    /// Analytic transfer model eps_S' = alpha * eps_anc + beta * eps_S, used
    /// by the HBAC command when no pulse table is supplied. `alpha` is the
    /// calibrated ancilla-to-singlet conversion of the transfer pulse; `beta`
    /// (default 0) is the surviving fraction of prior singlet order.
    pub transfer_alpha: Option<f64>,
    pub transfer_beta: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: Option<String>,
    /// Trajectory sampling stride in segments.
    pub stride: Option<usize>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim().is_empty() {
            return Err(Error::Config("empty configuration file".into()));
        }
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn build_system(&self) -> Result<SpinSystem> {
        let channels: Vec<SpeciesChannel> = self
            .system
            .channels
            .iter()
            .map(|c| SpeciesChannel {
                label: c.label.clone(),
                relative_gamma: c.relative_gamma,
                rf_amplitude_hz: c.rf_amplitude_hz,
            })
            .collect();
        let channel_index = |label: &str| -> Result<usize> {
            channels
                .iter()
                .position(|c| c.label == label)
                .ok_or_else(|| Error::Config(format!("site references unknown channel '{label}'")))
        };
        let mut sites = Vec::new();
        for entry in &self.system.sites {
            if entry.count == 0 {
                return Err(Error::Config("site count must be at least 1".into()));
            }
            let ch = channel_index(&entry.channel)?;
            for _ in 0..entry.count {
                sites.push(SpinSite {
                    index: sites.len(),
                    channel: ch,
                    offset_hz: entry.offset_hz,
                });
            }
        }
        let couplings: Vec<Coupling> = self
            .system
            .couplings
            .iter()
            .map(|c| Coupling {
                site_a: c.site_a,
                site_b: c.site_b,
                j_hz: c.j_hz,
                form: match c.form {
                    CouplingFormEntry::Weak => CouplingForm::Weak,
                    CouplingFormEntry::Isotropic => CouplingForm::Isotropic,
                },
            })
            .collect();
        let pair = (self.system.singlet_pair[0], self.system.singlet_pair[1]);
        SpinSystem::new(channels, sites, couplings, pair)
    }

    pub fn polarizations(&self) -> Vec<(String, f64)> {
        self.polarization
            .iter()
            .map(|(k, v)| (k.clone(), *v))
            .collect()
    }

    /// GA hyperparameters; `seed_override` (the CLI `--seed`) wins over the
    /// config-file seed, which wins over the default.
    pub fn ga_config(&self, seed_override: Option<u64>) -> Result<GAConfig> {
        let d = GAConfig::default();
        let g = &self.ga;
        let cfg = GAConfig {
            population_size: g.population_size.unwrap_or(d.population_size),
            generations: g.generations.unwrap_or(d.generations),
            tournament_size: g.tournament_size.unwrap_or(d.tournament_size),
            crossover_rate: g.crossover_rate.unwrap_or(d.crossover_rate),
            mutation_rate: g.mutation_rate.unwrap_or(d.mutation_rate),
            phase_resolution: g
                .phase_resolution_deg
                .map(|deg| deg.to_radians())
                .unwrap_or(d.phase_resolution),
            elitism_count: g.elitism_count.unwrap_or(d.elitism_count),
            master_seed: seed_override.or(g.seed).unwrap_or(d.master_seed),
            target_q: g.target_q.or(d.target_q),
            stall_generations: g.stall_generations.unwrap_or(d.stall_generations),
            stall_epsilon: g.stall_epsilon.unwrap_or(d.stall_epsilon),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn relaxation_params(&self) -> Result<RelaxationParams> {
        let section = self.relaxation.as_ref().ok_or_else(|| {
            Error::Config("this command requires a [relaxation] section".into())
        })?;
        let params = RelaxationParams {
            t1_s: section
                .t1_s
                .iter()
                .map(|(k, v)| (k.clone(), *v))
                .collect(),
            t_singlet_s: section.t_singlet_s,
            tau_ac_s: section.tau_ac_s,
            tau_hb_s: section.tau_hb_s,
        };
        params.validate()?;
        Ok(params)
    }

    /// All-silent chromosome template matching the `[bb]` section.
    pub fn template(&self) -> Result<BBSequence> {
        if self.bb.dt_s <= 0.0 {
            return Err(Error::Config("bb.dt_s must be positive".into()));
        }
        if self.bb.n_segments == 0 {
            return Err(Error::Config("bb.n_segments must be at least 1".into()));
        }
        BBSequence::silent(self.bb.dt_s, self.system.channels.len(), self.bb.n_segments)
    }

    /// Bytes needed for the dense propagator cache: delay + adjoint plus a
    /// bang pair per non-empty channel subset, each dim^2 complex doubles.
    pub fn memory_estimate_bytes(&self) -> Result<u64> {
        let sys = self.build_system()?;
        let d = sys.dim() as u64;
        let nmat = 2 + 2 * ((1u64 << sys.channels().len()) - 1);
        Ok(nmat * d * d * 16)
    }
}
