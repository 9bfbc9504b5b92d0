//! Feeder scenario description, scenario files, and the default F1/F2/F3 catalog.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::sdg::SdgProcess;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelayRole {
    Primary,
    Backup,
    Sympathetic,
    BlindedPrimary,
    Unaffected,
}

impl RelayRole {
    /// Default ratio of post-fault to pre-fault fundamental envelope.
    pub fn default_multiplier(self) -> Option<f64> {
        match self {
            RelayRole::Primary => Some(6.0),
            RelayRole::Backup => Some(3.0),
            RelayRole::Sympathetic => Some(1.6),
            RelayRole::BlindedPrimary => Some(1.8),
            RelayRole::Unaffected => None,
        }
    }

    /// Default transient time constant (seconds). Current fed by the
    /// distributed generator follows its inverter control loop, which is an
    /// order of magnitude slower than a short-circuit transient.
    pub fn default_transient_tau(self) -> f64 {
        match self {
            RelayRole::Sympathetic => 0.05,
            _ => DEFAULT_TRANSIENT_TAU,
        }
    }

    /// Default 3rd-harmonic share of the fault envelope. Inverter feed adds none.
    pub fn default_third_harmonic_share(self) -> f64 {
        match self {
            RelayRole::Sympathetic | RelayRole::Unaffected => 0.0,
            _ => 0.10,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RelayRole::Primary => "primary",
            RelayRole::Backup => "backup",
            RelayRole::Sympathetic => "sympathetic",
            RelayRole::BlindedPrimary => "blinded_primary",
            RelayRole::Unaffected => "unaffected",
        }
    }
}

pub const DEFAULT_TRANSIENT_TAU: f64 = 0.005;
pub const DEFAULT_SENSOR_NOISE_FRAC: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicInjection {
    /// Harmonic index k (frequency k * f0).
    pub order: u32,
    /// Peak amplitude in amperes.
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    /// Fault inception time in seconds.
    pub onset: f64,
    pub envelope_multiplier: f64,
    pub transient_tau: f64,
    #[serde(default)]
    pub harmonic_injection: Vec<HarmonicInjection>,
}

impl FaultSpec {
    pub fn validate(&self, duration: f64) -> Result<()> {
        if !(self.onset >= 0.0 && self.onset < duration) {
            return Err(Error::Config(format!(
                "fault onset {} outside scenario duration {duration}",
                self.onset
            )));
        }
        if !(self.envelope_multiplier > 0.0 && self.envelope_multiplier.is_finite()) {
            return Err(Error::Config(format!(
                "envelope multiplier must be finite and > 0, got {}",
                self.envelope_multiplier
            )));
        }
        if !(self.transient_tau > 0.0 && self.transient_tau.is_finite()) {
            return Err(Error::Config(format!(
                "transient tau must be finite and > 0, got {}",
                self.transient_tau
            )));
        }
        let mut seen = BTreeSet::new();
        for h in &self.harmonic_injection {
            if h.order == 0 || !seen.insert(h.order) {
                return Err(Error::Config(format!(
                    "harmonic order {} is zero or repeated",
                    h.order
                )));
            }
            if !h.amplitude.is_finite() {
                return Err(Error::Config("harmonic amplitude must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn highest_harmonic(&self) -> u32 {
        self.harmonic_injection.iter().map(|h| h.order).max().unwrap_or(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaySpec {
    pub name: String,
    pub role: RelayRole,
    /// Fundamental envelope (amperes peak) without distributed generation.
    pub base_envelope: f64,
    /// Weight of the SDG current seen at this relay.
    pub sdg_coupling: f64,
    /// Minimum fault current in the relay's zone (amperes), used by the adaptive relay.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub i_fault_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<FaultSpec>,
}

impl RelaySpec {
    pub fn i_fault_min(&self) -> f64 {
        self.i_fault_min.unwrap_or(2.0 * self.base_envelope)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeederScenario {
    #[serde(default)]
    pub name: String,
    pub relays: Vec<RelaySpec>,
    pub duration: f64,
    pub sample_rate: f64,
    pub fundamental_freq: f64,
    #[serde(default)]
    pub seed: u64,
    pub sdg: SdgProcess,
    #[serde(default = "default_noise_frac")]
    pub sensor_noise_frac: f64,
}

fn default_noise_frac() -> f64 {
    DEFAULT_SENSOR_NOISE_FRAC
}

impl FeederScenario {
    pub fn n_samples(&self) -> usize {
        (self.duration * self.sample_rate).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.relays.is_empty() {
            return Err(Error::Config("scenario needs at least one relay".into()));
        }
        if !(self.sample_rate > 0.0 && self.fundamental_freq > 0.0 && self.duration > 0.0) {
            return Err(Error::Config(
                "sample rate, fundamental frequency and duration must be positive".into(),
            ));
        }
        if self.n_samples() == 0 {
            return Err(Error::Config("scenario produces no samples".into()));
        }
        if !(self.sensor_noise_frac >= 0.0) {
            return Err(Error::Config("sensor noise fraction must be >= 0".into()));
        }
        let mut names = BTreeSet::new();
        let mut highest = 1u32;
        for r in &self.relays {
            if !names.insert(r.name.as_str()) {
                return Err(Error::Config(format!("duplicate relay name {}", r.name)));
            }
            if !(r.base_envelope > 0.0 && r.base_envelope.is_finite()) {
                return Err(Error::Config(format!("relay {}: base_envelope must be > 0", r.name)));
            }
            if !(r.sdg_coupling >= 0.0 && r.sdg_coupling.is_finite()) {
                return Err(Error::Config(format!("relay {}: sdg_coupling must be >= 0", r.name)));
            }
            match (&r.fault, r.role) {
                (None, RelayRole::Sympathetic | RelayRole::BlindedPrimary) => {
                    return Err(Error::Config(format!(
                        "relay {} with role {} needs a fault",
                        r.name,
                        r.role.as_str()
                    )))
                }
                (Some(f), RelayRole::Sympathetic) if f.envelope_multiplier <= 1.0 => {
                    return Err(Error::Config(format!(
                        "sympathetic relay {} needs envelope_multiplier > 1",
                        r.name
                    )))
                }
                _ => {}
            }
            if let Some(f) = &r.fault {
                f.validate(self.duration)?;
                highest = highest.max(f.highest_harmonic());
            }
        }
        if self.sample_rate < 2.0 * f64::from(highest) * self.fundamental_freq {
            return Err(Error::Config(format!(
                "sample rate {} below twice the highest modeled harmonic ({} Hz)",
                self.sample_rate,
                f64::from(highest) * self.fundamental_freq
            )));
        }
        self.sdg.validate()
    }

    pub fn relay(&self, name: &str) -> Option<&RelaySpec> {
        self.relays.iter().find(|r| r.name == name)
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let scn: FeederScenario = toml::from_str(s)?;
        Ok(scn)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// Copy with every fault removed and all roles set to unaffected.
    pub fn without_faults(&self) -> Self {
        let mut s = self.clone();
        for r in &mut s.relays {
            r.fault = None;
            r.role = RelayRole::Unaffected;
        }
        s
    }
}

/// Relay parameters shared by every fault case of a suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelayBase {
    pub name: String,
    pub base_envelope: f64,
    pub sdg_coupling: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub i_fault_min: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feeder {
    pub duration: f64,
    pub sample_rate: f64,
    pub fundamental_freq: f64,
    #[serde(default = "default_noise_frac")]
    pub sensor_noise_frac: f64,
    pub sdg: SdgProcess,
    pub relays: Vec<RelayBase>,
}

/// One relay's part in a fault case. Unset fields take role defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRelay {
    pub name: String,
    pub role: RelayRole,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope_multiplier: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transient_tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub harmonic_injection: Option<Vec<HarmonicInjection>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultCase {
    pub name: String,
    pub onset: f64,
    pub relays: Vec<CaseRelay>,
}

/// A feeder plus the fault cases evaluated on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSuite {
    pub feeder: Feeder,
    pub cases: Vec<FaultCase>,
}

impl ScenarioSuite {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut suite: ScenarioSuite = toml::from_str(&text)?;
        suite.feeder.sdg.resolve(path.parent())?;
        suite.validate()?;
        Ok(suite)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = BTreeSet::new();
        for c in &self.cases {
            if !names.insert(c.name.as_str()) {
                return Err(Error::Config(format!("duplicate case name {}", c.name)));
            }
            self.scenario(&c.name, 0)?.validate()?;
        }
        self.no_fault(0).validate()
    }

    /// Scenario with every relay unaffected.
    pub fn no_fault(&self, seed: u64) -> FeederScenario {
        let f = &self.feeder;
        FeederScenario {
            name: "no_fault".into(),
            relays: f
                .relays
                .iter()
                .map(|r| RelaySpec {
                    name: r.name.clone(),
                    role: RelayRole::Unaffected,
                    base_envelope: r.base_envelope,
                    sdg_coupling: r.sdg_coupling,
                    i_fault_min: r.i_fault_min,
                    fault: None,
                })
                .collect(),
            duration: f.duration,
            sample_rate: f.sample_rate,
            fundamental_freq: f.fundamental_freq,
            seed,
            sdg: f.sdg.clone(),
            sensor_noise_frac: f.sensor_noise_frac,
        }
    }

    /// Materializes a fault case into a full scenario, filling role defaults.
    pub fn scenario(&self, case: &str, seed: u64) -> Result<FeederScenario> {
        let c = self
            .cases
            .iter()
            .find(|c| c.name == case)
            .ok_or_else(|| Error::Config(format!("unknown fault case {case}")))?;
        let mut scn = self.no_fault(seed);
        scn.name = c.name.clone();
        for cr in &c.relays {
            let relay = scn
                .relays
                .iter_mut()
                .find(|r| r.name == cr.name)
                .ok_or_else(|| {
                    Error::Config(format!("case {} names unknown relay {}", c.name, cr.name))
                })?;
            relay.role = cr.role;
            let Some(default_m) = cr.role.default_multiplier() else {
                continue;
            };
            let m = cr.envelope_multiplier.unwrap_or(default_m);
            let harmonics = cr.harmonic_injection.clone().unwrap_or_else(|| {
                let share = cr.role.default_third_harmonic_share();
                if share > 0.0 {
                    vec![HarmonicInjection {
                        order: 3,
                        amplitude: share * m * relay.base_envelope,
                    }]
                } else {
                    Vec::new()
                }
            });
            relay.fault = Some(FaultSpec {
                onset: c.onset,
                envelope_multiplier: m,
                transient_tau: cr.transient_tau.unwrap_or(cr.role.default_transient_tau()),
                harmonic_injection: harmonics,
            });
        }
        Ok(scn)
    }

    pub fn case_names(&self) -> Vec<String> {
        self.cases.iter().map(|c| c.name.clone()).collect()
    }
}

/// The default five-relay feeder with cases F1 (R3 primary, R2 backup, R4
/// sympathetic), F2 (R5 blinded primary, R4 backup) and F3 (R2 primary, R1
/// backup, R4 sympathetic).
pub fn default_suite() -> ScenarioSuite {
    let sample_rate = 50_000.0;
    let relay = |name: &str, base: f64, coupling: f64| RelayBase {
        name: name.into(),
        base_envelope: base,
        sdg_coupling: coupling,
        i_fault_min: None,
    };
    let role = |name: &str, role: RelayRole| CaseRelay {
        name: name.into(),
        role,
        envelope_multiplier: None,
        transient_tau: None,
        harmonic_injection: None,
    };
    ScenarioSuite {
        feeder: Feeder {
            duration: 11.0,
            sample_rate,
            fundamental_freq: 60.0,
            sensor_noise_frac: DEFAULT_SENSOR_NOISE_FRAC,
            sdg: SdgProcess::slow_ar1(30.0, 15.0, 120.0, sample_rate),
            relays: vec![
                relay("R1", 100.0, 0.2),
                relay("R2", 100.0, 0.3),
                relay("R3", 100.0, 0.3),
                relay("R4", 100.0, 0.3),
                relay("R5", 100.0, 1.0),
            ],
        },
        cases: vec![
            FaultCase {
                name: "F1".into(),
                onset: 10.0,
                relays: vec![
                    role("R3", RelayRole::Primary),
                    role("R2", RelayRole::Backup),
                    role("R4", RelayRole::Sympathetic),
                ],
            },
            FaultCase {
                name: "F2".into(),
                onset: 10.0,
                relays: vec![
                    role("R5", RelayRole::BlindedPrimary),
                    role("R4", RelayRole::Backup),
                ],
            },
            FaultCase {
                name: "F3".into(),
                onset: 10.0,
                relays: vec![
                    role("R2", RelayRole::Primary),
                    role("R1", RelayRole::Backup),
                    role("R4", RelayRole::Sympathetic),
                ],
            },
        ],
    }
}
