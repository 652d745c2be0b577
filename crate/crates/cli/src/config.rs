//! Scenario configuration. One JSON document; every field has a default so
//! `{}` is a valid config.

use std::path::Path;

use serde::{Deserialize, Serialize};

use bellsim_core::bell::{chsh_settings, MeasurementSetting, SignVector};
use bellsim_core::circuit::{HomBench, NonlocalSetup};
use bellsim_core::detection::DetectorModel;
use bellsim_core::state::TemporalWavepacket;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    HomScan,
    PhaseScan,
    ChshRun,
    Analyze,
    StateCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CircuitParams {
    /// Interferometer phase; `None` picks the calibrated value that makes the
    /// conditional state `(|HV> + |VH>)/sqrt(2)`, which maximises `|S|`.
    pub phi_rad: Option<f64>,
    pub delay1_fs: f64,
    pub delay2_fs: f64,
    pub delay3_fs: f64,
    /// Analyzer angles for scans (polarization angles, degrees).
    pub analyzer_alice_deg: f64,
    pub analyzer_bob_deg: f64,
    pub efficiency: f64,
    pub mode_overlap: f64,
    /// Bob-side alignment bench overlap; defaults to `mode_overlap`.
    pub mode_overlap_bob: Option<f64>,
    pub wavepacket_width_fs: f64,
    /// Fraction of runs with a stable phase; the rest see a random phase.
    pub dephasing: f64,
}

impl Default for CircuitParams {
    fn default() -> Self {
        CircuitParams {
            phi_rad: None,
            delay1_fs: 0.0,
            delay2_fs: 0.0,
            delay3_fs: 0.0,
            analyzer_alice_deg: 45.0,
            analyzer_bob_deg: 45.0,
            efficiency: 0.74,
            mode_overlap: 1.0,
            mode_overlap_bob: None,
            wavepacket_width_fs: 100.0,
            dephasing: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Range {
    /// Points `start, start + step, ...` up to and including `stop`.
    pub fn points(&self) -> Result<Vec<f64>> {
        let valid = self.step > 0.0
            && self.stop >= self.start
            && [self.start, self.stop, self.step].iter().all(|x| x.is_finite());
        if !valid {
            return Err(CliError::Config(format!("empty scan range {self:?}")));
        }
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        if n > 1_000_000 {
            return Err(CliError::Config(format!("scan range {self:?} has {n} points")));
        }
        Ok((0..n).map(|k| self.start + k as f64 * self.step).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingParams {
    /// Mean recorded coincidences per CHSH setting, or mean emitted pairs
    /// per scan point.
    pub mean_total_pairs: f64,
    /// Add Poisson-sampled count columns to scan output.
    pub sample_scans: bool,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams {
            mean_total_pairs: 1e5,
            sample_scans: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChshParams {
    /// `[a, a']` and `[b, b']`, polarization angles in degrees.
    pub alice_deg: [f64; 2],
    pub bob_deg: [f64; 2],
    /// Signs for the terms `(a,b), (a,b'), (a',b), (a',b')`.
    pub sign_vector: [i8; 4],
}

impl Default for ChshParams {
    fn default() -> Self {
        ChshParams {
            alice_deg: [22.5, 67.5],
            bob_deg: [45.0, 0.0],
            sign_vector: SignVector::default().signs(),
        }
    }
}

impl ChshParams {
    pub fn settings(&self) -> [MeasurementSetting; 4] {
        chsh_settings(self.alice_deg[0], self.alice_deg[1], self.bob_deg[0], self.bob_deg[1])
    }

    pub fn signs(&self) -> Result<SignVector> {
        SignVector::new(self.sign_vector).map_err(|e| CliError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StateCheckParams {
    /// Phase the interferometer is supposed to sit at; `None` means the
    /// calibrated default phase.
    pub phi_target_rad: Option<f64>,
    pub fidelity_threshold: f64,
}

impl Default for StateCheckParams {
    fn default() -> Self {
        StateCheckParams {
            phi_target_rad: None,
            fidelity_threshold: 0.99,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Option<Scenario>,
    pub seed: u64,
    pub out_dir: String,
    pub svg: bool,
    pub circuit: CircuitParams,
    pub hom_scan: Range,
    pub phase_scan: Range,
    pub sampling: SamplingParams,
    pub chsh: ChshParams,
    pub state_check: StateCheckParams,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            scenario: None,
            seed: 1,
            out_dir: "out".into(),
            svg: false,
            circuit: CircuitParams::default(),
            hom_scan: Range {
                start: -500.0,
                stop: 500.0,
                step: 10.0,
            },
            phase_scan: Range {
                start: 0.0,
                stop: 2.0 * std::f64::consts::PI,
                step: std::f64::consts::PI / 36.0,
            },
            sampling: SamplingParams::default(),
            chsh: ChshParams::default(),
            state_check: StateCheckParams::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.circuit;
        let bad = |what: &str| Err(CliError::Config(what.to_string()));
        if !(c.efficiency > 0.0 && c.efficiency <= 1.0) {
            return bad("circuit.efficiency must be in (0, 1]");
        }
        for m in std::iter::once(c.mode_overlap).chain(c.mode_overlap_bob) {
            if !(0.0..=1.0).contains(&m) {
                return bad("mode overlap must be in [0, 1]");
            }
        }
        if !(c.wavepacket_width_fs > 0.0) {
            return bad("circuit.wavepacket_width_fs must be positive");
        }
        if !(0.0..=1.0).contains(&c.dephasing) {
            return bad("circuit.dephasing must be in [0, 1]");
        }
        if !(self.sampling.mean_total_pairs > 0.0) {
            return bad("sampling.mean_total_pairs must be positive");
        }
        if !(0.0..=1.0).contains(&self.state_check.fidelity_threshold) {
            return bad("state_check.fidelity_threshold must be in [0, 1]");
        }
        self.chsh.signs()?;
        Ok(())
    }

    pub fn wavepacket(&self) -> TemporalWavepacket {
        TemporalWavepacket {
            center_fs: 0.0,
            width_fs: self.circuit.wavepacket_width_fs,
        }
    }

    pub fn detector(&self) -> Result<DetectorModel> {
        DetectorModel::new(self.circuit.efficiency).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Interferometer with the configured delays; phase left at `phi_rad`
    /// or zero, analyzers unset.
    pub fn setup(&self) -> NonlocalSetup {
        let c = &self.circuit;
        NonlocalSetup {
            phi_rad: c.phi_rad.unwrap_or(0.0),
            delay1_fs: c.delay1_fs,
            delay2_fs: c.delay2_fs,
            delay3_fs: c.delay3_fs,
            analyzer_alice_deg: None,
            analyzer_bob_deg: None,
            wavepacket: self.wavepacket(),
            mode_overlap: c.mode_overlap,
        }
    }

    pub fn hom_bench(&self, bob: bool) -> HomBench {
        let overlap = if bob {
            self.circuit.mode_overlap_bob.unwrap_or(self.circuit.mode_overlap)
        } else {
            self.circuit.mode_overlap
        };
        HomBench {
            delay_fs: 0.0,
            wavepacket: self.wavepacket(),
            mode_overlap: overlap,
        }
    }
}
