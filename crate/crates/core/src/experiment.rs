//! End-to-end pipelines over the presets: fringe and dip scans, phase
//! calibration, conditional-state extraction and simulated CHSH runs.
//! Every scan point is independent and goes through [`crate::par`].

use std::f64::consts::{PI, TAU};

use crate::bell::{self, correlation_from_counts, ChshResult, MeasurementSetting, SignVector};
use crate::circuit::{HomBench, NonlocalSetup};
use crate::detection::{
    conditional_polarization_ensemble, outcome_distribution, post_select, sample_counts, ClickPattern, CoincidenceRule,
    CountsTable, DetectorModel, RandomSeed,
};
use crate::error::{Result, SimError};
use crate::par::{self, Execution};
use crate::polarization::PolarizationEnsemble;

/// Unnormalised probabilities of D1D3, D1D4, D2D3, D2D4.
pub fn coincidence_probabilities(setup: &NonlocalSetup, model: &DetectorModel) -> Result<[f64; 4]> {
    let (out, _) = setup.circuit()?.evolve(&NonlocalSetup::source())?;
    let dist = outcome_distribution(&out, &NonlocalSetup::detector_map(), model)?;
    Ok(CoincidenceRule::default().coincidence_probabilities(&dist))
}

/// Coincidence curves against the phase `phi`, one row per entry of `phis`.
pub fn phase_scan(
    setup: &NonlocalSetup,
    phis: &[f64],
    model: &DetectorModel,
    exec: Execution,
) -> Result<Vec<[f64; 4]>> {
    par::try_map(phis, exec, |phi| {
        coincidence_probabilities(&setup.with_phase(*phi), model)
    })
}

/// Probability that both analyzer ports of the alignment bench fire.
pub fn hom_coincidence(bench: &HomBench, model: &DetectorModel) -> Result<f64> {
    let (out, _) = bench.circuit()?.evolve(&HomBench::source())?;
    let dist = outcome_distribution(&out, &HomBench::detector_map("P", "M"), model)?;
    Ok(dist.probability(&ClickPattern::of(&["M", "P"])))
}

pub fn hom_scan(bench: &HomBench, delays: &[f64], model: &DetectorModel, exec: Execution) -> Result<Vec<f64>> {
    par::try_map(delays, exec, |d| {
        hom_coincidence(
            &HomBench {
                delay_fs: *d,
                ..bench.clone()
            },
            model,
        )
    })
}

/// Number of phase samples used by [`calibrate_phase_offset`].
pub const CALIBRATION_POINTS: usize = 72;

/// Convention offset `phi0` such that the conditional state is
/// `(|HV> + e^{i(phi + phi0)} |VH>) / sqrt(2)`, read off the D1D3 fringe with
/// both analyzers at 45 degrees. Wrapped to `(-pi, pi]`; fit noise below
/// `1e-12` is reported as exactly zero.
pub fn calibrate_phase_offset(setup: &NonlocalSetup, exec: Execution) -> Result<f64> {
    let probe = setup.with_analyzers(45.0, 45.0);
    let phis: Vec<f64> = (0..CALIBRATION_POINTS)
        .map(|k| TAU * k as f64 / CALIBRATION_POINTS as f64)
        .collect();
    let rows = phase_scan(&probe, &phis, &DetectorModel::ideal(), exec)?;
    let points: Vec<(f64, f64)> = phis.iter().zip(&rows).map(|(x, r)| (*x, r[0])).collect();
    let fit = bell::fit_fringe(&points)?;
    let phi0 = wrap_phase(fit.phase0);
    Ok(if phi0.abs() < 1e-12 { 0.0 } else { phi0 })
}

pub fn wrap_phase(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y > PI {
        y - TAU
    } else {
        y
    }
}

/// Conditional polarization ensemble of the unanalysed interferometer and the
/// acceptance of the coincidence rule (ideal detectors).
pub fn conditional_ensemble(setup: &NonlocalSetup) -> Result<(PolarizationEnsemble, f64)> {
    let bare = NonlocalSetup {
        analyzer_alice_deg: None,
        analyzer_bob_deg: None,
        ..setup.clone()
    };
    let (out, _) = bare.circuit()?.evolve(&NonlocalSetup::source())?;
    conditional_polarization_ensemble(&out, &NonlocalSetup::detector_map(), &CoincidenceRule::default())
}

/// Post-selected probabilities `++, +-, -+, --` at one setting, plus the
/// acceptance. A fraction `1 - dephasing` of the runs sees a random
/// interferometer phase, which averages the `phi` and `phi + pi` outcomes.
pub fn setting_probabilities(
    setup: &NonlocalSetup,
    setting: &MeasurementSetting,
    model: &DetectorModel,
    dephasing: f64,
) -> Result<([f64; 4], f64)> {
    let v = dephasing.clamp(0.0, 1.0);
    let analysed = setup.with_analyzers(setting.alice_deg, setting.bob_deg);
    let select = |s: &NonlocalSetup| -> Result<([f64; 4], f64)> {
        let (out, _) = s.circuit()?.evolve(&NonlocalSetup::source())?;
        let dist = outcome_distribution(&out, &NonlocalSetup::detector_map(), model)?;
        let rule = CoincidenceRule::default();
        let (kept, acceptance) = post_select(&dist, &rule)?;
        Ok((rule.coincidence_probabilities(&kept), acceptance))
    };
    let (coherent, acceptance) = select(&analysed)?;
    if v == 1.0 {
        return Ok((coherent, acceptance));
    }
    let (flipped, _) = select(&analysed.with_phase(setup.phi_rad + PI))?;
    let mut p = [0.0; 4];
    for k in 0..4 {
        p[k] = v * coherent[k] + (1.0 - v) * 0.5 * (coherent[k] + flipped[k]);
    }
    Ok((p, acceptance))
}

/// One simulated CHSH experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ChshRun {
    pub probabilities: [[f64; 4]; 4],
    pub counts: [CountsTable; 4],
    pub result: ChshResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChshScenario {
    pub setup: NonlocalSetup,
    pub settings: [MeasurementSetting; 4],
    pub signs: SignVector,
    pub model: DetectorModel,
    pub dephasing: f64,
    /// Mean number of recorded coincidences per setting.
    pub mean_total_pairs: f64,
}

impl Default for ChshScenario {
    fn default() -> Self {
        ChshScenario {
            setup: NonlocalSetup::default(),
            settings: bell::default_settings(),
            signs: SignVector::default(),
            model: DetectorModel::default(),
            dephasing: 1.0,
            mean_total_pairs: 1e5,
        }
    }
}

impl ChshScenario {
    pub fn probabilities(&self) -> Result<[[f64; 4]; 4]> {
        let mut out = [[0.0; 4]; 4];
        for (o, st) in out.iter_mut().zip(&self.settings) {
            *o = setting_probabilities(&self.setup, st, &self.model, self.dephasing)?.0;
        }
        Ok(out)
    }

    /// S from the exact post-selected probabilities.
    pub fn analytic_s(&self) -> Result<f64> {
        let probs = self.probabilities()?;
        Ok(probs
            .iter()
            .zip(self.signs.signs())
            .map(|(p, s)| s as f64 * (p[0] - p[1] - p[2] + p[3]))
            .sum())
    }

    /// Samples counts for each setting from `seed.derive(k)`.
    pub fn sample_with(&self, probabilities: [[f64; 4]; 4], seed: RandomSeed) -> Result<ChshRun> {
        let mut counts = Vec::with_capacity(4);
        for (k, (p, st)) in probabilities.iter().zip(&self.settings).enumerate() {
            let total: f64 = p.iter().sum();
            let p = p.map(|x| x / total);
            counts.push(sample_counts(p, self.mean_total_pairs, *st, seed.derive(k as u64))?);
        }
        let counts: [CountsTable; 4] = counts.try_into().expect("four settings");
        let mut estimates = Vec::with_capacity(4);
        for c in &counts {
            estimates.push(correlation_from_counts(c)?);
        }
        let result = bell::chsh(estimates.try_into().expect("four settings"), self.signs);
        Ok(ChshRun {
            probabilities,
            counts,
            result,
        })
    }

    pub fn run(&self, seed: RandomSeed) -> Result<ChshRun> {
        self.sample_with(self.probabilities()?, seed)
    }

    /// Independent runs for many seeds; probabilities are computed once.
    pub fn run_batch(&self, seeds: &[RandomSeed], exec: Execution) -> Result<Vec<ChshRun>> {
        let probs = self.probabilities()?;
        par::try_map(seeds, exec, |s| self.sample_with(probs, *s))
    }
}

/// Maximum `|S|` over a grid of settings for a fixed ensemble; used to probe
/// the quantum bound.
pub fn max_abs_s_on_grid(ensemble: &PolarizationEnsemble, step_deg: f64, exec: Execution) -> Result<f64> {
    if !(step_deg > 0.0) {
        return Err(SimError::EmptyScan);
    }
    let n = (180.0 / step_deg).round() as usize;
    let angles: Vec<f64> = (0..n).map(|k| k as f64 * step_deg).collect();
    let mut pairs = Vec::with_capacity(n * n);
    for &a in &angles {
        for &a2 in &angles {
            pairs.push((a, a2));
        }
    }
    let best = par::map(&pairs, exec, |&(a, a2)| {
        let mut best = 0.0f64;
        for &b in &angles {
            for &b2 in &angles {
                let st = bell::chsh_settings(a, a2, b, b2);
                let e = st.map(|s| bell::analytic_correlation(ensemble, &s));
                for k in 0..4 {
                    let s: f64 = (0..4).map(|i| if i == k { -e[i] } else { e[i] }).sum();
                    best = best.max(s.abs());
                }
            }
        }
        best
    });
    Ok(best.into_iter().fold(0.0, f64::max))
}
