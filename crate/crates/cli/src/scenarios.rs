//! Subcommand bodies. Each `run_*` computes a report; `write_*` turns it into
//! files under the output directory.

use std::f64::consts::SQRT_2;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use bellsim_core::bell::{
    analytic_correlation, chsh, correlation_from_counts, dip_visibility, fit_fringe, ChshResult, CorrelationEstimate,
    MeasurementSetting, VisibilityFit,
};
use bellsim_core::circuit::{HomBench, NonlocalSetup};
use bellsim_core::detection::{sample_counts, CountsTable, RandomSeed};
use bellsim_core::experiment::{
    calibrate_phase_offset, conditional_ensemble, hom_coincidence, hom_scan, phase_scan, ChshRun, ChshScenario,
};
use bellsim_core::par::Execution;
use bellsim_core::polarization::TwoQubitState;
use bellsim_core::SimError;

use crate::config::ScenarioConfig;
use crate::error::{CliError, Result};
use crate::output::{num, svg_plot, write_csv, write_file, Table};

const CONTRACT_TOL: f64 = 1e-10;

/// Delay used as the "fully distinguishable" reference, in wavepacket widths.
const BASELINE_WIDTHS: f64 = 1e4;

/// Unitarity of the lossless part and norm of the evolved state.
pub fn check_contracts(setup: &NonlocalSetup) -> Result<()> {
    let circuit = setup.circuit()?;
    let err = circuit.transfer_matrix()?.unitarity_error();
    if !(err <= CONTRACT_TOL) {
        return Err(CliError::Contract(format!("transfer matrix off unitary by {err:e}")));
    }
    let (out, _) = circuit.evolve(&NonlocalSetup::source())?;
    let drift = (out.norm_sqr() - 1.0).abs();
    if !(drift <= CONTRACT_TOL) {
        return Err(CliError::Contract(format!("state norm drifted by {drift:e}")));
    }
    Ok(())
}

fn check_probabilities(rows: &[[f64; 4]]) -> Result<()> {
    for r in rows {
        let sum: f64 = r.iter().sum();
        if r.iter().any(|p| !p.is_finite() || *p < -CONTRACT_TOL) || sum > 1.0 + CONTRACT_TOL {
            return Err(CliError::Contract(format!("invalid probabilities {r:?}")));
        }
    }
    Ok(())
}

/// Poisson counts for up to four channels with absolute probabilities `p`.
fn sample_channels(p: [f64; 4], mean_pairs: f64, seed: RandomSeed) -> Result<[u64; 4]> {
    let total: f64 = p.iter().sum();
    if total <= 0.0 {
        return Ok([0; 4]);
    }
    let setting = MeasurementSetting::new(0.0, 0.0);
    Ok(sample_counts(p.map(|x| x.max(0.0) / total), mean_pairs * total, setting, seed)?.as_array())
}

/// Interferometer phase actually used: the configured one, or the calibrated
/// value putting the conditional state at `(|HV> + |VH>)/sqrt(2)`.
pub fn resolved_phase(cfg: &ScenarioConfig, exec: Execution) -> Result<(f64, f64)> {
    let phi0 = calibrate_phase_offset(&cfg.setup(), exec)?;
    Ok((cfg.circuit.phi_rad.unwrap_or(-phi0), phi0))
}

fn strings(xs: &[f64]) -> Vec<String> {
    xs.iter().map(|x| num(*x)).collect()
}

fn key_values(rows: &[(&str, String)]) -> Table {
    let mut t = Table::new(&["quantity", "value"]);
    for (k, v) in rows {
        t.push(vec![k.to_string(), v.clone()]);
    }
    t
}

// ---------------------------------------------------------------- hom-scan

#[derive(Debug, Clone, PartialEq)]
pub struct HomSide {
    pub probabilities: Vec<f64>,
    pub baseline: f64,
    pub visibility: f64,
    pub counts: Option<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomReport {
    pub delays_fs: Vec<f64>,
    pub alice: HomSide,
    pub bob: HomSide,
}

fn hom_side(cfg: &ScenarioConfig, bench: HomBench, delays: &[f64], side: u64, exec: Execution) -> Result<HomSide> {
    let model = cfg.detector()?;
    let probabilities = hom_scan(&bench, delays, &model, exec)?;
    let far = BASELINE_WIDTHS * bench.wavepacket.width_fs;
    let baseline = hom_coincidence(&HomBench { delay_fs: far, ..bench }, &model)?;
    if !baseline.is_finite() || probabilities.iter().any(|p| !p.is_finite()) {
        return Err(CliError::Contract("non-finite coincidence probability".into()));
    }
    let curve: Vec<(f64, f64)> = delays.iter().copied().zip(probabilities.iter().copied()).collect();
    let visibility = dip_visibility(&curve, baseline)?;
    let counts = if cfg.sampling.sample_scans {
        let seed = RandomSeed(cfg.seed).derive(side);
        let mut out = Vec::with_capacity(delays.len());
        for (k, p) in probabilities.iter().enumerate() {
            out.push(
                sample_channels(
                    [*p, 0.0, 0.0, 0.0],
                    cfg.sampling.mean_total_pairs,
                    seed.derive(k as u64),
                )?[0],
            );
        }
        Some(out)
    } else {
        None
    };
    Ok(HomSide {
        probabilities,
        baseline,
        visibility,
        counts,
    })
}

pub fn run_hom_scan(cfg: &ScenarioConfig, exec: Execution) -> Result<HomReport> {
    let delays = cfg.hom_scan.points()?;
    let alice = hom_side(cfg, cfg.hom_bench(false), &delays, 0, exec)?;
    let bob = hom_side(cfg, cfg.hom_bench(true), &delays, 1, exec)?;
    for p in alice.probabilities.iter().chain(&bob.probabilities) {
        if !p.is_finite() || !(-CONTRACT_TOL..=1.0 + CONTRACT_TOL).contains(p) {
            return Err(CliError::Contract(format!("coincidence probability {p}")));
        }
    }
    Ok(HomReport {
        delays_fs: delays,
        alice,
        bob,
    })
}

pub fn write_hom_scan(cfg: &ScenarioConfig, report: &HomReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let sampled = report.alice.counts.is_some();
    let mut cols = vec!["delay_fs", "p_alice", "p_bob"];
    if sampled {
        cols.extend(["n_alice", "n_bob"]);
    }
    let mut t = Table::new(&cols);
    for (k, d) in report.delays_fs.iter().enumerate() {
        let mut row = vec![
            num(*d),
            num(report.alice.probabilities[k]),
            num(report.bob.probabilities[k]),
        ];
        if let (Some(a), Some(b)) = (&report.alice.counts, &report.bob.counts) {
            row.extend([a[k].to_string(), b[k].to_string()]);
        }
        t.push(row);
    }
    let mut files = vec![write_csv(dir, "hom_scan.csv", "hom-scan", cfg, &t)?];
    let summary = key_values(&[
        ("baseline_alice", num(report.alice.baseline)),
        ("baseline_bob", num(report.bob.baseline)),
        ("visibility_alice", num(report.alice.visibility)),
        ("visibility_bob", num(report.bob.visibility)),
    ]);
    files.push(write_csv(dir, "hom_summary.csv", "hom-scan", cfg, &summary)?);
    if cfg.svg {
        let svg = svg_plot(
            "HOM dip",
            "delay (fs)",
            &report.delays_fs,
            &[
                ("alice", report.alice.probabilities.clone()),
                ("bob", report.bob.probabilities.clone()),
            ],
        );
        files.push(write_file(dir, "hom_scan.svg", &svg)?);
    }
    Ok(files)
}

// -------------------------------------------------------------- phase-scan

pub const PHASE_COLUMNS: [&str; 4] = ["p_d1d3", "p_d1d4", "p_d2d3", "p_d2d4"];

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseReport {
    pub phis: Vec<f64>,
    pub probabilities: Vec<[f64; 4]>,
    pub counts: Option<Vec<[u64; 4]>>,
    /// Absent when the scan is too short to fit a full period.
    pub fits: Option<[VisibilityFit; 4]>,
    pub phi0: f64,
}

pub fn run_phase_scan(cfg: &ScenarioConfig, exec: Execution) -> Result<PhaseReport> {
    let phis = cfg.phase_scan.points()?;
    let setup = cfg
        .setup()
        .with_analyzers(cfg.circuit.analyzer_alice_deg, cfg.circuit.analyzer_bob_deg);
    check_contracts(&setup)?;
    let probabilities = phase_scan(&setup, &phis, &cfg.detector()?, exec)?;
    check_probabilities(&probabilities)?;
    let phi0 = calibrate_phase_offset(&cfg.setup(), exec)?;
    let counts = if cfg.sampling.sample_scans {
        let seed = RandomSeed(cfg.seed);
        let mut out = Vec::with_capacity(phis.len());
        for (k, p) in probabilities.iter().enumerate() {
            out.push(sample_channels(
                *p,
                cfg.sampling.mean_total_pairs,
                seed.derive(k as u64),
            )?);
        }
        Some(out)
    } else {
        None
    };
    let mut fits = Vec::with_capacity(4);
    for c in 0..4 {
        let pts: Vec<(f64, f64)> = phis.iter().zip(&probabilities).map(|(x, r)| (*x, r[c])).collect();
        match fit_fringe(&pts) {
            Ok(f) => fits.push(f),
            Err(SimError::InsufficientPoints(..) | SimError::InsufficientSpan(..)) => break,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(PhaseReport {
        fits: fits.try_into().ok(),
        phis,
        probabilities,
        counts,
        phi0,
    })
}

pub fn write_phase_scan(cfg: &ScenarioConfig, report: &PhaseReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut cols = vec!["phi_rad"];
    cols.extend(PHASE_COLUMNS);
    if report.counts.is_some() {
        cols.extend(["n_d1d3", "n_d1d4", "n_d2d3", "n_d2d4"]);
    }
    let mut t = Table::new(&cols);
    for (k, phi) in report.phis.iter().enumerate() {
        let mut row = vec![num(*phi)];
        row.extend(strings(&report.probabilities[k]));
        if let Some(c) = &report.counts {
            row.extend(c[k].iter().map(|n| n.to_string()));
        }
        t.push(row);
    }
    let mut files = vec![write_csv(dir, "phase_scan.csv", "phase-scan", cfg, &t)?];
    let mut s = Table::new(&[
        "curve",
        "offset",
        "amplitude",
        "phase0_rad",
        "visibility",
        "residual_rms",
    ]);
    if let Some(fits) = &report.fits {
        for (name, f) in PHASE_COLUMNS.iter().zip(fits) {
            s.push(vec![
                name.to_string(),
                num(f.offset),
                num(f.amplitude),
                num(f.phase0),
                num(f.visibility),
                num(f.residual_rms),
            ]);
        }
    }
    files.push(write_csv(dir, "phase_fit.csv", "phase-scan", cfg, &s)?);
    if cfg.svg {
        let series: Vec<(&str, Vec<f64>)> = PHASE_COLUMNS
            .iter()
            .enumerate()
            .map(|(c, name)| (*name, report.probabilities.iter().map(|r| r[c]).collect()))
            .collect();
        let svg = svg_plot("Coincidence fringes", "phi (rad)", &report.phis, &series);
        files.push(write_file(dir, "phase_scan.svg", &svg)?);
    }
    Ok(files)
}

// -------------------------------------------------------------------- chsh

#[derive(Debug, Clone, PartialEq)]
pub struct ChshReport {
    pub phi_rad: f64,
    pub analytic_s: f64,
    pub run: ChshRun,
}

pub fn chsh_scenario(cfg: &ScenarioConfig, exec: Execution) -> Result<ChshScenario> {
    let (phi, _) = resolved_phase(cfg, exec)?;
    Ok(ChshScenario {
        setup: cfg.setup().with_phase(phi),
        settings: cfg.chsh.settings(),
        signs: cfg.chsh.signs()?,
        model: cfg.detector()?,
        dephasing: cfg.circuit.dephasing,
        mean_total_pairs: cfg.sampling.mean_total_pairs,
    })
}

pub fn run_chsh(cfg: &ScenarioConfig, exec: Execution) -> Result<ChshReport> {
    let scenario = chsh_scenario(cfg, exec)?;
    check_contracts(&scenario.setup)?;
    let probabilities = scenario.probabilities()?;
    check_probabilities(&probabilities)?;
    let analytic_s: f64 = probabilities
        .iter()
        .zip(scenario.signs.signs())
        .map(|(p, s)| s as f64 * (p[0] - p[1] - p[2] + p[3]))
        .sum();
    if analytic_s.abs() > 2.0 * SQRT_2 + CONTRACT_TOL {
        return Err(CliError::Contract(format!(
            "|S| = {analytic_s} exceeds the quantum bound"
        )));
    }
    let run = scenario.sample_with(probabilities, RandomSeed(cfg.seed))?;
    Ok(ChshReport {
        phi_rad: scenario.setup.phi_rad,
        analytic_s,
        run,
    })
}

fn estimates_table(result: &ChshResult) -> Table {
    let mut t = Table::new(&["alice_deg", "bob_deg", "n_pp", "n_pm", "n_mp", "n_mm", "e", "sigma"]);
    for est in &result.estimates {
        let mut row = vec![num(est.setting.alice_deg), num(est.setting.bob_deg)];
        match &est.counts {
            Some(c) => row.extend(c.as_array().iter().map(|n| n.to_string())),
            None => row.extend(std::iter::repeat_n(String::new(), 4)),
        }
        row.extend([num(est.e_value), num(est.sigma)]);
        t.push(row);
    }
    t
}

fn signs_text(result: &ChshResult) -> String {
    result.sign_vector.signs().map(|s| s.to_string()).join(" ")
}

pub fn write_chsh(cfg: &ScenarioConfig, report: &ChshReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let r = &report.run.result;
    let summary = key_values(&[
        ("phi_rad", num(report.phi_rad)),
        ("sign_vector", signs_text(r)),
        ("s", num(r.s_value)),
        ("sigma_s", num(r.sigma_s)),
        ("n_sigma", num(r.n_sigma_violation)),
        ("analytic_s", num(report.analytic_s)),
    ]);
    Ok(vec![
        write_csv(dir, "chsh_counts.csv", "chsh", cfg, &estimates_table(r))?,
        write_csv(dir, "chsh_summary.csv", "chsh", cfg, &summary)?,
    ])
}

// ----------------------------------------------------------------- analyze

#[derive(Debug, Deserialize)]
struct CountsRow {
    alice_deg: f64,
    bob_deg: f64,
    n_pp: u64,
    n_pm: u64,
    n_mp: u64,
    n_mm: u64,
}

#[derive(Debug, Deserialize)]
struct CorrelationRow {
    alice_deg: f64,
    bob_deg: f64,
    e: f64,
    sigma: f64,
}

/// Reads four correlation rows, either as raw counts
/// (`alice_deg,bob_deg,n_pp,n_pm,n_mp,n_mm`) or as ready estimates
/// (`alice_deg,bob_deg,e,sigma`). Lines starting with `#` are ignored.
pub fn read_estimates(path: &Path) -> Result<Vec<CorrelationEstimate>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_estimates(&text)
}

pub fn parse_estimates(text: &str) -> Result<Vec<CorrelationEstimate>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let mut out = Vec::new();
    if headers.iter().any(|h| h == "n_pp") {
        for row in rdr.deserialize::<CountsRow>() {
            let r = row?;
            let counts = CountsTable::new(
                [r.n_pp, r.n_pm, r.n_mp, r.n_mm],
                MeasurementSetting::new(r.alice_deg, r.bob_deg),
            );
            out.push(correlation_from_counts(&counts).map_err(|e| CliError::Input(e.to_string()))?);
        }
    } else {
        for row in rdr.deserialize::<CorrelationRow>() {
            let r = row?;
            if !(r.e.abs() <= 1.0) || !(r.sigma >= 0.0) {
                return Err(CliError::Input(format!("bad correlation row {r:?}")));
            }
            out.push(CorrelationEstimate {
                setting: MeasurementSetting::new(r.alice_deg, r.bob_deg),
                e_value: r.e,
                sigma: r.sigma,
                counts: None,
            });
        }
    }
    Ok(out)
}

/// Puts four estimates into `(a,b), (a,b'), (a',b), (a',b')` order, where `a`
/// and `b` are the angles of the first row.
pub fn canonical_order(rows: Vec<CorrelationEstimate>) -> Result<[CorrelationEstimate; 4]> {
    if rows.len() != 4 {
        return Err(CliError::Input(format!(
            "expected 4 correlation rows, found {}",
            rows.len()
        )));
    }
    let (a, b) = (rows[0].setting.alice_deg, rows[0].setting.bob_deg);
    let other =
        |pick: fn(&MeasurementSetting) -> f64, first: f64| rows.iter().map(|r| pick(&r.setting)).find(|x| *x != first);
    let a2 = other(|s| s.alice_deg, a).ok_or_else(|| CliError::Input("only one alice setting".into()))?;
    let b2 = other(|s| s.bob_deg, b).ok_or_else(|| CliError::Input("only one bob setting".into()))?;
    let mut ordered = Vec::with_capacity(4);
    for (x, y) in [(a, b), (a, b2), (a2, b), (a2, b2)] {
        let hits: Vec<&CorrelationEstimate> = rows
            .iter()
            .filter(|r| r.setting.alice_deg == x && r.setting.bob_deg == y)
            .collect();
        if hits.len() != 1 {
            return Err(CliError::Input(format!("need exactly one row for setting ({x}, {y})")));
        }
        ordered.push(*hits[0]);
    }
    Ok(ordered.try_into().expect("four rows"))
}

pub fn run_analyze(cfg: &ScenarioConfig, input: &Path) -> Result<ChshResult> {
    let rows = canonical_order(read_estimates(input)?)?;
    Ok(chsh(rows, cfg.chsh.signs()?))
}

pub fn write_analyze(cfg: &ScenarioConfig, result: &ChshResult, dir: &Path) -> Result<Vec<PathBuf>> {
    let summary = key_values(&[
        ("sign_vector", signs_text(result)),
        ("s", num(result.s_value)),
        ("sigma_s", num(result.sigma_s)),
        ("n_sigma", num(result.n_sigma_violation)),
    ]);
    Ok(vec![
        write_csv(dir, "analyze_estimates.csv", "analyze", cfg, &estimates_table(result))?,
        write_csv(dir, "analyze_summary.csv", "analyze", cfg, &summary)?,
    ])
}

// ------------------------------------------------------------- state-check

#[derive(Debug, Clone, PartialEq)]
pub struct StateCheckReport {
    pub phi_rad: f64,
    pub phi0: f64,
    pub phi_target_rad: f64,
    pub acceptance: f64,
    pub fidelity: f64,
    pub e_45_45: f64,
    pub alice_marginal: [f64; 2],
    pub bob_marginal: [f64; 2],
    pub threshold: f64,
    pub pass: bool,
}

pub fn run_state_check(cfg: &ScenarioConfig, exec: Execution) -> Result<StateCheckReport> {
    let (phi, phi0) = resolved_phase(cfg, exec)?;
    let setup = cfg.setup().with_phase(phi);
    check_contracts(&setup)?;
    let (ens, acceptance) = conditional_ensemble(&setup)?;
    let ens = ens.dephase(cfg.circuit.dephasing);
    let target = cfg.state_check.phi_target_rad.unwrap_or(phi);
    let fidelity = ens.fidelity(&TwoQubitState::psi(target + phi0));
    if !(-CONTRACT_TOL..=1.0 + CONTRACT_TOL).contains(&fidelity) {
        return Err(CliError::Contract(format!("fidelity {fidelity} outside [0, 1]")));
    }
    Ok(StateCheckReport {
        phi_rad: phi,
        phi0,
        phi_target_rad: target,
        acceptance,
        fidelity,
        e_45_45: analytic_correlation(&ens, &MeasurementSetting::new(45.0, 45.0)),
        alice_marginal: ens.alice_marginal(),
        bob_marginal: ens.bob_marginal(),
        threshold: cfg.state_check.fidelity_threshold,
        pass: fidelity >= cfg.state_check.fidelity_threshold,
    })
}

pub fn write_state_check(cfg: &ScenarioConfig, r: &StateCheckReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let t = key_values(&[
        ("phi_rad", num(r.phi_rad)),
        ("phi0_rad", num(r.phi0)),
        ("phi_target_rad", num(r.phi_target_rad)),
        ("acceptance", num(r.acceptance)),
        ("fidelity", num(r.fidelity)),
        ("e_45_45", num(r.e_45_45)),
        ("alice_p_h", num(r.alice_marginal[0])),
        ("bob_p_h", num(r.bob_marginal[0])),
        ("threshold", num(r.threshold)),
        ("status", if r.pass { "PASS" } else { "FAIL" }.into()),
    ]);
    Ok(vec![write_csv(dir, "state_check.csv", "state-check", cfg, &t)?])
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE: &str = "\
# four settings
alice_deg,bob_deg,e,sigma
22.5,45,0.578065,0.011966
22.5,0,-0.67484,0.010916
67.5,45,0.600959,0.011296
67.5,0,0.689742,0.010944
";

    #[test]
    fn parses_correlation_schema() {
        let rows = parse_estimates(TABLE).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[1].e_value, -0.67484);
    }

    #[test]
    fn reorders_shuffled_rows() {
        let mut rows = parse_estimates(TABLE).unwrap();
        let first = rows.remove(0);
        rows.reverse();
        rows.insert(0, first);
        let ordered = canonical_order(rows).unwrap();
        let angles: Vec<(f64, f64)> = ordered
            .iter()
            .map(|e| (e.setting.alice_deg, e.setting.bob_deg))
            .collect();
        assert_eq!(angles, vec![(22.5, 45.0), (22.5, 0.0), (67.5, 45.0), (67.5, 0.0)]);
    }

    #[test]
    fn rejects_wrong_row_count_and_duplicates() {
        let rows = parse_estimates(TABLE).unwrap();
        assert!(canonical_order(rows[..3].to_vec()).is_err());
        let mut dup = rows.clone();
        dup[3] = dup[2];
        assert!(canonical_order(dup).is_err());
    }

    #[test]
    fn counts_schema_gives_estimator_values() {
        let text = "alice_deg,bob_deg,n_pp,n_pm,n_mp,n_mm\n0,0,40,10,10,40\n0,45,25,25,25,25\n45,0,25,25,25,25\n45,45,40,10,10,40\n";
        let rows = parse_estimates(text).unwrap();
        assert!((rows[0].e_value - 0.6).abs() < 1e-15);
        assert!(rows[0].counts.is_some());
    }

    #[test]
    fn contracts_hold_for_default_setup() {
        check_contracts(&ScenarioConfig::default().setup()).unwrap();
    }
}
