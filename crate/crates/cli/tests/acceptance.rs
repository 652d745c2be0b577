//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::f64::consts::{PI, SQRT_2, TAU};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use bellsim_cli::config::ScenarioConfig;
use bellsim_cli::scenarios::{run_analyze, run_hom_scan, run_phase_scan};
use bellsim_core::bell::{analytic_correlation, analytic_s, default_settings, lhv_max, MeasurementSetting, SignVector};
use bellsim_core::circuit::{Circuit, Element, NonlocalSetup};
use bellsim_core::detection::{DetectorModel, RandomSeed};
use bellsim_core::experiment::{
    calibrate_phase_offset, conditional_ensemble, max_abs_s_on_grid, setting_probabilities, ChshScenario,
};
use bellsim_core::par::Execution;
use bellsim_core::polarization::TwoQubitState;
use bellsim_core::state::{FockState, ModeLabel, Occupation, PathId, Polarization, TemporalWavepacket};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn table_statistic() -> Outcome {
    let start = Instant::now();
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/table1.csv");
    let r = run_analyze(&ScenarioConfig::default(), &fixture).unwrap();
    let elapsed = start.elapsed();
    let pass = within(r.s_value, 2.5436, 5e-4)
        && within(r.sigma_s, 0.0226, 5e-4)
        && within(r.n_sigma_violation, 24.08, 0.05)
        && elapsed < Duration::from_secs(1);
    outcome(
        pass,
        format!(
            "S={:.6} sigma_S={:.6} n={:.3} in {elapsed:?}",
            r.s_value, r.sigma_s, r.n_sigma_violation
        ),
    )
}

fn ideal_s() -> Outcome {
    let start = Instant::now();
    let circuit_s = ChshScenario::default().analytic_s().unwrap();
    let (ens, _) = conditional_ensemble(&NonlocalSetup::default()).unwrap();
    let state_s = analytic_s(&ens, &default_settings(), SignVector::default());
    let elapsed = start.elapsed();
    let target = 2.0 * SQRT_2;
    outcome(
        within(circuit_s, target, 1e-9) && within(state_s, target, 1e-9) && elapsed < Duration::from_secs(1),
        format!("circuit S={circuit_s:.12} state S={state_s:.12} in {elapsed:?}"),
    )
}

fn ideal_config() -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    cfg.circuit.efficiency = 1.0;
    cfg
}

fn hom_dip() -> Outcome {
    let ideal = run_hom_scan(&ideal_config(), Execution::Parallel).unwrap();
    let min = ideal
        .alice
        .probabilities
        .iter()
        .chain(&ideal.bob.probabilities)
        .copied()
        .fold(f64::INFINITY, f64::min);
    let far = ideal.alice.baseline.max(ideal.bob.baseline);
    let mut cfg = ideal_config();
    cfg.circuit.mode_overlap = 0.961;
    let degraded = run_hom_scan(&cfg, Execution::Parallel).unwrap();
    let vis = [degraded.alice.visibility, degraded.bob.visibility];
    outcome(
        min <= 1e-12 && within(far, 0.5, 1e-9) && vis.iter().all(|v| within(*v, 0.923, 0.002)),
        format!("min={min:e} asymptote={far:.12} visibility(m=0.961)={:.5}", vis[0]),
    )
}

fn conditional_state() -> Outcome {
    let phi0 = calibrate_phase_offset(&NonlocalSetup::default(), Execution::Sequential).unwrap();
    let mut worst_f: f64 = 1.0;
    let mut worst_m: f64 = 0.0;
    for k in 0..8 {
        let phi = TAU * k as f64 / 8.0;
        let (ens, _) = conditional_ensemble(&NonlocalSetup::default().with_phase(phi)).unwrap();
        worst_f = worst_f.min(ens.fidelity(&TwoQubitState::psi(phi + phi0)));
        for m in [ens.alice_marginal(), ens.bob_marginal()] {
            worst_m = worst_m.max((m[0] - 0.5).abs()).max((m[1] - 0.5).abs());
        }
    }
    outcome(
        worst_f >= 1.0 - 1e-10 && worst_m <= 1e-10,
        format!("phi0={phi0:e} min fidelity={worst_f:.14} max marginal error={worst_m:e}"),
    )
}

fn fringes() -> Outcome {
    let ideal = run_phase_scan(&ideal_config(), Execution::Parallel).unwrap();
    let rows = &ideal.probabilities;
    let sym = rows
        .iter()
        .map(|r| (r[0] - r[3]).abs().max((r[1] - r[2]).abs()))
        .fold(0.0, f64::max);
    let sum = rows
        .iter()
        .map(|r| (r.iter().sum::<f64>() - 0.5).abs())
        .fold(0.0, f64::max);
    let v_ideal = ideal.fits.unwrap().map(|f| f.visibility);
    let mut cfg = ideal_config();
    cfg.circuit.mode_overlap = 0.951f64.powf(0.25);
    let v_deg = run_phase_scan(&cfg, Execution::Parallel)
        .unwrap()
        .fits
        .unwrap()
        .map(|f| f.visibility);
    let pass = sym <= 1e-10
        && sum <= 1e-10
        && v_ideal.iter().all(|v| within(*v, 1.0, 1e-6))
        && v_deg.iter().all(|v| within(*v, 0.951, 0.002));
    outcome(
        pass,
        format!(
            "symmetry={sym:e} sum error={sum:e} V ideal={:.8} V degraded={:.5}",
            v_ideal[0], v_deg[0]
        ),
    )
}

fn bounds() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut lhv_ok = true;
    for _ in 0..1000 {
        let a: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.0..180.0));
        let st = bellsim_core::bell::chsh_settings(a[0], a[1], a[2], a[3]);
        lhv_ok &= lhv_max(&st, SignVector::default().signs()).unwrap() == 2.0;
    }
    let mut worst: f64 = 0.0;
    for phi in [0.0, PI / 4.0, PI / 2.0] {
        let (ens, _) = conditional_ensemble(&NonlocalSetup::default().with_phase(phi)).unwrap();
        worst = worst.max(max_abs_s_on_grid(&ens, 15.0, Execution::Parallel).unwrap());
    }
    let elapsed = start.elapsed();
    outcome(
        lhv_ok && worst <= 2.0 * SQRT_2 + 1e-9 && elapsed < Duration::from_secs(30),
        format!("LHV max = 2 for all 1000: {lhv_ok}; grid max |S|={worst:.12} in {elapsed:?}"),
    )
}

fn sampling() -> Outcome {
    let start = Instant::now();
    let scenario = ChshScenario::default();
    let exact = scenario.analytic_s().unwrap();
    let seeds: Vec<RandomSeed> = (0..100).map(RandomSeed).collect();
    let runs = scenario.run_batch(&seeds, Execution::Parallel).unwrap();
    let covered = runs
        .iter()
        .filter(|r| (r.result.s_value - exact).abs() <= 4.0 * r.result.sigma_s)
        .count();
    let again = scenario.run_batch(&seeds, Execution::Sequential).unwrap();
    let identical = runs == again && cli_rerun_identical();
    let elapsed = start.elapsed();
    outcome(
        covered >= 97 && identical && elapsed < Duration::from_secs(120),
        format!("{covered}/100 within 4 sigma, reruns identical: {identical}, {elapsed:?}"),
    )
}

fn cli_rerun_identical() -> bool {
    let dir = tempfile::tempdir().unwrap();
    let out = |sub: &str| {
        let d = dir.path().join(sub);
        let ok = Command::new(env!("CARGO_BIN_EXE_bellsim"))
            .args(["chsh", "--seed", "2024", "--out", "run"])
            .current_dir(dir.path())
            .output()
            .unwrap()
            .status
            .success();
        let bytes = std::fs::read(dir.path().join("run/chsh_counts.csv")).unwrap();
        std::fs::rename(dir.path().join("run"), d).unwrap();
        (ok, bytes)
    };
    let (a_ok, a) = out("first");
    let (b_ok, b) = out("second");
    a_ok && b_ok && a == b
}

const PATHS: [&str; 4] = ["p0", "p1", "p2", "p3"];

fn random_circuit(rng: &mut ChaCha8Rng) -> Circuit {
    let mut c = Circuit::new(PATHS, TemporalWavepacket::default());
    let n = rng.random_range(1..=12);
    for _ in 0..n {
        let a = rng.random_range(0..4);
        let b = (a + rng.random_range(1..4)) % 4;
        let (pa, pb) = (PathId::new(PATHS[a]), PathId::new(PATHS[b]));
        let el = match rng.random_range(0..4) {
            0 => Element::BeamSplitter {
                path_a: pa,
                path_b: pb,
                reflectivity: rng.random_range(0.0..=1.0),
            },
            1 => Element::PolarizingBS { path_a: pa, path_b: pb },
            2 => Element::HalfWavePlate {
                path: pa,
                angle_deg: rng.random_range(-180.0..180.0),
            },
            _ => Element::PhaseShift {
                path: pa,
                phi_rad: rng.random_range(-PI..PI),
            },
        };
        c.push(el).unwrap();
    }
    c
}

fn mode(k: usize) -> ModeLabel {
    let pol = if k.is_multiple_of(2) {
        Polarization::H
    } else {
        Polarization::V
    };
    ModeLabel::new(PATHS[k / 2], pol)
}

fn cross_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut matrix_err: f64 = 0.0;
    for _ in 0..50 {
        let c = random_circuit(&mut rng);
        let tm = c.transfer_matrix().unwrap();
        for k in 0..8 {
            let (out, _) = c.evolve(&FockState::single(mode(k))).unwrap();
            for row in 0..8 {
                let amp = out.amplitude(&Occupation::new(vec![mode(row)]));
                matrix_err = matrix_err.max((amp - tm.matrix[(row, k)]).norm());
            }
        }
    }
    let mut e_err: f64 = 0.0;
    for phi in [0.0, 1.0, PI / 2.0, 2.5] {
        let setup = NonlocalSetup::default().with_phase(phi);
        let (ens, _) = conditional_ensemble(&setup).unwrap();
        for i in 0..18 {
            for j in 0..18 {
                let (a, b) = (10.0 * i as f64, 10.0 * j as f64);
                let st = MeasurementSetting::new(a, b);
                let (ra, rb) = (2.0 * a.to_radians(), 2.0 * b.to_radians());
                let closed = -ra.cos() * rb.cos() + phi.cos() * ra.sin() * rb.sin();
                let (p, _) = setting_probabilities(&setup, &st, &DetectorModel::ideal(), 1.0).unwrap();
                let circuit_e = p[0] - p[1] - p[2] + p[3];
                e_err = e_err
                    .max((circuit_e - closed).abs())
                    .max((analytic_correlation(&ens, &st) - closed).abs());
            }
        }
    }
    outcome(
        matrix_err <= 1e-12 && e_err <= 1e-10,
        format!("matrix error={matrix_err:e} correlation error={e_err:e}"),
    )
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("1 table statistic", table_statistic),
        ("2 ideal S = 2 sqrt 2", ideal_s),
        ("3 HOM dip", hom_dip),
        ("4 conditional state", conditional_state),
        ("5 fringes", fringes),
        ("6 local and quantum bounds", bounds),
        ("7 sampled S coverage", sampling),
        ("8 circuit cross-checks", cross_checks),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let r = check();
        println!(
            "{} criterion {name}: {}",
            if r.pass { "PASS" } else { "FAIL" },
            r.detail
        );
        failed += usize::from(!r.pass);
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
