//! Correlation estimates, the CHSH combination, the deterministic local
//! hidden-variable bound and visibility fits.

use nalgebra::{DMatrix, DVector};

use crate::detection::CountsTable;
use crate::error::{Result, SimError};
use crate::polarization::{PolarizationEnsemble, TwoQubitState};

/// Polarization analysis angles in degrees, reduced modulo 180.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementSetting {
    pub alice_deg: f64,
    pub bob_deg: f64,
}

impl MeasurementSetting {
    pub fn new(alice_deg: f64, bob_deg: f64) -> Self {
        MeasurementSetting {
            alice_deg: alice_deg.rem_euclid(180.0),
            bob_deg: bob_deg.rem_euclid(180.0),
        }
    }
}

/// Setting order `(a, b), (a, b'), (a', b), (a', b')`.
pub fn chsh_settings(a: f64, a2: f64, b: f64, b2: f64) -> [MeasurementSetting; 4] {
    [
        MeasurementSetting::new(a, b),
        MeasurementSetting::new(a, b2),
        MeasurementSetting::new(a2, b),
        MeasurementSetting::new(a2, b2),
    ]
}

/// `a = 22.5, a' = 67.5, b = 45, b' = 0`.
pub fn default_settings() -> [MeasurementSetting; 4] {
    chsh_settings(22.5, 67.5, 45.0, 0.0)
}

/// Signs of the four terms of S, exactly one of them negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignVector([i8; 4]);

impl SignVector {
    pub fn new(signs: [i8; 4]) -> Result<Self> {
        let valid = signs.iter().all(|s| *s == 1 || *s == -1) && signs.iter().filter(|s| **s == -1).count() == 1;
        if !valid {
            return Err(SimError::InvalidSignVector(signs));
        }
        Ok(SignVector(signs))
    }

    /// Minus on the `(a, b')` term; matches the sign of the measured
    /// correlations in the bundled fixture.
    pub fn reference() -> Self {
        SignVector([1, -1, 1, 1])
    }

    pub fn signs(&self) -> [i8; 4] {
        self.0
    }
}

impl Default for SignVector {
    fn default() -> Self {
        Self::reference()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationEstimate {
    pub setting: MeasurementSetting,
    pub e_value: f64,
    pub sigma: f64,
    pub counts: Option<CountsTable>,
}

/// `E = (N++ + N-- - N+- - N-+) / N` with independent-Poisson error
/// propagation, `sigma^2 = sum_i (s_i - E)^2 n_i / N^2`.
pub fn correlation_from_counts(counts: &CountsTable) -> Result<CorrelationEstimate> {
    let total = counts.total();
    if total == 0 {
        return Err(SimError::ZeroTotal);
    }
    let n = counts.as_array().map(|c| c as f64);
    let signs = [1.0, -1.0, -1.0, 1.0];
    let total = total as f64;
    let e = n.iter().zip(signs).map(|(ni, s)| s * ni).sum::<f64>() / total;
    let var = n.iter().zip(signs).map(|(ni, s)| (s - e).powi(2) * ni).sum::<f64>() / (total * total);
    Ok(CorrelationEstimate {
        setting: counts.setting,
        e_value: e.clamp(-1.0, 1.0),
        sigma: var.sqrt(),
        counts: Some(*counts),
    })
}

fn analyzer_vectors(angle_deg: f64) -> [[f64; 2]; 2] {
    let (s, c) = angle_deg.to_radians().sin_cos();
    [[c, s], [-s, c]]
}

/// Outcome probabilities `++, +-, -+, --` of a pure state.
pub fn pure_outcome_probabilities(state: &TwoQubitState, setting: &MeasurementSetting) -> [f64; 4] {
    let a = analyzer_vectors(setting.alice_deg);
    let b = analyzer_vectors(setting.bob_deg);
    let mut out = [0.0; 4];
    for (k, (sa, sb)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
        let mut amp = num_complex::Complex64::new(0.0, 0.0);
        for (i, ai) in a[sa].iter().enumerate() {
            for (j, bj) in b[sb].iter().enumerate() {
                amp += state.amps[2 * i + j] * (ai * bj);
            }
        }
        out[k] = amp.norm_sqr();
    }
    out
}

/// Weighted outcome probabilities of an ensemble.
pub fn outcome_probabilities(ensemble: &PolarizationEnsemble, setting: &MeasurementSetting) -> [f64; 4] {
    let w = ensemble.total_weight();
    let mut out = [0.0; 4];
    for (wi, s) in &ensemble.members {
        for (o, p) in out.iter_mut().zip(pure_outcome_probabilities(s, setting)) {
            *o += wi * p / w;
        }
    }
    out
}

/// Expectation of the product of the two `+-1` polarization outcomes.
pub fn analytic_correlation(ensemble: &PolarizationEnsemble, setting: &MeasurementSetting) -> f64 {
    let p = outcome_probabilities(ensemble, setting);
    (p[0] - p[1] - p[2] + p[3]).clamp(-1.0, 1.0)
}

/// Analytic S for the given settings and signs.
pub fn analytic_s(ensemble: &PolarizationEnsemble, settings: &[MeasurementSetting; 4], signs: SignVector) -> f64 {
    settings
        .iter()
        .zip(signs.signs())
        .map(|(st, s)| s as f64 * analytic_correlation(ensemble, st))
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChshResult {
    pub estimates: [CorrelationEstimate; 4],
    pub sign_vector: SignVector,
    pub s_value: f64,
    pub sigma_s: f64,
    /// `(|S| - 2) / sigma_S`; infinite when `sigma_S` is zero and `|S| > 2`.
    pub n_sigma_violation: f64,
}

pub fn chsh(estimates: [CorrelationEstimate; 4], signs: SignVector) -> ChshResult {
    let s: f64 = estimates
        .iter()
        .zip(signs.signs())
        .map(|(e, s)| s as f64 * e.e_value)
        .sum();
    let sigma = estimates.iter().map(|e| e.sigma * e.sigma).sum::<f64>().sqrt();
    let excess = s.abs() - 2.0;
    let n_sigma = if sigma > 0.0 {
        excess / sigma
    } else if excess > 0.0 {
        f64::INFINITY
    } else if excess < 0.0 {
        f64::NEG_INFINITY
    } else {
        0.0
    };
    ChshResult {
        estimates,
        sign_vector: signs,
        s_value: s,
        sigma_s: sigma,
        n_sigma_violation: n_sigma,
    }
}

/// Deterministic local strategy: each party's `+-1` outcome for its first and
/// second setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LhvStrategy {
    pub alice: [i8; 2],
    pub bob: [i8; 2],
}

impl LhvStrategy {
    /// All 16 strategies.
    pub fn all() -> impl Iterator<Item = LhvStrategy> {
        (0u8..16).map(|bits| {
            let pm = |k: u8| if bits & (1 << k) != 0 { -1 } else { 1 };
            LhvStrategy {
                alice: [pm(0), pm(1)],
                bob: [pm(2), pm(3)],
            }
        })
    }
}

fn setting_index(distinct: &mut Vec<f64>, angle: f64) -> Result<usize> {
    if let Some(k) = distinct.iter().position(|d| (d - angle).abs() < 1e-12) {
        return Ok(k);
    }
    if distinct.len() == 2 {
        return Err(SimError::SettingsNotBipartite);
    }
    distinct.push(angle);
    Ok(distinct.len() - 1)
}

/// Maximum of the signed correlation sum over every deterministic local
/// strategy. `signs` is taken as given so degenerate vectors can be probed.
pub fn lhv_max(settings: &[MeasurementSetting; 4], signs: [i8; 4]) -> Result<f64> {
    let mut alice = Vec::new();
    let mut bob = Vec::new();
    let mut index = [(0usize, 0usize); 4];
    for (k, st) in settings.iter().enumerate() {
        index[k] = (
            setting_index(&mut alice, st.alice_deg)?,
            setting_index(&mut bob, st.bob_deg)?,
        );
    }
    let best = LhvStrategy::all()
        .map(|strategy| {
            index
                .iter()
                .zip(signs)
                .map(|((i, j), s)| (s * strategy.alice[*i] * strategy.bob[*j]) as i32)
                .sum::<i32>()
        })
        .max()
        .expect("16 strategies");
    Ok(best as f64)
}

/// Least-squares fit of `offset + amplitude * cos(x + phase0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisibilityFit {
    pub offset: f64,
    pub amplitude: f64,
    pub phase0: f64,
    pub visibility: f64,
    pub residual_rms: f64,
}

/// Linear least squares on the regressors `1, cos x, sin x`.
pub fn fit_fringe(points: &[(f64, f64)]) -> Result<VisibilityFit> {
    let n = points.len();
    if n < 5 {
        return Err(SimError::InsufficientPoints(n));
    }
    let (lo, hi) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (x, _)| {
            (lo.min(*x), hi.max(*x))
        });
    let span = hi - lo;
    // evenly spaced samples over [0, 2pi) cover a full period
    let covered = span + span / (n - 1) as f64;
    if covered < std::f64::consts::TAU - 1e-9 {
        return Err(SimError::InsufficientSpan(span));
    }
    let design = DMatrix::from_fn(n, 3, |r, c| {
        let x = points[r].0;
        match c {
            0 => 1.0,
            1 => x.cos(),
            _ => x.sin(),
        }
    });
    let y = DVector::from_iterator(n, points.iter().map(|p| p.1));
    let coeffs = design
        .clone()
        .svd(true, true)
        .solve(&y, 1e-14)
        .map_err(|_| SimError::InsufficientSpan(span))?;
    let (offset, c, s) = (coeffs[0], coeffs[1], coeffs[2]);
    if !(offset > 0.0) {
        return Err(SimError::NonPositiveOffset(offset));
    }
    let amplitude = c.hypot(s);
    let residual = &design * &coeffs - &y;
    Ok(VisibilityFit {
        offset,
        amplitude,
        phase0: (-s).atan2(c),
        visibility: amplitude / offset,
        residual_rms: (residual.norm_squared() / n as f64).sqrt(),
    })
}

/// `1 - min / baseline`.
pub fn dip_visibility(scan: &[(f64, f64)], baseline: f64) -> Result<f64> {
    if scan.is_empty() {
        return Err(SimError::EmptyScan);
    }
    if !(baseline > 0.0) {
        return Err(SimError::NonPositiveBaseline(baseline));
    }
    let min = scan.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    Ok(1.0 - min / baseline)
}
