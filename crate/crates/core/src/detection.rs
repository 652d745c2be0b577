//! Bucket detection, coincidence post-selection and seeded count sampling.
//!
//! Detectors are slow and polarization-blind: click probabilities sum over
//! polarization and temporal index. Each photon is registered independently
//! with the detector efficiency, and a detector clicks when it registers at
//! least one photon.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::bell::MeasurementSetting;
use crate::error::{Result, SimError};
use crate::polarization::{PolarizationEnsemble, TwoQubitState};
use crate::state::{FockState, PathId};

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DetectorId(Arc<str>);

impl DetectorId {
    pub fn new(name: &str) -> Self {
        DetectorId(Arc::from(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for DetectorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for DetectorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub type DetectorMap = BTreeMap<PathId, DetectorId>;

/// Geiger-mode bucket detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorModel {
    efficiency: f64,
}

impl DetectorModel {
    pub fn new(efficiency: f64) -> Result<Self> {
        if !(efficiency > 0.0 && efficiency <= 1.0) {
            return Err(SimError::InvalidEfficiency(efficiency));
        }
        Ok(DetectorModel { efficiency })
    }

    pub fn ideal() -> Self {
        DetectorModel { efficiency: 1.0 }
    }

    pub fn efficiency(&self) -> f64 {
        self.efficiency
    }

    /// Never photon-number resolving.
    pub fn number_resolving(&self) -> bool {
        false
    }
}

impl Default for DetectorModel {
    fn default() -> Self {
        DetectorModel { efficiency: 0.74 }
    }
}

/// Set of detectors that fired.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ClickPattern(pub BTreeSet<DetectorId>);

impl ClickPattern {
    pub fn of(names: &[&str]) -> Self {
        ClickPattern(names.iter().map(|n| DetectorId::new(n)).collect())
    }

    pub fn contains(&self, d: &DetectorId) -> bool {
        self.0.contains(d)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutcomeDistribution {
    probs: BTreeMap<ClickPattern, f64>,
}

impl OutcomeDistribution {
    pub fn from_map(probs: BTreeMap<ClickPattern, f64>) -> Self {
        OutcomeDistribution { probs }
    }

    pub fn probability(&self, pattern: &ClickPattern) -> f64 {
        self.probs.get(pattern).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.probs.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ClickPattern, &f64)> {
        self.probs.iter()
    }
}

/// Born-rule click statistics of `state` under `model`.
pub fn outcome_distribution(
    state: &FockState,
    detectors: &DetectorMap,
    model: &DetectorModel,
) -> Result<OutcomeDistribution> {
    let miss = 1.0 - model.efficiency;
    let mut probs: BTreeMap<ClickPattern, f64> = BTreeMap::new();
    for (occ, amp) in state.terms() {
        let weight = amp.norm_sqr();
        let mut per_detector: BTreeMap<&DetectorId, i32> = BTreeMap::new();
        for photon in occ.photons() {
            let d = detectors
                .get(&photon.path)
                .ok_or_else(|| SimError::UnmappedPath(photon.path.to_string()))?;
            *per_detector.entry(d).or_insert(0) += 1;
        }
        let hit: Vec<(&DetectorId, f64)> = per_detector.into_iter().map(|(d, n)| (d, 1.0 - miss.powi(n))).collect();
        for mask in 0u32..(1 << hit.len()) {
            let mut p = weight;
            let mut fired = BTreeSet::new();
            for (k, (d, click)) in hit.iter().enumerate() {
                if mask & (1 << k) != 0 {
                    p *= click;
                    fired.insert((*d).clone());
                } else {
                    p *= 1.0 - click;
                }
            }
            if p > 0.0 {
                *probs.entry(ClickPattern(fired)).or_insert(0.0) += p;
            }
        }
    }
    Ok(OutcomeDistribution { probs })
}

/// The four cross-side outcomes, ordered `++, +-, -+, --`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Coincidence {
    PlusPlus,
    PlusMinus,
    MinusPlus,
    MinusMinus,
}

impl Coincidence {
    pub const ALL: [Coincidence; 4] = [
        Coincidence::PlusPlus,
        Coincidence::PlusMinus,
        Coincidence::MinusPlus,
        Coincidence::MinusMinus,
    ];

    pub fn sign(self) -> f64 {
        match self {
            Coincidence::PlusPlus | Coincidence::MinusMinus => 1.0,
            _ => -1.0,
        }
    }
}

/// Exactly one click on each side. Alice's first detector is her `+`
/// outcome, the second her `-`; likewise for Bob.
#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceRule {
    pub alice: [DetectorId; 2],
    pub bob: [DetectorId; 2],
}

impl Default for CoincidenceRule {
    fn default() -> Self {
        CoincidenceRule {
            alice: [DetectorId::new("D1"), DetectorId::new("D2")],
            bob: [DetectorId::new("D3"), DetectorId::new("D4")],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Alice,
    Bob,
}

impl CoincidenceRule {
    fn side(&self, d: &DetectorId) -> Option<Side> {
        if self.alice.contains(d) {
            Some(Side::Alice)
        } else if self.bob.contains(d) {
            Some(Side::Bob)
        } else {
            None
        }
    }

    /// Classifies a pattern; detectors outside both sides are ignored.
    pub fn classify(&self, pattern: &ClickPattern) -> Option<Coincidence> {
        let a: Vec<usize> = (0..2).filter(|&k| pattern.contains(&self.alice[k])).collect();
        let b: Vec<usize> = (0..2).filter(|&k| pattern.contains(&self.bob[k])).collect();
        match (a.as_slice(), b.as_slice()) {
            ([0], [0]) => Some(Coincidence::PlusPlus),
            ([0], [1]) => Some(Coincidence::PlusMinus),
            ([1], [0]) => Some(Coincidence::MinusPlus),
            ([1], [1]) => Some(Coincidence::MinusMinus),
            _ => None,
        }
    }

    /// Unnormalised probabilities of the four coincidences.
    pub fn coincidence_probabilities(&self, dist: &OutcomeDistribution) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (pattern, p) in dist.iter() {
            if let Some(c) = self.classify(pattern) {
                out[c as usize] += p;
            }
        }
        out
    }
}

/// Keeps cross-side coincidences and renormalises.
pub fn post_select(dist: &OutcomeDistribution, rule: &CoincidenceRule) -> Result<(OutcomeDistribution, f64)> {
    let kept: BTreeMap<ClickPattern, f64> = dist
        .iter()
        .filter(|(pattern, _)| rule.classify(pattern).is_some())
        .map(|(k, v)| (k.clone(), *v))
        .collect();
    let acceptance: f64 = kept.values().sum();
    if !(acceptance > 0.0) {
        return Err(SimError::ZeroAcceptance);
    }
    let probs = kept.into_iter().map(|(k, v)| (k, v / acceptance)).collect();
    Ok((OutcomeDistribution { probs }, acceptance))
}

/// Conditional polarization state of the cross-side events, one ensemble
/// member per pair of temporal components. Also returns the acceptance.
pub fn conditional_polarization_ensemble(
    state: &FockState,
    detectors: &DetectorMap,
    rule: &CoincidenceRule,
) -> Result<(PolarizationEnsemble, f64)> {
    let mut sectors: BTreeMap<(u32, u32), [Complex64; 4]> = BTreeMap::new();
    let mut seen_alice: BTreeMap<_, PathId> = BTreeMap::new();
    let mut seen_bob: BTreeMap<_, PathId> = BTreeMap::new();
    let total = state.norm_sqr();
    for (occ, amp) in state.terms() {
        if occ.photon_number() != 2 {
            return Err(SimError::NotTwoPhoton(occ.photon_number()));
        }
        let mut alice = None;
        let mut bob = None;
        for photon in occ.photons() {
            let d = detectors
                .get(&photon.path)
                .ok_or_else(|| SimError::UnmappedPath(photon.path.to_string()))?;
            match rule.side(d) {
                Some(Side::Alice) if alice.is_none() => alice = Some(photon),
                Some(Side::Bob) if bob.is_none() => bob = Some(photon),
                _ => {
                    alice = None;
                    bob = None;
                    break;
                }
            }
        }
        let (Some(a), Some(b)) = (alice, bob) else {
            continue;
        };
        for (seen, m, side) in [(&mut seen_alice, a, "alice"), (&mut seen_bob, b, "bob")] {
            let prev = seen.entry(m.polarization).or_insert_with(|| m.path.clone());
            if *prev != m.path {
                return Err(SimError::AmbiguousSide(side));
            }
        }
        let slot = sectors
            .entry((a.temporal, b.temporal))
            .or_insert([Complex64::new(0.0, 0.0); 4]);
        slot[TwoQubitState::index(a.polarization, b.polarization)] += amp;
    }
    let mut members = Vec::new();
    let mut accepted = 0.0;
    for amps in sectors.into_values() {
        let w: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if let Some(s) = TwoQubitState::new(amps) {
            accepted += w;
            members.push((w, s));
        }
    }
    if !(accepted > 0.0) {
        return Err(SimError::ZeroAcceptance);
    }
    for m in &mut members {
        m.0 /= accepted;
    }
    Ok((PolarizationEnsemble { members }, accepted / total))
}

/// Pure conditional state; fails when the photons are partly distinguishable.
pub fn conditional_polarization_state(
    state: &FockState,
    detectors: &DetectorMap,
    rule: &CoincidenceRule,
) -> Result<TwoQubitState> {
    let (ens, _) = conditional_polarization_ensemble(state, detectors, rule)?;
    let significant: Vec<_> = ens.members.iter().filter(|(w, _)| *w > 1e-12).collect();
    match significant.as_slice() {
        [(_, s)] => Ok(*s),
        many => Err(SimError::NotPure(many.len())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RandomSeed(pub u64);

impl RandomSeed {
    /// Independent stream for sub-task `index` (splitmix64 finaliser).
    pub fn derive(self, index: u64) -> RandomSeed {
        let mut z = self
            .0
            .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        RandomSeed(z ^ (z >> 31))
    }
}

/// Coincidence counts for one analyzer setting pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountsTable {
    pub n_pp: u64,
    pub n_pm: u64,
    pub n_mp: u64,
    pub n_mm: u64,
    pub setting: MeasurementSetting,
}

impl CountsTable {
    pub fn new(counts: [u64; 4], setting: MeasurementSetting) -> Self {
        let [n_pp, n_pm, n_mp, n_mm] = counts;
        CountsTable {
            n_pp,
            n_pm,
            n_mp,
            n_mm,
            setting,
        }
    }

    pub fn as_array(&self) -> [u64; 4] {
        [self.n_pp, self.n_pm, self.n_mp, self.n_mm]
    }

    pub fn total(&self) -> u64 {
        self.as_array().iter().sum()
    }
}

/// Independent Poisson counts with means `p_i * mean_total_pairs`.
pub fn sample_counts(
    probs: [f64; 4],
    mean_total_pairs: f64,
    setting: MeasurementSetting,
    seed: RandomSeed,
) -> Result<CountsTable> {
    sample_counts_with_accidentals(probs, mean_total_pairs, 0.0, setting, seed)
}

/// As [`sample_counts`] with a constant mean of accidental coincidences added
/// to every channel.
pub fn sample_counts_with_accidentals(
    probs: [f64; 4],
    mean_total_pairs: f64,
    accidentals_per_channel: f64,
    setting: MeasurementSetting,
    seed: RandomSeed,
) -> Result<CountsTable> {
    if probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
        return Err(SimError::InvalidDistribution(format!("{probs:?}")));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(SimError::InvalidDistribution(format!("sums to {sum}")));
    }
    if !(mean_total_pairs > 0.0) || !mean_total_pairs.is_finite() {
        return Err(SimError::InvalidMean(mean_total_pairs));
    }
    if !(accidentals_per_channel >= 0.0) {
        return Err(SimError::InvalidMean(accidentals_per_channel));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.0);
    let mut counts = [0u64; 4];
    for (n, p) in counts.iter_mut().zip(probs) {
        let lambda = p * mean_total_pairs + accidentals_per_channel;
        if lambda > 0.0 {
            let dist = Poisson::new(lambda).map_err(|e| SimError::InvalidDistribution(e.to_string()))?;
            *n = dist.sample(&mut rng) as u64;
        }
    }
    Ok(CountsTable::new(counts, setting))
}
