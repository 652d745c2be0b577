//! Few-photon bosonic states over labeled modes.
//!
//! A mode is a (spatial path, polarization, temporal component) triple. States
//! are stored sparsely as a map from occupation multisets to complex Fock
//! amplitudes. Every optical element is a linear substitution of creation
//! operators; [`FockState::transform`] expands the substituted monomials and
//! folds the `sqrt(n!)` normalisation of multiply occupied modes back in.
//!
//! Temporal components are orthonormal by construction. A delay that makes a
//! photon partially distinguishable splits its reference component into an
//! overlap part and a freshly allocated orthogonal component.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Result, SimError};

/// Amplitudes smaller than this are dropped after every element.
pub const DEFAULT_PRUNE: f64 = 1e-12;

/// Symbolic spatial path name.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PathId(Arc<str>);

impl PathId {
    pub fn new(name: &str) -> Self {
        PathId(Arc::from(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for PathId {
    fn from(s: &str) -> Self {
        PathId::new(s)
    }
}

impl fmt::Debug for PathId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for PathId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Polarization {
    H,
    V,
}

impl Polarization {
    pub fn index(self) -> usize {
        match self {
            Polarization::H => 0,
            Polarization::V => 1,
        }
    }
}

/// One single-photon mode.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModeLabel {
    pub path: PathId,
    pub polarization: Polarization,
    /// Index into the orthonormal temporal register; 0 is the reference packet.
    pub temporal: u32,
}

impl ModeLabel {
    pub fn new(path: impl Into<PathId>, polarization: Polarization) -> Self {
        ModeLabel {
            path: path.into(),
            polarization,
            temporal: 0,
        }
    }

    pub fn with_temporal(mut self, temporal: u32) -> Self {
        self.temporal = temporal;
        self
    }

    fn with_path(&self, path: &PathId) -> Self {
        ModeLabel {
            path: path.clone(),
            polarization: self.polarization,
            temporal: self.temporal,
        }
    }

    fn with_polarization(&self, polarization: Polarization) -> Self {
        ModeLabel {
            path: self.path.clone(),
            polarization,
            temporal: self.temporal,
        }
    }
}

impl fmt::Debug for ModeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{:?}", self.path, self.polarization)?;
        if self.temporal != 0 {
            write!(f, "'{}", self.temporal)?;
        }
        Ok(())
    }
}

/// Occupation of a Fock basis vector, stored as the sorted multiset of the
/// modes of its photons.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Occupation(Vec<ModeLabel>);

impl Occupation {
    pub fn new(mut modes: Vec<ModeLabel>) -> Self {
        modes.sort();
        Occupation(modes)
    }

    pub fn vacuum() -> Self {
        Occupation(Vec::new())
    }

    pub fn photon_number(&self) -> usize {
        self.0.len()
    }

    /// Photons in sorted order, one entry per photon.
    pub fn photons(&self) -> &[ModeLabel] {
        &self.0
    }

    /// Distinct modes with their occupation numbers.
    pub fn counts(&self) -> Vec<(&ModeLabel, usize)> {
        let mut out: Vec<(&ModeLabel, usize)> = Vec::new();
        for m in &self.0 {
            match out.last_mut() {
                Some((last, n)) if *last == m => *n += 1,
                _ => out.push((m, 1)),
            }
        }
        out
    }

    /// `sqrt(prod n_i!)`, the norm of the corresponding creation monomial.
    fn monomial_norm(&self) -> f64 {
        self.counts()
            .iter()
            .map(|(_, n)| (1..=*n).product::<usize>() as f64)
            .product::<f64>()
            .sqrt()
    }
}

impl fmt::Debug for Occupation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|")?;
        for (i, (m, n)) in self.counts().iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{}_{:?}", n, m)?;
        }
        write!(f, ">")
    }
}

/// Gaussian temporal wavepacket.
///
/// The amplitude is `exp(-(t - center)^2 / (2 width^2))`, so `width` is the
/// 1/e half-width of the intensity profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemporalWavepacket {
    pub center_fs: f64,
    pub width_fs: f64,
}

impl TemporalWavepacket {
    pub fn new(center_fs: f64, width_fs: f64) -> Result<Self> {
        if !(width_fs > 0.0) || !width_fs.is_finite() {
            return Err(SimError::InvalidWidth(width_fs));
        }
        Ok(TemporalWavepacket { center_fs, width_fs })
    }

    pub fn shifted(&self, delay_fs: f64) -> Self {
        TemporalWavepacket {
            center_fs: self.center_fs + delay_fs,
            width_fs: self.width_fs,
        }
    }
}

impl Default for TemporalWavepacket {
    fn default() -> Self {
        TemporalWavepacket {
            center_fs: 0.0,
            width_fs: 100.0,
        }
    }
}

/// Normalised amplitude overlap of two Gaussian wavepackets.
///
/// Equal widths at relative delay `tau` give `exp(-tau^2 / (4 width^2))`.
pub fn temporal_overlap(w1: &TemporalWavepacket, w2: &TemporalWavepacket) -> f64 {
    if w1 == w2 {
        return 1.0;
    }
    let (s1, s2) = (w1.width_fs, w2.width_fs);
    let var = s1 * s1 + s2 * s2;
    let tau = w1.center_fs - w2.center_fs;
    let prefactor = (2.0 * s1 * s2 / var).sqrt();
    (prefactor * (-tau * tau / (2.0 * var)).exp()).clamp(0.0, 1.0)
}

/// Source presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourcePreset {
    /// `(|H>|H> + |V>|V>)/sqrt(2)`; the plus sign as written.
    PhiPlusSign,
    /// `|V>|V>`, the interferometer input after filtering.
    VVInput,
}

/// Sparse pure state with a running record of post-selected loss.
#[derive(Clone, PartialEq)]
pub struct FockState {
    terms: BTreeMap<Occupation, Complex64>,
    norm_deficit: f64,
    prune: f64,
}

impl fmt::Debug for FockState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.terms.iter()).finish()
    }
}

impl FockState {
    pub fn vacuum() -> Self {
        Self::from_terms([(Occupation::vacuum(), Complex64::new(1.0, 0.0))])
    }

    /// Builds a state from explicit terms. Amplitudes are taken as given.
    pub fn from_terms(terms: impl IntoIterator<Item = (Occupation, Complex64)>) -> Self {
        let mut map = BTreeMap::new();
        for (occ, amp) in terms {
            *map.entry(occ).or_insert(Complex64::new(0.0, 0.0)) += amp;
        }
        let mut state = FockState {
            terms: map,
            norm_deficit: 0.0,
            prune: DEFAULT_PRUNE,
        };
        state.prune_small();
        state
    }

    /// Single photon in `mode`.
    pub fn single(mode: ModeLabel) -> Self {
        Self::from_terms([(Occupation::new(vec![mode]), Complex64::new(1.0, 0.0))])
    }

    pub fn source(preset: SourcePreset, p1: &PathId, p2: &PathId) -> Result<Self> {
        if p1 == p2 {
            return Err(SimError::IdenticalPaths(p1.to_string()));
        }
        let pair = |pol| Occupation::new(vec![ModeLabel::new(p1.clone(), pol), ModeLabel::new(p2.clone(), pol)]);
        Ok(match preset {
            SourcePreset::PhiPlusSign => {
                let a = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
                Self::from_terms([(pair(Polarization::H), a), (pair(Polarization::V), a)])
            }
            SourcePreset::VVInput => Self::from_terms([(pair(Polarization::V), Complex64::new(1.0, 0.0))]),
        })
    }

    pub fn with_prune_threshold(mut self, prune: f64) -> Self {
        self.prune = prune;
        self.prune_small();
        self
    }

    pub fn prune_threshold(&self) -> f64 {
        self.prune
    }

    /// Probability removed by lossy elements since the source.
    pub fn norm_deficit(&self) -> f64 {
        self.norm_deficit
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Occupation, &Complex64)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn amplitude(&self, occ: &Occupation) -> Complex64 {
        self.terms.get(occ).copied().unwrap_or_default()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.terms.values().map(|a| a.norm_sqr()).sum()
    }

    /// Photon numbers that occur in the state, ascending.
    pub fn photon_numbers(&self) -> BTreeSet<usize> {
        self.terms.keys().map(Occupation::photon_number).collect()
    }

    /// Paths that carry at least one photon in some term.
    pub fn populated_paths(&self) -> BTreeSet<PathId> {
        self.terms
            .keys()
            .flat_map(|o| o.photons().iter().map(|m| m.path.clone()))
            .collect()
    }

    fn max_temporal(&self) -> u32 {
        self.terms
            .keys()
            .flat_map(|o| o.photons().iter().map(|m| m.temporal))
            .max()
            .unwrap_or(0)
    }

    fn prune_small(&mut self) {
        let prune = self.prune;
        self.terms.retain(|_, a| a.norm() >= prune);
    }

    /// Applies a linear substitution of creation operators. `map` returns the
    /// image of a mode, or `None` when the mode is left untouched.
    pub fn transform<F>(&self, map: F) -> FockState
    where
        F: Fn(&ModeLabel) -> Option<Vec<(ModeLabel, Complex64)>>,
    {
        let mut out: BTreeMap<Occupation, Complex64> = BTreeMap::new();
        for (occ, amp) in &self.terms {
            let mut partial: Vec<(Vec<ModeLabel>, Complex64)> =
                vec![(Vec::with_capacity(occ.photon_number()), amp / occ.monomial_norm())];
            for photon in occ.photons() {
                let image = map(photon).unwrap_or_else(|| vec![(photon.clone(), Complex64::new(1.0, 0.0))]);
                let mut next = Vec::with_capacity(partial.len() * image.len());
                for (modes, coeff) in &partial {
                    for (m, u) in &image {
                        if u.norm_sqr() == 0.0 {
                            continue;
                        }
                        let mut modes = modes.clone();
                        modes.push(m.clone());
                        next.push((modes, coeff * u));
                    }
                }
                partial = next;
            }
            for (modes, coeff) in partial {
                let occ = Occupation::new(modes);
                let a = coeff * occ.monomial_norm();
                *out.entry(occ).or_insert(Complex64::new(0.0, 0.0)) += a;
            }
        }
        let mut state = FockState {
            terms: out,
            norm_deficit: self.norm_deficit,
            prune: self.prune,
        };
        state.prune_small();
        state
    }

    /// Lossless beamsplitter: `a -> sqrt(t) a + i sqrt(r) b`,
    /// `b -> i sqrt(r) a + sqrt(t) b`, on every polarization and temporal index.
    pub fn apply_beamsplitter(&self, path_a: &PathId, path_b: &PathId, reflectivity: f64) -> Result<FockState> {
        if !(0.0..=1.0).contains(&reflectivity) {
            return Err(SimError::ReflectivityOutOfRange(reflectivity));
        }
        if path_a == path_b {
            return Err(SimError::IdenticalPaths(path_a.to_string()));
        }
        let t = Complex64::new((1.0 - reflectivity).sqrt(), 0.0);
        let r = Complex64::new(0.0, reflectivity.sqrt());
        Ok(self.transform(|m| {
            if &m.path == path_a {
                Some(vec![(m.clone(), t), (m.with_path(path_b), r)])
            } else if &m.path == path_b {
                Some(vec![(m.with_path(path_a), r), (m.clone(), t)])
            } else {
                None
            }
        }))
    }

    /// Polarizing beamsplitter: H transmits, V crosses to the other path
    /// picking up a factor `i`.
    pub fn apply_pbs(&self, path_a: &PathId, path_b: &PathId) -> Result<FockState> {
        if path_a == path_b {
            return Err(SimError::IdenticalPaths(path_a.to_string()));
        }
        let i = Complex64::new(0.0, 1.0);
        Ok(self.transform(|m| {
            if m.polarization == Polarization::H {
                return None;
            }
            if &m.path == path_a {
                Some(vec![(m.with_path(path_b), i)])
            } else if &m.path == path_b {
                Some(vec![(m.with_path(path_a), i)])
            } else {
                None
            }
        }))
    }

    /// Half-wave plate with fast axis at `angle_deg`.
    pub fn apply_hwp(&self, path: &PathId, angle_deg: f64) -> FockState {
        let two_theta = 2.0 * angle_deg.to_radians();
        let (s, c) = two_theta.sin_cos();
        let (s, c) = (Complex64::new(s, 0.0), Complex64::new(c, 0.0));
        self.transform(|m| {
            if &m.path != path {
                return None;
            }
            let h = m.with_polarization(Polarization::H);
            let v = m.with_polarization(Polarization::V);
            Some(match m.polarization {
                Polarization::H => vec![(h, c), (v, s)],
                Polarization::V => vec![(h, s), (v, -c)],
            })
        })
    }

    pub fn apply_phase(&self, path: &PathId, phi_rad: f64) -> FockState {
        let phase = Complex64::from_polar(1.0, phi_rad);
        self.transform(|m| (&m.path == path).then(|| vec![(m.clone(), phase)]))
    }

    /// Removes every term with a photon of the blocked polarization on `path`
    /// and renormalises. Returns the state and the surviving probability.
    pub fn apply_polarizer(&self, path: &PathId, pass: Polarization) -> Result<(FockState, f64)> {
        let before = self.norm_sqr();
        let kept: BTreeMap<_, _> = self
            .terms
            .iter()
            .filter(|(occ, _)| occ.photons().iter().all(|m| &m.path != path || m.polarization == pass))
            .map(|(o, a)| (o.clone(), *a))
            .collect();
        let after: f64 = kept.values().map(|a| a.norm_sqr()).sum();
        if kept.is_empty() || after <= 0.0 {
            return Err(SimError::NothingSurvives(path.to_string()));
        }
        let p = after / before;
        let scale = 1.0 / after.sqrt();
        let state = FockState {
            terms: kept.into_iter().map(|(o, a)| (o, a * scale)).collect(),
            norm_deficit: 1.0 - (1.0 - self.norm_deficit) * p,
            prune: self.prune,
        };
        Ok((state, p))
    }

    /// Splits every reference-component photon on `path` into
    /// `gamma * (component 0) + sqrt(1 - gamma^2) * (fresh component)`.
    /// Photons already in a non-reference component are left alone.
    pub fn split_temporal(&self, path: &PathId, gamma: f64) -> FockState {
        let gamma = gamma.clamp(0.0, 1.0);
        if gamma == 1.0 {
            return self.clone();
        }
        let fresh = self.max_temporal() + 1;
        let keep = Complex64::new(gamma, 0.0);
        let leak = Complex64::new((1.0 - gamma * gamma).sqrt(), 0.0);
        self.transform(|m| {
            (&m.path == path && m.temporal == 0)
                .then(|| vec![(m.clone(), keep), (m.clone().with_temporal(fresh), leak)])
        })
    }

    /// Recentres the wavepackets on `path` by `delay_fs` relative to `reference`.
    pub fn set_delay(&self, path: &PathId, reference: &TemporalWavepacket, delay_fs: f64) -> FockState {
        let gamma = temporal_overlap(reference, &reference.shifted(delay_fs));
        self.split_temporal(path, gamma)
    }

    /// `<self|other>` without normalisation.
    pub fn inner(&self, other: &FockState) -> Complex64 {
        self.terms
            .iter()
            .filter_map(|(o, a)| other.terms.get(o).map(|b| a.conj() * b))
            .sum()
    }

    /// `|<reference|self>|^2`, normalised by both norms.
    pub fn fidelity(&self, reference: &FockState) -> Result<f64> {
        let (n1, n2) = (self.photon_numbers(), reference.photon_numbers());
        if n1 != n2 {
            return Err(SimError::MismatchedRegister(format!("photon numbers {n1:?} vs {n2:?}")));
        }
        let denom = self.norm_sqr() * reference.norm_sqr();
        if denom == 0.0 {
            return Err(SimError::MismatchedRegister("zero-norm state".into()));
        }
        Ok((reference.inner(self).norm_sqr() / denom).clamp(0.0, 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn p(s: &str) -> PathId {
        PathId::new(s)
    }

    fn occ(modes: &[(&str, Polarization)]) -> Occupation {
        Occupation::new(modes.iter().map(|(p, pol)| ModeLabel::new(*p, *pol)).collect())
    }

    use Polarization::{H, V};

    #[test]
    fn vv_source() {
        let s = FockState::source(SourcePreset::VVInput, &p("a1"), &p("a2")).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.amplitude(&occ(&[("a1", V), ("a2", V)])), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn phi_source_and_filter() {
        let s = FockState::source(SourcePreset::PhiPlusSign, &p("a1"), &p("a2")).unwrap();
        assert_abs_diff_eq!(s.amplitude(&occ(&[("a1", H), ("a2", H)])).re, FRAC_1_SQRT_2);
        assert_abs_diff_eq!(s.amplitude(&occ(&[("a1", V), ("a2", V)])).re, FRAC_1_SQRT_2);
        let (s1, p1) = s.apply_polarizer(&p("a1"), V).unwrap();
        let (s2, p2) = s1.apply_polarizer(&p("a2"), V).unwrap();
        assert_abs_diff_eq!(p1 * p2, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s2.norm_deficit(), 0.5, epsilon = 1e-15);
        let vv = FockState::source(SourcePreset::VVInput, &p("a1"), &p("a2")).unwrap();
        assert_abs_diff_eq!(s2.fidelity(&vv).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn identical_source_paths_rejected() {
        assert!(matches!(
            FockState::source(SourcePreset::VVInput, &p("x"), &p("x")),
            Err(SimError::IdenticalPaths(_))
        ));
    }

    #[test]
    fn beamsplitter_single_photon() {
        let s = FockState::single(ModeLabel::new("a", H))
            .apply_beamsplitter(&p("a"), &p("b"), 0.5)
            .unwrap();
        assert_abs_diff_eq!(s.amplitude(&occ(&[("a", H)])).re, FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(s.amplitude(&occ(&[("b", H)])).im, FRAC_1_SQRT_2, epsilon = 1e-15);
    }

    #[test]
    fn beamsplitter_vacuum_untouched() {
        let s = FockState::vacuum().apply_beamsplitter(&p("a"), &p("b"), 0.3).unwrap();
        assert_eq!(s, FockState::vacuum());
    }

    #[test]
    fn beamsplitter_bunching() {
        let s = FockState::from_terms([(occ(&[("a", V), ("b", V)]), Complex64::new(1.0, 0.0))])
            .apply_beamsplitter(&p("a"), &p("b"), 0.5)
            .unwrap();
        assert_eq!(s.amplitude(&occ(&[("a", V), ("b", V)])), Complex64::new(0.0, 0.0));
        // i/sqrt(2) on each of |2_a> and |2_b>
        assert_abs_diff_eq!(
            s.amplitude(&occ(&[("a", V), ("a", V)])).im,
            FRAC_1_SQRT_2,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            s.amplitude(&occ(&[("b", V), ("b", V)])).im,
            FRAC_1_SQRT_2,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(s.norm_sqr(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn beamsplitter_rejects_bad_reflectivity() {
        let s = FockState::vacuum();
        assert!(matches!(
            s.apply_beamsplitter(&p("a"), &p("b"), 1.5),
            Err(SimError::ReflectivityOutOfRange(_))
        ));
        assert!(s.apply_beamsplitter(&p("a"), &p("b"), -0.1).is_err());
    }

    #[test]
    fn pbs_conventions() {
        let h = FockState::single(ModeLabel::new("a", H))
            .apply_pbs(&p("a"), &p("b"))
            .unwrap();
        assert_eq!(h, FockState::single(ModeLabel::new("a", H)));

        let v = FockState::single(ModeLabel::new("a", V))
            .apply_pbs(&p("a"), &p("b"))
            .unwrap();
        assert_eq!(v.amplitude(&occ(&[("b", V)])), Complex64::new(0.0, 1.0));

        let vv = FockState::from_terms([(occ(&[("a", V), ("b", V)]), Complex64::new(1.0, 0.0))])
            .apply_pbs(&p("a"), &p("b"))
            .unwrap();
        assert_eq!(vv.len(), 1);
        assert_abs_diff_eq!(vv.amplitude(&occ(&[("a", V), ("b", V)])).re, -1.0, epsilon = 1e-15);
    }

    #[test]
    fn hwp_examples() {
        let a = p("a");
        let s = FockState::single(ModeLabel::new("a", V)).apply_hwp(&a, 0.0);
        assert_abs_diff_eq!(s.amplitude(&occ(&[("a", V)])).re, -1.0);
        let s = FockState::single(ModeLabel::new("a", H)).apply_hwp(&a, 22.5);
        assert_abs_diff_eq!(s.amplitude(&occ(&[("a", H)])).re, FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(s.amplitude(&occ(&[("a", V)])).re, FRAC_1_SQRT_2, epsilon = 1e-15);
        let s = FockState::single(ModeLabel::new("a", V)).apply_hwp(&a, 45.0);
        assert_eq!(s.len(), 1);
        assert_abs_diff_eq!(s.amplitude(&occ(&[("a", H)])).re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn phase_examples() {
        let a = p("a");
        let one = FockState::single(ModeLabel::new("a", H));
        assert_eq!(one.apply_phase(&a, 0.0), one);
        assert_abs_diff_eq!(one.apply_phase(&a, PI).amplitude(&occ(&[("a", H)])).re, -1.0);
        let two = FockState::from_terms([(occ(&[("a", H), ("a", V)]), Complex64::new(1.0, 0.0))]);
        let amp = two.apply_phase(&a, 0.3).amplitude(&occ(&[("a", H), ("a", V)]));
        assert_abs_diff_eq!(amp.arg(), 0.6, epsilon = 1e-15);
    }

    #[test]
    fn polarizer_examples() {
        let a = p("a");
        let v = FockState::single(ModeLabel::new("a", V));
        let (s, prob) = v.apply_polarizer(&a, V).unwrap();
        assert_eq!(s, v);
        assert_eq!(prob, 1.0);
        assert!(matches!(v.apply_polarizer(&a, H), Err(SimError::NothingSurvives(_))));
    }

    #[test]
    fn overlap_closed_form() {
        let w = TemporalWavepacket::new(0.0, 80.0).unwrap();
        assert_eq!(temporal_overlap(&w, &w), 1.0);
        let tau = 50.0;
        assert_abs_diff_eq!(
            temporal_overlap(&w, &w.shifted(tau)),
            (-tau * tau / (4.0 * 80.0 * 80.0)).exp(),
            epsilon = 1e-15
        );
        assert!(temporal_overlap(&w, &w.shifted(1e5)) < 1e-300);
        assert!(TemporalWavepacket::new(0.0, 0.0).is_err());
    }

    /// Simpson quadrature of the normalised amplitude overlap.
    fn overlap_quadrature(w1: &TemporalWavepacket, w2: &TemporalWavepacket) -> f64 {
        let f = |w: &TemporalWavepacket, t: f64| (-(t - w.center_fs).powi(2) / (2.0 * w.width_fs.powi(2))).exp();
        let lo = w1.center_fs.min(w2.center_fs) - 12.0 * w1.width_fs.max(w2.width_fs);
        let hi = w1.center_fs.max(w2.center_fs) + 12.0 * w1.width_fs.max(w2.width_fs);
        let n = 20_000;
        let h = (hi - lo) / n as f64;
        let simpson = |g: &dyn Fn(f64) -> f64| {
            let mut acc = g(lo) + g(hi);
            for k in 1..n {
                acc += if k % 2 == 1 { 4.0 } else { 2.0 } * g(lo + k as f64 * h);
            }
            acc * h / 3.0
        };
        let cross = simpson(&|t| f(w1, t) * f(w2, t));
        let n1 = simpson(&|t| f(w1, t) * f(w1, t));
        let n2 = simpson(&|t| f(w2, t) * f(w2, t));
        cross / (n1 * n2).sqrt()
    }

    #[test]
    fn overlap_matches_quadrature() {
        let cases = [
            (
                TemporalWavepacket::new(0.0, 100.0).unwrap(),
                TemporalWavepacket::new(120.0, 100.0).unwrap(),
            ),
            (
                TemporalWavepacket::new(-30.0, 60.0).unwrap(),
                TemporalWavepacket::new(40.0, 140.0).unwrap(),
            ),
            (
                TemporalWavepacket::new(0.0, 50.0).unwrap(),
                TemporalWavepacket::new(0.0, 75.0).unwrap(),
            ),
        ];
        for (a, b) in cases {
            assert_abs_diff_eq!(temporal_overlap(&a, &b), overlap_quadrature(&a, &b), epsilon = 1e-10);
            assert_abs_diff_eq!(temporal_overlap(&a, &b), temporal_overlap(&b, &a), epsilon = 1e-15);
        }
    }

    #[test]
    fn delay_limits() {
        let a = p("a");
        let w = TemporalWavepacket::default();
        let one = FockState::single(ModeLabel::new("a", H));
        assert_eq!(one.set_delay(&a, &w, 0.0), one);
        let far = one.set_delay(&a, &w, 1e4);
        assert_eq!(far.len(), 1);
        assert_abs_diff_eq!(
            far.amplitude(&Occupation::new(vec![ModeLabel::new("a", H).with_temporal(1)]))
                .re,
            1.0
        );
        let partial = one.set_delay(&a, &w, 100.0);
        let g = (-0.25f64).exp();
        assert_abs_diff_eq!(partial.amplitude(&occ(&[("a", H)])).re, g, epsilon = 1e-15);
        assert_abs_diff_eq!(partial.norm_sqr(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn fidelity_examples() {
        let a = FockState::single(ModeLabel::new("a", H));
        let b = FockState::single(ModeLabel::new("a", V));
        assert_abs_diff_eq!(a.fidelity(&a).unwrap(), 1.0);
        assert_eq!(a.fidelity(&b).unwrap(), 0.0);
        let two = FockState::source(SourcePreset::VVInput, &p("x"), &p("y")).unwrap();
        assert!(matches!(a.fidelity(&two), Err(SimError::MismatchedRegister(_))));
    }

    #[test]
    fn hwp_is_an_involution() {
        let s = FockState::source(SourcePreset::PhiPlusSign, &p("a"), &p("b")).unwrap();
        for angle in [0.0, 13.0, 22.5, 61.2, 90.0] {
            let back = s.apply_hwp(&p("a"), angle).apply_hwp(&p("a"), angle);
            assert_abs_diff_eq!(back.fidelity(&s).unwrap(), 1.0, epsilon = 1e-12);
        }
    }
}
