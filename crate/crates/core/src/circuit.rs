//! Interferometers as ordered element lists.
//!
//! [`Circuit::evolve`] pushes a [`FockState`] through the elements one by one.
//! [`Circuit::transfer_matrix`] compiles the same list into a single-photon
//! mode matrix over the (path x polarization) basis. The two routes are
//! written independently so each can serve as the other's oracle.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::detection::{DetectorId, DetectorMap};
use crate::error::{Result, SimError};
use crate::state::{temporal_overlap, FockState, PathId, Polarization, SourcePreset, TemporalWavepacket};

#[derive(Debug, Clone, PartialEq)]
pub enum Element {
    BeamSplitter {
        path_a: PathId,
        path_b: PathId,
        reflectivity: f64,
    },
    PolarizingBS {
        path_a: PathId,
        path_b: PathId,
    },
    HalfWavePlate {
        path: PathId,
        angle_deg: f64,
    },
    PhaseShift {
        path: PathId,
        phi_rad: f64,
    },
    Polarizer {
        path: PathId,
        pass_axis: Polarization,
    },
    Delay {
        path: PathId,
        delay_fs: f64,
    },
}

impl Element {
    fn paths(&self) -> Vec<&PathId> {
        match self {
            Element::BeamSplitter { path_a, path_b, .. } | Element::PolarizingBS { path_a, path_b } => {
                vec![path_a, path_b]
            }
            Element::HalfWavePlate { path, .. }
            | Element::PhaseShift { path, .. }
            | Element::Polarizer { path, .. }
            | Element::Delay { path, .. } => vec![path],
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Element::BeamSplitter { .. } => "beamsplitter",
            Element::PolarizingBS { .. } => "polarizing beamsplitter",
            Element::HalfWavePlate { .. } => "half-wave plate",
            Element::PhaseShift { .. } => "phase shift",
            Element::Polarizer { .. } => "polarizer",
            Element::Delay { .. } => "delay",
        }
    }
}

/// Single-photon mode matrix. Row/column `2 * path_index + polarization`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferMatrix {
    pub paths: Vec<PathId>,
    pub matrix: DMatrix<Complex64>,
}

impl TransferMatrix {
    pub fn index(&self, path: &PathId, pol: Polarization) -> Option<usize> {
        self.paths.iter().position(|p| p == path).map(|i| 2 * i + pol.index())
    }

    /// Largest entry of `U^dagger U - 1`.
    pub fn unitarity_error(&self) -> f64 {
        let n = self.matrix.nrows();
        let product = self.matrix.adjoint() * &self.matrix;
        (product - DMatrix::<Complex64>::identity(n, n))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    paths: Vec<PathId>,
    elements: Vec<Element>,
    wavepacket: TemporalWavepacket,
    mode_overlap: f64,
}

impl Circuit {
    pub fn new<I, P>(paths: I, wavepacket: TemporalWavepacket) -> Self
    where
        I: IntoIterator<Item = P>,
        P: Into<PathId>,
    {
        let mut out: Vec<PathId> = Vec::new();
        for p in paths {
            let p = p.into();
            if !out.contains(&p) {
                out.push(p);
            }
        }
        Circuit {
            paths: out,
            elements: Vec::new(),
            wavepacket,
            mode_overlap: 1.0,
        }
    }

    /// Scalar multiplier on every delay overlap; folds in spatial mode mismatch.
    pub fn with_mode_overlap(mut self, overlap: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&overlap) {
            return Err(SimError::InvalidModeOverlap(overlap));
        }
        self.mode_overlap = overlap;
        Ok(self)
    }

    pub fn push(&mut self, element: Element) -> Result<()> {
        for p in element.paths() {
            if !self.paths.contains(p) {
                return Err(SimError::UndeclaredPath(p.to_string()));
            }
        }
        if let Element::BeamSplitter { reflectivity, .. } = element {
            if !(0.0..=1.0).contains(&reflectivity) {
                return Err(SimError::ReflectivityOutOfRange(reflectivity));
            }
        }
        self.elements.push(element);
        Ok(())
    }

    pub fn with(mut self, element: Element) -> Result<Self> {
        self.push(element)?;
        Ok(self)
    }

    pub fn paths(&self) -> &[PathId] {
        &self.paths
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn wavepacket(&self) -> &TemporalWavepacket {
        &self.wavepacket
    }

    pub fn mode_overlap(&self) -> f64 {
        self.mode_overlap
    }

    /// Runs `state` through every element in order. The returned probability
    /// is the product of the polarizer pass probabilities.
    pub fn evolve(&self, state: &FockState) -> Result<(FockState, f64)> {
        if let Some(p) = state.populated_paths().into_iter().find(|p| !self.paths.contains(p)) {
            return Err(SimError::UndeclaredPath(p.to_string()));
        }
        let mut current = state.clone();
        let mut survival = 1.0;
        for element in &self.elements {
            current = match element {
                Element::BeamSplitter {
                    path_a,
                    path_b,
                    reflectivity,
                } => current.apply_beamsplitter(path_a, path_b, *reflectivity)?,
                Element::PolarizingBS { path_a, path_b } => current.apply_pbs(path_a, path_b)?,
                Element::HalfWavePlate { path, angle_deg } => current.apply_hwp(path, *angle_deg),
                Element::PhaseShift { path, phi_rad } => current.apply_phase(path, *phi_rad),
                Element::Polarizer { path, pass_axis } => {
                    let (next, p) = current.apply_polarizer(path, *pass_axis)?;
                    survival *= p;
                    next
                }
                Element::Delay { path, delay_fs } => {
                    let gamma =
                        self.mode_overlap * temporal_overlap(&self.wavepacket, &self.wavepacket.shifted(*delay_fs));
                    current.split_temporal(path, gamma)
                }
            };
        }
        Ok((current, survival))
    }

    /// Compiles the lossless element list into a mode matrix. Delays act as
    /// the identity on the temporal-agnostic basis.
    pub fn transfer_matrix(&self) -> Result<TransferMatrix> {
        let n = 2 * self.paths.len();
        let idx = |p: &PathId, pol: Polarization| {
            2 * self.paths.iter().position(|q| q == p).expect("validated on push") + pol.index()
        };
        let zero = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        let i = Complex64::new(0.0, 1.0);
        let mut total = DMatrix::<Complex64>::identity(n, n);
        for element in &self.elements {
            let mut m = DMatrix::<Complex64>::identity(n, n);
            match element {
                Element::BeamSplitter {
                    path_a,
                    path_b,
                    reflectivity,
                } => {
                    let t = Complex64::new((1.0 - reflectivity).sqrt(), 0.0);
                    let r = i * reflectivity.sqrt();
                    for pol in [Polarization::H, Polarization::V] {
                        let (a, b) = (idx(path_a, pol), idx(path_b, pol));
                        m[(a, a)] = t;
                        m[(b, b)] = t;
                        m[(a, b)] = r;
                        m[(b, a)] = r;
                    }
                }
                Element::PolarizingBS { path_a, path_b } => {
                    let (a, b) = (idx(path_a, Polarization::V), idx(path_b, Polarization::V));
                    m[(a, a)] = zero;
                    m[(b, b)] = zero;
                    m[(a, b)] = i;
                    m[(b, a)] = i;
                }
                Element::HalfWavePlate { path, angle_deg } => {
                    let (s, c) = (2.0 * angle_deg.to_radians()).sin_cos();
                    let (h, v) = (idx(path, Polarization::H), idx(path, Polarization::V));
                    m[(h, h)] = one * c;
                    m[(v, h)] = one * s;
                    m[(h, v)] = one * s;
                    m[(v, v)] = -one * c;
                }
                Element::PhaseShift { path, phi_rad } => {
                    let phase = Complex64::from_polar(1.0, *phi_rad);
                    for pol in [Polarization::H, Polarization::V] {
                        let k = idx(path, pol);
                        m[(k, k)] = phase;
                    }
                }
                Element::Delay { .. } => {}
                Element::Polarizer { .. } => return Err(SimError::NonUnitaryElement(element.name().into())),
            }
            total = m * total;
        }
        let tm = TransferMatrix {
            paths: self.paths.clone(),
            matrix: total,
        };
        let err = tm.unitarity_error();
        if err > 1e-10 {
            return Err(SimError::NotUnitary(err));
        }
        Ok(tm)
    }
}

/// Path names used by the entanglement interferometer preset.
///
/// Photon 1 enters on `a1`, photon 2 on `a2`. Each 50/50 splitter sends its
/// transmitted arm (`a1`, `a2`) to Bob and its reflected arm (`b1`, `b2`) to
/// Alice. The polarizing splitters recombine the arms so that Alice's beam
/// leaves on `b1` and Bob's on `a1`; the final analyzers split those beams into
/// `b1`/`alice_v` (D1/D2) and `a1`/`bob_v` (D3/D4).
pub mod nonlocal_paths {
    pub const A1: &str = "a1";
    pub const B1: &str = "b1";
    pub const A2: &str = "a2";
    pub const B2: &str = "b2";
    pub const ALICE_V: &str = "alice_v";
    pub const BOB_V: &str = "bob_v";
    pub const ALL: [&str; 6] = [A1, B1, A2, B2, ALICE_V, BOB_V];
}

/// Parameters of the two-photon entanglement interferometer.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlocalSetup {
    pub phi_rad: f64,
    /// Prism 1, in photon 1's arm towards Alice.
    pub delay1_fs: f64,
    /// Prism 2, on photon 1's input.
    pub delay2_fs: f64,
    /// Prism 3, in photon 2's arm towards Bob.
    pub delay3_fs: f64,
    /// Polarization analysis angles in degrees; the wave plate sits at half.
    /// `None` leaves that side unanalysed (beam on one detector).
    pub analyzer_alice_deg: Option<f64>,
    pub analyzer_bob_deg: Option<f64>,
    pub wavepacket: TemporalWavepacket,
    pub mode_overlap: f64,
}

impl Default for NonlocalSetup {
    fn default() -> Self {
        NonlocalSetup {
            phi_rad: 0.0,
            delay1_fs: 0.0,
            delay2_fs: 0.0,
            delay3_fs: 0.0,
            analyzer_alice_deg: None,
            analyzer_bob_deg: None,
            wavepacket: TemporalWavepacket::default(),
            mode_overlap: 1.0,
        }
    }
}

impl NonlocalSetup {
    pub fn with_phase(&self, phi_rad: f64) -> Self {
        NonlocalSetup {
            phi_rad,
            ..self.clone()
        }
    }

    pub fn with_analyzers(&self, alice_deg: f64, bob_deg: f64) -> Self {
        NonlocalSetup {
            analyzer_alice_deg: Some(alice_deg),
            analyzer_bob_deg: Some(bob_deg),
            ..self.clone()
        }
    }

    pub fn circuit(&self) -> Result<Circuit> {
        use nonlocal_paths::*;
        let p = PathId::new;
        let c = Circuit::new(ALL, self.wavepacket).with_mode_overlap(self.mode_overlap)?;
        let mut c = c
            // the source emits V; photon 1 is turned to H before BS1
            .with(Element::HalfWavePlate {
                path: p(A1),
                angle_deg: 45.0,
            })?
            .with(Element::Delay {
                path: p(A1),
                delay_fs: self.delay2_fs,
            })?
            .with(Element::BeamSplitter {
                path_a: p(A1),
                path_b: p(B1),
                reflectivity: 0.5,
            })?
            .with(Element::BeamSplitter {
                path_a: p(A2),
                path_b: p(B2),
                reflectivity: 0.5,
            })?
            .with(Element::PhaseShift {
                path: p(B2),
                phi_rad: self.phi_rad,
            })?
            .with(Element::Delay {
                path: p(B1),
                delay_fs: self.delay1_fs,
            })?
            .with(Element::Delay {
                path: p(A2),
                delay_fs: self.delay3_fs,
            })?
            .with(Element::PolarizingBS {
                path_a: p(B1),
                path_b: p(B2),
            })?
            .with(Element::PolarizingBS {
                path_a: p(A1),
                path_b: p(A2),
            })?;
        if let Some(alpha) = self.analyzer_alice_deg {
            c.push(Element::HalfWavePlate {
                path: p(B1),
                angle_deg: alpha / 2.0,
            })?;
            c.push(Element::PolarizingBS {
                path_a: p(B1),
                path_b: p(ALICE_V),
            })?;
        }
        if let Some(beta) = self.analyzer_bob_deg {
            c.push(Element::HalfWavePlate {
                path: p(A1),
                angle_deg: beta / 2.0,
            })?;
            c.push(Element::PolarizingBS {
                path_a: p(A1),
                path_b: p(BOB_V),
            })?;
        }
        Ok(c)
    }

    /// `|V>_a1 |V>_a2`.
    pub fn source() -> FockState {
        FockState::source(
            SourcePreset::VVInput,
            &PathId::new(nonlocal_paths::A1),
            &PathId::new(nonlocal_paths::A2),
        )
        .expect("distinct paths")
    }

    /// D1/D2 on Alice's side, D3/D4 on Bob's. The unused PBS ports go to
    /// detectors outside the coincidence logic.
    pub fn detector_map() -> DetectorMap {
        use nonlocal_paths::*;
        [
            (B1, "D1"),
            (ALICE_V, "D2"),
            (A1, "D3"),
            (BOB_V, "D4"),
            (B2, "X1"),
            (A2, "X2"),
        ]
        .into_iter()
        .map(|(p, d)| (PathId::new(p), DetectorId::new(d)))
        .collect::<BTreeMap<_, _>>()
    }
}

/// Builds the interferometer with both analyzers in place.
pub fn nonlocal_interferometer(
    phi_rad: f64,
    delay1_fs: f64,
    delay2_fs: f64,
    delay3_fs: f64,
    analyzer_alice_deg: f64,
    analyzer_bob_deg: f64,
) -> Circuit {
    NonlocalSetup {
        phi_rad,
        delay1_fs,
        delay2_fs,
        delay3_fs,
        analyzer_alice_deg: Some(analyzer_alice_deg),
        analyzer_bob_deg: Some(analyzer_bob_deg),
        ..NonlocalSetup::default()
    }
    .circuit()
    .expect("preset paths are declared")
}

/// Path names of the alignment bench.
pub mod hom_paths {
    pub const IN1: &str = "in1";
    pub const IN2: &str = "in2";
    pub const OUT_V: &str = "out_v";
    pub const ALL: [&str; 3] = [IN1, IN2, OUT_V];
}

/// Alignment bench for one side of the interferometer.
///
/// Two V photons arrive on `in1` and `in2`. Photon 1 is turned to H and
/// delayed, then a PBS merges both into `in1` (H transmitted, V reflected),
/// which is where the photons meet inside the real setup. A wave plate at
/// 22.5 deg and a second PBS analyse the merged beam in the diagonal basis,
/// which acts as a balanced splitter between the two polarization modes.
/// Coincidences between the two analyzer ports show the dip.
#[derive(Debug, Clone, PartialEq)]
pub struct HomBench {
    pub delay_fs: f64,
    pub wavepacket: TemporalWavepacket,
    pub mode_overlap: f64,
}

impl HomBench {
    pub fn new(delay_fs: f64) -> Self {
        HomBench {
            delay_fs,
            wavepacket: TemporalWavepacket::default(),
            mode_overlap: 1.0,
        }
    }

    pub fn circuit(&self) -> Result<Circuit> {
        use hom_paths::*;
        let p = PathId::new;
        Circuit::new(ALL, self.wavepacket)
            .with_mode_overlap(self.mode_overlap)?
            .with(Element::HalfWavePlate {
                path: p(IN1),
                angle_deg: 45.0,
            })?
            .with(Element::Delay {
                path: p(IN1),
                delay_fs: self.delay_fs,
            })?
            .with(Element::PolarizingBS {
                path_a: p(IN1),
                path_b: p(IN2),
            })?
            .with(Element::HalfWavePlate {
                path: p(IN1),
                angle_deg: 22.5,
            })?
            .with(Element::PolarizingBS {
                path_a: p(IN1),
                path_b: p(OUT_V),
            })
    }

    pub fn source() -> FockState {
        FockState::source(
            SourcePreset::VVInput,
            &PathId::new(hom_paths::IN1),
            &PathId::new(hom_paths::IN2),
        )
        .expect("distinct paths")
    }

    /// Analyzer ports on `first`/`second`; the unused merge port on `X`.
    pub fn detector_map(first: &str, second: &str) -> DetectorMap {
        use hom_paths::*;
        [(IN1, first), (OUT_V, second), (IN2, "X")]
            .into_iter()
            .map(|(p, d)| (PathId::new(p), DetectorId::new(d)))
            .collect()
    }
}

/// Alignment bench with default wavepacket and perfect mode overlap.
pub fn hom_test_circuit(delay_fs: f64) -> Circuit {
    HomBench::new(delay_fs).circuit().expect("preset paths are declared")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{ModeLabel, Occupation};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn p(s: &str) -> PathId {
        PathId::new(s)
    }

    #[test]
    fn empty_circuit_is_identity() {
        let c = Circuit::new(["a", "b"], TemporalWavepacket::default());
        let s = FockState::single(ModeLabel::new("a", Polarization::H));
        let (out, prob) = c.evolve(&s).unwrap();
        assert_eq!(out, s);
        assert_eq!(prob, 1.0);
        let tm = c.transfer_matrix().unwrap();
        assert_eq!(tm.matrix, DMatrix::identity(4, 4));
    }

    #[test]
    fn undeclared_paths_rejected() {
        let mut c = Circuit::new(["a"], TemporalWavepacket::default());
        assert!(matches!(
            c.push(Element::Delay {
                path: p("z"),
                delay_fs: 0.0
            }),
            Err(SimError::UndeclaredPath(_))
        ));
        let s = FockState::single(ModeLabel::new("q", Polarization::H));
        assert!(matches!(c.evolve(&s), Err(SimError::UndeclaredPath(_))));
    }

    #[test]
    fn single_bs_matches_direct_application() {
        let c = Circuit::new(["a", "b"], TemporalWavepacket::default())
            .with(Element::BeamSplitter {
                path_a: p("a"),
                path_b: p("b"),
                reflectivity: 0.3,
            })
            .unwrap();
        let s = FockState::single(ModeLabel::new("a", Polarization::V));
        let (out, _) = c.evolve(&s).unwrap();
        assert_eq!(out, s.apply_beamsplitter(&p("a"), &p("b"), 0.3).unwrap());
    }

    #[test]
    fn bs_block() {
        let c = Circuit::new(["a", "b"], TemporalWavepacket::default())
            .with(Element::BeamSplitter {
                path_a: p("a"),
                path_b: p("b"),
                reflectivity: 0.5,
            })
            .unwrap();
        let m = c.transfer_matrix().unwrap().matrix;
        for pol in 0..2 {
            assert_abs_diff_eq!(m[(pol, pol)].re, FRAC_1_SQRT_2, epsilon = 1e-15);
            assert_abs_diff_eq!(m[(2 + pol, pol)].im, FRAC_1_SQRT_2, epsilon = 1e-15);
            assert_abs_diff_eq!(m[(pol, 2 + pol)].im, FRAC_1_SQRT_2, epsilon = 1e-15);
            assert_abs_diff_eq!(m[(2 + pol, 2 + pol)].re, FRAC_1_SQRT_2, epsilon = 1e-15);
        }
    }

    #[test]
    fn hwp_block() {
        let c = Circuit::new(["a"], TemporalWavepacket::default())
            .with(Element::HalfWavePlate {
                path: p("a"),
                angle_deg: 22.5,
            })
            .unwrap();
        let m = c.transfer_matrix().unwrap().matrix;
        assert_abs_diff_eq!(m[(0, 0)].re, FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(m[(1, 0)].re, FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(m[(0, 1)].re, FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(m[(1, 1)].re, -FRAC_1_SQRT_2, epsilon = 1e-15);
    }

    #[test]
    fn cascaded_splitters_swap() {
        let bs = Element::BeamSplitter {
            path_a: p("a"),
            path_b: p("b"),
            reflectivity: 0.5,
        };
        let c = Circuit::new(["a", "b"], TemporalWavepacket::default())
            .with(bs.clone())
            .unwrap()
            .with(bs)
            .unwrap();
        let tm = c.transfer_matrix().unwrap();
        let s = FockState::single(ModeLabel::new("a", Polarization::H));
        let (out, _) = c.evolve(&s).unwrap();
        let target = Occupation::new(vec![ModeLabel::new("b", Polarization::H)]);
        assert_abs_diff_eq!(out.amplitude(&target).im, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(tm.matrix[(2, 0)].im, 1.0, epsilon = 1e-12);
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn polarizer_blocks_compilation() {
        let c = Circuit::new(["a"], TemporalWavepacket::default())
            .with(Element::Polarizer {
                path: p("a"),
                pass_axis: Polarization::V,
            })
            .unwrap();
        assert!(matches!(c.transfer_matrix(), Err(SimError::NonUnitaryElement(_))));
    }

    #[test]
    fn polarizer_survival_reported() {
        let c = Circuit::new(["a", "b"], TemporalWavepacket::default())
            .with(Element::Polarizer {
                path: p("a"),
                pass_axis: Polarization::V,
            })
            .unwrap()
            .with(Element::Polarizer {
                path: p("b"),
                pass_axis: Polarization::V,
            })
            .unwrap();
        let s = FockState::source(SourcePreset::PhiPlusSign, &p("a"), &p("b")).unwrap();
        let (out, prob) = c.evolve(&s).unwrap();
        assert_abs_diff_eq!(prob, 0.5, epsilon = 1e-15);
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn paper_circuit_matches_operator_expansion() {
        // Before the recombining PBSs, the state is
        // 1/2 (a1H a2V - e^{i phi} b1H b2V + i e^{i phi} a1H b2V + i b1H a2V).
        let phi = 0.7;
        let setup = NonlocalSetup {
            phi_rad: phi,
            ..NonlocalSetup::default()
        };
        let full = setup.circuit().unwrap();
        let upto_phase = Circuit {
            elements: full.elements()[..7].to_vec(),
            ..full.clone()
        };
        let (out, _) = upto_phase.evolve(&NonlocalSetup::source()).unwrap();
        let m = |a: &str, pa, b: &str, pb| Occupation::new(vec![ModeLabel::new(a, pa), ModeLabel::new(b, pb)]);
        use Polarization::{H, V};
        let e = Complex64::from_polar(1.0, phi);
        let i = Complex64::new(0.0, 1.0);
        let expect = [
            (m("a1", H, "a2", V), Complex64::new(0.5, 0.0)),
            (m("b1", H, "b2", V), -0.5 * e),
            (m("a1", H, "b2", V), 0.5 * i * e),
            (m("b1", H, "a2", V), 0.5 * i),
        ];
        assert_eq!(out.len(), 4);
        for (occ, amp) in expect {
            assert_abs_diff_eq!((out.amplitude(&occ) - amp).norm(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn paper_circuit_is_unitary() {
        let c = nonlocal_interferometer(1.1, 0.0, 0.0, 0.0, 22.5, 45.0);
        assert!(c.transfer_matrix().unwrap().unitarity_error() < 1e-12);
    }
}
