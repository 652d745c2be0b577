//! Two-qubit polarization states shared between the detection and analysis
//! layers. Basis order is `HH, HV, VH, VV` with Alice's qubit first.

use num_complex::Complex64;

use crate::state::Polarization;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoQubitState {
    pub amps: [Complex64; 4],
}

impl TwoQubitState {
    pub fn index(alice: Polarization, bob: Polarization) -> usize {
        2 * alice.index() + bob.index()
    }

    /// Normalises the given amplitudes. Returns `None` for the zero vector.
    pub fn new(amps: [Complex64; 4]) -> Option<Self> {
        let n: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        (n > 0.0).then(|| TwoQubitState {
            amps: amps.map(|a| a / n),
        })
    }

    pub fn basis(alice: Polarization, bob: Polarization) -> Self {
        let mut amps = [Complex64::new(0.0, 0.0); 4];
        amps[Self::index(alice, bob)] = Complex64::new(1.0, 0.0);
        TwoQubitState { amps }
    }

    /// `(|HV> + e^{i phi} |VH>) / sqrt(2)`.
    pub fn psi(phi_rad: f64) -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        TwoQubitState {
            amps: [
                Complex64::new(0.0, 0.0),
                Complex64::new(s, 0.0),
                Complex64::from_polar(s, phi_rad),
                Complex64::new(0.0, 0.0),
            ],
        }
    }

    pub fn inner(&self, other: &TwoQubitState) -> Complex64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn fidelity(&self, other: &TwoQubitState) -> f64 {
        self.inner(other).norm_sqr()
    }

    /// Probabilities of H and V on Alice's side.
    pub fn alice_marginal(&self) -> [f64; 2] {
        let p = self.amps.map(|a| a.norm_sqr());
        [p[0] + p[1], p[2] + p[3]]
    }

    pub fn bob_marginal(&self) -> [f64; 2] {
        let p = self.amps.map(|a| a.norm_sqr());
        [p[0] + p[2], p[1] + p[3]]
    }
}

/// Classical mixture of pure two-qubit states.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarizationEnsemble {
    pub members: Vec<(f64, TwoQubitState)>,
}

impl From<TwoQubitState> for PolarizationEnsemble {
    fn from(s: TwoQubitState) -> Self {
        PolarizationEnsemble {
            members: vec![(1.0, s)],
        }
    }
}

impl PolarizationEnsemble {
    pub fn total_weight(&self) -> f64 {
        self.members.iter().map(|(w, _)| w).sum()
    }

    /// Mean fidelity with a pure target, `<target| rho |target>`.
    pub fn fidelity(&self, target: &TwoQubitState) -> f64 {
        self.members.iter().map(|(w, s)| w * target.fidelity(s)).sum::<f64>() / self.total_weight()
    }

    pub fn alice_marginal(&self) -> [f64; 2] {
        self.marginal(TwoQubitState::alice_marginal)
    }

    pub fn bob_marginal(&self) -> [f64; 2] {
        self.marginal(TwoQubitState::bob_marginal)
    }

    fn marginal(&self, f: impl Fn(&TwoQubitState) -> [f64; 2]) -> [f64; 2] {
        let w = self.total_weight();
        self.members.iter().fold([0.0, 0.0], |acc, (wi, s)| {
            let m = f(s);
            [acc[0] + wi * m[0] / w, acc[1] + wi * m[1] / w]
        })
    }

    /// Keeps a fraction `visibility` of the ensemble coherent and replaces the
    /// rest with its H/V-diagonal part.
    pub fn dephase(&self, visibility: f64) -> PolarizationEnsemble {
        let v = visibility.clamp(0.0, 1.0);
        let mut members: Vec<(f64, TwoQubitState)> = Vec::new();
        for (w, s) in &self.members {
            if v > 0.0 {
                members.push((w * v, *s));
            }
            if v < 1.0 {
                for a in [Polarization::H, Polarization::V] {
                    for b in [Polarization::H, Polarization::V] {
                        let p = s.amps[TwoQubitState::index(a, b)].norm_sqr();
                        if p > 0.0 {
                            members.push((w * (1.0 - v) * p, TwoQubitState::basis(a, b)));
                        }
                    }
                }
            }
        }
        PolarizationEnsemble { members }
    }
}
