//! Single-qubit noise channels.

use serde::{Deserialize, Serialize};

use super::{DensityMatrix, GateOp, C64};
use crate::error::{Error, Result};

/// Which local channel hits a qubit.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseModel {
    /// Measurement in the basis given by the columns of a 2x2 unitary
    /// (computational basis when `None`), with probability `eta`.
    Collapse { basis: Option<[C64; 4]> },
    /// Replacement by the maximally mixed state with probability `eta`.
    Depolarize,
    /// Off-diagonal damping by `exp(-gamma dt)`.
    Dephase,
}

/// A channel and its strength: `eta` for collapse and depolarization,
/// `gamma * dt` for dephasing.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseChannelSpec {
    pub model: NoiseModel,
    pub strength: f64,
}

/// Serializable name of a noise model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Collapse,
    Depolarize,
    Dephase,
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "collapse" => Ok(NoiseKind::Collapse),
            "depolarize" => Ok(NoiseKind::Depolarize),
            "dephase" => Ok(NoiseKind::Dephase),
            other => Err(Error::InvalidParameter(format!(
                "unknown noise model '{other}' (expected collapse|depolarize|dephase)"
            ))),
        }
    }
}

impl std::fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NoiseKind::Collapse => "collapse",
            NoiseKind::Depolarize => "depolarize",
            NoiseKind::Dephase => "dephase",
        })
    }
}

impl NoiseChannelSpec {
    pub fn collapse(eta: f64) -> Self {
        NoiseChannelSpec {
            model: NoiseModel::Collapse { basis: None },
            strength: eta,
        }
    }

    pub fn depolarize(eta: f64) -> Self {
        NoiseChannelSpec {
            model: NoiseModel::Depolarize,
            strength: eta,
        }
    }

    pub fn dephase(gamma_dt: f64) -> Self {
        NoiseChannelSpec {
            model: NoiseModel::Dephase,
            strength: gamma_dt,
        }
    }

    /// Channel of the given kind at noise rate `eta` (dephasing uses
    /// `gamma dt = -ln(1 - eta)`).
    pub fn from_kind(kind: NoiseKind, eta: f64) -> Self {
        match kind {
            NoiseKind::Collapse => Self::collapse(eta),
            NoiseKind::Depolarize => Self::depolarize(eta),
            NoiseKind::Dephase => Self::dephase(-(1.0 - eta).ln()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.model {
            NoiseModel::Dephase => {
                if !(self.strength >= 0.0) {
                    return Err(Error::Validation(format!(
                        "gamma*dt must be >= 0, got {}",
                        self.strength
                    )));
                }
            }
            _ => {
                if !(0.0..=1.0).contains(&self.strength) {
                    return Err(Error::Validation(format!(
                        "noise rate must lie in [0, 1], got {}",
                        self.strength
                    )));
                }
            }
        }
        if let NoiseModel::Collapse { basis: Some(b) } = &self.model {
            GateOp::Single { qubit: 0, u: *b }.validate(1)?;
        }
        Ok(())
    }

    /// Whether the channel is the identity.
    pub fn is_identity(&self) -> bool {
        self.strength == 0.0
    }
}

fn dagger2(u: &[C64; 4]) -> [C64; 4] {
    [u[0].conj(), u[2].conj(), u[1].conj(), u[3].conj()]
}

/// Scale every entry whose row and column differ on `qubit`.
fn damp_coherences(rho: &mut DensityMatrix, qubit: usize, factor: f64) {
    let mask = 1usize << (rho.qubits() - 1 - qubit);
    rho.map_entries(|i, j, v| if (i ^ j) & mask != 0 { v * factor } else { v });
}

fn depolarize(rho: &mut DensityMatrix, qubit: usize, eta: f64) {
    let mask = 1usize << (rho.qubits() - 1 - qubit);
    let d = rho.dim();
    let data = rho.data_mut();
    for i in 0..d {
        if i & mask != 0 {
            continue;
        }
        for j in 0..d {
            if j & mask != 0 {
                continue;
            }
            let (i1, j1) = (i | mask, j | mask);
            let a = data[i * d + j];
            let b = data[i1 * d + j1];
            let avg = (a + b) * (0.5 * eta);
            data[i * d + j] = a * (1.0 - eta) + avg;
            data[i1 * d + j1] = b * (1.0 - eta) + avg;
            data[i * d + j1] *= 1.0 - eta;
            data[i1 * d + j] *= 1.0 - eta;
        }
    }
}

impl DensityMatrix {
    /// Apply a single-qubit channel in place.
    pub fn apply_noise(&mut self, spec: &NoiseChannelSpec, qubit: usize) -> Result<()> {
        spec.validate()?;
        if qubit >= self.qubits() {
            return Err(Error::Validation(format!(
                "noise qubit {qubit} outside {}-qubit register",
                self.qubits()
            )));
        }
        if spec.is_identity() {
            return Ok(());
        }
        match &spec.model {
            NoiseModel::Collapse { basis: None } => {
                damp_coherences(self, qubit, 1.0 - spec.strength)
            }
            NoiseModel::Collapse { basis: Some(b) } => {
                self.apply(&GateOp::Single {
                    qubit,
                    u: dagger2(b),
                })?;
                damp_coherences(self, qubit, 1.0 - spec.strength);
                self.apply(&GateOp::Single { qubit, u: *b })?;
            }
            NoiseModel::Depolarize => depolarize(self, qubit, spec.strength),
            NoiseModel::Dephase => damp_coherences(self, qubit, (-spec.strength).exp()),
        }
        Ok(())
    }
}

/// Apply a single-qubit channel to a copy of `rho`.
pub fn apply_noise_channel(
    rho: &DensityMatrix,
    spec: &NoiseChannelSpec,
    qubit: usize,
) -> Result<DensityMatrix> {
    let mut out = rho.clone();
    out.apply_noise(spec, qubit)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{reduced_density_matrix, trace_distance};
    use approx::assert_abs_diff_eq;

    fn plus() -> DensityMatrix {
        let mut rho = DensityMatrix::zero_state(1).unwrap();
        rho.apply(&GateOp::Hadamard(0)).unwrap();
        rho
    }

    #[test]
    fn zero_rate_is_identity() {
        let rho = plus();
        for spec in [
            NoiseChannelSpec::collapse(0.0),
            NoiseChannelSpec::depolarize(0.0),
            NoiseChannelSpec::dephase(0.0),
        ] {
            assert_eq!(apply_noise_channel(&rho, &spec, 0).unwrap(), rho);
        }
    }

    #[test]
    fn full_collapse_kills_coherence() {
        let out = apply_noise_channel(&plus(), &NoiseChannelSpec::collapse(1.0), 0).unwrap();
        assert_abs_diff_eq!(out.get(0, 0).re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(out.get(1, 1).re, 0.5, epsilon = 1e-15);
        assert_eq!(out.get(0, 1).norm(), 0.0);
    }

    #[test]
    fn collapse_in_rotated_basis() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let basis = [
            C64::new(h, 0.0),
            C64::new(h, 0.0),
            C64::new(h, 0.0),
            C64::new(-h, 0.0),
        ];
        let spec = NoiseChannelSpec {
            model: NoiseModel::Collapse { basis: Some(basis) },
            strength: 1.0,
        };
        // |+> is a basis state of the X basis, so measuring it changes nothing.
        let out = apply_noise_channel(&plus(), &spec, 0).unwrap();
        assert!(trace_distance(&out, &plus()).unwrap() < 1e-14);
    }

    #[test]
    fn depolarize_replaces_with_mixed() {
        let mut rho = DensityMatrix::zero_state(2).unwrap();
        rho.apply(&GateOp::Hadamard(0)).unwrap();
        rho.apply(&GateOp::Cnot {
            control: 0,
            target: 1,
        })
        .unwrap();
        rho.apply_noise(&NoiseChannelSpec::depolarize(1.0), 1)
            .unwrap();
        let q1 = reduced_density_matrix(&rho, &[1]).unwrap();
        assert_abs_diff_eq!(q1.get(0, 0).re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(q1.get(0, 1).norm(), 0.0, epsilon = 1e-15);
        // Qubit 0 keeps its marginal; the pair is now a product.
        for i in 0..4 {
            assert_abs_diff_eq!(rho.get(i, i).re, 0.25, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(rho.trace().re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn rejects_bad_parameters() {
        let rho = plus();
        assert!(apply_noise_channel(&rho, &NoiseChannelSpec::collapse(1.5), 0).is_err());
        assert!(apply_noise_channel(&rho, &NoiseChannelSpec::dephase(-0.1), 0).is_err());
        assert!(apply_noise_channel(&rho, &NoiseChannelSpec::collapse(0.5), 1).is_err());
        assert_eq!(
            "collapse".parse::<NoiseKind>().unwrap(),
            NoiseKind::Collapse
        );
        assert!("amplitude".parse::<NoiseKind>().is_err());
    }
}
