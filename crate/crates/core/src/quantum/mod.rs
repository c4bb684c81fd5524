//! Dense statevector simulation and the variational circuit built on it.

pub mod gate;
pub mod noise;
pub mod statevector;
pub mod vqc;

pub use gate::{Gate1Q, GateLabel};
pub use noise::{bitflip_attenuate, bitflip_trajectory, NoiseMode, NoisePlacement, NoiseSpec};
pub use statevector::{StateVector, MAX_QUBITS};
pub use vqc::{encode_angles, vqc_forward, vqc_grad, EncodedAngles, Entangler, VqcConfig, VqcGradient, VqcParams};
