//! Simulation of spin-orbit X-state experiments.
//!
//! A laser beam carrying polarization and a first-order Hermite–Gaussian mode
//! behaves as a two-qubit system. This crate builds the studied families of
//! mixed spin-orbit modes, models the optical bench that prepares and
//! analyzes them, reconstructs density matrices from 36 simulated intensities,
//! and evaluates entropic quantum discord.
//!
//! Module map:
//! - [`qstate`]: density operators, entropies, fidelity, Stokes expansion.
//! - [`states`]: state families, Bell-like modes, identity admixture.
//! - [`discord`]: discord, classical correlation and a brute-force oracle.
//! - [`optics`]: Jones-calculus elements, preparation and analyzer circuits.
//! - [`tomography`]: forward probabilities, Stokes assembly, reconstruction.
//! - [`experiment`]: sweeps, simulated experiments and fidelity fits.

pub mod discord;
pub mod error;
pub mod experiment;
pub mod optics;
pub mod par;
pub mod qstate;
pub mod states;
pub mod tomography;

pub use error::{Error, Result};
pub use par::Execution;
pub use qstate::{DensityOperator, PureState, QubitState, RawDensity, StokesTensor, Subsystem};
pub use states::{BellKind, FamilyId};
