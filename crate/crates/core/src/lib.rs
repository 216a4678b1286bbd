//! Simulation toolkit for heralded single photons carrying vector vortex (VV)
//! and full Poincaré (FP) polarization structure.
//!
//! The pipeline mirrors a tabletop experiment:
//!
//! * [`qplate`] shapes a pump beam by spin-to-orbit conversion,
//! * [`kets`] carries the pump through a dual-crystal type-I SPDC source and
//!   heralds the signal photon by projecting the idler,
//! * [`fields`] renders kets onto a transverse grid,
//! * [`polarimetry`] simulates a rotating quarter-wave plate polarimeter and
//!   recovers the Stokes parameters by pseudo-inverse,
//! * [`topology`] locates C-points and V-points and labels the pattern class,
//! * [`scenarios`] ties everything together into reproducible figure suites.

pub mod correlations;
pub mod export;
pub mod fields;
pub mod kets;
pub mod numeric;
pub mod polarimetry;
pub mod polarization;
pub mod qplate;
pub mod render;
pub mod scenarios;
pub mod topology;

pub use num_complex::Complex64 as C64;

pub use fields::{GridSpec, ModeProfile, ScalarField, VectorField};
pub use kets::{BiphotonKet, PolKet, PumpKind, PumpSpec, SpdcConfig};
pub use polarimetry::{EllipseMap, PolarimeterConfig, StokesMap};
pub use polarization::{Basis, Pol};
pub use qplate::QPlateParams;
pub use topology::{SingularityKind, SingularityReport, TopologicalCharge, TopologyClass};
