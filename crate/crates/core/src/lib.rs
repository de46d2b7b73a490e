//! Numerical toolkit for enantio-selective three-wave mixing of chiral
//! molecules.
//!
//! The crate is layered bottom-up:
//!
//! * [`angular_momentum`]: exact Wigner 3j symbols and symmetric-top
//!   matrix elements of the rank-one Wigner D functions.
//! * [`rotor`]: asymmetric-top eigenstructure, `J_{KaKc}` labels, D2 irreps
//!   and the molecule database.
//! * [`coupling`]: polarization-resolved dipole matrix elements for both
//!   enantiomers.
//! * [`threewave`]: the reduced three-level rotating-wave model.
//! * [`cycles`]: enumeration and classification of three-level cycles.
//! * [`scenarios`]: M-resolved simulations of real molecules.
//! * [`integrator`]: adaptive Dormand–Prince propagation of the
//!   Schrödinger equation shared by the dynamical modules.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod angular_momentum;
pub mod coupling;
pub mod cycles;
mod error;
pub mod integrator;
pub mod output;
pub mod rotor;
pub mod scenarios;
pub mod threewave;
pub mod units;

pub use angular_momentum::{sigma_of_m_reflection, symtop_element, wigner_3j, AngularIndex, HalfInt, Polarization};
pub use coupling::{transition_element, transition_types, DipoleType, Enantiomer, PolarizedElement, Sublevel, TypeSet};
pub use error::{Error, Result};
pub use rotor::{Irrep, Molecule, RotState, RotationalConstants};

pub use num_complex::Complex64;
