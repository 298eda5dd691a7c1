//! Compiler and Monte-Carlo simulator for programmable photonic interferometer
//! meshes built from Mach-Zehnder nodes with imperfect static splitters.

pub mod cli;
pub mod decompose;
pub mod error;
pub mod experiments;
pub mod io;
pub mod matrix;
pub mod mesh;
pub mod optimize;
pub mod par;
pub mod seed;
pub mod unitary;

pub use error::{Error, Result};
pub use matrix::ComplexMatrix;
pub use mesh::{HardwareSample, LayoutKind, MeshLayout, MeshSettings, NodeHardware, NodeId, NodeSetting};
pub use unitary::{DeviationReport, UnitaryMatrix};
