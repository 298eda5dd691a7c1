//! JSON file formats for matrices, mesh settings and hardware samples.
//!
//! Matrix files hold `{"n", "re", "im"}` with row-major nested arrays and are
//! validated for unitarity on read. Settings and hardware files list one
//! record per node together with the layout description, which is rebuilt
//! and checked against the node coordinates on read.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::ComplexMatrix;
use crate::mesh::{HardwareSample, LayoutKind, MeshLayout, MeshSettings, NodeHardware, NodeId, NodeSetting};
use crate::unitary::{UnitaryMatrix, INPUT_UNITARY_TOL};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixFile {
    pub n: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl MatrixFile {
    pub fn from_unitary(u: &UnitaryMatrix) -> Self {
        MatrixFile {
            n: u.dim(),
            re: u.real_parts(),
            im: u.imag_parts(),
        }
    }

    /// Rebuild the matrix and check unitarity at `INPUT_UNITARY_TOL`.
    pub fn to_unitary(&self) -> Result<UnitaryMatrix> {
        if self.re.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: self.re.len(),
            });
        }
        let m = ComplexMatrix::from_parts(&self.re, &self.im)?;
        if !m.is_square() || m.rows() != self.n {
            return Err(Error::InvalidDimension(format!(
                "declared n = {} but arrays are {}x{}",
                self.n,
                m.rows(),
                m.cols()
            )));
        }
        UnitaryMatrix::new(m, INPUT_UNITARY_TOL)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeRecord {
    pub layer: usize,
    pub slot: usize,
    pub top_mode: usize,
    #[serde(rename = "R")]
    pub reflectivity: f64,
    pub phi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SettingsFile {
    pub kind: LayoutKind,
    pub n: usize,
    pub extra_layers: usize,
    pub nodes: Vec<NodeRecord>,
    pub output_phases: Vec<f64>,
}

impl SettingsFile {
    pub fn from_settings(s: &MeshSettings) -> Self {
        let layout = s.layout();
        SettingsFile {
            kind: layout.kind(),
            n: layout.n_modes(),
            extra_layers: layout.extra_layers(),
            nodes: layout
                .nodes()
                .iter()
                .zip(s.per_node())
                .map(|(id, v)| NodeRecord {
                    layer: id.layer,
                    slot: id.slot,
                    top_mode: id.top_mode,
                    reflectivity: v.reflectivity,
                    phi: v.phase,
                })
                .collect(),
            output_phases: s.output_phases().to_vec(),
        }
    }

    pub fn to_settings(&self) -> Result<MeshSettings> {
        let ids: Vec<NodeId> = self
            .nodes
            .iter()
            .map(|r| NodeId {
                layer: r.layer,
                slot: r.slot,
                top_mode: r.top_mode,
            })
            .collect();
        let layout = MeshLayout::from_parts(self.kind, self.n, self.extra_layers, Some(&ids))?;
        let per_node = self
            .nodes
            .iter()
            .map(|r| NodeSetting::new(r.reflectivity, r.phi))
            .collect::<Result<Vec<_>>>()?;
        MeshSettings::new(layout, per_node, self.output_phases.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareRecord {
    pub layer: usize,
    pub slot: usize,
    pub top_mode: usize,
    pub r1: f64,
    pub r2: f64,
    #[serde(rename = "Rmin")]
    pub r_min: f64,
    #[serde(rename = "Rmax")]
    pub r_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareFile {
    pub kind: LayoutKind,
    pub n: usize,
    pub extra_layers: usize,
    pub sigma: f64,
    pub seed: u64,
    pub nodes: Vec<HardwareRecord>,
}

impl HardwareFile {
    pub fn from_sample(hw: &HardwareSample) -> Self {
        let layout = hw.layout();
        HardwareFile {
            kind: layout.kind(),
            n: layout.n_modes(),
            extra_layers: layout.extra_layers(),
            sigma: hw.sigma(),
            seed: hw.seed(),
            nodes: layout
                .nodes()
                .iter()
                .zip(hw.nodes())
                .map(|(id, h)| HardwareRecord {
                    layer: id.layer,
                    slot: id.slot,
                    top_mode: id.top_mode,
                    r1: h.r1,
                    r2: h.r2,
                    r_min: h.r_min,
                    r_max: h.r_max,
                })
                .collect(),
        }
    }

    /// Rebuild the sample; the stored ranges are recomputed from `r1`, `r2`.
    pub fn to_sample(&self) -> Result<HardwareSample> {
        let ids: Vec<NodeId> = self
            .nodes
            .iter()
            .map(|r| NodeId {
                layer: r.layer,
                slot: r.slot,
                top_mode: r.top_mode,
            })
            .collect();
        let layout = MeshLayout::from_parts(self.kind, self.n, self.extra_layers, Some(&ids))?;
        let nodes = self
            .nodes
            .iter()
            .map(|r| NodeHardware::new(r.r1, r.r2))
            .collect::<Result<Vec<_>>>()?;
        HardwareSample::from_parts(layout, self.sigma, self.seed, nodes)
    }
}

/// Parse JSON text, reporting the field path of the first error.
pub fn parse_json<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let at = e.path().to_string();
        let message = if at.is_empty() || at == "." {
            e.inner().to_string()
        } else {
            format!("at `{at}`: {}", e.inner())
        };
        Error::Format {
            path: path.to_path_buf(),
            message,
        }
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_json(&text, path)
}

/// Write `value` as pretty JSON followed by a newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: &Path) -> Result<UnitaryMatrix> {
    read_json::<MatrixFile>(path)?.to_unitary()
}

pub fn write_matrix(path: &Path, u: &UnitaryMatrix) -> Result<()> {
    write_json(path, &MatrixFile::from_unitary(u))
}

pub fn read_settings(path: &Path) -> Result<MeshSettings> {
    read_json::<SettingsFile>(path)?.to_settings()
}

pub fn write_settings(path: &Path, s: &MeshSettings) -> Result<()> {
    write_json(path, &SettingsFile::from_settings(s))
}

pub fn read_hardware(path: &Path) -> Result<HardwareSample> {
    read_json::<HardwareFile>(path)?.to_sample()
}

pub fn write_hardware(path: &Path, hw: &HardwareSample) -> Result<()> {
    write_json(path, &HardwareFile::from_sample(hw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decompose::square_decompose;
    use crate::mesh::{sample_hardware, square_layout};
    use crate::unitary::haar_random_unitary;

    #[test]
    fn matrix_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("u.json");
        let u = haar_random_unitary(5, 3).unwrap();
        write_matrix(&p, &u).unwrap();
        let v = read_matrix(&p).unwrap();
        assert_eq!(u.max_abs_diff(&v).unwrap(), 0.0);
    }

    #[test]
    fn non_unitary_matrix_reports_deviation() {
        let f = MatrixFile {
            n: 2,
            re: vec![vec![1.0, 0.0], vec![0.0, 1.1]],
            im: vec![vec![0.0; 2]; 2],
        };
        match f.to_unitary() {
            Err(Error::NotUnitary { deviation, .. }) => assert!((deviation - 0.21).abs() < 1e-9),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn settings_and_hardware_roundtrip() {
        let u = haar_random_unitary(4, 9).unwrap();
        let s = square_decompose(&u).unwrap();
        let text = serde_json::to_string(&SettingsFile::from_settings(&s)).unwrap();
        let back: SettingsFile = parse_json(&text, Path::new("s.json")).unwrap();
        assert_eq!(back.to_settings().unwrap(), s);

        let hw = sample_hardware(&square_layout(4, 1).unwrap(), 0.05, 11).unwrap();
        let text = serde_json::to_string(&HardwareFile::from_sample(&hw)).unwrap();
        let back: HardwareFile = parse_json(&text, Path::new("h.json")).unwrap();
        assert_eq!(back.to_sample().unwrap().nodes(), hw.nodes());
    }

    #[test]
    fn parse_error_names_the_field() {
        let err = parse_json::<MatrixFile>(r#"{"n": "two", "re": [], "im": []}"#, Path::new("m.json")).unwrap_err();
        assert!(err.to_string().contains("`n`"), "{err}");
    }
}
