//! Exact compilation of unitaries onto square and triangular meshes, and the
//! hardware-adapted variant that clips reflectivities into reach.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::ComplexMatrix;
use crate::mesh::{
    self, mesh_unitary, HardwareSample, LayoutKind, MeshLayout, MeshSettings,
    NodeSetting,
};
use crate::unitary::{self, DeviationReport, UnitaryMatrix, INPUT_UNITARY_TOL};

/// Entries below this modulus are treated as already nulled.
pub const NULL_TOL: f64 = 1e-14;

/// A node produced during nulling: top mode and setting.
#[derive(Clone, Copy, Debug)]
struct Step {
    top_mode: usize,
    setting: NodeSetting,
}

fn setting(reflectivity: f64, phase: f64) -> NodeSetting {
    NodeSetting {
        reflectivity: reflectivity.clamp(0.0, 1.0),
        phase: mesh::wrap_phase(phase),
    }
}

fn adjoint_block(b: &[[Complex64; 2]; 2]) -> [[Complex64; 2]; 2] {
    [[b[0][0].conj(), b[1][0].conj()], [b[0][1].conj(), b[1][1].conj()]]
}

/// Null `w[row][m]` by right-multiplying with `T(R, phi)^dag` on columns `(m, m+1)`.
fn null_from_right(w: &mut ComplexMatrix, row: usize, m: usize) -> Step {
    let x = w[(row, m)];
    let y = w[(row, m + 1)];
    let s = if x.norm() < NULL_TOL {
        NodeSetting::BAR
    } else {
        let (px, py) = (x.norm_sqr(), y.norm_sqr());
        setting(py / (px + py), x.arg() - y.arg())
    };
    w.apply_cols(m, &adjoint_block(&s.block()));
    Step {
        top_mode: m,
        setting: s,
    }
}

/// Null `w[m+1][col]` by left-multiplying with `T(R, phi)` on rows `(m, m+1)`.
fn null_from_left(w: &mut ComplexMatrix, m: usize, col: usize) -> Step {
    let x = w[(m, col)];
    let y = w[(m + 1, col)];
    let s = if y.norm() < NULL_TOL {
        NodeSetting::BAR
    } else {
        let (px, py) = (x.norm_sqr(), y.norm_sqr());
        setting(px / (px + py), y.arg() - x.arg() + PI)
    };
    w.apply_rows(m, &s.block());
    Step {
        top_mode: m,
        setting: s,
    }
}

/// Assign steps (in application order) to layout positions, placing each node
/// in the earliest layer of matching parity after its predecessors on both modes.
fn place(layout: &MeshLayout, steps: &[Step]) -> Result<Vec<NodeSetting>> {
    let n = layout.n_modes();
    let mut next_free = vec![0usize; n];
    let mut out: Vec<Option<NodeSetting>> = vec![None; layout.len()];
    for step in steps {
        let m = step.top_mode;
        let mut layer = next_free[m].max(next_free[m + 1]);
        if layer % 2 != m % 2 {
            layer += 1;
        }
        next_free[m] = layer + 1;
        next_free[m + 1] = layer + 1;
        let k = layout
            .index_of(layer, m)
            .filter(|&k| out[k].is_none())
            .ok_or_else(|| {
                Error::LayoutMismatch(format!(
                    "node on modes ({m}, {}) lands at layer {layer}, which the {} layout lacks",
                    m + 1,
                    layout.kind()
                ))
            })?;
        out[k] = Some(step.setting);
    }
    out.into_iter()
        .enumerate()
        .map(|(k, s)| {
            s.ok_or_else(|| Error::LayoutMismatch(format!("layout node {k} was never assigned")))
        })
        .collect()
}

fn check_input(u: &UnitaryMatrix) -> Result<usize> {
    let n = u.dim();
    if n < 2 {
        return Err(Error::InvalidDimension(format!(
            "decomposition needs at least 2 modes, got {n}"
        )));
    }
    let deviation = u.unitarity_deviation();
    if deviation.is_nan() || deviation > INPUT_UNITARY_TOL {
        return Err(Error::NotUnitary {
            deviation,
            tolerance: INPUT_UNITARY_TOL,
        });
    }
    Ok(n)
}

fn diagonal_phases(w: &ComplexMatrix) -> Vec<f64> {
    (0..w.rows()).map(|i| w[(i, i)].arg()).collect()
}

/// Square-mesh decomposition.
///
/// Lower-triangular entries are nulled along successive anti-diagonals,
/// alternating between column operations (input-side nodes) and row
/// operations (output-side nodes). The output-side nodes are then commuted
/// through the residual diagonal so every node precedes the output phases.
pub fn square_decompose(u: &UnitaryMatrix) -> Result<MeshSettings> {
    let n = check_input(u)?;
    let mut w = u.matrix().clone();
    let mut input_side = Vec::with_capacity(n * (n - 1) / 2);
    let mut output_side = Vec::with_capacity(n * (n - 1) / 2);
    for i in 1..n {
        if i % 2 == 1 {
            for j in 0..i {
                input_side.push(null_from_right(&mut w, n - 1 - j, i - j - 1));
            }
        } else {
            for j in 1..=i {
                let row = n + j - i - 1;
                output_side.push(null_from_left(&mut w, row - 1, j - 1));
            }
        }
    }

    // w = L_k..L_1 U R_1^dag..R_m^dag is diagonal, so U = L_1^dag..L_k^dag D R_m..R_1.
    // T(R, phi)^dag diag(a, b) = diag(-e^{-i phi} b, b) T(R, arg a - arg b + pi).
    let mut phases = diagonal_phases(&w);
    let mut commuted = Vec::with_capacity(output_side.len());
    for step in output_side.iter().rev() {
        let m = step.top_mode;
        let (alpha, beta) = (phases[m], phases[m + 1]);
        phases[m] = beta - step.setting.phase + PI;
        commuted.push(Step {
            top_mode: m,
            setting: setting(step.setting.reflectivity, alpha - beta + PI),
        });
    }
    // Application order: R_1..R_m, then the commuted nodes from L_k' down to L_1'.
    let steps: Vec<Step> = input_side.into_iter().chain(commuted).collect();
    let layout = mesh::square_layout(n, 0)?;
    let per_node = place(&layout, &steps)?;
    MeshSettings::new(layout, per_node, phases)
}

/// Triangular-mesh decomposition: null row `n-1`, then `n-2`, ... from the
/// left with column operations, leaving a diagonal of output phases.
pub fn triangular_decompose(u: &UnitaryMatrix) -> Result<MeshSettings> {
    let n = check_input(u)?;
    let mut w = u.matrix().clone();
    let mut steps = Vec::with_capacity(n * (n - 1) / 2);
    for row in (1..n).rev() {
        for m in 0..row {
            steps.push(null_from_right(&mut w, row, m));
        }
    }
    let layout = mesh::triangular_layout(n)?;
    let per_node = place(&layout, &steps)?;
    MeshSettings::new(layout, per_node, diagonal_phases(&w))
}

/// Decompose onto the mesh `kind`.
pub fn decompose(u: &UnitaryMatrix, kind: LayoutKind) -> Result<MeshSettings> {
    match kind {
        LayoutKind::Square => square_decompose(u),
        LayoutKind::Triangular => triangular_decompose(u),
    }
}

/// Clamp every node reflectivity into its hardware range. Returns the number
/// of nodes whose reflectivity changed.
pub fn clip_to_hardware(settings: &MeshSettings, hw: &HardwareSample) -> Result<(MeshSettings, usize)> {
    hw.check_layout(settings.layout())?;
    let mut clipped = settings.clone();
    let mut n_clipped = 0;
    for (k, (s, h)) in settings.per_node().iter().zip(hw.nodes()).enumerate() {
        let r = h.clamp(s.reflectivity);
        if r != s.reflectivity {
            clipped.set_reflectivity(k, r);
            n_clipped += 1;
        }
    }
    Ok((clipped, n_clipped))
}

/// Result of running the adapted decomposition on imperfect hardware.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub fidelity: f64,
    pub affected: bool,
    pub n_clipped: usize,
    pub deviation: DeviationReport,
}

/// Decompose, clip to `hw`, rebuild, and compare against `u`.
pub fn decompose_clip_evaluate(u: &UnitaryMatrix, kind: LayoutKind, hw: &HardwareSample) -> Result<Evaluation> {
    if hw.layout().kind() != kind {
        return Err(Error::LayoutMismatch(format!(
            "hardware is for a {} mesh, decomposition requested {kind}",
            hw.layout().kind()
        )));
    }
    let settings = decompose(u, kind)?;
    let (clipped, n_clipped) = clip_to_hardware(&settings, hw)?;
    let effective = mesh_unitary(&clipped);
    Ok(Evaluation {
        fidelity: unitary::fidelity(u, &effective)?,
        affected: n_clipped > 0,
        n_clipped,
        deviation: unitary::transition_probability_deviation(u, &effective)?,
    })
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{sample_hardware, square_layout, triangular_layout, NodeHardware};
    use crate::unitary::haar_random_unitary;

    fn roundtrip(kind: LayoutKind, n: usize, seed: u64) -> f64 {
        let u = haar_random_unitary(n, seed).unwrap();
        let s = decompose(&u, kind).unwrap();
        mesh_unitary(&s).max_abs_diff(&u).unwrap()
    }

    #[test]
    fn identity_compiles_to_bar() {
        let u = UnitaryMatrix::identity(2).unwrap();
        let s = square_decompose(&u).unwrap();
        assert_eq!(s.per_node(), &[NodeSetting::BAR]);
        assert_eq!(s.output_phases(), &[0.0, 0.0]);
    }

    #[test]
    fn triangular_swap_is_full_cross() {
        let m = ComplexMatrix::from_row_major(
            2,
            2,
            vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
        )
        .unwrap();
        let u = UnitaryMatrix::new(m, 1e-12).unwrap();
        let s = triangular_decompose(&u).unwrap();
        assert_eq!(s.per_node().len(), 1);
        assert_eq!(s.per_node()[0].reflectivity, 0.0);
        assert!(mesh_unitary(&s).max_abs_diff(&u).unwrap() < 1e-14);
    }

    #[test]
    fn small_roundtrips() {
        for n in 2..=9 {
            for seed in 0..5 {
                assert!(roundtrip(LayoutKind::Square, n, seed) < 1e-10, "square n={n}");
                assert!(roundtrip(LayoutKind::Triangular, n, seed) < 1e-10, "triangular n={n}");
            }
        }
    }

    #[test]
    fn node_counts() {
        let u = haar_random_unitary(20, 1).unwrap();
        assert_eq!(square_decompose(&u).unwrap().per_node().len(), 190);
        let u = haar_random_unitary(3, 1).unwrap();
        assert_eq!(triangular_decompose(&u).unwrap().per_node().len(), 3);
    }

    #[test]
    fn rejects_bad_input() {
        let m = ComplexMatrix::from_row_major(2, 2, vec![Complex64::new(1.0, 0.0); 4]).unwrap();
        let bogus = UnitaryMatrix::from_trusted(m);
        assert!(matches!(square_decompose(&bogus), Err(Error::NotUnitary { .. })));
        let one = UnitaryMatrix::identity(1).unwrap();
        assert!(matches!(triangular_decompose(&one), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn clip_examples() {
        let u = haar_random_unitary(6, 4).unwrap();
        let s = square_decompose(&u).unwrap();
        let hw0 = sample_hardware(s.layout(), 0.0, 1).unwrap();
        let (c, k) = clip_to_hardware(&s, &hw0).unwrap();
        assert_eq!((c, k), (s.clone(), 0));

        let layout = square_layout(2, 0).unwrap();
        let target = MeshSettings::new(layout.clone(), vec![NodeSetting::new(0.0, 1.0).unwrap()], vec![0.0; 2]).unwrap();
        let hw = HardwareSample::from_parts(layout, 0.1, 0, vec![NodeHardware::new(0.6, 0.6).unwrap()]).unwrap();
        let (c, k) = clip_to_hardware(&target, &hw).unwrap();
        assert_eq!(k, 1);
        assert!((c.per_node()[0].reflectivity - 0.04).abs() < 1e-12);
        assert_eq!(c.per_node()[0].phase, 1.0);

        let hw = sample_hardware(s.layout(), 0.08, 9).unwrap();
        let (once, _) = clip_to_hardware(&s, &hw).unwrap();
        let (twice, k2) = clip_to_hardware(&once, &hw).unwrap();
        assert_eq!(once, twice);
        assert_eq!(k2, 0);

        let tri = sample_hardware(&triangular_layout(6).unwrap(), 0.0, 1).unwrap();
        assert!(matches!(clip_to_hardware(&s, &tri), Err(Error::LayoutMismatch(_))));
    }

    #[test]
    fn perfect_hardware_is_lossless() {
        for kind in [LayoutKind::Square, LayoutKind::Triangular] {
            let u = haar_random_unitary(7, 2).unwrap();
            let layout = decompose(&u, kind).unwrap().layout().clone();
            let hw = sample_hardware(&layout, 0.0, 0).unwrap();
            let e = decompose_clip_evaluate(&u, kind, &hw).unwrap();
            assert!((e.fidelity - 1.0).abs() < 1e-10);
            assert!(!e.affected);
        }
    }
}
