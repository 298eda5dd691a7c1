//! Interferometer data model: layouts, node settings, imperfect hardware and
//! the forward model from settings to the implemented unitary.
//!
//! A node couples modes `m` and `m + 1`. Its transfer block is
//!
//! ```text
//! T(R, phi) = [[e^{i phi} sqrt(R), -sqrt(1 - R)],
//!              [e^{i phi} sqrt(1 - R),  sqrt(R)]]
//! ```
//!
//! so `R = |T_11|^2` is the power fraction that stays in the same mode and
//! `R = 1, phi = 0` is the identity (bar state). The mesh implements
//! `D * T_K * ... * T_1` where `T_1` is the first node light meets.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::ComplexMatrix;
use crate::seed;
use crate::unitary::UnitaryMatrix;

/// Static splitter draws are redrawn until they fall strictly inside this band.
pub const SPLITTER_DRAW_BAND: (f64, f64) = (0.005, 0.995);

/// Wrap a phase into `[0, 2 pi)`.
pub fn wrap_phase(phi: f64) -> f64 {
    let w = phi.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayoutKind {
    /// Rectangular quincunx mesh.
    Square,
    /// Triangular mesh.
    Triangular,
}

impl LayoutKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LayoutKind::Square => "square",
            LayoutKind::Triangular => "triangular",
        }
    }
}

impl std::fmt::Display for LayoutKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for LayoutKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "square" => Ok(LayoutKind::Square),
            "triangular" => Ok(LayoutKind::Triangular),
            other => Err(Error::InvalidArgument(format!("unknown layout kind {other:?}"))),
        }
    }
}

/// Position of one node in the mesh.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId {
    pub layer: usize,
    pub slot: usize,
    pub top_mode: usize,
}

/// Geometric arrangement of nodes; `nodes` is in application order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MeshLayout {
    n_modes: usize,
    kind: LayoutKind,
    extra_layers: usize,
    nodes: Vec<NodeId>,
}

impl MeshLayout {
    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn kind(&self) -> LayoutKind {
        self.kind
    }

    pub fn extra_layers(&self) -> usize {
        self.extra_layers
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn n_layers(&self) -> usize {
        self.nodes.last().map_or(0, |n| n.layer + 1).max(match self.kind {
            LayoutKind::Square => self.n_modes + self.extra_layers,
            LayoutKind::Triangular => 2 * self.n_modes - 3,
        })
    }

    /// Number of nodes in the base mesh, excluding redundant layers.
    pub fn base_len(&self) -> usize {
        self.n_modes * (self.n_modes - 1) / 2
    }

    /// Rebuild a layout from its description, checking the node list matches.
    pub fn from_parts(
        kind: LayoutKind,
        n_modes: usize,
        extra_layers: usize,
        nodes: Option<&[NodeId]>,
    ) -> Result<Self> {
        let layout = match kind {
            LayoutKind::Square => square_layout(n_modes, extra_layers)?,
            LayoutKind::Triangular => {
                if extra_layers > 0 {
                    return Err(Error::InvalidArgument(
                        "extra layers are only supported on square layouts".into(),
                    ));
                }
                triangular_layout(n_modes)?
            }
        };
        if let Some(nodes) = nodes {
            if nodes != layout.nodes() {
                return Err(Error::LayoutMismatch(format!(
                    "node list does not match a {kind} layout with n = {n_modes}, extra_layers = {extra_layers}"
                )));
            }
        }
        Ok(layout)
    }

    /// Position of every node in the layout, keyed by `(layer, top_mode)`.
    pub(crate) fn index_of(&self, layer: usize, top_mode: usize) -> Option<usize> {
        self.nodes
            .binary_search_by(|n| (n.layer, n.top_mode).cmp(&(layer, top_mode)))
            .ok()
    }
}

fn check_modes(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidDimension(format!(
            "a mesh needs at least 2 modes, got {n}"
        )));
    }
    Ok(())
}

fn from_positions(
    n_modes: usize,
    kind: LayoutKind,
    extra_layers: usize,
    mut positions: Vec<(usize, usize)>,
) -> MeshLayout {
    positions.sort_unstable();
    let mut nodes = Vec::with_capacity(positions.len());
    let mut slot = 0;
    let mut prev_layer = usize::MAX;
    for (layer, top_mode) in positions {
        if layer != prev_layer {
            slot = 0;
            prev_layer = layer;
        }
        nodes.push(NodeId { layer, slot, top_mode });
        slot += 1;
    }
    MeshLayout {
        n_modes,
        kind,
        extra_layers,
        nodes,
    }
}

/// Rectangular (quincunx) mesh of depth `n + extra_layers`.
///
/// Even layers hold nodes on modes `(0,1), (2,3), ...`; odd layers are offset by one.
pub fn square_layout(n: usize, extra_layers: usize) -> Result<MeshLayout> {
    check_modes(n)?;
    let positions = (0..n + extra_layers)
        .flat_map(|layer| (layer % 2..n - 1).step_by(2).map(move |m| (layer, m)))
        .collect();
    Ok(from_positions(n, LayoutKind::Square, extra_layers, positions))
}

/// Triangular mesh: pass `p` sweeps modes `0..n-1-p` diagonally, starting at layer `2p`.
pub fn triangular_layout(n: usize) -> Result<MeshLayout> {
    check_modes(n)?;
    let positions = (0..n - 1)
        .flat_map(|p| (0..n - 1 - p).map(move |m| (2 * p + m, m)))
        .collect();
    Ok(from_positions(n, LayoutKind::Triangular, 0, positions))
}

/// Programmed state of one node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSetting {
    pub reflectivity: f64,
    pub phase: f64,
}

impl NodeSetting {
    pub fn new(reflectivity: f64, phase: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&reflectivity) {
            return Err(Error::OutOfRange(format!(
                "reflectivity {reflectivity} outside [0, 1]"
            )));
        }
        if !phase.is_finite() {
            return Err(Error::InvalidArgument(format!("phase {phase} is not finite")));
        }
        Ok(Self {
            reflectivity,
            phase: wrap_phase(phase),
        })
    }

    pub const BAR: NodeSetting = NodeSetting {
        reflectivity: 1.0,
        phase: 0.0,
    };

    /// The 2x2 transfer block of this node.
    #[inline]
    pub fn block(&self) -> [[Complex64; 2]; 2] {
        node_block(self.reflectivity, self.phase)
    }
}

#[inline]
pub(crate) fn node_block(reflectivity: f64, phase: f64) -> [[Complex64; 2]; 2] {
    let r = reflectivity.sqrt();
    let t = (1.0 - reflectivity).max(0.0).sqrt();
    let e = Complex64::from_polar(1.0, phase);
    [[e * r, Complex64::new(-t, 0.0)], [e * t, Complex64::new(r, 0.0)]]
}

/// A complete program for a mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct MeshSettings {
    layout: MeshLayout,
    per_node: Vec<NodeSetting>,
    output_phases: Vec<f64>,
}

impl MeshSettings {
    pub fn new(layout: MeshLayout, per_node: Vec<NodeSetting>, output_phases: Vec<f64>) -> Result<Self> {
        if per_node.len() != layout.len() {
            return Err(Error::DimensionMismatch {
                expected: layout.len(),
                found: per_node.len(),
            });
        }
        if output_phases.len() != layout.n_modes() {
            return Err(Error::DimensionMismatch {
                expected: layout.n_modes(),
                found: output_phases.len(),
            });
        }
        for s in &per_node {
            NodeSetting::new(s.reflectivity, s.phase)?;
        }
        if let Some(bad) = output_phases.iter().find(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument(format!("output phase {bad} is not finite")));
        }
        let per_node = per_node
            .into_iter()
            .map(|s| NodeSetting {
                phase: wrap_phase(s.phase),
                ..s
            })
            .collect();
        let output_phases = output_phases.into_iter().map(wrap_phase).collect();
        Ok(Self {
            layout,
            per_node,
            output_phases,
        })
    }

    pub fn layout(&self) -> &MeshLayout {
        &self.layout
    }

    pub fn per_node(&self) -> &[NodeSetting] {
        &self.per_node
    }

    pub fn output_phases(&self) -> &[f64] {
        &self.output_phases
    }

    pub fn n_modes(&self) -> usize {
        self.layout.n_modes()
    }

    pub(crate) fn set_reflectivity(&mut self, k: usize, reflectivity: f64) {
        self.per_node[k].reflectivity = reflectivity;
    }
}

/// Implemented transformation `D * T_K * ... * T_1`.
pub fn mesh_unitary(settings: &MeshSettings) -> UnitaryMatrix {
    let n = settings.n_modes();
    let mut m = ComplexMatrix::identity(n).expect("layouts have n >= 2");
    for (node, s) in settings.layout.nodes().iter().zip(&settings.per_node) {
        m.apply_rows(node.top_mode, &s.block());
    }
    apply_output_phases(&mut m, &settings.output_phases);
    UnitaryMatrix::from_trusted(m)
}

pub(crate) fn apply_output_phases(m: &mut ComplexMatrix, phases: &[f64]) {
    let n = m.cols();
    for (i, &d) in phases.iter().enumerate() {
        let e = Complex64::from_polar(1.0, d);
        for j in 0..n {
            m[(i, j)] *= e;
        }
    }
}

/// Achievable reflectivity interval `[R_min, R_max]` of an MZI whose static
/// splitters have reflectivities `r1` and `r2`.
pub fn achievable_range(r1: f64, r2: f64) -> Result<(f64, f64)> {
    check_splitter(r1)?;
    check_splitter(r2)?;
    Ok(range_unchecked(r1, r2))
}

fn range_unchecked(r1: f64, r2: f64) -> (f64, f64) {
    let a = (r1 * r2).sqrt();
    let b = ((1.0 - r1) * (1.0 - r2)).sqrt();
    let lo = ((a - b) * (a - b)).clamp(0.0, 1.0);
    let hi = ((a + b) * (a + b)).clamp(0.0, 1.0);
    (lo, hi)
}

fn check_splitter(r: f64) -> Result<()> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::OutOfRange(format!(
            "static splitter reflectivity {r} outside (0, 1)"
        )));
    }
    Ok(())
}

/// MZI power splitting `|M_11(phi)|^2` at internal phase `phi`.
pub fn mzi_reflectivity(r1: f64, r2: f64, internal_phase: f64) -> f64 {
    let (t1, t2) = (1.0 - r1, 1.0 - r2);
    r1 * r2 + t1 * t2 - 2.0 * (r1 * r2 * t1 * t2).sqrt() * internal_phase.cos()
}

/// Internal MZI phase in `[0, pi]` at which the node reflects `target`.
pub fn internal_phase_for_reflectivity(target: f64, r1: f64, r2: f64) -> Result<f64> {
    check_splitter(r1).map_err(|_| {
        Error::InvalidArgument(format!("degenerate static splitter r1 = {r1}"))
    })?;
    check_splitter(r2).map_err(|_| {
        Error::InvalidArgument(format!("degenerate static splitter r2 = {r2}"))
    })?;
    let (lo, hi) = range_unchecked(r1, r2);
    const SLACK: f64 = 1e-12;
    if !(target >= lo - SLACK && target <= hi + SLACK) {
        return Err(Error::OutOfRange(format!(
            "reflectivity {target} outside achievable range [{lo}, {hi}]"
        )));
    }
    let (t1, t2) = (1.0 - r1, 1.0 - r2);
    let denom = 2.0 * (r1 * r2 * t1 * t2).sqrt();
    let cos = ((r1 * r2 + t1 * t2 - target) / denom).clamp(-1.0, 1.0);
    Ok(cos.acos())
}

/// Static splitter pair and derived range for one node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeHardware {
    pub r1: f64,
    pub r2: f64,
    pub r_min: f64,
    pub r_max: f64,
}

impl NodeHardware {
    pub const BALANCED: NodeHardware = NodeHardware {
        r1: 0.5,
        r2: 0.5,
        r_min: 0.0,
        r_max: 1.0,
    };

    pub fn new(r1: f64, r2: f64) -> Result<Self> {
        let (r_min, r_max) = achievable_range(r1, r2)?;
        Ok(Self { r1, r2, r_min, r_max })
    }

    pub fn clamp(&self, reflectivity: f64) -> f64 {
        reflectivity.clamp(self.r_min, self.r_max)
    }

    pub fn contains(&self, reflectivity: f64) -> bool {
        reflectivity >= self.r_min && reflectivity <= self.r_max
    }
}

/// One fabricated device: static splitter reflectivities for every node.
#[derive(Clone, Debug, PartialEq)]
pub struct HardwareSample {
    layout: MeshLayout,
    sigma: f64,
    seed: u64,
    nodes: Vec<NodeHardware>,
}

impl HardwareSample {
    pub fn from_parts(layout: MeshLayout, sigma: f64, seed: u64, nodes: Vec<NodeHardware>) -> Result<Self> {
        if nodes.len() != layout.len() {
            return Err(Error::DimensionMismatch {
                expected: layout.len(),
                found: nodes.len(),
            });
        }
        if sigma.is_nan() || sigma < 0.0 {
            return Err(Error::InvalidArgument(format!("sigma {sigma} must be nonnegative")));
        }
        Ok(Self {
            layout,
            sigma,
            seed,
            nodes,
        })
    }

    pub fn layout(&self) -> &MeshLayout {
        &self.layout
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn nodes(&self) -> &[NodeHardware] {
        &self.nodes
    }

    pub(crate) fn check_layout(&self, layout: &MeshLayout) -> Result<()> {
        if &self.layout != layout {
            return Err(Error::LayoutMismatch(format!(
                "hardware is for a {} layout with n = {}, {} extra layers; settings use {} with n = {}, {} extra layers",
                self.layout.kind(),
                self.layout.n_modes(),
                self.layout.extra_layers(),
                layout.kind(),
                layout.n_modes(),
                layout.extra_layers()
            )));
        }
        Ok(())
    }
}

fn draw_splitter<R: rand::Rng>(normal: &Normal<f64>, rng: &mut R) -> f64 {
    let (lo, hi) = SPLITTER_DRAW_BAND;
    loop {
        let r = normal.sample(rng);
        if r > lo && r < hi {
            return r;
        }
    }
}

/// Draw static splitter reflectivities from `Normal(0.5, sigma^2)` for every node.
///
/// Each node draws from its own stream derived from `(seed, node index)`.
pub fn sample_hardware(layout: &MeshLayout, sigma: f64, seed: u64) -> Result<HardwareSample> {
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::InvalidArgument(format!("sigma {sigma} must be nonnegative")));
    }
    let nodes = if sigma == 0.0 {
        vec![NodeHardware::BALANCED; layout.len()]
    } else {
        let normal = Normal::new(0.5, sigma)
            .map_err(|e| Error::InvalidArgument(format!("sigma {sigma}: {e}")))?;
        (0..layout.len())
            .map(|k| {
                let mut rng = seed::rng(seed::derive(seed, &[seed::stream::NODE, k as u64]));
                let r1 = draw_splitter(&normal, &mut rng);
                let r2 = draw_splitter(&normal, &mut rng);
                NodeHardware::new(r1, r2)
            })
            .collect::<Result<Vec<_>>>()?
    };
    Ok(HardwareSample {
        layout: layout.clone(),
        sigma,
        seed,
        nodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;
    use approx::assert_abs_diff_eq;

    #[test]
    fn square_counts() {
        assert_eq!(square_layout(2, 0).unwrap().len(), 1);
        let l = square_layout(20, 0).unwrap();
        assert_eq!(l.len(), 190);
        assert_eq!(l.n_layers(), 20);
        for layer in 0..20 {
            let count = l.nodes().iter().filter(|n| n.layer == layer).count();
            assert_eq!(count, if layer % 2 == 0 { 10 } else { 9 });
        }
        assert!(matches!(square_layout(1, 0), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn square_extra_layer_continues_quincunx() {
        let l = square_layout(4, 1).unwrap();
        assert_eq!(l.len(), 8);
        let fifth: Vec<_> = l.nodes().iter().filter(|n| n.layer == 4).map(|n| n.top_mode).collect();
        assert_eq!(fifth, vec![0, 2]);
        // base layers come first in application order
        assert_eq!(&l.nodes()[..6], square_layout(4, 0).unwrap().nodes());
    }

    #[test]
    fn triangular_counts() {
        assert_eq!(triangular_layout(2).unwrap().len(), 1);
        let t3 = triangular_layout(3).unwrap();
        assert_eq!(t3.len(), 3);
        assert_eq!(t3.n_layers(), 3);
        assert_eq!(triangular_layout(20).unwrap().len(), 190);
        assert_eq!(triangular_layout(20).unwrap().n_layers(), 37);
    }

    #[test]
    fn layouts_have_unique_slots_and_disjoint_layers() {
        for l in [square_layout(7, 2).unwrap(), triangular_layout(7).unwrap()] {
            for w in l.nodes().windows(2) {
                assert!((w[0].layer, w[0].slot) < (w[1].layer, w[1].slot));
                if w[0].layer == w[1].layer {
                    assert!(w[1].top_mode >= w[0].top_mode + 2);
                }
            }
            assert!(l.nodes().iter().all(|n| n.top_mode <= 5));
        }
    }

    #[test]
    fn range_examples() {
        assert_eq!(achievable_range(0.5, 0.5).unwrap(), (0.0, 1.0));
        let (lo, hi) = achievable_range(0.6, 0.6).unwrap();
        assert_abs_diff_eq!(lo, 0.04, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 1.0, epsilon = 1e-12);
        let (lo, hi) = achievable_range(0.55, 0.45).unwrap();
        assert_abs_diff_eq!(lo, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 0.99, epsilon = 1e-12);
        assert!(achievable_range(0.0, 0.5).is_err());
        assert!(achievable_range(0.5, 1.0).is_err());
    }

    #[test]
    fn range_min_zero_iff_balanced_products() {
        for r in [0.1, 0.3, 0.45, 0.7] {
            let (lo, _) = achievable_range(r, 1.0 - r).unwrap();
            assert!(lo < 1e-15);
        }
        let (lo, _) = achievable_range(0.3, 0.4).unwrap();
        assert!(lo > 1e-3);
    }

    #[test]
    fn internal_phase_examples() {
        assert_abs_diff_eq!(internal_phase_for_reflectivity(0.5, 0.5, 0.5).unwrap(), PI / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(internal_phase_for_reflectivity(0.0, 0.5, 0.5).unwrap(), 0.0, epsilon = 1e-7);
        let phi = internal_phase_for_reflectivity(0.5, 0.6, 0.6).unwrap();
        assert_abs_diff_eq!(mzi_reflectivity(0.6, 0.6, phi), 0.5, epsilon = 1e-9);
        assert!(matches!(
            internal_phase_for_reflectivity(0.01, 0.6, 0.6),
            Err(Error::OutOfRange(_))
        ));
        assert!(matches!(
            internal_phase_for_reflectivity(0.5, 1.0, 0.6),
            Err(Error::InvalidArgument(_))
        ));
        // balanced splitters reduce to R = sin^2(phi / 2)
        for r in [0.0, 0.2, 0.5, 0.9, 1.0] {
            let phi = internal_phase_for_reflectivity(r, 0.5, 0.5).unwrap();
            assert_abs_diff_eq!((phi / 2.0).sin().powi(2), r, epsilon = 1e-12);
        }
    }

    #[test]
    fn hardware_sigma_zero_is_balanced() {
        let l = square_layout(5, 1).unwrap();
        let hw = sample_hardware(&l, 0.0, 3).unwrap();
        assert!(hw.nodes().iter().all(|h| *h == NodeHardware::BALANCED));
        assert!(sample_hardware(&l, -0.1, 3).is_err());
    }

    #[test]
    fn hardware_deterministic_and_prefix_stable() {
        let l = square_layout(6, 0).unwrap();
        let l2 = square_layout(6, 1).unwrap();
        let a = sample_hardware(&l, 0.05, 11).unwrap();
        let b = sample_hardware(&l, 0.05, 11).unwrap();
        assert_eq!(a, b);
        let c = sample_hardware(&l2, 0.05, 11).unwrap();
        assert_eq!(a.nodes(), &c.nodes()[..l.len()]);
        for h in a.nodes() {
            assert!(h.r1 > 0.005 && h.r1 < 0.995 && h.r_min <= h.r_max);
        }
    }

    #[test]
    fn hardware_statistics() {
        let l = square_layout(50, 0).unwrap();
        let hw = sample_hardware(&l, 0.025, 5).unwrap();
        let draws: Vec<f64> = hw.nodes().iter().flat_map(|h| [h.r1, h.r2]).collect();
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - 0.5).abs() < 4.0 * 0.025 / n.sqrt());
        assert!((var.sqrt() - 0.025).abs() < 0.025 * 4.0 / (2.0 * n).sqrt());
    }

    #[test]
    fn forward_model_examples() {
        let l = square_layout(4, 1).unwrap();
        let s = MeshSettings::new(l.clone(), vec![NodeSetting::BAR; l.len()], vec![0.0; 4]).unwrap();
        let u = mesh_unitary(&s);
        assert_eq!(u.matrix(), &ComplexMatrix::identity(4).unwrap());

        let l = square_layout(2, 0).unwrap();
        let s = MeshSettings::new(l, vec![NodeSetting::new(0.5, 0.0).unwrap()], vec![0.0; 2]).unwrap();
        let u = mesh_unitary(&s);
        let h = 0.5f64.sqrt();
        let want = [h, -h, h, h];
        for (z, w) in u.as_slice().iter().zip(want) {
            assert_abs_diff_eq!(z.re, w, epsilon = 1e-15);
            assert_abs_diff_eq!(z.im, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn settings_validation() {
        let l = square_layout(3, 0).unwrap();
        assert!(MeshSettings::new(l.clone(), vec![NodeSetting::BAR; 2], vec![0.0; 3]).is_err());
        assert!(MeshSettings::new(l.clone(), vec![NodeSetting::BAR; 3], vec![0.0; 2]).is_err());
        assert!(NodeSetting::new(1.2, 0.0).is_err());
        let s = NodeSetting::new(0.3, -0.5).unwrap();
        assert!(s.phase >= 0.0 && s.phase < TAU);
        assert_eq!(wrap_phase(TAU), 0.0);
    }
}
