//! Monte-Carlo harnesses: reflectivity statistics, fidelity sweeps, the
//! optimization benchmark and the Fourier reflectivity profile.
//!
//! Every trial derives its own seeds from the master seed and its grid
//! coordinates, and results are reduced in index order, so output does not
//! depend on the number of worker threads.

use serde::{Deserialize, Serialize};

use crate::decompose::{square_decompose, clip_to_hardware, decompose_clip_evaluate};
use crate::error::{Error, Result};
use crate::mesh::{sample_hardware, square_layout, triangular_layout, HardwareSample, LayoutKind, MeshLayout, NodeId};
use crate::optimize::{enhancement_ratio, initial_guess_redundant, optimize_settings};
use crate::par;
use crate::seed::{self, stream};
use crate::unitary::{fourier_matrix, haar_random_unitary, UnitaryMatrix};

/// Histogram bin width over `[0, 1]`.
pub const HIST_BIN_WIDTH: f64 = 0.02;
pub const HIST_BINS: usize = 50;

/// Side of the centre region as a fraction of the mesh size.
pub const CENTRE_FRACTION: f64 = 0.2;

/// Default optimizer budget used by the benchmark.
pub const BENCH_MAX_ITERS: usize = 2000;
pub const BENCH_TOL: f64 = 1e-13;

/// Attempts per benchmark trial when searching for an affected pair.
pub const MAX_DRAWS_PER_TRIAL: u64 = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    FirstColumn,
    TopRow,
    Centre,
}

impl Region {
    pub const ALL: [Region; 3] = [Region::FirstColumn, Region::TopRow, Region::Centre];

    pub fn as_str(self) -> &'static str {
        match self {
            Region::FirstColumn => "first_column",
            Region::TopRow => "top_row",
            Region::Centre => "centre",
        }
    }

    /// Whether `node` of an `n`-mode mesh lies in this region.
    ///
    /// The mesh is drawn on an `n x n` picture: layer `l` spans `[l, l+1]`
    /// horizontally and a node on modes `(m, m+1)` sits at height `m + 1`.
    /// The centre is the closed square `[0.4 n, 0.6 n]^2` in that picture.
    pub fn contains(self, node: &NodeId, n: usize) -> bool {
        match self {
            Region::FirstColumn => node.layer == 0,
            Region::TopRow => node.top_mode == 0,
            Region::Centre => {
                let half = 0.5 * CENTRE_FRACTION * n as f64;
                let mid = 0.5 * n as f64;
                let x = node.layer as f64 + 0.5;
                let y = node.top_mode as f64 + 1.0;
                (x - mid).abs() <= half + 1e-12 && (y - mid).abs() <= half + 1e-12
            }
        }
    }
}

fn bin_of(r: f64) -> usize {
    ((r / HIST_BIN_WIDTH) as usize).min(HIST_BINS - 1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionHistogram {
    pub region: Region,
    /// Nodes in the region.
    pub node_count: usize,
    /// Counts per bin of width `HIST_BIN_WIDTH`.
    pub counts: Vec<u64>,
    /// Mean reflectivity over all node visits.
    pub mean: f64,
    /// Standard error of `mean`, from the spread of per-sample region means.
    pub std_err: f64,
    pub max: f64,
    /// Node visits with reflectivity strictly above 0.4.
    pub count_above_0_4: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapEntry {
    pub layer: usize,
    pub slot: usize,
    pub top_mode: usize,
    pub mean_reflectivity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialStats {
    pub n_modes: usize,
    pub samples: usize,
    pub mean_reflectivity_map: Vec<MapEntry>,
    pub histograms: Vec<RegionHistogram>,
    pub overall_mean: f64,
}

impl SpatialStats {
    pub fn histogram(&self, region: Region) -> &RegionHistogram {
        self.histograms
            .iter()
            .find(|h| h.region == region)
            .expect("all regions are populated")
    }
}

#[derive(Clone)]
struct SpatialPartial {
    sums: Vec<f64>,
    counts: [Vec<u64>; 3],
    region_mean_sum: [f64; 3],
    region_mean_sq: [f64; 3],
    max: [f64; 3],
    above: [u64; 3],
}

impl SpatialPartial {
    fn new(k: usize) -> Self {
        Self {
            sums: vec![0.0; k],
            counts: std::array::from_fn(|_| vec![0; HIST_BINS]),
            region_mean_sum: [0.0; 3],
            region_mean_sq: [0.0; 3],
            max: [0.0; 3],
            above: [0; 3],
        }
    }

    fn merge(mut self, other: &Self) -> Self {
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            *a += b;
        }
        for r in 0..3 {
            for (a, b) in self.counts[r].iter_mut().zip(&other.counts[r]) {
                *a += b;
            }
            self.region_mean_sum[r] += other.region_mean_sum[r];
            self.region_mean_sq[r] += other.region_mean_sq[r];
            self.max[r] = self.max[r].max(other.max[r]);
            self.above[r] += other.above[r];
        }
        self
    }
}

/// Samples per work unit; fixing it keeps floating-point reduction order independent of threads.
const CHUNK: usize = 32;

/// Decompose `samples` Haar unitaries on the square mesh and accumulate
/// per-position mean reflectivities and region histograms.
pub fn reflectivity_statistics(n: usize, samples: usize, seed: u64) -> Result<SpatialStats> {
    if n < 4 {
        return Err(Error::InvalidDimension(format!(
            "reflectivity statistics need n >= 4 for a nonempty centre, got {n}"
        )));
    }
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be at least 1".into()));
    }
    let layout = square_layout(n, 0)?;
    let membership: Vec<[bool; 3]> = layout
        .nodes()
        .iter()
        .map(|node| Region::ALL.map(|r| r.contains(node, n)))
        .collect();
    let region_sizes: [usize; 3] =
        std::array::from_fn(|r| membership.iter().filter(|m| m[r]).count());
    let k = layout.len();

    let n_chunks = samples.div_ceil(CHUNK);
    let partials = par::map_range(n_chunks, |c| -> Result<SpatialPartial> {
        let mut acc = SpatialPartial::new(k);
        for s in c * CHUNK..((c + 1) * CHUNK).min(samples) {
            let u = haar_random_unitary(n, seed::derive(seed, &[stream::UNITARY, s as u64]))?;
            let settings = square_decompose(&u)?;
            let mut region_sum = [0.0; 3];
            for (i, st) in settings.per_node().iter().enumerate() {
                let r = st.reflectivity;
                acc.sums[i] += r;
                for reg in 0..3 {
                    if membership[i][reg] {
                        acc.counts[reg][bin_of(r)] += 1;
                        region_sum[reg] += r;
                        acc.max[reg] = acc.max[reg].max(r);
                        if r > 0.4 {
                            acc.above[reg] += 1;
                        }
                    }
                }
            }
            for reg in 0..3 {
                let m = region_sum[reg] / region_sizes[reg] as f64;
                acc.region_mean_sum[reg] += m;
                acc.region_mean_sq[reg] += m * m;
            }
        }
        Ok(acc)
    });
    let mut total = SpatialPartial::new(k);
    for p in partials {
        total = total.merge(&p?);
    }

    let ns = samples as f64;
    let mean_reflectivity_map = layout
        .nodes()
        .iter()
        .zip(&total.sums)
        .map(|(node, s)| MapEntry {
            layer: node.layer,
            slot: node.slot,
            top_mode: node.top_mode,
            mean_reflectivity: s / ns,
        })
        .collect();
    let histograms = Region::ALL
        .iter()
        .enumerate()
        .map(|(r, &region)| {
            let mean = total.region_mean_sum[r] / ns;
            let var = if samples > 1 {
                ((total.region_mean_sq[r] - ns * mean * mean) / (ns - 1.0)).max(0.0)
            } else {
                0.0
            };
            RegionHistogram {
                region,
                node_count: region_sizes[r],
                counts: total.counts[r].clone(),
                mean,
                std_err: (var / ns).sqrt(),
                max: total.max[r],
                count_above_0_4: total.above[r],
            }
        })
        .collect();
    Ok(SpatialStats {
        n_modes: n,
        samples,
        mean_reflectivity_map,
        histograms,
        overall_mean: total.sums.iter().sum::<f64>() / (ns * k as f64),
    })
}

/// Aggregate of one `(N, sigma, kind)` cell of the fidelity sweep.
///
/// Infidelity and deviation statistics are taken over affected trials only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub n_modes: usize,
    pub sigma: f64,
    pub kind: LayoutKind,
    pub trials: usize,
    pub affected_fraction: f64,
    pub mean_infidelity_affected: f64,
    pub std_infidelity_affected: f64,
    pub mean_rel_deviation: f64,
    pub max_rel_deviation: f64,
}

impl SweepRecord {
    pub fn affected_count(&self) -> usize {
        (self.affected_fraction * self.trials as f64).round() as usize
    }

    /// Binomial standard error of `affected_fraction`.
    pub fn affected_std_err(&self) -> f64 {
        let p = self.affected_fraction;
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }

    /// Standard error of `mean_infidelity_affected`.
    pub fn infidelity_std_err(&self) -> f64 {
        let k = self.affected_count();
        if k == 0 {
            0.0
        } else {
            self.std_infidelity_affected / (k as f64).sqrt()
        }
    }
}

pub(crate) fn layout_for(kind: LayoutKind, n: usize) -> Result<MeshLayout> {
    match kind {
        LayoutKind::Square => square_layout(n, 0),
        LayoutKind::Triangular => triangular_layout(n),
    }
}

/// Seeds for trial `t` at size `n`. They do not depend on sigma or mesh kind,
/// so cells along those axes share unitaries and splitter noise.
pub fn trial_seeds(master: u64, n: usize, t: u64) -> (u64, u64) {
    (
        seed::derive(master, &[stream::UNITARY, n as u64, t]),
        seed::derive(master, &[stream::HARDWARE, n as u64, t]),
    )
}

struct TrialOutcome {
    affected: bool,
    infidelity: f64,
    mean_rel: f64,
    max_rel: f64,
}

/// Adapted-decomposition sweep over every `(N, sigma)` cell.
pub fn fidelity_sweep(
    sizes: &[usize],
    sigmas: &[f64],
    trials: usize,
    kind: LayoutKind,
    seed: u64,
) -> Result<Vec<SweepRecord>> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    if let Some(s) = sigmas.iter().find(|s| s.is_nan() || **s < 0.0) {
        return Err(Error::InvalidArgument(format!("sigma {s} must be nonnegative")));
    }
    let cells: Vec<(usize, f64)> = sizes
        .iter()
        .flat_map(|&n| sigmas.iter().map(move |&s| (n, s)))
        .collect();
    let layouts = sizes
        .iter()
        .map(|&n| layout_for(kind, n).map(|l| (n, l)))
        .collect::<Result<Vec<_>>>()?;
    let outcomes = par::map_range(cells.len() * trials, |idx| -> Result<TrialOutcome> {
        let (n, sigma) = cells[idx / trials];
        let t = (idx % trials) as u64;
        let layout = &layouts.iter().find(|(m, _)| *m == n).expect("layout built").1;
        let (u_seed, hw_seed) = trial_seeds(seed, n, t);
        let u = haar_random_unitary(n, u_seed)?;
        let hw = sample_hardware(layout, sigma, hw_seed)?;
        let e = decompose_clip_evaluate(&u, kind, &hw)?;
        Ok(TrialOutcome {
            affected: e.affected,
            infidelity: 1.0 - e.fidelity,
            mean_rel: e.deviation.mean_rel,
            max_rel: e.deviation.max_rel,
        })
    });
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(cells
        .iter()
        .zip(outcomes.chunks(trials))
        .map(|(&(n, sigma), chunk)| {
            let hit: Vec<&TrialOutcome> = chunk.iter().filter(|o| o.affected).collect();
            let k = hit.len() as f64;
            let mean = |f: fn(&TrialOutcome) -> f64| {
                if hit.is_empty() {
                    0.0
                } else {
                    hit.iter().map(|o| f(o)).sum::<f64>() / k
                }
            };
            let mean_inf = mean(|o| o.infidelity);
            let std_inf = if hit.len() > 1 {
                (hit.iter().map(|o| (o.infidelity - mean_inf).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
            } else {
                0.0
            };
            SweepRecord {
                n_modes: n,
                sigma,
                kind,
                trials,
                affected_fraction: k / trials as f64,
                mean_infidelity_affected: mean_inf,
                std_infidelity_affected: std_inf,
                mean_rel_deviation: mean(|o| o.mean_rel),
                max_rel_deviation: mean(|o| o.max_rel),
            }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchVariant {
    /// Optimize the plain square mesh from the clipped decomposition.
    OptimizeSquare,
    /// Append one redundant layer, start from the redundant guess, optimize.
    OptimizeExtraLayer,
}

impl BenchVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            BenchVariant::OptimizeSquare => "optimize_square",
            BenchVariant::OptimizeExtraLayer => "optimize_extra_layer",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub n_modes: usize,
    pub variant: BenchVariant,
    pub trials: usize,
    /// Mean per-trial enhancement; infinite if any trial reached unit fidelity.
    pub mean_enhancement: f64,
    /// Enhancement of the mean infidelities, `<1 - F_direct> / <1 - F_after>`.
    pub pooled_enhancement: f64,
    pub mean_fidelity_before: f64,
    pub mean_fidelity_after: f64,
    /// Every trial's objective trace was non-increasing.
    pub monotone: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct BenchTrial {
    pub fidelity_direct: f64,
    pub fidelity_after: [f64; 2],
    pub start_fidelity: [f64; 2],
    pub monotone: [bool; 2],
}

/// Draw the first affected `(unitary, hardware)` pair for benchmark trial `t`.
fn affected_pair(n: usize, sigma: f64, master: u64, t: u64) -> Result<(UnitaryMatrix, HardwareSample, f64)> {
    let extended = square_layout(n, 1)?;
    let base = square_layout(n, 0)?;
    let mut last = None;
    for attempt in 0..MAX_DRAWS_PER_TRIAL {
        let u = haar_random_unitary(n, seed::derive(master, &[stream::UNITARY, n as u64, t, attempt]))?;
        let hw = sample_hardware(&extended, sigma, seed::derive(master, &[stream::HARDWARE, n as u64, t, attempt]))?;
        let base_hw = HardwareSample::from_parts(base.clone(), sigma, hw.seed(), hw.nodes()[..base.len()].to_vec())?;
        let e = decompose_clip_evaluate(&u, LayoutKind::Square, &base_hw)?;
        let affected = e.affected;
        last = Some((u, hw, e.fidelity));
        if affected {
            break;
        }
    }
    Ok(last.expect("at least one attempt"))
}

/// Run one benchmark trial: both variants on the same affected pair.
pub fn benchmark_trial(n: usize, sigma: f64, master: u64, t: u64) -> Result<BenchTrial> {
    let (u, hw_ext, fidelity_direct) = affected_pair(n, sigma, master, t)?;
    let base = square_layout(n, 0)?;
    let extended = square_layout(n, 1)?;
    let hw_base = HardwareSample::from_parts(base.clone(), sigma, hw_ext.seed(), hw_ext.nodes()[..base.len()].to_vec())?;

    let (start_a, _) = clip_to_hardware(&square_decompose(&u)?, &hw_base)?;
    let a = optimize_settings(&u, &base, &hw_base, &start_a, BENCH_MAX_ITERS, BENCH_TOL)?;
    let start_b = initial_guess_redundant(&u, &extended, &hw_ext)?;
    let b = optimize_settings(&u, &extended, &hw_ext, &start_b, BENCH_MAX_ITERS, BENCH_TOL)?;
    let monotone = |tr: &[f64]| tr.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    Ok(BenchTrial {
        fidelity_direct,
        fidelity_after: [a.fidelity_after, b.fidelity_after],
        start_fidelity: [a.fidelity_before, b.fidelity_before],
        monotone: [monotone(&a.trace), monotone(&b.trace)],
    })
}

/// Optimization benchmark on affected `(unitary, hardware)` pairs.
///
/// Each trial draws pairs until the clipped square decomposition is affected,
/// so every trial has a nonzero direct infidelity to improve on.
pub fn optimization_benchmark(sizes: &[usize], sigma: f64, trials: usize, seed: u64) -> Result<Vec<BenchmarkRecord>> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    if sigma.is_nan() || sigma < 0.0 {
        return Err(Error::InvalidArgument(format!("sigma {sigma} must be nonnegative")));
    }
    let jobs: Vec<(usize, u64)> = sizes
        .iter()
        .flat_map(|&n| (0..trials as u64).map(move |t| (n, t)))
        .collect();
    let results = par::map_range(jobs.len(), |i| benchmark_trial(jobs[i].0, sigma, seed, jobs[i].1))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for (&n, chunk) in sizes.iter().zip(results.chunks(trials)) {
        let k = chunk.len() as f64;
        for (v, variant) in [BenchVariant::OptimizeSquare, BenchVariant::OptimizeExtraLayer]
            .into_iter()
            .enumerate()
        {
            let mean_enh = chunk
                .iter()
                .map(|t| enhancement_ratio(t.fidelity_direct, t.fidelity_after[v]))
                .sum::<f64>()
                / k;
            let before = chunk.iter().map(|t| t.fidelity_direct).sum::<f64>() / k;
            let after = chunk.iter().map(|t| t.fidelity_after[v]).sum::<f64>() / k;
            out.push(BenchmarkRecord {
                n_modes: n,
                variant,
                trials,
                mean_enhancement: mean_enh,
                pooled_enhancement: enhancement_ratio(before, after),
                mean_fidelity_before: before,
                mean_fidelity_after: after,
                monotone: chunk.iter().all(|t| t.monotone[v]),
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierRecord {
    pub n_modes: usize,
    pub n_low_nodes: usize,
    pub centre_offdiag_low_count: usize,
    pub haar_mean_low_nodes: f64,
}

/// Whether `node` lies on one of the two main diagonals of the square mesh,
/// `top_mode = layer` or `top_mode + layer = n - 2`, allowing one step of
/// slack for the quincunx offset.
pub fn on_main_diagonal(node: &NodeId, n: usize) -> bool {
    let (l, m) = (node.layer as i64, node.top_mode as i64);
    (l - m).abs() <= 1 || (l + m - (n as i64 - 2)).abs() <= 1
}

/// Nodes of the square decomposition of `u` with reflectivity below `threshold`.
pub fn low_reflectivity_nodes(u: &UnitaryMatrix, threshold: f64) -> Result<Vec<(NodeId, f64)>> {
    let settings = square_decompose(u)?;
    Ok(settings
        .layout()
        .nodes()
        .iter()
        .zip(settings.per_node())
        .filter(|(_, s)| s.reflectivity < threshold)
        .map(|(n, s)| (*n, s.reflectivity))
        .collect())
}

/// Count low-reflectivity nodes for Fourier matrices, alongside the mean count
/// over `haar_samples` Haar unitaries of the same size.
pub fn fourier_reflectivity_profile(
    sizes: &[usize],
    low_threshold: f64,
    haar_samples: usize,
    seed: u64,
) -> Result<Vec<FourierRecord>> {
    if !(low_threshold > 0.0 && low_threshold < 0.5) {
        return Err(Error::InvalidArgument(format!(
            "low threshold {low_threshold} must lie in (0, 0.5)"
        )));
    }
    if haar_samples == 0 {
        return Err(Error::InvalidArgument("haar_samples must be at least 1".into()));
    }
    sizes
        .iter()
        .map(|&n| {
            let low = low_reflectivity_nodes(&fourier_matrix(n)?, low_threshold)?;
            let centre_offdiag = low
                .iter()
                .filter(|(node, _)| Region::Centre.contains(node, n) && !on_main_diagonal(node, n))
                .count();
            let counts = par::map_range(haar_samples, |s| -> Result<usize> {
                let u = haar_random_unitary(n, seed::derive(seed, &[stream::UNITARY, n as u64, s as u64]))?;
                Ok(low_reflectivity_nodes(&u, low_threshold)?.len())
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
            Ok(FourierRecord {
                n_modes: n,
                n_low_nodes: low.len(),
                centre_offdiag_low_count: centre_offdiag,
                haar_mean_low_nodes: counts.iter().sum::<usize>() as f64 / haar_samples as f64,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centre_region_at_twenty_modes() {
        let layout = square_layout(20, 0).unwrap();
        let centre: Vec<(usize, usize)> = layout
            .nodes()
            .iter()
            .filter(|n| Region::Centre.contains(n, 20))
            .map(|n| (n.layer, n.top_mode))
            .collect();
        assert_eq!(
            centre,
            vec![(8, 8), (8, 10), (9, 7), (9, 9), (9, 11), (10, 8), (10, 10), (11, 7), (11, 9), (11, 11)]
        );
        let top = layout.nodes().iter().filter(|n| Region::TopRow.contains(n, 20)).count();
        let first = layout.nodes().iter().filter(|n| Region::FirstColumn.contains(n, 20)).count();
        assert_eq!((top, first), (10, 10));
    }

    #[test]
    fn statistics_bookkeeping() {
        let s = reflectivity_statistics(6, 40, 1).unwrap();
        for h in &s.histograms {
            assert_eq!(h.counts.iter().sum::<u64>(), (h.node_count * 40) as u64);
        }
        assert!(s.mean_reflectivity_map.iter().all(|e| (0.0..=1.0).contains(&e.mean_reflectivity)));
        assert!(reflectivity_statistics(3, 10, 1).is_err());
        assert!(reflectivity_statistics(6, 0, 1).is_err());
    }

    #[test]
    fn statistics_thread_independent() {
        let a = par::with_jobs(Some(1), || reflectivity_statistics(8, 100, 5).unwrap());
        let b = par::with_jobs(Some(4), || reflectivity_statistics(8, 100, 5).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn sweep_sigma_zero_is_clean() {
        for kind in [LayoutKind::Square, LayoutKind::Triangular] {
            let recs = fidelity_sweep(&[4, 7], &[0.0], 20, kind, 3).unwrap();
            for r in recs {
                assert_eq!(r.affected_fraction, 0.0);
                assert_eq!(r.mean_infidelity_affected, 0.0);
            }
        }
        assert!(fidelity_sweep(&[4], &[0.1], 0, LayoutKind::Square, 3).is_err());
    }

    #[test]
    fn sweep_thread_independent() {
        let a = par::with_jobs(Some(1), || fidelity_sweep(&[5, 8], &[0.02, 0.08], 30, LayoutKind::Square, 9).unwrap());
        let b = par::with_jobs(Some(3), || fidelity_sweep(&[5, 8], &[0.02, 0.08], 30, LayoutKind::Square, 9).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn fourier_lows_sit_on_diagonals() {
        for n in [8, 16] {
            let low = low_reflectivity_nodes(&fourier_matrix(n).unwrap(), 0.1).unwrap();
            assert!(low.iter().all(|(node, _)| on_main_diagonal(node, n)), "n = {n}: {low:?}");
        }
    }

    #[test]
    fn benchmark_small() {
        let recs = optimization_benchmark(&[2, 3], 0.05, 4, 1).unwrap();
        assert_eq!(recs.len(), 4);
        for r in &recs {
            assert!(r.monotone);
            assert!(r.mean_fidelity_after >= r.mean_fidelity_before - 1e-12 || r.variant == BenchVariant::OptimizeExtraLayer);
        }
    }
}
