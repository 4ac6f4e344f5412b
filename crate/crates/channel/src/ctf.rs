//! Channel transfer function assembly.
//!
//! The CTF at one grid cell is the LOS term plus the double sum of per-ray
//! NLOS terms: pattern row-vector, 2x2 polarization matrix, pattern
//! column-vector, amplitude sqrt(P) (LOS) or sqrt(P_n / M_n) (ray), and the
//! delay phasor exp(-j 2 pi f tau). Path loss is free-space loss plus a
//! frequency-interpolated atmospheric absorption term and a per-drop
//! shadowing draw.
//!
//! Tensor fill: when both antenna patterns are angle-independent, each
//! cluster's ray sum factors out of the (p, q, t) dependence, so per-cluster
//! ray aggregates are precomputed once per (carrier, frequency sample) and
//! cells combine them with their local cluster gains. Otherwise, rays are
//! evaluated per cell. Both paths are pure functions of the evolved
//! realization; with the `parallel` feature the cell loop runs on rayon.

use crate::error::ChannelError;
use crate::evolution::{GridRealization, LosPath};
use crate::geometry::{gcs_to_lcs, vector_to_angles, AnglePair, Link};
use crate::init::{db_to_power, ClusterState, RayState};
use crate::Result;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Free-space path loss plus atmospheric absorption. The absorption table
/// holds (frequency Hz, attenuation dB/km) rows, linearly interpolated and
/// clamped at the band edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathlossModel {
    pub absorption_table: Vec<(f64, f64)>,
    pub shadowing_sigma_db: f64,
}

impl Default for PathlossModel {
    /// Flat 10 dB/km across 300-400 GHz. A placeholder magnitude, not a
    /// physical absorption spectrum; override from scenario files.
    fn default() -> Self {
        PathlossModel {
            absorption_table: vec![(300e9, 10.0), (400e9, 10.0)],
            shadowing_sigma_db: 0.0,
        }
    }
}

impl PathlossModel {
    pub fn flat(db_per_km: f64) -> Self {
        PathlossModel {
            absorption_table: vec![(300e9, db_per_km), (400e9, db_per_km)],
            shadowing_sigma_db: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.absorption_table.is_empty() {
            return Err(ChannelError::InvalidConfig("absorption table is empty".into()));
        }
        for w in self.absorption_table.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(ChannelError::InvalidConfig(
                    "absorption table must be sorted by frequency".into(),
                ));
            }
        }
        if self.absorption_table.iter().any(|&(_, a)| a < 0.0) {
            return Err(ChannelError::InvalidConfig("negative absorption".into()));
        }
        if self.shadowing_sigma_db < 0.0 {
            return Err(ChannelError::InvalidConfig("negative shadowing sigma".into()));
        }
        Ok(())
    }

    /// Absorption in dB/km at `f_hz`, interpolated and edge-clamped.
    pub fn absorption_db_per_km(&self, f_hz: f64) -> f64 {
        let t = &self.absorption_table;
        if f_hz <= t[0].0 {
            return t[0].1;
        }
        if f_hz >= t[t.len() - 1].0 {
            return t[t.len() - 1].1;
        }
        let i = t.partition_point(|&(f, _)| f <= f_hz);
        let (f0, a0) = t[i - 1];
        let (f1, a1) = t[i];
        a0 + (a1 - a0) * (f_hz - f0) / (f1 - f0)
    }
}

/// Path loss in dB: 20 log10(4 pi D / lambda) + D * absorption + shadow.
pub fn path_loss_db(
    distance_m: f64,
    f_hz: f64,
    model: &PathlossModel,
    shadow_db: f64,
) -> Result<f64> {
    if !(distance_m > 0.0) {
        return Err(ChannelError::InvalidConfig(format!(
            "path loss needs a positive distance, got {distance_m}"
        )));
    }
    if !(f_hz > 0.0) {
        return Err(ChannelError::InvalidConfig(format!(
            "path loss needs a positive frequency, got {f_hz}"
        )));
    }
    let wavelength = crate::SPEED_OF_LIGHT / f_hz;
    let fspl = 20.0 * (4.0 * PI * distance_m / wavelength).log10();
    let absorption = distance_m * model.absorption_db_per_km(f_hz) / 1000.0;
    Ok(fspl + absorption + shadow_db)
}

/// Table-driven pattern: complex per-polarization gains on a regular
/// (elevation, azimuth, frequency) grid, trilinearly interpolated and
/// edge-clamped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternTable {
    pub elevations_rad: Vec<f64>,
    pub azimuths_rad: Vec<f64>,
    pub frequencies_hz: Vec<f64>,
    /// Gains, elevation-major then azimuth then frequency.
    pub v: Vec<Complex64>,
    pub h: Vec<Complex64>,
}

impl PatternTable {
    fn idx(&self, e: usize, a: usize, f: usize) -> usize {
        (e * self.azimuths_rad.len() + a) * self.frequencies_hz.len() + f
    }

    fn validate(&self) -> Result<()> {
        let n = self.elevations_rad.len() * self.azimuths_rad.len() * self.frequencies_hz.len();
        if n == 0 || self.v.len() != n || self.h.len() != n {
            return Err(ChannelError::DimensionMismatch(format!(
                "pattern table has {} V / {} H gains for {} grid points",
                self.v.len(),
                self.h.len(),
                n
            )));
        }
        Ok(())
    }

    fn lookup(&self, angles: AnglePair, f_hz: f64) -> (Complex64, Complex64) {
        let (e0, e1, we) = bracket(&self.elevations_rad, angles.elevation);
        let (a0, a1, wa) = bracket(&self.azimuths_rad, angles.azimuth);
        let (f0, f1, wf) = bracket(&self.frequencies_hz, f_hz);
        let mut v = Complex64::new(0.0, 0.0);
        let mut h = Complex64::new(0.0, 0.0);
        for (e, ew) in [(e0, 1.0 - we), (e1, we)] {
            for (a, aw) in [(a0, 1.0 - wa), (a1, wa)] {
                for (f, fw) in [(f0, 1.0 - wf), (f1, wf)] {
                    let w = ew * aw * fw;
                    let i = self.idx(e, a, f);
                    v += self.v[i] * w;
                    h += self.h[i] * w;
                }
            }
        }
        (v, h)
    }
}

/// Bracketing indices and interpolation weight for `x` on a sorted axis.
fn bracket(axis: &[f64], x: f64) -> (usize, usize, f64) {
    if axis.len() == 1 || x <= axis[0] {
        return (0, 0, 0.0);
    }
    let last = axis.len() - 1;
    if x >= axis[last] {
        return (last, last, 0.0);
    }
    let i = axis.partition_point(|&v| v <= x);
    let w = (x - axis[i - 1]) / (axis[i] - axis[i - 1]);
    (i - 1, i, w)
}

/// Per-polarization antenna pattern, evaluated in the array's local frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AntennaPattern {
    /// Angle- and frequency-independent gains.
    Omni { v_gain: f64, h_gain: f64 },
    Table(PatternTable),
}

impl Default for AntennaPattern {
    /// Unit vertical gain in all directions.
    fn default() -> Self {
        AntennaPattern::Omni { v_gain: 1.0, h_gain: 0.0 }
    }
}

impl AntennaPattern {
    pub fn validate(&self) -> Result<()> {
        match self {
            AntennaPattern::Omni { .. } => Ok(()),
            AntennaPattern::Table(t) => t.validate(),
        }
    }

    /// (V, H) gains for a local-frame direction at frequency `f_hz`.
    pub fn gains(&self, lcs_angles: AnglePair, f_hz: f64) -> (Complex64, Complex64) {
        match self {
            AntennaPattern::Omni { v_gain, h_gain } => {
                (Complex64::new(*v_gain, 0.0), Complex64::new(*h_gain, 0.0))
            }
            AntennaPattern::Table(t) => t.lookup(lcs_angles, f_hz),
        }
    }

    /// True when gains do not depend on the direction, which lets the tensor
    /// fill aggregate rays per cluster instead of per cell.
    pub fn is_angle_independent(&self) -> bool {
        matches!(self, AntennaPattern::Omni { .. })
    }
}

/// Tx and Rx patterns of a link.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Patterns {
    pub tx: AntennaPattern,
    pub rx: AntennaPattern,
}

/// Componentwise sum of a cluster angle and a relative angle, wrapped into
/// canonical ranges (azimuth modulo 2 pi, elevation mirrored at the poles).
pub fn compose_angle(cluster_angle: AnglePair, rel_angle: AnglePair) -> AnglePair {
    AnglePair::new(
        cluster_angle.azimuth + rel_angle.azimuth,
        cluster_angle.elevation + rel_angle.elevation,
    )
}

fn unit_phasor(phase: f64) -> Complex64 {
    Complex64::from_polar(1.0, phase)
}

/// Delay phasor exp(-j 2 pi f tau).
fn delay_phasor(f_hz: f64, tau_s: f64) -> Complex64 {
    unit_phasor(-2.0 * PI * f_hz * tau_s)
}

/// LOS complex amplitude (everything except the delay phasor): pattern
/// row-vector times diag(exp(j Phi), -exp(j Phi)) times pattern
/// column-vector, scaled by sqrt of the linear LOS power at the carrier.
pub fn los_amplitude(
    los: &LosPath,
    los_phase: f64,
    shadow_db: f64,
    carrier_hz: f64,
    link: &Link,
    patterns: &Patterns,
    pathloss: &PathlossModel,
) -> Result<Complex64> {
    // Departure and arrival angles of the LOS path are both read off the
    // LOS vector.
    let angles = vector_to_angles(los.vector)?;
    let (tx_v, tx_h) = patterns.tx.gains(gcs_to_lcs(angles, link.tx.orientation), carrier_hz);
    let (rx_v, rx_h) = patterns.rx.gains(gcs_to_lcs(angles, link.rx.orientation), carrier_hz);
    let pl = path_loss_db(los.distance_m, carrier_hz, pathloss, shadow_db)?;
    let amp = db_to_power(-pl).sqrt();
    let pol = (tx_v * rx_v - tx_h * rx_h) * unit_phasor(los_phase);
    Ok(pol * amp)
}

/// LOS term of the CTF at intra-band frequency `f_hz`.
#[allow(clippy::too_many_arguments)]
pub fn h_los(
    los: &LosPath,
    los_phase: f64,
    shadow_db: f64,
    carrier_hz: f64,
    f_hz: f64,
    link: &Link,
    patterns: &Patterns,
    pathloss: &PathlossModel,
) -> Result<Complex64> {
    let amp = los_amplitude(los, los_phase, shadow_db, carrier_hz, link, patterns, pathloss)?;
    Ok(amp * delay_phasor(f_hz, los.delay_s))
}

/// Polarization/XPR matrix of one ray applied between pattern vectors.
fn ray_polarization(
    ray: &RayState,
    tx: (Complex64, Complex64),
    rx: (Complex64, Complex64),
) -> Complex64 {
    let co = (1.0 / ray.xpr).sqrt();
    let m_vv = unit_phasor(ray.phases[0]) * co;
    let m_vh = unit_phasor(ray.phases[1]);
    let m_hv = unit_phasor(ray.phases[2]);
    let m_hh = unit_phasor(ray.phases[3]) * co;
    tx.0 * (m_vv * rx.0 + m_vh * rx.1) + tx.1 * (m_hv * rx.0 + m_hh * rx.1)
}

/// Ray complex amplitude (everything except the delay phasor): pattern
/// vectors at the composed angles, XPR/phase matrix, and sqrt(P_n / M_n).
pub fn ray_amplitude(
    cluster: &ClusterState,
    ray: &RayState,
    rays_in_cluster: usize,
    carrier_hz: f64,
    link: &Link,
    patterns: &Patterns,
) -> Complex64 {
    let aod = compose_angle(cluster.aod, ray.rel_aod);
    let aoa = compose_angle(cluster.aoa, ray.rel_aoa);
    let tx = patterns.tx.gains(gcs_to_lcs(aod, link.tx.orientation), carrier_hz);
    let rx = patterns.rx.gains(gcs_to_lcs(aoa, link.rx.orientation), carrier_hz);
    ray_polarization(ray, tx, rx) * (cluster.power / rays_in_cluster as f64).sqrt()
}

/// One ray's NLOS term at intra-band frequency `f_hz`.
pub fn h_nlos_ray(
    cluster: &ClusterState,
    ray: &RayState,
    rays_in_cluster: usize,
    carrier_hz: f64,
    f_hz: f64,
    link: &Link,
    patterns: &Patterns,
) -> Complex64 {
    ray_amplitude(cluster, ray, rays_in_cluster, carrier_hz, link, patterns)
        * delay_phasor(f_hz, cluster.delay_s + ray.rel_delay_s)
}

/// Full CTF entry at grid positions (pi, qi, ti, ci) and intra-band
/// frequency `f_hz`: LOS term plus the sum over all clusters and rays.
#[allow(clippy::too_many_arguments)]
pub fn ctf_entry(
    real: &GridRealization,
    pi: usize,
    qi: usize,
    ti: usize,
    ci: usize,
    f_hz: f64,
    link: &Link,
    patterns: &Patterns,
    pathloss: &PathlossModel,
) -> Result<Complex64> {
    let carrier = real.grid.carriers_hz[ci];
    let cell = real.cell(pi, qi, ti, ci);
    let mut h = h_los(
        cell.los,
        real.los_phase,
        real.los_shadow_db,
        carrier,
        f_hz,
        link,
        patterns,
        pathloss,
    )?;
    for (n, cluster) in cell.clusters.iter().enumerate() {
        for ray in cell.cluster_rays(n) {
            h += h_nlos_ray(cluster, ray, cell.rays_per_cluster, carrier, f_hz, link, patterns);
        }
    }
    Ok(h)
}

/// Channel impulse response of one cell: (delay, complex amplitude) pairs,
/// LOS first, then every ray of every cluster.
#[allow(clippy::too_many_arguments)]
pub fn cell_cir(
    real: &GridRealization,
    pi: usize,
    qi: usize,
    ti: usize,
    ci: usize,
    link: &Link,
    patterns: &Patterns,
    pathloss: &PathlossModel,
) -> Result<Vec<(f64, Complex64)>> {
    let carrier = real.grid.carriers_hz[ci];
    let cell = real.cell(pi, qi, ti, ci);
    let mut cir = Vec::with_capacity(1 + cell.clusters.len() * cell.rays_per_cluster);
    let los_amp = los_amplitude(
        cell.los,
        real.los_phase,
        real.los_shadow_db,
        carrier,
        link,
        patterns,
        pathloss,
    )?;
    cir.push((cell.los.delay_s, los_amp));
    for (n, cluster) in cell.clusters.iter().enumerate() {
        for ray in cell.cluster_rays(n) {
            cir.push((
                cluster.delay_s + ray.rel_delay_s,
                ray_amplitude(cluster, ray, cell.rays_per_cluster, carrier, link, patterns),
            ));
        }
    }
    Ok(cir)
}

/// Complex CTF tensor indexed (p, q, t, carrier, f), p-major with the
/// intra-band frequency axis fastest. The f axis holds offsets around each
/// carrier.
#[derive(Debug, Clone, PartialEq)]
pub struct CtfTensor {
    pub tx_elements: Vec<usize>,
    pub rx_elements: Vec<usize>,
    pub time_points_s: Vec<f64>,
    pub carriers_hz: Vec<f64>,
    pub f_offsets_hz: Vec<f64>,
    pub values: Vec<Complex64>,
}

impl CtfTensor {
    pub fn dims(&self) -> [usize; 5] {
        [
            self.tx_elements.len(),
            self.rx_elements.len(),
            self.time_points_s.len(),
            self.carriers_hz.len(),
            self.f_offsets_hz.len(),
        ]
    }

    pub fn len(&self) -> usize {
        self.dims().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, pi: usize, qi: usize, ti: usize, ci: usize, fi: usize) -> usize {
        let [_, nq, nt, nc, nf] = self.dims();
        (((pi * nq + qi) * nt + ti) * nc + ci) * nf + fi
    }

    pub fn at(&self, pi: usize, qi: usize, ti: usize, ci: usize, fi: usize) -> Complex64 {
        self.values[self.index(pi, qi, ti, ci, fi)]
    }

    /// Memory footprint of the value payload in bytes.
    pub fn payload_bytes(dims: [usize; 5]) -> u64 {
        dims.iter().map(|&d| d as u64).product::<u64>() * 16
    }
}

/// LOS and total tensors of one drop; the NLOS part is `total - los`.
#[derive(Debug, Clone)]
pub struct CtfParts {
    pub total: CtfTensor,
    pub los: CtfTensor,
}

/// Per-(cell, f) values produced by the fill: (los, total).
type CellColumn = Vec<(Complex64, Complex64)>;

fn fill_cell_column(
    real: &GridRealization,
    link: &Link,
    patterns: &Patterns,
    pathloss: &PathlossModel,
    f_offsets: &[f64],
    aggregates: Option<&[Vec<Complex64>]>,
    flat: usize,
) -> Result<CellColumn> {
    let nq = real.grid.rx_elements.len();
    let nt = real.grid.time_points_s.len();
    let nc = real.grid.carriers_hz.len();
    let ci = flat % nc;
    let ti = (flat / nc) % nt;
    let qi = (flat / (nc * nt)) % nq;
    let pi = flat / (nc * nt * nq);

    let carrier = real.grid.carriers_hz[ci];
    let cell = real.cell(pi, qi, ti, ci);
    let los_amp = los_amplitude(
        cell.los,
        real.los_phase,
        real.los_shadow_db,
        carrier,
        link,
        patterns,
        pathloss,
    )?;

    let mut column = Vec::with_capacity(f_offsets.len());
    match aggregates {
        Some(agg) => {
            // Angle-independent patterns: combine per-cluster ray aggregates
            // with the cell's cluster gain sqrt(P_n) * exp(-j 2 pi f tau_n).
            for (fi, &off) in f_offsets.iter().enumerate() {
                let f = carrier + off;
                let los = los_amp * delay_phasor(f, cell.los.delay_s);
                let mut nlos = Complex64::new(0.0, 0.0);
                for (n, cluster) in cell.clusters.iter().enumerate() {
                    nlos += agg[ci * f_offsets.len() + fi][n]
                        * cluster.power.sqrt()
                        * delay_phasor(f, cluster.delay_s);
                }
                column.push((los, los + nlos));
            }
        }
        None => {
            let mut amps = Vec::with_capacity(cell.clusters.len() * cell.rays_per_cluster);
            for (n, cluster) in cell.clusters.iter().enumerate() {
                for ray in cell.cluster_rays(n) {
                    amps.push((
                        cluster.delay_s + ray.rel_delay_s,
                        ray_amplitude(cluster, ray, cell.rays_per_cluster, carrier, link, patterns),
                    ));
                }
            }
            for &off in f_offsets {
                let f = carrier + off;
                let los = los_amp * delay_phasor(f, cell.los.delay_s);
                let mut total = los;
                for &(tau, amp) in &amps {
                    total += amp * delay_phasor(f, tau);
                }
                column.push((los, total));
            }
        }
    }
    Ok(column)
}

/// Per-cluster ray aggregates for angle-independent patterns: for each
/// (carrier, f offset), sum over rays of the normalized polarization gain
/// times the relative-delay phasor. The cell contribution of cluster n is
/// then sqrt(P_n(cell)) * exp(-j 2 pi f tau_n(cell)) * aggregate[n].
fn ray_aggregates(
    real: &GridRealization,
    link: &Link,
    patterns: &Patterns,
    f_offsets: &[f64],
) -> Vec<Vec<Complex64>> {
    let nc = real.grid.carriers_hz.len();
    let nf = f_offsets.len();
    let tx = patterns.tx.gains(AnglePair::ZERO, real.grid.carriers_hz[0]);
    let rx = patterns.rx.gains(AnglePair::ZERO, real.grid.carriers_hz[0]);
    let _ = link;
    let mut out = Vec::with_capacity(nc * nf);
    for ci in 0..nc {
        let carrier = real.grid.carriers_hz[ci];
        // Any cell exposes the carrier's rays; cluster states are not used.
        let cell = real.cell(0, 0, 0, ci);
        let m = cell.rays_per_cluster as f64;
        for &off in f_offsets {
            let f = carrier + off;
            let mut per_cluster = Vec::with_capacity(real.n_clusters);
            for n in 0..real.n_clusters {
                let mut s = Complex64::new(0.0, 0.0);
                for ray in cell.cluster_rays(n) {
                    s += ray_polarization(ray, tx, rx) * delay_phasor(f, ray.rel_delay_s);
                }
                per_cluster.push(s / m.sqrt());
            }
            out.push(per_cluster);
        }
    }
    out
}

fn assemble(
    real: &GridRealization,
    f_offsets: &[f64],
    columns: Vec<CellColumn>,
) -> CtfParts {
    let nf = f_offsets.len();
    let total_len = columns.len() * nf;
    let mut los = Vec::with_capacity(total_len);
    let mut total = Vec::with_capacity(total_len);
    for column in columns {
        for (l, t) in column {
            los.push(l);
            total.push(t);
        }
    }
    let make = |values: Vec<Complex64>| CtfTensor {
        tx_elements: real.grid.tx_elements.clone(),
        rx_elements: real.grid.rx_elements.clone(),
        time_points_s: real.grid.time_points_s.clone(),
        carriers_hz: real.grid.carriers_hz.clone(),
        f_offsets_hz: f_offsets.to_vec(),
        values,
    };
    CtfParts { los: make(los), total: make(total) }
}

fn tensor_parts_impl(
    real: &GridRealization,
    link: &Link,
    patterns: &Patterns,
    pathloss: &PathlossModel,
    f_offsets: &[f64],
    parallel: bool,
) -> Result<CtfParts> {
    if f_offsets.is_empty() {
        return Err(ChannelError::EmptyInput("no intra-band frequency samples".into()));
    }
    patterns.tx.validate()?;
    patterns.rx.validate()?;
    pathloss.validate()?;
    let cells = real.grid.cell_count() * real.grid.carriers_hz.len();

    let aggregates = if patterns.tx.is_angle_independent() && patterns.rx.is_angle_independent() {
        Some(ray_aggregates(real, link, patterns, f_offsets))
    } else {
        None
    };
    let agg = aggregates.as_deref();

    let columns: Result<Vec<CellColumn>> = {
        #[cfg(feature = "parallel")]
        {
            if parallel {
                (0..cells)
                    .into_par_iter()
                    .map(|flat| {
                        fill_cell_column(real, link, patterns, pathloss, f_offsets, agg, flat)
                    })
                    .collect()
            } else {
                (0..cells)
                    .map(|flat| {
                        fill_cell_column(real, link, patterns, pathloss, f_offsets, agg, flat)
                    })
                    .collect()
            }
        }
        #[cfg(not(feature = "parallel"))]
        {
            let _ = parallel;
            (0..cells)
                .map(|flat| fill_cell_column(real, link, patterns, pathloss, f_offsets, agg, flat))
                .collect()
        }
    };
    Ok(assemble(real, f_offsets, columns?))
}

/// Fill LOS and total tensors for a realized grid. Uses the parallel cell
/// loop when the `parallel` feature is enabled.
pub fn ctf_tensor_parts(
    real: &GridRealization,
    link: &Link,
    patterns: &Patterns,
    pathloss: &PathlossModel,
    f_offsets_hz: &[f64],
) -> Result<CtfParts> {
    tensor_parts_impl(real, link, patterns, pathloss, f_offsets_hz, true)
}

/// Sequential tensor fill, independent of the `parallel` feature. Produces
/// bit-identical values to [`ctf_tensor_parts`].
pub fn ctf_tensor_parts_seq(
    real: &GridRealization,
    link: &Link,
    patterns: &Patterns,
    pathloss: &PathlossModel,
    f_offsets_hz: &[f64],
) -> Result<CtfParts> {
    tensor_parts_impl(real, link, patterns, pathloss, f_offsets_hz, false)
}

/// Total CTF tensor for a realized grid.
pub fn ctf_tensor(
    real: &GridRealization,
    link: &Link,
    patterns: &Patterns,
    pathloss: &PathlossModel,
    f_offsets_hz: &[f64],
) -> Result<CtfTensor> {
    Ok(ctf_tensor_parts(real, link, patterns, pathloss, f_offsets_hz)?.total)
}

// ---------------------------------------------------------------------------
// Binary container
// ---------------------------------------------------------------------------

const TENSOR_MAGIC: [u8; 4] = *b"CTFT";
const TENSOR_VERSION: u32 = 1;

/// JSON sidecar stored next to each tensor file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorSidecar {
    pub config_hash: String,
    pub seed: u64,
    pub drop_index: u64,
    pub dims: [usize; 5],
}

/// Write a tensor in the binary container: magic, version, five u64 dims,
/// the five axes as little-endian f64, then interleaved re/im f64 values in
/// (p, q, t, carrier, f) order with f fastest.
pub fn write_tensor(path: &Path, tensor: &CtfTensor) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(&TENSOR_MAGIC)?;
    w.write_all(&TENSOR_VERSION.to_le_bytes())?;
    for d in tensor.dims() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    let axes: [Vec<f64>; 5] = [
        tensor.tx_elements.iter().map(|&e| e as f64).collect(),
        tensor.rx_elements.iter().map(|&e| e as f64).collect(),
        tensor.time_points_s.clone(),
        tensor.carriers_hz.clone(),
        tensor.f_offsets_hz.clone(),
    ];
    for axis in &axes {
        for &v in axis {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    for v in &tensor.values {
        w.write_all(&v.re.to_le_bytes())?;
        w.write_all(&v.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

/// Read a tensor written by [`write_tensor`]. Round-trips bit-exactly.
pub fn read_tensor(path: &Path) -> Result<CtfTensor> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != TENSOR_MAGIC {
        return Err(ChannelError::MalformedTensor("bad magic".into()));
    }
    let mut v4 = [0u8; 4];
    r.read_exact(&mut v4)?;
    let version = u32::from_le_bytes(v4);
    if version != TENSOR_VERSION {
        return Err(ChannelError::MalformedTensor(format!("unsupported version {version}")));
    }
    let mut dims = [0usize; 5];
    for d in &mut dims {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        *d = u64::from_le_bytes(b) as usize;
    }
    let tx: Vec<usize> = read_f64s(&mut r, dims[0])?.iter().map(|&v| v as usize).collect();
    let rx: Vec<usize> = read_f64s(&mut r, dims[1])?.iter().map(|&v| v as usize).collect();
    let times = read_f64s(&mut r, dims[2])?;
    let carriers = read_f64s(&mut r, dims[3])?;
    let offsets = read_f64s(&mut r, dims[4])?;
    let n: usize = dims.iter().product();
    let raw = read_f64s(&mut r, n * 2)?;
    let values = raw.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
    Ok(CtfTensor {
        tx_elements: tx,
        rx_elements: rx,
        time_points_s: times,
        carriers_hz: carriers,
        f_offsets_hz: offsets,
        values,
    })
}

pub fn write_sidecar(path: &Path, sidecar: &TensorSidecar) -> Result<()> {
    let json = serde_json::to_string_pretty(sidecar)?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn read_sidecar(path: &Path) -> Result<TensorSidecar> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{realize_grid, EvolutionGrid};
    use crate::geometry::{ArrayGeometry, Vec3};
    use crate::init::{initialize_drop, InitConfig};
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn test_link() -> Link {
        let mut rx = ArrayGeometry::ula(2, 0.0005, Vec3::new(0.0, 1.0, 0.0)).unwrap();
        rx.velocity = Vec3::new(0.05, 0.0866, 0.0);
        Link {
            tx: ArrayGeometry::ula(2, 0.0005, Vec3::new(0.0, 1.0, 0.0)).unwrap(),
            rx,
            d0: Vec3::new(3.0, 0.0, 0.0),
            f0_hz: 300e9,
        }
    }

    #[test]
    fn fspl_at_three_meters_300ghz() {
        let model = PathlossModel::flat(0.0);
        let pl = path_loss_db(3.0, 300e9, &model, 0.0).unwrap();
        assert_relative_eq!(pl, 91.533, epsilon = 1e-3);
    }

    #[test]
    fn distance_doubling_adds_six_db() {
        let model = PathlossModel::flat(0.0);
        let a = path_loss_db(3.0, 300e9, &model, 0.0).unwrap();
        let b = path_loss_db(6.0, 300e9, &model, 0.0).unwrap();
        assert_relative_eq!(b - a, 20.0 * 2f64.log10(), epsilon = 1e-12);
    }

    #[test]
    fn absorption_term_is_linear_in_distance() {
        let model = PathlossModel::flat(10.0);
        let with = path_loss_db(3.0, 300e9, &model, 0.0).unwrap();
        let without = path_loss_db(3.0, 300e9, &PathlossModel::flat(0.0), 0.0).unwrap();
        assert_relative_eq!(with - without, 0.03, epsilon = 1e-12);
    }

    #[test]
    fn path_loss_rejects_bad_inputs() {
        let model = PathlossModel::default();
        assert!(path_loss_db(0.0, 300e9, &model, 0.0).is_err());
        assert!(path_loss_db(-1.0, 300e9, &model, 0.0).is_err());
        assert!(path_loss_db(3.0, 0.0, &model, 0.0).is_err());
    }

    #[test]
    fn absorption_interpolates_and_clamps() {
        let model = PathlossModel {
            absorption_table: vec![(300e9, 10.0), (400e9, 30.0)],
            shadowing_sigma_db: 0.0,
        };
        assert_relative_eq!(model.absorption_db_per_km(350e9), 20.0);
        assert_relative_eq!(model.absorption_db_per_km(200e9), 10.0);
        assert_relative_eq!(model.absorption_db_per_km(500e9), 30.0);
    }

    #[test]
    fn compose_angle_zero_offset_is_identity() {
        let a = AnglePair::new(0.4, -0.3);
        assert_eq!(compose_angle(a, AnglePair::ZERO), a);
    }

    #[test]
    fn compose_angle_wraps_azimuth() {
        let got = compose_angle(
            AnglePair::new(PI - 0.1, 0.0),
            AnglePair { azimuth: 0.2, elevation: 0.0 },
        );
        assert_relative_eq!(got.azimuth, -PI + 0.1, epsilon = 1e-12);
    }

    #[test]
    fn compose_angle_reflects_elevation() {
        let got = compose_angle(
            AnglePair::new(0.0, std::f64::consts::FRAC_PI_2 - 0.05),
            AnglePair { azimuth: 0.0, elevation: 0.1 },
        );
        assert_relative_eq!(got.elevation, std::f64::consts::FRAC_PI_2 - 0.05, epsilon = 1e-12);
    }

    fn realization_fixture(rays: usize) -> (crate::init::ChannelRealization, Link, PathlossModel) {
        let link = test_link();
        let cfg = InitConfig { rays_per_cluster: rays, ..InitConfig::default() };
        let pl = PathlossModel::default();
        let drop = initialize_drop(&cfg, &link, &pl, 21).unwrap();
        (drop, link, pl)
    }

    fn small_grid() -> EvolutionGrid {
        EvolutionGrid {
            time_points_s: vec![0.0, 0.01],
            tx_elements: vec![1, 2],
            rx_elements: vec![1, 2],
            carriers_hz: vec![300e9, 325e9],
        }
    }

    #[test]
    fn h_los_magnitude_is_sqrt_power() {
        let (drop, link, pl) = realization_fixture(4);
        let grid = small_grid();
        let real = realize_grid(&drop, &grid, &link, &pl).unwrap();
        let cell = real.cell(0, 0, 0, 0);
        let h = h_los(cell.los, drop.los_phase, drop.los_shadow_db, 300e9, 300e9, &link,
                      &Patterns::default(), &pl).unwrap();
        let expect = db_to_power(-path_loss_db(cell.los.distance_m, 300e9, &pl, 0.0).unwrap());
        assert_relative_eq!(h.norm() * h.norm(), expect, max_relative = 1e-12);
    }

    #[test]
    fn h_los_delay_matches_distance() {
        let (drop, link, pl) = realization_fixture(4);
        let grid = small_grid();
        let real = realize_grid(&drop, &grid, &link, &pl).unwrap();
        let cell = real.cell(0, 0, 0, 0);
        assert_relative_eq!(cell.los.delay_s, 10.0069e-9, epsilon = 1e-13);
    }

    #[test]
    fn h_los_phase_period_in_frequency() {
        let (drop, link, pl) = realization_fixture(4);
        let grid = small_grid();
        let real = realize_grid(&drop, &grid, &link, &pl).unwrap();
        let cell = real.cell(0, 0, 0, 0);
        let tau = cell.los.delay_s;
        let df = 1.0 / tau;
        let pats = Patterns::default();
        let a = h_los(cell.los, drop.los_phase, drop.los_shadow_db, 300e9, 300e9, &link, &pats, &pl)
            .unwrap();
        let b = h_los(cell.los, drop.los_phase, drop.los_shadow_db, 300e9, 300e9 + df, &link,
                      &pats, &pl)
            .unwrap();
        assert_relative_eq!((a / b).arg(), 0.0, epsilon = 1e-6);
    }

    #[test]
    fn ray_magnitude_follows_xpr_and_power_split() {
        let (drop, link, _pl) = realization_fixture(4);
        let c = &drop.clusters[0];
        let ray = &c.rays[0];
        let h = h_nlos_ray(&c.state, ray, c.rays.len(), 300e9, 300e9, &link, &Patterns::default());
        let expect = (c.state.power / c.rays.len() as f64).sqrt() * (1.0 / ray.xpr).sqrt();
        assert_relative_eq!(h.norm(), expect, max_relative = 1e-12);
    }

    #[test]
    fn coherent_ray_sum_scales_with_m() {
        // Equal phases across rays: |sum| = sqrt(P * M / xpr).
        let (drop, link, _pl) = realization_fixture(16);
        let mut c = drop.clusters[0].clone();
        for ray in &mut c.rays {
            ray.phases = [0.0; 4];
            ray.xpr = 4.0;
            ray.rel_delay_s = 0.0;
        }
        let sum: Complex64 = c
            .rays
            .iter()
            .map(|r| h_nlos_ray(&c.state, r, c.rays.len(), 300e9, 300e9, &link, &Patterns::default()))
            .sum();
        let expect = (c.state.power * c.rays.len() as f64 / 4.0).sqrt();
        assert_relative_eq!(sum.norm(), expect, max_relative = 1e-12);
    }

    #[test]
    fn expected_ray_power_over_random_phases() {
        // E[sum |h_m|^2] = P * E[1/xpr] when only the VV entry survives;
        // fixing xpr isolates the phase average.
        let (drop, link, _pl) = realization_fixture(1);
        let mut c = drop.clusters[0].clone();
        c.rays[0].xpr = 2.0;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let draws = 10_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            c.rays[0].phases = std::array::from_fn(|_| rng.gen::<f64>() * 2.0 * PI - PI);
            let h =
                h_nlos_ray(&c.state, &c.rays[0], 1, 300e9, 300e9, &link, &Patterns::default());
            acc += h.norm_sqr();
        }
        let mean = acc / draws as f64;
        let expect = c.state.power / 2.0;
        assert_relative_eq!(mean, expect, max_relative = 1e-12);
    }

    #[test]
    fn tensor_shape_and_entry_consistency() {
        let (drop, link, pl) = realization_fixture(6);
        let grid = small_grid();
        let real = realize_grid(&drop, &grid, &link, &pl).unwrap();
        let offs = [-5e8, 0.0, 5e8];
        let pats = Patterns::default();
        let tensor = ctf_tensor(&real, &link, &pats, &pl, &offs).unwrap();
        assert_eq!(tensor.dims(), [2, 2, 2, 2, 3]);
        for (pi, qi, ti, ci, fi) in [(0, 0, 0, 0, 1), (1, 1, 1, 1, 2), (0, 1, 1, 0, 0)] {
            let f = grid.carriers_hz[ci] + offs[fi];
            let direct = ctf_entry(&real, pi, qi, ti, ci, f, &link, &pats, &pl).unwrap();
            let got = tensor.at(pi, qi, ti, ci, fi);
            assert_relative_eq!(got.re, direct.re, max_relative = 1e-8, epsilon = 1e-18);
            assert_relative_eq!(got.im, direct.im, max_relative = 1e-8, epsilon = 1e-18);
        }
    }

    #[test]
    fn general_path_matches_aggregated_path() {
        let (drop, link, pl) = realization_fixture(5);
        let grid = small_grid();
        let real = realize_grid(&drop, &grid, &link, &pl).unwrap();
        let offs = [0.0, 2e8];
        // A one-point table with unit V gain is angle-independent in value
        // but forces the per-cell ray loop.
        let table = AntennaPattern::Table(PatternTable {
            elevations_rad: vec![0.0],
            azimuths_rad: vec![0.0],
            frequencies_hz: vec![300e9],
            v: vec![Complex64::new(1.0, 0.0)],
            h: vec![Complex64::new(0.0, 0.0)],
        });
        let omni = Patterns::default();
        let tabled = Patterns { tx: table.clone(), rx: table };
        let fast = ctf_tensor(&real, &link, &omni, &pl, &offs).unwrap();
        let slow = ctf_tensor(&real, &link, &tabled, &pl, &offs).unwrap();
        for (a, b) in fast.values.iter().zip(&slow.values) {
            assert_relative_eq!(a.re, b.re, max_relative = 1e-8, epsilon = 1e-18);
            assert_relative_eq!(a.im, b.im, max_relative = 1e-8, epsilon = 1e-18);
        }
    }

    #[test]
    fn sequential_and_default_fill_agree_bitwise() {
        let (drop, link, pl) = realization_fixture(5);
        let grid = small_grid();
        let real = realize_grid(&drop, &grid, &link, &pl).unwrap();
        let offs = [0.0, 2e8];
        let pats = Patterns::default();
        let par = ctf_tensor_parts(&real, &link, &pats, &pl, &offs).unwrap();
        let seq = ctf_tensor_parts_seq(&real, &link, &pats, &pl, &offs).unwrap();
        assert_eq!(par.total.values, seq.total.values);
        assert_eq!(par.los.values, seq.los.values);
    }

    #[test]
    fn zero_los_entry_equals_nlos_sum() {
        let (drop, link, pl) = realization_fixture(3);
        let grid = small_grid();
        let real = realize_grid(&drop, &grid, &link, &pl).unwrap();
        let pats = Patterns::default();
        let parts = ctf_tensor_parts(&real, &link, &pats, &pl, &[0.0]).unwrap();
        let total = parts.total.at(0, 0, 0, 0, 0);
        let los = parts.los.at(0, 0, 0, 0, 0);
        let nlos = total - los;
        // Rebuild the NLOS sum ray by ray.
        let cell = real.cell(0, 0, 0, 0);
        let mut direct = Complex64::new(0.0, 0.0);
        for (n, cluster) in cell.clusters.iter().enumerate() {
            for ray in cell.cluster_rays(n) {
                direct +=
                    h_nlos_ray(cluster, ray, cell.rays_per_cluster, 300e9, 300e9, &link, &pats);
            }
        }
        assert_relative_eq!(nlos.re, direct.re, max_relative = 1e-9, epsilon = 1e-18);
        assert_relative_eq!(nlos.im, direct.im, max_relative = 1e-9, epsilon = 1e-18);
    }

    #[test]
    fn tensor_round_trips_bit_exactly() {
        let (drop, link, pl) = realization_fixture(3);
        let grid = small_grid();
        let real = realize_grid(&drop, &grid, &link, &pl).unwrap();
        let tensor = ctf_tensor(&real, &link, &Patterns::default(), &pl, &[0.0, 1e8]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("drop.ctft");
        write_tensor(&path, &tensor).unwrap();
        let back = read_tensor(&path).unwrap();
        assert_eq!(tensor.dims(), back.dims());
        for (a, b) in tensor.values.iter().zip(&back.values) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
        assert_eq!(tensor.time_points_s, back.time_points_s);
        assert_eq!(tensor.carriers_hz, back.carriers_hz);

        let sidecar = TensorSidecar {
            config_hash: "abc".into(),
            seed: 1,
            drop_index: 2,
            dims: tensor.dims(),
        };
        let spath = dir.path().join("drop.json");
        write_sidecar(&spath, &sidecar).unwrap();
        assert_eq!(read_sidecar(&spath).unwrap(), sidecar);
    }

    #[test]
    fn malformed_tensor_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ctft");
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(read_tensor(&path).is_err());
    }
}
