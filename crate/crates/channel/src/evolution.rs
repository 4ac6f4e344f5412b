//! Cluster evolution along the time, space, and frequency axes.
//!
//! Time and space share one geometric rule: the Tx mirror point of a cluster
//! holds static, so a displacement of the Rx (mobility `v * dt`, or the
//! element-offset difference when stepping across the arrays) translates the
//! virtual vector, and distance, delay, arrival angles, power, and phase
//! follow from the translated vector. Departure angles move by the arrival
//! angle increment. Intra-cluster relative delays and angles are invariant
//! under time and space evolution.
//!
//! Frequency evolution is the opposite: cluster-level state is untouched
//! while the intra-cluster scales grow with the carrier ratio power law
//! (mu and sigma times `(fi/f0)^rho`), and every ray is re-mapped through the
//! inverse CDF using its persisted base draws, keeping ray parameters
//! continuous in frequency. A fresh-draw variant redraws the base values for
//! comparison runs.
//!
//! Double-bounce clusters evolve with the same virtual-point algebra applied
//! to the Rx-side bounce; the mirror transform of Tx-side offsets would need
//! the reflection-plane normal, which the model does not carry, so Tx offsets
//! are applied in the virtual frame unchanged.

use crate::ctf::{path_loss_db, PathlossModel};
use crate::error::ChannelError;
use crate::geometry::{los_vector, vector_to_angles, wrap_azimuth, AnglePair, Link, Vec3};
use crate::init::{
    db_to_power, exp_inverse_cdf, ChannelRealization, Cluster, ClusterState, RayState,
};
use crate::rng::{stream_rng, tag};
use crate::{Result, SPEED_OF_LIGHT};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Evaluation grid: absolute times (s, with the drop initialized at t = 0),
/// 1-based element indices on each array, and carrier frequencies (Hz).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionGrid {
    pub time_points_s: Vec<f64>,
    pub tx_elements: Vec<usize>,
    pub rx_elements: Vec<usize>,
    pub carriers_hz: Vec<f64>,
}

impl EvolutionGrid {
    pub fn validate(&self, link: &Link) -> Result<()> {
        if self.time_points_s.is_empty()
            || self.tx_elements.is_empty()
            || self.rx_elements.is_empty()
            || self.carriers_hz.is_empty()
        {
            return Err(ChannelError::EmptyInput("evolution grid has an empty axis".into()));
        }
        for w in self.time_points_s.windows(2) {
            if w[1] <= w[0] {
                return Err(ChannelError::InvalidConfig(
                    "time points must be strictly ascending".into(),
                ));
            }
        }
        for w in self.carriers_hz.windows(2) {
            if w[1] <= w[0] {
                return Err(ChannelError::InvalidConfig(
                    "carriers must be strictly ascending".into(),
                ));
            }
        }
        if self.time_points_s[0] < 0.0 {
            return Err(ChannelError::InvalidConfig("time points must be >= 0".into()));
        }
        if self.carriers_hz[0] <= 0.0 {
            return Err(ChannelError::InvalidConfig("carriers must be positive".into()));
        }
        for &p in &self.tx_elements {
            link.tx.offset(p)?;
        }
        for &q in &self.rx_elements {
            link.rx.offset(q)?;
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.tx_elements.len() * self.rx_elements.len() * self.time_points_s.len()
    }
}

/// Translate a cluster's virtual vector and update the dependent state:
/// distance, delay, arrival angles, departure angles (by the arrival
/// increment), power (path-loss ratio between old and new distance at the
/// given carrier), and phase (2*pi*delta_distance/lambda).
fn displaced_state(
    state: &ClusterState,
    displacement: Vec3,
    pathloss: &PathlossModel,
    carrier_hz: f64,
) -> ClusterState {
    if displacement == Vec3::ZERO {
        return state.clone();
    }
    let v_new = state.virtual_vector + displacement;
    let dist_old = state.virtual_vector.norm();
    let dist_new = v_new.norm();

    let aoa_new = match vector_to_angles(v_new) {
        Ok(a) => a,
        // A displacement landing exactly on the mirror point has no
        // direction; keep the previous angles.
        Err(_) => state.aoa,
    };
    let aod_new = AnglePair::new(
        state.aod.azimuth + (aoa_new.azimuth - state.aoa.azimuth),
        state.aod.elevation + (aoa_new.elevation - state.aoa.elevation),
    );

    let power_new = if dist_old > 0.0 && dist_new > 0.0 {
        let pl_old = path_loss_db(dist_old, carrier_hz, pathloss, 0.0).expect("positive distance");
        let pl_new = path_loss_db(dist_new, carrier_hz, pathloss, 0.0).expect("positive distance");
        state.power * db_to_power(pl_old - pl_new)
    } else {
        state.power
    };

    let wavelength = SPEED_OF_LIGHT / carrier_hz;
    let phase_new = wrap_azimuth(state.phase + 2.0 * PI * (dist_new - dist_old) / wavelength);

    ClusterState {
        order: state.order,
        delay_s: dist_new / SPEED_OF_LIGHT,
        power: power_new,
        aod: aod_new,
        aoa: aoa_new,
        virtual_vector: v_new,
        phase: phase_new,
        mu_ray_delay_f0_s: state.mu_ray_delay_f0_s,
        sigma_ray_angle_f0_rad: state.sigma_ray_angle_f0_rad,
    }
}

/// Advance a cluster by `dt` seconds of Rx motion. Relative delays and
/// angles are invariant; rays are carried over unchanged.
pub fn evolve_time(
    cluster: &Cluster,
    v_rx: Vec3,
    dt: f64,
    pathloss: &PathlossModel,
    carrier_hz: f64,
) -> Cluster {
    Cluster {
        state: displaced_state(&cluster.state, v_rx * dt, pathloss, carrier_hz),
        rays: cluster.rays.clone(),
    }
}

/// Step a cluster across the arrays: the element-offset difference replaces
/// mobility. The Tx offset is applied in the virtual frame unchanged (the
/// reflection-plane normal a true mirror transform needs is not part of the
/// model state).
pub fn evolve_space(
    cluster: &Cluster,
    tx_offset: Vec3,
    rx_offset: Vec3,
    pathloss: &PathlossModel,
    carrier_hz: f64,
) -> Cluster {
    Cluster {
        state: displaced_state(&cluster.state, rx_offset - tx_offset, pathloss, carrier_hz),
        rays: cluster.rays.clone(),
    }
}

fn carrier_scales(
    state: &ClusterState,
    f0_hz: f64,
    fi_hz: f64,
    rho_mu: f64,
    rho_sigma: f64,
) -> Result<(f64, f64)> {
    if !(f0_hz > 0.0) || !(fi_hz > 0.0) {
        return Err(ChannelError::InvalidConfig(format!(
            "frequencies must be positive, got f0 = {f0_hz}, fi = {fi_hz}"
        )));
    }
    let ratio = fi_hz / f0_hz;
    Ok((
        state.mu_ray_delay_f0_s * ratio.powf(rho_mu),
        state.sigma_ray_angle_f0_rad * ratio.powf(rho_sigma),
    ))
}

fn ray_at_scales(ray: &RayState, mu: f64, sigma: f64) -> RayState {
    RayState {
        rel_delay_s: exp_inverse_cdf(mu, ray.base_delay_uniform),
        rel_aod: AnglePair {
            azimuth: sigma * ray.base_angle_normals[0],
            elevation: sigma * ray.base_angle_normals[1],
        },
        rel_aoa: AnglePair {
            azimuth: sigma * ray.base_angle_normals[2],
            elevation: sigma * ray.base_angle_normals[3],
        },
        phases: ray.phases,
        xpr: ray.xpr,
        base_delay_uniform: ray.base_delay_uniform,
        base_angle_normals: ray.base_angle_normals,
    }
}

/// Move a cluster to carrier `fi`: scale the intra-cluster delay/angle
/// parameters by `(fi/f0)^rho` and re-map every ray through the inverse CDF
/// using its persisted base draws. Cluster-level delay, power, and angles are
/// unchanged. At `fi == f0` this reproduces the input bit-exactly.
pub fn evolve_frequency(
    cluster: &Cluster,
    f0_hz: f64,
    fi_hz: f64,
    rho_mu: f64,
    rho_sigma: f64,
) -> Result<Cluster> {
    let (mu, sigma) = carrier_scales(&cluster.state, f0_hz, fi_hz, rho_mu, rho_sigma)?;
    Ok(Cluster {
        state: cluster.state.clone(),
        rays: cluster.rays.iter().map(|r| ray_at_scales(r, mu, sigma)).collect(),
    })
}

/// Fresh-draw variant of [`evolve_frequency`]: redraws the base uniform and
/// normals at the new scales instead of re-mapping the persisted ones.
/// Phases and XPR are kept.
pub fn evolve_frequency_fresh<R: Rng>(
    cluster: &Cluster,
    f0_hz: f64,
    fi_hz: f64,
    rho_mu: f64,
    rho_sigma: f64,
    rng: &mut R,
) -> Result<Cluster> {
    let (mu, sigma) = carrier_scales(&cluster.state, f0_hz, fi_hz, rho_mu, rho_sigma)?;
    let rays = cluster
        .rays
        .iter()
        .map(|ray| {
            let u = loop {
                let u = 1.0 - rng.gen::<f64>();
                if u < 1.0 {
                    break u;
                }
            };
            let z: [f64; 4] = std::array::from_fn(|_| rng.sample::<f64, _>(StandardNormal));
            ray_at_scales(
                &RayState { base_delay_uniform: u, base_angle_normals: z, ..ray.clone() },
                mu,
                sigma,
            )
        })
        .collect();
    Ok(Cluster { state: cluster.state.clone(), rays })
}

/// LOS path state at one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LosPath {
    pub vector: Vec3,
    pub distance_m: f64,
    pub delay_s: f64,
}

/// All cluster/ray state needed to evaluate the CTF anywhere on a grid.
///
/// Cluster-level states vary per (p, q, t) cell; ray-level states vary per
/// carrier only (relative parameters are invariant under time and space
/// evolution), so rays are stored once per carrier and shared by all cells.
#[derive(Debug, Clone)]
pub struct GridRealization {
    pub grid: EvolutionGrid,
    pub n_clusters: usize,
    pub rays_per_cluster: usize,
    pub los_phase: f64,
    pub los_shadow_db: f64,
    pub drop_seed: u64,
    /// Cluster states, cell-major: [(p, q, t) cell][cluster].
    states: Vec<ClusterState>,
    /// LOS paths per cell.
    los: Vec<LosPath>,
    /// Ray states per carrier, cluster-major within a carrier.
    rays: Vec<Vec<RayState>>,
}

/// Borrowed view of one grid cell: LOS path, cluster states at (p, q, t),
/// and ray states at the cell's carrier.
#[derive(Debug, Clone, Copy)]
pub struct CellView<'a> {
    pub los: &'a LosPath,
    pub clusters: &'a [ClusterState],
    pub rays: &'a [RayState],
    pub rays_per_cluster: usize,
}

impl<'a> CellView<'a> {
    pub fn cluster_rays(&self, n: usize) -> &'a [RayState] {
        &self.rays[n * self.rays_per_cluster..(n + 1) * self.rays_per_cluster]
    }
}

impl GridRealization {
    fn cell_index(&self, pi: usize, qi: usize, ti: usize) -> usize {
        (pi * self.grid.rx_elements.len() + qi) * self.grid.time_points_s.len() + ti
    }

    /// View of the cell at grid positions (pi, qi, ti, ci); positions index
    /// into the grid's axis lists.
    pub fn cell(&self, pi: usize, qi: usize, ti: usize, ci: usize) -> CellView<'_> {
        let cell = self.cell_index(pi, qi, ti);
        let n = self.n_clusters;
        CellView {
            los: &self.los[cell],
            clusters: &self.states[cell * n..(cell + 1) * n],
            rays: &self.rays[ci],
            rays_per_cluster: self.rays_per_cluster,
        }
    }
}

/// Evolve a drop over a full grid: space first (element offsets), then time
/// (Rx motion), then frequency (intra-cluster re-mapping per carrier).
/// Every cell is a pure function of the initial drop, so cells can be filled
/// in parallel and the result is deterministic. Power rescaling and phase
/// advance use the anchor frequency f0 as the carrier wavelength.
pub fn realize_grid(
    drop: &ChannelRealization,
    grid: &EvolutionGrid,
    link: &Link,
    pathloss: &PathlossModel,
) -> Result<GridRealization> {
    grid.validate(link)?;
    let n_clusters = drop.clusters.len();
    let m = drop.config.rays_per_cluster;
    if drop.clusters.iter().any(|c| c.rays.len() != m) {
        return Err(ChannelError::DimensionMismatch(
            "clusters disagree on rays per cluster".into(),
        ));
    }

    let np = grid.tx_elements.len();
    let nq = grid.rx_elements.len();
    let nt = grid.time_points_s.len();

    let fill_cell = |flat: usize| -> (LosPath, Vec<ClusterState>) {
        let pi = flat / (nq * nt);
        let qi = (flat / nt) % nq;
        let ti = flat % nt;
        let p = grid.tx_elements[pi];
        let q = grid.rx_elements[qi];
        let t = grid.time_points_s[ti];

        let los_vec = los_vector(&link.tx, &link.rx, p, q, link.d0, t).expect("validated grid");
        let distance = los_vec.norm();
        let los = LosPath {
            vector: los_vec,
            distance_m: distance,
            delay_s: distance / SPEED_OF_LIGHT,
        };

        let tx_off = link.tx.offset(p).expect("validated grid");
        let rx_off = link.rx.offset(q).expect("validated grid");
        let displacement = (rx_off - tx_off) + link.rx.velocity * t;
        let states = drop
            .clusters
            .iter()
            .map(|c| displaced_state(&c.state, displacement, pathloss, link.f0_hz))
            .collect();
        (los, states)
    };

    #[cfg(feature = "parallel")]
    let filled: Vec<(LosPath, Vec<ClusterState>)> =
        (0..np * nq * nt).into_par_iter().map(fill_cell).collect();
    #[cfg(not(feature = "parallel"))]
    let filled: Vec<(LosPath, Vec<ClusterState>)> = (0..np * nq * nt).map(fill_cell).collect();

    let mut los = Vec::with_capacity(np * nq * nt);
    let mut states = Vec::with_capacity(np * nq * nt * n_clusters);
    for (l, s) in filled {
        los.push(l);
        states.extend(s);
    }

    let mut rays = Vec::with_capacity(grid.carriers_hz.len());
    for &fc in &grid.carriers_hz {
        let mut per_carrier = Vec::with_capacity(n_clusters * m);
        for (n, cluster) in drop.clusters.iter().enumerate() {
            let evolved = if drop.config.freq_fresh_draws && fc != link.f0_hz {
                let mut rng = stream_rng(drop.seed, &[tag::FREQ_REDRAW, n as u64, fc.to_bits()]);
                evolve_frequency_fresh(
                    cluster,
                    link.f0_hz,
                    fc,
                    drop.config.rho_mu,
                    drop.config.rho_sigma,
                    &mut rng,
                )?
            } else {
                evolve_frequency(
                    cluster,
                    link.f0_hz,
                    fc,
                    drop.config.rho_mu,
                    drop.config.rho_sigma,
                )?
            };
            per_carrier.extend(evolved.rays);
        }
        rays.push(per_carrier);
    }

    Ok(GridRealization {
        grid: grid.clone(),
        n_clusters,
        rays_per_cluster: m,
        los_phase: drop.los_phase,
        los_shadow_db: drop.los_shadow_db,
        drop_seed: drop.seed,
        states,
        los,
        rays,
    })
}
