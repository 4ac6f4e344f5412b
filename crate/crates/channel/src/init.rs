//! Channel drop initialization.
//!
//! A drop is generated for the first element pair at the initial time and the
//! anchor frequency f0: cluster counts, cluster delays (cumulative negative
//! exponential inter-arrival intervals per bounce order), cluster powers
//! (exponential decay in dB over excess delay plus per-cluster shadowing),
//! cluster angles (independent Gaussians), and per-ray intra-cluster
//! parameters. Rays persist the uniform/normal base draws behind their
//! relative delays and angles so frequency evolution can re-map them through
//! the inverse CDF instead of redrawing.
//!
//! RNG discipline: LOS draws, cluster-level draws, and each cluster's ray
//! draws live on separate derived streams, so changing the ray count M never
//! perturbs cluster-level parameters (and vice versa).

use crate::ctf::{path_loss_db, PathlossModel};
use crate::error::ChannelError;
use crate::geometry::{initial_virtual_vector, AnglePair, Link};
use crate::rng::{stream_rng, tag};
use crate::{geometry::Vec3, Result, SPEED_OF_LIGHT};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use std::collections::BTreeMap;
use std::f64::consts::PI;

/// Convert a dB value to linear power.
pub fn db_to_power(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Convert linear power to dB.
pub fn power_to_db(p: f64) -> f64 {
    10.0 * p.log10()
}

/// Inverse CDF of the negative exponential distribution, parameterized by its
/// mean: `-mu * ln(u)` for `u` in (0, 1]. Initialization and frequency
/// re-mapping both go through this single expression so that re-mapping at
/// the anchor frequency reproduces the original values bit-exactly.
pub fn exp_inverse_cdf(mu: f64, u: f64) -> f64 {
    -mu * u.ln()
}

/// Bounce order of a cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClusterOrder {
    Single,
    Double,
}

/// Configuration of the drop generator. Defaults follow the indoor THz
/// office setup: cluster count PMF {4: 0.35, 5: 0.65} for single bounce,
/// uniform 7..=13 for double bounce, inter-arrival means 2.73 ns / 4.8 ns,
/// angle std 1.2 rad, and power-law exponents rho = 3.
///
/// `n_tau_db_per_s`, `delta_p_los_db`, the XPR moments, and the intra-cluster
/// scales are model parameters with no published values; the defaults here
/// are order-of-magnitude placeholders meant to be overridden from scenario
/// files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitConfig {
    /// PMF of the single-bounce cluster count.
    pub pmf_first_order: BTreeMap<u32, f64>,
    /// Inclusive range of the double-bounce cluster count (uniform).
    pub second_order_min: u32,
    pub second_order_max: u32,
    /// Mean inter-arrival interval of single-bounce clusters (s).
    pub mu_dtau_1st_s: f64,
    /// Mean inter-arrival interval of double-bounce clusters (s).
    pub mu_dtau_2nd_s: f64,
    /// Mean intra-cluster relative delay at f0 (s).
    pub mu_ray_delay_f0_s: f64,
    /// Std of intra-cluster relative angles at f0 (rad).
    pub sigma_ray_angle_f0_rad: f64,
    /// Means of the cluster departure angle Gaussians.
    pub mean_aod: AnglePair,
    /// Means of the cluster arrival angle Gaussians.
    pub mean_aoa: AnglePair,
    /// Std of all four cluster angle Gaussians (rad).
    pub angle_std_rad: f64,
    /// Temporal decay coefficient of cluster power (dB per second of excess
    /// delay).
    pub n_tau_db_per_s: f64,
    /// Std of the per-cluster power deviation (dB).
    pub delta_a_std_db: f64,
    /// Fixed LOS-to-NLOS power offset (dB).
    pub delta_p_los_db: f64,
    /// Cross-polarization ratio moments in dB (lognormal in linear scale).
    pub xpr_mean_db: f64,
    pub xpr_std_db: f64,
    /// Std of the system shadowing term (dB); one draw per drop.
    pub shadowing_sigma_db: f64,
    /// Rays per cluster (M).
    pub rays_per_cluster: usize,
    /// Use equal-area quantiles for ray angle base draws instead of random
    /// normals.
    pub mea_angles: bool,
    /// Redraw intra-cluster parameters at each carrier instead of re-mapping
    /// the persisted base draws.
    pub freq_fresh_draws: bool,
    /// Power-law exponent of the relative-delay scale over carrier ratio.
    pub rho_mu: f64,
    /// Power-law exponent of the relative-angle scale over carrier ratio.
    pub rho_sigma: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        let mut pmf = BTreeMap::new();
        pmf.insert(4, 0.35);
        pmf.insert(5, 0.65);
        InitConfig {
            pmf_first_order: pmf,
            second_order_min: 7,
            second_order_max: 13,
            mu_dtau_1st_s: 2.73e-9,
            mu_dtau_2nd_s: 4.8e-9,
            mu_ray_delay_f0_s: 0.4e-9,
            sigma_ray_angle_f0_rad: 0.05,
            mean_aod: AnglePair::ZERO,
            mean_aoa: AnglePair::ZERO,
            angle_std_rad: 1.2,
            n_tau_db_per_s: 0.5e9, // 0.5 dB per ns
            delta_a_std_db: 1.0,
            delta_p_los_db: 3.0,
            xpr_mean_db: 8.0,
            xpr_std_db: 2.0,
            shadowing_sigma_db: 0.0,
            rays_per_cluster: 100,
            mea_angles: false,
            freq_fresh_draws: false,
            rho_mu: 3.0,
            rho_sigma: 3.0,
        }
    }
}

impl InitConfig {
    pub fn validate(&self) -> Result<()> {
        let field = |f: &str, m: String| ChannelError::InvalidField {
            field: f.to_string(),
            message: m,
        };
        if self.pmf_first_order.is_empty() {
            return Err(field("pmf_first_order", "PMF is empty".into()));
        }
        let sum: f64 = self.pmf_first_order.values().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(field("pmf_first_order", format!("PMF sums to {sum}, expected 1")));
        }
        if self.pmf_first_order.values().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(field("pmf_first_order", "probability outside [0, 1]".into()));
        }
        if self.second_order_min > self.second_order_max {
            return Err(field("second_order_min", "range is inverted".into()));
        }
        for (name, v) in [
            ("mu_dtau_1st_ns", self.mu_dtau_1st_s),
            ("mu_dtau_2nd_ns", self.mu_dtau_2nd_s),
            ("mu_ray_delay_f0_ns", self.mu_ray_delay_f0_s),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(field(name, format!("must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("sigma_ray_angle_f0_rad", self.sigma_ray_angle_f0_rad),
            ("angle_std_rad", self.angle_std_rad),
            ("delta_a_std_db", self.delta_a_std_db),
            ("xpr_std_db", self.xpr_std_db),
            ("shadowing_sigma_db", self.shadowing_sigma_db),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(field(name, format!("must be non-negative, got {v}")));
            }
        }
        if self.rays_per_cluster == 0 {
            return Err(field("rays_per_cluster", "must be at least 1".into()));
        }
        if !self.rho_mu.is_finite() || !self.rho_sigma.is_finite() {
            return Err(field("rho_mu", "power-law exponents must be finite".into()));
        }
        if !self.n_tau_db_per_s.is_finite() {
            return Err(field("n_tau_db_per_ns", "must be finite".into()));
        }
        Ok(())
    }
}

/// Cluster-level state at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterState {
    pub order: ClusterOrder,
    /// Propagation delay via the cluster (s); equals |virtual_vector| / c.
    pub delay_s: f64,
    /// Mean cluster power, linear scale.
    pub power: f64,
    pub aod: AnglePair,
    pub aoa: AnglePair,
    /// Vector from the Tx mirror point to the Rx element (m).
    pub virtual_vector: Vec3,
    /// Cluster phase in [-pi, pi], advanced with distance during evolution.
    pub phase: f64,
    /// Intra-cluster relative-delay scale anchor at f0 (s).
    pub mu_ray_delay_f0_s: f64,
    /// Intra-cluster relative-angle scale anchor at f0 (rad).
    pub sigma_ray_angle_f0_rad: f64,
}

/// Per-ray intra-cluster parameters plus the persisted base draws that
/// generated them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayState {
    /// Relative delay on top of the cluster delay (s).
    pub rel_delay_s: f64,
    /// Relative departure angles (offsets, not wrapped).
    pub rel_aod: AnglePair,
    /// Relative arrival angles (offsets, not wrapped).
    pub rel_aoa: AnglePair,
    /// Initial phases [VV, VH, HV, HH] in [-pi, pi].
    pub phases: [f64; 4],
    /// Cross-polarization power ratio, linear scale.
    pub xpr: f64,
    /// Uniform draw behind `rel_delay_s`.
    pub base_delay_uniform: f64,
    /// Standard-normal draws behind the relative angles, in the order
    /// [aod.azimuth, aod.elevation, aoa.azimuth, aoa.elevation].
    pub base_angle_normals: [f64; 4],
}

/// A cluster together with its rays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub state: ClusterState,
    pub rays: Vec<RayState>,
}

/// One seeded channel drop, initialized at the first element pair, the
/// initial time, and the anchor frequency.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelRealization {
    /// Drop-level seed all streams of this drop derive from.
    pub seed: u64,
    pub clusters: Vec<Cluster>,
    pub los_delay_s: f64,
    /// LOS power at f0, linear scale.
    pub los_power: f64,
    pub los_power_db: f64,
    /// LOS polarization phase, uniform in (0, 2*pi).
    pub los_phase: f64,
    /// Shadowing draw shared by all path-loss evaluations of this drop (dB).
    pub los_shadow_db: f64,
    /// Ricean factor LOS power / total NLOS power under unit vertical-gain
    /// patterns.
    pub k_factor: f64,
    pub config: InitConfig,
}

impl ChannelRealization {
    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }
}

/// Draw the single- and double-bounce cluster counts.
pub fn draw_cluster_counts<R: Rng>(cfg: &InitConfig, rng: &mut R) -> Result<(usize, usize)> {
    let sum: f64 = cfg.pmf_first_order.values().sum();
    if cfg.pmf_first_order.is_empty() || (sum - 1.0).abs() > 1e-12 {
        return Err(ChannelError::InvalidConfig(format!(
            "first-order PMF sums to {sum}, expected 1"
        )));
    }
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut n1 = *cfg.pmf_first_order.keys().last().expect("non-empty PMF");
    for (&count, &p) in &cfg.pmf_first_order {
        acc += p;
        if u < acc {
            n1 = count;
            break;
        }
    }
    let n2 = rng.gen_range(cfg.second_order_min..=cfg.second_order_max);
    Ok((n1 as usize, n2 as usize))
}

/// Uniform draw in the open interval (0, 1); endpoint draws are resampled so
/// that `-ln(u)` stays finite and exponential increments stay strictly
/// positive.
fn open_uniform<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let u = 1.0 - rng.gen::<f64>(); // (0, 1]
        if u < 1.0 {
            return u;
        }
    }
}

/// Draw cluster delays: each bounce order forms a cumulative chain of
/// negative exponential inter-arrival intervals restarting from the LOS
/// delay. Returns `n1st + n2nd` delays, single-bounce first.
pub fn draw_cluster_delays<R: Rng>(
    n1st: usize,
    n2nd: usize,
    los_delay_s: f64,
    cfg: &InitConfig,
    rng: &mut R,
) -> Vec<f64> {
    let mut delays = Vec::with_capacity(n1st + n2nd);
    for (count, mu) in [(n1st, cfg.mu_dtau_1st_s), (n2nd, cfg.mu_dtau_2nd_s)] {
        let mut prev = los_delay_s;
        for _ in 0..count {
            prev += exp_inverse_cdf(mu, open_uniform(rng));
            delays.push(prev);
        }
    }
    delays
}

/// Draw cluster powers (linear scale): exponential decay in dB over excess
/// delay with a fixed LOS offset and per-cluster Gaussian deviation.
pub fn draw_cluster_powers<R: Rng>(
    delays: &[f64],
    los_delay_s: f64,
    los_power_db: f64,
    cfg: &InitConfig,
    rng: &mut R,
) -> Vec<f64> {
    delays
        .iter()
        .map(|&tau| {
            let delta_a = cfg.delta_a_std_db * rng.sample::<f64, _>(StandardNormal);
            let p_db = los_power_db
                - cfg.delta_p_los_db
                - cfg.n_tau_db_per_s * (tau - los_delay_s)
                + delta_a;
            db_to_power(p_db)
        })
        .collect()
}

/// Draw the four cluster angle Gaussians without wrapping, in the order
/// [aod.azimuth, aod.elevation, aoa.azimuth, aoa.elevation]. Exposed so that
/// distribution diagnostics can look at the raw samples.
pub fn draw_cluster_angles_raw<R: Rng>(n: usize, cfg: &InitConfig, rng: &mut R) -> Vec<[f64; 4]> {
    let means = [
        cfg.mean_aod.azimuth,
        cfg.mean_aod.elevation,
        cfg.mean_aoa.azimuth,
        cfg.mean_aoa.elevation,
    ];
    (0..n)
        .map(|_| {
            let mut a = [0.0; 4];
            for (slot, &mean) in a.iter_mut().zip(&means) {
                *slot = mean + cfg.angle_std_rad * rng.sample::<f64, _>(StandardNormal);
            }
            a
        })
        .collect()
}

/// Draw cluster departure/arrival angles, wrapped into canonical ranges.
pub fn draw_cluster_angles<R: Rng>(
    n: usize,
    cfg: &InitConfig,
    rng: &mut R,
) -> Vec<(AnglePair, AnglePair)> {
    draw_cluster_angles_raw(n, cfg, rng)
        .into_iter()
        .map(|[aod_az, aod_el, aoa_az, aoa_el]| {
            (AnglePair::new(aod_az, aod_el), AnglePair::new(aoa_az, aoa_el))
        })
        .collect()
}

/// Equal-area discretization of a zero-mean Gaussian with std `sigma` into
/// `m` angles: the quantiles at probabilities (i + 0.5) / m. Deterministic,
/// symmetric about zero, strictly increasing.
pub fn mea_discretize(m: usize, sigma: f64) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    (0..m)
        .map(|i| sigma * normal.inverse_cdf((i as f64 + 0.5) / m as f64))
        .collect()
}

fn standard_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(p)
}

/// Draw `m` ray states for one cluster. Relative delays come from the
/// exponential inverse CDF applied to persisted uniforms; relative angles are
/// `sigma` times persisted standard normals (random draws, or equal-area
/// quantiles assigned in a random per-dimension order when `cfg.mea_angles`
/// is set); phases are uniform in [-pi, pi]; XPR is lognormal.
pub fn draw_ray_states<R: Rng>(
    m: usize,
    mu_ray_s: f64,
    sigma_angle_rad: f64,
    cfg: &InitConfig,
    rng: &mut R,
) -> Vec<RayState> {
    // In MEA mode each angle dimension uses the same m quantiles; a random
    // permutation per dimension decouples the four dimensions across rays.
    let quantile_ranks: Option<[Vec<usize>; 4]> = if cfg.mea_angles {
        Some(std::array::from_fn(|_| {
            let mut idx: Vec<usize> = (0..m).collect();
            for i in (1..m).rev() {
                idx.swap(i, rng.gen_range(0..=i));
            }
            idx
        }))
    } else {
        None
    };

    (0..m)
        .map(|ray| {
            let u = open_uniform(rng);
            let z: [f64; 4] = match &quantile_ranks {
                Some(ranks) => std::array::from_fn(|k| {
                    standard_quantile((ranks[k][ray] as f64 + 0.5) / m as f64)
                }),
                None => std::array::from_fn(|_| rng.sample::<f64, _>(StandardNormal)),
            };
            let phases = std::array::from_fn(|_| rng.gen::<f64>() * 2.0 * PI - PI);
            let xpr_db = cfg.xpr_mean_db + cfg.xpr_std_db * rng.sample::<f64, _>(StandardNormal);
            RayState {
                rel_delay_s: exp_inverse_cdf(mu_ray_s, u),
                rel_aod: AnglePair {
                    azimuth: sigma_angle_rad * z[0],
                    elevation: sigma_angle_rad * z[1],
                },
                rel_aoa: AnglePair {
                    azimuth: sigma_angle_rad * z[2],
                    elevation: sigma_angle_rad * z[3],
                },
                phases,
                xpr: db_to_power(xpr_db),
                base_delay_uniform: u,
                base_angle_normals: z,
            }
        })
        .collect()
}

/// Generate a full drop from derived RNG streams.
pub fn initialize_drop(
    cfg: &InitConfig,
    link: &Link,
    pathloss: &PathlossModel,
    drop_seed: u64,
) -> Result<ChannelRealization> {
    cfg.validate()?;
    link.validate()?;

    let mut los_rng = stream_rng(drop_seed, &[tag::LOS]);
    let los_phase = los_rng.gen::<f64>() * 2.0 * PI;
    let los_shadow_db = cfg.shadowing_sigma_db * los_rng.sample::<f64, _>(StandardNormal);

    let d0_m = link.d0.norm();
    let los_delay_s = d0_m / SPEED_OF_LIGHT;
    let los_power_db = -path_loss_db(d0_m, link.f0_hz, pathloss, los_shadow_db)?;
    let los_power = db_to_power(los_power_db);

    let mut cluster_rng = stream_rng(drop_seed, &[tag::CLUSTER]);
    let (n1st, n2nd) = draw_cluster_counts(cfg, &mut cluster_rng)?;
    let delays = draw_cluster_delays(n1st, n2nd, los_delay_s, cfg, &mut cluster_rng);
    let powers = draw_cluster_powers(&delays, los_delay_s, los_power_db, cfg, &mut cluster_rng);
    let angles = draw_cluster_angles(n1st + n2nd, cfg, &mut cluster_rng);
    let phases: Vec<f64> = (0..n1st + n2nd)
        .map(|_| cluster_rng.gen::<f64>() * 2.0 * PI - PI)
        .collect();

    let mut clusters = Vec::with_capacity(n1st + n2nd);
    for (n, ((&delay, &power), (aod, aoa))) in
        delays.iter().zip(&powers).zip(&angles).enumerate()
    {
        let virtual_vector = initial_virtual_vector(delay, *aoa)?;
        // Store the vector-derived arrival angles so that
        // aoa == angles(virtual_vector) holds bit-exactly, the invariant the
        // evolution algebra maintains.
        let aoa = crate::geometry::vector_to_angles(virtual_vector)?;
        let mut ray_rng = stream_rng(drop_seed, &[tag::RAY, n as u64]);
        let rays = draw_ray_states(
            cfg.rays_per_cluster,
            cfg.mu_ray_delay_f0_s,
            cfg.sigma_ray_angle_f0_rad,
            cfg,
            &mut ray_rng,
        );
        clusters.push(Cluster {
            state: ClusterState {
                order: if n < n1st { ClusterOrder::Single } else { ClusterOrder::Double },
                // Re-derive the delay from the vector so that delay ==
                // |virtual_vector| / c holds exactly from the start.
                delay_s: virtual_vector.norm() / SPEED_OF_LIGHT,
                power,
                aod: *aod,
                aoa,
                virtual_vector,
                phase: phases[n],
                mu_ray_delay_f0_s: cfg.mu_ray_delay_f0_s,
                sigma_ray_angle_f0_rad: cfg.sigma_ray_angle_f0_rad,
            },
            rays,
        });
    }

    let nlos_power: f64 = clusters
        .iter()
        .map(|c| {
            let per_ray = c.state.power / c.rays.len() as f64;
            c.rays.iter().map(|r| per_ray / r.xpr).sum::<f64>()
        })
        .sum();
    let k_factor = if nlos_power > 0.0 { los_power / nlos_power } else { f64::INFINITY };

    Ok(ChannelRealization {
        seed: drop_seed,
        clusters,
        los_delay_s,
        los_power,
        los_power_db,
        los_phase,
        los_shadow_db,
        k_factor,
        config: cfg.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctf::PathlossModel;
    use crate::geometry::ArrayGeometry;
    use approx::assert_relative_eq;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn test_link() -> Link {
        Link {
            tx: ArrayGeometry::ula(1, 0.0, Vec3::new(0.0, 1.0, 0.0)).unwrap(),
            rx: ArrayGeometry::ula(1, 0.0, Vec3::new(0.0, 1.0, 0.0)).unwrap(),
            d0: Vec3::new(3.0, 0.0, 0.0),
            f0_hz: 300e9,
        }
    }

    #[test]
    fn degenerate_pmf_always_draws_that_count() {
        let mut cfg = InitConfig::default();
        cfg.pmf_first_order.clear();
        cfg.pmf_first_order.insert(4, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let (n1, n2) = draw_cluster_counts(&cfg, &mut rng).unwrap();
            assert_eq!(n1, 4);
            assert!((7..=13).contains(&n2));
        }
    }

    #[test]
    fn first_order_pmf_frequencies() {
        let cfg = InitConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let draws = 100_000;
        let mut fours = 0usize;
        for _ in 0..draws {
            let (n1, _) = draw_cluster_counts(&cfg, &mut rng).unwrap();
            if n1 == 4 {
                fours += 1;
            }
        }
        let p4 = fours as f64 / draws as f64;
        assert!((p4 - 0.35).abs() < 0.01, "P(N1st=4) = {p4}");
    }

    #[test]
    fn second_order_count_is_uniform() {
        let cfg = InitConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws = 100_000;
        let mut counts = [0usize; 7];
        for _ in 0..draws {
            let (_, n2) = draw_cluster_counts(&cfg, &mut rng).unwrap();
            counts[n2 - 7] += 1;
        }
        for (i, &c) in counts.iter().enumerate() {
            let freq = c as f64 / draws as f64;
            assert!((freq - 1.0 / 7.0).abs() < 0.01, "N2nd={} freq {freq}", i + 7);
        }
    }

    #[test]
    fn malformed_pmf_is_rejected() {
        let mut cfg = InitConfig::default();
        cfg.pmf_first_order.insert(6, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(draw_cluster_counts(&cfg, &mut rng).is_err());
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn delays_collapse_to_los_as_mu_vanishes() {
        let mut cfg = InitConfig::default();
        cfg.mu_dtau_1st_s = 1e-30;
        cfg.mu_dtau_2nd_s = 1e-30;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let los = 1e-8;
        for &d in &draw_cluster_delays(5, 10, los, &cfg, &mut rng) {
            assert_relative_eq!(d, los, epsilon = 1e-25);
        }
    }

    #[test]
    fn delays_strictly_increase_within_order() {
        let cfg = InitConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let delays = draw_cluster_delays(5, 13, 1e-8, &cfg, &mut rng);
            for w in delays[..5].windows(2) {
                assert!(w[1] > w[0]);
            }
            for w in delays[5..].windows(2) {
                assert!(w[1] > w[0]);
            }
            assert!(delays.iter().all(|&d| d > 1e-8));
        }
    }

    #[test]
    fn delay_increment_sample_means() {
        let cfg = InitConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut inc1 = Vec::new();
        let mut inc2 = Vec::new();
        let los = 1e-8;
        for _ in 0..20_000 {
            let d = draw_cluster_delays(5, 7, los, &cfg, &mut rng);
            inc1.push(d[0] - los);
            for w in d[..5].windows(2) {
                inc1.push(w[1] - w[0]);
            }
            inc2.push(d[5] - los);
            for w in d[5..].windows(2) {
                inc2.push(w[1] - w[0]);
            }
        }
        let mean1 = inc1.iter().sum::<f64>() / inc1.len() as f64;
        let mean2 = inc2.iter().sum::<f64>() / inc2.len() as f64;
        assert!((mean1 - 2.73e-9).abs() / 2.73e-9 < 0.02, "mean1 = {mean1}");
        assert!((mean2 - 4.8e-9).abs() / 4.8e-9 < 0.02, "mean2 = {mean2}");
    }

    #[test]
    fn powers_without_decay_equal_los_power() {
        let mut cfg = InitConfig::default();
        cfg.n_tau_db_per_s = 0.0;
        cfg.delta_a_std_db = 0.0;
        cfg.delta_p_los_db = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let delays = [1.1e-8, 2e-8, 5e-8];
        let p = draw_cluster_powers(&delays, 1e-8, -90.0, &cfg, &mut rng);
        for &v in &p {
            assert_relative_eq!(v, db_to_power(-90.0), max_relative = 1e-12);
        }
    }

    #[test]
    fn power_decay_follows_excess_delay() {
        let mut cfg = InitConfig::default();
        cfg.n_tau_db_per_s = 1e9; // 1 dB per ns
        cfg.delta_a_std_db = 0.0;
        cfg.delta_p_los_db = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let los = 1e-8;
        let p = draw_cluster_powers(&[los + 10e-9], los, -90.0, &cfg, &mut rng);
        assert_relative_eq!(power_to_db(p[0]), -100.0, epsilon = 1e-9);
    }

    #[test]
    fn power_regression_slope_matches_decay_coefficient() {
        let mut cfg = InitConfig::default();
        cfg.n_tau_db_per_s = 0.5e9;
        cfg.delta_a_std_db = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        // 1e4 clusters over a 20 ns excess-delay span.
        let delays: Vec<f64> = (0..10_000).map(|i| 1e-8 + (i as f64 + 1.0) * 2e-12).collect();
        let p = draw_cluster_powers(&delays, 1e-8, -90.0, &cfg, &mut rng);
        let x: Vec<f64> = delays.iter().map(|&d| d - 1e-8).collect();
        let y: Vec<f64> = p.iter().map(|&v| power_to_db(v)).collect();
        let xm = x.iter().sum::<f64>() / x.len() as f64;
        let ym = y.iter().sum::<f64>() / y.len() as f64;
        let sxy: f64 = x.iter().zip(&y).map(|(&a, &b)| (a - xm) * (b - ym)).sum();
        let sxx: f64 = x.iter().map(|&a| (a - xm) * (a - xm)).sum();
        let slope = sxy / sxx;
        assert!(
            (slope + 0.5e9).abs() / 0.5e9 < 0.05,
            "regression slope {slope} vs -n_tau -5e8"
        );
    }

    #[test]
    fn zero_std_angles_equal_means() {
        let mut cfg = InitConfig::default();
        cfg.angle_std_rad = 0.0;
        cfg.mean_aod = AnglePair::new(0.4, -0.2);
        cfg.mean_aoa = AnglePair::new(-1.0, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for (aod, aoa) in draw_cluster_angles(50, &cfg, &mut rng) {
            assert_eq!(aod, cfg.mean_aod);
            assert_eq!(aoa, cfg.mean_aoa);
        }
    }

    #[test]
    fn drawn_angles_are_in_canonical_ranges() {
        let cfg = InitConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (aod, aoa) in draw_cluster_angles(10_000, &cfg, &mut rng) {
            for a in [aod, aoa] {
                assert!(a.azimuth > -PI && a.azimuth <= PI);
                assert!(a.elevation.abs() <= std::f64::consts::FRAC_PI_2);
            }
        }
    }

    #[test]
    fn ray_delay_inverse_cdf_closed_form() {
        assert_relative_eq!(exp_inverse_cdf(2e-9, 0.5), 1.386294e-9, epsilon = 1e-15);
    }

    #[test]
    fn ray_rel_delay_matches_persisted_uniform() {
        let cfg = InitConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for ray in draw_ray_states(200, 2e-9, 0.05, &cfg, &mut rng) {
            assert_eq!(ray.rel_delay_s, exp_inverse_cdf(2e-9, ray.base_delay_uniform));
            assert!(ray.rel_delay_s >= 0.0);
            assert!(ray.xpr > 0.0);
            for p in ray.phases {
                assert!((-PI..=PI).contains(&p));
            }
        }
    }

    #[test]
    fn zero_sigma_rays_have_zero_relative_angles() {
        let cfg = InitConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for ray in draw_ray_states(50, 1e-9, 0.0, &cfg, &mut rng) {
            assert_eq!(ray.rel_aod.azimuth, 0.0);
            assert_eq!(ray.rel_aod.elevation, 0.0);
            assert_eq!(ray.rel_aoa.azimuth, 0.0);
            assert_eq!(ray.rel_aoa.elevation, 0.0);
        }
    }

    #[test]
    fn ray_phases_pass_ks_uniformity() {
        let cfg = InitConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut phases: Vec<f64> = Vec::with_capacity(100_000);
        while phases.len() < 100_000 {
            for ray in draw_ray_states(1000, 1e-9, 0.05, &cfg, &mut rng) {
                phases.push(ray.phases[0]);
            }
        }
        phases.truncate(100_000);
        phases.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = phases.len() as f64;
        let mut d: f64 = 0.0;
        for (i, &p) in phases.iter().enumerate() {
            let cdf = (p + PI) / (2.0 * PI);
            let lo = i as f64 / n;
            let hi = (i as f64 + 1.0) / n;
            d = d.max((cdf - lo).abs()).max((hi - cdf).abs());
        }
        // Kolmogorov critical value at alpha = 0.01.
        let critical = 1.628 / n.sqrt();
        assert!(d < critical, "KS statistic {d} vs critical {critical}");
    }

    #[test]
    fn mea_single_ray_sits_at_median() {
        assert_eq!(mea_discretize(1, 1.3), vec![0.0]);
    }

    #[test]
    fn mea_two_rays_at_quartiles() {
        let q = mea_discretize(2, 1.0);
        assert_relative_eq!(q[0], -0.674490, epsilon = 1e-6);
        assert_relative_eq!(q[1], 0.674490, epsilon = 1e-6);
    }

    #[test]
    fn mea_is_symmetric_and_increasing() {
        let q = mea_discretize(33, 0.7);
        for w in q.windows(2) {
            assert!(w[1] > w[0]);
        }
        for i in 0..q.len() {
            assert_relative_eq!(q[i], -q[q.len() - 1 - i], epsilon = 1e-12);
        }
    }

    #[test]
    fn mea_equal_area_property() {
        let m = 100;
        let q = mea_discretize(m, 1.0);
        let normal = Normal::new(0.0, 1.0).unwrap();
        for (i, &theta) in q.iter().enumerate() {
            let target = (i as f64 + 0.5) / m as f64;
            let ecdf_right = (i as f64 + 1.0) / m as f64;
            assert!((normal.cdf(theta) - target).abs() < 1e-9);
            assert!((ecdf_right - normal.cdf(theta)) <= 0.5 / m as f64 + 1e-9);
        }
    }

    #[test]
    fn drop_is_bit_reproducible() {
        let cfg = InitConfig::default();
        let link = test_link();
        let pl = PathlossModel::default();
        let a = initialize_drop(&cfg, &link, &pl, 42).unwrap();
        let b = initialize_drop(&cfg, &link, &pl, 42).unwrap();
        assert_eq!(a.clusters, b.clusters);
        assert_eq!(a.los_phase, b.los_phase);
        assert_eq!(a.k_factor, b.k_factor);
    }

    #[test]
    fn cluster_level_draws_do_not_depend_on_ray_count() {
        let mut cfg = InitConfig::default();
        let link = test_link();
        let pl = PathlossModel::default();
        cfg.rays_per_cluster = 10;
        let small = initialize_drop(&cfg, &link, &pl, 7).unwrap();
        cfg.rays_per_cluster = 500;
        let big = initialize_drop(&cfg, &link, &pl, 7).unwrap();
        assert_eq!(small.cluster_count(), big.cluster_count());
        for (a, b) in small.clusters.iter().zip(&big.clusters) {
            assert_eq!(a.state, b.state);
            assert_eq!(a.rays.len(), 10);
            assert_eq!(b.rays.len(), 500);
        }
    }

    #[test]
    fn drop_invariants_hold() {
        let cfg = InitConfig {
            mea_angles: true,
            ..InitConfig::default()
        };
        let link = test_link();
        let pl = PathlossModel::default();
        let drop = initialize_drop(&cfg, &link, &pl, 3).unwrap();
        let n = drop.cluster_count();
        assert!((11..=18).contains(&n), "N = {n}");
        for c in &drop.clusters {
            assert!(c.state.delay_s > drop.los_delay_s);
            assert!(c.state.power > 0.0);
            assert!((-PI..=PI).contains(&c.state.phase));
            assert_eq!(c.state.delay_s, c.state.virtual_vector.norm() / SPEED_OF_LIGHT);
            assert_eq!(c.rays.len(), cfg.rays_per_cluster);
        }
        assert!(drop.k_factor.is_finite() && drop.k_factor > 0.0);
    }
}
