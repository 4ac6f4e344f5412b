//! Scenario configuration: a flat, diff-friendly `key = value` file with
//! units spelled out in key names.
//!
//! Parsing is strict: unknown keys, duplicate keys, and malformed values are
//! rejected with the line number and key name. A scenario re-serializes to a
//! canonical form (fixed key order, shortest-roundtrip floats) whose SHA-256
//! is the run's config hash, so byte-identical hashes mean identical runs.
//!
//! Statistics requests carry their own axis parameters (ACF base times and
//! lag spacing, stationary-interval carrier ladders); `effective_grid`
//! expands them into the evolution grid the run actually evaluates.

use crate::ctf::{AntennaPattern, CtfTensor, PathlossModel, Patterns};
use crate::error::ChannelError;
use crate::evolution::EvolutionGrid;
use crate::geometry::{AnglePair, ArrayGeometry, Link, Vec3};
use crate::init::InitConfig;
use crate::Result;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Statistics a run can compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StatKind {
    Acf,
    Ccf,
    Fcf,
    DelayPsd,
    RiceanK,
    StationaryCcdf,
}

impl StatKind {
    pub fn name(self) -> &'static str {
        match self {
            StatKind::Acf => "acf",
            StatKind::Ccf => "ccf",
            StatKind::Fcf => "fcf",
            StatKind::DelayPsd => "psd",
            StatKind::RiceanK => "k",
            StatKind::StationaryCcdf => "stationary-ccdf",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "acf" => Some(StatKind::Acf),
            "ccf" => Some(StatKind::Ccf),
            "fcf" => Some(StatKind::Fcf),
            "psd" => Some(StatKind::DelayPsd),
            "k" => Some(StatKind::RiceanK),
            "stationary-ccdf" => Some(StatKind::StationaryCcdf),
            _ => None,
        }
    }
}

/// Domain of the stationary-interval statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SiDomain {
    Frequency,
    Time,
    SpaceTx,
    SpaceRx,
}

impl SiDomain {
    pub fn name(self) -> &'static str {
        match self {
            SiDomain::Frequency => "frequency",
            SiDomain::Time => "time",
            SiDomain::SpaceTx => "space-tx",
            SiDomain::SpaceRx => "space-rx",
        }
    }
}

/// Full run description. Field units match the config keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub ensemble: usize,
    pub out_dir: PathBuf,
    pub stats: Vec<StatKind>,
    pub save_ctf: bool,
    pub memory_budget_mb: u64,
    /// Lifts the memory guard (set from the command line, not the file).
    pub paper_scale: bool,

    // Channel generator parameters, in file units (ns keys stay ns here so
    // the canonical form round-trips bit-exactly; `init_config` converts).
    pub pmf_first_order: BTreeMap<u32, f64>,
    pub second_order_min: u32,
    pub second_order_max: u32,
    pub mu_dtau_1st_ns: f64,
    pub mu_dtau_2nd_ns: f64,
    pub mu_ray_delay_f0_ns: f64,
    pub sigma_ray_angle_f0_rad: f64,
    pub mean_aod: AnglePair,
    pub mean_aoa: AnglePair,
    pub angle_std_rad: f64,
    pub n_tau_db_per_ns: f64,
    pub delta_a_std_db: f64,
    pub delta_p_los_db: f64,
    pub xpr_mean_db: f64,
    pub xpr_std_db: f64,
    pub shadowing_sigma_db: f64,
    pub rays_per_cluster: usize,
    pub mea_angles: bool,
    pub freq_fresh_draws: bool,
    pub rho_mu: f64,
    pub rho_sigma: f64,

    // Geometry.
    pub d0_m: f64,
    pub f0_ghz: f64,
    pub tx_elements: usize,
    pub rx_elements: usize,
    pub element_spacing_m: f64,
    pub tx_axis: Vec3,
    pub rx_axis: Vec3,
    pub tx_orientation: AnglePair,
    pub rx_orientation: AnglePair,
    pub rx_speed_mps: f64,
    pub rx_direction: AnglePair,
    pub pattern_v_gain: f64,
    pub pattern_h_gain: f64,
    /// Optional JSON file holding a table-driven pattern for both arrays.
    pub pattern_table_file: Option<PathBuf>,

    // Grid.
    pub time_points_s: Vec<f64>,
    pub grid_tx_elements: Vec<usize>,
    pub grid_rx_elements: Vec<usize>,
    pub carriers_ghz: Vec<f64>,
    pub f_comb_points: usize,
    pub f_comb_span_ghz: f64,

    // Path loss: (GHz, dB/km) rows.
    pub absorption_table_ghz_db_per_km: Vec<(f64, f64)>,

    // ACF parameters.
    pub acf_base_times_s: Vec<f64>,
    pub acf_lag_step_s: f64,
    pub acf_lag_count: usize,

    // CCF parameters: base Rx elements (1-based).
    pub ccf_base_rx: Vec<usize>,

    // Delay-PSD parameters.
    pub psd_bin_width_ns: f64,

    // Stationary-interval parameters.
    pub si_runs: usize,
    pub si_drops_per_run: usize,
    pub si_cth: f64,
    pub si_domain: SiDomain,
    pub si_step_ghz: f64,
    pub si_steps: usize,
}

/// Half-wavelength at 300 GHz, the default element spacing.
pub fn half_wavelength_300ghz() -> f64 {
    crate::SPEED_OF_LIGHT / 300e9 / 2.0
}

impl Default for Scenario {
    fn default() -> Self {
        let mut pmf = BTreeMap::new();
        pmf.insert(4, 0.35);
        pmf.insert(5, 0.65);
        Scenario {
            seed: 0,
            ensemble: 100,
            out_dir: PathBuf::from("out"),
            stats: Vec::new(),
            save_ctf: false,
            memory_budget_mb: 2048,
            paper_scale: false,
            pmf_first_order: pmf,
            second_order_min: 7,
            second_order_max: 13,
            mu_dtau_1st_ns: 2.73,
            mu_dtau_2nd_ns: 4.8,
            mu_ray_delay_f0_ns: 0.4,
            sigma_ray_angle_f0_rad: 0.05,
            mean_aod: AnglePair::ZERO,
            mean_aoa: AnglePair::ZERO,
            angle_std_rad: 1.2,
            n_tau_db_per_ns: 0.5,
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
            d0_m: 3.0,
            f0_ghz: 300.0,
            tx_elements: 16,
            rx_elements: 16,
            element_spacing_m: half_wavelength_300ghz(),
            tx_axis: Vec3::new(0.0, 1.0, 0.0),
            rx_axis: Vec3::new(0.0, 1.0, 0.0),
            tx_orientation: AnglePair::ZERO,
            rx_orientation: AnglePair::ZERO,
            rx_speed_mps: 0.1,
            rx_direction: AnglePair::new(std::f64::consts::FRAC_PI_3, 0.0),
            pattern_v_gain: 1.0,
            pattern_h_gain: 0.0,
            pattern_table_file: None,
            time_points_s: vec![0.0],
            grid_tx_elements: vec![1],
            grid_rx_elements: vec![1],
            carriers_ghz: vec![300.0],
            f_comb_points: 1,
            f_comb_span_ghz: 0.0,
            absorption_table_ghz_db_per_km: vec![(300.0, 10.0), (400.0, 10.0)],
            acf_base_times_s: vec![0.0],
            acf_lag_step_s: 0.005,
            acf_lag_count: 21,
            ccf_base_rx: vec![1],
            psd_bin_width_ns: 0.5,
            si_runs: 100,
            si_drops_per_run: 20,
            si_cth: 0.9,
            si_domain: SiDomain::Frequency,
            si_step_ghz: 0.25,
            si_steps: 40,
        }
    }
}

fn invalid(field: &str, message: impl Into<String>) -> ChannelError {
    ChannelError::InvalidField { field: field.to_string(), message: message.into() }
}

impl Scenario {
    /// Parse a scenario file.
    pub fn load(path: &Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path)?;
        Scenario::from_config_str(&text)
    }

    /// Parse the flat key-value format. `seed` is required.
    pub fn from_config_str(text: &str) -> Result<Scenario> {
        let kv = parse_key_values(text)?;
        Scenario::from_key_values(kv)
    }

    /// Apply `key=value` overrides on top of an existing scenario.
    pub fn apply_overrides(&self, overrides: &[(String, String)]) -> Result<Scenario> {
        let mut kv = to_key_values(self);
        for (key, value) in overrides {
            if !kv.contains_key(key.as_str()) {
                return Err(invalid(key, "unknown override key"));
            }
            kv.insert(key.clone(), value.clone());
        }
        Scenario::from_key_values(kv)
    }

    fn from_key_values(mut kv: BTreeMap<String, String>) -> Result<Scenario> {
        let mut s = Scenario::default();
        let mut take = |key: &str| kv.remove(key);

        let seed = take("seed").ok_or_else(|| invalid("seed", "required key is missing"))?;
        s.seed = parse_scalar("seed", &seed)?;

        if let Some(v) = take("ensemble") {
            s.ensemble = parse_scalar("ensemble", &v)?;
        }
        if let Some(v) = take("out_dir") {
            s.out_dir = PathBuf::from(v);
        }
        if let Some(v) = take("stats") {
            s.stats = parse_stats(&v)?;
        }
        if let Some(v) = take("save_ctf") {
            s.save_ctf = parse_bool("save_ctf", &v)?;
        }
        if let Some(v) = take("memory_budget_mb") {
            s.memory_budget_mb = parse_scalar("memory_budget_mb", &v)?;
        }

        if let Some(v) = take("pmf_first_order") {
            s.pmf_first_order = parse_pmf("pmf_first_order", &v)?;
        }
        if let Some(v) = take("second_order_min") {
            s.second_order_min = parse_scalar("second_order_min", &v)?;
        }
        if let Some(v) = take("second_order_max") {
            s.second_order_max = parse_scalar("second_order_max", &v)?;
        }
        if let Some(v) = take("mu_dtau_1st_ns") {
            s.mu_dtau_1st_ns = parse_f64("mu_dtau_1st_ns", &v)?;
        }
        if let Some(v) = take("mu_dtau_2nd_ns") {
            s.mu_dtau_2nd_ns = parse_f64("mu_dtau_2nd_ns", &v)?;
        }
        if let Some(v) = take("mu_ray_delay_f0_ns") {
            s.mu_ray_delay_f0_ns = parse_f64("mu_ray_delay_f0_ns", &v)?;
        }
        if let Some(v) = take("sigma_ray_angle_f0_rad") {
            s.sigma_ray_angle_f0_rad = parse_f64("sigma_ray_angle_f0_rad", &v)?;
        }
        if let Some(v) = take("mean_aod_azimuth_rad") {
            s.mean_aod.azimuth = parse_f64("mean_aod_azimuth_rad", &v)?;
        }
        if let Some(v) = take("mean_aod_elevation_rad") {
            s.mean_aod.elevation = parse_f64("mean_aod_elevation_rad", &v)?;
        }
        if let Some(v) = take("mean_aoa_azimuth_rad") {
            s.mean_aoa.azimuth = parse_f64("mean_aoa_azimuth_rad", &v)?;
        }
        if let Some(v) = take("mean_aoa_elevation_rad") {
            s.mean_aoa.elevation = parse_f64("mean_aoa_elevation_rad", &v)?;
        }
        if let Some(v) = take("angle_std_rad") {
            s.angle_std_rad = parse_f64("angle_std_rad", &v)?;
        }
        if let Some(v) = take("n_tau_db_per_ns") {
            s.n_tau_db_per_ns = parse_f64("n_tau_db_per_ns", &v)?;
        }
        if let Some(v) = take("delta_a_std_db") {
            s.delta_a_std_db = parse_f64("delta_a_std_db", &v)?;
        }
        if let Some(v) = take("delta_p_los_db") {
            s.delta_p_los_db = parse_f64("delta_p_los_db", &v)?;
        }
        if let Some(v) = take("xpr_mean_db") {
            s.xpr_mean_db = parse_f64("xpr_mean_db", &v)?;
        }
        if let Some(v) = take("xpr_std_db") {
            s.xpr_std_db = parse_f64("xpr_std_db", &v)?;
        }
        if let Some(v) = take("shadowing_sigma_db") {
            s.shadowing_sigma_db = parse_f64("shadowing_sigma_db", &v)?;
        }
        if let Some(v) = take("rays_per_cluster") {
            s.rays_per_cluster = parse_scalar("rays_per_cluster", &v)?;
        }
        if let Some(v) = take("mea_angles") {
            s.mea_angles = parse_bool("mea_angles", &v)?;
        }
        if let Some(v) = take("freq_fresh_draws") {
            s.freq_fresh_draws = parse_bool("freq_fresh_draws", &v)?;
        }
        if let Some(v) = take("rho_mu") {
            s.rho_mu = parse_f64("rho_mu", &v)?;
        }
        if let Some(v) = take("rho_sigma") {
            s.rho_sigma = parse_f64("rho_sigma", &v)?;
        }

        if let Some(v) = take("d0_m") {
            s.d0_m = parse_f64("d0_m", &v)?;
        }
        if let Some(v) = take("f0_ghz") {
            s.f0_ghz = parse_f64("f0_ghz", &v)?;
        }
        if let Some(v) = take("tx_elements") {
            s.tx_elements = parse_scalar("tx_elements", &v)?;
        }
        if let Some(v) = take("rx_elements") {
            s.rx_elements = parse_scalar("rx_elements", &v)?;
        }
        if let Some(v) = take("element_spacing_m") {
            s.element_spacing_m = parse_f64("element_spacing_m", &v)?;
        }
        if let Some(v) = take("tx_axis") {
            s.tx_axis = parse_vec3("tx_axis", &v)?;
        }
        if let Some(v) = take("rx_axis") {
            s.rx_axis = parse_vec3("rx_axis", &v)?;
        }
        if let Some(v) = take("tx_orientation_azimuth_rad") {
            s.tx_orientation.azimuth = parse_f64("tx_orientation_azimuth_rad", &v)?;
        }
        if let Some(v) = take("tx_orientation_elevation_rad") {
            s.tx_orientation.elevation = parse_f64("tx_orientation_elevation_rad", &v)?;
        }
        if let Some(v) = take("rx_orientation_azimuth_rad") {
            s.rx_orientation.azimuth = parse_f64("rx_orientation_azimuth_rad", &v)?;
        }
        if let Some(v) = take("rx_orientation_elevation_rad") {
            s.rx_orientation.elevation = parse_f64("rx_orientation_elevation_rad", &v)?;
        }
        if let Some(v) = take("rx_speed_mps") {
            s.rx_speed_mps = parse_f64("rx_speed_mps", &v)?;
        }
        if let Some(v) = take("rx_direction_azimuth_rad") {
            s.rx_direction.azimuth = parse_f64("rx_direction_azimuth_rad", &v)?;
        }
        if let Some(v) = take("rx_direction_elevation_rad") {
            s.rx_direction.elevation = parse_f64("rx_direction_elevation_rad", &v)?;
        }
        if let Some(v) = take("pattern_v_gain") {
            s.pattern_v_gain = parse_f64("pattern_v_gain", &v)?;
        }
        if let Some(v) = take("pattern_h_gain") {
            s.pattern_h_gain = parse_f64("pattern_h_gain", &v)?;
        }
        if let Some(v) = take("pattern_table_file") {
            s.pattern_table_file = if v.is_empty() { None } else { Some(PathBuf::from(v)) };
        }

        if let Some(v) = take("time_points_s") {
            s.time_points_s = parse_f64_list("time_points_s", &v)?;
        }
        if let Some(v) = take("grid_tx_elements") {
            s.grid_tx_elements = parse_element_list("grid_tx_elements", &v)?;
        }
        if let Some(v) = take("grid_rx_elements") {
            s.grid_rx_elements = parse_element_list("grid_rx_elements", &v)?;
        }
        if let Some(v) = take("carriers_ghz") {
            s.carriers_ghz = parse_f64_list("carriers_ghz", &v)?;
        }
        if let Some(v) = take("f_comb_points") {
            s.f_comb_points = parse_scalar("f_comb_points", &v)?;
        }
        if let Some(v) = take("f_comb_span_ghz") {
            s.f_comb_span_ghz = parse_f64("f_comb_span_ghz", &v)?;
        }
        if let Some(v) = take("absorption_table_ghz_db_per_km") {
            s.absorption_table_ghz_db_per_km = parse_pairs("absorption_table_ghz_db_per_km", &v)?;
        }

        if let Some(v) = take("acf_base_times_s") {
            s.acf_base_times_s = parse_f64_list("acf_base_times_s", &v)?;
        }
        if let Some(v) = take("acf_lag_step_s") {
            s.acf_lag_step_s = parse_f64("acf_lag_step_s", &v)?;
        }
        if let Some(v) = take("acf_lag_count") {
            s.acf_lag_count = parse_scalar("acf_lag_count", &v)?;
        }
        if let Some(v) = take("ccf_base_rx") {
            s.ccf_base_rx = parse_element_list("ccf_base_rx", &v)?;
        }
        if let Some(v) = take("psd_bin_width_ns") {
            s.psd_bin_width_ns = parse_f64("psd_bin_width_ns", &v)?;
        }
        if let Some(v) = take("si_runs") {
            s.si_runs = parse_scalar("si_runs", &v)?;
        }
        if let Some(v) = take("si_drops_per_run") {
            s.si_drops_per_run = parse_scalar("si_drops_per_run", &v)?;
        }
        if let Some(v) = take("si_cth") {
            s.si_cth = parse_f64("si_cth", &v)?;
        }
        if let Some(v) = take("si_domain") {
            s.si_domain = match v.as_str() {
                "frequency" => SiDomain::Frequency,
                "time" => SiDomain::Time,
                "space-tx" => SiDomain::SpaceTx,
                "space-rx" => SiDomain::SpaceRx,
                other => return Err(invalid("si_domain", format!("unknown domain `{other}`"))),
            };
        }
        if let Some(v) = take("si_step_ghz") {
            s.si_step_ghz = parse_f64("si_step_ghz", &v)?;
        }
        if let Some(v) = take("si_steps") {
            s.si_steps = parse_scalar("si_steps", &v)?;
        }

        if let Some((key, _)) = kv.into_iter().next() {
            return Err(invalid(&key, "unknown key"));
        }
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.init_config().validate()?;
        if self.ensemble == 0 {
            return Err(invalid("ensemble", "must be at least 1"));
        }
        if !(self.d0_m > 0.0) {
            return Err(invalid("d0_m", format!("must be positive, got {}", self.d0_m)));
        }
        if !(self.f0_ghz > 0.0) {
            return Err(invalid("f0_ghz", "must be positive"));
        }
        if self.tx_elements == 0 || self.rx_elements == 0 {
            return Err(invalid("tx_elements", "arrays need at least one element"));
        }
        if (self.tx_elements > 1 || self.rx_elements > 1) && !(self.element_spacing_m > 0.0) {
            return Err(invalid("element_spacing_m", "must be positive for multi-element arrays"));
        }
        if self.tx_axis.norm() == 0.0 || self.rx_axis.norm() == 0.0 {
            return Err(invalid("tx_axis", "array axis must be non-zero"));
        }
        if self.rx_speed_mps < 0.0 {
            return Err(invalid("rx_speed_mps", "must be non-negative"));
        }
        if self.f_comb_points == 0 {
            return Err(invalid("f_comb_points", "must be at least 1"));
        }
        if self.f_comb_points > 1 && !(self.f_comb_span_ghz > 0.0) {
            return Err(invalid("f_comb_span_ghz", "must be positive when f_comb_points > 1"));
        }
        if self.carriers_ghz.is_empty() {
            return Err(invalid("carriers_ghz", "at least one carrier is required"));
        }
        if self.time_points_s.is_empty() {
            return Err(invalid("time_points_s", "at least one time point is required"));
        }
        for &b in &self.ccf_base_rx {
            if b == 0 || b > self.rx_elements {
                return Err(invalid("ccf_base_rx", format!("element {b} outside the Rx array")));
            }
        }
        if self.stats.contains(&StatKind::Acf) {
            if self.acf_lag_count == 0 {
                return Err(invalid("acf_lag_count", "must be at least 1"));
            }
            if self.acf_lag_count > 1 && !(self.acf_lag_step_s > 0.0) {
                return Err(invalid("acf_lag_step_s", "must be positive"));
            }
        }
        if self.stats.contains(&StatKind::DelayPsd) {
            if !(self.psd_bin_width_ns > 0.0) {
                return Err(invalid("psd_bin_width_ns", "must be positive"));
            }
            if self.f_comb_points < 2 {
                return Err(invalid("f_comb_points", "delay PSD needs at least 2 comb points"));
            }
        }
        if self.stats.contains(&StatKind::StationaryCcdf) {
            if !(self.si_cth > 0.0 && self.si_cth < 1.0) {
                return Err(invalid("si_cth", "threshold must be in (0, 1)"));
            }
            if self.si_runs == 0 || self.si_drops_per_run == 0 {
                return Err(invalid("si_runs", "runs and drops per run must be at least 1"));
            }
            if self.si_domain == SiDomain::Frequency {
                if self.si_steps == 0 {
                    return Err(invalid("si_steps", "must be at least 1"));
                }
                if !(self.si_step_ghz > 0.0) {
                    return Err(invalid("si_step_ghz", "must be positive"));
                }
            }
        }
        Ok(())
    }

    /// Channel generator configuration in SI units.
    pub fn init_config(&self) -> InitConfig {
        InitConfig {
            pmf_first_order: self.pmf_first_order.clone(),
            second_order_min: self.second_order_min,
            second_order_max: self.second_order_max,
            mu_dtau_1st_s: self.mu_dtau_1st_ns * 1e-9,
            mu_dtau_2nd_s: self.mu_dtau_2nd_ns * 1e-9,
            mu_ray_delay_f0_s: self.mu_ray_delay_f0_ns * 1e-9,
            sigma_ray_angle_f0_rad: self.sigma_ray_angle_f0_rad,
            mean_aod: self.mean_aod,
            mean_aoa: self.mean_aoa,
            angle_std_rad: self.angle_std_rad,
            n_tau_db_per_s: self.n_tau_db_per_ns * 1e9,
            delta_a_std_db: self.delta_a_std_db,
            delta_p_los_db: self.delta_p_los_db,
            xpr_mean_db: self.xpr_mean_db,
            xpr_std_db: self.xpr_std_db,
            shadowing_sigma_db: self.shadowing_sigma_db,
            rays_per_cluster: self.rays_per_cluster,
            mea_angles: self.mea_angles,
            freq_fresh_draws: self.freq_fresh_draws,
            rho_mu: self.rho_mu,
            rho_sigma: self.rho_sigma,
        }
    }

    /// Physical link built from the geometry keys.
    pub fn link(&self) -> Result<Link> {
        let tx = ArrayGeometry {
            orientation: self.tx_orientation,
            ..ArrayGeometry::ula(self.tx_elements, self.element_spacing_m, self.tx_axis)?
        };
        let mut rx = ArrayGeometry {
            orientation: self.rx_orientation,
            ..ArrayGeometry::ula(self.rx_elements, self.element_spacing_m, self.rx_axis)?
        };
        rx.velocity = crate::geometry::angles_to_unit_vector(self.rx_direction) * self.rx_speed_mps;
        Ok(Link { tx, rx, d0: Vec3::new(self.d0_m, 0.0, 0.0), f0_hz: self.f0_ghz * 1e9 })
    }

    pub fn pathloss(&self) -> PathlossModel {
        PathlossModel {
            absorption_table: self
                .absorption_table_ghz_db_per_km
                .iter()
                .map(|&(ghz, db)| (ghz * 1e9, db))
                .collect(),
            shadowing_sigma_db: self.shadowing_sigma_db,
        }
    }

    pub fn patterns(&self) -> Result<Patterns> {
        let pattern = match &self.pattern_table_file {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                let table: AntennaPattern = serde_json::from_str(&text)?;
                table.validate()?;
                table
            }
            None => AntennaPattern::Omni { v_gain: self.pattern_v_gain, h_gain: self.pattern_h_gain },
        };
        Ok(Patterns { tx: pattern.clone(), rx: pattern })
    }

    /// Intra-band comb offsets: `f_comb_points` samples spaced span/points,
    /// starting at the carrier.
    pub fn f_offsets_hz(&self) -> Vec<f64> {
        if self.f_comb_points == 1 {
            return vec![0.0];
        }
        let df = self.f_comb_span_ghz * 1e9 / self.f_comb_points as f64;
        (0..self.f_comb_points).map(|k| k as f64 * df).collect()
    }

    /// Evolution grid expanded for the requested statistics: ACF base times
    /// plus lags on the time axis, stationary-interval carrier ladders on
    /// the carrier axis.
    pub fn effective_grid(&self) -> Result<EvolutionGrid> {
        let mut times = self.time_points_s.clone();
        if self.stats.contains(&StatKind::Acf) {
            for &base in &self.acf_base_times_s {
                for k in 0..self.acf_lag_count {
                    times.push(base + k as f64 * self.acf_lag_step_s);
                }
            }
        }
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        times.dedup();

        let mut carriers: Vec<f64> = self.carriers_ghz.iter().map(|&g| g * 1e9).collect();
        if self.stats.contains(&StatKind::StationaryCcdf) && self.si_domain == SiDomain::Frequency {
            for &base in &self.carriers_ghz {
                for k in 1..=self.si_steps {
                    carriers.push((base + k as f64 * self.si_step_ghz) * 1e9);
                }
            }
        }
        carriers.sort_by(|a, b| a.partial_cmp(b).unwrap());
        carriers.dedup();

        let grid = EvolutionGrid {
            time_points_s: times,
            tx_elements: self.grid_tx_elements.clone(),
            rx_elements: self.grid_rx_elements.clone(),
            carriers_hz: carriers,
        };
        grid.validate(&self.link()?)?;
        Ok(grid)
    }

    /// Estimated bytes held in memory by one run: LOS and total tensors for
    /// every drop of the ensemble.
    pub fn estimated_bytes(&self) -> Result<u64> {
        let grid = self.effective_grid()?;
        let dims = [
            grid.tx_elements.len(),
            grid.rx_elements.len(),
            grid.time_points_s.len(),
            grid.carriers_hz.len(),
            self.f_offsets_hz().len(),
        ];
        let per_drop = CtfTensor::payload_bytes(dims) * 2;
        let drops = if self.stats.contains(&StatKind::StationaryCcdf) {
            self.si_drops_per_run.max(self.ensemble)
        } else {
            self.ensemble
        };
        Ok(per_drop * drops as u64)
    }

    /// Reject runs whose in-memory tensor footprint exceeds the budget,
    /// unless `paper_scale` lifts the guard.
    pub fn check_memory_budget(&self) -> Result<()> {
        if self.paper_scale {
            return Ok(());
        }
        let bytes = self.estimated_bytes()?;
        let budget = self.memory_budget_mb * 1024 * 1024;
        if bytes > budget {
            return Err(ChannelError::MemoryBudget(format!(
                "run needs about {} MiB of tensors, budget is {} MiB; \
                 shrink the grid or pass --paper-scale",
                bytes / (1024 * 1024),
                self.memory_budget_mb
            )));
        }
        Ok(())
    }

    /// Canonical flat serialization; its SHA-256 is the config hash.
    pub fn to_config_string(&self) -> String {
        let kv = to_key_values(self);
        let mut out = String::new();
        for (k, v) in kv {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn config_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_config_string().as_bytes());
        hex_string(&hasher.finalize())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(s, "{b:02x}");
    }
    s
}

fn fmt_list(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn fmt_usize_list(values: &[usize]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn to_key_values(s: &Scenario) -> BTreeMap<String, String> {
    let mut kv = BTreeMap::new();
    let mut put = |k: &str, v: String| {
        kv.insert(k.to_string(), v);
    };
    put("seed", s.seed.to_string());
    put("ensemble", s.ensemble.to_string());
    put("out_dir", s.out_dir.display().to_string());
    put(
        "stats",
        s.stats.iter().map(|k| k.name()).collect::<Vec<_>>().join(","),
    );
    put("save_ctf", s.save_ctf.to_string());
    put("memory_budget_mb", s.memory_budget_mb.to_string());

    put(
        "pmf_first_order",
        s.pmf_first_order
            .iter()
            .map(|(k, v)| format!("{k}:{v}"))
            .collect::<Vec<_>>()
            .join(","),
    );
    put("second_order_min", s.second_order_min.to_string());
    put("second_order_max", s.second_order_max.to_string());
    put("mu_dtau_1st_ns", s.mu_dtau_1st_ns.to_string());
    put("mu_dtau_2nd_ns", s.mu_dtau_2nd_ns.to_string());
    put("mu_ray_delay_f0_ns", s.mu_ray_delay_f0_ns.to_string());
    put("sigma_ray_angle_f0_rad", s.sigma_ray_angle_f0_rad.to_string());
    put("mean_aod_azimuth_rad", s.mean_aod.azimuth.to_string());
    put("mean_aod_elevation_rad", s.mean_aod.elevation.to_string());
    put("mean_aoa_azimuth_rad", s.mean_aoa.azimuth.to_string());
    put("mean_aoa_elevation_rad", s.mean_aoa.elevation.to_string());
    put("angle_std_rad", s.angle_std_rad.to_string());
    put("n_tau_db_per_ns", s.n_tau_db_per_ns.to_string());
    put("delta_a_std_db", s.delta_a_std_db.to_string());
    put("delta_p_los_db", s.delta_p_los_db.to_string());
    put("xpr_mean_db", s.xpr_mean_db.to_string());
    put("xpr_std_db", s.xpr_std_db.to_string());
    put("shadowing_sigma_db", s.shadowing_sigma_db.to_string());
    put("rays_per_cluster", s.rays_per_cluster.to_string());
    put("mea_angles", s.mea_angles.to_string());
    put("freq_fresh_draws", s.freq_fresh_draws.to_string());
    put("rho_mu", s.rho_mu.to_string());
    put("rho_sigma", s.rho_sigma.to_string());

    put("d0_m", s.d0_m.to_string());
    put("f0_ghz", s.f0_ghz.to_string());
    put("tx_elements", s.tx_elements.to_string());
    put("rx_elements", s.rx_elements.to_string());
    put("element_spacing_m", s.element_spacing_m.to_string());
    put("tx_axis", format!("{},{},{}", s.tx_axis.x, s.tx_axis.y, s.tx_axis.z));
    put("rx_axis", format!("{},{},{}", s.rx_axis.x, s.rx_axis.y, s.rx_axis.z));
    put("tx_orientation_azimuth_rad", s.tx_orientation.azimuth.to_string());
    put("tx_orientation_elevation_rad", s.tx_orientation.elevation.to_string());
    put("rx_orientation_azimuth_rad", s.rx_orientation.azimuth.to_string());
    put("rx_orientation_elevation_rad", s.rx_orientation.elevation.to_string());
    put("rx_speed_mps", s.rx_speed_mps.to_string());
    put("rx_direction_azimuth_rad", s.rx_direction.azimuth.to_string());
    put("rx_direction_elevation_rad", s.rx_direction.elevation.to_string());
    put("pattern_v_gain", s.pattern_v_gain.to_string());
    put("pattern_h_gain", s.pattern_h_gain.to_string());
    put(
        "pattern_table_file",
        s.pattern_table_file.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
    );

    put("time_points_s", fmt_list(&s.time_points_s));
    put("grid_tx_elements", fmt_usize_list(&s.grid_tx_elements));
    put("grid_rx_elements", fmt_usize_list(&s.grid_rx_elements));
    put("carriers_ghz", fmt_list(&s.carriers_ghz));
    put("f_comb_points", s.f_comb_points.to_string());
    put("f_comb_span_ghz", s.f_comb_span_ghz.to_string());
    put(
        "absorption_table_ghz_db_per_km",
        s.absorption_table_ghz_db_per_km
            .iter()
            .map(|(f, a)| format!("{f}:{a}"))
            .collect::<Vec<_>>()
            .join(","),
    );

    put("acf_base_times_s", fmt_list(&s.acf_base_times_s));
    put("acf_lag_step_s", s.acf_lag_step_s.to_string());
    put("acf_lag_count", s.acf_lag_count.to_string());
    put("ccf_base_rx", fmt_usize_list(&s.ccf_base_rx));
    put("psd_bin_width_ns", s.psd_bin_width_ns.to_string());
    put("si_runs", s.si_runs.to_string());
    put("si_drops_per_run", s.si_drops_per_run.to_string());
    put("si_cth", s.si_cth.to_string());
    put("si_domain", s.si_domain.name().to_string());
    put("si_step_ghz", s.si_step_ghz.to_string());
    put("si_steps", s.si_steps.to_string());
    kv
}

fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut kv = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some(eq) = line.find('=') else {
            return Err(ChannelError::ScenarioParse {
                line: lineno + 1,
                message: format!("expected `key = value`, got `{line}`"),
            });
        };
        let key = line[..eq].trim().to_string();
        let value = line[eq + 1..].trim().to_string();
        if key.is_empty() {
            return Err(ChannelError::ScenarioParse {
                line: lineno + 1,
                message: "empty key".into(),
            });
        }
        if kv.insert(key.clone(), value).is_some() {
            return Err(ChannelError::ScenarioParse {
                line: lineno + 1,
                message: format!("duplicate key `{key}`"),
            });
        }
    }
    Ok(kv)
}

fn parse_f64(field: &str, v: &str) -> Result<f64> {
    v.parse::<f64>().map_err(|e| invalid(field, format!("`{v}` is not a number: {e}")))
}

fn parse_scalar<T: std::str::FromStr>(field: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| invalid(field, format!("`{v}` is not valid: {e}")))
}

fn parse_bool(field: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(invalid(field, format!("`{other}` is not `true`/`false`"))),
    }
}

fn parse_f64_list(field: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|p| parse_f64(field, p.trim())).collect()
}

/// Element lists accept `1,5,9` and inclusive ranges `1..16`.
fn parse_element_list(field: &str, v: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in v.split(',') {
        let part = part.trim();
        if let Some((lo, hi)) = part.split_once("..") {
            let lo: usize = parse_scalar(field, lo.trim())?;
            let hi: usize = parse_scalar(field, hi.trim())?;
            if lo == 0 || hi < lo {
                return Err(invalid(field, format!("bad element range `{part}`")));
            }
            out.extend(lo..=hi);
        } else {
            let e: usize = parse_scalar(field, part)?;
            if e == 0 {
                return Err(invalid(field, "element indices are 1-based"));
            }
            out.push(e);
        }
    }
    Ok(out)
}

fn parse_vec3(field: &str, v: &str) -> Result<Vec3> {
    let parts = parse_f64_list(field, v)?;
    if parts.len() != 3 {
        return Err(invalid(field, format!("expected three components, got {}", parts.len())));
    }
    Ok(Vec3::new(parts[0], parts[1], parts[2]))
}

fn parse_pmf(field: &str, v: &str) -> Result<BTreeMap<u32, f64>> {
    let mut pmf = BTreeMap::new();
    for part in v.split(',') {
        let (k, p) = part
            .split_once(':')
            .ok_or_else(|| invalid(field, format!("expected `count:prob`, got `{part}`")))?;
        pmf.insert(parse_scalar::<u32>(field, k.trim())?, parse_f64(field, p.trim())?);
    }
    Ok(pmf)
}

fn parse_pairs(field: &str, v: &str) -> Result<Vec<(f64, f64)>> {
    v.split(',')
        .map(|part| {
            let (a, b) = part
                .split_once(':')
                .ok_or_else(|| invalid(field, format!("expected `freq:value`, got `{part}`")))?;
            Ok((parse_f64(field, a.trim())?, parse_f64(field, b.trim())?))
        })
        .collect()
}

fn parse_stats(v: &str) -> Result<Vec<StatKind>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for part in v.split(',') {
        let part = part.trim();
        let kind = StatKind::parse(part)
            .ok_or_else(|| invalid("stats", format!("unknown statistic `{part}`")))?;
        if !out.contains(&kind) {
            out.push(kind);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(extra: &str) -> String {
        format!("seed = 7\n{extra}\n")
    }

    #[test]
    fn seed_is_required() {
        let err = Scenario::from_config_str("ensemble = 5\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("seed"), "{msg}");
    }

    #[test]
    fn defaults_follow_the_reference_setup() {
        let s = Scenario::from_config_str(&minimal("")).unwrap();
        assert_eq!(s.seed, 7);
        assert_eq!(s.rx_speed_mps, 0.1);
        assert_eq!(s.d0_m, 3.0);
        assert_eq!(s.init_config().mu_dtau_1st_s, 2.73 * 1e-9);
        assert_eq!(s.mu_dtau_2nd_ns, 4.8);
        assert_eq!(s.angle_std_rad, 1.2);
        assert_eq!(s.rho_mu, 3.0);
        assert_eq!(s.rays_per_cluster, 100);
        assert_eq!(s.si_cth, 0.9);
        assert_eq!(s.rx_direction.azimuth, std::f64::consts::FRAC_PI_3);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = Scenario::from_config_str(&minimal("no_such_key = 1")).unwrap_err();
        assert!(err.to_string().contains("no_such_key"));
    }

    #[test]
    fn duplicate_key_is_rejected_with_line() {
        let err = Scenario::from_config_str("seed = 1\nseed = 2\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{msg}");
        assert!(msg.contains("duplicate"), "{msg}");
    }

    #[test]
    fn negative_scale_is_rejected_with_field_name() {
        let err = Scenario::from_config_str(&minimal("mu_dtau_1st_ns = -1")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("mu_dtau_1st_ns"), "{msg}");
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = "# scenario\nseed = 3   # inline comment\n\nensemble = 12\n";
        let s = Scenario::from_config_str(text).unwrap();
        assert_eq!(s.ensemble, 12);
    }

    #[test]
    fn element_ranges_parse() {
        let s = Scenario::from_config_str(&minimal("grid_rx_elements = 1..4\nrx_elements = 8"))
            .unwrap();
        assert_eq!(s.grid_rx_elements, vec![1, 2, 3, 4]);
    }

    #[test]
    fn round_trip_through_canonical_form() {
        let text = minimal("stats = acf,fcf\nacf_base_times_s = 0,5,10\ncarriers_ghz = 300,325");
        let s = Scenario::from_config_str(&text).unwrap();
        let canon = s.to_config_string();
        let back = Scenario::from_config_str(&canon).unwrap();
        assert_eq!(s, back);
        assert_eq!(s.config_hash(), back.config_hash());
    }

    #[test]
    fn hash_changes_with_any_key() {
        let a = Scenario::from_config_str(&minimal("")).unwrap();
        let b = Scenario::from_config_str(&minimal("ensemble = 7")).unwrap();
        assert_ne!(a.config_hash(), b.config_hash());
    }

    #[test]
    fn overrides_apply_and_reject_unknown() {
        let s = Scenario::from_config_str(&minimal("")).unwrap();
        let o = s
            .apply_overrides(&[("rx_speed_mps".into(), "0".into())])
            .unwrap();
        assert_eq!(o.rx_speed_mps, 0.0);
        assert!(s.apply_overrides(&[("bogus".into(), "1".into())]).is_err());
    }

    #[test]
    fn acf_grid_expansion_includes_bases_and_lags() {
        let text = minimal(
            "stats = acf\nacf_base_times_s = 0,5\nacf_lag_step_s = 0.5\nacf_lag_count = 3",
        );
        let s = Scenario::from_config_str(&text).unwrap();
        let grid = s.effective_grid().unwrap();
        assert_eq!(grid.time_points_s, vec![0.0, 0.5, 1.0, 5.0, 5.5, 6.0]);
    }

    #[test]
    fn stationary_grid_expansion_builds_ladders() {
        let text = minimal(
            "stats = stationary-ccdf\ncarriers_ghz = 300,301\nsi_step_ghz = 0.5\nsi_steps = 2",
        );
        let s = Scenario::from_config_str(&text).unwrap();
        let grid = s.effective_grid().unwrap();
        let ghz: Vec<f64> = grid.carriers_hz.iter().map(|&f| f / 1e9).collect();
        assert_eq!(ghz, vec![300.0, 300.5, 301.0, 301.5, 302.0]);
    }

    #[test]
    fn comb_offsets_are_uniform_from_zero() {
        let s = Scenario::from_config_str(&minimal("f_comb_points = 4\nf_comb_span_ghz = 2"))
            .unwrap();
        assert_eq!(s.f_offsets_hz(), vec![0.0, 5e8, 1e9, 1.5e9]);
    }

    #[test]
    fn memory_guard_trips_and_lifts() {
        let text = minimal(
            "grid_tx_elements = 1..16\ngrid_rx_elements = 1..16\nf_comb_points = 4096\n\
             f_comb_span_ghz = 2\nensemble = 200\nmemory_budget_mb = 1",
        );
        let mut s = Scenario::from_config_str(&text).unwrap();
        assert!(matches!(s.check_memory_budget(), Err(ChannelError::MemoryBudget(_))));
        s.paper_scale = true;
        assert!(s.check_memory_budget().is_ok());
    }

    #[test]
    fn link_construction_uses_geometry_keys() {
        let s = Scenario::from_config_str(&minimal("rx_speed_mps = 0.2\ntx_elements = 4")).unwrap();
        let link = s.link().unwrap();
        assert_eq!(link.tx.len(), 4);
        approx::assert_relative_eq!(link.rx.velocity.norm(), 0.2, epsilon = 1e-12);
        assert_eq!(link.d0, Vec3::new(3.0, 0.0, 0.0));
    }
}
