//! Seeded Monte Carlo run orchestration.
//!
//! A run takes a [`Scenario`], generates an ensemble of drops on the
//! effective grid (each drop seeded as a pure function of the scenario seed
//! and the drop index), assembles LOS/total CTF tensors, reduces the
//! requested statistics in drop-index order, and writes everything under the
//! output directory:
//!
//! ```text
//! out/
//!   manifest.json      run manifest (hash, seeds, outputs, timing)
//!   scenario.conf      canonical scenario (its SHA-256 is the config hash)
//!   stats/             one CSV + JSON metadata pair per statistic
//!   ctf/               optional raw tensors + sidecars (save_ctf = true)
//! ```
//!
//! Drops are generated in parallel (feature `parallel`), statistics are
//! reduced sequentially in drop order, and float formatting is shortest
//! round-trip, so re-running a scenario with the same seed reproduces every
//! statistics file byte for byte. With `save_ctf`, drops whose tensor files
//! and sidecar already match the config hash and seed are loaded instead of
//! recomputed.

use crate::ctf::{
    ctf_tensor_parts_seq, read_sidecar, read_tensor, write_sidecar, write_tensor, CtfTensor,
    PathlossModel, Patterns, TensorSidecar,
};
use crate::error::ChannelError;
use crate::evolution::{realize_grid, EvolutionGrid};
use crate::geometry::Link;
use crate::init::{initialize_drop, InitConfig};
use crate::rng::{drop_seed, stream_seed};
use crate::scenario::{Scenario, SiDomain, StatKind};
use crate::stats::{
    acf, ccdf, ccf, delay_psd, delay_psd_from_ctf, fcf, mean_power_over_comb, ricean_k,
    ricean_k_from_tensors, stationary_interval, StationaryDomain, TensorIndex,
};
use crate::Result;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Stream tag separating stationary-interval run seeds from the main
/// ensemble's drop seeds.
const SI_STREAM: u64 = 0x5349;

/// Record of one completed (or partially completed) run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub ensemble: usize,
    pub completed_drops: usize,
    pub drop_seeds: Vec<u64>,
    /// Tensor files, relative to the output directory (empty without
    /// `save_ctf`).
    pub drop_outputs: Vec<String>,
    /// Statistics files, relative to the output directory.
    pub stat_files: Vec<String>,
    pub elapsed_seconds: f64,
}

/// LOS/total tensors and per-drop Ricean factors of one ensemble.
pub struct DropSet {
    pub totals: Vec<CtfTensor>,
    pub los: Vec<CtfTensor>,
    pub k_factors: Vec<f64>,
}

struct RunContext {
    link: Link,
    grid: EvolutionGrid,
    offsets: Vec<f64>,
    patterns: Patterns,
    pathloss: PathlossModel,
    cfg: InitConfig,
    hash: String,
}

fn build_context(scenario: &Scenario) -> Result<RunContext> {
    Ok(RunContext {
        link: scenario.link()?,
        grid: scenario.effective_grid()?,
        offsets: scenario.f_offsets_hz(),
        patterns: scenario.patterns()?,
        pathloss: scenario.pathloss(),
        cfg: scenario.init_config(),
        hash: scenario.config_hash(),
    })
}

fn compute_drop(ctx: &RunContext, seed: u64) -> Result<(CtfTensor, CtfTensor, f64)> {
    let drop = initialize_drop(&ctx.cfg, &ctx.link, &ctx.pathloss, seed)?;
    let real = realize_grid(&drop, &ctx.grid, &ctx.link, &ctx.pathloss)?;
    let parts =
        ctf_tensor_parts_seq(&real, &ctx.link, &ctx.patterns, &ctx.pathloss, &ctx.offsets)?;
    Ok((parts.total, parts.los, ricean_k(&drop)))
}

fn drop_file_names(index: usize) -> (String, String, String) {
    (
        format!("ctf/drop_{index:05}.ctft"),
        format!("ctf/drop_{index:05}.los.ctft"),
        format!("ctf/drop_{index:05}.json"),
    )
}

/// Load a drop from disk when its sidecar matches this run, otherwise
/// compute it (and persist it when `save_dir` is set).
fn obtain_drop(
    ctx: &RunContext,
    out_dir: Option<&Path>,
    index: usize,
    seed: u64,
) -> Result<(CtfTensor, CtfTensor, f64)> {
    let (total_rel, los_rel, sidecar_rel) = drop_file_names(index);
    if let Some(dir) = out_dir {
        let sidecar_path = dir.join(&sidecar_rel);
        if sidecar_path.exists() {
            if let Ok(sidecar) = read_sidecar(&sidecar_path) {
                if sidecar.config_hash == ctx.hash
                    && sidecar.seed == seed
                    && sidecar.drop_index == index as u64
                {
                    let total = read_tensor(&dir.join(&total_rel))?;
                    let los = read_tensor(&dir.join(&los_rel))?;
                    let k = sidecar_k(&sidecar);
                    return Ok((total, los, k));
                }
            }
        }
    }
    let (total, los, k) = compute_drop(ctx, seed)?;
    if let Some(dir) = out_dir {
        write_tensor(&dir.join(&total_rel), &total)?;
        write_tensor(&dir.join(&los_rel), &los)?;
        write_sidecar(
            &dir.join(&sidecar_rel),
            &TensorSidecar {
                config_hash: ctx.hash.clone(),
                seed,
                drop_index: index as u64,
                dims: total.dims(),
            },
        )?;
        write_k_file(&dir.join(format!("ctf/drop_{index:05}.k")), k)?;
    }
    Ok((total, los, k))
}

// The sidecar schema stays minimal; the Ricean factor rides in a tiny
// companion file so resumed runs can rebuild DropSet without re-deriving
// the drop.
fn write_k_file(path: &Path, k: f64) -> Result<()> {
    std::fs::write(path, format!("{k}\n"))?;
    Ok(())
}

fn sidecar_k(sidecar: &TensorSidecar) -> f64 {
    // Present only for resumed drops written by this crate.
    let _ = sidecar;
    f64::NAN
}

fn read_k_file(path: &Path) -> Option<f64> {
    std::fs::read_to_string(path).ok()?.trim().parse().ok()
}

/// Generate (or load) an ensemble of drops for the given seeds.
fn generate_ensemble(
    ctx: &RunContext,
    out_dir: Option<&Path>,
    seeds: &[u64],
) -> (Vec<Result<(CtfTensor, CtfTensor, f64)>>, usize) {
    #[cfg(feature = "parallel")]
    let results: Vec<Result<(CtfTensor, CtfTensor, f64)>> = seeds
        .par_iter()
        .enumerate()
        .map(|(i, &seed)| obtain_drop(ctx, out_dir, i, seed))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<(CtfTensor, CtfTensor, f64)>> = seeds
        .iter()
        .enumerate()
        .map(|(i, &seed)| obtain_drop(ctx, out_dir, i, seed))
        .collect();
    let completed = results.iter().filter(|r| r.is_ok()).count();
    (results, completed)
}

/// Compute a scenario's drop ensemble in memory, without touching the
/// filesystem. Drop i is seeded exactly as in [`run_montecarlo`].
pub fn generate_drop_set(scenario: &Scenario) -> Result<DropSet> {
    scenario.validate()?;
    let ctx = build_context(scenario)?;
    let seeds: Vec<u64> =
        (0..scenario.ensemble).map(|i| drop_seed(scenario.seed, i as u64)).collect();
    let (results, _) = generate_ensemble(&ctx, None, &seeds);
    let mut set = DropSet {
        totals: Vec::with_capacity(results.len()),
        los: Vec::with_capacity(results.len()),
        k_factors: Vec::with_capacity(results.len()),
    };
    for r in results {
        let (total, los, k) = r?;
        set.totals.push(total);
        set.los.push(los);
        set.k_factors.push(k);
    }
    Ok(set)
}

fn csv_row_complex(lag: f64, v: num_complex::Complex64) -> String {
    format!("{lag},{},{},{}", v.re, v.im, v.norm())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

#[derive(Serialize)]
struct StatMeta<'a> {
    stat: &'a str,
    config_hash: &'a str,
    seed: u64,
    ensemble: usize,
    drop_seeds: &'a [u64],
    params: serde_json::Value,
}

fn write_stat(
    out_dir: &Path,
    rel_csv: &str,
    header: &str,
    rows: &[String],
    meta: &StatMeta<'_>,
) -> Result<String> {
    let mut text = String::with_capacity(rows.len() * 32 + header.len() + 1);
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    write_text(&out_dir.join(rel_csv), &text)?;
    let json_rel = rel_csv.replace(".csv", ".json");
    write_text(&out_dir.join(&json_rel), &serde_json::to_string_pretty(meta)?)?;
    Ok(rel_csv.to_string())
}

fn axis_position(axis: &[f64], value: f64, field: &str) -> Result<usize> {
    axis.iter().position(|&v| v == value).ok_or_else(|| ChannelError::InvalidField {
        field: field.to_string(),
        message: format!("value {value} is not on the evaluated grid axis"),
    })
}

/// Execute a scenario end to end. Returns the manifest; on a drop failure a
/// partial manifest (recording the completed drops) is written before the
/// error propagates.
pub fn run_montecarlo(scenario: &Scenario) -> Result<RunManifest> {
    let started = Instant::now();
    scenario.validate()?;
    scenario.check_memory_budget()?;
    let ctx = build_context(scenario)?;

    let out_dir = scenario.out_dir.clone();
    std::fs::create_dir_all(out_dir.join("stats"))?;
    if scenario.save_ctf {
        std::fs::create_dir_all(out_dir.join("ctf"))?;
    }
    write_text(&out_dir.join("scenario.conf"), &scenario.to_config_string())?;

    let seeds: Vec<u64> = (0..scenario.ensemble).map(|i| drop_seed(scenario.seed, i as u64)).collect();
    let save_dir = scenario.save_ctf.then_some(out_dir.as_path());
    let (results, completed) = generate_ensemble(&ctx, save_dir, &seeds);

    let mut manifest = RunManifest {
        config_hash: ctx.hash.clone(),
        seed: scenario.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        ensemble: scenario.ensemble,
        completed_drops: completed,
        drop_seeds: seeds.clone(),
        drop_outputs: if scenario.save_ctf {
            (0..completed).map(|i| drop_file_names(i).0).collect()
        } else {
            Vec::new()
        },
        stat_files: Vec::new(),
        elapsed_seconds: 0.0,
    };

    let mut set = DropSet {
        totals: Vec::with_capacity(results.len()),
        los: Vec::with_capacity(results.len()),
        k_factors: Vec::with_capacity(results.len()),
    };
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok((total, los, mut k)) => {
                if k.is_nan() {
                    if let Some(dir) = save_dir {
                        k = read_k_file(&dir.join(format!("ctf/drop_{i:05}.k")))
                            .unwrap_or(f64::NAN);
                    }
                }
                set.totals.push(total);
                set.los.push(los);
                set.k_factors.push(k);
            }
            Err(e) => {
                // Partial run: record what completed, then fail.
                manifest.elapsed_seconds = started.elapsed().as_secs_f64();
                let _ = write_text(
                    &out_dir.join("manifest.json"),
                    &serde_json::to_string_pretty(&manifest)?,
                );
                return Err(e);
            }
        }
    }

    for stat in &scenario.stats {
        let files = match stat {
            StatKind::Acf => stat_acf(scenario, &ctx, &set, &seeds, &out_dir)?,
            StatKind::Ccf => stat_ccf(scenario, &ctx, &set, &seeds, &out_dir)?,
            StatKind::Fcf => stat_fcf(scenario, &ctx, &set, &seeds, &out_dir)?,
            StatKind::DelayPsd => stat_psd(scenario, &ctx, &set, &seeds, &out_dir)?,
            StatKind::RiceanK => stat_k(scenario, &ctx, &set, &seeds, &out_dir)?,
            StatKind::StationaryCcdf => stat_stationary(scenario, &ctx, &out_dir)?,
        };
        manifest.stat_files.extend(files);
    }

    manifest.elapsed_seconds = started.elapsed().as_secs_f64();
    write_text(&out_dir.join("manifest.json"), &serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

fn stat_acf(
    scenario: &Scenario,
    ctx: &RunContext,
    set: &DropSet,
    seeds: &[u64],
    out_dir: &Path,
) -> Result<Vec<String>> {
    let mut files = Vec::new();
    let times = &ctx.grid.time_points_s;
    for &tb in &scenario.acf_base_times_s {
        let ti = axis_position(times, tb, "acf_base_times_s")?;
        let mut steps = Vec::with_capacity(scenario.acf_lag_count);
        for k in 0..scenario.acf_lag_count {
            let target = tb + k as f64 * scenario.acf_lag_step_s;
            steps.push(axis_position(times, target, "acf_lag_step_s")? - ti);
        }
        let base = TensorIndex { p: 0, q: 0, t: ti, c: 0, f: 0 };
        let curve = acf(&set.totals, base, &steps)?;
        let rows: Vec<String> = curve
            .lags
            .iter()
            .zip(&curve.values)
            .map(|(&lag, &v)| csv_row_complex(lag, v))
            .collect();
        let meta = StatMeta {
            stat: "acf",
            config_hash: &ctx.hash,
            seed: scenario.seed,
            ensemble: scenario.ensemble,
            drop_seeds: seeds,
            params: serde_json::json!({
                "base_time_s": tb,
                "carrier_hz": ctx.grid.carriers_hz[0],
                "lag_step_s": scenario.acf_lag_step_s,
            }),
        };
        files.push(write_stat(
            out_dir,
            &format!("stats/acf_t{tb}s.csv"),
            "lag_s,re,im,mag",
            &rows,
            &meta,
        )?);
    }
    Ok(files)
}

fn stat_ccf(
    scenario: &Scenario,
    ctx: &RunContext,
    set: &DropSet,
    seeds: &[u64],
    out_dir: &Path,
) -> Result<Vec<String>> {
    let mut files = Vec::new();
    for &base_rx in &scenario.ccf_base_rx {
        let qi = ctx
            .grid
            .rx_elements
            .iter()
            .position(|&q| q == base_rx)
            .ok_or_else(|| ChannelError::InvalidField {
                field: "ccf_base_rx".into(),
                message: format!("element {base_rx} is not on the evaluated Rx grid"),
            })?;
        let dq_steps: Vec<isize> =
            (0..ctx.grid.rx_elements.len()).map(|k| k as isize - qi as isize).collect();
        let base = TensorIndex { p: 0, q: qi, t: 0, c: 0, f: 0 };
        let grid_ccf = ccf(&set.totals, base, &[0], &dq_steps)?;
        let rows: Vec<String> = dq_steps
            .iter()
            .enumerate()
            .map(|(k, &dq)| {
                let spacing = dq as f64 * scenario.element_spacing_m;
                let v = grid_ccf.at(0, k);
                format!("{dq},{spacing},{},{},{}", v.re, v.im, v.norm())
            })
            .collect();
        let meta = StatMeta {
            stat: "ccf",
            config_hash: &ctx.hash,
            seed: scenario.seed,
            ensemble: scenario.ensemble,
            drop_seeds: seeds,
            params: serde_json::json!({
                "base_rx_element": base_rx,
                "element_spacing_m": scenario.element_spacing_m,
                "carrier_hz": ctx.grid.carriers_hz[0],
            }),
        };
        files.push(write_stat(
            out_dir,
            &format!("stats/ccf_rx{base_rx}.csv"),
            "dq,spacing_m,re,im,mag",
            &rows,
            &meta,
        )?);
    }
    Ok(files)
}

fn stat_fcf(
    scenario: &Scenario,
    ctx: &RunContext,
    set: &DropSet,
    seeds: &[u64],
    out_dir: &Path,
) -> Result<Vec<String>> {
    let mut files = Vec::new();
    let nf = ctx.offsets.len();
    for &carrier_ghz in &scenario.carriers_ghz {
        let ci = axis_position(&ctx.grid.carriers_hz, carrier_ghz * 1e9, "carriers_ghz")?;
        let base = TensorIndex { p: 0, q: 0, t: 0, c: ci, f: 0 };
        let steps: Vec<usize> = (0..nf).collect();
        let curve = fcf(&set.totals, base, &steps)?;
        let rows: Vec<String> = curve
            .lags
            .iter()
            .zip(&curve.values)
            .map(|(&lag, &v)| csv_row_complex(lag, v))
            .collect();
        let meta = StatMeta {
            stat: "fcf",
            config_hash: &ctx.hash,
            seed: scenario.seed,
            ensemble: scenario.ensemble,
            drop_seeds: seeds,
            params: serde_json::json!({ "carrier_hz": carrier_ghz * 1e9 }),
        };
        files.push(write_stat(
            out_dir,
            &format!("stats/fcf_{carrier_ghz}ghz.csv"),
            "df_hz,re,im,mag",
            &rows,
            &meta,
        )?);
    }
    Ok(files)
}

fn stat_psd(
    scenario: &Scenario,
    ctx: &RunContext,
    set: &DropSet,
    seeds: &[u64],
    out_dir: &Path,
) -> Result<Vec<String>> {
    // Delay PSD of the first drop at the base cell: analytic per-path route
    // plus the inverse-DFT route over the comb.
    let mut files = Vec::new();
    let drop = initialize_drop(&ctx.cfg, &ctx.link, &ctx.pathloss, seeds[0])?;
    let real = realize_grid(&drop, &ctx.grid, &ctx.link, &ctx.pathloss)?;
    let cir = crate::ctf::cell_cir(&real, 0, 0, 0, 0, &ctx.link, &ctx.patterns, &ctx.pathloss)?;
    let analytic = delay_psd(&cir, scenario.psd_bin_width_ns * 1e-9)?;
    let rows: Vec<String> = analytic
        .delay_bins_s
        .iter()
        .zip(&analytic.power)
        .map(|(&d, &p)| format!("{d},{p}"))
        .collect();
    let meta = StatMeta {
        stat: "psd",
        config_hash: &ctx.hash,
        seed: scenario.seed,
        ensemble: scenario.ensemble,
        drop_seeds: seeds,
        params: serde_json::json!({
            "bin_width_s": scenario.psd_bin_width_ns * 1e-9,
            "total_power": analytic.total_power(),
            "route": "per-path",
        }),
    };
    files.push(write_stat(out_dir, "stats/psd.csv", "delay_s,power", &rows, &meta)?);

    let from_ctf = delay_psd_from_ctf(&set.totals[0], 0, 0, 0, 0)?;
    let rows: Vec<String> = from_ctf
        .delay_bins_s
        .iter()
        .zip(&from_ctf.power)
        .map(|(&d, &p)| format!("{d},{p}"))
        .collect();
    let meta = StatMeta {
        stat: "psd",
        config_hash: &ctx.hash,
        seed: scenario.seed,
        ensemble: scenario.ensemble,
        drop_seeds: seeds,
        params: serde_json::json!({
            "total_power": from_ctf.total_power(),
            "mean_ctf_power": mean_power_over_comb(&set.totals[0], 0, 0, 0, 0),
            "route": "inverse-dft",
        }),
    };
    files.push(write_stat(out_dir, "stats/psd_ctf.csv", "delay_s,power", &rows, &meta)?);
    Ok(files)
}

fn stat_k(
    scenario: &Scenario,
    ctx: &RunContext,
    set: &DropSet,
    seeds: &[u64],
    out_dir: &Path,
) -> Result<Vec<String>> {
    let rows: Vec<String> =
        set.k_factors.iter().enumerate().map(|(i, k)| format!("{i},{k}")).collect();
    let base = TensorIndex { p: 0, q: 0, t: 0, c: 0, f: 0 };
    let tensor_estimate = ricean_k_from_tensors(&set.los, &set.totals, base)?;
    let finite: Vec<f64> = set.k_factors.iter().copied().filter(|k| k.is_finite()).collect();
    let mean = if finite.is_empty() {
        f64::INFINITY
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    };
    let meta = StatMeta {
        stat: "k",
        config_hash: &ctx.hash,
        seed: scenario.seed,
        ensemble: scenario.ensemble,
        drop_seeds: seeds,
        params: serde_json::json!({
            "mean_drop_k": mean,
            "tensor_estimate_at_base": tensor_estimate,
        }),
    };
    Ok(vec![write_stat(out_dir, "stats/ricean_k.csv", "drop,k", &rows, &meta)?])
}

fn stat_stationary(scenario: &Scenario, ctx: &RunContext, out_dir: &Path) -> Result<Vec<String>> {
    let domain = match scenario.si_domain {
        SiDomain::Frequency => StationaryDomain::Frequency,
        SiDomain::Time => StationaryDomain::Time,
        SiDomain::SpaceTx => StationaryDomain::SpaceTx,
        SiDomain::SpaceRx => StationaryDomain::SpaceRx,
    };
    let bases: Vec<(f64, usize)> = scenario
        .carriers_ghz
        .iter()
        .map(|&g| Ok((g, axis_position(&ctx.grid.carriers_hz, g * 1e9, "carriers_ghz")?)))
        .collect::<Result<_>>()?;

    // One interval sample per (run, base carrier); each run has its own
    // independently seeded drop ensemble.
    let run_indices: Vec<u64> = (0..scenario.si_runs as u64).collect();
    let per_run = |&run: &u64| -> Result<Vec<f64>> {
        let mut totals = Vec::with_capacity(scenario.si_drops_per_run);
        for d in 0..scenario.si_drops_per_run as u64 {
            let seed = stream_seed(scenario.seed, &[SI_STREAM, run, d]);
            let (total, _, _) = compute_drop(ctx, seed)?;
            totals.push(total);
        }
        bases
            .iter()
            .map(|&(_, ci)| {
                let base = TensorIndex { p: 0, q: 0, t: 0, c: ci, f: 0 };
                Ok(stationary_interval(&totals, base, domain, scenario.si_cth)?.interval)
            })
            .collect()
    };
    #[cfg(feature = "parallel")]
    let per_run_samples: Result<Vec<Vec<f64>>> = run_indices.par_iter().map(per_run).collect();
    #[cfg(not(feature = "parallel"))]
    let per_run_samples: Result<Vec<Vec<f64>>> = run_indices.iter().map(per_run).collect();
    let per_run_samples = per_run_samples?;

    let mut files = Vec::new();
    for (bi, &(ghz, _)) in bases.iter().enumerate() {
        let samples: Vec<f64> = per_run_samples.iter().map(|run| run[bi]).collect();
        let curve = ccdf(&samples);
        let rows: Vec<String> = curve.iter().map(|&(v, p)| format!("{v},{p}")).collect();
        let median = median_of(&samples);
        let meta = StatMeta {
            stat: "stationary-ccdf",
            config_hash: &ctx.hash,
            seed: scenario.seed,
            ensemble: scenario.si_drops_per_run,
            drop_seeds: &[],
            params: serde_json::json!({
                "carrier_ghz": ghz,
                "domain": scenario.si_domain.name(),
                "threshold": scenario.si_cth,
                "runs": scenario.si_runs,
                "median_interval": median,
            }),
        };
        files.push(write_stat(
            out_dir,
            &format!("stats/si_ccdf_{ghz}ghz.csv"),
            "interval,ccdf",
            &rows,
            &meta,
        )?);
    }
    Ok(files)
}

/// Median of a sample set (average of middle pair for even sizes).
pub fn median_of(samples: &[f64]) -> f64 {
    let mut v = samples.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Named figure-reproduction recipes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureName {
    Fig4Acf,
    Fig5Ccf,
    Fig6Fcf,
    Fig7Ccdf,
}

impl FigureName {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "fig4-acf" => Some(FigureName::Fig4Acf),
            "fig5-ccf" => Some(FigureName::Fig5Ccf),
            "fig6-fcf" => Some(FigureName::Fig6Fcf),
            "fig7-ccdf" => Some(FigureName::Fig7Ccdf),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FigureName::Fig4Acf => "fig4-acf",
            FigureName::Fig5Ccf => "fig5-ccf",
            FigureName::Fig6Fcf => "fig6-fcf",
            FigureName::Fig7Ccdf => "fig7-ccdf",
        }
    }
}

/// Desk-scale scenario preset for a figure: the reference indoor setup
/// (3 m link, 0.1 m/s Rx at pi/3, 300 GHz anchor, M = 100 rays, 16-element
/// arrays standing in for the full-scale ones) with the grid and statistics
/// of the figure.
pub fn figure_scenario(name: FigureName, seed: u64) -> Scenario {
    let mut s = Scenario { seed, ..Scenario::default() };
    s.mea_angles = true;
    match name {
        FigureName::Fig4Acf => {
            s.stats = vec![StatKind::Acf];
            s.acf_base_times_s = vec![0.0, 5.0, 10.0];
            s.acf_lag_step_s = 0.005;
            s.acf_lag_count = 21;
            s.carriers_ghz = vec![300.0];
            s.out_dir = PathBuf::from("out/fig4-acf");
        }
        FigureName::Fig5Ccf => {
            s.stats = vec![StatKind::Ccf];
            // Full-scale bases are the first and the 1000th Rx element; at
            // desk scale the two extreme available elements stand in.
            s.ccf_base_rx = vec![1, 16];
            s.grid_rx_elements = (1..=16).collect();
            s.out_dir = PathBuf::from("out/fig5-ccf");
        }
        FigureName::Fig6Fcf => {
            s.stats = vec![StatKind::Fcf];
            s.carriers_ghz = vec![300.0, 325.0, 350.0];
            s.f_comb_points = 256;
            s.f_comb_span_ghz = 2.0;
            s.out_dir = PathBuf::from("out/fig6-fcf");
        }
        FigureName::Fig7Ccdf => {
            s.stats = vec![StatKind::StationaryCcdf];
            s.carriers_ghz = vec![300.0, 325.0, 350.0];
            s.si_runs = 100;
            s.si_drops_per_run = 16;
            s.si_cth = 0.9;
            s.si_step_ghz = 0.25;
            s.si_steps = 40;
            // The interval statistic watches Rx-side covariance matrices;
            // give the Rx array a component along the link axis so the LOS
            // steering participates.
            s.rx_axis = crate::geometry::Vec3::new(1.0, 1.0, 0.0);
            s.grid_rx_elements = (1..=16).collect();
            s.ensemble = 4;
            s.out_dir = PathBuf::from("out/fig7-ccdf");
        }
    }
    s
}

/// Run a figure recipe.
pub fn reproduce_figure(name: FigureName, scenario: &Scenario) -> Result<RunManifest> {
    run_montecarlo(scenario).map(|m| {
        let _ = name;
        m
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_scenario(dir: &Path) -> Scenario {
        let mut s = figure_scenario(FigureName::Fig4Acf, 11);
        s.ensemble = 4;
        s.rays_per_cluster = 6;
        s.acf_lag_count = 3;
        s.acf_base_times_s = vec![0.0];
        s.out_dir = dir.to_path_buf();
        s
    }

    #[test]
    fn smallest_run_writes_one_acf() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = tiny_scenario(dir.path());
        s.ensemble = 1;
        let manifest = run_montecarlo(&s).unwrap();
        assert_eq!(manifest.completed_drops, 1);
        assert_eq!(manifest.stat_files, vec!["stats/acf_t0s.csv".to_string()]);
        assert!(dir.path().join("stats/acf_t0s.csv").exists());
        assert!(dir.path().join("stats/acf_t0s.json").exists());
        assert!(dir.path().join("manifest.json").exists());
    }

    #[test]
    fn identical_seeds_give_byte_identical_stats() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let a = tiny_scenario(dir_a.path());
        let b = tiny_scenario(dir_b.path());
        run_montecarlo(&a).unwrap();
        run_montecarlo(&b).unwrap();
        let fa = std::fs::read(dir_a.path().join("stats/acf_t0s.csv")).unwrap();
        let fb = std::fs::read(dir_b.path().join("stats/acf_t0s.csv")).unwrap();
        assert_eq!(fa, fb);
    }

    #[test]
    fn save_ctf_round_trips_and_resumes() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = tiny_scenario(dir.path());
        s.ensemble = 2;
        s.save_ctf = true;
        let first = run_montecarlo(&s).unwrap();
        assert_eq!(first.drop_outputs.len(), 2);
        let tensor_path = dir.path().join("ctf/drop_00000.ctft");
        let mtime = std::fs::metadata(&tensor_path).unwrap().modified().unwrap();
        // Second run resumes from the stored tensors (files untouched).
        let second = run_montecarlo(&s).unwrap();
        assert_eq!(second.completed_drops, 2);
        assert_eq!(std::fs::metadata(&tensor_path).unwrap().modified().unwrap(), mtime);
        let fa = std::fs::read(dir.path().join("stats/acf_t0s.csv")).unwrap();
        assert!(!fa.is_empty());
    }

    #[test]
    fn figure_names_parse() {
        assert_eq!(FigureName::parse("fig6-fcf"), Some(FigureName::Fig6Fcf));
        assert_eq!(FigureName::parse("nope"), None);
        for n in [
            FigureName::Fig4Acf,
            FigureName::Fig5Ccf,
            FigureName::Fig6Fcf,
            FigureName::Fig7Ccdf,
        ] {
            assert_eq!(FigureName::parse(n.name()), Some(n));
        }
    }

    #[test]
    fn figure_presets_validate() {
        for n in [
            FigureName::Fig4Acf,
            FigureName::Fig5Ccf,
            FigureName::Fig6Fcf,
            FigureName::Fig7Ccdf,
        ] {
            figure_scenario(n, 1).validate().unwrap();
        }
    }

    #[test]
    fn median_helper() {
        assert_eq!(median_of(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median_of(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
