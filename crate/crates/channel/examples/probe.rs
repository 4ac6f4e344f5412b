//! Scratch probe for calibrating figure presets (not part of the test
//! suite). Prints the margins the acceptance criteria depend on.

use thz_channel::montecarlo::{figure_scenario, generate_drop_set, median_of, FigureName};
use thz_channel::scenario::Scenario;
use thz_channel::stats::{acf, fcf, stationary_interval, StationaryDomain, TensorIndex};

fn acf_probe() {
    let mut s = figure_scenario(FigureName::Fig4Acf, 1);
    s.ensemble = 100;
    let set = generate_drop_set(&s).unwrap();
    let grid = s.effective_grid().unwrap();
    let times = &grid.time_points_s;
    let mut curves = Vec::new();
    for &tb in &[0.0, 5.0, 10.0] {
        let ti = times.iter().position(|&t| t == tb).unwrap();
        let steps: Vec<usize> = (0..s.acf_lag_count)
            .map(|k| {
                times.iter().position(|&t| t == tb + k as f64 * s.acf_lag_step_s).unwrap() - ti
            })
            .collect();
        let base = TensorIndex { p: 0, q: 0, t: ti, c: 0, f: 0 };
        curves.push(acf(&set.totals, base, &steps).unwrap());
    }
    for i in 0..3 {
        for j in i + 1..3 {
            let max_abs = curves[i]
                .values
                .iter()
                .zip(&curves[j].values)
                .map(|(a, b)| (a.norm() - b.norm()).abs())
                .fold(0.0f64, f64::max);
            println!("ACF pair ({i},{j}) max |mag diff| = {max_abs:.4}");
        }
    }
    let mags: Vec<String> =
        curves[0].values.iter().map(|v| format!("{:.3}", v.norm())).collect();
    println!("ACF t0 magnitudes: {}", mags.join(" "));
}

fn acf_ref_probe() {
    // RMSE between M = 100 and M = 2000 with identical cluster-level seeds.
    let mut sim = figure_scenario(FigureName::Fig4Acf, 1);
    sim.ensemble = 100;
    sim.acf_base_times_s = vec![0.0];
    let mut reference = sim.clone();
    reference.rays_per_cluster = 2000;

    let rmse = acf_rmse(&sim, &reference);
    println!("ACF RMSE sim(M=100) vs ref(M=2000) = {rmse:.5}");
}

fn acf_rmse(a: &Scenario, b: &Scenario) -> f64 {
    let curve = |s: &Scenario| {
        let set = generate_drop_set(s).unwrap();
        let grid = s.effective_grid().unwrap();
        let steps: Vec<usize> = (0..s.acf_lag_count).collect();
        let _ = &grid;
        let base = TensorIndex { p: 0, q: 0, t: 0, c: 0, f: 0 };
        acf(&set.totals, base, &steps).unwrap()
    };
    let ca = curve(a);
    let cb = curve(b);
    let se: f64 = ca.values.iter().zip(&cb.values).map(|(x, y)| (x - y).norm_sqr()).sum();
    let se_mag: f64 = ca
        .values
        .iter()
        .zip(&cb.values)
        .map(|(x, y)| (x.norm() - y.norm()).powi(2))
        .sum();
    println!(
        "ACF RMSE complex = {:.5}, magnitude = {:.5}",
        (se / ca.values.len() as f64).sqrt(),
        (se_mag / ca.values.len() as f64).sqrt()
    );
    (se_mag / ca.values.len() as f64).sqrt()
}

fn fcf_probe() {
    let mut s = figure_scenario(FigureName::Fig6Fcf, 1);
    s.ensemble = 100;
    let set = generate_drop_set(&s).unwrap();
    let grid = s.effective_grid().unwrap();
    let nf = s.f_offsets_hz().len();
    let steps: Vec<usize> = (0..nf).collect();
    let mut curves = Vec::new();
    for &g in &[300.0, 325.0, 350.0] {
        let ci = grid.carriers_hz.iter().position(|&f| f == g * 1e9).unwrap();
        let base = TensorIndex { p: 0, q: 0, t: 0, c: ci, f: 0 };
        curves.push(fcf(&set.totals, base, &steps).unwrap());
    }
    for c in &curves {
        println!(
            "FCF at zero lag: {:.9}; |FCF| at 0.5/1/2 GHz: {:.4} {:.4} {:.4}",
            c.values[0].re,
            c.values[nf * 64 / 256].norm(),
            c.values[nf / 2].norm(),
            c.values[nf - 1].norm()
        );
    }
    for i in 0..3 {
        for j in i + 1..3 {
            let max_abs = curves[i]
                .values
                .iter()
                .zip(&curves[j].values)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0f64, f64::max);
            println!("FCF pair ({i},{j}) max-abs diff = {max_abs:.5}");
        }
    }
}

fn si_probe(
    runs: usize,
    drops: usize,
    spacing_scale: f64,
    step_ghz: f64,
    steps: usize,
    domain: StationaryDomain,
    comb_points: usize,
    comb_span_ghz: f64,
) {
    let mut s = figure_scenario(FigureName::Fig7Ccdf, 1);
    s.si_runs = runs;
    s.si_drops_per_run = drops;
    s.element_spacing_m *= spacing_scale;
    s.si_step_ghz = step_ghz;
    s.si_steps = steps;
    if comb_points > 1 {
        s.f_comb_points = comb_points;
        s.f_comb_span_ghz = comb_span_ghz;
        s.grid_rx_elements = vec![1];
    }
    if let Ok(xpr) = std::env::var("PROBE_XPR_DB") {
        s.xpr_mean_db = xpr.parse().unwrap();
        s.xpr_std_db = 0.0;
    }
    if let Ok(mu) = std::env::var("PROBE_MU_NS") {
        s.mu_ray_delay_f0_ns = mu.parse().unwrap();
    }
    if let Ok(m) = std::env::var("PROBE_RAYS") {
        s.rays_per_cluster = m.parse().unwrap();
    }
    let grid = s.effective_grid().unwrap();

    let bases: Vec<usize> = [300.0, 325.0, 350.0]
        .iter()
        .map(|&g| grid.carriers_hz.iter().position(|&f| f == g * 1e9).unwrap())
        .collect();

    let mut samples = vec![Vec::new(); 3];
    let started = std::time::Instant::now();
    for run in 0..runs {
        let mut per_run = Scenario { ensemble: drops, ..s.clone() };
        per_run.seed = 10_000 + run as u64;
        per_run.stats.clear(); // plain ensemble on the expanded grid
        per_run.carriers_ghz = grid.carriers_hz.iter().map(|&f| f / 1e9).collect();
        per_run.si_steps = 0;
        per_run.stats = vec![];
        let set = generate_drop_set(&per_run).unwrap();
        // NLOS component: total minus LOS, entrywise.
        let nlos: Vec<_> = set
            .totals
            .iter()
            .zip(&set.los)
            .map(|(t, l)| {
                let mut out = t.clone();
                for (v, lv) in out.values.iter_mut().zip(&l.values) {
                    *v -= lv;
                }
                out
            })
            .collect();
        let walk = if std::env::var("PROBE_NLOS").is_ok() { &nlos } else { &set.totals };
        for (bi, &ci) in bases.iter().enumerate() {
            let base_ghz = [300.0, 325.0, 350.0][bi];
            let positions: Vec<usize> = (0..=steps)
                .filter_map(|k| {
                    let f = (base_ghz + k as f64 * step_ghz) * 1e9;
                    grid.carriers_hz.iter().position(|&c| c == f)
                })
                .collect();
            assert_eq!(positions[0], ci);
            let base = TensorIndex { p: 0, q: 0, t: 0, c: ci, f: 0 };
            if run == 0 && std::env::var("PROBE_DUMP").is_ok() {
                use thz_channel::stats::{cmd_similarity, comb_correlation_toeplitz, rx_covariance};
                let r0 = match domain {
                    StationaryDomain::Frequency => {
                        comb_correlation_toeplitz(&walk[0], 0, 0, 0, ci).unwrap()
                    }
                    _ => rx_covariance(walk, 0, 0, ci, 0).unwrap(),
                };
                let sims: Vec<String> = positions[1..]
                    .iter()
                    .step_by(3)
                    .take(12)
                    .map(|&p| {
                        let r = match domain {
                            StationaryDomain::Frequency => {
                                comb_correlation_toeplitz(&walk[0], 0, 0, 0, p).unwrap()
                            }
                            _ => rx_covariance(walk, 0, 0, p, 0).unwrap(),
                        };
                        format!("{:.4}", cmd_similarity(&r0, &r).unwrap())
                    })
                    .collect();
                println!("  sims from {base_ghz} (every 3rd): {}", sims.join(" "));
            }
            let sample =
                thz_channel::stats::stationary_interval_along(walk, base, domain, 0.9, &positions)
                    .unwrap();
            samples[bi].push(sample.interval / 1e9);
        }
    }
    println!(
        "SI probe {domain:?} spacing x{spacing_scale}, step {step_ghz} GHz, {steps} steps, comb {comb_points}x{comb_span_ghz} GHz, {} runs x {} drops ({:.1} s):",
        runs,
        drops,
        started.elapsed().as_secs_f64()
    );
    for (bi, g) in [300.0, 325.0, 350.0].iter().enumerate() {
        let med = median_of(&samples[bi]);
        let min = samples[bi].iter().cloned().fold(f64::INFINITY, f64::min);
        let max = samples[bi].iter().cloned().fold(0.0f64, f64::max);
        println!("  {g} GHz: median {med:.3} GHz (min {min:.3}, max {max:.3})");
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(String::as_str).unwrap_or("all");
    if which == "acf" || which == "all" {
        acf_probe();
        acf_ref_probe();
    }
    if which == "fcf" || which == "all" {
        fcf_probe();
    }
    if which == "si" || which == "all" {
        let runs: usize = args.get(2).and_then(|v| v.parse().ok()).unwrap_or(20);
        let drops: usize = args.get(3).and_then(|v| v.parse().ok()).unwrap_or(12);
        let scale: f64 = args.get(4).and_then(|v| v.parse().ok()).unwrap_or(1.0);
        let step: f64 = args.get(5).and_then(|v| v.parse().ok()).unwrap_or(0.25);
        let steps: usize = args.get(6).and_then(|v| v.parse().ok()).unwrap_or(40);
        let domain = match args.get(7).map(String::as_str).unwrap_or("comb") {
            "spatial" => StationaryDomain::FrequencySpatial,
            _ => StationaryDomain::Frequency,
        };
        let comb_points: usize = args.get(8).and_then(|v| v.parse().ok()).unwrap_or(32);
        let comb_span: f64 = args.get(9).and_then(|v| v.parse().ok()).unwrap_or(1.0);
        si_probe(runs, drops, scale, step, steps, domain, comb_points, comb_span);
    }
}
