//! Statistical properties of generated channels.
//!
//! Correlation statistics are ensemble estimators over independently seeded
//! drops: the space-time-frequency correlation is the drop average of
//! `H(base) * conj(H(shifted))`, optionally normalized by the zero-lag powers
//! of both points, and ACF / CCF / FCF pin all but one shift component to
//! zero. The delay PSD comes either from an analytic impulse response
//! (exact per-path bookkeeping) or from the inverse DFT of the CTF over the
//! intra-band comb (whose total power equals the mean squared CTF by
//! Parseval). Stationarity is measured with the correlation-matrix
//! similarity tr(R1 R2) / (|R1| |R2|) between spatial covariance matrices at
//! two grid points; the stationary interval is the largest shift keeping the
//! similarity above a threshold.

use crate::ctf::CtfTensor;
use crate::error::ChannelError;
use crate::init::ChannelRealization;
use crate::Result;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Power versus propagation delay, binned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayPsd {
    /// Bin centers (s), ascending; only occupied bins are kept.
    pub delay_bins_s: Vec<f64>,
    /// Linear power per bin.
    pub power: Vec<f64>,
}

impl DelayPsd {
    pub fn total_power(&self) -> f64 {
        self.power.iter().sum()
    }
}

/// Bin squared magnitudes of impulse-response taps by delay. Total power is
/// preserved exactly regardless of the bin width.
pub fn delay_psd(cir: &[(f64, Complex64)], bin_width_s: f64) -> Result<DelayPsd> {
    if !(bin_width_s > 0.0) {
        return Err(ChannelError::InvalidConfig(format!(
            "bin width must be positive, got {bin_width_s}"
        )));
    }
    if cir.iter().any(|&(tau, _)| tau < 0.0) {
        return Err(ChannelError::InvalidConfig("negative delay in CIR".into()));
    }
    let mut bins: std::collections::BTreeMap<u64, f64> = std::collections::BTreeMap::new();
    for &(tau, amp) in cir {
        let idx = (tau / bin_width_s).floor() as u64;
        *bins.entry(idx).or_insert(0.0) += amp.norm_sqr();
    }
    Ok(DelayPsd {
        delay_bins_s: bins.keys().map(|&i| (i as f64 + 0.5) * bin_width_s).collect(),
        power: bins.values().copied().collect(),
    })
}

/// Delay PSD from the CTF over a uniformly spaced intra-band comb: the
/// squared magnitudes of the inverse DFT of the comb samples, with delay
/// bins m / (N * df). By Parseval the total equals the mean squared CTF
/// over the comb.
pub fn delay_psd_from_ctf(
    tensor: &CtfTensor,
    pi: usize,
    qi: usize,
    ti: usize,
    ci: usize,
) -> Result<DelayPsd> {
    let n = tensor.f_offsets_hz.len();
    if n < 2 {
        return Err(ChannelError::InvalidConfig(
            "delay PSD from CTF needs at least two comb samples".into(),
        ));
    }
    let df = tensor.f_offsets_hz[1] - tensor.f_offsets_hz[0];
    for w in tensor.f_offsets_hz.windows(2) {
        if ((w[1] - w[0]) - df).abs() > 1e-6 * df.abs() {
            return Err(ChannelError::InvalidConfig(
                "delay PSD from CTF needs a uniform comb".into(),
            ));
        }
    }
    let samples: Vec<Complex64> =
        (0..n).map(|fi| tensor.at(pi, qi, ti, ci, fi)).collect();
    let mut bins = Vec::with_capacity(n);
    let mut power = Vec::with_capacity(n);
    for m in 0..n {
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, &x) in samples.iter().enumerate() {
            acc += x * Complex64::from_polar(1.0, 2.0 * PI * (k * m) as f64 / n as f64);
        }
        acc /= n as f64;
        bins.push(m as f64 / (n as f64 * df));
        power.push(acc.norm_sqr());
    }
    Ok(DelayPsd { delay_bins_s: bins, power })
}

/// Mean squared CTF magnitude over the intra-band comb at one cell.
pub fn mean_power_over_comb(tensor: &CtfTensor, pi: usize, qi: usize, ti: usize, ci: usize) -> f64 {
    let n = tensor.f_offsets_hz.len();
    (0..n).map(|fi| tensor.at(pi, qi, ti, ci, fi).norm_sqr()).sum::<f64>() / n as f64
}

/// Grid position of a CTF sample: positions into the five axis lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorIndex {
    pub p: usize,
    pub q: usize,
    pub t: usize,
    pub c: usize,
    pub f: usize,
}

/// Grid-step shift applied to a [`TensorIndex`]; `df` moves along the
/// intra-band comb, the carrier stays pinned.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridShift {
    pub dp: isize,
    pub dq: isize,
    pub dt: isize,
    pub df: isize,
}

fn shifted_index(dims: [usize; 5], base: TensorIndex, shift: GridShift) -> Result<TensorIndex> {
    let apply = |x: usize, d: isize, n: usize, axis: &str| -> Result<usize> {
        let v = x as isize + d;
        if v < 0 || v as usize >= n {
            return Err(ChannelError::IndexOutOfRange(format!(
                "shift {d} from position {x} leaves the {axis} axis (length {n})"
            )));
        }
        Ok(v as usize)
    };
    Ok(TensorIndex {
        p: apply(base.p, shift.dp, dims[0], "tx")?,
        q: apply(base.q, shift.dq, dims[1], "rx")?,
        t: apply(base.t, shift.dt, dims[2], "time")?,
        c: base.c,
        f: apply(base.f, shift.df, dims[4], "frequency")?,
    })
}

fn check_ensemble(ensemble: &[CtfTensor]) -> Result<[usize; 5]> {
    let first = ensemble
        .first()
        .ok_or_else(|| ChannelError::EmptyInput("empty tensor ensemble".into()))?;
    let dims = first.dims();
    if ensemble.iter().any(|t| t.dims() != dims) {
        return Err(ChannelError::DimensionMismatch(
            "tensors in the ensemble disagree on dimensions".into(),
        ));
    }
    Ok(dims)
}

fn value_at(t: &CtfTensor, i: TensorIndex) -> Complex64 {
    t.at(i.p, i.q, i.t, i.c, i.f)
}

/// Raw ensemble correlation E[H(base) conj(H(base + shift))] and the two
/// zero-lag powers it would be normalized by.
fn correlation_parts(
    ensemble: &[CtfTensor],
    base: TensorIndex,
    shift: GridShift,
) -> Result<(Complex64, f64, f64)> {
    let dims = check_ensemble(ensemble)?;
    let target = shifted_index(dims, base, shift)?;
    let n = ensemble.len() as f64;
    let mut corr = Complex64::new(0.0, 0.0);
    let mut p_base = 0.0;
    let mut p_shift = 0.0;
    for t in ensemble {
        let a = value_at(t, base);
        let b = value_at(t, target);
        corr += a * b.conj();
        p_base += a.norm_sqr();
        p_shift += b.norm_sqr();
    }
    Ok((corr / n, p_base / n, p_shift / n))
}

/// Space-time-frequency correlation over a drop ensemble. When `normalized`,
/// the value is divided by sqrt of the zero-lag powers at both points, so the
/// zero shift gives exactly 1.
pub fn stf_correlation(
    ensemble: &[CtfTensor],
    base: TensorIndex,
    shift: GridShift,
    normalized: bool,
) -> Result<Complex64> {
    let (corr, p_base, p_shift) = correlation_parts(ensemble, base, shift)?;
    if !normalized {
        return Ok(corr);
    }
    let denom = (p_base * p_shift).sqrt();
    if denom == 0.0 {
        return Err(ChannelError::InvalidConfig(
            "cannot normalize: zero channel power at the requested point".into(),
        ));
    }
    Ok(corr / denom)
}

/// Ricean-weighted decomposition: K/(K+1) times the normalized LOS
/// correlation plus 1/(K+1) times the normalized NLOS correlation, each term
/// normalized by its own zero-lag power.
pub fn stf_correlation_decomposed(
    los_ensemble: &[CtfTensor],
    nlos_ensemble: &[CtfTensor],
    k_factor: f64,
    base: TensorIndex,
    shift: GridShift,
) -> Result<Complex64> {
    let r_los = stf_correlation(los_ensemble, base, shift, true)?;
    let r_nlos = stf_correlation(nlos_ensemble, base, shift, true)?;
    if !(k_factor >= 0.0) {
        return Err(ChannelError::InvalidConfig(format!("negative Ricean factor {k_factor}")));
    }
    Ok(r_los * (k_factor / (k_factor + 1.0)) + r_nlos * (1.0 / (k_factor + 1.0)))
}

/// One-dimensional correlation curve over a lag axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCurve {
    /// Lag values in the axis unit (s for ACF, Hz for FCF).
    pub lags: Vec<f64>,
    pub values: Vec<Complex64>,
    pub normalized: bool,
}

/// Time auto-correlation: correlation at time-axis steps `dt_steps` from the
/// base index, all other shifts zero.
pub fn acf(ensemble: &[CtfTensor], base: TensorIndex, dt_steps: &[usize]) -> Result<CorrelationCurve> {
    let dims = check_ensemble(ensemble)?;
    let times = &ensemble[0].time_points_s;
    let mut lags = Vec::with_capacity(dt_steps.len());
    let mut values = Vec::with_capacity(dt_steps.len());
    for &k in dt_steps {
        if base.t + k >= dims[2] {
            return Err(ChannelError::IndexOutOfRange(format!(
                "time shift {k} from position {} leaves the grid",
                base.t
            )));
        }
        lags.push(times[base.t + k] - times[base.t]);
        values.push(stf_correlation(
            ensemble,
            base,
            GridShift { dt: k as isize, ..GridShift::default() },
            true,
        )?);
    }
    Ok(CorrelationCurve { lags, values, normalized: true })
}

/// Frequency correlation along the intra-band comb at the base carrier.
pub fn fcf(ensemble: &[CtfTensor], base: TensorIndex, df_steps: &[usize]) -> Result<CorrelationCurve> {
    let dims = check_ensemble(ensemble)?;
    let offsets = &ensemble[0].f_offsets_hz;
    let mut lags = Vec::with_capacity(df_steps.len());
    let mut values = Vec::with_capacity(df_steps.len());
    for &k in df_steps {
        if base.f + k >= dims[4] {
            return Err(ChannelError::IndexOutOfRange(format!(
                "frequency shift {k} from position {} leaves the comb",
                base.f
            )));
        }
        lags.push(offsets[base.f + k] - offsets[base.f]);
        values.push(stf_correlation(
            ensemble,
            base,
            GridShift { df: k as isize, ..GridShift::default() },
            true,
        )?);
    }
    Ok(CorrelationCurve { lags, values, normalized: true })
}

/// Spatial cross-correlation surface over Tx and Rx element shifts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcfGrid {
    pub dp_steps: Vec<isize>,
    pub dq_steps: Vec<isize>,
    /// Values, dp-major.
    pub values: Vec<Complex64>,
}

impl CcfGrid {
    pub fn at(&self, dp_pos: usize, dq_pos: usize) -> Complex64 {
        self.values[dp_pos * self.dq_steps.len() + dq_pos]
    }
}

/// Spatial cross-correlation at every (dp, dq) pair of the given shift lists.
pub fn ccf(
    ensemble: &[CtfTensor],
    base: TensorIndex,
    dp_steps: &[isize],
    dq_steps: &[isize],
) -> Result<CcfGrid> {
    let mut values = Vec::with_capacity(dp_steps.len() * dq_steps.len());
    for &dp in dp_steps {
        for &dq in dq_steps {
            values.push(stf_correlation(
                ensemble,
                base,
                GridShift { dp, dq, ..GridShift::default() },
                true,
            )?);
        }
    }
    Ok(CcfGrid { dp_steps: dp_steps.to_vec(), dq_steps: dq_steps.to_vec(), values })
}

/// Ricean factor of a drop: LOS power over total NLOS power under unit
/// vertical-gain patterns. Infinite when there is no NLOS power.
pub fn ricean_k(drop: &ChannelRealization) -> f64 {
    let nlos: f64 = drop
        .clusters
        .iter()
        .map(|c| {
            let per_ray = c.state.power / c.rays.len() as f64;
            c.rays.iter().map(|r| per_ray / r.xpr).sum::<f64>()
        })
        .sum();
    if nlos > 0.0 {
        drop.los_power / nlos
    } else {
        f64::INFINITY
    }
}

/// Ricean factor estimated from LOS/total tensor pairs at one grid point:
/// ensemble mean LOS power over ensemble mean NLOS power.
pub fn ricean_k_from_tensors(
    los_ensemble: &[CtfTensor],
    total_ensemble: &[CtfTensor],
    index: TensorIndex,
) -> Result<f64> {
    if los_ensemble.len() != total_ensemble.len() {
        return Err(ChannelError::DimensionMismatch(
            "LOS and total ensembles differ in length".into(),
        ));
    }
    check_ensemble(los_ensemble)?;
    check_ensemble(total_ensemble)?;
    let mut p_los = 0.0;
    let mut p_nlos = 0.0;
    for (l, t) in los_ensemble.iter().zip(total_ensemble) {
        let los = value_at(l, index);
        let nlos = value_at(t, index) - los;
        p_los += los.norm_sqr();
        p_nlos += nlos.norm_sqr();
    }
    Ok(if p_nlos > 0.0 { p_los / p_nlos } else { f64::INFINITY })
}

/// Hermitian covariance matrix estimate, row-major complex entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovMatrix {
    pub dim: usize,
    pub data: Vec<Complex64>,
}

impl CovMatrix {
    pub fn zeros(dim: usize) -> Self {
        CovMatrix { dim, data: vec![Complex64::new(0.0, 0.0); dim * dim] }
    }

    pub fn at(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.dim + j]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Correlation-matrix similarity tr(R1 R2) / (|R1|_F |R2|_F): 1 for equal
/// structure, 0 for orthogonal supports. The trace of a product of two
/// Hermitian PSD matrices is real; the real part is returned. The
/// conventional distance is 1 minus this value.
pub fn cmd_similarity(r1: &CovMatrix, r2: &CovMatrix) -> Result<f64> {
    if r1.dim != r2.dim {
        return Err(ChannelError::DimensionMismatch(format!(
            "correlation matrices of dim {} and {}",
            r1.dim, r2.dim
        )));
    }
    let n1 = r1.frobenius_norm();
    let n2 = r2.frobenius_norm();
    if n1 == 0.0 || n2 == 0.0 {
        return Err(ChannelError::InvalidConfig("zero-norm correlation matrix".into()));
    }
    let mut trace = Complex64::new(0.0, 0.0);
    for i in 0..r1.dim {
        for j in 0..r1.dim {
            trace += r1.at(i, j) * r2.at(j, i);
        }
    }
    Ok(trace.re / (n1 * n2))
}

/// Complement of [`cmd_similarity`].
pub fn cmd_distance(r1: &CovMatrix, r2: &CovMatrix) -> Result<f64> {
    Ok(1.0 - cmd_similarity(r1, r2)?)
}

/// Rx-side spatial covariance over the drop ensemble at fixed
/// (p, t, carrier, f): R[i][j] = E[H_qi H_qj^*].
pub fn rx_covariance(
    ensemble: &[CtfTensor],
    pi: usize,
    ti: usize,
    ci: usize,
    fi: usize,
) -> Result<CovMatrix> {
    let dims = check_ensemble(ensemble)?;
    let nq = dims[1];
    let mut r = CovMatrix::zeros(nq);
    for t in ensemble {
        for i in 0..nq {
            let a = t.at(pi, i, ti, ci, fi);
            for j in 0..nq {
                let b = t.at(pi, j, ti, ci, fi);
                r.data[i * nq + j] += a * b.conj();
            }
        }
    }
    let n = ensemble.len() as f64;
    for v in &mut r.data {
        *v /= n;
    }
    Ok(r)
}

/// Tx-side spatial covariance at fixed (q, t, carrier, f).
pub fn tx_covariance(
    ensemble: &[CtfTensor],
    qi: usize,
    ti: usize,
    ci: usize,
    fi: usize,
) -> Result<CovMatrix> {
    let dims = check_ensemble(ensemble)?;
    let np = dims[0];
    let mut r = CovMatrix::zeros(np);
    for t in ensemble {
        for i in 0..np {
            let a = t.at(i, qi, ti, ci, fi);
            for j in 0..np {
                let b = t.at(j, qi, ti, ci, fi);
                r.data[i * np + j] += a * b.conj();
            }
        }
    }
    let n = ensemble.len() as f64;
    for v in &mut r.data {
        *v /= n;
    }
    Ok(r)
}

/// Covariance across the intra-band comb at fixed (p, q, t, carrier):
/// R[a][b] = E[H(f_i + o_a) H(f_i + o_b)^*]. Its structure tracks the delay
/// distribution of the channel at that carrier.
pub fn comb_covariance(
    ensemble: &[CtfTensor],
    pi: usize,
    qi: usize,
    ti: usize,
    ci: usize,
) -> Result<CovMatrix> {
    let dims = check_ensemble(ensemble)?;
    let nf = dims[4];
    let mut r = CovMatrix::zeros(nf);
    for t in ensemble {
        for a in 0..nf {
            let x = t.at(pi, qi, ti, ci, a);
            for b in 0..nf {
                let y = t.at(pi, qi, ti, ci, b);
                r.data[a * nf + b] += x * y.conj();
            }
        }
    }
    let n = ensemble.len() as f64;
    for v in &mut r.data {
        *v /= n;
    }
    Ok(r)
}

/// Hermitian Toeplitz correlation matrix of one drop's CTF across the
/// intra-band comb at fixed (p, q, t, carrier): entry (a, b) is the lag
/// correlation phi(b - a), with phi(l) the comb average of
/// H(f + o_k) H(f + o_{k+l})^*. The products within one carrier cancel the
/// absolute carrier phase, so the matrix captures the delay-power structure
/// of the drop; its only carrier dependence is the re-generated
/// intra-cluster dispersion.
pub fn comb_correlation_toeplitz(
    tensor: &CtfTensor,
    pi: usize,
    qi: usize,
    ti: usize,
    ci: usize,
) -> Result<CovMatrix> {
    let nf = tensor.f_offsets_hz.len();
    if nf < 2 {
        return Err(ChannelError::InvalidConfig(
            "comb correlation needs at least two comb samples".into(),
        ));
    }
    let h: Vec<Complex64> = (0..nf).map(|fi| tensor.at(pi, qi, ti, ci, fi)).collect();
    let mut phi = vec![Complex64::new(0.0, 0.0); nf];
    for (l, slot) in phi.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..nf - l {
            acc += h[k] * h[k + l].conj();
        }
        *slot = acc / (nf - l) as f64;
    }
    let mut r = CovMatrix::zeros(nf);
    for a in 0..nf {
        for b in 0..nf {
            r.data[a * nf + b] = if b >= a { phi[b - a] } else { phi[a - b].conj() };
        }
    }
    Ok(r)
}

/// Axis along which a stationary interval is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StationaryDomain {
    SpaceTx,
    SpaceRx,
    Time,
    /// Carrier axis with comb-frequency covariance matrices: the interval is
    /// the bandwidth over which the delay-dispersion structure of the
    /// channel stays similar.
    Frequency,
    /// Carrier axis with Rx-side spatial covariance matrices.
    FrequencySpatial,
}

/// One stationary-interval measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryIntervalSample {
    pub domain: StationaryDomain,
    /// Largest shift (domain units: s, Hz, or element steps) whose
    /// similarity to the base stays at or above the threshold.
    pub interval: f64,
    pub threshold: f64,
    /// True when already the first shift fell below the threshold; the
    /// interval then reports one grid step.
    pub below_threshold: bool,
}

/// Largest shift along `domain` such that the correlation-matrix similarity
/// between the base point and every shifted point up to that shift stays at
/// or above `c_th`. Walks every grid position after the base on the domain
/// axis; [`stationary_interval_along`] restricts the walk to chosen
/// positions.
pub fn stationary_interval(
    ensemble: &[CtfTensor],
    base: TensorIndex,
    domain: StationaryDomain,
    c_th: f64,
) -> Result<StationaryIntervalSample> {
    let dims = check_ensemble(ensemble)?;
    let base_pos = match domain {
        StationaryDomain::Time => base.t,
        StationaryDomain::Frequency | StationaryDomain::FrequencySpatial => base.c,
        StationaryDomain::SpaceTx => base.p,
        StationaryDomain::SpaceRx => base.q,
    };
    let axis_len = match domain {
        StationaryDomain::Time => dims[2],
        StationaryDomain::Frequency | StationaryDomain::FrequencySpatial => dims[3],
        StationaryDomain::SpaceTx => dims[0],
        StationaryDomain::SpaceRx => dims[1],
    };
    let positions: Vec<usize> = (base_pos..axis_len).collect();
    stationary_interval_along(ensemble, base, domain, c_th, &positions)
}

/// [`stationary_interval`] restricted to explicit axis positions (ascending,
/// starting at the base position). Lets a run measure each base carrier on
/// its own shift ladder when several ladders share one grid.
pub fn stationary_interval_along(
    ensemble: &[CtfTensor],
    base: TensorIndex,
    domain: StationaryDomain,
    c_th: f64,
    positions: &[usize],
) -> Result<StationaryIntervalSample> {
    if !(c_th > 0.0 && c_th < 1.0) {
        return Err(ChannelError::InvalidConfig(format!(
            "threshold must be in (0, 1), got {c_th}"
        )));
    }
    let dims = check_ensemble(ensemble)?;
    let t0 = &ensemble[0];

    let axis: Vec<f64> = match domain {
        StationaryDomain::Time => t0.time_points_s.clone(),
        StationaryDomain::Frequency | StationaryDomain::FrequencySpatial => t0.carriers_hz.clone(),
        StationaryDomain::SpaceTx => (0..dims[0]).map(|i| i as f64).collect(),
        StationaryDomain::SpaceRx => (0..dims[1]).map(|i| i as f64).collect(),
    };
    let cov_at = |pos: usize| -> Result<CovMatrix> {
        match domain {
            StationaryDomain::Time => rx_covariance(ensemble, base.p, pos, base.c, base.f),
            StationaryDomain::Frequency => {
                // Ensemble mean of the per-drop comb correlation matrices.
                let mut acc: Option<CovMatrix> = None;
                for t in ensemble {
                    let r = comb_correlation_toeplitz(t, base.p, base.q, base.t, pos)?;
                    match &mut acc {
                        None => acc = Some(r),
                        Some(a) => {
                            for (av, rv) in a.data.iter_mut().zip(&r.data) {
                                *av += rv;
                            }
                        }
                    }
                }
                let mut r = acc.expect("non-empty ensemble");
                let n = ensemble.len() as f64;
                for v in &mut r.data {
                    *v /= n;
                }
                Ok(r)
            }
            StationaryDomain::FrequencySpatial => {
                rx_covariance(ensemble, base.p, base.t, pos, base.f)
            }
            StationaryDomain::SpaceTx => rx_covariance(ensemble, pos, base.t, base.c, base.f),
            StationaryDomain::SpaceRx => tx_covariance(ensemble, pos, base.t, base.c, base.f),
        }
    };

    let (&base_pos, shifts) = positions
        .split_first()
        .ok_or_else(|| ChannelError::EmptyInput("no positions to walk".into()))?;
    if positions.iter().any(|&p| p >= axis.len()) {
        return Err(ChannelError::IndexOutOfRange("position off the axis".into()));
    }
    let r_base = cov_at(base_pos)?;
    let mut interval = 0.0;
    let mut below = false;
    for (k, &pos) in shifts.iter().enumerate() {
        let sim = cmd_similarity(&r_base, &cov_at(pos)?)?;
        if sim < c_th {
            if k == 0 {
                below = true;
                interval = axis[pos] - axis[base_pos];
            }
            break;
        }
        interval = axis[pos] - axis[base_pos];
    }
    Ok(StationaryIntervalSample { domain, interval, threshold: c_th, below_threshold: below })
}

/// Complementary cumulative distribution as a right-continuous step
/// function: at each distinct sample value v, the fraction of samples
/// strictly greater than v.
pub fn ccdf(samples: &[f64]) -> Vec<(f64, f64)> {
    if samples.is_empty() {
        return Vec::new();
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == v {
            j += 1;
        }
        out.push((v, (sorted.len() - j) as f64 / n));
        i = j;
    }
    out
}
