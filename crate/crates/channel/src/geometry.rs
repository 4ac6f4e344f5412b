//! 3D vectors, angle conventions, LOS geometry, and the virtual mirror point.
//!
//! Conventions used throughout the crate:
//! - azimuth is measured in the xy-plane from +x, wrapped to (-pi, pi];
//! - elevation is measured from the xy-plane (asin of the z component),
//!   in [-pi/2, pi/2]; at the poles the azimuth is fixed to 0;
//! - elevation overflow is mirror-reflected at +-pi/2, azimuth overflow is
//!   wrapped modulo 2*pi;
//! - distances use the Euclidean norm, delays are seconds, positions meters.

use crate::error::ChannelError;
use crate::{Result, SPEED_OF_LIGHT};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use std::ops::{Add, Mul, Neg, Sub};

/// 3D position (m) or velocity (m/s) vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y + self.z * self.z
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Azimuth/elevation pair in radians.
///
/// `new` wraps its arguments into the canonical ranges; the raw struct
/// literal is used for relative-angle offsets that are not wrapped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnglePair {
    pub azimuth: f64,
    pub elevation: f64,
}

impl AnglePair {
    pub fn new(azimuth: f64, elevation: f64) -> Self {
        AnglePair {
            azimuth: wrap_azimuth(azimuth),
            elevation: wrap_elevation(elevation),
        }
    }

    pub const ZERO: AnglePair = AnglePair { azimuth: 0.0, elevation: 0.0 };
}

/// Wrap an azimuth into (-pi, pi]. Values already in range pass through
/// bit-unchanged.
pub fn wrap_azimuth(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    // pi - rem_euclid keeps the upper boundary closed: both +-pi map to pi.
    PI - (PI - a).rem_euclid(2.0 * PI)
}

/// Mirror-reflect an elevation into [-pi/2, pi/2]. Values already in range
/// pass through bit-unchanged; out-of-range values follow the triangle wave
/// asin(sin(e)), which reflects at the poles.
pub fn wrap_elevation(e: f64) -> f64 {
    if (-FRAC_PI_2..=FRAC_PI_2).contains(&e) {
        return e;
    }
    e.sin().asin()
}

/// Antenna array: element offsets from the first element (meters, global
/// frame), boresight orientation for pattern lookups, and velocity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub element_offsets: Vec<Vec3>,
    pub orientation: AnglePair,
    pub velocity: Vec3,
}

impl ArrayGeometry {
    /// Uniform linear array of `n` elements spaced `spacing` meters along
    /// `axis` (normalized internally).
    pub fn ula(n: usize, spacing: f64, axis: Vec3) -> Result<Self> {
        if n == 0 {
            return Err(ChannelError::InvalidConfig("ULA needs at least one element".into()));
        }
        let norm = axis.norm();
        if norm == 0.0 {
            return Err(ChannelError::DegenerateGeometry("ULA axis is the zero vector".into()));
        }
        let unit = axis * (1.0 / norm);
        let element_offsets = (0..n).map(|i| unit * (spacing * i as f64)).collect();
        Ok(ArrayGeometry {
            element_offsets,
            orientation: AnglePair::ZERO,
            velocity: Vec3::ZERO,
        })
    }

    pub fn len(&self) -> usize {
        self.element_offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.element_offsets.is_empty()
    }

    /// Offset of the 1-based element `idx`.
    pub fn offset(&self, idx: usize) -> Result<Vec3> {
        if idx == 0 || idx > self.element_offsets.len() {
            return Err(ChannelError::IndexOutOfRange(format!(
                "element {idx} of array with {} elements (indices are 1-based)",
                self.element_offsets.len()
            )));
        }
        Ok(self.element_offsets[idx - 1])
    }

    pub fn validate(&self) -> Result<()> {
        if self.element_offsets.is_empty() {
            return Err(ChannelError::InvalidConfig("array has no elements".into()));
        }
        if self.element_offsets[0] != Vec3::ZERO {
            return Err(ChannelError::InvalidConfig(
                "first element offset must be the origin".into(),
            ));
        }
        if !self.element_offsets.iter().all(|o| o.is_finite()) {
            return Err(ChannelError::InvalidConfig("non-finite element offset".into()));
        }
        Ok(())
    }
}

/// Physical link setup: both arrays, the initial Tx-to-Rx vector at the first
/// element pair, and the anchor frequency used for channel initialization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Link {
    pub tx: ArrayGeometry,
    pub rx: ArrayGeometry,
    /// Initial position vector of the Rx first element in the Tx frame.
    pub d0: Vec3,
    /// Anchor frequency f0 (Hz) at which drops are initialized.
    pub f0_hz: f64,
}

impl Link {
    pub fn validate(&self) -> Result<()> {
        self.tx.validate()?;
        self.rx.validate()?;
        if self.d0.norm() == 0.0 {
            return Err(ChannelError::DegenerateGeometry("d0 is the zero vector".into()));
        }
        if !(self.f0_hz > 0.0) {
            return Err(ChannelError::InvalidConfig("f0 must be positive".into()));
        }
        Ok(())
    }
}

/// LOS distance vector between 1-based elements `p` (Tx) and `q` (Rx) at
/// `elapsed` seconds after the initial instant: D + A_q - A_p + v_rx * t.
/// The Tx is treated as static apart from its fixed element offsets.
pub fn los_vector(
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
    p: usize,
    q: usize,
    d0: Vec3,
    elapsed: f64,
) -> Result<Vec3> {
    let a_t = tx.offset(p)?;
    let a_r = rx.offset(q)?;
    Ok(d0 + a_r - a_t + rx.velocity * elapsed)
}

/// Azimuth/elevation of a direction vector. At the poles the azimuth is 0 by
/// convention. The zero vector has no direction.
pub fn vector_to_angles(v: Vec3) -> Result<AnglePair> {
    let norm = v.norm();
    if norm == 0.0 {
        return Err(ChannelError::DegenerateGeometry(
            "cannot extract angles from the zero vector".into(),
        ));
    }
    let azimuth = if v.x == 0.0 && v.y == 0.0 { 0.0 } else { v.y.atan2(v.x) };
    let elevation = (v.z / norm).clamp(-1.0, 1.0).asin();
    Ok(AnglePair { azimuth, elevation })
}

/// Unit direction vector [cosE*cosA, cosE*sinA, sinE].
pub fn angles_to_unit_vector(a: AnglePair) -> Vec3 {
    let (sin_e, cos_e) = a.elevation.sin_cos();
    let (sin_a, cos_a) = a.azimuth.sin_cos();
    Vec3::new(cos_e * cos_a, cos_e * sin_a, sin_e)
}

/// Initial virtual vector from the Tx mirror point to the Rx for a cluster:
/// direction given by the arrival angles, length c * delay. The mirror point
/// holds static while the Rx moves, so this vector evolves by pure
/// translation.
pub fn initial_virtual_vector(cluster_delay: f64, aoa: AnglePair) -> Result<Vec3> {
    if !(cluster_delay > 0.0) {
        return Err(ChannelError::InvalidConfig(format!(
            "cluster delay must be positive, got {cluster_delay}"
        )));
    }
    Ok(angles_to_unit_vector(aoa) * (SPEED_OF_LIGHT * cluster_delay))
}

/// Transform a global-frame direction into an array's local frame.
///
/// The local frame is aligned so that the boresight (orientation) maps to
/// (0, 0): rotate by -psi_A about z, then by -psi_E about the intermediate
/// y axis. Identity when the orientation is (0, 0).
pub fn gcs_to_lcs(angle: AnglePair, array_orientation: AnglePair) -> AnglePair {
    if array_orientation == AnglePair::ZERO {
        return angle;
    }
    let u = angles_to_unit_vector(angle);
    let v = rot_y(rot_z(u, -array_orientation.azimuth), array_orientation.elevation);
    // Unit input, so the angle extraction cannot fail.
    vector_to_angles(v).expect("unit vector")
}

/// Inverse of [`gcs_to_lcs`].
pub fn lcs_to_gcs(angle: AnglePair, array_orientation: AnglePair) -> AnglePair {
    if array_orientation == AnglePair::ZERO {
        return angle;
    }
    let u = angles_to_unit_vector(angle);
    let v = rot_z(rot_y(u, -array_orientation.elevation), array_orientation.azimuth);
    vector_to_angles(v).expect("unit vector")
}

fn rot_z(v: Vec3, angle: f64) -> Vec3 {
    let (s, c) = angle.sin_cos();
    Vec3::new(c * v.x - s * v.y, s * v.x + c * v.y, v.z)
}

fn rot_y(v: Vec3, angle: f64) -> Vec3 {
    let (s, c) = angle.sin_cos();
    Vec3::new(c * v.x + s * v.z, v.y, -s * v.x + c * v.z)
}
