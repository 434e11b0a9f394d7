//! Conversions between ordinary frequencies in GHz and angular rates.

use std::f64::consts::PI;

/// rad/s per GHz of ordinary frequency.
pub const RAD_PER_GHZ: f64 = 2.0 * PI * 1e9;

pub fn ghz_to_rad(ghz: f64) -> f64 {
    ghz * RAD_PER_GHZ
}

pub fn rad_to_ghz(rad: f64) -> f64 {
    rad / RAD_PER_GHZ
}

pub const PICOSECOND: f64 = 1e-12;
pub const NANOSECOND: f64 = 1e-9;
