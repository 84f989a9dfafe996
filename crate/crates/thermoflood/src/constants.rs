//! Physical constants and unit conventions.
//!
//! Everything outside this module is SI: K, Pa, mol, J, m, s, Pa·s.
//! Correlation-native units (the Lohrenz-Bray-Clark cP/(g/mol)/atm
//! convention) are converted at a single point in `fluid_props`.

/// Universal gas constant, J/(mol·K). CODATA 2018 exact value.
pub const R_GAS: f64 = 8.31446261815324;

/// Standard gravity, m/s².
pub const GRAVITY: f64 = 9.80665;

/// Reference temperature for enthalpy/entropy zero points, K (25 °C).
pub const T_REF: f64 = 298.15;

/// Reference pressure for entropy and rock/water state functions, Pa (1 atm).
pub const P_REF: f64 = 101_325.0;

/// Millidarcy in m².
pub const MILLIDARCY: f64 = 9.869_233e-16;

/// Temperature scale used to nondimensionalize Newton systems, K.
pub const T_SCALE: f64 = 100.0;

/// Pressure scale used to nondimensionalize Newton systems, Pa (1 MPa).
pub const P_SCALE: f64 = 1.0e6;
