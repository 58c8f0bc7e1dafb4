//! Internal unit system: Å, eV, amu, and the derived time unit.

/// Atomic mass unit in kg.
pub const AMU_KG: f64 = 1.660_539_066_60e-27;
/// Electron volt in J.
pub const EV_J: f64 = 1.602_176_634e-19;
/// Ångström in m.
pub const ANGSTROM_M: f64 = 1e-10;
/// Boltzmann constant in eV/K.
pub const K_B_EV: f64 = 8.617_333_262e-5;

/// Conversions between SI and the internal unit system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitSystem;

impl UnitSystem {
    /// Time unit `Å·sqrt(amu/eV)` in seconds.
    pub fn time_unit_s() -> f64 {
        (AMU_KG / EV_J).sqrt() * ANGSTROM_M
    }

    pub fn seconds_to_internal(t: f64) -> f64 {
        t / Self::time_unit_s()
    }

    pub fn internal_to_seconds(t: f64) -> f64 {
        t * Self::time_unit_s()
    }

    pub fn meters_to_internal(x: f64) -> f64 {
        x / ANGSTROM_M
    }

    pub fn internal_to_meters(x: f64) -> f64 {
        x * ANGSTROM_M
    }

    pub fn joules_to_internal(e: f64) -> f64 {
        e / EV_J
    }

    pub fn internal_to_joules(e: f64) -> f64 {
        e * EV_J
    }

    pub fn kg_to_internal(m: f64) -> f64 {
        m / AMU_KG
    }

    pub fn internal_to_kg(m: f64) -> f64 {
        m * AMU_KG
    }

    /// Velocity: Å/t_u to m/s.
    pub fn internal_to_mps(v: f64) -> f64 {
        v * ANGSTROM_M / Self::time_unit_s()
    }

    /// Force: eV/Å to N.
    pub fn internal_to_newton(f: f64) -> f64 {
        f * EV_J / ANGSTROM_M
    }

    /// Diffusion constant: Å²/t_u to m²/s.
    pub fn internal_to_m2s(k: f64) -> f64 {
        k * ANGSTROM_M * ANGSTROM_M / Self::time_unit_s()
    }

    /// Thermal energy `k_B T` in eV.
    pub fn thermal_energy(temperature_k: f64) -> f64 {
        K_B_EV * temperature_k
    }
}
