//! Unit conventions. Lengths are in nm, times in ns and forces in pN, so
//! energies are pN·nm and viscosities pN·ns/nm².

/// One centipoise in pN·ns/nm² (1 mPa·s = 1 pN·ns/nm²).
pub const CENTIPOISE: f64 = 1.0;

/// Viscosity of water at room temperature.
pub const WATER_VISCOSITY: f64 = CENTIPOISE;

/// Thermal energy at 300 K in pN·nm.
pub const KBT: f64 = 4.141;

pub fn cp_to_internal(cp: f64) -> f64 {
    cp * CENTIPOISE
}

pub fn pn_nm_to_kbt(e: f64) -> f64 {
    e / KBT
}

pub fn kbt_to_pn_nm(e: f64) -> f64 {
    e * KBT
}

/// Viscous relaxation time `mu a / gamma` in ns.
pub fn characteristic_time(mu: f64, a: f64, gamma: f64) -> f64 {
    mu * a / gamma
}
