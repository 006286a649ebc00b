//! Wedge-pressure estimate from cardiac-MRI measurements and its binary
//! class.

use super::EvalError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PawpClass {
    /// PAWP <= 15 mmHg.
    Normal,
    /// PAWP > 15 mmHg.
    Elevated,
}

pub const PAWP_THRESHOLD_MMHG: f64 = 15.0;

/// pawp = 6.1352 + 0.07204 * LAV + 0.02256 * LVM, elevated iff > 15.
pub fn pawp_from_cmr(lav_ml: f64, lvm_g: f64) -> Result<(f64, PawpClass), EvalError> {
    if lav_ml < 0.0 || lvm_g < 0.0 || !lav_ml.is_finite() || !lvm_g.is_finite() {
        return Err(EvalError::Domain(format!(
            "LAV {lav_ml} and LVM {lvm_g} must be nonnegative"
        )));
    }
    let pawp = 6.1352 + 0.07204 * lav_ml + 0.02256 * lvm_g;
    let class = if pawp > PAWP_THRESHOLD_MMHG {
        PawpClass::Elevated
    } else {
        PawpClass::Normal
    };
    Ok((pawp, class))
}
