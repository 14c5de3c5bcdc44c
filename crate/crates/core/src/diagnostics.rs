//! Error metrics and conservation diagnostics.

use thiserror::Error;

use crate::solver::ParticleField;

#[derive(Debug, Error, PartialEq)]
pub enum DiagnosticsError {
    #[error("reference field is zero; relative error is undefined")]
    ZeroReference,
    #[error("length mismatch: {0} values, {1} reference values, {2} areas")]
    LengthMismatch(usize, usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub label: String,
    pub n_particles: usize,
    pub rel_l2: f64,
    pub rel_linf: f64,
}

fn check(a: usize, b: usize, c: usize) -> Result<(), DiagnosticsError> {
    if a != b || a != c {
        return Err(DiagnosticsError::LengthMismatch(a, b, c));
    }
    Ok(())
}

/// `sqrt(sum |vF - vD|^2 A / sum |vD|^2 A)`.
pub fn rel_l2_velocity_error(v: &[[f64; 3]], reference: &[[f64; 3]], areas: &[f64]) -> Result<f64, DiagnosticsError> {
    check(v.len(), reference.len(), areas.len())?;
    let mut num = 0.0;
    let mut den = 0.0;
    for ((a, b), w) in v.iter().zip(reference).zip(areas) {
        num += ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)) * w;
        den += (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]) * w;
    }
    if den == 0.0 {
        return Err(DiagnosticsError::ZeroReference);
    }
    Ok((num / den).sqrt())
}

/// Area-weighted relative l2 error of a scalar field.
pub fn rel_l2_vorticity_error(zeta: &[f64], reference: &[f64], areas: &[f64]) -> Result<f64, DiagnosticsError> {
    check(zeta.len(), reference.len(), areas.len())?;
    let mut num = 0.0;
    let mut den = 0.0;
    for ((a, b), w) in zeta.iter().zip(reference).zip(areas) {
        num += (a - b).powi(2) * w;
        den += b * b * w;
    }
    if den == 0.0 {
        return Err(DiagnosticsError::ZeroReference);
    }
    Ok((num / den).sqrt())
}

/// `max |zeta - ref| / max |ref|`.
pub fn rel_linf_error(zeta: &[f64], reference: &[f64]) -> Result<f64, DiagnosticsError> {
    check(zeta.len(), reference.len(), reference.len())?;
    let scale = reference.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    if scale == 0.0 {
        return Err(DiagnosticsError::ZeroReference);
    }
    Ok(zeta.iter().zip(reference).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale)
}

pub fn rel_linf_velocity_error(v: &[[f64; 3]], reference: &[[f64; 3]]) -> Result<f64, DiagnosticsError> {
    let norm = |x: &[f64; 3]| (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
    let diff: Vec<f64> = v.iter().zip(reference).map(|(a, b)| norm(&[a[0] - b[0], a[1] - b[1], a[2] - b[2]])).collect();
    let refs: Vec<f64> = reference.iter().map(norm).collect();
    let scale = refs.iter().fold(0.0f64, |m, r| m.max(*r));
    if scale == 0.0 {
        return Err(DiagnosticsError::ZeroReference);
    }
    Ok(diff.iter().fold(0.0f64, |m, d| m.max(*d)) / scale)
}

pub fn vorticity_report(label: &str, zeta: &[f64], reference: &[f64], areas: &[f64]) -> Result<ErrorReport, DiagnosticsError> {
    Ok(ErrorReport {
        label: label.to_string(),
        n_particles: zeta.len(),
        rel_l2: rel_l2_vorticity_error(zeta, reference, areas)?,
        rel_linf: rel_linf_error(zeta, reference)?,
    })
}

pub fn velocity_report(label: &str, v: &[[f64; 3]], reference: &[[f64; 3]], areas: &[f64]) -> Result<ErrorReport, DiagnosticsError> {
    Ok(ErrorReport {
        label: label.to_string(),
        n_particles: v.len(),
        rel_l2: rel_l2_velocity_error(v, reference, areas)?,
        rel_linf: rel_linf_velocity_error(v, reference)?,
    })
}

/// `sum zeta_i A_i`.
pub fn total_vorticity(field: &ParticleField) -> f64 {
    field.vorticity.iter().zip(&field.areas).map(|(z, a)| z * a).sum()
}

/// Largest change of any particle's absolute vorticity relative to the
/// largest initial magnitude.
pub fn absolute_vorticity_drift(field: &ParticleField) -> f64 {
    let scale = field.initial_absolute_vorticity.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let abs = field.absolute_vorticity();
    abs.iter().zip(&field.initial_absolute_vorticity).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale
}
