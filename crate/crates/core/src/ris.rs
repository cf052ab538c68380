//! RIS panel model: element grid geometry, discrete/continuous phase sets,
//! and the phase-dependent reflection amplitude of practical hardware.
//!
//! The reflection amplitude follows
//! `rho(theta) = (1 - rho_min) * ((sin(theta - xi) + 1) / 2)^omega + rho_min`,
//! which reduces to the lossless case `rho = 1` when `omega = 0`.

use crate::geom::Point3;
use num_complex::Complex64;
use std::f64::consts::TAU;
use thiserror::Error;

/// Largest supported phase bit-resolution (wire-format ceiling).
pub const MAX_PHASE_BITS: u8 = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RisError {
    #[error("phase bits {0} outside the supported range 1..={MAX_PHASE_BITS}")]
    PhaseBitsOutOfRange(u8),
    #[error("continuous mode (b = 0) has no enumerable phase set")]
    ContinuousHasNoPhaseSet,
    #[error("RIS grid must have at least one element (rows={rows}, cols={cols})")]
    EmptyGrid { rows: u16, cols: u16 },
    #[error("element spacing {0} m must be positive and finite")]
    InvalidSpacing(f64),
    #[error("panel normal must be a unit vector (|n| = {0})")]
    NotUnitNormal(f64),
    #[error("amplitude parameters out of range (rho_min={rho_min}, omega={omega})")]
    InvalidAmplitudeParams { rho_min: f64, omega: f64 },
    #[error("discrete phase index {index} out of range for {bits} bits")]
    IndexOutOfRange { index: u16, bits: u8 },
    #[error("continuous phase value {0} outside [0, 2*pi)")]
    PhaseOutOfRange(f64),
    #[error("phase config has {got} values, RIS has {expected} elements")]
    ConfigLengthMismatch { got: usize, expected: usize },
    #[error("phase config mode does not match the RIS bit-resolution (b = {bits})")]
    ConfigModeMismatch { bits: u8 },
}

/// Parameters of the phase-dependent reflection amplitude response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplitudeParams {
    /// Minimum achievable reflection amplitude, in [0, 1].
    pub rho_min: f64,
    /// Horizontal shift of the response in radians.
    pub xi_rad: f64,
    /// Steepness of the transition; 0 gives the ideal lossless response.
    pub omega: f64,
}

impl AmplitudeParams {
    /// Lossless reflection: `rho(theta) = 1` for every phase.
    pub const fn ideal() -> Self {
        Self {
            rho_min: 1.0,
            xi_rad: 0.0,
            omega: 0.0,
        }
    }

    /// Measured-hardware parameter set used as the project default
    /// (rho_min = 0.2, xi = 0.43*pi, omega = 1.6).
    pub fn practical() -> Self {
        Self {
            rho_min: 0.2,
            xi_rad: 0.43 * std::f64::consts::PI,
            omega: 1.6,
        }
    }

    pub fn validate(&self) -> Result<(), RisError> {
        if (0.0..=1.0).contains(&self.rho_min) && self.omega >= 0.0 && self.xi_rad.is_finite() {
            Ok(())
        } else {
            Err(RisError::InvalidAmplitudeParams {
                rho_min: self.rho_min,
                omega: self.omega,
            })
        }
    }
}

impl Default for AmplitudeParams {
    fn default() -> Self {
        Self::practical()
    }
}

/// Identity of the RIS a phase configuration or codebook was built for.
/// Two specs are interchangeable for optimization purposes iff their
/// fingerprints are equal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RisFingerprint {
    pub n_elements: u32,
    pub phase_bits: u8,
    pub rho_min: f64,
    pub xi_rad: f64,
    pub omega: f64,
}

impl std::fmt::Display for RisFingerprint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "N={} b={} rho_min={} xi={} omega={}",
            self.n_elements, self.phase_bits, self.rho_min, self.xi_rad, self.omega
        )
    }
}

/// RIS panel specification: grid geometry, phase resolution, and amplitude
/// response. `phase_bits = 0` selects the continuous-phase benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct RisSpec {
    pub rows: u16,
    pub cols: u16,
    /// Per-element control resolution in bits; 0 means continuous phases.
    pub phase_bits: u8,
    /// Element pitch in metres (half a wavelength by default).
    pub spacing_m: f64,
    pub center: Point3,
    /// Unit vector the panel faces along.
    pub normal: Point3,
    /// Physical element aperture in metres. Reported over the wire; not used
    /// in the rate model.
    pub element_aperture_m: f64,
    pub amp: AmplitudeParams,
}

impl RisSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        rows: u16,
        cols: u16,
        phase_bits: u8,
        spacing_m: f64,
        center: Point3,
        normal: Point3,
        element_aperture_m: f64,
        amp: AmplitudeParams,
    ) -> Result<Self, RisError> {
        if rows == 0 || cols == 0 {
            return Err(RisError::EmptyGrid { rows, cols });
        }
        if phase_bits > MAX_PHASE_BITS {
            return Err(RisError::PhaseBitsOutOfRange(phase_bits));
        }
        if !(spacing_m > 0.0 && spacing_m.is_finite()) {
            return Err(RisError::InvalidSpacing(spacing_m));
        }
        let norm = normal.norm();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(RisError::NotUnitNormal(norm));
        }
        amp.validate()?;
        Ok(Self {
            rows,
            cols,
            phase_bits,
            spacing_m,
            center,
            normal,
            element_aperture_m,
            amp,
        })
    }

    /// Half-wavelength pitch for a carrier frequency in Hz.
    pub fn half_wavelength_spacing(fc_hz: f64) -> f64 {
        crate::channel::SPEED_OF_LIGHT_M_S / fc_hz / 2.0
    }

    pub fn n_elements(&self) -> usize {
        self.rows as usize * self.cols as usize
    }

    pub fn is_continuous(&self) -> bool {
        self.phase_bits == 0
    }

    pub fn fingerprint(&self) -> RisFingerprint {
        RisFingerprint {
            n_elements: self.n_elements() as u32,
            phase_bits: self.phase_bits,
            rho_min: self.amp.rho_min,
            xi_rad: self.amp.xi_rad,
            omega: self.amp.omega,
        }
    }

    /// All-zero phase configuration matching this spec's mode.
    pub fn zero_config(&self) -> PhaseConfig {
        if self.is_continuous() {
            PhaseConfig::Continuous(vec![0.0; self.n_elements()])
        } else {
            PhaseConfig::Discrete {
                bits: self.phase_bits,
                indices: vec![0; self.n_elements()],
            }
        }
    }
}

/// Per-element phase assignment: discrete level indices (with their
/// bit-resolution) or continuous radians in [0, 2*pi).
#[derive(Debug, Clone, PartialEq)]
pub enum PhaseConfig {
    Discrete { bits: u8, indices: Vec<u16> },
    Continuous(Vec<f64>),
}

impl PhaseConfig {
    pub fn len(&self) -> usize {
        match self {
            PhaseConfig::Discrete { indices, .. } => indices.len(),
            PhaseConfig::Continuous(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, PhaseConfig::Discrete { .. })
    }

    /// Phase in radians applied by element `i`.
    pub fn theta(&self, i: usize) -> f64 {
        match self {
            PhaseConfig::Discrete { bits, indices } => {
                level_phase(indices[i], *bits)
            }
            PhaseConfig::Continuous(v) => v[i],
        }
    }

    /// Check the structural invariants against a spec: element count, mode
    /// against the spec's bit-resolution, index/value ranges.
    pub fn validate_for(&self, spec: &RisSpec) -> Result<(), RisError> {
        if self.len() != spec.n_elements() {
            return Err(RisError::ConfigLengthMismatch {
                got: self.len(),
                expected: spec.n_elements(),
            });
        }
        match self {
            PhaseConfig::Discrete { bits, indices } => {
                if spec.is_continuous() || *bits != spec.phase_bits {
                    return Err(RisError::ConfigModeMismatch {
                        bits: spec.phase_bits,
                    });
                }
                let levels = 1u32 << *bits;
                for &ix in indices {
                    if u32::from(ix) >= levels {
                        return Err(RisError::IndexOutOfRange {
                            index: ix,
                            bits: *bits,
                        });
                    }
                }
            }
            PhaseConfig::Continuous(values) => {
                if !spec.is_continuous() {
                    return Err(RisError::ConfigModeMismatch {
                        bits: spec.phase_bits,
                    });
                }
                for &v in values {
                    if !(v.is_finite() && (0.0..TAU).contains(&v)) {
                        return Err(RisError::PhaseOutOfRange(v));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Phase of discrete level `index` at resolution `bits`: `2*pi*k / 2^b`.
pub fn level_phase(index: u16, bits: u8) -> f64 {
    TAU * f64::from(index) / f64::from(1u32 << bits)
}

/// The ordered set of `2^b` equally spaced phases `{2*pi*k / 2^b}` for
/// `1 <= b <= 16`. Continuous mode (b = 0) has no enumerable set.
pub fn phase_set(bits: u8) -> Result<Vec<f64>, RisError> {
    if bits == 0 {
        return Err(RisError::ContinuousHasNoPhaseSet);
    }
    if bits > MAX_PHASE_BITS {
        return Err(RisError::PhaseBitsOutOfRange(bits));
    }
    let levels = 1u32 << bits;
    Ok((0..levels).map(|k| TAU * f64::from(k) / f64::from(levels)).collect())
}

/// Phase-dependent reflection amplitude, in `[rho_min, 1]`.
pub fn reflection_amplitude(theta: f64, amp: &AmplitudeParams) -> f64 {
    let s = ((theta - amp.xi_rad).sin() + 1.0) / 2.0;
    (1.0 - amp.rho_min) * s.powf(amp.omega) + amp.rho_min
}

/// Complex reflection coefficient `rho(theta) * e^(j*theta)`.
pub fn reflection_coefficient(theta: f64, amp: &AmplitudeParams) -> Complex64 {
    Complex64::from_polar(reflection_amplitude(theta, amp), theta)
}

/// Wrap an angle into [0, 2*pi).
pub fn wrap_phase(theta: f64) -> f64 {
    let w = theta.rem_euclid(TAU);
    // rem_euclid of a tiny negative value can round up to exactly 2*pi.
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Map `theta` to the index of the nearest discrete phase level (circular
/// distance). Exact ties go to the smaller phase value.
pub fn quantize_phase(theta: f64, bits: u8) -> Result<u16, RisError> {
    if bits == 0 || bits > MAX_PHASE_BITS {
        return Err(RisError::PhaseBitsOutOfRange(bits));
    }
    let levels = 1u32 << bits;
    let step = TAU / f64::from(levels);
    let wrapped = wrap_phase(theta);
    let below = (wrapped / step).floor() as u32;
    let below = below.min(levels - 1);
    let above = (below + 1) % levels;
    let d_below = wrapped - f64::from(below) * step;
    let d_above = f64::from(below + 1) * step - wrapped;
    let index = if d_below < d_above {
        below
    } else if d_above < d_below {
        above
    } else {
        // Tie: the smaller phase value. Level 0 wins over any other level.
        if above == 0 {
            0
        } else {
            below.min(above)
        }
    };
    Ok(index as u16)
}

/// 3D positions of every element of the panel grid, row-major (the row index
/// varies slowest). This ordering is normative for the wire format.
///
/// The grid lies in the plane orthogonal to `spec.normal`, centred at
/// `spec.center`, with pitch `spec.spacing_m` along two orthogonal in-plane
/// axes: columns run along the horizontal in-plane axis `z_hat x normal`,
/// rows along the remaining axis (up for a wall-mounted panel).
pub fn element_positions(spec: &RisSpec) -> Result<Vec<Point3>, RisError> {
    let n = spec.normal;
    if n.norm() == 0.0 {
        return Err(RisError::NotUnitNormal(0.0));
    }
    let z_hat = Point3::new(0.0, 0.0, 1.0);
    let col_axis = match z_hat.cross(&n).normalized() {
        Some(u) => u,
        // Panel facing straight up/down: use the x axis for columns.
        None => Point3::new(1.0, 0.0, 0.0),
    };
    let row_axis = n.cross(&col_axis);

    let s = spec.spacing_m;
    let row_off = f64::from(spec.rows - 1) / 2.0;
    let col_off = f64::from(spec.cols - 1) / 2.0;
    let mut out = Vec::with_capacity(spec.n_elements());
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            let dr = (f64::from(r) - row_off) * s;
            let dc = (f64::from(c) - col_off) * s;
            out.push(
                spec.center
                    .add(&row_axis.scale(dr))
                    .add(&col_axis.scale(dc)),
            );
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn spec(rows: u16, cols: u16, bits: u8) -> RisSpec {
        RisSpec::new(
            rows,
            cols,
            bits,
            0.005,
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(-1.0, 0.0, 0.0),
            0.005,
            AmplitudeParams::practical(),
        )
        .unwrap()
    }

    #[test]
    fn phase_set_one_bit() {
        let q = phase_set(1).unwrap();
        assert_eq!(q.len(), 2);
        assert_eq!(q[0], 0.0);
        assert!((q[1] - PI).abs() < 1e-15);
    }

    #[test]
    fn phase_set_two_bits() {
        let q = phase_set(2).unwrap();
        let expect = [0.0, PI / 2.0, PI, 3.0 * PI / 2.0];
        for (a, b) in q.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn phase_set_three_bits_uniform_gap() {
        let q = phase_set(3).unwrap();
        assert_eq!(q.len(), 8);
        for w in q.windows(2) {
            assert!((w[1] - w[0] - TAU / 8.0).abs() < 1e-12);
        }
    }

    #[test]
    fn phase_set_rejects_continuous_and_oversize() {
        assert!(matches!(phase_set(0), Err(RisError::ContinuousHasNoPhaseSet)));
        assert!(matches!(phase_set(17), Err(RisError::PhaseBitsOutOfRange(17))));
    }

    #[test]
    fn amplitude_ideal_when_omega_zero() {
        let amp = AmplitudeParams {
            rho_min: 0.2,
            xi_rad: 1.0,
            omega: 0.0,
        };
        for theta in [0.0, 0.7, PI, 5.1] {
            assert_eq!(reflection_amplitude(theta, &amp), 1.0);
        }
    }

    #[test]
    fn amplitude_peak_and_floor() {
        let amp = AmplitudeParams::practical();
        let peak = reflection_amplitude(amp.xi_rad + PI / 2.0, &amp);
        assert!((peak - 1.0).abs() < 1e-12);
        let floor = reflection_amplitude(amp.xi_rad - PI / 2.0, &amp);
        assert!((floor - 0.2).abs() < 1e-12);
    }

    #[test]
    fn amplitude_at_xi() {
        // Hand-evaluated: 0.8 * 0.5^1.6 + 0.2 = 0.46390...
        let amp = AmplitudeParams::practical();
        let rho = reflection_amplitude(amp.xi_rad, &amp);
        assert!((rho - 0.4639).abs() < 1e-4, "rho = {rho}");
    }

    #[test]
    fn amplitude_periodic_and_bounded() {
        let amp = AmplitudeParams::practical();
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        // Grid anchored at xi so the extrema at xi +- pi/2 are grid points.
        for k in 0..4096 {
            let theta = amp.xi_rad + TAU * k as f64 / 4096.0;
            let rho = reflection_amplitude(theta, &amp);
            assert!((rho - reflection_amplitude(theta + TAU, &amp)).abs() < 1e-12);
            min = min.min(rho);
            max = max.max(rho);
        }
        assert!((min - amp.rho_min).abs() < 1e-9);
        assert!((max - 1.0).abs() < 1e-9);
    }

    #[test]
    fn coefficient_magnitude_matches_amplitude() {
        let amp = AmplitudeParams::practical();
        let theta = amp.xi_rad;
        let c = reflection_coefficient(theta, &amp);
        assert!((c.norm() - reflection_amplitude(theta, &amp)).abs() < 1e-12);
        assert!((c.arg() - theta).abs() < 1e-12);
    }

    #[test]
    fn coefficient_ideal_cases() {
        let amp = AmplitudeParams::ideal();
        let one = reflection_coefficient(0.0, &amp);
        assert!((one - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        let minus_one = reflection_coefficient(PI, &amp);
        assert!((minus_one - Complex64::new(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn quantize_basic_and_ties() {
        assert_eq!(quantize_phase(0.1, 1).unwrap(), 0);
        // 3*pi/2 is equidistant from 0 and pi; the smaller phase (0) wins.
        assert_eq!(quantize_phase(3.0 * PI / 2.0, 1).unwrap(), 0);
        // -pi/4 wraps to 7*pi/4, equidistant from 3*pi/2 and 0; 0 wins.
        assert_eq!(quantize_phase(-PI / 4.0, 2).unwrap(), 0);
        assert_eq!(quantize_phase(PI / 2.0, 1).unwrap(), 0);
    }

    #[test]
    fn quantize_round_trips_every_level() {
        for bits in 1..=8u8 {
            let set = phase_set(bits).unwrap();
            for (k, &theta) in set.iter().enumerate() {
                assert_eq!(quantize_phase(theta, bits).unwrap(), k as u16);
            }
        }
    }

    #[test]
    fn quantize_error_bounded_by_half_step() {
        let bits = 3u8;
        let step = TAU / 8.0;
        for i in 0..1000 {
            let theta = -10.0 + 20.0 * (i as f64) / 1000.0;
            let idx = quantize_phase(theta, bits).unwrap();
            let level = level_phase(idx, bits);
            let mut d = (wrap_phase(theta) - level).abs();
            if d > PI {
                d = TAU - d;
            }
            assert!(d <= step / 2.0 + 1e-12, "theta={theta} d={d}");
        }
    }

    #[test]
    fn positions_single_element_is_center() {
        let s = spec(1, 1, 1);
        let pos = element_positions(&s).unwrap();
        assert_eq!(pos.len(), 1);
        assert!(pos[0].sub(&s.center).norm() < 1e-15);
    }

    #[test]
    fn positions_1x2_split_about_center() {
        let s = spec(1, 2, 1);
        let pos = element_positions(&s).unwrap();
        assert_eq!(pos.len(), 2);
        let gap = pos[1].sub(&pos[0]).norm();
        assert!((gap - s.spacing_m).abs() < 1e-12);
        let mid = pos[0].add(&pos[1]).scale(0.5);
        assert!(mid.sub(&s.center).norm() < 1e-12);
        // Both in the panel plane (orthogonal to the normal through center).
        for p in &pos {
            assert!(p.sub(&s.center).dot(&s.normal).abs() < 1e-12);
        }
    }

    #[test]
    fn positions_2x2_form_a_square() {
        let s = spec(2, 2, 1);
        let pos = element_positions(&s).unwrap();
        assert_eq!(pos.len(), 4);
        let mut dists = Vec::new();
        for i in 0..4 {
            for j in (i + 1)..4 {
                dists.push(pos[j].sub(&pos[i]).norm());
            }
        }
        dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let s0 = s.spacing_m;
        for d in &dists[..4] {
            assert!((d - s0).abs() < 1e-12);
        }
        for d in &dists[4..] {
            assert!((d - s0 * 2f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn positions_row_major_ordering() {
        // Row index varies slowest: elements 0 and 1 differ along the column
        // axis, elements 0 and `cols` differ along the row axis.
        let s = spec(3, 4, 1);
        let pos = element_positions(&s).unwrap();
        let col_step = pos[1].sub(&pos[0]);
        let row_step = pos[4].sub(&pos[0]);
        assert!(col_step.dot(&row_step).abs() < 1e-12);
        assert!((col_step.norm() - s.spacing_m).abs() < 1e-12);
        assert!((row_step.norm() - s.spacing_m).abs() < 1e-12);
    }

    #[test]
    fn positions_minimum_pairwise_distance_is_pitch() {
        let s = spec(4, 5, 1);
        let pos = element_positions(&s).unwrap();
        let mut min = f64::INFINITY;
        for i in 0..pos.len() {
            for j in (i + 1)..pos.len() {
                min = min.min(pos[j].sub(&pos[i]).norm());
            }
        }
        assert!((min - s.spacing_m).abs() < 1e-12);
    }

    #[test]
    fn spec_rejects_bad_inputs() {
        let center = Point3::new(0.0, 0.0, 0.0);
        let n = Point3::new(-1.0, 0.0, 0.0);
        let amp = AmplitudeParams::practical();
        assert!(RisSpec::new(0, 4, 1, 0.005, center, n, 0.005, amp).is_err());
        assert!(RisSpec::new(4, 4, 17, 0.005, center, n, 0.005, amp).is_err());
        assert!(RisSpec::new(4, 4, 1, 0.0, center, n, 0.005, amp).is_err());
        let skewed = Point3::new(-2.0, 0.0, 0.0);
        assert!(RisSpec::new(4, 4, 1, 0.005, center, skewed, 0.005, amp).is_err());
    }

    #[test]
    fn config_validation() {
        let s = spec(2, 2, 2);
        let good = PhaseConfig::Discrete {
            bits: 2,
            indices: vec![0, 1, 2, 3],
        };
        assert!(good.validate_for(&s).is_ok());
        let bad_index = PhaseConfig::Discrete {
            bits: 2,
            indices: vec![0, 1, 2, 4],
        };
        assert!(matches!(
            bad_index.validate_for(&s),
            Err(RisError::IndexOutOfRange { .. })
        ));
        let bad_len = PhaseConfig::Discrete {
            bits: 2,
            indices: vec![0, 1],
        };
        assert!(matches!(
            bad_len.validate_for(&s),
            Err(RisError::ConfigLengthMismatch { .. })
        ));
        let bad_mode = PhaseConfig::Continuous(vec![0.0; 4]);
        assert!(matches!(
            bad_mode.validate_for(&s),
            Err(RisError::ConfigModeMismatch { .. })
        ));
    }

    #[test]
    fn zero_config_matches_mode() {
        let d = spec(2, 3, 1).zero_config();
        assert!(d.is_discrete());
        assert_eq!(d.len(), 6);
        let mut c = spec(2, 3, 1);
        c.phase_bits = 0;
        let cc = c.zero_config();
        assert!(!cc.is_discrete());
        assert_eq!(cc.len(), 6);
    }
}
