//! Indoor-factory deployment scenarios: the five InF sub-scenario variants,
//! hall geometry with statistical clutter, and node placement validation.
//!
//! A scenario is accepted only when every constraint of the deployment table
//! holds (hall area, ceiling height per variant, clutter density class,
//! clutter-embedded vs above-clutter antenna heights, positions inside the
//! hall). Accepted scenarios are immutable.

use crate::geom::Point3;
use thiserror::Error;

/// The five indoor-factory sub-scenarios, classified by clutter density
/// (sparse `< 0.4` vs dense `>= 0.4`) and AP/UE heights relative to clutter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InfVariant {
    /// Sparse clutter, low AP and UE (both clutter-embedded).
    Sl,
    /// Dense clutter, low AP and UE.
    Dl,
    /// Sparse clutter, high AP (above clutter), low UE.
    Sh,
    /// Dense clutter, high AP, low UE.
    Dh,
    /// High AP and high UE, guaranteed line of sight.
    Hh,
}

impl InfVariant {
    pub const ALL: [InfVariant; 5] = [
        InfVariant::Sl,
        InfVariant::Dl,
        InfVariant::Sh,
        InfVariant::Dh,
        InfVariant::Hh,
    ];

    /// Dense-clutter variants require clutter density >= 0.4.
    pub fn is_dense(&self) -> bool {
        matches!(self, InfVariant::Dl | InfVariant::Dh)
    }

    /// Sparse-clutter variants require clutter density < 0.4.
    pub fn is_sparse(&self) -> bool {
        matches!(self, InfVariant::Sl | InfVariant::Sh)
    }

    /// Variants with the AP mounted above the clutter height.
    pub fn ap_above_clutter(&self) -> bool {
        matches!(self, InfVariant::Sh | InfVariant::Dh | InfVariant::Hh)
    }

    /// Variants with the UE above the clutter height (HH only).
    pub fn ue_above_clutter(&self) -> bool {
        matches!(self, InfVariant::Hh)
    }

    /// Allowed ceiling height range in metres for this variant.
    pub fn ceiling_range_m(&self) -> (f64, f64) {
        match self {
            InfVariant::Dl | InfVariant::Dh => (5.0, 15.0),
            _ => (5.0, 25.0),
        }
    }

    /// Typical clutter size in metres, where the deployment table fixes one.
    /// `None` for HH (any clutter).
    pub fn typical_clutter_size_m(&self) -> Option<f64> {
        match self {
            InfVariant::Sl | InfVariant::Sh => Some(10.0),
            InfVariant::Dl | InfVariant::Dh => Some(2.0),
            InfVariant::Hh => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            InfVariant::Sl => "SL",
            InfVariant::Dl => "DL",
            InfVariant::Sh => "SH",
            InfVariant::Dh => "DH",
            InfVariant::Hh => "HH",
        }
    }

    pub fn parse(s: &str) -> Option<InfVariant> {
        match s.trim().to_ascii_uppercase().as_str() {
            "SL" => Some(InfVariant::Sl),
            "DL" => Some(InfVariant::Dl),
            "SH" => Some(InfVariant::Sh),
            "DH" => Some(InfVariant::Dh),
            "HH" => Some(InfVariant::Hh),
            _ => None,
        }
    }
}

impl std::fmt::Display for InfVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Rectangular factory hall with statistical clutter. Clutter is described by
/// density, typical size, and effective height only; individual obstacles are
/// never placed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactoryLayout {
    pub length_m: f64,
    pub width_m: f64,
    pub ceiling_height_m: f64,
    /// Fraction of the floor area occupied by clutter, in (0, 1).
    pub clutter_density_r: f64,
    /// Typical clutter element size in metres.
    pub clutter_size_m: f64,
    /// Effective clutter height in metres, below the ceiling.
    pub clutter_height_m: f64,
}

impl FactoryLayout {
    pub fn area_m2(&self) -> f64 {
        self.length_m * self.width_m
    }
}

/// 3D positions of the access point, RIS panel centre, and user equipment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Placement {
    pub ap_pos: Point3,
    pub ris_center: Point3,
    pub ue_pos: Point3,
}

/// Hall area bounds in m^2 (closed interval).
pub const AREA_MIN_M2: f64 = 20.0;
pub const AREA_MAX_M2: f64 = 160_000.0;
/// Clutter density threshold separating sparse from dense variants.
pub const DENSE_CLUTTER_THRESHOLD: f64 = 0.4;
/// Effective clutter height upper bound in metres.
pub const CLUTTER_HEIGHT_MAX_M: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("hall area {area_m2} m^2 outside [{AREA_MIN_M2}, {AREA_MAX_M2}] m^2")]
    AreaOutOfRange { area_m2: f64 },
    #[error("ceiling height {h_ceil} m outside [{min}, {max}] m for {variant}")]
    CeilingHeightOutOfRange {
        variant: InfVariant,
        h_ceil: f64,
        min: f64,
        max: f64,
    },
    #[error("clutter height {h_c} m must be in [0, {CLUTTER_HEIGHT_MAX_M}] m and below the ceiling ({h_ceil} m)")]
    ClutterHeightInvalid { h_c: f64, h_ceil: f64 },
    #[error("clutter size {d_clutter} m must be positive")]
    ClutterSizeInvalid { d_clutter: f64 },
    #[error("clutter density {r} must lie in (0, 1)")]
    ClutterDensityOutOfRange { r: f64 },
    #[error("clutter density {r} inconsistent with {variant}: expected {expected}")]
    ClutterDensityInconsistent {
        variant: InfVariant,
        r: f64,
        expected: &'static str,
    },
    #[error("AP height {ap_z} m inconsistent with {variant}: expected {expected} clutter height {h_c} m")]
    ApHeightInconsistent {
        variant: InfVariant,
        ap_z: f64,
        h_c: f64,
        expected: &'static str,
    },
    #[error("UE height {ue_z} m inconsistent with {variant}: expected {expected} clutter height {h_c} m")]
    UeHeightInconsistent {
        variant: InfVariant,
        ue_z: f64,
        h_c: f64,
        expected: &'static str,
    },
    #[error("{which} position ({x}, {y}, {z}) outside the hall")]
    PositionOutsideHall {
        which: &'static str,
        x: f64,
        y: f64,
        z: f64,
    },
    #[error("{which} position has a non-finite coordinate")]
    PositionNotFinite { which: &'static str },
}

/// A validated, immutable deployment scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct InfScenario {
    variant: InfVariant,
    layout: FactoryLayout,
    placement: Placement,
}

impl InfScenario {
    /// Validate every deployment-table constraint and return the immutable
    /// scenario. Each violated constraint maps to its own error.
    pub fn validate(
        variant: InfVariant,
        layout: FactoryLayout,
        placement: Placement,
    ) -> Result<InfScenario, ScenarioError> {
        let area = layout.area_m2();
        if !(area.is_finite() && (AREA_MIN_M2..=AREA_MAX_M2).contains(&area))
            || layout.length_m <= 0.0
            || layout.width_m <= 0.0
        {
            return Err(ScenarioError::AreaOutOfRange { area_m2: area });
        }

        let (ceil_min, ceil_max) = variant.ceiling_range_m();
        if !(ceil_min..=ceil_max).contains(&layout.ceiling_height_m) {
            return Err(ScenarioError::CeilingHeightOutOfRange {
                variant,
                h_ceil: layout.ceiling_height_m,
                min: ceil_min,
                max: ceil_max,
            });
        }

        let h_c = layout.clutter_height_m;
        if !(0.0..=CLUTTER_HEIGHT_MAX_M).contains(&h_c) || h_c >= layout.ceiling_height_m {
            return Err(ScenarioError::ClutterHeightInvalid {
                h_c,
                h_ceil: layout.ceiling_height_m,
            });
        }

        if !(layout.clutter_size_m > 0.0 && layout.clutter_size_m.is_finite()) {
            return Err(ScenarioError::ClutterSizeInvalid {
                d_clutter: layout.clutter_size_m,
            });
        }

        let r = layout.clutter_density_r;
        if !(r > 0.0 && r < 1.0) {
            return Err(ScenarioError::ClutterDensityOutOfRange { r });
        }
        if variant.is_sparse() && r >= DENSE_CLUTTER_THRESHOLD {
            return Err(ScenarioError::ClutterDensityInconsistent {
                variant,
                r,
                expected: "< 0.4 (sparse)",
            });
        }
        if variant.is_dense() && r < DENSE_CLUTTER_THRESHOLD {
            return Err(ScenarioError::ClutterDensityInconsistent {
                variant,
                r,
                expected: ">= 0.4 (dense)",
            });
        }

        for (which, pos) in [
            ("AP", &placement.ap_pos),
            ("RIS", &placement.ris_center),
            ("UE", &placement.ue_pos),
        ] {
            if !pos.is_finite() {
                return Err(ScenarioError::PositionNotFinite { which });
            }
            let inside = (0.0..=layout.length_m).contains(&pos.x)
                && (0.0..=layout.width_m).contains(&pos.y)
                && (0.0..=layout.ceiling_height_m).contains(&pos.z);
            if !inside {
                return Err(ScenarioError::PositionOutsideHall {
                    which,
                    x: pos.x,
                    y: pos.y,
                    z: pos.z,
                });
            }
        }

        let ap_z = placement.ap_pos.z;
        if variant.ap_above_clutter() {
            if ap_z <= h_c {
                return Err(ScenarioError::ApHeightInconsistent {
                    variant,
                    ap_z,
                    h_c,
                    expected: "above",
                });
            }
        } else if ap_z > h_c {
            return Err(ScenarioError::ApHeightInconsistent {
                variant,
                ap_z,
                h_c,
                expected: "at or below",
            });
        }

        let ue_z = placement.ue_pos.z;
        if variant.ue_above_clutter() {
            if ue_z <= h_c {
                return Err(ScenarioError::UeHeightInconsistent {
                    variant,
                    ue_z,
                    h_c,
                    expected: "above",
                });
            }
        } else if ue_z > h_c {
            return Err(ScenarioError::UeHeightInconsistent {
                variant,
                ue_z,
                h_c,
                expected: "at or below",
            });
        }

        Ok(InfScenario {
            variant,
            layout,
            placement,
        })
    }

    pub fn variant(&self) -> InfVariant {
        self.variant
    }

    pub fn layout(&self) -> &FactoryLayout {
        &self.layout
    }

    pub fn placement(&self) -> &Placement {
        &self.placement
    }

    /// True when `pos` lies inside the hall bounding box (boundaries included).
    pub fn contains(&self, pos: &Point3) -> bool {
        (0.0..=self.layout.length_m).contains(&pos.x)
            && (0.0..=self.layout.width_m).contains(&pos.y)
            && (0.0..=self.layout.ceiling_height_m).contains(&pos.z)
    }

    /// A copy of this scenario's placement with the UE moved to `ue_pos`.
    /// The new position is only checked for being inside the hall and
    /// height-consistent, via re-validation.
    pub fn with_ue_position(&self, ue_pos: Point3) -> Result<InfScenario, ScenarioError> {
        let placement = Placement {
            ue_pos,
            ..self.placement
        };
        InfScenario::validate(self.variant, self.layout, placement)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn case_study() -> (InfVariant, FactoryLayout, Placement) {
        (
            InfVariant::Dh,
            FactoryLayout {
                length_m: 75.0,
                width_m: 50.0,
                ceiling_height_m: 10.0,
                clutter_density_r: 0.6,
                clutter_size_m: 2.0,
                clutter_height_m: 2.0,
            },
            Placement {
                ap_pos: Point3::new(30.0, 0.0, 8.0),
                ris_center: Point3::new(75.0, 30.0, 6.0),
                ue_pos: Point3::new(72.0, 32.0, 1.5),
            },
        )
    }

    #[test]
    fn case_study_is_valid() {
        let (v, l, p) = case_study();
        let sc = InfScenario::validate(v, l, p).expect("case-study scenario must validate");
        assert_eq!(sc.variant(), InfVariant::Dh);
    }

    #[test]
    fn revalidation_is_idempotent() {
        let (v, l, p) = case_study();
        let sc = InfScenario::validate(v, l, p).unwrap();
        let sc2 = InfScenario::validate(sc.variant(), *sc.layout(), *sc.placement()).unwrap();
        assert_eq!(sc, sc2);
    }

    #[test]
    fn dense_variant_rejects_sparse_density() {
        let (v, mut l, p) = case_study();
        l.clutter_density_r = 0.3;
        let err = InfScenario::validate(v, l, p).unwrap_err();
        assert!(matches!(err, ScenarioError::ClutterDensityInconsistent { .. }));
    }

    #[test]
    fn density_exactly_0_4_is_dense() {
        let (v, mut l, p) = case_study();
        l.clutter_density_r = 0.4;
        assert!(InfScenario::validate(v, l, p).is_ok());
        // ... and is rejected for a sparse variant.
        let mut l2 = l;
        l2.clutter_density_r = 0.4;
        let p2 = Placement {
            ap_pos: Point3::new(30.0, 0.0, 8.0),
            ris_center: Point3::new(75.0, 30.0, 6.0),
            ue_pos: Point3::new(72.0, 32.0, 1.5),
        };
        let err = InfScenario::validate(InfVariant::Sh, l2, p2).unwrap_err();
        assert!(matches!(err, ScenarioError::ClutterDensityInconsistent { .. }));
    }

    #[test]
    fn area_below_minimum_rejected() {
        let layout = FactoryLayout {
            length_m: 4.0,
            width_m: 4.0,
            ceiling_height_m: 6.0,
            clutter_density_r: 0.2,
            clutter_size_m: 10.0,
            clutter_height_m: 2.0,
        };
        let p = Placement {
            ap_pos: Point3::new(1.0, 1.0, 1.0),
            ris_center: Point3::new(3.0, 3.0, 3.0),
            ue_pos: Point3::new(2.0, 2.0, 1.0),
        };
        let err = InfScenario::validate(InfVariant::Sl, layout, p).unwrap_err();
        assert!(matches!(err, ScenarioError::AreaOutOfRange { .. }));
    }

    #[test]
    fn area_bounds_are_closed() {
        // Exactly 20 m^2 is accepted.
        let layout = FactoryLayout {
            length_m: 5.0,
            width_m: 4.0,
            ceiling_height_m: 6.0,
            clutter_density_r: 0.2,
            clutter_size_m: 10.0,
            clutter_height_m: 1.0,
        };
        let p = Placement {
            ap_pos: Point3::new(1.0, 1.0, 0.5),
            ris_center: Point3::new(4.0, 3.0, 3.0),
            ue_pos: Point3::new(2.0, 2.0, 1.0),
        };
        assert!(InfScenario::validate(InfVariant::Sl, layout, p).is_ok());
    }

    #[test]
    fn clutter_height_must_stay_below_ceiling() {
        let (v, mut l, p) = case_study();
        l.clutter_height_m = 10.0; // equal to ceiling
        let err = InfScenario::validate(v, l, p).unwrap_err();
        assert!(matches!(err, ScenarioError::ClutterHeightInvalid { .. }));
    }

    #[test]
    fn position_outside_hall_rejected() {
        let (v, l, mut p) = case_study();
        p.ue_pos = Point3::new(80.0, 32.0, 1.5);
        let err = InfScenario::validate(v, l, p).unwrap_err();
        assert!(matches!(
            err,
            ScenarioError::PositionOutsideHall { which: "UE", .. }
        ));
    }

    #[test]
    fn low_variant_requires_embedded_ap() {
        let (_, mut l, mut p) = case_study();
        l.clutter_density_r = 0.6;
        p.ap_pos = Point3::new(30.0, 0.0, 8.0); // above h_c = 2
        let err = InfScenario::validate(InfVariant::Dl, l, p).unwrap_err();
        assert!(matches!(err, ScenarioError::ApHeightInconsistent { .. }));

        p.ap_pos = Point3::new(30.0, 0.0, 1.5);
        assert!(InfScenario::validate(InfVariant::Dl, l, p).is_ok());
    }

    #[test]
    fn hh_requires_ue_above_clutter() {
        let (_, l, p) = case_study();
        let err = InfScenario::validate(InfVariant::Hh, l, p).unwrap_err();
        assert!(matches!(err, ScenarioError::UeHeightInconsistent { .. }));

        let p2 = Placement {
            ue_pos: Point3::new(72.0, 32.0, 3.0),
            ..p
        };
        assert!(InfScenario::validate(InfVariant::Hh, l, p2).is_ok());
    }

    #[test]
    fn ceiling_range_depends_on_variant() {
        let (_, mut l, mut p) = case_study();
        l.ceiling_height_m = 20.0;
        // Dense-low ceilings are capped at 15 m.
        p.ap_pos = Point3::new(30.0, 0.0, 1.5);
        let err = InfScenario::validate(InfVariant::Dl, l, p).unwrap_err();
        assert!(matches!(err, ScenarioError::CeilingHeightOutOfRange { .. }));
        // Sparse-high allows up to 25 m.
        l.clutter_density_r = 0.2;
        p.ap_pos = Point3::new(30.0, 0.0, 8.0);
        assert!(InfScenario::validate(InfVariant::Sh, l, p).is_ok());
    }

    #[test]
    fn ap_height_consistency_matches_variant_class() {
        let (v, l, p) = case_study();
        let sc = InfScenario::validate(v, l, p).unwrap();
        assert!(sc.variant().ap_above_clutter());
        assert!(sc.placement().ap_pos.z > sc.layout().clutter_height_m);
    }
}
