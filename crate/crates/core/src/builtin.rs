//! Named (domain, time function, transport field) triples with their
//! causality constants.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::characteristics::ScaledField;
use crate::geometry::{Domain, Region};
use crate::timefield::{
    NormalField, OuterDistance, RadialTime, SegmentAttractor, SegmentTime, TimeField, TransportField,
};
use crate::Point;

pub const BUILTIN_NAMES: [&str; 4] = ["radial", "spiral", "disk-segment", "rect-skeleton"];

/// Rotation angle of the spiral field.
pub const SPIRAL_ANGLE: f64 = PI / 6.0;

/// Exponent of the smoothed box distance used by `rect-skeleton`.
pub const RECT_SMOOTHING: f64 = 4.0;

// Infima located by sampling and confirmed by hand: for the disk, β = cos(π/6)
// at (±1/2, ±√3/2) and m₀ = 1/2 at (0, ±1); for the rectangle, β = 1/√2 and
// m₀ = 2^{-3/4}/√2 ≈ 0.4204 at the corners. Declared values sit below them.
const DISK_SEGMENT_BETA: f64 = 0.85;
const DISK_SEGMENT_M0: f64 = 0.45;
const RECT_SKELETON_BETA: f64 = 0.7;
const RECT_SKELETON_M0: f64 = 0.38;

#[derive(Clone)]
pub struct Builtin {
    pub name: &'static str,
    pub domain: Arc<Domain>,
    pub tf: TimeField,
    pub c: TransportField,
}

impl std::fmt::Debug for Builtin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Builtin")
            .field("name", &self.name)
            .field("tf", &self.tf)
            .field("c", &self.c)
            .finish()
    }
}

impl Builtin {
    pub fn beta(&self) -> f64 {
        self.c.beta
    }

    pub fn m0(&self) -> f64 {
        self.tf.m0().expect("built-ins carry m0")
    }

    pub fn region(&self) -> Arc<dyn Region> {
        self.domain.clone()
    }

    pub fn scaled_field(&self) -> ScaledField {
        ScaledField::new(self.region(), self.tf.clone(), self.c.clone())
    }

    /// The same problem with the transport field rotated by `angle`.
    pub fn rotated(&self, angle: f64) -> Self {
        let beta = self.c.beta * angle.cos() - angle.sin().abs();
        Builtin {
            c: self.c.rotated(angle, beta.max(f64::MIN_POSITIVE)),
            ..self.clone()
        }
    }
}

pub fn builtin(name: &str) -> Option<Builtin> {
    match name {
        "radial" | "disk" => Some(radial(0.0)),
        "spiral" => Some(radial(SPIRAL_ANGLE)),
        "disk-segment" => Some(segment(
            "disk-segment",
            Domain::disk_segment(),
            OuterDistance::Circle {
                center: Point::zeros(),
                radius: 1.0,
            },
            DISK_SEGMENT_BETA,
            DISK_SEGMENT_M0,
        )),
        "rect-skeleton" => Some(segment(
            "rect-skeleton",
            Domain::rect_skeleton(),
            OuterDistance::SmoothBox {
                min: Point::new(-1.0, -0.5),
                max: Point::new(1.0, 0.5),
                k: RECT_SMOOTHING,
            },
            RECT_SKELETON_BETA,
            RECT_SKELETON_M0,
        )),
        _ => None,
    }
}

/// Unit disk, T = 1 − |x|, q = 2, c = N rotated by `angle`; β = cos(angle),
/// m₀ = 1/2 exactly.
pub fn radial(angle: f64) -> Builtin {
    let map = RadialTime {
        center: Point::zeros(),
        radius: 1.0,
    };
    Builtin {
        name: if angle == 0.0 { "radial" } else { "spiral" },
        domain: Arc::new(Domain::disk()),
        tf: TimeField::analytic(map, 2.0).with_m0(0.5),
        c: TransportField::from_field(
            NormalField {
                time: Arc::new(map),
                angle,
            },
            angle.cos(),
        ),
    }
}

fn segment(name: &'static str, domain: Domain, outer: OuterDistance, beta: f64, m0: f64) -> Builtin {
    let (a, b) = (Point::new(-0.5, 0.0), Point::new(0.5, 0.0));
    Builtin {
        name,
        domain: Arc::new(domain),
        tf: TimeField::analytic(SegmentTime { outer, a, b }, 2.0).with_m0(m0),
        c: TransportField::from_field(SegmentAttractor { a, b }, beta),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timefield::{check_causality, estimate_m0, sample_region, unit_speed_defect};

    #[test]
    fn declared_constants_are_honest() {
        for name in BUILTIN_NAMES {
            let b = builtin(name).unwrap();
            let samples = sample_region(b.domain.as_ref(), &b.tf, 200, 1e-8);
            let beta = check_causality(&b.tf, &b.c, &samples).unwrap();
            assert!(beta >= b.beta() - 1e-12, "{name}: β {beta} < {}", b.beta());
            let sampled_min = estimate_m0(&b.tf, &samples).unwrap() / 0.9;
            assert!(sampled_min >= b.m0(), "{name}: m0 {sampled_min} vs {}", b.m0());
            assert!(unit_speed_defect(&b.c, &samples) < 1e-12);
        }
    }
}
