//! Test events: predicates on the restriction of a configuration to `Λ_{n′}`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};
use std::fmt;
use std::str::FromStr;

use mwgibbs_core::config_space::{Configuration, MarkedParticle, Region, Window};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestEvent {
    Full,
    Impossible,
    /// The mean spin vector lies in the open half-plane `⟨v, e^{i·angle}⟩ > 0`;
    /// false on an empty restriction.
    HalfPlane { angle: f64 },
    /// At least `min_count` spins in the arc `[start, start + width)`.
    SpinSector { start: f64, width: f64, min_count: usize },
    /// Particle count in `lo..=hi`.
    CountBand { lo: usize, hi: usize },
}

/// The three families run by the main-inequality experiment.
pub const SHIPPED: [&str; 3] = ["half-plane", "sector", "count-band"];

impl TestEvent {
    pub fn holds(&self, cfg: &Configuration, window: &Window) -> bool {
        let inside = || cfg.iter().filter(|p| window.contains(&p.position));
        match *self {
            TestEvent::Full => true,
            TestEvent::Impossible => false,
            TestEvent::HalfPlane { angle } => {
                let (c, s) = (angle.cos(), angle.sin());
                let dot: f64 = inside().map(|p| dot(p, c, s)).sum();
                dot > 0.0
            }
            TestEvent::SpinSector { start, width, min_count } => {
                inside()
                    .filter(|p| (p.spin.angle() - start).rem_euclid(TAU) < width)
                    .count()
                    >= min_count
            }
            TestEvent::CountBand { lo, hi } => (lo..=hi).contains(&inside().count()),
        }
    }

    /// `1_{τB}(Y) = 1_B(τ⁻¹Y)` for the global rotation by `tau`.
    pub fn holds_rotated(&self, cfg: &Configuration, window: &Window, tau: f64) -> bool {
        self.holds(&cfg.rotate_all(-tau), window)
    }

    /// The family name alone for default parameters, else the full form.
    pub fn name(&self) -> String {
        let family = self.to_string().split(':').next().unwrap_or_default().to_string();
        match family.parse::<TestEvent>() {
            Ok(default) if default == *self => family,
            _ => self.to_string(),
        }
    }
}

fn dot(p: &MarkedParticle, c: f64, s: f64) -> f64 {
    let a = p.spin.angle();
    a.cos() * c + a.sin() * s
}

impl fmt::Display for TestEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestEvent::Full => write!(f, "full"),
            TestEvent::Impossible => write!(f, "impossible"),
            TestEvent::HalfPlane { angle } => write!(f, "half-plane:{angle}"),
            TestEvent::SpinSector { start, width, min_count } => {
                write!(f, "sector:{start}:{width}:{min_count}")
            }
            TestEvent::CountBand { lo, hi } => write!(f, "count-band:{lo}:{hi}"),
        }
    }
}

impl FromStr for TestEvent {
    type Err = String;

    /// `full`, `impossible`, `half-plane[:angle]`,
    /// `sector[:start:width:min_count]`, `count-band[:lo:hi]`.
    fn from_str(s: &str) -> Result<Self, String> {
        let mut parts = s.split(':');
        let kind = parts.next().unwrap_or_default();
        let args: Vec<&str> = parts.collect();
        let num = |k: usize| -> Result<f64, String> {
            args[k].parse::<f64>().map_err(|e| format!("event `{s}`: {e}"))
        };
        let count = |k: usize| -> Result<usize, String> {
            args[k].parse::<usize>().map_err(|e| format!("event `{s}`: {e}"))
        };
        let event = match (kind, args.len()) {
            ("full", 0) => TestEvent::Full,
            ("impossible", 0) => TestEvent::Impossible,
            ("half-plane", 0) => TestEvent::HalfPlane { angle: 0.0 },
            ("half-plane", 1) => TestEvent::HalfPlane { angle: num(0)? },
            ("sector", 0) => TestEvent::SpinSector { start: -FRAC_PI_4, width: FRAC_PI_2, min_count: 1 },
            ("sector", 3) => TestEvent::SpinSector { start: num(0)?, width: num(1)?, min_count: count(2)? },
            ("count-band", 0) => TestEvent::CountBand { lo: 6, hi: 14 },
            ("count-band", 2) => TestEvent::CountBand { lo: count(0)?, hi: count(1)? },
            _ => return Err(format!("unknown event `{s}`")),
        };
        if let TestEvent::SpinSector { width, .. } = event {
            if !(width > 0.0 && width <= TAU) {
                return Err(format!("event `{s}`: sector width must lie in (0, 2pi]"));
            }
        }
        if let TestEvent::CountBand { lo, hi } = event {
            if lo > hi {
                return Err(format!("event `{s}`: empty count band"));
            }
        }
        if let TestEvent::HalfPlane { angle } = event {
            if !angle.is_finite() || angle.abs() > 2.0 * PI {
                return Err(format!("event `{s}`: angle out of range"));
            }
        }
        Ok(event)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display_round_trip() {
        for s in ["full", "impossible", "half-plane", "sector", "count-band", "sector:0.5:1:3", "count-band:2:9"] {
            let e: TestEvent = s.parse().unwrap();
            assert_eq!(e.to_string().parse::<TestEvent>().unwrap(), e);
        }
        for bad in ["", "half", "count-band:5:2", "sector:0:0:1", "sector:1", "full:1"] {
            assert!(bad.parse::<TestEvent>().is_err(), "{bad}");
        }
    }

    #[test]
    fn small_examples() {
        let w = Window::new(1.0).unwrap();
        let at = MarkedParticle::at;
        let cfg = Configuration::new(vec![at(0.0, 0.0, 0.1), at(0.5, 0.5, 0.3), at(5.0, 0.0, PI)]).unwrap();
        assert!(TestEvent::HalfPlane { angle: 0.0 }.holds(&cfg, &w));
        assert!(!TestEvent::HalfPlane { angle: PI }.holds(&cfg, &w));
        assert!(!TestEvent::HalfPlane { angle: 0.0 }.holds(&Configuration::empty(), &w));
        assert!(TestEvent::CountBand { lo: 2, hi: 2 }.holds(&cfg, &w));
        assert!(TestEvent::SpinSector { start: 0.0, width: 0.2, min_count: 1 }.holds(&cfg, &w));
        assert!(!TestEvent::SpinSector { start: 0.0, width: 0.2, min_count: 2 }.holds(&cfg, &w));
        // the arc wraps around 0
        assert!(TestEvent::SpinSector { start: 6.0, width: 0.5, min_count: 1 }.holds(&cfg, &w));
        assert_eq!("sector".parse::<TestEvent>().unwrap().name(), "sector");
        assert_eq!(TestEvent::CountBand { lo: 1, hi: 3 }.name(), "count-band:1:3");
        // rotating by pi moves the mean spin to the other side
        assert!(TestEvent::HalfPlane { angle: PI }.holds_rotated(&cfg, &w, PI));
    }
}
