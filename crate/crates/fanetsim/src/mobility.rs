//! Analytic node trajectories: exact positions at any simulation time.
//!
//! Positions are closed-form functions of time, so channel evaluation at a
//! transmission instant never depends on a tick rate. State only changes when
//! the runner advances a random-waypoint leg via [`MobilityState::next_leg`].

use serde::{Deserialize, Serialize};

use crate::engine::{RandomStream, SimTime};

/// Point in meters; right-handed, z is altitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Position { x, y, z }
    }

    /// Euclidean distance in meters.
    pub fn distance(self, other: Position) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

/// Free-function form of [`Position::distance`].
pub fn distance(a: Position, b: Position) -> f64 {
    a.distance(b)
}

/// Axis-aligned scenario bounds. Random waypoints are drawn inside it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsBox {
    pub min: Position,
    pub max: Position,
}

impl BoundsBox {
    pub fn is_valid(&self) -> bool {
        self.min.x <= self.max.x
            && self.min.y <= self.max.y
            && self.min.z <= self.max.z
            && self.min.z >= 0.0
    }

    pub fn contains(&self, p: Position) -> bool {
        (self.min.x..=self.max.x).contains(&p.x)
            && (self.min.y..=self.max.y).contains(&p.y)
            && (self.min.z..=self.max.z).contains(&p.z)
    }
}

/// One straight-line segment of a random-waypoint trajectory. The node sits
/// clamped at `end` from arrival until the next leg departs.
#[derive(Debug, Clone, PartialEq)]
pub struct Leg {
    pub start: Position,
    pub end: Position,
    pub depart: SimTime,
    pub speed_mps: f64,
}

impl Leg {
    pub fn length_m(&self) -> f64 {
        self.start.distance(self.end)
    }

    /// Arrival instant, rounded up to whole microseconds so the node has
    /// always reached the waypoint by the time a leg-advance event fires.
    pub fn arrival(&self) -> SimTime {
        let travel_s = self.length_m() / self.speed_mps;
        self.depart.plus_us((travel_s * 1e6).ceil() as u64)
    }

    fn position_at(&self, t: SimTime) -> Position {
        assert!(
            t >= self.depart,
            "position query at {t} precedes leg departure {}",
            self.depart
        );
        let len = self.length_m();
        if len == 0.0 {
            return self.end;
        }
        let travelled = self.speed_mps * (t.as_us() - self.depart.as_us()) as f64 / 1e6;
        if travelled >= len {
            return self.end; // clamped at the waypoint during pause
        }
        let f = travelled / len;
        Position {
            x: self.start.x + (self.end.x - self.start.x) * f,
            y: self.start.y + (self.end.y - self.start.y) * f,
            z: self.start.z + (self.end.z - self.start.z) * f,
        }
    }
}

/// Per-node trajectory state.
#[derive(Debug, Clone, PartialEq)]
pub enum MobilityState {
    Static {
        pos: Position,
    },
    RandomWaypoint {
        bounds: BoundsBox,
        speed_range: (f64, f64),
        pause: SimTime,
        leg: Leg,
    },
    CircularOrbit {
        center: Position,
        radius_m: f64,
        angular_speed: f64,
        theta0: f64,
        start: SimTime,
    },
}

impl MobilityState {
    /// Builds the initial random-waypoint state at `t0`. If `start_pos` is
    /// absent the start is drawn uniformly in the bounds (3 draws: x, y, z);
    /// the first leg then consumes the usual 4 draws via [`Self::next_leg`]'s
    /// sampling order (wx, wy, wz, speed).
    pub fn random_waypoint_init(
        bounds: BoundsBox,
        speed_range: (f64, f64),
        pause: SimTime,
        start_pos: Option<Position>,
        rng: &mut RandomStream,
        t0: SimTime,
    ) -> MobilityState {
        let start = start_pos.unwrap_or_else(|| sample_in_bounds(&bounds, rng));
        let (end, speed) = sample_leg_target(&bounds, speed_range, rng);
        MobilityState::RandomWaypoint {
            bounds,
            speed_range,
            pause,
            leg: Leg {
                start,
                end,
                depart: t0,
                speed_mps: speed,
            },
        }
    }

    /// Exact position at `t`. Panics if `t` precedes the trajectory start or
    /// the active leg's departure (the runner advances legs first).
    pub fn position_at(&self, t: SimTime) -> Position {
        match self {
            MobilityState::Static { pos } => *pos,
            MobilityState::RandomWaypoint { leg, .. } => leg.position_at(t),
            MobilityState::CircularOrbit {
                center,
                radius_m,
                angular_speed,
                theta0,
                start,
            } => {
                assert!(
                    t >= *start,
                    "position query at {t} precedes orbit start {start}"
                );
                let dt = (t.as_us() - start.as_us()) as f64 / 1e6;
                let theta = theta0 + angular_speed * dt;
                Position {
                    x: center.x + radius_m * theta.cos(),
                    y: center.y + radius_m * theta.sin(),
                    z: center.z,
                }
            }
        }
    }

    /// Advances a completed random-waypoint leg: new waypoint uniform in the
    /// bounds, new speed uniform in the speed range, departing after the
    /// pause. Draws exactly 4 values in order (wx, wy, wz, speed). Panics on
    /// non-random-waypoint states.
    pub fn next_leg(&self, rng: &mut RandomStream) -> MobilityState {
        let MobilityState::RandomWaypoint {
            bounds,
            speed_range,
            pause,
            leg,
        } = self
        else {
            panic!("next_leg on a non-random-waypoint trajectory");
        };
        let (end, speed) = sample_leg_target(bounds, *speed_range, rng);
        MobilityState::RandomWaypoint {
            bounds: *bounds,
            speed_range: *speed_range,
            pause: *pause,
            leg: Leg {
                start: leg.end,
                end,
                depart: leg.arrival().plus_us(pause.as_us()),
                speed_mps: speed,
            },
        }
    }

    /// Instant at which the current leg completes (arrival + pause), i.e.
    /// when the runner should call [`Self::next_leg`]. None for models that
    /// never transition.
    pub fn next_transition(&self) -> Option<SimTime> {
        match self {
            MobilityState::RandomWaypoint { pause, leg, .. } => {
                Some(leg.arrival().plus_us(pause.as_us()))
            }
            _ => None,
        }
    }
}

fn sample_in_bounds(bounds: &BoundsBox, rng: &mut RandomStream) -> Position {
    Position {
        x: rng.next_range_f64(bounds.min.x, bounds.max.x),
        y: rng.next_range_f64(bounds.min.y, bounds.max.y),
        z: rng.next_range_f64(bounds.min.z, bounds.max.z),
    }
}

fn sample_leg_target(
    bounds: &BoundsBox,
    speed_range: (f64, f64),
    rng: &mut RandomStream,
) -> (Position, f64) {
    let end = sample_in_bounds(bounds, rng);
    let speed = rng.next_range_f64(speed_range.0, speed_range.1);
    (end, speed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{rng_stream, NodeId};
    use proptest::prelude::*;

    fn unit_box() -> BoundsBox {
        BoundsBox {
            min: Position::new(0.0, 0.0, 0.0),
            max: Position::new(100.0, 100.0, 100.0),
        }
    }

    #[test]
    fn static_position_is_constant() {
        let s = MobilityState::Static {
            pos: Position::new(10.0, 20.0, 30.0),
        };
        for t in [0u64, 1, 1_000_000, 987_654_321] {
            assert_eq!(
                s.position_at(SimTime::from_us(t)),
                Position::new(10.0, 20.0, 30.0)
            );
        }
    }

    #[test]
    fn linear_leg_midpoint() {
        let s = MobilityState::RandomWaypoint {
            bounds: unit_box(),
            speed_range: (10.0, 10.0),
            pause: SimTime::ZERO,
            leg: Leg {
                start: Position::new(0.0, 0.0, 50.0),
                end: Position::new(100.0, 0.0, 50.0),
                depart: SimTime::ZERO,
                speed_mps: 10.0,
            },
        };
        let p = s.position_at(SimTime::from_secs(5));
        assert_eq!(p, Position::new(50.0, 0.0, 50.0));
    }

    #[test]
    fn leg_clamps_at_waypoint_during_pause() {
        let leg = Leg {
            start: Position::new(0.0, 0.0, 0.0),
            end: Position::new(10.0, 0.0, 0.0),
            depart: SimTime::ZERO,
            speed_mps: 1.0,
        };
        assert_eq!(
            leg.position_at(SimTime::from_secs(100)),
            Position::new(10.0, 0.0, 0.0)
        );
        assert_eq!(leg.arrival(), SimTime::from_secs(10));
    }

    #[test]
    fn orbit_at_half_turn() {
        // theta = pi after 10 s with omega = pi/10; oracle is direct trig.
        let omega = std::f64::consts::PI / 10.0;
        let s = MobilityState::CircularOrbit {
            center: Position::new(0.0, 0.0, 100.0),
            radius_m: 50.0,
            angular_speed: omega,
            theta0: 0.0,
            start: SimTime::ZERO,
        };
        let p = s.position_at(SimTime::from_secs(10));
        let expected_x = 50.0 * std::f64::consts::PI.cos();
        let expected_y = 50.0 * std::f64::consts::PI.sin();
        assert_eq!(p.x, expected_x);
        assert_eq!(p.y, expected_y);
        assert!((p.x + 50.0).abs() < 1e-9);
        assert!(p.y.abs() < 1e-9);
        assert_eq!(p.z, 100.0);
    }

    #[test]
    #[should_panic(expected = "precedes orbit start")]
    fn query_before_trajectory_start_panics() {
        let s = MobilityState::CircularOrbit {
            center: Position::new(0.0, 0.0, 10.0),
            radius_m: 5.0,
            angular_speed: 1.0,
            theta0: 0.0,
            start: SimTime::from_secs(5),
        };
        s.position_at(SimTime::from_secs(1));
    }

    #[test]
    fn degenerate_speed_range_always_that_speed() {
        let mut rng = rng_stream(1, NodeId(0), "mobility");
        let mut s = MobilityState::random_waypoint_init(
            unit_box(),
            (10.0, 10.0),
            SimTime::ZERO,
            Some(Position::new(0.0, 0.0, 0.0)),
            &mut rng,
            SimTime::ZERO,
        );
        for _ in 0..50 {
            let MobilityState::RandomWaypoint { ref leg, .. } = s else {
                unreachable!()
            };
            assert_eq!(leg.speed_mps, 10.0);
            s = s.next_leg(&mut rng);
        }
    }

    #[test]
    fn sampled_waypoints_stay_in_bounds() {
        let mut rng = rng_stream(99, NodeId(2), "mobility");
        let bounds = unit_box();
        let mut s = MobilityState::random_waypoint_init(
            bounds,
            (1.0, 20.0),
            SimTime::ZERO,
            None,
            &mut rng,
            SimTime::ZERO,
        );
        for _ in 0..10_000 {
            let MobilityState::RandomWaypoint { ref leg, .. } = s else {
                unreachable!()
            };
            assert!(bounds.contains(leg.start));
            assert!(bounds.contains(leg.end));
            s = s.next_leg(&mut rng);
        }
    }

    #[test]
    fn identical_rng_origin_gives_identical_waypoints() {
        let run = || {
            let mut rng = rng_stream(7, NodeId(4), "mobility");
            let mut s = MobilityState::random_waypoint_init(
                unit_box(),
                (2.0, 8.0),
                SimTime::from_ms(500),
                None,
                &mut rng,
                SimTime::ZERO,
            );
            let mut ends = Vec::new();
            for _ in 0..20 {
                let MobilityState::RandomWaypoint { ref leg, .. } = s else {
                    unreachable!()
                };
                ends.push(leg.end);
                s = s.next_leg(&mut rng);
            }
            ends
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn next_leg_draws_exactly_four_values() {
        let mut rng = rng_stream(3, NodeId(1), "mobility");
        let s = MobilityState::random_waypoint_init(
            unit_box(),
            (1.0, 5.0),
            SimTime::ZERO,
            Some(Position::new(1.0, 2.0, 3.0)),
            &mut rng,
            SimTime::ZERO,
        );
        let mut shadow = rng.clone();
        let _ = s.next_leg(&mut rng);
        for _ in 0..4 {
            shadow.next_f64();
        }
        assert_eq!(rng, shadow);
    }

    #[test]
    fn distance_examples() {
        assert_eq!(
            distance(Position::new(0.0, 0.0, 0.0), Position::new(3.0, 4.0, 0.0)),
            5.0
        );
        let p = Position::new(-2.5, 7.0, 1.0);
        assert_eq!(distance(p, p), 0.0);
        let d = distance(Position::new(0.0, 0.0, 0.0), Position::new(1.0, 1.0, 1.0));
        assert!((d - 3f64.sqrt()).abs() < 1e-12);
    }

    proptest! {
        // |pos(t+delta) - pos(t)| <= v_max * delta for the leg model (exact),
        // and <= r*omega*delta for orbits (chord <= arc).
        #[test]
        fn leg_positions_are_speed_continuous(
            t_us in 0u64..20_000_000,
            delta_us in 0u64..2_000_000,
            speed in 0.5f64..30.0,
        ) {
            let leg = Leg {
                start: Position::new(0.0, 0.0, 10.0),
                end: Position::new(173.0, -41.0, 60.0),
                depart: SimTime::ZERO,
                speed_mps: speed,
            };
            let a = leg.position_at(SimTime::from_us(t_us));
            let b = leg.position_at(SimTime::from_us(t_us + delta_us));
            let bound = speed * delta_us as f64 / 1e6 + 1e-9;
            prop_assert!(a.distance(b) <= bound);
        }

        #[test]
        fn orbit_positions_are_speed_continuous(
            t_us in 0u64..60_000_000,
            delta_us in 0u64..2_000_000,
        ) {
            let omega = 0.7;
            let r = 42.0;
            let s = MobilityState::CircularOrbit {
                center: Position::new(5.0, -3.0, 80.0),
                radius_m: r,
                angular_speed: omega,
                theta0: 1.2,
                start: SimTime::ZERO,
            };
            let a = s.position_at(SimTime::from_us(t_us));
            let b = s.position_at(SimTime::from_us(t_us + delta_us));
            let bound = r * omega * delta_us as f64 / 1e6 + 1e-9;
            prop_assert!(a.distance(b) <= bound);
        }

        // position_at is pure: same arguments, same result.
        #[test]
        fn position_at_is_pure(t_us in 0u64..50_000_000) {
            let mut rng = rng_stream(11, NodeId(0), "mobility");
            let s = MobilityState::random_waypoint_init(
                unit_box(), (1.0, 9.0), SimTime::from_ms(100), None,
                &mut rng, SimTime::ZERO,
            );
            let t = SimTime::from_us(t_us);
            prop_assert_eq!(s.position_at(t), s.position_at(t));
        }
    }
}
