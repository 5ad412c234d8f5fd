//! Random-waypoint mobility.

use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Field {
    pub width: f64,
    pub height: f64,
}

impl Field {
    pub fn contains(&self, p: Point) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }

    pub fn random_point(&self, rng: &mut impl Rng) -> Point {
        Point {
            x: rng.gen::<f64>() * self.width,
            y: rng.gen::<f64>() * self.height,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilityParams {
    pub v_min: f64,
    pub v_max: f64,
    pub pause_max: f64,
}

impl Default for MobilityParams {
    fn default() -> Self {
        MobilityParams {
            v_min: 1.0,
            v_max: 10.0,
            pause_max: 2.0,
        }
    }
}

impl MobilityParams {
    pub fn is_static(&self) -> bool {
        self.v_max == 0.0
    }

    fn draw_speed(&self, rng: &mut impl Rng) -> f64 {
        if self.v_max > self.v_min {
            rng.gen_range(self.v_min..=self.v_max)
        } else {
            self.v_min
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionState {
    pub position: Point,
    pub waypoint: Point,
    pub speed: f64,
    pub pause_until: f64,
}

impl MotionState {
    /// Uniform start position with a first leg already drawn.
    pub fn random(field: &Field, params: &MobilityParams, rng: &mut impl Rng) -> Self {
        let position = field.random_point(rng);
        if params.is_static() {
            return MotionState::parked(position);
        }
        MotionState {
            position,
            waypoint: field.random_point(rng),
            speed: params.draw_speed(rng),
            pause_until: 0.0,
        }
    }

    pub fn parked(position: Point) -> Self {
        MotionState {
            position,
            waypoint: position,
            speed: 0.0,
            pause_until: f64::INFINITY,
        }
    }
}

/// Advances `m` by `dt` seconds ending at `now + dt`. On reaching the
/// waypoint the node stops there, pauses for a uniform time in
/// `[0, pause_max]` and then heads for a fresh waypoint.
pub fn mobility_step(
    m: &mut MotionState,
    field: &Field,
    params: &MobilityParams,
    rng: &mut impl Rng,
    now: f64,
    dt: f64,
) {
    if params.is_static() || now < m.pause_until {
        return;
    }
    let remaining = m.position.distance(m.waypoint);
    let step = m.speed * dt;
    if step >= remaining {
        m.position = m.waypoint;
        let pause = if params.pause_max > 0.0 {
            rng.gen_range(0.0..=params.pause_max)
        } else {
            0.0
        };
        m.pause_until = now + dt + pause;
        m.waypoint = field.random_point(rng);
        m.speed = params.draw_speed(rng);
    } else {
        let f = step / remaining;
        m.position.x += (m.waypoint.x - m.position.x) * f;
        m.position.y += (m.waypoint.y - m.position.y) * f;
    }
    m.position.x = m.position.x.clamp(0.0, field.width);
    m.position.y = m.position.y.clamp(0.0, field.height);
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const FIELD: Field = Field {
        width: 1600.0,
        height: 1600.0,
    };

    #[test]
    fn straight_segment_displacement() {
        let mut m = MotionState {
            position: Point { x: 100.0, y: 100.0 },
            waypoint: Point { x: 400.0, y: 500.0 },
            speed: 5.0,
            pause_until: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        mobility_step(
            &mut m,
            &FIELD,
            &MobilityParams::default(),
            &mut rng,
            0.0,
            0.1,
        );
        assert!((m.position.x - 100.3).abs() < 1e-12);
        assert!((m.position.y - 100.4).abs() < 1e-12);
        let moved = Point { x: 100.0, y: 100.0 }.distance(m.position);
        assert!((moved - 0.5).abs() < 1e-12);
    }

    #[test]
    fn arrival_clamps_and_pauses() {
        let wp = Point { x: 10.0, y: 10.2 };
        let mut m = MotionState {
            position: Point { x: 10.0, y: 10.0 },
            waypoint: wp,
            speed: 5.0,
            pause_until: 0.0,
        };
        let params = MobilityParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        mobility_step(&mut m, &FIELD, &params, &mut rng, 3.0, 0.1);
        assert_eq!(m.position, wp);
        assert!(m.pause_until >= 3.1 && m.pause_until <= 3.1 + params.pause_max);
        let parked = m.position;
        mobility_step(&mut m, &FIELD, &params, &mut rng, 3.1, 0.1);
        if m.pause_until > 3.1 {
            assert_eq!(m.position, parked);
        }
    }

    #[test]
    fn zero_speed_is_static() {
        let params = MobilityParams {
            v_min: 0.0,
            v_max: 0.0,
            pause_max: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut m = MotionState::random(&FIELD, &params, &mut rng);
        let start = m.position;
        for k in 0..1000 {
            mobility_step(&mut m, &FIELD, &params, &mut rng, k as f64 * 0.1, 0.1);
        }
        assert_eq!(m.position, start);
    }

    proptest! {
        #[test]
        fn positions_stay_in_field(seed in any::<u64>(), steps in 1usize..3000) {
            let params = MobilityParams::default();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut m = MotionState::random(&FIELD, &params, &mut rng);
            for k in 0..steps {
                mobility_step(&mut m, &FIELD, &params, &mut rng, k as f64 * 0.1, 0.1);
                prop_assert!(FIELD.contains(m.position));
            }
        }
    }
}
