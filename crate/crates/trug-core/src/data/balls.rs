//! Synthetic binary videos of balls bouncing in a box: constant-velocity
//! motion with elastic wall reflection, rasterized as filled discs. Balls
//! pass through each other (no ball-ball collisions).

use rand::Rng;

use crate::error::{Result, TrugError};
use crate::rbm::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BouncingBallConfig {
    pub n_sequences: usize,
    pub n_balls: usize,
    /// Square frame edge length in pixels.
    pub frame_size: usize,
    pub n_frames: usize,
    pub radius: f64,
    /// Velocity magnitude in pixels per frame.
    pub speed: f64,
    pub seed: u64,
}

impl BouncingBallConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_sequences == 0 || self.frame_size == 0 || self.n_frames == 0 {
            return Err(TrugError::Contract("ball config has a zero count".into()));
        }
        if !(self.radius > 0.0) || self.radius >= self.frame_size as f64 / 2.0 {
            return Err(TrugError::Contract(format!(
                "radius {} must be in (0, frame_size/2)",
                self.radius
            )));
        }
        if !(self.speed >= 0.0) || !self.speed.is_finite() {
            return Err(TrugError::Contract("speed must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ball {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
}

/// Reflect a coordinate elastically off the walls at radius distance from
/// the box edges. Velocity magnitude is preserved exactly.
fn reflect(pos: &mut f64, vel: &mut f64, lo: f64, hi: f64) {
    // A single step never crosses more than a handful of times.
    loop {
        if *pos < lo {
            *pos = 2.0 * lo - *pos;
            *vel = -*vel;
        } else if *pos > hi {
            *pos = 2.0 * hi - *pos;
            *vel = -*vel;
        } else {
            return;
        }
    }
}

fn rasterize(balls: &[Ball], frame_size: usize, radius: f64) -> Vec<f64> {
    let mut frame = vec![0.0; frame_size * frame_size];
    let r2 = radius * radius;
    for ball in balls {
        // Only touch the bounding box of the disc.
        let lo_c = ((ball.x - radius - 0.5).floor().max(0.0)) as usize;
        let hi_c = ((ball.x + radius + 0.5).ceil().min(frame_size as f64 - 1.0)) as usize;
        let lo_r = ((ball.y - radius - 0.5).floor().max(0.0)) as usize;
        let hi_r = ((ball.y + radius + 0.5).ceil().min(frame_size as f64 - 1.0)) as usize;
        for row in lo_r..=hi_r {
            for col in lo_c..=hi_c {
                let dx = col as f64 + 0.5 - ball.x;
                let dy = row as f64 + 0.5 - ball.y;
                if dx * dx + dy * dy <= r2 {
                    frame[row * frame_size + col] = 1.0;
                }
            }
        }
    }
    frame
}

/// Advance the given balls for n_frames steps, rasterizing the state
/// before each move. Exposed so tests can drive exact initial conditions.
pub fn simulate_sequence(
    balls: &mut [Ball],
    frame_size: usize,
    radius: f64,
    n_frames: usize,
) -> Vec<Vec<f64>> {
    let lo = radius;
    let hi = frame_size as f64 - radius;
    let mut frames = Vec::with_capacity(n_frames);
    for _ in 0..n_frames {
        frames.push(rasterize(balls, frame_size, radius));
        for ball in balls.iter_mut() {
            ball.x += ball.vx;
            ball.y += ball.vy;
            reflect(&mut ball.x, &mut ball.vx, lo, hi);
            reflect(&mut ball.y, &mut ball.vy, lo, hi);
        }
    }
    frames
}

/// Generate sequences with random initial positions and directions, one
/// deterministic random stream per sequence.
pub fn generate_bouncing_balls(config: &BouncingBallConfig) -> Result<Vec<Vec<Vec<f64>>>> {
    config.validate()?;
    let lo = config.radius;
    let hi = config.frame_size as f64 - config.radius;
    let mut sequences = Vec::with_capacity(config.n_sequences);
    for s in 0..config.n_sequences {
        let mut rng = stream_rng(config.seed, s as u64);
        let mut balls: Vec<Ball> = (0..config.n_balls)
            .map(|_| {
                let angle = rng.random::<f64>() * std::f64::consts::TAU;
                Ball {
                    x: lo + rng.random::<f64>() * (hi - lo),
                    y: lo + rng.random::<f64>() * (hi - lo),
                    vx: config.speed * angle.cos(),
                    vy: config.speed * angle.sin(),
                }
            })
            .collect();
        sequences.push(simulate_sequence(
            &mut balls,
            config.frame_size,
            config.radius,
            config.n_frames,
        ));
    }
    Ok(sequences)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_speed_gives_identical_frames() {
        let config = BouncingBallConfig {
            n_sequences: 2,
            n_balls: 1,
            frame_size: 12,
            n_frames: 6,
            radius: 2.0,
            speed: 0.0,
            seed: 4,
        };
        let seqs = generate_bouncing_balls(&config).unwrap();
        for seq in &seqs {
            assert!(seq.iter().all(|f| f == &seq[0]));
            assert!(seq[0].iter().any(|&v| v == 1.0), "ball missing from frame");
        }
    }

    #[test]
    fn zero_balls_give_blank_frames() {
        let config = BouncingBallConfig {
            n_sequences: 1,
            n_balls: 0,
            frame_size: 8,
            n_frames: 3,
            radius: 1.5,
            speed: 1.0,
            seed: 0,
        };
        let seqs = generate_bouncing_balls(&config).unwrap();
        assert!(seqs[0].iter().flatten().all(|&v| v == 0.0));
    }

    /// Unit-speed rightward motion from the center: until the first
    /// reflection, frame t is exactly the analytic disc centered at
    /// (cx + t, cy).
    #[test]
    fn rightward_trajectory_matches_analytic_discs() {
        let size = 15usize;
        let radius = 2.0;
        let cx = size as f64 / 2.0;
        let cy = size as f64 / 2.0;
        let mut balls = [Ball { x: cx, y: cy, vx: 1.0, vy: 0.0 }];
        let frames = simulate_sequence(&mut balls, size, radius, 6);
        for (t, frame) in frames.iter().enumerate() {
            let center_x = cx + t as f64;
            assert!(center_x <= size as f64 - radius, "test stayed before reflection");
            for row in 0..size {
                for col in 0..size {
                    let dx = col as f64 + 0.5 - center_x;
                    let dy = row as f64 + 0.5 - cy;
                    let expected = if dx * dx + dy * dy <= radius * radius { 1.0 } else { 0.0 };
                    assert_eq!(frame[row * size + col], expected, "t={t} ({row},{col})");
                }
            }
        }
    }

    #[test]
    fn reflections_conserve_speed_and_stay_in_box() {
        let size = 10usize;
        let radius = 1.25;
        let mut balls = [Ball { x: 3.3, y: 7.1, vx: 2.7, vy: -1.9 }];
        let speed0 = (balls[0].vx.powi(2) + balls[0].vy.powi(2)).sqrt();
        simulate_sequence(&mut balls, size, radius, 500);
        let speed1 = (balls[0].vx.powi(2) + balls[0].vy.powi(2)).sqrt();
        assert!((speed0 - speed1).abs() < 1e-12);
        assert!(balls[0].x >= radius && balls[0].x <= size as f64 - radius);
        assert!(balls[0].y >= radius && balls[0].y <= size as f64 - radius);
    }

    #[test]
    fn deterministic_per_seed() {
        let config = BouncingBallConfig {
            n_sequences: 3,
            n_balls: 2,
            frame_size: 10,
            n_frames: 8,
            radius: 1.5,
            speed: 1.2,
            seed: 21,
        };
        assert_eq!(
            generate_bouncing_balls(&config).unwrap(),
            generate_bouncing_balls(&config).unwrap()
        );
        let other = BouncingBallConfig { seed: 22, ..config };
        assert_ne!(
            generate_bouncing_balls(&config).unwrap(),
            generate_bouncing_balls(&other).unwrap()
        );
    }

    #[test]
    fn invalid_configs_rejected() {
        let good = BouncingBallConfig {
            n_sequences: 1,
            n_balls: 1,
            frame_size: 10,
            n_frames: 1,
            radius: 2.0,
            speed: 1.0,
            seed: 0,
        };
        assert!(good.validate().is_ok());
        assert!(BouncingBallConfig { radius: 5.0, ..good }.validate().is_err());
        assert!(BouncingBallConfig { n_frames: 0, ..good }.validate().is_err());
    }
}
