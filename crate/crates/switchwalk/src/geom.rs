//! Balls, small vector helpers and uniform sphere/ball sampling.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Euclidean ball `B(center, radius)`, the geometric unit of every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Domain(format!("ball radius must be > 0, got {radius}")));
        }
        if center.is_empty() {
            return Err(Error::Domain("ball center must be non-empty".into()));
        }
        Ok(Self { center, radius })
    }

    pub fn unit(dim: usize) -> Self {
        Self { center: vec![0.0; dim], radius: 1.0 }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        dist_sq(x, &self.center) < self.radius * self.radius
    }

    /// Distance from an interior point to the complement of the ball.
    pub fn dist_to_boundary(&self, x: &[f64]) -> f64 {
        self.radius - dist(x, &self.center)
    }

    /// Concentric ball with radius scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self { center: self.center.clone(), radius: self.radius * factor }
    }

    /// Point `center + offset`.
    pub fn point(&self, offset: &[f64]) -> Vec<f64> {
        self.center.iter().zip(offset).map(|(c, o)| c + o).collect()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

#[inline]
pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist_sq(a, b).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Volume of the unit ball in `R^d` via the recurrence
/// `ω_d = 2π ω_{d-2} / d`, `ω_1 = 2`, `ω_2 = π`.
pub fn unit_ball_volume(d: usize) -> f64 {
    assert!(d >= 1, "dimension must be >= 1");
    let (mut vol, mut k) = if d % 2 == 0 { (std::f64::consts::PI, 2) } else { (2.0, 1) };
    while k < d {
        k += 2;
        vol *= 2.0 * std::f64::consts::PI / k as f64;
    }
    vol
}

/// Surface area of the unit sphere `S^{d-1}`, which is `d · ω_d`.
pub fn unit_sphere_area(d: usize) -> f64 {
    d as f64 * unit_ball_volume(d)
}

/// Uniform direction on the unit sphere, written into `out`.
pub fn sample_unit_sphere<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    loop {
        let mut nsq = 0.0;
        for o in out.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *o = g;
            nsq += g * g;
        }
        if nsq > 1e-300 {
            let inv = nsq.sqrt().recip();
            for o in out.iter_mut() {
                *o *= inv;
            }
            return;
        }
    }
}

/// Uniform point in `B(center, radius)` (volume measure).
pub fn sample_in_ball<R: Rng + ?Sized>(rng: &mut R, ball: &Ball, out: &mut [f64]) {
    let d = ball.dim();
    sample_unit_sphere(rng, out);
    let u: f64 = rng.random();
    let r = ball.radius * u.powf(1.0 / d as f64);
    for k in 0..d {
        out[k] = ball.center[k] + r * out[k];
    }
}
