//! Moving-squares video: one square per clip drifting at constant velocity.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{sample_rng, Dataset, TaskKind, TaskSample};
use crate::tensor::ComplexTensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VideoOptions {
    pub size: usize,
    pub frames: usize,
    pub sides: [usize; 2],
    /// Pixels per frame.
    pub speed_range: [f64; 2],
}

impl Default for VideoOptions {
    fn default() -> Self {
        Self {
            size: 40,
            frames: 16,
            sides: [2, 4],
            speed_range: [0.5, 1.5],
        }
    }
}

/// Top-left corner at frame `t` is `round(start + t · velocity)`, in
/// `(row, col)` pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquareMotion {
    pub side: usize,
    pub start: [f64; 2],
    pub velocity: [f64; 2],
}

impl SquareMotion {
    pub fn corner(&self, t: usize) -> [i64; 2] {
        [0, 1].map(|a| (self.start[a] + t as f64 * self.velocity[a]).round() as i64)
    }
}

/// Renders frames `0..frames` as a `[size, size, 1, frames]` tensor. Pixels
/// of the square falling outside the image are dropped.
pub fn render_video(motion: &SquareMotion, size: usize, frames: usize) -> ComplexTensor {
    let mut data = vec![0.0; size * size * frames];
    for t in 0..frames {
        let [r0, c0] = motion.corner(t);
        let side = motion.side as i64;
        let rows = r0.max(0)..(r0 + side).min(size as i64);
        for r in rows {
            for c in c0.max(0)..(c0 + side).min(size as i64) {
                data[(r as usize * size + c as usize) * frames + t] = 1.0;
            }
        }
    }
    ComplexTensor::from_real(&[size, size, 1, frames], data).expect("video layout")
}

fn frame_range(video: &ComplexTensor, from: usize, len: usize) -> ComplexTensor {
    let shape = video.shape();
    let (pixels, frames) = (shape[0] * shape[1] * shape[2], shape[3]);
    let mut out = Vec::with_capacity(pixels * len);
    for p in 0..pixels {
        out.extend_from_slice(&video.re()[p * frames + from..p * frames + from + len]);
    }
    ComplexTensor::from_real(&[shape[0], shape[1], shape[2], len], out).expect("frame slice")
}

pub fn gen_moving_squares(seed: u64, n_videos: usize) -> Dataset {
    gen_moving_squares_with(seed, n_videos, &VideoOptions::default())
}

/// Input frames `0..F-1`, target frames `1..F`. The start position is drawn
/// so the square is fully visible in the first and last frame, hence in
/// every frame.
pub fn gen_moving_squares_with(seed: u64, n_videos: usize, opts: &VideoOptions) -> Dataset {
    let span = opts.frames.saturating_sub(1);
    let samples = (0..n_videos)
        .map(|i| {
            let mut rng = sample_rng(seed, i);
            let side = rng.random_range(opts.sides[0]..=opts.sides[1]);
            let speed = rng.random_range(opts.speed_range[0]..=opts.speed_range[1]);
            let angle = rng.random_range(0.0..2.0 * PI);
            let velocity = [speed * angle.sin(), speed * angle.cos()];
            let room = (opts.size - side) as f64;
            let start = velocity.map(|v| {
                let travel = v * span as f64;
                let lo = (-travel).max(0.0);
                let hi = (room - travel.max(0.0)).max(lo);
                if hi > lo {
                    rng.random_range(lo..hi)
                } else {
                    lo
                }
            });
            let motion = SquareMotion { side, start, velocity };
            let video = render_video(&motion, opts.size, opts.frames);
            TaskSample {
                input: frame_range(&video, 0, span),
                target: frame_range(&video, 1, span),
                label: None,
                dt: 1.0,
                meta: BTreeMap::from([
                    ("side".into(), vec![side as f64]),
                    ("speed".into(), vec![speed]),
                    ("start".into(), start.to_vec()),
                    ("velocity".into(), velocity.to_vec()),
                ]),
            }
        })
        .collect();
    Dataset {
        task: TaskKind::MovingSquares,
        dt: 1.0,
        samples,
        meta: BTreeMap::from([
            ("frames".into(), vec![opts.frames as f64]),
            ("size".into(), vec![opts.size as f64]),
            ("speed_range".into(), opts.speed_range.to_vec()),
        ]),
    }
}
