use std::collections::VecDeque;

use super::{Channel, Result, ViewError};

/// Smallest image side the 5×5 smoothing stage accepts.
pub const CANNY_MIN_SIZE: usize = 5;

/// The classic 5×5 approximation of a σ = 1.4 Gaussian; entries sum to 159.
const SMOOTH: [[f64; 5]; 5] = [
    [2.0, 4.0, 5.0, 4.0, 2.0],
    [4.0, 9.0, 12.0, 9.0, 4.0],
    [5.0, 12.0, 15.0, 12.0, 5.0],
    [4.0, 9.0, 12.0, 9.0, 4.0],
    [2.0, 4.0, 5.0, 4.0, 2.0],
];
const SMOOTH_SUM: f64 = 159.0;

// tan(22.5°) and tan(67.5°)
const TAN_22_5: f64 = std::f64::consts::SQRT_2 - 1.0;
const TAN_67_5: f64 = std::f64::consts::SQRT_2 + 1.0;

#[derive(Clone, Copy)]
enum Direction {
    Horizontal,
    Vertical,
    Diagonal,
    AntiDiagonal,
}

impl Direction {
    /// Quantizes the gradient orientation into one of four bins.
    fn of(gx: f64, gy: f64) -> Self {
        let (ax, ay) = (gx.abs(), gy.abs());
        if ay < ax * TAN_22_5 || (gy == 0.0) {
            Direction::Horizontal
        } else if ay >= ax * TAN_67_5 {
            Direction::Vertical
        } else if (gx > 0.0) == (gy > 0.0) {
            Direction::Diagonal
        } else {
            Direction::AntiDiagonal
        }
    }

    /// (dy, dx) offsets of the two neighbours along the gradient: the
    /// "previous" one first.
    fn neighbours(self) -> [(isize, isize); 2] {
        match self {
            Direction::Horizontal => [(0, -1), (0, 1)],
            Direction::Vertical => [(-1, 0), (1, 0)],
            Direction::Diagonal => [(-1, -1), (1, 1)],
            Direction::AntiDiagonal => [(-1, 1), (1, -1)],
        }
    }
}

/// Canny edge map of a single channel on the 0..=255 scale.
///
/// Pipeline: 5×5 σ = 1.4 smoothing, 3×3 Sobel, L2 magnitude, four-bin
/// non-maximum suppression, double-threshold hysteresis over 8-connected
/// neighbours. Pixels with magnitude `>= high` seed edges; pixels with
/// magnitude `>= low` join an edge they touch. Non-maximum suppression keeps a
/// pixel strictly above its previous neighbour and at least equal to its next
/// one, so plateaus of width two yield a single line.
///
/// Magnitudes are compared in squared, 159-scaled units; for integer inputs
/// every comparison is exact.
///
/// Returns a channel whose values are exactly 0.0 or 255.0.
pub fn canny_channel(channel: &Channel, low: f64, high: f64) -> Result<Channel> {
    let (h, w) = (channel.height, channel.width);
    if h < CANNY_MIN_SIZE || w < CANNY_MIN_SIZE {
        return Err(ViewError::TooSmall {
            height: h,
            width: w,
            min: CANNY_MIN_SIZE,
        });
    }
    if !(low > 0.0 && low <= high) {
        return Err(ViewError::Config(format!("canny thresholds {low} / {high}")));
    }

    // 1. smoothing, kept at 159× scale
    let mut smooth = Channel::filled(h, w, 0.0);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (dy, row) in SMOOTH.iter().enumerate() {
                for (dx, k) in row.iter().enumerate() {
                    acc += k * channel.at_reflect(y as isize + dy as isize - 2, x as isize + dx as isize - 2);
                }
            }
            smooth.data[y * w + x] = acc;
        }
    }

    // 2. Sobel gradients and squared magnitude
    let mut mag2 = vec![0.0; h * w];
    let mut dirs = Vec::with_capacity(h * w);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let s = |dy: isize, dx: isize| smooth.at_reflect(y + dy, x + dx);
            let gx = (s(-1, 1) + 2.0 * s(0, 1) + s(1, 1)) - (s(-1, -1) + 2.0 * s(0, -1) + s(1, -1));
            let gy = (s(1, -1) + 2.0 * s(1, 0) + s(1, 1)) - (s(-1, -1) + 2.0 * s(-1, 0) + s(-1, 1));
            mag2[y as usize * w + x as usize] = gx * gx + gy * gy;
            dirs.push(Direction::of(gx, gy));
        }
    }

    // 3. non-maximum suppression
    let at = |y: isize, x: isize| mag2[super::reflect(y, h) * w + super::reflect(x, w)];
    let mut thin = vec![0.0; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            let [(py, px), (ny, nx)] = dirs[i].neighbours();
            let m = mag2[i];
            if m > at(y + py, x + px) && m >= at(y + ny, x + nx) {
                thin[i] = m;
            }
        }
    }

    // 4. hysteresis
    let low2 = (low * SMOOTH_SUM).powi(2);
    let high2 = (high * SMOOTH_SUM).powi(2);
    let mut out = Channel::filled(h, w, 0.0);
    let mut queue: VecDeque<usize> = (0..h * w).filter(|&i| thin[i] >= high2).collect();
    for &i in &queue {
        out.data[i] = 255.0;
    }
    while let Some(i) = queue.pop_front() {
        let (y, x) = ((i / w) as isize, (i % w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (ny, nx) = (y + dy, x + dx);
                if ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if out.data[j] == 0.0 && thin[j] >= low2 {
                    out.data[j] = 255.0;
                    queue.push_back(j);
                }
            }
        }
    }
    Ok(out)
}
