//! Brute-force Canny reference evaluated in exact integer arithmetic.
//!
//! Smoothing uses the 5×5 σ = 1.4 kernel with weights summing to 159 and
//! symmetric (`dcba|abcd`) border reflection. Magnitudes stay at 159× scale
//! and squared, so every comparison is exact. Direction bins come from
//! `atan2` in degrees; hysteresis is a recursive 8-connected flood fill.

const GAUSS: [[i64; 5]; 5] = [
    [2, 4, 5, 4, 2],
    [4, 9, 12, 9, 4],
    [5, 12, 15, 12, 5],
    [4, 9, 12, 9, 4],
    [2, 4, 5, 4, 2],
];
const SOBEL_X: [[i64; 3]; 3] = [[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]];
const SOBEL_Y: [[i64; 3]; 3] = [[-1, -2, -1], [0, 0, 0], [1, 2, 1]];

fn mirror(mut i: i64, n: i64) -> usize {
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

fn correlate<const K: usize>(src: &[Vec<i64>], kernel: &[[i64; K]; K]) -> Vec<Vec<i64>> {
    let (h, w) = (src.len() as i64, src[0].len() as i64);
    let r = (K / 2) as i64;
    let mut out = vec![vec![0i64; w as usize]; h as usize];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0;
            for ky in 0..K as i64 {
                for kx in 0..K as i64 {
                    let sy = mirror(y + ky - r, h);
                    let sx = mirror(x + kx - r, w);
                    acc += kernel[ky as usize][kx as usize] * src[sy][sx];
                }
            }
            out[y as usize][x as usize] = acc;
        }
    }
    out
}

/// Canny edges (0 or 255) of an 8-bit channel given as rows.
pub fn canny_reference(channel: &[Vec<u8>], low: i64, high: i64) -> Vec<Vec<u8>> {
    let (h, w) = (channel.len(), channel[0].len());
    let src: Vec<Vec<i64>> = channel
        .iter()
        .map(|row| row.iter().map(|&v| i64::from(v)).collect())
        .collect();
    let smooth = correlate(&src, &GAUSS);
    let gx = correlate(&smooth, &SOBEL_X);
    let gy = correlate(&smooth, &SOBEL_Y);
    let mag2 = |y: usize, x: usize| gx[y][x] * gx[y][x] + gy[y][x] * gy[y][x];

    let mut thin = vec![vec![0i64; w]; h];
    for y in 0..h {
        for x in 0..w {
            let mut angle = (gy[y][x] as f64).atan2(gx[y][x] as f64).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            if angle >= 180.0 {
                angle -= 180.0;
            }
            let (prev, next) = if !(22.5..157.5).contains(&angle) {
                ((0, -1), (0, 1))
            } else if angle < 67.5 {
                ((-1, -1), (1, 1))
            } else if angle < 112.5 {
                ((-1, 0), (1, 0))
            } else {
                ((-1, 1), (1, -1))
            };
            let n = |(dy, dx): (i64, i64)| {
                mag2(mirror(y as i64 + dy, h as i64), mirror(x as i64 + dx, w as i64))
            };
            let m = mag2(y, x);
            if m > n(prev) && m >= n(next) {
                thin[y][x] = m;
            }
        }
    }

    let low2 = (low * 159) * (low * 159);
    let high2 = (high * 159) * (high * 159);
    let mut out = vec![vec![0u8; w]; h];
    fn grow(y: usize, x: usize, thin: &[Vec<i64>], low2: i64, out: &mut [Vec<u8>]) {
        if out[y][x] == 255 || thin[y][x] < low2 {
            return;
        }
        out[y][x] = 255;
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let (ny, nx) = (y as i64 + dy, x as i64 + dx);
                if ny >= 0 && nx >= 0 && (ny as usize) < thin.len() && (nx as usize) < thin[0].len() {
                    grow(ny as usize, nx as usize, thin, low2, out);
                }
            }
        }
    }
    for y in 0..h {
        for x in 0..w {
            if thin[y][x] >= high2 {
                grow(y, x, &thin, low2, &mut out);
            }
        }
    }
    out
}

/// Seeded test image: blocky regions plus noise, so edges of every
/// orientation and strength occur.
pub fn corpus_image(seed: u64, h: usize, w: usize) -> Vec<Vec<u8>> {
    let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1);
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state
    };
    let cx = (next() % w as u64) as f64;
    let cy = (next() % h as u64) as f64;
    let radius = 2.0 + (next() % 6) as f64;
    let base = (next() % 256) as i64;
    let fg = (base + 80 + (next() % 96) as i64) % 256;
    let slope = (next() % 40) as i64 - 20;
    let (ry, rx) = ((next() % h as u64) as usize, (next() % w as u64) as usize);
    let rect = (next() % 256) as i64;
    (0..h)
        .map(|y| {
            (0..w)
                .map(|x| {
                    let d = ((y as f64 - cy).powi(2) + (x as f64 - cx).powi(2)).sqrt();
                    let mut v = if d < radius {
                        fg
                    } else if y >= ry && x >= rx && y < ry + 6 && x < rx + 9 {
                        rect
                    } else {
                        base + slope * (x as i64 - y as i64) / 4
                    };
                    if (3 * x + y) % 5 == 0 {
                        v += (next() % 200) as i64 - 100;
                    }
                    v.clamp(0, 255) as u8
                })
                .collect()
        })
        .collect()
}
