use super::{reflect, Channel, Result, ViewError};

/// Sampled 1-D Gaussian of odd length `size`, normalized to sum to 1.
pub fn gaussian_kernel(sigma: f64, size: usize) -> Result<Vec<f64>> {
    if size % 2 == 0 {
        return Err(ViewError::Config(format!("gaussian kernel size must be odd, got {size}")));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(ViewError::Config(format!("gaussian sigma must be positive, got {sigma}")));
    }
    let r = (size / 2) as isize;
    let raw: Vec<f64> = (-r..=r)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|v| v / total).collect())
}

/// Separable Gaussian blur with reflect padding.
///
/// Each pass is evaluated as `x + Σ w_k (x_k − x)`, which equals `Σ w_k x_k`
/// for a unit-sum kernel and leaves constant regions bit-exact.
pub fn gaussian_blur(channel: &Channel, sigma: f64, kernel: usize) -> Result<Channel> {
    let weights = gaussian_kernel(sigma, kernel)?;
    let r = (kernel / 2) as isize;
    let (h, w) = (channel.height, channel.width);

    let mut horizontal = vec![0.0; h * w];
    for y in 0..h {
        let row = &channel.data[y * w..(y + 1) * w];
        for x in 0..w {
            let centre = row[x];
            let delta: f64 = weights
                .iter()
                .zip(-r..=r)
                .map(|(wk, k)| wk * (row[reflect(x as isize + k, w)] - centre))
                .sum();
            horizontal[y * w + x] = centre + delta;
        }
    }

    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let centre = horizontal[y * w + x];
            let delta: f64 = weights
                .iter()
                .zip(-r..=r)
                .map(|(wk, k)| wk * (horizontal[reflect(y as isize + k, h) * w + x] - centre))
                .sum();
            out[y * w + x] = centre + delta;
        }
    }
    Channel::new(h, w, out)
}
