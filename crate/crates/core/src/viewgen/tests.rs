use super::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[path = "../../tests/support/canny_oracle.rs"]
mod oracle;

fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> RgbImage {
    let pixels = (0..h * w * 3).map(|_| rng.random()).collect();
    RgbImage::new(h, w, pixels).unwrap()
}

fn from_rows(rows: &[Vec<u8>]) -> Channel {
    let data = rows.iter().flatten().map(|&v| f64::from(v)).collect();
    Channel::new(rows.len(), rows[0].len(), data).unwrap()
}

fn to_rows(c: &Channel) -> Vec<Vec<u8>> {
    c.data.chunks(c.width).map(|r| r.iter().map(|&v| v as u8).collect()).collect()
}

/// Direct 2-D convolution with the outer-product kernel and reflected borders.
fn direct_blur(c: &Channel, sigma: f64, size: usize) -> Vec<f64> {
    let r = (size / 2) as isize;
    let g: Vec<f64> = (-r..=r).map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = g.iter().sum();
    let mut out = vec![0.0; c.data.len()];
    for y in 0..c.height as isize {
        for x in 0..c.width as isize {
            let mut acc = 0.0;
            for ky in -r..=r {
                for kx in -r..=r {
                    let wgt = g[(ky + r) as usize] * g[(kx + r) as usize] / (total * total);
                    acc += wgt * c.at_reflect(y + ky, x + kx);
                }
            }
            out[y as usize * c.width + x as usize] = acc;
        }
    }
    out
}

#[test]
fn reflect_is_half_sample_symmetric() {
    let idx: Vec<usize> = (-3..8).map(|i| reflect(i, 4)).collect();
    assert_eq!(idx, vec![2, 1, 0, 0, 1, 2, 3, 3, 2, 1, 0]);
    assert_eq!(reflect(-9, 2), 0);
    assert_eq!(reflect(-6, 2), 1);
}

#[test]
fn canny_on_flat_channels_is_empty() {
    for value in [0.0, 17.0, 255.0] {
        let edges = canny_channel(&Channel::filled(9, 11, value), 100.0, 200.0).unwrap();
        assert!(edges.data.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn canny_rejects_small_images() {
    let err = canny_channel(&Channel::filled(4, 9, 0.0), 100.0, 200.0).unwrap_err();
    assert!(matches!(err, ViewError::TooSmall { height: 4, width: 9, min: 5 }));
}

#[test]
fn canny_vertical_split_gives_one_line() {
    let rows: Vec<Vec<u8>> = (0..8).map(|_| (0..8).map(|x| if x < 4 { 0 } else { 255 }).collect()).collect();
    let edges = to_rows(&canny_channel(&from_rows(&rows), 100.0, 200.0).unwrap());
    assert_eq!(edges, oracle::canny_reference(&rows, 100, 200));
    for row in &edges {
        let on: Vec<usize> = (0..8).filter(|&x| row[x] == 255).collect();
        assert_eq!(on, vec![3], "{edges:?}");
    }
}

#[test]
fn canny_matches_oracle_on_seeded_images() {
    let mut edge_pixels = 0;
    for seed in 0..20u64 {
        let (h, w) = (8 + (seed as usize * 5) % 25, 8 + (seed as usize * 11) % 25);
        let rows = oracle::corpus_image(seed, h, w);
        let got = to_rows(&canny_channel(&from_rows(&rows), 100.0, 200.0).unwrap());
        assert_eq!(got, oracle::canny_reference(&rows, 100, 200), "seed {seed}");
        edge_pixels += got.iter().flatten().filter(|&&v| v == 255).count();
        let loose = to_rows(&canny_channel(&from_rows(&rows), 20.0, 60.0).unwrap());
        assert_eq!(loose, oracle::canny_reference(&rows, 20, 60), "seed {seed} loose");
    }
    assert!(edge_pixels > 400, "corpus too flat: {edge_pixels} edge pixels");
}

#[test]
fn gaussian_blur_preserves_constants_exactly() {
    let c = Channel::filled(7, 6, 200.0);
    assert_eq!(gaussian_blur(&c, 1.0, 5).unwrap(), c);
    let c = Channel::filled(3, 3, 13.7);
    assert_eq!(gaussian_blur(&c, 2.5, 9).unwrap(), c);
}

#[test]
fn gaussian_blur_impulse_response_is_the_kernel() {
    let mut c = Channel::filled(9, 9, 0.0);
    c.data[4 * 9 + 4] = 1.0;
    let k = gaussian_kernel(1.0, 5).unwrap();
    let out = gaussian_blur(&c, 1.0, 5).unwrap();
    for y in 0..9 {
        for x in 0..9 {
            let (dy, dx) = (y as isize - 4, x as isize - 4);
            let expected = if dy.abs() <= 2 && dx.abs() <= 2 {
                k[(dy + 2) as usize] * k[(dx + 2) as usize]
            } else {
                0.0
            };
            assert!((out.at(y, x) - expected).abs() < 1e-15, "({y},{x})");
        }
    }
}

#[test]
fn gaussian_blur_matches_direct_convolution_and_keeps_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (h, w, sigma, size) in [(9, 9, 1.0, 5), (12, 7, 0.7, 3), (16, 16, 2.0, 7), (4, 5, 1.5, 9)] {
        let data = (0..h * w).map(|_| rng.random_range(0.0..255.0)).collect();
        let c = Channel::new(h, w, data).unwrap();
        let out = gaussian_blur(&c, sigma, size).unwrap();
        let reference = direct_blur(&c, sigma, size);
        for (a, b) in out.data.iter().zip(&reference) {
            assert!((a - b).abs() < 1e-9);
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!((mean(&out.data) - mean(&c.data)).abs() < 1e-9);
    }
}

#[test]
fn gaussian_blur_rejects_bad_parameters() {
    let c = Channel::filled(5, 5, 1.0);
    assert!(matches!(gaussian_blur(&c, 1.0, 4), Err(ViewError::Config(_))));
    assert!(matches!(gaussian_blur(&c, 0.0, 5), Err(ViewError::Config(_))));
}

#[test]
fn gaussian_blur_approaches_identity_as_sigma_shrinks() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..5 {
        let data = (0..100).map(|_| rng.random_range(0.0..255.0)).collect();
        let c = Channel::new(10, 10, data).unwrap();
        let devs: Vec<f64> = [1.0, 0.8, 0.6, 0.4, 0.3]
            .iter()
            .map(|&s| {
                let out = gaussian_blur(&c, s, 3).unwrap();
                out.data.iter().zip(&c.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
            })
            .collect();
        assert!(devs.windows(2).all(|p| p[1] < p[0]), "{devs:?}");
    }
}

#[test]
fn edge_view_without_edges_is_plain_rgb() {
    let img = RgbImage::new(6, 6, vec![77; 6 * 6 * 3]).unwrap();
    let cfg = ViewGenConfig::default();
    assert_eq!(edge_view(&img, &cfg).unwrap().values, rgb_view(&img).values);
}

#[test]
fn edge_superposition_saturates() {
    let img = RgbImage::new(1, 1, vec![200, 0, 10]).unwrap();
    let e = Channel::filled(1, 1, 255.0);
    let z = Channel::filled(1, 1, 0.0);
    let v = fuse(&img, 1.5, [e, z.clone(), z], ViewKind::Edge);
    assert_eq!(v.values[0], 1.0);
    assert!((200.0f64 / 255.0 - 0.7843).abs() < 1e-4);
    assert_eq!(v.values[1], 0.0);
    assert_eq!(v.values[2], 10.0 / 255.0);
}

#[test]
fn constant_image_views_are_exact() {
    let cfg = ViewGenConfig::default();
    for value in [0u8, 1, 128, 254, 255] {
        let img = RgbImage::new(8, 9, vec![value; 8 * 9 * 3]).unwrap();
        let views = build_views(&img, &cfg).unwrap();
        assert_eq!(views.hf.values, views.rgb.values);
        assert_eq!(views.edge.values, views.rgb.values);
        for c in 0..3 {
            let edges = canny_channel(&img.channel(c), cfg.canny_low, cfg.canny_high).unwrap();
            assert!(edges.data.iter().all(|&v| v == 0.0));
        }
    }
}

#[test]
fn hf_view_of_single_bright_pixel() {
    let mut pixels = vec![0u8; 9 * 9 * 3];
    for c in 0..3 {
        pixels[(4 * 9 + 4) * 3 + c] = 255;
    }
    let img = RgbImage::new(9, 9, pixels).unwrap();
    let cfg = ViewGenConfig::default();
    let hf = hf_view(&img, &cfg).unwrap();
    let blurred = direct_blur(&img.channel(0), 1.0, 5);
    for y in 0..9 {
        for x in 0..9 {
            let i = y * 9 + x;
            let v = f64::from(img.get(y, x, 0));
            let expected = (v / 255.0 + 1.5 * (v - blurred[i]) / 255.0).clamp(0.0, 1.0);
            assert!((hf.values[i * 3] - expected).abs() < 1e-12, "({y},{x})");
        }
    }
    assert_eq!(hf.values[(4 * 9 + 4) * 3], 1.0);
}

#[test]
fn zero_alpha_views_equal_rgb() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let cfg = ViewGenConfig {
        alpha_e: 0.0,
        alpha_hf: 0.0,
        ..ViewGenConfig::default()
    };
    for _ in 0..10 {
        let img = random_image(&mut rng, 12, 10);
        let v = build_views(&img, &cfg).unwrap();
        assert_eq!(v.edge.values, v.rgb.values);
        assert_eq!(v.hf.values, v.rgb.values);
    }
}

#[test]
fn config_validation() {
    let ok = ViewGenConfig::default();
    assert!(ok.validate().is_ok());
    for bad in [
        ViewGenConfig { canny_low: 0.0, ..ok },
        ViewGenConfig { canny_low: 300.0, ..ok },
        ViewGenConfig { alpha_e: -0.1, ..ok },
        ViewGenConfig { gaussian_kernel: 4, ..ok },
        ViewGenConfig { gaussian_kernel: 1, ..ok },
        ViewGenConfig { gaussian_sigma: 0.0, ..ok },
    ] {
        assert!(matches!(bad.validate(), Err(ViewError::Config(_))), "{bad:?}");
    }
}

#[test]
fn ppm_round_trip_and_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let img = random_image(&mut rng, 16, 16);
    assert_eq!(ppm::decode(&ppm::encode(&img)).unwrap(), img);

    let err = ppm::decode(b"P5\n1 1\n255\n\0").unwrap_err();
    assert!(matches!(err, ViewError::Parse { offset: 0, .. }));
    let err = ppm::decode(b"P6\n1 1\n65535\n\0\0\0\0\0\0").unwrap_err();
    assert!(matches!(err, ViewError::Unsupported(_)));
    let err = ppm::decode(b"P6\n2 2\n255\n\0\0\0").unwrap_err();
    assert!(matches!(err, ViewError::Parse { offset: 14, .. }), "{err}");
    let err = ppm::decode(b"P6\n2 x\n255\n").unwrap_err();
    assert!(matches!(err, ViewError::Parse { offset: 5, .. }), "{err}");
    assert!(ppm::decode(b"P6").is_err());
    assert!(ppm::decode(b"P6\n0 1\n255\n").is_err());
}

#[test]
fn ppm_header_comments_are_skipped() {
    let bytes = b"P6 # made by hand\n# another\n2 1 # dims\n255\n\x01\x02\x03\x04\x05\x06";
    let img = ppm::decode(bytes).unwrap();
    assert_eq!((img.height(), img.width()), (1, 2));
    assert_eq!(img.pixels(), &[1, 2, 3, 4, 5, 6]);
}

#[test]
fn ppm_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.ppm");
    let img = RgbImage::new(2, 3, (0..18).collect()).unwrap();
    ppm::write_ppm(&img, &path).unwrap();
    assert_eq!(ppm::read_ppm(&path).unwrap(), img);
}

#[test]
fn sidecar_round_trip_and_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let img = random_image(&mut rng, 6, 7);
    let views = build_views(&img, &ViewGenConfig::default()).unwrap();
    let bytes = sidecar::encode(&views);
    assert_eq!(&bytes[..4], b"TMKV");
    assert_eq!(bytes.len(), 16 + 3 * 6 * 7 * 3 * 8);
    assert_eq!(sidecar::decode(&bytes).unwrap(), views);

    assert!(matches!(sidecar::decode(&bytes[..bytes.len() - 1]), Err(ViewError::Sidecar { .. })));
    let mut wrong_version = bytes.clone();
    wrong_version[4] = 2;
    assert!(matches!(sidecar::decode(&wrong_version), Err(ViewError::Sidecar { offset: 4, .. })));
    let mut out_of_range = bytes.clone();
    out_of_range[16..24].copy_from_slice(&1.5f64.to_le_bytes());
    assert!(matches!(sidecar::decode(&out_of_range), Err(ViewError::Sidecar { offset: 16, .. })));
}

#[test]
fn quantized_views_round_to_nearest() {
    let v = ViewImage {
        height: 1,
        width: 1,
        values: vec![0.0, 0.5, 1.0],
        kind: ViewKind::Hf,
    };
    assert_eq!(v.to_rgb8().pixels(), &[0, 128, 255]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn views_stay_in_unit_range(
        seed in any::<u64>(),
        h in 5usize..14,
        w in 5usize..14,
        alpha_e in 0.0f64..4.0,
        alpha_hf in 0.0f64..4.0,
        low in 1.0f64..300.0,
        gap in 1.0f64..300.0,
        sigma in 0.3f64..3.0,
        half in 1usize..4,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = random_image(&mut rng, h, w);
        let cfg = ViewGenConfig {
            canny_low: low,
            canny_high: low + gap,
            alpha_e,
            alpha_hf,
            gaussian_sigma: sigma,
            gaussian_kernel: 2 * half + 1,
        };
        let v = build_views(&img, &cfg).unwrap();
        for view in [&v.rgb, &v.edge, &v.hf] {
            prop_assert!(view.values.iter().all(|x| (0.0..=1.0).contains(x)));
        }
    }

    #[test]
    fn canny_is_binary_and_shift_invariant(seed in any::<u64>(), shift in 0u8..=55) {
        let rows = oracle::corpus_image(seed, 10, 12);
        let clipped: Vec<Vec<u8>> = rows.iter().map(|r| r.iter().map(|&v| v.min(200)).collect()).collect();
        let shifted: Vec<Vec<u8>> = clipped.iter().map(|r| r.iter().map(|&v| v + shift).collect()).collect();
        let a = canny_channel(&from_rows(&clipped), 100.0, 200.0).unwrap();
        let b = canny_channel(&from_rows(&shifted), 100.0, 200.0).unwrap();
        prop_assert!(a.data.iter().all(|&v| v == 0.0 || v == 255.0));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn ppm_round_trip(h in 1usize..20, w in 1usize..20, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = random_image(&mut rng, h, w);
        prop_assert_eq!(ppm::decode(&ppm::encode(&img)).unwrap(), img);
    }
}
