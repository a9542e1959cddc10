//! PSNR and SSIM on unit-range images, plus the SSIM backward pass used by
//! rest-field fitting.

use crate::render::{Image, RenderError};

/// Reported PSNR for identical images (the log blows up at MSE = 0).
pub const PSNR_SENTINEL: f64 = 100.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// Peak signal-to-noise ratio in dB on [0,1] data: `10 log10(1 / MSE)`,
/// capped at [`PSNR_SENTINEL`].
pub fn psnr(a: &Image, b: &Image) -> Result<f64, RenderError> {
    a.same_shape(b)?;
    let mut mse = 0.0;
    for (pa, pb) in a.pixels.iter().zip(&b.pixels) {
        for c in 0..3 {
            let d = pa[c] - pb[c];
            mse += d * d;
        }
    }
    mse /= (a.pixels.len() * 3) as f64;
    if mse <= 0.0 {
        return Ok(PSNR_SENTINEL);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_SENTINEL))
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Per-channel planes of the five window statistics SSIM needs.
struct Stats {
    mu_x: Vec<f64>,
    mu_y: Vec<f64>,
    xx: Vec<f64>,
    yy: Vec<f64>,
    xy: Vec<f64>,
}

/// Valid output region: positions where the full window fits.
fn valid_dims(img: &Image) -> Option<(usize, usize)> {
    if img.width < SSIM_WINDOW || img.height < SSIM_WINDOW {
        return None;
    }
    Some((img.width - SSIM_WINDOW + 1, img.height - SSIM_WINDOW + 1))
}

fn window_stats(a: &Image, b: &Image, ch: usize) -> Stats {
    let kernel = gaussian_kernel();
    let (vw, vh) = valid_dims(a).expect("caller checks dims");
    let mut s = Stats {
        mu_x: vec![0.0; vw * vh],
        mu_y: vec![0.0; vw * vh],
        xx: vec![0.0; vw * vh],
        yy: vec![0.0; vw * vh],
        xy: vec![0.0; vw * vh],
    };
    for oy in 0..vh {
        for ox in 0..vw {
            let mut mx = 0.0;
            let mut my = 0.0;
            let mut xx = 0.0;
            let mut yy = 0.0;
            let mut xy = 0.0;
            for ky in 0..SSIM_WINDOW {
                for kx in 0..SSIM_WINDOW {
                    let g = kernel[ky] * kernel[kx];
                    let xa = a.at(ox + kx, oy + ky)[ch];
                    let xb = b.at(ox + kx, oy + ky)[ch];
                    mx += g * xa;
                    my += g * xb;
                    xx += g * xa * xa;
                    yy += g * xb * xb;
                    xy += g * xa * xb;
                }
            }
            let i = oy * vw + ox;
            s.mu_x[i] = mx;
            s.mu_y[i] = my;
            s.xx[i] = xx;
            s.yy[i] = yy;
            s.xy[i] = xy;
        }
    }
    s
}

/// Mean SSIM over channels and valid window positions (Gaussian window 11x11,
/// sigma 1.5, unit dynamic range). Images must be at least 11x11.
pub fn ssim(a: &Image, b: &Image) -> Result<f64, RenderError> {
    a.same_shape(b)?;
    let Some((vw, vh)) = valid_dims(a) else {
        return Err(RenderError::ShapeMismatch {
            a_w: a.width,
            a_h: a.height,
            b_w: SSIM_WINDOW,
            b_h: SSIM_WINDOW,
        });
    };
    let mut total = 0.0;
    for ch in 0..3 {
        let s = window_stats(a, b, ch);
        for i in 0..vw * vh {
            total += ssim_value(&s, i);
        }
    }
    Ok(total / (3 * vw * vh) as f64)
}

fn ssim_value(s: &Stats, i: usize) -> f64 {
    let (mx, my) = (s.mu_x[i], s.mu_y[i]);
    let sx = s.xx[i] - mx * mx;
    let sy = s.yy[i] - my * my;
    let sxy = s.xy[i] - mx * my;
    let a1 = 2.0 * mx * my + SSIM_C1;
    let a2 = 2.0 * sxy + SSIM_C2;
    let b1 = mx * mx + my * my + SSIM_C1;
    let b2 = sx + sy + SSIM_C2;
    (a1 * a2) / (b1 * b2)
}

/// Gradient of mean SSIM(a, b) with respect to image `a`, one [f64;3] per
/// pixel. Used by rest-field fitting through the D-SSIM loss.
pub fn ssim_backward(a: &Image, b: &Image) -> Result<Vec<[f64; 3]>, RenderError> {
    a.same_shape(b)?;
    let Some((vw, vh)) = valid_dims(a) else {
        return Err(RenderError::ShapeMismatch {
            a_w: a.width,
            a_h: a.height,
            b_w: SSIM_WINDOW,
            b_h: SSIM_WINDOW,
        });
    };
    let kernel = gaussian_kernel();
    let norm = 1.0 / (3 * vw * vh) as f64;
    let mut grad = vec![[0.0; 3]; a.pixels.len()];
    for ch in 0..3 {
        let s = window_stats(a, b, ch);
        for oy in 0..vh {
            for ox in 0..vw {
                let i = oy * vw + ox;
                let (mx, my) = (s.mu_x[i], s.mu_y[i]);
                let sx = s.xx[i] - mx * mx;
                let sy = s.yy[i] - my * my;
                let sxy = s.xy[i] - mx * my;
                let a1 = 2.0 * mx * my + SSIM_C1;
                let a2 = 2.0 * sxy + SSIM_C2;
                let b1 = mx * mx + my * my + SSIM_C1;
                let b2 = sx + sy + SSIM_C2;
                let v = (a1 * a2) / (b1 * b2);
                // d(ssim)/d(mu_x), d/d(xx), d/d(xy) via the log derivative.
                // sx = xx - mx^2 and sxy = xy - mx my couple mu_x into a2, b2.
                let d_a1 = 2.0 * my;
                let d_a2_dmu = -2.0 * my; // through sxy
                let d_b1 = 2.0 * mx;
                let d_b2_dmu = -2.0 * mx; // through sx
                let d_mu = v * (d_a1 / a1 + d_a2_dmu / a2 - d_b1 / b1 - d_b2_dmu / b2);
                let d_xx = v * (-1.0 / b2); // through sx in b2
                let d_xy = v * (2.0 / a2); // through sxy in a2
                // Scatter through the linear window sums.
                for ky in 0..SSIM_WINDOW {
                    for kx in 0..SSIM_WINDOW {
                        let g = kernel[ky] * kernel[kx];
                        let px = (oy + ky) * a.width + (ox + kx);
                        let xa = a.pixels[px][ch];
                        let xb = b.pixels[px][ch];
                        grad[px][ch] +=
                            norm * g * (d_mu + d_xx * 2.0 * xa + d_xy * xb);
                    }
                }
            }
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noisy(base: &Image, amp: f64, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut img = base.clone();
        for px in &mut img.pixels {
            for c in 0..3 {
                px[c] = (px[c] + amp * (rng.gen::<f64>() * 2.0 - 1.0)).clamp(0.0, 1.0);
            }
        }
        img
    }

    fn textured(w: usize, h: usize) -> Image {
        let mut img = Image::solid(w, h, [0.0; 3]);
        for y in 0..h {
            for x in 0..w {
                let v = ((x * 13 + y * 7) % 29) as f64 / 28.0;
                *img.at_mut(x, y) = [v, 1.0 - v, (v * 2.0) % 1.0];
            }
        }
        img
    }

    #[test]
    fn identical_images_hit_sentinels() {
        let img = textured(16, 16);
        assert_eq!(psnr(&img, &img).unwrap(), PSNR_SENTINEL);
        assert!((ssim(&img, &img).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn psnr_formula_at_known_mse() {
        // Constant difference of 0.1 in every channel: MSE = 0.01 -> 20 dB.
        let a = Image::solid(16, 16, [0.5, 0.5, 0.5]);
        let b = Image::solid(16, 16, [0.6, 0.6, 0.6]);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn ssim_of_negative_content_is_low() {
        // Saturated texture (no mid-gray): the negative anticorrelates.
        let mut img = Image::solid(24, 24, [0.0; 3]);
        for y in 0..24 {
            for x in 0..24 {
                let v = if (x / 3 + y / 3) % 2 == 0 { 0.95 } else { 0.05 };
                *img.at_mut(x, y) = [v, v, v];
            }
        }
        let neg = Image {
            width: img.width,
            height: img.height,
            pixels: img.pixels.iter().map(|p| p.map(|c| 1.0 - c)).collect(),
            background: img.background,
        };
        let s = ssim(&img, &neg).unwrap();
        assert!(s < 0.1, "ssim vs negative {s}");
    }

    #[test]
    fn psnr_decreases_with_noise_amplitude() {
        let base = textured(20, 20);
        let p1 = psnr(&base, &noisy(&base, 0.02, 1)).unwrap();
        let p2 = psnr(&base, &noisy(&base, 0.08, 2)).unwrap();
        let p3 = psnr(&base, &noisy(&base, 0.25, 3)).unwrap();
        assert!(p1 > p2 && p2 > p3, "{p1} {p2} {p3}");
    }

    #[test]
    fn ssim_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = noisy(&textured(13, 13), 0.1, 4);
        let b = noisy(&textured(13, 13), 0.1, 5);
        let grad = ssim_backward(&a, &b).unwrap();
        let h = 1e-5;
        for _ in 0..40 {
            let px = rng.gen_range(0..a.pixels.len());
            let ch = rng.gen_range(0..3);
            let mut ap = a.clone();
            let mut am = a.clone();
            ap.pixels[px][ch] += h;
            am.pixels[px][ch] -= h;
            let num = (ssim(&ap, &b).unwrap() - ssim(&am, &b).unwrap()) / (2.0 * h);
            assert!(
                (num - grad[px][ch]).abs() < 1e-6 + 1e-4 * num.abs(),
                "pixel {px} ch {ch}: {} vs {}",
                grad[px][ch],
                num
            );
        }
    }
}
