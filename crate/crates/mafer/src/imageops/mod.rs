//! Image buffer type and the pixel-level operations behind the augmentation
//! pipeline: bilinear resampling, flips, grayscale, color jitter, projective
//! warps, and normalization.

pub mod augment;
pub mod pnm;

pub use augment::{apply_augmentations, AugmentConfig};

use crate::error::{Error, Result};

/// H×W×C float image, row-major, pixels in [0,1] until normalization.
/// `native_shortest_side` records the resolution the pixels originally came
/// from (provenance, not a bound on the current size).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub pixels: Vec<f32>,
    pub native_shortest_side: Option<usize>,
}

impl ImageBuffer {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument("image dimensions must be positive".into()));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidArgument(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        if pixels.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "pixel buffer has {} values, expected {}",
                pixels.len(),
                height * width * channels
            )));
        }
        Ok(ImageBuffer {
            height,
            width,
            channels,
            pixels,
            native_shortest_side: None,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Self {
        ImageBuffer {
            height,
            width,
            channels,
            pixels: vec![value; height * width * channels],
            native_shortest_side: None,
        }
    }

    pub fn with_native(mut self, side: usize) -> Self {
        self.native_shortest_side = Some(side);
        self
    }

    pub fn shortest_side(&self) -> usize {
        self.height.min(self.width)
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f32) {
        self.pixels[(y * self.width + x) * self.channels + c] = v;
    }

    /// Mean luma over the image (0.299 R + 0.587 G + 0.114 B; plain mean for
    /// single-channel images).
    pub fn luma_mean(&self) -> f32 {
        let n = (self.height * self.width) as f32;
        if self.channels == 1 {
            return self.pixels.iter().sum::<f32>() / n;
        }
        let mut acc = 0.0f32;
        for px in self.pixels.chunks_exact(3) {
            acc += luma(px[0], px[1], px[2]);
        }
        acc / n
    }
}

#[inline]
pub fn luma(r: f32, g: f32, b: f32) -> f32 {
    0.299 * r + 0.587 * g + 0.114 * b
}

/// Bilinear resample with half-pixel-center source mapping
/// (`src = (dst + 0.5) * scale - 0.5`), edge-clamped.
pub fn bilinear_resize(img: &ImageBuffer, out_h: usize, out_w: usize) -> Result<ImageBuffer> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument("resize target must be at least 1×1".into()));
    }
    let (h, w, c) = (img.height, img.width, img.channels);
    let scale_y = h as f64 / out_h as f64;
    let scale_x = w as f64 / out_w as f64;
    let mut out = vec![0.0f32; out_h * out_w * c];
    for oy in 0..out_h {
        let sy = ((oy as f64 + 0.5) * scale_y - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let fy = (sy - y0 as f64) as f32;
        for ox in 0..out_w {
            let sx = ((ox as f64 + 0.5) * scale_x - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let fx = (sx - x0 as f64) as f32;
            for ch in 0..c {
                let v00 = img.get(y0, x0, ch);
                let v01 = img.get(y0, x1, ch);
                let v10 = img.get(y1, x0, ch);
                let v11 = img.get(y1, x1, ch);
                let top = v00 + (v01 - v00) * fx;
                let bot = v10 + (v11 - v10) * fx;
                out[(oy * out_w + ox) * c + ch] = top + (bot - top) * fy;
            }
        }
    }
    let mut result = ImageBuffer::new(out_h, out_w, c, out)?;
    result.native_shortest_side = img.native_shortest_side;
    Ok(result)
}

/// Mirror columns: j ↦ W−1−j.
pub fn horizontal_flip(img: &ImageBuffer) -> ImageBuffer {
    let (h, w, c) = (img.height, img.width, img.channels);
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                out.set(y, x, ch, img.get(y, w - 1 - x, ch));
            }
        }
    }
    out
}

/// Replace every pixel with its luma, keeping 3 channels so tensor shapes
/// stay stable.
pub fn to_grayscale(img: &ImageBuffer) -> Result<ImageBuffer> {
    if img.channels != 3 {
        return Err(Error::InvalidArgument(
            "to_grayscale requires a 3-channel image".into(),
        ));
    }
    let mut out = img.clone();
    for px in out.pixels.chunks_exact_mut(3) {
        let y = luma(px[0], px[1], px[2]);
        px[0] = y;
        px[1] = y;
        px[2] = y;
    }
    Ok(out)
}

fn clamp01(img: &mut ImageBuffer) {
    for v in &mut img.pixels {
        *v = v.clamp(0.0, 1.0);
    }
}

/// Brightness, contrast, saturation in that fixed order, clamping to [0,1]
/// after each stage. Contrast pivots on the image luma mean; saturation
/// lerps between the grayscale image and the input.
pub fn color_jitter(
    img: &ImageBuffer,
    brightness: f32,
    contrast: f32,
    saturation: f32,
) -> Result<ImageBuffer> {
    if brightness <= 0.0 || contrast < 0.0 || saturation < 0.0 {
        return Err(Error::InvalidArgument(
            "jitter factors must be positive (brightness) / non-negative".into(),
        ));
    }
    let mut out = img.clone();
    for v in &mut out.pixels {
        *v *= brightness;
    }
    clamp01(&mut out);

    let mean = out.luma_mean();
    for v in &mut out.pixels {
        *v = mean + contrast * (*v - mean);
    }
    clamp01(&mut out);

    if out.channels == 3 {
        for px in out.pixels.chunks_exact_mut(3) {
            let y = luma(px[0], px[1], px[2]);
            for v in px.iter_mut() {
                *v = y + saturation * (*v - y);
            }
        }
        clamp01(&mut out);
    }
    Ok(out)
}

/// Solve for the 3×3 homography taking `src` corners to `dst` corners
/// (row-major, h22 fixed to 1) via Gaussian elimination with partial
/// pivoting. Corners are (x, y) pairs.
pub fn homography_from_corners(src: &[(f64, f64); 4], dst: &[(f64, f64); 4]) -> Result<[f64; 9]> {
    // 8 unknowns h00..h21; rows: x' equations then y' equations per corner.
    let mut a = [[0.0f64; 9]; 8];
    for i in 0..4 {
        let (x, y) = src[i];
        let (xp, yp) = dst[i];
        a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -x * xp, -y * xp, xp];
        a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -x * yp, -y * yp, yp];
    }
    // forward elimination
    for col in 0..8 {
        let pivot = (col..8)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if a[pivot][col].abs() < 1e-12 {
            return Err(Error::InvalidArgument(
                "degenerate corner configuration: homography system is singular".into(),
            ));
        }
        a.swap(col, pivot);
        for row in col + 1..8 {
            let f = a[row][col] / a[col][col];
            for k in col..9 {
                a[row][k] -= f * a[col][k];
            }
        }
    }
    // back substitution
    let mut h = [0.0f64; 9];
    for col in (0..8).rev() {
        let mut acc = a[col][8];
        for k in col + 1..8 {
            acc -= a[col][k] * h[k];
        }
        h[col] = acc / a[col][col];
    }
    h[8] = 1.0;
    Ok(h)
}

/// Warp the image by the homography that maps its corners to the displaced
/// corners. Each destination pixel is inverse-mapped and bilinearly sampled;
/// out-of-bounds samples are filled with 0.
///
/// `displacements` are (dx, dy) for the corners in order top-left,
/// top-right, bottom-left, bottom-right.
pub fn random_perspective(img: &ImageBuffer, displacements: &[(f64, f64); 4]) -> Result<ImageBuffer> {
    let (h, w, c) = (img.height, img.width, img.channels);
    let src = [
        (0.0, 0.0),
        ((w - 1) as f64, 0.0),
        (0.0, (h - 1) as f64),
        ((w - 1) as f64, (h - 1) as f64),
    ];
    let dst = [
        (src[0].0 + displacements[0].0, src[0].1 + displacements[0].1),
        (src[1].0 + displacements[1].0, src[1].1 + displacements[1].1),
        (src[2].0 + displacements[2].0, src[2].1 + displacements[2].1),
        (src[3].0 + displacements[3].0, src[3].1 + displacements[3].1),
    ];
    // inverse map: destination pixel -> source location
    let hinv = homography_from_corners(&dst, &src)?;

    let mut out = ImageBuffer::filled(h, w, c, 0.0);
    out.native_shortest_side = img.native_shortest_side;
    for oy in 0..h {
        for ox in 0..w {
            let denom = hinv[6] * ox as f64 + hinv[7] * oy as f64 + hinv[8];
            if denom.abs() < 1e-12 {
                continue;
            }
            let sx = (hinv[0] * ox as f64 + hinv[1] * oy as f64 + hinv[2]) / denom;
            let sy = (hinv[3] * ox as f64 + hinv[4] * oy as f64 + hinv[5]) / denom;
            if sx < -0.5 || sy < -0.5 || sx > (w as f64) - 0.5 || sy > (h as f64) - 0.5 {
                continue; // zero fill
            }
            let x0f = sx.floor();
            let y0f = sy.floor();
            let fx = (sx - x0f) as f32;
            let fy = (sy - y0f) as f32;
            let sample = |yy: f64, xx: f64, ch: usize| -> f32 {
                if yy < 0.0 || xx < 0.0 || yy >= h as f64 || xx >= w as f64 {
                    0.0
                } else {
                    img.get(yy as usize, xx as usize, ch)
                }
            };
            for ch in 0..c {
                let v00 = sample(y0f, x0f, ch);
                let v01 = sample(y0f, x0f + 1.0, ch);
                let v10 = sample(y0f + 1.0, x0f, ch);
                let v11 = sample(y0f + 1.0, x0f + 1.0, ch);
                let top = v00 + (v01 - v00) * fx;
                let bot = v10 + (v11 - v10) * fx;
                out.set(oy, ox, ch, top + (bot - top) * fy);
            }
        }
    }
    Ok(out)
}

/// Channel-wise (x − mean) / std. Output values may leave [0,1].
pub fn normalize(img: &ImageBuffer, mean: &[f32], std: &[f32]) -> Result<ImageBuffer> {
    if mean.len() != img.channels || std.len() != img.channels {
        return Err(Error::InvalidArgument(format!(
            "normalize expects {} mean/std entries",
            img.channels
        )));
    }
    if std.iter().any(|&s| s <= 0.0) {
        return Err(Error::InvalidArgument("normalize std must be > 0".into()));
    }
    let mut out = img.clone();
    let c = img.channels;
    for px in out.pixels.chunks_exact_mut(c) {
        for (ch, v) in px.iter_mut().enumerate() {
            *v = (*v - mean[ch]) / std[ch];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient_image(h: usize, w: usize) -> ImageBuffer {
        let mut px = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                px.push((x + y) as f32 / (h + w - 2) as f32);
            }
        }
        ImageBuffer::new(h, w, 1, px).unwrap()
    }

    #[test]
    fn resize_same_size_is_identity() {
        let img = gradient_image(7, 5);
        let out = bilinear_resize(&img, 7, 5).unwrap();
        for (a, b) in img.pixels.iter().zip(&out.pixels) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn resize_2x2_checker_to_1x1_averages() {
        let img = ImageBuffer::new(2, 2, 1, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let out = bilinear_resize(&img, 1, 1).unwrap();
        assert!((out.pixels[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn resize_1x1_constant_broadcasts() {
        let img = ImageBuffer::new(1, 1, 1, vec![0.37]).unwrap();
        let out = bilinear_resize(&img, 9, 9).unwrap();
        for &v in &out.pixels {
            assert!((v - 0.37).abs() < 1e-6);
        }
    }

    #[test]
    fn resize_constant_exact_any_size() {
        let img = ImageBuffer::filled(13, 7, 3, 0.42);
        for (h, w) in [(3, 3), (20, 5), (64, 64)] {
            let out = bilinear_resize(&img, h, w).unwrap();
            for &v in &out.pixels {
                assert!((v - 0.42).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn resize_zero_target_errors() {
        let img = gradient_image(4, 4);
        assert!(bilinear_resize(&img, 0, 4).is_err());
    }

    #[test]
    fn smooth_survives_round_trip_better_than_checkerboard() {
        let smooth = gradient_image(32, 32);
        let mut checker = ImageBuffer::filled(32, 32, 1, 0.0);
        for y in 0..32 {
            for x in 0..32 {
                checker.set(y, x, 0, ((x + y) % 2) as f32);
            }
        }
        let mae = |a: &ImageBuffer, b: &ImageBuffer| -> f32 {
            a.pixels
                .iter()
                .zip(&b.pixels)
                .map(|(x, y)| (x - y).abs())
                .sum::<f32>()
                / a.pixels.len() as f32
        };
        let rt = |img: &ImageBuffer| {
            let down = bilinear_resize(img, 16, 16).unwrap();
            bilinear_resize(&down, 32, 32).unwrap()
        };
        let smooth_mae = mae(&smooth, &rt(&smooth));
        let checker_mae = mae(&checker, &rt(&checker));
        assert!(smooth_mae < 1e-3, "smooth MAE {smooth_mae}");
        assert!(smooth_mae < checker_mae);
    }

    #[test]
    fn flip_is_involution() {
        let img = gradient_image(5, 8);
        assert_eq!(horizontal_flip(&horizontal_flip(&img)), img);
    }

    #[test]
    fn flip_width_one_fixed_point() {
        let img = gradient_image(4, 1);
        assert_eq!(horizontal_flip(&img), img);
    }

    #[test]
    fn flip_1x2_swaps() {
        let img = ImageBuffer::new(1, 2, 1, vec![0.2, 0.9]).unwrap();
        assert_eq!(horizontal_flip(&img).pixels, vec![0.9, 0.2]);
    }

    #[test]
    fn grayscale_white_stays_white() {
        let img = ImageBuffer::filled(2, 2, 3, 1.0);
        let out = to_grayscale(&img).unwrap();
        for &v in &out.pixels {
            assert!((v - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn grayscale_pure_red_is_luma() {
        let img = ImageBuffer::new(1, 1, 3, vec![1.0, 0.0, 0.0]).unwrap();
        let out = to_grayscale(&img).unwrap();
        for &v in &out.pixels {
            assert!((v - 0.299).abs() < 1e-6);
        }
    }

    #[test]
    fn grayscale_is_idempotent() {
        let img = ImageBuffer::new(1, 2, 3, vec![0.1, 0.5, 0.9, 0.3, 0.3, 0.3]).unwrap();
        let once = to_grayscale(&img).unwrap();
        let twice = to_grayscale(&once).unwrap();
        for (a, b) in once.pixels.iter().zip(&twice.pixels) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn grayscale_rejects_single_channel() {
        let img = gradient_image(2, 2);
        assert!(to_grayscale(&img).is_err());
    }

    #[test]
    fn jitter_identity_factors() {
        let img = ImageBuffer::new(1, 2, 3, vec![0.1, 0.5, 0.9, 0.3, 0.2, 0.7]).unwrap();
        let out = color_jitter(&img, 1.0, 1.0, 1.0).unwrap();
        for (a, b) in img.pixels.iter().zip(&out.pixels) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn jitter_brightness_doubles_constant() {
        let img = ImageBuffer::filled(3, 3, 1, 0.25);
        let out = color_jitter(&img, 2.0, 1.0, 1.0).unwrap();
        for &v in &out.pixels {
            assert!((v - 0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn jitter_zero_contrast_collapses_to_mean() {
        let img = gradient_image(4, 4);
        let mean = img.luma_mean();
        let out = color_jitter(&img, 1.0, 0.0, 1.0).unwrap();
        for &v in &out.pixels {
            assert!((v - mean).abs() < 1e-6);
        }
    }

    #[test]
    fn perspective_zero_displacement_is_identity() {
        let img = gradient_image(8, 8);
        let out = random_perspective(&img, &[(0.0, 0.0); 4]).unwrap();
        for (a, b) in img.pixels.iter().zip(&out.pixels) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn homography_zero_displacement_is_identity_matrix() {
        let corners = [(0.0, 0.0), (7.0, 0.0), (0.0, 7.0), (7.0, 7.0)];
        let h = homography_from_corners(&corners, &corners).unwrap();
        let identity = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        for (a, b) in h.iter().zip(&identity) {
            assert!((a - b).abs() < 1e-9, "{h:?}");
        }
    }

    #[test]
    fn perspective_pure_translation_shifts_with_zero_fill() {
        let mut img = ImageBuffer::filled(8, 8, 1, 0.0);
        img.set(3, 3, 0, 1.0);
        let shift = [(2.0, 1.0); 4];
        let out = random_perspective(&img, &shift).unwrap();
        assert!((out.get(4, 5, 0) - 1.0).abs() < 1e-5);
        // the vacated edge is zero-filled
        for y in 0..8 {
            assert_eq!(out.get(y, 0, 0), 0.0);
        }
    }

    #[test]
    fn perspective_degenerate_corners_error() {
        let img = gradient_image(8, 8);
        // collapse all corners to one point
        let d = [
            (0.0, 0.0),
            (-7.0, 0.0),
            (0.0, -7.0),
            (-7.0, -7.0),
        ];
        assert!(random_perspective(&img, &d).is_err());
    }

    #[test]
    fn normalize_identity_and_constant() {
        let img = gradient_image(3, 3);
        let out = normalize(&img, &[0.0], &[1.0]).unwrap();
        assert_eq!(out.pixels, img.pixels);
        let flat = ImageBuffer::filled(2, 2, 1, 0.5);
        let out = normalize(&flat, &[0.5], &[0.5]).unwrap();
        for &v in &out.pixels {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn normalize_scales_as_expected() {
        let img = ImageBuffer::filled(1, 1, 1, 1.0);
        let out = normalize(&img, &[0.5], &[0.5]).unwrap();
        assert!((out.pixels[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn normalize_zero_std_errors() {
        let img = gradient_image(2, 2);
        assert!(normalize(&img, &[0.5], &[0.0]).is_err());
    }
}
