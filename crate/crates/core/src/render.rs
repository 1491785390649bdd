//! Registered-slice resampling and photo/CT overlays.

use image::{GrayImage, RgbImage};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{trilinear_sample, ScalarVolume, TransformParams};

/// CT intensities on the pixel grid of slice `ordinal`'s photo (`width` x `height`).
pub fn resample_slice(vol: &ScalarVolume, theta: &TransformParams, ordinal: usize, width: usize, height: usize) -> Result<Vec<f32>> {
    theta.validate()?;
    if width == 0 || height == 0 {
        return Err(Error::InvalidInput("output image needs positive dimensions".into()));
    }
    theta.slice_translation(ordinal)?;
    let (cu, cv) = ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
    Ok((0..height)
        .into_par_iter()
        .flat_map_iter(|row| {
            (0..width).map(move |col| {
                let p = theta.transform_point([col as f64 - cu, row as f64 - cv], ordinal).expect("ordinal checked");
                trilinear_sample(vol, p) as f32
            })
        })
        .collect())
}

/// Linear map of `[lo, hi]` to `0..=255`, clamped.
pub fn to_gray8(values: &[f32], lo: f32, hi: f32) -> Vec<u8> {
    let span = if hi > lo { hi - lo } else { 1.0 };
    values.iter().map(|&v| (((v - lo) / span).clamp(0.0, 1.0) * 255.0).round() as u8).collect()
}

/// Green from the photo, red and blue from the CT slice: gray where they
/// agree, green where the photo is brighter, magenta where the CT is.
pub fn overlay(photo: &GrayImage, ct: &GrayImage) -> Result<RgbImage> {
    if photo.dimensions() != ct.dimensions() {
        let (a, b) = (photo.dimensions(), ct.dimensions());
        return Err(Error::DimensionMismatch(format!("photo is {}x{}, CT slice is {}x{}", a.0, a.1, b.0, b.1)));
    }
    let (w, h) = photo.dimensions();
    Ok(RgbImage::from_fn(w, h, |x, y| {
        let g = photo.get_pixel(x, y).0[0];
        let c = ct.get_pixel(x, y).0[0];
        image::Rgb([c, g, c])
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{MaskStack, Mask2, Volume};

    #[test]
    fn identical_images_give_gray() {
        let img = GrayImage::from_fn(5, 4, |x, y| image::Luma([(x * 40 + y * 7) as u8]));
        let out = overlay(&img, &img).unwrap();
        assert!(out.pixels().all(|p| p.0[0] == p.0[1] && p.0[1] == p.0[2]));
        assert!(overlay(&img, &GrayImage::new(4, 4)).is_err());
    }

    #[test]
    fn identity_resample_reads_voxels() {
        let vol = Volume::from_fn([5, 5, 3], 1.0, |x, y, z| (x + 10 * y + 100 * z) as f32).unwrap();
        let stack = MaskStack::sequential(vec![Mask2::zeros(5, 5).unwrap(); 3]).unwrap();
        let theta = TransformParams::for_stack(&stack, 1.0, 1.0, -1.0);
        let img = resample_slice(&vol, &theta, 2, 5, 5).unwrap();
        assert_eq!(img[0], 200.0);
        assert_eq!(img[5 * 3 + 4], 234.0);
        assert_eq!(to_gray8(&[0.0, 117.0, 234.0], 0.0, 234.0), vec![0, 128, 255]);
    }
}
