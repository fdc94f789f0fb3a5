//! PNG reading/writing: RGB images as 8-bit color, masks as 8-bit {0, 255}
//! grayscale, probability maps as lossless 16-bit grayscale.

use crfsim_core::energy::{ColorImage, Labeling, ScalarField};
use image::{GrayImage, Luma};
use std::path::Path;

pub fn read_color_image(path: &Path) -> Result<ColorImage, String> {
    let img = image::open(path)
        .map_err(|e| format!("reading image {}: {e}", path.display()))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    let mut out = ColorImage::new(h as usize, w as usize);
    for (x, y, pixel) in img.enumerate_pixels() {
        out.set(
            y as usize,
            x as usize,
            [
                pixel[0] as f64 / 255.0,
                pixel[1] as f64 / 255.0,
                pixel[2] as f64 / 255.0,
            ],
        );
    }
    Ok(out)
}

pub fn read_prob_map(path: &Path) -> Result<ScalarField, String> {
    let img = image::open(path).map_err(|e| format!("reading prob map {}: {e}", path.display()))?;
    let luma16 = img.to_luma16();
    let (w, h) = luma16.dimensions();
    let mut out = ScalarField::new(h as usize, w as usize);
    for (x, y, pixel) in luma16.enumerate_pixels() {
        out.set(y as usize, x as usize, pixel[0] as f64 / 65535.0);
    }
    Ok(out)
}

pub fn write_mask_png(labeling: &Labeling, path: &Path) -> Result<(), String> {
    let mut img = GrayImage::new(labeling.width as u32, labeling.height as u32);
    for r in 0..labeling.height {
        for c in 0..labeling.width {
            let v = if labeling.get(r, c) == 1 { 255 } else { 0 };
            img.put_pixel(c as u32, r as u32, Luma([v]));
        }
    }
    img.save(path)
        .map_err(|e| format!("writing mask {}: {e}", path.display()))
}
