//! Input distributions and image perturbations.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grayscale image with pixels in `[0, 1]`, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        let img = Self {
            height,
            width,
            pixels,
        };
        img.validate()?;
        Ok(img)
    }

    fn validate(&self) -> Result<()> {
        if self.height * self.width != self.pixels.len() || self.pixels.is_empty() {
            return Err(Error::InvalidDistribution(format!(
                "{}x{} image with {} pixels",
                self.height,
                self.width,
                self.pixels.len()
            )));
        }
        if self.pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidDistribution("pixel outside [0, 1]".into()));
        }
        Ok(())
    }

    fn at(&self, r: isize, c: isize) -> f64 {
        if r < 0 || c < 0 || r as usize >= self.height || c as usize >= self.width {
            0.0
        } else {
            self.pixels[r as usize * self.width + c as usize]
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoxRadius {
    Scalar(f64),
    PerDim(Vec<f64>),
}

impl BoxRadius {
    fn get(&self, i: usize) -> f64 {
        match self {
            BoxRadius::Scalar(r) => *r,
            BoxRadius::PerDim(r) => r[i],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputDistribution {
    UniformBox {
        center: Vec<f64>,
        radius: BoxRadius,
    },
    Gaussian {
        mean: Vec<f64>,
        std: Vec<f64>,
    },
    Rotation {
        base_image: Image,
        /// Degrees, `[low, high]`.
        angle_range: (f64, f64),
    },
    Contrast {
        base_image: Image,
        factor_range: (f64, f64),
    },
    PointMass {
        x: Vec<f64>,
    },
}

impl InputDistribution {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidDistribution(m.into()));
        match self {
            InputDistribution::UniformBox { center, radius } => {
                if center.is_empty() {
                    return bad("empty center");
                }
                match radius {
                    BoxRadius::Scalar(r) if *r < 0.0 || !r.is_finite() => bad("negative radius"),
                    BoxRadius::PerDim(r) if r.len() != center.len() => bad("radius length differs from center"),
                    BoxRadius::PerDim(r) if r.iter().any(|v| *v < 0.0 || !v.is_finite()) => {
                        bad("negative radius")
                    }
                    _ => Ok(()),
                }
            }
            InputDistribution::Gaussian { mean, std } => {
                if mean.is_empty() || mean.len() != std.len() {
                    bad("mean/std length mismatch")
                } else if std.iter().any(|s| *s < 0.0) {
                    bad("negative std")
                } else {
                    Ok(())
                }
            }
            InputDistribution::Rotation {
                base_image,
                angle_range: (lo, hi),
            } => {
                base_image.validate()?;
                if lo > hi {
                    bad("angle range low > high")
                } else {
                    Ok(())
                }
            }
            InputDistribution::Contrast {
                base_image,
                factor_range: (lo, hi),
            } => {
                base_image.validate()?;
                if lo > hi || *lo < 0.0 || *hi > 2.0 {
                    bad("contrast factors must satisfy 0 <= low <= high <= 2")
                } else {
                    Ok(())
                }
            }
            InputDistribution::PointMass { x } => {
                if x.is_empty() {
                    bad("empty point")
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            InputDistribution::UniformBox { center, .. } => center.len(),
            InputDistribution::Gaussian { mean, .. } => mean.len(),
            InputDistribution::Rotation { base_image, .. }
            | InputDistribution::Contrast { base_image, .. } => base_image.pixels.len(),
            InputDistribution::PointMass { x } => x.len(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            InputDistribution::UniformBox { center, radius } => center
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let r = radius.get(i);
                    c + r * rng.gen_range(-1.0..=1.0)
                })
                .collect(),
            InputDistribution::Gaussian { mean, std } => mean
                .iter()
                .zip(std)
                .map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal))
                .collect(),
            InputDistribution::Rotation {
                base_image,
                angle_range: (lo, hi),
            } => rotate_image(base_image, uniform(rng, *lo, *hi)).pixels,
            InputDistribution::Contrast {
                base_image,
                factor_range: (lo, hi),
            } => adjust_contrast(base_image, uniform(rng, *lo, *hi)).pixels,
            InputDistribution::PointMass { x } => x.clone(),
        }
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

/// Rotates counter-clockwise about the image center with bilinear
/// interpolation. Samples falling outside the frame read 0.
pub fn rotate_image(img: &Image, angle_deg: f64) -> Image {
    let angle = angle_deg.rem_euclid(360.0);
    if angle == 0.0 {
        return img.clone();
    }
    let (sin, cos) = angle.to_radians().sin_cos();
    let cy = (img.height as f64 - 1.0) / 2.0;
    let cx = (img.width as f64 - 1.0) / 2.0;
    let mut pixels = Vec::with_capacity(img.pixels.len());
    for r in 0..img.height {
        for c in 0..img.width {
            // Inverse map: rotate the destination coordinate back by -angle.
            let dy = r as f64 - cy;
            let dx = c as f64 - cx;
            let sx = cos * dx - sin * dy + cx;
            let sy = sin * dx + cos * dy + cy;
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as isize, y0 as isize);
            let v = (1.0 - fy) * ((1.0 - fx) * img.at(y0, x0) + fx * img.at(y0, x0 + 1))
                + fy * ((1.0 - fx) * img.at(y0 + 1, x0) + fx * img.at(y0 + 1, x0 + 1));
            pixels.push(v.clamp(0.0, 1.0));
        }
    }
    Image {
        height: img.height,
        width: img.width,
        pixels,
    }
}

/// `pixel -> clip(0.5 + factor * (pixel - 0.5), 0, 1)`.
pub fn adjust_contrast(img: &Image, factor: f64) -> Image {
    Image {
        height: img.height,
        width: img.width,
        pixels: img
            .pixels
            .iter()
            .map(|p| (p + (factor - 1.0) * (p - 0.5)).clamp(0.0, 1.0))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn blob(size: usize) -> Image {
        let c = (size as f64 - 1.0) / 2.0;
        let pixels = (0..size * size)
            .map(|i| {
                let (r, col) = ((i / size) as f64, (i % size) as f64);
                let d2 = (r - c).powi(2) + (col - c - 1.5).powi(2);
                (-d2 / 6.0).exp()
            })
            .collect();
        Image::new(size, size, pixels).unwrap()
    }

    #[test]
    fn point_mass_is_constant() {
        let d = InputDistribution::PointMass { x: vec![0.2, 0.4] };
        let mut rng = rng_from_seed(1);
        for _ in 0..10 {
            assert_eq!(d.sample(&mut rng), vec![0.2, 0.4]);
        }
    }

    #[test]
    fn uniform_box_support() {
        let d = InputDistribution::UniformBox {
            center: vec![0.0; 5],
            radius: BoxRadius::Scalar(0.01),
        };
        let mut rng = rng_from_seed(2);
        for _ in 0..1000 {
            assert!(d.sample(&mut rng).iter().all(|v| v.abs() <= 0.01));
        }
    }

    #[test]
    fn uniform_box_moments() {
        let d = InputDistribution::UniformBox {
            center: vec![0.0],
            radius: BoxRadius::Scalar(1.0),
        };
        let mut rng = rng_from_seed(3);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| d.sample(&mut rng)[0]).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02);
        assert!((var - 1.0 / 3.0).abs() < 0.02);
    }

    #[test]
    fn sampling_is_reproducible() {
        let d = InputDistribution::Rotation {
            base_image: blob(8),
            angle_range: (-30.0, 30.0),
        };
        assert_eq!(d.sample(&mut rng_from_seed(5)), d.sample(&mut rng_from_seed(5)));
    }

    #[test]
    fn validation_rejects_bad_ranges() {
        let img = blob(4);
        assert!(InputDistribution::Rotation { base_image: img.clone(), angle_range: (10.0, -10.0) }
            .validate()
            .is_err());
        assert!(InputDistribution::Contrast { base_image: img, factor_range: (0.5, 2.5) }
            .validate()
            .is_err());
        assert!(InputDistribution::UniformBox { center: vec![0.0], radius: BoxRadius::Scalar(-1.0) }
            .validate()
            .is_err());
        assert!(Image::new(1, 2, vec![0.5, 1.5]).is_err());
    }

    #[test]
    fn rotation_zero_and_full_turn() {
        let img = blob(9);
        assert_eq!(rotate_image(&img, 0.0), img);
        let full = rotate_image(&img, 360.0);
        for (a, b) in full.pixels.iter().zip(&img.pixels) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn rotation_keeps_center_pixel() {
        let mut px = vec![0.0; 9];
        px[4] = 1.0;
        let img = Image::new(3, 3, px).unwrap();
        let rot = rotate_image(&img, 90.0);
        assert!((rot.pixels[4] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_quarter_turn_moves_pixels() {
        // Pixel right of center moves above center under a counter-clockwise turn.
        let mut px = vec![0.0; 9];
        px[5] = 1.0;
        let rot = rotate_image(&Image::new(3, 3, px).unwrap(), 90.0);
        assert!((rot.pixels[1] - 1.0).abs() < 1e-12, "{:?}", rot.pixels);
    }

    #[test]
    fn rotation_roughly_preserves_interior_mass() {
        let img = blob(24);
        let before: f64 = img.pixels.iter().sum();
        for angle in [15.0, 33.0, 90.0, 137.0] {
            let after: f64 = rotate_image(&img, angle).pixels.iter().sum();
            assert!((after - before).abs() / before < 0.05, "angle {angle}");
        }
    }

    #[test]
    fn contrast_examples() {
        let img = Image::new(1, 3, vec![0.8, 0.1, 0.5]).unwrap();
        assert_eq!(adjust_contrast(&img, 1.0), img);
        assert!(adjust_contrast(&img, 0.0).pixels.iter().all(|p| *p == 0.5));
        assert!((adjust_contrast(&img, 0.5).pixels[0] - 0.65).abs() < 1e-12);
        assert!(adjust_contrast(&img, 2.0).pixels.iter().all(|p| (0.0..=1.0).contains(p)));
    }
}
