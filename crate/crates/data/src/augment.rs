//! Label-preserving image transforms on square grayscale images.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Rotation about the image centre by `degrees` (counter-clockwise), with
/// bilinear interpolation and zero fill.
pub fn rotate(image: &[u8], side: usize, degrees: f64) -> Vec<u8> {
    let (sin, cos) = degrees.to_radians().sin_cos();
    let c = (side as f64 - 1.0) / 2.0;
    let px = |x: isize, y: isize| -> f64 {
        if x < 0 || y < 0 || x >= side as isize || y >= side as isize {
            0.0
        } else {
            image[y as usize * side + x as usize] as f64
        }
    };
    let mut out = vec![0u8; side * side];
    for y in 0..side {
        for x in 0..side {
            // inverse map: where does this output pixel come from
            let (dx, dy) = (x as f64 - c, y as f64 - c);
            let sx = cos * dx - sin * dy + c;
            let sy = sin * dx + cos * dy + c;
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as isize, y0 as isize);
            let v = px(x0, y0) * (1.0 - fx) * (1.0 - fy)
                + px(x0 + 1, y0) * fx * (1.0 - fy)
                + px(x0, y0 + 1) * (1.0 - fx) * fy
                + px(x0 + 1, y0 + 1) * fx * fy;
            out[y * side + x] = v.round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

/// Integer translation by `(dx, dy)` pixels (right, down), zero fill.
pub fn shift(image: &[u8], side: usize, dx: isize, dy: isize) -> Vec<u8> {
    let mut out = vec![0u8; side * side];
    for y in 0..side as isize {
        for x in 0..side as isize {
            let (sx, sy) = (x - dx, y - dy);
            if sx >= 0 && sy >= 0 && sx < side as isize && sy < side as isize {
                out[(y * side as isize + x) as usize] = image[(sy * side as isize + sx) as usize];
            }
        }
    }
    out
}

/// Left-right reflection.
pub fn mirror(image: &[u8], side: usize) -> Vec<u8> {
    let mut out = image.to_vec();
    for row in out.chunks_exact_mut(side) {
        row.reverse();
    }
    out
}

/// Ranges of the random rotation and translation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Augmentation {
    pub max_rotation_degrees: f64,
    pub max_shift_pixels: usize,
}

impl Default for Augmentation {
    fn default() -> Self {
        Self {
            max_rotation_degrees: 15.0,
            max_shift_pixels: 2,
        }
    }
}

impl Augmentation {
    /// A rotation uniform in `[-max, max]` followed by a shift uniform in
    /// `{-max..=max}^2`.
    pub fn apply<R: Rng>(&self, image: &[u8], side: usize, rng: &mut R) -> Vec<u8> {
        let r = self.max_rotation_degrees;
        let angle = if r > 0.0 { rng.random_range(-r..=r) } else { 0.0 };
        let s = self.max_shift_pixels as i64;
        let dx = rng.random_range(-s..=s) as isize;
        let dy = rng.random_range(-s..=s) as isize;
        shift(&rotate(image, side, angle), side, dx, dy)
    }

    pub fn describe(&self) -> String {
        format!(
            "rotation uniform in [-{0}, {0}] degrees (bilinear), then shift uniform in [-{1}, {1}] pixels",
            self.max_rotation_degrees, self.max_shift_pixels
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn right_angle_rotation_permutes_pixels() {
        let side = 5;
        let img: Vec<u8> = (0..25).collect();
        let r = rotate(&img, side, 90.0);
        let back = rotate(&rotate(&rotate(&r, side, 90.0), side, 90.0), side, 90.0);
        assert_eq!(back, img);
        assert_eq!(rotate(&img, side, 0.0), img);
        let mut sorted = r.clone();
        sorted.sort();
        assert_eq!(sorted, img);
    }

    #[test]
    fn shift_and_mirror() {
        let img = vec![1, 2, 3, 4];
        assert_eq!(shift(&img, 2, 1, 0), vec![0, 1, 0, 3]);
        assert_eq!(shift(&img, 2, 0, -1), vec![3, 4, 0, 0]);
        assert_eq!(mirror(&img, 2), vec![2, 1, 4, 3]);
    }
}
