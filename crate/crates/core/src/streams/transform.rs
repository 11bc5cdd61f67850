//! Pixel-space transforms applied when a sample is materialised.

use rand::seq::SliceRandom;

use super::mnist::{IMAGE_PIXELS, IMAGE_SIDE};
use crate::seeding::Rng;

/// Rotates a 28x28 image (values already scaled) counter-clockwise by
/// `degrees` about its centre with bilinear interpolation; samples falling
/// outside the source are zero.
pub fn rotate_into(src: &[f64], degrees: f64, out: &mut [f64]) {
    debug_assert_eq!(src.len(), IMAGE_PIXELS);
    if degrees.rem_euclid(360.0) == 0.0 {
        out.copy_from_slice(src);
        return;
    }
    let side = IMAGE_SIDE as f64;
    let c = (side - 1.0) / 2.0;
    let (sin, cos) = degrees.to_radians().sin_cos();
    let at = |r: isize, col: isize| -> f64 {
        if r < 0 || col < 0 || r >= IMAGE_SIDE as isize || col >= IMAGE_SIDE as isize {
            0.0
        } else {
            src[r as usize * IMAGE_SIDE + col as usize]
        }
    };
    for row in 0..IMAGE_SIDE {
        for col in 0..IMAGE_SIDE {
            let (x, y) = (col as f64 - c, row as f64 - c);
            // inverse map: rotate the output coordinate back by -degrees
            // (y axis points down, so a visual CCW turn is a CW turn in (x, y))
            let sx = cos * x - sin * y + c;
            let sy = sin * x + cos * y + c;
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as isize, y0 as isize);
            out[row * IMAGE_SIDE + col] = (1.0 - fy) * ((1.0 - fx) * at(y0, x0) + fx * at(y0, x0 + 1))
                + fy * ((1.0 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
        }
    }
}

/// Seeded uniformly random permutation of the 784 pixel positions.
pub fn random_permutation(rng: &mut Rng) -> Vec<u16> {
    let mut p: Vec<u16> = (0..IMAGE_PIXELS as u16).collect();
    p.shuffle(rng);
    p
}

/// `out[i] = src[perm[i]]`.
pub fn permute_into(src: &[f64], perm: &[u16], out: &mut [f64]) {
    for (o, &p) in out.iter_mut().zip(perm) {
        *o = src[p as usize];
    }
}

pub fn inverse_permutation(perm: &[u16]) -> Vec<u16> {
    let mut inv = vec![0u16; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p as usize] = i as u16;
    }
    inv
}
