use super::{BayerFrame, PlanarImage, GREEN};

const GREEN_KERNEL: [[f32; 3]; 3] = [[0.0, 1.0, 0.0], [1.0, 4.0, 1.0], [0.0, 1.0, 0.0]];
const RB_KERNEL: [[f32; 3]; 3] = [[1.0, 2.0, 1.0], [2.0, 4.0, 2.0], [1.0, 2.0, 1.0]];

/// Per-channel bilinear interpolation of the CFA samples.
///
/// Each output sample is the kernel-weighted mean of the same-color samples
/// in its 3×3 neighbourhood that lie inside the frame. In the interior this
/// is the classic bilinear demosaick; at the border the missing taps are
/// dropped and the weights renormalized, so no pixel is undefined. Sampled
/// positions are reproduced exactly.
pub fn demosaic_bilinear(frame: &BayerFrame) -> PlanarImage {
    let (w, h) = (frame.width(), frame.height());
    let pattern = frame.pattern();
    let data = frame.data();
    let mut out = PlanarImage::new(w, h, 3);
    for c in 0..3 {
        let kernel = if c == GREEN { &GREEN_KERNEL } else { &RB_KERNEL };
        let plane = out.plane_mut(c);
        for y in 0..h {
            for x in 0..w {
                if pattern.color_at(y, x) == c {
                    plane[y * w + x] = data[y * w + x];
                    continue;
                }
                let mut acc = 0.0f32;
                let mut norm = 0.0f32;
                for (ky, row) in kernel.iter().enumerate() {
                    let yy = y as isize + ky as isize - 1;
                    if yy < 0 || yy >= h as isize {
                        continue;
                    }
                    for (kx, &k) in row.iter().enumerate() {
                        let xx = x as isize + kx as isize - 1;
                        if k == 0.0 || xx < 0 || xx >= w as isize {
                            continue;
                        }
                        let (yy, xx) = (yy as usize, xx as usize);
                        if pattern.color_at(yy, xx) == c {
                            acc += k * data[yy * w + xx];
                            norm += k;
                        }
                    }
                }
                plane[y * w + x] = acc / norm;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{mosaic, CfaPattern};
    use rand::{Rng, SeedableRng};

    #[test]
    fn constant_frame_gives_constant_rgb() {
        for p in CfaPattern::ALL {
            let f = BayerFrame::filled(10, 8, p, 0.3).unwrap();
            let rgb = demosaic_bilinear(&f);
            assert!(rgb.data().iter().all(|&v| (v - 0.3).abs() < 1e-6));
        }
    }

    #[test]
    fn horizontal_ramp_is_recovered_in_the_interior() {
        let rgb = PlanarImage::from_fn(16, 12, 3, |_, _, x| 0.05 * x as f32);
        for p in CfaPattern::ALL {
            let out = demosaic_bilinear(&mosaic(&rgb, p).unwrap());
            for c in 0..3 {
                for y in 2..10 {
                    for x in 2..14 {
                        assert!((out.get(c, y, x) - rgb.get(c, y, x)).abs() < 1e-5);
                    }
                }
            }
        }
    }

    #[test]
    fn sampled_positions_are_preserved() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for p in CfaPattern::ALL {
            let data = (0..12 * 10).map(|_| rng.random::<f32>()).collect();
            let f = BayerFrame::new(12, 10, p, data).unwrap();
            let back = mosaic(&demosaic_bilinear(&f), p).unwrap();
            assert_eq!(back.data(), f.data());
        }
    }
}
