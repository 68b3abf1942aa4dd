use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::PlanarImage;

/// Synthetic test patterns with opposite amounts of self-similarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestImage {
    /// Vertical binary grating of period 4: columns `0, 0, 1, 1, 0, 0, ...`.
    Stripes,
    /// I.i.d. Bernoulli(0.5) pixels.
    BinaryNoise,
}

pub const MIN_TEST_IMAGE_SIZE: usize = 32;

/// Grayscale `size × size` test image. Stripes ignore the seed.
pub fn make_test_image(kind: TestImage, size: usize, seed: u64) -> Result<PlanarImage> {
    if size < MIN_TEST_IMAGE_SIZE {
        return Err(Error::Parameter(format!(
            "test images need size >= {MIN_TEST_IMAGE_SIZE}, got {size}"
        )));
    }
    Ok(match kind {
        TestImage::Stripes => {
            PlanarImage::from_fn(size, size, 1, |_, _, x| if x % 4 >= 2 { 1.0 } else { 0.0 })
        }
        TestImage::BinaryNoise => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data = (0..size * size)
                .map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 })
                .collect();
            PlanarImage::from_data(size, size, 1, data)?
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stripes_are_vertical_with_period_four() {
        let img = make_test_image(TestImage::Stripes, 32, 0).unwrap();
        for y in 1..32 {
            for x in 0..32 {
                assert_eq!(img.get(0, y, x), img.get(0, 0, x));
            }
        }
        let row: Vec<f32> = (0..8).map(|x| img.get(0, 0, x)).collect();
        assert_eq!(row, [0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn binary_noise_is_balanced_and_seeded() {
        let n = 128 * 128;
        let a = make_test_image(TestImage::BinaryNoise, 128, 1).unwrap();
        let b = make_test_image(TestImage::BinaryNoise, 128, 2).unwrap();
        let mean = a.data().iter().map(|&v| v as f64).sum::<f64>() / n as f64;
        let sd = (0.25 / n as f64).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * sd, "mean {mean}");
        let hamming = a.data().iter().zip(b.data()).filter(|(x, y)| x != y).count();
        assert!(hamming as f64 > 0.4 * n as f64);
        assert_eq!(a, make_test_image(TestImage::BinaryNoise, 128, 1).unwrap());
        assert!(a.data().iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn small_sizes_are_rejected() {
        assert!(make_test_image(TestImage::Stripes, 31, 0).is_err());
    }
}
