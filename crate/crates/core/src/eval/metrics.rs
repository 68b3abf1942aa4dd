use crate::error::{Error, Result};
use crate::imaging::PlanarImage;

/// Default border excluded from PSNR on each side.
pub const DEFAULT_BORDER: usize = 6;

fn check(a: &PlanarImage, b: &PlanarImage, border: usize) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::Shape(format!(
            "PSNR inputs differ: {}x{}x{} vs {}x{}x{}",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        )));
    }
    if 2 * border >= a.width() || 2 * border >= a.height() {
        return Err(Error::Shape(format!(
            "border {border} leaves nothing of a {}x{} image",
            a.width(),
            a.height()
        )));
    }
    Ok(())
}

fn from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

/// `10 log10(1 / MSE)` over all channels after dropping `border` pixels per
/// side; `+∞` when the images agree there.
pub fn psnr(a: &PlanarImage, b: &PlanarImage, border: usize) -> Result<f64> {
    check(a, b, border)?;
    let (w, h) = (a.width(), a.height());
    let mut sse = 0.0f64;
    for c in 0..a.channels() {
        let (pa, pb) = (a.plane(c), b.plane(c));
        for y in border..h - border {
            for x in border..w - border {
                let d = pa[y * w + x] as f64 - pb[y * w + x] as f64;
                sse += d * d;
            }
        }
    }
    let n = (a.channels() * (w - 2 * border) * (h - 2 * border)) as f64;
    Ok(from_mse(sse / n))
}

/// PSNR restricted to the pixels where `select(y, x)` holds, inside the
/// border.
pub fn psnr_where<F>(a: &PlanarImage, b: &PlanarImage, border: usize, select: F) -> Result<f64>
where
    F: Fn(usize, usize) -> bool,
{
    check(a, b, border)?;
    let (w, h) = (a.width(), a.height());
    let mut sse = 0.0f64;
    let mut n = 0usize;
    for y in border..h - border {
        for x in border..w - border {
            if !select(y, x) {
                continue;
            }
            for c in 0..a.channels() {
                let d = a.get(c, y, x) as f64 - b.get(c, y, x) as f64;
                sse += d * d;
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::Data("PSNR region is empty".into()));
    }
    Ok(from_mse(sse / n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{synth, AddNoise, NoiseSpec};

    #[test]
    fn identical_images_are_infinite() {
        let a = synth::natural_gray(32, 32, 1);
        assert_eq!(psnr(&a, &a, 6).unwrap(), f64::INFINITY);
    }

    #[test]
    fn closed_form_mse() {
        let a = PlanarImage::filled(20, 20, 3, 0.2);
        let b = PlanarImage::filled(20, 20, 3, 0.3);
        assert!((psnr(&a, &b, 0).unwrap() - 20.0).abs() < 1e-5);
    }

    #[test]
    fn gaussian_noise_matches_analytic_value() {
        let a = PlanarImage::filled(512, 512, 1, 0.5);
        let b = a.add_noise(&NoiseSpec::new(25.0, false, 3)).unwrap();
        let expect = 20.0 * (255.0f64 / 25.0).log10();
        assert!((psnr(&a, &b, 6).unwrap() - expect).abs() < 0.1);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = PlanarImage::filled(20, 20, 1, 0.2);
        let b = PlanarImage::filled(20, 22, 1, 0.2);
        assert!(matches!(psnr(&a, &b, 0), Err(Error::Shape(_))));
    }
}
