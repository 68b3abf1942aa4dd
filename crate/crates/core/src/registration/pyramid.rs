use crate::imaging::PlanarImage;

fn gaussian_kernel(sigma: f32) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f32> = (-radius..=radius)
        .map(|i| (-(i * i) as f32 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f32 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian blur with replicated borders.
pub fn gaussian_blur(img: &PlanarImage, sigma: f32) -> PlanarImage {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (w, h) = (img.width(), img.height());
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut tmp = PlanarImage::new(w, h, img.channels());
    let mut out = PlanarImage::new(w, h, img.channels());
    for c in 0..img.channels() {
        let src = img.plane(c);
        let t = tmp.plane_mut(c);
        for y in 0..h {
            for x in 0..w {
                t[y * w + x] = k
                    .iter()
                    .enumerate()
                    .map(|(i, kv)| kv * src[y * w + clamp(x as isize + i as isize - r, w)])
                    .sum();
            }
        }
        let t = tmp.plane(c);
        let o = out.plane_mut(c);
        for y in 0..h {
            for x in 0..w {
                o[y * w + x] = k
                    .iter()
                    .enumerate()
                    .map(|(i, kv)| kv * t[clamp(y as isize + i as isize - r, h) * w + x])
                    .sum();
            }
        }
    }
    out
}

/// Blur then keep even pixels, so coarse pixel `u` sits at fine pixel `2u`.
pub fn downsample(img: &PlanarImage, sigma: f32) -> PlanarImage {
    let blurred = gaussian_blur(img, sigma);
    let (w, h) = (img.width().div_ceil(2), img.height().div_ceil(2));
    PlanarImage::from_fn(w, h, img.channels(), |c, y, x| blurred.get(c, 2 * y, 2 * x))
}

/// Levels from finest (index 0) to coarsest.
pub fn build_pyramid(img: &PlanarImage, levels: usize, sigma: f32) -> Vec<PlanarImage> {
    let mut out = vec![img.clone()];
    for _ in 1..levels {
        let next = downsample(out.last().expect("non-empty"), sigma);
        out.push(next);
    }
    out
}
