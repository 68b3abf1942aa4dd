use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};

use crate::error::{Error, Result};
use crate::imaging::PlanarImage;

/// Floating point element type of a graph: `f32` for training, `f64` for
/// gradient checks.
pub trait Real:
    Float + FromPrimitive + Sum + AddAssign + SubAssign + MulAssign + Send + Sync + Debug + Default + 'static
{
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("representable")
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().expect("finite cast")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Dense `(batch, channels, height, width)` array.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: [usize; 4],
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: [usize; 4], value: T) -> Self {
        Self {
            shape,
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn scalar(value: T) -> Self {
        Self::full([1, 1, 1, 1], value)
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    #[inline]
    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    #[inline]
    pub fn numel(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Spatial plane size `height * width`.
    #[inline]
    pub fn plane_len(&self) -> usize {
        self.shape[2] * self.shape[3]
    }

    #[inline]
    pub fn plane(&self, b: usize, c: usize) -> &[T] {
        let n = self.plane_len();
        let start = (b * self.shape[1] + c) * n;
        &self.data[start..start + n]
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> T {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| U::of(v.f64())).collect(),
        }
    }

    /// Stacks same-sized images along the batch axis.
    pub fn from_images(images: &[&PlanarImage]) -> Result<Self> {
        let first = images
            .first()
            .ok_or_else(|| Error::Shape("empty image batch".into()))?;
        let mut data = Vec::with_capacity(images.len() * first.data().len());
        for img in images {
            if !img.same_shape(first) {
                return Err(Error::Shape("images in a batch must share a shape".into()));
            }
            data.extend(img.data().iter().map(|&v| T::of(v as f64)));
        }
        Self::from_vec(
            [images.len(), first.channels(), first.height(), first.width()],
            data,
        )
    }

    pub fn from_image(img: &PlanarImage) -> Self {
        Self::from_images(&[img]).expect("single image")
    }

    /// Extracts batch element `b` as an image.
    pub fn to_image(&self, b: usize) -> PlanarImage {
        let [_, c, h, w] = self.shape;
        let n = c * h * w;
        let data = self.data[b * n..(b + 1) * n]
            .iter()
            .map(|&v| v.f64() as f32)
            .collect();
        PlanarImage::from_data(w, h, c, data).expect("consistent shape")
    }
}
