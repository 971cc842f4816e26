use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::simworld::SessionLog;

/// A stack of equally sized `H x W x C` images in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageSet {
    shape: [usize; 3],
    data: Vec<f32>,
}

impl ImageSet {
    pub fn new(shape: [usize; 3]) -> Self {
        ImageSet { shape, data: Vec::new() }
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    fn stride(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.stride()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn push(&mut self, image: &Tensor<f32>) -> Result<()> {
        if image.shape() != self.shape {
            return Err(Error::shape("ImageSet::push", &self.shape, image.shape()));
        }
        self.data.extend_from_slice(image.data());
        Ok(())
    }

    pub fn get(&self, i: usize) -> Tensor<f32> {
        let s = self.stride();
        Tensor::new(self.shape.to_vec(), self.data[i * s..(i + 1) * s].to_vec()).expect("stride matches shape")
    }

    /// `N x H x W x C` batch of the listed images, in order.
    pub fn gather(&self, idx: &[usize]) -> Tensor<f32> {
        let s = self.stride();
        let mut data = Vec::with_capacity(idx.len() * s);
        for &i in idx {
            data.extend_from_slice(&self.data[i * s..(i + 1) * s]);
        }
        let [h, w, c] = self.shape;
        Tensor::new(vec![idx.len(), h, w, c], data).expect("stride matches shape")
    }

    pub fn map_images(&self, mut f: impl FnMut(usize, Tensor<f32>) -> Result<Tensor<f32>>) -> Result<ImageSet> {
        let mut out = ImageSet::new(self.shape);
        for i in 0..self.len() {
            out.push(&f(i, self.get(i))?)?;
        }
        Ok(out)
    }
}

/// Frames paired with the oracle's recorded actions.
#[derive(Clone, Debug, PartialEq)]
pub struct DriveData {
    pub images: ImageSet,
    pub actions: Vec<[f32; 3]>,
}

impl DriveData {
    /// Every frame of every session, resized to `side`.
    pub fn from_sessions(sessions: &[SessionLog], side: usize) -> Result<Self> {
        let mut images = ImageSet::new([side, side, 3]);
        let mut actions = Vec::new();
        for s in sessions {
            s.validate()?;
            for (frame, a) in s.frames.iter().zip(&s.actions) {
                images.push(&frame.resized(side).to_tensor())?;
                actions.push([a.steering as f32, a.throttle as f32, a.brake as f32]);
            }
        }
        if actions.is_empty() {
            return Err(Error::invalid("no frames in the given sessions"));
        }
        Ok(DriveData { images, actions })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Splits off the last `round(fraction * len)` frames as a held-out tail.
    pub fn split_tail(self, fraction: f64) -> Result<(DriveData, DriveData)> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::invalid(format!("held-out fraction must lie in [0, 1), got {fraction}")));
        }
        let n = self.len();
        let k = (fraction * n as f64).round() as usize;
        let cut = n - k;
        let head: Vec<usize> = (0..cut).collect();
        let tail: Vec<usize> = (cut..n).collect();
        Ok((self.subset(&head), self.subset(&tail)))
    }

    pub fn subset(&self, idx: &[usize]) -> DriveData {
        let mut images = ImageSet::new(self.images.shape());
        for &i in idx {
            images.push(&self.images.get(i)).expect("same shape");
        }
        DriveData {
            images,
            actions: idx.iter().map(|&i| self.actions[i]).collect(),
        }
    }

    pub fn mean_action(&self) -> [f64; 3] {
        let mut m = [0.0; 3];
        for a in &self.actions {
            for k in 0..3 {
                m[k] += a[k] as f64;
            }
        }
        m.map(|v| v / self.len().max(1) as f64)
    }

    /// Combined MSE of always predicting `constant`.
    pub fn constant_mse(&self, constant: [f64; 3]) -> f64 {
        let total: f64 = self
            .actions
            .iter()
            .map(|a| (0..3).map(|k| (a[k] as f64 - constant[k]).powi(2)).sum::<f64>() / 3.0)
            .sum();
        total / self.len().max(1) as f64
    }
}
