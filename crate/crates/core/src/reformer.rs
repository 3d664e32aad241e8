//! Inference-time projection of inputs toward the clean-image manifold.

use ndarray::Array2;

use crate::detector::Reconstructor;
use crate::error::{Error, Result};
use crate::frequency::RepresentationMode;
use crate::models::ReconstructionModel;
use crate::parallel::map_ordered;

/// A spatial reconstruction network applied in a single forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ReformerBundle<R = ReconstructionModel> {
    model: R,
}

impl<R: Reconstructor> ReformerBundle<R> {
    /// Fails unless the model operates on spatial images.
    pub fn new(model: R) -> Result<Self> {
        if model.mode() != RepresentationMode::Spatial {
            return Err(Error::Config(format!("reformer must use the spatial representation, got {}", model.mode())));
        }
        Ok(Self { model })
    }

    pub fn model(&self) -> &R {
        &self.model
    }

    pub fn reform_one(&self, image: &Array2<f64>) -> Result<Array2<f64>> {
        let out = self.model.reconstruct(image)?;
        if out.dim() != image.dim() {
            return Err(Error::Shape(format!("reformer output {:?} vs input {:?}", out.dim(), image.dim())));
        }
        Ok(out.mapv(|v| v.clamp(0.0, 1.0)))
    }

    /// `D(x)` clamped to `[0, 1]` for each image, in input order.
    pub fn reform(&self, images: &[Array2<f64>]) -> Result<Vec<Array2<f64>>> {
        map_ordered(images, |x| self.reform_one(x)).into_iter().collect()
    }
}

/// Free-function form of [`ReformerBundle::reform`].
pub fn reform<R: Reconstructor>(bundle: &ReformerBundle<R>, images: &[Array2<f64>]) -> Result<Vec<Array2<f64>>> {
    bundle.reform(images)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::stubs::Identity;
    use crate::models::{ArchitectureSpec, Family};

    #[test]
    fn identity_and_empty() {
        let r = ReformerBundle::new(Identity(RepresentationMode::Spatial)).unwrap();
        assert!(r.reform(&[]).unwrap().is_empty());
        let imgs = vec![Array2::from_shape_fn((4, 4), |(y, x)| (y * 4 + x) as f64 / 16.0)];
        assert_eq!(r.reform(&imgs).unwrap(), imgs);
    }

    #[test]
    fn rejects_frequency_models() {
        assert!(matches!(ReformerBundle::new(Identity(RepresentationMode::ShiftFrequency)), Err(Error::Config(_))));
    }

    #[test]
    fn outputs_are_clamped() {
        struct Overshoot;
        impl Reconstructor for Overshoot {
            fn mode(&self) -> RepresentationMode {
                RepresentationMode::Spatial
            }
            fn reconstruct(&self, rep: &Array2<f64>) -> Result<Array2<f64>> {
                Ok(rep.mapv(|v| 3.0 * v - 1.0))
            }
        }
        let r = ReformerBundle::new(Overshoot).unwrap();
        let out = r.reform(&[Array2::from_shape_fn((3, 3), |(y, _)| y as f64 / 2.0)]).unwrap();
        assert!(out[0].iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(out[0][(0, 0)], 0.0);
        assert_eq!(out[0][(2, 0)], 1.0);
    }

    #[test]
    fn shape_errors_propagate() {
        let m = ReconstructionModel::new(ArchitectureSpec::new(Family::AutoencoderIi, 1).with_size(4, 2), RepresentationMode::Spatial, 0).unwrap();
        let r = ReformerBundle::new(m).unwrap();
        assert!(matches!(r.reform(&[Array2::zeros((6, 6))]), Err(Error::Shape(_))));
    }
}
