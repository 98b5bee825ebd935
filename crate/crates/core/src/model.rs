//! Feature extractor plus bias-free classifier.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::loss::ClassifierParams;
use crate::nn::{self, NetworkParams, NetworkSpec, ParamRole};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spec: NetworkSpec,
    pub network: NetworkParams,
    pub classifier: ClassifierParams,
}

impl Model {
    /// Network layers first, then the `K × D` classifier, all drawn from
    /// one seeded stream.
    pub fn init(spec: NetworkSpec, classes: usize, seed: u64) -> Result<Self> {
        if classes == 0 {
            return Err(Error::InvalidConfig("model needs at least one class".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let network = nn::init_params_with(&spec, &mut rng)?;
        let d = spec.feature_dim()?;
        let classifier = ClassifierParams::new(nn::he_normal(&[classes, d], d, &mut rng))?;
        Ok(Model {
            spec,
            network,
            classifier,
        })
    }

    pub fn classes(&self) -> usize {
        self.classifier.classes()
    }

    pub fn feature_dim(&self) -> usize {
        self.classifier.dim()
    }

    /// `[N, D]` features for a batch of inputs.
    pub fn features(&self, input: &Tensor) -> Result<Tensor> {
        nn::network_features(&self.spec, &self.network, input)
    }

    /// Every parameter tensor in serialization order (network, classifier).
    pub fn tensors(&self) -> Vec<(ParamRole, &Tensor)> {
        let mut out = self.network.tensors();
        out.push((ParamRole::Weight, self.classifier.weights()));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(ParamRole, &mut Tensor)> {
        let mut out = self.network.tensors_mut();
        out.push((ParamRole::Weight, self.classifier.weights_mut()));
        out
    }

    /// Replace all parameter values, checking each shape.
    pub fn load_tensors(&mut self, tensors: Vec<Tensor>) -> Result<()> {
        let mut slots = self.tensors_mut();
        if slots.len() != tensors.len() {
            return Err(Error::shape("parameter tensor count", slots.len(), tensors.len()));
        }
        for (i, ((_, slot), t)) in slots.iter_mut().zip(&tensors).enumerate() {
            if slot.shape() != t.shape() {
                return Err(Error::shape(format!("parameter tensor {i}"), slot.shape(), t.shape()));
            }
        }
        for ((_, slot), t) in slots.into_iter().zip(tensors) {
            *slot = t;
        }
        Ok(())
    }
}
