use crate::error::{Error, Result};
use crate::nn::scalar::Scalar;
use crate::nn::tensor::Tensor;
use crate::rng::Rng;

/// Index of a parameter inside its [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Named, ordered collection of trainable tensors.
///
/// Registration order is part of the set's identity: two sets built by the
/// same sequence of `register_*` calls with the same seed are bit-identical.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<T = f32> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    seed: u64,
    rng: Rng,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new(seed: u64) -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
            seed,
            rng: Rng::new(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Registers a tensor initialised uniformly in `±sqrt(1/fan_in)`.
    pub fn register_uniform(&mut self, name: &str, shape: &[usize], fan_in: usize) -> Result<ParamId> {
        let bound = (1.0 / fan_in.max(1) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| T::of(self.rng.range(-bound, bound)))
            .collect();
        self.insert(name, Tensor::from_vec(shape, data)?)
    }

    pub fn register_zeros(&mut self, name: &str, shape: &[usize]) -> Result<ParamId> {
        self.insert(name, Tensor::zeros(shape))
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor<T>) -> Result<ParamId> {
        if self.names.iter().any(|n| n == name) {
            return Err(Error::DuplicateParam(name.to_string()));
        }
        self.names.push(name.to_string());
        self.tensors.push(tensor);
        Ok(ParamId(self.tensors.len() - 1))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn data(&self, id: ParamId) -> &[T] {
        self.tensors[id.0].data()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor<T>)> {
        self.tensors
            .iter()
            .enumerate()
            .map(|(i, t)| (ParamId(i), self.names[i].as_str(), t))
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.tensors.iter_mut()
    }

    /// Copies gradients into every tensor's `grad` slot.
    pub fn set_grads(&mut self, grads: &Gradients<T>) -> Result<()> {
        if grads.bufs.len() != self.tensors.len() {
            return Err(Error::Shape(format!(
                "{} gradient buffers for {} parameters",
                grads.bufs.len(),
                self.tensors.len()
            )));
        }
        for (t, g) in self.tensors.iter_mut().zip(&grads.bufs) {
            t.set_grad(g.clone())?;
        }
        Ok(())
    }

    pub fn clear_grads(&mut self) {
        for t in &mut self.tensors {
            t.clear_grad();
        }
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            seed: self.seed,
            rng: self.rng.clone(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::all_finite)
    }
}

/// Gradient buffers laid out parallel to a [`ParamSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T = f32> {
    pub bufs: Vec<Vec<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(params: &ParamSet<T>) -> Self {
        Self {
            bufs: params
                .tensors
                .iter()
                .map(|t| vec![T::zero(); t.len()])
                .collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &[T] {
        &self.bufs[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [T] {
        &mut self.bufs[id.0]
    }

    /// Two distinct buffers at once, typically a weight and its bias.
    pub fn pair_mut(&mut self, a: ParamId, b: ParamId) -> (&mut [T], &mut [T]) {
        assert_ne!(a, b, "pair_mut needs two distinct parameters");
        if a.0 < b.0 {
            let (lo, hi) = self.bufs.split_at_mut(b.0);
            (&mut lo[a.0], &mut hi[0])
        } else {
            let (lo, hi) = self.bufs.split_at_mut(a.0);
            (&mut hi[0], &mut lo[b.0])
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.bufs.iter_mut().zip(&other.bufs) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for b in &mut self.bufs {
            for x in b.iter_mut() {
                *x *= s;
            }
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.bufs
            .iter()
            .flatten()
            .map(|v| v.f64() * v.f64())
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales so the global l2 norm is at most `max_norm`. Returns the
    /// norm before clipping.
    pub fn clip_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.l2_norm();
        if norm > max_norm {
            self.scale(T::of(max_norm / norm));
        }
        norm
    }

    pub fn zero(&mut self, id: ParamId) {
        self.bufs[id.0].fill(T::zero());
    }

    pub fn all_finite(&self) -> bool {
        self.bufs.iter().flatten().all(|v| v.is_finite())
    }

    /// Sums a sequence of gradient sets in order.
    pub fn sum_ordered<I: IntoIterator<Item = Self>>(parts: I) -> Option<Self> {
        let mut iter = parts.into_iter();
        let mut acc = iter.next()?;
        for g in iter {
            acc.add_assign(&g);
        }
        Some(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reinit_with_same_seed_is_bit_identical() {
        let build = |seed| {
            let mut p = ParamSet::<f32>::new(seed);
            p.register_uniform("w", &[8, 4], 4).unwrap();
            p.register_uniform("b", &[8], 4).unwrap();
            p
        };
        assert_eq!(build(5), build(5));
        assert_ne!(build(5), build(6));
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let mut p = ParamSet::<f64>::new(1);
        let id = p.register_uniform("w", &[100, 16], 16).unwrap();
        assert!(p.data(id).iter().all(|v| v.abs() <= 0.25));
    }

    #[test]
    fn names_are_unique() {
        let mut p = ParamSet::<f32>::new(0);
        p.register_zeros("w", &[2]).unwrap();
        assert!(matches!(
            p.register_zeros("w", &[3]),
            Err(Error::DuplicateParam(_))
        ));
        assert_eq!(p.id("w"), Some(ParamId(0)));
        assert_eq!(p.id("nope"), None);
    }

    #[test]
    fn clip_norm_scales_down_only() {
        let mut p = ParamSet::<f64>::new(0);
        p.register_zeros("a", &[2]).unwrap();
        let mut g = Gradients::zeros_like(&p);
        g.bufs[0] = vec![3.0, 4.0];
        assert_eq!(g.clip_norm(10.0), 5.0);
        assert_eq!(g.bufs[0], vec![3.0, 4.0]);
        g.clip_norm(1.0);
        assert!((g.l2_norm() - 1.0).abs() < 1e-12);
    }
}
