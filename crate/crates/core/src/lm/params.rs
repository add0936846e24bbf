use std::fmt::Debug;

use ndarray::{Array1, Array2, LinalgScalar, ScalarOperand};
use num_traits::{Float as NumFloat, FromPrimitive};
use rand::Rng;

/// Scalar type the network is generic over (`f32` for training, `f64` for
/// gradient checks).
pub trait Float:
    NumFloat
    + LinalgScalar
    + ScalarOperand
    + FromPrimitive
    + Debug
    + Send
    + Sync
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + std::iter::Sum
    + 'static
{
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("representable constant")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite float converts")
    }
}

impl Float for f32 {}
impl Float for f64 {}

/// One LSTM layer. Gate blocks are laid out `[input, forget, cell, output]`
/// along the second axis of both weight matrices and the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<F> {
    /// `in x 4H`
    pub w_input: Array2<F>,
    /// `H x 4H`
    pub w_hidden: Array2<F>,
    /// `4H`
    pub bias: Array1<F>,
}

/// All trainable tensors of the language model.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<F> {
    /// `V x E`
    pub embedding: Array2<F>,
    pub layers: Vec<LayerParams<F>>,
    /// `H x V`
    pub decoder_w: Array2<F>,
    /// `V`
    pub decoder_b: Array1<F>,
}

impl<F: Float> Params<F> {
    pub fn zeros(vocab: usize, embed: usize, hidden: usize, layers: usize) -> Self {
        let layers = (0..layers)
            .map(|l| {
                let input = if l == 0 { embed } else { hidden };
                LayerParams {
                    w_input: Array2::zeros((input, 4 * hidden)),
                    w_hidden: Array2::zeros((hidden, 4 * hidden)),
                    bias: Array1::zeros(4 * hidden),
                }
            })
            .collect();
        Params {
            embedding: Array2::zeros((vocab, embed)),
            layers,
            decoder_w: Array2::zeros((hidden, vocab)),
            decoder_b: Array1::zeros(vocab),
        }
    }

    /// Weights uniform in `[-range, range]`, biases zero.
    pub fn uniform<R: Rng + ?Sized>(
        rng: &mut R,
        vocab: usize,
        embed: usize,
        hidden: usize,
        layers: usize,
        range: f64,
    ) -> Self {
        let mut p = Params::zeros(vocab, embed, hidden, layers);
        let mut fill = |a: &mut [F]| {
            for x in a {
                *x = F::of(rng.random_range(-range..=range));
            }
        };
        fill(p.embedding.as_slice_mut().unwrap());
        for l in &mut p.layers {
            fill(l.w_input.as_slice_mut().unwrap());
            fill(l.w_hidden.as_slice_mut().unwrap());
        }
        fill(p.decoder_w.as_slice_mut().unwrap());
        p
    }

    pub fn zeros_like(&self) -> Self {
        Params::zeros(self.vocab_size(), self.embed_units(), self.hidden_units(), self.layers.len())
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.nrows()
    }

    pub fn embed_units(&self) -> usize {
        self.embedding.ncols()
    }

    pub fn hidden_units(&self) -> usize {
        self.decoder_w.nrows()
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Tensor shapes in serialization order.
    pub fn shapes(&self) -> Vec<Vec<usize>> {
        let mut s = vec![self.embedding.shape().to_vec()];
        for l in &self.layers {
            s.push(l.w_input.shape().to_vec());
            s.push(l.w_hidden.shape().to_vec());
            s.push(l.bias.shape().to_vec());
        }
        s.push(self.decoder_w.shape().to_vec());
        s.push(self.decoder_b.shape().to_vec());
        s
    }

    pub fn tensor_names(&self) -> Vec<String> {
        let mut s = vec!["embedding".to_string()];
        for i in 0..self.layers.len() {
            s.push(format!("layer{i}.w_input"));
            s.push(format!("layer{i}.w_hidden"));
            s.push(format!("layer{i}.bias"));
        }
        s.push("decoder.weight".into());
        s.push("decoder.bias".into());
        s
    }

    /// Flat row-major views of every tensor, in serialization order.
    pub fn slices(&self) -> Vec<&[F]> {
        let mut s = vec![self.embedding.as_slice().unwrap()];
        for l in &self.layers {
            s.push(l.w_input.as_slice().unwrap());
            s.push(l.w_hidden.as_slice().unwrap());
            s.push(l.bias.as_slice().unwrap());
        }
        s.push(self.decoder_w.as_slice().unwrap());
        s.push(self.decoder_b.as_slice().unwrap());
        s
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [F]> {
        let mut s = vec![self.embedding.as_slice_mut().unwrap()];
        for l in &mut self.layers {
            s.push(l.w_input.as_slice_mut().unwrap());
            s.push(l.w_hidden.as_slice_mut().unwrap());
            s.push(l.bias.as_slice_mut().unwrap());
        }
        s.push(self.decoder_w.as_slice_mut().unwrap());
        s.push(self.decoder_b.as_slice_mut().unwrap());
        s
    }

    pub fn num_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn sq_norm(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .map(|x| {
                let v = x.as_f64();
                v * v
            })
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|x| x.is_finite()))
    }

    pub fn scale(&mut self, k: F) {
        for s in self.slices_mut() {
            for x in s {
                *x *= k;
            }
        }
    }

    /// `self -= lr * grad`
    pub fn sgd_step(&mut self, grad: &Params<F>, lr: F) {
        for (p, g) in self.slices_mut().into_iter().zip(grad.slices()) {
            for (x, d) in p.iter_mut().zip(g) {
                *x -= lr * *d;
            }
        }
    }

    pub fn cast<G: Float>(&self) -> Params<G> {
        let c2 = |a: &Array2<F>| a.mapv(|x| G::of(x.as_f64()));
        let c1 = |a: &Array1<F>| a.mapv(|x| G::of(x.as_f64()));
        Params {
            embedding: c2(&self.embedding),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    w_input: c2(&l.w_input),
                    w_hidden: c2(&l.w_hidden),
                    bias: c1(&l.bias),
                })
                .collect(),
            decoder_w: c2(&self.decoder_w),
            decoder_b: c1(&self.decoder_b),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shapes_and_counts() {
        let p: Params<f32> = Params::zeros(10, 4, 6, 2);
        assert_eq!(
            p.shapes(),
            vec![
                vec![10, 4],
                vec![4, 24],
                vec![6, 24],
                vec![24],
                vec![6, 24],
                vec![6, 24],
                vec![24],
                vec![6, 10],
                vec![10]
            ]
        );
        assert_eq!(p.num_params(), 40 + 96 + 144 + 24 + 144 + 144 + 24 + 60 + 10);
        assert_eq!(p.tensor_names().len(), p.shapes().len());
    }

    #[test]
    fn uniform_init_is_bounded_with_zero_biases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p: Params<f64> = Params::uniform(&mut rng, 7, 5, 5, 2, 0.1);
        for s in p.slices() {
            assert!(s.iter().all(|x| x.abs() <= 0.1));
        }
        assert!(p.decoder_b.iter().all(|&x| x == 0.0));
        assert!(p.layers.iter().all(|l| l.bias.iter().all(|&x| x == 0.0)));
        assert!(p.sq_norm() > 0.0);
    }
}
