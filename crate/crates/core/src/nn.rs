//! Minimal feed-forward backbone with exact forward/backward passes.
//!
//! Desk-scale by design: dense f64 matrices, explicit tapes, no autodiff
//! graph. Gradient correctness is established by finite differences, and
//! per-layer spectral norms are exposed for the generalization-bound
//! calculations.

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let r = rows.len();
        if r == 0 {
            return Err(Error::Invariant("matrix needs at least one row".into()));
        }
        let c = rows[0].len();
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::DimensionMismatch("ragged matrix rows".into()));
        }
        Ok(Self { rows: r, cols: c, data: rows.into_iter().flatten().collect() })
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    /// y = A x
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| {
                let row = &self.data[i * self.cols..(i + 1) * self.cols];
                row.iter().zip(x).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    /// y = A^T x
    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut y = vec![0.0; self.cols];
        for i in 0..self.rows {
            let xi = x[i];
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            for (j, &a) in row.iter().enumerate() {
                y[j] += a * xi;
            }
        }
        y
    }

    /// Largest singular value via power iteration on A^T A.
    ///
    /// Runs until the estimate moves by less than 1e-12 relative, or 200
    /// iterations, whichever comes first.
    pub fn spectral_norm(&self) -> f64 {
        let mut rng = SplitMix64::new(0x5EED_u64);
        let mut v: Vec<f64> = (0..self.cols).map(|_| rng.uniform() + 0.1).collect();
        normalize(&mut v);
        let mut sigma = 0.0;
        for _ in 0..200 {
            let av = self.matvec(&v);
            let mut w = self.matvec_transpose(&av);
            let next = norm(&av);
            if next == 0.0 {
                return 0.0;
            }
            normalize(&mut w);
            v = w;
            if (next - sigma).abs() <= 1e-12 * next.max(1.0) {
                return next;
            }
            sigma = next;
        }
        sigma
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn normalize(v: &mut [f64]) {
    let n = norm(v);
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
}

/// Element-wise activation. Each variant is 1-Lipschitz.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative at z. The ReLU subgradient at 0 is taken as 0.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn lipschitz(self) -> f64 {
        1.0
    }

    pub fn tag(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
            Activation::Identity => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Activation::Relu),
            1 => Ok(Activation::Tanh),
            2 => Ok(Activation::Identity),
            _ => Err(Error::Checkpoint(format!("unknown activation tag {tag}"))),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Config(format!("unknown activation '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// Feed-forward network mapping inputs to feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
    /// Bumped on every parameter mutation; forward tapes carry the value
    /// they were recorded against.
    version: u64,
}

/// Activation record from a forward pass; consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct Tape {
    version: u64,
    /// Input to each layer: a_0 = x, a_l = sigma(z_l).
    inputs: Vec<Vec<f64>>,
    /// Pre-activations z_l = W_l a_{l-1} + b_l.
    pre_activations: Vec<Vec<f64>>,
}

/// Parameter gradients plus the gradient flowing back into the input.
#[derive(Debug, Clone)]
pub struct NetGradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
    pub input: Vec<f64>,
}

impl Mlp {
    /// Glorot-uniform initialization. `dims` chains input through hidden
    /// widths to the feature dimension; hidden layers use `hidden_activation`
    /// and the final layer is affine.
    pub fn init(dims: &[usize], hidden_activation: Activation, rng: &mut SplitMix64) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Invariant("network needs at least one layer".into()));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Invariant("layer widths must be positive".into()));
        }
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut weight = Matrix::zeros(fan_out, fan_in);
            for v in &mut weight.data {
                *v = rng.uniform_in(-bound, bound);
            }
            let last = layers.len() == dims.len() - 2;
            layers.push(Layer {
                weight,
                bias: vec![0.0; fan_out],
                activation: if last { Activation::Identity } else { hidden_activation },
            });
        }
        Ok(Self { layers, version: 0 })
    }

    /// Build from explicit layers (tests, checkpoint loading).
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Invariant("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[1].weight.cols != pair[0].weight.rows {
                return Err(Error::DimensionMismatch(format!(
                    "layer output dim {} feeds layer input dim {}",
                    pair[0].weight.rows, pair[1].weight.cols
                )));
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.weight.rows {
                return Err(Error::DimensionMismatch(format!(
                    "layer {i} bias length {} vs {} rows",
                    l.bias.len(),
                    l.weight.rows
                )));
            }
        }
        Ok(Self { layers, version: 0 })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols
    }

    pub fn feature_dim(&self) -> usize {
        self.layers.last().unwrap().weight.rows
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Forward pass; the tape suffices for an exact backward pass.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Tape)> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "input dim {} vs network input dim {}",
                x.len(),
                self.input_dim()
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pres = Vec::with_capacity(self.layers.len());
        let mut a = x.to_vec();
        for layer in &self.layers {
            inputs.push(a.clone());
            let mut z = layer.weight.matvec(&a);
            for (zi, bi) in z.iter_mut().zip(&layer.bias) {
                *zi += bi;
            }
            a = z.iter().map(|&v| layer.activation.apply(v)).collect();
            pres.push(z);
        }
        Ok((a, Tape { version: self.version, inputs, pre_activations: pres }))
    }

    /// Exact backward pass for the tape's forward call.
    pub fn backward(&self, tape: &Tape, grad_feature: &[f64]) -> Result<NetGradients> {
        if tape.version != self.version {
            return Err(Error::StaleTape);
        }
        if grad_feature.len() != self.feature_dim() {
            return Err(Error::DimensionMismatch(format!(
                "grad dim {} vs feature dim {}",
                grad_feature.len(),
                self.feature_dim()
            )));
        }
        let n = self.layers.len();
        let mut weights = Vec::with_capacity(n);
        let mut biases = Vec::with_capacity(n);
        let mut delta = grad_feature.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let z = &tape.pre_activations[l];
            for (d, &zi) in delta.iter_mut().zip(z) {
                *d *= layer.activation.derivative(zi);
            }
            let a_in = &tape.inputs[l];
            let mut gw = Matrix::zeros(layer.weight.rows, layer.weight.cols);
            for i in 0..layer.weight.rows {
                for j in 0..layer.weight.cols {
                    gw.set(i, j, delta[i] * a_in[j]);
                }
            }
            weights.push(gw);
            biases.push(delta.clone());
            delta = layer.weight.matvec_transpose(&delta);
        }
        weights.reverse();
        biases.reverse();
        Ok(NetGradients { weights, biases, input: delta })
    }

    /// Per-layer spectral norms ||W_l||_2.
    pub fn spectral_norms(&self) -> Vec<f64> {
        self.layers.iter().map(|l| l.weight.spectral_norm()).collect()
    }

    /// Per-layer activation Lipschitz constants.
    pub fn activation_lipschitz(&self) -> Vec<f64> {
        self.layers.iter().map(|l| l.activation.lipschitz()).collect()
    }

    pub(crate) fn layers_mut(&mut self) -> &mut Vec<Layer> {
        self.version += 1;
        &mut self.layers
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_net(rng: &mut SplitMix64, dims: &[usize], act: Activation) -> Mlp {
        Mlp::init(dims, act, rng).unwrap()
    }

    #[test]
    fn zero_network_maps_to_zero() {
        let net = Mlp::from_layers(vec![Layer {
            weight: Matrix::zeros(3, 2),
            bias: vec![0.0; 3],
            activation: Activation::Identity,
        }])
        .unwrap();
        let (f, _) = net.forward(&[1.5, -2.0]).unwrap();
        assert_eq!(f, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn single_affine_layer() {
        let w = Matrix::from_rows(vec![vec![1.0, 2.0], vec![-1.0, 0.5]]).unwrap();
        let net = Mlp::from_layers(vec![Layer {
            weight: w,
            bias: vec![0.25, -0.5],
            activation: Activation::Identity,
        }])
        .unwrap();
        let (f, _) = net.forward(&[3.0, -1.0]).unwrap();
        assert_eq!(f, vec![3.0 - 2.0 + 0.25, -3.0 - 0.5 - 0.5]);
    }

    #[test]
    fn forward_is_deterministic() {
        let mut r1 = SplitMix64::new(77);
        let mut r2 = SplitMix64::new(77);
        let n1 = small_net(&mut r1, &[4, 8, 3], Activation::Relu);
        let n2 = small_net(&mut r2, &[4, 8, 3], Activation::Relu);
        let x = [0.1, -0.2, 0.3, 0.4];
        assert_eq!(n1.forward(&x).unwrap().0, n2.forward(&x).unwrap().0);
    }

    #[test]
    fn backward_zero_grad() {
        let mut rng = SplitMix64::new(78);
        let net = small_net(&mut rng, &[3, 5, 2], Activation::Tanh);
        let (_, tape) = net.forward(&[0.5, -1.0, 0.25]).unwrap();
        let g = net.backward(&tape, &[0.0, 0.0]).unwrap();
        assert!(g.weights.iter().all(|w| w.data.iter().all(|&v| v == 0.0)));
        assert!(g.input.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_layer_gradient_is_outer_product() {
        let w = Matrix::from_rows(vec![vec![0.3, -0.7], vec![1.1, 0.2]]).unwrap();
        let net = Mlp::from_layers(vec![Layer {
            weight: w,
            bias: vec![0.0, 0.0],
            activation: Activation::Identity,
        }])
        .unwrap();
        let x = [2.0, -3.0];
        let g_up = [1.5, -0.5];
        let (_, tape) = net.forward(&x).unwrap();
        let g = net.backward(&tape, &g_up).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(g.weights[0].get(i, j), g_up[i] * x[j]);
            }
        }
        assert_eq!(g.biases[0], g_up.to_vec());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = SplitMix64::new(79);
        let h = 1e-5;
        for &(dims, act) in &[
            (&[2usize, 6, 3][..], Activation::Relu),
            (&[3, 8, 8, 4][..], Activation::Tanh),
            (&[5, 32, 7][..], Activation::Relu),
        ] {
            for _ in 0..12 {
                let net = small_net(&mut rng, dims, act);
                let x: Vec<f64> = (0..dims[0]).map(|_| rng.normal()).collect();
                let g_up: Vec<f64> = (0..*dims.last().unwrap()).map(|_| rng.normal()).collect();
                let (_, tape) = net.forward(&x).unwrap();
                let g = net.backward(&tape, &g_up).unwrap();
                let eval = |n: &Mlp, xv: &[f64]| -> f64 {
                    n.forward(xv)
                        .unwrap()
                        .0
                        .iter()
                        .zip(&g_up)
                        .map(|(a, b)| a * b)
                        .sum()
                };
                let check = |analytic: f64, fd: f64| {
                    let denom = analytic.abs().max(fd.abs());
                    if denom > 1e-6 {
                        assert!((analytic - fd).abs() / denom < 1e-5, "{analytic} vs {fd}");
                    } else {
                        assert!((analytic - fd).abs() < 1e-8);
                    }
                };
                // Every weight and bias.
                for (l, layer) in net.layers().iter().enumerate() {
                    for idx in 0..layer.weight.data.len() {
                        let mut np = net.clone();
                        let mut nm = net.clone();
                        np.layers[l].weight.data[idx] += h;
                        nm.layers[l].weight.data[idx] -= h;
                        check(g.weights[l].data[idx], (eval(&np, &x) - eval(&nm, &x)) / (2.0 * h));
                    }
                    for bidx in 0..layer.bias.len() {
                        let mut np = net.clone();
                        let mut nm = net.clone();
                        np.layers[l].bias[bidx] += h;
                        nm.layers[l].bias[bidx] -= h;
                        check(g.biases[l][bidx], (eval(&np, &x) - eval(&nm, &x)) / (2.0 * h));
                    }
                }
                // Input gradient.
                for j in 0..x.len() {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[j] += h;
                    xm[j] -= h;
                    check(g.input[j], (eval(&net, &xp) - eval(&net, &xm)) / (2.0 * h));
                }
            }
        }
    }

    #[test]
    fn stale_tape_rejected() {
        let mut rng = SplitMix64::new(80);
        let mut net = small_net(&mut rng, &[2, 4, 2], Activation::Relu);
        let (_, tape) = net.forward(&[0.5, 0.5]).unwrap();
        net.layers_mut()[0].bias[0] += 0.1;
        assert!(matches!(net.backward(&tape, &[1.0, 0.0]), Err(Error::StaleTape)));
    }

    #[test]
    fn spectral_norm_known_matrices() {
        let eye = Matrix::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!((eye.spectral_norm() - 1.0).abs() < 1e-9);
        let diag = Matrix::from_rows(vec![vec![3.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!((diag.spectral_norm() - 3.0).abs() < 1e-9);
        let zero = Matrix::zeros(3, 3);
        assert_eq!(zero.spectral_norm(), 0.0);
    }

    // Cyclic Jacobi eigensolver on the symmetric matrix A^T A; independent
    // oracle for the power-iteration spectral norm.
    fn jacobi_largest_singular(a: &Matrix) -> f64 {
        let n = a.cols;
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for r in 0..a.rows {
                    acc += a.get(r, i) * a.get(r, j);
                }
                m[i][j] = acc;
            }
        }
        for _ in 0..100 {
            let mut off = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        off += m[i][j] * m[i][j];
                    }
                }
            }
            if off < 1e-24 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    if m[p][q].abs() < 1e-18 {
                        continue;
                    }
                    let theta = 0.5 * (2.0 * m[p][q]).atan2(m[q][q] - m[p][p]);
                    let (s, c) = theta.sin_cos();
                    for i in 0..n {
                        let (mip, miq) = (m[i][p], m[i][q]);
                        m[i][p] = c * mip - s * miq;
                        m[i][q] = s * mip + c * miq;
                    }
                    for i in 0..n {
                        let (mpi, mqi) = (m[p][i], m[q][i]);
                        m[p][i] = c * mpi - s * mqi;
                        m[q][i] = s * mpi + c * mqi;
                    }
                }
            }
        }
        (0..n).map(|i| m[i][i]).fold(0.0f64, f64::max).max(0.0).sqrt()
    }

    #[test]
    fn spectral_norm_matches_jacobi_oracle() {
        let mut rng = SplitMix64::new(81);
        for _ in 0..50 {
            let (r, c) = (2 + rng.below(7), 2 + rng.below(7));
            let mut a = Matrix::zeros(r, c);
            for v in &mut a.data {
                *v = rng.normal();
            }
            let power = a.spectral_norm();
            let jacobi = jacobi_largest_singular(&a);
            assert!(
                (power - jacobi).abs() <= 1e-6 * jacobi.max(1.0),
                "{power} vs {jacobi}"
            );
        }
    }

    #[test]
    fn forward_lipschitz_contraction() {
        // ||f(x1) - f(x2)|| <= (prod L_sigma)(prod ||W||) ||x1 - x2||
        let mut rng = SplitMix64::new(82);
        let net = small_net(&mut rng, &[4, 16, 8, 3], Activation::Relu);
        let lip: f64 = net.spectral_norms().iter().product::<f64>()
            * net.activation_lipschitz().iter().product::<f64>();
        for _ in 0..2000 {
            let x1: Vec<f64> = (0..4).map(|_| rng.normal() * 3.0).collect();
            let x2: Vec<f64> = (0..4).map(|_| rng.normal() * 3.0).collect();
            let f1 = net.forward(&x1).unwrap().0;
            let f2 = net.forward(&x2).unwrap().0;
            let df: f64 = f1.iter().zip(&f2).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let dx: f64 = x1.iter().zip(&x2).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            assert!(df <= lip * dx * (1.0 + 1e-9) + 1e-12, "{df} > {lip} * {dx}");
        }
    }

    #[test]
    fn dimension_errors() {
        let mut rng = SplitMix64::new(83);
        let net = small_net(&mut rng, &[3, 4, 2], Activation::Relu);
        assert!(net.forward(&[1.0, 2.0]).is_err());
        let (_, tape) = net.forward(&[1.0, 2.0, 3.0]).unwrap();
        assert!(net.backward(&tape, &[1.0]).is_err());
    }
}
