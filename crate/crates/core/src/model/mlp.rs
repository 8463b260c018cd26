use rand::Rng;

/// Initial bias of the two hidden layers.
const HIDDEN_BIAS: f64 = 0.01;

/// Three linear layers with ReLU between them, stored row-major inside the
/// flat parameter vector starting at `offset`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Mlp {
    pub offset: usize,
    pub n_in: usize,
    pub n_hidden: usize,
    pub n_out: usize,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct MlpCache {
    x: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
}

impl Mlp {
    pub fn new(offset: usize, n_in: usize, n_hidden: usize, n_out: usize) -> Self {
        Self { offset, n_in, n_hidden, n_out }
    }

    pub fn param_count(n_in: usize, n_hidden: usize, n_out: usize) -> usize {
        n_hidden * n_in + n_hidden + n_hidden * n_hidden + n_hidden + n_out * n_hidden + n_out
    }

    pub fn len(&self) -> usize {
        Self::param_count(self.n_in, self.n_hidden, self.n_out)
    }

    fn offsets(&self) -> [usize; 6] {
        let (i, h, o) = (self.n_in, self.n_hidden, self.n_out);
        let w1 = self.offset;
        let b1 = w1 + h * i;
        let w2 = b1 + h;
        let b2 = w2 + h * h;
        let w3 = b2 + h;
        let b3 = w3 + o * h;
        [w1, b1, w2, b2, w3, b3]
    }

    /// He-uniform hidden layers, Glorot-uniform output layer.
    pub fn init<R: Rng + ?Sized>(&self, params: &mut [f64], rng: &mut R) {
        let [w1, _, w2, _, w3, _] = self.offsets();
        let (i, h, o) = (self.n_in, self.n_hidden, self.n_out);
        let mut fill = |start: usize, len: usize, bound: f64| {
            for p in &mut params[start..start + len] {
                *p = rng.gen_range(-bound..bound);
            }
        };
        fill(w1, h * i, (6.0 / i as f64).sqrt());
        fill(w2, h * h, (6.0 / h as f64).sqrt());
        fill(w3, o * h, (6.0 / (h + o) as f64).sqrt());
        let [_, b1, _, b2, _, b3] = self.offsets();
        params[b1..b1 + h].fill(HIDDEN_BIAS);
        params[b2..b2 + h].fill(HIDDEN_BIAS);
        params[b3..b3 + o].fill(0.0);
    }

    pub fn forward(&self, params: &[f64], x: Vec<f64>) -> (Vec<f64>, MlpCache) {
        debug_assert_eq!(x.len(), self.n_in);
        let [w1, b1, w2, b2, w3, b3] = self.offsets();
        let h1 = affine(params, w1, b1, &x, self.n_hidden, true);
        let h2 = affine(params, w2, b2, &h1, self.n_hidden, true);
        let out = affine(params, w3, b3, &h2, self.n_out, false);
        (out, MlpCache { x, h1, h2 })
    }

    /// Accumulates parameter gradients into `grad` and returns `∂/∂x`.
    pub fn backward(&self, params: &[f64], cache: &MlpCache, dout: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let [w1, b1, w2, b2, w3, b3] = self.offsets();
        let dh2 = affine_backward(params, grad, w3, b3, &cache.h2, dout);
        let dh2: Vec<f64> = dh2.iter().zip(&cache.h2).map(|(d, h)| if *h > 0.0 { *d } else { 0.0 }).collect();
        let dh1 = affine_backward(params, grad, w2, b2, &cache.h1, &dh2);
        let dh1: Vec<f64> = dh1.iter().zip(&cache.h1).map(|(d, h)| if *h > 0.0 { *d } else { 0.0 }).collect();
        affine_backward(params, grad, w1, b1, &cache.x, &dh1)
    }
}

fn affine(params: &[f64], w: usize, b: usize, x: &[f64], n_out: usize, relu: bool) -> Vec<f64> {
    let n_in = x.len();
    (0..n_out)
        .map(|o| {
            let row = &params[w + o * n_in..w + (o + 1) * n_in];
            let v = params[b + o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            if relu && v < 0.0 {
                0.0
            } else {
                v
            }
        })
        .collect()
}

fn affine_backward(params: &[f64], grad: &mut [f64], w: usize, b: usize, x: &[f64], dy: &[f64]) -> Vec<f64> {
    let n_in = x.len();
    let mut dx = vec![0.0; n_in];
    for (o, &d) in dy.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        grad[b + o] += d;
        let row = w + o * n_in;
        for (k, (&xk, dxk)) in x.iter().zip(dx.iter_mut()).enumerate() {
            grad[row + k] += d * xk;
            *dxk += d * params[row + k];
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn backward_matches_finite_differences() {
        let mlp = Mlp::new(3, 5, 7, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut params = vec![0.0; 3 + mlp.len()];
        mlp.init(&mut params, &mut rng);
        for p in &mut params[3..] {
            *p += rng.gen_range(-0.1..0.1);
        }
        let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = |p: &[f64], x: &[f64]| -> f64 {
            let (y, _) = mlp.forward(p, x.to_vec());
            y.iter().zip(&c).map(|(a, b)| a * b).sum()
        };
        let (_, cache) = mlp.forward(&params, x.clone());
        let mut grad = vec![0.0; params.len()];
        let dx = mlp.backward(&params, &cache, &c, &mut grad);
        let h = 1e-6;
        for i in 3..params.len() {
            let mut p = params.clone();
            p[i] += h;
            let up = f(&p, &x);
            p[i] -= 2.0 * h;
            let down = f(&p, &x);
            let fd = (up - down) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-6 * (1.0 + fd.abs()), "param {i}: {fd} vs {}", grad[i]);
        }
        for k in 0..5 {
            let mut xp = x.clone();
            xp[k] += h;
            let up = f(&params, &xp);
            xp[k] -= 2.0 * h;
            let fd = (up - f(&params, &xp)) / (2.0 * h);
            assert!((fd - dx[k]).abs() < 1e-6 * (1.0 + fd.abs()));
        }
        assert!(grad[..3].iter().all(|g| *g == 0.0));
    }
}
