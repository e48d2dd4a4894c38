use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::util::rng_for;

pub const DEFAULT_HIDDEN: usize = 128;
pub const N_LAYERS: usize = 2;

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Offsets of each parameter block inside the flat parameter vector.
/// Weight blocks are stored input-major: row `k` holds the `4H` (or `|L|`)
/// outputs fed by input `k`. Gate order inside a row is input, forget,
/// cell, output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layout {
    wx: [usize; N_LAYERS],
    wh: [usize; N_LAYERS],
    b: [usize; N_LAYERS],
    v: usize,
    bv: usize,
    total: usize,
}

impl Layout {
    fn new(n_tokens: usize, hidden: usize) -> Self {
        let g = 4 * hidden;
        let in0 = 2 * (n_tokens + 1);
        let mut off = 0;
        let mut take = |n: usize| {
            let o = off;
            off += n;
            o
        };
        let wx0 = take(in0 * g);
        let wh0 = take(hidden * g);
        let b0 = take(g);
        let wx1 = take(hidden * g);
        let wh1 = take(hidden * g);
        let b1 = take(g);
        let v = take(hidden * n_tokens);
        let bv = take(n_tokens);
        Layout { wx: [wx0, wx1], wh: [wh0, wh1], b: [b0, b1], v, bv, total: off }
    }
}

/// Two stacked LSTM layers reading one-hot (parent, sibling) inputs and
/// emitting one logit per library token.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    n_tokens: usize,
    hidden: usize,
    layout: Layout,
    params: Vec<f64>,
}

/// Recurrent state of both layers.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: [Vec<f64>; N_LAYERS],
    pub c: [Vec<f64>; N_LAYERS],
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: [vec![0.0; hidden], vec![0.0; hidden]],
            c: [vec![0.0; hidden], vec![0.0; hidden]],
        }
    }
}

/// Activations of one layer at one step, kept for backpropagation.
#[derive(Debug, Clone, Default)]
pub(crate) struct LayerCache {
    /// Post-activation gates `[i, f, g, o]`, each of width H.
    gates: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct StepCache {
    parent: usize,
    sibling: usize,
    layers: [LayerCache; N_LAYERS],
}

impl PolicyNet {
    /// Standard initialisation: uniform input and output weights in
    /// `±1/sqrt(H)`, orthogonal recurrent blocks, zero biases except a
    /// forget-gate bias of one.
    pub fn new(n_tokens: usize, hidden: usize, seed: u64) -> Self {
        let mut net = Self::zeros(n_tokens, hidden);
        let mut rng = rng_for(seed, &[0x1157]);
        let bound = 1.0 / (hidden as f64).sqrt();
        let g = 4 * hidden;
        let l = net.layout;
        for layer in 0..N_LAYERS {
            let in_dim = net.input_dim(layer);
            for w in &mut net.params[l.wx[layer]..l.wx[layer] + in_dim * g] {
                *w = rng.gen_range(-bound..bound);
            }
            for gate in 0..4 {
                let q = orthogonal(hidden, &mut rng);
                for k in 0..hidden {
                    for j in 0..hidden {
                        net.params[l.wh[layer] + k * g + gate * hidden + j] = q[k * hidden + j];
                    }
                }
            }
            for j in 0..hidden {
                net.params[l.b[layer] + hidden + j] = 1.0;
            }
        }
        for w in &mut net.params[l.v..l.v + hidden * n_tokens] {
            *w = rng.gen_range(-bound..bound);
        }
        net
    }

    pub fn zeros(n_tokens: usize, hidden: usize) -> Self {
        let layout = Layout::new(n_tokens, hidden);
        Self { n_tokens, hidden, layout, params: vec![0.0; layout.total] }
    }

    pub fn n_tokens(&self) -> usize {
        self.n_tokens
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Index used for the blank parent/sibling placeholder.
    pub fn blank(&self) -> usize {
        self.n_tokens
    }

    pub fn input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            2 * (self.n_tokens + 1)
        } else {
            self.hidden
        }
    }

    pub fn initial_state(&self) -> LstmState {
        LstmState::zeros(self.hidden)
    }

    /// One-hot `(parent, sibling)` input; `None` maps to the blank index.
    pub fn encode_state(&self, parent: Option<usize>, sibling: Option<usize>) -> Result<Vec<f64>> {
        let (p, s) = self.input_indices(parent, sibling)?;
        let mut x = vec![0.0; self.input_dim(0)];
        x[p] = 1.0;
        x[self.n_tokens + 1 + s] = 1.0;
        Ok(x)
    }

    pub(crate) fn input_indices(
        &self,
        parent: Option<usize>,
        sibling: Option<usize>,
    ) -> Result<(usize, usize)> {
        let check = |t: Option<usize>| match t {
            None => Ok(self.blank()),
            Some(i) if i < self.n_tokens => Ok(i),
            Some(i) => Err(Error::UnknownToken(format!("#{i}"))),
        };
        Ok((check(parent)?, check(sibling)?))
    }

    /// Advances `state` by one step and writes raw logits.
    pub fn step(
        &self,
        parent: Option<usize>,
        sibling: Option<usize>,
        state: &mut LstmState,
        logits: &mut [f64],
    ) -> Result<()> {
        let (p, s) = self.input_indices(parent, sibling)?;
        self.step_indices(p, s, state, logits, None);
        Ok(())
    }

    pub(crate) fn step_indices(
        &self,
        p: usize,
        s: usize,
        state: &mut LstmState,
        logits: &mut [f64],
        cache: Option<&mut StepCache>,
    ) {
        let h = self.hidden;
        let g = 4 * h;
        let l = &self.layout;
        let w = &self.params;
        let mut z = vec![0.0; g];

        // Layer 0: the one-hot input selects two rows of the input block.
        z.copy_from_slice(&w[l.b[0]..l.b[0] + g]);
        let sib_row = self.n_tokens + 1 + s;
        for row in [p, sib_row] {
            axpy(1.0, &w[l.wx[0] + row * g..l.wx[0] + (row + 1) * g], &mut z);
        }
        for (k, &hk) in state.h[0].iter().enumerate() {
            if hk != 0.0 {
                axpy(hk, &w[l.wh[0] + k * g..l.wh[0] + (k + 1) * g], &mut z);
            }
        }
        let mut cache = cache;
        let lc0 = lstm_cell(&z, h, &mut state.c[0], &mut state.h[0], cache.is_some());

        // Layer 1 reads layer 0's new hidden state.
        z.copy_from_slice(&w[l.b[1]..l.b[1] + g]);
        for (k, &xk) in state.h[0].iter().enumerate() {
            if xk != 0.0 {
                axpy(xk, &w[l.wx[1] + k * g..l.wx[1] + (k + 1) * g], &mut z);
            }
        }
        for (k, &hk) in state.h[1].iter().enumerate() {
            if hk != 0.0 {
                axpy(hk, &w[l.wh[1] + k * g..l.wh[1] + (k + 1) * g], &mut z);
            }
        }
        let lc1 = lstm_cell(&z, h, &mut state.c[1], &mut state.h[1], cache.is_some());

        let n = self.n_tokens;
        logits.copy_from_slice(&w[l.bv..l.bv + n]);
        for (k, &hk) in state.h[1].iter().enumerate() {
            if hk != 0.0 {
                axpy(hk, &w[l.v + k * n..l.v + (k + 1) * n], logits);
            }
        }

        if let Some(c) = cache.as_deref_mut() {
            c.parent = p;
            c.sibling = s;
            c.layers = [lc0.unwrap(), lc1.unwrap()];
        }
    }

    /// Backpropagation through time. `dlogits[t]` is the gradient of the
    /// objective with respect to the raw logits at step `t`; parameter
    /// gradients are added into `grad`.
    pub(crate) fn backward(&self, caches: &[StepCache], dlogits: &[Vec<f64>], grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        let h = self.hidden;
        let g = 4 * h;
        let n = self.n_tokens;
        let l = &self.layout;
        let w = &self.params;
        let zeros = vec![0.0; h];

        let mut dh_next = [vec![0.0; h], vec![0.0; h]];
        let mut dc_next = [vec![0.0; h], vec![0.0; h]];
        let mut dz = vec![0.0; g];
        let mut dh = vec![0.0; h];

        for t in (0..caches.len()).rev() {
            let cache = &caches[t];
            let prev = if t > 0 { Some(&caches[t - 1]) } else { None };
            let dl = &dlogits[t];

            // Output projection.
            let h1 = &cache.layers[1].h;
            for (gb, &d) in grad[l.bv..l.bv + n].iter_mut().zip(dl) {
                *gb += d;
            }
            for k in 0..h {
                let row = l.v + k * n..l.v + (k + 1) * n;
                dh[k] = dh_next[1][k] + dot(&w[row.clone()], dl);
                axpy(h1[k], dl, &mut grad[row]);
            }

            for layer in (0..N_LAYERS).rev() {
                let lc = &cache.layers[layer];
                let c_prev = prev.map_or(&zeros, |p| &p.layers[layer].c);
                let h_prev = prev.map_or(&zeros, |p| &p.layers[layer].h);
                lstm_cell_backward(lc, c_prev, &dh, &mut dc_next[layer], &mut dz);

                axpy(1.0, &dz, &mut grad[l.b[layer]..l.b[layer] + g]);
                for k in 0..h {
                    if h_prev[k] != 0.0 {
                        axpy(h_prev[k], &dz, &mut grad[l.wh[layer] + k * g..l.wh[layer] + (k + 1) * g]);
                    }
                    dh_next[layer][k] = dot(&w[l.wh[layer] + k * g..l.wh[layer] + (k + 1) * g], &dz);
                }
                if layer == 1 {
                    let x = &cache.layers[0].h;
                    for k in 0..h {
                        let row = l.wx[1] + k * g..l.wx[1] + (k + 1) * g;
                        if x[k] != 0.0 {
                            axpy(x[k], &dz, &mut grad[row.clone()]);
                        }
                        dh[k] = dh_next[0][k] + dot(&w[row], &dz);
                    }
                } else {
                    for row in [cache.parent, n + 1 + cache.sibling] {
                        axpy(1.0, &dz, &mut grad[l.wx[0] + row * g..l.wx[0] + (row + 1) * g]);
                    }
                }
            }
        }
    }

    /// Text checkpoint: parameters as raw f64 bit patterns plus the library
    /// fingerprint they were trained against.
    pub fn to_checkpoint(&self, library_fingerprint: &str) -> String {
        let mut out = String::with_capacity(self.params.len() * 17 + 128);
        out.push_str("symnode-policy v1\n");
        out.push_str(&format!("library {library_fingerprint}\n"));
        out.push_str(&format!("tokens {}\nhidden {}\nparams {}\n", self.n_tokens, self.hidden, self.params.len()));
        for chunk in self.params.chunks(8) {
            let line: Vec<String> = chunk.iter().map(|v| format!("{:016x}", v.to_bits())).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_checkpoint(text: &str, library_fingerprint: &str) -> Result<Self> {
        let bad = |m: &str| Error::CheckpointMismatch(m.to_string());
        let mut lines = text.lines();
        if lines.next() != Some("symnode-policy v1") {
            return Err(bad("unrecognised checkpoint header"));
        }
        let mut field = |name: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| bad("truncated checkpoint"))?;
            line.strip_prefix(name)
                .and_then(|r| r.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| bad(&format!("expected `{name}` line")))
        };
        let fp = field("library")?;
        if fp != library_fingerprint {
            return Err(bad(&format!("library fingerprint {fp} != {library_fingerprint}")));
        }
        let n_tokens: usize = field("tokens")?.parse().map_err(|_| bad("bad token count"))?;
        let hidden: usize = field("hidden")?.parse().map_err(|_| bad("bad hidden size"))?;
        let count: usize = field("params")?.parse().map_err(|_| bad("bad parameter count"))?;
        let mut net = Self::zeros(n_tokens, hidden);
        if count != net.params.len() {
            return Err(bad("parameter count does not match architecture"));
        }
        let mut i = 0;
        for word in lines.flat_map(str::split_whitespace) {
            let bits = u64::from_str_radix(word, 16).map_err(|_| bad("bad parameter word"))?;
            *net.params.get_mut(i).ok_or_else(|| bad("too many parameters"))? = f64::from_bits(bits);
            i += 1;
        }
        if i != count {
            return Err(bad("too few parameters"));
        }
        Ok(net)
    }
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Applies gate nonlinearities to pre-activations `z` and updates `c`, `h`.
fn lstm_cell(z: &[f64], h: usize, c: &mut [f64], hout: &mut [f64], keep: bool) -> Option<LayerCache> {
    let mut gates = vec![0.0; 4 * h];
    for j in 0..h {
        gates[j] = sigmoid(z[j]);
        gates[h + j] = sigmoid(z[h + j]);
        gates[2 * h + j] = z[2 * h + j].tanh();
        gates[3 * h + j] = sigmoid(z[3 * h + j]);
    }
    let mut tanh_c = vec![0.0; h];
    for j in 0..h {
        c[j] = gates[h + j] * c[j] + gates[j] * gates[2 * h + j];
        tanh_c[j] = c[j].tanh();
        hout[j] = gates[3 * h + j] * tanh_c[j];
    }
    keep.then(|| LayerCache { gates, c: c.to_vec(), tanh_c, h: hout.to_vec() })
}

/// Given `dh` (total gradient on this step's h) and `dc` (gradient flowing
/// into this step's c from the future), writes gate pre-activation
/// gradients into `dz` and replaces `dc` with the gradient on `c_prev`.
fn lstm_cell_backward(lc: &LayerCache, c_prev: &[f64], dh: &[f64], dc: &mut [f64], dz: &mut [f64]) {
    let h = lc.c.len();
    let gt = &lc.gates;
    for j in 0..h {
        let (i, f, g, o) = (gt[j], gt[h + j], gt[2 * h + j], gt[3 * h + j]);
        let tc = lc.tanh_c[j];
        let d_o = dh[j] * tc;
        let d_c = dh[j] * o * (1.0 - tc * tc) + dc[j];
        dz[j] = d_c * g * i * (1.0 - i);
        dz[h + j] = d_c * c_prev[j] * f * (1.0 - f);
        dz[2 * h + j] = d_c * i * (1.0 - g * g);
        dz[3 * h + j] = d_o * o * (1.0 - o);
        dc[j] = d_c * f;
    }
}

/// Random orthogonal matrix (row-major) via Gram-Schmidt on a Gaussian draw.
fn orthogonal<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut m: Vec<f64> = (0..n * n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    for i in 0..n {
        for j in 0..i {
            let d = dot(&m[i * n..(i + 1) * n], &m[j * n..(j + 1) * n]);
            for k in 0..n {
                m[i * n + k] -= d * m[j * n + k];
            }
        }
        let norm = dot(&m[i * n..(i + 1) * n], &m[i * n..(i + 1) * n]).sqrt();
        for k in 0..n {
            m[i * n + k] /= norm;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_count_depends_only_on_library_size() {
        let h = 128;
        let n = 51;
        let g = 4 * h;
        let want = 2 * (n + 1) * g + h * g + g + 2 * h * g + g + h * n + n;
        assert_eq!(PolicyNet::zeros(n, h).n_params(), want);
        assert_eq!(PolicyNet::new(n, h, 1).n_params(), want);
        assert_eq!(PolicyNet::new(n, h, 1), PolicyNet::new(n, h, 1));
        assert_ne!(PolicyNet::new(n, h, 1), PolicyNet::new(n, h, 2));
    }

    #[test]
    fn recurrent_blocks_are_orthogonal() {
        let h = 16;
        let net = PolicyNet::new(5, h, 3);
        let l = net.layout;
        let g = 4 * h;
        for gate in 0..4 {
            for a in 0..h {
                for b in 0..h {
                    let d: f64 = (0..h)
                        .map(|j| {
                            net.params[l.wh[0] + a * g + gate * h + j]
                                * net.params[l.wh[0] + b * g + gate * h + j]
                        })
                        .sum();
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!((d - want).abs() < 1e-10);
                }
            }
        }
        assert_eq!(net.params[l.b[0] + h], 1.0);
        assert_eq!(net.params[l.b[0]], 0.0);
    }

    #[test]
    fn encode_state_examples() {
        let net = PolicyNet::zeros(5, 4);
        let hot = |x: Vec<f64>| x.iter().enumerate().filter(|(_, v)| **v == 1.0).map(|(i, _)| i).collect::<Vec<_>>();
        // (blank, blank) at the root.
        assert_eq!(hot(net.encode_state(None, None).unwrap()), vec![5, 11]);
        // parent token 0, sibling blank.
        assert_eq!(hot(net.encode_state(Some(0), None).unwrap()), vec![0, 11]);
        // parent token 3, sibling token 2.
        assert_eq!(hot(net.encode_state(Some(3), Some(2)).unwrap()), vec![3, 8]);
        assert!(net.encode_state(Some(5), None).is_err());
    }

    #[test]
    fn zero_net_gives_uniform_logits() {
        let net = PolicyNet::zeros(7, 8);
        let mut state = net.initial_state();
        let mut logits = vec![1.0; 7];
        net.step(Some(2), None, &mut state, &mut logits).unwrap();
        assert!(logits.iter().all(|&v| v == logits[0]));
    }

    #[test]
    fn step_is_deterministic() {
        let net = PolicyNet::new(7, 8, 11);
        let run = || {
            let mut s = net.initial_state();
            let mut l = vec![0.0; 7];
            net.step(None, None, &mut s, &mut l).unwrap();
            net.step(Some(1), None, &mut s, &mut l).unwrap();
            (s, l)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let net = PolicyNet::new(9, 6, 5);
        let text = net.to_checkpoint("abc");
        assert_eq!(PolicyNet::from_checkpoint(&text, "abc").unwrap(), net);
        assert!(matches!(
            PolicyNet::from_checkpoint(&text, "abd"),
            Err(Error::CheckpointMismatch(_))
        ));
        let truncated: String = text.lines().take(6).collect::<Vec<_>>().join("\n");
        assert!(PolicyNet::from_checkpoint(&truncated, "abc").is_err());
    }
}
