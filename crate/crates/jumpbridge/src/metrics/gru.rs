//! Small recurrent networks, written out by hand so the scores have no
//! dependency beyond the standard library: a GRU cell
//!
//!   r = sigmoid(W_r x + U_r h + b_r)
//!   z = sigmoid(W_z x + U_z h + b_z)
//!   n = tanh(W_n x + U_n (r . h) + b_n)
//!   h' = (1 - z) . n + z . h
//!
//! with exact backpropagation through time, a logistic read-out head for
//! classification and a per-step linear head for regression, and an Adam
//! optimizer over a flat parameter vector. Everything is deterministic given
//! the RNG stream used for initialization and batching.

use rand::Rng;

/// Dense matrix in row-major order.
#[derive(Debug, Clone)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub v: Vec<f64>,
}

impl Mat {
    fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            v: vec![0.0; rows * cols],
        }
    }

    fn uniform<R: Rng>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Self {
        let v = (0..rows * cols)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        Mat { rows, cols, v }
    }

    fn matvec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        for r in 0..self.rows {
            let row = &self.v[r * self.cols..(r + 1) * self.cols];
            out[r] += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    fn matvec_t_acc(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        for r in 0..self.rows {
            let row = &self.v[r * self.cols..(r + 1) * self.cols];
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * y[r];
            }
        }
    }

    fn outer_acc(&mut self, y: &[f64], x: &[f64]) {
        for r in 0..self.rows {
            let row = &mut self.v[r * self.cols..(r + 1) * self.cols];
            for (o, b) in row.iter_mut().zip(x) {
                *o += y[r] * b;
            }
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One GRU layer. The same struct doubles as its own gradient container.
#[derive(Debug, Clone)]
pub struct GruCell {
    pub input: usize,
    pub hidden: usize,
    wr: Mat,
    ur: Mat,
    br: Vec<f64>,
    wz: Mat,
    uz: Mat,
    bz: Vec<f64>,
    wn: Mat,
    un: Mat,
    bn: Vec<f64>,
}

/// Per-step values saved by the forward pass for exact BPTT.
#[derive(Debug, Clone)]
pub struct GruCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
    rh: Vec<f64>,
}

impl GruCell {
    pub fn new<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        GruCell {
            input,
            hidden,
            wr: Mat::uniform(hidden, input, bound, rng),
            ur: Mat::uniform(hidden, hidden, bound, rng),
            br: (0..hidden).map(|_| rng.gen_range(-bound..bound)).collect(),
            wz: Mat::uniform(hidden, input, bound, rng),
            uz: Mat::uniform(hidden, hidden, bound, rng),
            bz: (0..hidden).map(|_| rng.gen_range(-bound..bound)).collect(),
            wn: Mat::uniform(hidden, input, bound, rng),
            un: Mat::uniform(hidden, hidden, bound, rng),
            bn: (0..hidden).map(|_| rng.gen_range(-bound..bound)).collect(),
        }
    }

    fn zeros_like(&self) -> Self {
        GruCell {
            input: self.input,
            hidden: self.hidden,
            wr: Mat::zeros(self.hidden, self.input),
            ur: Mat::zeros(self.hidden, self.hidden),
            br: vec![0.0; self.hidden],
            wz: Mat::zeros(self.hidden, self.input),
            uz: Mat::zeros(self.hidden, self.hidden),
            bz: vec![0.0; self.hidden],
            wn: Mat::zeros(self.hidden, self.input),
            un: Mat::zeros(self.hidden, self.hidden),
            bn: vec![0.0; self.hidden],
        }
    }

    /// One step; returns the new hidden state and the cache for backward.
    pub fn forward(&self, x: &[f64], h: &[f64]) -> (Vec<f64>, GruCache) {
        let hd = self.hidden;
        let mut r = self.br.clone();
        self.wr.matvec(x, &mut r);
        self.ur.matvec(h, &mut r);
        r.iter_mut().for_each(|v| *v = sigmoid(*v));
        let mut z = self.bz.clone();
        self.wz.matvec(x, &mut z);
        self.uz.matvec(h, &mut z);
        z.iter_mut().for_each(|v| *v = sigmoid(*v));
        let rh: Vec<f64> = (0..hd).map(|k| r[k] * h[k]).collect();
        let mut n = self.bn.clone();
        self.wn.matvec(x, &mut n);
        self.un.matvec(&rh, &mut n);
        n.iter_mut().for_each(|v| *v = v.tanh());
        let h_new: Vec<f64> = (0..hd).map(|k| (1.0 - z[k]) * n[k] + z[k] * h[k]).collect();
        let cache = GruCache {
            x: x.to_vec(),
            h_prev: h.to_vec(),
            r,
            z,
            n,
            rh,
        };
        (h_new, cache)
    }

    /// Exact reverse step: consumes d h_new, accumulates parameter gradients
    /// and the input gradient, returns d h_prev.
    pub fn backward(&self, cache: &GruCache, dh_new: &[f64], grads: &mut GruCell, dx: &mut [f64]) -> Vec<f64> {
        let hd = self.hidden;
        let (r, z, n, h) = (&cache.r, &cache.z, &cache.n, &cache.h_prev);
        let mut dh_prev = vec![0.0; hd];
        let mut dn_pre = vec![0.0; hd];
        let mut dz_pre = vec![0.0; hd];
        for k in 0..hd {
            let dz = dh_new[k] * (h[k] - n[k]);
            let dn = dh_new[k] * (1.0 - z[k]);
            dh_prev[k] = dh_new[k] * z[k];
            dn_pre[k] = dn * (1.0 - n[k] * n[k]);
            dz_pre[k] = dz * z[k] * (1.0 - z[k]);
        }
        let mut drh = vec![0.0; hd];
        self.un.matvec_t_acc(&dn_pre, &mut drh);
        let mut dr_pre = vec![0.0; hd];
        for k in 0..hd {
            let dr = drh[k] * h[k];
            dh_prev[k] += drh[k] * r[k];
            dr_pre[k] = dr * r[k] * (1.0 - r[k]);
        }
        grads.wn.outer_acc(&dn_pre, &cache.x);
        grads.un.outer_acc(&dn_pre, &cache.rh);
        grads.wz.outer_acc(&dz_pre, &cache.x);
        grads.uz.outer_acc(&dz_pre, h);
        grads.wr.outer_acc(&dr_pre, &cache.x);
        grads.ur.outer_acc(&dr_pre, h);
        for k in 0..hd {
            grads.bn[k] += dn_pre[k];
            grads.bz[k] += dz_pre[k];
            grads.br[k] += dr_pre[k];
        }
        self.uz.matvec_t_acc(&dz_pre, &mut dh_prev);
        self.ur.matvec_t_acc(&dr_pre, &mut dh_prev);
        self.wn.matvec_t_acc(&dn_pre, dx);
        self.wz.matvec_t_acc(&dz_pre, dx);
        self.wr.matvec_t_acc(&dr_pre, dx);
        dh_prev
    }

    fn push_flat(&self, out: &mut Vec<f64>) {
        for m in [&self.wr, &self.ur] {
            out.extend_from_slice(&m.v);
        }
        out.extend_from_slice(&self.br);
        for m in [&self.wz, &self.uz] {
            out.extend_from_slice(&m.v);
        }
        out.extend_from_slice(&self.bz);
        for m in [&self.wn, &self.un] {
            out.extend_from_slice(&m.v);
        }
        out.extend_from_slice(&self.bn);
    }

    fn pull_flat(&mut self, flat: &[f64], cur: &mut usize) {
        let mut take = |dst: &mut [f64]| {
            dst.copy_from_slice(&flat[*cur..*cur + dst.len()]);
            *cur += dst.len();
        };
        take(&mut self.wr.v);
        take(&mut self.ur.v);
        take(&mut self.br);
        take(&mut self.wz.v);
        take(&mut self.uz.v);
        take(&mut self.bz);
        take(&mut self.wn.v);
        take(&mut self.un.v);
        take(&mut self.bn);
    }
}

/// Affine read-out layer.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Mat,
    pub b: Vec<f64>,
}

impl Linear {
    fn new<R: Rng>(input: usize, output: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        Linear {
            w: Mat::uniform(output, input, bound, rng),
            b: (0..output).map(|_| rng.gen_range(-bound..bound)).collect(),
        }
    }

    fn zeros_like(&self) -> Self {
        Linear {
            w: Mat::zeros(self.w.rows, self.w.cols),
            b: vec![0.0; self.b.len()],
        }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.b.clone();
        self.w.matvec(x, &mut out);
        out
    }

    fn backward(&self, x: &[f64], dout: &[f64], grads: &mut Linear, dx: &mut [f64]) {
        grads.w.outer_acc(dout, x);
        for (g, d) in grads.b.iter_mut().zip(dout) {
            *g += d;
        }
        self.w.matvec_t_acc(dout, dx);
    }
}

/// Binary cross entropy on a raw logit, numerically stable for either sign.
pub fn bce_with_logits(logit: f64, label: f64) -> f64 {
    logit.max(0.0) - logit * label + (1.0 + (-logit.abs()).exp()).ln()
}

/// Stacked-GRU sequence classifier: read-out from the last hidden state of
/// the top layer.
#[derive(Debug, Clone)]
pub struct GruClassifier {
    pub cells: Vec<GruCell>,
    pub head: Linear,
}

impl GruClassifier {
    pub fn new<R: Rng>(input: usize, hidden: usize, layers: usize, rng: &mut R) -> Self {
        assert!(layers >= 1);
        let cells = (0..layers)
            .map(|l| GruCell::new(if l == 0 { input } else { hidden }, hidden, rng))
            .collect();
        GruClassifier {
            cells,
            head: Linear::new(hidden, 1, rng),
        }
    }

    /// Raw score of one sequence; positive means "real".
    pub fn logit(&self, seq: &[Vec<f64>]) -> f64 {
        let mut hs: Vec<Vec<f64>> = self
            .cells
            .iter()
            .map(|c| vec![0.0; c.hidden])
            .collect();
        for x in seq {
            let mut input = x.clone();
            for (l, cell) in self.cells.iter().enumerate() {
                let (h_new, _) = cell.forward(&input, &hs[l]);
                input = h_new.clone();
                hs[l] = h_new;
            }
        }
        self.head.forward(hs.last().unwrap())[0]
    }

    /// Mean BCE loss over a batch and the gradient in flat layout.
    pub fn loss_and_grad(&self, seqs: &[&[Vec<f64>]], labels: &[f64]) -> (f64, Vec<f64>) {
        assert_eq!(seqs.len(), labels.len());
        let nb = seqs.len() as f64;
        let layers = self.cells.len();
        let mut grads: Vec<GruCell> = self.cells.iter().map(|c| c.zeros_like()).collect();
        let mut head_g = self.head.zeros_like();
        let mut loss = 0.0;
        for (seq, &label) in seqs.iter().zip(labels) {
            let t_len = seq.len();
            // forward, caching everything
            let mut hs: Vec<Vec<f64>> = self.cells.iter().map(|c| vec![0.0; c.hidden]).collect();
            let mut caches: Vec<Vec<GruCache>> = vec![Vec::with_capacity(t_len); layers];
            for x in seq.iter() {
                let mut input = x.clone();
                for (l, cell) in self.cells.iter().enumerate() {
                    let (h_new, cache) = cell.forward(&input, &hs[l]);
                    caches[l].push(cache);
                    input = h_new.clone();
                    hs[l] = h_new;
                }
            }
            let h_last = hs.last().unwrap().clone();
            let logit = self.head.forward(&h_last)[0];
            loss += bce_with_logits(logit, label) / nb;
            let dlogit = (sigmoid(logit) - label) / nb;
            // head backward seeds the top layer at the final step
            let mut dtop = vec![vec![0.0; self.cells[layers - 1].hidden]; t_len];
            self.head
                .backward(&h_last, &[dlogit], &mut head_g, &mut dtop[t_len - 1]);
            // BPTT layer by layer, top to bottom
            let mut dout = dtop;
            for l in (0..layers).rev() {
                let cell = &self.cells[l];
                let in_dim = cell.input;
                let mut dx_steps = vec![vec![0.0; in_dim]; t_len];
                let mut carry = vec![0.0; cell.hidden];
                for t in (0..t_len).rev() {
                    for (c, d) in carry.iter_mut().zip(&dout[t]) {
                        *c += d;
                    }
                    let dh = std::mem::take(&mut carry);
                    carry = cell.backward(&caches[l][t], &dh, &mut grads[l], &mut dx_steps[t]);
                }
                dout = dx_steps; // feeds the layer below (discarded at l = 0)
            }
        }
        let mut flat = Vec::new();
        for g in &grads {
            g.push_flat(&mut flat);
        }
        flat.extend_from_slice(&head_g.w.v);
        flat.extend_from_slice(&head_g.b);
        (loss, flat)
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut flat = Vec::new();
        for c in &self.cells {
            c.push_flat(&mut flat);
        }
        flat.extend_from_slice(&self.head.w.v);
        flat.extend_from_slice(&self.head.b);
        flat
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        let mut cur = 0;
        for c in &mut self.cells {
            c.pull_flat(flat, &mut cur);
        }
        let wlen = self.head.w.v.len();
        self.head.w.v.copy_from_slice(&flat[cur..cur + wlen]);
        cur += wlen;
        let blen = self.head.b.len();
        self.head.b.copy_from_slice(&flat[cur..cur + blen]);
        cur += blen;
        assert_eq!(cur, flat.len());
    }
}

/// Single-layer GRU regressor with a per-step affine head, trained on mean
/// absolute error.
#[derive(Debug, Clone)]
pub struct GruPredictor {
    pub cell: GruCell,
    pub head: Linear,
}

impl GruPredictor {
    pub fn new<R: Rng>(input: usize, hidden: usize, output: usize, rng: &mut R) -> Self {
        GruPredictor {
            cell: GruCell::new(input, hidden, rng),
            head: Linear::new(hidden, output, rng),
        }
    }

    /// Per-step predictions for one input sequence.
    pub fn predict(&self, seq: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut h = vec![0.0; self.cell.hidden];
        seq.iter()
            .map(|x| {
                let (h_new, _) = self.cell.forward(x, &h);
                h = h_new;
                self.head.forward(&h)
            })
            .collect()
    }

    /// Mean absolute error over a batch of (input sequence, target sequence)
    /// pairs, plus the flat gradient.
    pub fn loss_and_grad(&self, batch: &[(&[Vec<f64>], &[Vec<f64>])]) -> (f64, Vec<f64>) {
        let mut grads = self.cell.zeros_like();
        let mut head_g = self.head.zeros_like();
        let mut loss = 0.0;
        let mut count = 0.0;
        for (seq, target) in batch {
            count += (seq.len() * target[0].len()) as f64;
        }
        for (seq, target) in batch {
            let t_len = seq.len();
            let mut h = vec![0.0; self.cell.hidden];
            let mut caches = Vec::with_capacity(t_len);
            let mut hs = Vec::with_capacity(t_len);
            let mut preds = Vec::with_capacity(t_len);
            for x in seq.iter() {
                let (h_new, cache) = self.cell.forward(x, &h);
                caches.push(cache);
                h = h_new.clone();
                hs.push(h_new);
                preds.push(self.head.forward(&h));
            }
            let mut dh_steps = vec![vec![0.0; self.cell.hidden]; t_len];
            for t in 0..t_len {
                let mut dpred = vec![0.0; preds[t].len()];
                for (k, dp) in dpred.iter_mut().enumerate() {
                    let err = preds[t][k] - target[t][k];
                    loss += err.abs() / count;
                    *dp = err.signum() / count;
                }
                self.head.backward(&hs[t], &dpred, &mut head_g, &mut dh_steps[t]);
            }
            let mut carry = vec![0.0; self.cell.hidden];
            let mut dx = vec![0.0; self.cell.input];
            for t in (0..t_len).rev() {
                for (c, d) in carry.iter_mut().zip(&dh_steps[t]) {
                    *c += d;
                }
                let dh = std::mem::take(&mut carry);
                dx.iter_mut().for_each(|v| *v = 0.0);
                carry = self.cell.backward(&caches[t], &dh, &mut grads, &mut dx);
            }
        }
        let mut flat = Vec::new();
        grads.push_flat(&mut flat);
        flat.extend_from_slice(&head_g.w.v);
        flat.extend_from_slice(&head_g.b);
        (loss, flat)
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut flat = Vec::new();
        self.cell.push_flat(&mut flat);
        flat.extend_from_slice(&self.head.w.v);
        flat.extend_from_slice(&self.head.b);
        flat
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        let mut cur = 0;
        self.cell.pull_flat(flat, &mut cur);
        let wlen = self.head.w.v.len();
        self.head.w.v.copy_from_slice(&flat[cur..cur + wlen]);
        cur += wlen;
        let blen = self.head.b.len();
        self.head.b.copy_from_slice(&flat[cur..cur + blen]);
        cur += blen;
        assert_eq!(cur, flat.len());
    }
}

/// Adam over a flat parameter vector (beta1 = 0.9, beta2 = 0.999, eps = 1e-8).
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, n_params: usize) -> Self {
        Adam {
            lr,
            t: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let bc1 = 1.0 - B1.powi(self.t as i32);
        let bc2 = 1.0 - B2.powi(self.t as i32);
        for k in 0..params.len() {
            self.m[k] = B1 * self.m[k] + (1.0 - B1) * grads[k];
            self.v[k] = B2 * self.v[k] + (1.0 - B2) * grads[k] * grads[k];
            let mhat = self.m[k] / bc1;
            let vhat = self.v[k] / bc2;
            params[k] -= self.lr * mhat / (vhat.sqrt() + EPS);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngSpec;

    fn fd_check_classifier(layers: usize) {
        let spec = RngSpec::new(7);
        let mut rng = spec.stream("gru-test", layers as u64, 0);
        let net = GruClassifier::new(3, 4, layers, &mut rng);
        let seqs: Vec<Vec<Vec<f64>>> = (0..3)
            .map(|_| {
                (0..5)
                    .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
                    .collect()
            })
            .collect();
        let refs: Vec<&[Vec<f64>]> = seqs.iter().map(|s| s.as_slice()).collect();
        let labels = [1.0, 0.0, 1.0];
        let (_, grad) = net.loss_and_grad(&refs, &labels);
        let params = net.flat_params();
        assert_eq!(grad.len(), params.len());
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        // probe a deterministic spread of parameters
        for k in (0..params.len()).step_by(params.len() / 25 + 1) {
            let mut net2 = net.clone();
            let mut p = params.clone();
            p[k] += h;
            net2.set_flat_params(&p);
            let (lp, _) = net2.loss_and_grad(&refs, &labels);
            p[k] -= 2.0 * h;
            net2.set_flat_params(&p);
            let (lm, _) = net2.loss_and_grad(&refs, &labels);
            let fd = (lp - lm) / (2.0 * h);
            let rel = (fd - grad[k]).abs() / grad[k].abs().max(1e-8);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-4, "worst relative gradient error {worst}");
    }

    #[test]
    fn classifier_gradients_match_finite_differences() {
        fd_check_classifier(1);
        fd_check_classifier(2);
    }

    #[test]
    fn predictor_gradients_match_finite_differences() {
        let spec = RngSpec::new(9);
        let mut rng = spec.stream("gru-test", 9, 0);
        let net = GruPredictor::new(2, 3, 1, &mut rng);
        let seq: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let target: Vec<Vec<f64>> = (0..6).map(|_| vec![rng.gen_range(-1.0..1.0)]).collect();
        let batch = [(seq.as_slice(), target.as_slice())];
        let (_, grad) = net.loss_and_grad(&batch);
        let params = net.flat_params();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for k in (0..params.len()).step_by(3) {
            let mut net2 = net.clone();
            let mut p = params.clone();
            p[k] += h;
            net2.set_flat_params(&p);
            let (lp, _) = net2.loss_and_grad(&batch);
            p[k] -= 2.0 * h;
            net2.set_flat_params(&p);
            let (lm, _) = net2.loss_and_grad(&batch);
            let fd = (lp - lm) / (2.0 * h);
            let rel = (fd - grad[k]).abs() / grad[k].abs().max(1e-8);
            worst = worst.max(rel);
        }
        // MAE has a kink at zero error; away from it the gradient is exact
        assert!(worst < 1e-3, "worst relative gradient error {worst}");
    }

    #[test]
    fn adam_descends_a_quadratic() {
        let mut params = vec![5.0, -3.0];
        let mut opt = Adam::new(0.05, 2);
        for _ in 0..2000 {
            let grads: Vec<f64> = params.iter().map(|&p| 2.0 * p).collect();
            opt.step(&mut params, &grads);
        }
        assert!(params.iter().all(|p| p.abs() < 1e-3), "{params:?}");
    }

    #[test]
    fn classifier_learns_a_separable_toy_problem() {
        let spec = RngSpec::new(15);
        let mut rng = spec.stream("gru-toy", 0, 0);
        let mut net = GruClassifier::new(1, 3, 2, &mut rng);
        // class 1: upward drift; class 0: downward
        let make = |sign: f64, rng: &mut rand_chacha::ChaCha12Rng| -> Vec<Vec<f64>> {
            let mut x = 0.0;
            (0..8)
                .map(|_| {
                    x += sign * 0.3 + 0.05 * rng.gen_range(-1.0..1.0f64);
                    vec![x]
                })
                .collect()
        };
        let mut seqs = Vec::new();
        let mut labels = Vec::new();
        for k in 0..60 {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            seqs.push(make(sign, &mut rng));
            labels.push(if sign > 0.0 { 1.0 } else { 0.0 });
        }
        let refs: Vec<&[Vec<f64>]> = seqs.iter().map(|s| s.as_slice()).collect();
        let mut params = net.flat_params();
        let mut opt = Adam::new(1e-2, params.len());
        for _ in 0..120 {
            let (_, g) = net.loss_and_grad(&refs, &labels);
            opt.step(&mut params, &g);
            net.set_flat_params(&params);
        }
        let correct = refs
            .iter()
            .zip(&labels)
            .filter(|(s, &l)| (net.logit(s) > 0.0) == (l > 0.5))
            .count();
        assert!(correct >= 55, "only {correct}/60 correct");
    }
}
