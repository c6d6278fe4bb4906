//! Straight transcription of the SDP forward pass: dense loops, no sparsity,
//! encoder centers rebuilt from the ranges. Shares nothing with the library
//! except plain parameter values.

#![allow(clippy::needless_range_loop)]

pub struct NaiveLayer {
    /// `[out][in]`
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub d_c: f64,
    pub d_v: f64,
    pub v_th: f64,
}

pub struct NaiveNet {
    pub ranges: Vec<(f64, f64)>,
    pub p: usize,
    pub eps: f64,
    pub t: usize,
    pub layers: Vec<NaiveLayer>,
    /// `[action][hidden]`
    pub w_d: Vec<Vec<f64>>,
    pub b_d: Vec<f64>,
}

#[derive(Debug)]
pub struct NaiveRun {
    /// `[t][neuron]`
    pub input: Vec<Vec<f64>>,
    /// `[layer][t][neuron]`
    pub c: Vec<Vec<Vec<f64>>>,
    pub v: Vec<Vec<Vec<f64>>>,
    pub o: Vec<Vec<Vec<f64>>>,
    pub rates: Vec<f64>,
    pub logits: Vec<f64>,
    pub action: Vec<f64>,
}

impl NaiveNet {
    pub fn from_network(net: &spikefolio::snn::SdpNetwork, ranges: Vec<(f64, f64)>) -> Self {
        let layers = net
            .layers
            .iter()
            .map(|l| NaiveLayer {
                w: (0..l.weights.rows()).map(|i| l.weights.row(i).to_vec()).collect(),
                b: l.bias.clone(),
                d_c: l.d_c,
                d_v: l.d_v,
                v_th: l.v_th,
            })
            .collect();
        NaiveNet {
            ranges,
            p: net.coder.neurons_per_dim,
            eps: net.coder.eps,
            t: net.timesteps,
            layers,
            w_d: (0..net.decoder.weights.rows()).map(|i| net.decoder.weights.row(i).to_vec()).collect(),
            b_d: net.decoder.bias.clone(),
        }
    }

    pub fn intensities(&self, state: &[f64]) -> Vec<f64> {
        let mut a = Vec::new();
        for (d, &(lo, hi)) in self.ranges.iter().enumerate() {
            for k in 0..self.p {
                let (mu, sigma) = if self.p == 1 {
                    ((lo + hi) / 2.0, hi - lo)
                } else {
                    let gap = (hi - lo) / (self.p as f64 - 1.0);
                    (lo + gap * k as f64, gap)
                };
                let z = (state[d] - mu) / sigma;
                a.push((-(z * z) / 2.0).exp());
            }
        }
        a
    }

    pub fn run(&self, state: &[f64]) -> NaiveRun {
        let a = self.intensities(state);
        let n_in = a.len();
        let mut acc = vec![0.0; n_in];
        let mut input = Vec::new();
        for _ in 0..self.t {
            let mut row = vec![0.0; n_in];
            for i in 0..n_in {
                acc[i] += a[i];
                if acc[i] > 1.0 - self.eps {
                    row[i] = 1.0;
                    acc[i] -= 1.0 - self.eps;
                }
            }
            input.push(row);
        }

        let depth = self.layers.len();
        let mut c_hist = vec![Vec::new(); depth];
        let mut v_hist = vec![Vec::new(); depth];
        let mut o_hist = vec![Vec::new(); depth];
        let mut c: Vec<Vec<f64>> = self.layers.iter().map(|l| vec![0.0; l.b.len()]).collect();
        let mut v = c.clone();
        let mut o = c.clone();
        for t in 0..self.t {
            let mut x = input[t].clone();
            for k in 0..depth {
                let l = &self.layers[k];
                for i in 0..l.b.len() {
                    let mut drive = 0.0;
                    for j in 0..x.len() {
                        drive += l.w[i][j] * x[j];
                    }
                    c[k][i] = l.d_c * c[k][i] + drive + l.b[i];
                    v[k][i] = l.d_v * v[k][i] * (1.0 - o[k][i]) + c[k][i];
                    o[k][i] = if v[k][i] > l.v_th { 1.0 } else { 0.0 };
                }
                c_hist[k].push(c[k].clone());
                v_hist[k].push(v[k].clone());
                o_hist[k].push(o[k].clone());
                x = o[k].clone();
            }
        }

        let last = &o_hist[depth - 1];
        let rates: Vec<f64> = (0..last[0].len()).map(|i| last.iter().map(|row| row[i]).sum::<f64>() / self.t as f64).collect();
        let logits: Vec<f64> = self
            .w_d
            .iter()
            .zip(&self.b_d)
            .map(|(row, b)| row.iter().zip(&rates).map(|(w, r)| w * r).sum::<f64>() + b)
            .collect();
        let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|z| (z - top).exp()).collect();
        let total: f64 = e.iter().sum();
        let action = e.iter().map(|x| x / total).collect();
        NaiveRun { input, c: c_hist, v: v_hist, o: o_hist, rates, logits, action }
    }
}
