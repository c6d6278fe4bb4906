//! Scalar reverse-mode tape. The network is unrolled over every timestep
//! into individual scalar nodes; the spike nonlinearity back-propagates the
//! rectangular surrogate in place of its true derivative.

#[derive(Clone, Copy)]
enum Op {
    Leaf,
    Add(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Shift(usize, f64),
    Exp(usize),
    Div(usize, usize),
    Spike { v: usize, v_th: f64, amplitude: f64, window: f64 },
}

pub struct Tape {
    ops: Vec<Op>,
    vals: Vec<f64>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { ops: Vec::new(), vals: Vec::new() }
    }

    fn push(&mut self, op: Op, val: f64) -> usize {
        self.ops.push(op);
        self.vals.push(val);
        self.vals.len() - 1
    }

    pub fn value(&self, n: usize) -> f64 {
        self.vals[n]
    }

    pub fn leaf(&mut self, x: f64) -> usize {
        self.push(Op::Leaf, x)
    }

    pub fn add(&mut self, a: usize, b: usize) -> usize {
        self.push(Op::Add(a, b), self.vals[a] + self.vals[b])
    }

    pub fn mul(&mut self, a: usize, b: usize) -> usize {
        self.push(Op::Mul(a, b), self.vals[a] * self.vals[b])
    }

    pub fn scale(&mut self, a: usize, k: f64) -> usize {
        self.push(Op::Scale(a, k), self.vals[a] * k)
    }

    pub fn shift(&mut self, a: usize, k: f64) -> usize {
        self.push(Op::Shift(a, k), self.vals[a] + k)
    }

    pub fn exp(&mut self, a: usize) -> usize {
        self.push(Op::Exp(a), self.vals[a].exp())
    }

    pub fn div(&mut self, a: usize, b: usize) -> usize {
        self.push(Op::Div(a, b), self.vals[a] / self.vals[b])
    }

    pub fn spike(&mut self, v: usize, v_th: f64, amplitude: f64, window: f64) -> usize {
        let out = if self.vals[v] > v_th { 1.0 } else { 0.0 };
        self.push(Op::Spike { v, v_th, amplitude, window }, out)
    }

    pub fn sum(&mut self, xs: &[usize]) -> usize {
        let mut acc = xs[0];
        for &x in &xs[1..] {
            acc = self.add(acc, x);
        }
        acc
    }

    /// Adjoint of every node with respect to `out`.
    pub fn grad(&self, out: usize) -> Vec<f64> {
        let mut g = vec![0.0; self.vals.len()];
        g[out] = 1.0;
        for n in (0..=out).rev() {
            let gn = g[n];
            if gn == 0.0 {
                continue;
            }
            match self.ops[n] {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    g[a] += gn;
                    g[b] += gn;
                }
                Op::Mul(a, b) => {
                    g[a] += gn * self.vals[b];
                    g[b] += gn * self.vals[a];
                }
                Op::Scale(a, k) => g[a] += gn * k,
                Op::Shift(a, _) => g[a] += gn,
                Op::Exp(a) => g[a] += gn * self.vals[n],
                Op::Div(a, b) => {
                    g[a] += gn / self.vals[b];
                    g[b] -= gn * self.vals[a] / (self.vals[b] * self.vals[b]);
                }
                Op::Spike { v, v_th, amplitude, window } => {
                    if (self.vals[v] - v_th).abs() < window {
                        g[v] += gn * amplitude;
                    }
                }
            }
        }
        g
    }
}

/// Node ids of every parameter, laid out like the library's parameter blocks.
pub struct ParamNodes {
    /// Per layer: `[out][in]` weight nodes and bias nodes.
    pub layers: Vec<(Vec<Vec<usize>>, Vec<usize>)>,
    pub w_d: Vec<Vec<usize>>,
    pub b_d: Vec<usize>,
}

/// Unrolls `net` on the given input spike train and returns the tape, the
/// parameter nodes and the node of `sum_i g_i a_i`.
pub fn unroll(
    net: &super::naive::NaiveNet,
    input: &[Vec<f64>],
    g: &[f64],
    amplitude: f64,
    window: f64,
) -> (Tape, ParamNodes, usize) {
    let mut tape = Tape::new();
    let layers: Vec<(Vec<Vec<usize>>, Vec<usize>)> = net
        .layers
        .iter()
        .map(|l| {
            let w = l.w.iter().map(|row| row.iter().map(|&x| tape.leaf(x)).collect()).collect();
            let b = l.b.iter().map(|&x| tape.leaf(x)).collect();
            (w, b)
        })
        .collect();
    let w_d: Vec<Vec<usize>> = net.w_d.iter().map(|row| row.iter().map(|&x| tape.leaf(x)).collect()).collect();
    let b_d: Vec<usize> = net.b_d.iter().map(|&x| tape.leaf(x)).collect();

    let zero = tape.leaf(0.0);
    let mut c: Vec<Vec<usize>> = net.layers.iter().map(|l| vec![zero; l.b.len()]).collect();
    let mut v = c.clone();
    let mut o = c.clone();
    let mut counts: Vec<Vec<usize>> = Vec::new();
    for row in input {
        let mut x: Vec<usize> = row.iter().map(|&s| tape.leaf(s)).collect();
        for (k, l) in net.layers.iter().enumerate() {
            let (w, b) = &layers[k];
            for i in 0..l.b.len() {
                let terms: Vec<usize> = x.iter().enumerate().map(|(j, &xj)| tape.mul(w[i][j], xj)).collect();
                let drive = tape.sum(&terms);
                let leak = tape.scale(c[k][i], l.d_c);
                let partial = tape.add(leak, drive);
                c[k][i] = tape.add(partial, b[i]);
                let neg_o = tape.scale(o[k][i], -1.0);
                let keep = tape.shift(neg_o, 1.0);
                let held = tape.mul(v[k][i], keep);
                let decayed = tape.scale(held, l.d_v);
                v[k][i] = tape.add(decayed, c[k][i]);
                o[k][i] = tape.spike(v[k][i], l.v_th, amplitude, window);
            }
            x = o[k].clone();
        }
        counts.push(x);
    }
    let hidden = counts[0].len();
    let rates: Vec<usize> = (0..hidden)
        .map(|i| {
            let col: Vec<usize> = counts.iter().map(|r| r[i]).collect();
            let total = tape.sum(&col);
            tape.scale(total, 1.0 / input.len() as f64)
        })
        .collect();
    let exps: Vec<usize> = w_d
        .iter()
        .zip(&b_d)
        .map(|(row, &b)| {
            let terms: Vec<usize> = row.iter().zip(&rates).map(|(&w, &r)| tape.mul(w, r)).collect();
            let dot = tape.sum(&terms);
            let z = tape.add(dot, b);
            tape.exp(z)
        })
        .collect();
    let denom = tape.sum(&exps);
    let weighted: Vec<usize> = exps
        .iter()
        .zip(g)
        .map(|(&e, &gi)| {
            let a = tape.div(e, denom);
            tape.scale(a, gi)
        })
        .collect();
    let loss = tape.sum(&weighted);
    (tape, ParamNodes { layers, w_d, b_d }, loss)
}
