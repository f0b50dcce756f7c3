//! Define-by-run reverse-mode differentiation over dense matrices.
//!
//! Every value on the tape is a row-major `batch × width` matrix; scalars are
//! `1 × 1`. Operations record their inputs and whatever they need for the
//! vector-Jacobian product, and [`Tape::backward`] walks the record once in
//! reverse. Parameters are borrowed, not copied: a [`Var`] created with
//! [`Tape::param`] refers to slot `i` of the parameter list handed to
//! [`Tape::new`], and its gradient is accumulated into slot `i` of
//! [`Gradients::params`].

use ndarray::{Array2, Axis, Zip};

use super::layers::{swish, swish_derivative};
use crate::error::{Error, Result};

/// Handle to a value on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(usize),
    /// `x · Wᵀ + b`
    Affine { x: Var, w: Var, b: Var },
    Swish(Var),
    /// Elementwise product with a constant matrix (dropout masks).
    Mask { x: Var, mask: Array2<f64> },
    /// `μ + α · exp(½ log σ²) · ε`
    Reparam {
        mu: Var,
        log_var: Var,
        eps: Array2<f64>,
        alpha: f64,
    },
    /// Mean of squared differences over every element.
    MeanSquaredError { pred: Var, target: Var },
    /// Sum of squared differences over every element.
    SumSquaredError { pred: Var, target: Var },
    /// Batch mean of `−½ (1 + log σ² − μ² − σ²)`.
    GaussianKl { mu: Var, log_var: Var },
    /// Negative Pearson correlation between two single-column batches.
    NegPearson { a: Var, b: Var },
    /// `wa · a + wb · b` for two scalars.
    Combine { a: Var, wa: f64, b: Var, wb: f64 },
}

struct Node {
    op: Op,
    value: Option<Array2<f64>>,
}

pub struct Tape<'p> {
    params: Vec<&'p Array2<f64>>,
    nodes: Vec<Node>,
    spent: bool,
}

/// Result of [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    /// One entry per parameter slot; untouched parameters get zeros.
    pub params: Vec<Array2<f64>>,
    nodes: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    /// Gradient with respect to an input or intermediate value.
    pub fn wrt(&self, v: Var) -> Option<&Array2<f64>> {
        self.nodes.get(v.0).and_then(|g| g.as_ref())
    }
}

fn scalar(v: f64) -> Array2<f64> {
    Array2::from_elem((1, 1), v)
}

fn same_shape(ctx: &'static str, a: &Array2<f64>, b: &Array2<f64>) -> Result<()> {
    if a.dim() == b.dim() {
        Ok(())
    } else {
        Err(Error::Shape {
            context: ctx,
            expected: a.len(),
            actual: b.len(),
        })
    }
}

/// Centered copies and sums of squares/cross products of two columns.
fn pearson_parts(a: &Array2<f64>, b: &Array2<f64>) -> (Vec<f64>, Vec<f64>, f64, f64, f64) {
    let n = a.nrows() as f64;
    let ma = a.sum() / n;
    let mb = b.sum() / n;
    let da: Vec<f64> = a.iter().map(|x| x - ma).collect();
    let db: Vec<f64> = b.iter().map(|x| x - mb).collect();
    let saa = da.iter().map(|x| x * x).sum();
    let sbb = db.iter().map(|x| x * x).sum();
    let sab = da.iter().zip(&db).map(|(x, y)| x * y).sum();
    (da, db, saa, sbb, sab)
}

/// Pearson correlation of two equally long samples, `None` if either is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let a = Array2::from_shape_vec((a.len(), 1), a.to_vec()).ok()?;
    let b = Array2::from_shape_vec((b.len(), 1), b.to_vec()).ok()?;
    if !has_spread(&a) || !has_spread(&b) {
        return None;
    }
    let (_, _, saa, sbb, sab) = pearson_parts(&a, &b);
    Some(sab / (saa * sbb).sqrt())
}

/// `false` when the column is constant up to rounding.
pub fn has_spread(col: &Array2<f64>) -> bool {
    let n = col.len();
    if n < 2 {
        return false;
    }
    let mean = col.sum() / n as f64;
    let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    let magnitude = col.iter().map(|x| x * x).sum::<f64>() / n as f64;
    var > 1e-24 * magnitude.max(1e-300)
}

impl<'p> Tape<'p> {
    pub fn new(params: Vec<&'p Array2<f64>>) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            spent: false,
        }
    }

    fn push(&mut self, op: Op, value: Array2<f64>) -> Var {
        self.nodes.push(Node {
            op,
            value: Some(value),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        match self.nodes[v.0].op {
            Op::Param(i) => self.params[i],
            _ => self.nodes[v.0].value.as_ref().expect("value recorded"),
        }
    }

    /// Scalar value of a `1 × 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[[0, 0]]
    }

    pub fn input(&mut self, x: Array2<f64>) -> Var {
        self.push(Op::Input, x)
    }

    pub fn param(&mut self, index: usize) -> Var {
        assert!(index < self.params.len(), "parameter slot {index} out of range");
        self.nodes.push(Node {
            op: Op::Param(index),
            value: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if xv.ncols() != wv.ncols() {
            return Err(Error::Shape {
                context: "affine input width",
                expected: wv.ncols(),
                actual: xv.ncols(),
            });
        }
        if bv.dim() != (1, wv.nrows()) {
            return Err(Error::Shape {
                context: "affine bias",
                expected: wv.nrows(),
                actual: bv.len(),
            });
        }
        let y = affine_forward(xv, wv, bv);
        Ok(self.push(Op::Affine { x, w, b }, y))
    }

    pub fn swish(&mut self, x: Var) -> Var {
        let y = self.value(x).mapv(swish);
        self.push(Op::Swish(x), y)
    }

    pub fn mask(&mut self, x: Var, mask: Array2<f64>) -> Result<Var> {
        same_shape("mask", self.value(x), &mask)?;
        let y = self.value(x) * &mask;
        Ok(self.push(Op::Mask { x, mask }, y))
    }

    pub fn reparameterize(
        &mut self,
        mu: Var,
        log_var: Var,
        eps: Array2<f64>,
        alpha: f64,
    ) -> Result<Var> {
        same_shape("reparameterization", self.value(mu), self.value(log_var))?;
        same_shape("reparameterization noise", self.value(mu), &eps)?;
        let mut y = self.value(log_var).mapv(|lv| (0.5 * lv).exp());
        Zip::from(&mut y)
            .and(self.value(mu))
            .and(&eps)
            .for_each(|s, &m, &e| *s = m + alpha * *s * e);
        Ok(self.push(
            Op::Reparam {
                mu,
                log_var,
                eps,
                alpha,
            },
            y,
        ))
    }

    pub fn mean_squared_error(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (p, t) = (self.value(pred), self.value(target));
        same_shape("mean squared error", p, t)?;
        let n = p.len() as f64;
        let v = Zip::from(p)
            .and(t)
            .fold(0.0, |acc, a, b| acc + (a - b) * (a - b))
            / n;
        Ok(self.push(Op::MeanSquaredError { pred, target }, scalar(v)))
    }

    pub fn sum_squared_error(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (p, t) = (self.value(pred), self.value(target));
        same_shape("sum squared error", p, t)?;
        let v = Zip::from(p)
            .and(t)
            .fold(0.0, |acc, a, b| acc + (a - b) * (a - b));
        Ok(self.push(Op::SumSquaredError { pred, target }, scalar(v)))
    }

    pub fn gaussian_kl(&mut self, mu: Var, log_var: Var) -> Result<Var> {
        let (m, lv) = (self.value(mu), self.value(log_var));
        same_shape("kl divergence", m, lv)?;
        let n = m.nrows() as f64;
        let v = Zip::from(m).and(lv).fold(0.0, |acc, &m, &lv| {
            acc - 0.5 * (1.0 + lv - m * m - lv.exp())
        }) / n;
        Ok(self.push(Op::GaussianKl { mu, log_var }, scalar(v)))
    }

    /// `−ρ(a, b)`. Both inputs must be single columns with non-zero spread;
    /// callers check [`has_spread`] first.
    pub fn neg_pearson(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        same_shape("pearson correlation", av, bv)?;
        if av.ncols() != 1 {
            return Err(Error::Shape {
                context: "pearson correlation columns",
                expected: 1,
                actual: av.ncols(),
            });
        }
        if !has_spread(av) || !has_spread(bv) {
            return Err(Error::Numerical(
                "correlation of a constant batch is undefined".into(),
            ));
        }
        let (_, _, saa, sbb, sab) = pearson_parts(av, bv);
        let r = sab / (saa * sbb).sqrt();
        Ok(self.push(Op::NegPearson { a, b }, scalar(-r)))
    }

    pub fn combine(&mut self, a: Var, wa: f64, b: Var, wb: f64) -> Result<Var> {
        for v in [a, b] {
            if self.value(v).dim() != (1, 1) {
                return Err(Error::Shape {
                    context: "scalar combination",
                    expected: 1,
                    actual: self.value(v).len(),
                });
            }
        }
        let v = wa * self.scalar(a) + wb * self.scalar(b);
        Ok(self.push(Op::Combine { a, wa, b, wb }, scalar(v)))
    }

    /// Reverse sweep from the scalar `loss`. A tape can be swept once.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.spent {
            return Err(Error::State(
                "backward already ran on this tape; run a new forward pass first".into(),
            ));
        }
        if self.nodes.is_empty() || loss.0 >= self.nodes.len() {
            return Err(Error::State("backward called before any forward pass".into()));
        }
        if self.value(loss).dim() != (1, 1) {
            return Err(Error::State("backward needs a scalar loss".into()));
        }
        self.spent = true;

        let mut grads: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut param_grads: Vec<Array2<f64>> =
            self.params.iter().map(|p| Array2::zeros(p.dim())).collect();
        grads[loss.0] = Some(scalar(1.0));

        fn accumulate(slot: &mut Option<Array2<f64>>, g: Array2<f64>) {
            match slot {
                Some(acc) => *acc += &g,
                None => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            match &self.nodes[idx].op {
                Op::Input => {
                    grads[idx] = Some(g);
                }
                Op::Param(i) => {
                    param_grads[*i] += &g;
                    grads[idx] = Some(g);
                }
                Op::Affine { x, w, b } => {
                    let gx = g.dot(self.value(*w));
                    let gw = g.t().dot(self.value(*x));
                    let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads[x.0], gx);
                    accumulate(&mut grads[w.0], gw);
                    accumulate(&mut grads[b.0], gb);
                    grads[idx] = Some(g);
                }
                Op::Swish(x) => {
                    let mut gx = self.value(*x).mapv(swish_derivative);
                    gx *= &g;
                    accumulate(&mut grads[x.0], gx);
                    grads[idx] = Some(g);
                }
                Op::Mask { x, mask } => {
                    accumulate(&mut grads[x.0], &g * mask);
                    grads[idx] = Some(g);
                }
                Op::Reparam {
                    mu,
                    log_var,
                    eps,
                    alpha,
                } => {
                    let mut glv = self.value(*log_var).mapv(|lv| 0.5 * (0.5 * lv).exp());
                    Zip::from(&mut glv)
                        .and(eps)
                        .and(&g)
                        .for_each(|s, &e, &gy| *s *= alpha * e * gy);
                    accumulate(&mut grads[mu.0], g.clone());
                    accumulate(&mut grads[log_var.0], glv);
                    grads[idx] = Some(g);
                }
                Op::MeanSquaredError { pred, target } | Op::SumSquaredError { pred, target } => {
                    let seed = g[[0, 0]];
                    let p = self.value(*pred);
                    let t = self.value(*target);
                    let k = match self.nodes[idx].op {
                        Op::MeanSquaredError { .. } => 2.0 * seed / p.len() as f64,
                        _ => 2.0 * seed,
                    };
                    let diff = (p - t) * k;
                    accumulate(&mut grads[target.0], -&diff);
                    accumulate(&mut grads[pred.0], diff);
                    grads[idx] = Some(g);
                }
                Op::GaussianKl { mu, log_var } => {
                    let seed = g[[0, 0]];
                    let n = self.value(*mu).nrows() as f64;
                    let gm = self.value(*mu) * (seed / n);
                    let glv = self
                        .value(*log_var)
                        .mapv(|lv| -0.5 * (1.0 - lv.exp()) * seed / n);
                    accumulate(&mut grads[mu.0], gm);
                    accumulate(&mut grads[log_var.0], glv);
                    grads[idx] = Some(g);
                }
                Op::NegPearson { a, b } => {
                    let seed = g[[0, 0]];
                    let (da, db, saa, sbb, sab) = pearson_parts(self.value(*a), self.value(*b));
                    let norm = (saa * sbb).sqrt();
                    let r = sab / norm;
                    let n = da.len();
                    // d(−ρ)/da_i = −(db_i/√(SaaSbb) − ρ da_i/Saa)
                    let ga = Array2::from_shape_fn((n, 1), |(i, _)| {
                        -seed * (db[i] / norm - r * da[i] / saa)
                    });
                    let gb = Array2::from_shape_fn((n, 1), |(i, _)| {
                        -seed * (da[i] / norm - r * db[i] / sbb)
                    });
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                    grads[idx] = Some(g);
                }
                Op::Combine { a, wa, b, wb } => {
                    let seed = g[[0, 0]];
                    accumulate(&mut grads[a.0], scalar(wa * seed));
                    accumulate(&mut grads[b.0], scalar(wb * seed));
                    grads[idx] = Some(g);
                }
            }
        }
        Ok(Gradients {
            params: param_grads,
            nodes: grads,
        })
    }
}

/// `x · Wᵀ + b` with `b` a `1 × out` row.
pub fn affine_forward(x: &Array2<f64>, w: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let mut y = x.dot(&w.t());
    y += b;
    y
}
