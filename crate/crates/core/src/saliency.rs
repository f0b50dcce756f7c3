//! Gradient saliency of the propagation residual with respect to the input
//! frame.
//!
//! For each transition `(x_t, x_target)` the model propagates `x_t`
//! deterministically (no variational noise, no dropout) to `x′`, and the
//! gradient of `‖x′ − x_target‖²` with respect to `x_t` is recorded. Both
//! frames are mapped into the model's scaled feature space first, so the
//! gradients are per unit of scaled feature.

use std::collections::{BTreeMap, HashMap};

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tape;
use crate::vde::VdeModel;

/// How source and target frames are combined into transitions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// Source `i` with target `i`.
    #[default]
    Paired,
    /// Every source with every target.
    AllPairs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionSpec {
    /// Raw frames the transitions start from.
    pub sources: Array2<f64>,
    /// Raw frames the transitions should reach.
    pub targets: Array2<f64>,
    pub pairing: Pairing,
}

impl TransitionSpec {
    pub fn paired(sources: Array2<f64>, targets: Array2<f64>) -> Result<Self> {
        let spec = Self { sources, targets, pairing: Pairing::Paired };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sources.ncols() != self.targets.ncols() {
            return Err(Error::Shape {
                context: "transition target features",
                expected: self.sources.ncols(),
                actual: self.targets.ncols(),
            });
        }
        if self.pairing == Pairing::Paired && self.sources.nrows() != self.targets.nrows() {
            return Err(Error::Shape {
                context: "paired transition batch",
                expected: self.sources.nrows(),
                actual: self.targets.nrows(),
            });
        }
        if self.sources.nrows() == 0 || self.targets.nrows() == 0 {
            return Err(Error::Data("transition batch is empty".into()));
        }
        Ok(())
    }

    /// `(sources, targets)` with one row per transition.
    fn expand(&self) -> (Array2<f64>, Array2<f64>) {
        match self.pairing {
            Pairing::Paired => (self.sources.clone(), self.targets.clone()),
            Pairing::AllPairs => {
                let (ns, nt) = (self.sources.nrows(), self.targets.nrows());
                let f = self.sources.ncols();
                let src = Array2::from_shape_fn((ns * nt, f), |(r, j)| self.sources[[r / nt, j]]);
                let tgt = Array2::from_shape_fn((ns * nt, f), |(r, j)| self.targets[[r % nt, j]]);
                (src, tgt)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyReport {
    pub feature_names: Vec<String>,
    /// Median absolute gradient per feature.
    pub scores: Vec<f64>,
    /// Signed gradients, one row per transition.
    pub gradients: Array2<f64>,
    pub group_scores: Option<BTreeMap<String, f64>>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Saliency of every input feature over the transitions in `spec`.
pub fn saliency(
    model: &VdeModel,
    spec: &TransitionSpec,
    feature_names: &[String],
) -> Result<SaliencyReport> {
    if !model.is_trained() {
        return Err(Error::Data("saliency needs a trained model".into()));
    }
    spec.validate()?;
    let f = model.input_dim();
    if spec.sources.ncols() != f {
        return Err(Error::Shape {
            context: "saliency input features",
            expected: f,
            actual: spec.sources.ncols(),
        });
    }
    if feature_names.len() != f {
        return Err(Error::Shape {
            context: "saliency feature names",
            expected: f,
            actual: feature_names.len(),
        });
    }
    let (src, tgt) = spec.expand();
    let src = model.scaler.scale_frames(&src)?;
    let tgt = model.scaler.scale_frames(&tgt)?;

    let mut tape = Tape::new(model.parameters());
    let x = tape.input(src);
    let target = tape.input(tgt);
    let pred = model.propagate_tape(&mut tape, x)?;
    let loss = tape.sum_squared_error(pred, target)?;
    let grads = tape.backward(loss)?;
    let gradients = grads
        .wrt(x)
        .cloned()
        .ok_or_else(|| Error::Numerical("no gradient reached the input".into()))?;

    let scores = gradients
        .axis_iter(Axis(1))
        .map(|col| median(&mut col.mapv(f64::abs).to_vec()))
        .collect();
    Ok(SaliencyReport {
        feature_names: feature_names.to_vec(),
        scores,
        gradients,
        group_scores: None,
    })
}

impl SaliencyReport {
    /// Sums feature scores within each group. Every feature must be labeled.
    pub fn aggregate_groups(&self, groups: &HashMap<String, String>) -> Result<BTreeMap<String, f64>> {
        let mut out = BTreeMap::new();
        for (name, score) in self.feature_names.iter().zip(&self.scores) {
            let label = groups
                .get(name)
                .ok_or_else(|| Error::Data(format!("feature {name:?} has no group label")))?;
            *out.entry(label.clone()).or_insert(0.0) += score;
        }
        Ok(out)
    }

    pub fn with_groups(mut self, groups: &HashMap<String, String>) -> Result<Self> {
        self.group_scores = Some(self.aggregate_groups(groups)?);
        Ok(self)
    }

    /// Feature indices ordered by descending score.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.scores.len()).collect();
        idx.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]));
        idx
    }
}
