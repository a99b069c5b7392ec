//! Data-driven guard condition: a one-vs-rest max-margin classifier over
//! lifted states, mapping a state to its hybrid-mode label.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lifting::BasisSpec;

/// Trained multi-class linear classifier over lifted, standardized features.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndicatorFunction {
    pub basis: BasisSpec,
    pub classes: Vec<i32>,
    weights: Vec<DVector<f64>>,
    biases: Vec<f64>,
    /// Per-feature standardization parameters from the training set.
    mean: DVector<f64>,
    std: DVector<f64>,
    pub train_accuracy: f64,
}

impl IndicatorFunction {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    fn standardized(&self, x: &[f64]) -> Result<DVector<f64>> {
        let mut z = self.basis.lift(x)?;
        for i in 0..z.len() {
            z[i] = (z[i] - self.mean[i]) / self.std[i];
        }
        Ok(z)
    }

    /// Per-class decision scores w_i . psi(x) + b_i.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.standardized(x)?;
        Ok(self
            .weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.dot(&z) + b)
            .collect())
    }
}

/// Argmax classification; ties break to the lowest class label.
pub fn classify(ind: &IndicatorFunction, x: &[f64]) -> Result<i32> {
    if ind.classes.len() == 1 {
        // constant classifier still validates its input
        ind.basis.lift(x)?;
        return Ok(ind.classes[0]);
    }
    let scores = ind.scores(x)?;
    let mut best = 0;
    for i in 1..scores.len() {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    Ok(ind.classes[best])
}

/// Trains one-vs-rest hinge-loss classifiers by deterministic subgradient
/// descent (cyclic sample order, 1/(reg*t) step schedule). Features are the
/// lifted states, standardized per dimension; the standardization is part of
/// the model.
pub fn train_indicator(
    states: &[Vec<f64>],
    labels: &[i32],
    basis: &BasisSpec,
    reg: f64,
    epochs: usize,
) -> Result<IndicatorFunction> {
    if states.is_empty() {
        return Err(Error::Parameter("no training samples".into()));
    }
    if states.len() != labels.len() {
        return Err(Error::Parameter("state/label length mismatch".into()));
    }
    if reg <= 0.0 {
        return Err(Error::Parameter("reg must be positive".into()));
    }
    if epochs == 0 {
        return Err(Error::Parameter("epochs must be positive".into()));
    }
    if labels.iter().any(|&l| l < 0) {
        return Err(Error::Parameter("noise labels must be excluded before training".into()));
    }
    let mut classes: Vec<i32> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();

    let n = basis.lifted_dim();
    let lifted: Vec<DVector<f64>> =
        states.iter().map(|s| basis.lift(s)).collect::<Result<_>>()?;

    let m = lifted.len() as f64;
    let mut mean = DVector::zeros(n);
    for z in &lifted {
        mean += z;
    }
    mean /= m;
    let mut std: DVector<f64> = DVector::zeros(n);
    for z in &lifted {
        for i in 0..n {
            std[i] += (z[i] - mean[i]).powi(2);
        }
    }
    for i in 0..n {
        std[i] = (std[i] / m).sqrt();
        if std[i] < 1e-12 {
            std[i] = 1.0;
        }
    }
    let feats: Vec<DVector<f64>> = lifted
        .into_iter()
        .map(|mut z| {
            for i in 0..n {
                z[i] = (z[i] - mean[i]) / std[i];
            }
            z
        })
        .collect();

    if classes.len() == 1 {
        return Ok(IndicatorFunction {
            basis: basis.clone(),
            classes,
            weights: vec![DVector::zeros(n)],
            biases: vec![0.0],
            mean,
            std,
            train_accuracy: 1.0,
        });
    }
    for &c in &classes {
        let count = labels.iter().filter(|&&l| l == c).count();
        if count < 2 {
            return Err(Error::Parameter(format!("class {c} has fewer than two samples")));
        }
    }

    let mut weights = Vec::with_capacity(classes.len());
    let mut biases = Vec::with_capacity(classes.len());
    for &c in &classes {
        let targets: Vec<f64> =
            labels.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
        let mut w: DVector<f64> = DVector::zeros(n);
        let mut b = 0.0;
        // schedule offset keeps the first steps at O(1); without it the
        // unregularized bias takes a 1/reg-sized jump it can never undo
        let t0 = (1.0 / reg).ceil() as u64;
        let mut t: u64 = t0;
        // tail-averaged iterates: smooths the oscillation of the raw
        // subgradient path without changing the update rule
        let mut w_avg: DVector<f64> = DVector::zeros(n);
        let mut b_avg = 0.0;
        let mut avg_count: u64 = 0;
        let total = epochs as u64 * feats.len() as u64;
        let mut iter: u64 = 0;
        for _ in 0..epochs {
            for (z, &y) in feats.iter().zip(&targets) {
                t += 1;
                iter += 1;
                let eta = 1.0 / (reg * t as f64);
                let margin = y * (w.dot(z) + b);
                w *= 1.0 - eta * reg;
                if margin < 1.0 {
                    w.axpy(eta * y, z, 1.0);
                    b += eta * y;
                }
                if 2 * iter > total {
                    w_avg += &w;
                    b_avg += b;
                    avg_count += 1;
                }
            }
        }
        w_avg /= avg_count as f64;
        b_avg /= avg_count as f64;
        weights.push(w_avg);
        biases.push(b_avg);
    }

    let mut model = IndicatorFunction {
        basis: basis.clone(),
        classes,
        weights,
        biases,
        mean,
        std,
        train_accuracy: 0.0,
    };
    let correct = states
        .iter()
        .zip(labels)
        .filter(|(s, &l)| classify(&model, s).map(|p| p == l).unwrap_or(false))
        .count();
    model.train_accuracy = correct as f64 / states.len() as f64;
    Ok(model)
}
