use rand::seq::SliceRandom;
use rand::Rng;

use super::{init_rng, shuffle_rng, LossTrace, ModelError, TrainConfig, PROB_CLAMP};
use crate::data::Dataset;

const FORMAT_TAG: &str = "softmaxmodel v1";

/// Numerically stable softmax (max-shifted).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// One linear unit per class; outputs combined with softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxModel {
    /// `classes × inputs`
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl SoftmaxModel {
    pub fn zeros(classes: usize, n_inputs: usize) -> Result<Self, ModelError> {
        if classes < 2 {
            return Err(ModelError::Config(format!(
                "need at least 2 classes, got {classes}"
            )));
        }
        Ok(Self {
            weights: vec![vec![0.0; n_inputs]; classes],
            bias: vec![0.0; classes],
        })
    }

    /// Weights uniform in `[-0.5, 0.5]`, biases 0.
    pub fn random(classes: usize, n_inputs: usize, seed: u64) -> Result<Self, ModelError> {
        let mut model = Self::zeros(classes, n_inputs)?;
        let mut rng = init_rng(seed);
        for w in model.weights.iter_mut().flatten() {
            *w = rng.gen_range(-0.5..=0.5);
        }
        Ok(model)
    }

    pub fn classes(&self) -> usize {
        self.bias.len()
    }

    pub fn n_inputs(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), ModelError> {
        if x.len() != self.n_inputs() {
            return Err(ModelError::Dimension {
                expected: self.n_inputs(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + b)
            .collect()
    }

    pub fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        self.check_dim(x)?;
        Ok(softmax(&self.logits(x)))
    }

    /// Most probable class; ties go to the lowest index.
    pub fn predict_class(&self, x: &[f64]) -> Result<usize, ModelError> {
        let p = self.probabilities(x)?;
        let mut best = 0;
        for (c, &pc) in p.iter().enumerate().skip(1) {
            if pc > p[best] {
                best = c;
            }
        }
        Ok(best)
    }

    fn is_sane(&self) -> bool {
        let ok = |w: &f64| w.is_finite() && w.abs() <= super::DIVERGENCE_LIMIT;
        self.weights.iter().flatten().all(ok) && self.bias.iter().all(ok)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{FORMAT_TAG}\nclasses={}\ninputs={}\n",
            self.classes(),
            self.n_inputs()
        );
        for (c, row) in self.weights.iter().enumerate() {
            for (j, w) in row.iter().enumerate() {
                out.push_str(&format!("w{}_{}={:.16e}\n", c, j + 1, w));
            }
            out.push_str(&format!("b{}={:.16e}\n", c, self.bias[c]));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, ModelError> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        if lines.next() != Some(FORMAT_TAG) {
            return Err(ModelError::Parse(format!("missing '{FORMAT_TAG}' header")));
        }
        let mut header = |name: &str| -> Result<usize, ModelError> {
            lines
                .next()
                .and_then(|l| l.strip_prefix(name))
                .and_then(|v| v.strip_prefix('='))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| ModelError::Parse(format!("missing '{name}'")))
        };
        let classes = header("classes")?;
        let inputs = header("inputs")?;
        let mut model = Self::zeros(classes, inputs)?;
        let mut seen = 0;
        for line in lines {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ModelError::Parse(format!("expected name=value, got '{line}'")))?;
            let v: f64 = value
                .parse()
                .map_err(|_| ModelError::Parse(format!("bad number for {key}")))?;
            let slot = if let Some(rest) = key.strip_prefix('w') {
                let (c, j) = rest
                    .split_once('_')
                    .and_then(|(c, j)| Some((c.parse::<usize>().ok()?, j.parse::<usize>().ok()?)))
                    .ok_or_else(|| ModelError::Parse(format!("bad weight name '{key}'")))?;
                model
                    .weights
                    .get_mut(c)
                    .and_then(|r| r.get_mut(j.wrapping_sub(1)))
            } else if let Some(c) = key.strip_prefix('b') {
                c.parse::<usize>().ok().and_then(|c| model.bias.get_mut(c))
            } else {
                None
            };
            *slot.ok_or_else(|| ModelError::Parse(format!("unknown key '{key}'")))? = v;
            seen += 1;
        }
        if seen != classes * (inputs + 1) {
            return Err(ModelError::Parse(format!(
                "expected {} parameters, found {seen}",
                classes * (inputs + 1)
            )));
        }
        Ok(model)
    }
}

fn mean_cross_entropy(model: &SoftmaxModel, data: &Dataset) -> f64 {
    let total: f64 = data
        .rows()
        .zip(data.labels())
        .map(|(x, &l)| {
            let p = softmax(&model.logits(x))[l as usize];
            -p.clamp(PROB_CLAMP, 1.0).ln()
        })
        .sum();
    total / data.n_rows() as f64
}

/// Per-sample gradient descent on cross-entropy with one-hot targets:
/// `w[c][j] += lr·(onehot_c - p_c)·x_j`, biases with input 1.
pub fn train_softmax(
    model: &SoftmaxModel,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<(SoftmaxModel, LossTrace), ModelError> {
    cfg.validate()?;
    if model.n_inputs() != data.n_features() {
        return Err(ModelError::Dimension {
            expected: model.n_inputs(),
            got: data.n_features(),
        });
    }
    let classes = model.classes();
    if let Some((row, &label)) = data
        .labels()
        .iter()
        .enumerate()
        .find(|(_, &l)| l < 0 || l as usize >= classes)
    {
        return Err(ModelError::Label { row, label });
    }

    let mut model = model.clone();
    let mut trace = LossTrace::default();
    let mut rng = shuffle_rng(cfg.seed);
    let mut order: Vec<usize> = (0..data.n_rows()).collect();
    for epoch in 0..cfg.epochs {
        if cfg.shuffle_each_epoch {
            order.shuffle(&mut rng);
        }
        for &i in &order {
            let x = data.row(i);
            let label = data.labels()[i] as usize;
            let p = softmax(&model.logits(x));
            for (c, (row, b)) in model
                .weights
                .iter_mut()
                .zip(model.bias.iter_mut())
                .enumerate()
            {
                let target = if c == label { 1.0 } else { 0.0 };
                let g = cfg.learning_rate * (target - p[c]);
                for (w, xj) in row.iter_mut().zip(x) {
                    *w += g * xj;
                }
                *b += g;
            }
            if !model.is_sane() {
                return Err(ModelError::Diverged { epoch: epoch + 1 });
            }
        }
        trace.per_epoch_loss.push(mean_cross_entropy(&model, data));
    }
    Ok((model, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(rows: Vec<Vec<f64>>, labels: Vec<i32>) -> Dataset {
        let n = rows[0].len();
        Dataset::new(rows, labels, (0..n).map(|i| format!("x{i}")).collect()).unwrap()
    }

    #[test]
    fn zero_model_is_uniform_and_predicts_class_zero() {
        let m = SoftmaxModel::zeros(3, 5).unwrap();
        let p = m.probabilities(&[0.3, 1.0, -2.0, 4.0, 0.0]).unwrap();
        assert!(p.iter().all(|&q| (q - 1.0 / 3.0).abs() < 1e-15));
        assert_eq!(m.predict_class(&[0.3, 1.0, -2.0, 4.0, 0.0]).unwrap(), 0);
    }

    #[test]
    fn argmax_is_strict() {
        // logits ln(0.1), ln(0.7), ln(0.2) give exactly those probabilities
        let m = SoftmaxModel {
            weights: vec![vec![0.0]; 3],
            bias: vec![0.1f64.ln(), 0.7f64.ln(), 0.2f64.ln()],
        };
        let p = m.probabilities(&[1.0]).unwrap();
        assert!((p[1] - 0.7).abs() < 1e-12);
        assert_eq!(m.predict_class(&[1.0]).unwrap(), 1);
    }

    #[test]
    fn needs_two_classes_and_matching_dims() {
        assert!(SoftmaxModel::zeros(1, 3).is_err());
        let m = SoftmaxModel::zeros(2, 3).unwrap();
        assert!(matches!(
            m.predict_class(&[1.0]),
            Err(ModelError::Dimension {
                expected: 3,
                got: 1
            })
        ));
    }

    #[test]
    fn softmax_survives_huge_logits() {
        let p = softmax(&[1000.0, -1000.0, 999.0]);
        assert!(p.iter().all(|q| q.is_finite()));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn one_step_raises_true_class_probability() {
        let d = dataset(vec![vec![0.7, 0.2]], vec![1]);
        let m0 = SoftmaxModel::random(2, 2, 9).unwrap();
        let before = m0.probabilities(d.row(0)).unwrap()[1];
        let cfg = TrainConfig::new(0.1, 1, 9).unwrap();
        let (m1, trace) = train_softmax(&m0, &d, &cfg).unwrap();
        let after = m1.probabilities(d.row(0)).unwrap()[1];
        assert!(after > before, "{before} -> {after}");
        assert_eq!(trace.len(), 1);
    }

    #[test]
    fn overfit_single_sample_predicts_its_label() {
        let d = dataset(vec![vec![0.4, 0.9, 0.1]], vec![2]);
        let cfg = TrainConfig::new(0.5, 200, 1).unwrap();
        let (m, trace) = train_softmax(&SoftmaxModel::zeros(3, 3).unwrap(), &d, &cfg).unwrap();
        assert_eq!(m.predict_class(d.row(0)).unwrap(), 2);
        assert!(trace.last().unwrap() < trace.first().unwrap());
    }

    #[test]
    fn out_of_range_label_is_rejected() {
        let d = dataset(vec![vec![0.4]], vec![3]);
        let cfg = TrainConfig::new(0.5, 1, 1).unwrap();
        assert!(matches!(
            train_softmax(&SoftmaxModel::zeros(3, 1).unwrap(), &d, &cfg),
            Err(ModelError::Label { row: 0, label: 3 })
        ));
    }

    #[test]
    fn text_round_trip() {
        let m = SoftmaxModel::random(3, 5, 4).unwrap();
        assert_eq!(SoftmaxModel::from_text(&m.to_text()).unwrap(), m);
        assert!(SoftmaxModel::from_text("softmaxmodel v1\nclasses=2\ninputs=1\nw0_1=1\n").is_err());
    }
}
