use rand::seq::SliceRandom;

use super::{shuffle_rng, GatedModel, LossTrace, ModelError, TrainConfig};
use crate::data::Dataset;
use crate::metrics::bce_loss;

fn check_features(model: &GatedModel, data: &Dataset) -> Result<(), ModelError> {
    if model.n_inputs() != data.n_features() {
        return Err(ModelError::Dimension {
            expected: model.n_inputs(),
            got: data.n_features(),
        });
    }
    Ok(())
}

fn check_labels(data: &Dataset, allowed: &[i32]) -> Result<(), ModelError> {
    match data
        .labels()
        .iter()
        .enumerate()
        .find(|(_, l)| !allowed.contains(l))
    {
        Some((row, &label)) => Err(ModelError::Label { row, label }),
        None => Ok(()),
    }
}

/// Visiting order for one epoch.
struct EpochOrder {
    order: Vec<usize>,
    rng: rand_chacha::ChaCha8Rng,
    shuffle: bool,
}

impl EpochOrder {
    fn new(n: usize, cfg: &TrainConfig) -> Self {
        Self {
            order: (0..n).collect(),
            rng: shuffle_rng(cfg.seed),
            shuffle: cfg.shuffle_each_epoch,
        }
    }

    fn next_epoch(&mut self) -> &[usize] {
        if self.shuffle {
            self.order.shuffle(&mut self.rng);
        }
        &self.order
    }
}

/// Per-sample delta-rule training of a sigmoid unit on 0/1 labels.
///
/// Each weight moves by `lr·(label - y)·y·(1 - y)·input` after every
/// sample; the mean binary cross-entropy over `data` is recorded once per
/// epoch.
pub fn train_binary(
    model: &GatedModel,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<(GatedModel, LossTrace), ModelError> {
    cfg.validate()?;
    check_features(model, data)?;
    check_labels(data, &[0, 1]).map_err(|e| match e {
        ModelError::Label { row, label } => {
            ModelError::Config(format!("label {label} at row {row} is not 0 or 1"))
        }
        other => other,
    })?;

    let mut model = model.clone();
    let mut trace = LossTrace::default();
    let mut order = EpochOrder::new(data.n_rows(), cfg);
    let mut scores = vec![0.0; data.n_rows()];
    for epoch in 0..cfg.epochs {
        for &i in order.next_epoch() {
            let step = model.binary_step(data.row(i), data.labels()[i] as f64)?;
            model.apply_step(&step, cfg.learning_rate);
            if !model.is_sane() {
                return Err(ModelError::Diverged { epoch: epoch + 1 });
            }
        }
        for (s, row) in scores.iter_mut().zip(data.rows()) {
            *s = super::sigmoid(model.sum_unchecked(row));
        }
        let loss =
            bce_loss(data.labels(), &scores).map_err(|e| ModelError::Config(e.to_string()))?;
        trace.per_epoch_loss.push(loss);
    }
    Ok((model, trace))
}

fn region_sign(sum: f64) -> i32 {
    if sum >= 0.0 {
        1
    } else {
        -1
    }
}

/// Number of rows whose weighted-sum sign (zero counted positive) differs
/// from the `+1`/`-1` target.
pub fn region_mistakes(model: &GatedModel, data: &Dataset) -> usize {
    data.rows()
        .zip(data.labels())
        .filter(|(row, &label)| region_sign(model.sum_unchecked(row)) != label)
        .count()
}

/// Drives the raw weighted sum of a two-input model toward `+1`/`-1`
/// region targets.
///
/// A sample whose sign is wrong moves every weight by
/// `lr·(target - y)·input` with `y` the raw sum and input `x1`, `x2`,
/// `x1·x2` or 1. The returned model is the one with the fewest training
/// mistakes seen after any update (the last iterate oscillates on
/// non-separable data). Training stops early once an epoch makes no update.
pub fn train_region(
    model: &GatedModel,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<GatedModel, ModelError> {
    cfg.validate()?;
    if data.n_features() != 2 {
        return Err(ModelError::Config(format!(
            "region training needs exactly 2 features, got {}",
            data.n_features()
        )));
    }
    check_features(model, data)?;
    check_labels(data, &[1, -1])?;

    let mut model = model.clone();
    let mut best = model.clone();
    let mut best_mistakes = region_mistakes(&model, data);
    let mut order = EpochOrder::new(data.n_rows(), cfg);
    for epoch in 0..cfg.epochs {
        if best_mistakes == 0 {
            break;
        }
        let mut updated = false;
        for &i in order.next_epoch() {
            let x = data.row(i);
            let target = data.labels()[i];
            let y = model.sum_unchecked(x);
            if region_sign(y) == target {
                continue;
            }
            let step = cfg.learning_rate * (target as f64 - y);
            for (w, xi) in model.input_weights.iter_mut().zip(x) {
                *w += step * xi;
            }
            if model.gate_enabled {
                model.gate_weight += step * GatedModel::gate_input(x);
            }
            model.bias += step;
            updated = true;
            if !model.is_sane() {
                return Err(ModelError::Diverged { epoch: epoch + 1 });
            }
            let mistakes = region_mistakes(&model, data);
            if mistakes < best_mistakes {
                best_mistakes = mistakes;
                best = model.clone();
            }
        }
        if !updated {
            break;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(rows: Vec<Vec<f64>>, labels: Vec<i32>) -> Dataset {
        let n = rows[0].len();
        Dataset::new(rows, labels, (0..n).map(|i| format!("x{i}")).collect()).unwrap()
    }

    fn xor() -> Dataset {
        dataset(
            vec![
                vec![0.0, 0.0],
                vec![1.0, 1.0],
                vec![0.0, 1.0],
                vec![1.0, 0.0],
            ],
            vec![1, 1, -1, -1],
        )
    }

    #[test]
    fn single_binary_step_by_hand() {
        let d = dataset(vec![vec![1.0]], vec![1]);
        let cfg = TrainConfig::new(1.0, 1, 0).unwrap();
        let (m, trace) = train_binary(&GatedModel::zeros(1, false), &d, &cfg).unwrap();
        // e = 0.5, y(1-y) = 0.25
        assert_eq!(m.input_weights, vec![0.125]);
        assert_eq!(m.bias, 0.125);
        assert_eq!(trace.len(), 1);
        let (g, _) = train_binary(&GatedModel::zeros(1, true), &d, &cfg).unwrap();
        assert_eq!(g.gate_weight, 0.125);
    }

    #[test]
    fn binary_rejects_non_binary_labels() {
        let d = dataset(vec![vec![1.0], vec![0.0]], vec![1, 2]);
        let cfg = TrainConfig::new(0.5, 3, 0).unwrap();
        assert!(matches!(
            train_binary(&GatedModel::zeros(1, true), &d, &cfg),
            Err(ModelError::Config(_))
        ));
    }

    #[test]
    fn binary_detects_divergence() {
        let d = dataset(vec![vec![1e12], vec![-1e12]], vec![1, 0]);
        let cfg = TrainConfig::new(1e6, 5, 0).unwrap();
        let m = GatedModel {
            input_weights: vec![1e-13],
            gate_weight: 0.0,
            bias: 0.0,
            gate_enabled: false,
        };
        assert!(matches!(
            train_binary(&m, &d, &cfg),
            Err(ModelError::Diverged { .. })
        ));
    }

    #[test]
    fn binary_is_deterministic() {
        let d = dataset(
            (0..20)
                .map(|i| vec![i as f64 / 20.0, (i % 3) as f64 / 3.0])
                .collect(),
            (0..20).map(|i| (i >= 10) as i32).collect(),
        );
        let cfg = TrainConfig::new(0.5, 20, 11).unwrap();
        let m0 = GatedModel::random(2, true, 11);
        let a = train_binary(&m0, &d, &cfg).unwrap();
        let b = train_binary(&m0, &d, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.1.last().unwrap() < a.1.first().unwrap());
    }

    #[test]
    fn region_needs_two_features_and_signed_labels() {
        let cfg = TrainConfig::new(0.1, 5, 0).unwrap();
        let three = dataset(vec![vec![0.0, 0.0, 0.0]], vec![1]);
        assert!(matches!(
            train_region(&GatedModel::zeros(3, true), &three, &cfg),
            Err(ModelError::Config(_))
        ));
        let zero_label = dataset(vec![vec![0.0, 0.0]], vec![0]);
        assert!(matches!(
            train_region(&GatedModel::zeros(2, true), &zero_label, &cfg),
            Err(ModelError::Label { .. })
        ));
    }

    #[test]
    fn region_solves_xor() {
        let cfg = TrainConfig::new(0.1, 10_000, 5).unwrap();
        let m = train_region(&GatedModel::random(2, true, 5), &xor(), &cfg).unwrap();
        assert_eq!(region_mistakes(&m, &xor()), 0);
    }

    #[test]
    fn region_fixed_point_when_already_separated() {
        // the feasibility witness for XOR
        let witness = GatedModel {
            input_weights: vec![-0.3, -0.3],
            gate_weight: 0.6,
            bias: 0.1,
            gate_enabled: true,
        };
        assert_eq!(region_mistakes(&witness, &xor()), 0);
        let cfg = TrainConfig::new(0.5, 100, 1).unwrap();
        assert_eq!(train_region(&witness, &xor(), &cfg).unwrap(), witness);
    }

    #[test]
    fn region_plain_cannot_solve_xor() {
        let cfg = TrainConfig::new(0.1, 500, 2).unwrap();
        let m = train_region(&GatedModel::random(2, false, 2), &xor(), &cfg).unwrap();
        assert!(region_mistakes(&m, &xor()) > 0);
        assert_eq!(m.gate_weight, 0.0);
    }
}
