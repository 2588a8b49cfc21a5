use rand::Rng;

use super::{init_rng, ModelError, DIVERGENCE_LIMIT};

const FORMAT_TAG: &str = "gatedmodel v1";

/// Logistic function, evaluated without overflow for any finite input.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Perceptron with an optional product-of-inputs gate term.
///
/// The output sum is `Σ wᵢ·xᵢ + gate·Πxᵢ + bias`. With `gate_enabled`
/// false the product term is never evaluated and `gate_weight` is never
/// touched, which makes the same type serve as the plain baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct GatedModel {
    pub input_weights: Vec<f64>,
    pub gate_weight: f64,
    pub bias: f64,
    pub gate_enabled: bool,
}

/// Update direction of one delta-rule step, before scaling by the learning rate.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryStep {
    pub output: f64,
    pub input_deltas: Vec<f64>,
    pub gate_delta: f64,
    pub bias_delta: f64,
}

impl GatedModel {
    pub fn zeros(n_inputs: usize, gate_enabled: bool) -> Self {
        Self {
            input_weights: vec![0.0; n_inputs],
            gate_weight: 0.0,
            bias: 0.0,
            gate_enabled,
        }
    }

    /// Weights uniform in `[-0.5, 0.5]`, bias 0.
    ///
    /// The gate weight is drawn after the input weights, so a gated and a
    /// plain model built from the same seed share their input weights.
    pub fn random(n_inputs: usize, gate_enabled: bool, seed: u64) -> Self {
        let mut rng = init_rng(seed);
        let input_weights = (0..n_inputs).map(|_| rng.gen_range(-0.5..=0.5)).collect();
        let gate_weight = if gate_enabled {
            rng.gen_range(-0.5..=0.5)
        } else {
            0.0
        };
        Self {
            input_weights,
            gate_weight,
            bias: 0.0,
            gate_enabled,
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.input_weights.len()
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), ModelError> {
        if x.len() != self.input_weights.len() {
            return Err(ModelError::Dimension {
                expected: self.input_weights.len(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Product of all inputs; the value fed to the gate weight.
    pub fn gate_input(x: &[f64]) -> f64 {
        x.iter().product()
    }

    pub fn weighted_sum(&self, x: &[f64]) -> Result<f64, ModelError> {
        self.check_dim(x)?;
        Ok(self.sum_unchecked(x))
    }

    pub(crate) fn sum_unchecked(&self, x: &[f64]) -> f64 {
        let linear: f64 = self.input_weights.iter().zip(x).map(|(w, xi)| w * xi).sum();
        let gate = if self.gate_enabled {
            self.gate_weight * Self::gate_input(x)
        } else {
            0.0
        };
        linear + gate + self.bias
    }

    pub fn sigmoid_predict(&self, x: &[f64]) -> Result<f64, ModelError> {
        self.weighted_sum(x).map(sigmoid)
    }

    /// Delta-rule direction for one sample: each weight moves by
    /// `(label - y)·y·(1 - y)·input`, with `y` the sigmoid output.
    pub fn binary_step(&self, x: &[f64], label: f64) -> Result<BinaryStep, ModelError> {
        let y = self.sigmoid_predict(x)?;
        let g = (label - y) * y * (1.0 - y);
        Ok(BinaryStep {
            output: y,
            input_deltas: x.iter().map(|xi| g * xi).collect(),
            gate_delta: if self.gate_enabled {
                g * Self::gate_input(x)
            } else {
                0.0
            },
            bias_delta: g,
        })
    }

    pub fn apply_step(&mut self, step: &BinaryStep, learning_rate: f64) {
        for (w, d) in self.input_weights.iter_mut().zip(&step.input_deltas) {
            *w += learning_rate * d;
        }
        if self.gate_enabled {
            self.gate_weight += learning_rate * step.gate_delta;
        }
        self.bias += learning_rate * step.bias_delta;
    }

    /// True when every parameter is finite and below the divergence limit.
    pub fn is_sane(&self) -> bool {
        let ok = |w: f64| w.is_finite() && w.abs() <= DIVERGENCE_LIMIT;
        self.input_weights.iter().all(|&w| ok(w)) && ok(self.gate_weight) && ok(self.bias)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{FORMAT_TAG}\n");
        for (i, w) in self.input_weights.iter().enumerate() {
            out.push_str(&format!("w{}={:.16e}\n", i + 1, w));
        }
        out.push_str(&format!("gate={:.16e}\n", self.gate_weight));
        out.push_str(&format!("bias={:.16e}\n", self.bias));
        out.push_str(&format!("gate_enabled={}\n", self.gate_enabled));
        out
    }

    pub fn from_text(text: &str) -> Result<Self, ModelError> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        if lines.next() != Some(FORMAT_TAG) {
            return Err(ModelError::Parse(format!("missing '{FORMAT_TAG}' header")));
        }
        let mut weights = Vec::new();
        let mut gate = None;
        let mut bias = None;
        let mut gate_enabled = None;
        for line in lines {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ModelError::Parse(format!("expected name=value, got '{line}'")))?;
            let real = || {
                value
                    .parse::<f64>()
                    .map_err(|_| ModelError::Parse(format!("bad number for {key}: '{value}'")))
            };
            match key {
                "gate" => gate = Some(real()?),
                "bias" => bias = Some(real()?),
                "gate_enabled" => {
                    gate_enabled = Some(value.parse::<bool>().map_err(|_| {
                        ModelError::Parse(format!("bad boolean for gate_enabled: '{value}'"))
                    })?)
                }
                k if k.starts_with('w') => {
                    let idx: usize = k[1..]
                        .parse()
                        .map_err(|_| ModelError::Parse(format!("bad weight name '{k}'")))?;
                    if idx != weights.len() + 1 {
                        return Err(ModelError::Parse(format!("weight '{k}' out of order")));
                    }
                    weights.push(real()?);
                }
                other => return Err(ModelError::Parse(format!("unknown key '{other}'"))),
            }
        }
        let missing = |name: &str| ModelError::Parse(format!("missing '{name}'"));
        Ok(Self {
            input_weights: weights,
            gate_weight: gate.ok_or_else(|| missing("gate"))?,
            bias: bias.ok_or_else(|| missing("bias"))?,
            gate_enabled: gate_enabled.ok_or_else(|| missing("gate_enabled"))?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn published_xor() -> GatedModel {
        GatedModel {
            input_weights: vec![0.1, -0.2],
            gate_weight: 1.0,
            bias: -0.01,
            gate_enabled: true,
        }
    }

    #[test]
    fn weighted_sum_of_published_xor_weights() {
        let s = published_xor().weighted_sum(&[1.0, 1.0]).unwrap();
        assert!((s - 0.89).abs() < 1e-12);
    }

    #[test]
    fn zero_model_sums_to_zero() {
        let m = GatedModel::zeros(3, true);
        assert_eq!(m.weighted_sum(&[4.0, -2.0, 9.0]).unwrap(), 0.0);
    }

    #[test]
    fn weighted_sum_hand_evaluation() {
        let m = GatedModel {
            input_weights: vec![1.0, 1.0],
            gate_weight: 1.0,
            bias: 0.0,
            gate_enabled: true,
        };
        // 0.5 + 0.5 + 0.25
        let expected = 1.0 * 0.5 + 1.0 * 0.5 + 1.0 * (0.5 * 0.5) + 0.0;
        assert_eq!(m.weighted_sum(&[0.5, 0.5]).unwrap(), expected);
        assert_eq!(expected, 1.25);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let err = published_xor().weighted_sum(&[1.0]).unwrap_err();
        assert_eq!(
            err,
            ModelError::Dimension {
                expected: 2,
                got: 1
            }
        );
    }

    #[test]
    fn gate_off_ignores_gate_weight() {
        let mut m = published_xor();
        m.gate_enabled = false;
        m.gate_weight = 123.0;
        let s = m.weighted_sum(&[1.0, 1.0]).unwrap();
        assert!((s - (0.1 - 0.2 - 0.01)).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_midpoint_and_saturation() {
        assert_eq!(sigmoid(0.0), 0.5);
        let hi = sigmoid(1000.0);
        assert!(hi > 1.0 - 1e-12 && hi <= 1.0);
        let lo = sigmoid(-1000.0);
        assert!((0.0..1e-12).contains(&lo));
        assert!(sigmoid(-745.0).is_finite());
    }

    #[test]
    fn sigmoid_of_published_xor_sum() {
        // 1/(1+e^-0.89) evaluated at high precision: 0.708890...
        let y = published_xor().sigmoid_predict(&[1.0, 1.0]).unwrap();
        assert!((y - 0.708_890_172_566_119_9).abs() < 1e-9, "{y}");
    }

    #[test]
    fn random_init_is_bounded_and_seeded() {
        let a = GatedModel::random(30, true, 7);
        let b = GatedModel::random(30, true, 7);
        assert_eq!(a, b);
        assert!(a.input_weights.iter().all(|w| (-0.5..=0.5).contains(w)));
        assert_eq!(a.bias, 0.0);
        let plain = GatedModel::random(30, false, 7);
        assert_eq!(plain.input_weights, a.input_weights);
        assert_eq!(plain.gate_weight, 0.0);
    }

    #[test]
    fn text_format_round_trips_exactly() {
        let m = GatedModel {
            input_weights: vec![0.1, -1.0 / 3.0, 2.0f64.sqrt()],
            gate_weight: std::f64::consts::PI,
            bias: -1e-300,
            gate_enabled: false,
        };
        let text = m.to_text();
        assert!(text.starts_with("gatedmodel v1\nw1="));
        assert_eq!(GatedModel::from_text(&text).unwrap(), m);
    }

    #[test]
    fn text_format_rejects_garbage() {
        assert!(GatedModel::from_text("nope").is_err());
        assert!(GatedModel::from_text("gatedmodel v1\nw1=x\n").is_err());
        assert!(GatedModel::from_text("gatedmodel v1\nw1=1\nbias=0\n").is_err());
        assert!(
            GatedModel::from_text("gatedmodel v1\nw2=1\ngate=0\nbias=0\ngate_enabled=true")
                .is_err()
        );
    }

    #[test]
    fn sanity_check_catches_divergence() {
        let mut m = GatedModel::zeros(2, true);
        assert!(m.is_sane());
        m.bias = 2e12;
        assert!(!m.is_sane());
        m.bias = f64::NAN;
        assert!(!m.is_sane());
    }
}
