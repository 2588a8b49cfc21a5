//! Decision-region geometry for two-input gated perceptrons.
//!
//! The zero set of `w1·x1 + w2·x2 + w3·x1·x2 + b` is a rectangular
//! hyperbola with asymptotes `x1 = -w2/w3` and `x2 = -w1/w3`, or a line
//! when `w3 = 0`. [`boundary_curve`] samples it; [`rasterize_signs`]
//! labels a grid by the sign tuple of k models and counts the connected
//! regions.

use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde_json::json;
use thiserror::Error;

use crate::model::GatedModel;

/// Sign tuples are packed into one `u64` per cell.
pub const MAX_MODELS: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum RegionError {
    #[error("invalid window: {0}")]
    Window(String),
    #[error("degenerate boundary: w1, w2 and the gate weight are all zero")]
    Degenerate,
    #[error("model {index} has {inputs} inputs; region geometry needs 2")]
    NotTwoInputs { index: usize, inputs: usize },
    #[error("need between 1 and {MAX_MODELS} models, got {0}")]
    ModelCount(usize),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown fixture '{0}'")]
    UnknownFixture(String),
}

/// Rectangular viewport sampled at `resolution × resolution` cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub resolution: usize,
}

impl Window {
    pub fn new(
        x_min: f64,
        x_max: f64,
        y_min: f64,
        y_max: f64,
        resolution: usize,
    ) -> Result<Self, RegionError> {
        let w = Self {
            x_min,
            x_max,
            y_min,
            y_max,
            resolution,
        };
        if ![x_min, x_max, y_min, y_max].iter().all(|v| v.is_finite()) {
            return Err(RegionError::Window("bounds must be finite".into()));
        }
        if x_min >= x_max || y_min >= y_max {
            return Err(RegionError::Window(format!(
                "need x_min < x_max and y_min < y_max, got {x_min},{x_max},{y_min},{y_max}"
            )));
        }
        if resolution < 2 {
            return Err(RegionError::Window(format!(
                "resolution must be at least 2, got {resolution}"
            )));
        }
        Ok(w)
    }

    pub fn unit(resolution: usize) -> Result<Self, RegionError> {
        Self::new(0.0, 1.0, 0.0, 1.0, resolution)
    }

    pub fn with_resolution(self, resolution: usize) -> Result<Self, RegionError> {
        Self::new(self.x_min, self.x_max, self.y_min, self.y_max, resolution)
    }

    /// Parses `x0,x1,y0,y1`.
    pub fn parse_bounds(s: &str, resolution: usize) -> Result<Self, RegionError> {
        let v: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| RegionError::Window(format!("expected x0,x1,y0,y1, got '{s}'")))?;
        match v.as_slice() {
            &[x0, x1, y0, y1] => Self::new(x0, x1, y0, y1, resolution),
            _ => Err(RegionError::Window(format!(
                "expected 4 numbers, got '{s}'"
            ))),
        }
    }

    fn cell_center(&self, col: usize, row: usize) -> (f64, f64) {
        let r = self.resolution as f64;
        (
            self.x_min + (col as f64 + 0.5) * (self.x_max - self.x_min) / r,
            self.y_min + (row as f64 + 0.5) * (self.y_max - self.y_min) / r,
        )
    }
}

/// Zero-set of one model, split at the vertical asymptote.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPolyline {
    pub branches: Vec<Vec<(f64, f64)>>,
    pub asymptote_x: Option<f64>,
    pub asymptote_y: Option<f64>,
}

impl BoundaryPolyline {
    /// `branch_id,x1,x2` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("branch_id,x1,x2\n");
        for (b, branch) in self.branches.iter().enumerate() {
            for (x1, x2) in branch {
                let _ = writeln!(out, "{b},{x1},{x2}");
            }
        }
        out
    }
}

fn two_input_weights(model: &GatedModel) -> Option<(f64, f64, f64, f64)> {
    match model.input_weights.as_slice() {
        &[w1, w2] => Some((
            w1,
            w2,
            if model.gate_enabled {
                model.gate_weight
            } else {
                0.0
            },
            model.bias,
        )),
        _ => None,
    }
}

/// Samples `x2 = -(w1·x1 + b)/(w3·x1 + w2)` at `samples` evenly spaced
/// `x1` values across the window.
///
/// Points closer than `window width / samples` to the vertical asymptote
/// are skipped. A model with `w2 = w3 = 0` has a vertical boundary line,
/// which is sampled along `x2` instead.
pub fn boundary_curve(
    model: &GatedModel,
    window: &Window,
    samples: usize,
) -> Result<BoundaryPolyline, RegionError> {
    let (w1, w2, w3, b) = two_input_weights(model).ok_or(RegionError::NotTwoInputs {
        index: 0,
        inputs: model.n_inputs(),
    })?;
    if w1 == 0.0 && w2 == 0.0 && w3 == 0.0 {
        return Err(RegionError::Degenerate);
    }
    if samples == 0 {
        return Err(RegionError::Window("samples must be positive".into()));
    }
    let spaced = |lo: f64, hi: f64, i: usize| {
        if samples == 1 {
            (lo + hi) / 2.0
        } else {
            lo + (hi - lo) * i as f64 / (samples - 1) as f64
        }
    };

    if w2 == 0.0 && w3 == 0.0 {
        let x1 = -b / w1;
        let branch = (0..samples)
            .map(|i| (x1, spaced(window.y_min, window.y_max, i)))
            .collect();
        return Ok(BoundaryPolyline {
            branches: vec![branch],
            asymptote_x: None,
            asymptote_y: None,
        });
    }

    let (asymptote_x, asymptote_y) = if w3 != 0.0 {
        (Some(-w2 / w3), Some(-w1 / w3))
    } else {
        (None, None)
    };
    let radius = (window.x_max - window.x_min) / samples as f64;
    let mut left = Vec::new();
    let mut right = Vec::new();
    for i in 0..samples {
        let x1 = spaced(window.x_min, window.x_max, i);
        if let Some(ax) = asymptote_x {
            if (x1 - ax).abs() < radius {
                continue;
            }
        }
        let denom = w3 * x1 + w2;
        if denom == 0.0 {
            continue;
        }
        let x2 = -(w1 * x1 + b) / denom;
        match asymptote_x {
            Some(ax) if x1 > ax => right.push((x1, x2)),
            _ => left.push((x1, x2)),
        }
    }
    let branches = [left, right]
        .into_iter()
        .filter(|b| !b.is_empty())
        .collect();
    Ok(BoundaryPolyline {
        branches,
        asymptote_x,
        asymptote_y,
    })
}

/// Grid of connected sign regions.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionRaster {
    pub resolution: usize,
    /// Row-major; row 0 is the bottom edge (`y_min`).
    pub cell_labels: Vec<u32>,
    /// Region id → sign of each model's sum (`true` for `>= 0`).
    pub sign_vectors: Vec<Vec<bool>>,
    pub region_count: usize,
}

impl RegionRaster {
    pub fn label_at(&self, col: usize, row: usize) -> u32 {
        self.cell_labels[row * self.resolution + col]
    }

    /// Plain PGM (P2), top row first, gray level = region id.
    pub fn to_pgm(&self) -> String {
        let n = self.resolution;
        let maxval = self.region_count.saturating_sub(1).clamp(1, 65535);
        let mut out = format!("P2\n{n} {n}\n{maxval}\n");
        for row in (0..n).rev() {
            let line: Vec<String> = (0..n)
                .map(|col| (self.label_at(col, row) as usize % (maxval + 1)).to_string())
                .collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    /// JSON sidecar mapping region id to its sign vector.
    pub fn signs_json(&self) -> serde_json::Value {
        let regions: Vec<_> = self
            .sign_vectors
            .iter()
            .enumerate()
            .map(|(id, signs)| {
                let s: Vec<&str> = signs.iter().map(|&p| if p { "+" } else { "-" }).collect();
                json!({ "id": id, "signs": s })
            })
            .collect();
        json!({ "region_count": self.region_count, "regions": regions })
    }
}

fn check_models(models: &[GatedModel]) -> Result<Vec<(f64, f64, f64, f64)>, RegionError> {
    if models.is_empty() || models.len() > MAX_MODELS {
        return Err(RegionError::ModelCount(models.len()));
    }
    models
        .iter()
        .enumerate()
        .map(|(index, m)| {
            two_input_weights(m).ok_or(RegionError::NotTwoInputs {
                index,
                inputs: m.n_inputs(),
            })
        })
        .collect()
}

/// Labels every cell centre by the sign tuple of all models (zero counts
/// as positive) and merges 4-adjacent cells with equal tuples.
pub fn rasterize_signs(
    models: &[GatedModel],
    window: &Window,
) -> Result<RegionRaster, RegionError> {
    let weights = check_models(models)?;
    let n = window.resolution;

    let mut codes = vec![0u64; n * n];
    codes
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(row, cells)| {
            for (col, code) in cells.iter_mut().enumerate() {
                let (x1, x2) = window.cell_center(col, row);
                *code = weights
                    .iter()
                    .enumerate()
                    .filter(|(_, (w1, w2, w3, b))| w1 * x1 + w2 * x2 + w3 * x1 * x2 + b >= 0.0)
                    .fold(0u64, |acc, (k, _)| acc | (1 << k));
            }
        });

    const UNSET: u32 = u32::MAX;
    let mut labels = vec![UNSET; n * n];
    let mut sign_vectors = Vec::new();
    let mut stack = Vec::new();
    for start in 0..n * n {
        if labels[start] != UNSET {
            continue;
        }
        let id = sign_vectors.len() as u32;
        let code = codes[start];
        sign_vectors.push((0..models.len()).map(|k| code & (1 << k) != 0).collect());
        labels[start] = id;
        stack.push(start);
        while let Some(cell) = stack.pop() {
            let (row, col) = (cell / n, cell % n);
            let mut visit = |next: usize| {
                if labels[next] == UNSET && codes[next] == code {
                    labels[next] = id;
                    stack.push(next);
                }
            };
            if col > 0 {
                visit(cell - 1);
            }
            if col + 1 < n {
                visit(cell + 1);
            }
            if row > 0 {
                visit(cell - n);
            }
            if row + 1 < n {
                visit(cell + n);
            }
        }
    }
    Ok(RegionRaster {
        resolution: n,
        cell_labels: labels,
        region_count: sign_vectors.len(),
        sign_vectors,
    })
}

pub fn count_regions(
    models: &[GatedModel],
    window: &Window,
    resolution: usize,
) -> Result<usize, RegionError> {
    let window = window.with_resolution(resolution)?;
    Ok(rasterize_signs(models, &window)?.region_count)
}

/// A set of two-input models with an optional viewport, as stored in the
/// region fixture files.
///
/// Format: `#` comments, an optional `window=x0,x1,y0,y1` line, then one
/// `gated|plain,w1,w2,gate,bias` line per model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSet {
    pub models: Vec<GatedModel>,
    pub bounds: Option<(f64, f64, f64, f64)>,
}

impl FromStr for ModelSet {
    type Err = RegionError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut models = Vec::new();
        let mut bounds = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let err = |message: String| RegionError::Parse {
                line: i + 1,
                message,
            };
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("window=") {
                let w = Window::parse_bounds(rest, 2).map_err(|e| err(e.to_string()))?;
                bounds = Some((w.x_min, w.x_max, w.y_min, w.y_max));
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let [kind, rest @ ..] = fields.as_slice() else {
                unreachable!("split yields at least one field")
            };
            let gate_enabled = match *kind {
                "gated" => true,
                "plain" => false,
                other => return Err(err(format!("expected 'gated' or 'plain', got '{other}'"))),
            };
            let nums: Vec<f64> = rest
                .iter()
                .map(|v| v.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| err(format!("bad number in '{line}'")))?;
            let &[w1, w2, gate, bias] = nums.as_slice() else {
                return Err(err(format!("expected 4 numbers, got {}", nums.len())));
            };
            models.push(GatedModel {
                input_weights: vec![w1, w2],
                gate_weight: if gate_enabled { gate } else { 0.0 },
                bias,
                gate_enabled,
            });
        }
        if models.is_empty() {
            return Err(RegionError::ModelCount(0));
        }
        Ok(Self { models, bounds })
    }
}

impl ModelSet {
    pub fn window(&self, resolution: usize) -> Result<Window, RegionError> {
        let (x0, x1, y0, y1) = self.bounds.unwrap_or((0.0, 1.0, 0.0, 1.0));
        Window::new(x0, x1, y0, y1, resolution)
    }
}

/// Names of the committed region fixtures.
pub const FIXTURES: [&str; 5] = ["gated-1", "gated-2", "gated-3", "plain-2", "plain-3"];

pub fn fixture(name: &str) -> Result<ModelSet, RegionError> {
    let text = match name {
        "gated-1" => include_str!("../fixtures/regions/gated-1.txt"),
        "gated-2" => include_str!("../fixtures/regions/gated-2.txt"),
        "gated-3" => include_str!("../fixtures/regions/gated-3.txt"),
        "plain-2" => include_str!("../fixtures/regions/plain-2.txt"),
        "plain-3" => include_str!("../fixtures/regions/plain-3.txt"),
        other => return Err(RegionError::UnknownFixture(other.to_string())),
    };
    text.parse()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gated(w1: f64, w2: f64, w3: f64, b: f64) -> GatedModel {
        GatedModel {
            input_weights: vec![w1, w2],
            gate_weight: w3,
            bias: b,
            gate_enabled: true,
        }
    }

    fn plain(w1: f64, w2: f64, b: f64) -> GatedModel {
        GatedModel {
            input_weights: vec![w1, w2],
            gate_weight: 0.0,
            bias: b,
            gate_enabled: false,
        }
    }

    #[test]
    fn window_validation() {
        assert!(Window::new(1.0, 0.0, 0.0, 1.0, 10).is_err());
        assert!(Window::new(0.0, 1.0, 0.0, 1.0, 1).is_err());
        assert!(Window::parse_bounds("0,1,0", 10).is_err());
        let w = Window::parse_bounds("-1, 1, -2, 2", 10).unwrap();
        assert_eq!((w.x_min, w.y_max), (-1.0, 2.0));
    }

    #[test]
    fn published_xor_asymptotes() {
        let w = Window::new(-1.0, 1.0, -1.0, 1.0, 10).unwrap();
        let c = boundary_curve(&gated(0.1, -0.2, 1.0, -0.01), &w, 200).unwrap();
        assert!((c.asymptote_x.unwrap() - 0.2).abs() < 1e-15);
        assert!((c.asymptote_y.unwrap() + 0.1).abs() < 1e-15);
        assert_eq!(c.branches.len(), 2);
        let radius = 2.0 / 200.0;
        for (x1, x2) in c.branches.iter().flatten() {
            assert!((x1 - 0.2).abs() >= radius);
            // every sampled point is on the zero set
            assert!((0.1 * x1 - 0.2 * x2 + x1 * x2 - 0.01).abs() < 1e-9);
        }
    }

    #[test]
    fn gate_off_boundary_is_a_line() {
        let w = Window::unit(10).unwrap();
        let c = boundary_curve(&gated(1.0, 1.0, 0.0, 0.0), &w, 11).unwrap();
        assert_eq!(c.branches.len(), 1);
        assert_eq!(c.asymptote_x, None);
        for (x1, x2) in &c.branches[0] {
            assert_eq!(*x2, -x1);
        }
    }

    #[test]
    fn cancelling_hyperbola_is_flat() {
        let w = Window::new(-1.0, 1.0, -2.0, 2.0, 10).unwrap();
        let c = boundary_curve(&gated(1.0, 0.0, 1.0, 0.0), &w, 101).unwrap();
        assert_eq!(c.asymptote_x, Some(0.0));
        assert!(c
            .branches
            .iter()
            .flatten()
            .all(|(_, x2)| (x2 + 1.0).abs() < 1e-12));
    }

    #[test]
    fn vertical_line_and_degenerate_cases() {
        let w = Window::unit(10).unwrap();
        let c = boundary_curve(&plain(2.0, 0.0, -1.0), &w, 5).unwrap();
        assert!(c.branches[0].iter().all(|(x1, _)| *x1 == 0.5));
        assert_eq!(
            boundary_curve(&gated(0.0, 0.0, 0.0, 1.0), &w, 5),
            Err(RegionError::Degenerate)
        );
        let csv = c.to_csv();
        assert!(csv.starts_with("branch_id,x1,x2\n0,0.5,0\n"));
    }

    #[test]
    fn half_planes_and_hyperbola() {
        let w = Window::unit(200).unwrap();
        assert_eq!(
            rasterize_signs(&[plain(1.0, 1.0, -0.9)], &w)
                .unwrap()
                .region_count,
            2
        );
        // (x1-0.4)(x2-0.6) = 0.02
        let h = gated(-0.6, -0.4, 1.0, 0.24 - 0.02);
        let r = rasterize_signs(&[h], &w).unwrap();
        assert_eq!(r.region_count, 3);
        assert_eq!(r.sign_vectors.len(), 3);
    }

    #[test]
    fn every_cell_is_labelled() {
        let w = Window::unit(50).unwrap();
        let r = rasterize_signs(&fixture("gated-2").unwrap().models, &w).unwrap();
        assert!(r.cell_labels.iter().all(|&l| (l as usize) < r.region_count));
    }

    #[test]
    fn zero_sum_counts_as_positive() {
        let w = Window::new(-1.0, 1.0, -1.0, 1.0, 2).unwrap();
        let r = rasterize_signs(&[plain(0.0, 0.0, 0.0)], &w).unwrap();
        assert_eq!(r.region_count, 1);
        assert_eq!(r.sign_vectors, vec![vec![true]]);
    }

    #[test]
    fn rejects_bad_model_sets() {
        let w = Window::unit(4).unwrap();
        assert_eq!(rasterize_signs(&[], &w), Err(RegionError::ModelCount(0)));
        let three = GatedModel::zeros(3, true);
        assert!(matches!(
            rasterize_signs(&[three], &w),
            Err(RegionError::NotTwoInputs {
                index: 0,
                inputs: 3
            })
        ));
    }

    #[test]
    fn pgm_and_json_exports() {
        let w = Window::unit(4).unwrap();
        let r = rasterize_signs(&[plain(1.0, 0.0, -0.5)], &w).unwrap();
        let pgm = r.to_pgm();
        let mut lines = pgm.lines();
        assert_eq!(lines.next(), Some("P2"));
        assert_eq!(lines.next(), Some("4 4"));
        assert_eq!(lines.next(), Some("1"));
        assert_eq!(lines.next(), Some("0 0 1 1"));
        let j = r.signs_json();
        assert_eq!(j["region_count"], 2);
        assert_eq!(j["regions"][0]["signs"][0], "-");
    }

    #[test]
    fn model_set_parsing() {
        let s: ModelSet = "# c\nwindow=-1,1,-1,1\ngated,1,2,3,4\nplain,1,2,9,4\n"
            .parse()
            .unwrap();
        assert_eq!(s.models.len(), 2);
        assert_eq!(s.models[1].gate_weight, 0.0);
        assert_eq!(s.window(10).unwrap().x_min, -1.0);
        assert!("gated,1,2\n".parse::<ModelSet>().is_err());
        assert!("other,1,2,3,4\n".parse::<ModelSet>().is_err());
        assert!("# nothing\n".parse::<ModelSet>().is_err());
        assert!(matches!(
            fixture("nope"),
            Err(RegionError::UnknownFixture(_))
        ));
        for name in FIXTURES {
            fixture(name).unwrap();
        }
    }
}
