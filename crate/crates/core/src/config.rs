//! Task, quality, reward and learning parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the per-cycle inference error is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMetric {
    /// Mean absolute error in the units of the sensed quantity.
    MeanAbsolute,
    /// Fraction of cells whose category differs from the true category.
    Classification,
}

/// Which cells of a cycle enter the error computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorScope {
    /// Only cells that were not sensed (sensed cells carry zero error).
    #[default]
    Unsensed,
    /// Every cell with known ground truth.
    All,
}

/// Static description of a sensing task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub num_cells: usize,
    /// Informational only, e.g. "30min".
    pub cycle_length: String,
    pub error_metric: ErrorMetric,
    /// Grid position `(row, col)` of every cell, in cell units.
    pub cell_coords: Vec<(f64, f64)>,
    pub category_thresholds: Option<Vec<f64>>,
    #[serde(default)]
    pub error_scope: ErrorScope,
}

impl TaskConfig {
    pub fn new(
        num_cells: usize,
        cycle_length: impl Into<String>,
        error_metric: ErrorMetric,
        cell_coords: Vec<(f64, f64)>,
        category_thresholds: Option<Vec<f64>>,
    ) -> Result<Self> {
        let cfg = TaskConfig {
            num_cells,
            cycle_length: cycle_length.into(),
            error_metric,
            cell_coords,
            category_thresholds,
            error_scope: ErrorScope::Unsensed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Mean-absolute-error task whose cells fill a grid row by row.
    pub fn grid(num_cells: usize, grid_cols: usize) -> Result<Self> {
        if grid_cols == 0 {
            return Err(Error::InvalidConfig("grid_cols must be positive".into()));
        }
        let coords = (0..num_cells)
            .map(|i| ((i / grid_cols) as f64, (i % grid_cols) as f64))
            .collect();
        Self::new(num_cells, "1h", ErrorMetric::MeanAbsolute, coords, None)
    }

    pub fn with_scope(mut self, scope: ErrorScope) -> Self {
        self.error_scope = scope;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_cells < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 cells, got {}",
                self.num_cells
            )));
        }
        if self.cell_coords.len() != self.num_cells {
            return Err(Error::InvalidConfig(format!(
                "{} coordinates for {} cells",
                self.cell_coords.len(),
                self.num_cells
            )));
        }
        if self
            .cell_coords
            .iter()
            .any(|(r, c)| !r.is_finite() || !c.is_finite())
        {
            return Err(Error::InvalidConfig("non-finite cell coordinate".into()));
        }
        match (&self.category_thresholds, self.error_metric) {
            (Some(t), _) => {
                if t.is_empty() || t.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidConfig("bad category thresholds".into()));
                }
                if t.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::InvalidConfig(
                        "category thresholds must be strictly ascending".into(),
                    ));
                }
            }
            (None, ErrorMetric::Classification) => {
                return Err(Error::InvalidConfig(
                    "classification metric needs category thresholds".into(),
                ))
            }
            (None, ErrorMetric::MeanAbsolute) => {}
        }
        Ok(())
    }

    /// Minimum number of sensed cells before the stopping rule may fire.
    pub fn min_sensed(&self) -> usize {
        let five_percent = (0.05 * self.num_cells as f64).ceil() as usize;
        five_percent.max(2)
    }

    pub fn thresholds(&self) -> &[f64] {
        self.category_thresholds.as_deref().unwrap_or(&[])
    }
}

/// Air-quality index breakpoints: Good, Moderate, Unhealthy for Sensitive
/// Groups, Unhealthy, Very Unhealthy, Hazardous.
pub const AQI_THRESHOLDS: [f64; 5] = [50.0, 100.0, 150.0, 200.0, 300.0];

/// `(epsilon, p)` quality requirement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualitySpec {
    pub epsilon: f64,
    pub p: f64,
}

impl QualitySpec {
    pub fn new(epsilon: f64, p: f64) -> Result<Self> {
        if epsilon.is_nan() || epsilon < 0.0 {
            return Err(Error::InvalidConfig(format!("epsilon {epsilon} < 0")));
        }
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidConfig(format!("p {p} outside (0, 1]")));
        }
        Ok(QualitySpec { epsilon, p })
    }
}

/// Completion bonus `R` and per-selection cost `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardParams {
    pub bonus: f64,
    pub cost: f64,
}

impl RewardParams {
    pub fn new(bonus: f64, cost: f64) -> Result<Self> {
        if !(bonus > 0.0 && cost > 0.0) || !bonus.is_finite() || !cost.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "reward bonus {bonus} and cost {cost} must be positive"
            )));
        }
        Ok(RewardParams { bonus, cost })
    }

    /// Default: bonus equal to the number of cells, unit cost.
    pub fn for_cells(num_cells: usize) -> Self {
        RewardParams {
            bonus: num_cells as f64,
            cost: 1.0,
        }
    }
}

/// What the random branch of delta-greedy picks from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Explore {
    /// Any selectable action except the current best.
    #[default]
    OtherOnly,
    /// Any selectable action (standard epsilon-greedy).
    Uniform,
}

/// Q-learning hyperparameters shared by the tabular and recurrent learners.
/// For the recurrent learner `alpha` is the optimizer learning rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearningParams {
    pub alpha: f64,
    pub gamma: f64,
    pub delta_start: f64,
    pub delta_end: f64,
    pub delta_decay: f64,
    pub window_k: usize,
    #[serde(default)]
    pub explore: Explore,
}

impl Default for LearningParams {
    fn default() -> Self {
        LearningParams {
            alpha: 1e-3,
            gamma: 0.9,
            delta_start: 1.0,
            delta_end: 0.05,
            delta_decay: 0.9,
            window_k: 3,
            explore: Explore::OtherOnly,
        }
    }
}

impl LearningParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidConfig(format!("alpha {} outside (0, 1]", self.alpha)));
        }
        if !unit(self.gamma) {
            return Err(Error::InvalidConfig(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if !unit(self.delta_start) || !unit(self.delta_end) || self.delta_end > self.delta_start {
            return Err(Error::InvalidConfig(
                "need 0 <= delta_end <= delta_start <= 1".into(),
            ));
        }
        if !(self.delta_decay > 0.0 && self.delta_decay <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "delta_decay {} outside (0, 1]",
                self.delta_decay
            )));
        }
        if self.window_k == 0 {
            return Err(Error::InvalidConfig("window_k must be positive".into()));
        }
        Ok(())
    }

    /// Exploration probability after `episodes` completed episodes.
    pub fn delta_after(&self, episodes: usize) -> f64 {
        let decayed = self.delta_start * self.delta_decay.powi(episodes.min(i32::MAX as usize) as i32);
        decayed.max(self.delta_end)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn task_config_invariants() {
        assert!(TaskConfig::grid(1, 1).is_err());
        assert!(TaskConfig::new(2, "1h", ErrorMetric::MeanAbsolute, vec![(0.0, 0.0)], None).is_err());
        let coords = vec![(0.0, 0.0), (0.0, 1.0)];
        assert!(TaskConfig::new(
            2,
            "1h",
            ErrorMetric::Classification,
            coords.clone(),
            Some(vec![50.0, 50.0])
        )
        .is_err());
        assert!(TaskConfig::new(2, "1h", ErrorMetric::Classification, coords.clone(), None).is_err());
        let ok = TaskConfig::new(2, "1h", ErrorMetric::Classification, coords, Some(AQI_THRESHOLDS.to_vec()));
        assert!(ok.is_ok());
    }

    #[test]
    fn min_sensed_rule() {
        assert_eq!(TaskConfig::grid(4, 2).unwrap().min_sensed(), 2);
        assert_eq!(TaskConfig::grid(36, 6).unwrap().min_sensed(), 2);
        assert_eq!(TaskConfig::grid(57, 10).unwrap().min_sensed(), 3);
        assert_eq!(TaskConfig::grid(100, 10).unwrap().min_sensed(), 5);
    }

    #[test]
    fn quality_and_reward_ranges() {
        assert!(QualitySpec::new(-0.1, 0.9).is_err());
        assert!(QualitySpec::new(0.3, 0.0).is_err());
        assert!(QualitySpec::new(f64::INFINITY, 1.0).is_ok());
        assert!(RewardParams::new(0.0, 1.0).is_err());
        assert_eq!(RewardParams::for_cells(36), RewardParams { bonus: 36.0, cost: 1.0 });
    }

    #[test]
    fn delta_schedule() {
        let lp = LearningParams {
            delta_start: 0.8,
            delta_end: 0.1,
            delta_decay: 0.5,
            ..Default::default()
        };
        assert_eq!(lp.delta_after(0), 0.8);
        assert_eq!(lp.delta_after(1), 0.4);
        assert_eq!(lp.delta_after(2), 0.2);
        assert_eq!(lp.delta_after(3), 0.1);
        assert_eq!(lp.delta_after(50), 0.1);
        assert!(lp.validate().is_ok());
        assert!(LearningParams { delta_end: 0.9, ..lp }.validate().is_err());
    }
}
