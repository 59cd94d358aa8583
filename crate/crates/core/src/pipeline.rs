//! Grid -> SMOTE -> split -> tree, with test-set metrics attached.

use serde::{Deserialize, Serialize};

use crate::data::{generate_grid, smote_balance, train_test_split, Dataset};
use crate::error::PipelineError;
use crate::plant::Experiment;
use crate::tree::{fit_tree, GrowthModel, DEFAULT_MIN_SAMPLES_LEAF};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecipe {
    pub experiment: Experiment,
    /// Grid replicates fed to SMOTE. With more than one copy of each point
    /// the nearest neighbours are the copies themselves and interpolation
    /// produces nothing new, so the default is 1.
    pub replicates: usize,
    pub n_bins: usize,
    pub k: usize,
    pub test_fraction: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub seed: u64,
}

impl TrainingRecipe {
    /// Depth 7 for experiment 1, depth 5 for experiment 2.
    pub fn for_experiment(experiment: Experiment, seed: u64) -> Self {
        TrainingRecipe {
            experiment,
            replicates: 1,
            n_bins: 10,
            k: 5,
            test_fraction: 0.2,
            max_depth: match experiment {
                Experiment::Exp1 => 7,
                Experiment::Exp2 => 5,
            },
            min_samples_leaf: DEFAULT_MIN_SAMPLES_LEAF,
            seed,
        }
    }

    pub fn balanced_data(&self) -> Result<Dataset, PipelineError> {
        let grid = generate_grid(self.experiment, self.replicates)?;
        Ok(smote_balance(&grid, self.n_bins, self.k, self.seed)?)
    }

    /// Train on the balanced split and record test metrics on the model.
    pub fn train(&self) -> Result<GrowthModel, PipelineError> {
        let balanced = self.balanced_data()?;
        let (train, test) =
            train_test_split(&balanced, self.test_fraction, self.seed.wrapping_add(1))?;
        let mut model = fit_tree(&train, self.max_depth, self.min_samples_leaf)?;
        model.metrics = Some(model.evaluate(&test)?);
        Ok(model)
    }
}
