use super::config::ExperimentSpec;
use super::experiment::{run_experiment, ResultBundle};
use crate::env::default_channel_size;
use crate::error::Result;
use crate::train::Ablation;

/// Payoff sizes of the standard grid.
pub const GRID_SIZES: [usize; 3] = [2, 4, 8];
/// Ablations of the standard grid.
pub const GRID_ABLATIONS: [Ablation; 4] = [
    Ablation::None,
    Ablation::ScrambledC,
    Ablation::SeparateCNet,
    Ablation::NoCTraining,
];

#[derive(Debug, Clone, PartialEq)]
pub struct GridAxes {
    pub sizes: Vec<usize>,
    pub ablations: Vec<Ablation>,
}

impl Default for GridAxes {
    fn default() -> Self {
        Self {
            sizes: GRID_SIZES.to_vec(),
            ablations: GRID_ABLATIONS.to_vec(),
        }
    }
}

#[derive(Debug)]
pub struct GridCell {
    pub size: usize,
    pub ablation: Ablation,
    pub result: Result<ResultBundle>,
}

pub fn cell_name(size: usize, ablation: Ablation) -> String {
    format!("{size}x{size}_{ablation}")
}

/// Splits a cell name back into its size and ablation.
pub fn parse_cell_name(name: &str) -> Option<(usize, Ablation)> {
    let (dims, ablation) = name.split_once('_')?;
    let (a, b) = dims.split_once('x')?;
    let n: usize = a.parse().ok()?;
    (b.parse::<usize>().ok()? == n).then_some(())?;
    Some((n, ablation.parse().ok()?))
}

/// The spec for one grid cell. Cells live under `<output_dir>/<name>/` and
/// share the base seed list.
pub fn cell_spec(base: &ExperimentSpec, size: usize, ablation: Ablation) -> ExperimentSpec {
    let mut spec = base.clone();
    spec.output_dir = base.output_dir.join(&base.name);
    spec.name = cell_name(size, ablation);
    spec.game.n_actions = size;
    spec.game.n_messages = default_channel_size(size);
    spec.learn.ablation = ablation;
    spec
}

/// Runs the Cartesian product of sizes and ablations. A failing cell is
/// reported in place and does not stop the others.
pub fn run_grid(base: &ExperimentSpec, axes: &GridAxes) -> Vec<GridCell> {
    let mut cells = Vec::with_capacity(axes.sizes.len() * axes.ablations.len());
    for &size in &axes.sizes {
        for &ablation in &axes.ablations {
            let spec = cell_spec(base, size, ablation);
            let result = run_experiment(&spec);
            if let Err(e) = &result {
                log::error!("cell {} failed: {e}", spec.name);
            }
            cells.push(GridCell { size, ablation, result });
        }
    }
    cells
}
