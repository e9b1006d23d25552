//! Two-stage power minimization: RIS phases first, then transmit beams.

pub mod stage1;
pub mod stage2;
pub mod two_stage;

use nalgebra::DVector;

use crate::C64;

pub use stage1::{
    composite_matrices, coordinate_ascent, objective_matrix, stage1_continuous, stage1_discrete, stage1_objective,
    stage1_weights,
};
pub use stage2::{stage2_beamforming, Requirements, Stage2Options};
pub use two_stage::{run_two_stage, run_two_stage_with_channels, TwoStageResult};

/// Beamformers `w[n - 1][k]` with relaxation diagnostics.
#[derive(Debug, Clone)]
pub struct BeamSolution {
    pub w: Vec<Vec<DVector<C64>>>,
    pub power_total_w: f64,
    /// Optimal value of the relaxation.
    pub sdr_power_w: f64,
    /// `lambda_2 / lambda_1` of every relaxed block, `[n - 1][k]`.
    pub sdr_rank_ratios: Vec<Vec<f64>>,
    /// Random draws evaluated during extraction, 0 for the rank-one shortcut.
    pub randomization_trials: usize,
    pub rank_one: bool,
    pub solver_iterations: usize,
}

impl BeamSolution {
    pub fn zeros(n_sub: usize, n_users: usize, n_tx: usize) -> Self {
        Self {
            w: vec![vec![DVector::zeros(n_tx); n_users]; n_sub],
            power_total_w: 0.0,
            sdr_power_w: 0.0,
            sdr_rank_ratios: vec![vec![0.0; n_users]; n_sub],
            randomization_trials: 0,
            rank_one: true,
            solver_iterations: 0,
        }
    }

    /// `(P_extracted - P_sdr) / P_sdr`, 0 when both are zero.
    pub fn sdr_gap(&self) -> f64 {
        if self.sdr_power_w > 0.0 {
            (self.power_total_w - self.sdr_power_w) / self.sdr_power_w
        } else {
            0.0
        }
    }
}
