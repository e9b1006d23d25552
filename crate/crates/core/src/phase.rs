use std::f64::consts::PI;

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::PhaseMode;
use crate::error::{CoreError, Result};
use crate::C64;

/// RIS reflection vector `v` with `|v_m| = 1/sqrt(M)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseProfile {
    pub v: DVector<C64>,
    pub mode: PhaseMode,
    /// Chosen level indices in discrete mode.
    pub levels: Option<Vec<usize>>,
    /// `(start, len)` of each sub-array; one entry when unpartitioned.
    pub partition: Vec<(usize, usize)>,
    /// Stage I objective achieved by `v`.
    pub objective: Option<f64>,
    /// Relaxation upper bound from the continuous Stage I.
    pub sdr_bound: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub objective: Option<f64>,
    pub sdr_bound: Option<f64>,
}

impl PhaseProfile {
    /// `v_m = exp(j phases[m]) / sqrt(M)`.
    pub fn from_phases(phases: &[f64], mode: PhaseMode, partition: Vec<(usize, usize)>) -> Self {
        let s = 1.0 / (phases.len() as f64).sqrt();
        Self {
            v: DVector::from_iterator(phases.len(), phases.iter().map(|&p| C64::from_polar(s, p))),
            mode,
            levels: None,
            partition,
            objective: None,
            sdr_bound: None,
        }
    }

    /// Discrete profile with phase `2 pi l_m / L` per element.
    pub fn from_levels(levels: &[usize], n_levels: usize, q_bits: u32, partition: Vec<(usize, usize)>) -> Self {
        let phases: Vec<f64> = levels.iter().map(|&l| 2.0 * PI * l as f64 / n_levels as f64).collect();
        let mut p = Self::from_phases(&phases, PhaseMode::Discrete { q_bits }, partition);
        p.levels = Some(levels.to_vec());
        p
    }

    pub fn identity(m: usize, partition: Vec<(usize, usize)>) -> Self {
        Self::from_phases(&vec![0.0; m], PhaseMode::Identity, partition)
    }

    /// Independent uniform phases on `[0, 2 pi)`.
    pub fn random<R: Rng + ?Sized>(m: usize, rng: &mut R, partition: Vec<(usize, usize)>) -> Self {
        let phases: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * 2.0 * PI).collect();
        Self::from_phases(&phases, PhaseMode::Random, partition)
    }

    /// Projects every entry of `x` to magnitude `1/sqrt(M)`; zero entries get phase 0.
    pub fn project(x: &DVector<C64>, mode: PhaseMode, partition: Vec<(usize, usize)>) -> Self {
        let phases: Vec<f64> = x.iter().map(|z| if z.norm() > 0.0 { z.arg() } else { 0.0 }).collect();
        Self::from_phases(&phases, mode, partition)
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn segment(&self, j: usize) -> DVector<C64> {
        let (s, l) = self.partition[j];
        self.v.rows(s, l).into_owned()
    }

    /// Checks the modulus and, in discrete mode, the level grid.
    pub fn check_invariants(&self) -> Result<()> {
        let m = self.v.len();
        if m == 0 {
            return Err(CoreError::InvalidArgument("empty phase profile".into()));
        }
        let target = 1.0 / (m as f64).sqrt();
        for (i, z) in self.v.iter().enumerate() {
            if (z.norm() - target).abs() > 1e-12 {
                return Err(CoreError::InvalidArgument(format!(
                    "element {i} has modulus {} instead of {target}",
                    z.norm()
                )));
            }
        }
        if let PhaseMode::Discrete { q_bits } = self.mode {
            let l = 1usize << q_bits;
            let step = 2.0 * PI / l as f64;
            for (i, z) in self.v.iter().enumerate() {
                let a = z.arg().rem_euclid(2.0 * PI) / step;
                let off = (a - a.round()).abs() * step;
                if off > 1e-9 {
                    return Err(CoreError::InvalidArgument(format!(
                        "element {i} is off the {l}-level grid by {off}"
                    )));
                }
            }
        }
        Ok(())
    }
}
