use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::beamform::stage1::{partition_of, stage1_continuous, stage1_discrete, stage1_weights};
use crate::beamform::stage2::{stage2_beamforming, Requirements, Stage2Options};
use crate::beamform::BeamSolution;
use crate::channel::{assemble_channels, ChannelSet};
use crate::config::{PhaseMode, SystemConfig};
use crate::error::Result;
use crate::metrics::report::{evaluate, MetricsReport};
use crate::phase::PhaseProfile;

#[derive(Debug, Clone)]
pub struct TwoStageResult {
    pub channels: ChannelSet,
    pub phase: PhaseProfile,
    pub beams: BeamSolution,
    pub report: MetricsReport,
}

/// Independent stream seed for stage `tag` of a run seeded with `seed`.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stage I dispatch on the configured phase mode.
pub fn design_phases(ch: &ChannelSet, cfg: &SystemConfig) -> Result<PhaseProfile> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 1));
    let betas: Vec<f64> = (0..cfg.n_users()).map(|k| cfg.beta(k)).collect();
    let weights = stage1_weights(&betas);
    let partition = partition_of(ch);
    Ok(match cfg.phase_mode {
        PhaseMode::Discrete { q_bits } => {
            stage1_discrete(
                ch,
                &weights,
                q_bits,
                cfg.solver.stage1_starts,
                cfg.solver.stage1_max_sweeps,
                &mut rng,
            )?
            .profile
        }
        PhaseMode::Continuous => {
            stage1_continuous(
                ch,
                &weights,
                cfg.solver.randomization_trials,
                cfg.solver.tol,
                cfg.solver.max_iter,
                &mut rng,
            )?
            .profile
        }
        PhaseMode::Random => PhaseProfile::random(ch.n_ris, &mut rng, partition),
        PhaseMode::Identity => PhaseProfile::identity(ch.n_ris, partition),
    })
}

/// Stage I, Stage II and a full metric evaluation on prebuilt channels.
pub fn run_two_stage_with_channels(
    cfg: &SystemConfig,
    ch: &ChannelSet,
) -> Result<(PhaseProfile, BeamSolution, MetricsReport)> {
    let phase = design_phases(ch, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 2));
    let beams = stage2_beamforming(
        ch,
        &phase,
        &Requirements::from_config(cfg),
        &Stage2Options::from_config(cfg),
        &mut rng,
    )?;
    let report = evaluate(ch, &phase, &beams.w, cfg)?;
    Ok((phase, beams, report))
}

/// Runs the whole algorithm for one configuration; deterministic in the seed.
pub fn run_two_stage(cfg: &SystemConfig) -> Result<TwoStageResult> {
    let channels = assemble_channels(cfg)?;
    let (phase, beams, report) = run_two_stage_with_channels(cfg, &channels)?;
    Ok(TwoStageResult {
        channels,
        phase,
        beams,
        report,
    })
}
