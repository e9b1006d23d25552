use std::path::Path;

use anyhow::{bail, Context, Result};
use ipac_core::beamform::run_two_stage;
use ipac_core::metrics::selfcheck::fim_check;
use ipac_core::scenario::{build_scenario, default_file_name, emit, run_sweep, SweepSpec, SweptParam, TableFormat};
use ipac_core::{CoreError, PhaseMode, SystemConfig};
use ipac_sdp::{BlockValue, SdpProblem, SolveStatus};
use serde_json::json;

use crate::{
    Command, ConfigArgs, FimCheckArgs, Format, Param, PresetArgs, RunArgs, SolveSdpArgs, SweepArgs, ValidateArgs,
};

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_INFEASIBLE: u8 = 2;
pub const EXIT_SELF_CHECK: u8 = 3;

/// Largest FIM mismatch accepted by `fim-check`.
const FIM_TOL: f64 = 1e-4;

pub fn dispatch(cmd: Command) -> u8 {
    let result = match cmd {
        Command::Run(a) => run(&a),
        Command::Sweep(a) => sweep(&a),
        Command::Validate(a) => validate(&a),
        Command::FimCheck(a) => fim(&a),
        Command::SolveSdp(a) => solve_sdp(&a),
        Command::Preset(a) => preset(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    }
}

fn load_config(args: &ConfigArgs) -> Result<SystemConfig> {
    let Some(path) = &args.config else {
        bail!("--config is required");
    };
    load_or_default(args, path)
}

fn load_or_default(args: &ConfigArgs, path: &Path) -> Result<SystemConfig> {
    let mut cfg = SystemConfig::load(path, &args.overrides).with_context(|| format!("loading {}", path.display()))?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn fmt_opt(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.4}")
    } else {
        "inf".into()
    }
}

fn run(args: &RunArgs) -> Result<u8> {
    let cfg = load_config(&args.cfg)?;
    match run_two_stage(&cfg) {
        Ok(res) => {
            let r = &res.report;
            println!(
                "total power {:.3} dBm ({:.4e} W), SDR bound {:.4e} W",
                r.power_total_dbm, r.power_total_w, res.beams.sdr_power_w
            );
            println!("ue  rate[bps/Hz]  margin    peb[m]    margin");
            for (k, u) in r.per_ue.iter().enumerate() {
                println!(
                    "{:<3} {:<13.4} {:<9.4} {:<9} {}",
                    k + 1,
                    u.rate_bpshz,
                    u.rate_margin,
                    fmt_opt(u.peb_m),
                    fmt_opt(u.peb_margin_m)
                );
            }
            write_text(&args.out, &serde_json::to_string_pretty(r)?)?;
            Ok(EXIT_OK)
        }
        Err(
            e @ (CoreError::Infeasible { .. }
            | CoreError::SingularInformation { .. }
            | CoreError::NoFeasibleCandidate { .. }),
        ) => {
            eprintln!("infeasible: {e}");
            let binding = match &e {
                CoreError::Infeasible { binding } => binding.clone(),
                _ => Vec::new(),
            };
            let body = json!({ "status": e.status(), "message": e.to_string(), "binding": binding });
            write_text(&args.out, &serde_json::to_string_pretty(&body)?)?;
            Ok(EXIT_INFEASIBLE)
        }
        Err(e) => Err(e.into()),
    }
}

fn sweep(args: &SweepArgs) -> Result<u8> {
    let mut base = match &args.cfg.config {
        Some(path) => load_or_default(&args.cfg, path)?,
        None => {
            let mut cfg = build_scenario(args.scenario, !args.full_scale)?;
            for o in &args.cfg.overrides {
                cfg = cfg.with_override(o)?;
            }
            cfg
        }
    };
    if let Some(seed) = args.cfg.seed {
        base.seed = seed;
    }
    let swept_param = match args.param {
        Param::Rate => SweptParam::RateReq,
        Param::Peb => SweptParam::PebThreshold,
    };
    let fixed_other = match (args.fixed, swept_param) {
        (Some(v), _) => Some(v),
        (None, SweptParam::RateReq) => base.peb_threshold_m.first().copied().flatten(),
        (None, SweptParam::PebThreshold) => base.rate_req_bpshz.first().copied(),
    };
    let phase_modes = args
        .modes
        .iter()
        .map(|m| PhaseMode::parse(m).with_context(|| format!("unknown phase mode `{m}`")))
        .collect::<Result<Vec<_>>>()?;
    let seeds = if args.seeds.is_empty() {
        vec![base.seed]
    } else {
        args.seeds.clone()
    };
    let spec = SweepSpec {
        scenario_id: args.scenario,
        swept_param,
        values: args.values.clone(),
        fixed_other,
        phase_modes,
        seeds,
    };
    let format = match args.format {
        Format::Csv => TableFormat::Csv,
        Format::Json => TableFormat::Json,
    };
    let jobs = args
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    let rows = run_sweep(&spec, &base, jobs, args.timing)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| default_file_name(&spec, format).into());
    emit(&rows, base.n_users(), format, &out)?;
    let failed = rows.iter().filter(|r| r.solver_status != "optimal").count();
    println!(
        "{} points written to {} ({failed} without a solution)",
        rows.len(),
        out.display()
    );
    Ok(EXIT_OK)
}

fn validate(args: &ValidateArgs) -> Result<u8> {
    let Some(path) = &args.cfg.config else {
        bail!("--config is required");
    };
    match SystemConfig::load(path, &args.cfg.overrides) {
        Ok(mut cfg) => {
            if let Some(seed) = args.cfg.seed {
                cfg.seed = seed;
            }
            let text = cfg.to_json_pretty();
            match &args.out {
                Some(out) => write_text(out, &text)?,
                None => println!("{text}"),
            }
            eprintln!("{}: ok", path.display());
            Ok(EXIT_OK)
        }
        Err(CoreError::InvalidConfig(issues)) => {
            for i in issues {
                eprintln!("{}: {i}", path.display());
            }
            Ok(EXIT_ERROR)
        }
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            Ok(EXIT_ERROR)
        }
    }
}

fn fim(args: &FimCheckArgs) -> Result<u8> {
    let mut cfg = match &args.cfg.config {
        Some(path) => load_or_default(&args.cfg, path)?,
        None => {
            let mut cfg = build_scenario(1, true)?;
            for o in &args.cfg.overrides {
                cfg = cfg.with_override(o)?;
            }
            cfg
        }
    };
    if let Some(seed) = args.cfg.seed {
        cfg.seed = seed;
    }
    let report = fim_check(&cfg, args.instances, args.fault_delta_f)?;
    println!(
        "FIM check: {} instances, {} UE blocks, max relative error {:.3e}",
        report.instances,
        report.per_instance.len(),
        report.max_rel_error
    );
    if let Some(out) = &args.out {
        write_text(out, &serde_json::to_string_pretty(&report)?)?;
    }
    Ok(if report.max_rel_error < FIM_TOL {
        EXIT_OK
    } else {
        EXIT_SELF_CHECK
    })
}

fn block_json(b: &BlockValue) -> serde_json::Value {
    match b {
        BlockValue::Psd(m) => json!({
            "kind": "psd",
            "rows": (0..m.nrows()).map(|i| m.row(i).iter().copied().collect::<Vec<f64>>()).collect::<Vec<_>>(),
        }),
        BlockValue::Nonneg(v) => json!({ "kind": "nonneg", "values": v.iter().copied().collect::<Vec<f64>>() }),
    }
}

fn solve_sdp(args: &SolveSdpArgs) -> Result<u8> {
    let text = std::fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let problem = SdpProblem::from_json(&text).with_context(|| format!("parsing {}", args.config.display()))?;
    let sol = ipac_sdp::solve(&problem, args.tol, args.max_iter)?;
    println!(
        "status {} after {} iterations: primal {:.10e}, dual {:.10e}, gap {:.2e}",
        sol.status, sol.iterations, sol.primal_objective, sol.dual_objective, sol.relative_gap
    );
    if let Some(out) = &args.out {
        let body = json!({
            "status": sol.status,
            "iterations": sol.iterations,
            "primal_objective": sol.primal_objective,
            "dual_objective": sol.dual_objective,
            "relative_gap": sol.relative_gap,
            "primal_residual": sol.primal_residual,
            "dual_residual": sol.dual_residual,
            "x": sol.x.iter().map(block_json).collect::<Vec<_>>(),
            "y": sol.y.iter().copied().collect::<Vec<f64>>(),
        });
        write_text(out, &serde_json::to_string_pretty(&body)?)?;
    }
    Ok(match sol.status {
        SolveStatus::Optimal => EXIT_OK,
        SolveStatus::Infeasible | SolveStatus::Unbounded => EXIT_INFEASIBLE,
        SolveStatus::MaxIter => EXIT_ERROR,
    })
}

fn preset(args: &PresetArgs) -> Result<u8> {
    let cfg = build_scenario(args.scenario, !args.full_scale)?;
    let text = cfg.to_json_pretty();
    match &args.out {
        Some(out) => write_text(out, &text)?,
        None => println!("{text}"),
    }
    Ok(EXIT_OK)
}
