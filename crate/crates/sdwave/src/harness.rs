//! Command-line orchestration: one subcommand per experiment, CSV artifacts
//! plus report.txt in the output directory, exit status encoding the
//! verdicts (0 pass, 1 usage/config error, 2 verdict failure, 3 inconclusive).

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{load_config, RunConfig, RNG_ALGORITHM};
use crate::decomp::{self, DecompositionInput, KernelCheckConfig, LinfBoundConfig};
use crate::diagnostics::{self, lyapunov_monotonicity};
use crate::dynamics::{simulate, RunStatus, SimOptions, Simulator, StepControl, Trajectory};
use crate::error::{Result, SdError};
use crate::longtime::{self, NewtonOptions, SweepOptions, SweepVerdict};
use crate::nonlin::{check_hypotheses, HypothesisReport};
use crate::report::{self, CsvWriter, Report};
use crate::spectral::SpectralField;

/// Reconstruction tolerance of the splitting identity, relative to 1 + |w|.
pub const RECON_TOL: f64 = 1e-6;

#[derive(Parser, Debug)]
#[command(name = "sdwave", version, about = "spectral simulator and verification toolkit for a strongly damped wave equation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// experiment description file
    #[arg(long)]
    pub config: PathBuf,
    /// output directory for CSV artifacts and report.txt
    #[arg(long)]
    pub out: PathBuf,
    /// worker threads for ensembles (fallback: SDWAVE_THREADS, default 1)
    #[arg(long)]
    pub threads: Option<usize>,
    /// run even when the admissibility check fails
    #[arg(long, default_value_t = false)]
    pub skip_hypothesis_check: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// integrate the configured run and emit the energy ledger
    Simulate(CommonArgs),
    /// validate the admissibility hypotheses of the configured pair (f, g)
    CheckHypotheses(CommonArgs),
    /// split the run into data-driven and damping-driven parts and verify
    /// the reconstruction, drift and smoothing structure
    Decompose(CommonArgs),
    /// check the free-space heat-kernel domination and the explicit
    /// sup-norm bound on the damping-driven part
    KernelCheck(CommonArgs),
    /// solve the stationary problem by Newton multistart
    Equilibrium(CommonArgs),
    /// dissipativity sweep over a seeded ensemble at horizons T and 2T
    Sweep(CommonArgs),
    /// distance of the trajectory to the equilibrium set
    Attractor(CommonArgs),
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Command::Simulate(a)
            | Command::CheckHypotheses(a)
            | Command::Decompose(a)
            | Command::KernelCheck(a)
            | Command::Equilibrium(a)
            | Command::Attractor(a)
            | Command::Sweep(a) => a,
        }
    }
}

/// Entry point used by the binary; maps argument errors to exit code 1.
pub fn main_entry<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            // clap renders its own help/usage text
            let _ = e.print();
            return if e.exit_code() == 0 { 0 } else { 1 };
        }
    };
    match run_command(&cli.command) {
        Ok(code) => code,
        Err(SdError::Config(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            3
        }
    }
}

fn resolve_threads(args: &CommonArgs) -> usize {
    args.threads
        .or_else(|| std::env::var("SDWAVE_THREADS").ok().and_then(|s| s.parse().ok()))
        .unwrap_or(1)
        .max(1)
}

pub fn run_command(cmd: &Command) -> Result<i32> {
    let args = cmd.common();
    let cfg = load_config(&args.config)?;
    std::fs::create_dir_all(&args.out)?;
    let threads = resolve_threads(args);
    let report = match cmd {
        Command::Simulate(_) => cmd_simulate(&cfg, &args.out, args.skip_hypothesis_check)?,
        Command::CheckHypotheses(_) => cmd_check_hypotheses(&cfg, &args.out)?,
        Command::Decompose(_) => cmd_decompose(&cfg, &args.out, args.skip_hypothesis_check)?,
        Command::KernelCheck(_) => cmd_kernel_check(&cfg, &args.out, args.skip_hypothesis_check)?,
        Command::Equilibrium(_) => cmd_equilibrium(&cfg, &args.out)?,
        Command::Sweep(_) => cmd_sweep(&cfg, &args.out, threads, args.skip_hypothesis_check)?,
        Command::Attractor(_) => cmd_attractor(&cfg, &args.out, args.skip_hypothesis_check)?,
    };
    report.write(&args.out)?;
    Ok(report.exit_code())
}

fn header_notes(report: &mut Report, cfg: &RunConfig) {
    if !cfg.tag.is_empty() {
        report.note(format!("tag: {}", cfg.tag));
    }
    report.note(format!("rng: {} seed={}", RNG_ALGORITHM, cfg.seed));
    report.note(format!(
        "domain: ({}, {}) modes: {} grid: {} oversample: {}",
        cfg.domain.lx,
        cfg.domain.ly,
        cfg.modes,
        cfg.grid_factor * cfg.modes,
        cfg.oversample
    ));
    report.note(format!(
        "damping: {} source: {}",
        cfg.f_spec.family_name(),
        cfg.g_spec.family_name()
    ));
}

fn run_hypothesis_gate(cfg: &RunConfig, report: &mut Report, skip: bool) -> Result<bool> {
    if skip {
        report.note("admissibility check skipped on request".to_string());
        return Ok(true);
    }
    let rep = check_hypotheses(&cfg.f_spec, &cfg.g_spec, cfg.domain.lambda1(), cfg.scan_options());
    let ok = rep.all_ok();
    report.verdict(
        "admissibility",
        ok,
        if ok { String::new() } else { describe_failures(&rep) },
    );
    Ok(ok)
}

fn describe_failures(rep: &HypothesisReport) -> String {
    let mut parts = Vec::new();
    if !rep.derivative_bound_ok {
        parts.push(format!(
            "damping derivative bound fails (inf f' ~ {:.4e}, needs > {:.4e})",
            rep.inf_fprime_estimate, -rep.lambda1
        ));
    }
    if !rep.damping_c1_ok || !rep.source_c1_ok {
        parts.push("smoothness consistency fails".to_string());
    }
    if !rep.liminf_ok {
        parts.push(format!("source lower growth fails (liminf {:.4e})", rep.liminf_ratio));
    }
    if !rep.growth_ok {
        parts.push(format!(
            "source growth bound fails (gamma {}, constant {:.3e})",
            rep.growth_gamma, rep.growth_constant
        ));
    }
    if !rep.tail_ok() {
        parts.push("damping tail integral diverges".to_string());
    }
    if !rep.symmetry_ok {
        parts.push(format!("damping symmetry constant too large ({:.3e})", rep.symmetry_constant));
    }
    parts.join("; ")
}

fn build_simulator(cfg: &RunConfig) -> Result<Simulator> {
    let basis = cfg.build_basis()?;
    Simulator::new(
        basis,
        cfg.f_spec.clone(),
        cfg.g_spec.clone(),
        cfg.forcing_field()?,
        cfg.dt,
        cfg.scheme,
    )
}

fn sim_options(cfg: &RunConfig, record_states: bool) -> SimOptions {
    SimOptions {
        horizon: cfg.horizon,
        output_stride: cfg.output_stride,
        record_states,
        linf_factor: cfg.oversample,
        step_control: cfg
            .step_control_tol
            .map(|tol| StepControl { tol, min_dt: cfg.dt * 2f64.powi(-12) }),
    }
}

fn status_verdict(report: &mut Report, status: &RunStatus) {
    match status {
        RunStatus::Completed => report.verdict("run-status", true, "completed"),
        RunStatus::Saturated { t, arg } => report.inconclusive(
            "run-status",
            format!("saturated at t = {t} (argument {arg:.3e}); discretization left the physical regime"),
        ),
        RunStatus::Diverged { t } => {
            report.inconclusive("run-status", format!("diverged at t = {t}"))
        }
    }
}

fn run_configured(cfg: &RunConfig, record_states: bool) -> Result<(Simulator, Trajectory)> {
    let mut sim = build_simulator(cfg)?;
    let basis = sim.basis.clone();
    let (w0, w1) = cfg.initial_data(&basis)?;
    let traj = simulate(&mut sim, &w0, &w1, &sim_options(cfg, record_states))?;
    Ok((sim, traj))
}

// ---------------------------------------------------------------------------

fn cmd_simulate(cfg: &RunConfig, out: &Path, skip_check: bool) -> Result<Report> {
    let mut report = Report::new("simulate");
    header_notes(&mut report, cfg);
    if !run_hypothesis_gate(cfg, &mut report, skip_check)? {
        return Ok(report);
    }
    let (_, traj) = run_configured(cfg, false)?;
    report::write_ledger_csv(&out.join("ledger.csv"), &traj.ledger)?;
    status_verdict(&mut report, &traj.status);

    let max_rel = diagnostics::balance_residual_series(&traj.ledger)
        .iter()
        .fold(0.0f64, |m, r| m.max(r.2.abs()));
    report.note(format!("max relative balance residual: {max_rel:.6e}"));
    report.verdict(
        "energy-balance",
        max_rel <= cfg.tolerances.balance,
        format!("max relative residual {max_rel:.3e} vs tolerance {:.1e}", cfg.tolerances.balance),
    );
    let mono = lyapunov_monotonicity(
        &traj.ledger,
        cfg.tolerances.lyapunov_abs,
        cfg.tolerances.lyapunov_rel,
    );
    report.verdict(
        "lyapunov-monotone",
        mono.monotone,
        match mono.worst_violation {
            None => String::new(),
            Some((t, inc)) => format!("increase {inc:.3e} beyond slack at t = {t}"),
        },
    );
    report.note(format!(
        "run-reported energy bound constant: {:.6e}",
        diagnostics::energy_bound_constant(&traj.ledger)
    ));
    Ok(report)
}

fn cmd_check_hypotheses(cfg: &RunConfig, out: &Path) -> Result<Report> {
    let mut report = Report::new("check-hypotheses");
    header_notes(&mut report, cfg);
    let rep = check_hypotheses(&cfg.f_spec, &cfg.g_spec, cfg.domain.lambda1(), cfg.scan_options());

    let mut csv = CsvWriter::create(&out.join("hypotheses.csv"), report::HYPOTHESES_HEADER)?;
    for (k, v) in [
        ("lambda1", rep.lambda1),
        ("inf_fprime_estimate", rep.inf_fprime_estimate),
        ("liminf_ratio", rep.liminf_ratio),
        ("growth_gamma", rep.growth_gamma),
        ("growth_constant", rep.growth_constant),
        ("tail_integral", rep.tail_integral),
        ("symmetry_constant", rep.symmetry_constant),
    ] {
        csv.row(&[k.to_string(), report::fmt_f64(v)])?;
    }
    csv.finish()?;

    for note in &rep.notes {
        report.note(note.clone());
    }
    if rep.derivative_bound_analytic {
        report.note("derivative bound certified analytically for this family".to_string());
    } else {
        report.note("derivative bound verified on the scan range only".to_string());
    }
    report.verdict(
        "damping-derivative-bound",
        rep.derivative_bound_ok,
        format!("inf f' estimate {:.6e} vs -lambda1 = {:.6e}", rep.inf_fprime_estimate, -rep.lambda1),
    );
    report.verdict(
        "damping-smoothness",
        rep.damping_c1_ok && rep.damping_zero_at_origin,
        String::new(),
    );
    report.verdict(
        "source-growth",
        rep.growth_ok && rep.source_c1_ok,
        format!("gamma = {}, fitted constant {:.4e}", rep.growth_gamma, rep.growth_constant),
    );
    report.verdict(
        "source-lower-bound",
        rep.liminf_ok,
        format!("liminf g(s)/s estimate {:.6e}", rep.liminf_ratio),
    );
    report.verdict(
        "damping-tail-integral",
        rep.tail_ok(),
        if rep.tail_ok() {
            format!("value {:.8e}", rep.tail_integral)
        } else {
            "diverges on doubling intervals".to_string()
        },
    );
    report.verdict(
        "damping-symmetry",
        rep.symmetry_ok,
        format!("fitted constant {:.4e}", rep.symmetry_constant),
    );
    Ok(report)
}

fn cmd_decompose(cfg: &RunConfig, out: &Path, skip_check: bool) -> Result<Report> {
    let mut report = Report::new("decompose");
    header_notes(&mut report, cfg);
    if !run_hypothesis_gate(cfg, &mut report, skip_check)? {
        return Ok(report);
    }
    let (sim, traj) = run_configured(cfg, true)?;
    report::write_ledger_csv(&out.join("ledger.csv"), &traj.ledger)?;
    status_verdict(&mut report, &traj.status);
    if traj.states.len() < 2 {
        report.inconclusive("decomposition", "not enough recorded states");
        return Ok(report);
    }

    let input = DecompositionInput::from_trajectory(
        &sim.basis,
        &sim.f_spec,
        &sim.g_spec,
        &sim.h,
        &traj,
    )?;
    let run = decomp::decompose(&input)?;
    let mut csv = CsvWriter::create(&out.join("decomposition.csv"), report::DECOMPOSITION_HEADER)?;
    for i in 0..run.times.len() {
        csv.row(&[
            report::fmt_f64(run.times[i]),
            report::fmt_f64(run.recon_residual[i]),
            report::fmt_f64(run.recon_relative[i]),
        ])?;
    }
    csv.finish()?;
    let worst = run.recon_relative.iter().fold(0.0f64, |m, &r| m.max(r));
    report.verdict(
        "reconstruction",
        worst <= RECON_TOL,
        format!("max relative splitting defect {worst:.3e} vs {RECON_TOL:.1e}"),
    );

    let drift = decomp::drift_report(&input, &run.v, &cfg.s_values)?;
    let mut csv = CsvWriter::create(&out.join("drift.csv"), report::DRIFT_HEADER)?;
    for (si, &s) in drift.s_values.iter().enumerate() {
        for (ti, &t) in run.times.iter().enumerate() {
            csv.row(&[report::fmt_f64(s), report::fmt_f64(t), report::fmt_f64(drift.series[si][ti])])?;
        }
    }
    csv.finish()?;
    report.note(format!(
        "drift shadow constant: {:.6e}; drift growth slope: {:.4}",
        drift.shadow_constant, drift.slope
    ));

    let mut csv = CsvWriter::create(&out.join("smoothing.csv"), report::SMOOTHING_HEADER)?;
    let mut smoothing_ok = true;
    for &s in &cfg.s_values {
        for &t in &[0.25 * cfg.horizon, 0.5 * cfg.horizon, cfg.horizon] {
            let c = decomp::smoothing_constant(&sim.basis, s, t);
            smoothing_ok &= c.discrete <= c.ceiling + 1e-15;
            csv.row(&[
                report::fmt_f64(s),
                report::fmt_f64(t),
                report::fmt_f64(c.discrete),
                report::fmt_f64(c.ceiling),
            ])?;
        }
    }
    csv.finish()?;
    report.verdict("smoothing-ceiling", smoothing_ok, "discrete norm below the continuum ceiling");
    Ok(report)
}

fn kernel_sample_layout(cfg: &RunConfig, n_samples: usize) -> (Vec<usize>, Vec<(f64, f64)>) {
    let count = cfg.kernel_times.max(1).min(n_samples.saturating_sub(1)).max(1);
    let mut indices = Vec::with_capacity(count);
    for k in 1..=count {
        let idx = ((n_samples - 1) * k) / count;
        indices.push(idx.max(1));
    }
    indices.dedup();
    let p = cfg.kernel_points_per_axis.max(1);
    let mut points = Vec::with_capacity(p * p);
    for i in 1..=p {
        for l in 1..=p {
            points.push((
                cfg.domain.lx * i as f64 / (p + 1) as f64,
                cfg.domain.ly * l as f64 / (p + 1) as f64,
            ));
        }
    }
    (indices, points)
}

fn cmd_kernel_check(cfg: &RunConfig, out: &Path, skip_check: bool) -> Result<Report> {
    let mut report = Report::new("kernel-check");
    header_notes(&mut report, cfg);
    if !run_hypothesis_gate(cfg, &mut report, skip_check)? {
        return Ok(report);
    }
    let (sim, traj) = run_configured(cfg, true)?;
    status_verdict(&mut report, &traj.status);
    if traj.states.len() < 2 {
        report.inconclusive("kernel-domination", "not enough recorded states");
        return Ok(report);
    }
    let input = DecompositionInput::from_trajectory(
        &sim.basis,
        &sim.f_spec,
        &sim.g_spec,
        &sim.h,
        &traj,
    )?;
    let run = decomp::decompose(&input)?;

    // free-space mass subcheck
    let mass = decomp::free_space_mass(0.37, cfg.kernel_gh_order);
    report.verdict(
        "kernel-mass",
        (mass - 1.0).abs() < 1e-8,
        format!("free-space kernel mass {mass:.12}"),
    );

    let (time_indices, points) = kernel_sample_layout(cfg, input.times.len());
    let lambda1 = sim.basis.lambda1();
    let f_spec = sim.f_spec.clone();
    let kcfg = KernelCheckConfig {
        time_indices,
        points,
        tol_factor: cfg.tolerances.kernel,
        refine_levels: cfg.kernel_refine_levels,
        gh_order: cfg.kernel_gh_order,
    };
    let kr = decomp::kernel_bound_check(
        &sim.basis,
        &input.times,
        &input.wt,
        &|v| Ok((f_spec.eval(v)? + lambda1 * v).abs()),
        &run.psi,
        &kcfg,
    )?;
    let mut csv = CsvWriter::create(&out.join("kernel.csv"), report::KERNEL_HEADER)?;
    for s in &kr.samples {
        csv.row(&[
            report::fmt_f64(s.t),
            report::fmt_f64(s.x),
            report::fmt_f64(s.y),
            report::fmt_f64(s.lhs),
            report::fmt_f64(s.rhs),
            report::fmt_f64(s.margin),
            (s.flagged as u8).to_string(),
        ])?;
    }
    csv.finish()?;
    if kr.any_flagged {
        report.note("some sample points exhausted the quadrature refinement budget".to_string());
    }
    report.verdict(
        "kernel-domination",
        kr.ok,
        format!(
            "min margin {:.4e} vs allowance {:.4e} over {} samples",
            kr.samples.iter().map(|s| s.margin).fold(f64::INFINITY, f64::min),
            -kr.tolerance,
            kr.samples.len()
        ),
    );

    // explicit sup-norm bound on the damping-driven part
    let dissipation = traj.ledger.last().map(|r| r.shifted_cum).unwrap_or(0.0);
    let lcfg = LinfBoundConfig {
        alpha: cfg.linf_alpha,
        eps_hi: cfg.linf_eps_hi,
        linf_factor: cfg.oversample,
        ..LinfBoundConfig::default()
    };
    let lb = decomp::linf_bound_check(&sim.basis, &sim.f_spec, &input.times, &run.u, dissipation, &lcfg)?;
    let mut csv = CsvWriter::create(&out.join("linf_bound.csv"), report::LINF_BOUND_HEADER)?;
    for (t, v, holds) in &lb.samples {
        csv.row(&[report::fmt_f64(*t), report::fmt_f64(*v), (*holds as u8).to_string()])?;
    }
    csv.finish()?;
    report.note(format!(
        "sup-norm bound: eps = {:.6e}, tail constant {:.6e} (substituted route {:.6e}), rhs {:.6e}",
        lb.epsilon, lb.kappa, lb.kappa_substituted, lb.rhs
    ));
    let kappa_rel = (lb.kappa - lb.kappa_substituted).abs() / lb.kappa.abs().max(1e-300);
    report.verdict(
        "tail-constant-agreement",
        kappa_rel <= 1e-6,
        format!("two quadrature routes differ by {kappa_rel:.3e} relative"),
    );
    report.verdict(
        "sup-norm-bound",
        lb.holds,
        format!("max |u|_Linf {:.6e} vs bound {:.6e}", lb.max_linf_u, lb.rhs),
    );
    Ok(report)
}

fn cmd_equilibrium(cfg: &RunConfig, out: &Path) -> Result<Report> {
    let mut report = Report::new("equilibrium");
    header_notes(&mut report, cfg);
    let basis = cfg.build_basis()?;
    let h = cfg.forcing_field()?;
    let opts = NewtonOptions { tol: cfg.newton_tol, max_iters: cfg.newton_max_iters };
    let eqs = longtime::find_equilibria_multistart(
        &basis,
        &cfg.g_spec,
        &h,
        cfg.newton_starts,
        cfg.seed,
        cfg.newton_perturbation,
        opts,
    );
    let mut csv = CsvWriter::create(&out.join("equilibrium.csv"), report::EQUILIBRIUM_HEADER)?;
    for (i, eq) in eqs.iter().enumerate() {
        csv.row(&[
            i.to_string(),
            eq.newton_iters.to_string(),
            report::fmt_f64(eq.residual),
            report::fmt_f64(basis.sobolev_norm(&eq.w_star, 0.0)),
            report::fmt_f64(basis.sobolev_norm(&eq.w_star, 1.0)),
            report::fmt_f64(basis.linf_norm(&eq.w_star, cfg.oversample)),
        ])?;
    }
    csv.finish()?;
    report.note(format!("{} distinct equilibria from {} starts", eqs.len(), cfg.newton_starts));
    report.verdict(
        "newton-converged",
        !eqs.is_empty() && eqs.iter().all(|e| e.residual < cfg.newton_tol),
        format!(
            "worst residual {:.3e}",
            eqs.iter().map(|e| e.residual).fold(0.0f64, f64::max)
        ),
    );

    // dynamic cross-check: the first equilibrium must be a fixed point
    if let Some(eq) = eqs.first() {
        let mut sim = build_simulator(cfg)?;
        let opts = SimOptions {
            horizon: 5.0,
            output_stride: cfg.output_stride,
            record_states: true,
            linf_factor: cfg.oversample,
            step_control: None,
        };
        let traj = simulate(&mut sim, &eq.w_star, &SpectralField::zeros(cfg.modes), &opts)?;
        let drift = traj
            .states
            .iter()
            .map(|s| {
                basis.sobolev_norm(&s.w.sub(&eq.w_star), 1.0) + basis.sobolev_norm(&s.wt, 0.0)
            })
            .fold(0.0f64, f64::max);
        report.verdict(
            "dynamic-fixed-point",
            traj.status == RunStatus::Completed && drift < 1e-8,
            format!("max drift {drift:.3e} over [0, {}]", opts.horizon),
        );
    }
    Ok(report)
}

fn cmd_sweep(cfg: &RunConfig, out: &Path, threads: usize, skip_check: bool) -> Result<Report> {
    let mut report = Report::new("sweep");
    header_notes(&mut report, cfg);
    if !run_hypothesis_gate(cfg, &mut report, skip_check)? {
        return Ok(report);
    }
    let basis = cfg.build_basis()?;
    let h = cfg.forcing_field()?;
    let ensemble = cfg.ensemble_data(&basis)?;
    report.note(format!("ensemble of {} seeded members", ensemble.len()));

    let mut sweep_csv = CsvWriter::create(&out.join("sweep.csv"), report::SWEEP_HEADER)?;
    let mut iter_csv = CsvWriter::create(&out.join("iteration.csv"), report::ITERATION_HEADER)?;
    let mut reports = Vec::new();
    for horizon in [cfg.horizon, 2.0 * cfg.horizon] {
        let rep = longtime::dissipativity_sweep(
            &basis,
            &cfg.f_spec,
            &cfg.g_spec,
            &h,
            &ensemble,
            SweepOptions {
                dt: cfg.dt,
                horizon,
                output_stride: cfg.output_stride,
                linf_factor: cfg.oversample,
                scheme: cfg.scheme,
                threads,
            },
        )?;
        for m in &rep.members {
            sweep_csv.row(&[
                report::fmt_f64(horizon),
                m.index.to_string(),
                m.status.label().to_string(),
                report::fmt_f64(m.sup_h1),
                report::fmt_f64(m.sup_l2_wt),
                report::fmt_f64(m.sup_linf),
            ])?;
            for (n, v) in &m.iteration {
                iter_csv.row(&[
                    report::fmt_f64(horizon),
                    m.index.to_string(),
                    n.to_string(),
                    report::fmt_f64(*v),
                ])?;
            }
        }
        reports.push((horizon, rep));
    }
    sweep_csv.finish()?;
    iter_csv.finish()?;

    let (t1, base) = &reports[0];
    let (t2, double) = &reports[1];
    report.note(format!(
        "horizon {t1}: c_B = {:.6e}, fit a = {:.4}, b = {:.4e} (residual {:.2e})",
        base.c_b, base.fit_a, base.fit_b, base.fit_residual
    ));
    report.note(format!("horizon {t2}: c_B = {:.6e}, fit a = {:.4}", double.c_b, double.fit_a));

    match &base.verdict {
        SweepVerdict::Dissipative => {
            report.verdict("dissipative", true, format!("fitted contraction a = {:.4} < 1", base.fit_a))
        }
        SweepVerdict::Inconclusive { failed_members } if failed_members.is_empty() => {
            report.verdict("dissipative", false, format!("fitted contraction a = {:.4} >= 1", base.fit_a))
        }
        SweepVerdict::Inconclusive { failed_members } => report.inconclusive(
            "dissipative",
            format!("members {:?} saturated or diverged", failed_members),
        ),
    }
    let stable = (double.c_b - base.c_b).abs() <= 0.01 * base.c_b.max(1e-300);
    report.verdict(
        "bound-stability",
        stable,
        format!("c_B changes by {:.3e} between horizons", (double.c_b - base.c_b).abs()),
    );
    Ok(report)
}

fn cmd_attractor(cfg: &RunConfig, out: &Path, skip_check: bool) -> Result<Report> {
    let mut report = Report::new("attractor");
    header_notes(&mut report, cfg);
    if !run_hypothesis_gate(cfg, &mut report, skip_check)? {
        return Ok(report);
    }
    let basis = cfg.build_basis()?;
    let h = cfg.forcing_field()?;
    let opts = NewtonOptions { tol: cfg.newton_tol, max_iters: cfg.newton_max_iters };
    let eqs = longtime::find_equilibria_multistart(
        &basis,
        &cfg.g_spec,
        &h,
        cfg.newton_starts,
        cfg.seed,
        cfg.newton_perturbation,
        opts,
    );
    if eqs.is_empty() {
        report.inconclusive("attraction", "no equilibria found");
        return Ok(report);
    }
    report.note(format!("{} distinct equilibria", eqs.len()));

    let (sim, traj) = run_configured(cfg, true)?;
    report::write_ledger_csv(&out.join("ledger.csv"), &traj.ledger)?;
    status_verdict(&mut report, &traj.status);
    let ar = longtime::attractor_distance(
        &basis,
        &traj.states,
        &eqs,
        cfg.tail_fraction,
        cfg.tolerances.attractor,
    )?;
    let mut csv = CsvWriter::create(&out.join("attractor.csv"), report::ATTRACTOR_HEADER)?;
    for (t, d, wt) in &ar.series {
        csv.row(&[report::fmt_f64(*t), report::fmt_f64(*d), report::fmt_f64(*wt)])?;
    }
    csv.finish()?;
    if ar.plateau {
        report.note("distance plateaued above tolerance; possibly a non-discrete limit set");
    }
    report.verdict(
        "attraction",
        ar.converged,
        format!("final distance {:.4e} vs tolerance {:.1e}", ar.final_distance, ar.tol),
    );
    report.verdict(
        "velocity-decay",
        ar.min_tail_wt < 10.0 * cfg.tolerances.attractor,
        format!("tail min |w_t| = {:.4e}", ar.min_tail_wt),
    );

    // Lyapunov ordering against the nearest equilibrium
    let reporter =
        diagnostics::EnergyReporter::new(&basis, &sim.f_spec, &sim.g_spec, &sim.h, cfg.oversample);
    let zero = SpectralField::zeros(cfg.modes);
    let mut nearest = None;
    if let Some(last) = traj.states.last() {
        let mut best = f64::INFINITY;
        for eq in &eqs {
            let d = basis.sobolev_norm(&last.w.sub(&eq.w_star), 1.0);
            if d < best {
                best = d;
                nearest = Some(eq);
            }
        }
    }
    if let (Some(eq), Some(last_row)) = (nearest, traj.ledger.last()) {
        let l_eq = reporter.snapshot(&eq.w_star, &zero)?.lyapunov();
        report.note(format!(
            "final Lyapunov value {:.8e}, nearest equilibrium level {:.8e}",
            last_row.lyapunov, l_eq
        ));
        report.verdict(
            "lyapunov-ordering",
            last_row.lyapunov >= l_eq - cfg.tolerances.lyapunov_abs - cfg.tolerances.lyapunov_rel * l_eq.abs(),
            format!("gap {:.3e}", last_row.lyapunov - l_eq),
        );
    }
    Ok(report)
}
