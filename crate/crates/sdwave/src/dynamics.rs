//! The truncated second-order mode system driven by the wave equation,
//! integrated with exact per-mode linear propagators and pseudo-spectral
//! nonlinear terms.
//!
//! Each mode with eigenvalue lambda obeys c'' + lambda c' + lambda c = r(t),
//! written first-order in y = (c, c') with A = [[0, 1], [-lambda, -lambda]].
//! The linear flight uses the closed-form matrix exponential (three root
//! regimes of x^2 + lambda x + lambda = 0); constant-in-time forcing enters
//! through the exact forced-response vector, so equilibria are exact fixed
//! points of the discrete map. Only the nonlinear terms f, g are treated
//! explicitly, by a midpoint predictor: that keeps the scheme second order
//! while the viscous stiffness is handled exactly.

use crate::diagnostics::{LedgerAccumulator, LedgerRow};
use crate::error::{Result, SdError};
use crate::nonlin::NonlinearitySpec;
use crate::spectral::{Basis, SpectralField};

/// Phase-space point (w, w_t) at a time instant.
#[derive(Debug, Clone)]
pub struct PhaseState {
    pub w: SpectralField,
    pub wt: SpectralField,
    pub t: f64,
}

impl PhaseState {
    pub fn new(w: SpectralField, wt: SpectralField, t: f64) -> Self {
        assert!(t >= 0.0);
        PhaseState { w, wt, t }
    }

    pub fn is_finite(&self) -> bool {
        self.w.is_finite() && self.wt.is_finite()
    }
}

/// Spectral truncation of initial data onto the retained modes.
pub fn project_initial_data(
    w0: &SpectralField,
    w1: &SpectralField,
    basis: &Basis,
) -> Result<PhaseState> {
    if w0.n() != basis.n() || w1.n() != basis.n() {
        return Err(SdError::Config("initial data incompatible with the basis".into()));
    }
    Ok(PhaseState::new(w0.clone(), w1.clone(), 0.0))
}

/// Grid-supplied initial data: analyzed onto the retained modes, returning
/// the state together with the discarded-mass fractions of (w0, w1).
pub fn project_initial_data_from_grid(
    w0: &crate::spectral::GridField,
    w1: &crate::spectral::GridField,
    basis: &Basis,
) -> Result<(PhaseState, (f64, f64))> {
    let (w0s, f0) = basis.project_from_grid(w0)?;
    let (w1s, f1) = basis.project_from_grid(w1)?;
    Ok((PhaseState::new(w0s, w1s, 0.0), (f0, f1)))
}

/// Exact flight of one mode over a step: y -> matrix y + forced * r for
/// forcing held constant at r across the step.
#[derive(Debug, Clone, Copy)]
pub struct ModePropagator {
    pub lambda: f64,
    pub dt: f64,
    pub matrix: [[f64; 2]; 2],
    pub forced: [f64; 2],
}

/// Width of the double-root window around lambda = 4 in which the Jordan
/// closed form replaces the two-exponential formulas.
pub const DEGENERATE_WINDOW: f64 = 1e-9;

impl ModePropagator {
    pub fn new(lambda: f64, dt: f64) -> Self {
        assert!(lambda > 0.0 && dt >= 0.0);
        let m;
        if (lambda - 4.0).abs() <= DEGENERATE_WINDOW {
            // double root -2: exp(At) = e^{-2t} (I + (A + 2I) t)
            let e = (-2.0 * dt).exp();
            m = [
                [e * (1.0 + 2.0 * dt), e * dt],
                [e * (-4.0 * dt), e * (1.0 - 2.0 * dt)],
            ];
        } else if lambda < 4.0 {
            // complex pair mu +- i omega
            let mu = -0.5 * lambda;
            let omega = 0.5 * (lambda * (4.0 - lambda)).sqrt();
            let e = (mu * dt).exp();
            let c = (omega * dt).cos();
            let s_over = (omega * dt).sin() / omega;
            m = [
                [e * (c + 0.5 * lambda * s_over), e * s_over],
                [e * (-lambda * s_over), e * (c - 0.5 * lambda * s_over)],
            ];
        } else {
            // distinct real roots; the fast root is computed directly and the
            // slow one through the product relation r1 r2 = lambda to avoid
            // cancellation for large lambda
            let disc = (lambda * (lambda - 4.0)).sqrt();
            let r2 = 0.5 * (-lambda - disc);
            let r1 = lambda / r2;
            let e1 = (r1 * dt).exp();
            let e2 = (r2 * dt).exp();
            let d = r1 - r2;
            m = [
                [(r1 * e2 - r2 * e1) / d, (e1 - e2) / d],
                [(-lambda) * (e1 - e2) / d, (r1 * e1 - r2 * e2) / d],
            ];
        }
        // forced response = A^{-1} (exp(A dt) - I) e2, with
        // A^{-1} = [[-1, -1/lambda], [1, 0]]
        let forced = [-m[0][1] - (m[1][1] - 1.0) / lambda, m[0][1]];
        ModePropagator { lambda, dt, matrix: m, forced }
    }

    #[inline]
    pub fn apply(&self, y: [f64; 2], r: f64) -> [f64; 2] {
        [
            self.matrix[0][0] * y[0] + self.matrix[0][1] * y[1] + self.forced[0] * r,
            self.matrix[1][0] * y[0] + self.matrix[1][1] * y[1] + self.forced[1] * r,
        ]
    }

    pub fn det(&self) -> f64 {
        self.matrix[0][0] * self.matrix[1][1] - self.matrix[0][1] * self.matrix[1][0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Second order: exponential half-step predictor, midpoint nonlinearity.
    ExponentialMidpoint,
    /// First order, kept for debugging comparisons.
    ExponentialEuler,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunStatus {
    Completed,
    /// A nonlinearity left double range; the trajectory is truncated.
    Saturated { t: f64, arg: f64 },
    /// Coefficients stopped being finite.
    Diverged { t: f64 },
}

impl RunStatus {
    pub fn label(&self) -> &'static str {
        match self {
            RunStatus::Completed => "completed",
            RunStatus::Saturated { .. } => "saturated",
            RunStatus::Diverged { .. } => "diverged",
        }
    }
}

/// Trajectory output: ledger series on the output schedule, optional state
/// snapshots at the same times, and the terminal status.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub ledger: Vec<LedgerRow>,
    pub states: Vec<PhaseState>,
    pub status: RunStatus,
}

impl Trajectory {
    pub fn final_state(&self) -> Option<&PhaseState> {
        self.states.last()
    }
}

/// Assembled simulator: basis, nonlinearities, constant forcing, and the
/// tabulated per-mode propagators for one step size.
pub struct Simulator {
    pub basis: Basis,
    pub f_spec: NonlinearitySpec,
    pub g_spec: NonlinearitySpec,
    pub h: SpectralField,
    pub dt: f64,
    pub scheme: Scheme,
    full: Vec<ModePropagator>,
    half: Vec<ModePropagator>,
    nonlinear_active: bool,
}

impl Simulator {
    pub fn new(
        basis: Basis,
        f_spec: NonlinearitySpec,
        g_spec: NonlinearitySpec,
        h: SpectralField,
        dt: f64,
        scheme: Scheme,
    ) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(SdError::Config(format!("step size must be positive, got {dt}")));
        }
        if h.n() != basis.n() {
            return Err(SdError::Config("forcing field incompatible with the basis".into()));
        }
        let (full, half) = build_propagators(&basis, dt);
        let nonlinear_active = !(f_spec.is_zero() && g_spec.is_zero());
        Ok(Simulator { basis, f_spec, g_spec, h, dt, scheme, full, half, nonlinear_active })
    }

    pub fn set_dt(&mut self, dt: f64) {
        self.dt = dt;
        let (full, half) = build_propagators(&self.basis, dt);
        self.full = full;
        self.half = half;
    }

    /// Spectral coefficients of -f(w_t) - g(w), evaluated pseudo-spectrally
    /// on the dealiased grid.
    pub fn nonlinear_forcing(&self, state: &PhaseState) -> Result<SpectralField> {
        if !self.nonlinear_active {
            return Ok(SpectralField::zeros(self.basis.n()));
        }
        let w_grid = self.basis.to_grid(&state.w)?;
        let wt_grid = self.basis.to_grid(&state.wt)?;
        let m = self.basis.m();
        let mut vals = vec![0.0; m * m];
        let f_zero = self.f_spec.is_zero();
        let g_zero = self.g_spec.is_zero();
        for (i, v) in vals.iter_mut().enumerate() {
            let mut acc = 0.0;
            if !f_zero {
                acc -= self.f_spec.eval(wt_grid.values()[i])?;
            }
            if !g_zero {
                acc -= self.g_spec.eval(w_grid.values()[i])?;
            }
            *v = acc;
        }
        self.basis
            .to_spectral(&crate::spectral::GridField::from_values(m, vals)?)
    }

    /// One step of the configured exponential integrator.
    pub fn step(&self, state: &PhaseState) -> Result<PhaseState> {
        let n = self.basis.n();
        let r0 = self.nonlinear_forcing(state)?;
        let mid_forcing = match self.scheme {
            Scheme::ExponentialEuler => None,
            Scheme::ExponentialMidpoint => {
                let mut wm = SpectralField::zeros(n);
                let mut wtm = SpectralField::zeros(n);
                for idx in 0..n * n {
                    let p = &self.half[idx];
                    let r = self.h.coeffs()[idx] + r0.coeffs()[idx];
                    let y = p.apply([state.w.coeffs()[idx], state.wt.coeffs()[idx]], r);
                    wm.coeffs_mut()[idx] = y[0];
                    wtm.coeffs_mut()[idx] = y[1];
                }
                let mid = PhaseState::new(wm, wtm, state.t + 0.5 * self.dt);
                Some(self.nonlinear_forcing(&mid)?)
            }
        };
        let r_eff = mid_forcing.as_ref().unwrap_or(&r0);
        let mut w = SpectralField::zeros(n);
        let mut wt = SpectralField::zeros(n);
        for idx in 0..n * n {
            let p = &self.full[idx];
            let r = self.h.coeffs()[idx] + r_eff.coeffs()[idx];
            let y = p.apply([state.w.coeffs()[idx], state.wt.coeffs()[idx]], r);
            w.coeffs_mut()[idx] = y[0];
            wt.coeffs_mut()[idx] = y[1];
        }
        Ok(PhaseState::new(w, wt, state.t + self.dt))
    }
}

fn build_propagators(basis: &Basis, dt: f64) -> (Vec<ModePropagator>, Vec<ModePropagator>) {
    let full = basis.eigenvalues().iter().map(|&l| ModePropagator::new(l, dt)).collect();
    let half = basis.eigenvalues().iter().map(|&l| ModePropagator::new(l, 0.5 * dt)).collect();
    (full, half)
}

#[derive(Debug, Clone, Copy)]
pub struct StepControl {
    /// Per-step energy-balance defect budget: a step is rejected when the
    /// defect exceeds tol * dt.
    pub tol: f64,
    pub min_dt: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    pub horizon: f64,
    pub output_stride: usize,
    pub record_states: bool,
    pub linf_factor: usize,
    pub step_control: Option<StepControl>,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            horizon: 1.0,
            output_stride: 1,
            record_states: false,
            linf_factor: 4,
            step_control: None,
        }
    }
}

/// Integrates from the given data to the horizon, recording the ledger at
/// each output time. Saturation yields a truncated trajectory marked
/// `Saturated`; non-finite coefficients yield `Diverged`.
pub fn simulate(
    sim: &mut Simulator,
    w0: &SpectralField,
    w1: &SpectralField,
    opts: &SimOptions,
) -> Result<Trajectory> {
    let state0 = project_initial_data(w0, w1, &sim.basis)?;
    match opts.step_control {
        None => simulate_fixed(sim, state0, opts),
        Some(ctrl) => simulate_adaptive(sim, state0, opts, ctrl),
    }
}

fn simulate_fixed(sim: &Simulator, state0: PhaseState, opts: &SimOptions) -> Result<Trajectory> {
    let reporter = crate::diagnostics::EnergyReporter::new(
        &sim.basis,
        &sim.f_spec,
        &sim.g_spec,
        &sim.h,
        opts.linf_factor,
    );
    let mut acc = LedgerAccumulator::new(reporter);
    let mut ledger = Vec::new();
    let mut states = Vec::new();
    let mut status = RunStatus::Completed;

    let steps = (opts.horizon / sim.dt).round() as usize;
    let stride = opts.output_stride.max(1);

    ledger.push(acc.push(0.0, &state0.w, &state0.wt)?);
    if opts.record_states {
        states.push(state0.clone());
    }

    let mut state = state0;
    for i in 1..=steps {
        state = match sim.step(&state) {
            Ok(s) => s,
            Err(SdError::Saturation { arg, .. }) => {
                status = RunStatus::Saturated { t: state.t, arg };
                break;
            }
            Err(e) => return Err(e),
        };
        state.t = i as f64 * sim.dt; // exact schedule, no accumulation drift
        if !state.is_finite() {
            status = RunStatus::Diverged { t: state.t };
            break;
        }
        if i % stride == 0 || i == steps {
            match acc.push(state.t, &state.w, &state.wt) {
                Ok(row) => ledger.push(row),
                Err(SdError::Saturation { arg, .. }) => {
                    status = RunStatus::Saturated { t: state.t, arg };
                    break;
                }
                Err(e) => return Err(e),
            }
            if opts.record_states {
                states.push(state.clone());
            }
        }
    }
    Ok(Trajectory { ledger, states, status })
}

fn simulate_adaptive(
    sim: &mut Simulator,
    state0: PhaseState,
    opts: &SimOptions,
    ctrl: StepControl,
) -> Result<Trajectory> {
    let base_dt = sim.dt;
    // local copies so the reporter does not pin the simulator while dt changes
    let basis = sim.basis.clone();
    let f_spec = sim.f_spec.clone();
    let g_spec = sim.g_spec.clone();
    let h = sim.h.clone();
    let reporter =
        crate::diagnostics::EnergyReporter::new(&basis, &f_spec, &g_spec, &h, opts.linf_factor);
    let mut ledger = Vec::new();
    let mut states = Vec::new();
    let mut status = RunStatus::Completed;

    let mut acc = LedgerAccumulator::new(crate::diagnostics::EnergyReporter::new(
        &basis,
        &f_spec,
        &g_spec,
        &h,
        opts.linf_factor,
    ));
    ledger.push(acc.push(0.0, &state0.w, &state0.wt)?);
    if opts.record_states {
        states.push(state0.clone());
    }

    let mut state = state0;
    let mut snap = reporter.snapshot(&state.w, &state.wt)?;
    let mut dt = base_dt;
    'outer: while state.t < opts.horizon - 1e-12 {
        dt = dt.min(opts.horizon - state.t).max(ctrl.min_dt);
        if (sim.dt - dt).abs() > 1e-15 * dt {
            sim.set_dt(dt);
        }
        let next = match sim.step(&state) {
            Ok(s) => s,
            Err(SdError::Saturation { arg, .. }) => {
                status = RunStatus::Saturated { t: state.t, arg };
                break 'outer;
            }
            Err(e) => return Err(e),
        };
        if !next.is_finite() {
            status = RunStatus::Diverged { t: next.t };
            break;
        }
        let next_snap = match reporter.snapshot(&next.w, &next.wt) {
            Ok(s) => s,
            Err(SdError::Saturation { arg, .. }) => {
                status = RunStatus::Saturated { t: next.t, arg };
                break;
            }
            Err(e) => return Err(e),
        };
        let defect = (next_snap.energy() - snap.energy()
            + 0.5 * dt * (snap.visc_integrand + next_snap.visc_integrand)
            + 0.5 * dt * (snap.damping_integrand + next_snap.damping_integrand)
            - (next_snap.forcing - snap.forcing))
            .abs();
        if defect > ctrl.tol * dt && dt > ctrl.min_dt {
            dt *= 0.5;
            continue;
        }
        state = next;
        snap = next_snap;
        ledger.push(acc.push(state.t, &state.w, &state.wt)?);
        if opts.record_states {
            states.push(state.clone());
        }
        if defect < 0.1 * ctrl.tol * dt {
            dt = (dt * 1.25).min(base_dt);
        }
    }
    sim.set_dt(base_dt);
    Ok(Trajectory { ledger, states, status })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlin::Role;
    use crate::spectral::{Domain, PI};

    fn pi_square(n: usize) -> Basis {
        Basis::build(Domain::new(PI, PI).unwrap(), n, 2 * n).unwrap()
    }

    #[test]
    fn propagator_matches_closed_form_at_lambda_two() {
        // c'' + 2c' + 2c = 0 from (1, -1): c(t) = e^{-t} cos t
        let p = ModePropagator::new(2.0, 0.1);
        let y = p.apply([1.0, -1.0], 0.0);
        let t = 0.1f64;
        let want0 = (-t).exp() * t.cos();
        let want1 = -(-t).exp() * (t.cos() + t.sin());
        assert!((y[0] - want0).abs() < 1e-14, "{:.17} vs {want0:.17}", y[0]);
        assert!((y[1] - want1).abs() < 1e-14);
    }

    #[test]
    fn propagator_identity_at_zero_step() {
        for lambda in [0.5, 2.0, 4.0, 100.0] {
            let p = ModePropagator::new(lambda, 0.0);
            assert_eq!(p.matrix, [[1.0, 0.0], [0.0, 1.0]]);
            assert_eq!(p.forced, [0.0, 0.0]);
        }
    }

    #[test]
    fn liouville_determinant() {
        let lambdas: [f64; 7] = [0.5, 2.0, 4.0, 4.0 - 1e-7, 4.0 + 1e-7, 100.0, 1e4];
        for lambda in lambdas {
            let dt = (8.0 / lambda).min(0.1);
            let p = ModePropagator::new(lambda, dt);
            let want = (-lambda * dt).exp();
            let got = p.det();
            assert!(
                (got - want).abs() <= 1e-12 * want,
                "lambda {lambda}: det {got:.3e} vs {want:.3e}"
            );
        }
    }

    #[test]
    fn branch_continuity_across_double_root() {
        for k in 5..=9 {
            let eps = 10f64.powi(-k);
            let dt = 0.13;
            let base = ModePropagator::new(4.0, dt);
            for lam in [4.0 - eps, 4.0 + eps] {
                let p = ModePropagator::new(lam, dt);
                for i in 0..2 {
                    for j in 0..2 {
                        let d = (p.matrix[i][j] - base.matrix[i][j]).abs();
                        assert!(d <= 1e-6, "lambda {lam}: entry ({i},{j}) differs by {d:.2e}");
                    }
                }
            }
        }
    }

    #[test]
    fn forced_response_reaches_steady_state() {
        // y' = A y + e2 r: equilibrium is (r / lambda, 0)
        let lambda = 3.0;
        let r = 2.4;
        let p = ModePropagator::new(lambda, 50.0);
        let y = p.apply([0.3, -0.1], r);
        assert!((y[0] - r / lambda).abs() < 1e-10, "{y:?}");
        assert!(y[1].abs() < 1e-10);
    }

    fn zero_specs() -> (NonlinearitySpec, NonlinearitySpec) {
        (
            NonlinearitySpec::linear(0.0, Role::Damping),
            NonlinearitySpec::linear(0.0, Role::Source),
        )
    }

    #[test]
    fn linear_step_is_pure_flight() {
        let basis = pi_square(4);
        let (f, g) = zero_specs();
        let h = SpectralField::zeros(4);
        let sim = Simulator::new(basis, f, g, h, 0.1, Scheme::ExponentialMidpoint).unwrap();
        let w0 = SpectralField::from_modes(4, &[(1, 1, 1.0)]).unwrap();
        let w1 = SpectralField::from_modes(4, &[(1, 1, -1.0)]).unwrap();
        let next = sim.step(&PhaseState::new(w0, w1, 0.0)).unwrap();
        let t = 0.1f64;
        assert!((next.w.at(1, 1) - (-t).exp() * t.cos()).abs() < 1e-14);
        assert!((next.wt.at(1, 1) + (-t).exp() * (t.cos() + t.sin())).abs() < 1e-14);
    }

    #[test]
    fn equilibrium_is_exact_fixed_point() {
        // -lap w + w = h on (0, pi)^2 with h = phi_11: w* = phi_11 / 3
        let basis = pi_square(4);
        let f = NonlinearitySpec::linear(0.0, Role::Damping);
        let g = NonlinearitySpec::linear(1.0, Role::Source);
        let h = SpectralField::from_modes(4, &[(1, 1, 1.0)]).unwrap();
        let sim = Simulator::new(basis, f, g, h, 0.05, Scheme::ExponentialMidpoint).unwrap();
        let ws = SpectralField::from_modes(4, &[(1, 1, 1.0 / 3.0)]).unwrap();
        let state = PhaseState::new(ws.clone(), SpectralField::zeros(4), 0.0);
        let next = sim.step(&state).unwrap();
        let drift = next.w.sub(&ws).coeffs().iter().fold(0.0f64, |m, c| m.max(c.abs()))
            .max(next.wt.coeffs().iter().fold(0.0f64, |m, c| m.max(c.abs())));
        assert!(drift < 1e-8, "fixed-point drift {drift:.2e}");
    }

    #[test]
    fn zero_data_stays_zero() {
        let basis = pi_square(4);
        let f = NonlinearitySpec::exp_power_damping(0.5).unwrap();
        let g = NonlinearitySpec::exp_source(1.0, 1.0).unwrap();
        let h = SpectralField::zeros(4);
        let mut sim = Simulator::new(basis, f, g, h, 0.01, Scheme::ExponentialMidpoint).unwrap();
        let z = SpectralField::zeros(4);
        let out = simulate(&mut sim, &z, &z, &SimOptions { horizon: 0.2, ..Default::default() }).unwrap();
        assert_eq!(out.status, RunStatus::Completed);
        for row in &out.ledger {
            assert_eq!(row.lyapunov, 0.0);
            assert_eq!(row.balance_residual, 0.0);
        }
    }

    #[test]
    fn second_order_self_convergence() {
        let f = NonlinearitySpec::exp_power_damping(0.5).unwrap();
        let g = NonlinearitySpec::exp_source(1.0, 1.0).unwrap();
        let h = SpectralField::from_modes(6, &[(1, 1, 0.3)]).unwrap();
        let w0 = SpectralField::from_modes(6, &[(1, 1, 0.5), (2, 2, 0.2)]).unwrap();
        let w1 = SpectralField::from_modes(6, &[(1, 2, 0.4)]).unwrap();
        let horizon = 0.5;
        let run = |dt: f64| -> PhaseState {
            let basis = pi_square(6);
            let mut sim =
                Simulator::new(basis, f.clone(), g.clone(), h.clone(), dt, Scheme::ExponentialMidpoint)
                    .unwrap();
            let opts = SimOptions {
                horizon,
                output_stride: usize::MAX,
                record_states: true,
                ..Default::default()
            };
            simulate(&mut sim, &w0, &w1, &opts).unwrap().states.last().unwrap().clone()
        };
        let reference = run(2.5e-4);
        let err = |dt: f64| -> f64 {
            let s = run(dt);
            let dw = s.w.sub(&reference.w);
            let dwt = s.wt.sub(&reference.wt);
            (dw.dot(&dw) + dwt.dot(&dwt)).sqrt()
        };
        let e1 = err(4e-3);
        let e2 = err(2e-3);
        let e3 = err(1e-3);
        let order12 = (e1 / e2).log2();
        let order23 = (e2 / e3).log2();
        assert!(
            (1.7..2.3).contains(&order12) && (1.7..2.3).contains(&order23),
            "orders {order12:.2}, {order23:.2} (errors {e1:.2e}, {e2:.2e}, {e3:.2e})"
        );
    }

    #[test]
    fn euler_mode_is_first_order() {
        let f = NonlinearitySpec::exp_power_damping(0.5).unwrap();
        let g = NonlinearitySpec::linear(1.0, Role::Source);
        let h = SpectralField::zeros(4);
        let w0 = SpectralField::from_modes(4, &[(1, 1, 0.5)]).unwrap();
        let w1 = SpectralField::from_modes(4, &[(2, 1, 0.3)]).unwrap();
        let run = |dt: f64, scheme: Scheme| -> PhaseState {
            let basis = pi_square(4);
            let mut sim = Simulator::new(basis, f.clone(), g.clone(), h.clone(), dt, scheme).unwrap();
            let opts = SimOptions {
                horizon: 0.4,
                output_stride: usize::MAX,
                record_states: true,
                ..Default::default()
            };
            simulate(&mut sim, &w0, &w1, &opts).unwrap().states.last().unwrap().clone()
        };
        let reference = run(1e-4, Scheme::ExponentialMidpoint);
        let err = |dt: f64| {
            let s = run(dt, Scheme::ExponentialEuler);
            let dw = s.w.sub(&reference.w);
            (dw.dot(&dw)).sqrt()
        };
        let order = (err(4e-3) / err(1e-3)).log2() / 2.0;
        assert!((0.8..1.3).contains(&order), "euler order {order:.2}");
    }

    #[test]
    fn semigroup_restart_matches_straight_run() {
        let f = NonlinearitySpec::exp_power_damping(0.5).unwrap();
        let g = NonlinearitySpec::exp_source(1.0, 1.0).unwrap();
        let h = SpectralField::from_modes(4, &[(1, 1, 0.2)]).unwrap();
        let w0 = SpectralField::from_modes(4, &[(1, 1, 0.4)]).unwrap();
        let w1 = SpectralField::zeros(4);
        let opts = |horizon: f64| SimOptions {
            horizon,
            output_stride: usize::MAX,
            record_states: true,
            ..Default::default()
        };
        let basis = pi_square(4);
        let mut sim =
            Simulator::new(basis, f, g, h, 1e-2, Scheme::ExponentialMidpoint).unwrap();
        let straight = simulate(&mut sim, &w0, &w1, &opts(2.0)).unwrap();
        let first = simulate(&mut sim, &w0, &w1, &opts(1.0)).unwrap();
        let s1 = first.final_state().unwrap().clone();
        let second = simulate(&mut sim, &s1.w, &s1.wt, &opts(1.0)).unwrap();
        let end_restart = second.final_state().unwrap();
        let end_straight = straight.final_state().unwrap();
        let d = end_restart.w.sub(&end_straight.w);
        let dev = d.dot(&d).sqrt();
        assert!(dev < 1e-8, "flow property violated by {dev:.2e}");
    }

    #[test]
    fn grid_data_projection_reports_truncated_mass() {
        let basis = pi_square(4);
        let fine = Basis::build(Domain::new(PI, PI).unwrap(), 4, 8).unwrap();
        let f = SpectralField::from_modes(4, &[(1, 1, 2.0)]).unwrap();
        let g0 = fine.to_grid(&f).unwrap();
        let g1 = crate::spectral::GridField::zeros(8);
        let (state, (f0, f1)) = project_initial_data_from_grid(&g0, &g1, &basis).unwrap();
        assert!((state.w.at(1, 1) - 2.0).abs() < 1e-10);
        assert!(f0 < 1e-10, "no mass should be discarded, got {f0}");
        assert_eq!(f1, 0.0);
    }

    #[test]
    fn step_control_accepts_and_completes() {
        let basis = pi_square(4);
        let f = NonlinearitySpec::exp_power_damping(0.5).unwrap();
        let g = NonlinearitySpec::exp_source(1.0, 1.0).unwrap();
        let h = SpectralField::from_modes(4, &[(1, 1, 0.2)]).unwrap();
        let mut sim = Simulator::new(basis, f, g, h, 5e-3, Scheme::ExponentialMidpoint).unwrap();
        let w0 = SpectralField::from_modes(4, &[(1, 1, 0.5)]).unwrap();
        let w1 = SpectralField::zeros(4);
        let opts = SimOptions {
            horizon: 0.5,
            output_stride: 1,
            record_states: true,
            linf_factor: 1,
            step_control: Some(StepControl { tol: 1e-5, min_dt: 1e-5 }),
        };
        let traj = simulate(&mut sim, &w0, &w1, &opts).unwrap();
        assert_eq!(traj.status, RunStatus::Completed);
        let end = traj.states.last().unwrap();
        assert!((end.t - 0.5).abs() < 1e-9, "horizon reached, t = {}", end.t);
        // times strictly increase along the accepted schedule
        for pair in traj.states.windows(2) {
            assert!(pair[1].t > pair[0].t);
        }
    }

    #[test]
    fn linear_run_reproduces_decay_envelope() {
        // on the unit square the lowest eigenvalue 2 pi^2 > 4 gives real
        // roots; the amplitude must decay like the slow one
        let basis = Basis::build(Domain::new(1.0, 1.0).unwrap(), 3, 6).unwrap();
        let lambda = basis.eigenvalue(1, 1);
        let disc = (lambda * (lambda - 4.0)).sqrt();
        let r_fast = 0.5 * (-lambda - disc);
        let r_slow = lambda / r_fast;
        let (f, g) = zero_specs();
        let mut sim =
            Simulator::new(basis, f, g, SpectralField::zeros(3), 1e-3, Scheme::ExponentialMidpoint)
                .unwrap();
        let w0 = SpectralField::from_modes(3, &[(1, 1, 1.0)]).unwrap();
        let w1 = SpectralField::zeros(3);
        let opts = SimOptions { horizon: 4.0, output_stride: 100, linf_factor: 1, ..Default::default() };
        let traj = simulate(&mut sim, &w0, &w1, &opts).unwrap();
        // fit the log slope over the pure-decay window [1, 4]
        let pts: Vec<(f64, f64)> = traj
            .ledger
            .iter()
            .filter(|r| r.t >= 1.0 && r.l2_w > 0.0)
            .map(|r| (r.t, r.l2_w.ln()))
            .collect();
        let n = pts.len() as f64;
        let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let slope = pts.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - tm) * (p.0 - tm)).sum::<f64>();
        assert!(
            (slope - r_slow).abs() <= 0.01 * r_slow.abs(),
            "fitted decay {slope:.5} vs slow root {r_slow:.5}"
        );
    }

    #[test]
    fn dissipation_ledgers_are_nondecreasing() {
        let basis = pi_square(6);
        let f = NonlinearitySpec::exp_power_damping(0.5).unwrap();
        let g = NonlinearitySpec::exp_source(1.0, 1.0).unwrap();
        let h = SpectralField::from_modes(6, &[(1, 1, 0.3)]).unwrap();
        let mut sim = Simulator::new(basis, f, g, h, 1e-3, Scheme::ExponentialMidpoint).unwrap();
        let w0 = SpectralField::from_modes(6, &[(1, 1, 0.5)]).unwrap();
        let w1 = SpectralField::from_modes(6, &[(2, 1, 0.4)]).unwrap();
        let opts = SimOptions { horizon: 1.0, output_stride: 10, linf_factor: 1, ..Default::default() };
        let traj = simulate(&mut sim, &w0, &w1, &opts).unwrap();
        for pair in traj.ledger.windows(2) {
            assert!(pair[1].visc_cum >= pair[0].visc_cum - 1e-15);
            assert!(pair[1].shifted_cum >= pair[0].shifted_cum - 1e-15);
        }
    }

    #[test]
    fn saturation_truncates_with_status() {
        let f = NonlinearitySpec::linear(0.0, Role::Damping);
        let g = NonlinearitySpec::exp_source(1.0, 1.0).unwrap();
        let h = SpectralField::zeros(4);
        let basis = pi_square(4);
        let mut sim = Simulator::new(basis, f, g, h, 1e-2, Scheme::ExponentialMidpoint).unwrap();
        // data already outside the representable range of e^w
        let w0 = SpectralField::from_modes(4, &[(1, 1, 900.0)]).unwrap();
        let w1 = SpectralField::zeros(4);
        let out = simulate(&mut sim, &w0, &w1, &SimOptions { horizon: 0.1, ..Default::default() });
        match out {
            Err(SdError::Saturation { .. }) => {} // saturation at the initial ledger entry
            Ok(t) => assert!(matches!(t.status, RunStatus::Saturated { .. })),
            Err(e) => panic!("unexpected error {e}"),
        }
    }
}
