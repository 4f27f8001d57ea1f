//! Energy functional, energy-balance residual, Lyapunov series and
//! dissipation ledgers along a trajectory.
//!
//! Instantaneous quantities come from spectral sums (kinetic, potential,
//! forcing pairing) and grid quadrature (source potential, damping pairing);
//! cumulative integrals advance by the trapezoid rule on the output schedule,
//! which keeps the ledger independent of the integrator internals.

use crate::error::Result;
use crate::nonlin::NonlinearitySpec;
use crate::spectral::{Basis, SpectralField};

/// One output-time record of the energy bookkeeping.
#[derive(Debug, Clone)]
pub struct LedgerRow {
    pub t: f64,
    /// 0.5 |w_t|_{L2}^2
    pub kinetic: f64,
    /// 0.5 |grad w|_{L2}^2
    pub potential: f64,
    /// integral of G(w) over the domain
    pub source_potential: f64,
    /// <h, w>
    pub forcing: f64,
    /// kinetic + potential + source_potential - forcing
    pub lyapunov: f64,
    /// cumulative integral of |grad w_t|^2
    pub visc_cum: f64,
    /// cumulative integral of <f(w_t), w_t>
    pub damping_cum: f64,
    /// cumulative integral of <f1(w_t), w_t>, f1 the shifted damping
    pub shifted_cum: f64,
    /// defect of the energy identity up to this time
    pub balance_residual: f64,
    pub l2_w: f64,
    pub h1_w: f64,
    pub l2_wt: f64,
    pub linf_w: f64,
}

/// Instantaneous pieces needed both for the ledger and for per-step defect
/// control.
#[derive(Debug, Clone, Copy)]
pub struct EnergySnapshot {
    pub kinetic: f64,
    pub potential: f64,
    pub source_potential: f64,
    pub forcing: f64,
    pub visc_integrand: f64,
    pub damping_integrand: f64,
    pub shifted_integrand: f64,
    pub l2_w: f64,
    pub h1_w: f64,
    pub l2_wt: f64,
}

impl EnergySnapshot {
    /// Energy without the forcing pairing: kinetic + potential + <G(w), 1>.
    pub fn energy(&self) -> f64 {
        self.kinetic + self.potential + self.source_potential
    }

    pub fn lyapunov(&self) -> f64 {
        self.energy() - self.forcing
    }
}

pub struct EnergyReporter<'a> {
    pub basis: &'a Basis,
    f_spec: &'a NonlinearitySpec,
    g_spec: &'a NonlinearitySpec,
    h: &'a SpectralField,
    lambda1: f64,
    pub linf_factor: usize,
}

impl<'a> EnergyReporter<'a> {
    pub fn new(
        basis: &'a Basis,
        f_spec: &'a NonlinearitySpec,
        g_spec: &'a NonlinearitySpec,
        h: &'a SpectralField,
        linf_factor: usize,
    ) -> Self {
        let lambda1 = basis.lambda1();
        EnergyReporter { basis, f_spec, g_spec, h, lambda1, linf_factor }
    }

    pub fn snapshot(&self, w: &SpectralField, wt: &SpectralField) -> Result<EnergySnapshot> {
        let l2_w = self.basis.sobolev_norm(w, 0.0);
        let h1_w = self.basis.sobolev_norm(w, 1.0);
        let l2_wt = self.basis.sobolev_norm(wt, 0.0);
        let h1_wt = self.basis.sobolev_norm(wt, 1.0);

        let (hx, hy) = self.basis.grid_spacing();
        let weight = hx * hy;
        let mut source_potential = 0.0;
        if !self.g_spec.is_zero() {
            let w_grid = self.basis.to_grid(w)?;
            for &v in w_grid.values() {
                source_potential += self.g_spec.eval_antiderivative(v)?;
            }
            source_potential *= weight;
        }
        let mut damping = 0.0;
        if !self.f_spec.is_zero() {
            let wt_grid = self.basis.to_grid(wt)?;
            for &v in wt_grid.values() {
                damping += self.f_spec.eval(v)? * v;
            }
            damping *= weight;
        }
        let shifted = damping + self.lambda1 * l2_wt * l2_wt;

        Ok(EnergySnapshot {
            kinetic: 0.5 * l2_wt * l2_wt,
            potential: 0.5 * h1_w * h1_w,
            source_potential,
            forcing: self.h.dot(w),
            visc_integrand: h1_wt * h1_wt,
            damping_integrand: damping,
            shifted_integrand: shifted,
            l2_w,
            h1_w,
            l2_wt,
        })
    }
}

/// Accumulates ledger rows along a run, advancing the cumulative integrals by
/// trapezoid between consecutive pushes.
pub struct LedgerAccumulator<'a> {
    reporter: EnergyReporter<'a>,
    prev: Option<(f64, EnergySnapshot)>,
    e0: Option<f64>,
    forcing0: f64,
    visc_cum: f64,
    damping_cum: f64,
    shifted_cum: f64,
}

impl<'a> LedgerAccumulator<'a> {
    pub fn new(reporter: EnergyReporter<'a>) -> Self {
        LedgerAccumulator {
            reporter,
            prev: None,
            e0: None,
            forcing0: 0.0,
            visc_cum: 0.0,
            damping_cum: 0.0,
            shifted_cum: 0.0,
        }
    }

    pub fn push(&mut self, t: f64, w: &SpectralField, wt: &SpectralField) -> Result<LedgerRow> {
        let snap = self.reporter.snapshot(w, wt)?;
        if let Some((tp, prev)) = &self.prev {
            let dt = t - tp;
            self.visc_cum += 0.5 * dt * (prev.visc_integrand + snap.visc_integrand);
            self.damping_cum += 0.5 * dt * (prev.damping_integrand + snap.damping_integrand);
            self.shifted_cum += 0.5 * dt * (prev.shifted_integrand + snap.shifted_integrand);
        } else {
            self.e0 = Some(snap.energy());
            self.forcing0 = snap.forcing;
        }
        let e0 = self.e0.unwrap();
        let balance_residual =
            snap.energy() + self.visc_cum + self.damping_cum - e0 - (snap.forcing - self.forcing0);
        let linf_w = self.reporter.basis.linf_norm(w, self.reporter.linf_factor);
        let row = LedgerRow {
            t,
            kinetic: snap.kinetic,
            potential: snap.potential,
            source_potential: snap.source_potential,
            forcing: snap.forcing,
            lyapunov: snap.lyapunov(),
            visc_cum: self.visc_cum,
            damping_cum: self.damping_cum,
            shifted_cum: self.shifted_cum,
            balance_residual,
            l2_w: snap.l2_w,
            h1_w: snap.h1_w,
            l2_wt: snap.l2_wt,
            linf_w,
        };
        self.prev = Some((t, snap));
        Ok(row)
    }
}

/// Balance residual series: (t, raw, relative to E(0) + 1).
pub fn balance_residual_series(rows: &[LedgerRow]) -> Vec<(f64, f64, f64)> {
    if rows.is_empty() {
        return Vec::new();
    }
    let e0 = rows[0].kinetic + rows[0].potential + rows[0].source_potential;
    rows.iter()
        .map(|r| (r.t, r.balance_residual, r.balance_residual / (e0 + 1.0)))
        .collect()
}

pub fn max_abs_residual(rows: &[LedgerRow]) -> f64 {
    rows.iter().fold(0.0f64, |m, r| m.max(r.balance_residual.abs()))
}

#[derive(Debug, Clone)]
pub struct MonotonicityVerdict {
    pub monotone: bool,
    /// worst increase beyond the allowed slack, with its time
    pub worst_violation: Option<(f64, f64)>,
    pub tol_abs: f64,
    pub tol_rel: f64,
}

/// Checks L(t_{k+1}) <= L(t_k) + slack on every recorded pair, with the
/// two-tier slack tol_abs + tol_rel |L(t_k)|.
pub fn lyapunov_monotonicity(rows: &[LedgerRow], tol_abs: f64, tol_rel: f64) -> MonotonicityVerdict {
    let mut worst: Option<(f64, f64)> = None;
    for pair in rows.windows(2) {
        let slack = tol_abs + tol_rel * pair[0].lyapunov.abs();
        let increase = pair[1].lyapunov - pair[0].lyapunov - slack;
        if increase > 0.0 && worst.map_or(true, |(_, w)| increase > w) {
            worst = Some((pair[1].t, increase));
        }
    }
    MonotonicityVerdict { monotone: worst.is_none(), worst_violation: worst, tol_abs, tol_rel }
}

/// Run-reported boundedness constant: the largest value over the horizon of
/// |w|_{H1} + |w_t|_{L2} plus both terminal dissipation integrals.
pub fn energy_bound_constant(rows: &[LedgerRow]) -> f64 {
    let sup = rows.iter().fold(0.0f64, |m, r| m.max(r.h1_w + r.l2_wt));
    let last = rows.last().map(|r| r.visc_cum + r.shifted_cum).unwrap_or(0.0);
    sup + last
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlin::Role;
    use crate::spectral::{Domain, PI};

    fn specs() -> (NonlinearitySpec, NonlinearitySpec) {
        (
            NonlinearitySpec::exp_power_damping(0.5).unwrap(),
            NonlinearitySpec::linear(1.0, Role::Source),
        )
    }

    #[test]
    fn zero_state_gives_zero_row() {
        let basis = Basis::build(Domain::new(1.0, 1.0).unwrap(), 4, 8).unwrap();
        let (f, g) = specs();
        let h = SpectralField::zeros(4);
        let rep = EnergyReporter::new(&basis, &f, &g, &h, 4);
        let mut acc = LedgerAccumulator::new(rep);
        let z = SpectralField::zeros(4);
        let row = acc.push(0.0, &z, &z).unwrap();
        for v in [
            row.kinetic,
            row.potential,
            row.source_potential,
            row.forcing,
            row.lyapunov,
            row.visc_cum,
            row.damping_cum,
            row.shifted_cum,
            row.balance_residual,
            row.linf_w,
        ] {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn single_mode_energy_closed_form() {
        // w = phi_11 on (0, pi)^2, w_t = 0, g(s) = s, h = 0:
        // potential = lambda1/2 = 1, <G(w), 1> = |w|^2/2 = 1/2, L = 3/2
        let basis = Basis::build(Domain::new(PI, PI).unwrap(), 8, 16).unwrap();
        let (f, g) = specs();
        let h = SpectralField::zeros(8);
        let rep = EnergyReporter::new(&basis, &f, &g, &h, 4);
        let w = SpectralField::from_modes(8, &[(1, 1, 1.0)]).unwrap();
        let wt = SpectralField::zeros(8);
        let snap = rep.snapshot(&w, &wt).unwrap();
        assert_eq!(snap.kinetic, 0.0);
        assert!((snap.potential - 1.0).abs() < 1e-12);
        assert!((snap.source_potential - 0.5).abs() < 1e-12);
        assert!((snap.lyapunov() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn shifted_cum_identity_with_velocity_mass() {
        // shifted_cum - damping_cum must equal lambda1 * trapz(|w_t|^2)
        let basis = Basis::build(Domain::new(PI, PI).unwrap(), 4, 8).unwrap();
        let (f, g) = specs();
        let h = SpectralField::zeros(4);
        let rep = EnergyReporter::new(&basis, &f, &g, &h, 4);
        let mut acc = LedgerAccumulator::new(rep);
        let mut rows = Vec::new();
        for i in 0..5 {
            let t = i as f64 * 0.1;
            let w = SpectralField::from_modes(4, &[(1, 1, (1.0 + t).sin())]).unwrap();
            let wt = SpectralField::from_modes(4, &[(1, 2, (2.0 * t).cos() * 0.3)]).unwrap();
            rows.push(acc.push(t, &w, &wt).unwrap());
        }
        let ts: Vec<f64> = rows.iter().map(|r| r.t).collect();
        let m: Vec<f64> = rows.iter().map(|r| r.l2_wt * r.l2_wt).collect();
        let mass = crate::quad::cumtrapz(&ts, &m);
        let last = rows.last().unwrap();
        let lhs = last.shifted_cum - last.damping_cum;
        let rhs = basis.lambda1() * mass.last().unwrap();
        assert!((lhs - rhs).abs() < 1e-12 * (1.0 + rhs.abs()), "{lhs} vs {rhs}");
    }

    #[test]
    fn monotonicity_slack_two_tier() {
        let mk = |t: f64, l: f64| LedgerRow {
            t,
            kinetic: 0.0,
            potential: 0.0,
            source_potential: 0.0,
            forcing: 0.0,
            lyapunov: l,
            visc_cum: 0.0,
            damping_cum: 0.0,
            shifted_cum: 0.0,
            balance_residual: 0.0,
            l2_w: 0.0,
            h1_w: 0.0,
            l2_wt: 0.0,
            linf_w: 0.0,
        };
        let rows = vec![mk(0.0, 100.0), mk(1.0, 100.00005), mk(2.0, 50.0)];
        // an increase of 5e-5 sits inside the relative slack 1e-6 * 100
        let v = lyapunov_monotonicity(&rows, 1e-8, 1e-6);
        assert!(v.monotone, "{v:?}");
        let rows = vec![mk(0.0, 1.0), mk(1.0, 1.1)];
        let v = lyapunov_monotonicity(&rows, 1e-8, 1e-6);
        assert!(!v.monotone);
        assert!(v.worst_violation.unwrap().1 > 0.09);
    }
}
