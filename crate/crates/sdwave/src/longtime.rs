//! Long-time structure: stationary states by Newton iteration in spectral
//! space, dissipativity sweeps over ensembles with the integer-time
//! contraction fit, and distance-to-equilibria series for attraction checks.

use crate::dynamics::{simulate, PhaseState, RunStatus, Scheme, SimOptions, Simulator};
use crate::error::{Result, SdError};
use crate::nonlin::NonlinearitySpec;
use crate::spectral::{Basis, GridField, SpectralField};

/// Converged stationary state of -lap w + g(w) = h.
#[derive(Debug, Clone)]
pub struct Equilibrium {
    pub w_star: SpectralField,
    pub residual: f64,
    pub newton_iters: usize,
}

struct StationaryOperator<'a> {
    basis: &'a Basis,
    g_spec: &'a NonlinearitySpec,
    h: &'a SpectralField,
}

impl<'a> StationaryOperator<'a> {
    /// R(w) = lap-part + projected g(w) - h in spectral coefficients.
    fn residual_field(&self, w: &SpectralField) -> Result<SpectralField> {
        let n = self.basis.n();
        let mut r = SpectralField::zeros(n);
        for idx in 0..n * n {
            r.coeffs_mut()[idx] = self.basis.eigenvalues()[idx] * w.coeffs()[idx];
        }
        if !self.g_spec.is_zero() {
            let wg = self.basis.to_grid(w)?;
            let m = self.basis.m();
            let mut vals = vec![0.0; m * m];
            for (v, &x) in vals.iter_mut().zip(wg.values()) {
                *v = self.g_spec.eval(x)?;
            }
            r.axpy(1.0, &self.basis.to_spectral(&GridField::from_values(m, vals)?)?);
        }
        r.axpy(-1.0, self.h);
        Ok(r)
    }

    /// Matrix-free Jacobian action (lap-part + multiplication by g'(w)).
    fn jacobian_apply(
        &self,
        gprime: &GridField,
        v: &SpectralField,
    ) -> Result<SpectralField> {
        let n = self.basis.n();
        let mut out = SpectralField::zeros(n);
        for idx in 0..n * n {
            out.coeffs_mut()[idx] = self.basis.eigenvalues()[idx] * v.coeffs()[idx];
        }
        if !self.g_spec.is_zero() {
            let vg = self.basis.to_grid(v)?;
            let m = self.basis.m();
            let mut vals = vec![0.0; m * m];
            for i in 0..m * m {
                vals[i] = gprime.values()[i] * vg.values()[i];
            }
            out.axpy(1.0, &self.basis.to_spectral(&GridField::from_values(m, vals)?)?);
        }
        Ok(out)
    }

    fn gprime_grid(&self, w: &SpectralField) -> Result<GridField> {
        let m = self.basis.m();
        if self.g_spec.is_zero() {
            return GridField::from_values(m, vec![0.0; m * m]);
        }
        let wg = self.basis.to_grid(w)?;
        let mut vals = vec![0.0; m * m];
        for (v, &x) in vals.iter_mut().zip(wg.values()) {
            *v = self.g_spec.eval_derivative(x)?;
        }
        GridField::from_values(m, vals)
    }

    /// Preconditioned conjugate gradients on J d = b with the inverse
    /// lap-part as preconditioner (diagonal in this basis). Nonpositive
    /// curvature truncates the solve; the line search guards the rest.
    fn solve_newton_system(
        &self,
        gprime: &GridField,
        b: &SpectralField,
        rel_tol: f64,
        max_iters: usize,
    ) -> Result<SpectralField> {
        let n = self.basis.n();
        let precond = |r: &SpectralField| -> SpectralField {
            let mut z = SpectralField::zeros(n);
            for idx in 0..n * n {
                z.coeffs_mut()[idx] = r.coeffs()[idx] / self.basis.eigenvalues()[idx];
            }
            z
        };
        let bnorm = b.dot(b).sqrt();
        if bnorm == 0.0 {
            return Ok(SpectralField::zeros(n));
        }
        let mut x = SpectralField::zeros(n);
        let mut r = b.clone();
        let mut z = precond(&r);
        let mut p = z.clone();
        let mut rz = r.dot(&z);
        for iter in 0..max_iters {
            let q = self.jacobian_apply(gprime, &p)?;
            let pq = p.dot(&q);
            if pq <= 0.0 {
                if iter == 0 {
                    x = z; // preconditioned steepest-descent fallback
                }
                return Ok(x);
            }
            let alpha = rz / pq;
            x.axpy(alpha, &p);
            r.axpy(-alpha, &q);
            if r.dot(&r).sqrt() <= rel_tol * bnorm {
                break;
            }
            z = precond(&r);
            let rz_new = r.dot(&z);
            let beta = rz_new / rz;
            rz = rz_new;
            let mut pnew = z.clone();
            pnew.axpy(beta, &p);
            p = pnew;
        }
        Ok(x)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { tol: 1e-10, max_iters: 50 }
    }
}

/// Newton iteration on the stationary equation, matrix-free with the
/// lap-part preconditioner and a halving line search. The Newton systems are
/// solved to near machine accuracy; they are diagonal-dominated and cheap in
/// this basis, and tight solves keep linear problems one-step exact.
pub fn find_equilibrium(
    basis: &Basis,
    g_spec: &NonlinearitySpec,
    h: &SpectralField,
    initial_guess: &SpectralField,
    opts: NewtonOptions,
) -> Result<Equilibrium> {
    let op = StationaryOperator { basis, g_spec, h };
    let mut w = initial_guess.clone();
    let mut r = op.residual_field(&w)?;
    let mut rn = r.dot(&r).sqrt();
    for iter in 0..opts.max_iters {
        if rn < opts.tol {
            return Ok(Equilibrium { w_star: w, residual: rn, newton_iters: iter });
        }
        let gprime = op.gprime_grid(&w)?;
        let rhs = r.scale(-1.0);
        let direction = op.solve_newton_system(&gprime, &rhs, 1e-12, 400)?;
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let mut wn = w.clone();
            wn.axpy(step, &direction);
            match op.residual_field(&wn) {
                Ok(rnew) => {
                    let nn = rnew.dot(&rnew).sqrt();
                    if nn < rn {
                        w = wn;
                        r = rnew;
                        rn = nn;
                        accepted = true;
                        break;
                    }
                }
                Err(SdError::Saturation { .. }) => {} // step left the range
                Err(e) => return Err(e),
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(SdError::NoConvergence { iters: iter, residual: rn });
        }
    }
    if rn < opts.tol {
        return Ok(Equilibrium { w_star: w, residual: rn, newton_iters: opts.max_iters });
    }
    Err(SdError::NoConvergence { iters: opts.max_iters, residual: rn })
}

/// Multistart search: the zero guess plus seeded random spectral
/// perturbations; converged states at H1 distance below `merge_tol` are
/// considered the same equilibrium. Start order is deterministic in the
/// seed, so the merged list is too.
pub fn find_equilibria_multistart(
    basis: &Basis,
    g_spec: &NonlinearitySpec,
    h: &SpectralField,
    starts: usize,
    seed: u64,
    perturbation: f64,
    opts: NewtonOptions,
) -> Vec<Equilibrium> {
    use rand::Rng;
    use rand::SeedableRng;
    let n = basis.n();
    let mut found: Vec<Equilibrium> = Vec::new();
    for k in 0..starts.max(1) {
        let guess = if k == 0 {
            SpectralField::zeros(n)
        } else {
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed.wrapping_add(k as u64));
            let mut g = SpectralField::zeros(n);
            for idx in 0..n * n {
                let xi: f64 = rng.gen_range(-1.0..1.0);
                g.coeffs_mut()[idx] = perturbation * xi / basis.eigenvalues()[idx];
            }
            g
        };
        if let Ok(eq) = find_equilibrium(basis, g_spec, h, &guess, opts) {
            let merge_tol = 1e-6;
            let duplicate = found.iter().any(|e| {
                basis.sobolev_norm(&e.w_star.sub(&eq.w_star), 1.0) < merge_tol
            });
            if !duplicate {
                found.push(eq);
            }
        }
    }
    found
}

// ---------------------------------------------------------------------------
// dissipativity sweeps

#[derive(Debug, Clone)]
pub struct SweepMember {
    pub index: usize,
    pub status: RunStatus,
    pub sup_h1: f64,
    pub sup_l2_wt: f64,
    pub sup_linf: f64,
    /// |w(n)|_Linf at integer times
    pub iteration: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepVerdict {
    Dissipative,
    Inconclusive { failed_members: Vec<usize> },
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub members: Vec<SweepMember>,
    /// affine contraction fit |w(n+1)| <= a |w(n)| + b over pooled pairs
    pub fit_a: f64,
    pub fit_b: f64,
    pub fit_residual: f64,
    /// run-reported bound on sup_t (|w|_H1 + |w|_Linf + |w_t|_L2)
    pub c_b: f64,
    pub verdict: SweepVerdict,
}

#[derive(Debug, Clone, Copy)]
pub struct SweepOptions {
    pub dt: f64,
    pub horizon: f64,
    pub output_stride: usize,
    pub linf_factor: usize,
    pub scheme: Scheme,
    pub threads: usize,
}

/// Runs every member of the ensemble to the horizon, reports ensemble
/// sup-norms and the integer-time contraction fit. Verdict is dissipative
/// when all members complete and the fitted slope stays below one.
pub fn dissipativity_sweep(
    basis: &Basis,
    f_spec: &NonlinearitySpec,
    g_spec: &NonlinearitySpec,
    h: &SpectralField,
    ensemble: &[(SpectralField, SpectralField)],
    opts: SweepOptions,
) -> Result<SweepReport> {
    let run_member = |idx: usize| -> Result<SweepMember> {
        let mut sim = Simulator::new(
            basis.clone(),
            f_spec.clone(),
            g_spec.clone(),
            h.clone(),
            opts.dt,
            opts.scheme,
        )?;
        let sim_opts = SimOptions {
            horizon: opts.horizon,
            output_stride: opts.output_stride,
            record_states: false,
            linf_factor: opts.linf_factor,
            step_control: None,
        };
        let (w0, w1) = &ensemble[idx];
        let traj = simulate(&mut sim, w0, w1, &sim_opts)?;
        let mut sup_h1 = 0.0f64;
        let mut sup_l2_wt = 0.0f64;
        let mut sup_linf = 0.0f64;
        for row in &traj.ledger {
            sup_h1 = sup_h1.max(row.h1_w);
            sup_l2_wt = sup_l2_wt.max(row.l2_wt);
            sup_linf = sup_linf.max(row.linf_w);
        }
        let mut iteration = Vec::new();
        let mut n = 0usize;
        for row in &traj.ledger {
            if (row.t - n as f64).abs() <= 0.5 * opts.dt {
                iteration.push((n, row.linf_w));
                n += 1;
            }
        }
        Ok(SweepMember { index: idx, status: traj.status, sup_h1, sup_l2_wt, sup_linf, iteration })
    };

    let threads = opts.threads.max(1).min(ensemble.len().max(1));
    let mut members: Vec<Option<Result<SweepMember>>> = Vec::new();
    members.resize_with(ensemble.len(), || None);
    if threads <= 1 {
        for (i, slot) in members.iter_mut().enumerate() {
            *slot = Some(run_member(i));
        }
    } else {
        let run_ref = &run_member;
        let results: std::sync::Mutex<Vec<Option<Result<SweepMember>>>> = {
            let mut v = Vec::new();
            v.resize_with(ensemble.len(), || None);
            std::sync::Mutex::new(v)
        };
        std::thread::scope(|scope| {
            for chunk_start in 0..threads {
                let results = &results;
                scope.spawn(move || {
                    let mut i = chunk_start;
                    while i < ensemble.len() {
                        let out = run_ref(i);
                        results.lock().unwrap()[i] = Some(out);
                        i += threads;
                    }
                });
            }
        });
        members = results.into_inner().unwrap();
    }

    let mut resolved = Vec::with_capacity(ensemble.len());
    for m in members {
        resolved.push(m.expect("member executed")?);
    }

    // pooled affine fit over consecutive integer-time pairs
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for m in &resolved {
        for pair in m.iteration.windows(2) {
            xs.push(pair[0].1);
            ys.push(pair[1].1);
        }
    }
    let (fit_a, fit_b) = affine_fit(&xs, &ys);
    let fit_residual = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - (fit_a * x + fit_b)).abs())
        .fold(0.0f64, f64::max);

    let c_b = resolved
        .iter()
        .map(|m| m.sup_h1 + m.sup_linf + m.sup_l2_wt)
        .fold(0.0f64, f64::max);

    let failed: Vec<usize> = resolved
        .iter()
        .filter(|m| m.status != RunStatus::Completed)
        .map(|m| m.index)
        .collect();
    let verdict = if failed.is_empty() && fit_a < 1.0 {
        SweepVerdict::Dissipative
    } else if failed.is_empty() {
        SweepVerdict::Inconclusive { failed_members: Vec::new() }
    } else {
        SweepVerdict::Inconclusive { failed_members: failed }
    };

    Ok(SweepReport { members: resolved, fit_a, fit_b, fit_residual, c_b, verdict })
}

/// Least-squares affine fit y = a x + b; a degenerate abscissa spread
/// collapses to the mean level with zero slope.
pub fn affine_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - xm) * (x - xm);
        sxy += (x - xm) * (y - ym);
    }
    if sxx < 1e-30 {
        (0.0, ym)
    } else {
        let a = sxy / sxx;
        (a, ym - a * xm)
    }
}

// ---------------------------------------------------------------------------
// attraction

#[derive(Debug, Clone)]
pub struct AttractorReport {
    /// (t, distance, |w_t|_L2) per sample
    pub series: Vec<(f64, f64, f64)>,
    pub final_distance: f64,
    pub min_tail_wt: f64,
    pub min_tail_distance: f64,
    pub converged: bool,
    /// a non-decreasing tail with distance still above tolerance
    pub plateau: bool,
    pub tol: f64,
}

/// Distance d(t) = min over equilibria of |w - w*|_{H1} + |w_t|_{L2} along
/// the sampled trajectory, with convergence checks over the tail window.
pub fn attractor_distance(
    basis: &Basis,
    states: &[PhaseState],
    equilibria: &[Equilibrium],
    tail_fraction: f64,
    tol: f64,
) -> Result<AttractorReport> {
    if equilibria.is_empty() {
        return Err(SdError::Invalid("attraction check needs at least one equilibrium".into()));
    }
    if states.is_empty() {
        return Err(SdError::Invalid("attraction check needs recorded states".into()));
    }
    let mut series = Vec::with_capacity(states.len());
    for s in states {
        let wt_norm = basis.sobolev_norm(&s.wt, 0.0);
        let d = equilibria
            .iter()
            .map(|e| basis.sobolev_norm(&s.w.sub(&e.w_star), 1.0) + wt_norm)
            .fold(f64::INFINITY, f64::min);
        series.push((s.t, d, wt_norm));
    }
    let final_distance = series.last().unwrap().1;
    let t_end = series.last().unwrap().0;
    let tail_start = t_end * (1.0 - tail_fraction.clamp(0.0, 1.0));
    let tail: Vec<&(f64, f64, f64)> = series.iter().filter(|(t, _, _)| *t >= tail_start).collect();
    let min_tail_wt = tail.iter().map(|e| e.2).fold(f64::INFINITY, f64::min);
    let min_tail_distance = tail.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
    let converged = final_distance < tol;
    let plateau = !converged
        && tail.first().map_or(false, |first| final_distance > 0.9 * first.1);
    Ok(AttractorReport {
        series,
        final_distance,
        min_tail_wt,
        min_tail_distance,
        converged,
        plateau,
        tol,
    })
}
