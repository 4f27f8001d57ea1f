//! Parametric nonlinearity families for the damping and source terms, their
//! antiderivatives, the shifted damping f1(s) = f(s) + lambda1 s with its
//! inverse, a numerical admissibility checker, and the explicit tail constant
//! used by the sup-norm bound.
//!
//! Tail integrals are evaluated with factored integrands so that exponential
//! families stay inside double range far beyond the point where f itself
//! overflows; doubling-interval partial sums decide convergence.

use crate::error::{Result, SdError};
use crate::quad::{self, TailStatus};

/// Values beyond this magnitude saturate: the run has left the physically
/// meaningful regime and the caller is told so instead of seeing infinities.
pub const SATURATION_LIMIT: f64 = 1e300;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Damping,
    Source,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// f(s) = s exp(|s|^alpha). Admissible damping for alpha in [0, 1).
    ExpPower { alpha: f64 },
    /// Polynomial with ascending coefficients c0 + c1 s + c2 s^2 + ...
    Poly { coeffs: Vec<f64> },
    /// g(s) = a (exp(s |s|^(gamma-1)) - 1): exponential growth for s > 0,
    /// bounded below. Admissible source for gamma in [1, 2).
    ExpSource { scale: f64, gamma: f64 },
    /// f(s) = slope * s.
    Linear { slope: f64 },
    /// Monotone-data cubic Hermite table on [s_0, s_last]; evaluation outside
    /// the table saturates.
    CustomTable { knots: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearitySpec {
    pub family: Family,
    pub role: Role,
}

fn sat_err(s: f64, context: &'static str) -> SdError {
    SdError::Saturation { arg: s, context }
}

fn guard(v: f64, s: f64, context: &'static str) -> Result<f64> {
    if v.is_finite() && v.abs() <= SATURATION_LIMIT {
        Ok(v)
    } else {
        Err(sat_err(s, context))
    }
}

impl NonlinearitySpec {
    pub fn exp_power_damping(alpha: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(SdError::Config(format!(
                "exp_power damping exponent must lie in [0, 1), got {alpha}"
            )));
        }
        Ok(Self::exp_power_unchecked(alpha))
    }

    /// Same family without the admissible-range guard; used to feed
    /// deliberately inadmissible controls to the hypothesis checker.
    pub fn exp_power_unchecked(alpha: f64) -> Self {
        NonlinearitySpec { family: Family::ExpPower { alpha }, role: Role::Damping }
    }

    pub fn exp_source(scale: f64, gamma: f64) -> Result<Self> {
        if !(1.0..2.0).contains(&gamma) {
            return Err(SdError::Config(format!(
                "exp_source growth exponent must lie in [1, 2), got {gamma}"
            )));
        }
        Ok(Self::exp_source_unchecked(scale, gamma))
    }

    pub fn exp_source_unchecked(scale: f64, gamma: f64) -> Self {
        NonlinearitySpec { family: Family::ExpSource { scale, gamma }, role: Role::Source }
    }

    pub fn linear(slope: f64, role: Role) -> Self {
        NonlinearitySpec { family: Family::Linear { slope }, role }
    }

    pub fn poly(coeffs: Vec<f64>, role: Role) -> Result<Self> {
        if role == Role::Damping && coeffs.first().copied().unwrap_or(0.0) != 0.0 {
            return Err(SdError::Config(
                "damping polynomial must have zero constant term (f(0) = 0)".into(),
            ));
        }
        Ok(NonlinearitySpec { family: Family::Poly { coeffs }, role })
    }

    pub fn custom_table(knots: Vec<(f64, f64)>, role: Role) -> Result<Self> {
        if knots.len() < 3 {
            return Err(SdError::Config("table needs at least three knots".into()));
        }
        if !knots.windows(2).all(|w| w[0].0 < w[1].0) {
            return Err(SdError::Config("table abscissae must be strictly increasing".into()));
        }
        if role == Role::Damping && !knots.iter().any(|&(s, f)| s == 0.0 && f == 0.0) {
            return Err(SdError::Config("damping table must pass through (0, 0)".into()));
        }
        Ok(NonlinearitySpec { family: Family::CustomTable { knots }, role })
    }

    /// True when the family is identically zero; the stepper skips the
    /// pseudo-spectral stage entirely in that case.
    pub fn is_zero(&self) -> bool {
        match &self.family {
            Family::Linear { slope } => *slope == 0.0,
            Family::Poly { coeffs } => coeffs.iter().all(|c| *c == 0.0),
            Family::ExpSource { scale, .. } => *scale == 0.0,
            _ => false,
        }
    }

    pub fn family_name(&self) -> &'static str {
        match &self.family {
            Family::ExpPower { .. } => "exp_power",
            Family::Poly { .. } => "poly",
            Family::ExpSource { .. } => "exp_source",
            Family::Linear { .. } => "linear",
            Family::CustomTable { .. } => "custom_table",
        }
    }

    pub fn eval(&self, s: f64) -> Result<f64> {
        match &self.family {
            Family::ExpPower { alpha } => {
                let z = s.abs().powf(*alpha);
                guard(s * z.exp(), s, "evaluating damping")
            }
            Family::Poly { coeffs } => {
                let mut v = 0.0;
                for c in coeffs.iter().rev() {
                    v = v * s + c;
                }
                guard(v, s, "evaluating polynomial")
            }
            Family::ExpSource { scale, gamma } => {
                let z = s.signum() * s.abs().powf(*gamma);
                guard(scale * z.exp_m1(), s, "evaluating source")
            }
            Family::Linear { slope } => guard(slope * s, s, "evaluating linear term"),
            Family::CustomTable { knots } => table_eval(knots, s).map(|(v, _)| v),
        }
    }

    pub fn eval_derivative(&self, s: f64) -> Result<f64> {
        match &self.family {
            Family::ExpPower { alpha } => {
                let z = s.abs().powf(*alpha);
                guard(z.exp() * (1.0 + alpha * z), s, "evaluating damping derivative")
            }
            Family::Poly { coeffs } => {
                let mut v = 0.0;
                for (i, c) in coeffs.iter().enumerate().skip(1).rev() {
                    v = v * s + i as f64 * c;
                }
                guard(v, s, "evaluating polynomial derivative")
            }
            Family::ExpSource { scale, gamma } => {
                let z = s.signum() * s.abs().powf(*gamma);
                let v = scale * gamma * s.abs().powf(gamma - 1.0) * z.exp();
                guard(v, s, "evaluating source derivative")
            }
            Family::Linear { slope } => Ok(*slope),
            Family::CustomTable { knots } => table_eval(knots, s).map(|(_, d)| d),
        }
    }

    /// Antiderivative normalized to vanish at 0; closed form where available,
    /// adaptive quadrature from 0 otherwise.
    pub fn eval_antiderivative(&self, s: f64) -> Result<f64> {
        match &self.family {
            Family::Linear { slope } => Ok(0.5 * slope * s * s),
            Family::Poly { coeffs } => {
                let mut v = 0.0;
                for (i, c) in coeffs.iter().enumerate().rev() {
                    v = v * s + c / (i as f64 + 1.0);
                }
                guard(v * s, s, "integrating polynomial")
            }
            Family::ExpSource { scale, gamma } if *gamma == 1.0 => {
                guard(scale * (s.exp() - 1.0 - s), s, "integrating source")
            }
            Family::ExpPower { alpha } if *alpha == 0.0 => {
                Ok(0.5 * std::f64::consts::E * s * s)
            }
            Family::ExpPower { alpha } => {
                // even function of s
                let a = *alpha;
                let hi = s.abs();
                if hi == 0.0 {
                    return Ok(0.0);
                }
                let v = quad::adaptive(&|x: f64| x * x.powf(a).exp(), 0.0, hi, 1e-12, 1e-12)?;
                guard(v, s, "integrating damping")
            }
            Family::ExpSource { scale, gamma } => {
                let (sc, g) = (*scale, *gamma);
                let v = quad::adaptive(
                    &|x: f64| sc * (x.signum() * x.abs().powf(g)).exp_m1(),
                    0.0,
                    s,
                    1e-12,
                    1e-12,
                )?;
                guard(v, s, "integrating source")
            }
            Family::CustomTable { knots } => table_antiderivative(knots, s),
        }
    }

    /// ln |f(s)|, stable where direct evaluation would overflow.
    pub fn ln_abs_eval(&self, s: f64) -> f64 {
        match &self.family {
            Family::ExpPower { alpha } => s.abs().ln() + s.abs().powf(*alpha),
            Family::ExpSource { scale, gamma } => {
                let z = s.signum() * s.abs().powf(*gamma);
                if z > 1.0 {
                    // a(e^z - 1): the -1 is negligible once e^z dominates
                    scale.abs().ln() + z + (-(-z).exp_m1()).ln()
                } else {
                    match self.eval(s) {
                        Ok(v) => v.abs().ln(),
                        Err(_) => f64::INFINITY,
                    }
                }
            }
            Family::Poly { coeffs } => match self.eval(s) {
                Ok(v) => v.abs().ln(),
                Err(_) => {
                    let d = coeffs.len().saturating_sub(1);
                    coeffs.last().copied().unwrap_or(0.0).abs().ln() + d as f64 * s.abs().ln()
                }
            },
            _ => match self.eval(s) {
                Ok(v) => v.abs().ln(),
                Err(_) => f64::INFINITY,
            },
        }
    }

    /// Shifted damping f1(s) = f(s) + lambda1 s; strictly increasing for
    /// admissible f.
    pub fn shifted(&self, lambda1: f64, s: f64) -> Result<f64> {
        Ok(self.eval(s)? + lambda1 * s)
    }

    fn shifted_or_inf(&self, lambda1: f64, s: f64) -> f64 {
        match self.shifted(lambda1, s) {
            Ok(v) => v,
            // monotone growth means overflow can only happen past the target
            Err(_) => s.signum() * f64::INFINITY,
        }
    }

    /// ln |f1(s)|; uses the sign alignment f1(s) s >= 0 of admissible damping.
    pub fn ln_abs_shifted(&self, lambda1: f64, s: f64) -> f64 {
        match self.shifted(lambda1, s) {
            Ok(v) => v.abs().ln(),
            Err(_) => match &self.family {
                Family::ExpPower { alpha } => {
                    let z = s.abs().powf(*alpha);
                    s.abs().ln() + quad::logaddexp(z, lambda1.ln())
                }
                _ => quad::logaddexp(self.ln_abs_eval(s), lambda1.ln() + s.abs().ln()),
            },
        }
    }

    /// Inverse of the shifted damping by bisection on a geometrically grown
    /// bracket. Requires f1 strictly increasing (guaranteed under the
    /// derivative bound); monotone and derivative-free on purpose.
    pub fn shifted_inverse(&self, lambda1: f64, y: f64) -> Result<f64> {
        if y == 0.0 {
            return Ok(0.0);
        }
        let sign = y.signum();
        let mut outer = sign;
        for _ in 0..1100 {
            let v = self.shifted_or_inf(lambda1, outer);
            if (sign > 0.0 && v >= y) || (sign < 0.0 && v <= y) {
                break;
            }
            outer *= 2.0;
            if !outer.is_finite() {
                return Err(sat_err(y, "bracketing the shifted damping inverse"));
            }
        }
        let (mut lo, mut hi) = if sign > 0.0 { (0.0, outer) } else { (outer, 0.0) };
        for _ in 0..300 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let v = self.shifted_or_inf(lambda1, mid);
            if v < y {
                lo = mid;
            } else {
                hi = mid;
            }
            if (hi - lo).abs() <= 1e-15 * hi.abs().max(lo.abs()).max(1e-12) {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Positive (branch > 0) or negative (branch < 0) solution of
    /// ln |f1(nu)| = target, for targets far beyond double range.
    fn shifted_inverse_log(&self, lambda1: f64, target: f64, branch: f64) -> Result<f64> {
        let sgn = branch.signum();
        let g = |rho: f64| self.ln_abs_shifted(lambda1, sgn * rho);
        let mut hi = 1.0f64;
        for _ in 0..1100 {
            if g(hi) >= target {
                break;
            }
            hi *= 2.0;
            if !hi.is_finite() {
                return Err(sat_err(target, "bracketing the log-scale inverse"));
            }
        }
        let mut lo = 0.0f64;
        for _ in 0..300 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if g(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if (hi - lo) <= 1e-14 * hi.max(1e-12) {
                break;
            }
        }
        Ok(sgn * 0.5 * (lo + hi))
    }

    /// |f'(s)| / (s f1(s) + 1), the admissibility tail integrand, in a form
    /// that stays finite where f itself overflows.
    pub fn tail_integrand(&self, lambda1: f64, s: f64) -> f64 {
        match &self.family {
            Family::ExpPower { alpha } => {
                let z = s.abs().powf(*alpha);
                let s2 = s * s;
                let num = 1.0 + alpha * z;
                let damp = (-z).exp();
                let mut denom = s2;
                if damp > 0.0 {
                    let extra = damp * (lambda1 * s2 + 1.0);
                    if extra.is_finite() {
                        denom += extra;
                    } else {
                        return 0.0;
                    }
                }
                if denom.is_infinite() {
                    return 0.0;
                }
                num / denom
            }
            Family::Linear { slope } => {
                let d = s * s * (slope + lambda1) + 1.0;
                slope.abs() / d
            }
            _ => {
                let direct = (|| -> Result<f64> {
                    let fp = self.eval_derivative(s)?;
                    let f1 = self.shifted(lambda1, s)?;
                    let d = s * f1 + 1.0;
                    Ok(fp.abs() / d)
                })();
                match direct {
                    Ok(v) if v.is_finite() => v,
                    _ => {
                        let lfp = self.ln_abs_deriv(s);
                        let ld = quad::logaddexp(s.abs().ln() + self.ln_abs_shifted(lambda1, s), 0.0);
                        (lfp - ld).exp()
                    }
                }
            }
        }
    }

    fn ln_abs_deriv(&self, s: f64) -> f64 {
        match &self.family {
            Family::ExpPower { alpha } => {
                let z = s.abs().powf(*alpha);
                z + (alpha * z).ln_1p()
            }
            Family::ExpSource { scale, gamma } => {
                let z = s.signum() * s.abs().powf(*gamma);
                (scale.abs() * gamma).ln() + (gamma - 1.0) * s.abs().ln() + z
            }
            Family::Poly { coeffs } => match self.eval_derivative(s) {
                Ok(v) => v.abs().ln(),
                Err(_) => {
                    let d = coeffs.len().saturating_sub(1);
                    (d as f64 * coeffs.last().copied().unwrap_or(0.0)).abs().ln()
                        + (d.saturating_sub(1)) as f64 * s.abs().ln()
                }
            },
            _ => match self.eval_derivative(s) {
                Ok(v) => v.abs().ln(),
                Err(_) => f64::INFINITY,
            },
        }
    }

    /// f1'(nu) / (nu f1(nu)), the integrand of the explicit tail constant.
    pub fn shifted_log_derivative(&self, lambda1: f64, nu: f64) -> f64 {
        match &self.family {
            Family::ExpPower { alpha } => {
                let z = nu.abs().powf(*alpha);
                let damp = (-z).exp();
                let num = 1.0 + alpha * z + lambda1 * damp;
                let denom = nu * nu * (1.0 + lambda1 * damp);
                if denom.is_infinite() {
                    return 0.0;
                }
                num / denom
            }
            Family::Linear { .. } => 1.0 / (nu * nu),
            _ => {
                let direct = (|| -> Result<f64> {
                    let fp = self.eval_derivative(nu)? + lambda1;
                    let f1 = self.shifted(lambda1, nu)?;
                    Ok(fp / (nu * f1))
                })();
                match direct {
                    Ok(v) if v.is_finite() => v,
                    _ => {
                        let lnum = quad::logaddexp(self.ln_abs_deriv(nu), lambda1.ln());
                        let lden = nu.abs().ln() + self.ln_abs_shifted(lambda1, nu);
                        (lnum - lden).exp()
                    }
                }
            }
        }
    }
}

// cubic Hermite with centered-difference tangents; C1 by construction
fn table_tangents(knots: &[(f64, f64)]) -> Vec<f64> {
    let n = knots.len();
    let mut m = vec![0.0; n];
    for i in 0..n {
        m[i] = if i == 0 {
            (knots[1].1 - knots[0].1) / (knots[1].0 - knots[0].0)
        } else if i == n - 1 {
            (knots[n - 1].1 - knots[n - 2].1) / (knots[n - 1].0 - knots[n - 2].0)
        } else {
            (knots[i + 1].1 - knots[i - 1].1) / (knots[i + 1].0 - knots[i - 1].0)
        };
    }
    m
}

fn table_eval(knots: &[(f64, f64)], s: f64) -> Result<(f64, f64)> {
    let first = knots[0].0;
    let last = knots[knots.len() - 1].0;
    if s < first || s > last {
        return Err(sat_err(s, "evaluating outside the table range"));
    }
    let m = table_tangents(knots);
    let i = match knots.partition_point(|&(x, _)| x <= s) {
        0 => 0,
        p if p >= knots.len() => knots.len() - 2,
        p => p - 1,
    };
    let (x0, y0) = knots[i];
    let (x1, y1) = knots[i + 1];
    let h = x1 - x0;
    let t = (s - x0) / h;
    let (t2, t3) = (t * t, t * t * t);
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    let v = h00 * y0 + h10 * h * m[i] + h01 * y1 + h11 * h * m[i + 1];
    let dh00 = (6.0 * t2 - 6.0 * t) / h;
    let dh10 = (3.0 * t2 - 4.0 * t + 1.0) / h;
    let dh01 = (-6.0 * t2 + 6.0 * t) / h;
    let dh11 = (3.0 * t2 - 2.0 * t) / h;
    let d = dh00 * y0 + dh10 * h * m[i] + dh01 * y1 + dh11 * h * m[i + 1];
    Ok((v, d))
}

fn table_antiderivative(knots: &[(f64, f64)], s: f64) -> Result<f64> {
    if s == 0.0 {
        return Ok(0.0);
    }
    let v = quad::adaptive(
        &|x: f64| table_eval(knots, x).map(|(v, _)| v).unwrap_or(0.0),
        0.0,
        s,
        1e-12,
        1e-12,
    )?;
    Ok(v)
}

/// Scan controls for the admissibility checker.
#[derive(Debug, Clone, Copy)]
pub struct ScanOptions {
    pub range: f64,
    pub samples: usize,
    /// Cauchy threshold for the doubling-interval tail sums.
    pub tail_tol: f64,
    pub max_blocks: usize,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions { range: 50.0, samples: 4001, tail_tol: 1e-8, max_blocks: 700 }
    }
}

/// Numerical verdicts for the admissibility hypotheses. Scans certify
/// behaviour on a finite range only; closed-form families additionally carry
/// an analytic flag.
#[derive(Debug, Clone)]
pub struct HypothesisReport {
    pub lambda1: f64,
    pub inf_fprime_estimate: f64,
    pub damping_c1_ok: bool,
    pub damping_zero_at_origin: bool,
    pub derivative_bound_ok: bool,
    pub derivative_bound_analytic: bool,
    pub source_c1_ok: bool,
    pub liminf_ratio: f64,
    pub liminf_ok: bool,
    pub growth_gamma: f64,
    pub growth_constant: f64,
    pub growth_ok: bool,
    /// Tail integral of |f'| / (s f1 + 1); +inf flags divergence.
    pub tail_integral: f64,
    pub symmetry_constant: f64,
    pub symmetry_ok: bool,
    pub notes: Vec<String>,
}

impl HypothesisReport {
    pub fn tail_ok(&self) -> bool {
        self.tail_integral.is_finite()
    }

    pub fn all_ok(&self) -> bool {
        self.derivative_bound_ok
            && self.damping_c1_ok
            && self.damping_zero_at_origin
            && self.source_c1_ok
            && self.liminf_ok
            && self.growth_ok
            && self.tail_ok()
            && self.symmetry_ok
    }
}

fn c1_consistent(spec: &NonlinearitySpec, pts: &[f64]) -> bool {
    for &s in pts {
        let h = if s == 0.0 { 1e-30 } else { 1e-6 * (1.0 + s.abs()) };
        let (fp, fm, d) = match (spec.eval(s + h), spec.eval(s - h), spec.eval_derivative(s)) {
            (Ok(a), Ok(b), Ok(c)) => (a, b, c),
            _ => continue, // saturated points carry no smoothness information
        };
        let fd = (fp - fm) / (2.0 * h);
        if (fd - d).abs() > 1e-6 * (1.0 + d.abs()) {
            return false;
        }
    }
    true
}

fn c1_sample_points(range: f64) -> Vec<f64> {
    let mut pts = vec![0.0];
    let top = range.min(20.0);
    let mut s = 0.1;
    while s <= top {
        pts.push(s);
        pts.push(-s);
        s *= 1.6;
    }
    pts
}

/// Checks the admissibility hypotheses for a damping/source pair against the
/// first eigenvalue. The report carries fail states; it never errors.
pub fn check_hypotheses(
    f_spec: &NonlinearitySpec,
    g_spec: &NonlinearitySpec,
    lambda1: f64,
    opts: ScanOptions,
) -> HypothesisReport {
    let mut notes = Vec::new();
    let s_max = opts.range;

    // damping: f(0) = 0, C1, inf f' > -lambda1
    let zero_ok = matches!(f_spec.eval(0.0), Ok(v) if v == 0.0);
    let f_c1 = c1_consistent(f_spec, &c1_sample_points(s_max));
    let mut inf_fp = f64::INFINITY;
    for i in 0..opts.samples {
        let s = -s_max + 2.0 * s_max * i as f64 / (opts.samples - 1) as f64;
        if let Ok(d) = f_spec.eval_derivative(s) {
            inf_fp = inf_fp.min(d);
        }
    }
    // tail heuristic: geometric points beyond the scan
    let mut s = s_max;
    for _ in 0..20 {
        s *= 2.0;
        for side in [s, -s] {
            if let Ok(d) = f_spec.eval_derivative(side) {
                inf_fp = inf_fp.min(d);
            }
        }
    }
    let analytic = match &f_spec.family {
        Family::ExpPower { alpha } if (0.0..1.0).contains(alpha) => {
            notes.push("damping derivative bound holds analytically for this family".into());
            true
        }
        Family::Linear { slope } => {
            inf_fp = *slope;
            *slope > -lambda1
        }
        _ => false,
    };
    let derivative_bound_ok = (analytic || inf_fp > -lambda1) && zero_ok && f_c1;
    if !zero_ok {
        notes.push("damping does not vanish at the origin".into());
    }

    // source: C1, liminf g(s)/s > -lambda1, growth bound with fitted constant
    let g_c1 = c1_consistent(g_spec, &c1_sample_points(s_max));
    let mut liminf = f64::INFINITY;
    for k in 0..16 {
        let s = s_max * 2f64.powi(k);
        for side in [s, -s] {
            match g_spec.eval(side) {
                Ok(v) => liminf = liminf.min(v / side),
                Err(_) => {
                    // saturation here means |g| grew huge; the ratio sign is
                    // what matters for the lower bound
                    let ln = g_spec.ln_abs_eval(side);
                    if ln.is_finite() {
                        let sign = g_sign(g_spec, side);
                        if sign / side < 0.0 {
                            liminf = f64::NEG_INFINITY;
                        }
                    }
                }
            }
        }
    }
    let liminf_ok = liminf > -lambda1;

    let gamma = nominal_gamma(g_spec);
    let mut c_ln = f64::NEG_INFINITY;
    for i in 0..opts.samples {
        let s = -s_max + 2.0 * s_max * i as f64 / (opts.samples - 1) as f64;
        let lg = g_spec.ln_abs_eval(s);
        if !lg.is_finite() {
            continue;
        }
        let bound_ln = quad::logaddexp(0.0, s.abs().powf(gamma));
        c_ln = c_ln.max(lg - bound_ln);
    }
    let growth_constant = c_ln.exp().max(1.0);
    let growth_ok = gamma < 2.0 && growth_constant <= 1e6;

    // tail integral of |f'| / (s f1 + 1), split at +-1, doubling blocks beyond
    let tail_integral = match tail_integral_24(f_spec, lambda1, &opts) {
        Ok(v) => v,
        Err(e) => {
            notes.push(format!("tail integration aborted: {e}"));
            f64::INFINITY
        }
    };
    if !tail_integral.is_finite() {
        notes.push("damping tail integral diverges on doubling intervals".into());
    }

    // |f(-s)| <= c (1 + |f(s)|) with fitted c, in log scale
    let mut sym_ln = f64::NEG_INFINITY;
    for i in 1..=400 {
        let s = s_max * i as f64 / 400.0;
        let lm = f_spec.ln_abs_eval(-s);
        if !lm.is_finite() {
            continue;
        }
        let lp = quad::logaddexp(0.0, f_spec.ln_abs_eval(s));
        sym_ln = sym_ln.max(lm - lp);
    }
    let symmetry_constant = sym_ln.exp().max(1.0);
    let symmetry_ok = symmetry_constant <= 1e6;

    HypothesisReport {
        lambda1,
        inf_fprime_estimate: inf_fp,
        damping_c1_ok: f_c1,
        damping_zero_at_origin: zero_ok,
        derivative_bound_ok,
        derivative_bound_analytic: analytic,
        source_c1_ok: g_c1,
        liminf_ratio: liminf,
        liminf_ok,
        growth_gamma: gamma,
        growth_constant,
        growth_ok,
        tail_integral,
        symmetry_constant,
        symmetry_ok,
        notes,
    }
}

fn g_sign(spec: &NonlinearitySpec, s: f64) -> f64 {
    match &spec.family {
        Family::ExpPower { .. } => s.signum(),
        Family::ExpSource { scale, .. } => scale.signum() * s.signum(),
        Family::Linear { slope } => slope.signum() * s.signum(),
        Family::Poly { coeffs } => {
            let lead = coeffs.last().copied().unwrap_or(0.0);
            let d = coeffs.len().saturating_sub(1);
            lead.signum() * if d % 2 == 1 { s.signum() } else { 1.0 }
        }
        Family::CustomTable { .. } => 0.0,
    }
}

fn nominal_gamma(spec: &NonlinearitySpec) -> f64 {
    match &spec.family {
        Family::ExpSource { gamma, .. } => *gamma,
        _ => 1.0,
    }
}

fn tail_integral_24(spec: &NonlinearitySpec, lambda1: f64, opts: &ScanOptions) -> Result<f64> {
    let core = quad::adaptive(&|s: f64| spec.tail_integrand(lambda1, s), -1.0, 1.0, 1e-12, 1e-10)?;
    let pos = quad::tail_doubling(
        &|s: f64| spec.tail_integrand(lambda1, s),
        1.0,
        opts.tail_tol,
        opts.max_blocks,
    )?;
    let neg = quad::tail_doubling(
        &|r: f64| spec.tail_integrand(lambda1, -r),
        1.0,
        opts.tail_tol,
        opts.max_blocks,
    )?;
    if pos.status == TailStatus::Divergent || neg.status == TailStatus::Divergent {
        return Ok(f64::INFINITY);
    }
    Ok(core + pos.value + neg.value)
}

/// Explicit tail constant of the sup-norm bound: the direct form integrates
/// f1'(nu) / (nu f1(nu)) over both tails cut at the shifted inverse of
/// +-epsilon T^(-alpha), scaled by 1/alpha.
pub fn kappa_constant(
    f_spec: &NonlinearitySpec,
    lambda1: f64,
    epsilon: f64,
    horizon: f64,
    alpha: f64,
) -> Result<f64> {
    if !(epsilon > 0.0) || !(horizon > 0.0) || !(0.0 < alpha && alpha < 1.0) {
        return Err(SdError::Config(format!(
            "tail constant needs epsilon > 0, T > 0, alpha in (0, 1); got {epsilon}, {horizon}, {alpha}"
        )));
    }
    let cut = epsilon * horizon.powf(-alpha);
    let a_plus = f_spec.shifted_inverse(lambda1, cut)?;
    let a_minus = f_spec.shifted_inverse(lambda1, -cut)?;
    let both = [(a_plus, 1.0), (a_minus.abs(), -1.0)];
    let mut total = 0.0;
    for (start, side) in both {
        let g = move |rho: f64| f_spec.shifted_log_derivative(lambda1, side * rho);
        let b0 = start.max(1e-12) * 2.0;
        let near = quad::adaptive(&g, start.max(1e-300), b0, 1e-12, 1e-10)?;
        let tail = quad::tail_doubling(&g, b0, 1e-10, 800)?;
        if tail.status == TailStatus::Divergent {
            return Err(SdError::TailDivergent);
        }
        total += near + tail.value;
    }
    Ok(total / alpha)
}

/// Same constant through the substituted route: integrate
/// 1/(lambda f1^{-1}(lambda)) - 1/(lambda f1^{-1}(-lambda)) over
/// [epsilon T^(-alpha), inf), rewritten on a log axis so the inverse is
/// solved in log scale. Used as the independent cross-check.
pub fn kappa_constant_substituted(
    f_spec: &NonlinearitySpec,
    lambda1: f64,
    epsilon: f64,
    horizon: f64,
    alpha: f64,
) -> Result<f64> {
    if !(epsilon > 0.0) || !(horizon > 0.0) || !(0.0 < alpha && alpha < 1.0) {
        return Err(SdError::Config("invalid tail-constant parameters".into()));
    }
    let cut = epsilon * horizon.powf(-alpha);
    let mu0 = cut.ln();
    let g = |mu: f64| -> f64 {
        let np = f_spec.shifted_inverse_log(lambda1, mu, 1.0).unwrap_or(f64::INFINITY);
        let nm = f_spec.shifted_inverse_log(lambda1, mu, -1.0).unwrap_or(f64::NEG_INFINITY);
        1.0 / np - 1.0 / nm
    };
    let b0 = mu0.max(0.0) + 2.0;
    let near = quad::adaptive(&g, mu0, b0, 1e-12, 1e-10)?;
    let tail = quad::tail_doubling(&g, b0, 1e-10, 200)?;
    if tail.status == TailStatus::Divergent {
        return Err(SdError::TailDivergent);
    }
    Ok((near + tail.value) / alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const L1: f64 = 2.0; // first eigenvalue on the (0, pi)^2 square

    fn fixture_damping() -> NonlinearitySpec {
        NonlinearitySpec::exp_power_damping(0.5).unwrap()
    }

    fn exp_source_g() -> NonlinearitySpec {
        NonlinearitySpec::exp_source(1.0, 1.0).unwrap()
    }

    #[test]
    fn exp_power_values() {
        let f = fixture_damping();
        let expect = 2.0 * 2.0f64.sqrt().exp();
        assert!((f.eval(2.0).unwrap() - expect).abs() < 1e-12);
        assert_eq!(f.eval(0.0).unwrap(), 0.0);
        assert_eq!(NonlinearitySpec::exp_power_damping(0.9).unwrap().eval(0.0).unwrap(), 0.0);
    }

    #[test]
    fn parameter_ranges_enforced() {
        assert!(NonlinearitySpec::exp_power_damping(1.5).is_err());
        assert!(NonlinearitySpec::exp_power_damping(-0.1).is_err());
        assert!(NonlinearitySpec::exp_source(1.0, 2.0).is_err());
        assert!(NonlinearitySpec::exp_source(1.0, 0.5).is_err());
        assert!(NonlinearitySpec::exp_power_damping(0.0).is_ok());
    }

    #[test]
    fn linear_antiderivative() {
        let g = NonlinearitySpec::linear(1.0, Role::Source);
        assert!((g.eval_antiderivative(3.0).unwrap() - 4.5).abs() < 1e-14);
    }

    #[test]
    fn exp_source_closed_antiderivative() {
        let g = exp_source_g();
        let got = g.eval_antiderivative(1.3).unwrap();
        let want = 1.3f64.exp() - 1.0 - 1.3;
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn saturation_reported_with_argument() {
        let g = exp_source_g();
        match g.eval(800.0) {
            Err(SdError::Saturation { arg, .. }) => assert_eq!(arg, 800.0),
            other => panic!("expected saturation, got {other:?}"),
        }
    }

    #[test]
    fn shifted_inverse_round_trip() {
        let f = fixture_damping();
        let y = f.shifted(L1, 1.7).unwrap();
        let s = f.shifted_inverse(L1, y).unwrap();
        assert!((s - 1.7).abs() < 1e-10, "{s}");
        assert_eq!(f.shifted(L1, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn zero_damping_inverse_is_division() {
        let f = NonlinearitySpec::linear(0.0, Role::Damping);
        let y = 3.7;
        assert!((f.shifted_inverse(L1, y).unwrap() - y / L1).abs() < 1e-12);
        assert!((f.shifted_inverse(L1, -y).unwrap() + y / L1).abs() < 1e-12);
    }

    #[test]
    fn checker_passes_fixture_pair() {
        let rep = check_hypotheses(&fixture_damping(), &exp_source_g(), L1, ScanOptions::default());
        assert!(rep.all_ok(), "{rep:#?}");
        assert!(rep.tail_integral.is_finite());
        assert!(rep.liminf_ratio > -L1);
    }

    #[test]
    fn checker_passes_all_claimed_exponents() {
        for alpha in [0.0, 0.3, 0.9] {
            let f = NonlinearitySpec::exp_power_damping(alpha).unwrap();
            let rep = check_hypotheses(&f, &exp_source_g(), L1, ScanOptions::default());
            assert!(rep.all_ok(), "alpha = {alpha}: {rep:#?}");
        }
    }

    #[test]
    fn checker_rejects_square_exponent_tail() {
        // s exp(s^2): the tail integrand tends to 2, so the integral diverges
        let f = NonlinearitySpec::exp_power_unchecked(2.0);
        let rep = check_hypotheses(&f, &exp_source_g(), L1, ScanOptions::default());
        assert!(!rep.tail_ok(), "{:?}", rep.tail_integral);
        let far = f.tail_integrand(L1, 40.0);
        assert!((far - 2.0).abs() < 1e-2, "asymptotic ratio {far}");
    }

    #[test]
    fn checker_rejects_strong_antidamping() {
        let f = NonlinearitySpec::linear(-2.0 * L1, Role::Damping);
        let rep = check_hypotheses(&f, &exp_source_g(), L1, ScanOptions::default());
        assert!(!rep.derivative_bound_ok);
        assert_eq!(rep.inf_fprime_estimate, -2.0 * L1);
    }

    #[test]
    fn kappa_closed_form_for_zero_damping() {
        // f = 0, lambda1 = 2: integrand 1/nu^2 from cut/2, both sides,
        // scaled by 1/alpha -> (1/0.5) * 2 * 2 = 8 at eps = T = 1, alpha = 0.5
        let f = NonlinearitySpec::linear(0.0, Role::Damping);
        let k = kappa_constant(&f, 2.0, 1.0, 1.0, 0.5).unwrap();
        assert!((k - 8.0).abs() < 1e-6, "{k}");
        let ks = kappa_constant_substituted(&f, 2.0, 1.0, 1.0, 0.5).unwrap();
        assert!((ks - 8.0).abs() < 1e-6, "{ks}");
    }

    #[test]
    fn kappa_two_routes_agree_on_fixture() {
        let f = fixture_damping();
        let a = kappa_constant(&f, 2.0, 1.0, 1.0, 0.5).unwrap();
        let b = kappa_constant_substituted(&f, 2.0, 1.0, 1.0, 0.5).unwrap();
        assert!(a.is_finite() && a > 0.0);
        assert!((a - b).abs() <= 1e-6 * a.abs(), "{a} vs {b}");
    }

    #[test]
    fn kappa_nonincreasing_in_epsilon() {
        let f = fixture_damping();
        let mut prev = f64::INFINITY;
        for eps in [0.25, 0.5, 1.0, 2.0, 4.0] {
            let k = kappa_constant(&f, 2.0, eps, 1.0, 0.5).unwrap();
            assert!(k <= prev + 1e-9, "eps {eps}: {k} > {prev}");
            prev = k;
        }
    }

    #[test]
    fn kappa_rejects_divergent_family() {
        let f = NonlinearitySpec::exp_power_unchecked(2.0);
        // integrand f1'/(nu f1) -> 2/nu as nu grows: doubling blocks diverge
        match kappa_constant(&f, 2.0, 1.0, 1.0, 0.5) {
            Err(SdError::TailDivergent) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn table_family_round_trip() {
        let knots: Vec<(f64, f64)> = (-10..=10).map(|i| {
            let s = i as f64 * 0.3;
            (s, s + 0.1 * s * s * s)
        }).collect();
        let f = NonlinearitySpec::custom_table(knots, Role::Damping).unwrap();
        assert_eq!(f.eval(0.0).unwrap(), 0.0);
        assert!(f.eval(100.0).is_err());
        // antiderivative differentiates back to the value
        let s = 1.0;
        let h = 1e-5;
        let d = (f.eval_antiderivative(s + h).unwrap() - f.eval_antiderivative(s - h).unwrap()) / (2.0 * h);
        assert!((d - f.eval(s).unwrap()).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn shifted_damping_monotone(alpha in 0.0f64..0.95, a in -20.0f64..20.0, b in -20.0f64..20.0) {
            prop_assume!((a - b).abs() > 1e-9);
            let f = NonlinearitySpec::exp_power_damping(alpha).unwrap();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(f.shifted(L1, lo).unwrap() < f.shifted(L1, hi).unwrap());
        }

        #[test]
        fn shifted_damping_sign_condition(alpha in 0.0f64..0.95, s in -30.0f64..30.0) {
            let f = NonlinearitySpec::exp_power_damping(alpha).unwrap();
            prop_assert!(f.shifted(L1, s).unwrap() * s >= 0.0);
        }

        #[test]
        fn antiderivative_differentiates_back(alpha in 0.1f64..0.9, s in -5.0f64..5.0) {
            prop_assume!(s.abs() > 0.05);
            let f = NonlinearitySpec::exp_power_damping(alpha).unwrap();
            let h = 1e-5 * (1.0 + s.abs());
            let d = (f.eval_antiderivative(s + h).unwrap() - f.eval_antiderivative(s - h).unwrap()) / (2.0 * h);
            let v = f.eval(s).unwrap();
            prop_assert!((d - v).abs() <= 1e-6 * (1.0 + v.abs()), "{d} vs {v}");
        }
    }
}
