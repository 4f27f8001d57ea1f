//! Experiment configuration: strict structured-text parsing (TOML sections,
//! unknown keys rejected), admissible-range validation, and realization of
//! bases, nonlinearities, forcing and seeded initial-data profiles.

use serde::Deserialize;

use crate::dynamics::Scheme;
use crate::error::{Result, SdError};
use crate::nonlin::{NonlinearitySpec, Role, ScanOptions};
use crate::spectral::{Basis, Domain, SpectralField};

fn cfg_err(msg: impl Into<String>) -> SdError {
    SdError::Config(msg.into())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    domain: RawDomain,
    discretization: RawDiscretization,
    damping: RawFamily,
    source: RawFamily,
    #[serde(default)]
    forcing: RawForcing,
    initial: RawInitial,
    time: RawTime,
    #[serde(default)]
    tolerances: RawTolerances,
    #[serde(default)]
    experiment: RawExperiment,
    #[serde(default)]
    ensemble: RawEnsemble,
    #[serde(default)]
    kernel: RawKernel,
    #[serde(default)]
    linf: RawLinf,
    #[serde(default)]
    equilibrium: RawEquilibrium,
    #[serde(default)]
    decomposition: RawDecomposition,
    #[serde(default)]
    attractor: RawAttractor,
    #[serde(default)]
    hypotheses: RawHypotheses,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDomain {
    lx: f64,
    ly: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDiscretization {
    modes: usize,
    #[serde(default = "default_grid_factor")]
    grid_factor: usize,
    #[serde(default = "default_oversample")]
    oversample: usize,
}

fn default_grid_factor() -> usize {
    2
}
fn default_oversample() -> usize {
    4
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFamily {
    family: String,
    #[serde(default)]
    params: Vec<f64>,
    /// lets deliberately inadmissible parameters through to the hypothesis
    /// checker; simulation still refuses them unless the check is skipped
    #[serde(default)]
    unchecked: bool,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawForcing {
    #[serde(default)]
    modes: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    w0: RawProfile,
    w1: RawProfile,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProfile {
    profile: String,
    #[serde(default)]
    modes: Vec<[f64; 3]>,
    #[serde(default = "one")]
    amplitude: f64,
    /// spectral decay exponent of the random profile: coefficients scale
    /// like lambda^(-decay); negative values tilt toward high modes
    #[serde(default = "one")]
    decay: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTime {
    dt: f64,
    horizon: f64,
    #[serde(default = "default_stride")]
    output_stride: usize,
    #[serde(default = "default_scheme")]
    scheme: String,
    /// > 0 switches on accept/reject step control at this defect budget
    #[serde(default)]
    step_control_tol: f64,
}

fn default_stride() -> usize {
    1
}
fn default_scheme() -> String {
    "midpoint".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTolerances {
    #[serde(default = "tol_balance")]
    balance: f64,
    #[serde(default = "tol_lyap_abs")]
    lyapunov_abs: f64,
    #[serde(default = "tol_lyap_rel")]
    lyapunov_rel: f64,
    #[serde(default = "tol_kernel")]
    kernel: f64,
    #[serde(default = "tol_attractor")]
    attractor: f64,
}

fn tol_balance() -> f64 {
    1e-6
}
fn tol_lyap_abs() -> f64 {
    1e-8
}
fn tol_lyap_rel() -> f64 {
    1e-6
}
fn tol_kernel() -> f64 {
    1e-3
}
fn tol_attractor() -> f64 {
    1e-4
}

impl Default for RawTolerances {
    fn default() -> Self {
        RawTolerances {
            balance: tol_balance(),
            lyapunov_abs: tol_lyap_abs(),
            lyapunov_rel: tol_lyap_rel(),
            kernel: tol_kernel(),
            attractor: tol_attractor(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    #[serde(default = "default_seed")]
    seed: u64,
    #[serde(default)]
    tag: String,
}

fn default_seed() -> u64 {
    1
}

impl Default for RawExperiment {
    fn default() -> Self {
        RawExperiment { seed: default_seed(), tag: String::new() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnsemble {
    #[serde(default = "default_members")]
    members: usize,
    #[serde(default = "one")]
    w0_amplitude: f64,
    #[serde(default = "one")]
    w1_amplitude: f64,
}

fn default_members() -> usize {
    8
}

impl Default for RawEnsemble {
    fn default() -> Self {
        RawEnsemble { members: default_members(), w0_amplitude: 1.0, w1_amplitude: 1.0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKernel {
    #[serde(default = "default_kernel_times")]
    times: usize,
    #[serde(default = "default_kernel_points")]
    points_per_axis: usize,
    #[serde(default = "default_refine")]
    refine_levels: usize,
    #[serde(default = "default_gh")]
    gh_order: usize,
}

fn default_kernel_times() -> usize {
    5
}
fn default_kernel_points() -> usize {
    3
}
fn default_refine() -> usize {
    10
}
fn default_gh() -> usize {
    20
}

impl Default for RawKernel {
    fn default() -> Self {
        RawKernel {
            times: default_kernel_times(),
            points_per_axis: default_kernel_points(),
            refine_levels: default_refine(),
            gh_order: default_gh(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLinf {
    #[serde(default = "default_alpha")]
    alpha: f64,
    #[serde(default = "default_eps_hi")]
    eps_hi: f64,
}

fn default_alpha() -> f64 {
    0.5
}
fn default_eps_hi() -> f64 {
    10.0
}

impl Default for RawLinf {
    fn default() -> Self {
        RawLinf { alpha: default_alpha(), eps_hi: default_eps_hi() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEquilibrium {
    #[serde(default = "default_starts")]
    starts: usize,
    #[serde(default = "default_newton_tol")]
    tol: f64,
    #[serde(default = "default_newton_iters")]
    max_iters: usize,
    #[serde(default = "default_perturbation")]
    perturbation: f64,
}

fn default_starts() -> usize {
    5
}
fn default_newton_tol() -> f64 {
    1e-10
}
fn default_newton_iters() -> usize {
    50
}
fn default_perturbation() -> f64 {
    0.5
}

impl Default for RawEquilibrium {
    fn default() -> Self {
        RawEquilibrium {
            starts: default_starts(),
            tol: default_newton_tol(),
            max_iters: default_newton_iters(),
            perturbation: default_perturbation(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDecomposition {
    #[serde(default = "default_s_values")]
    s_values: Vec<f64>,
}

fn default_s_values() -> Vec<f64> {
    vec![1.0, 1.5, 1.9, 1.99]
}

impl Default for RawDecomposition {
    fn default() -> Self {
        RawDecomposition { s_values: default_s_values() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAttractor {
    #[serde(default = "default_tail")]
    tail_fraction: f64,
}

fn default_tail() -> f64 {
    0.2
}

impl Default for RawAttractor {
    fn default() -> Self {
        RawAttractor { tail_fraction: default_tail() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHypotheses {
    #[serde(default = "default_scan_range")]
    scan_range: f64,
}

fn default_scan_range() -> f64 {
    50.0
}

impl Default for RawHypotheses {
    fn default() -> Self {
        RawHypotheses { scan_range: default_scan_range() }
    }
}

// ---------------------------------------------------------------------------
// validated configuration

#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    Zero,
    Modes(Vec<(usize, usize, f64)>),
    /// seeded random coefficients scaled by lambda^(-decay), normalized to
    /// the given amplitude in the norm natural to the slot (H1 for w0, L2
    /// for w1)
    Random { amplitude: f64, decay: f64 },
}

#[derive(Debug, Clone)]
pub struct Tolerances {
    pub balance: f64,
    pub lyapunov_abs: f64,
    pub lyapunov_rel: f64,
    pub kernel: f64,
    pub attractor: f64,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub domain: Domain,
    pub modes: usize,
    pub grid_factor: usize,
    pub oversample: usize,
    pub f_spec: NonlinearitySpec,
    pub g_spec: NonlinearitySpec,
    pub forcing_modes: Vec<(usize, usize, f64)>,
    pub w0: Profile,
    pub w1: Profile,
    pub dt: f64,
    pub horizon: f64,
    pub output_stride: usize,
    pub scheme: Scheme,
    pub step_control_tol: Option<f64>,
    pub tolerances: Tolerances,
    pub seed: u64,
    pub tag: String,
    pub ensemble_members: usize,
    pub ensemble_w0_amplitude: f64,
    pub ensemble_w1_amplitude: f64,
    pub kernel_times: usize,
    pub kernel_points_per_axis: usize,
    pub kernel_refine_levels: usize,
    pub kernel_gh_order: usize,
    pub linf_alpha: f64,
    pub linf_eps_hi: f64,
    pub newton_starts: usize,
    pub newton_tol: f64,
    pub newton_max_iters: usize,
    pub newton_perturbation: f64,
    pub s_values: Vec<f64>,
    pub tail_fraction: f64,
    pub scan_range: f64,
}

/// PRNG used for every seeded profile; the identifier is quoted in reports.
pub const RNG_ALGORITHM: &str = "chacha12";

fn build_family(section: &str, raw: &RawFamily, role: Role) -> Result<NonlinearitySpec> {
    let need = |count: usize| -> Result<()> {
        if raw.params.len() != count {
            return Err(cfg_err(format!(
                "[{section}] family \"{}\" takes {count} parameter(s), got {}",
                raw.family,
                raw.params.len()
            )));
        }
        Ok(())
    };
    let spec = match raw.family.as_str() {
        "exp_power" => {
            need(1)?;
            let alpha = raw.params[0];
            if raw.unchecked {
                let mut s = NonlinearitySpec::exp_power_unchecked(alpha);
                s.role = role;
                s
            } else {
                let mut s = NonlinearitySpec::exp_power_damping(alpha).map_err(|_| {
                    cfg_err(format!(
                        "[{section}] alpha must lie in [0, 1), got {alpha} \
                         (set unchecked = true to probe inadmissible parameters)"
                    ))
                })?;
                s.role = role;
                s
            }
        }
        "exp_source" => {
            need(2)?;
            let (scale, gamma) = (raw.params[0], raw.params[1]);
            if raw.unchecked {
                let mut s = NonlinearitySpec::exp_source_unchecked(scale, gamma);
                s.role = role;
                s
            } else {
                let mut s = NonlinearitySpec::exp_source(scale, gamma).map_err(|_| {
                    cfg_err(format!(
                        "[{section}] gamma must lie in [1, 2), got {gamma} \
                         (set unchecked = true to probe inadmissible parameters)"
                    ))
                })?;
                s.role = role;
                s
            }
        }
        "linear" => {
            need(1)?;
            NonlinearitySpec::linear(raw.params[0], role)
        }
        "poly" => NonlinearitySpec::poly(raw.params.clone(), role)
            .map_err(|e| cfg_err(format!("[{section}] {e}")))?,
        other => {
            return Err(cfg_err(format!(
                "[{section}] unknown nonlinearity family \"{other}\" \
                 (expected exp_power, poly, exp_source or linear)"
            )))
        }
    };
    Ok(spec)
}

fn convert_modes(section: &str, raw: &[[f64; 3]], n_max: Option<usize>) -> Result<Vec<(usize, usize, f64)>> {
    let mut out = Vec::with_capacity(raw.len());
    for m in raw {
        let j = m[0];
        let k = m[1];
        if j.fract() != 0.0 || k.fract() != 0.0 || j < 1.0 || k < 1.0 {
            return Err(cfg_err(format!(
                "[{section}] mode indices must be integers >= 1, got [{j}, {k}]"
            )));
        }
        if let Some(n) = n_max {
            if j as usize > n || k as usize > n {
                return Err(cfg_err(format!(
                    "[{section}] mode ({j}, {k}) exceeds the truncation {n}"
                )));
            }
        }
        out.push((j as usize, k as usize, m[2]));
    }
    Ok(out)
}

fn convert_profile(section: &str, raw: &RawProfile, n: usize) -> Result<Profile> {
    match raw.profile.as_str() {
        "zero" => Ok(Profile::Zero),
        "modes" => {
            if raw.modes.is_empty() {
                return Err(cfg_err(format!(
                    "[{section}] profile \"modes\" needs a nonempty modes list"
                )));
            }
            Ok(Profile::Modes(convert_modes(section, &raw.modes, Some(n))?))
        }
        "random" => Ok(Profile::Random { amplitude: raw.amplitude, decay: raw.decay }),
        other => Err(cfg_err(format!(
            "[{section}] unknown profile \"{other}\" (expected zero, modes or random)"
        ))),
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RawConfig =
        toml::from_str(text).map_err(|e| cfg_err(format!("config parse error: {e}")))?;

    let domain = Domain::new(raw.domain.lx, raw.domain.ly)?;
    if raw.discretization.modes < 1 {
        return Err(cfg_err("[discretization] modes must be at least 1"));
    }
    if raw.discretization.grid_factor < 2 {
        return Err(cfg_err("[discretization] grid_factor must be at least 2 for dealiasing"));
    }
    if raw.discretization.oversample < 1 {
        return Err(cfg_err("[discretization] oversample must be at least 1"));
    }
    let f_spec = build_family("damping", &raw.damping, Role::Damping)?;
    if !matches!(f_spec.eval(0.0), Ok(v) if v == 0.0) {
        return Err(cfg_err("[damping] the damping must vanish at the origin"));
    }
    let g_spec = build_family("source", &raw.source, Role::Source)?;

    if !(raw.time.horizon > 0.0) {
        return Err(cfg_err("[time] horizon must be positive"));
    }
    if !(raw.time.dt > 0.0) || raw.time.dt >= raw.time.horizon {
        return Err(cfg_err(format!(
            "[time] dt must satisfy 0 < dt < horizon (got dt = {}, horizon = {})",
            raw.time.dt, raw.time.horizon
        )));
    }
    if raw.time.output_stride < 1 {
        return Err(cfg_err("[time] output_stride must be at least 1"));
    }
    let scheme = match raw.time.scheme.as_str() {
        "midpoint" => Scheme::ExponentialMidpoint,
        "euler" => Scheme::ExponentialEuler,
        other => {
            return Err(cfg_err(format!(
                "[time] unknown scheme \"{other}\" (expected midpoint or euler)"
            )))
        }
    };
    for (name, v) in [
        ("balance", raw.tolerances.balance),
        ("lyapunov_abs", raw.tolerances.lyapunov_abs),
        ("lyapunov_rel", raw.tolerances.lyapunov_rel),
        ("kernel", raw.tolerances.kernel),
        ("attractor", raw.tolerances.attractor),
    ] {
        if !(v > 0.0) {
            return Err(cfg_err(format!("[tolerances] {name} must be positive")));
        }
    }
    if !(0.0 < raw.linf.alpha && raw.linf.alpha < 1.0) {
        return Err(cfg_err(format!(
            "[linf] alpha must lie in (0, 1), got {}",
            raw.linf.alpha
        )));
    }
    for &s in &raw.decomposition.s_values {
        if !(0.0..2.0).contains(&s) {
            return Err(cfg_err(format!(
                "[decomposition] drift exponents must lie in [0, 2), got {s}"
            )));
        }
    }
    if !(0.0..=1.0).contains(&raw.attractor.tail_fraction) {
        return Err(cfg_err("[attractor] tail_fraction must lie in [0, 1]"));
    }

    let n = raw.discretization.modes;
    Ok(RunConfig {
        domain,
        modes: n,
        grid_factor: raw.discretization.grid_factor,
        oversample: raw.discretization.oversample,
        f_spec,
        g_spec,
        forcing_modes: convert_modes("forcing", &raw.forcing.modes, Some(n))?,
        w0: convert_profile("initial.w0", &raw.initial.w0, n)?,
        w1: convert_profile("initial.w1", &raw.initial.w1, n)?,
        dt: raw.time.dt,
        horizon: raw.time.horizon,
        output_stride: raw.time.output_stride,
        scheme,
        step_control_tol: (raw.time.step_control_tol > 0.0).then_some(raw.time.step_control_tol),
        tolerances: Tolerances {
            balance: raw.tolerances.balance,
            lyapunov_abs: raw.tolerances.lyapunov_abs,
            lyapunov_rel: raw.tolerances.lyapunov_rel,
            kernel: raw.tolerances.kernel,
            attractor: raw.tolerances.attractor,
        },
        seed: raw.experiment.seed,
        tag: raw.experiment.tag,
        ensemble_members: raw.ensemble.members,
        ensemble_w0_amplitude: raw.ensemble.w0_amplitude,
        ensemble_w1_amplitude: raw.ensemble.w1_amplitude,
        kernel_times: raw.kernel.times,
        kernel_points_per_axis: raw.kernel.points_per_axis,
        kernel_refine_levels: raw.kernel.refine_levels,
        kernel_gh_order: raw.kernel.gh_order,
        linf_alpha: raw.linf.alpha,
        linf_eps_hi: raw.linf.eps_hi,
        newton_starts: raw.equilibrium.starts,
        newton_tol: raw.equilibrium.tol,
        newton_max_iters: raw.equilibrium.max_iters,
        newton_perturbation: raw.equilibrium.perturbation,
        s_values: raw.decomposition.s_values,
        tail_fraction: raw.attractor.tail_fraction,
        scan_range: raw.hypotheses.scan_range,
    })
}

pub fn load_config(path: &std::path::Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| cfg_err(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

impl RunConfig {
    pub fn build_basis(&self) -> Result<Basis> {
        Basis::build(self.domain, self.modes, self.grid_factor * self.modes)
    }

    pub fn forcing_field(&self) -> Result<SpectralField> {
        SpectralField::from_modes(self.modes, &self.forcing_modes)
    }

    pub fn scan_options(&self) -> ScanOptions {
        ScanOptions { range: self.scan_range, ..ScanOptions::default() }
    }

    /// Realizes a profile; `norm_s` picks the normalization norm (1 for the
    /// displacement slot, 0 for the velocity slot) and `salt` separates
    /// random streams for different slots/members.
    pub fn realize_profile(
        &self,
        profile: &Profile,
        basis: &Basis,
        norm_s: f64,
        salt: u64,
    ) -> Result<SpectralField> {
        realize_profile(profile, basis, norm_s, self.seed, salt)
    }

    pub fn initial_data(&self, basis: &Basis) -> Result<(SpectralField, SpectralField)> {
        let w0 = self.realize_profile(&self.w0, basis, 1.0, SALT_W0)?;
        let w1 = self.realize_profile(&self.w1, basis, 0.0, SALT_W1)?;
        Ok((w0, w1))
    }

    /// Seeded ensemble inside the configured ball: member k draws random
    /// profiles with decay 1 (displacement) and 0.5 (velocity).
    pub fn ensemble_data(&self, basis: &Basis) -> Result<Vec<(SpectralField, SpectralField)>> {
        let mut out = Vec::with_capacity(self.ensemble_members);
        for k in 0..self.ensemble_members {
            let w0 = realize_profile(
                &Profile::Random { amplitude: self.ensemble_w0_amplitude, decay: 1.0 },
                basis,
                1.0,
                self.seed,
                SALT_W0 ^ member_salt(k),
            )?;
            let w1 = realize_profile(
                &Profile::Random { amplitude: self.ensemble_w1_amplitude, decay: 0.5 },
                basis,
                0.0,
                self.seed,
                SALT_W1 ^ member_salt(k),
            )?;
            out.push((w0, w1));
        }
        Ok(out)
    }
}

pub const SALT_W0: u64 = 0x5d77_0000;
pub const SALT_W1: u64 = 0x5d77_0001;

fn member_salt(k: usize) -> u64 {
    (k as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn realize_profile(
    profile: &Profile,
    basis: &Basis,
    norm_s: f64,
    seed: u64,
    salt: u64,
) -> Result<SpectralField> {
    use rand::Rng;
    use rand::SeedableRng;
    let n = basis.n();
    match profile {
        Profile::Zero => Ok(SpectralField::zeros(n)),
        Profile::Modes(list) => SpectralField::from_modes(n, list),
        Profile::Random { amplitude, decay } => {
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed ^ salt);
            let mut f = SpectralField::zeros(n);
            for idx in 0..n * n {
                let xi: f64 = rng.gen_range(-1.0..1.0);
                f.coeffs_mut()[idx] = xi * basis.eigenvalues()[idx].powf(-decay);
            }
            let norm = basis.sobolev_norm(&f, norm_s);
            if norm > 0.0 {
                Ok(f.scale(amplitude / norm))
            } else {
                Ok(f)
            }
        }
    }
}
