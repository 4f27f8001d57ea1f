//! Dirichlet sine eigenbasis on a rectangle: eigenvalue tables, transforms
//! between coefficient and grid representations, Sobolev norms, quadrature.
//!
//! Eigenfunctions are L2-orthonormal,
//! phi_jk(x, y) = sqrt(4 / (Lx Ly)) sin(j pi x / Lx) sin(k pi y / Ly),
//! with eigenvalues lambda_jk = pi^2 (j^2 / Lx^2 + k^2 / Ly^2), 1 <= j,k <= N.
//! The quadrature grid has M x M interior points, spacing Lx/(M+1); the
//! composite trapezoid rule on it (zero boundary) integrates products of two
//! retained modes exactly, so analysis/synthesis round-trip exactly for N <= M.

use crate::error::{Result, SdError};

pub const PI: f64 = std::f64::consts::PI;

/// Axis-aligned rectangle (0, Lx) x (0, Ly).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub lx: f64,
    pub ly: f64,
}

impl Domain {
    pub fn new(lx: f64, ly: f64) -> Result<Self> {
        if !(lx > 0.0) || !(ly > 0.0) {
            return Err(SdError::Config(format!(
                "domain side lengths must be positive (got {lx}, {ly})"
            )));
        }
        Ok(Domain { lx, ly })
    }

    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    /// Smallest Dirichlet eigenvalue, pi^2 (1/Lx^2 + 1/Ly^2).
    pub fn lambda1(&self) -> f64 {
        PI * PI * (1.0 / (self.lx * self.lx) + 1.0 / (self.ly * self.ly))
    }
}

/// Coefficient vector in the sine eigenbasis, indexed by (j, k), 1 <= j,k <= N.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    n: usize,
    coeffs: Vec<f64>,
}

impl SpectralField {
    pub fn zeros(n: usize) -> Self {
        SpectralField { n, coeffs: vec![0.0; n * n] }
    }

    pub fn from_coeffs(n: usize, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != n * n {
            return Err(SdError::Config(format!(
                "coefficient vector has length {} but basis holds {} modes",
                coeffs.len(),
                n * n
            )));
        }
        Ok(SpectralField { n, coeffs })
    }

    /// Field with the listed (j, k, amplitude) modes set.
    pub fn from_modes(n: usize, modes: &[(usize, usize, f64)]) -> Result<Self> {
        let mut f = SpectralField::zeros(n);
        for &(j, k, a) in modes {
            if j < 1 || j > n || k < 1 || k > n {
                return Err(SdError::Config(format!(
                    "mode ({j}, {k}) outside 1..={n}"
                )));
            }
            *f.at_mut(j, k) += a;
        }
        Ok(f)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    #[inline]
    pub fn at(&self, j: usize, k: usize) -> f64 {
        self.coeffs[(j - 1) * self.n + (k - 1)]
    }

    #[inline]
    pub fn at_mut(&mut self, j: usize, k: usize) -> &mut f64 {
        &mut self.coeffs[(j - 1) * self.n + (k - 1)]
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    pub fn scale(&self, a: f64) -> SpectralField {
        SpectralField { n: self.n, coeffs: self.coeffs.iter().map(|c| a * c).collect() }
    }

    pub fn add(&self, other: &SpectralField) -> SpectralField {
        assert_eq!(self.n, other.n);
        SpectralField {
            n: self.n,
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &SpectralField) -> SpectralField {
        assert_eq!(self.n, other.n);
        SpectralField {
            n: self.n,
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn axpy(&mut self, a: f64, other: &SpectralField) {
        assert_eq!(self.n, other.n);
        for (c, o) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *c += a * o;
        }
    }

    pub fn dot(&self, other: &SpectralField) -> f64 {
        assert_eq!(self.n, other.n);
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b).sum()
    }
}

/// Point values on the M x M interior tensor grid (implicit zero boundary).
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    m: usize,
    values: Vec<f64>,
}

impl GridField {
    pub fn zeros(m: usize) -> Self {
        GridField { m, values: vec![0.0; m * m] }
    }

    pub fn from_values(m: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != m * m {
            return Err(SdError::Config(format!(
                "grid vector has length {} but grid holds {} points",
                values.len(),
                m * m
            )));
        }
        Ok(GridField { m, values })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn at(&self, i: usize, l: usize) -> f64 {
        self.values[i * self.m + l]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Dirichlet eigenbasis truncated at N modes per axis with an M x M grid.
#[derive(Debug, Clone)]
pub struct Basis {
    pub domain: Domain,
    n: usize,
    m: usize,
    eigenvalues: Vec<f64>, // (j,k) row-major, same layout as SpectralField
    // synthesis tables: sin_x[i*n + (j-1)] = nx sin(j pi x_i / Lx)
    sin_x: Vec<f64>,
    sin_y: Vec<f64>,
    hx: f64,
    hy: f64,
}

impl Basis {
    /// Tabulates eigenvalues and sine synthesis matrices.
    /// Requires N >= 1 and M >= 2N (dealiasing headroom for quadratic products).
    pub fn build(domain: Domain, n: usize, m: usize) -> Result<Self> {
        if n < 1 {
            return Err(SdError::Config("basis needs at least one mode per axis".into()));
        }
        if m < 2 * n {
            return Err(SdError::Config(format!(
                "grid must satisfy M >= 2N for dealiasing (got N = {n}, M = {m})"
            )));
        }
        let mut eigenvalues = vec![0.0; n * n];
        for j in 1..=n {
            for k in 1..=n {
                eigenvalues[(j - 1) * n + (k - 1)] = PI * PI
                    * ((j * j) as f64 / (domain.lx * domain.lx)
                        + (k * k) as f64 / (domain.ly * domain.ly));
            }
        }
        let (sin_x, hx) = sine_table(n, m, domain.lx);
        let (sin_y, hy) = sine_table(n, m, domain.ly);
        Ok(Basis { domain, n, m, eigenvalues, sin_x, sin_y, hx, hy })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn grid_spacing(&self) -> (f64, f64) {
        (self.hx, self.hy)
    }

    #[inline]
    pub fn eigenvalue(&self, j: usize, k: usize) -> f64 {
        self.eigenvalues[(j - 1) * self.n + (k - 1)]
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn lambda1(&self) -> f64 {
        self.domain.lambda1()
    }

    pub fn grid_x(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.hx
    }

    pub fn grid_y(&self, l: usize) -> f64 {
        (l + 1) as f64 * self.hy
    }

    /// Pointwise synthesis of the coefficients on the quadrature grid.
    pub fn to_grid(&self, field: &SpectralField) -> Result<GridField> {
        if field.n != self.n {
            return Err(SdError::Config(format!(
                "field has {} modes per axis, basis {}",
                field.n, self.n
            )));
        }
        // tmp[(j-1)*m + l] = sum_k c_jk sin_y[l, k]
        let n = self.n;
        let m = self.m;
        let mut tmp = vec![0.0; n * m];
        for j in 0..n {
            let row = &field.coeffs[j * n..(j + 1) * n];
            let out = &mut tmp[j * m..(j + 1) * m];
            for l in 0..m {
                let sy = &self.sin_y[l * n..(l + 1) * n];
                let mut acc = 0.0;
                for k in 0..n {
                    acc += row[k] * sy[k];
                }
                out[l] = acc;
            }
        }
        let mut values = vec![0.0; m * m];
        for i in 0..m {
            let sx = &self.sin_x[i * n..(i + 1) * n];
            let out = &mut values[i * m..(i + 1) * m];
            for j in 0..n {
                let c = sx[j];
                if c == 0.0 {
                    continue;
                }
                let trow = &tmp[j * m..(j + 1) * m];
                for l in 0..m {
                    out[l] += c * trow[l];
                }
            }
        }
        Ok(GridField { m, values })
    }

    /// Discrete sine analysis; exact inverse of `to_grid` on the retained
    /// N x N modes, higher content discarded.
    pub fn to_spectral(&self, grid: &GridField) -> Result<SpectralField> {
        if grid.m != self.m {
            return Err(SdError::Config(format!(
                "grid has {} points per axis, basis {}",
                grid.m, self.m
            )));
        }
        let n = self.n;
        let m = self.m;
        // tmp[(j-1)*m + l] = sum_i sin_x[i, j] v[i, l]
        let mut tmp = vec![0.0; n * m];
        for i in 0..m {
            let sx = &self.sin_x[i * n..(i + 1) * n];
            let vrow = &grid.values[i * m..(i + 1) * m];
            for j in 0..n {
                let c = sx[j];
                if c == 0.0 {
                    continue;
                }
                let trow = &mut tmp[j * m..(j + 1) * m];
                for l in 0..m {
                    trow[l] += c * vrow[l];
                }
            }
        }
        let w = self.hx * self.hy;
        let mut coeffs = vec![0.0; n * n];
        for j in 0..n {
            let trow = &tmp[j * m..(j + 1) * m];
            let crow = &mut coeffs[j * n..(j + 1) * n];
            for l in 0..m {
                let sy = &self.sin_y[l * n..(l + 1) * n];
                let v = trow[l];
                for k in 0..n {
                    crow[k] += w * v * sy[k];
                }
            }
        }
        Ok(SpectralField { n, coeffs })
    }

    /// Full-resolution analysis used to report how much of a grid function
    /// falls outside the retained modes. Returns (field, discarded fraction).
    pub fn project_from_grid(&self, grid: &GridField) -> Result<(SpectralField, f64)> {
        let field = self.to_spectral(grid)?;
        let total2 = self.grid_l2_norm_sq(grid);
        let kept2: f64 = field.coeffs.iter().map(|c| c * c).sum();
        let disc2 = (total2 - kept2).max(0.0);
        let frac = if total2 > 0.0 { (disc2 / total2).sqrt() } else { 0.0 };
        Ok((field, frac))
    }

    /// (sum lambda_jk^s c_jk^2)^{1/2}; s = 0 is the L2 norm, s = 1 the H1
    /// seminorm |grad .|_{L2}.
    pub fn sobolev_norm(&self, field: &SpectralField, s: f64) -> f64 {
        assert!(s >= 0.0, "sobolev_norm needs s >= 0");
        assert_eq!(field.n, self.n);
        let mut acc = 0.0;
        for (c, l) in field.coeffs.iter().zip(&self.eigenvalues) {
            let w = if s == 0.0 { 1.0 } else { l.powf(s) };
            acc += w * c * c;
        }
        acc.sqrt()
    }

    /// Grid maximum of |field| on an oversampled grid with `factor * N`
    /// points per axis (factor >= 4 by default elsewhere). This is a lower
    /// bound on the true sup-norm at the stated sampling density.
    pub fn linf_norm(&self, field: &SpectralField, factor: usize) -> f64 {
        assert_eq!(field.n, self.n);
        let n = self.n;
        let kk = factor.max(1) * n;
        let (tx, _) = sine_table(n, kk, self.domain.lx);
        let (ty, _) = sine_table(n, kk, self.domain.ly);
        // tmp[j*kk + l] = sum_k c_jk ty[l, k]
        let mut tmp = vec![0.0; n * kk];
        for j in 0..n {
            let row = &field.coeffs[j * n..(j + 1) * n];
            for l in 0..kk {
                let sy = &ty[l * n..(l + 1) * n];
                let mut acc = 0.0;
                for k in 0..n {
                    acc += row[k] * sy[k];
                }
                tmp[j * kk + l] = acc;
            }
        }
        let mut best = 0.0f64;
        for i in 0..kk {
            let sx = &tx[i * n..(i + 1) * n];
            for l in 0..kk {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += sx[j] * tmp[j * kk + l];
                }
                best = best.max(acc.abs());
            }
        }
        best
    }

    /// Point evaluation by direct synthesis (O(N^2) per point).
    pub fn eval_at(&self, field: &SpectralField, x: f64, y: f64) -> f64 {
        assert_eq!(field.n, self.n);
        let nx = (2.0 / self.domain.lx).sqrt();
        let ny = (2.0 / self.domain.ly).sqrt();
        let mut acc = 0.0;
        for j in 1..=self.n {
            let sj = nx * (j as f64 * PI * x / self.domain.lx).sin();
            if sj == 0.0 {
                continue;
            }
            let mut inner = 0.0;
            for k in 1..=self.n {
                inner += field.at(j, k) * (k as f64 * PI * y / self.domain.ly).sin();
            }
            acc += sj * ny * inner;
        }
        acc
    }

    /// Trapezoid quadrature of a grid function over the rectangle
    /// (zero boundary values assumed).
    pub fn grid_integral(&self, grid: &GridField) -> f64 {
        assert_eq!(grid.m, self.m);
        self.hx * self.hy * grid.values.iter().sum::<f64>()
    }

    pub fn grid_l2_norm_sq(&self, grid: &GridField) -> f64 {
        assert_eq!(grid.m, self.m);
        self.hx * self.hy * grid.values.iter().map(|v| v * v).sum::<f64>()
    }
}

/// Sine synthesis table for `count` interior points on (0, len):
/// table[i*n + (j-1)] = sqrt(2/len) sin(j pi x_i / len), x_i = (i+1) len / (count+1).
fn sine_table(n: usize, count: usize, len: f64) -> (Vec<f64>, f64) {
    let h = len / (count + 1) as f64;
    let norm = (2.0 / len).sqrt();
    let mut table = vec![0.0; count * n];
    for i in 0..count {
        // argument j pi (i+1) / (count+1), kept in integer form for accuracy
        for j in 1..=n {
            table[i * n + (j - 1)] = norm * (j as f64 * PI * (i + 1) as f64 / (count + 1) as f64).sin();
        }
    }
    (table, h)
}
