//! Adaptive quadrature on finite intervals, doubling-interval tail sums for
//! improper integrals, and Gauss-Hermite rules for Gaussian-weighted integrals.

use crate::error::{Result, SdError};

// Gauss-Kronrod 7-15 nodes and weights (positive half, node[7] = center).
const XGK: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];
const WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

/// One Gauss-Kronrod 7-15 panel on [a, b]. Returns (kronrod, |kronrod - gauss|).
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let x = h * XGK[i];
        let fsum = f(c - x) + f(c + x);
        kron += WGK[i] * fsum;
        if i % 2 == 1 {
            gauss += WG[i / 2] * fsum;
        }
    }
    (kron * h, (kron - gauss).abs() * h.abs())
}

#[derive(Clone, Copy)]
struct Seg {
    a: f64,
    b: f64,
    val: f64,
    err: f64,
}

/// Adaptive Gauss-Kronrod integration of `f` over [a, b].
///
/// Stops when the accumulated error estimate drops below
/// `max(abs_tol, rel_tol * |integral|)`. Errors out if the segment budget is
/// exhausted first.
pub fn adaptive<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (val, err) = gk15(f, a, b);
    let mut segs = vec![Seg { a, b, val, err }];
    let max_segs = 4000;
    loop {
        let total: f64 = segs.iter().map(|s| s.val).sum();
        let toterr: f64 = segs.iter().map(|s| s.err).sum();
        if !total.is_finite() {
            return Err(SdError::Quadrature(format!(
                "non-finite integrand on [{a}, {b}]"
            )));
        }
        if toterr <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(total);
        }
        if segs.len() >= max_segs {
            return Err(SdError::Quadrature(format!(
                "segment budget exhausted on [{a}, {b}] (err {toterr:.3e})"
            )));
        }
        // split the worst segment
        let (iw, _) = segs
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.err.total_cmp(&y.1.err))
            .unwrap();
        let s = segs.swap_remove(iw);
        let m = 0.5 * (s.a + s.b);
        if m <= s.a || m >= s.b {
            // interval no longer splittable in f64; accept it
            segs.push(Seg { err: 0.0, ..s });
            continue;
        }
        let (v1, e1) = gk15(f, s.a, m);
        let (v2, e2) = gk15(f, m, s.b);
        segs.push(Seg { a: s.a, b: m, val: v1, err: e1 });
        segs.push(Seg { a: m, b: s.b, val: v2, err: e2 });
    }
}

/// Outcome of a doubling-interval tail sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailStatus {
    Converged,
    Divergent,
}

#[derive(Debug, Clone, Copy)]
pub struct TailSum {
    pub value: f64,
    pub status: TailStatus,
    pub blocks: usize,
}

/// Integral of `f` over [a, inf) for a > 0, summed over doubling intervals
/// [a 2^k, a 2^(k+1)]. The sum is declared convergent once a block increment
/// drops below `block_tol`, and divergent if increments keep growing or the
/// block budget runs out while still above tolerance.
pub fn tail_doubling<F: Fn(f64) -> f64>(f: &F, a: f64, block_tol: f64, max_blocks: usize) -> Result<TailSum> {
    assert!(a > 0.0, "tail_doubling requires a positive start");
    let mut sum = 0.0;
    let mut lo = a;
    let mut prev_inc = f64::INFINITY;
    let mut growing = 0usize;
    for k in 0..max_blocks {
        let hi = lo * 2.0;
        if !hi.is_finite() {
            break;
        }
        let inc = adaptive(f, lo, hi, block_tol * 0.25, 1e-10)?;
        sum += inc;
        if inc.abs() < block_tol {
            return Ok(TailSum { value: sum, status: TailStatus::Converged, blocks: k + 1 });
        }
        if inc.abs() >= prev_inc.abs() {
            growing += 1;
            if growing >= 5 {
                return Ok(TailSum { value: sum, status: TailStatus::Divergent, blocks: k + 1 });
            }
        } else {
            growing = 0;
        }
        prev_inc = inc;
        lo = hi;
    }
    Ok(TailSum { value: sum, status: TailStatus::Divergent, blocks: max_blocks })
}

/// Nodes and weights for n-point Gauss-Hermite quadrature:
/// integral of e^{-x^2} g(x) dx over R ~= sum w_i g(x_i).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let sqrt_pi = std::f64::consts::PI.sqrt();
    // largest zero first, Newton on the physicists' Hermite recurrence
    let m = (n + 1) / 2;
    let mut x = 0.0f64;
    for i in 0..m {
        x = match i {
            0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
            1 => x - 1.14 * (n as f64).powf(0.426) / x,
            2 => 1.86 * x - 0.86 * nodes[0],
            3 => 1.91 * x - 0.91 * nodes[1],
            _ => 2.0 * x - nodes[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            // evaluate H_n and H_{n-1} scaled to orthonormal form
            let mut p1 = 1.0 / sqrt_pi.sqrt();
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = x * (2.0 / (j as f64 + 1.0)).sqrt() * p2
                    - (j as f64 / (j as f64 + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let dx = p1 / pp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = x;
        nodes[n - 1 - i] = -x;
        weights[i] = 2.0 / (pp * pp);
        weights[n - 1 - i] = weights[i];
    }
    (nodes, weights)
}

/// Cumulative trapezoid integral of (t_i, y_i). Output has the same length,
/// starting at zero.
pub fn cumtrapz(t: &[f64], y: &[f64]) -> Vec<f64> {
    assert_eq!(t.len(), y.len());
    let mut out = Vec::with_capacity(t.len());
    let mut acc = 0.0;
    for i in 0..t.len() {
        if i > 0 {
            acc += 0.5 * (y[i] + y[i - 1]) * (t[i] - t[i - 1]);
        }
        out.push(acc);
    }
    out
}

/// log(exp(a) + exp(b)) without overflow.
pub fn logaddexp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let v = adaptive(&|x: f64| x * x * x - 2.0 * x + 1.0, -1.0, 3.0, 1e-14, 1e-14).unwrap();
        // antiderivative x^4/4 - x^2 + x
        let exact = (81.0 / 4.0 - 9.0 + 3.0) - (0.25 - 1.0 - 1.0);
        assert!((v - exact).abs() < 1e-12);
    }

    #[test]
    fn gaussian_integral() {
        let v = adaptive(&|x: f64| (-x * x).exp(), -8.0, 8.0, 1e-14, 1e-13).unwrap();
        assert!((v - std::f64::consts::PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn tail_inverse_square_converges() {
        let t = tail_doubling(&|x: f64| 1.0 / (x * x), 1.0, 1e-10, 200).unwrap();
        assert_eq!(t.status, TailStatus::Converged);
        assert!((t.value - 1.0).abs() < 1e-8);
    }

    #[test]
    fn tail_harmonic_diverges() {
        let t = tail_doubling(&|x: f64| 1.0 / x, 1.0, 1e-10, 200).unwrap();
        assert_eq!(t.status, TailStatus::Divergent);
    }

    #[test]
    fn hermite_moments() {
        let (x, w) = gauss_hermite(20);
        let m0: f64 = w.iter().sum();
        let m2: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi * xi).sum();
        let sp = std::f64::consts::PI.sqrt();
        assert!((m0 - sp).abs() < 1e-12, "zeroth moment {m0}");
        assert!((m2 - 0.5 * sp).abs() < 1e-12, "second moment {m2}");
    }

    #[test]
    fn logaddexp_handles_extremes() {
        assert!((logaddexp(0.0, 0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(logaddexp(800.0, f64::NEG_INFINITY), 800.0);
        assert!((logaddexp(800.0, 700.0) - 800.0).abs() < 1e-15);
    }
}
