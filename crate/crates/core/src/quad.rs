//! Adaptive Gauss-Kronrod quadrature with support for semi-infinite ranges,
//! integrable endpoint singularities and divergence probing.
//!
//! Semi-infinite integrals are split at 1 and the upper part is mapped to
//! (0,1) by s = 1/t. A power singularity s^e (-1 < e < 0) at the origin is
//! removed by the substitution s = u^{1/(1+e)}. When adaptive refinement
//! exhausts its panel budget, the divergence probes distinguish a genuinely
//! infinite integral (value keeps growing as the truncation window doubles)
//! from one that is merely hard.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// 15-point Kronrod abscissae (positive half, descending).
const XGK: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.0,
];

/// Kronrod weights matching `XGK`.
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

/// 7-point Gauss weights (for XGK[1], XGK[3], XGK[5], XGK[7]).
const WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

#[derive(Clone, Copy, Debug)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_panels: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            rel_tol: 1e-11,
            abs_tol: 1e-15,
            max_panels: 1 << 14,
        }
    }
}

impl QuadOptions {
    pub fn loose() -> Self {
        QuadOptions {
            rel_tol: 1e-9,
            abs_tol: 1e-13,
            max_panels: 1 << 12,
        }
    }
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .partial_cmp(&other.error)
            .unwrap_or(Ordering::Equal)
    }
}

/// One Gauss-Kronrod 15(7) evaluation. Returns (value, error estimate),
/// or None if the integrand produced a non-finite value.
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Option<(f64, f64)> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);

    let fc = f(center);
    if !fc.is_finite() {
        return None;
    }
    let mut resk = WGK[7] * fc;
    let mut resg = WG[3] * fc;
    let mut resabs = WGK[7] * fc.abs();
    let mut samples = [(0.0f64, 0.0f64); 7]; // (f(x-), f(x+)) per off-center node

    for j in 0..7 {
        let x = half * XGK[j];
        let f1 = f(center - x);
        let f2 = f(center + x);
        if !f1.is_finite() || !f2.is_finite() {
            return None;
        }
        samples[j] = (f1, f2);
        let fsum = f1 + f2;
        resk += WGK[j] * fsum;
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            resg += WG[j / 2] * fsum;
        }
    }

    let reskh = 0.5 * resk;
    let mut resasc = WGK[7] * (fc - reskh).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((samples[j].0 - reskh).abs() + (samples[j].1 - reskh).abs());
    }

    let value = resk * half;
    let resabs = resabs * half.abs();
    let resasc = resasc * half.abs();
    let mut err = ((resk - resg) * half).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * 1.0_f64.min((200.0 * err / resasc).powf(1.5));
    }
    let eps = f64::EPSILON;
    if resabs > f64::MIN_POSITIVE / (50.0 * eps) {
        err = err.max(50.0 * eps * resabs);
    }
    Some((value, err))
}

/// Adaptive integration over a finite interval.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: QuadOptions) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if !(a < b) {
        return Err(Error::Domain(format!(
            "integration bounds must satisfy a < b, got ({a}, {b})"
        )));
    }
    let (value, error) = gk15(&f, a, b).ok_or_else(|| nonfinite_err(a, b))?;
    let mut heap = BinaryHeap::new();
    heap.push(Panel {
        a,
        b,
        value,
        error,
    });
    let mut total_value = value;
    let mut total_error = error;
    let mut panels = 1usize;
    // Panels too narrow to split; their error is irreducible here.
    let mut stuck_error = 0.0;

    while total_error + stuck_error > opts.abs_tol.max(opts.rel_tol * total_value.abs()) {
        if panels >= opts.max_panels {
            return Err(Error::Quadrature(format!(
                "panel budget {} exhausted on ({a:.6e}, {b:.6e}); value ~ {total_value:.6e}, error ~ {:.3e}",
                opts.max_panels,
                total_error + stuck_error
            )));
        }
        let worst = match heap.pop() {
            Some(p) => p,
            None => break, // everything is stuck; fall through to the check below
        };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            stuck_error += worst.error;
            continue;
        }
        let (v1, e1) = gk15(&f, worst.a, mid).ok_or_else(|| nonfinite_err(worst.a, mid))?;
        let (v2, e2) = gk15(&f, mid, worst.b).ok_or_else(|| nonfinite_err(mid, worst.b))?;
        total_value += v1 + v2 - worst.value;
        total_error += e1 + e2 - worst.error;
        heap.push(Panel {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Panel {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
        panels += 1;
        if heap.is_empty() {
            break;
        }
    }

    if total_error + stuck_error > opts.abs_tol.max(opts.rel_tol * total_value.abs()) {
        return Err(Error::Quadrature(format!(
            "unable to reach tolerance on ({a:.6e}, {b:.6e}); error ~ {:.3e}",
            total_error + stuck_error
        )));
    }
    Ok(total_value)
}

fn nonfinite_err(a: f64, b: f64) -> Error {
    Error::Quadrature(format!(
        "integrand produced a non-finite value on ({a:.6e}, {b:.6e})"
    ))
}

/// ∫₀^b f(s) ds where f ~ s^exponent near 0 with exponent in (-1, 0).
/// The substitution s = u^{1/(1+e)} removes the singularity.
pub fn integrate_singular_at_zero<F: Fn(f64) -> f64>(
    f: F,
    b: f64,
    exponent: f64,
    opts: QuadOptions,
) -> Result<f64> {
    if exponent >= 0.0 {
        return integrate(f, 0.0, b, opts);
    }
    if exponent <= -1.0 {
        return Err(Error::Domain(format!(
            "endpoint exponent must exceed -1, got {exponent}"
        )));
    }
    let p = 1.0 + exponent;
    let inv_p = 1.0 / p;
    let g = move |u: f64| f(u.powf(inv_p)) * inv_p * u.powf(inv_p - 1.0);
    integrate(g, 0.0, b.powf(p), opts)
}

/// ∫ₐ^∞ f(s) ds via the map s = 1/t on the far part.
pub fn integrate_to_inf<F: Fn(f64) -> f64>(f: F, a: f64, opts: QuadOptions) -> Result<f64> {
    if !(a >= 0.0) {
        return Err(Error::Domain(format!("lower bound must be >= 0, got {a}")));
    }
    let mapped = |t: f64| {
        let s = 1.0 / t;
        f(s) * s * s
    };
    if a < 1.0 {
        let near = integrate(&f, a, 1.0, opts)?;
        let far = integrate(mapped, 0.0, 1.0, opts)?;
        Ok(near + far)
    } else {
        integrate(mapped, 0.0, 1.0 / a, opts)
    }
}

/// ∫₀^∞ f(s) ds with a declared power behaviour s^{lam-1} at the origin.
///
/// `lam` is the exponent of the s^{lam-1} factor; for 0 < lam < 1 the
/// integrable singularity is removed by substitution before the adaptive
/// pass. This is the workhorse behind every Laplace-side evaluation.
pub fn semi_infinite<F: Fn(f64) -> f64>(f: F, lam: f64, opts: QuadOptions) -> Result<f64> {
    let near = integrate_singular_at_zero(&f, 1.0, (lam - 1.0).min(0.0), opts)?;
    let mapped = |t: f64| {
        let s = 1.0 / t;
        f(s) * s * s
    };
    let far = integrate(mapped, 0.0, 1.0, opts)?;
    Ok(near + far)
}

/// ∫ₐ^∞ f(s) ds, or `Divergent` when doubling the truncation window keeps
/// changing the value by more than 1% near the end of the probe.
pub fn tail_or_divergent<F: Fn(f64) -> f64>(f: F, a: f64, opts: QuadOptions) -> Result<f64> {
    match integrate_to_inf(&f, a, opts) {
        Ok(v) => Ok(v),
        Err(Error::Quadrature(_)) => {
            let loose = QuadOptions::loose();
            let mut upper = if a > 0.0 { (2.0 * a).max(1.0) } else { 1.0 };
            let mut total = integrate(&f, a, upper, loose)?;
            let mut growths = Vec::new();
            for _ in 0..40 {
                let next = upper * 2.0;
                let seg = integrate(&f, upper, next, loose)?;
                total += seg;
                upper = next;
                let growth = seg.abs() / total.abs().max(1e-300);
                growths.push(growth);
                let n = growths.len();
                if n >= 2 && growths[n - 1] < 1e-9 && growths[n - 2] < 1e-9 {
                    return Ok(total);
                }
            }
            let n = growths.len();
            if growths[n - 1] > 0.01 && growths[n - 2] > 0.01 {
                Err(Error::Divergent(format!(
                    "tail integral from {a:.3e} keeps growing (last window change {:.2e})",
                    growths[n - 1]
                )))
            } else {
                Err(Error::Quadrature(format!(
                    "tail integral from {a:.3e} converges too slowly to certify"
                )))
            }
        }
        Err(e) => Err(e),
    }
}

/// ∫₀^b f(s) ds, or `Divergent` when shrinking the lower cutoff by decades
/// keeps changing the value by more than 1%.
pub fn lower_or_divergent<F: Fn(f64) -> f64>(f: F, b: f64, opts: QuadOptions) -> Result<f64> {
    match integrate(&f, 0.0, b, opts) {
        Ok(v) => Ok(v),
        Err(Error::Quadrature(_)) => {
            let loose = QuadOptions::loose();
            let mut values = Vec::new();
            for j in 2..=12 {
                let eps = b * 10f64.powi(-j);
                values.push(integrate(&f, eps, b, loose)?);
            }
            let n = values.len();
            let growth = |i: usize| {
                (values[i] - values[i - 1]).abs() / values[i].abs().max(1e-300)
            };
            if growth(n - 1) > 0.01 && growth(n - 2) > 0.01 {
                Err(Error::Divergent(format!(
                    "integral near 0 keeps growing as the cutoff shrinks (last change {:.2e})",
                    growth(n - 1)
                )))
            } else if growth(n - 1) < 1e-8 {
                Ok(values[n - 1])
            } else {
                Err(Error::Quadrature(
                    "integral near 0 converges too slowly to certify".into(),
                ))
            }
        }
        Err(e) => Err(e),
    }
}
