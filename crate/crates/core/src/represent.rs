//! Constructive representations: generalized Bernstein builders, the nested
//! tail-integral chains M_k ⊃ ... ⊃ M_1 with their reconstruction constants,
//! moment-driven asymptotic expansions, the density-side recursion and
//! convolution checks, and the order-shift transform that embeds lower-order
//! classes into higher-order ones.

use std::sync::Arc;

use crate::cmtest;
use crate::error::{Error, Result};
use crate::funcspace::{DifferentiableFn, GSFunction};
use crate::measure::{Atom, DensityPiece, Measure, ScanGrid, ScanReport, SmoothDensity};
use crate::operators::{self, Route};
use crate::quad::{self, QuadOptions};
use crate::specfun::{binomial, falling_factorial, gamma_ratio, lower_incomplete_gamma, pochhammer};

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

fn inadmissible_error(lam: f64, report: &crate::measure::LevyReport) -> Error {
    Error::Inadmissible(format!(
        "the kernel density s^(lam-1) * tail(s) is not integrable at 0 unless the measure has \
         finite mass on (0,1] and finite t^(-lam) tail on (1,inf); got mass {:.6e} and tail {:.6e} \
         for lam={lam}",
        report.mass_near_zero, report.weighted_tail
    ))
}

// ---------------------------------------------------------------------------
// Bernstein-type builder: g(x) = alpha x^lam + beta + ∫ γ(lam, xt) t^{-lam} dμ(t)
// ---------------------------------------------------------------------------

/// A non-negative function whose weighted slope x^{1-lam} g'(x) is the
/// Laplace transform of μ (plus alpha·lam), hence completely monotonic for
/// positive μ.
#[derive(Clone, Debug)]
pub struct BernsteinFunction {
    pub alpha: f64,
    pub beta: f64,
    pub lam: f64,
    mu: Measure,
}

pub fn bernstein_build(alpha: f64, beta: f64, lam: f64, mu: Measure) -> Result<BernsteinFunction> {
    if !(lam > 0.0) {
        return Err(Error::Domain(format!("lam must be positive, got {lam}")));
    }
    if !(alpha >= 0.0 && beta >= 0.0) {
        return Err(Error::Domain(format!(
            "alpha and beta must be non-negative, got ({alpha}, {beta})"
        )));
    }
    let levy = mu.levy_admissibility(lam);
    if !levy.admissible {
        return Err(inadmissible_error(lam, &levy));
    }
    Ok(BernsteinFunction {
        alpha,
        beta,
        lam,
        mu,
    })
}

impl BernsteinFunction {
    pub fn measure(&self) -> &Measure {
        &self.mu
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::Domain(format!("x must be positive, got {x}")));
        }
        let lam = self.lam;
        let integral = self.mu.kernel_integral(
            |t| {
                lower_incomplete_gamma(lam, x * t).unwrap_or(f64::NAN) * t.powf(-lam)
            },
            0.0,
        )?;
        Ok(self.alpha * x.powf(lam) + self.beta + integral)
    }

    /// g^{(n)}; for n >= 1 everything reduces to Laplace transforms of μ.
    pub fn derivative(&self, n: usize, x: f64) -> Result<f64> {
        if n == 0 {
            return self.eval(x);
        }
        if !(x > 0.0) {
            return Err(Error::Domain(format!("x must be positive, got {x}")));
        }
        let lam = self.lam;
        let mut total = self.alpha * falling_factorial(lam, n) * x.powf(lam - n as f64);
        for i in 0..=(n - 1) {
            let ff = falling_factorial(lam - 1.0, i);
            if ff == 0.0 {
                continue;
            }
            let m = n - 1 - i;
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            total += binomial(n - 1, i)
                * ff
                * x.powf(lam - 1.0 - i as f64)
                * sign
                * self.mu.weighted_laplace(x, m as f64)?;
        }
        Ok(total)
    }

    /// The weighted slope h(x) = x^{1-lam} g'(x) = alpha·lam + ∫ e^{-xt} dμ(t).
    pub fn slope_transform(&self) -> CmSlope<'_> {
        CmSlope { g: self }
    }
}

impl DifferentiableFn for BernsteinFunction {
    fn max_order(&self) -> usize {
        30
    }

    fn derivative(&self, n: usize, x: f64) -> Result<f64> {
        BernsteinFunction::derivative(self, n, x)
    }
}

pub struct CmSlope<'a> {
    g: &'a BernsteinFunction,
}

impl<'a> DifferentiableFn for CmSlope<'a> {
    fn max_order(&self) -> usize {
        30
    }

    fn derivative(&self, n: usize, x: f64) -> Result<f64> {
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        let mut v = sign * self.g.mu.weighted_laplace(x, n as f64)?;
        if n == 0 {
            v += self.g.alpha * self.g.lam;
        }
        Ok(v)
    }
}

// ---------------------------------------------------------------------------
// The dual build: f(x) = alpha + beta x^{-lam} + ∫ e^{-xs} s^{lam-1} M(s) ds
// with M(s) = ∫_s^∞ t^{-lam} dμ(t).
// ---------------------------------------------------------------------------

/// Builds the function whose order-1 operator image is exactly the Laplace
/// transform of μ's reciprocal-power weighting: by construction
/// c_1(f)(x) = alpha·lam + ∫ e^{-xs} dμ(s).
pub fn corollary4_build(alpha: f64, beta: f64, lam: f64, mu: Measure) -> Result<GSFunction> {
    if !(lam > 0.0) {
        return Err(Error::Domain(format!("lam must be positive, got {lam}")));
    }
    if !(alpha >= 0.0 && beta >= 0.0) {
        return Err(Error::Domain(format!(
            "alpha and beta must be non-negative, got ({alpha}, {beta})"
        )));
    }
    let levy = mu.levy_admissibility(lam);
    if !levy.admissible {
        return Err(inadmissible_error(lam, &levy));
    }

    let laplace = if mu.is_empty() {
        Measure::zero()
    } else {
        let tail = SmoothDensity::tail_of(mu.clone(), lam);
        // The tail density is smooth between breakpoints of μ; split there so
        // quadrature never straddles a kink or jump.
        let support_end = {
            let atom_max = mu
                .atoms()
                .iter()
                .map(|a| a.location)
                .fold(0.0f64, f64::max);
            let piece_max = mu
                .pieces()
                .iter()
                .map(|p| p.upper)
                .fold(0.0f64, f64::max);
            atom_max.max(piece_max)
        };
        let mut cuts = mu.breakpoints();
        cuts.retain(|&b| b < support_end || !support_end.is_finite());
        let mut pieces = Vec::new();
        let mut lower = 0.0;
        for b in cuts {
            if b > lower {
                pieces.push(DensityPiece {
                    lower,
                    upper: b,
                    density: tail.clone(),
                });
                lower = b;
            }
        }
        if support_end > lower || !support_end.is_finite() {
            pieces.push(DensityPiece {
                lower,
                upper: support_end,
                density: tail,
            });
        }
        Measure::new(Vec::new(), pieces)?
    };

    GSFunction::builder(lam)
        .constant(alpha)
        .zero_atom(beta)
        .laplace_measure(laplace)
        .build()
}

// ---------------------------------------------------------------------------
// The M-chain: M_k(u) = ∫_u^∞ s^{-lam} dμ_k(s), M_j(u) = ∫_u^∞ M_{j+1}(s)/s² ds
// ---------------------------------------------------------------------------

const MEMO_NODES: usize = 256;
const MEMO_MIN: f64 = 1e-6;
const MEMO_MAX: f64 = 1e6;

struct MemoLevel {
    nodes: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl MemoLevel {
    fn hermite(&self, u: f64) -> f64 {
        let i = match self
            .nodes
            .binary_search_by(|n| n.partial_cmp(&u).unwrap())
        {
            Ok(i) => return self.values[i],
            Err(i) => i - 1, // caller guarantees u within [first, last]
        };
        let (u0, u1) = (self.nodes[i], self.nodes[i + 1]);
        let h = u1 - u0;
        let t = (u - u0) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        self.values[i] * h00
            + h * self.slopes[i] * h10
            + self.values[i + 1] * h01
            + h * self.slopes[i + 1] * h11
    }
}

/// The chain of nested tail integrals together with the reconstruction
/// constants. Level k is kept exact; the lower levels are memoized on a
/// log grid (breakpoints of the measure included as nodes) with
/// derivative-matched monotone cubic interpolation.
pub struct MChain {
    pub lam: f64,
    pub k: usize,
    pub l_k: f64,
    pub b_k: f64,
    mu_k: Arc<Measure>,
    /// memo[0] = M_{k-1}, ..., memo[k-2] = M_1 (empty when k = 1).
    memo: Vec<MemoLevel>,
}

pub fn m_chain(mu_k: &Measure, lam: f64, k: usize) -> Result<MChain> {
    if k == 0 {
        return Err(Error::Domain("the chain needs k >= 1".into()));
    }
    if !(lam > 0.0) {
        return Err(Error::Domain(format!("lam must be positive, got {lam}")));
    }
    let probe = mu_k.tail_power_integral(lam, MEMO_MIN);
    if !probe.is_finite() {
        return Err(Error::Divergent(
            "the weighted tail of the measure diverges; no chain exists".into(),
        ));
    }

    let mut nodes: Vec<f64> = (0..MEMO_NODES)
        .map(|i| {
            (MEMO_MIN.ln() + (MEMO_MAX.ln() - MEMO_MIN.ln()) * i as f64 / (MEMO_NODES - 1) as f64)
                .exp()
        })
        .collect();
    for b in mu_k.breakpoints() {
        if b > MEMO_MIN && b < MEMO_MAX {
            nodes.push(b);
        }
    }
    nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    nodes.dedup_by(|a, b| (*a - *b).abs() < 1e-12 * *b);

    let mut chain = MChain {
        lam,
        k,
        l_k: 0.0,
        b_k: 0.0,
        mu_k: Arc::new(mu_k.clone()),
        memo: Vec::new(),
    };

    for level in (1..k).rev() {
        // build M_level from M_{level+1}
        let n = nodes.len();
        let mut values = vec![0.0; n];
        let mut slopes = vec![0.0; n];
        let top = nodes[n - 1];
        values[n - 1] = chain.m(level + 1, top)? / top; // bound for the cut tail
        for i in (0..n - 1).rev() {
            let seg = quad::integrate(
                |s| chain.m(level + 1, s).unwrap_or(f64::NAN) / (s * s),
                nodes[i],
                nodes[i + 1],
                QuadOptions::default(),
            )?;
            values[i] = values[i + 1] + seg;
        }
        for i in 0..n {
            slopes[i] = -chain.m(level + 1, nodes[i])? / (nodes[i] * nodes[i]);
        }
        // Monotone limiter: a nonincreasing interpolant needs slopes within
        // three times the adjacent secants.
        for i in 0..n {
            let left = if i > 0 {
                (values[i] - values[i - 1]) / (nodes[i] - nodes[i - 1])
            } else {
                f64::NEG_INFINITY
            };
            let right = if i + 1 < n {
                (values[i + 1] - values[i]) / (nodes[i + 1] - nodes[i])
            } else {
                f64::NEG_INFINITY
            };
            let steepest = left.min(right);
            if steepest.is_finite() {
                slopes[i] = slopes[i].max(3.0 * steepest).min(0.0);
            }
        }
        chain.memo.push(MemoLevel {
            nodes: nodes.clone(),
            values,
            slopes,
        });
    }
    Ok(chain)
}

impl MChain {
    /// M_j(u) for 1 <= j <= k.
    pub fn m(&self, j: usize, u: f64) -> Result<f64> {
        if j == 0 || j > self.k {
            return Err(Error::Domain(format!(
                "chain level must satisfy 1 <= j <= {}, got {j}",
                self.k
            )));
        }
        if !(u > 0.0) {
            return Err(Error::Domain(format!("u must be positive, got {u}")));
        }
        if j == self.k {
            let v = self.mu_k.tail_power_integral(self.lam, u);
            return if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Divergent(format!("tail diverges at u={u}")))
            };
        }
        let level = &self.memo[self.k - 1 - j];
        let first = level.nodes[0];
        let last = *level.nodes.last().unwrap();
        if u >= last {
            return Ok(*level.values.last().unwrap());
        }
        if u < first {
            // exact below the memo range: one more nested integral
            let extra = quad::integrate(
                |s| self.m(j + 1, s).unwrap_or(f64::NAN) / (s * s),
                u,
                first,
                QuadOptions::default(),
            )?;
            return Ok(level.values[0] + extra);
        }
        Ok(level.hermite(u))
    }

    pub fn with_constants(mut self, l_k: f64, b_k: f64) -> Self {
        self.l_k = l_k;
        self.b_k = b_k;
        self
    }

    /// Rebuild the function the chain came from:
    /// f(x) = b_k/(lam)_k + ∫ (M_1(u) u^{k-1} + l_k/(k-1)!) e^{-xu} u^{lam-1} du.
    pub fn reconstruct(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::Domain(format!("x must be positive, got {x}")));
        }
        let lam = self.lam;
        let k = self.k;
        let shift = self.l_k / factorial(k - 1);
        let integral = quad::semi_infinite(
            |u| {
                let m1 = self.m(1, u).unwrap_or(f64::NAN);
                (m1 * u.powi((k - 1) as i32) + shift) * u.powf(lam - 1.0) * (-x * u).exp()
            },
            lam,
            QuadOptions {
                rel_tol: 1e-9,
                ..QuadOptions::default()
            },
        )?;
        Ok(self.b_k / pochhammer(lam, k) + integral)
    }
}

/// Estimates the two reconstruction constants of f at level k:
/// b_k = lim_{x→∞} c_k(f)(x) by large-x probing with a doubling check, and
/// l_k = lim_{x→0} x^lam g_k(f)(x) by decade probing with a Cauchy check.
pub fn limit_constants(f: &dyn DifferentiableFn, lam: f64, k: usize) -> Result<(f64, f64)> {
    let c3 = operators::c_op(f, lam, k, 1e3, Route::Leibniz)?;
    let c4 = operators::c_op(f, lam, k, 1e4, Route::Leibniz)?;
    if (c3 - c4).abs() > 1e-6 * (1.0 + c4.abs()) {
        return Err(Error::Quadrature(format!(
            "c_k does not stabilize towards infinity: {c3:.6e} at 1e3 vs {c4:.6e} at 1e4"
        )));
    }
    let b_k = if c4.abs() < 1e-10 { 0.0 } else { c4 };

    let probes: Vec<f64> = (2..=6).map(|i| 10f64.powi(-i)).collect();
    let mut vals = Vec::with_capacity(probes.len());
    for &x in &probes {
        vals.push(x.powf(lam) * operators::g_op(f, lam, k, x)?);
    }
    let n = vals.len();
    if (vals[n - 1] - vals[n - 2]).abs() > 1e-6 * (1.0 + vals[n - 1].abs()) {
        return Err(Error::Quadrature(format!(
            "x^lam g_k does not stabilize towards 0: {:?}",
            vals
        )));
    }
    let l_k = if vals[n - 1].abs() < 1e-10 {
        0.0
    } else {
        vals[n - 1]
    };
    Ok((l_k, b_k))
}

/// Convenience: chain plus constants extracted from the function itself.
pub fn m_chain_for(
    f: &dyn DifferentiableFn,
    mu_k: &Measure,
    lam: f64,
    k: usize,
) -> Result<MChain> {
    let (l_k, b_k) = limit_constants(f, lam, k)?;
    Ok(m_chain(mu_k, lam, k)?.with_constants(l_k, b_k))
}

// ---------------------------------------------------------------------------
// Sign checks on the chain
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct StarEntry {
    pub j: usize,
    /// min over the grid of (-1)^j ∂^j (M_{k-j+1}(u) u^{j-1}), normalized by
    /// the local magnitude scale.
    pub min_normalized: f64,
    pub witness: Option<f64>,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct StarReport {
    pub entries: Vec<StarEntry>,
    pub all_pass: bool,
}

/// Finite-difference verification of the alternating-sign inequalities
/// (-1)^j ∂^j (M_{k-j+1}(u) u^{j-1}) >= 0 for 1 <= j <= min(j_max, k-1).
/// Differences ride on the memo grid, so the order is capped at 3 and the
/// tolerance absorbs interpolation noise.
pub fn star_inequalities_check(chain: &MChain, j_max: usize, grid: &ScanGrid) -> Result<StarReport> {
    let tol = 1e-3;
    let j_hi = j_max.min(chain.k.saturating_sub(1)).min(3);
    let mut entries = Vec::new();
    for j in 1..=j_hi {
        let level = chain.k - j + 1;
        let p = |u: f64| -> Result<f64> { Ok(chain.m(level, u)? * u.powi((j - 1) as i32)) };
        let mut min_norm = f64::INFINITY;
        let mut witness = None;
        for &u in grid.points() {
            if !(1e-4..=1e4).contains(&u) {
                continue;
            }
            let h = 0.05 * u;
            let mut fd = 0.0;
            for i in 0..=j {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                fd += sign * binomial(j, i) * p(u + (j as f64 / 2.0 - i as f64) * h)?;
            }
            fd /= h.powi(j as i32);
            let signed = if j % 2 == 0 { fd } else { -fd };
            let scale = 1.0 + p(u)?.abs() / u.powi(j as i32);
            let norm = signed / scale;
            if norm < min_norm {
                min_norm = norm;
                witness = Some(u);
            }
        }
        entries.push(StarEntry {
            j,
            min_normalized: min_norm,
            witness,
            pass: min_norm >= -tol,
        });
    }
    let all_pass = entries.iter().all(|e| e.pass);
    Ok(StarReport { entries, all_pass })
}

#[derive(Clone, Debug)]
pub struct NChainReport {
    /// max over the grid and levels of |N_j(u) - ∫₀^u N_{j+1}|.
    pub identity_max_gap: f64,
    pub identity_pass: bool,
    /// per j: |Δ^j N_1| at u = 1e-1, 1e-2, 1e-3 and whether it decays.
    pub derivative_decay: Vec<(usize, Vec<f64>, bool)>,
    pub all_pass: bool,
}

/// The reciprocal-variable view N_j(u) = M_j(1/u): checks the integral
/// recursion N_j(u) = ∫₀^u N_{j+1}(t) dt and the flat start of N_1 at 0.
pub fn n_chain(chain: &MChain, grid: &ScanGrid) -> Result<NChainReport> {
    let n_fn = |j: usize, u: f64| -> Result<f64> { chain.m(j, 1.0 / u) };

    let mut identity_max_gap: f64 = 0.0;
    for j in 1..chain.k {
        for &u in grid.points() {
            if !(1e-3..=1e3).contains(&u) {
                continue;
            }
            let lhs = n_fn(j, u)?;
            let rhs = quad::integrate(
                |t| n_fn(j + 1, t).unwrap_or(f64::NAN),
                0.0,
                u,
                QuadOptions {
                    rel_tol: 1e-10,
                    ..QuadOptions::default()
                },
            )?;
            let gap = (lhs - rhs).abs() / (1.0 + lhs.abs());
            identity_max_gap = identity_max_gap.max(gap);
        }
    }
    let identity_pass = identity_max_gap <= 1e-7;

    let mut derivative_decay = Vec::new();
    for j in 1..chain.k.min(4) {
        let mut mags = Vec::new();
        for e in 1..=3 {
            let u = 10f64.powi(-e);
            let h = u / 4.0;
            let mut fd = 0.0;
            for i in 0..=j {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                fd += sign * binomial(j, i) * n_fn(1, u + (j as f64 / 2.0 - i as f64) * h)?;
            }
            mags.push((fd / h.powi(j as i32)).abs());
        }
        let decays = mags.windows(2).all(|w| w[1] <= w[0] + 1e-12);
        derivative_decay.push((j, mags, decays));
    }
    let all_pass = identity_pass && derivative_decay.iter().all(|(_, _, d)| *d);
    Ok(NChainReport {
        identity_max_gap,
        identity_pass,
        derivative_decay,
        all_pass,
    })
}

// ---------------------------------------------------------------------------
// Asymptotic expansion from moments
// ---------------------------------------------------------------------------

/// x^{lam-1} f(x) = Σ_{k<n} α_k x^{-k-1} + r_n(x) with
/// α_k = (-1)^k (lam)_k s_k(μ) / k! driven by the moments of the kernel-side
/// measure.
#[derive(Clone, Debug)]
pub struct AsymptoticExpansion {
    pub lam: f64,
    pub coefficients: Vec<f64>,
    f: GSFunction,
}

pub fn asymptotic_expand(mu: &Measure, lam: f64, n: usize) -> Result<AsymptoticExpansion> {
    if !(lam > 0.0) {
        return Err(Error::Domain(format!("lam must be positive, got {lam}")));
    }
    let mut coefficients = Vec::with_capacity(n);
    for k in 0..n {
        let s_k = mu.moment(k);
        if !s_k.is_finite() {
            return Err(Error::Divergent(format!(
                "moment of order {k} diverges; the expansion stops there"
            )));
        }
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        coefficients.push(sign * pochhammer(lam, k) * s_k / factorial(k));
    }
    let f = GSFunction::builder(lam)
        .stieltjes_measure(mu.clone())
        .build()?;
    Ok(AsymptoticExpansion {
        lam,
        coefficients,
        f,
    })
}

impl AsymptoticExpansion {
    /// r_m(x) = x^{lam-1} f(x) - Σ_{k<m} α_k x^{-k-1}, for m up to the number
    /// of computed coefficients.
    pub fn remainder(&self, m: usize, x: f64) -> Result<f64> {
        if m > self.coefficients.len() {
            return Err(Error::Capability {
                target: "asymptotic expansion".into(),
                requested: m,
                supported: self.coefficients.len(),
            });
        }
        let mut r = x.powf(self.lam - 1.0) * self.f.eval(x)?;
        for (k, &a) in self.coefficients.iter().take(m).enumerate() {
            r -= a * x.powi(-(k as i32) - 1);
        }
        Ok(r)
    }

    /// (x, r_m(x), x^m r_m(x)) over the probe points.
    pub fn decay_probe(&self, m: usize, xs: &[f64]) -> Result<Vec<(f64, f64, f64)>> {
        xs.iter()
            .map(|&x| {
                let r = self.remainder(m, x)?;
                Ok((x, r, x.powi(m as i32) * r))
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Density-side recursion and convolution checks
// ---------------------------------------------------------------------------

/// Densities v_m(s) = s^{lam-1} (-1)^m s^m w^{(m)}(s) as a measure.
pub fn weighted_transform_density(mu: &Measure, lam: f64, m: usize) -> Result<Measure> {
    if mu.has_atoms() {
        return Err(Error::NotAMeasure(
            "the density-side recursion needs a pure density measure".into(),
        ));
    }
    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
    let pieces = mu
        .pieces()
        .iter()
        .map(|p| DensityPiece {
            lower: p.lower,
            upper: p.upper,
            density: SmoothDensity::weighted(
                p.density.clone(),
                m,
                lam - 1.0 + m as f64,
                sign,
            ),
        })
        .collect();
    Measure::new(Vec::new(), pieces)
}

#[derive(Clone, Debug)]
pub struct RhoReport {
    pub max_differential_gap: f64,
    pub differential_witness: Option<f64>,
    pub max_convolution_gap: f64,
    pub convolution_witness: Option<f64>,
    pub pass: bool,
}

/// With v_m = s^{lam-1} (-1)^m s^m w^{(m)}(s), verifies the differential form
/// s v_k'(s) = (lam+k-1) v_k(s) - v_{k+1}(s) pointwise and its integrated
/// (convolution) form s v_k(s) = ∫₀^s [(lam+k) v_k - v_{k+1}](u) du.
pub fn rho_recursion_check(
    mu: &Measure,
    lam: f64,
    k: usize,
    grid: &ScanGrid,
) -> Result<RhoReport> {
    let vk = weighted_transform_density(mu, lam, k)?;
    let vk1 = weighted_transform_density(mu, lam, k + 1)?;

    let mut max_differential_gap: f64 = 0.0;
    let mut differential_witness = None;
    let mut max_convolution_gap: f64 = 0.0;
    let mut convolution_witness = None;

    for &s in grid.points() {
        let inside = mu.pieces().iter().any(|p| s > p.lower && s < p.upper);
        if !inside {
            continue;
        }
        let v = vk.density_value(0, s)?;
        let vprime = vk.density_value(1, s)?;
        let v1 = vk1.density_value(0, s)?;
        let lhs = s * vprime;
        let rhs = (lam + k as f64 - 1.0) * v - v1;
        let gap = (lhs - rhs).abs();
        if gap > max_differential_gap {
            max_differential_gap = gap;
            differential_witness = Some(s);
        }

        let integrand = |u: f64| {
            let a = vk.density_value(0, u).unwrap_or(f64::NAN);
            let b = vk1.density_value(0, u).unwrap_or(f64::NAN);
            (lam + k as f64) * a - b
        };
        let sing = (lam + k as f64 - 1.0).min(0.0);
        let conv = quad::integrate_singular_at_zero(integrand, s, sing, QuadOptions::default())?;
        let gap = (s * v - conv).abs();
        if gap > max_convolution_gap {
            max_convolution_gap = gap;
            convolution_witness = Some(s);
        }
    }

    Ok(RhoReport {
        max_differential_gap,
        differential_witness,
        max_convolution_gap,
        convolution_witness,
        pass: max_differential_gap <= 1e-7 && max_convolution_gap <= 1e-7,
    })
}

// ---------------------------------------------------------------------------
// Order-shift transform
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct LambdaShift {
    pub measure: Measure,
    pub scan: ScanReport,
    /// The (all-positive) expansion coefficients per derivative order.
    pub coefficients: Vec<f64>,
}

/// The order-k transform of the reweighted measure s^{lam1-lam2} μ, expanded
/// so each term carries (-1)^j s^j w^{(j)} with a positive coefficient:
///
/// ```text
/// (-1)^k s^k ∂^k (s^{lam1-lam2} μ)
///   = s^{lam1-lam2} Σ_j C(k,j) Γ(k-j+Δ)/Γ(Δ) (-1)^j s^j ∂^j μ,  Δ = lam2-lam1.
/// ```
pub fn lambda_shift_density(
    mu: &Measure,
    lam1: f64,
    lam2: f64,
    k: usize,
    grid: &ScanGrid,
) -> Result<LambdaShift> {
    if !(lam2 > lam1) {
        return Err(Error::Domain(format!(
            "the shift needs lam2 > lam1, got ({lam1}, {lam2})"
        )));
    }
    let delta = lam2 - lam1;
    let mut coefficients = Vec::with_capacity(k + 1);
    for j in 0..=k {
        coefficients.push(binomial(k, j) * gamma_ratio((k - j) as f64 + delta, delta)?);
    }

    let power = lam1 - lam2;
    let atoms = if k == 0 {
        mu.atoms()
            .iter()
            .map(|a| Atom {
                location: a.location,
                weight: a.weight * a.location.powf(power),
            })
            .collect()
    } else {
        if mu.has_atoms() {
            return Err(Error::NotAMeasure(
                "the order-k shift of an atomic measure is not a measure for k >= 1".into(),
            ));
        }
        Vec::new()
    };

    let mut pieces = Vec::new();
    for (i, p) in mu.pieces().iter().enumerate() {
        if p.density.max_order() < k {
            return Err(Error::Capability {
                target: format!("density piece {i}"),
                requested: k,
                supported: p.density.max_order(),
            });
        }
        let terms: Vec<SmoothDensity> = coefficients
            .iter()
            .enumerate()
            .map(|(j, &cj)| {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                SmoothDensity::weighted(p.density.clone(), j, power + j as f64, cj * sign)
            })
            .collect();
        pieces.push(DensityPiece {
            lower: p.lower,
            upper: p.upper,
            density: SmoothDensity::sum(terms),
        });
    }

    let measure = Measure::new(atoms, pieces)?;
    let scan = measure.positivity_scan(grid);
    Ok(LambdaShift {
        measure,
        scan,
        coefficients,
    })
}

/// Class membership re-checked at a larger order parameter; the verdict level
/// must never drop when lam increases.
pub fn class_level(f: &GSFunction, lam: f64, n_class: usize, grid: &ScanGrid) -> Option<usize> {
    cmtest::class_membership(f, lam, n_class, grid, cmtest::DEFAULT_CM_TOL).membership_level()
}
