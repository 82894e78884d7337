//! Positive measures on (0,∞) as finite atom lists plus piecewise smooth
//! densities, together with the calculus the rest of the crate leans on:
//! moments, tail integrals, the order-k transform with density
//! (-1)^k s^k w^{(k)}(s), grid positivity scans, admissibility checks and
//! the reciprocal image measure.
//!
//! Objects produced by [`Measure::derived`] may carry signed densities; no
//! positivity is asserted at construction time. A grid scan that passes is
//! reported as "numerically positive", never as a proof.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::quad::{self, QuadOptions};
use crate::specfun::{binomial, falling_factorial};

/// Finite-difference densities cap their derivative order here; accuracy
/// collapses beyond it.
pub const FD_ORDER_CAP: usize = 6;

/// Effective derivative order advertised by closed-form densities.
pub const CLOSED_FORM_ORDER: usize = 64;

/// Outcome of a sign or membership check.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// Strictly increasing evaluation points with a sign tolerance.
#[derive(Clone, Debug)]
pub struct ScanGrid {
    points: Vec<f64>,
    pub tolerance: f64,
}

impl ScanGrid {
    pub fn from_points(points: Vec<f64>, tolerance: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Domain("scan grid must be nonempty".into()));
        }
        if points[0] <= 0.0 {
            return Err(Error::Domain("scan grid points must be positive".into()));
        }
        if points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain(
                "scan grid points must be strictly increasing".into(),
            ));
        }
        if tolerance < 0.0 {
            return Err(Error::Domain("scan tolerance must be non-negative".into()));
        }
        Ok(ScanGrid { points, tolerance })
    }

    pub fn log_spaced(min: f64, max: f64, n: usize) -> Result<Self> {
        if !(min > 0.0 && max > min && n >= 1) {
            return Err(Error::Domain(format!(
                "invalid log grid ({min}, {max}) with {n} points"
            )));
        }
        let pts = if n == 1 {
            vec![min]
        } else {
            let (la, lb) = (min.ln(), max.ln());
            (0..n)
                .map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp())
                .collect()
        };
        ScanGrid::from_points(pts, 1e-9)
    }

    pub fn linear(min: f64, max: f64, n: usize) -> Result<Self> {
        if !(min > 0.0 && max > min && n >= 2) {
            return Err(Error::Domain(format!(
                "invalid linear grid ({min}, {max}) with {n} points"
            )));
        }
        let pts = (0..n)
            .map(|i| min + (max - min) * i as f64 / (n - 1) as f64)
            .collect();
        ScanGrid::from_points(pts, 1e-9)
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Smallest gap between consecutive points (grid length 1 gives 1.0).
    pub fn min_gap(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
            .min(1.0)
    }
}

impl Default for ScanGrid {
    fn default() -> Self {
        ScanGrid::log_spaced(1e-3, 1e3, 64).expect("default grid is valid")
    }
}

/// How a density's derivatives are produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    ClosedForm,
    FiniteDifference,
}

#[derive(Clone)]
enum DensityKind {
    /// scale · e^{-rate s}
    Exponential { scale: f64, rate: f64 },
    /// scale · s^exponent
    Power { scale: f64, exponent: f64 },
    /// P(s)/Q(s) with polynomial coefficients in ascending order.
    Rational { num: Vec<f64>, den: Vec<f64> },
    /// Arbitrary pointwise function, derivatives by central differences.
    PointwiseFn {
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        max_order: usize,
    },
    /// scale · s^power · w^{(deriv)}(s) over a base density.
    Weighted {
        base: Arc<SmoothDensity>,
        deriv: usize,
        power: f64,
        scale: f64,
    },
    Sum(Vec<SmoothDensity>),
    /// s ↦ ∫_s^∞ t^{-lam} dμ(t); first derivative is -s^{-lam} w_μ(s).
    TailOf { mu: Arc<Measure>, lam: f64 },
    /// s ↦ scale · ∫ e^{-st} dν(t); derivatives bring down powers of -t.
    LaplaceOf { nu: Arc<Measure>, scale: f64 },
    /// t ↦ w(1/t)/t², the change of variables under s ↦ 1/s. Order 0 only.
    Reciprocal { base: Arc<SmoothDensity> },
}

/// A density on an interval with access to derivatives up to a declared order.
#[derive(Clone)]
pub struct SmoothDensity {
    kind: DensityKind,
}

impl fmt::Debug for SmoothDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            DensityKind::Exponential { scale, rate } => {
                write!(f, "Exponential({scale}·e^(-{rate}s))")
            }
            DensityKind::Power { scale, exponent } => write!(f, "Power({scale}·s^{exponent})"),
            DensityKind::Rational { num, den } => write!(f, "Rational({num:?}/{den:?})"),
            DensityKind::PointwiseFn { max_order, .. } => {
                write!(f, "PointwiseFn(max_order={max_order})")
            }
            DensityKind::Weighted {
                base,
                deriv,
                power,
                scale,
            } => write!(f, "Weighted({scale}·s^{power}·D^{deriv}{base:?})"),
            DensityKind::Sum(terms) => write!(f, "Sum({terms:?})"),
            DensityKind::TailOf { lam, .. } => write!(f, "TailOf(lam={lam})"),
            DensityKind::LaplaceOf { scale, .. } => write!(f, "LaplaceOf(scale={scale})"),
            DensityKind::Reciprocal { base } => write!(f, "Reciprocal({base:?})"),
        }
    }
}

impl SmoothDensity {
    pub fn exponential(scale: f64, rate: f64) -> Self {
        SmoothDensity {
            kind: DensityKind::Exponential { scale, rate },
        }
    }

    pub fn power(scale: f64, exponent: f64) -> Self {
        SmoothDensity {
            kind: DensityKind::Power { scale, exponent },
        }
    }

    pub fn constant(value: f64) -> Self {
        SmoothDensity::power(value, 0.0)
    }

    /// P(s)/Q(s); coefficients ascending. Derivatives are exact via Taylor
    /// series division at the evaluation point.
    pub fn rational(num: Vec<f64>, den: Vec<f64>) -> Result<Self> {
        if den.iter().all(|c| *c == 0.0) {
            return Err(Error::Domain("rational density has zero denominator".into()));
        }
        Ok(SmoothDensity {
            kind: DensityKind::Rational { num, den },
        })
    }

    /// Density from a plain function; derivatives use central differences and
    /// the order is capped at [`FD_ORDER_CAP`].
    pub fn from_fn(f: impl Fn(f64) -> f64 + Send + Sync + 'static, max_order: usize) -> Self {
        SmoothDensity {
            kind: DensityKind::PointwiseFn {
                f: Arc::new(f),
                max_order: max_order.min(FD_ORDER_CAP),
            },
        }
    }

    pub(crate) fn from_expr(expr: Expr, max_order: usize) -> Self {
        SmoothDensity::from_fn(move |s| expr.eval(s), max_order)
    }

    /// scale · s^power · w^{(deriv)}(s).
    pub fn weighted(base: SmoothDensity, deriv: usize, power: f64, scale: f64) -> Self {
        SmoothDensity {
            kind: DensityKind::Weighted {
                base: Arc::new(base),
                deriv,
                power,
                scale,
            },
        }
    }

    pub fn sum(terms: Vec<SmoothDensity>) -> Self {
        SmoothDensity {
            kind: DensityKind::Sum(terms),
        }
    }

    /// Tail function M(s) = ∫_s^∞ t^{-lam} dμ(t) of a measure, as a density.
    pub fn tail_of(mu: Measure, lam: f64) -> Self {
        SmoothDensity {
            kind: DensityKind::TailOf {
                mu: Arc::new(mu),
                lam,
            },
        }
    }

    /// scale · ∫ e^{-st} dν(t) as a density of s (a completely monotonic one
    /// whenever ν is positive).
    pub fn laplace_of(nu: Measure, scale: f64) -> Self {
        SmoothDensity {
            kind: DensityKind::LaplaceOf {
                nu: Arc::new(nu),
                scale,
            },
        }
    }

    fn reciprocal(base: Arc<SmoothDensity>) -> Self {
        SmoothDensity {
            kind: DensityKind::Reciprocal { base },
        }
    }

    pub fn provenance(&self) -> Provenance {
        match &self.kind {
            DensityKind::PointwiseFn { .. } => Provenance::FiniteDifference,
            DensityKind::Weighted { base, .. } | DensityKind::Reciprocal { base } => {
                base.provenance()
            }
            DensityKind::Sum(terms) => {
                if terms
                    .iter()
                    .any(|t| t.provenance() == Provenance::FiniteDifference)
                {
                    Provenance::FiniteDifference
                } else {
                    Provenance::ClosedForm
                }
            }
            _ => Provenance::ClosedForm,
        }
    }

    pub fn max_order(&self) -> usize {
        match &self.kind {
            DensityKind::Exponential { .. }
            | DensityKind::Power { .. }
            | DensityKind::Rational { .. } => CLOSED_FORM_ORDER,
            DensityKind::PointwiseFn { max_order, .. } => *max_order,
            DensityKind::Weighted { base, deriv, .. } => {
                base.max_order().saturating_sub(*deriv)
            }
            DensityKind::Sum(terms) => terms
                .iter()
                .map(|t| t.max_order())
                .min()
                .unwrap_or(CLOSED_FORM_ORDER),
            DensityKind::TailOf { mu, .. } => {
                if mu.pieces.is_empty() {
                    CLOSED_FORM_ORDER
                } else {
                    1 + mu
                        .pieces
                        .iter()
                        .map(|p| p.density.max_order())
                        .min()
                        .unwrap_or(0)
                }
            }
            DensityKind::LaplaceOf { .. } => CLOSED_FORM_ORDER,
            DensityKind::Reciprocal { .. } => 0,
        }
    }

    /// Value of the j-th derivative at s.
    pub fn eval(&self, j: usize, s: f64) -> Result<f64> {
        if j > self.max_order() {
            return Err(Error::Capability {
                target: format!("{self:?}"),
                requested: j,
                supported: self.max_order(),
            });
        }
        match &self.kind {
            DensityKind::Exponential { scale, rate } => {
                Ok(scale * (-rate).powi(j as i32) * (-rate * s).exp())
            }
            DensityKind::Power { scale, exponent } => {
                let ff = falling_factorial(*exponent, j);
                if ff == 0.0 {
                    return Ok(0.0);
                }
                Ok(scale * ff * s.powf(exponent - j as f64))
            }
            DensityKind::Rational { num, den } => rational_derivative(num, den, j, s),
            DensityKind::PointwiseFn { f, .. } => Ok(central_difference(f.as_ref(), j, s)),
            DensityKind::Weighted {
                base,
                deriv,
                power,
                scale,
            } => {
                let mut acc = 0.0;
                for i in 0..=j {
                    let ff = falling_factorial(*power, i);
                    if ff == 0.0 {
                        continue;
                    }
                    acc += binomial(j, i)
                        * ff
                        * s.powf(power - i as f64)
                        * base.eval(deriv + j - i, s)?;
                }
                Ok(scale * acc)
            }
            DensityKind::Sum(terms) => {
                let mut acc = 0.0;
                for t in terms {
                    acc += t.eval(j, s)?;
                }
                Ok(acc)
            }
            DensityKind::TailOf { mu, lam } => {
                if j == 0 {
                    let v = mu.tail_power_integral(*lam, s);
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(Error::Divergent(format!(
                            "tail integral of the measure diverges at s={s}"
                        )))
                    }
                } else {
                    // M'(s) = -s^{-lam} w(s); higher orders by Leibniz.
                    let m = j - 1;
                    let mut acc = 0.0;
                    for i in 0..=m {
                        acc += binomial(m, i)
                            * falling_factorial(-lam, i)
                            * s.powf(-lam - i as f64)
                            * mu.density_value(m - i, s)?;
                    }
                    Ok(-acc)
                }
            }
            DensityKind::LaplaceOf { nu, scale } => {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                Ok(scale * sign * nu.weighted_laplace(s, j as f64)?)
            }
            DensityKind::Reciprocal { base } => {
                let t = s;
                Ok(base.eval(0, 1.0 / t)? / (t * t))
            }
        }
    }
}

/// Exact j-th derivative of P/Q at s via Taylor-coefficient division.
fn rational_derivative(num: &[f64], den: &[f64], j: usize, s: f64) -> Result<f64> {
    let p = poly_taylor(num, s, j);
    let q = poly_taylor(den, s, j);
    if q[0] == 0.0 {
        return Err(Error::Domain(format!(
            "rational density has a pole at s={s}"
        )));
    }
    let mut w = vec![0.0; j + 1];
    for m in 0..=j {
        let mut acc = p[m];
        for i in 1..=m {
            acc -= q[i] * w[m - i];
        }
        w[m] = acc / q[0];
    }
    let mut fact = 1.0;
    for i in 1..=j {
        fact *= i as f64;
    }
    Ok(w[j] * fact)
}

/// Taylor coefficients P^{(i)}(s)/i! for i = 0..=order.
fn poly_taylor(coeffs: &[f64], s: f64, order: usize) -> Vec<f64> {
    let mut t = vec![0.0; order + 1];
    for (m, &c) in coeffs.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        for (i, ti) in t.iter_mut().enumerate().take(order.min(m) + 1) {
            *ti += c * binomial(m, i) * s.powi((m - i) as i32);
        }
    }
    t
}

/// Central-difference j-th derivative, step shrunk to keep the stencil in (0,∞).
fn central_difference(f: &(dyn Fn(f64) -> f64 + Send + Sync), j: usize, s: f64) -> f64 {
    if j == 0 {
        return f(s);
    }
    let base = f64::EPSILON.powf(1.0 / (j as f64 + 2.0));
    let mut h = (s.abs().max(1.0) * base).max(1e-6);
    let reach = j as f64 / 2.0;
    if s - reach * h <= 0.0 {
        h = s / (reach + 1.0);
    }
    let mut acc = 0.0;
    for i in 0..=j {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * binomial(j, i) * f(s + (reach - i as f64) * h);
    }
    acc / h.powi(j as i32)
}

/// A point mass at `location > 0` with `weight >= 0`.
#[derive(Clone, Copy, Debug)]
pub struct Atom {
    pub location: f64,
    pub weight: f64,
}

/// A density on the open interval (lower, upper); `upper` may be +∞.
#[derive(Clone, Debug)]
pub struct DensityPiece {
    pub lower: f64,
    pub upper: f64,
    pub density: SmoothDensity,
}

impl DensityPiece {
    fn contains(&self, s: f64) -> bool {
        s > self.lower && s < self.upper
    }
}

/// Atoms plus piecewise smooth density on (0,∞).
#[derive(Clone, Debug, Default)]
pub struct Measure {
    atoms: Vec<Atom>,
    pieces: Vec<DensityPiece>,
}

/// Result of evaluating a (possibly signed) density over a grid.
#[derive(Clone, Debug)]
pub struct ScanReport {
    pub verdict: Verdict,
    pub min_value: f64,
    pub witness: Option<f64>,
    pub points_checked: usize,
}

/// Diagnostics for the integrability conditions near 0 and ∞.
#[derive(Clone, Debug)]
pub struct LevyReport {
    pub admissible: bool,
    /// ∫₀¹ dμ
    pub mass_near_zero: f64,
    /// ∫₁^∞ t^{-lam} dμ(t)
    pub weighted_tail: f64,
}

impl Measure {
    pub fn new(atoms: Vec<Atom>, pieces: Vec<DensityPiece>) -> Result<Self> {
        for (i, a) in atoms.iter().enumerate() {
            if !(a.location > 0.0) || !a.location.is_finite() {
                return Err(Error::Domain(format!(
                    "atom {i} location must be a positive finite number, got {}",
                    a.location
                )));
            }
            if !(a.weight >= 0.0) {
                return Err(Error::Domain(format!(
                    "atom {i} weight must be non-negative, got {}",
                    a.weight
                )));
            }
        }
        let mut pieces = pieces;
        for (i, p) in pieces.iter().enumerate() {
            if !(p.lower >= 0.0) || !p.lower.is_finite() {
                return Err(Error::Domain(format!(
                    "density piece {i} lower bound must be finite and >= 0, got {}",
                    p.lower
                )));
            }
            if !(p.upper > p.lower) {
                return Err(Error::Domain(format!(
                    "density piece {i} must have upper > lower, got ({}, {})",
                    p.lower, p.upper
                )));
            }
        }
        pieces.sort_by(|a, b| a.lower.partial_cmp(&b.lower).unwrap());
        for w in pieces.windows(2) {
            if w[0].upper > w[1].lower {
                return Err(Error::Domain(format!(
                    "density intervals ({}, {}) and ({}, {}) overlap",
                    w[0].lower, w[0].upper, w[1].lower, w[1].upper
                )));
            }
        }
        let mut atoms = atoms;
        atoms.sort_by(|a, b| a.location.partial_cmp(&b.location).unwrap());
        Ok(Measure { atoms, pieces })
    }

    pub fn zero() -> Self {
        Measure::default()
    }

    pub fn dirac(location: f64) -> Result<Self> {
        Measure::new(
            vec![Atom {
                location,
                weight: 1.0,
            }],
            Vec::new(),
        )
    }

    pub fn from_atoms(atoms: &[(f64, f64)]) -> Result<Self> {
        Measure::new(
            atoms
                .iter()
                .map(|&(location, weight)| Atom { location, weight })
                .collect(),
            Vec::new(),
        )
    }

    pub fn from_density(density: SmoothDensity, lower: f64, upper: f64) -> Result<Self> {
        Measure::new(
            Vec::new(),
            vec![DensityPiece {
                lower,
                upper,
                density,
            }],
        )
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn pieces(&self) -> &[DensityPiece] {
        &self.pieces
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty() && self.pieces.is_empty()
    }

    pub fn has_atoms(&self) -> bool {
        !self.atoms.is_empty()
    }

    /// Finite breakpoints of the support: atom locations and finite piece
    /// endpoints, ascending and deduplicated.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = self.atoms.iter().map(|a| a.location).collect();
        for p in &self.pieces {
            if p.lower > 0.0 {
                pts.push(p.lower);
            }
            if p.upper.is_finite() {
                pts.push(p.upper);
            }
        }
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pts.dedup();
        pts
    }

    /// j-th derivative of the total density at s (zero where no piece covers s).
    pub fn density_value(&self, j: usize, s: f64) -> Result<f64> {
        let mut acc = 0.0;
        for p in &self.pieces {
            if p.contains(s) {
                acc += p.density.eval(j, s)?;
            }
        }
        Ok(acc)
    }

    /// Spot-check that all densities are non-negative on the grid; used at
    /// spec ingestion, not for derived (intentionally signed) measures.
    pub fn check_nonnegative(&self, grid: &ScanGrid) -> Result<()> {
        for (i, p) in self.pieces.iter().enumerate() {
            for &s in grid.points() {
                if p.contains(s) {
                    let v = p.density.eval(0, s)?;
                    if v < -grid.tolerance {
                        return Err(Error::Domain(format!(
                            "density piece {i} is negative at s={s} (value {v:.6e})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// ∫ s^k dμ(s); +∞ when the integral diverges numerically.
    pub fn moment(&self, k: usize) -> f64 {
        let atom_part: f64 = self
            .atoms
            .iter()
            .map(|a| a.weight * a.location.powi(k as i32))
            .sum();
        let mut total = atom_part;
        for p in &self.pieces {
            let d = p.density.clone();
            let g = move |s: f64| s.powi(k as i32) * d.eval(0, s).unwrap_or(f64::NAN);
            match integrate_piece_signal(&g, p.lower, p.upper) {
                Ok(v) => total += v,
                Err(_) => return f64::INFINITY,
            }
        }
        total
    }

    /// ∫ g dμ for an arbitrary kernel g; `sing_exponent_at_zero` declares the
    /// power behaviour of g near 0 so the substitution rule can kick in.
    pub fn kernel_integral<G: Fn(f64) -> f64>(
        &self,
        g: G,
        sing_exponent_at_zero: f64,
    ) -> Result<f64> {
        let mut total = 0.0;
        for a in &self.atoms {
            total += a.weight * g(a.location);
        }
        for p in &self.pieces {
            let d = &p.density;
            let integrand = |s: f64| g(s) * d.eval(0, s).unwrap_or(f64::NAN);
            total += integrate_piece(&integrand, p.lower, p.upper, sing_exponent_at_zero)?;
        }
        Ok(total)
    }

    /// ∫ e^{-x s} s^power dμ(s).
    pub fn weighted_laplace(&self, x: f64, power: f64) -> Result<f64> {
        self.kernel_integral(
            |s| (-x * s).exp() * s.powf(power),
            power.min(0.0),
        )
    }

    /// The order-k transform: density (-1)^k s^k w^{(k)}(s) on each piece.
    /// The result is a signed object; positivity is *not* asserted here.
    pub fn derived(&self, k: usize) -> Result<Measure> {
        if k == 0 {
            return Ok(self.clone());
        }
        if let Some(a) = self.atoms.iter().find(|a| a.weight != 0.0) {
            return Err(Error::NotAMeasure(format!(
                "the distributional derivative of an atom (at s={}) is not a measure",
                a.location
            )));
        }
        let mut pieces = Vec::with_capacity(self.pieces.len());
        for (i, p) in self.pieces.iter().enumerate() {
            let supported = p.density.max_order();
            if supported < k {
                return Err(Error::Capability {
                    target: format!("density piece {i}"),
                    requested: k,
                    supported,
                });
            }
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            pieces.push(DensityPiece {
                lower: p.lower,
                upper: p.upper,
                density: SmoothDensity::weighted(p.density.clone(), k, k as f64, sign),
            });
        }
        Measure::new(Vec::new(), pieces)
    }

    /// Evaluate every piece's density at the grid points inside its interval.
    pub fn positivity_scan(&self, grid: &ScanGrid) -> ScanReport {
        let mut min_value = f64::INFINITY;
        let mut witness = None;
        let mut checked = 0usize;
        for p in &self.pieces {
            for &s in grid.points() {
                if p.contains(s) {
                    match p.density.eval(0, s) {
                        Ok(v) => {
                            checked += 1;
                            if v < min_value {
                                min_value = v;
                                witness = Some(s);
                            }
                        }
                        Err(_) => {
                            return ScanReport {
                                verdict: Verdict::Inconclusive,
                                min_value: f64::NAN,
                                witness: Some(s),
                                points_checked: checked,
                            }
                        }
                    }
                }
            }
        }
        if self.pieces.is_empty() {
            // Pure atom (or empty) measures carry non-negative weights by
            // construction; report the smallest weight for transparency.
            let min_w = self
                .atoms
                .iter()
                .map(|a| a.weight)
                .fold(f64::INFINITY, f64::min);
            return ScanReport {
                verdict: Verdict::Pass,
                min_value: if min_w.is_finite() { min_w } else { 0.0 },
                witness: None,
                points_checked: 0,
            };
        }
        if checked == 0 {
            return ScanReport {
                verdict: Verdict::Inconclusive,
                min_value: f64::NAN,
                witness: None,
                points_checked: 0,
            };
        }
        let verdict = if min_value >= -grid.tolerance {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        ScanReport {
            verdict,
            min_value,
            witness,
            points_checked: checked,
        }
    }

    /// M(u) = ∫_u^∞ s^{-lam} dμ(s); +∞ when the tail diverges. Atoms exactly
    /// at u are excluded (the tail is taken over the open interval).
    pub fn tail_power_integral(&self, lam: f64, u: f64) -> f64 {
        assert!(u > 0.0, "tail_power_integral requires u > 0");
        let mut total: f64 = self
            .atoms
            .iter()
            .filter(|a| a.location > u)
            .map(|a| a.weight * a.location.powf(-lam))
            .sum();
        for p in &self.pieces {
            let lo = p.lower.max(u);
            if lo >= p.upper {
                continue;
            }
            let d = p.density.clone();
            let g = move |s: f64| s.powf(-lam) * d.eval(0, s).unwrap_or(f64::NAN);
            match integrate_piece_signal(&g, lo, p.upper) {
                Ok(v) => total += v,
                Err(_) => return f64::INFINITY,
            }
        }
        total
    }

    /// The two integrability conditions behind the order-lam builders:
    /// finite mass below 1 and finite t^{-lam}-weighted tail above 1.
    pub fn levy_admissibility(&self, lam: f64) -> LevyReport {
        let mut mass_near_zero: f64 = self
            .atoms
            .iter()
            .filter(|a| a.location <= 1.0)
            .map(|a| a.weight)
            .sum();
        let mut weighted_tail: f64 = self
            .atoms
            .iter()
            .filter(|a| a.location > 1.0)
            .map(|a| a.weight * a.location.powf(-lam))
            .sum();
        for p in &self.pieces {
            if p.lower < 1.0 {
                let hi = p.upper.min(1.0);
                let d = p.density.clone();
                let g = move |s: f64| d.eval(0, s).unwrap_or(f64::NAN);
                let part = if p.lower == 0.0 {
                    quad::lower_or_divergent(&g, hi, QuadOptions::default())
                } else {
                    quad::integrate(&g, p.lower, hi, QuadOptions::default())
                };
                match part {
                    Ok(v) => mass_near_zero += v,
                    Err(_) => mass_near_zero = f64::INFINITY,
                }
            }
            if p.upper > 1.0 {
                let lo = p.lower.max(1.0);
                let d = p.density.clone();
                let g = move |s: f64| s.powf(-lam) * d.eval(0, s).unwrap_or(f64::NAN);
                match integrate_piece_signal(&g, lo, p.upper) {
                    Ok(v) => weighted_tail += v,
                    Err(_) => weighted_tail = f64::INFINITY,
                }
            }
        }
        LevyReport {
            admissible: mass_near_zero.is_finite() && weighted_tail.is_finite(),
            mass_near_zero,
            weighted_tail,
        }
    }

    /// Push-forward under s ↦ 1/s: atoms move to reciprocal locations with
    /// unchanged weights, a density w on (a,b) becomes w(1/t)/t² on (1/b, 1/a).
    pub fn image_reciprocal(&self) -> Measure {
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom {
                location: 1.0 / a.location,
                weight: a.weight,
            })
            .collect();
        let pieces = self
            .pieces
            .iter()
            .map(|p| {
                let lower = if p.upper.is_finite() {
                    1.0 / p.upper
                } else {
                    0.0
                };
                let upper = if p.lower > 0.0 {
                    1.0 / p.lower
                } else {
                    f64::INFINITY
                };
                DensityPiece {
                    lower,
                    upper,
                    density: SmoothDensity::reciprocal(Arc::new(p.density.clone())),
                }
            })
            .collect();
        Measure::new(atoms, pieces).expect("reciprocal image preserves validity")
    }
}

/// Integrate g over (a, b) with b possibly infinite; divergence and
/// non-convergence both surface as errors.
fn integrate_piece(
    g: &(impl Fn(f64) -> f64 + ?Sized),
    a: f64,
    b: f64,
    sing_exponent_at_zero: f64,
) -> Result<f64> {
    let opts = QuadOptions::default();
    if a == 0.0 {
        let cut = if b.is_finite() { b.min(1.0) } else { 1.0 };
        let near = if sing_exponent_at_zero < 0.0 {
            quad::integrate_singular_at_zero(&g, cut, sing_exponent_at_zero, opts)?
        } else {
            quad::integrate(&g, 0.0, cut, opts)?
        };
        let far = if b.is_finite() {
            if b > cut {
                quad::integrate(&g, cut, b, opts)?
            } else {
                0.0
            }
        } else {
            quad::integrate_to_inf(&g, cut, opts)?
        };
        Ok(near + far)
    } else if b.is_finite() {
        quad::integrate(&g, a, b, opts)
    } else {
        quad::integrate_to_inf(&g, a, opts)
    }
}

/// Like `integrate_piece` but with divergence probing at both open ends;
/// used by the operations that signal +∞ instead of erroring.
fn integrate_piece_signal(g: &(impl Fn(f64) -> f64 + ?Sized), a: f64, b: f64) -> Result<f64> {
    let opts = QuadOptions::default();
    if a == 0.0 {
        let cut = if b.is_finite() { b.min(1.0) } else { 1.0 };
        let near = quad::lower_or_divergent(&g, cut, opts)?;
        let far = if b.is_finite() {
            if b > cut {
                quad::integrate(&g, cut, b, opts)?
            } else {
                0.0
            }
        } else {
            quad::tail_or_divergent(&g, cut, opts)?
        };
        Ok(near + far)
    } else if b.is_finite() {
        quad::integrate(&g, a, b, opts)
    } else {
        quad::tail_or_divergent(&g, a, opts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn exp_density_measure() -> Measure {
        Measure::from_density(SmoothDensity::exponential(1.0, 1.0), 0.0, f64::INFINITY).unwrap()
    }

    fn one_over_one_plus_s2() -> Measure {
        let d = SmoothDensity::rational(vec![1.0], vec![1.0, 0.0, 1.0]).unwrap();
        Measure::from_density(d, 0.0, f64::INFINITY).unwrap()
    }

    #[test]
    fn moments_of_atoms() {
        let mu = Measure::from_atoms(&[(2.0, 3.0)]).unwrap();
        assert_eq!(mu.moment(2), 12.0);
        let mu = Measure::dirac(1.0).unwrap();
        assert_eq!(mu.moment(0), 1.0);
    }

    #[test]
    fn moment_of_exponential_density() {
        // ∫ s^3 e^{-s} ds = Γ(4) = 6
        let mu = exp_density_measure();
        assert_relative_eq!(mu.moment(3), 6.0, max_relative = 1e-8);
    }

    #[test]
    fn divergent_moment_signals_infinity() {
        let mu =
            Measure::from_density(SmoothDensity::constant(1.0), 1.0, f64::INFINITY).unwrap();
        assert!(mu.moment(0).is_infinite());
        assert!(mu.moment(2).is_infinite());
    }

    #[test]
    fn derived_measure_of_exponential() {
        // w = e^{-s}: (-1)^2 s^2 w'' = s^2 e^{-s}
        let mu = exp_density_measure();
        let d2 = mu.derived(2).unwrap();
        for &s in &[0.3, 1.0, 2.5] {
            let v = d2.pieces()[0].density.eval(0, s).unwrap();
            assert_relative_eq!(v, s * s * (-s).exp(), max_relative = 1e-12);
        }
    }

    #[test]
    fn derived_measure_identity_at_zero() {
        let mu = exp_density_measure();
        let d0 = mu.derived(0).unwrap();
        assert_eq!(d0.pieces().len(), 1);
        assert_relative_eq!(
            d0.pieces()[0].density.eval(0, 1.3).unwrap(),
            (-1.3f64).exp(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn derived_measure_rejects_atoms() {
        let mu = Measure::dirac(1.0).unwrap();
        assert!(matches!(mu.derived(1), Err(Error::NotAMeasure(_))));
    }

    #[test]
    fn derived_measure_capability_error() {
        let d = SmoothDensity::from_fn(|s: f64| (-s).exp(), 2);
        let mu = Measure::from_density(d, 0.0, f64::INFINITY).unwrap();
        assert!(matches!(mu.derived(3), Err(Error::Capability { .. })));
    }

    #[test]
    fn positivity_scan_of_rational_transforms() {
        let mu = one_over_one_plus_s2();
        let grid = ScanGrid::default();
        // order 1: density s · 2s/(1+s²)² >= 0
        let d1 = mu.derived(1).unwrap();
        let r1 = d1.positivity_scan(&grid);
        assert_eq!(r1.verdict, Verdict::Pass);
        // order 2: density s²(6s²-2)/(1+s²)³ dips negative near s = 0.5
        let d2 = mu.derived(2).unwrap();
        let grid2 = ScanGrid::from_points(vec![0.1, 0.5, 1.0, 2.0], 1e-9).unwrap();
        let r2 = d2.positivity_scan(&grid2);
        assert_eq!(r2.verdict, Verdict::Fail);
        assert_eq!(r2.witness, Some(0.5));
        assert_relative_eq!(r2.min_value, -0.064, epsilon = 1e-3);
    }

    #[test]
    fn positivity_scan_zero_density() {
        let mu =
            Measure::from_density(SmoothDensity::constant(0.0), 0.0, f64::INFINITY).unwrap();
        let r = mu.positivity_scan(&ScanGrid::default());
        assert_eq!(r.verdict, Verdict::Pass);
        assert_eq!(r.min_value, 0.0);
    }

    #[test]
    fn scan_with_no_grid_overlap_is_inconclusive() {
        let mu = Measure::from_density(SmoothDensity::constant(1.0), 5.0, 6.0).unwrap();
        let grid = ScanGrid::from_points(vec![1.0, 2.0], 1e-9).unwrap();
        let r = mu.positivity_scan(&grid);
        assert_eq!(r.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn tail_power_integral_atom_cases() {
        let mu = Measure::dirac(1.0).unwrap();
        assert_eq!(mu.tail_power_integral(2.7, 0.5), 1.0);
        assert_eq!(mu.tail_power_integral(2.7, 2.0), 0.0);
        // atoms exactly at u are excluded
        assert_eq!(mu.tail_power_integral(1.0, 1.0), 0.0);
    }

    #[test]
    fn tail_power_integral_exponential() {
        // ∫_1^∞ s^{-1} e^{-s} ds = E₁(1)
        let mu = exp_density_measure();
        assert_relative_eq!(
            mu.tail_power_integral(1.0, 1.0),
            0.21938393439552029,
            max_relative = 1e-8
        );
    }

    #[test]
    fn tail_power_integral_monotone_in_u() {
        let mu = exp_density_measure();
        let mut prev = f64::INFINITY;
        for i in 0..8 {
            let u = 0.25 * 2f64.powi(i);
            let v = mu.tail_power_integral(1.5, u);
            assert!(v <= prev + 1e-12);
            prev = v;
        }
    }

    #[test]
    fn tail_scaling_decays_to_zero() {
        // u^lam · M(u) → 0 along decreasing decades
        for (mu, lam) in [
            (Measure::dirac(1.0).unwrap(), 2.0),
            (exp_density_measure(), 1.0),
        ] {
            let mut prev = f64::INFINITY;
            for j in 1..=6 {
                let u = 10f64.powi(-j);
                let v = u.powf(lam) * mu.tail_power_integral(lam, u);
                assert!(v < prev, "not decaying at u={u}: {v} vs {prev}");
                prev = v;
            }
            assert!(prev < 1e-4);
        }
    }

    #[test]
    fn levy_admissibility_cases() {
        let mu = Measure::dirac(1.0).unwrap();
        assert!(mu.levy_admissibility(2.0).admissible);

        let bad = Measure::from_density(SmoothDensity::power(1.0, -1.0), 0.0, 1.0).unwrap();
        let r = bad.levy_admissibility(1.0);
        assert!(!r.admissible);
        assert!(r.mass_near_zero.is_infinite());

        let ok = Measure::from_density(SmoothDensity::constant(1.0), 1.0, f64::INFINITY).unwrap();
        let r = ok.levy_admissibility(2.0);
        assert!(r.admissible);
        assert_relative_eq!(r.weighted_tail, 1.0, max_relative = 1e-9);
    }

    #[test]
    fn image_reciprocal_atom() {
        let mu = Measure::dirac(2.0).unwrap();
        let hat = mu.image_reciprocal();
        assert_eq!(hat.atoms()[0].location, 0.5);
        assert_eq!(hat.atoms()[0].weight, 1.0);
    }

    #[test]
    fn image_reciprocal_density_preserves_mass() {
        let mu = Measure::from_density(SmoothDensity::constant(1.0), 1.0, 2.0).unwrap();
        let hat = mu.image_reciprocal();
        assert_eq!(hat.pieces()[0].lower, 0.5);
        assert_eq!(hat.pieces()[0].upper, 1.0);
        assert_relative_eq!(hat.moment(0), 1.0, max_relative = 1e-9);
        // density is 1/t² on (1/2, 1)
        assert_relative_eq!(
            hat.pieces()[0].density.eval(0, 0.8).unwrap(),
            1.0 / 0.64,
            max_relative = 1e-12
        );
    }

    #[test]
    fn reciprocal_moment_identity() {
        // moment_k of the image equals ∫ s^{-k} dμ
        let mu = Measure::from_atoms(&[(0.5, 1.0), (2.0, 3.0)]).unwrap();
        let hat = mu.image_reciprocal();
        for k in 0..4 {
            let direct: f64 = mu
                .atoms()
                .iter()
                .map(|a| a.weight * a.location.powi(-(k as i32)))
                .sum();
            assert_relative_eq!(hat.moment(k), direct, max_relative = 1e-12);
        }
    }

    #[test]
    fn cm_density_family_scans_clean() {
        // w = e^{-s}: every transform order has density s^k e^{-s} >= 0
        let mu = exp_density_measure();
        let grid = ScanGrid::default();
        for k in 0..=4 {
            let r = mu.derived(k).unwrap().positivity_scan(&grid);
            assert_eq!(r.verdict, Verdict::Pass, "order {k} failed: {r:?}");
        }
    }

    #[test]
    fn rational_derivatives_match_closed_form() {
        // w = 1/(1+s²): w' = -2s/(1+s²)², w'' = (6s²-2)/(1+s²)³
        let d = SmoothDensity::rational(vec![1.0], vec![1.0, 0.0, 1.0]).unwrap();
        for &s in &[0.2, 0.5, 1.0, 3.0] {
            let q = 1.0 + s * s;
            assert_relative_eq!(d.eval(0, s).unwrap(), 1.0 / q, max_relative = 1e-13);
            assert_relative_eq!(
                d.eval(1, s).unwrap(),
                -2.0 * s / (q * q),
                max_relative = 1e-12
            );
            assert_relative_eq!(
                d.eval(2, s).unwrap(),
                (6.0 * s * s - 2.0) / (q * q * q),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn rejects_overlapping_pieces() {
        let p1 = DensityPiece {
            lower: 0.0,
            upper: 2.0,
            density: SmoothDensity::constant(1.0),
        };
        let p2 = DensityPiece {
            lower: 1.0,
            upper: 3.0,
            density: SmoothDensity::constant(1.0),
        };
        assert!(Measure::new(Vec::new(), vec![p1, p2]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn reciprocal_is_an_involution(
            locs in proptest::collection::vec(0.01f64..100.0, 1..5),
            weights in proptest::collection::vec(0.0f64..10.0, 5),
        ) {
            let atoms: Vec<(f64, f64)> = locs.iter().zip(&weights).map(|(&l, &w)| (l, w)).collect();
            let mu = Measure::from_atoms(&atoms).unwrap();
            let back = mu.image_reciprocal().image_reciprocal();
            for k in 0..3 {
                let a = mu.moment(k);
                let b = back.moment(k);
                prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
            }
        }

        #[test]
        fn fd_density_matches_closed_form_first_orders(s in 0.2f64..20.0) {
            let fd = SmoothDensity::from_fn(|s: f64| (-s).exp(), 4);
            let v1 = fd.eval(1, s).unwrap();
            let v2 = fd.eval(2, s).unwrap();
            prop_assert!((v1 + (-s).exp()).abs() < 2e-7 * (1.0 + (-s).exp()));
            prop_assert!((v2 - (-s).exp()).abs() < 2e-5 * (1.0 + (-s).exp()));
        }
    }
}
