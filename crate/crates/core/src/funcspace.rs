//! Functions on (0,∞) built from a constant, a multiple of x^{-lam}, a
//! kernel-side measure (either e^{-xs} s^{lam-1} dμ(s) or (x+t)^{-lam} dν(t))
//! and optional closed forms, with exact high-order derivatives.
//!
//! The canonical internal representation is the Laplace side: a function
//! given by a kernel measure ν is bridged on ingestion through the
//! completely monotonic density φ(s) = Γ(lam)^{-1} ∫ e^{-st} dν(t), so that
//! measure-side operator formulas always have a μ to act on. The constant
//! and the x^{-lam} coefficient stay symbolic: their operator images are
//! exact and should not pick up quadrature noise.

use std::collections::HashMap;
use std::fmt;
use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::measure::Measure;
use crate::quad::{self, QuadOptions};
use crate::specfun::{gamma, pochhammer};

/// Derivative cap when any representation requires quadrature.
pub const QUADRATURE_DERIV_CAP: usize = 12;
/// Derivative cap for exact (closed-form or atom-only) representations.
pub const CLOSED_DERIV_CAP: usize = 30;

/// A function with derivative access up to a declared order.
pub trait DifferentiableFn {
    fn max_order(&self) -> usize;
    fn derivative(&self, n: usize, x: f64) -> Result<f64>;
    fn value(&self, x: f64) -> Result<f64> {
        self.derivative(0, x)
    }
}

/// Exact closed-form building blocks.
#[derive(Clone, Debug)]
pub enum ClosedForm {
    Constant { value: f64 },
    /// weight · (x + t)^{-lam}
    PowerKernel { t: f64, weight: f64 },
    /// weight · s^{lam-1} e^{-xs} for a fixed s
    ExpKernel { s: f64, weight: f64 },
    Combination(Vec<ClosedForm>),
}

impl ClosedForm {
    fn derivative(&self, lam: f64, n: usize, x: f64) -> f64 {
        match self {
            ClosedForm::Constant { value } => {
                if n == 0 {
                    *value
                } else {
                    0.0
                }
            }
            ClosedForm::PowerKernel { t, weight } => {
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                weight * sign * pochhammer(lam, n) * (x + t).powf(-lam - n as f64)
            }
            ClosedForm::ExpKernel { s, weight } => {
                weight * s.powf(lam - 1.0) * (-s).powi(n as i32) * (-x * s).exp()
            }
            ClosedForm::Combination(terms) => {
                terms.iter().map(|t| t.derivative(lam, n, x)).sum()
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum EvalRoute {
    Closed,
    Stieltjes,
    Laplace,
    ConstantsOnly,
}

/// A generalized Stieltjes / Laplace-representable function.
pub struct GSFunction {
    lam: f64,
    c: f64,
    zero_atom: f64,
    laplace: Option<Measure>,
    stieltjes: Option<Measure>,
    closed_form: Option<ClosedForm>,
    route: EvalRoute,
    deriv_cap: usize,
    cache: Mutex<HashMap<(usize, u64), f64>>,
}

impl Clone for GSFunction {
    fn clone(&self) -> Self {
        GSFunction {
            lam: self.lam,
            c: self.c,
            zero_atom: self.zero_atom,
            laplace: self.laplace.clone(),
            stieltjes: self.stieltjes.clone(),
            closed_form: self.closed_form.clone(),
            route: self.route,
            deriv_cap: self.deriv_cap,
            cache: Mutex::new(HashMap::new()),
        }
    }
}

impl fmt::Debug for GSFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GSFunction")
            .field("lam", &self.lam)
            .field("c", &self.c)
            .field("zero_atom", &self.zero_atom)
            .field("route", &self.route)
            .field("deriv_cap", &self.deriv_cap)
            .finish()
    }
}

pub struct GSFunctionBuilder {
    lam: f64,
    c: f64,
    zero_atom: f64,
    laplace: Option<Measure>,
    stieltjes: Option<Measure>,
    closed_form: Option<ClosedForm>,
    deriv_cap: Option<usize>,
    skip_consistency_check: bool,
}

impl GSFunctionBuilder {
    pub fn constant(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    pub fn zero_atom(mut self, coefficient: f64) -> Self {
        self.zero_atom = coefficient;
        self
    }

    pub fn laplace_measure(mut self, mu: Measure) -> Self {
        self.laplace = Some(mu);
        self
    }

    pub fn stieltjes_measure(mut self, nu: Measure) -> Self {
        self.stieltjes = Some(nu);
        self
    }

    pub fn closed_form(mut self, cf: ClosedForm) -> Self {
        self.closed_form = Some(cf);
        self
    }

    pub fn derivative_cap(mut self, cap: usize) -> Self {
        self.deriv_cap = Some(cap);
        self
    }

    /// Skip the cross-representation agreement check (for callers that
    /// construct both sides from the same source by definition).
    pub fn trusted(mut self) -> Self {
        self.skip_consistency_check = true;
        self
    }

    pub fn build(self) -> Result<GSFunction> {
        if !(self.lam > 0.0) || !self.lam.is_finite() {
            return Err(Error::Domain(format!(
                "lambda must be positive, got {}",
                self.lam
            )));
        }
        if !(self.c >= 0.0) {
            return Err(Error::Domain(format!(
                "the additive constant must be non-negative, got {}",
                self.c
            )));
        }
        if !(self.zero_atom >= 0.0) {
            return Err(Error::Domain(format!(
                "the x^(-lambda) coefficient must be non-negative, got {}",
                self.zero_atom
            )));
        }

        let explicit_reps = usize::from(self.laplace.is_some())
            + usize::from(self.stieltjes.is_some())
            + usize::from(self.closed_form.is_some());

        // Bridge: convert a kernel-side measure to the canonical Laplace side.
        let mut laplace = self.laplace;
        if laplace.is_none() {
            if let Some(nu) = &self.stieltjes {
                if !nu.is_empty() {
                    let phi = crate::measure::SmoothDensity::laplace_of(
                        nu.clone(),
                        1.0 / gamma(self.lam),
                    );
                    laplace = Some(Measure::from_density(phi, 0.0, f64::INFINITY)?);
                } else {
                    laplace = Some(Measure::zero());
                }
            }
        }

        let route = if self.closed_form.is_some() {
            EvalRoute::Closed
        } else if self.stieltjes.is_some() {
            EvalRoute::Stieltjes
        } else if laplace.is_some() {
            EvalRoute::Laplace
        } else {
            EvalRoute::ConstantsOnly
        };

        let needs_quadrature = match route {
            EvalRoute::Closed | EvalRoute::ConstantsOnly => false,
            EvalRoute::Stieltjes => !self.stieltjes.as_ref().unwrap().pieces().is_empty(),
            EvalRoute::Laplace => !laplace.as_ref().unwrap().pieces().is_empty(),
        };
        let deriv_cap = self.deriv_cap.unwrap_or(if needs_quadrature {
            QUADRATURE_DERIV_CAP
        } else {
            CLOSED_DERIV_CAP
        });

        let f = GSFunction {
            lam: self.lam,
            c: self.c,
            zero_atom: self.zero_atom,
            laplace,
            stieltjes: self.stieltjes,
            closed_form: self.closed_form,
            route,
            deriv_cap,
            cache: Mutex::new(HashMap::new()),
        };

        if explicit_reps >= 2 && !self.skip_consistency_check {
            f.check_representations_agree()?;
        }
        Ok(f)
    }
}

impl GSFunction {
    pub fn builder(lam: f64) -> GSFunctionBuilder {
        GSFunctionBuilder {
            lam,
            c: 0.0,
            zero_atom: 0.0,
            laplace: None,
            stieltjes: None,
            closed_form: None,
            deriv_cap: None,
            skip_consistency_check: false,
        }
    }

    pub fn constant(lam: f64, c: f64) -> Result<Self> {
        GSFunction::builder(lam).constant(c).build()
    }

    /// The pure x^{-lam} term with the given coefficient.
    pub fn power_decay(lam: f64, coefficient: f64) -> Result<Self> {
        GSFunction::builder(lam).zero_atom(coefficient).build()
    }

    pub fn from_laplace_atoms(lam: f64, atoms: &[(f64, f64)]) -> Result<Self> {
        GSFunction::builder(lam)
            .laplace_measure(Measure::from_atoms(atoms)?)
            .build()
    }

    pub fn from_laplace_density(
        lam: f64,
        density: crate::measure::SmoothDensity,
        lower: f64,
        upper: f64,
    ) -> Result<Self> {
        GSFunction::builder(lam)
            .laplace_measure(Measure::from_density(density, lower, upper)?)
            .build()
    }

    pub fn from_stieltjes_atoms(lam: f64, atoms: &[(f64, f64)]) -> Result<Self> {
        GSFunction::builder(lam)
            .stieltjes_measure(Measure::from_atoms(atoms)?)
            .build()
    }

    pub fn lam(&self) -> f64 {
        self.lam
    }

    pub fn additive_constant(&self) -> f64 {
        self.c
    }

    pub fn zero_atom_coefficient(&self) -> f64 {
        self.zero_atom
    }

    pub fn laplace_measure(&self) -> Option<&Measure> {
        self.laplace.as_ref()
    }

    pub fn stieltjes_measure(&self) -> Option<&Measure> {
        self.stieltjes.as_ref()
    }

    pub fn derivative_cap(&self) -> usize {
        self.deriv_cap
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        self.derivative(0, x)
    }

    /// n-th derivative at x > 0, by the representation's preferred route.
    pub fn derivative(&self, n: usize, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::Domain(format!(
                "evaluation point must be positive, got {x}"
            )));
        }
        if n > self.deriv_cap {
            return Err(Error::Capability {
                target: "function derivative".into(),
                requested: n,
                supported: self.deriv_cap,
            });
        }
        let key = (n, x.to_bits());
        if let Some(v) = self.cache.lock().unwrap().get(&key) {
            return Ok(*v);
        }

        let mut total = 0.0;
        if n == 0 {
            total += self.c;
        }
        if self.zero_atom != 0.0 {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            total +=
                self.zero_atom * sign * pochhammer(self.lam, n) * x.powf(-self.lam - n as f64);
        }
        total += self.integral_derivative(n, x)?;

        self.cache.lock().unwrap().insert(key, total);
        Ok(total)
    }

    fn integral_derivative(&self, n: usize, x: f64) -> Result<f64> {
        match self.route {
            EvalRoute::ConstantsOnly => Ok(0.0),
            EvalRoute::Closed => Ok(self
                .closed_form
                .as_ref()
                .expect("route implies closed form")
                .derivative(self.lam, n, x)),
            EvalRoute::Stieltjes => {
                let nu = self.stieltjes.as_ref().expect("route implies measure");
                let p = self.lam + n as f64;
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                let integral = nu
                    .kernel_integral(|t| (x + t).powf(-p), 0.0)
                    .map_err(|e| component_error("kernel-side", n, x, e))?;
                Ok(sign * pochhammer(self.lam, n) * integral)
            }
            EvalRoute::Laplace => {
                let mu = self.laplace.as_ref().expect("route implies measure");
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                let integral = mu
                    .weighted_laplace(x, self.lam - 1.0 + n as f64)
                    .map_err(|e| component_error("Laplace-side", n, x, e))?;
                Ok(sign * integral)
            }
        }
    }

    /// Evaluate by the Laplace route regardless of the preferred one
    /// (used to verify the ingestion bridge).
    pub fn eval_via_laplace(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::Domain(format!(
                "evaluation point must be positive, got {x}"
            )));
        }
        let mut total = self.c;
        if self.zero_atom != 0.0 {
            total += self.zero_atom * x.powf(-self.lam);
        }
        if let Some(mu) = &self.laplace {
            total += mu
                .weighted_laplace(x, self.lam - 1.0)
                .map_err(|e| component_error("Laplace-side", 0, x, e))?;
        }
        Ok(total)
    }

    fn check_representations_agree(&self) -> Result<()> {
        let check_points = [0.01, 0.1, 0.5, 1.0, 2.0, 10.0, 100.0];
        let mut routes: Vec<(&str, Box<dyn Fn(f64) -> Result<f64> + '_>)> = Vec::new();
        if let Some(cf) = &self.closed_form {
            let lam = self.lam;
            routes.push((
                "closed-form",
                Box::new(move |x| {
                    Ok(self.c
                        + self.zero_atom * x.powf(-lam)
                        + cf.derivative(lam, 0, x))
                }),
            ));
        }
        if let Some(nu) = &self.stieltjes {
            let lam = self.lam;
            routes.push((
                "kernel-side",
                Box::new(move |x| {
                    Ok(self.c
                        + self.zero_atom * x.powf(-lam)
                        + nu.kernel_integral(|t| (x + t).powf(-lam), 0.0)?)
                }),
            ));
        }
        if self.laplace.is_some() {
            routes.push(("Laplace-side", Box::new(move |x| self.eval_via_laplace(x))));
        }
        for pair in routes.windows(2) {
            for &x in &check_points {
                let a = (pair[0].1)(x)?;
                let b = (pair[1].1)(x)?;
                if (a - b).abs() > 1e-7 * (1.0 + a.abs().max(b.abs())) {
                    return Err(Error::Domain(format!(
                        "representations disagree at x={x}: {} gives {a:.9e}, {} gives {b:.9e}",
                        pair[0].0, pair[1].0
                    )));
                }
            }
        }
        Ok(())
    }
}

impl DifferentiableFn for GSFunction {
    fn max_order(&self) -> usize {
        self.deriv_cap
    }

    fn derivative(&self, n: usize, x: f64) -> Result<f64> {
        GSFunction::derivative(self, n, x)
    }
}

fn component_error(component: &str, n: usize, x: f64, e: Error) -> Error {
    match e {
        Error::Capability { .. } => e,
        other => Error::Divergent(format!(
            "{component} integral failed for derivative order {n} at x={x}: {other}"
        )),
    }
}

/// The completely monotonic density φ(s) = Γ(lam)^{-1} ∫ e^{-st} dν(t) that
/// turns a kernel-side measure into a Laplace-side one: feeding
/// s^{lam-1} φ(s) ds through the Laplace kernel reproduces ∫ (x+t)^{-lam} dν(t).
pub fn stieltjes_to_laplace_phi(nu: &Measure, lam: f64, s: f64) -> Result<f64> {
    if !(lam > 0.0) {
        return Err(Error::Domain(format!("lam must be positive, got {lam}")));
    }
    if !(s > 0.0) {
        return Err(Error::Domain(format!("s must be positive, got {s}")));
    }
    Ok(nu.kernel_integral(|t| (-s * t).exp(), 0.0)? / gamma(lam))
}

/// Adaptive ∫₀^∞ with a declared s^{lam-1} endpoint behaviour; relative
/// error target 1e-10.
pub fn quad_semiinfinite<F: Fn(f64) -> f64>(f: F, lam_singularity: f64) -> Result<f64> {
    quad::semi_infinite(f, lam_singularity, QuadOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::SmoothDensity;
    use approx::assert_relative_eq;

    #[test]
    fn eval_kernel_atom() {
        // f(x) = (x+1)^{-2}
        let f = GSFunction::from_stieltjes_atoms(2.0, &[(1.0, 1.0)]).unwrap();
        assert_relative_eq!(f.eval(1.0).unwrap(), 0.25, max_relative = 1e-12);
    }

    #[test]
    fn eval_lebesgue_density() {
        // ∫ e^{-xs} s^{1/2} ds = Γ(3/2) x^{-3/2}
        let f =
            GSFunction::from_laplace_density(1.5, SmoothDensity::constant(1.0), 0.0, f64::INFINITY)
                .unwrap();
        let expected = crate::specfun::gamma(1.5) * 2f64.powf(-1.5);
        assert_relative_eq!(f.eval(2.0).unwrap(), expected, max_relative = 1e-9);
        assert_relative_eq!(f.eval(2.0).unwrap(), 0.3133285343, max_relative = 1e-7);
    }

    #[test]
    fn eval_constant_only() {
        let f = GSFunction::constant(1.0, 5.0).unwrap();
        assert_eq!(f.eval(0.3).unwrap(), 5.0);
        assert_eq!(f.derivative(3, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn derivative_laplace_atom() {
        // μ = δ₁, lam = 1: f = e^{-x}; third derivative is -e^{-x}
        let f = GSFunction::from_laplace_atoms(1.0, &[(1.0, 1.0)]).unwrap();
        assert_relative_eq!(
            f.derivative(3, 2.0).unwrap(),
            -(-2.0f64).exp(),
            max_relative = 1e-13
        );
    }

    #[test]
    fn derivative_stieltjes_atom() {
        // f = (x+1)^{-2}: f' = -2 (x+1)^{-3}
        let f = GSFunction::from_stieltjes_atoms(2.0, &[(1.0, 1.0)]).unwrap();
        assert_relative_eq!(f.derivative(1, 1.0).unwrap(), -0.25, max_relative = 1e-12);
    }

    #[test]
    fn derivative_order_cap() {
        let f = GSFunction::from_laplace_density(
            1.0,
            SmoothDensity::exponential(1.0, 1.0),
            0.0,
            f64::INFINITY,
        )
        .unwrap();
        assert!(matches!(
            f.derivative(QUADRATURE_DERIV_CAP + 1, 1.0),
            Err(Error::Capability { .. })
        ));
    }

    #[test]
    fn phi_bridge_atom() {
        // ν = δ₂, lam = 1: φ(s) = e^{-2s}
        let nu = Measure::dirac(2.0).unwrap();
        assert_relative_eq!(
            stieltjes_to_laplace_phi(&nu, 1.0, 1.0).unwrap(),
            (-2.0f64).exp(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn bridge_reproduces_kernel_value() {
        // ν = δ₁, lam = 2: the converted Laplace form must give (1+1)^{-2}
        let f = GSFunction::from_stieltjes_atoms(2.0, &[(1.0, 1.0)]).unwrap();
        assert_relative_eq!(f.eval_via_laplace(1.0).unwrap(), 0.25, max_relative = 1e-8);
    }

    #[test]
    fn bridge_identity_on_grid() {
        for lam in [0.5, 1.0, 2.0] {
            let f = GSFunction::builder(lam)
                .stieltjes_measure(Measure::from_atoms(&[(0.5, 1.0), (2.0, 0.7)]).unwrap())
                .build()
                .unwrap();
            for &x in &[0.05, 0.3, 1.0, 4.0, 20.0] {
                let direct = f.eval(x).unwrap();
                let bridged = f.eval_via_laplace(x).unwrap();
                assert!(
                    (direct - bridged).abs() <= 1e-7 * (1.0 + direct.abs()),
                    "bridge mismatch at lam={lam}, x={x}: {direct} vs {bridged}"
                );
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let f = GSFunction::from_laplace_density(
            1.5,
            SmoothDensity::exponential(1.0, 1.0),
            0.0,
            f64::INFINITY,
        )
        .unwrap();
        for &x in &[0.5, 1.0, 3.0] {
            for n in 1..=4usize {
                let h = 1e-2 * x;
                // symmetric difference of order n
                let mut fd = 0.0;
                for i in 0..=n {
                    let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                    fd += sign
                        * crate::specfun::binomial(n, i)
                        * f.eval(x + (n as f64 / 2.0 - i as f64) * h).unwrap();
                }
                fd /= h.powi(n as i32);
                let exact = f.derivative(n, x).unwrap();
                assert!(
                    (fd - exact).abs() <= 1e-3 * (1.0 + exact.abs()),
                    "n={n}, x={x}: fd {fd} vs exact {exact}"
                );
            }
        }
    }

    #[test]
    fn laplace_route_alternates_sign() {
        let f = GSFunction::from_laplace_density(
            2.0,
            SmoothDensity::exponential(1.0, 1.0),
            0.0,
            f64::INFINITY,
        )
        .unwrap();
        for &x in &[0.1, 1.0, 10.0] {
            for n in 0..=6usize {
                let v = f.derivative(n, x).unwrap();
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                assert!(sign * v >= 0.0, "sign violated at n={n}, x={x}: {v}");
            }
        }
    }

    #[test]
    fn eval_nonincreasing_in_x() {
        let f = GSFunction::from_stieltjes_atoms(1.0, &[(1.0, 1.0), (3.0, 2.0)]).unwrap();
        let mut prev = f64::INFINITY;
        for &x in &[0.1, 0.5, 1.0, 5.0, 25.0] {
            let v = f.eval(x).unwrap();
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn builder_rejects_bad_lambda() {
        assert!(GSFunction::builder(0.0).build().is_err());
        assert!(GSFunction::builder(-1.5).build().is_err());
    }

    #[test]
    fn closed_form_combination() {
        let f = GSFunction::builder(2.0)
            .closed_form(ClosedForm::Combination(vec![
                ClosedForm::Constant { value: 1.0 },
                ClosedForm::PowerKernel { t: 1.0, weight: 2.0 },
            ]))
            .build()
            .unwrap();
        assert_relative_eq!(f.eval(1.0).unwrap(), 1.0 + 0.5, max_relative = 1e-14);
        assert_relative_eq!(
            f.derivative(1, 1.0).unwrap(),
            2.0 * -2.0 * 2f64.powf(-3.0),
            max_relative = 1e-14
        );
    }

    #[test]
    fn quad_semiinfinite_examples() {
        assert_relative_eq!(
            quad_semiinfinite(|s| (-s).exp(), 1.0).unwrap(),
            1.0,
            max_relative = 1e-10
        );
        assert_relative_eq!(
            quad_semiinfinite(|s| s.powf(-0.5) * (-s).exp(), 0.5).unwrap(),
            1.772454,
            max_relative = 1e-6
        );
    }
}
